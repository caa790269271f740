import type { AudioSource, CapturedAudio } from "./types.js";
import { mergeChunks } from "./wav.js";

/** Microphone capture at the browser's native rate via a script processor;
 * raw Float32 samples go straight to the PCM-16 encoder on stop. */
export class MicrophoneSource implements AudioSource {
  private context: AudioContext | null = null;
  private stream: MediaStream | null = null;
  private processor: ScriptProcessorNode | null = null;
  private input: MediaStreamAudioSourceNode | null = null;
  private chunks: Float32Array[] = [];

  async start(): Promise<void> {
    this.stream = await navigator.mediaDevices.getUserMedia({
      audio: {
        channelCount: 1,
        echoCancellation: false,
        noiseSuppression: false,
        autoGainControl: false,
      },
    });
    this.context = new AudioContext();
    this.input = this.context.createMediaStreamSource(this.stream);
    this.processor = this.context.createScriptProcessor(4096, 1, 1);
    this.chunks = [];
    this.processor.onaudioprocess = (event) => {
      this.chunks.push(new Float32Array(event.inputBuffer.getChannelData(0)));
    };
    this.input.connect(this.processor);
    this.processor.connect(this.context.destination);
  }

  async stop(): Promise<CapturedAudio> {
    if (!this.context || !this.processor || !this.input || !this.stream) {
      throw new Error("recorder is not running");
    }
    const sampleRate = Math.round(this.context.sampleRate);
    this.processor.disconnect();
    this.input.disconnect();
    for (const track of this.stream.getTracks()) track.stop();
    await this.context.close();
    const samples = mergeChunks(this.chunks);
    this.context = null;
    this.processor = null;
    this.input = null;
    this.stream = null;
    this.chunks = [];
    return { samples, sampleRate };
  }
}

/** Deterministic source for tests and demos: plays back preset samples. */
export class FixtureSource implements AudioSource {
  private running = false;

  constructor(private readonly audio: CapturedAudio) {}

  async start(): Promise<void> {
    this.running = true;
  }

  async stop(): Promise<CapturedAudio> {
    if (!this.running) throw new Error("fixture source is not running");
    this.running = false;
    return this.audio;
  }
}
