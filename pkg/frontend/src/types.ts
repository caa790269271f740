export type Organ = "heart" | "lung";

export interface ClassInfo {
  label: string;
  organ: Organ;
}

export interface ClassificationResult {
  label: string;
  probabilities: number[];
  model_version: string;
  audio_digest?: string;
  report_id?: string;
}

export interface PatientMeta {
  name?: string;
  age?: string;
  notes?: string;
}

export interface ReportPayload {
  label: string;
  probabilities: number[];
  model_version: string;
  organ_hint?: Organ | "auto";
  audio_digest?: string;
  patient_meta?: PatientMeta;
}

export interface CapturedAudio {
  samples: Float32Array;
  sampleRate: number;
}

/** Anything that can hand us raw audio: the microphone, or a fixture in tests. */
export interface AudioSource {
  start(): Promise<void>;
  stop(): Promise<CapturedAudio>;
}
