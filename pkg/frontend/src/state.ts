import type { CapturedAudio, ClassificationResult, Organ } from "./types.js";

export type Phase =
  | "idle"
  | "recording"
  | "review"
  | "submitting"
  | "submitted";

/** The recording session's state machine. Transitions throw on misuse so the
 * UI cannot, for example, submit while recording or email without a report;
 * a single in-flight classification is enforced by the submitting phase. */
export class RecordingSession {
  organ: Organ | null = null;
  phase: Phase = "idle";
  audio: CapturedAudio | null = null;
  result: ClassificationResult | null = null;
  reportId: string | null = null;

  private require(condition: boolean, message: string): void {
    if (!condition) throw new Error(message);
  }

  chooseOrgan(organ: Organ): void {
    this.require(this.phase === "idle", `cannot choose organ in ${this.phase}`);
    this.organ = organ;
  }

  startRecording(): void {
    this.require(this.phase === "idle", `cannot record in ${this.phase}`);
    this.require(this.organ !== null, "choose heart or lungs first");
    this.phase = "recording";
  }

  stopRecording(audio: CapturedAudio): void {
    this.require(this.phase === "recording", `not recording (${this.phase})`);
    this.audio = audio;
    this.phase = "review";
  }

  discardRecording(): void {
    this.require(this.phase === "review", `nothing to discard in ${this.phase}`);
    this.audio = null;
    this.phase = "idle";
  }

  get canSubmit(): boolean {
    return this.phase === "review" && this.audio !== null;
  }

  beginSubmit(): void {
    this.require(this.canSubmit, `cannot submit in ${this.phase}`);
    this.phase = "submitting";
  }

  submitSucceeded(result: ClassificationResult): void {
    this.require(this.phase === "submitting", "no submission in flight");
    this.result = result;
    this.phase = "submitted";
  }

  submitFailed(): void {
    this.require(this.phase === "submitting", "no submission in flight");
    this.phase = "review";
  }

  attachReport(reportId: string): void {
    this.require(this.phase === "submitted", "classify before saving a report");
    this.reportId = reportId;
  }

  get canEmail(): boolean {
    return this.reportId !== null;
  }

  reset(): void {
    this.organ = null;
    this.phase = "idle";
    this.audio = null;
    this.result = null;
    this.reportId = null;
  }
}
