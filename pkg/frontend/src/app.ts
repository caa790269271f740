import { ApiClient } from "./api.js";
import { RecordingSession } from "./state.js";
import type { AudioSource, ClassInfo, Organ } from "./types.js";
import { encodeWavPcm16 } from "./wav.js";

/** Canonical class order and organ tags, mirroring GET /api/v1/classes. */
export const CLASS_LIST: ClassInfo[] = [
  { label: "AS", organ: "heart" },
  { label: "MS", organ: "heart" },
  { label: "MR", organ: "heart" },
  { label: "N", organ: "heart" },
  { label: "MVP", organ: "heart" },
  { label: "COPD", organ: "lung" },
  { label: "P", organ: "lung" },
  { label: "BA", organ: "lung" },
  { label: "BO", organ: "lung" },
  { label: "H", organ: "lung" },
  { label: "URTI", organ: "lung" },
];

const INSTRUCTIONS: Record<Organ, { title: string; steps: string[] }> = {
  heart: {
    title: "Heart recording instructions",
    steps: [
      "Find a quiet room and have the patient sit upright.",
      "Place the stethoscope chest piece firmly on the left side of the " +
        "chest, at the fourth intercostal space near the sternum.",
      "Keep the piece still; avoid rubbing clothing or the tubing.",
      "Record at least five full heartbeats (three seconds or more).",
    ],
  },
  lung: {
    title: "Lung recording instructions",
    steps: [
      "Find a quiet room and have the patient sit upright.",
      "Place the stethoscope chest piece on the upper back, just below " +
        "the shoulder blade.",
      "Ask the patient to breathe slowly and deeply through the mouth.",
      "Record at least two full breath cycles (three seconds or more).",
    ],
  },
};

export interface AppOptions {
  api: ApiClient;
  createSource: () => AudioSource;
  root: HTMLElement;
}

export class App {
  readonly session = new RecordingSession();
  /** Resolves when the most recent user-triggered async action settles. */
  lastAction: Promise<void> = Promise.resolve();

  private source: AudioSource | null = null;
  private status = "";
  private playbackUrl: string | null = null;

  constructor(private readonly options: AppOptions) {}

  mount(): void {
    this.render();
  }

  private act(work: () => Promise<void>): void {
    this.lastAction = work()
      .catch((error: unknown) => {
        this.status = error instanceof Error ? error.message : String(error);
      })
      .then(() => this.render());
  }

  chooseOrgan(organ: Organ): void {
    this.session.chooseOrgan(organ);
    this.status = "";
    this.render();
  }

  startRecording(): void {
    this.act(async () => {
      const source = this.options.createSource();
      try {
        await source.start();
      } catch (error) {
        this.status =
          "Microphone unavailable. Grant the microphone permission and " +
          "reload this page to record.";
        throw error instanceof Error ? error : new Error(String(error));
      }
      this.source = source;
      this.session.startRecording();
      this.status = "";
    });
  }

  stopRecording(): void {
    this.act(async () => {
      if (!this.source) throw new Error("no active recording");
      const audio = await this.source.stop();
      this.source = null;
      this.session.stopRecording(audio);
      this.preparePlayback();
    });
  }

  discardRecording(): void {
    this.releasePlayback();
    this.session.discardRecording();
    this.render();
  }

  submit(): void {
    this.act(async () => {
      this.session.beginSubmit();
      this.render();
      const audio = this.session.audio!;
      const wav = encodeWavPcm16(audio.samples, audio.sampleRate);
      try {
        const result = await this.options.api.classify(
          wav,
          this.session.organ ?? "auto",
        );
        this.session.submitSucceeded(result);
        this.status = "";
      } catch (error) {
        this.session.submitFailed();
        throw error instanceof Error ? error : new Error(String(error));
      }
    });
  }

  saveReport(): void {
    this.act(async () => {
      const result = this.session.result;
      if (!result) throw new Error("classify a recording first");
      const reportId = await this.options.api.createReport({
        label: result.label,
        probabilities: result.probabilities,
        model_version: result.model_version,
        organ_hint: this.session.organ ?? "auto",
        audio_digest: result.audio_digest,
      });
      this.session.attachReport(reportId);
      this.status = "";
    });
  }

  sendEmail(to: string): void {
    this.act(async () => {
      if (!this.session.canEmail || !this.session.reportId) {
        throw new Error("save the report before emailing it");
      }
      await this.options.api.emailReport(this.session.reportId, to);
      this.status = `Report sent to ${to}.`;
    });
  }

  startOver(): void {
    this.releasePlayback();
    this.session.reset();
    this.status = "";
    this.render();
  }

  private preparePlayback(): void {
    this.releasePlayback();
    const audio = this.session.audio;
    if (!audio || typeof URL.createObjectURL !== "function") return;
    try {
      const blob = new Blob([encodeWavPcm16(audio.samples, audio.sampleRate)], {
        type: "audio/wav",
      });
      this.playbackUrl = URL.createObjectURL(blob);
    } catch {
      this.playbackUrl = null; // playback is a convenience, not a requirement
    }
  }

  private releasePlayback(): void {
    if (this.playbackUrl && typeof URL.revokeObjectURL === "function") {
      URL.revokeObjectURL(this.playbackUrl);
    }
    this.playbackUrl = null;
  }

  // -------------------------------------------------------------- rendering

  render(): void {
    const { root } = this.options;
    const session = this.session;
    if (!session.organ) {
      root.innerHTML = this.frontPage();
    } else if (session.phase === "idle") {
      root.innerHTML = this.instructionsPage(session.organ);
    } else if (session.phase === "recording") {
      root.innerHTML = this.recordingPage();
    } else if (session.phase === "review") {
      root.innerHTML = this.reviewPage();
    } else if (session.phase === "submitting") {
      root.innerHTML = this.submittingPage();
    } else {
      root.innerHTML = this.resultsPage();
    }
    this.bind();
  }

  private statusLine(): string {
    return this.status
      ? `<p class="status" data-testid="status">${escapeHtml(this.status)}</p>`
      : "";
  }

  private frontPage(): string {
    return `
      <section class="page" data-page="front">
        <h1>Auscultation assistant</h1>
        <p>Record heart or lung sounds with the stethoscope microphone and
           get an on-device classification from the connected service.</p>
        <div class="choices">
          <button data-organ="heart">Heart sounds</button>
          <button data-organ="lung">Lung sounds</button>
        </div>
        ${this.statusLine()}
      </section>`;
  }

  private instructionsPage(organ: Organ): string {
    const info = INSTRUCTIONS[organ];
    const steps = info.steps.map((s) => `<li>${escapeHtml(s)}</li>`).join("");
    return `
      <section class="page" data-page="instructions" data-organ="${organ}">
        <h1>${escapeHtml(info.title)}</h1>
        <ol data-testid="instructions">${steps}</ol>
        <div class="choices">
          <button data-action="start">Start recording</button>
          <button data-action="back">Back</button>
        </div>
        ${this.statusLine()}
      </section>`;
  }

  private recordingPage(): string {
    return `
      <section class="page" data-page="recording">
        <h1>Recording…</h1>
        <p class="pulse">Capturing audio. Keep the chest piece still.</p>
        <button data-action="stop">Stop recording</button>
        ${this.statusLine()}
      </section>`;
  }

  private reviewPage(): string {
    const audio = this.session.audio!;
    const seconds = (audio.samples.length / audio.sampleRate).toFixed(1);
    const player = this.playbackUrl
      ? `<audio controls src="${this.playbackUrl}" data-testid="playback"></audio>`
      : `<p data-testid="playback-unavailable">Playback not supported here.</p>`;
    return `
      <section class="page" data-page="review">
        <h1>Review recording</h1>
        <p>${seconds} s captured at ${audio.sampleRate} Hz.</p>
        ${player}
        <div class="choices">
          <button data-action="submit">Submit for classification</button>
          <button data-action="rerecord">Record again</button>
        </div>
        ${this.statusLine()}
      </section>`;
  }

  private submittingPage(): string {
    return `
      <section class="page" data-page="submitting">
        <h1>Classifying…</h1>
        <p>Uploading the recording and running the model.</p>
      </section>`;
  }

  private resultsPage(): string {
    const session = this.session;
    const result = session.result!;
    const bars = CLASS_LIST.map((info, i) => {
      const p = result.probabilities[i] ?? 0;
      const classes = ["prob-row"];
      if (info.organ === session.organ) classes.push("organ-match");
      if (info.label === result.label) classes.push("predicted");
      return `
        <div class="${classes.join(" ")}" data-class="${info.label}">
          <span class="prob-label">${info.label} <small>${info.organ}</small></span>
          <span class="prob-bar"><span style="width:${(p * 100).toFixed(2)}%"></span></span>
          <span class="prob-value">${(p * 100).toFixed(1)}%</span>
        </div>`;
    }).join("");
    const emailBlock = session.canEmail
      ? `
        <form data-testid="email-form">
          <label>Doctor's email
            <input type="email" name="to" placeholder="doctor@clinic.example" required>
          </label>
          <button data-action="send-email" type="submit">Send report</button>
        </form>
        <p class="report-id">Report ID: <code data-testid="report-id">${session.reportId}</code></p>`
      : `<button data-action="save-report">Save report &amp; email a doctor</button>`;
    return `
      <section class="page" data-page="results">
        <h1>Classification result</h1>
        <p class="verdict">Predicted class:
          <strong id="predicted-label">${escapeHtml(result.label)}</strong>
          <small>(model ${escapeHtml(result.model_version)})</small>
        </p>
        <div class="bars" data-testid="probability-bars">${bars}</div>
        ${emailBlock}
        <div class="choices">
          <button data-action="start-over">Start over</button>
        </div>
        ${this.statusLine()}
      </section>`;
  }

  private bind(): void {
    const { root } = this.options;
    root.querySelectorAll<HTMLButtonElement>("[data-organ]").forEach((btn) => {
      if (btn.closest("[data-page='front']")) {
        btn.addEventListener("click", () =>
          this.chooseOrgan(btn.dataset.organ as Organ),
        );
      }
    });
    const actions: Record<string, () => void> = {
      start: () => this.startRecording(),
      back: () => this.startOver(),
      stop: () => this.stopRecording(),
      submit: () => this.submit(),
      rerecord: () => this.discardRecording(),
      "save-report": () => this.saveReport(),
      "start-over": () => this.startOver(),
    };
    for (const [name, handler] of Object.entries(actions)) {
      root
        .querySelector<HTMLButtonElement>(`button[data-action="${name}"]`)
        ?.addEventListener("click", handler);
    }
    const form = root.querySelector<HTMLFormElement>(
      "[data-testid='email-form']",
    );
    form?.addEventListener("submit", (event) => {
      event.preventDefault();
      const input = form.elements.namedItem("to") as HTMLInputElement;
      if (input.value) this.sendEmail(input.value);
    });
  }
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}
