import type {
  ClassInfo,
  ClassificationResult,
  Organ,
  ReportPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly reason: string,
    detail: string,
  ) {
    super(`${reason}: ${detail}`);
  }
}

async function raiseFor(response: Response): Promise<never> {
  let reason = `http_${response.status}`;
  let detail = response.statusText;
  try {
    const body = await response.json();
    const inner = body?.detail ?? body;
    if (typeof inner?.reason === "string") reason = inner.reason;
    if (typeof inner?.detail === "string") detail = inner.detail;
    else if (inner?.errors) detail = JSON.stringify(inner.errors);
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, reason, detail);
}

/** Thin typed client over the service HTTP API; the UI never computes or
 * alters probabilities, it renders these responses verbatim. */
export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async classify(
    wav: ArrayBuffer,
    organ: Organ | "auto" = "auto",
  ): Promise<ClassificationResult> {
    const response = await fetch(
      this.url(`/api/v1/classify?organ=${organ}`),
      { method: "POST", headers: { "Content-Type": "audio/wav" }, body: wav },
    );
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as ClassificationResult;
  }

  async createReport(payload: ReportPayload): Promise<string> {
    const response = await fetch(this.url("/api/v1/reports"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) await raiseFor(response);
    return ((await response.json()) as { report_id: string }).report_id;
  }

  async getReport(reportId: string): Promise<Record<string, unknown>> {
    const response = await fetch(this.url(`/api/v1/reports/${reportId}`));
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as Record<string, unknown>;
  }

  async emailReport(reportId: string, to: string): Promise<void> {
    const response = await fetch(
      this.url(`/api/v1/reports/${reportId}/email`),
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ to }),
      },
    );
    if (!response.ok) await raiseFor(response);
  }

  async health(): Promise<{ status: string; model_version: string | null }> {
    const response = await fetch(this.url("/api/v1/health"));
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as {
      status: string;
      model_version: string | null;
    };
  }

  async classes(): Promise<ClassInfo[]> {
    const response = await fetch(this.url("/api/v1/classes"));
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as ClassInfo[];
  }
}
