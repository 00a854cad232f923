/** Typed client for the annotation service API (everything under /api). */

export interface SessionInfo {
  status: "training" | "annotating" | "done" | "error";
  strategy: string;
  dataset: string;
  dataset_size: number;
  task_kind: "classification" | "sequence_labeling";
  labels: string[];
  M: number;
  max_iterations: number;
  completed_iterations: number;
  stopped_by: string | null;
  error: string | null;
  iteration: number;
  batch_size: number;
  answered: number;
  remaining: number;
}

export interface AnnotationRequest {
  example_id: string;
  input: string | string[];
  current_label: string | string[];
  model_prediction: number[] | number[][];
  predicted_label: string | string[];
  iteration: number;
  lease_timeout: number;
  annotator: string;
}

export interface IterationRecord {
  iteration: number;
  m_flag: number;
  m_corr: number;
  auto_corrected: number;
  m_filter: number;
  p_mp: number;
  eta_k: number;
  eval: Record<string, number>;
  cumulative_annotated_fraction: number;
  token_mp_precision?: number;
}

export type AnnotateOutcome =
  | { kind: "accepted"; answered: number; remaining: number }
  | { kind: "conflict" }   // 409: someone else answered first
  | { kind: "gone" }       // 404: not in the active batch any more
  | { kind: "rejected"; detail: string };

export class ApiClient {
  constructor(
    private annotator: string,
    private token: string | null = null,
    private fetchFn: typeof fetch = (...args) => fetch(...args),
    private baseUrl = "",
  ) {}

  private headers(json = false): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h["Content-Type"] = "application/json";
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  async session(): Promise<SessionInfo> {
    const r = await this.fetchFn(`${this.baseUrl}/api/session`, { headers: this.headers() });
    if (!r.ok) throw new Error(`session fetch failed: ${r.status}`);
    return r.json();
  }

  async history(): Promise<IterationRecord[]> {
    const r = await this.fetchFn(`${this.baseUrl}/api/history`, { headers: this.headers() });
    if (!r.ok) throw new Error(`history fetch failed: ${r.status}`);
    return r.json();
  }

  /** Lease the next request; null when the queue has nothing for us. */
  async next(): Promise<AnnotationRequest | null> {
    const r = await this.fetchFn(
      `${this.baseUrl}/api/next?annotator=${encodeURIComponent(this.annotator)}`,
      { headers: this.headers() },
    );
    if (r.status === 204) return null;
    if (!r.ok) throw new Error(`lease failed: ${r.status}`);
    return r.json();
  }

  /** The one and only path through which the console changes a label. */
  async annotate(exampleId: string, label: string | string[]): Promise<AnnotateOutcome> {
    const r = await this.fetchFn(`${this.baseUrl}/api/annotate`, {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify({ example_id: exampleId, label, annotator: this.annotator }),
    });
    if (r.status === 409) return { kind: "conflict" };
    if (r.status === 404) return { kind: "gone" };
    if (!r.ok) {
      let detail = `status ${r.status}`;
      try {
        detail = (await r.json()).detail ?? detail;
      } catch {
        /* keep the status text */
      }
      return { kind: "rejected", detail };
    }
    const body = await r.json();
    return {
      kind: "accepted",
      answered: body.progress.answered,
      remaining: body.progress.remaining,
    };
  }
}
