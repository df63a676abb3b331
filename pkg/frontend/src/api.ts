/** Thin fetch client for the /api endpoints. The base URL is the only setting. */

import { AskResponse, ImageEntry, McResponse, parseAskResponse } from './types.js';

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly code: string | null,
  ) {
    super(message);
  }
}

async function readError(response: Response): Promise<ApiError> {
  let code: string | null = null;
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { error?: string; detail?: string };
    code = body.error ?? null;
    detail = body.detail ?? detail;
  } catch {
    /* non-JSON error body; keep the status text */
  }
  return new ApiError(detail, response.status, code);
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/+$/, '') + path;
  }

  private async get<T>(path: string): Promise<T> {
    const response = await fetch(this.url(path));
    if (!response.ok) throw await readError(response);
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await fetch(this.url(path), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await readError(response);
    return (await response.json()) as T;
  }

  async health(): Promise<{ status: string; fingerprint: string }> {
    return this.get('/api/health');
  }

  async images(): Promise<ImageEntry[]> {
    return this.get('/api/images');
  }

  async ask(imageId: number, question: string, k = 3): Promise<AskResponse> {
    const raw = await this.post('/api/ask', { image_id: imageId, question, k });
    return parseAskResponse(raw);
  }

  async mc(imageId: number, question: string, choices: string[]): Promise<McResponse> {
    return this.post('/api/mc', { image_id: imageId, question, choices });
  }
}

/** Allows exactly one request in flight; callers observe the busy flag. */
export class SingleFlight {
  private busy = false;

  get pending(): boolean {
    return this.busy;
  }

  async run<T>(task: () => Promise<T>): Promise<T | null> {
    if (this.busy) return null;
    this.busy = true;
    try {
      return await task();
    } finally {
      this.busy = false;
    }
  }
}
