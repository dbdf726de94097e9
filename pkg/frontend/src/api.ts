import type {
  ChainSummary,
  ExpandResponse,
  LabelInfo,
  PatternsResponse,
  TraceNode,
  TxDoc,
} from './types';

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = 'ApiError';
  }
}

/** Thin fetch wrapper over the /v1 endpoints; all methods throw ApiError on
 * non-2xx responses with the server's error message. */
export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async get<T>(path: string, params?: Record<string, string | number>): Promise<T> {
    const url = new URL(`/v1${path}`, this.baseUrl);
    for (const [key, value] of Object.entries(params ?? {})) {
      url.searchParams.set(key, String(value));
    }
    let response: Response;
    try {
      response = await fetch(url);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      let message = `HTTP ${response.status}`;
      try {
        const body = (await response.json()) as { error?: string };
        if (body.error) message = body.error;
      } catch {
        // non-JSON error body; keep the status message
      }
      throw new ApiError(response.status, message);
    }
    return (await response.json()) as T;
  }

  summary(): Promise<ChainSummary> {
    return this.get('/chain/summary');
  }

  labels(): Promise<LabelInfo[]> {
    return this.get('/labels');
  }

  tx(txid: string): Promise<TxDoc> {
    return this.get(`/tx/${txid}`);
  }

  expand(
    txid: string,
    direction: 'forward' | 'backward',
    label: string | null = null,
    minSats = 0,
  ): Promise<ExpandResponse> {
    const params: Record<string, string | number> = { direction, min_sats: minSats };
    if (label !== null) params.label = label;
    return this.get(`/tx/${txid}/expand`, params);
  }

  trace(txid: string, vout: number, from: number, to: number): Promise<TraceNode> {
    return this.get('/trace', { txid, vout, from, to });
  }

  patterns(): Promise<PatternsResponse> {
    return this.get('/patterns');
  }
}
