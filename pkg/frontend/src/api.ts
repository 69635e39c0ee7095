// Typed client for the session service. Field names mirror the wire
// contract exactly; nothing is renamed or defaulted on this side.

import type { CurveName } from './curves.js';

export interface QuestConfigWire {
  prior_mean_s?: number;
  prior_sd_s?: number;
  t_min_s?: number;
  t_max_s?: number;
  grain_s?: number;
  quantum_s?: number;
  placement?: string;
}

export interface SessionConfigWire {
  participant_id: string;
  curves?: CurveName[];
  trials_per_curve?: number;
  practice_trials?: number;
  standard_duration_s?: number;
  fixation_s?: number;
  rest_s?: number;
  isi_s?: number;
  quest?: QuestConfigWire;
  seed?: number;
}

export interface CreateSessionResponse {
  session_id: string;
  participant_id: string;
  curve_order: CurveName[];
  practice_trials: number;
  trials_per_curve: number;
  total_main_trials: number;
}

export interface TrialPlanWire {
  trial_index: number;
  phase: 'practice' | 'main';
  curve: CurveName;
  standard_duration_s: number;
  variable_duration_s: number;
  standard_first: boolean;
  fixation_s: number;
}

export interface RestMarker {
  phase: 'rest';
  remaining_rest_s: number;
}

export interface DoneMarker {
  phase: 'done';
}

export type NextTrialResponse = TrialPlanWire | RestMarker | DoneMarker;

export type IntervalResponse = 'first_shorter' | 'second_shorter';
export type Feedback = 'correct' | 'incorrect' | null;

export interface SubmitResponseRequest {
  response: IntervalResponse;
  latency_ms: number;
}

export interface SubmitResponseResponse {
  feedback: Feedback;
}

export interface CurveResultWire {
  pse_s: number;
  posterior_sd_s: number;
  n_trials: number;
}

export interface ResultsResponse {
  session_id: string;
  participant_id: string;
  complete: boolean;
  results: Record<string, CurveResultWire>;
  n_trials_logged: number;
}

export function isRestMarker(r: NextTrialResponse): r is RestMarker {
  return r.phase === 'rest';
}

export function isDoneMarker(r: NextTrialResponse): r is DoneMarker {
  return r.phase === 'done';
}

export function isTrialPlan(r: NextTrialResponse): r is TrialPlanWire {
  return r.phase === 'practice' || r.phase === 'main';
}

// Service-reported failure (the {error, message} envelope).
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

// fetch itself rejected: connection refused, DNS, aborted, offline.
export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`network failure: ${cause instanceof Error ? cause.message : String(cause)}`);
    this.name = 'NetworkError';
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class SessionApi {
  private readonly base: string;

  constructor(baseUrl: string, private readonly fetchFn: FetchLike = fetch) {
    this.base = baseUrl.replace(/\/+$/, '');
  }

  async createSession(config: SessionConfigWire): Promise<CreateSessionResponse> {
    return this.request('POST', '/sessions', config);
  }

  async nextTrial(sessionId: string): Promise<NextTrialResponse> {
    return this.request('GET', `/sessions/${encodeURIComponent(sessionId)}/next-trial`);
  }

  async submitResponse(
    sessionId: string,
    body: SubmitResponseRequest,
  ): Promise<SubmitResponseResponse> {
    return this.request('POST', `/sessions/${encodeURIComponent(sessionId)}/responses`, body);
  }

  async results(sessionId: string, partial = false): Promise<ResultsResponse> {
    const query = partial ? '?partial=true' : '';
    return this.request('GET', `/sessions/${encodeURIComponent(sessionId)}/results${query}`);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { 'Content-Type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    let res: Response;
    try {
      res = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new NetworkError(err);
    }
    if (!res.ok) {
      let code = 'unknown_error';
      let message = `HTTP ${res.status}`;
      try {
        const envelope = await res.json();
        if (envelope && typeof envelope.error === 'string') {
          code = envelope.error;
          message = typeof envelope.message === 'string' ? envelope.message : message;
        }
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(res.status, code, message);
    }
    return (await res.json()) as T;
  }
}
