// Session flow: loop next-trial -> run trial -> submit response until the
// service reports done. Rest markers render a countdown and block polling
// until it ends. All waits and animation run on the injected clock; at most
// one API request is ever outstanding.
//
// Recovery relies on the service's idempotent next-trial: after any network
// failure the flow re-fetches the session state. If the in-flight trial is
// still the same one, the captured response is resubmitted; if the state
// advanced (or the submit came back 409), the response already landed and
// the flow simply continues from the server's view of the session.

import {
  ApiError,
  NetworkError,
  isDoneMarker,
  isRestMarker,
  isTrialPlan,
  type NextTrialResponse,
  type SessionApi,
  type TrialPlanWire,
} from './api.js';
import type { Clock } from './clock.js';
import type { KeySource } from './keys.js';
import { runTrial, type TrialOutcome } from './trial.js';
import { INSTRUCTIONS_TEXT, type View } from './view.js';

export const FEEDBACK_MS = 1000;
export const RETRY_MS = 1000;
const START_KEYS = [' '] as const;

export interface FlowDeps {
  api: SessionApi;
  view: View;
  clock: Clock;
  keys: KeySource;
}

export class SessionFlow {
  /** Client-side trial flags (display-too-slow etc.), never shown to the participant. */
  readonly flags: string[] = [];

  constructor(
    private readonly sessionId: string,
    private readonly deps: FlowDeps,
    private readonly skipInstructions = false,
  ) {}

  async run(): Promise<void> {
    const { view, keys } = this.deps;
    if (!this.skipInstructions) {
      view.showInstructions(INSTRUCTIONS_TEXT);
      await keys.nextKey(START_KEYS);
    }
    for (;;) {
      const next = await this.fetchState();
      if (isDoneMarker(next)) {
        view.showDone();
        return;
      }
      if (isRestMarker(next)) {
        await this.rest(next.remaining_rest_s);
        continue;
      }
      await this.runOne(next);
    }
  }

  private async fetchState(): Promise<NextTrialResponse> {
    for (;;) {
      try {
        return await this.deps.api.nextTrial(this.sessionId);
      } catch (err) {
        if (err instanceof NetworkError) {
          await this.deps.clock.wait(RETRY_MS);
          continue;
        }
        throw err;
      }
    }
  }

  private async rest(remainingS: number): Promise<void> {
    const { view, clock } = this.deps;
    view.showRest(remainingS);
    let remainMs = remainingS * 1000;
    while (remainMs > 0) {
      const step = Math.min(1000, remainMs);
      await clock.wait(step);
      remainMs -= step;
      view.updateRest(remainMs / 1000);
    }
  }

  private async runOne(plan: TrialPlanWire): Promise<void> {
    const { view, clock } = this.deps;
    const outcome = await runTrial(plan, this.deps);
    if (outcome.displayTooSlow) {
      this.flags.push(`trial ${plan.trial_index}: display too slow`);
    }
    const feedback = await this.submit(plan, outcome);
    if (plan.phase === 'practice' && feedback != null) {
      view.showFeedback(feedback);
      await clock.wait(FEEDBACK_MS);
    }
  }

  // Resolves with the feedback, or null when the submit is known to have
  // landed but its body was lost to the network.
  private async submit(
    plan: TrialPlanWire,
    outcome: TrialOutcome,
  ): Promise<'correct' | 'incorrect' | null> {
    const body = {
      response: outcome.response,
      latency_ms: Math.max(outcome.latencyMs, 0),
    };
    for (;;) {
      try {
        return (await this.deps.api.submitResponse(this.sessionId, body)).feedback;
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          return null; // duplicate submit: the response already landed
        }
        if (err instanceof NetworkError) {
          await this.deps.clock.wait(RETRY_MS);
          const state = await this.fetchState();
          if (isTrialPlan(state) && state.trial_index === plan.trial_index) {
            continue; // same trial still in flight: the submit never landed
          }
          return null; // state advanced: it landed, feedback lost
        }
        throw err;
      }
    }
  }
}
