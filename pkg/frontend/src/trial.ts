// One two-interval trial: fixation, first bar, blank, second bar, prompt,
// keypress. The standard interval animates the trial's curve for the fixed
// standard duration; the variable interval is the constant bar whose
// duration the staircase adapts; presentation order comes from the plan.

import { animateBar, type AnimationReport, type BarAnimation } from './animator.js';
import type { IntervalResponse, TrialPlanWire } from './api.js';
import type { Clock } from './clock.js';
import type { KeySource } from './keys.js';
import { PROMPT_TEXT, type View } from './view.js';

export const ISI_MS = 500;
export const RESPONSE_KEYS = ['F', 'J'] as const;

export interface TrialOutcome {
  response: IntervalResponse;
  /** Measured from the offset of the second stimulus. */
  latencyMs: number;
  displayTooSlow: boolean;
  reports: [AnimationReport, AnimationReport];
}

export interface TrialDeps {
  clock: Clock;
  view: View;
  keys: KeySource;
}

export function intervalsFor(plan: TrialPlanWire): [BarAnimation, BarAnimation] {
  const standard: BarAnimation = {
    curve: plan.curve,
    durationMs: plan.standard_duration_s * 1000,
  };
  const variable: BarAnimation = {
    curve: 'constant',
    durationMs: plan.variable_duration_s * 1000,
  };
  return plan.standard_first ? [standard, variable] : [variable, standard];
}

export async function runTrial(plan: TrialPlanWire, deps: TrialDeps): Promise<TrialOutcome> {
  const { clock, view, keys } = deps;
  const [first, second] = intervalsFor(plan);

  view.showFixation();
  await clock.wait(plan.fixation_s * 1000);

  const firstReport = await animateBar(first, clock, view.showBar());
  view.showBlank();
  await clock.wait(ISI_MS);
  const secondReport = await animateBar(second, clock, view.showBar());

  view.showPrompt(PROMPT_TEXT);
  const press = await keys.nextKey(RESPONSE_KEYS);

  return {
    response: press.key === 'F' ? 'first_shorter' : 'second_shorter',
    latencyMs: press.atMs - secondReport.endedAtMs,
    displayTooSlow: firstReport.tooSlow || secondReport.tooSlow,
    reports: [firstReport, secondReport],
  };
}
