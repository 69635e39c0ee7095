// What the participant sees. The session flow drives this interface only;
// the DOM implementation lives in dom.ts so the whole experiment logic runs
// headless under test. Nothing here ever exposes durations, trial counts
// per condition, or estimates.

export type FeedbackKind = 'correct' | 'incorrect';

export interface View {
  showInstructions(text: string): void;
  showFixation(): void;
  /** Mount an empty bar track; returns the fill-width setter (pixels). */
  showBar(): (px: number) => void;
  showBlank(): void;
  showPrompt(text: string): void;
  showFeedback(kind: FeedbackKind): void;
  showRest(remainingS: number): void;
  updateRest(remainingS: number): void;
  showDone(): void;
  showError(message: string): void;
}

export const INSTRUCTIONS_TEXT =
  'Two progress bars will fill, one after the other, with a brief pause ' +
  'in between. Decide which bar took a SHORTER time to fill. ' +
  'Press F if the FIRST bar was shorter, J if the SECOND was shorter. ' +
  'Answer after the second bar finishes; keep your eyes on the dot while ' +
  'the bars run. Press the space bar to begin.';

export const PROMPT_TEXT = 'Which bar filled for a shorter time?  F = first   J = second';
