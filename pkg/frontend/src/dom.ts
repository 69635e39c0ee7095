// DOM rendering: a white stage holding either a message, the fixation dot,
// or the 600 x 20 bar track. Pure presentation; all sequencing lives in the
// session flow.

import { FIXATION_PX, TRACK_H_PX, TRACK_W_PX } from './curves.js';
import type { FeedbackKind, View } from './view.js';

export class DomView implements View {
  private readonly stage: HTMLDivElement;

  constructor(root: HTMLElement) {
    root.innerHTML = '';
    root.style.background = '#ffffff';
    this.stage = document.createElement('div');
    this.stage.style.cssText = [
      'display:flex',
      'align-items:center',
      'justify-content:center',
      'min-height:100vh',
      'background:#ffffff',
      'color:#222',
      'font:16px/1.5 system-ui, sans-serif',
    ].join(';');
    root.appendChild(this.stage);
  }

  private message(text: string, color = '#222'): void {
    this.stage.innerHTML = '';
    const p = document.createElement('p');
    p.style.cssText = `max-width:40em;text-align:center;white-space:pre-line;color:${color}`;
    p.textContent = text;
    this.stage.appendChild(p);
  }

  showInstructions(text: string): void {
    this.message(text);
  }

  showFixation(): void {
    this.stage.innerHTML = '';
    const dot = document.createElement('div');
    dot.style.cssText = [
      `width:${FIXATION_PX}px`,
      `height:${FIXATION_PX}px`,
      'background:#000',
    ].join(';');
    this.stage.appendChild(dot);
  }

  showBar(): (px: number) => void {
    this.stage.innerHTML = '';
    const track = document.createElement('div');
    track.style.cssText = [
      `width:${TRACK_W_PX}px`,
      `height:${TRACK_H_PX}px`,
      'border:1px solid #999',
      'background:#fff',
    ].join(';');
    const fill = document.createElement('div');
    fill.style.cssText = 'width:0px;height:100%;background:#3567b4';
    track.appendChild(fill);
    this.stage.appendChild(track);
    return (px: number) => {
      fill.style.width = `${px}px`;
    };
  }

  showBlank(): void {
    this.stage.innerHTML = '';
  }

  showPrompt(text: string): void {
    this.message(text);
  }

  showFeedback(kind: FeedbackKind): void {
    this.message(kind === 'correct' ? 'Correct' : 'Incorrect', kind === 'correct' ? '#1a7f37' : '#b4231f');
  }

  showRest(remainingS: number): void {
    this.updateRest(remainingS);
  }

  updateRest(remainingS: number): void {
    this.message(`Rest break.\nThe next block starts in ${Math.ceil(remainingS)} s.`);
  }

  showDone(): void {
    this.message('Session complete. Thank you for participating!');
  }

  showError(message: string): void {
    this.message(`Something went wrong:\n${message}`, '#b4231f');
  }
}
