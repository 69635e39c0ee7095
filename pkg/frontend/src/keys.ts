// Keyboard capture. nextKey attaches its listener when called, so presses
// during stimulus playback land on nothing and are discarded rather than
// buffered into the upcoming response window.

import type { Clock } from './clock.js';

export interface KeyEvent {
  key: string;
  atMs: number;
}

export interface KeySource {
  /** Resolve on the first press of one of the accepted keys; ignore the rest. */
  nextKey(accept: readonly string[]): Promise<KeyEvent>;
}

interface KeyEventTarget {
  addEventListener(type: string, listener: (ev: Event) => void): void;
  removeEventListener(type: string, listener: (ev: Event) => void): void;
}

function canonical(key: string): string {
  return key.length === 1 ? key.toUpperCase() : key;
}

export class DomKeys implements KeySource {
  constructor(
    private readonly target: KeyEventTarget,
    private readonly clock: Clock,
  ) {}

  nextKey(accept: readonly string[]): Promise<KeyEvent> {
    const wanted = accept.map(canonical);
    return new Promise((resolve) => {
      const listener = (ev: Event) => {
        const key = canonical((ev as KeyboardEvent).key ?? '');
        if (!wanted.includes(key)) return;
        this.target.removeEventListener('keydown', listener);
        resolve({ key, atMs: this.clock.now() });
      };
      this.target.addEventListener('keydown', listener);
    });
  }
}
