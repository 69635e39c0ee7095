// Flow conformance against the real service: a scripted auto-responder
// drives the full 3 + 160 trial session over HTTP. Animation and waits run
// on the simulated display clock, so the only real time spent is network
// round-trips and the (shortened) rest blocks enforced by the server.

import { spawn, type ChildProcess } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { setImmediate as setImmediateFn } from 'node:timers';
import { afterAll, beforeAll, describe, expect, test } from 'vitest';

import { SessionApi } from '../src/api.js';
import { SessionFlow } from '../src/session.js';
import {
  alternatingResponder,
  drive,
  MemoryView,
  ScriptedKeys,
  SimulatedClock,
} from './fakes.js';

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;
const yieldIo = () => new Promise<void>((resolve) => setImmediateFn(resolve));

let server: ChildProcess | null = null;
let dataDir = '';

async function serverUp(): Promise<boolean> {
  try {
    const res = await fetch(`${BASE}/`);
    return res.ok;
  } catch {
    return false;
  }
}

beforeAll(async () => {
  dataDir = mkdtempSync(join(tmpdir(), 'pse-ui-live-'));
  server = spawn('pse-lab', ['serve', '--bind', `127.0.0.1:${PORT}`, '--data-dir', dataDir], {
    stdio: 'ignore',
  });
  const deadline = Date.now() + 30_000;
  while (!(await serverUp())) {
    if (Date.now() > deadline) throw new Error('session service did not come up');
    if (server.exitCode !== null) throw new Error(`service exited early (${server.exitCode})`);
    await new Promise((r) => setTimeout(r, 250));
  }
}, 40_000);

afterAll(() => {
  server?.kill();
  if (dataDir) rmSync(dataDir, { recursive: true, force: true });
});

describe('auto-responder against the live service', () => {
  test(
    'completes the full 3 + 160 trial session',
    async () => {
      const api = new SessionApi(BASE);
      const created = await api.createSession({
        participant_id: 'ui-auto',
        seed: 11,
        rest_s: 0.2, // keep the three real-time rest blocks short
      });
      expect(created.practice_trials).toBe(3);
      expect(created.total_main_trials).toBe(160);
      expect(created.curve_order).toHaveLength(4);

      const clock = new SimulatedClock(1000 / 60);
      const view = new MemoryView(clock);
      const keys = new ScriptedKeys(clock, alternatingResponder());
      const flow = new SessionFlow(created.session_id, { api, view, clock, keys });

      let settled = false;
      let failure: unknown = null;
      void flow.run().then(
        () => {
          settled = true;
        },
        (err) => {
          settled = true;
          failure = err;
        },
      );
      await drive(clock, () => settled, { yieldFn: yieldIo, maxSteps: 20_000_000 });
      if (failure) throw failure;

      expect(view.count('done')).toBe(1);
      expect(view.count('fixation')).toBe(163);
      expect(view.count('feedback')).toBe(3);
      expect(view.count('rest')).toBeGreaterThanOrEqual(3);
      expect(flow.flags).toEqual([]);

      // The server's own account of the session: complete, fully logged.
      const results = await api.results(created.session_id);
      expect(results.complete).toBe(true);
      expect(results.n_trials_logged).toBe(163);
      const curves = Object.keys(results.results).sort();
      expect(curves).toEqual(['bezier', 'elasticity', 'slow_down', 'speed_up']);
      for (const curve of curves) {
        const res = results.results[curve]!;
        expect(res.n_trials).toBe(40);
        expect(res.pse_s).toBeGreaterThan(0);
        expect(res.posterior_sd_s).toBeGreaterThan(0);
      }
    },
    180_000,
  );

  test(
    'a reloaded client resumes the in-flight trial instead of losing it',
    async () => {
      const api = new SessionApi(BASE);
      const created = await api.createSession({
        participant_id: 'ui-resume',
        seed: 5,
        trials_per_curve: 1,
        practice_trials: 0,
      });
      const first = await api.nextTrial(created.session_id);
      const again = await api.nextTrial(created.session_id);
      expect(again).toEqual(first); // idempotent re-serve is what reload relies on
    },
    30_000,
  );
});
