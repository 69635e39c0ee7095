// Entry point. Configuration comes from two URL query parameters only:
//   api      base URL of the session service (default: same origin)
//   session  id of the session to run or resume
// Without a session id a minimal creation page is shown; creating one
// reloads with ?session=<id> so the participant link is bookmarkable and
// a dropped connection resumes by simply reloading.

import { ApiError, SessionApi } from './api.js';
import { BrowserClock } from './clock.js';
import { DomView } from './dom.js';
import { DomKeys } from './keys.js';
import { SessionFlow } from './session.js';

function creationPage(root: HTMLElement, api: SessionApi): void {
  root.innerHTML = '';
  const box = document.createElement('div');
  box.style.cssText = 'max-width:28em;margin:4em auto;font:16px/1.5 system-ui,sans-serif';
  box.innerHTML = `
    <h1 style="font-size:1.3em">New session</h1>
    <p><label>Participant id <input id="pid" size="16" autofocus></label></p>
    <p><button id="start">Create session</button></p>
    <p id="status" style="color:#b4231f"></p>
  `;
  root.appendChild(box);
  const pid = box.querySelector<HTMLInputElement>('#pid')!;
  const status = box.querySelector<HTMLElement>('#status')!;
  box.querySelector<HTMLButtonElement>('#start')!.addEventListener('click', async () => {
    status.textContent = '';
    try {
      const created = await api.createSession({ participant_id: pid.value.trim() });
      const url = new URL(location.href);
      url.searchParams.set('session', created.session_id);
      location.assign(url.toString());
    } catch (err) {
      status.textContent =
        err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  });
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const apiBase = params.get('api') ?? '';
  const sessionId = params.get('session');
  const root = document.getElementById('app') ?? document.body;
  const api = new SessionApi(apiBase);

  if (!sessionId) {
    creationPage(root, api);
    return;
  }

  const clock = new BrowserClock();
  const view = new DomView(root);
  const keys = new DomKeys(window, clock);
  const flow = new SessionFlow(sessionId, { api, view, clock, keys });
  try {
    await flow.run();
  } catch (err) {
    view.showError(err instanceof Error ? err.message : String(err));
    throw err;
  } finally {
    for (const flag of flow.flags) console.warn(flag);
  }
}

boot();
