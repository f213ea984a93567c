// Contract tests: the session view against recorded server responses.

import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest';
import { createClient } from '../src/api';
import { SessionView, type SessionViewElements } from '../src/app';
import type { MessageResponse, SessionResponse } from '../src/types';

const FIXTURES = join(__dirname, '..', 'fixtures');
const read = (name: string) => readFileSync(join(FIXTURES, name), 'utf-8');

const session: SessionResponse = JSON.parse(read('session.json'));
const messages: { request: { text: string }; response: MessageResponse }[] =
  JSON.parse(read('messages.json'));

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

function textResponse(body: string): Response {
  return new Response(body, { status: 200, headers: { 'Content-Type': 'text/csv' } });
}

function elements(): SessionViewElements {
  document.body.innerHTML = `
    <div id="t"></div><div id="s"></div><div id="r"></div><p id="st"></p>
    <input id="d" /><button id="b"></button>`;
  return {
    transcript: document.getElementById('t')!,
    spec: document.getElementById('s')!,
    results: document.getElementById('r')!,
    status: document.getElementById('st')!,
    input: document.getElementById('d') as HTMLInputElement,
    send: document.getElementById('b') as HTMLButtonElement,
  };
}

/** Serves the recorded six-turn dialogue from fixtures. */
function fixtureFetch() {
  let turn = 0;
  const transcript: SessionResponse['transcript'] = [];
  return vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
    const path = String(url);
    if (path.endsWith('/sessions') && init?.method === 'POST') {
      return jsonResponse({ ...session, transcript: [], artifacts: [], phase: 'CollectStrategy' }, 201);
    }
    if (path.includes('/messages') && init?.method === 'POST') {
      const { response } = messages[turn];
      const { text } = JSON.parse(String(init?.body)) as { text: string };
      transcript.push({ role: 'user', text, timestamp: 0, extraction: null, meta: {} });
      transcript.push({ role: 'assistant', text: response.reply, timestamp: 0,
                        extraction: null, meta: {} });
      turn += 1;
      return jsonResponse(response);
    }
    if (path.endsWith('/report')) return jsonResponse(JSON.parse(read('report.json')));
    if (path.endsWith('/waveform.csv')) return textResponse(read('waveform.csv'));
    if (path.endsWith('/landscape.csv')) return textResponse(read('landscape.csv'));
    // session refetch reflects the turns so far
    return jsonResponse({
      ...session,
      transcript: [...transcript],
      phase: turn >= messages.length ? 'Done' : session.phase,
      artifacts: turn >= messages.length - 1
        ? ['landscape.csv', 'report.json', 'report_meta.json', 'waveform.csv'] : [],
    });
  });
}

describe('SessionView', () => {
  beforeEach(() => void vi.stubGlobal('fetch', fixtureFetch()));
  afterEach(() => void vi.unstubAllGlobals());

  it('walks the recorded dialogue and activates the results tabs', async () => {
    const el = elements();
    const view = new SessionView(createClient(''), el);
    await view.open();
    expect(el.status.textContent).toContain('CollectStrategy');

    for (const { request } of messages) {
      el.input.value = request.text;
      await view.send();
    }
    expect(el.transcript.querySelectorAll('li')).toHaveLength(2 * messages.length);
    expect(el.results.classList.contains('active')).toBe(true);
    expect(el.results.querySelectorAll('polyline')).toHaveLength(3);
    expect(el.results.querySelectorAll('.optimum-marker')).toHaveLength(1);
    expect(el.results.querySelector('.comparison-table')).not.toBeNull();
  });

  it('spec panel mirrors the extraction after a strategy message', async () => {
    const el = elements();
    const view = new SessionView(createClient(''), el);
    await view.open();
    el.input.value = messages[0].request.text;
    await view.send();
    el.input.value = messages[1].request.text;
    await view.send();
    const strategy = el.spec.querySelector('[data-field="strategy"]');
    expect(strategy?.textContent).toBe('TPS');
  });

  it('keeps the draft when the server says busy', async () => {
    const el = elements();
    const busyFetch = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      const path = String(url);
      if (path.endsWith('/sessions') && init?.method === 'POST') {
        return jsonResponse({ ...session, transcript: [], artifacts: [] }, 201);
      }
      return jsonResponse({ detail: 'session is busy handling another message' }, 409);
    });
    vi.stubGlobal('fetch', busyFetch);
    const view = new SessionView(createClient(''), el);
    await view.open();
    el.input.value = 'use TPS';
    await view.send();
    expect(el.input.value).toBe('use TPS');
    expect(el.status.textContent).toContain('busy');
  });

  it('shows a retry control when artifacts are missing', async () => {
    const el = elements();
    const failFetch = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      const path = String(url);
      if (path.endsWith('/sessions') && init?.method === 'POST') {
        return jsonResponse({ ...session, transcript: [], artifacts: [] }, 201);
      }
      if (path.endsWith('/report')) {
        return jsonResponse({ detail: 'no report for this session yet' }, 404);
      }
      return jsonResponse(session);
    });
    vi.stubGlobal('fetch', failFetch);
    const view = new SessionView(createClient(''), el);
    await view.open();
    await view.loadResults();
    expect(el.results.querySelector('.retry-results')).not.toBeNull();
  });
});
