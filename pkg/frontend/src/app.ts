// Session view: one dialogue, its progress panel and, once the design run
// finishes, the results tabs.  One in-flight message per session; a busy or
// conflict response keeps the draft text so nothing the user typed is lost.

import type { Client } from './api';
import { ApiError } from './api';
import { renderLandscapeHeatmap, renderWaveformChart } from './charts';
import { renderComparisonTable, renderSpecPanel, renderTranscript } from './panels';
import type { SessionResponse } from './types';

export interface SessionViewElements {
  transcript: HTMLElement;
  spec: HTMLElement;
  results: HTMLElement;
  status: HTMLElement;
  input: HTMLInputElement;
  send: HTMLButtonElement;
}

export class SessionView {
  private sessionId: string | null = null;
  private inFlight = false;
  private resultsLoaded = false;

  constructor(private client: Client, private el: SessionViewElements) {}

  async open(fixture?: string): Promise<string> {
    const session = await this.client.createSession(fixture);
    this.sessionId = session.session_id;
    this.renderSession(session);
    return session.session_id;
  }

  async refresh(): Promise<void> {
    if (!this.sessionId) return;
    this.renderSession(await this.client.getSession(this.sessionId));
  }

  private renderSession(session: SessionResponse): void {
    this.el.transcript.replaceChildren(renderTranscript(session.transcript));
    this.el.spec.replaceChildren(renderSpecPanel(session.spec, session.phase));
    this.el.status.textContent = `phase: ${session.phase}`;
    if (session.artifacts.includes('report.json') && !this.resultsLoaded) {
      void this.loadResults();
    }
  }

  /** Send the draft; on busy/conflict the draft stays in the box. */
  async send(): Promise<void> {
    if (!this.sessionId || this.inFlight) return;
    const text = this.el.input.value.trim();
    if (!text) return;
    this.inFlight = true;
    this.el.send.disabled = true;
    try {
      const resp = await this.client.sendMessage(this.sessionId, text);
      this.el.input.value = '';
      await this.refresh();
      if (resp.report && !this.resultsLoaded) await this.loadResults();
    } catch (err) {
      if (err instanceof ApiError && (err.status === 409 || err.status === 429)) {
        this.el.status.textContent = `busy: ${err.message} (draft kept)`;
      } else {
        this.el.status.textContent = `error: ${(err as Error).message}`;
      }
    } finally {
      this.inFlight = false;
      this.el.send.disabled = false;
    }
  }

  async loadResults(): Promise<void> {
    if (!this.sessionId) return;
    try {
      const [report, waveform, landscape] = await Promise.all([
        this.client.getReport(this.sessionId),
        this.client.getWaveform(this.sessionId),
        this.client.getLandscape(this.sessionId),
      ]);
      const blocks: HTMLElement[] = [];

      const waveBlock = document.createElement('section');
      waveBlock.className = 'results-waveform';
      const waveTitle = document.createElement('h3');
      waveTitle.textContent = 'Steady-state waveforms';
      waveBlock.append(waveTitle, renderWaveformChart(waveform));
      blocks.push(waveBlock);

      const landBlock = document.createElement('section');
      landBlock.className = 'results-landscape';
      const landTitle = document.createElement('h3');
      landTitle.textContent = 'Optimization landscape';
      landBlock.append(landTitle, renderLandscapeHeatmap(landscape).svg);
      blocks.push(landBlock);

      if (report.comparison) {
        const cmpBlock = document.createElement('section');
        cmpBlock.className = 'results-comparison';
        const cmpTitle = document.createElement('h3');
        cmpTitle.textContent = 'Strategy comparison';
        cmpBlock.append(cmpTitle, renderComparisonTable(report.comparison));
        blocks.push(cmpBlock);
      }

      const analysis = document.createElement('section');
      analysis.className = 'results-analysis';
      for (const [key, text] of Object.entries(report.analysis)) {
        const p = document.createElement('p');
        p.setAttribute('data-analysis', key);
        p.textContent = text;
        analysis.appendChild(p);
      }
      blocks.push(analysis);

      this.el.results.replaceChildren(...blocks);
      this.el.results.classList.add('active');
      this.resultsLoaded = true;
    } catch (err) {
      const retry = document.createElement('button');
      retry.className = 'retry-results';
      retry.textContent = `results not ready (${(err as Error).message}) - retry`;
      retry.addEventListener('click', () => void this.loadResults());
      this.el.results.replaceChildren(retry);
    }
  }
}
