// DOM builders for the chat transcript, the live spec panel and the
// strategy-comparison table.  All numbers come straight from server payloads.

import type { ChatTurnView, ComparisonView, DesignSpecView } from './types';

export function formatPercent(fraction: number): string {
  return `${(100 * fraction).toFixed(1)}%`;
}

export function renderTranscript(turns: ChatTurnView[]): HTMLElement {
  const list = document.createElement('ol');
  list.className = 'transcript';
  for (const turn of turns) {
    const item = document.createElement('li');
    item.className = `turn turn-${turn.role}`;
    if (turn.meta && turn.meta['degraded']) item.classList.add('turn-degraded');
    const who = document.createElement('span');
    who.className = 'turn-role';
    who.textContent = turn.role === 'user' ? 'You' : 'Assistant';
    const text = document.createElement('p');
    text.className = 'turn-text';
    text.textContent = turn.text;
    item.append(who, text);
    list.appendChild(item);
  }
  return list;
}

const SPEC_LABELS: [keyof DesignSpecView, string, string][] = [
  ['strategy', 'Strategy', ''],
  ['objective', 'Objective', ''],
  ['target_power', 'Target power', ' W'],
  ['v_in', 'Input voltage', ' V'],
  ['v_out', 'Output voltage', ' V'],
  ['optimizer', 'Optimizer', ''],
];

export function renderSpecPanel(spec: DesignSpecView, phase: string): HTMLElement {
  const panel = document.createElement('dl');
  panel.className = 'spec-panel';
  panel.setAttribute('data-phase', phase);
  for (const [key, label, unit] of SPEC_LABELS) {
    const dt = document.createElement('dt');
    dt.textContent = label;
    const dd = document.createElement('dd');
    dd.setAttribute('data-field', key);
    const value = spec[key];
    dd.textContent = value === null || value === undefined ? '—' : `${value}${unit}`;
    dd.className = value === null || value === undefined ? 'pending' : 'collected';
    panel.append(dt, dd);
  }
  return panel;
}

export function renderComparisonTable(cmp: ComparisonView): HTMLTableElement {
  const table = document.createElement('table');
  table.className = 'comparison-table';
  const head = table.createTHead().insertRow();
  for (const text of ['', 'Optimized TPS', 'SPS (same power)', 'Improvement']) {
    const th = document.createElement('th');
    th.textContent = text;
    head.appendChild(th);
  }
  const body = table.createTBody();

  const addRow = (
    label: string,
    tps: string,
    sps: string,
    improvement: string,
    field: string,
  ) => {
    const row = body.insertRow();
    row.setAttribute('data-metric', field);
    const name = row.insertCell();
    name.textContent = label;
    row.insertCell().textContent = tps;
    row.insertCell().textContent = sps;
    const impCell = row.insertCell();
    impCell.className = 'improvement';
    impCell.textContent = improvement;
  };

  addRow(
    'Peak-to-peak current',
    `${cmp.tps.metrics.i_pp.toFixed(3)} A`,
    `${cmp.sps.metrics.i_pp.toFixed(3)} A`,
    formatPercent(cmp.improvement_i_pp),
    'i_pp',
  );
  addRow(
    'RMS current',
    `${cmp.tps.metrics.i_rms.toFixed(3)} A`,
    `${cmp.sps.metrics.i_rms.toFixed(3)} A`,
    formatPercent(cmp.improvement_i_rms),
    'i_rms',
  );
  addRow(
    'Soft-switching edges',
    `${cmp.zvs_edges_tps} of ${cmp.tps.metrics.zvs_flags.length}`,
    `${cmp.zvs_edges_sps} of ${cmp.sps.metrics.zvs_flags.length}`,
    '',
    'zvs',
  );
  return table;
}
