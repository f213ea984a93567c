import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { describe, expect, it } from 'vitest';
import { formatPercent, renderComparisonTable, renderSpecPanel, renderTranscript } from '../src/panels';
import type { ReportDoc, SessionResponse } from '../src/types';

const FIXTURES = join(__dirname, '..', 'fixtures');
const session: SessionResponse = JSON.parse(
  readFileSync(join(FIXTURES, 'session.json'), 'utf-8'),
);
const report: ReportDoc = JSON.parse(readFileSync(join(FIXTURES, 'report.json'), 'utf-8'));

describe('transcript panel', () => {
  it('renders turns in order with roles', () => {
    const list = renderTranscript(session.transcript);
    const items = list.querySelectorAll('li');
    expect(items).toHaveLength(session.transcript.length);
    session.transcript.forEach((turn, k) => {
      expect(items[k].classList.contains(`turn-${turn.role}`)).toBe(true);
      expect(items[k].querySelector('.turn-text')?.textContent).toBe(turn.text);
    });
  });

  it('is idempotent under refetch', () => {
    const a = renderTranscript(session.transcript).outerHTML;
    const b = renderTranscript(session.transcript).outerHTML;
    expect(a).toBe(b);
  });
});

describe('spec panel', () => {
  it('mirrors the server spec values verbatim', () => {
    const panel = renderSpecPanel(session.spec, session.phase);
    expect(panel.getAttribute('data-phase')).toBe(session.phase);
    const strategy = panel.querySelector('[data-field="strategy"]');
    expect(strategy?.textContent).toBe(session.spec.strategy);
    const power = panel.querySelector('[data-field="target_power"]');
    expect(power?.textContent).toBe(`${session.spec.target_power} W`);
  });

  it('marks missing fields pending', () => {
    const panel = renderSpecPanel(
      { strategy: 'TPS', objective: null, target_power: null, v_in: null,
        v_out: null, optimizer: null },
      'CollectObjective',
    );
    expect(panel.querySelector('[data-field="strategy"]')?.className).toBe('collected');
    expect(panel.querySelector('[data-field="objective"]')?.className).toBe('pending');
    expect(panel.querySelector('[data-field="objective"]')?.textContent).toBe('—');
  });
});

describe('comparison table', () => {
  it('shows artifact numbers and the improvement percent', () => {
    const cmp = report.comparison!;
    const table = renderComparisonTable(cmp);
    const ippRow = table.querySelector('[data-metric="i_pp"]')!;
    const cells = ippRow.querySelectorAll('td');
    expect(cells[1].textContent).toBe(`${cmp.tps.metrics.i_pp.toFixed(3)} A`);
    expect(cells[2].textContent).toBe(`${cmp.sps.metrics.i_pp.toFixed(3)} A`);
    expect(cells[3].textContent).toBe(formatPercent(cmp.improvement_i_pp));
  });

  it('improvement formatting is (SPS - TPS)/SPS as a percent', () => {
    expect(formatPercent(0.0662)).toBe('6.6%');
    expect(formatPercent(0)).toBe('0.0%');
    const cmp = report.comparison!;
    const recomputed =
      (cmp.sps.metrics.i_pp - cmp.tps.metrics.i_pp) / cmp.sps.metrics.i_pp;
    expect(formatPercent(cmp.improvement_i_pp)).toBe(formatPercent(recomputed));
  });

  it('reports soft-switching edge counts from the artifact', () => {
    const cmp = report.comparison!;
    const zvsRow = renderComparisonTable(cmp).querySelector('[data-metric="zvs"]')!;
    const cells = zvsRow.querySelectorAll('td');
    expect(cells[1].textContent).toBe(
      `${cmp.zvs_edges_tps} of ${cmp.tps.metrics.zvs_flags.length}`,
    );
  });
});
