// SVG renderers for the waveform traces and the landscape slice heatmap.
// Everything displayed is a direct mapping of artifact numbers; no converter
// arithmetic happens on the client.

import type { LandscapePointData, WaveformData } from './types';

const SVG_NS = 'http://www.w3.org/2000/svg';

export interface TraceSpec {
  name: string;
  values: number[];
  color: string;
}

function scale(values: number[], lo: number, hi: number, outLo: number, outHi: number) {
  const span = hi - lo || 1;
  return values.map((v) => outLo + ((v - lo) / span) * (outHi - outLo));
}

export function renderWaveformChart(
  wave: WaveformData,
  width = 640,
  height = 280,
): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, 'svg');
  svg.setAttribute('viewBox', `0 0 ${width} ${height}`);
  svg.setAttribute('class', 'waveform-chart');
  svg.setAttribute('role', 'img');

  const traces: TraceSpec[] = [
    { name: 'v_p', values: wave.v_p, color: '#1f77b4' },
    { name: 'v_s', values: wave.v_s, color: '#ff7f0e' },
    { name: 'i_l', values: wave.i_l, color: '#2ca02c' },
  ];
  const tLo = wave.t[0];
  const tHi = wave.t[wave.t.length - 1];
  const xs = scale(wave.t, tLo, tHi, 40, width - 10);

  for (const trace of traces) {
    const lo = Math.min(...trace.values);
    const hi = Math.max(...trace.values);
    const ys = scale(trace.values, lo, hi, height - 20, 20);
    const line = document.createElementNS(SVG_NS, 'polyline');
    line.setAttribute('fill', 'none');
    line.setAttribute('stroke', trace.color);
    line.setAttribute('stroke-width', '1.5');
    line.setAttribute('data-trace', trace.name);
    line.setAttribute(
      'points',
      xs.map((x, k) => `${x.toFixed(2)},${ys[k].toFixed(2)}`).join(' '),
    );
    svg.appendChild(line);

    const label = document.createElementNS(SVG_NS, 'text');
    label.setAttribute('x', String(44 + traces.indexOf(trace) * 60));
    label.setAttribute('y', '14');
    label.setAttribute('fill', trace.color);
    label.textContent = trace.name;
    svg.appendChild(label);
  }
  return svg;
}

export interface HeatmapResult {
  svg: SVGSVGElement;
  cells: number;
  bestIndex: number;
}

/** Landscape slice heatmap over (d1, d2) with the optimum marked. */
export function renderLandscapeHeatmap(
  points: LandscapePointData[],
  width = 420,
  height = 420,
): HeatmapResult {
  if (points.length === 0) throw new Error('landscape is empty');
  const svg = document.createElementNS(SVG_NS, 'svg');
  svg.setAttribute('viewBox', `0 0 ${width} ${height}`);
  svg.setAttribute('class', 'landscape-heatmap');

  const d1s = [...new Set(points.map((p) => p.d1))].sort((a, b) => a - b);
  const d2s = [...new Set(points.map((p) => p.d2))].sort((a, b) => a - b);
  const cw = (width - 50) / d1s.length;
  const ch = (height - 50) / d2s.length;

  const fits = points.map((p) => p.fitness);
  const lo = Math.min(...fits);
  const hi = Math.max(...fits);
  const span = hi - lo || 1;
  let bestIndex = 0;
  points.forEach((p, k) => {
    if (p.fitness < points[bestIndex].fitness) bestIndex = k;
  });

  points.forEach((p, k) => {
    const col = d1s.indexOf(p.d1);
    const row = d2s.indexOf(p.d2);
    const cell = document.createElementNS(SVG_NS, 'rect');
    const heat = Math.round(255 * (1 - (p.fitness - lo) / span));
    cell.setAttribute('x', (40 + col * cw).toFixed(2));
    cell.setAttribute('y', (height - 40 - (row + 1) * ch).toFixed(2));
    cell.setAttribute('width', Math.max(cw, 1).toFixed(2));
    cell.setAttribute('height', Math.max(ch, 1).toFixed(2));
    cell.setAttribute('fill', `rgb(${255 - heat}, ${heat}, 120)`);
    cell.setAttribute('data-index', String(k));
    cell.setAttribute('data-fitness', String(p.fitness));
    svg.appendChild(cell);
  });

  const best = points[bestIndex];
  const marker = document.createElementNS(SVG_NS, 'circle');
  marker.setAttribute('class', 'optimum-marker');
  marker.setAttribute('r', '6');
  marker.setAttribute('cx', (40 + (d1s.indexOf(best.d1) + 0.5) * cw).toFixed(2));
  marker.setAttribute('cy', (height - 40 - (d2s.indexOf(best.d2) + 0.5) * ch).toFixed(2));
  marker.setAttribute('fill', 'none');
  marker.setAttribute('stroke', '#000');
  marker.setAttribute('stroke-width', '2');
  svg.appendChild(marker);

  return { svg, cells: points.length, bestIndex };
}
