import type { LandscapePointData, WaveformData } from './types';

const WAVEFORM_HEADER = 't,v_p,v_s,i_l';
const LANDSCAPE_HEADER = 'd0,d1,d2,fitness,p_avg,i_pp,zvs_complete';

function rows(text: string, expectedHeader: string): string[][] {
  const lines = text.trim().split(/\r?\n/);
  if (lines.length === 0 || lines[0].trim() !== expectedHeader) {
    throw new Error(`expected CSV header "${expectedHeader}"`);
  }
  return lines.slice(1).map((line) => line.split(','));
}

export function parseWaveformCsv(text: string): WaveformData {
  const out: WaveformData = { t: [], v_p: [], v_s: [], i_l: [] };
  for (const cells of rows(text, WAVEFORM_HEADER)) {
    if (cells.length !== 4) throw new Error(`bad waveform row: ${cells.join(',')}`);
    out.t.push(Number(cells[0]));
    out.v_p.push(Number(cells[1]));
    out.v_s.push(Number(cells[2]));
    out.i_l.push(Number(cells[3]));
  }
  if (out.t.length === 0) throw new Error('waveform CSV has no samples');
  return out;
}

export function parseLandscapeCsv(text: string): LandscapePointData[] {
  return rows(text, LANDSCAPE_HEADER).map((cells) => {
    if (cells.length !== 7) throw new Error(`bad landscape row: ${cells.join(',')}`);
    return {
      d0: Number(cells[0]),
      d1: Number(cells[1]),
      d2: Number(cells[2]),
      fitness: Number(cells[3]),
      p_avg: Number(cells[4]),
      i_pp: Number(cells[5]),
      zvs_complete: cells[6].trim() === 'true',
    };
  });
}
