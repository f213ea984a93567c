import type {
  LandscapePointData,
  MessageResponse,
  ReportDoc,
  SessionResponse,
  WaveformData,
} from './types';
import { parseLandscapeCsv, parseWaveformCsv } from './csv';

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function check(resp: Response): Promise<Response> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && typeof body.detail === 'string') detail = body.detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return resp;
}

export function createClient(base = '') {
  return {
    async createSession(fixture?: string): Promise<SessionResponse> {
      const resp = await check(
        await fetch(`${base}/sessions`, {
          method: 'POST',
          headers: { 'Content-Type': 'application/json' },
          body: JSON.stringify(fixture ? { fixture } : {}),
        }),
      );
      return resp.json();
    },

    async getSession(id: string): Promise<SessionResponse> {
      const resp = await check(await fetch(`${base}/sessions/${id}`));
      return resp.json();
    },

    async sendMessage(id: string, text: string): Promise<MessageResponse> {
      const resp = await check(
        await fetch(`${base}/sessions/${id}/messages`, {
          method: 'POST',
          headers: { 'Content-Type': 'application/json' },
          body: JSON.stringify({ text }),
        }),
      );
      return resp.json();
    },

    async getReport(id: string): Promise<ReportDoc> {
      const resp = await check(await fetch(`${base}/sessions/${id}/report`));
      return resp.json();
    },

    async getWaveform(id: string): Promise<WaveformData> {
      const resp = await check(
        await fetch(`${base}/sessions/${id}/artifacts/waveform.csv`),
      );
      return parseWaveformCsv(await resp.text());
    },

    async getLandscape(id: string): Promise<LandscapePointData[]> {
      const resp = await check(
        await fetch(`${base}/sessions/${id}/artifacts/landscape.csv`),
      );
      return parseLandscapeCsv(await resp.text());
    },
  };
}

export type Client = ReturnType<typeof createClient>;
