// JSON shapes served by the design service; field names mirror the API.

export interface DesignSpecView {
  strategy: string | null;
  objective: string | null;
  target_power: number | null;
  v_in: number | null;
  v_out: number | null;
  optimizer: string | null;
}

export interface ChatTurnView {
  role: 'user' | 'assistant';
  text: string;
  timestamp: number;
  extraction: Record<string, unknown> | null;
  meta: Record<string, unknown>;
}

export interface SessionResponse {
  session_id: string;
  phase: string;
  fixture: string;
  spec: DesignSpecView;
  transcript: ChatTurnView[];
  created_at: number;
  updated_at: number;
  artifacts: string[];
}

export interface ReportRef {
  report: string;
  landscape: string;
  waveform: string;
}

export interface MessageResponse {
  reply: string;
  phase: string;
  spec: DesignSpecView;
  report: ReportRef | null;
}

export interface MetricsView {
  p_avg: number;
  i_pp: number;
  i_rms: number;
  i_peak: number;
  zvs_flags: boolean[];
  zvs_complete: boolean;
}

export interface ModulationView {
  strategy: string;
  d0: number;
  d1: number;
  d2: number;
}

export interface ComparisonView {
  tps: { mp: ModulationView; metrics: MetricsView };
  sps: { mp: ModulationView; metrics: MetricsView };
  improvement_i_pp: number;
  improvement_i_rms: number;
  zvs_edges_tps: number;
  zvs_edges_sps: number;
}

export interface ReportDoc {
  spec: DesignSpecView;
  result: {
    best_mp: ModulationView;
    best_fitness: number;
    metrics: MetricsView;
    feasible: boolean;
    evaluator_tag: string;
    evaluations: number;
  };
  comparison: ComparisonView | null;
  analysis: Record<string, string>;
  oracle_metrics: MetricsView;
  evaluator_tag: string;
}

export interface WaveformData {
  t: number[];
  v_p: number[];
  v_s: number[];
  i_l: number[];
}

export interface LandscapePointData {
  d0: number;
  d1: number;
  d2: number;
  fitness: number;
  p_avg: number;
  i_pp: number;
  zvs_complete: boolean;
}
