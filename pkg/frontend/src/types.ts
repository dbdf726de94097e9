// Wire types mirroring the /v1 API exactly; the UI renders these verbatim
// and never derives taint values on its own.

export interface LabelInfo {
  label: string;
  color: string;
}

export interface ChainSummary {
  blocks: number;
  transactions: number;
  outputs: number;
  subsidy: number;
  tip_height: number;
  tip_hash: string;
  labels: string[];
  policies: string[];
  graph_vertices: number;
  graph_edges: number;
}

// Vertex fields shared by /tx and expand responses. tainted_in is only
// present on graph vertices returned by expand.
export interface VertexCore {
  txid: string;
  height: number;
  block_hash: string;
  tx_class: string | null;
  tainted_out: Record<string, number>;
  tainted_in?: Record<string, number>;
}

export interface EdgeDoc {
  from_txid: string;
  from_vout: number;
  to_txid: string;
  to_input: number;
  value: number;
  tainted: Record<string, number>;
  proportion: string; // exact rational "num/den"
  vertex: VertexCore;
}

export interface ExpandResponse {
  txid: string;
  direction: 'forward' | 'backward';
  edges: EdgeDoc[];
  collapsed: number;
}

export interface TxInputDoc {
  txid: string;
  vout: number;
  value: number;
  address: string;
  segments: [number, string][];
}

export interface TxOutputDoc {
  vout: number;
  value: number;
  address: string;
  segments: [number, string][];
  spent_by: { txid: string; input: number } | null;
}

export interface TxDoc {
  txid: string;
  height: number;
  block_hash: string;
  coinbase: boolean;
  tx_class: string | null;
  fee: number;
  inputs: TxInputDoc[];
  outputs: TxOutputDoc[];
  tainted_out: Record<string, number>;
  in_graph: boolean;
}

export type Terminal =
  | { kind: 'coinbase'; height: number }
  | { kind: 'taint_event'; label: string; txid: string };

export interface TraceNode {
  txid: string;
  vout: number;
  start: number;
  end: number;
  terminal: Terminal | null;
  children: TraceNode[];
}

export interface PatternMatchDoc {
  kind: 'splitting' | 'collection' | 'peeling_chain';
  label: string;
  score: string;
  txids: string[];
  address?: string;
}

export interface PatternsResponse {
  thresholds: Record<string, unknown>;
  matches: PatternMatchDoc[];
}

export function parseProportion(text: string): number {
  const [num, den] = text.split('/');
  return Number(num) / Number(den);
}

export function totalTaint(mass: Record<string, number>, label: string | null): number {
  if (label !== null) return mass[label] ?? 0;
  let total = 0;
  for (const sats of Object.values(mass)) total += sats;
  return total;
}
