import type { EdgeDoc, ExpandResponse, VertexCore } from './types';
import { totalTaint } from './types';

export interface GraphNode {
  vertex: VertexCore;
  /** arrival order; seeds the left-to-right force layout */
  order: number;
}

export interface BadgeKey {
  txid: string;
  direction: 'forward' | 'backward';
}

function edgeKey(edge: EdgeDoc): string {
  return `${edge.from_txid}:${edge.from_vout}->${edge.to_txid}:${edge.to_input}`;
}

/**
 * Pure view-model of the explorer: which vertices/edges have been fetched,
 * which vertex expansions were applied, and the current presentation filters.
 *
 * Invariants kept here (and asserted by tests):
 * - every number shown is copied from an API response, never derived;
 * - the expanded set only contains txids previously returned by the API;
 * - changing label filter or threshold never discards fetched state;
 * - at most one in-flight expand per vertex, stale responses are discarded.
 */
export class GraphStore {
  readonly nodes = new Map<string, GraphNode>();
  readonly edges = new Map<string, EdgeDoc>();
  readonly expanded = new Set<string>();
  /** last collapsed-edge count per vertex+direction, straight from the API */
  readonly badges = new Map<string, number>();

  labelFilter: string | null = null;
  minSats = 0;

  private nextOrder = 0;
  private epochs = new Map<string, number>();

  addVertex(vertex: VertexCore): GraphNode {
    const existing = this.nodes.get(vertex.txid);
    if (existing) {
      return existing;
    }
    const node = { vertex, order: this.nextOrder++ };
    this.nodes.set(vertex.txid, node);
    return node;
  }

  /** Start an expand for a vertex; returns a token applyExpand must echo.
   * A newer beginExpand invalidates older in-flight responses. */
  beginExpand(txid: string): number {
    const epoch = (this.epochs.get(txid) ?? 0) + 1;
    this.epochs.set(txid, epoch);
    return epoch;
  }

  /** Apply an expand response: adds exactly the returned neighbors and edges,
   * records the collapsed badge, marks the vertex expanded. Returns false if
   * the response is stale or the vertex is unknown. */
  applyExpand(response: ExpandResponse, token?: number): boolean {
    if (token !== undefined && this.epochs.get(response.txid) !== token) {
      return false; // a newer expand for this vertex is in flight
    }
    if (!this.nodes.has(response.txid)) {
      return false; // expanded set may only reference API-known vertices
    }
    for (const edge of response.edges) {
      this.addVertex(edge.vertex);
      this.edges.set(edgeKey(edge), edge);
    }
    this.badges.set(`${response.txid}:${response.direction}`, response.collapsed);
    this.expanded.add(response.txid);
    return true;
  }

  badge(txid: string, direction: 'forward' | 'backward'): number | undefined {
    return this.badges.get(`${txid}:${direction}`);
  }

  /** Total badge shown on the vertex: collapsed counts of both directions. */
  badgeTotal(txid: string): number | undefined {
    const forward = this.badge(txid, 'forward');
    const backward = this.badge(txid, 'backward');
    if (forward === undefined && backward === undefined) return undefined;
    return (forward ?? 0) + (backward ?? 0);
  }

  setLabelFilter(label: string | null): void {
    this.labelFilter = label; // presentation only; fetched state untouched
  }

  setMinSats(minSats: number): void {
    this.minSats = minSats;
  }

  /** Edge passes the current filters; mirrors the service's expand rule. */
  edgeVisible(edge: EdgeDoc): boolean {
    const mass = totalTaint(edge.tainted, this.labelFilter);
    if (this.labelFilter !== null && mass === 0) return false;
    return mass >= this.minSats;
  }

  visibleEdges(): EdgeDoc[] {
    return [...this.edges.values()].filter((edge) => this.edgeVisible(edge));
  }

  /** Vertices incident to a visible edge, plus filter-matching isolated ones. */
  visibleNodes(): GraphNode[] {
    const incident = new Set<string>();
    for (const edge of this.visibleEdges()) {
      incident.add(edge.from_txid);
      incident.add(edge.to_txid);
    }
    const out: GraphNode[] = [];
    for (const [txid, node] of this.nodes) {
      if (incident.has(txid)) {
        out.push(node);
        continue;
      }
      const mass = totalTaint(node.vertex.tainted_out, this.labelFilter);
      if (this.labelFilter === null || mass > 0) {
        out.push(node);
      }
    }
    return out;
  }
}
