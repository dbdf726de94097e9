// UI-contract tests: the store applies expand responses verbatim, badges
// mirror API collapsed counts, and presentation filters never drop state.

import { beforeAll, describe, expect, inject, it } from 'vitest';

import { ApiClient } from '../src/api';
import { GraphStore } from '../src/state';
import { totalTaint } from '../src/types';
import type { ExpandResponse, VertexCore } from '../src/types';

const api = new ApiClient(inject('apiUrl'));

async function vertexFromTx(txid: string): Promise<VertexCore> {
  const tx = await api.tx(txid);
  return {
    txid: tx.txid,
    height: tx.height,
    block_hash: tx.block_hash,
    tx_class: tx.tx_class,
    tainted_out: tx.tainted_out,
  };
}

let splitTxid: string;
let peelPath: string[];

beforeAll(async () => {
  const { matches } = await api.patterns();
  splitTxid = matches.find((m) => m.kind === 'splitting')!.txids[0]!;
  peelPath = matches.find((m) => m.kind === 'peeling_chain')!.txids;
});

describe('expand-on-click', () => {
  it('adds exactly the API-returned neighbors', async () => {
    const store = new GraphStore();
    store.addVertex(await vertexFromTx(splitTxid));
    const response = await api.expand(splitTxid, 'forward');
    expect(store.applyExpand(response)).toBe(true);

    const expected = new Set([splitTxid, ...response.edges.map((e) => e.vertex.txid)]);
    expect(new Set(store.nodes.keys())).toEqual(expected);
    expect(store.edges.size).toBe(
      new Set(response.edges.map((e) => `${e.from_txid}:${e.from_vout}->${e.to_txid}:${e.to_input}`)).size,
    );
    expect(store.expanded.has(splitTxid)).toBe(true);
  });

  it('clicking a terminal vertex adds nothing and badges zero', async () => {
    const summary = await api.summary();
    // the tip coinbase is never spent; find a graph vertex with no spends:
    // expand every pattern txid until one returns no forward edges, else use
    // a leaf of the splitting fan
    const store = new GraphStore();
    const fan = await api.expand(splitTxid, 'forward');
    const leafTxid = fan.edges
      .map((e) => e.vertex.txid)
      .find((txid) => txid !== splitTxid);
    expect(leafTxid).toBeDefined();
    expect(summary.graph_vertices).toBeGreaterThan(0);
    store.addVertex(await vertexFromTx(leafTxid!));
    const forward = await api.expand(leafTxid!, 'forward');
    const before = store.nodes.size;
    store.applyExpand(forward);
    expect(store.nodes.size).toBe(before + forward.edges.length);
    expect(store.badge(leafTxid!, 'forward')).toBe(forward.collapsed);
  });

  it('discards stale responses (one in-flight expand per vertex)', async () => {
    const store = new GraphStore();
    store.addVertex(await vertexFromTx(splitTxid));
    const staleToken = store.beginExpand(splitTxid);
    const freshToken = store.beginExpand(splitTxid);
    const response = await api.expand(splitTxid, 'forward');
    expect(store.applyExpand(response, staleToken)).toBe(false);
    expect(store.nodes.size).toBe(1);
    expect(store.applyExpand(response, freshToken)).toBe(true);
    expect(store.nodes.size).toBe(1 + response.edges.length);
  });

  it('refuses expansions for vertices the API never returned', () => {
    const store = new GraphStore();
    const fake: ExpandResponse = {
      txid: 'f'.repeat(64), direction: 'forward', edges: [], collapsed: 0,
    };
    expect(store.applyExpand(fake)).toBe(false);
    expect(store.expanded.size).toBe(0);
  });
});

describe('collapsed badges', () => {
  it('equal the API collapsed counts at any threshold', async () => {
    const store = new GraphStore();
    store.addVertex(await vertexFromTx(splitTxid));
    const all = await api.expand(splitTxid, 'forward', null, 0);
    const none = await api.expand(splitTxid, 'forward', null, 10 ** 12);
    expect(none.edges.length).toBe(0);
    expect(none.collapsed).toBe(all.edges.length + all.collapsed);

    store.applyExpand(none);
    expect(store.badge(splitTxid, 'forward')).toBe(none.collapsed);
    store.applyExpand(all);
    expect(store.badge(splitTxid, 'forward')).toBe(all.collapsed);
    const backward = await api.expand(splitTxid, 'backward');
    store.applyExpand(backward);
    expect(store.badgeTotal(splitTxid)).toBe(all.collapsed + backward.collapsed);
  });
});

describe('label filter and threshold', () => {
  async function populatedStore(): Promise<GraphStore> {
    const store = new GraphStore();
    for (const txid of [splitTxid, ...peelPath.slice(0, 3)]) {
      store.addVertex(await vertexFromTx(txid));
      for (const direction of ['forward', 'backward'] as const) {
        store.applyExpand(await api.expand(txid, direction));
      }
    }
    return store;
  }

  it('hides every non-matching edge when a label is selected', async () => {
    const store = await populatedStore();
    const allEdges = store.visibleEdges();
    expect(allEdges.length).toBeGreaterThan(0);
    for (const label of ['RED', 'BLUE']) {
      store.setLabelFilter(label);
      const visible = store.visibleEdges();
      for (const edge of visible) {
        expect(totalTaint(edge.tainted, label)).toBeGreaterThan(0);
      }
      const matching = allEdges.filter((e) => totalTaint(e.tainted, label) > 0);
      expect(visible.length).toBe(matching.length);
    }
  });

  it('never discards expansion state on filter or threshold changes', async () => {
    const store = await populatedStore();
    const nodes = store.nodes.size;
    const edges = store.edges.size;
    const expanded = new Set(store.expanded);

    store.setLabelFilter('BLUE');
    store.setMinSats(10_000);
    expect(store.nodes.size).toBe(nodes);
    expect(store.edges.size).toBe(edges);
    expect(store.expanded).toEqual(expanded);

    store.setLabelFilter(null);
    store.setMinSats(0);
    expect(store.visibleEdges().length).toBe(edges);
    expect(store.nodes.size).toBe(nodes);
  });
});

describe('peeling-chain exploration', () => {
  it('following the larger branch reproduces the detected path', async () => {
    const store = new GraphStore();
    store.addVertex(await vertexFromTx(peelPath[0]!));
    let current = peelPath[0]!;
    const walked = [current];
    while (walked.length < peelPath.length) {
      const response = await api.expand(current, 'forward');
      expect(store.applyExpand(response)).toBe(true);
      const next = response.edges.reduce((best, edge) =>
        edge.value > best.value ? edge : best);
      current = next.to_txid;
      walked.push(current);
    }
    expect(walked).toEqual(peelPath);
    expect(walked.length).toBeGreaterThanOrEqual(4);
    for (const txid of walked.slice(0, -1)) {
      expect(store.expanded.has(txid)).toBe(true);
    }
  });
});
