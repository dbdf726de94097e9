import { ApiClient, ApiError } from './api';
import { GraphRenderer } from './graph';
import { GraphStore } from './state';
import { renderTrace } from './trace';
import type { VertexCore } from './types';

export interface Explorer {
  store: GraphStore;
  api: ApiClient;
  ready: Promise<void>;
  loadSeed(txid: string): Promise<void>;
  expandVertex(txid: string): Promise<void>;
  runTrace(txid: string, vout: number, from: number, to: number): Promise<void>;
}

function el<T extends HTMLElement>(doc: Document, id: string): T {
  const found = doc.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

/** Wire the explorer against the DOM; returns handles the tests drive. */
export function initExplorer(doc: Document, apiUrl?: string): Explorer {
  const store = new GraphStore();
  let api = new ApiClient(
    apiUrl ?? el<HTMLInputElement>(doc, 'api-url').value,
  );
  let renderer: GraphRenderer | null = null;

  const banner = el<HTMLDivElement>(doc, 'banner');
  const hintBox = el<HTMLDivElement>(doc, 'hint-box');
  const labelSelect = el<HTMLSelectElement>(doc, 'label-select');
  const thresholdInput = el<HTMLInputElement>(doc, 'threshold');
  const tracePanel = el<HTMLDivElement>(doc, 'trace-panel');
  const canvas = doc.getElementById('canvas') as unknown as SVGSVGElement;

  function showError(message: string): void {
    banner.textContent = message;
    banner.hidden = false;
  }

  function clearError(): void {
    banner.hidden = true;
    banner.textContent = '';
  }

  function fail(err: unknown): void {
    showError(err instanceof ApiError ? err.message : String(err));
  }

  function rerender(): void {
    renderer?.render();
  }

  function showHint(vertex: VertexCore | null): void {
    if (vertex === null) {
      hintBox.hidden = true;
      return;
    }
    hintBox.hidden = false;
    hintBox.textContent = '';
    const rows: Array<[string, string]> = [
      ['txid', vertex.txid],
      ['block height', String(vertex.height)],
      ['block hash', vertex.block_hash],
      ['class', vertex.tx_class ?? '-'],
      ['tainted out', Object.entries(vertex.tainted_out)
        .map(([label, sats]) => `${label}: ${sats}`)
        .join(', ') || 'none'],
    ];
    for (const [key, value] of rows) {
      const row = doc.createElement('div');
      const name = doc.createElement('b');
      name.textContent = `${key}: `;
      row.append(name, value);
      hintBox.append(row);
    }
  }

  async function expandVertex(txid: string): Promise<void> {
    clearError();
    try {
      // the server applies the threshold and reports the collapsed count
      for (const direction of ['forward', 'backward'] as const) {
        const token = store.beginExpand(txid);
        const response = await api.expand(txid, direction, store.labelFilter,
                                          store.minSats);
        store.applyExpand(response, token);
      }
      rerender();
    } catch (err) {
      fail(err);
    }
  }

  async function loadSeed(txid: string): Promise<void> {
    clearError();
    try {
      const tx = await api.tx(txid);
      store.addVertex({
        txid: tx.txid,
        height: tx.height,
        block_hash: tx.block_hash,
        tx_class: tx.tx_class,
        tainted_out: tx.tainted_out,
      });
      if (!tx.in_graph) {
        showError('transaction carries no taint; nothing to explore');
        rerender();
        return;
      }
      await expandVertex(txid);
    } catch (err) {
      fail(err);
    }
  }

  async function loadLabels(): Promise<void> {
    const labels = await api.labels();
    const colors = new Map(labels.map(({ label, color }) => [label, color]));
    renderer = new GraphRenderer(canvas, store, colors, {
      onVertexClick: (txid) => void expandVertex(txid),
      onVertexHover: showHint,
    });
    labelSelect.textContent = '';
    const all = doc.createElement('option');
    all.value = '';
    all.textContent = 'all labels';
    labelSelect.append(all);
    for (const { label } of labels) {
      const option = doc.createElement('option');
      option.value = label;
      option.textContent = label;
      labelSelect.append(option);
    }
  }

  async function runTrace(txid: string, vout: number, from: number,
                          to: number): Promise<void> {
    clearError();
    try {
      const tree = await api.trace(txid, vout, from, to);
      renderTrace(tracePanel, tree, to - from);
    } catch (err) {
      tracePanel.textContent =
        err instanceof ApiError ? `trace failed: ${err.message}` : String(err);
    }
  }

  const connect = doc.getElementById('connect');
  connect?.addEventListener('click', () => {
    api = new ApiClient(el<HTMLInputElement>(doc, 'api-url').value);
    clearError();
    loadLabels().catch(fail);
  });
  doc.getElementById('load')?.addEventListener('click', () => {
    void loadSeed(el<HTMLInputElement>(doc, 'seed-txid').value.trim());
  });
  labelSelect.addEventListener('change', () => {
    store.setLabelFilter(labelSelect.value === '' ? null : labelSelect.value);
    rerender(); // re-filtering is non-destructive: fetched state is kept
  });
  thresholdInput.addEventListener('change', () => {
    store.setMinSats(Number(thresholdInput.value) || 0);
    rerender();
  });
  doc.getElementById('trace-run')?.addEventListener('click', () => {
    void runTrace(
      el<HTMLInputElement>(doc, 'trace-txid').value.trim(),
      Number(el<HTMLInputElement>(doc, 'trace-vout').value),
      Number(el<HTMLInputElement>(doc, 'trace-from').value),
      Number(el<HTMLInputElement>(doc, 'trace-to').value),
    );
  });

  const ready = loadLabels().catch(fail);
  return {
    store,
    get api() {
      return api;
    },
    ready,
    loadSeed,
    expandVertex,
    runTrace,
  };
}

// browser bootstrap; tests import initExplorer directly instead
if (typeof document !== 'undefined' && document.getElementById('canvas')) {
  initExplorer(document);
}
