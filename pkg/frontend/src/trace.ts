import type { TraceNode } from './types';

/** Sum of leaf interval lengths, iterative because traces can be deep. */
export function sumLeaves(root: TraceNode): number {
  let total = 0;
  const stack: TraceNode[] = [root];
  while (stack.length > 0) {
    const node = stack.pop() as TraceNode;
    if (node.terminal !== null || node.children.length === 0) {
      total += node.end - node.start;
    } else {
      stack.push(...node.children);
    }
  }
  return total;
}

function short(txid: string): string {
  return `${txid.slice(0, 8)}…`;
}

function summaryText(node: TraceNode): string {
  return `${short(node.txid)}:${node.vout} [${node.start}, ${node.end})`;
}

function terminalBadge(doc: Document, node: TraceNode): HTMLElement | null {
  if (node.terminal === null) return null;
  const badge = doc.createElement('span');
  if (node.terminal.kind === 'coinbase') {
    badge.className = 'badge coinbase';
    badge.textContent = `coinbase @ ${node.terminal.height}`;
  } else {
    badge.className = 'badge taint-event';
    badge.dataset.label = node.terminal.label;
    badge.textContent = `${node.terminal.label} theft ${short(node.terminal.txid)}`;
  }
  return badge;
}

/**
 * Render a provenance tree as nested <details> elements (collapsible without
 * any script), with terminal badges on the leaves and a leaf-sum check line.
 * Built iteratively; provenance trees can exceed the call stack.
 */
export function renderTrace(container: HTMLElement, root: TraceNode,
                            queryLength: number): void {
  const doc = container.ownerDocument;
  container.textContent = '';

  const buildShell = (node: TraceNode): HTMLElement => {
    if (node.children.length === 0) {
      const leaf = doc.createElement('div');
      leaf.className = 'trace-leaf';
      leaf.dataset.length = String(node.end - node.start);
      leaf.append(summaryText(node));
      const badge = terminalBadge(doc, node);
      if (badge) leaf.append(' ', badge);
      return leaf;
    }
    const details = doc.createElement('details');
    details.className = 'trace-node';
    details.open = true;
    const summary = doc.createElement('summary');
    summary.textContent = summaryText(node);
    details.append(summary);
    return details;
  };

  const rootEl = buildShell(root);
  const stack: Array<{ node: TraceNode; el: HTMLElement }> = [{ node: root, el: rootEl }];
  while (stack.length > 0) {
    const { node, el } = stack.pop() as { node: TraceNode; el: HTMLElement };
    for (const child of node.children) {
      const childEl = buildShell(child);
      el.append(childEl);
      if (child.children.length > 0) {
        stack.push({ node: child, el: childEl });
      }
    }
  }

  const sum = sumLeaves(root);
  const check = doc.createElement('div');
  check.className = sum === queryLength ? 'trace-sum ok' : 'trace-sum mismatch';
  check.dataset.sum = String(sum);
  check.dataset.expected = String(queryLength);
  check.textContent =
    sum === queryLength
      ? `leaf intervals sum to ${sum} = query length`
      : `leaf intervals sum to ${sum}, expected ${queryLength}`;
  container.append(check, rootEl);
}
