import * as d3 from 'd3';

import type { GraphStore } from './state';
import type { EdgeDoc, VertexCore } from './types';
import { parseProportion, totalTaint } from './types';

export interface RenderCallbacks {
  onVertexClick(txid: string): void;
  onVertexHover(vertex: VertexCore | null): void;
}

interface SimNode extends d3.SimulationNodeDatum {
  id: string;
  vertex: VertexCore;
  order: number;
}

interface SimLink extends d3.SimulationLinkDatum<SimNode> {
  edge: EdgeDoc;
}

const RADIUS = 14;
const COLUMN_SPACING = 110;
const FALLBACK_COLOR = '#888888';

/**
 * Incremental force-directed renderer. Layout is seeded left-to-right by
 * expansion order (chronological columns were dropped deliberately); block
 * details appear in a hint box on hover instead.
 */
export class GraphRenderer {
  private positions = new Map<string, { x: number; y: number }>();

  constructor(
    private readonly svg: SVGSVGElement,
    private readonly store: GraphStore,
    private readonly colors: Map<string, string>,
    private readonly callbacks: RenderCallbacks,
    private readonly ticks = 120,
  ) {}

  color(label: string): string {
    return this.colors.get(label) ?? FALLBACK_COLOR;
  }

  edgeColor(edge: EdgeDoc): string {
    if (this.store.labelFilter !== null) return this.color(this.store.labelFilter);
    let best: string | null = null;
    let bestMass = -1;
    for (const label of Object.keys(edge.tainted).sort()) {
      const mass = edge.tainted[label] ?? 0;
      if (mass > bestMass) {
        best = label;
        bestMass = mass;
      }
    }
    return best === null ? FALLBACK_COLOR : this.color(best);
  }

  /** Stroke width proportional to the hop's satoshi proportion. */
  edgeWidth(edge: EdgeDoc): number {
    return 1 + 5 * parseProportion(edge.proportion);
  }

  render(): void {
    const width = Number(this.svg.getAttribute('width') ?? 960);
    const height = Number(this.svg.getAttribute('height') ?? 600);
    const nodesData: SimNode[] = this.store.visibleNodes().map(({ vertex, order }) => {
      const kept = this.positions.get(vertex.txid);
      return {
        id: vertex.txid,
        vertex,
        order,
        x: kept?.x ?? 60 + order * COLUMN_SPACING,
        y: kept?.y ?? height / 2 + ((order * 97) % 120) - 60,
      };
    });
    const byId = new Map(nodesData.map((node) => [node.id, node]));
    const linksData: SimLink[] = this.store
      .visibleEdges()
      .filter((edge) => byId.has(edge.from_txid) && byId.has(edge.to_txid))
      .map((edge) => ({ source: edge.from_txid, target: edge.to_txid, edge }));

    const simulation = d3
      .forceSimulation(nodesData)
      .force('link', d3.forceLink<SimNode, SimLink>(linksData).id((d) => d.id).distance(90))
      .force('charge', d3.forceManyBody().strength(-180))
      .force('x', d3.forceX<SimNode>((d) => 60 + d.order * COLUMN_SPACING).strength(0.2))
      .force('y', d3.forceY(height / 2).strength(0.05))
      .stop();
    for (let i = 0; i < this.ticks; i++) simulation.tick();
    for (const node of nodesData) {
      this.positions.set(node.id, { x: node.x ?? 0, y: node.y ?? 0 });
    }

    const root = d3.select(this.svg);
    root.selectAll('*').remove();

    root
      .append('g')
      .attr('class', 'edges')
      .selectAll('line')
      .data(linksData)
      .join('line')
      .attr('class', 'edge')
      .attr('data-from', (d) => d.edge.from_txid)
      .attr('data-to', (d) => d.edge.to_txid)
      .attr('x1', (d) => (d.source as SimNode).x ?? 0)
      .attr('y1', (d) => (d.source as SimNode).y ?? 0)
      .attr('x2', (d) => (d.target as SimNode).x ?? 0)
      .attr('y2', (d) => (d.target as SimNode).y ?? 0)
      .attr('stroke', (d) => this.edgeColor(d.edge))
      .attr('stroke-width', (d) => this.edgeWidth(d.edge))
      .attr('stroke-opacity', 0.65);

    const groups = root
      .append('g')
      .attr('class', 'vertices')
      .selectAll('g')
      .data(nodesData)
      .join('g')
      .attr('class', 'vertex')
      .attr('data-txid', (d) => d.id)
      .attr('transform', (d) => `translate(${d.x ?? 0},${d.y ?? 0})`);

    groups.each((d, i, elements) => {
      const group = d3.select(elements[i] as SVGGElement);
      this.drawVertexBody(group, d.vertex);
    });

    groups
      .append('circle')
      .attr('class', 'hit')
      .attr('r', RADIUS)
      .attr('fill', 'transparent')
      .on('click', (_event, d) => this.callbacks.onVertexClick(d.id))
      .on('mouseenter', (_event, d) => this.callbacks.onVertexHover(d.vertex))
      .on('mouseleave', () => this.callbacks.onVertexHover(null));

    const badged = groups.filter((d) => this.store.badgeTotal(d.id) !== undefined);
    badged
      .append('circle')
      .attr('class', 'badge-bg')
      .attr('cx', RADIUS)
      .attr('cy', -RADIUS)
      .attr('r', 8)
      .attr('fill', '#31313a');
    badged
      .append('text')
      .attr('class', 'badge')
      .attr('x', RADIUS)
      .attr('y', -RADIUS + 3)
      .attr('text-anchor', 'middle')
      .attr('font-size', 9)
      .attr('fill', '#ffffff')
      .text((d) => String(this.store.badgeTotal(d.id)));
  }

  /** Single color for a filtered or single-label vertex; a pie of per-label
   * masses when several labels are present and no filter is active. */
  private drawVertexBody(group: d3.Selection<SVGGElement, unknown, null, undefined>,
                         vertex: VertexCore): void {
    const filter = this.store.labelFilter;
    const mass = vertex.tainted_out;
    const labels = Object.keys(mass).sort();
    if (filter !== null || labels.length <= 1) {
      const label = filter ?? labels[0];
      const fill =
        label !== undefined && totalTaint(mass, label) > 0
          ? this.color(label)
          : '#d0d0d0';
      group.append('circle').attr('class', 'body').attr('r', RADIUS).attr('fill', fill);
      return;
    }
    const pie = d3.pie<string>().value((label) => mass[label] ?? 0).sort(d3.ascending);
    const arc = d3.arc<d3.PieArcDatum<string>>().innerRadius(0).outerRadius(RADIUS);
    group
      .append('g')
      .attr('class', 'body pie')
      .selectAll('path')
      .data(pie(labels))
      .join('path')
      .attr('class', 'pie-slice')
      .attr('data-label', (d) => d.data)
      .attr('d', (d) => arc(d))
      .attr('fill', (d) => this.color(d.data));
  }
}
