/** Map layers: grid cells, drive markers, route polylines, facilities.
 *
 * Layer building is pure data -> data so it can be tested without a DOM;
 * rendering emits an SVG string. With no basemap tile URL configured the
 * grid renders on a plain background (offline fallback).
 */

import type { AllocationPayload, GridSpec, InstanceFull } from "./types.js";

export interface MapLayers {
  width: number;
  height: number;
  cells: { x: number; y: number; w: number; h: number }[];
  driveMarkers: { x: number; y: number; size: number; label: string; highlight?: boolean }[];
  routeLines: { points: [number, number][]; label: string; highlight?: boolean }[];
  centerMarkers: { x: number; y: number; label: string }[];
  depotMarkers: { x: number; y: number; label: string }[];
  tileUrl: string | null;
}

const WIDTH = 640;
const HEIGHT = 640;

function projector(grid: GridSpec) {
  const dLat = Math.max(grid.lat_max - grid.lat_min, 1e-9);
  const dLon = Math.max(grid.lon_max - grid.lon_min, 1e-9);
  return (lat: number, lon: number): [number, number] => [
    ((lon - grid.lon_min) / dLon) * WIDTH,
    HEIGHT - ((lat - grid.lat_min) / dLat) * HEIGHT,
  ];
}

function gridShape(grid: GridSpec): { rows: number; cols: number } {
  const kmPerLat = 110.574;
  const kmPerLon = 111.32 * Math.cos(((grid.lat_min + grid.lat_max) / 2) * Math.PI / 180);
  const rows = Math.max(1, Math.ceil(((grid.lat_max - grid.lat_min) * kmPerLat) / grid.cell_size_km));
  const cols = Math.max(1, Math.ceil(((grid.lon_max - grid.lon_min) * kmPerLon) / grid.cell_size_km));
  return { rows, cols };
}

export function cellCenter(grid: GridSpec, cell: number): [number, number] {
  const { rows, cols } = gridShape(grid);
  const r = Math.floor(cell / cols);
  const c = cell % cols;
  const lat = grid.lat_min + ((r + 0.5) * (grid.lat_max - grid.lat_min)) / rows;
  const lon = grid.lon_min + ((c + 0.5) * (grid.lon_max - grid.lon_min)) / cols;
  return [lat, lon];
}

export function buildLayers(
  instance: InstanceFull,
  allocation: AllocationPayload | null,
  tileUrl: string | null = null,
  highlightDrives: Set<string> = new Set(),
  highlightRoutes: Set<string> = new Set(),
): MapLayers {
  const grid = instance.grid;
  const project = projector(grid);
  const { rows, cols } = gridShape(grid);

  const cells = [];
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      cells.push({
        x: (c * WIDTH) / cols,
        y: HEIGHT - ((r + 1) * HEIGHT) / rows,
        w: WIDTH / cols,
        h: HEIGHT / rows,
      });
    }
  }

  const driveMarkers = (allocation?.drives ?? []).map((d) => {
    const [lat, lon] = cellCenter(grid, d.cell);
    const [x, y] = project(lat, lon);
    const key = `cell ${d.cell} / day ${d.day}`;
    return {
      x, y,
      size: 6 + Math.min(10, d.mothers.length / 10),
      label: `drive ${key}: ${d.mothers.length} mothers`,
      highlight: highlightDrives.has(key) || undefined,
    };
  });

  const routeLines = (allocation?.routes ?? [])
    .filter((r) => r.nodes && r.nodes.length >= 2)
    .map((r) => {
      const key = `day ${r.day} / bus ${r.bus} / route ${r.route_id}`;
      return {
        points: r.nodes!.map((n) => project(n.lat, n.lon)),
        label: `route ${key}: ${r.mothers.length} pickups`,
        highlight: highlightRoutes.has(key) || undefined,
      };
    });

  return {
    width: WIDTH,
    height: HEIGHT,
    cells,
    driveMarkers,
    routeLines,
    centerMarkers: instance.centers.map((c) => {
      const [x, y] = project(c.lat, c.lon);
      return { x, y, label: `center ${c.id}` };
    }),
    depotMarkers: instance.depots.map((d) => {
      const [x, y] = project(d.lat, d.lon);
      return { x, y, label: `depot ${d.id}` };
    }),
    tileUrl,
  };
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderSvg(layers: MapLayers): string {
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${layers.width} ${layers.height}" class="map">`,
  );
  if (layers.tileUrl) {
    parts.push(`<image href="${esc(layers.tileUrl)}" x="0" y="0" width="${layers.width}" height="${layers.height}" opacity="0.85"/>`);
  } else {
    parts.push(`<rect x="0" y="0" width="${layers.width}" height="${layers.height}" class="map-bg"/>`);
  }
  for (const cell of layers.cells) {
    parts.push(`<rect x="${cell.x.toFixed(1)}" y="${cell.y.toFixed(1)}" width="${cell.w.toFixed(1)}" height="${cell.h.toFixed(1)}" class="cell"/>`);
  }
  for (const line of layers.routeLines) {
    const pts = line.points.map(([x, y]) => `${x.toFixed(1)},${y.toFixed(1)}`).join(" ");
    const cls = line.highlight ? "route highlight" : "route";
    parts.push(`<polyline points="${pts}" class="${cls}"><title>${esc(line.label)}</title></polyline>`);
  }
  for (const m of layers.driveMarkers) {
    const cls = m.highlight ? "drive highlight" : "drive";
    parts.push(`<circle cx="${m.x.toFixed(1)}" cy="${m.y.toFixed(1)}" r="${m.size.toFixed(1)}" class="${cls}"><title>${esc(m.label)}</title></circle>`);
  }
  for (const c of layers.centerMarkers) {
    parts.push(`<rect x="${(c.x - 5).toFixed(1)}" y="${(c.y - 5).toFixed(1)}" width="10" height="10" class="center"><title>${esc(c.label)}</title></rect>`);
  }
  for (const d of layers.depotMarkers) {
    parts.push(`<path d="M ${d.x.toFixed(1)} ${(d.y - 6).toFixed(1)} l 6 10 l -12 0 z" class="depot"><title>${esc(d.label)}</title></path>`);
  }
  parts.push("</svg>");
  return parts.join("");
}
