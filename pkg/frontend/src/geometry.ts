// 2D polyline helpers shared by the canvas editor and the tests.

export type Pt = [number, number];

export function dist(a: Pt, b: Pt): number {
  return Math.hypot(a[0] - b[0], a[1] - b[1]);
}

export function polylineLength(pts: Pt[]): number {
  let total = 0;
  for (let i = 1; i < pts.length; i++) total += dist(pts[i - 1], pts[i]);
  return total;
}

/** Arc-length fractions of each vertex, mirroring the server's rule for
 * mapping annotation indices onto the resampled waypoint grid. */
export function arcFractions(pts: Pt[]): number[] {
  const out = [0];
  let total = 0;
  for (let i = 1; i < pts.length; i++) {
    total += dist(pts[i - 1], pts[i]);
    out.push(total);
  }
  if (total === 0) return out.map(() => 0);
  return out.map((v) => v / total);
}

/** Uniform arc-length resampling with endpoints preserved; the preview
 * twin of the server's authoritative resampler. */
export function resamplePolyline(pts: Pt[], n: number): Pt[] {
  if (pts.length < 2 || n < 2) throw new Error("need >= 2 points and n >= 2");
  const seg: number[] = [];
  for (let i = 1; i < pts.length; i++) seg.push(dist(pts[i - 1], pts[i]));
  const total = seg.reduce((a, b) => a + b, 0);
  if (total === 0) throw new Error("degenerate stroke");
  const cum = [0];
  for (const s of seg) cum.push(cum[cum.length - 1] + s);

  const out: Pt[] = [pts[0]];
  let k = 0;
  for (let i = 1; i < n - 1; i++) {
    const target = (i * total) / (n - 1);
    while (k < seg.length - 1 && cum[k + 1] < target) k++;
    const t = seg[k] > 0 ? (target - cum[k]) / seg[k] : 0;
    out.push([
      pts[k][0] + t * (pts[k + 1][0] - pts[k][0]),
      pts[k][1] + t * (pts[k + 1][1] - pts[k][1]),
    ]);
  }
  out.push(pts[pts.length - 1]);
  return out;
}

function pointToSegment(p: Pt, a: Pt, b: Pt): number {
  const dx = b[0] - a[0];
  const dy = b[1] - a[1];
  const len2 = dx * dx + dy * dy;
  let t = len2 === 0 ? 0 : ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2;
  t = Math.max(0, Math.min(1, t));
  return Math.hypot(p[0] - (a[0] + t * dx), p[1] - (a[1] + t * dy));
}

export function pointToPolyline(p: Pt, pts: Pt[]): number {
  if (pts.length === 1) return dist(p, pts[0]);
  let best = Infinity;
  for (let i = 1; i < pts.length; i++) {
    best = Math.min(best, pointToSegment(p, pts[i - 1], pts[i]));
  }
  return best;
}

/** Symmetric (discrete-vertex to polyline) Hausdorff distance. */
export function hausdorff(a: Pt[], b: Pt[]): number {
  let worst = 0;
  for (const p of a) worst = Math.max(worst, pointToPolyline(p, b));
  for (const p of b) worst = Math.max(worst, pointToPolyline(p, a));
  return worst;
}

/** Index of the polyline vertex nearest to a point (keypoint picking). */
export function nearestVertex(p: Pt, pts: Pt[]): number {
  let best = 0;
  let bestD = Infinity;
  for (let i = 0; i < pts.length; i++) {
    const d = dist(p, pts[i]);
    if (d < bestD) {
      bestD = d;
      best = i;
    }
  }
  return best;
}
