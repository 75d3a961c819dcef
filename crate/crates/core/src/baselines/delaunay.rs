//! Delaunay triangulation (incremental Bowyer-Watson) and barycentric
//! interpolation of scattered 2-D data.
//!
//! Inputs are pre-sorted lexicographically so cocircular tie-breaking by
//! insertion order is reproducible.

use serde::{Deserialize, Serialize};

use crate::data::{NodeLocation, Observation};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Triangulation {
    pub vertices: Vec<[f64; 2]>,
    /// Index triples, counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
    /// Convex hull as vertex index pairs.
    pub hull_edges: Vec<[usize; 2]>,
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn in_circumcircle(tri: [[f64; 2]; 3], p: [f64; 2]) -> bool {
    let [a, b, c] = tri;
    let (ax, ay) = (a[0] - p[0], a[1] - p[1]);
    let (bx, by) = (b[0] - p[0], b[1] - p[1]);
    let (cx, cy) = (c[0] - p[0], c[1] - p[1]);
    let det = (ax * ax + ay * ay) * (bx * cy - cx * by)
        - (bx * bx + by * by) * (ax * cy - cx * ay)
        + (cx * cx + cy * cy) * (ax * by - bx * ay);
    det > 0.0
}

/// Triangulates the given points. Duplicates are rejected, fully collinear
/// inputs produce `DegenerateGeometry`.
pub fn triangulate(points: &[[f64; 2]]) -> Result<Triangulation> {
    if points.len() < 3 {
        return Err(CoreError::DegenerateGeometry(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .partial_cmp(&points[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for w in order.windows(2) {
        if points[w[0]] == points[w[1]] {
            return Err(CoreError::DegenerateGeometry(format!(
                "duplicate point {:?}",
                points[w[0]]
            )));
        }
    }

    // Super-triangle comfortably containing everything.
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min_x = min_x.min(p[0]);
        max_x = max_x.max(p[0]);
        min_y = min_y.min(p[1]);
        max_y = max_y.max(p[1]);
    }
    let span = (max_x - min_x).max(max_y - min_y).max(1e-9);
    let cx = 0.5 * (min_x + max_x);
    let cy = 0.5 * (min_y + max_y);
    let n = points.len();
    let mut verts: Vec<[f64; 2]> = points.to_vec();
    verts.push([cx - 30.0 * span, cy - span]);
    verts.push([cx + 30.0 * span, cy - span]);
    verts.push([cx, cy + 30.0 * span]);
    let (s0, s1, s2) = (n, n + 1, n + 2);

    let mut tris: Vec<[usize; 3]> = vec![[s0, s1, s2]];
    for &pi in &order {
        let p = verts[pi];
        let mut bad = Vec::new();
        for (t, tri) in tris.iter().enumerate() {
            if in_circumcircle([verts[tri[0]], verts[tri[1]], verts[tri[2]]], p) {
                bad.push(t);
            }
        }
        // Boundary of the cavity: edges belonging to exactly one bad triangle.
        let mut edges: Vec<[usize; 2]> = Vec::new();
        for &t in &bad {
            let tri = tris[t];
            for e in [[tri[0], tri[1]], [tri[1], tri[2]], [tri[2], tri[0]]] {
                let rev = [e[1], e[0]];
                if let Some(pos) = edges.iter().position(|&x| x == rev || x == e) {
                    edges.remove(pos);
                } else {
                    edges.push(e);
                }
            }
        }
        for &t in bad.iter().rev() {
            tris.remove(t);
        }
        for e in edges {
            let mut tri = [e[0], e[1], pi];
            if orient(verts[tri[0]], verts[tri[1]], verts[tri[2]]) < 0.0 {
                tri.swap(0, 1);
            }
            tris.push(tri);
        }
    }
    tris.retain(|t| t.iter().all(|&v| v < n));
    // Drop slivers introduced by near-collinear data.
    tris.retain(|t| orient(verts[t[0]], verts[t[1]], verts[t[2]]).abs() > 1e-12 * span * span);
    if tris.is_empty() {
        return Err(CoreError::DegenerateGeometry("all points collinear".into()));
    }
    let mut hull: Vec<[usize; 2]> = Vec::new();
    for tri in &tris {
        for e in [[tri[0], tri[1]], [tri[1], tri[2]], [tri[2], tri[0]]] {
            let shared = tris
                .iter()
                .filter(|t2| {
                    let mut count = 0;
                    for &v in *t2 {
                        if v == e[0] || v == e[1] {
                            count += 1;
                        }
                    }
                    count == 2
                })
                .count();
            if shared == 1 {
                hull.push(e);
            }
        }
    }
    verts.truncate(n);
    Ok(Triangulation { vertices: verts, triangles: tris, hull_edges: hull })
}

/// Barycentric coordinates of `p` in triangle `t`, or None outside.
fn barycentric(tri: [[f64; 2]; 3], p: [f64; 2]) -> Option<[f64; 3]> {
    let area = orient(tri[0], tri[1], tri[2]);
    if area.abs() < 1e-300 {
        return None;
    }
    let l0 = orient(tri[1], tri[2], p) / area;
    let l1 = orient(tri[2], tri[0], p) / area;
    let l2 = orient(tri[0], tri[1], p) / area;
    let eps = -1e-9;
    if l0 >= eps && l1 >= eps && l2 >= eps {
        Some([l0, l1, l2])
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct InterpolationResult {
    pub values: Vec<f64>,
    /// True where the query fell outside the convex hull and the value is
    /// a nearest-neighbor fallback.
    pub extrapolated: Vec<bool>,
}

/// Piecewise-linear interpolation of a 2-D observation at the query
/// locations. Outside the hull the nearest visible value is used and the
/// query marked as extrapolated.
pub fn linear_interpolate(
    visible: &Observation,
    queries: &[NodeLocation],
) -> Result<InterpolationResult> {
    if visible.len() < 3 {
        return Err(CoreError::DegenerateGeometry(format!(
            "need >= 3 visible points, got {}",
            visible.len()
        )));
    }
    let points: Vec<[f64; 2]> =
        visible.points.iter().map(|(l, _)| [l.coords[0], l.coords[1]]).collect();
    let values: Vec<f64> = visible.points.iter().map(|(_, y)| *y).collect();
    let tri = triangulate(&points)?;
    let mut out = Vec::with_capacity(queries.len());
    let mut extr = Vec::with_capacity(queries.len());
    for q in queries {
        let p = [q.coords[0], q.coords[1]];
        let mut found = None;
        for t in &tri.triangles {
            let corners = [tri.vertices[t[0]], tri.vertices[t[1]], tri.vertices[t[2]]];
            if let Some(l) = barycentric(corners, p) {
                found = Some(l[0] * values[t[0]] + l[1] * values[t[1]] + l[2] * values[t[2]]);
                break;
            }
        }
        match found {
            Some(v) => {
                out.push(v);
                extr.push(false);
            }
            None => {
                // Nearest neighbor outside the hull.
                let (mut best, mut best_d) = (0usize, f64::INFINITY);
                for (i, pt) in points.iter().enumerate() {
                    let d = (pt[0] - p[0]).powi(2) + (pt[1] - p[1]).powi(2);
                    if d < best_d {
                        best_d = d;
                        best = i;
                    }
                }
                out.push(values[best]);
                extr.push(true);
            }
        }
    }
    Ok(InterpolationResult { values: out, extrapolated: extr })
}

/// Convex hull by Andrew's monotone chain, counter-clockwise.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &pt in &pts {
        while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], pt) <= 0.0
        {
            lower.pop();
        }
        lower.push(pt);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &pt in pts.iter().rev() {
        while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], pt) <= 0.0
        {
            upper.pop();
        }
        upper.push(pt);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Convex-hull membership for the flat-extrapolation GP variant.
pub fn inside_hull(points: &[[f64; 2]], p: [f64; 2]) -> bool {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return false;
    }
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        if orient(a, b, p) < -1e-12 {
            return false;
        }
    }
    true
}
