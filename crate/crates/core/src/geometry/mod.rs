//! Trace preprocessing: proximity graph, MST ordering, normalization,
//! resampling, rendering and augmentation.

mod augment;
mod kdtree;
mod raster;

pub use augment::{augment, augment_points, AffineParams};
pub use kdtree::KdTree;
pub use raster::{rasterize, GrayImage, RASTER_LINE_WIDTH, RASTER_MARGIN, RASTER_SIZE};

use crate::ink::{BBox, Point, Trace, TraceId};

/// Default number of resampled points per trace.
pub const DEFAULT_RESAMPLE: usize = 32;

/// Traces with more points than this get a kd-tree for distance queries.
const KD_THRESHOLD: usize = 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("trace {0} is not in the graph")]
    UnknownAnchor(TraceId),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid augmentation parameters: {0}")]
    InvalidParams(String),
}

fn brute_min_dist_sq(a: &[Point], b: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for p in a {
        for q in b {
            best = best.min(p.dist_sq(q));
        }
    }
    best
}

fn min_dist_sq(a: &[Point], b: &[Point], tree_b: Option<&KdTree>) -> f64 {
    match tree_b {
        Some(t) => a
            .iter()
            .map(|p| t.nearest(p).expect("non-empty trace").1)
            .fold(f64::INFINITY, f64::min),
        None => brute_min_dist_sq(a, b),
    }
}

/// Minimum point-to-point Euclidean distance between two traces.
pub fn min_trace_distance(a: &Trace, b: &Trace) -> f64 {
    let (small, large) = if a.points().len() <= b.points().len() {
        (a, b)
    } else {
        (b, a)
    };
    let tree = (large.points().len() > KD_THRESHOLD).then(|| KdTree::new(large.points()));
    min_dist_sq(small.points(), large.points(), tree.as_ref()).sqrt()
}

/// Complete graph over traces weighted by [`min_trace_distance`].
#[derive(Clone, Debug, PartialEq)]
pub struct TraceGraph {
    ids: Vec<TraceId>,
    weights: Vec<f64>,
}

impl TraceGraph {
    /// Builds a graph directly from a symmetric weight matrix (row-major).
    pub fn from_weights(ids: Vec<TraceId>, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), ids.len() * ids.len(), "weight matrix shape");
        TraceGraph { ids, weights }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[TraceId] {
        &self.ids
    }

    pub fn index_of(&self, id: TraceId) -> Option<usize> {
        self.ids.iter().position(|&t| t == id)
    }

    /// Weight between vertex positions `i` and `j`.
    pub fn weight_at(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.ids.len() + j]
    }

    pub fn weight(&self, a: TraceId, b: TraceId) -> Option<f64> {
        Some(self.weight_at(self.index_of(a)?, self.index_of(b)?))
    }

    pub fn edge_count(&self) -> usize {
        self.len() * self.len().saturating_sub(1) / 2
    }
}

pub fn build_trace_graph<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> TraceGraph {
    let traces: Vec<&Trace> = traces.into_iter().collect();
    let n = traces.len();
    let trees: Vec<Option<KdTree>> = traces
        .iter()
        .map(|t| (t.points().len() > KD_THRESHOLD).then(|| KdTree::new(t.points())))
        .collect();
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = if traces[i].points().len() <= traces[j].points().len() {
                (i, j)
            } else {
                (j, i)
            };
            let d = min_dist_sq(traces[a].points(), traces[b].points(), trees[b].as_ref()).sqrt();
            weights[i * n + j] = d;
            weights[j * n + i] = d;
        }
    }
    TraceGraph {
        ids: traces.iter().map(|t| t.id()).collect(),
        weights,
    }
}

/// Vertex positions in Prim attachment order from `root`.
///
/// Dense array Prim, O(|V|²) = O(|E|) on the complete graph. Ties on
/// weight go to the lower vertex position.
pub fn prim_order(graph: &TraceGraph, root: usize) -> Vec<usize> {
    let n = graph.len();
    let mut key = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    key[root] = 0.0;
    for _ in 0..n {
        let mut next = usize::MAX;
        for v in 0..n {
            if !done[v] && (next == usize::MAX || key[v] < key[next]) {
                next = v;
            }
        }
        done[next] = true;
        order.push(next);
        for v in 0..n {
            if !done[v] {
                key[v] = key[v].min(graph.weight_at(next, v));
            }
        }
    }
    order
}

/// The first `min(k, |V|)` trace ids in Prim attachment order from `anchor`.
pub fn mst_sort(
    graph: &TraceGraph,
    anchor: TraceId,
    k: usize,
) -> Result<Vec<TraceId>, GeometryError> {
    if k == 0 {
        return Err(GeometryError::ZeroK);
    }
    let root = graph
        .index_of(anchor)
        .ok_or(GeometryError::UnknownAnchor(anchor))?;
    Ok(prim_order(graph, root)
        .into_iter()
        .take(k)
        .map(|v| graph.ids[v])
        .collect())
}

/// Trace with the largest max-x; later traces win ties.
pub fn rightmost_trace<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> Option<TraceId> {
    let mut best: Option<(f64, TraceId)> = None;
    for t in traces {
        let x = t.max_x();
        if best.is_none_or(|(bx, _)| x >= bx) {
            best = Some((x, t.id()));
        }
    }
    best.map(|(_, id)| id)
}

/// Cumulative arc length at every vertex.
pub fn arc_lengths(points: &[Point]) -> Vec<f64> {
    let mut s = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            acc += points[i - 1].dist(p);
        }
        s.push(acc);
    }
    s
}

/// Resamples a polyline to `m` points equally spaced in arc length by
/// piecewise linear interpolation. A zero-length polyline yields `m` copies
/// of its first point.
pub fn resample(points: &[Point], m: usize) -> Vec<Point> {
    assert!(!points.is_empty(), "resampling an empty polyline");
    let s = arc_lengths(points);
    let total = *s.last().unwrap();
    if m == 0 {
        return Vec::new();
    }
    if total == 0.0 || m == 1 {
        return vec![points[0]; m];
    }
    let mut out = Vec::with_capacity(m);
    let mut k = 0;
    for i in 0..m {
        let si = total * i as f64 / (m - 1) as f64;
        while k + 2 < points.len() && s[k + 1] < si {
            k += 1;
        }
        let span = s[k + 1] - s[k];
        let t = if span > 0.0 {
            ((si - s[k]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (a, b) = (points[k], points[k + 1]);
        out.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
    }
    out[m - 1] = *points.last().unwrap();
    out
}

/// Output of [`normalize_window`].
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedWindow {
    /// One resampled point sequence per input trace, in input order.
    pub traces: Vec<Vec<Point>>,
    /// All input points coincide; every point was mapped to the origin.
    pub degenerate: bool,
}

/// Aligns a window's rightmost point to the origin, scales it into
/// `[0,1]²` preserving aspect ratio (short side centred), then resamples
/// each trace to `m` points.
pub fn normalize_window(traces: &[&Trace], m: usize) -> NormalizedWindow {
    let all: Vec<Point> = traces
        .iter()
        .flat_map(|t| t.points().iter().copied())
        .collect();
    let anchor = all
        .iter()
        .copied()
        .fold(all[0], |best, p| if p.x > best.x { p } else { best });
    let aligned: Vec<Vec<Point>> = traces
        .iter()
        .map(|t| {
            t.points()
                .iter()
                .map(|p| Point::new(p.x - anchor.x, p.y - anchor.y))
                .collect()
        })
        .collect();
    let bbox = BBox::of_points(aligned.iter().flatten()).expect("non-empty window");
    let side = bbox.width().max(bbox.height());
    if side == 0.0 {
        return NormalizedWindow {
            traces: vec![vec![Point::default(); m]; traces.len()],
            degenerate: true,
        };
    }
    let (ox, oy) = (
        0.5 * (1.0 - bbox.width() / side),
        0.5 * (1.0 - bbox.height() / side),
    );
    let scaled = aligned.iter().map(|pts| {
        pts.iter()
            .map(|p| {
                Point::new(
                    (p.x - bbox.min_x) / side + ox,
                    (p.y - bbox.min_y) / side + oy,
                )
            })
            .collect::<Vec<_>>()
    });
    NormalizedWindow {
        traces: scaled.map(|pts| resample(&pts, m)).collect(),
        degenerate: false,
    }
}

/// Convex hull by Andrew's monotone chain, counter-clockwise, without
/// collinear points.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross =
        |o: &Point, a: &Point, b: &Point| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Orientation in `(-π/2, π/2]` of the principal axis of `points`, or
/// `None` when the spread is isotropic.
pub fn principal_angle(points: &[Point]) -> Option<f64> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - mx, p.y - my);
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    }
    let aniso = (cxx - cyy).powi(2) + 4.0 * cxy * cxy;
    if aniso <= 1e-18 * (cxx + cyy).powi(2) || cxx + cyy == 0.0 {
        return None;
    }
    Some(0.5 * (2.0 * cxy).atan2(cxx - cyy))
}

/// Centres a symbol on its point centroid, rotates the principal axis of
/// its convex hull to horizontal and scales the longest bounding-box side
/// to 1. Degenerate input is only centred.
pub fn spatial_normalize_symbol(traces: &[Vec<Point>]) -> Vec<Vec<Point>> {
    let all: Vec<Point> = traces.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let cx = all.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = all.iter().map(|p| p.y).sum::<f64>() / n;
    let centred: Vec<Vec<Point>> = traces
        .iter()
        .map(|t| t.iter().map(|p| Point::new(p.x - cx, p.y - cy)).collect())
        .collect();
    let bbox = BBox::of_points(centred.iter().flatten()).expect("non-empty symbol");
    if bbox.width().max(bbox.height()) == 0.0 {
        return centred;
    }
    let hull = convex_hull(&centred.iter().flatten().copied().collect::<Vec<_>>());
    let theta = principal_angle(&hull).unwrap_or(0.0);
    let (s, c) = (-theta).sin_cos();
    let rotated: Vec<Vec<Point>> = centred
        .iter()
        .map(|t| {
            t.iter()
                .map(|p| Point::new(c * p.x - s * p.y, s * p.x + c * p.y))
                .collect()
        })
        .collect();
    let rb = BBox::of_points(rotated.iter().flatten()).unwrap();
    let side = rb.width().max(rb.height());
    rotated
        .into_iter()
        .map(|t| {
            t.into_iter()
                .map(|p| Point::new(p.x / side, p.y / side))
                .collect()
        })
        .collect()
}
