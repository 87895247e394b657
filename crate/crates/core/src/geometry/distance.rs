//! Geodesic distance on the model geometries.
//!
//! Sphere and flat torus distances are closed form. On the conformal torus
//! the distance is the shortest path on the 8-neighbour grid graph whose edge
//! weights are the metric lengths of the edges.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{GeometryKind, MetricParams, MetricState, ScalarField};
use crate::error::Result;

fn wrap(delta: f64, length: f64) -> f64 {
    delta - length * (delta / length).round()
}

pub fn geodesic_distance(m: &MetricState, x: &[f64], y: &[f64]) -> Result<f64> {
    let g = m.geometry();
    Ok(match m.params() {
        MetricParams::Sphere { r2 } => r2.sqrt() * (x[0] - y[0]).abs(),
        MetricParams::Flat { coeffs } => coeffs
            .iter()
            .enumerate()
            .map(|(a, c)| c * wrap(x[a] - y[a], g.lengths()[a]).powi(2))
            .sum::<f64>()
            .sqrt(),
        MetricParams::Conformal { .. } => {
            let source = g.nearest_node(x);
            let target = g.nearest_node(y);
            dijkstra(m, source).dist[target]
        }
    })
}

/// Distance from `p` to every grid node.
pub fn distance_field(m: &MetricState, p: &[f64]) -> ScalarField {
    let g = m.geometry();
    let values = match m.params() {
        MetricParams::Conformal { .. } => dijkstra(m, g.nearest_node(p)).dist,
        _ => (0..g.node_count())
            .map(|i| geodesic_distance(m, &g.node_coords(i), p).unwrap_or(f64::NAN))
            .collect(),
    };
    ScalarField::from_parts(g.clone(), values)
}

/// A sampled minimizing path between two points.
#[derive(Debug, Clone)]
pub struct GraphPath {
    /// Coordinate points along the path, unwrapped so consecutive points are
    /// adjacent in the universal cover.
    pub points: Vec<Vec<f64>>,
    pub length: f64,
}

/// Minimizing geodesic from `x` to `y`, sampled at grid resolution.
pub fn geodesic_path(m: &MetricState, x: &[f64], y: &[f64]) -> Result<GraphPath> {
    let g = m.geometry();
    let length = geodesic_distance(m, x, y)?;
    let points = match m.params() {
        MetricParams::Conformal { .. } => {
            let source = g.nearest_node(x);
            let target = g.nearest_node(y);
            let tree = dijkstra(m, source);
            let mut chain = vec![target];
            let mut cur = target;
            while cur != source {
                cur = tree.pred[cur];
                chain.push(cur);
            }
            chain.reverse();
            let mut pts: Vec<Vec<f64>> = Vec::with_capacity(chain.len());
            for node in chain {
                let mut c = g.node_coords(node);
                if let Some(prev) = pts.last() {
                    for a in 0..2 {
                        c[a] = prev[a] + wrap(c[a] - prev[a], g.lengths()[a]);
                    }
                }
                pts.push(c);
            }
            pts
        }
        _ => {
            let steps = (g.sizes().iter().max().copied().unwrap_or(8)).max(8);
            let delta: Vec<f64> = (0..x.len())
                .map(|a| {
                    if g.is_periodic() {
                        wrap(y[a] - x[a], g.lengths()[a])
                    } else {
                        y[a] - x[a]
                    }
                })
                .collect();
            (0..=steps)
                .map(|k| {
                    let s = k as f64 / steps as f64;
                    x.iter().zip(&delta).map(|(xa, d)| xa + s * d).collect()
                })
                .collect()
        }
    };
    Ok(GraphPath { points, length })
}

/// Whether `x` lies within `cells` grid cells of the cut locus of `p`.
pub fn near_cut_locus(m: &MetricState, x: &[f64], p: &[f64], cells: f64) -> bool {
    let g = m.geometry();
    match g.kind() {
        GeometryKind::Sphere => (x[0] - p[0]).abs() > std::f64::consts::PI - cells * g.h(),
        _ => (0..g.axes()).any(|a| {
            let l = g.lengths()[a];
            let d = wrap(x[a] - p[a], l).abs();
            (0.5 * l - d).abs() < cells * g.spacing()[a]
        }),
    }
}

#[derive(Clone, Copy)]
struct Entry {
    dist: f64,
    node: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.dist.total_cmp(&other.dist) == Ordering::Equal && self.node == other.node
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance; ties broken by node for determinism.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

struct ShortestPathTree {
    dist: Vec<f64>,
    pred: Vec<usize>,
}

fn dijkstra(m: &MetricState, source: usize) -> ShortestPathTree {
    let g = m.geometry();
    let phi = match m.params() {
        MetricParams::Conformal { phi } => phi,
        _ => unreachable!("graph distance is only used on the conformal torus"),
    };
    let n = g.node_count();
    let scale: Vec<f64> = phi.iter().map(|p| p.exp()).collect();
    let (hx, hy) = (g.spacing()[0], g.spacing()[1]);
    let diag = (hx * hx + hy * hy).sqrt();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    pred[source] = source;
    heap.push(Entry {
        dist: 0.0,
        node: source,
    });
    while let Some(Entry { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        let (xp, xm) = (g.plus(0)[node], g.minus(0)[node]);
        let neighbours = [
            (xp, hx),
            (xm, hx),
            (g.plus(1)[node], hy),
            (g.minus(1)[node], hy),
            (g.plus(1)[xp], diag),
            (g.minus(1)[xp], diag),
            (g.plus(1)[xm], diag),
            (g.minus(1)[xm], diag),
        ];
        for (next, len) in neighbours {
            let w = len * 0.5 * (scale[node] + scale[next]);
            let cand = d + w;
            if cand < dist[next] {
                dist[next] = cand;
                pred[next] = node;
                heap.push(Entry {
                    dist: cand,
                    node: next,
                });
            }
        }
    }
    ShortestPathTree { dist, pred }
}
