//! Model geometries, metric states and scalar fields on their grids.
//!
//! Three families are supported:
//!
//! * a round sphere `S^n` of radius `r`, reduced to rotationally symmetric
//!   fields `f(θ)` sampled on a half-cell offset polar grid that excludes the
//!   poles;
//! * a flat torus `T^n` with a constant diagonal metric;
//! * a 2-D torus carrying a conformally flat metric `g = e^{2φ}(dx² + dy²)`.
//!
//! Every metric in these families is pointwise Einstein, `Ric = κ(x) g`, which
//! is what lets the tensor contractions in [`ops`] stay scalar.

mod csv;
mod distance;
mod ops;

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{LabError, Result};

pub use csv::{read_field_csv, write_field_csv};
pub use distance::{distance_field, geodesic_distance, geodesic_path, near_cut_locus, GraphPath};
pub use ops::{
    flat_laplacian, grad_inner, grad_norm_sq, integrate, jet, laplace_beltrami, ricci_factor,
    scalar_curvature, volume, volume_weights, Jet,
};

pub const MIN_GRID: usize = 8;

/// Declarative description of a model manifold and its discretization.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelGeometry {
    RoundSphere {
        dim: usize,
        radius: f64,
        nodes: usize,
    },
    FlatTorus {
        lengths: Vec<f64>,
        sizes: Vec<usize>,
    },
    ConformalTorus2D {
        lengths: [f64; 2],
        sizes: [usize; 2],
        /// Initial conformal factor, one value per node in row-major order.
        phi0: Vec<f64>,
    },
}

impl ModelGeometry {
    /// Conformal torus whose initial factor is sampled from a closed form.
    pub fn conformal_from_fn(
        lengths: [f64; 2],
        sizes: [usize; 2],
        phi0: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let hx = lengths[0] / sizes[0] as f64;
        let hy = lengths[1] / sizes[1] as f64;
        let mut values = Vec::with_capacity(sizes[0] * sizes[1]);
        for i in 0..sizes[0] {
            for j in 0..sizes[1] {
                values.push(phi0(i as f64 * hx, j as f64 * hy));
            }
        }
        ModelGeometry::ConformalTorus2D {
            lengths,
            sizes,
            phi0: values,
        }
    }

    pub fn square_flat_torus(dim: usize, length: f64, size: usize) -> Self {
        ModelGeometry::FlatTorus {
            lengths: vec![length; dim],
            sizes: vec![size; dim],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Sphere,
    FlatTorus,
    ConformalTorus,
}

/// A model geometry with its grid, quadrature weights and neighbour stencils.
#[derive(Debug, Clone)]
pub struct DiscreteGeometry {
    spec: ModelGeometry,
    kind: GeometryKind,
    dim: usize,
    sizes: Vec<usize>,
    lengths: Vec<f64>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    node_count: usize,
    /// Neighbour index along each grid axis in the positive direction.
    plus: Vec<Vec<usize>>,
    minus: Vec<Vec<usize>>,
    /// Coordinate quadrature weights (without the metric factor).
    base_weights: Vec<f64>,
    /// `cot θ` at the sphere nodes; empty for tori.
    cot: Vec<f64>,
}

pub fn build_geometry(spec: ModelGeometry) -> Result<Arc<DiscreteGeometry>> {
    let (kind, dim, sizes, lengths) = match &spec {
        ModelGeometry::RoundSphere { dim, radius, nodes } => {
            if *dim < 2 {
                return Err(LabError::InvalidGeometry(format!(
                    "sphere dimension must be at least 2, got {dim}"
                )));
            }
            if !(*radius > 0.0) || !radius.is_finite() {
                return Err(LabError::InvalidGeometry(format!(
                    "sphere radius must be positive, got {radius}"
                )));
            }
            (GeometryKind::Sphere, *dim, vec![*nodes], vec![PI])
        }
        ModelGeometry::FlatTorus { lengths, sizes } => {
            if lengths.is_empty() || lengths.len() != sizes.len() {
                return Err(LabError::InvalidGeometry(
                    "flat torus needs one length and one grid size per axis".into(),
                ));
            }
            (
                GeometryKind::FlatTorus,
                lengths.len(),
                sizes.clone(),
                lengths.clone(),
            )
        }
        ModelGeometry::ConformalTorus2D {
            lengths,
            sizes,
            phi0,
        } => {
            if phi0.len() != sizes[0] * sizes[1] {
                return Err(LabError::ShapeMismatch {
                    expected: sizes[0] * sizes[1],
                    found: phi0.len(),
                });
            }
            if phi0.iter().any(|v| !v.is_finite()) {
                return Err(LabError::InvalidGeometry(
                    "initial conformal factor must be finite".into(),
                ));
            }
            (
                GeometryKind::ConformalTorus,
                2,
                sizes.to_vec(),
                lengths.to_vec(),
            )
        }
    };
    if let Some(&s) = sizes.iter().find(|&&s| s < MIN_GRID) {
        return Err(LabError::InvalidGeometry(format!(
            "grid size {s} is below the minimum of {MIN_GRID}"
        )));
    }
    if let Some(&l) = lengths.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
        return Err(LabError::InvalidGeometry(format!(
            "side lengths must be positive, got {l}"
        )));
    }

    let axes = sizes.len();
    let spacing: Vec<f64> = lengths
        .iter()
        .zip(&sizes)
        .map(|(l, &s)| l / s as f64)
        .collect();
    let mut strides = vec![1usize; axes];
    for a in (0..axes.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * sizes[a + 1];
    }
    let node_count: usize = sizes.iter().product();

    let periodic = kind != GeometryKind::Sphere;
    let mut plus = vec![vec![0usize; node_count]; axes];
    let mut minus = vec![vec![0usize; node_count]; axes];
    for i in 0..node_count {
        for a in 0..axes {
            let j = (i / strides[a]) % sizes[a];
            let base = i - j * strides[a];
            let (jp, jm) = if periodic {
                ((j + 1) % sizes[a], (j + sizes[a] - 1) % sizes[a])
            } else {
                // Even reflection through the poles: the ghost node mirrors the
                // boundary node, which encodes f_θ → 0 there.
                ((j + 1).min(sizes[a] - 1), j.saturating_sub(1))
            };
            plus[a][i] = base + jp * strides[a];
            minus[a][i] = base + jm * strides[a];
        }
    }

    let (base_weights, cot) = match kind {
        GeometryKind::Sphere => {
            let h = spacing[0];
            let omega = unit_sphere_area(dim - 1);
            let thetas: Vec<f64> = (0..node_count).map(|j| (j as f64 + 0.5) * h).collect();
            let w = thetas
                .iter()
                .map(|t| omega * t.sin().powi(dim as i32 - 1) * h)
                .collect();
            let cot = thetas.iter().map(|t| t.cos() / t.sin()).collect();
            (w, cot)
        }
        _ => {
            let cell: f64 = spacing.iter().product();
            (vec![cell; node_count], Vec::new())
        }
    };

    Ok(Arc::new(DiscreteGeometry {
        spec,
        kind,
        dim,
        sizes,
        lengths,
        spacing,
        strides,
        node_count,
        plus,
        minus,
        base_weights,
        cot,
    }))
}

/// Area of the unit sphere `S^k ⊂ R^{k+1}`.
pub fn unit_sphere_area(k: usize) -> f64 {
    let half = (k + 1) as f64 / 2.0;
    2.0 * PI.powf(half) / gamma_half_integer(half)
}

fn gamma_half_integer(x: f64) -> f64 {
    // x is a positive integer or half-integer.
    let mut acc = 1.0;
    let mut y = x;
    while y > 1.0 {
        y -= 1.0;
        acc *= y;
    }
    if (y - 0.5).abs() < 1e-12 {
        acc * PI.sqrt()
    } else {
        acc
    }
}

impl DiscreteGeometry {
    pub fn spec(&self) -> &ModelGeometry {
        &self.spec
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    /// Manifold dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of grid axes (1 for the reduced sphere).
    pub fn axes(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Largest grid spacing in coordinate units.
    pub fn h(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn is_periodic(&self) -> bool {
        self.kind != GeometryKind::Sphere
    }

    pub fn plus(&self, axis: usize) -> &[usize] {
        &self.plus[axis]
    }

    pub fn minus(&self, axis: usize) -> &[usize] {
        &self.minus[axis]
    }

    pub fn base_weights(&self) -> &[f64] {
        &self.base_weights
    }

    pub(crate) fn cot(&self) -> &[f64] {
        &self.cot
    }

    pub fn grid_index(&self, node: usize) -> Vec<usize> {
        (0..self.axes())
            .map(|a| (node / self.strides[a]) % self.sizes[a])
            .collect()
    }

    pub fn node_from_index(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(&self.strides)
            .zip(&self.sizes)
            .map(|((j, s), n)| (j % n) * s)
            .sum()
    }

    pub fn coordinate(&self, axis: usize, j: usize) -> f64 {
        match self.kind {
            GeometryKind::Sphere => (j as f64 + 0.5) * self.spacing[axis],
            _ => j as f64 * self.spacing[axis],
        }
    }

    pub fn node_coords(&self, node: usize) -> Vec<f64> {
        self.grid_index(node)
            .into_iter()
            .enumerate()
            .map(|(a, j)| self.coordinate(a, j))
            .collect()
    }

    /// Grid node closest to a coordinate point (wrapping on tori).
    pub fn nearest_node(&self, point: &[f64]) -> usize {
        let index: Vec<usize> = (0..self.axes())
            .map(|a| {
                let h = self.spacing[a];
                let n = self.sizes[a] as i64;
                match self.kind {
                    GeometryKind::Sphere => {
                        let j = (point[a] / h - 0.5).round() as i64;
                        j.clamp(0, n - 1) as usize
                    }
                    _ => ((point[a] / h).round() as i64).rem_euclid(n) as usize,
                }
            })
            .collect();
        self.node_from_index(&index)
    }

    pub fn axis_names(&self) -> Vec<String> {
        match (self.kind, self.axes()) {
            (GeometryKind::Sphere, _) => vec!["theta".into()],
            (_, 1) => vec!["x".into()],
            (_, 2) => vec!["x".into(), "y".into()],
            (_, 3) => vec!["x".into(), "y".into(), "z".into()],
            (_, k) => (0..k).map(|a| format!("x{a}")).collect(),
        }
    }

    /// Samples a closed-form function of the node coordinates.
    pub fn sample(self: &Arc<Self>, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let values = (0..self.node_count)
            .map(|i| f(&self.node_coords(i)))
            .collect();
        ScalarField {
            geometry: Arc::clone(self),
            values,
        }
    }

    pub fn constant(self: &Arc<Self>, c: f64) -> ScalarField {
        ScalarField {
            geometry: Arc::clone(self),
            values: vec![c; self.node_count],
        }
    }

    /// The metric state the model starts from at `t = 0`.
    pub fn initial_metric(self: &Arc<Self>) -> MetricState {
        let params = match &self.spec {
            ModelGeometry::RoundSphere { radius, .. } => MetricParams::Sphere {
                r2: radius * radius,
            },
            ModelGeometry::FlatTorus { lengths, .. } => MetricParams::Flat {
                coeffs: vec![1.0; lengths.len()],
            },
            ModelGeometry::ConformalTorus2D { phi0, .. } => {
                MetricParams::Conformal { phi: phi0.clone() }
            }
        };
        MetricState {
            geometry: Arc::clone(self),
            t: 0.0,
            params,
        }
    }

    /// Interpolates a nodal field at an arbitrary coordinate point:
    /// multilinear with periodic wrap on tori, linear in θ on the sphere.
    pub fn interpolate(&self, values: &[f64], point: &[f64]) -> f64 {
        match self.kind {
            GeometryKind::Sphere => {
                let h = self.spacing[0];
                let n = self.sizes[0];
                let s = point[0] / h - 0.5;
                if s <= 0.0 {
                    return values[0];
                }
                if s >= (n - 1) as f64 {
                    return values[n - 1];
                }
                let j = s.floor() as usize;
                let w = s - j as f64;
                values[j] * (1.0 - w) + values[j + 1] * w
            }
            _ => {
                let axes = self.axes();
                let mut lo = vec![0usize; axes];
                let mut frac = vec![0.0; axes];
                for a in 0..axes {
                    let s = point[a] / self.spacing[a];
                    let fl = s.floor();
                    frac[a] = s - fl;
                    lo[a] = (fl as i64).rem_euclid(self.sizes[a] as i64) as usize;
                }
                let mut acc = 0.0;
                for corner in 0..(1usize << axes) {
                    let mut weight = 1.0;
                    let mut idx = vec![0usize; axes];
                    for a in 0..axes {
                        let up = (corner >> a) & 1 == 1;
                        weight *= if up { frac[a] } else { 1.0 - frac[a] };
                        idx[a] = if up {
                            (lo[a] + 1) % self.sizes[a]
                        } else {
                            lo[a]
                        };
                    }
                    if weight != 0.0 {
                        acc += weight * values[self.node_from_index(&idx)];
                    }
                }
                acc
            }
        }
    }
}

/// Metric parameters of one state of a model geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricParams {
    /// `g = r² g_{S^n}`.
    Sphere { r2: f64 },
    /// `g = Σ c_k dx_k²`.
    Flat { coeffs: Vec<f64> },
    /// `g = e^{2φ}(dx² + dy²)`.
    Conformal { phi: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct MetricState {
    geometry: Arc<DiscreteGeometry>,
    pub t: f64,
    params: MetricParams,
}

impl MetricState {
    pub fn new(geometry: Arc<DiscreteGeometry>, t: f64, params: MetricParams) -> Result<Self> {
        let ok = match (&params, geometry.kind()) {
            (MetricParams::Sphere { r2 }, GeometryKind::Sphere) => *r2 > 0.0 && r2.is_finite(),
            (MetricParams::Flat { coeffs }, GeometryKind::FlatTorus) => {
                coeffs.len() == geometry.axes() && coeffs.iter().all(|c| *c > 0.0 && c.is_finite())
            }
            (MetricParams::Conformal { phi }, GeometryKind::ConformalTorus) => {
                if phi.len() != geometry.node_count() {
                    return Err(LabError::ShapeMismatch {
                        expected: geometry.node_count(),
                        found: phi.len(),
                    });
                }
                phi.iter().all(|p| p.is_finite() && (2.0 * p).exp() > 0.0)
            }
            _ => {
                return Err(LabError::InvalidGeometry(
                    "metric parameters do not match the geometry family".into(),
                ))
            }
        };
        if !ok {
            return Err(LabError::NonPositiveMetric { t });
        }
        Ok(MetricState {
            geometry,
            t,
            params,
        })
    }

    pub fn geometry(&self) -> &Arc<DiscreteGeometry> {
        &self.geometry
    }

    pub fn params(&self) -> &MetricParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    /// Squared metric length of a coordinate displacement `v` at `point`.
    pub fn length_sq_at(&self, point: &[f64], v: &[f64]) -> f64 {
        match &self.params {
            MetricParams::Sphere { r2 } => r2 * v[0] * v[0],
            MetricParams::Flat { coeffs } => coeffs.iter().zip(v).map(|(c, x)| c * x * x).sum(),
            MetricParams::Conformal { phi } => {
                let p = self.geometry.interpolate(phi, point);
                (2.0 * p).exp() * (v[0] * v[0] + v[1] * v[1])
            }
        }
    }

    /// Minimal value over the grid of the metric scale relative to the
    /// coordinate metric (`r²`, `min c_k`, `min e^{2φ}`).
    pub fn min_scale(&self) -> f64 {
        match &self.params {
            MetricParams::Sphere { r2 } => *r2,
            MetricParams::Flat { coeffs } => coeffs.iter().cloned().fold(f64::INFINITY, f64::min),
            MetricParams::Conformal { phi } => phi
                .iter()
                .map(|p| (2.0 * p).exp())
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Largest grid spacing measured in the metric: `max_k h_k √(g_kk)`.
    pub fn metric_spacing(&self) -> f64 {
        let g = &self.geometry;
        match &self.params {
            MetricParams::Sphere { r2 } => g.h() * r2.sqrt(),
            MetricParams::Flat { coeffs } => g
                .spacing()
                .iter()
                .zip(coeffs)
                .map(|(h, c)| h * c.sqrt())
                .fold(0.0, f64::max),
            MetricParams::Conformal { phi } => {
                let m = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                g.h() * m.exp()
            }
        }
    }

    pub(crate) fn check_field(&self, f: &ScalarField) -> Result<()> {
        if f.values.len() != self.geometry.node_count() {
            return Err(LabError::ShapeMismatch {
                expected: self.geometry.node_count(),
                found: f.values.len(),
            });
        }
        Ok(())
    }
}

/// Values of a function on the grid of a geometry.
#[derive(Debug, Clone)]
pub struct ScalarField {
    geometry: Arc<DiscreteGeometry>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(geometry: Arc<DiscreteGeometry>, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.node_count() {
            return Err(LabError::ShapeMismatch {
                expected: geometry.node_count(),
                found: values.len(),
            });
        }
        Ok(ScalarField { geometry, values })
    }

    pub(crate) fn from_parts(geometry: Arc<DiscreteGeometry>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), geometry.node_count());
        ScalarField { geometry, values }
    }

    pub fn geometry(&self) -> &Arc<DiscreteGeometry> {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            geometry: Arc::clone(&self.geometry),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        ScalarField {
            geometry: Arc::clone(&self.geometry),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_torus_has_uniform_weights() {
        let g = build_geometry(ModelGeometry::square_flat_torus(2, 2.0 * PI, 64)).unwrap();
        assert_eq!(g.node_count(), 4096);
        let w0 = g.base_weights()[0];
        assert!(g.base_weights().iter().all(|w| *w == w0));
        assert!((w0 - (2.0 * PI / 64.0).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn sphere_grid_excludes_poles() {
        let g = build_geometry(ModelGeometry::RoundSphere {
            dim: 2,
            radius: 1.0,
            nodes: 256,
        })
        .unwrap();
        let first = g.node_coords(0)[0];
        let last = g.node_coords(255)[0];
        assert!(first > 0.0 && last < PI);
        assert!((first - PI / 512.0).abs() < 1e-15);
        assert!((last - (PI - PI / 512.0)).abs() < 1e-14);
    }

    #[test]
    fn conformal_geometry_stores_phi0() {
        let spec = ModelGeometry::conformal_from_fn([2.0 * PI; 2], [64, 64], |x, _| 0.1 * x.sin());
        let g = build_geometry(spec).unwrap();
        let m = g.initial_metric();
        match m.params() {
            MetricParams::Conformal { phi } => {
                let i = g.node_from_index(&[16, 3]);
                assert!((phi[i] - 0.1 * (PI / 2.0).sin()).abs() < 1e-15);
            }
            _ => panic!("wrong family"),
        }
    }

    #[test]
    fn rejects_coarse_grids_and_bad_lengths() {
        assert!(build_geometry(ModelGeometry::square_flat_torus(2, 1.0, 7)).is_err());
        assert!(build_geometry(ModelGeometry::FlatTorus {
            lengths: vec![1.0, -1.0],
            sizes: vec![16, 16]
        })
        .is_err());
        assert!(build_geometry(ModelGeometry::RoundSphere {
            dim: 2,
            radius: 0.0,
            nodes: 32
        })
        .is_err());
    }

    #[test]
    fn unit_sphere_areas() {
        assert!((unit_sphere_area(1) - 2.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(2) - 4.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn interpolation_is_exact_for_bilinear_functions_and_wraps() {
        let g = build_geometry(ModelGeometry::square_flat_torus(2, 8.0, 8)).unwrap();
        let f = g.sample(|p| 1.0 + 0.5 * p[0] + 0.25 * p[1]);
        let v = g.interpolate(f.values(), &[2.5, 3.25]);
        assert!((v - (1.0 + 1.25 + 0.8125)).abs() < 1e-14);
        // x = 8 wraps back onto x = 0.
        let wrapped = g.interpolate(f.values(), &[8.0, 3.0]);
        assert!((wrapped - f[g.node_from_index(&[0, 3])]).abs() < 1e-14);
    }

    #[test]
    fn metric_state_rejects_non_positive_radius() {
        let g = build_geometry(ModelGeometry::RoundSphere {
            dim: 2,
            radius: 1.0,
            nodes: 16,
        })
        .unwrap();
        assert!(MetricState::new(g, 0.0, MetricParams::Sphere { r2: -0.1 }).is_err());
    }
}
