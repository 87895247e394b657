//! Conjugate heat equation `(−∂_t − Δ + R) u = 0` solved backward in `t`
//! along a stored Ricci flow trajectory.
//!
//! The unknown is `w = log u`, advanced forward in `τ = T − t` by
//! `∂_τ w = Δw + |∇w|² − R`. The nonlinear pair `Δw + |∇w|²` equals
//! `e^{−w} Δ(e^w)`, and it is discretized in exactly that form:
//! `Σ_j a_ij expm1(w_j − w_i)` with `a_ij` the off-diagonal Laplacian
//! stencil. The scheme is then the logarithm of the linear scheme for `u`,
//! which keeps mass conservation exact in space on the tori and behaves at
//! the kink of a distance-based profile on the cut locus.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};
use crate::geometry::{
    distance_field, grad_norm_sq, laplace_beltrami, scalar_curvature, volume_weights,
    DiscreteGeometry, GeometryKind, MetricParams, MetricState, ScalarField,
};
use crate::heat_kernel::torus_heat_kernel;
use crate::report::{ResidualAccumulator, ResidualReport};
use crate::ricci_flow::{centered, MetricTrajectory, MAX_HALVINGS};

/// `Δτ · stiffness ≤ STABILITY`; with slowly varying `w` on a
/// two-dimensional grid this is `Δτ ≤ 0.2 h² / max g^{ii}`.
pub const STABILITY: f64 = 1.6;

/// Off-diagonal Laplacian stencil `Δf_i = Σ_j a_ij (f_j − f_i)` and `R`.
struct Stencil {
    width: usize,
    index: Vec<usize>,
    coeff: Vec<f64>,
    curvature: Vec<f64>,
}

impl Stencil {
    fn new(m: &MetricState) -> Stencil {
        let g = m.geometry();
        let count = g.node_count();
        let width = 2 * g.axes();
        let mut index = Vec::with_capacity(count * width);
        let mut coeff = Vec::with_capacity(count * width);
        let curvature = scalar_curvature(m).into_values();
        match m.params() {
            MetricParams::Sphere { r2 } => {
                let h = g.spacing()[0];
                let n1 = (g.dim() - 1) as f64;
                let cot = g.cot();
                for i in 0..count {
                    let drift = n1 * cot[i] / (2.0 * h);
                    index.extend([g.plus(0)[i], g.minus(0)[i]]);
                    coeff.extend([(1.0 / (h * h) + drift) / r2, (1.0 / (h * h) - drift) / r2]);
                }
            }
            MetricParams::Flat { coeffs } => {
                for i in 0..count {
                    for (a, c) in coeffs.iter().enumerate() {
                        let k = 1.0 / (c * g.spacing()[a].powi(2));
                        index.extend([g.plus(a)[i], g.minus(a)[i]]);
                        coeff.extend([k, k]);
                    }
                }
            }
            MetricParams::Conformal { phi } => {
                for i in 0..count {
                    let s = (-2.0 * phi[i]).exp();
                    for a in 0..2 {
                        let k = s / g.spacing()[a].powi(2);
                        index.extend([g.plus(a)[i], g.minus(a)[i]]);
                        coeff.extend([k, k]);
                    }
                }
            }
        }
        Stencil {
            width,
            index,
            coeff,
            curvature,
        }
    }

    fn rhs(&self, w: &[f64]) -> Vec<f64> {
        (0..w.len())
            .map(|i| {
                let mut acc = 0.0;
                for k in i * self.width..(i + 1) * self.width {
                    let j = self.index[k];
                    if j != i {
                        acc += self.coeff[k] * (w[j] - w[i]).exp_m1();
                    }
                }
                acc - self.curvature[i]
            })
            .collect()
    }

    /// Gershgorin bound on the spectrum of the Jacobian of [`Stencil::rhs`].
    /// Conjugating by `diag(e^w)` turns the Jacobian into
    /// `A − diag(Σ_j a_ij expm1(w_j − w_i))`, so each row contributes
    /// `2 Σ_j |a_ij| + |Σ_j a_ij expm1(w_j − w_i)|`.
    fn stiffness(&self, w: &[f64]) -> f64 {
        (0..w.len())
            .map(|i| {
                let mut spread = 0.0;
                let mut shift = 0.0;
                for k in i * self.width..(i + 1) * self.width {
                    let j = self.index[k];
                    if j != i {
                        spread += 2.0 * self.coeff[k].abs();
                        shift += self.coeff[k] * (w[j] - w[i]).exp_m1();
                    }
                }
                spread + f64::abs(shift)
            })
            .fold(0.0, f64::max)
    }
}

/// Log-density `w = log u` on the trajectory nodes between `t₀` and `t₁`.
#[derive(Debug, Clone)]
pub struct SolutionHistory {
    traj: Arc<MetricTrajectory>,
    first: usize,
    w: Vec<Vec<f64>>,
}

impl SolutionHistory {
    pub fn trajectory(&self) -> &Arc<MetricTrajectory> {
        &self.traj
    }

    pub fn geometry(&self) -> &Arc<DiscreteGeometry> {
        self.traj.geometry()
    }

    /// Number of time nodes; index 0 is `t₀`, the last is `t₁`.
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Trajectory index of history node `j`.
    pub fn trajectory_index(&self, j: usize) -> usize {
        self.first + j
    }

    pub fn state(&self, j: usize) -> &MetricState {
        self.traj.state(self.first + j)
    }

    pub fn time(&self, j: usize) -> f64 {
        self.traj.time(self.first + j)
    }

    pub fn tau(&self, j: usize) -> f64 {
        self.traj.horizon() - self.time(j)
    }

    pub fn dt(&self) -> f64 {
        self.traj.dt()
    }

    pub fn log_density(&self, j: usize) -> &[f64] {
        &self.w[j]
    }

    pub fn w(&self, j: usize) -> ScalarField {
        ScalarField::from_parts(self.geometry().clone(), self.w[j].clone())
    }

    pub fn u(&self, j: usize) -> ScalarField {
        ScalarField::from_parts(
            self.geometry().clone(),
            self.w[j].iter().map(|w| w.exp()).collect(),
        )
    }

    pub fn u_history(&self) -> FieldHistory {
        FieldHistory {
            first: self.first,
            values: (0..self.len()).map(|j| self.u(j).into_values()).collect(),
        }
    }

    /// Node index `j` of time `t`, if `t` is a history node.
    pub fn node_at(&self, t: f64) -> Option<usize> {
        let k = self.traj.node_index(t)?;
        (k >= self.first && k < self.first + self.len()).then(|| k - self.first)
    }

    /// `u` at an arbitrary point of a history node, by interpolating `w`.
    pub fn u_at(&self, j: usize, x: &[f64]) -> f64 {
        self.geometry().interpolate(&self.w[j], x).exp()
    }

    /// One row per (time node, grid node): `t, tau, coordinates, w, u`. Only
    /// every `stride`-th time node is written; the terminal node always is.
    pub fn write_csv<W: Write>(&self, out: &mut W, stride: usize) -> Result<()> {
        let g = self.geometry();
        let stride = stride.max(1);
        writeln!(out, "t,tau,{},w,u", g.axis_names().join(","))?;
        for j in 0..self.len() {
            if j % stride != 0 && j + 1 != self.len() {
                continue;
            }
            let (t, tau) = (self.time(j), self.tau(j));
            for (i, w) in self.w[j].iter().enumerate() {
                write!(out, "{t:.12e},{tau:.12e},")?;
                for c in g.node_coords(i) {
                    write!(out, "{c:.9e},")?;
                }
                writeln!(out, "{w:.17e},{:.17e}", w.exp())?;
            }
        }
        Ok(())
    }
}

/// Terminal data for the backward solve, as a recipe for `w₁`.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalProfile {
    /// `u ≡ c`.
    Constant { value: f64 },
    /// `w = −d(x, center)²/(4s) − (n/2) log(4πs)` with the distance at `t₁`.
    Gaussian { center: Vec<f64>, width: f64 },
    /// Flat-torus heat kernel at time `s` (lattice sum).
    PeriodicGaussian { center: Vec<f64>, width: f64 },
    /// `u = 1 + a cos(k x₀)` (`cos(kθ)` on the sphere), `|a| < 1`.
    Cosine { amplitude: f64, mode: u32 },
}

pub fn terminal_data(m: &MetricState, profile: &TerminalProfile) -> Result<ScalarField> {
    let g = m.geometry();
    let n = g.dim() as f64;
    match profile {
        TerminalProfile::Constant { value } => {
            if !(*value > 0.0) || !value.is_finite() {
                return Err(LabError::Precondition(format!(
                    "constant terminal data must be positive, got {value}"
                )));
            }
            Ok(g.constant(value.ln()))
        }
        TerminalProfile::Gaussian { center, width } => {
            check_width(*width)?;
            check_point(g, center)?;
            let d = distance_field(m, center);
            let c = 0.5 * n * (4.0 * PI * width).ln();
            Ok(d.map(|d| -d * d / (4.0 * width) - c))
        }
        TerminalProfile::PeriodicGaussian { center, width } => {
            check_width(*width)?;
            check_point(g, center)?;
            let coeffs = match m.params() {
                MetricParams::Flat { coeffs } if coeffs.iter().all(|c| *c == 1.0) => coeffs,
                _ => {
                    return Err(LabError::Precondition(
                        "the lattice-sum kernel needs a flat torus with the coordinate metric"
                            .into(),
                    ))
                }
            };
            debug_assert_eq!(coeffs.len(), g.axes());
            Ok(g.sample(|x| torus_heat_kernel(g.lengths(), x, center, *width).log))
        }
        TerminalProfile::Cosine { amplitude, mode } => {
            if !(amplitude.abs() < 1.0) {
                return Err(LabError::Precondition(format!(
                    "cosine amplitude must lie in (−1, 1), got {amplitude}"
                )));
            }
            let k = f64::from(*mode);
            let scale = match g.kind() {
                GeometryKind::Sphere => 1.0,
                _ => 2.0 * PI / g.lengths()[0],
            };
            Ok(g.sample(|x| (1.0 + amplitude * (k * scale * x[0]).cos()).ln()))
        }
    }
}

fn check_width(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(LabError::NonPositiveTau(s))
    }
}

fn check_point(g: &DiscreteGeometry, p: &[f64]) -> Result<()> {
    if p.len() != g.axes() {
        return Err(LabError::Precondition(format!(
            "point has {} coordinates, geometry has {} axes",
            p.len(),
            g.axes()
        )));
    }
    Ok(())
}

/// Solves backward from `w₁` at `t₁` to `t₀`. Both times must be trajectory
/// nodes with `0 ≤ t₀ < t₁ < T`.
pub fn solve_conjugate(
    traj: &Arc<MetricTrajectory>,
    w1: &ScalarField,
    t1: f64,
    t0: f64,
) -> Result<SolutionHistory> {
    let horizon = traj.horizon();
    if !(t0 >= 0.0 && t0 < t1 && t1 < horizon) {
        return Err(LabError::Precondition(format!(
            "need 0 ≤ t₀ < t₁ < T, got t₀ = {t0}, t₁ = {t1}, T = {horizon}"
        )));
    }
    let (k0, k1) = match (traj.node_index(t0), traj.node_index(t1)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(LabError::Precondition(
                "t₀ and t₁ must be trajectory time nodes".into(),
            ))
        }
    };
    traj.state(k1).check_field(w1)?;
    if let Some(node) = w1.values().iter().position(|v| !v.is_finite()) {
        return Err(LabError::NonFinite { node, t: t1 });
    }

    let dt = traj.dt();
    let mut w = w1.values().to_vec();
    let mut out = vec![w.clone()];
    for k in (k0 + 1..=k1).rev() {
        let t_start = traj.time(k);
        let stiff = Stencil::new(traj.state(k)).stiffness(&w);
        let mut halvings = 0u32;
        while dt / f64::from(1u32 << halvings) * stiff > STABILITY {
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(LabError::Stability {
                    t: t_start,
                    halvings: MAX_HALVINGS,
                });
            }
        }
        let sub = 1usize << halvings;
        let ds = dt / sub as f64;
        for s in 0..sub {
            let t = t_start - s as f64 * ds;
            let a = Stencil::new(&traj.state_at(t)?);
            let b = Stencil::new(&traj.state_at(t - 0.5 * ds)?);
            let c = Stencil::new(&traj.state_at((t - ds).max(0.0))?);
            w = rk4_stages(&w, ds, &a, &b, &c);
        }
        let t_end = traj.time(k - 1);
        if let Some(node) = w.iter().position(|v| !v.is_finite()) {
            return Err(LabError::NonFinite { node, t: t_end });
        }
        out.push(w.clone());
    }
    out.reverse();
    Ok(SolutionHistory {
        traj: traj.clone(),
        first: k0,
        w: out,
    })
}

fn rk4_stages(w: &[f64], ds: f64, a: &Stencil, b: &Stencil, c: &Stencil) -> Vec<f64> {
    let axpy =
        |s: f64, x: &[f64]| -> Vec<f64> { w.iter().zip(x).map(|(w, x)| w + s * x).collect() };
    let k1 = a.rhs(w);
    let k2 = b.rhs(&axpy(0.5 * ds, &k1));
    let k3 = b.rhs(&axpy(0.5 * ds, &k2));
    let k4 = c.rhs(&axpy(ds, &k3));
    (0..w.len())
        .map(|i| w[i] + ds / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Potential `f` with `u = (4πτ)^{−n/2} e^{−f}` at one history node.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub tau: f64,
    pub f: ScalarField,
}

pub fn potential_from_w(w: &ScalarField, tau: f64) -> Result<PotentialField> {
    if !(tau > 0.0) {
        return Err(LabError::NonPositiveTau(tau));
    }
    let n = w.geometry().dim() as f64;
    let c = 0.5 * n * (4.0 * PI * tau).ln();
    Ok(PotentialField {
        tau,
        f: w.map(|w| -w - c),
    })
}

pub fn potential_f(hist: &SolutionHistory, j: usize) -> Result<PotentialField> {
    if j >= hist.len() {
        return Err(LabError::Precondition(format!(
            "node {j} outside history of {} nodes",
            hist.len()
        )));
    }
    potential_from_w(&hist.w(j), hist.tau(j))
}

/// Residuals of the potential equation `∂_t f + Δf − |∇f|² + R − n/(2τ)`
/// (`f_evolution`) and of the log-density equation
/// `∂_t w + Δw + |∇w|² − R` (`w_evolution`), both with the centered
/// operators and centered time differences.
pub fn f_evolution_residual(hist: &SolutionHistory) -> Result<ResidualReport> {
    if hist.len() < 3 {
        return Err(LabError::Precondition(
            "residuals need at least three time nodes".into(),
        ));
    }
    let dt = hist.dt();
    let n = hist.geometry().dim() as f64;
    let mut fres = ResidualAccumulator::new("f_evolution");
    let mut wres = ResidualAccumulator::new("w_evolution");
    let fs: Vec<PotentialField> = (0..hist.len())
        .map(|j| potential_f(hist, j))
        .collect::<Result<_>>()?;
    for j in 1..hist.len() - 1 {
        let m = hist.state(j);
        let weights = volume_weights(m);
        let r = scalar_curvature(m);
        let tau = hist.tau(j);

        let f = &fs[j].f;
        let ft = centered(fs[j - 1].f.values(), fs[j + 1].f.values(), dt);
        let lap = laplace_beltrami(m, f)?;
        let g2 = grad_norm_sq(m, f)?;
        let res: Vec<f64> = (0..ft.len())
            .map(|i| ft[i] + lap[i] - g2[i] + r[i] - n / (2.0 * tau))
            .collect();
        fres.add(&res, &weights, dt);

        let w = hist.w(j);
        let wt = centered(hist.log_density(j - 1), hist.log_density(j + 1), dt);
        let lap = laplace_beltrami(m, &w)?;
        let g2 = grad_norm_sq(m, &w)?;
        let res: Vec<f64> = (0..wt.len())
            .map(|i| wt[i] + lap[i] + g2[i] - r[i])
            .collect();
        wres.add(&res, &weights, dt);
    }
    let mut report = ResidualReport::new(hist.trajectory().grid_meta());
    report.push(fres);
    report.push(wres);
    Ok(report)
}

/// Space-time field sampled on consecutive trajectory nodes.
#[derive(Debug, Clone)]
pub struct FieldHistory {
    pub first: usize,
    pub values: Vec<Vec<f64>>,
}

impl FieldHistory {
    pub fn sample(
        traj: &MetricTrajectory,
        first: usize,
        last: usize,
        f: impl Fn(&[f64], f64) -> f64,
    ) -> FieldHistory {
        let g = traj.geometry();
        let values = (first..=last)
            .map(|k| {
                let t = traj.time(k);
                (0..g.node_count())
                    .map(|i| f(&g.node_coords(i), t))
                    .collect()
            })
            .collect();
        FieldHistory { first, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Smooth random trigonometric field: a few low modes in space times a
/// smooth function of time. With `envelope` set the field also carries the
/// factor `sin(π(t − t_a)/(t_b − t_a))` and vanishes at both ends.
#[derive(Debug, Clone)]
pub struct TrigField {
    modes: Vec<(Vec<f64>, f64, f64)>,
    temporal: (f64, f64),
    envelope: Option<(f64, f64)>,
    sphere: bool,
}

impl TrigField {
    pub fn random(geom: &DiscreteGeometry, seed: u64, envelope: Option<(f64, f64)>) -> TrigField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sphere = geom.kind() == GeometryKind::Sphere;
        let modes = (0..4)
            .map(|_| {
                let wave: Vec<f64> = if sphere {
                    vec![f64::from(rng.gen_range(0..4u32))]
                } else {
                    geom.lengths()
                        .iter()
                        .map(|l| f64::from(rng.gen_range(-2..=2i32)) * 2.0 * PI / l)
                        .collect()
                };
                let amp = rng.gen_range(-1.0..1.0);
                let phase = if sphere {
                    0.0
                } else {
                    rng.gen_range(0.0..2.0 * PI)
                };
                (wave, amp, phase)
            })
            .collect();
        let temporal = (rng.gen_range(0.5..2.0), rng.gen_range(0.0..2.0 * PI));
        TrigField {
            modes,
            temporal,
            envelope,
            sphere,
        }
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let space: f64 = self
            .modes
            .iter()
            .map(|(k, a, p)| {
                if self.sphere {
                    a * (k[0] * x[0]).cos()
                } else {
                    let arg: f64 = k.iter().zip(x).map(|(k, x)| k * x).sum();
                    a * (arg + p).cos()
                }
            })
            .sum();
        let time = 1.0 + 0.5 * (self.temporal.0 * t + self.temporal.1).sin();
        let env = match self.envelope {
            Some((a, b)) => (PI * (t - a) / (b - a)).sin(),
            None => 1.0,
        };
        (1.0 + space) * time * env
    }

    pub fn history(&self, traj: &MetricTrajectory, first: usize, last: usize) -> FieldHistory {
        FieldHistory::sample(traj, first, last, |x, t| self.eval(x, t))
    }
}

/// Both sides of the duality `∫∫ (□u) v = ∫∫ u (□* v)` over the history
/// window, with `□ = ∂_t − Δ`. The two sides differ by the boundary term
/// `[∫ u v dμ]` between the end times; `raw` is the plain difference,
/// `corrected` has the boundary term removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugacyResidual {
    pub raw: f64,
    pub boundary: f64,
    pub corrected: f64,
}

fn time_derivative(values: &[Vec<f64>], k: usize, dt: f64) -> Vec<f64> {
    let last = values.len() - 1;
    let n = values[k].len();
    if k == 0 {
        (0..n)
            .map(|i| (-3.0 * values[0][i] + 4.0 * values[1][i] - values[2][i]) / (2.0 * dt))
            .collect()
    } else if k == last {
        (0..n)
            .map(|i| {
                (3.0 * values[last][i] - 4.0 * values[last - 1][i] + values[last - 2][i])
                    / (2.0 * dt)
            })
            .collect()
    } else {
        centered(&values[k - 1], &values[k + 1], dt)
    }
}

pub fn conjugacy_residual(
    traj: &MetricTrajectory,
    u: &FieldHistory,
    v: &FieldHistory,
) -> Result<ConjugacyResidual> {
    if u.first != v.first || u.len() != v.len() || u.len() < 3 {
        return Err(LabError::Precondition(
            "field histories must cover the same window of at least three nodes".into(),
        ));
    }
    let g = traj.geometry();
    let dt = traj.dt();
    let last = u.len() - 1;
    let mut integral = 0.0;
    let mut pairing = Vec::with_capacity(u.len());
    for k in 0..=last {
        let m = traj.state(u.first + k);
        let weights = volume_weights(m);
        let uf = ScalarField::new(g.clone(), u.values[k].clone())?;
        let vf = ScalarField::new(g.clone(), v.values[k].clone())?;
        let lu = laplace_beltrami(m, &uf)?;
        let lv = laplace_beltrami(m, &vf)?;
        let r = scalar_curvature(m);
        let ut = time_derivative(&u.values, k, dt);
        let vt = time_derivative(&v.values, k, dt);
        let mut slice = 0.0;
        let mut uv = 0.0;
        for i in 0..weights.len() {
            let (a, b) = (uf[i], vf[i]);
            let box_u = ut[i] - lu[i];
            let box_star_v = -vt[i] - lv[i] + r[i] * b;
            slice += weights[i] * (box_u * b - a * box_star_v);
            uv += weights[i] * a * b;
        }
        let q = if k == 0 || k == last { 0.5 } else { 1.0 };
        integral += q * dt * slice;
        pairing.push(uv);
    }
    let boundary = pairing[last] - pairing[0];
    Ok(ConjugacyResidual {
        raw: integral.abs(),
        boundary,
        corrected: (integral - boundary).abs(),
    })
}

/// `max_t |∫u dμ(t) − ∫u dμ(t₁)| / ∫u dμ(t₁)`.
pub fn mass_integral_drift(hist: &SolutionHistory) -> f64 {
    let masses: Vec<f64> = (0..hist.len()).map(|j| total_mass(hist, j)).collect();
    let terminal = masses[masses.len() - 1];
    masses
        .iter()
        .map(|m| (m - terminal).abs() / terminal)
        .fold(0.0, f64::max)
}

pub fn total_mass(hist: &SolutionHistory, j: usize) -> f64 {
    volume_weights(hist.state(j))
        .iter()
        .zip(hist.log_density(j))
        .map(|(a, w)| a * w.exp())
        .sum()
}

/// Spatially constant solution on a shrinking sphere:
/// `u(t) = u(t₁) (r²(t₁)/r²(t))^{n/2}`.
pub fn sphere_constant_solution(dim: usize, r0: f64, u1: f64, t1: f64, t: f64) -> f64 {
    let r2 = |s: f64| r0 * r0 - 2.0 * (dim - 1) as f64 * s;
    u1 * (r2(t1) / r2(t)).powf(0.5 * dim as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, ModelGeometry};
    use crate::ricci_flow::{default_step, evolve_ricci};

    fn flat_traj(size: usize, horizon: f64) -> Arc<MetricTrajectory> {
        let g = build_geometry(ModelGeometry::square_flat_torus(2, 2.0 * PI, size)).unwrap();
        let dt = default_step(&g);
        Arc::new(evolve_ricci(&g, horizon, dt).unwrap())
    }

    #[test]
    fn constants_are_stationary_on_flat_torus() {
        let traj = flat_traj(16, 0.5);
        let m = traj.state(traj.len() - 1);
        let w1 = terminal_data(m, &TerminalProfile::Constant { value: 3.0 }).unwrap();
        let t1 = traj.time(traj.len() - 2);
        let hist = solve_conjugate(&traj, &w1, t1, 0.0).unwrap();
        for j in 0..hist.len() {
            assert!(hist.log_density(j).iter().all(|w| *w == 3.0f64.ln()));
        }
        assert_eq!(mass_integral_drift(&hist), 0.0);
    }

    #[test]
    fn potential_vanishes_at_special_tau() {
        let g = build_geometry(ModelGeometry::square_flat_torus(2, 1.0, 8)).unwrap();
        let p = potential_from_w(&g.constant(0.0), 1.0 / (4.0 * PI)).unwrap();
        assert!(p.f.max_abs() < 1e-15);
        assert!(potential_from_w(&g.constant(0.0), 0.0).is_err());
    }

    #[test]
    fn sphere_constant_solution_follows_scalar_ode() {
        let g = build_geometry(ModelGeometry::RoundSphere {
            dim: 2,
            radius: 1.0,
            nodes: 16,
        })
        .unwrap();
        // The log τ term has third derivative 2/τ³, so keep τ away from 0.
        let traj = Arc::new(evolve_ricci(&g, 0.25, 5e-5).unwrap());
        let t1 = 0.1;
        let w1 = g.constant(0.0);
        let hist = solve_conjugate(&traj, &w1, t1, 0.0).unwrap();
        for j in 0..hist.len() {
            let exact = sphere_constant_solution(2, 1.0, 1.0, t1, hist.time(j));
            assert!((hist.u(j)[0] - exact).abs() <= 1e-6 * exact);
        }
        assert!(mass_integral_drift(&hist) <= 1e-6);
        let rep = f_evolution_residual(&hist).unwrap();
        assert!(rep.max("f_evolution") <= 1e-6, "{}", rep.max("f_evolution"));
    }

    fn kernel_error(size: usize, s1: f64, s0: f64) -> f64 {
        let traj = flat_traj(size, s0 + 0.01);
        let k1 = ((traj.horizon() - s1) / traj.dt()).round() as usize;
        let k0 = ((traj.horizon() - s0) / traj.dt()).round() as usize;
        let center = vec![PI, PI];
        let w1 = terminal_data(
            traj.state(k1),
            &TerminalProfile::PeriodicGaussian {
                center: center.clone(),
                width: traj.horizon() - traj.time(k1),
            },
        )
        .unwrap();
        let hist = solve_conjugate(&traj, &w1, traj.time(k1), traj.time(k0)).unwrap();
        assert!(mass_integral_drift(&hist) < 1e-8);
        let g = traj.geometry();
        let tau = hist.tau(0);
        let mut worst: f64 = 0.0;
        for i in 0..g.node_count() {
            let exact = torus_heat_kernel(g.lengths(), &g.node_coords(i), &center, tau).value();
            worst = worst.max((hist.u(0)[i] - exact).abs() / exact);
        }
        worst
    }

    #[test]
    fn periodic_gaussian_tracks_lattice_sum() {
        // Relative error is largest in the far tail, where it still
        // converges at second order.
        let coarse = kernel_error(64, 0.05, 0.2);
        let fine = kernel_error(128, 0.05, 0.2);
        assert!(fine < 0.25, "{fine}");
        let ratio = coarse / fine;
        assert!((3.5..=5.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn conjugacy_of_constants_is_exact() {
        let traj = flat_traj(16, 0.2);
        let last = traj.len() - 1;
        let one = FieldHistory::sample(&traj, 0, last, |_, _| 1.0);
        let r = conjugacy_residual(&traj, &one, &one).unwrap();
        assert_eq!(r.raw, 0.0);
        assert_eq!(r.corrected, 0.0);
    }

    #[test]
    fn enveloped_fields_have_no_boundary_term() {
        let traj = flat_traj(32, 0.2);
        let last = traj.len() - 1;
        let env = Some((0.0, traj.horizon()));
        let g = traj.geometry();
        let u = TrigField::random(g, 7, env).history(&traj, 0, last);
        let v = TrigField::random(g, 8, env).history(&traj, 0, last);
        let r = conjugacy_residual(&traj, &u, &v).unwrap();
        assert!(r.boundary.abs() < 1e-12);
        assert!(r.raw < 1e-4, "{r:?}");
    }

    #[test]
    fn rejects_bad_windows() {
        let traj = flat_traj(16, 0.2);
        let w1 = traj.geometry().constant(0.0);
        assert!(solve_conjugate(&traj, &w1, traj.horizon(), 0.0).is_err());
        assert!(solve_conjugate(&traj, &w1, 0.05, 0.1).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::geometry::{build_geometry, ModelGeometry};
    use crate::harnack::harnack_p;
    use crate::ricci_flow::{default_step, evolve_ricci};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        /// Scaling the terminal data by λ shifts w by log λ and leaves P alone.
        #[test]
        fn terminal_scaling(log_lambda in -5.0..5.0f64, amplitude in -0.5..0.5f64, sphere in any::<bool>()) {
            let g = if sphere {
                build_geometry(ModelGeometry::RoundSphere { dim: 2, radius: 1.0, nodes: 24 }).unwrap()
            } else {
                build_geometry(ModelGeometry::square_flat_torus(2, 2.0 * PI, 16)).unwrap()
            };
            let traj = Arc::new(evolve_ricci(&g, 0.2, default_step(&g)).unwrap());
            let k1 = traj.len() - 4;
            let w1 = terminal_data(traj.state(k1), &TerminalProfile::Cosine { amplitude, mode: 2 }).unwrap();
            let a = solve_conjugate(&traj, &w1, traj.time(k1), 0.0).unwrap();
            let b = solve_conjugate(&traj, &w1.map(|w| w + log_lambda), traj.time(k1), 0.0).unwrap();
            for j in 0..a.len() {
                for (x, y) in a.log_density(j).iter().zip(b.log_density(j)) {
                    prop_assert!((y - x - log_lambda).abs() <= 1e-12 * (1.0 + log_lambda.abs()));
                }
                let pa = harnack_p(a.state(j), &potential_f(&a, j).unwrap()).unwrap();
                let pb = harnack_p(b.state(j), &potential_f(&b, j).unwrap()).unwrap();
                prop_assert!((0..pa.values().len()).all(|i| (pa[i] - pb[i]).abs() <= 1e-8 * (1.0 + pa[i].abs())));
            }
        }
    }
}
