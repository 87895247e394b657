//! The Harnack quantity `P = 2Δf − |∇f|² + R − 2n/τ` and the checks built
//! on it: its evolution, the lemma identities behind it, the Cauchy–Schwarz
//! pinching step, the space-time action `Θ`, and the two integrated forms.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conjugate_heat::{potential_f, PotentialField, SolutionHistory};
use crate::error::{LabError, Result};
use crate::geometry::{
    grad_inner, grad_norm_sq, jet, laplace_beltrami, ricci_factor, scalar_curvature,
    volume_weights, DiscreteGeometry, GeometryKind, MetricState, ScalarField,
};
use crate::report::{GridMeta, HarnackReport, ResidualAccumulator, ResidualReport};
use crate::ricci_flow::{centered, MetricTrajectory};

/// `P = 2Δf − |∇f|² + R − 2n/τ`.
pub fn harnack_p(m: &MetricState, f: &PotentialField) -> Result<ScalarField> {
    let tau = f.tau;
    if !(tau > 0.0) {
        return Err(LabError::NonPositiveTau(tau));
    }
    let n = m.dim() as f64;
    let lap = laplace_beltrami(m, &f.f)?;
    let g2 = grad_norm_sq(m, &f.f)?;
    let r = scalar_curvature(m);
    Ok(ScalarField::from_parts(
        m.geometry().clone(),
        (0..lap.values().len())
            .map(|i| 2.0 * lap[i] - g2[i] + r[i] - 2.0 * n / tau)
            .collect(),
    ))
}

fn interior(hist: &SolutionHistory, j: usize) -> Result<()> {
    if j == 0 || j + 1 >= hist.len() {
        return Err(LabError::Precondition(format!(
            "node {j} is not interior to a history of {} nodes",
            hist.len()
        )));
    }
    Ok(())
}

/// `|∇u|²/u² − 2u_τ/u − R − 2n/τ` with `u_τ = −u_t` from centered
/// differences in time.
///
/// The time derivative is taken in `τ`: with `u = (4πτ)^{−n/2} e^{−f}` this
/// is the expression that reproduces `P`.
pub fn liyau_form(hist: &SolutionHistory, j: usize) -> Result<ScalarField> {
    interior(hist, j)?;
    let m = hist.state(j);
    let n = m.dim() as f64;
    let tau = hist.tau(j);
    let u = hist.u(j);
    let ut = centered(hist.u(j - 1).values(), hist.u(j + 1).values(), hist.dt());
    let g2 = grad_norm_sq(m, &u)?;
    let r = scalar_curvature(m);
    Ok(ScalarField::from_parts(
        m.geometry().clone(),
        (0..ut.len())
            .map(|i| {
                let ui = u[i];
                g2[i] / (ui * ui) + 2.0 * ut[i] / ui - r[i] - 2.0 * n / tau
            })
            .collect(),
    ))
}

struct NodeTerms {
    f: PotentialField,
    lap_f: ScalarField,
    grad_sq: ScalarField,
    p: ScalarField,
}

fn node_terms(hist: &SolutionHistory, j: usize) -> Result<NodeTerms> {
    let m = hist.state(j);
    let f = potential_f(hist, j)?;
    let lap_f = laplace_beltrami(m, &f.f)?;
    let grad_sq = grad_norm_sq(m, &f.f)?;
    let p = harnack_p(m, &f)?;
    Ok(NodeTerms {
        f,
        lap_f,
        grad_sq,
        p,
    })
}

/// Residuals of the two heat-operator identities for `Δf` and `|∇f|²`
/// (`lemma_laplacian`, `lemma_gradient`) and of the Bochner formula
/// (`bochner`), at interior history nodes.
pub fn lemma_identity_residuals(hist: &SolutionHistory) -> Result<ResidualReport> {
    if hist.len() < 3 {
        return Err(LabError::Precondition(
            "residuals need at least three time nodes".into(),
        ));
    }
    let dt = hist.dt();
    let terms: Vec<NodeTerms> = (0..hist.len())
        .map(|j| node_terms(hist, j))
        .collect::<Result<_>>()?;
    let mut lap_acc = ResidualAccumulator::new("lemma_laplacian");
    let mut grad_acc = ResidualAccumulator::new("lemma_gradient");
    let mut boch_acc = ResidualAccumulator::new("bochner");
    for j in 1..hist.len() - 1 {
        let m = hist.state(j);
        let t = &terms[j];
        let weights = volume_weights(m);
        let kappa = ricci_factor(m);
        let r = scalar_curvature(m);
        let lap_r = laplace_beltrami(m, &r)?;
        let jf = jet(m, &t.f.f)?;

        let dt_lap = centered(terms[j - 1].lap_f.values(), terms[j + 1].lap_f.values(), dt);
        let lap_lap = laplace_beltrami(m, &t.lap_f)?;
        let lap_g2 = laplace_beltrami(m, &t.grad_sq)?;
        let res: Vec<f64> = (0..weights.len())
            .map(|i| dt_lap[i] + lap_lap[i] - 2.0 * kappa[i] * t.lap_f[i] - lap_g2[i] + lap_r[i])
            .collect();
        lap_acc.add(&res, &weights, dt);

        let dt_g2 = centered(
            terms[j - 1].grad_sq.values(),
            terms[j + 1].grad_sq.values(),
            dt,
        );
        let f_dot_g2 = grad_inner(m, &t.f.f, &t.grad_sq)?;
        let f_dot_r = grad_inner(m, &t.f.f, &r)?;
        let res: Vec<f64> = (0..weights.len())
            .map(|i| {
                dt_g2[i] + lap_g2[i]
                    - 4.0 * kappa[i] * t.grad_sq[i]
                    - 2.0 * f_dot_g2[i]
                    - 2.0 * jf.hess_norm_sq(i)
                    + 2.0 * f_dot_r[i]
            })
            .collect();
        grad_acc.add(&res, &weights, dt);

        let f_dot_lap = grad_inner(m, &t.f.f, &t.lap_f)?;
        let res: Vec<f64> = (0..weights.len())
            .map(|i| {
                lap_g2[i]
                    - 2.0 * jf.hess_norm_sq(i)
                    - 2.0 * f_dot_lap[i]
                    - 2.0 * kappa[i] * t.grad_sq[i]
            })
            .collect();
        boch_acc.add(&res, &weights, dt);
    }
    let mut report = ResidualReport::new(hist.trajectory().grid_meta());
    report.push(lap_acc);
    report.push(grad_acc);
    report.push(boch_acc);
    Ok(report)
}

/// Residual of the evolution of `P`:
///
/// `∂_t P + ΔP − 2⟨∇f, ∇P⟩ − 2|Ric + Hess f − g/τ|² − (2/τ)(P + |∇f|² + R)`
/// (`p_evolution`). The same expression with an extra `− 4n/τ²`
/// (`p_evolution_shifted`) is reported alongside; it sits at `−4n/τ²`
/// away from zero, which makes the size of that constant visible next to
/// the discretization error.
pub fn p_evolution_residual(hist: &SolutionHistory) -> Result<ResidualReport> {
    if hist.len() < 3 {
        return Err(LabError::Precondition(
            "residuals need at least three time nodes".into(),
        ));
    }
    let dt = hist.dt();
    let n = hist.geometry().dim() as f64;
    let terms: Vec<NodeTerms> = (0..hist.len())
        .map(|j| node_terms(hist, j))
        .collect::<Result<_>>()?;
    let mut acc = ResidualAccumulator::new("p_evolution");
    let mut shifted = ResidualAccumulator::new("p_evolution_shifted");
    for j in 1..hist.len() - 1 {
        let m = hist.state(j);
        let t = &terms[j];
        let tau = hist.tau(j);
        let weights = volume_weights(m);
        let kappa = ricci_factor(m);
        let r = scalar_curvature(m);
        let jf = jet(m, &t.f.f)?;
        let dp = centered(terms[j - 1].p.values(), terms[j + 1].p.values(), dt);
        let lap_p = laplace_beltrami(m, &t.p)?;
        let f_dot_p = grad_inner(m, &t.f.f, &t.p)?;
        let res: Vec<f64> = (0..weights.len())
            .map(|i| {
                dp[i] + lap_p[i]
                    - 2.0 * f_dot_p[i]
                    - 2.0 * jf.shifted_norm_sq(i, kappa[i] - 1.0 / tau)
                    - 2.0 / tau * (t.p[i] + t.grad_sq[i] + r[i])
            })
            .collect();
        acc.add(&res, &weights, dt);
        let lit: Vec<f64> = res.iter().map(|v| v - 4.0 * n / (tau * tau)).collect();
        shifted.add(&lit, &weights, dt);
    }
    let mut report = ResidualReport::new(hist.trajectory().grid_meta());
    report.push(acc);
    report.push(shifted);
    Ok(report)
}

/// Cauchy–Schwarz gap `|Ric + Hess f − g/τ|² − (1/n)(R + Δf − n/τ)²` and the
/// largest deviation from the identity `P + R + |∇f|² = 2(R + Δf − n/τ)`.
#[derive(Debug, Clone)]
pub struct PinchingGap {
    pub gap: ScalarField,
    pub identity_residual: f64,
}

pub fn pinching_gap(m: &MetricState, f: &PotentialField) -> Result<PinchingGap> {
    let tau = f.tau;
    if !(tau > 0.0) {
        return Err(LabError::NonPositiveTau(tau));
    }
    let n = m.dim() as f64;
    let jf = jet(m, &f.f)?;
    let kappa = ricci_factor(m);
    let r = scalar_curvature(m);
    let lap = laplace_beltrami(m, &f.f)?;
    let g2 = grad_norm_sq(m, &f.f)?;
    let p = harnack_p(m, f)?;
    let mut identity: f64 = 0.0;
    let gap = (0..lap.values().len())
        .map(|i| {
            let trace = r[i] + lap[i] - n / tau;
            let scale = 1.0 + r[i].abs() + lap[i].abs() + g2[i] + n / tau;
            identity = identity.max((p[i] + r[i] + g2[i] - 2.0 * trace).abs() / scale);
            jf.shifted_norm_sq(i, kappa[i] - 1.0 / tau) - trace * trace / n
        })
        .collect();
    Ok(PinchingGap {
        gap: ScalarField::from_parts(m.geometry().clone(), gap),
        identity_residual: identity,
    })
}

/// Sign check: `max_x P ≤ tol` at every history node with `τ ≥
/// window·Δt`. One sample per time node, keyed by `(t, τ, argmax node)`;
/// pointwise violation counts go into the notes.
pub fn harnack_p_check(
    hist: &SolutionHistory,
    tolerance: f64,
    window: f64,
) -> Result<HarnackReport> {
    let mut report = HarnackReport::new(
        "max_x P",
        &["t", "tau", "node"],
        tolerance,
        hist.trajectory().grid_meta(),
    );
    let mut points = 0usize;
    let mut bad = 0usize;
    let mut min_r = f64::INFINITY;
    for j in 0..hist.len() {
        let tau = hist.tau(j);
        min_r = min_r.min(scalar_curvature(hist.state(j)).min());
        if tau < window * hist.dt() {
            continue;
        }
        let p = harnack_p(hist.state(j), &potential_f(hist, j)?)?;
        let (node, pmax) =
            p.values()
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| {
                    if *v > acc.1 {
                        (i, *v)
                    } else {
                        acc
                    }
                });
        points += p.values().len();
        bad += p.values().iter().filter(|v| **v > tolerance).count();
        report.push(vec![hist.time(j), tau, node as f64], pmax, -pmax);
    }
    report.note("window_tau", window * hist.dt());
    report.note("points_checked", points as f64);
    report.note("points_above_tolerance", bad as f64);
    report.note("min_scalar_curvature", min_r);
    Ok(report)
}

/// Metric as a function of time, for path actions.
pub trait MetricSource {
    fn geometry(&self) -> &Arc<DiscreteGeometry>;
    fn metric_at(&self, t: f64) -> Result<MetricState>;
}

impl MetricSource for MetricTrajectory {
    fn geometry(&self) -> &Arc<DiscreteGeometry> {
        MetricTrajectory::geometry(self)
    }

    fn metric_at(&self, t: f64) -> Result<MetricState> {
        self.state_at(t)
    }
}

/// A time-independent metric.
impl MetricSource for MetricState {
    fn geometry(&self) -> &Arc<DiscreteGeometry> {
        MetricState::geometry(self)
    }

    fn metric_at(&self, t: f64) -> Result<MetricState> {
        let mut m = self.clone();
        m.t = t;
        Ok(m)
    }
}

pub const PATH_NODES: usize = 33;
pub const MAX_SWEEPS: usize = 200;
const SWEEP_TOL: f64 = 1e-10;
const OVER_RELAX: f64 = 1.8;

/// Space-time path `s ↦ (γ(s), t₁ + s(t₂ − t₁))` sampled at `s = k/m`.
/// Points are coordinates in the universal cover.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    pub points: Vec<Vec<f64>>,
    pub t1: f64,
    pub t2: f64,
}

impl DiscretePath {
    /// Constant-speed coordinate line from `x₁` to `x₂` (shortest image on
    /// a torus) with `m + 1` nodes.
    pub fn straight(
        geom: &DiscreteGeometry,
        x1: &[f64],
        x2: &[f64],
        t1: f64,
        t2: f64,
        m: usize,
    ) -> Result<Self> {
        if m < 8 {
            return Err(LabError::Precondition(format!(
                "path needs m ≥ 8 segments, got {m}"
            )));
        }
        if !(t1 < t2) {
            return Err(LabError::Precondition(format!(
                "need t₁ < t₂, got {t1}, {t2}"
            )));
        }
        let delta: Vec<f64> = (0..x1.len())
            .map(|a| {
                let d = x2[a] - x1[a];
                if geom.is_periodic() {
                    let l = geom.lengths()[a];
                    d - l * (d / l).round()
                } else {
                    d
                }
            })
            .collect();
        let points = (0..=m)
            .map(|k| {
                let s = k as f64 / m as f64;
                x1.iter().zip(&delta).map(|(x, d)| x + s * d).collect()
            })
            .collect();
        Ok(DiscretePath { points, t1, t2 })
    }

    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t1 + (self.t2 - self.t1) * k as f64 / self.segments() as f64
    }
}

/// Result of minimizing the path action.
#[derive(Debug, Clone)]
pub struct ThetaResult {
    pub value: f64,
    pub path: DiscretePath,
    pub sweeps: usize,
    pub converged: bool,
    /// Action after each sweep, starting with the initial path.
    pub trace: Vec<f64>,
}

struct ActionModel {
    metrics: Vec<MetricState>,
    dt: f64,
}

impl ActionModel {
    fn new(src: &dyn MetricSource, path: &DiscretePath) -> Result<Self> {
        let m = path.segments();
        let dt = (path.t2 - path.t1) / m as f64;
        let metrics = (0..m)
            .map(|k| src.metric_at(path.t1 + (k as f64 + 0.5) * dt))
            .collect::<Result<_>>()?;
        Ok(ActionModel { metrics, dt })
    }

    fn segment(&self, k: usize, a: &[f64], b: &[f64]) -> f64 {
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        self.metrics[k].length_sq_at(&wrap_point(self.metrics[k].geometry(), &mid), &v) / self.dt
    }

    fn total(&self, pts: &[Vec<f64>]) -> f64 {
        (0..pts.len() - 1)
            .map(|k| self.segment(k, &pts[k], &pts[k + 1]))
            .sum()
    }

    fn local(&self, pts: &[Vec<f64>], k: usize, x: &[f64]) -> f64 {
        self.segment(k - 1, &pts[k - 1], x) + self.segment(k, x, &pts[k + 1])
    }
}

fn wrap_point(g: &DiscreteGeometry, x: &[f64]) -> Vec<f64> {
    if !g.is_periodic() {
        return x.to_vec();
    }
    x.iter()
        .zip(g.lengths())
        .map(|(v, l)| v.rem_euclid(*l))
        .collect()
}

/// Upper approximation of `Θ = inf ∫_{t₁}^{t₂} |γ′(t)|²_{g(t)} dt` by
/// coordinate descent over the interior nodes of `initial`. Each node move
/// is accepted only if it lowers the action, so the trace never increases.
pub fn theta_action_from(src: &dyn MetricSource, initial: DiscretePath) -> Result<ThetaResult> {
    let model = ActionModel::new(src, &initial)?;
    let mut pts = initial.points.clone();
    let axes = pts[0].len();
    let scale = src.geometry().h();
    let mut trace = vec![model.total(&pts)];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        for k in 1..pts.len() - 1 {
            for a in 0..axes {
                let mut x = pts[k].clone();
                let e0 = model.local(&pts, k, &x);
                let x0 = x[a];
                let d = 1e-4 * scale;
                x[a] = x0 + d;
                let ep = model.local(&pts, k, &x);
                x[a] = x0 - d;
                let em = model.local(&pts, k, &x);
                let curv = ep - 2.0 * e0 + em;
                let mut step = if curv > 0.0 {
                    -d * (ep - em) / (2.0 * curv)
                } else if ep < em {
                    d
                } else {
                    -d
                };
                let mut best = (x0, e0);
                for _ in 0..30 {
                    x[a] = x0 + step;
                    let e = model.local(&pts, k, &x);
                    if e < best.1 {
                        best = (x0 + step, e);
                        // Over-relaxed move, kept whenever it still lowers
                        // the action: plain coordinate descent stalls on the
                        // long chain of coupled nodes.
                        x[a] = x0 + OVER_RELAX * step;
                        let e2 = model.local(&pts, k, &x);
                        if e2 < e0 {
                            best = (x0 + OVER_RELAX * step, e2);
                        }
                        break;
                    }
                    step *= 0.5;
                }
                pts[k][a] = best.0;
            }
        }
        let value = model.total(&pts);
        let prev = *trace.last().unwrap_or(&value);
        trace.push(value.min(prev));
        if prev - value < SWEEP_TOL {
            converged = true;
            break;
        }
    }
    let value = *trace.last().unwrap_or(&f64::NAN);
    Ok(ThetaResult {
        value,
        path: DiscretePath {
            points: pts,
            t1: initial.t1,
            t2: initial.t2,
        },
        sweeps,
        converged,
        trace,
    })
}

/// `Θ(x₁, t₁; x₂, t₂)` from the straight initial path with `m` segments.
pub fn theta_action(
    src: &dyn MetricSource,
    x1: &[f64],
    t1: f64,
    x2: &[f64],
    t2: f64,
    m: usize,
) -> Result<ThetaResult> {
    let path = DiscretePath::straight(src.geometry(), x1, x2, t1, t2, m)?;
    theta_action_from(src, path)
}

/// Action of a given path without optimizing.
pub fn path_action(src: &dyn MetricSource, path: &DiscretePath) -> Result<f64> {
    Ok(ActionModel::new(src, path)?.total(&path.points))
}

/// Constants `α, β > 0` of the integrated estimate for forward solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratedHarnackParams {
    pub alpha: f64,
    pub beta: f64,
}

impl IntegratedHarnackParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(LabError::Precondition(format!(
                "α and β must be positive, got {alpha}, {beta}"
            )));
        }
        Ok(IntegratedHarnackParams { alpha, beta })
    }
}

/// Positive solution `u = e^w` of a forward heat equation on a static metric,
/// sampled on a uniform increasing time grid with `t > 0`.
#[derive(Debug, Clone)]
pub struct ForwardField {
    metric: MetricState,
    times: Vec<f64>,
    w: Vec<Vec<f64>>,
}

impl ForwardField {
    pub fn new(metric: MetricState, times: Vec<f64>, w: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 3 || times.len() != w.len() {
            return Err(LabError::Precondition(
                "forward field needs at least three matching time slices".into(),
            ));
        }
        if !(times[0] > 0.0) || times.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(LabError::Precondition(
                "forward field times must be positive and increasing".into(),
            ));
        }
        for slice in &w {
            if slice.len() != metric.geometry().node_count() {
                return Err(LabError::ShapeMismatch {
                    expected: metric.geometry().node_count(),
                    found: slice.len(),
                });
            }
        }
        Ok(ForwardField { metric, times, w })
    }

    /// A conjugate solve on a static metric is a forward heat solution in
    /// `τ`; this reorders it by increasing `τ`.
    pub fn from_static_conjugate(hist: &SolutionHistory) -> Result<Self> {
        let r = scalar_curvature(hist.state(0)).max_abs();
        let same = (0..hist.len()).all(|j| hist.state(j).params() == hist.state(0).params());
        if !same || r != 0.0 {
            return Err(LabError::Precondition(
                "forward reinterpretation needs a static Ricci-flat metric".into(),
            ));
        }
        let idx: Vec<usize> = (0..hist.len()).rev().collect();
        ForwardField::new(
            hist.state(0).clone(),
            idx.iter().map(|&j| hist.tau(j)).collect(),
            idx.iter().map(|&j| hist.log_density(j).to_vec()).collect(),
        )
    }

    pub fn metric(&self) -> &MetricState {
        &self.metric
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn log_density(&self, k: usize) -> &[f64] {
        &self.w[k]
    }

    fn dt(&self) -> f64 {
        (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64
    }

    /// `t(|∇f|² − α ∂_t f)` with `f = log u` at an interior time node.
    pub fn hypothesis_field(&self, k: usize, alpha: f64) -> Result<Vec<f64>> {
        let g = self.metric.geometry();
        let f = ScalarField::new(g.clone(), self.w[k].clone())?;
        let g2 = grad_norm_sq(&self.metric, &f)?;
        let ft = centered(&self.w[k - 1], &self.w[k + 1], self.dt());
        let t = self.times[k];
        Ok((0..ft.len()).map(|i| t * (g2[i] - alpha * ft[i])).collect())
    }

    /// Smallest `β` for which the hypothesis holds at every interior node.
    pub fn measure_beta(&self, alpha: f64) -> Result<f64> {
        let mut beta = f64::NEG_INFINITY;
        for k in 1..self.times.len() - 1 {
            beta = self
                .hypothesis_field(k, alpha)?
                .into_iter()
                .fold(beta, f64::max);
        }
        Ok(beta)
    }

    /// Checks `t(|∇f|² − α ∂_t f) ≤ β + tol` pointwise.
    pub fn check_hypothesis(&self, params: IntegratedHarnackParams, tolerance: f64) -> Result<()> {
        for k in 1..self.times.len() - 1 {
            let h = self.hypothesis_field(k, params.alpha)?;
            if let Some(node) = h.iter().position(|v| !(*v <= params.beta + tolerance)) {
                return Err(LabError::Hypothesis {
                    node,
                    time_index: k,
                    excess: h[node] - params.beta,
                });
            }
        }
        Ok(())
    }

    fn node(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        let k = ((t - self.times[0]) / dt).round();
        if k < 0.0
            || k as usize >= self.times.len()
            || (self.times[k as usize] - t).abs() > 1e-9 * dt
        {
            return Err(LabError::Precondition(format!(
                "time {t} is not a field time node"
            )));
        }
        Ok(k as usize)
    }

    pub fn log_u_at(&self, x: &[f64], t: f64) -> Result<f64> {
        let k = self.node(t)?;
        Ok(self.metric.geometry().interpolate(&self.w[k], x))
    }
}

/// One pair `(x₁, t₁; x₂, t₂)` with `t₁ < t₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimePair {
    pub x1: Vec<f64>,
    pub t1: f64,
    pub x2: Vec<f64>,
    pub t2: f64,
}

/// Integrated estimate for forward solutions. With the hypothesis
/// `t(|∇f|² − α ∂_t f) ≤ β` the path argument gives
/// `u(x₁, t₁) ≤ u(x₂, t₂) (t₂/t₁)^{β/α} exp((α/4) Θ)`; each sample's margin is
/// the log of that inequality. The variant with the two points and the
/// exponent `α/β` exchanged is computed per pair and its smallest margin is
/// recorded in the notes.
pub fn integrated_harnack_check(
    u: &ForwardField,
    params: IntegratedHarnackParams,
    pairs: &[SpaceTimePair],
    tolerance: f64,
) -> Result<HarnackReport> {
    u.check_hypothesis(params, tolerance)?;
    let g = u.metric.geometry();
    let grid = GridMeta {
        h: g.h(),
        dt: u.dt(),
        nodes: g.node_count(),
    };
    let mut report = HarnackReport::new(
        "log u(x2,t2) - log u(x1,t1)",
        &["x1", "t1", "x2", "t2", "theta"],
        tolerance,
        grid,
    );
    let mut swapped = f64::INFINITY;
    let (a, b) = (params.alpha, params.beta);
    for p in pairs {
        let theta = theta_action(&u.metric, &p.x1, p.t1, &p.x2, p.t2, PATH_NODES - 1)?.value;
        let l1 = u.log_u_at(&p.x1, p.t1)?;
        let l2 = u.log_u_at(&p.x2, p.t2)?;
        let ratio = (p.t2 / p.t1).ln();
        let margin = l2 + (b / a) * ratio + 0.25 * a * theta - l1;
        swapped = swapped.min(l1 + (a / b) * ratio + 0.25 * a * theta - l2);
        let mut key = p.x1.clone();
        key.push(p.t1);
        key.extend(&p.x2);
        key.push(p.t2);
        key.push(theta);
        report.push(key, l2 - l1, margin);
    }
    report.key_names = key_names(g.axes(), "theta");
    report.note("alpha", a);
    report.note("beta", b);
    report.note("min_margin_exchanged_form", swapped);
    Ok(report)
}

fn key_names(axes: usize, extra: &str) -> Vec<String> {
    let mut names = Vec::new();
    for p in ["1", "2"] {
        for a in 0..axes {
            names.push(format!("x{p}_{a}"));
        }
        names.push(format!("t{p}"));
    }
    names.push(extra.to_string());
    names
}

/// Pair-wise ratio estimate for a conjugate solution:
/// `log(u₂/u₁) ≤ n log(τ₁/τ₂) + Θ/2 + ((τ₁ − τ₂)/2) R̄`, using
/// `∫₀¹ |γ′(s)|² ds = (t₂ − t₁) Θ` for the space-time path `γ`. The sample
/// margin uses `R̄ = sup_γ R`; the margin with `R̄ = ∫₀¹ R(γ(s)) ds` is
/// carried per pair in the key and its minimum in the notes.
pub fn harnack_ratio_check(
    hist: &SolutionHistory,
    pairs: &[SpaceTimePair],
    tolerance: f64,
) -> Result<HarnackReport> {
    let traj = hist.trajectory();
    let min_r = (0..hist.len())
        .map(|j| scalar_curvature(hist.state(j)).min())
        .fold(f64::INFINITY, f64::min);
    if min_r < -tolerance {
        return Err(LabError::Precondition(format!(
            "scalar curvature {min_r:.3e} is negative beyond tolerance"
        )));
    }
    let g = hist.geometry();
    let n = g.dim() as f64;
    let mut report = HarnackReport::new(
        "log u(x2,t2) - log u(x1,t1)",
        &[],
        tolerance,
        traj.grid_meta(),
    );
    let mut names = key_names(g.axes(), "theta");
    names.push("margin_integral".into());
    report.key_names = names;
    let mut min_integral = f64::INFINITY;
    for p in pairs {
        let (tau1, tau2) = (traj.horizon() - p.t1, traj.horizon() - p.t2);
        if !(tau1 > tau2) {
            return Err(LabError::Precondition(format!(
                "need τ₁ > τ₂, got {tau1} and {tau2}"
            )));
        }
        let (j1, j2) = match (hist.node_at(p.t1), hist.node_at(p.t2)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(LabError::Precondition(
                    "pair times must be history nodes".into(),
                ))
            }
        };
        let th = theta_action(traj.as_ref(), &p.x1, p.t1, &p.x2, p.t2, PATH_NODES - 1)?;
        let (sup_r, int_r) = curvature_along(traj, &th.path)?;
        let l1 = hist.u_at(j1, &p.x1).ln();
        let l2 = hist.u_at(j2, &p.x2).ln();
        let base = n * (tau1 / tau2).ln() + 0.5 * th.value - (l2 - l1);
        let margin_sup = base + 0.5 * (tau1 - tau2) * sup_r;
        let margin_int = base + 0.5 * (tau1 - tau2) * int_r;
        min_integral = min_integral.min(margin_int);
        let mut key = p.x1.clone();
        key.push(p.t1);
        key.extend(&p.x2);
        key.push(p.t2);
        key.push(th.value);
        key.push(margin_int);
        report.push(key, l2 - l1, margin_sup.min(margin_int));
    }
    report.note("min_margin_integral", min_integral);
    report.note("min_scalar_curvature", min_r);
    Ok(report)
}

/// `(sup R, ∫₀¹ R ds)` along a space-time path, by trapezoid in `s`.
fn curvature_along(traj: &MetricTrajectory, path: &DiscretePath) -> Result<(f64, f64)> {
    let g = traj.geometry();
    let m = path.segments();
    let mut sup = f64::NEG_INFINITY;
    let mut integral = 0.0;
    for k in 0..=m {
        let state = traj.state_at(path.time(k))?;
        let r = scalar_curvature(&state);
        let v = g.interpolate(r.values(), &wrap_point(g, &path.points[k]));
        sup = sup.max(v);
        let w = if k == 0 || k == m { 0.5 } else { 1.0 };
        integral += w * v / m as f64;
    }
    Ok((sup, integral))
}

/// Random pairs on grid nodes with `t₁ < t₂` drawn from `times`.
pub fn random_pairs(
    geom: &DiscreteGeometry,
    times: &[f64],
    count: usize,
    seed: u64,
) -> Vec<SpaceTimePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = geom.node_count();
    let mut pairs = Vec::with_capacity(count);
    if times.len() < 2 {
        return pairs;
    }
    while pairs.len() < count {
        let a = rng.gen_range(0..times.len());
        let b = rng.gen_range(0..times.len());
        if a == b {
            continue;
        }
        let (k1, k2) = (a.min(b), a.max(b));
        let x1 = geom.node_coords(rng.gen_range(0..n));
        let x2 = geom.node_coords(rng.gen_range(0..n));
        pairs.push(SpaceTimePair {
            x1,
            t1: times[k1],
            x2,
            t2: times[k2],
        });
    }
    pairs
}

/// Whether the geometry's curvature hypothesis `R ≥ 0` can hold: false only
/// on the non-flat conformal torus, where total curvature vanishes.
pub fn curvature_hypothesis_applies(traj: &MetricTrajectory, tolerance: f64) -> bool {
    match traj.geometry().kind() {
        GeometryKind::ConformalTorus => traj
            .states()
            .iter()
            .all(|s| scalar_curvature(s).min() >= -tolerance),
        _ => true,
    }
}
