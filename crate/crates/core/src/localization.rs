//! Localized gradient bound: the cutoff profile and its certified constants,
//! Laplacian comparison, the time derivative of distance under the flow, and
//! the pointwise check of the localized estimate on `Q_{ρ,T}`.

use std::io::Write;

use crate::conjugate_heat::SolutionHistory;
use crate::error::{LabError, Result};
use crate::geometry::{
    distance_field, geodesic_distance, geodesic_path, near_cut_locus, ricci_factor, GeometryKind,
};
use crate::harnack::liyau_form;
use crate::report::HarnackReport;
use crate::ricci_flow::MetricTrajectory;

/// Default number of samples used to certify the cutoff constants.
pub const CUTOFF_SAMPLES: usize = 100_000;

/// Points closer than this many cells to the cut locus are refused.
const CUT_CELLS: f64 = 3.0;

fn smoothstep(x: f64) -> f64 {
    x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
}

/// `ψ(s)`: 1 on `[0, 1]`, `1 − S(s − 1)` on `[1, 2]`, 0 beyond.
pub fn psi(s: f64) -> f64 {
    if s <= 1.0 {
        1.0
    } else if s >= 2.0 {
        0.0
    } else {
        1.0 - smoothstep(s - 1.0)
    }
}

pub fn dpsi(s: f64) -> f64 {
    if s <= 1.0 || s >= 2.0 {
        return 0.0;
    }
    let x = s - 1.0;
    -30.0 * x * x * (1.0 - x) * (1.0 - x)
}

pub fn d2psi(s: f64) -> f64 {
    if s <= 1.0 || s >= 2.0 {
        return 0.0;
    }
    let x = s - 1.0;
    -60.0 * x * (2.0 * x - 1.0) * (x - 1.0)
}

/// `|ψ′|²/ψ`, taken as 0 where `ψ` vanishes.
pub fn psi_ratio(s: f64) -> f64 {
    let p = psi(s);
    if p > 0.0 {
        dpsi(s).powi(2) / p
    } else {
        0.0
    }
}

/// Maximizes `g` on `[a, b]` by bisection on the sign of a centered slope.
fn refine_max(g: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let eta = 1e-3 * (b - a);
        if g(m + eta) > g(m - eta) {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    let m = 0.5 * (a + b);
    (m, g(m))
}

/// Sampled maximum of `g` over `s`, refined around every sampled local
/// maximum. Returns `(argmax, max)`.
fn certify(g: &dyn Fn(f64) -> f64, s: &[f64]) -> (f64, f64) {
    let vals: Vec<f64> = s.iter().map(|x| g(*x)).collect();
    let mut best = (s[0], vals[0]);
    for i in 0..vals.len() {
        if vals[i] > best.1 {
            best = (s[i], vals[i]);
        }
        let left = if i > 0 {
            vals[i - 1]
        } else {
            f64::NEG_INFINITY
        };
        let right = vals.get(i + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if vals[i] >= left && vals[i] >= right && i > 0 && i + 1 < vals.len() {
            let r = refine_max(g, s[i - 1], s[i + 1]);
            if r.1 > best.1 {
                best = r;
            }
        }
    }
    best
}

/// The cutoff profile with certified constants
/// `C1 ≥ sup |ψ′|²/ψ` and `C2 ≥ max(sup |ψ′|, sup |ψ″|)`.
#[derive(Debug, Clone)]
pub struct CutoffProfile {
    pub rho: f64,
    pub samples: usize,
    pub c1: f64,
    pub c2: f64,
    /// Location in `s` of the maximizers of `|ψ′|²/ψ`, `|ψ′|`, `|ψ″|`.
    pub argmax: [f64; 3],
    pub sup_dpsi: f64,
    pub sup_d2psi: f64,
}

impl CutoffProfile {
    /// `φ = ψ(d/ρ)`.
    pub fn phi(&self, d: f64) -> f64 {
        psi(d / self.rho)
    }

    /// Sample points of the transition region `[1, 2]`.
    pub fn sample_points(samples: usize) -> Vec<f64> {
        (0..=samples)
            .map(|i| 1.0 + i as f64 / samples as f64)
            .collect()
    }

    /// Checks `ψ′ ≤ 0`, `0 ≤ ψ ≤ 1`, `|ψ′|²/ψ ≤ C1` and `|ψ″| ≤ C2` at every
    /// sample point; returns the number of failing points.
    pub fn violations(&self) -> usize {
        Self::sample_points(self.samples)
            .into_iter()
            .filter(|s| {
                let p = psi(*s);
                !(dpsi(*s) <= 0.0
                    && (0.0..=1.0).contains(&p)
                    && psi_ratio(*s) <= self.c1
                    && d2psi(*s).abs() <= self.c2
                    && dpsi(*s).abs() <= self.c2)
            })
            .count()
    }

    /// Plot-ready samples `(s, ψ, ψ′, ψ″, |ψ′|²/ψ)` over `[0, 2.5]`, every
    /// `stride`-th point, with the constants as leading comment lines.
    pub fn write_csv<W: Write>(&self, out: &mut W, stride: usize) -> Result<()> {
        writeln!(out, "# rho={}", self.rho)?;
        writeln!(out, "# samples={}", self.samples)?;
        writeln!(out, "# C1={:.12e}", self.c1)?;
        writeln!(out, "# C2={:.12e}", self.c2)?;
        writeln!(out, "s,psi,dpsi,d2psi,ratio")?;
        let n = (self.samples as f64 * 2.5) as usize;
        for i in (0..=n).step_by(stride.max(1)) {
            let s = 2.5 * i as f64 / n as f64;
            writeln!(
                out,
                "{:.8},{:.12e},{:.12e},{:.12e},{:.12e}",
                s,
                psi(s),
                dpsi(s),
                d2psi(s),
                psi_ratio(s)
            )?;
        }
        Ok(())
    }
}

pub fn build_cutoff(rho: f64) -> Result<CutoffProfile> {
    build_cutoff_with(rho, CUTOFF_SAMPLES)
}

pub fn build_cutoff_with(rho: f64, samples: usize) -> Result<CutoffProfile> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(LabError::Precondition(format!(
            "cutoff radius must be positive, got {rho}"
        )));
    }
    if samples < 16 {
        return Err(LabError::Precondition(
            "at least 16 cutoff samples are needed".into(),
        ));
    }
    let s = CutoffProfile::sample_points(samples);
    let (a1, c1) = certify(&psi_ratio, &s);
    let (a2, s1) = certify(&|x| dpsi(x).abs(), &s);
    let (a3, s2) = certify(&|x| d2psi(x).abs(), &s);
    Ok(CutoffProfile {
        rho,
        samples,
        c1,
        c2: s1.max(s2),
        argmax: [a1, a2, a3],
        sup_dpsi: s1,
        sup_d2psi: s2,
    })
}

/// Upper bound for `Δd` at distance `ρ` under `Ric ≥ (n−1)k`.
pub fn laplacian_comparison(k: f64, rho: f64, n: usize) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(LabError::Precondition(format!(
            "distance must be positive, got {rho}"
        )));
    }
    let m = n as f64 - 1.0;
    if k > 0.0 {
        let sk = k.sqrt();
        if sk * rho >= std::f64::consts::PI {
            return Err(LabError::Precondition(format!(
                "√k·ρ = {} is beyond the first conjugate point",
                sk * rho
            )));
        }
        Ok(m * sk / (sk * rho).tan())
    } else if k == 0.0 {
        Ok(m / rho)
    } else {
        let sk = (-k).sqrt();
        Ok(m * sk / (sk * rho).tanh())
    }
}

/// `∂_t d(x, p, t)` from centered differences of the distance, against
/// `−∫_γ Ric(ξ, ξ) dr` along the minimizing path, per interior node.
#[derive(Debug, Clone)]
pub struct DistanceRate {
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl DistanceRate {
    pub fn max_residual(&self) -> f64 {
        self.lhs
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `−∫_γ Ric(ξ, ξ) dr` along the sampled minimizing path at trajectory node `k`.
fn ricci_integral(traj: &MetricTrajectory, k: usize, x: &[f64], p: &[f64]) -> Result<f64> {
    let m = traj.state(k);
    let g = m.geometry();
    let kappa = ricci_factor(m);
    let path = geodesic_path(m, p, x)?;
    let mut acc = 0.0;
    for seg in path.points.windows(2) {
        let mid: Vec<f64> = seg[0]
            .iter()
            .zip(&seg[1])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let delta: Vec<f64> = seg[0].iter().zip(&seg[1]).map(|(a, b)| b - a).collect();
        let len = m.length_sq_at(&mid, &delta).sqrt();
        // Ric(ξ, ξ) = κ for a unit vector ξ.
        acc += g.interpolate(kappa.values(), &mid) * len;
    }
    Ok(-acc)
}

pub fn distance_dt_residual(traj: &MetricTrajectory, x: &[f64], p: &[f64]) -> Result<DistanceRate> {
    if traj.len() < 3 {
        return Err(LabError::Precondition(
            "need at least three trajectory nodes".into(),
        ));
    }
    for k in 0..traj.len() {
        if near_cut_locus(traj.state(k), x, p, CUT_CELLS) {
            return Err(LabError::CutLocus);
        }
    }
    let dist: Vec<f64> = (0..traj.len())
        .map(|k| geodesic_distance(traj.state(k), x, p))
        .collect::<Result<_>>()?;
    let mut rate = DistanceRate {
        times: Vec::new(),
        lhs: Vec::new(),
        rhs: Vec::new(),
    };
    for k in 1..traj.len() - 1 {
        rate.times.push(traj.time(k));
        rate.lhs
            .push((dist[k + 1] - dist[k - 1]) / (2.0 * traj.dt()));
        rate.rhs.push(ricci_integral(traj, k, x, p)?);
    }
    Ok(rate)
}

/// Root interval of `p y² + q y + r` and the widened interval used to bound it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBounds {
    pub exact: (f64, f64),
    pub widened: (f64, f64),
}

impl RootBounds {
    pub fn contains_exact(&self) -> bool {
        self.widened.0 <= self.exact.0 && self.exact.1 <= self.widened.1
    }
}

pub fn quadratic_root_bounds(p: f64, q: f64, r: f64) -> Result<RootBounds> {
    if !(p > 0.0 && q > 0.0 && r < 0.0) {
        return Err(LabError::Precondition(format!(
            "need p > 0, q > 0, r < 0; got ({p}, {q}, {r})"
        )));
    }
    let disc = (q * q - 4.0 * p * r).sqrt();
    // The smaller root in the cancellation-free form.
    let lo = (-q - disc) / (2.0 * p);
    let hi = r / (p * lo);
    let w = q + (-4.0 * p * r).sqrt();
    Ok(RootBounds {
        exact: (lo, hi),
        widened: (-w / p, w / p),
    })
}

/// Parameters of the localized check. `K` is measured from the trajectory,
/// not supplied.
#[derive(Debug, Clone)]
pub struct LocalizationParams {
    pub center: Vec<f64>,
    pub rho: f64,
    pub delta: f64,
    pub dim: usize,
    /// Lower Ricci bound `Ric ≥ −K g` over `Q_{2ρ,T}`.
    pub k: f64,
    /// Horizon `T` with `τ = T − t`.
    pub horizon: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl LocalizationParams {
    pub fn measure(
        hist: &SolutionHistory,
        center: &[f64],
        rho: f64,
        delta: f64,
        cutoff: &CutoffProfile,
    ) -> Result<Self> {
        let geom = hist.geometry();
        let n = geom.dim();
        let mut errs = Vec::new();
        if !(rho > 0.0 && rho.is_finite()) {
            errs.push(format!("rho must be positive, got {rho}"));
        }
        let limit = 1.0 / (4.0 * n as f64);
        if !(delta > 0.0 && delta < limit) {
            errs.push(format!(
                "delta must satisfy 0 < delta < 1/(4n) = {limit}, got {delta}"
            ));
        }
        if center.len() != geom.axes() {
            errs.push(format!("center needs {} coordinates", geom.axes()));
        } else if geom.kind() == GeometryKind::Sphere && center[0] != 0.0 {
            errs.push("on the sphere the center must be the pole (0)".into());
        }
        if !errs.is_empty() {
            return Err(LabError::Config(errs));
        }
        let mut kmin = f64::INFINITY;
        for j in 0..hist.len() {
            let m = hist.state(j);
            let d = distance_field(m, center);
            let kappa = ricci_factor(m);
            for i in 0..d.values().len() {
                if d[i] <= 2.0 * rho {
                    kmin = kmin.min(kappa[i]);
                }
            }
        }
        Ok(LocalizationParams {
            center: center.to_vec(),
            rho,
            delta,
            dim: n,
            k: if kmin.is_finite() {
                (-kmin).max(0.0)
            } else {
                0.0
            },
            horizon: hist.trajectory().horizon(),
            c1: cutoff.c1,
            c2: cutoff.c2,
            c3: 4.0 * (delta * n as f64).sqrt(),
        })
    }

    pub fn c(&self) -> f64 {
        self.c1.max(self.c2).max(self.c3)
    }

    /// Right-hand side of the localized estimate at `τ`.
    pub fn rhs(&self, tau: f64) -> f64 {
        let n = self.dim as f64;
        let k = self.k;
        let r = self.rho;
        4.0 * n / (1.0 - 4.0 * self.delta * n)
            * (1.0 / tau + self.c() * (1.0 / (r * r) + k.sqrt() / r + k / r + 1.0 / self.horizon))
    }
}

/// Margin `RHS − (|∇u|²/u² − 2u_τ/u − R)` at every node of `Q_{ρ,T}` and
/// every history node with `τ ≥ 10Δt` (interior in time).
pub fn localized_bound_check(
    hist: &SolutionHistory,
    params: &LocalizationParams,
    tolerance: f64,
) -> Result<HarnackReport> {
    let mut report = HarnackReport::new(
        "localized gradient bound",
        &["t", "tau", "node", "distance"],
        tolerance,
        hist.trajectory().grid_meta(),
    );
    let n = params.dim as f64;
    let mut min_rel = f64::INFINITY;
    for j in 1..hist.len().saturating_sub(1) {
        let tau = hist.tau(j);
        if tau < 10.0 * hist.dt() {
            continue;
        }
        let m = hist.state(j);
        let d = distance_field(m, &params.center);
        let form = liyau_form(hist, j)?;
        let rhs = params.rhs(tau);
        for i in 0..d.values().len() {
            if d[i] > params.rho {
                continue;
            }
            let lhs = form[i] + 2.0 * n / tau;
            if !lhs.is_finite() {
                return Err(LabError::NonFinite {
                    node: i,
                    t: hist.time(j),
                });
            }
            report.push(vec![hist.time(j), tau, i as f64, d[i]], lhs, rhs - lhs);
            min_rel = min_rel.min((rhs - lhs) / rhs);
        }
    }
    report.note("rho", params.rho);
    report.note("delta", params.delta);
    report.note("K", params.k);
    report.note("C1", params.c1);
    report.note("C2", params.c2);
    report.note("C3", params.c3);
    report.note("C", params.c());
    report.note("points_checked", report.len() as f64);
    report.note("min_relative_slack", min_rel);
    Ok(report)
}
