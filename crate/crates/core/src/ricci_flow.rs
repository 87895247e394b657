//! Forward Ricci flow `∂_t g = −2 Ric` on the model families.
//!
//! * sphere: `d(r²)/dt = −2(n−1)`;
//! * flat torus: static;
//! * conformal torus: `∂_t φ = e^{−2φ} Δ₀ φ`, method of lines.
//!
//! All integrations use the classical four-stage Runge–Kutta scheme on a
//! uniform output grid; the conformal torus substeps by powers of two until
//! the explicit stability bound `Δt ≤ 0.2 h² min e^{2φ}` holds.

use std::io::Write;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::geometry::{
    flat_laplacian, laplace_beltrami, ricci_factor, scalar_curvature, volume, volume_weights,
    DiscreteGeometry, GeometryKind, MetricParams, MetricState, ModelGeometry, ScalarField,
};
use crate::report::{GridMeta, ResidualAccumulator, ResidualReport};

/// Fraction of the extinction time a sphere flow may run to.
pub const BLOWUP_GUARD: f64 = 0.9;
/// Stability constant `c` in `Δt ≤ c h² min e^{2φ}`.
pub const CFL: f64 = 0.2;
pub const MAX_HALVINGS: u32 = 8;

/// Metric states on a uniform time grid `t_k = k Δt`, `k = 0..=K`.
#[derive(Debug, Clone)]
pub struct MetricTrajectory {
    geometry: Arc<DiscreteGeometry>,
    states: Vec<MetricState>,
    dt: f64,
    horizon: f64,
}

impl MetricTrajectory {
    fn new(geometry: Arc<DiscreteGeometry>, states: Vec<MetricState>, dt: f64) -> Self {
        let horizon = states.last().map(|s| s.t).unwrap_or(0.0);
        MetricTrajectory {
            geometry,
            states,
            dt,
            horizon,
        }
    }

    pub fn geometry(&self) -> &Arc<DiscreteGeometry> {
        &self.geometry
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Final time `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &MetricState {
        &self.states[k]
    }

    pub fn states(&self) -> &[MetricState] {
        &self.states
    }

    pub fn time(&self, k: usize) -> f64 {
        self.states[k].t
    }

    /// Index of the grid node at time `t`, if `t` lies on the grid.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k as usize >= self.states.len() {
            return None;
        }
        ((t - self.states[k as usize].t).abs() <= 1e-9 * self.dt).then_some(k as usize)
    }

    pub fn grid_meta(&self) -> GridMeta {
        GridMeta {
            h: self.geometry.h(),
            dt: self.dt,
            nodes: self.geometry.node_count(),
        }
    }

    /// Metric at an arbitrary time, by cubic Lagrange interpolation through
    /// the four nearest time nodes.
    pub fn state_at(&self, t: f64) -> Result<MetricState> {
        if let Some(k) = self.node_index(t) {
            return Ok(self.states[k].clone());
        }
        if t < -1e-12 || t > self.horizon + 1e-12 {
            return Err(LabError::Precondition(format!(
                "time {t} outside trajectory [0, {}]",
                self.horizon
            )));
        }
        let len = self.states.len();
        if len < 4 {
            let k = ((t / self.dt).floor() as usize).min(len - 2);
            let w = (t - self.states[k].t) / self.dt;
            return self.blend(&[k, k + 1], &[1.0 - w, w], t);
        }
        let k = (t / self.dt).floor() as usize;
        let start = k.saturating_sub(1).min(len - 4);
        let idx = [start, start + 1, start + 2, start + 3];
        let ts: Vec<f64> = idx.iter().map(|&i| self.states[i].t).collect();
        let weights: Vec<f64> = (0..4)
            .map(|a| {
                (0..4)
                    .filter(|&b| b != a)
                    .map(|b| (t - ts[b]) / (ts[a] - ts[b]))
                    .product()
            })
            .collect();
        self.blend(&idx, &weights, t)
    }

    fn blend(&self, idx: &[usize], weights: &[f64], t: f64) -> Result<MetricState> {
        let params = match self.states[idx[0]].params() {
            MetricParams::Sphere { .. } => {
                let r2 = idx
                    .iter()
                    .zip(weights)
                    .map(|(&i, w)| match self.states[i].params() {
                        MetricParams::Sphere { r2 } => w * r2,
                        _ => unreachable!(),
                    })
                    .sum();
                MetricParams::Sphere { r2 }
            }
            MetricParams::Flat { coeffs } => MetricParams::Flat {
                coeffs: coeffs.clone(),
            },
            MetricParams::Conformal { .. } => {
                let mut phi = vec![0.0; self.geometry.node_count()];
                for (&i, w) in idx.iter().zip(weights) {
                    if let MetricParams::Conformal { phi: p } = self.states[i].params() {
                        for (o, v) in phi.iter_mut().zip(p) {
                            *o += w * v;
                        }
                    }
                }
                MetricParams::Conformal { phi }
            }
        };
        MetricState::new(self.geometry.clone(), t, params)
    }

    /// CSV with a `#` summary line, then one row per time node (sphere and
    /// flat torus) or per time node and grid node (conformal torus).
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "# T={:.9e} dt={:.9e} steps={} grid={}",
            self.horizon,
            self.dt,
            self.states.len() - 1,
            self.geometry
                .sizes()
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join("x")
        )?;
        match self.geometry.kind() {
            GeometryKind::Sphere => {
                writeln!(out, "t,r2")?;
                for s in &self.states {
                    if let MetricParams::Sphere { r2 } = s.params() {
                        writeln!(out, "{:.12e},{:.17e}", s.t, r2)?;
                    }
                }
            }
            GeometryKind::FlatTorus => {
                let names: Vec<String> =
                    (0..self.geometry.axes()).map(|a| format!("c{a}")).collect();
                writeln!(out, "t,{}", names.join(","))?;
                for s in &self.states {
                    if let MetricParams::Flat { coeffs } = s.params() {
                        let cs: Vec<String> = coeffs.iter().map(|c| format!("{c:.17e}")).collect();
                        writeln!(out, "{:.12e},{}", s.t, cs.join(","))?;
                    }
                }
            }
            GeometryKind::ConformalTorus => {
                writeln!(out, "t,x,y,phi")?;
                for s in &self.states {
                    if let MetricParams::Conformal { phi } = s.params() {
                        for (i, p) in phi.iter().enumerate() {
                            let c = self.geometry.node_coords(i);
                            writeln!(out, "{:.12e},{:.9e},{:.9e},{:.17e}", s.t, c[0], c[1], p)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Extinction time `r0² / (2(n−1))` of a round sphere.
pub fn sphere_extinction_time(dim: usize, r0: f64) -> f64 {
    r0 * r0 / (2.0 * (dim - 1) as f64)
}

/// `r²(t) = r0² − 2(n−1)t`.
pub fn sphere_radius_sq(dim: usize, r0: f64, t: f64) -> f64 {
    r0 * r0 - 2.0 * (dim - 1) as f64 * t
}

fn time_steps(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(horizon > 0.0) || !(dt > 0.0) || !horizon.is_finite() || !dt.is_finite() {
        return Err(LabError::Precondition(format!(
            "horizon and step must be positive, got T = {horizon}, dt = {dt}"
        )));
    }
    let steps = (horizon / dt - 1e-9).ceil().max(2.0) as usize;
    Ok((steps, horizon / steps as f64))
}

/// Default output step for a geometry: the explicit stability bound on the
/// conformal torus, `h²/4` elsewhere.
pub fn default_step(geom: &Arc<DiscreteGeometry>) -> f64 {
    let m = geom.initial_metric();
    let h = geom.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
    match geom.kind() {
        GeometryKind::ConformalTorus => CFL * h * h * m.min_scale(),
        _ => 0.25 * h * h,
    }
}

/// Integrates the Ricci flow on `[0, T]`. The step is adjusted down so that
/// `T` is a whole number of steps.
pub fn evolve_ricci(
    geom: &Arc<DiscreteGeometry>,
    horizon: f64,
    dt: f64,
) -> Result<MetricTrajectory> {
    let (steps, dt) = time_steps(horizon, dt)?;
    let initial = geom.initial_metric();
    let mut states = Vec::with_capacity(steps + 1);
    match geom.spec() {
        ModelGeometry::RoundSphere { dim, radius, .. } => {
            let limit = BLOWUP_GUARD * sphere_extinction_time(*dim, *radius);
            if horizon > limit {
                return Err(LabError::Horizon { horizon, limit });
            }
            let rate = -2.0 * (*dim as f64 - 1.0);
            let rhs = |_r2: f64| rate;
            let mut r2 = radius * radius;
            states.push(initial);
            for k in 1..=steps {
                let k1 = rhs(r2);
                let k2 = rhs(r2 + 0.5 * dt * k1);
                let k3 = rhs(r2 + 0.5 * dt * k2);
                let k4 = rhs(r2 + dt * k3);
                r2 += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                let t = k as f64 * dt;
                if !(r2 > 0.0) {
                    return Err(LabError::NonPositiveMetric { t });
                }
                states.push(MetricState::new(
                    geom.clone(),
                    t,
                    MetricParams::Sphere { r2 },
                )?);
            }
        }
        ModelGeometry::FlatTorus { .. } => {
            for k in 0..=steps {
                let mut s = initial.clone();
                s.t = k as f64 * dt;
                states.push(s);
            }
        }
        ModelGeometry::ConformalTorus2D { phi0, .. } => {
            let h = geom.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
            let rhs = |phi: &[f64]| -> Vec<f64> {
                flat_laplacian(geom, phi)
                    .into_iter()
                    .zip(phi)
                    .map(|(l, p)| (-2.0 * p).exp() * l)
                    .collect()
            };
            let mut phi = phi0.clone();
            states.push(initial);
            for k in 1..=steps {
                let t0 = (k - 1) as f64 * dt;
                let min_scale = phi
                    .iter()
                    .map(|p| (2.0 * p).exp())
                    .fold(f64::INFINITY, f64::min);
                let bound = CFL * h * h * min_scale;
                let mut halvings = 0;
                while dt / f64::from(1u32 << halvings) > bound {
                    halvings += 1;
                    if halvings > MAX_HALVINGS {
                        return Err(LabError::Stability {
                            t: t0,
                            halvings: MAX_HALVINGS,
                        });
                    }
                }
                let sub = 1usize << halvings;
                let ds = dt / sub as f64;
                for _ in 0..sub {
                    phi = rk4_step(&phi, ds, &rhs);
                }
                let t = k as f64 * dt;
                if let Some(node) = phi
                    .iter()
                    .position(|p| !p.is_finite() || !((2.0 * p).exp() > 0.0))
                {
                    return Err(if phi[node].is_finite() {
                        LabError::NonPositiveMetric { t }
                    } else {
                        LabError::NonFinite { node, t }
                    });
                }
                states.push(MetricState::new(
                    geom.clone(),
                    t,
                    MetricParams::Conformal { phi: phi.clone() },
                )?);
            }
        }
    }
    Ok(MetricTrajectory::new(geom.clone(), states, dt))
}

pub(crate) fn rk4_step(y: &[f64], dt: f64, rhs: &impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let axpy =
        |a: f64, x: &[f64]| -> Vec<f64> { y.iter().zip(x).map(|(y, x)| y + a * x).collect() };
    let k1 = rhs(y);
    let k2 = rhs(&axpy(0.5 * dt, &k1));
    let k3 = rhs(&axpy(0.5 * dt, &k2));
    let k4 = rhs(&axpy(dt, &k3));
    (0..y.len())
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Closed-form sphere trajectory `r²(t) = r0² − 2(n−1)t` on the grid of
/// `geom`, which must be a round sphere.
pub fn exact_sphere_trajectory(
    geom: &Arc<DiscreteGeometry>,
    horizon: f64,
    dt: f64,
) -> Result<MetricTrajectory> {
    let (dim, r0) = match geom.spec() {
        ModelGeometry::RoundSphere { dim, radius, .. } => (*dim, *radius),
        _ => {
            return Err(LabError::Precondition(
                "exact trajectory requires a round sphere".into(),
            ))
        }
    };
    let limit = sphere_extinction_time(dim, r0);
    if !(horizon < limit) {
        return Err(LabError::Horizon { horizon, limit });
    }
    let (steps, dt) = time_steps(horizon, dt)?;
    let states = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            MetricState::new(
                geom.clone(),
                t,
                MetricParams::Sphere {
                    r2: sphere_radius_sq(dim, r0, t),
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricTrajectory::new(geom.clone(), states, dt))
}

/// Centered difference at interior node `k` of a per-node sequence.
pub(crate) fn centered(prev: &[f64], next: &[f64], dt: f64) -> Vec<f64> {
    prev.iter()
        .zip(next)
        .map(|(a, b)| (b - a) / (2.0 * dt))
        .collect()
}

/// Diagonal inverse-metric components `g^{kk}` per grid axis, per node. On
/// the sphere the single entry is `g^{θθ} = 1/r²`; the tangential entries
/// share its time dependence.
fn inverse_metric(m: &MetricState) -> Vec<Vec<f64>> {
    let n = m.geometry().node_count();
    match m.params() {
        MetricParams::Sphere { r2 } => vec![vec![1.0 / r2; n]],
        MetricParams::Flat { coeffs } => coeffs.iter().map(|c| vec![1.0 / c; n]).collect(),
        MetricParams::Conformal { phi } => {
            let s: Vec<f64> = phi.iter().map(|p| (-2.0 * p).exp()).collect();
            vec![s.clone(), s]
        }
    }
}

/// Centered-in-time residuals of the evolution equations satisfied along the
/// flow:
///
/// * `metric_inverse`: `∂_t g^{ij} − 2R^{ij}`
/// * `volume_element`: `(∂_t dμ + R dμ)/dμ`
/// * `scalar_curvature`: `∂_t R − ΔR − 2|Ric|²`
/// * `laplacian_evolution`: `∂_t(Δ_{g(t)} p) − Δ_{g(t)}(∂_t p) − 2R^{ij}∇_i∇_j p` for a static probe `p`
/// * `total_volume`: `d/dt Vol + ∫ R dμ`
pub fn evolution_identity_residuals(
    traj: &MetricTrajectory,
    probe: &ScalarField,
) -> Result<ResidualReport> {
    if traj.len() < 3 {
        return Err(LabError::Precondition(
            "identity residuals need at least three time nodes".into(),
        ));
    }
    let dt = traj.dt();
    let n = traj.geometry().dim() as f64;
    let mut metric = ResidualAccumulator::new("metric_inverse");
    let mut density = ResidualAccumulator::new("volume_element");
    let mut curvature = ResidualAccumulator::new("scalar_curvature");
    let mut laplacian = ResidualAccumulator::new("laplacian_evolution");
    let mut total = ResidualAccumulator::new("total_volume");

    let lap_probe: Vec<ScalarField> = traj
        .states()
        .iter()
        .map(|m| laplace_beltrami(m, probe))
        .collect::<Result<_>>()?;
    let curv: Vec<ScalarField> = traj.states().iter().map(scalar_curvature).collect();
    let weights: Vec<Vec<f64>> = traj.states().iter().map(volume_weights).collect();

    for k in 1..traj.len() - 1 {
        let m = traj.state(k);
        let kappa = ricci_factor(m);
        let w = &weights[k];

        let (gp, gn, gk) = (
            inverse_metric(traj.state(k - 1)),
            inverse_metric(traj.state(k + 1)),
            inverse_metric(m),
        );
        let mut res = vec![0.0f64; w.len()];
        for a in 0..gk.len() {
            let d = centered(&gp[a], &gn[a], dt);
            for i in 0..res.len() {
                let r = d[i] - 2.0 * kappa[i] * gk[a][i];
                if r.abs() > res[i].abs() {
                    res[i] = r;
                }
            }
        }
        metric.add(&res, w, dt);

        let dw = centered(&weights[k - 1], &weights[k + 1], dt);
        let res: Vec<f64> = (0..w.len()).map(|i| dw[i] / w[i] + curv[k][i]).collect();
        density.add(&res, w, dt);

        let dr = centered(curv[k - 1].values(), curv[k + 1].values(), dt);
        let lap_r = laplace_beltrami(m, &curv[k])?;
        let res: Vec<f64> = (0..w.len())
            .map(|i| dr[i] - lap_r[i] - 2.0 * n * kappa[i] * kappa[i])
            .collect();
        curvature.add(&res, w, dt);

        let dl = centered(lap_probe[k - 1].values(), lap_probe[k + 1].values(), dt);
        let res: Vec<f64> = (0..w.len())
            .map(|i| dl[i] - 2.0 * kappa[i] * lap_probe[k][i])
            .collect();
        laplacian.add(&res, w, dt);

        let dvol = (volume(traj.state(k + 1)) - volume(traj.state(k - 1))) / (2.0 * dt);
        let int_r: f64 = w.iter().zip(curv[k].values()).map(|(a, b)| a * b).sum();
        total.add_scalar(dvol + int_r, dt);
    }

    let mut report = ResidualReport::new(traj.grid_meta());
    for acc in [metric, density, curvature, laplacian, total] {
        report.push(acc);
    }
    Ok(report)
}

/// First Fourier sine coefficient in `x` of a conformal factor, averaged in `y`.
pub fn sine_mode_amplitude(geom: &DiscreteGeometry, phi: &[f64]) -> f64 {
    let lx = geom.lengths()[0];
    let k = 2.0 * std::f64::consts::PI / lx;
    let mut acc = 0.0;
    for (i, p) in phi.iter().enumerate() {
        let x = geom.node_coords(i)[0];
        acc += p * (k * x).sin();
    }
    2.0 * acc / phi.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_geometry;
    use std::f64::consts::PI;

    fn sphere(dim: usize) -> Arc<DiscreteGeometry> {
        build_geometry(ModelGeometry::RoundSphere {
            dim,
            radius: 1.0,
            nodes: 32,
        })
        .unwrap()
    }

    #[test]
    fn sphere_flow_matches_closed_form() {
        let g = sphere(2);
        let traj = evolve_ricci(&g, 0.25, 1e-4).unwrap();
        let last = traj.state(traj.len() - 1);
        match last.params() {
            MetricParams::Sphere { r2 } => assert!((r2 - 0.5).abs() / 0.5 <= 1e-8),
            _ => unreachable!(),
        }
    }

    #[test]
    fn exact_sphere_values() {
        let g3 = build_geometry(ModelGeometry::RoundSphere {
            dim: 3,
            radius: 1.0,
            nodes: 16,
        })
        .unwrap();
        let traj = exact_sphere_trajectory(&g3, 0.2, 0.1).unwrap();
        match traj.state(1).params() {
            MetricParams::Sphere { r2 } => assert!((r2 - 0.6).abs() < 1e-15),
            _ => unreachable!(),
        }
        match traj.state(0).params() {
            MetricParams::Sphere { r2 } => assert_eq!(*r2, 1.0),
            _ => unreachable!(),
        }
        // Approaching extinction the radius goes to zero from above.
        let g2 = sphere(2);
        let near = exact_sphere_trajectory(&g2, 0.5 - 1e-9, 1e-3).unwrap();
        match near.state(near.len() - 1).params() {
            MetricParams::Sphere { r2 } => assert!(*r2 > 0.0 && *r2 < 1e-8),
            _ => unreachable!(),
        }
        assert!(exact_sphere_trajectory(&g2, 0.5, 1e-3).is_err());
    }

    #[test]
    fn blowup_guard_rejects_long_horizons() {
        let g = sphere(2);
        assert!(matches!(
            evolve_ricci(&g, 0.46, 1e-3),
            Err(LabError::Horizon { .. })
        ));
        assert!(evolve_ricci(&g, 0.45, 1e-3).is_ok());
    }

    #[test]
    fn flat_torus_is_a_fixed_point() {
        let g = build_geometry(ModelGeometry::square_flat_torus(2, 2.0 * PI, 16)).unwrap();
        let traj = evolve_ricci(&g, 0.7, 0.05).unwrap();
        for s in traj.states() {
            assert_eq!(s.params(), traj.state(0).params());
        }
        let probe = g.sample(|p| p[0].sin() * p[1].cos());
        let rep = evolution_identity_residuals(&traj, &probe).unwrap();
        for r in &rep.residuals {
            assert_eq!(r.max, 0.0, "{}", r.name);
        }
    }

    #[test]
    fn sphere_volume_decreases() {
        let g = sphere(3);
        let traj = evolve_ricci(&g, 0.2, 0.01).unwrap();
        let vols: Vec<f64> = traj.states().iter().map(volume).collect();
        assert!(vols.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn sphere_curvature_identity_reduces_to_scalar_ode() {
        let g = sphere(2);
        let traj = evolve_ricci(&g, 0.1, 1e-4).unwrap();
        let probe = g.sample(|p| p[0].cos());
        let rep = evolution_identity_residuals(&traj, &probe).unwrap();
        assert!(rep.max("scalar_curvature") <= 1e-6);
        assert!(rep.max("metric_inverse") <= 1e-6);
        assert!(rep.max("volume_element") <= 1e-6);
    }

    #[test]
    fn conformal_mode_decays_like_linear_theory() {
        let g = build_geometry(ModelGeometry::conformal_from_fn(
            [2.0 * PI; 2],
            [64, 64],
            |x, _| 0.01 * x.sin(),
        ))
        .unwrap();
        let traj = evolve_ricci(&g, 1.0, default_step(&g)).unwrap();
        let last = traj.state(traj.len() - 1);
        let amp = match last.params() {
            MetricParams::Conformal { phi } => sine_mode_amplitude(&g, phi),
            _ => unreachable!(),
        };
        let expect = 0.01 * (-1.0f64).exp();
        assert!((amp - expect).abs() / expect < 0.01, "amp {amp}");
    }

    #[test]
    fn interpolation_reproduces_nodes_and_linear_sphere() {
        let g = sphere(2);
        let traj = evolve_ricci(&g, 0.2, 0.01).unwrap();
        let s = traj.state_at(0.055).unwrap();
        match s.params() {
            MetricParams::Sphere { r2 } => assert!((r2 - (1.0 - 2.0 * 0.055)).abs() < 1e-13),
            _ => unreachable!(),
        }
        assert_eq!(
            traj.state_at(0.05).unwrap().params(),
            traj.state(5).params()
        );
    }

    #[test]
    fn stability_failure_is_reported() {
        let g = build_geometry(ModelGeometry::conformal_from_fn(
            [2.0 * PI; 2],
            [64, 64],
            |x, _| 0.01 * x.sin(),
        ))
        .unwrap();
        // 300 × the stable step needs more than 8 halvings.
        let dt = 300.0 * default_step(&g);
        assert!(matches!(
            evolve_ricci(&g, 2.0 * dt, dt),
            Err(LabError::Stability { .. })
        ));
    }
}
