//! Experiment configuration, tolerance calibration and the orchestration of
//! the verification checks into a run report.
//!
//! A run builds the geometry, integrates the flow, solves the conjugate heat
//! equation backward from the terminal data and then evaluates the selected
//! check groups. Every CSV artifact is rendered in memory and written once at
//! the end, so reruns with the same configuration produce identical files.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conjugate_heat::{
    conjugacy_residual, f_evolution_residual, mass_integral_drift, potential_f, solve_conjugate,
    terminal_data, total_mass, SolutionHistory, TerminalProfile, TrigField,
};
use crate::error::{LabError, Result};
use crate::geometry::{
    build_geometry, distance_field, geodesic_distance, laplace_beltrami, scalar_curvature,
    DiscreteGeometry, GeometryKind, ModelGeometry, ScalarField,
};
use crate::harnack::{
    curvature_hypothesis_applies, harnack_p, harnack_p_check, harnack_ratio_check,
    integrated_harnack_check, lemma_identity_residuals, liyau_form, p_evolution_residual,
    pinching_gap, random_pairs, ForwardField, IntegratedHarnackParams,
};
use crate::heat_kernel::torus_heat_kernel;
use crate::localization::{
    build_cutoff, build_cutoff_with, distance_dt_residual, laplacian_comparison,
    localized_bound_check, quadratic_root_bounds, LocalizationParams, CUTOFF_SAMPLES,
};
use crate::report::{GridMeta, ResidualReport};
use crate::ricci_flow::{
    default_step, evolve_ricci, sphere_extinction_time, MetricTrajectory, BLOWUP_GUARD,
};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "HARNACK_LAB_OUT";

/// Safety factor between the calibrated error constant and the tolerance.
const SAFETY: f64 = 2.0;
/// Floor for calibrated constants when every residual is at round-off.
const A_FLOOR: f64 = 1024.0 * f64::EPSILON;
/// Residuals below this are treated as round-off when measuring order.
const NOISE: f64 = 1e-11;
/// Smallest convergence order calibration accepts.
const MIN_ORDER: f64 = 1.5;
/// Width of the Gaussian used for the kernel oracle when the run's own
/// terminal data is not a kernel.
const ORACLE_TAU: f64 = 0.2;
/// Random triples for the quadratic containment check.
const QUADRATIC_TRIPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryFamily {
    FlatTorus,
    Sphere,
    ConformalTorus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: GeometryFamily,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub resolution: usize,
    /// Torus period along every axis.
    #[serde(default = "default_length")]
    pub length: f64,
    /// Initial sphere radius.
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Conformal torus: `φ₀ = a sin(2πx/L) cos(2πy/L)`.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_dim() -> usize {
    2
}
fn default_length() -> f64 {
    2.0 * PI
}
fn default_radius() -> f64 {
    1.0
}
fn default_amplitude() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub horizon: f64,
    /// Output step; the geometry's stable default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Constant,
    Gaussian,
    PeriodicGaussian,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalConfig {
    pub profile: ProfileKind,
    /// `τ` at the terminal time: the data is set at `t₁ = T − τ₁`. For the
    /// Gaussian profiles this is also the width.
    pub tau1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default = "default_value")]
    pub value: f64,
    #[serde(default = "default_cos_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_mode")]
    pub mode: u32,
}

fn default_value() -> f64 {
    1.0
}
fn default_cos_amplitude() -> f64 {
    0.3
}
fn default_mode() -> u32 {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Identities,
    Harnack,
    Ratio,
    Localize,
}

impl CheckKind {
    pub const ALL: [CheckKind; 4] = [
        CheckKind::Identities,
        CheckKind::Harnack,
        CheckKind::Ratio,
        CheckKind::Localize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Identities => "identities",
            CheckKind::Harnack => "harnack",
            CheckKind::Ratio => "ratio",
            CheckKind::Localize => "localize",
        }
    }
}

/// `"auto"`, a calibration record path, or a fixed constant `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ToleranceSpec {
    Constant(f64),
    Named(String),
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec::Named("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    /// Check names, or `"all"`.
    #[serde(default = "default_select")]
    pub select: Vec<String>,
    #[serde(default)]
    pub tolerance: ToleranceSpec,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Harnack checks start at `τ ≥ window·Δt`.
    #[serde(default = "default_window")]
    pub window: f64,
}

fn default_select() -> Vec<String> {
    vec!["all".into()]
}
fn default_pairs() -> usize {
    100
}
fn default_window() -> f64 {
    10.0
}

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig {
            select: default_select(),
            tolerance: ToleranceSpec::default(),
            pairs: default_pairs(),
            seed: 0,
            window: default_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationConfig {
    pub rho: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub flow: FlowConfig,
    pub terminal: TerminalConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization: Option<LocalizationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// Selected check groups in canonical order, each at most once.
    pub fn selected(&self) -> Result<Vec<CheckKind>> {
        let mut set = BTreeSet::new();
        for s in &self.checks.select {
            match s.as_str() {
                "all" => set.extend(CheckKind::ALL),
                "identities" => {
                    set.insert(CheckKind::Identities);
                }
                "harnack" => {
                    set.insert(CheckKind::Harnack);
                }
                "ratio" => {
                    set.insert(CheckKind::Ratio);
                }
                "localize" => {
                    set.insert(CheckKind::Localize);
                }
                other => {
                    return Err(LabError::Config(vec![format!(
                        "checks.select: unknown check {other:?} (identities, harnack, ratio, localize, all)"
                    )]))
                }
            }
        }
        Ok(set.into_iter().collect())
    }

    /// Coordinates of the terminal-data center, defaulted per geometry.
    pub fn center(&self) -> Vec<f64> {
        self.terminal
            .center
            .clone()
            .unwrap_or_else(|| match self.geometry.kind {
                GeometryFamily::Sphere => vec![0.0],
                _ => vec![0.5 * self.geometry.length; self.dim()],
            })
    }

    fn dim(&self) -> usize {
        match self.geometry.kind {
            GeometryFamily::ConformalTorus => 2,
            _ => self.geometry.dim,
        }
    }

    fn axes(&self) -> usize {
        match self.geometry.kind {
            GeometryFamily::Sphere => 1,
            _ => self.dim(),
        }
    }

    /// Localization parameters with defaults: a quarter period (torus) or a
    /// quarter meridian (sphere) and `δ = 1/(8n)`, centered on the data.
    pub fn localization(&self) -> LocalizationConfig {
        self.localization
            .clone()
            .unwrap_or_else(|| LocalizationConfig {
                rho: match self.geometry.kind {
                    GeometryFamily::Sphere => 0.25 * PI * self.geometry.radius,
                    _ => 0.25 * self.geometry.length,
                },
                delta: 1.0 / (8.0 * self.dim() as f64),
                center: None,
            })
    }

    /// Checks every field; the error lists all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let g = &self.geometry;
        if g.resolution < crate::geometry::MIN_GRID {
            errs.push(format!(
                "geometry.resolution must be at least {}, got {}",
                crate::geometry::MIN_GRID,
                g.resolution
            ));
        }
        match g.kind {
            GeometryFamily::ConformalTorus if g.dim != 2 => errs.push(format!(
                "geometry.dim must be 2 for the conformal torus, got {}",
                g.dim
            )),
            _ if !(1..=3).contains(&g.dim) => errs.push(format!(
                "geometry.dim must be between 1 and 3, got {}",
                g.dim
            )),
            GeometryFamily::Sphere if g.dim < 2 => {
                errs.push("geometry.dim must be at least 2 for the sphere".into())
            }
            _ => {}
        }
        if !(g.length > 0.0 && g.length.is_finite()) {
            errs.push(format!(
                "geometry.length must be positive, got {}",
                g.length
            ));
        }
        if !(g.radius > 0.0 && g.radius.is_finite()) {
            errs.push(format!(
                "geometry.radius must be positive, got {}",
                g.radius
            ));
        }
        if !g.amplitude.is_finite() {
            errs.push("geometry.amplitude must be finite".into());
        }
        let horizon = self.flow.horizon;
        if !(horizon > 0.0 && horizon.is_finite()) {
            errs.push(format!("flow.horizon must be positive, got {horizon}"));
        } else if g.kind == GeometryFamily::Sphere && g.dim >= 2 && g.radius > 0.0 {
            let limit = BLOWUP_GUARD * sphere_extinction_time(g.dim, g.radius);
            if horizon > limit {
                errs.push(format!(
                    "flow.horizon {horizon} exceeds {BLOWUP_GUARD} of the extinction time ({limit})"
                ));
            }
        }
        if let Some(dt) = self.flow.dt {
            if !(dt > 0.0 && dt < horizon) {
                errs.push(format!("flow.dt must lie in (0, horizon), got {dt}"));
            }
        }
        let t = &self.terminal;
        if !(t.tau1 > 0.0 && t.tau1 < horizon) {
            errs.push(format!(
                "terminal.tau1 must lie in (0, flow.horizon), got {}",
                t.tau1
            ));
        }
        if let Some(c) = &t.center {
            if c.len() != self.axes() {
                errs.push(format!(
                    "terminal.center needs {} coordinates, got {}",
                    self.axes(),
                    c.len()
                ));
            }
        }
        match t.profile {
            ProfileKind::Constant if !(t.value > 0.0 && t.value.is_finite()) => {
                errs.push(format!("terminal.value must be positive, got {}", t.value))
            }
            ProfileKind::Cosine if !(t.amplitude.abs() < 1.0) => errs.push(format!(
                "terminal.amplitude must lie in (-1, 1), got {}",
                t.amplitude
            )),
            ProfileKind::PeriodicGaussian if g.kind != GeometryFamily::FlatTorus => errs
                .push("terminal.profile periodic_gaussian needs geometry.kind flat_torus".into()),
            _ => {}
        }
        let c = &self.checks;
        let selected = match self.selected() {
            Ok(s) => s,
            Err(LabError::Config(mut e)) => {
                errs.append(&mut e);
                Vec::new()
            }
            Err(e) => return Err(e),
        };
        match &c.tolerance {
            ToleranceSpec::Constant(a) if !(*a > 0.0 && a.is_finite()) => {
                errs.push(format!("checks.tolerance must be positive, got {a}"))
            }
            ToleranceSpec::Named(s) if s != "auto" && !s.ends_with(".toml") => errs.push(format!(
                "checks.tolerance must be a number, \"auto\" or a calibration .toml path, got {s:?}"
            )),
            _ => {}
        }
        if selected.contains(&CheckKind::Ratio) && c.pairs == 0 {
            errs.push("checks.pairs must be at least 1".into());
        }
        if !(c.window >= 1.0) {
            errs.push(format!(
                "checks.window must be at least 1, got {}",
                c.window
            ));
        }
        let loc = self.localization();
        if !(loc.rho > 0.0 && loc.rho.is_finite()) {
            errs.push(format!(
                "localization.rho must be positive, got {}",
                loc.rho
            ));
        }
        let n = self.dim() as f64;
        if !(loc.delta > 0.0 && loc.delta < 1.0 / (4.0 * n)) {
            errs.push(format!(
                "localization.delta must satisfy 0 < delta < 1/(4n) = {} (n = {}), got {}",
                1.0 / (4.0 * n),
                self.dim(),
                loc.delta
            ));
        }
        if let Some(cn) = &loc.center {
            if cn.len() != self.axes() {
                errs.push(format!(
                    "localization.center needs {} coordinates, got {}",
                    self.axes(),
                    cn.len()
                ));
            } else if g.kind == GeometryFamily::Sphere && cn[0] != 0.0 {
                errs.push("localization.center must be the pole [0.0] on the sphere".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(LabError::Config(errs))
        }
    }

    fn model(&self, resolution: usize) -> ModelGeometry {
        let g = &self.geometry;
        match g.kind {
            GeometryFamily::FlatTorus => {
                ModelGeometry::square_flat_torus(g.dim, g.length, resolution)
            }
            GeometryFamily::Sphere => ModelGeometry::RoundSphere {
                dim: g.dim,
                radius: g.radius,
                nodes: resolution,
            },
            GeometryFamily::ConformalTorus => {
                let (l, a) = (g.length, g.amplitude);
                ModelGeometry::conformal_from_fn([l, l], [resolution; 2], move |x, y| {
                    a * (2.0 * PI * x / l).sin() * (2.0 * PI * y / l).cos()
                })
            }
        }
    }

    fn profile(&self, width: f64) -> TerminalProfile {
        let t = &self.terminal;
        match t.profile {
            ProfileKind::Constant => TerminalProfile::Constant { value: t.value },
            ProfileKind::Cosine => TerminalProfile::Cosine {
                amplitude: t.amplitude,
                mode: t.mode,
            },
            ProfileKind::Gaussian => TerminalProfile::Gaussian {
                center: self.center(),
                width,
            },
            ProfileKind::PeriodicGaussian => TerminalProfile::PeriodicGaussian {
                center: self.center(),
                width,
            },
        }
    }
}

/// Trajectory and conjugate solution of one configuration at one resolution.
struct Simulation {
    geom: Arc<DiscreteGeometry>,
    traj: Arc<MetricTrajectory>,
    hist: SolutionHistory,
}

fn simulate_at(
    config: &ExperimentConfig,
    resolution: usize,
    profile: Option<TerminalProfile>,
) -> Result<Simulation> {
    let geom = build_geometry(config.model(resolution))?;
    let dt = match (config.flow.dt, resolution == config.geometry.resolution) {
        (Some(dt), true) => dt,
        _ => default_step(&geom),
    };
    let traj = Arc::new(evolve_ricci(&geom, config.flow.horizon, dt)?);
    let k1 = terminal_node(&traj, config.terminal.tau1)?;
    let t1 = traj.time(k1);
    let profile = profile.unwrap_or_else(|| config.profile(traj.horizon() - t1));
    let w1 = terminal_data(traj.state(k1), &profile)?;
    let hist = solve_conjugate(&traj, &w1, t1, 0.0)?;
    Ok(Simulation { geom, traj, hist })
}

/// Trajectory node closest to `T − τ₁`, leaving at least two nodes on each side.
fn terminal_node(traj: &MetricTrajectory, tau1: f64) -> Result<usize> {
    let last = traj.len() - 1;
    let k = ((traj.horizon() - tau1) / traj.dt()).round();
    if k < 2.0 || k as usize + 1 > last {
        return Err(LabError::Precondition(format!(
            "terminal time T − τ₁ = {} leaves too few time nodes at Δt = {}",
            traj.horizon() - tau1,
            traj.dt()
        )));
    }
    Ok(k as usize)
}

/// Check family sharing one calibrated error constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Flow,
    Conjugate,
    Harnack,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Flow, Family::Conjugate, Family::Harnack];

    pub fn name(self) -> &'static str {
        match self {
            Family::Flow => "flow",
            Family::Conjugate => "conjugate",
            Family::Harnack => "harnack",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFit {
    pub family: String,
    /// Error constant in `tol = A (h² + Δt²)`.
    pub a: f64,
    /// Measured spatial order; NaN when both residuals are at round-off.
    pub order: f64,
    pub coarse: f64,
    pub fine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub geometry: String,
    pub profile: String,
    pub resolutions: [usize; 2],
    pub h: [f64; 2],
    pub dt: [f64; 2],
    pub families: Vec<FamilyFit>,
    pub hash: String,
}

impl CalibrationRecord {
    pub fn a(&self, family: Family) -> f64 {
        self.families
            .iter()
            .find(|f| f.family == family.name())
            .map_or(f64::NAN, |f| f.a)
    }

    fn canonical(&self) -> String {
        let mut copy = self.clone();
        copy.hash.clear();
        toml::to_string(&copy).unwrap_or_default()
    }

    fn digest(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// Parses a record and verifies its hash.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let rec: CalibrationRecord =
            toml::from_str(text).map_err(|e| LabError::Parse(e.to_string()))?;
        if rec.digest() != rec.hash {
            return Err(LabError::Parse(
                "calibration record hash does not match its contents".into(),
            ));
        }
        Ok(rec)
    }
}

/// Largest residual per family on one simulation, for the smooth suite.
fn family_residuals(sim: &Simulation, seed: u64) -> Result<[f64; 3]> {
    let probe = trig_probe(&sim.geom);
    let flow = max_residual(
        &crate::ricci_flow::evolution_identity_residuals(&sim.traj, &probe)?,
        &[],
    );
    let hist = &sim.hist;
    let mut conj = max_residual(&f_evolution_residual(hist)?, &[]);
    conj = conj.max(conjugacy_raw(hist, seed)?);
    let mut harn = max_residual(&lemma_identity_residuals(hist)?, &[]);
    harn = harn.max(max_residual(
        &p_evolution_residual(hist)?,
        &["p_evolution_shifted"],
    ));
    harn = harn.max(liyau_gap(hist)?);
    Ok([flow, conj, harn])
}

fn max_residual(rep: &ResidualReport, skip: &[&str]) -> f64 {
    rep.residuals
        .iter()
        .filter(|r| !skip.contains(&r.name.as_str()))
        .map(|r| r.max)
        .fold(0.0, f64::max)
}

fn trig_probe(geom: &Arc<DiscreteGeometry>) -> ScalarField {
    let scale: Vec<f64> = match geom.kind() {
        GeometryKind::Sphere => vec![2.0],
        _ => geom.lengths().iter().map(|l| 2.0 * PI / l).collect(),
    };
    geom.sample(|x| {
        x.iter()
            .zip(&scale)
            .enumerate()
            .map(|(a, (v, s))| ((a + 1) as f64 * s * v).cos())
            .sum()
    })
}

/// Raw two-sided duality residual for seeded trigonometric fields with a
/// temporal envelope over the history window.
fn conjugacy_raw(hist: &SolutionHistory, seed: u64) -> Result<f64> {
    let traj = hist.trajectory();
    let first = hist.trajectory_index(0);
    let last = hist.trajectory_index(hist.len() - 1);
    let env = Some((traj.time(first), traj.time(last)));
    let g = hist.geometry();
    let u =
        TrigField::random(g, seed.wrapping_mul(2).wrapping_add(1), env).history(traj, first, last);
    let v =
        TrigField::random(g, seed.wrapping_mul(2).wrapping_add(2), env).history(traj, first, last);
    Ok(conjugacy_residual(traj, &u, &v)?.raw)
}

/// `max |Li–Yau form − P|` over interior history nodes.
fn liyau_gap(hist: &SolutionHistory) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for j in 1..hist.len() - 1 {
        let form = liyau_form(hist, j)?;
        let p = harnack_p(hist.state(j), &potential_f(hist, j)?)?;
        for i in 0..p.values().len() {
            worst = worst.max((form[i] - p[i]).abs());
        }
    }
    Ok(worst)
}

/// The smooth data family calibration runs on: the run's own profile when
/// it is smooth, otherwise a cosine.
fn suite_profile(config: &ExperimentConfig) -> TerminalProfile {
    match config.terminal.profile {
        ProfileKind::Constant | ProfileKind::Cosine => config.profile(config.terminal.tau1),
        _ => TerminalProfile::Cosine {
            amplitude: default_cos_amplitude(),
            mode: default_mode(),
        },
    }
}

/// Fits `tol(h, Δt) = A (h² + Δt²)` per family from the smooth suite at half
/// and full resolution, refusing if a family converges slower than order
/// 1.5.
pub fn calibrate_tolerances(config: &ExperimentConfig) -> Result<CalibrationRecord> {
    config.validate()?;
    let fine = config.geometry.resolution;
    let coarse = fine / 2;
    if coarse < crate::geometry::MIN_GRID {
        return Err(LabError::Precondition(format!(
            "calibration halves the resolution; {fine} is too small"
        )));
    }
    let profile = suite_profile(config);
    let mut errors = Vec::new();
    let mut grids = Vec::new();
    for res in [coarse, fine] {
        let mut cfg = config.clone();
        cfg.flow.dt = None;
        let sim = simulate_at(&cfg, res, Some(profile.clone()))?;
        errors.push(family_residuals(&sim, config.checks.seed)?);
        grids.push(sim.traj.grid_meta());
    }
    let ratio_h = grids[0].h / grids[1].h;
    let mut families = Vec::new();
    for (k, fam) in Family::ALL.iter().enumerate() {
        let (ec, ef) = (errors[0][k], errors[1][k]);
        let order = if ec > NOISE && ef > NOISE {
            (ec / ef).ln() / ratio_h.ln()
        } else {
            f64::NAN
        };
        if order < MIN_ORDER {
            return Err(LabError::Precondition(format!(
                "{} residuals converge at order {order:.2} < {MIN_ORDER} ({ec:.3e} -> {ef:.3e}); refusing to calibrate",
                fam.name()
            )));
        }
        let a =
            (SAFETY * (ec / grids[0].error_scale()).max(ef / grids[1].error_scale())).max(A_FLOOR);
        families.push(FamilyFit {
            family: fam.name().into(),
            a,
            order,
            coarse: ec,
            fine: ef,
        });
    }
    let mut rec = CalibrationRecord {
        geometry: format!(
            "{:?} dim={} {:?}",
            config.geometry.kind,
            config.dim(),
            config.model(fine).clone().summary()
        ),
        profile: format!("{profile:?}"),
        resolutions: [coarse, fine],
        h: [grids[0].h, grids[1].h],
        dt: [grids[0].dt, grids[1].dt],
        families,
        hash: String::new(),
    };
    rec.hash = rec.digest();
    Ok(rec)
}

trait Summary {
    fn summary(&self) -> String;
}

impl Summary for ModelGeometry {
    fn summary(&self) -> String {
        match self {
            ModelGeometry::RoundSphere { radius, nodes, .. } => {
                format!("radius={radius} nodes={nodes}")
            }
            ModelGeometry::FlatTorus { lengths, sizes } => {
                format!("lengths={lengths:?} sizes={sizes:?}")
            }
            ModelGeometry::ConformalTorus2D { lengths, sizes, .. } => {
                format!("lengths={lengths:?} sizes={sizes:?}")
            }
        }
    }
}

/// Error constants in force for a run and where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub a: [f64; 3],
    /// `config` or the calibration record hash.
    pub source: String,
}

impl Tolerances {
    pub fn tol(&self, family: Family, grid: &GridMeta) -> f64 {
        let k = Family::ALL.iter().position(|f| *f == family).unwrap_or(0);
        self.a[k] * grid.error_scale()
    }
}

/// `≤` or `≥` against the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    AtLeast,
}

/// One reported quantity. Lines that are not asserted are informational.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub asserted: bool,
}

impl CheckLine {
    fn assert(name: impl Into<String>, value: f64, relation: Relation, bound: f64) -> Self {
        CheckLine {
            name: name.into(),
            value,
            relation,
            bound,
            asserted: true,
        }
    }

    fn info(name: impl Into<String>, value: f64) -> Self {
        CheckLine {
            name: name.into(),
            value,
            relation: Relation::AtMost,
            bound: f64::NAN,
            asserted: false,
        }
    }

    pub fn passed(&self) -> bool {
        if !self.asserted {
            return true;
        }
        match self.relation {
            Relation::AtMost => self.value <= self.bound,
            Relation::AtLeast => self.value >= self.bound,
        }
    }

    fn render(&self) -> String {
        let status = match (self.asserted, self.passed()) {
            (false, _) => "INFO",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        if self.asserted {
            let op = match self.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
            };
            format!(
                "{status} {} = {:.6e} {op} {:.6e}",
                self.name, self.value, self.bound
            )
        } else {
            format!("{status} {} = {:.6e}", self.name, self.value)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub kind: CheckKind,
    pub lines: Vec<CheckLine>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(CheckLine::passed)
    }

    pub fn line(&self, name: &str) -> Option<&CheckLine> {
        self.lines.iter().find(|l| l.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: String,
    pub grid: GridMeta,
    pub tolerances: Tolerances,
    pub checks: Vec<CheckResult>,
    pub wall_clock: f64,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn check(&self, kind: CheckKind) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.kind == kind)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "status: {}", if self.passed() { "PASS" } else { "FAIL" });
        let _ = writeln!(
            s,
            "grid: h={:.6e} dt={:.6e} nodes={}",
            self.grid.h, self.grid.dt, self.grid.nodes
        );
        let _ = writeln!(
            s,
            "tolerance: A(flow)={:.6e} A(conjugate)={:.6e} A(harnack)={:.6e} source={}",
            self.tolerances.a[0],
            self.tolerances.a[1],
            self.tolerances.a[2],
            self.tolerances.source
        );
        for fam in Family::ALL {
            let _ = writeln!(
                s,
                "tol({}) = {:.6e}",
                fam.name(),
                self.tolerances.tol(fam, &self.grid)
            );
        }
        for c in &self.checks {
            let _ = writeln!(
                s,
                "\n[{}] {}",
                c.kind.name(),
                if c.passed() { "PASS" } else { "FAIL" }
            );
            for l in &c.lines {
                let _ = writeln!(s, "  {}", l.render());
            }
        }
        let _ = writeln!(s, "\nartifacts: {}", self.artifacts.join(", "));
        let _ = writeln!(s, "wall_clock_seconds: {:.3}", self.wall_clock);
        let _ = writeln!(s, "\n# configuration\n{}", self.config);
        s
    }
}

/// Artifacts rendered in memory, written together at the end of a run.
#[derive(Default)]
struct Artifacts(Vec<(String, String)>);

impl Artifacts {
    fn add(&mut self, name: &str, render: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        render(&mut buf)?;
        self.0
            .push((name.into(), String::from_utf8_lossy(&buf).into_owned()));
        Ok(())
    }

    fn write(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.0 {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(self.0.iter().map(|(n, _)| n.clone()).collect())
    }
}

fn resolve_tolerances(
    config: &ExperimentConfig,
    out: &Path,
    files: &mut Artifacts,
) -> Result<Tolerances> {
    match &config.checks.tolerance {
        ToleranceSpec::Constant(a) => Ok(Tolerances {
            a: [*a; 3],
            source: "config".into(),
        }),
        ToleranceSpec::Named(name) if name == "auto" => {
            let rec = calibrate_tolerances(config)?;
            let text = rec.to_toml();
            files.add("calibration.toml", |b| {
                b.extend_from_slice(text.as_bytes());
                Ok(())
            })?;
            Ok(Tolerances {
                a: Family::ALL.map(|f| rec.a(f)),
                source: format!("calibration sha256:{}", rec.hash),
            })
        }
        ToleranceSpec::Named(path) => {
            let p = Path::new(path);
            let p = if p.is_relative() && !p.exists() {
                out.join(p)
            } else {
                p.to_path_buf()
            };
            let rec = CalibrationRecord::from_toml_str(&std::fs::read_to_string(&p)?)?;
            Ok(Tolerances {
                a: Family::ALL.map(|f| rec.a(f)),
                source: format!("calibration sha256:{}", rec.hash),
            })
        }
    }
}

/// Output directory: the config's `out`, else `$HARNACK_LAB_OUT`, else
/// `harnack-out`.
pub fn output_dir(config: &ExperimentConfig) -> PathBuf {
    config
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("harnack-out"))
}

/// Runs the configured checks and writes CSVs plus `summary.txt`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    execute(config, true)
}

/// Flow and conjugate solve only: trajectory and solution CSVs.
pub fn simulate(config: &ExperimentConfig) -> Result<RunReport> {
    execute(config, false)
}

fn execute(config: &ExperimentConfig, with_checks: bool) -> Result<RunReport> {
    let start = Instant::now();
    config.validate()?;
    let out = output_dir(config);
    let selected = if with_checks {
        config.selected()?
    } else {
        Vec::new()
    };
    let sim = simulate_at(config, config.geometry.resolution, None)?;
    let grid = sim.traj.grid_meta();
    let mut files = Artifacts::default();
    files.add("trajectory.csv", |b| sim.traj.write_csv(b))?;
    let stride = (sim.hist.len() / 8).max(1);
    files.add("solution.csv", |b| sim.hist.write_csv(b, stride))?;
    let tolerances = if selected.is_empty() {
        Tolerances {
            a: [f64::NAN; 3],
            source: "none".into(),
        }
    } else {
        resolve_tolerances(config, &out, &mut files)?
    };
    let mut checks = Vec::new();
    for kind in selected {
        let lines = match kind {
            CheckKind::Identities => identities(config, &sim, &tolerances, &mut files)?,
            CheckKind::Harnack => harnack(config, &sim, &tolerances, &mut files)?,
            CheckKind::Ratio => ratio(config, &sim, &tolerances, &mut files)?,
            CheckKind::Localize => localize(config, &sim, &tolerances, &mut files)?,
        };
        checks.push(CheckResult { kind, lines });
    }
    let mut report = RunReport {
        config: config.to_toml(),
        grid,
        tolerances,
        checks,
        wall_clock: 0.0,
        artifacts: files.0.iter().map(|(n, _)| n.clone()).collect(),
    };
    report.artifacts.push("summary.txt".into());
    report.wall_clock = start.elapsed().as_secs_f64();
    let summary = report.summary();
    files.add("summary.txt", |b| {
        b.extend_from_slice(summary.as_bytes());
        Ok(())
    })?;
    files.write(&out)?;
    Ok(report)
}

fn push_residuals(
    lines: &mut Vec<CheckLine>,
    prefix: &str,
    rep: &ResidualReport,
    tol: f64,
    info: &[&str],
) {
    for r in &rep.residuals {
        let name = format!("{prefix}:{}", r.name);
        if info.contains(&r.name.as_str()) {
            lines.push(CheckLine::info(name, r.max));
        } else {
            lines.push(CheckLine::assert(name, r.max, Relation::AtMost, tol));
        }
    }
}

fn identities(
    config: &ExperimentConfig,
    sim: &Simulation,
    tols: &Tolerances,
    files: &mut Artifacts,
) -> Result<Vec<CheckLine>> {
    let grid = sim.traj.grid_meta();
    let (tf, tc, th) = (
        tols.tol(Family::Flow, &grid),
        tols.tol(Family::Conjugate, &grid),
        tols.tol(Family::Harnack, &grid),
    );
    let mut lines = Vec::new();
    let flow = crate::ricci_flow::evolution_identity_residuals(&sim.traj, &trig_probe(&sim.geom))?;
    push_residuals(&mut lines, "flow", &flow, tf, &[]);
    if sim.geom.kind() == GeometryKind::Sphere {
        lines.push(CheckLine::assert(
            "flow:dR/dt=2R^2/n",
            sphere_curvature_rate(&sim.traj),
            Relation::AtMost,
            tf,
        ));
    }
    let fe = f_evolution_residual(&sim.hist)?;
    push_residuals(&mut lines, "conjugate", &fe, tc, &[]);
    lines.push(CheckLine::assert(
        "conjugate:duality",
        conjugacy_raw(&sim.hist, config.checks.seed)?,
        Relation::AtMost,
        tc,
    ));
    lines.push(CheckLine::assert(
        "conjugate:mass_drift",
        mass_integral_drift(&sim.hist),
        Relation::AtMost,
        5.0 * tc,
    ));
    let lemma = lemma_identity_residuals(&sim.hist)?;
    push_residuals(&mut lines, "harnack", &lemma, th, &[]);
    let pe = p_evolution_residual(&sim.hist)?;
    push_residuals(&mut lines, "harnack", &pe, th, &["p_evolution_shifted"]);
    lines.push(CheckLine::assert(
        "harnack:liyau_vs_P",
        liyau_gap(&sim.hist)?,
        Relation::AtMost,
        th,
    ));
    let (gap, ident) = pinching(&sim.hist)?;
    lines.push(CheckLine::assert(
        "harnack:pinching_gap_min",
        gap,
        Relation::AtLeast,
        -th,
    ));
    lines.push(CheckLine::info("harnack:pinching_identity", ident));

    files.add("identities_flow.csv", |b| flow.write_csv(b))?;
    files.add("identities_conjugate.csv", |b| fe.write_csv(b))?;
    files.add("identities_lemma.csv", |b| lemma.write_csv(b))?;
    files.add("identities_p_evolution.csv", |b| pe.write_csv(b))?;
    Ok(lines)
}

/// `max |dR/dt − 2R²/n|` from centered differences on the sphere.
fn sphere_curvature_rate(traj: &MetricTrajectory) -> f64 {
    let n = traj.geometry().dim() as f64;
    let r: Vec<f64> = traj
        .states()
        .iter()
        .map(|s| scalar_curvature(s)[0])
        .collect();
    (1..r.len() - 1)
        .map(|k| ((r[k + 1] - r[k - 1]) / (2.0 * traj.dt()) - 2.0 * r[k] * r[k] / n).abs())
        .fold(0.0, f64::max)
}

/// Smallest Cauchy–Schwarz gap and largest identity deviation over the history.
fn pinching(hist: &SolutionHistory) -> Result<(f64, f64)> {
    let mut gap = f64::INFINITY;
    let mut ident: f64 = 0.0;
    for j in 0..hist.len() {
        let pg = pinching_gap(hist.state(j), &potential_f(hist, j)?)?;
        gap = gap.min(pg.gap.min());
        ident = ident.max(pg.identity_residual);
    }
    Ok((gap, ident))
}

fn harnack(
    config: &ExperimentConfig,
    sim: &Simulation,
    tols: &Tolerances,
    files: &mut Artifacts,
) -> Result<Vec<CheckLine>> {
    let grid = sim.traj.grid_meta();
    let th = tols.tol(Family::Harnack, &grid);
    let applies = curvature_hypothesis_applies(&sim.traj, tols.tol(Family::Flow, &grid));
    let rep = harnack_p_check(&sim.hist, th, config.checks.window)?;
    let mut lines = vec![if applies {
        CheckLine::assert("max_P", rep.max(), Relation::AtMost, th)
    } else {
        CheckLine::info("max_P (R >= 0 fails)", rep.max())
    }];
    lines.push(CheckLine::info(
        "min_scalar_curvature",
        rep.note_value("min_scalar_curvature").unwrap_or(f64::NAN),
    ));
    files.add("harnack_p.csv", |b| rep.write_csv(b))?;
    if sim.geom.kind() == GeometryKind::FlatTorus {
        let (err, mass, bound) = kernel_oracle(config, sim)?;
        lines.push(CheckLine::assert(
            "kernel_oracle_P_error",
            err,
            Relation::AtMost,
            bound,
        ));
        lines.push(CheckLine::assert(
            "kernel_mass_error",
            mass,
            Relation::AtMost,
            tols.tol(Family::Conjugate, &grid),
        ));
    }
    Ok(lines)
}

/// Solves from the lattice-sum kernel and compares `P` with its closed form
/// on `d ≤ L/4`. Returns the error, the mass defect and the `5h²` bound.
fn kernel_oracle(config: &ExperimentConfig, sim: &Simulation) -> Result<(f64, f64, f64)> {
    let (hist, center) = match config.terminal.profile {
        ProfileKind::PeriodicGaussian => (sim.hist.clone(), config.center()),
        _ => {
            let mut cfg = config.clone();
            cfg.terminal.profile = ProfileKind::PeriodicGaussian;
            cfg.terminal.tau1 = ORACLE_TAU.min(0.75 * config.flow.horizon);
            cfg.terminal.center = None;
            let center = cfg.center();
            (
                simulate_at(&cfg, cfg.geometry.resolution, None)?.hist,
                center,
            )
        }
    };
    let g = hist.geometry();
    let quarter = 0.25 * g.lengths().iter().cloned().fold(f64::INFINITY, f64::min);
    let m0 = hist.state(0);
    let d = distance_field(m0, &center);
    let mut err: f64 = 0.0;
    for j in 0..hist.len() {
        let tau = hist.tau(j);
        if tau < config.checks.window * hist.dt() {
            continue;
        }
        let p = harnack_p(hist.state(j), &potential_f(&hist, j)?)?;
        for i in 0..g.node_count() {
            if d[i] <= quarter {
                let exact =
                    torus_heat_kernel(g.lengths(), &g.node_coords(i), &center, tau).harnack_p(tau);
                err = err.max((p[i] - exact).abs());
            }
        }
    }
    let mass = (0..hist.len())
        .map(|j| (total_mass(&hist, j) - 1.0).abs())
        .fold(0.0, f64::max);
    Ok((err, mass, 5.0 * g.h() * g.h()))
}

fn ratio(
    config: &ExperimentConfig,
    sim: &Simulation,
    tols: &Tolerances,
    files: &mut Artifacts,
) -> Result<Vec<CheckLine>> {
    let grid = sim.traj.grid_meta();
    let th = tols.tol(Family::Harnack, &grid);
    let mut lines = Vec::new();
    if !curvature_hypothesis_applies(&sim.traj, tols.tol(Family::Flow, &grid)) {
        lines.push(CheckLine::info(
            "ratio (R >= 0 fails, not evaluated)",
            f64::NAN,
        ));
        return Ok(lines);
    }
    let times: Vec<f64> = (0..sim.hist.len()).map(|j| sim.hist.time(j)).collect();
    let pairs = random_pairs(&sim.geom, &times, config.checks.pairs, config.checks.seed);
    let rep = harnack_ratio_check(&sim.hist, &pairs, th)?;
    lines.push(CheckLine::assert(
        "ratio_min_margin",
        rep.min_margin(),
        Relation::AtLeast,
        -th,
    ));
    lines.push(CheckLine::assert(
        "ratio_min_margin_integral_R",
        rep.note_value("min_margin_integral").unwrap_or(f64::NAN),
        Relation::AtLeast,
        -th,
    ));
    files.add("ratio.csv", |b| rep.write_csv(b))?;

    if sim.geom.kind() == GeometryKind::FlatTorus {
        // Θ on a static metric is d²/(t₂ − t₁).
        let theta_col = rep.key_names.len() - 2;
        let mut worst: f64 = 0.0;
        for (p, s) in pairs.iter().zip(&rep.samples) {
            let d = geodesic_distance(sim.traj.state(0), &p.x1, &p.x2)?;
            let exact = d * d / (p.t2 - p.t1);
            if exact > 0.0 {
                worst = worst.max((s.key[theta_col] - exact).abs() / exact);
            }
        }
        lines.push(CheckLine::assert(
            "theta_static_relative_error",
            worst,
            Relation::AtMost,
            0.01,
        ));

        let u = ForwardField::from_static_conjugate(&sim.hist)?;
        let beta = u.measure_beta(1.0)?.max(f64::EPSILON);
        let params = IntegratedHarnackParams::new(1.0, beta)?;
        let inner = &u.times()[1..u.times().len() - 1];
        let fpairs = random_pairs(
            &sim.geom,
            inner,
            config.checks.pairs,
            config.checks.seed ^ 0x5eed,
        );
        let irep = integrated_harnack_check(&u, params, &fpairs, th)?;
        lines.push(CheckLine::info("forward_beta", beta));
        lines.push(CheckLine::assert(
            "forward_min_margin",
            irep.min_margin(),
            Relation::AtLeast,
            -th,
        ));
        lines.push(CheckLine::info(
            "forward_min_margin_exchanged_form",
            irep.note_value("min_margin_exchanged_form")
                .unwrap_or(f64::NAN),
        ));
        files.add("forward_ratio.csv", |b| irep.write_csv(b))?;
    }
    Ok(lines)
}

fn localize(
    config: &ExperimentConfig,
    sim: &Simulation,
    tols: &Tolerances,
    files: &mut Artifacts,
) -> Result<Vec<CheckLine>> {
    let loc = config.localization();
    // Sphere distances are exact only from the pole.
    let center = loc.center.clone().unwrap_or_else(|| match sim.geom.kind() {
        GeometryKind::Sphere => vec![0.0],
        _ => config.center(),
    });
    let mut lines = Vec::new();

    let cutoff = build_cutoff(loc.rho)?;
    let doubled = build_cutoff_with(loc.rho, 2 * CUTOFF_SAMPLES)?;
    lines.push(CheckLine::assert(
        "cutoff_violations",
        cutoff.violations() as f64,
        Relation::AtMost,
        0.0,
    ));
    lines.push(CheckLine::info("cutoff_C1", cutoff.c1));
    lines.push(CheckLine::info("cutoff_C2", cutoff.c2));
    lines.push(CheckLine::assert(
        "cutoff_C1_doubling_change",
        (doubled.c1 / cutoff.c1 - 1.0).abs(),
        Relation::AtMost,
        0.01,
    ));
    lines.push(CheckLine::assert(
        "cutoff_C2_doubling_change",
        (doubled.c2 / cutoff.c2 - 1.0).abs(),
        Relation::AtMost,
        0.01,
    ));
    files.add("cutoff.csv", |b| cutoff.write_csv(b, 100))?;

    lines.push(CheckLine::assert(
        "quadratic_containment_failures",
        quadratic_failures(config.checks.seed) as f64,
        Relation::AtMost,
        0.0,
    ));

    if sim.geom.kind() == GeometryKind::Sphere {
        lines.push(CheckLine::assert(
            "laplacian_comparison_model_error",
            sphere_comparison_error(&sim.geom)?,
            Relation::AtMost,
            1e-6,
        ));
    }

    // A point at distance ρ from the center along the first axis.
    let mut x = center.clone();
    x[0] += match sim.geom.kind() {
        GeometryKind::Sphere => loc.rho / config.geometry.radius,
        _ => loc.rho,
    };
    match distance_dt_residual(&sim.traj, &x, &center) {
        Ok(rate) => {
            let r = rate.max_residual();
            lines.push(match sim.geom.kind() {
                GeometryKind::Sphere => {
                    CheckLine::assert("distance_rate_residual", r, Relation::AtMost, 1e-6)
                }
                GeometryKind::FlatTorus => {
                    CheckLine::assert("distance_rate_residual", r, Relation::AtMost, 1e-12)
                }
                GeometryKind::ConformalTorus => CheckLine::info("distance_rate_residual", r),
            });
        }
        Err(LabError::CutLocus) => lines.push(CheckLine::info(
            "distance_rate_residual (cut locus)",
            f64::NAN,
        )),
        Err(e) => return Err(e),
    }

    let params = LocalizationParams::measure(&sim.hist, &center, loc.rho, loc.delta, &cutoff)?;
    let rep = localized_bound_check(&sim.hist, &params, 0.0)?;
    let applies =
        curvature_hypothesis_applies(&sim.traj, tols.tol(Family::Flow, &sim.traj.grid_meta()));
    lines.push(CheckLine::info("K", params.k));
    lines.push(CheckLine::info("C", params.c()));
    lines.push(CheckLine::info("points_checked", rep.len() as f64));
    lines.push(if applies {
        CheckLine::assert(
            "localized_min_margin",
            rep.min_margin(),
            Relation::AtLeast,
            0.0,
        )
    } else {
        CheckLine::info("localized_min_margin (R >= 0 fails)", rep.min_margin())
    });
    lines.push(CheckLine::info(
        "localized_min_relative_slack",
        rep.note_value("min_relative_slack").unwrap_or(f64::NAN),
    ));
    files.add("localized.csv", |b| rep.write_csv(b))?;
    Ok(lines)
}

/// Failures of the widened-interval containment over seeded random triples.
fn quadratic_failures(seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a0d);
    (0..QUADRATIC_TRIPLES)
        .filter(|_| {
            let p = 10f64.powf(rng.gen_range(-3.0..3.0));
            let q = 10f64.powf(rng.gen_range(-3.0..3.0));
            let r = -(10f64.powf(rng.gen_range(-3.0..3.0)));
            !quadratic_root_bounds(p, q, r).is_ok_and(|b| b.contains_exact())
        })
        .count()
}

/// `max |Δd − comparison|` on the initial sphere for `d ∈ [0.2, π − 0.2]·r`.
fn sphere_comparison_error(geom: &Arc<DiscreteGeometry>) -> Result<f64> {
    let m = geom.initial_metric();
    let r = m.metric_spacing() / geom.h();
    let d = distance_field(&m, &[0.0]);
    let lap = laplace_beltrami(&m, &d)?;
    let k = 1.0 / (r * r);
    let mut worst: f64 = 0.0;
    for i in 0..geom.node_count() {
        if d[i] >= 0.2 * r && d[i] <= (PI - 0.2) * r {
            worst = worst.max((lap[i] - laplacian_comparison(k, d[i], geom.dim())?).abs());
        }
    }
    Ok(worst)
}
