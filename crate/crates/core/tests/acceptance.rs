//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line each and exits nonzero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use harnack_lab::conjugate_heat::{
    potential_f, solve_conjugate, terminal_data, SolutionHistory, TerminalProfile,
};
use harnack_lab::experiment::{
    calibrate_tolerances, run_experiment, CheckKind, ExperimentConfig, Family, RunReport,
};
use harnack_lab::geometry::{
    build_geometry, geodesic_distance, MetricParams, ModelGeometry, ScalarField,
};
use harnack_lab::harnack::{
    harnack_p, harnack_ratio_check, integrated_harnack_check, lemma_identity_residuals, liyau_form,
    p_evolution_residual, random_pairs, ForwardField, IntegratedHarnackParams, SpaceTimePair,
};
use harnack_lab::report::ResidualReport;
use harnack_lab::ricci_flow::{
    default_step, evolution_identity_residuals, evolve_ricci, sphere_extinction_time,
    sphere_radius_sq,
};
use harnack_lab::Result;

const FLAT_ALL: &str = r#"
[geometry]
kind = "flat_torus"
resolution = 64
[flow]
horizon = 0.3
[terminal]
profile = "cosine"
tau1 = 0.1
[checks]
select = ["all"]
seed = 7
"#;

const FLAT_KERNEL: &str = r#"
[geometry]
kind = "flat_torus"
resolution = 64
[flow]
horizon = 0.3
[terminal]
profile = "periodic_gaussian"
tau1 = 0.2
[checks]
select = ["harnack", "localize"]
seed = 7
"#;

const SPHERE_ALL: &str = r#"
[geometry]
kind = "sphere"
resolution = 64
[flow]
horizon = 0.2
[terminal]
profile = "cosine"
tau1 = 0.1
[checks]
select = ["all"]
seed = 7
"#;

const SPHERE_CONSTANT: &str = r#"
[geometry]
kind = "sphere"
resolution = 64
[flow]
horizon = 0.1
dt = 1e-4
[terminal]
profile = "constant"
tau1 = 0.05
[checks]
select = ["identities"]
"#;

const CONFORMAL: &str = r#"
[geometry]
kind = "conformal_torus"
resolution = 64
amplitude = 0.1
[flow]
horizon = 0.3
[terminal]
profile = "cosine"
tau1 = 0.1
[checks]
select = ["identities"]
"#;

struct Runs {
    flat: RunReport,
    flat_again_identical: bool,
    flat_seconds: f64,
    kernel: RunReport,
    sphere: RunReport,
    sphere_constant: RunReport,
    conformal: RunReport,
}

fn run(text: &str, out: &Path) -> Result<RunReport> {
    let mut config = ExperimentConfig::from_toml_str(text)?;
    config.out = Some(out.to_path_buf());
    run_experiment(&config)
}

fn same_artifacts(a: &Path, b: &Path) -> bool {
    let Ok(entries) = std::fs::read_dir(a) else {
        return false;
    };
    entries.flatten().all(|e| {
        let name = e.file_name();
        // The summary carries wall-clock time and the output path.
        name == "summary.txt" || std::fs::read(e.path()).ok() == std::fs::read(b.join(&name)).ok()
    })
}

impl Runs {
    fn new(dir: &Path) -> Result<Self> {
        let start = Instant::now();
        let flat = run(FLAT_ALL, &dir.join("flat"))?;
        let flat_seconds = start.elapsed().as_secs_f64();
        run(FLAT_ALL, &dir.join("flat-again"))?;
        Ok(Runs {
            flat,
            flat_again_identical: same_artifacts(&dir.join("flat"), &dir.join("flat-again")),
            flat_seconds,
            kernel: run(FLAT_KERNEL, &dir.join("kernel"))?,
            sphere: run(SPHERE_ALL, &dir.join("sphere"))?,
            sphere_constant: run(SPHERE_CONSTANT, &dir.join("sphere-constant"))?,
            conformal: run(CONFORMAL, &dir.join("conformal"))?,
        })
    }
}

/// Asserted report line: `(passed, value, bound)`.
fn line(report: &RunReport, kind: CheckKind, name: &str) -> (bool, f64, f64) {
    match report.check(kind).and_then(|c| c.line(name)) {
        Some(l) => (l.asserted && l.passed(), l.value, l.bound),
        None => (false, f64::NAN, f64::NAN),
    }
}

/// Collects sub-results of one criterion.
#[derive(Default)]
struct Verdict {
    ok: bool,
    parts: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Verdict {
            ok: true,
            parts: Vec::new(),
        }
    }

    fn check(&mut self, label: &str, ok: bool, detail: String) {
        self.ok &= ok;
        self.parts.push(format!(
            "{label}{} {detail}",
            if ok { "" } else { " [FAILED]" }
        ));
    }

    fn line(&mut self, label: &str, (ok, value, bound): (bool, f64, f64)) {
        self.check(label, ok, format!("{value:.3e} (bound {bound:.3e})"));
    }
}

fn flat_history(
    n: usize,
    horizon: f64,
    tau1: f64,
    profile: impl Fn(f64) -> TerminalProfile,
) -> Result<SolutionHistory> {
    let geom = build_geometry(ModelGeometry::square_flat_torus(2, 2.0 * PI, n))?;
    let traj = Arc::new(evolve_ricci(&geom, horizon, default_step(&geom))?);
    let k1 = ((horizon - tau1) / traj.dt()).round() as usize;
    let t1 = traj.time(k1);
    let w1 = terminal_data(traj.state(k1), &profile(horizon - t1))?;
    solve_conjugate(&traj, &w1, t1, 0.0)
}

fn probe(geom: &Arc<harnack_lab::geometry::DiscreteGeometry>) -> ScalarField {
    geom.sample(|x: &[f64]| x[0].cos() + (2.0 * x[1]).cos())
}

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

fn criterion_1() -> Result<Verdict> {
    let mut v = Verdict::new();
    for dim in [2, 3] {
        let geom = build_geometry(ModelGeometry::RoundSphere {
            dim,
            radius: 1.0,
            nodes: 64,
        })?;
        let horizon = 0.85 * sphere_extinction_time(dim, 1.0);
        let traj = evolve_ricci(&geom, horizon, 1e-4)?;
        let mut worst: f64 = 0.0;
        for (k, s) in traj.states().iter().enumerate() {
            if let MetricParams::Sphere { r2 } = s.params() {
                let exact = sphere_radius_sq(dim, 1.0, traj.time(k));
                worst = worst.max((r2 - exact).abs() / exact);
            } else {
                worst = f64::NAN;
            }
        }
        v.check(
            &format!("n={dim} max rel err"),
            worst <= 1e-8,
            format!("{worst:.2e} <= 1e-8"),
        );
    }
    Ok(v)
}

fn criterion_2(runs: &Runs) -> Result<Verdict> {
    let mut v = Verdict::new();
    let mut reports = Vec::new();
    for n in [64, 128] {
        let geom = build_geometry(ModelGeometry::conformal_from_fn(
            [2.0 * PI; 2],
            [n; 2],
            |x, y| 0.1 * x.sin() * y.cos(),
        ))?;
        let traj = evolve_ricci(&geom, 0.1, default_step(&geom))?;
        reports.push(evolution_identity_residuals(&traj, &probe(&geom))?);
    }
    let refined = ResidualReport::with_refinement(&reports[0], &reports[1]);
    for name in [
        "metric_inverse",
        "volume_element",
        "scalar_curvature",
        "laplacian_evolution",
    ] {
        let order = refined.order(name);
        v.check(name, order >= 1.8, format!("order {order:.2} >= 1.8"));
    }
    let (_, rate, _) = line(
        &runs.sphere_constant,
        CheckKind::Identities,
        "flow:dR/dt=2R^2/n",
    );
    v.check(
        "sphere dR/dt - 2R^2/n",
        rate <= 1e-6,
        format!("{rate:.2e} <= 1e-6"),
    );
    Ok(v)
}

fn criterion_3(runs: &Runs) -> Result<Verdict> {
    let mut v = Verdict::new();
    v.line("flat max P", line(&runs.flat, CheckKind::Harnack, "max_P"));
    v.line(
        "sphere max P",
        line(&runs.sphere, CheckKind::Harnack, "max_P"),
    );
    v.line(
        "kernel P error (5h^2)",
        line(&runs.kernel, CheckKind::Harnack, "kernel_oracle_P_error"),
    );
    Ok(v)
}

fn criterion_4(runs: &Runs) -> Result<Verdict> {
    let mut v = Verdict::new();
    for name in [
        "harnack:lemma_laplacian",
        "harnack:lemma_gradient",
        "harnack:bochner",
        "harnack:p_evolution",
        "harnack:liyau_vs_P",
    ] {
        v.line(name, line(&runs.flat, CheckKind::Identities, name));
    }
    let cosine = |_| TerminalProfile::Cosine {
        amplitude: 0.3,
        mode: 2,
    };
    let mut errs = Vec::new();
    for n in [64, 128] {
        let hist = flat_history(n, 0.3, 0.1, cosine)?;
        let lemma = lemma_identity_residuals(&hist)?;
        let pe = p_evolution_residual(&hist)?;
        errs.push([
            lemma.max("lemma_laplacian"),
            lemma.max("lemma_gradient"),
            lemma.max("bochner"),
            pe.max("p_evolution"),
            liyau_gap(&hist)?,
        ]);
    }
    for (k, name) in [
        "lemma_laplacian",
        "lemma_gradient",
        "bochner",
        "p_evolution",
        "liyau_vs_P",
    ]
    .iter()
    .enumerate()
    {
        let ratio = errs[0][k] / errs[1][k];
        v.check(
            &format!("{name} 64->128 ratio"),
            ratio >= 3.5,
            format!("{ratio:.2} >= 3.5"),
        );
    }
    v.line(
        "flat pinching gap",
        line(
            &runs.flat,
            CheckKind::Identities,
            "harnack:pinching_gap_min",
        ),
    );
    v.line(
        "sphere pinching gap",
        line(
            &runs.sphere,
            CheckKind::Identities,
            "harnack:pinching_gap_min",
        ),
    );
    let (_, gap, _) = line(
        &runs.sphere_constant,
        CheckKind::Identities,
        "harnack:pinching_gap_min",
    );
    v.check(
        "proportional case gap",
        gap.abs() <= 1e-12,
        format!("{gap:.2e} == 0"),
    );
    Ok(v)
}

fn criterion_5(runs: &Runs) -> Result<Verdict> {
    let mut v = Verdict::new();
    v.line(
        "flat duality",
        line(&runs.flat, CheckKind::Identities, "conjugate:duality"),
    );
    v.line(
        "sphere duality",
        line(&runs.sphere, CheckKind::Identities, "conjugate:duality"),
    );
    v.line(
        "conformal duality",
        line(&runs.conformal, CheckKind::Identities, "conjugate:duality"),
    );
    for (label, r) in [
        ("flat", &runs.flat),
        ("sphere", &runs.sphere),
        ("sphere constant", &runs.sphere_constant),
        ("conformal", &runs.conformal),
    ] {
        v.line(
            &format!("{label} mass drift"),
            line(r, CheckKind::Identities, "conjugate:mass_drift"),
        );
    }
    v.line(
        "Gaussian mass",
        line(&runs.kernel, CheckKind::Harnack, "kernel_mass_error"),
    );
    Ok(v)
}

fn criterion_6(runs: &Runs) -> Result<Verdict> {
    let mut v = Verdict::new();
    for (label, r) in [("flat", &runs.flat), ("sphere", &runs.sphere)] {
        v.line(
            &format!("{label} sup-R margin"),
            line(r, CheckKind::Ratio, "ratio_min_margin"),
        );
        v.line(
            &format!("{label} integral-R margin"),
            line(r, CheckKind::Ratio, "ratio_min_margin_integral_R"),
        );
    }
    // Constant solution on the flat torus: the margin is n log(τ₁/τ₂) + Θ/2.
    let hist = flat_history(64, 0.3, 0.1, |_| TerminalProfile::Constant { value: 1.0 })?;
    let config = ExperimentConfig::from_toml_str(FLAT_ALL)?;
    let tol = calibrate_tolerances(&config)?.a(Family::Harnack)
        * hist.trajectory().grid_meta().error_scale();
    let times: Vec<f64> = (0..hist.len()).map(|j| hist.time(j)).collect();
    let mut pairs = random_pairs(hist.geometry(), &times, 100, 7);
    let same: Vec<SpaceTimePair> = pairs
        .iter()
        .map(|p| SpaceTimePair {
            x2: p.x1.clone(),
            ..p.clone()
        })
        .collect();
    pairs.extend(same);
    let rep = harnack_ratio_check(&hist, &pairs, tol)?;
    let theta_col = rep.key_names.len() - 2;
    let horizon = hist.trajectory().horizon();
    let mut worst: f64 = 0.0;
    for (p, s) in pairs.iter().zip(&rep.samples) {
        let expect = 2.0 * ((horizon - p.t1) / (horizon - p.t2)).ln() + 0.5 * s.key[theta_col];
        worst = worst.max((s.margin - expect).abs());
    }
    v.check(
        "constant solution margin",
        worst <= tol,
        format!("{worst:.2e} <= {tol:.3e}"),
    );
    Ok(v)
}

fn criterion_7() -> Result<Verdict> {
    let mut v = Verdict::new();
    let hist = flat_history(64, 0.3, 0.2, |width| TerminalProfile::PeriodicGaussian {
        center: vec![PI, PI],
        width,
    })?;
    let config = ExperimentConfig::from_toml_str(FLAT_ALL)?;
    let tol = calibrate_tolerances(&config)?.a(Family::Harnack)
        * hist.trajectory().grid_meta().error_scale();
    let u = ForwardField::from_static_conjugate(&hist)?;
    let beta = u.measure_beta(1.0)?;
    let params = IntegratedHarnackParams::new(1.0, beta)?;
    let hypothesis = u.check_hypothesis(params, tol);
    v.check(
        "hypothesis holds",
        hypothesis.is_ok(),
        format!("alpha = 1, beta = {beta:.4}"),
    );
    let inner = &u.times()[1..u.times().len() - 1];
    let pairs = random_pairs(hist.geometry(), inner, 100, 7);
    let rep = integrated_harnack_check(&u, params, &pairs, tol)?;
    let margin = rep.min_margin();
    v.check(
        "pair margins",
        margin >= -tol,
        format!("{margin:.3e} >= {:.3e}", -tol),
    );
    let theta_col = rep.key_names.len() - 1;
    let mut worst: f64 = 0.0;
    for (p, s) in pairs.iter().zip(&rep.samples) {
        let d = geodesic_distance(u.metric(), &p.x1, &p.x2)?;
        let exact = d * d / (p.t2 - p.t1);
        if exact > 0.0 {
            worst = worst.max((s.key[theta_col] - exact).abs() / exact);
        }
    }
    v.check(
        "theta vs d^2/(t2-t1)",
        worst <= 0.01,
        format!("{worst:.2e} <= 1e-2"),
    );
    Ok(v)
}

fn criterion_8(runs: &Runs) -> Result<Verdict> {
    let mut v = Verdict::new();
    let r = &runs.flat;
    v.line(
        "cutoff violations",
        line(r, CheckKind::Localize, "cutoff_violations"),
    );
    v.line(
        "C1 doubling",
        line(r, CheckKind::Localize, "cutoff_C1_doubling_change"),
    );
    v.line(
        "C2 doubling",
        line(r, CheckKind::Localize, "cutoff_C2_doubling_change"),
    );
    v.line(
        "sphere comparison",
        line(
            &runs.sphere,
            CheckKind::Localize,
            "laplacian_comparison_model_error",
        ),
    );
    v.line(
        "flat margins",
        line(r, CheckKind::Localize, "localized_min_margin"),
    );
    v.line(
        "flat kernel margins",
        line(&runs.kernel, CheckKind::Localize, "localized_min_margin"),
    );
    v.line(
        "sphere margins",
        line(&runs.sphere, CheckKind::Localize, "localized_min_margin"),
    );
    v.line(
        "quadratic triples",
        line(r, CheckKind::Localize, "quadratic_containment_failures"),
    );
    Ok(v)
}

fn criterion_9(runs: &Runs) -> Result<Verdict> {
    let mut v = Verdict::new();
    v.check("all checks", runs.flat.passed(), String::new());
    v.check(
        "runtime",
        runs.flat_seconds <= 120.0,
        format!("{:.1}s <= 120s", runs.flat_seconds),
    );
    v.check(
        "byte-identical rerun",
        runs.flat_again_identical,
        String::new(),
    );
    Ok(v)
}

type Criterion<'a> = Box<dyn Fn() -> Result<Verdict> + 'a>;

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary directory");
    let runs = Runs::new(dir.path());
    let criteria: Vec<(&str, Criterion)> = match &runs {
        Ok(r) => vec![
            ("exact sphere model", Box::new(criterion_1)),
            (
                "flow identities and orders",
                Box::new(move || criterion_2(r)),
            ),
            (
                "differential Harnack quantity",
                Box::new(move || criterion_3(r)),
            ),
            (
                "evolution identities and pinching",
                Box::new(move || criterion_4(r)),
            ),
            (
                "conjugacy and conservation",
                Box::new(move || criterion_5(r)),
            ),
            ("Harnack ratio", Box::new(move || criterion_6(r))),
            ("integrated forward estimate", Box::new(criterion_7)),
            ("localization", Box::new(move || criterion_8(r))),
            ("full run", Box::new(move || criterion_9(r))),
        ],
        Err(e) => {
            println!("FAIL setup: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut all = true;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let verdict = f().unwrap_or_else(|e| Verdict {
            ok: false,
            parts: vec![format!("error: {e}")],
        });
        all &= verdict.ok;
        println!(
            "{} criterion {} ({name}): {}",
            if verdict.ok { "PASS" } else { "FAIL" },
            k + 1,
            verdict.parts.join("; ")
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
