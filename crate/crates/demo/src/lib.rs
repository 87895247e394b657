//! Browser bindings: a conformal-torus flow snapshot, the Harnack quantity
//! of a flat-torus Gaussian next to its closed form, and the cutoff profile.

use std::f64::consts::PI;
use std::sync::Arc;

use harnack_lab::conjugate_heat::{potential_f, solve_conjugate, terminal_data, TerminalProfile};
use harnack_lab::geometry::{build_geometry, distance_field, scalar_curvature, ModelGeometry};
use harnack_lab::harnack::harnack_p;
use harnack_lab::localization::{build_cutoff, dpsi, psi, psi_ratio};
use harnack_lab::ricci_flow::{default_step, evolve_ricci};
use wasm_bindgen::prelude::*;

fn js_err(e: harnack_lab::LabError) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// A square grid of values, row-major in `y`.
#[wasm_bindgen]
pub struct Field {
    size: usize,
    values: Vec<f64>,
    reference: Vec<f64>,
    time: f64,
}

#[wasm_bindgen]
impl Field {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Closed-form comparison values, empty when there is none.
    #[wasm_bindgen(getter)]
    pub fn reference(&self) -> Vec<f64> {
        self.reference.clone()
    }

    /// Time of the snapshot (flow) or `τ` (Harnack quantity).
    #[wasm_bindgen(getter)]
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Scalar curvature after Ricci flow to `time` from
/// `φ₀ = a sin x cos y` on the 2π-torus.
#[wasm_bindgen]
pub fn conformal_snapshot(amplitude: f64, resolution: usize, time: f64) -> Result<Field, JsValue> {
    let geom = build_geometry(ModelGeometry::conformal_from_fn(
        [2.0 * PI; 2],
        [resolution; 2],
        move |x, y| amplitude * x.sin() * y.cos(),
    ))
    .map_err(js_err)?;
    let dt = default_step(&geom);
    let horizon = time.max(2.0 * dt);
    let traj = evolve_ricci(&geom, horizon, dt).map_err(js_err)?;
    let last = traj.len() - 1;
    Ok(Field {
        size: resolution,
        values: scalar_curvature(traj.state(last)).into_values(),
        reference: Vec::new(),
        time: traj.time(last),
    })
}

/// `P` for the conjugate heat kernel on the flat 2π-torus at `τ`, started
/// from the periodic Gaussian of width `τ₁ = τ/2`, with the closed form
/// `−n/τ − d²/(4τ²)` as reference.
#[wasm_bindgen]
pub fn gaussian_harnack(resolution: usize, tau: f64) -> Result<Field, JsValue> {
    let geom = build_geometry(ModelGeometry::square_flat_torus(2, 2.0 * PI, resolution))
        .map_err(js_err)?;
    let traj = Arc::new(evolve_ricci(&geom, tau, default_step(&geom)).map_err(js_err)?);
    let k1 = ((0.5 * tau / traj.dt()).round() as usize).clamp(2, traj.len() - 3);
    let t1 = traj.time(k1);
    let center = vec![PI, PI];
    let profile = TerminalProfile::PeriodicGaussian {
        center: center.clone(),
        width: traj.horizon() - t1,
    };
    let w1 = terminal_data(traj.state(k1), &profile).map_err(js_err)?;
    let hist = solve_conjugate(&traj, &w1, t1, 0.0).map_err(js_err)?;
    let tau0 = hist.tau(0);
    let p = harnack_p(hist.state(0), &potential_f(&hist, 0).map_err(js_err)?).map_err(js_err)?;
    let d = distance_field(hist.state(0), &center);
    let reference = d
        .values()
        .iter()
        .map(|d| -2.0 / tau0 - d * d / (4.0 * tau0 * tau0))
        .collect();
    Ok(Field {
        size: resolution,
        values: p.into_values(),
        reference,
        time: tau0,
    })
}

/// Cutoff profile on `s = d/ρ ∈ [0, 2.5]` with its certified constants.
#[wasm_bindgen]
pub struct Cutoff {
    s: Vec<f64>,
    psi: Vec<f64>,
    dpsi: Vec<f64>,
    ratio: Vec<f64>,
    c1: f64,
    c2: f64,
}

#[wasm_bindgen]
impl Cutoff {
    #[wasm_bindgen(getter)]
    pub fn s(&self) -> Vec<f64> {
        self.s.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn psi(&self) -> Vec<f64> {
        self.psi.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn dpsi(&self) -> Vec<f64> {
        self.dpsi.clone()
    }
    /// `ψ′²/ψ`, zero where `ψ` vanishes.
    #[wasm_bindgen(getter)]
    pub fn ratio(&self) -> Vec<f64> {
        self.ratio.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn c1(&self) -> f64 {
        self.c1
    }
    #[wasm_bindgen(getter)]
    pub fn c2(&self) -> f64 {
        self.c2
    }
}

#[wasm_bindgen]
pub fn cutoff_profile(points: usize) -> Result<Cutoff, JsValue> {
    let certified = build_cutoff(1.0).map_err(js_err)?;
    let points = points.max(2);
    let s: Vec<f64> = (0..points)
        .map(|k| 2.5 * k as f64 / (points - 1) as f64)
        .collect();
    Ok(Cutoff {
        psi: s.iter().map(|&x| psi(x)).collect(),
        dpsi: s.iter().map(|&x| dpsi(x)).collect(),
        ratio: s.iter().map(|&x| psi_ratio(x)).collect(),
        s,
        c1: certified.c1,
        c2: certified.c2,
    })
}
