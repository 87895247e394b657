//! Heat kernel of a flat torus as a lattice sum of Euclidean Gaussians.
//!
//! The kernel factorizes over axes, so everything reduces to the 1-D sum
//! `S(x) = Σ_k G(x + kL)` with `G(x) = (4πs)^{-1/2} e^{−x²/4s}`. Terms are
//! taken in order of increasing `|x + kL|` and the sum stops once a term
//! falls below `1e−14` of the running total; all sums are carried relative to
//! the leading term so deep tails stay representable in log form.

use std::f64::consts::PI;

const CUTOFF: f64 = 1e-14;

/// Log of a 1-D periodized Gaussian with its first two log-derivatives.
#[derive(Debug, Clone, Copy)]
struct Axis {
    log: f64,
    /// `S′/S`
    d1: f64,
    /// `S″/S`
    d2: f64,
}

fn axis_sum(x: f64, length: f64, s: f64) -> Axis {
    let x0 = x - length * (x / length).round();
    let lead = x0 * x0;
    let term = |y: f64| -> [f64; 3] {
        let e = (-(y * y - lead) / (4.0 * s)).exp();
        [
            e,
            -y / (2.0 * s) * e,
            (y * y / (4.0 * s * s) - 1.0 / (2.0 * s)) * e,
        ]
    };
    let mut acc = term(x0);
    // Images on both sides, nearest first.
    let mut k = 1.0;
    loop {
        let a = term(x0 + k * length);
        let b = term(x0 - k * length);
        for i in 0..3 {
            acc[i] += a[i] + b[i];
        }
        if a[0].max(b[0]) < CUTOFF * acc[0] {
            break;
        }
        k += 1.0;
    }
    let [total, first, second] = acc;
    Axis {
        log: -lead / (4.0 * s) - 0.5 * (4.0 * PI * s).ln() + total.ln(),
        d1: first / total,
        d2: second / total,
    }
}

/// Torus heat kernel `H(x, y, s)` on `Π [0, L_a)` with the coordinate metric,
/// with its log-gradient and Laplacian ratio.
#[derive(Debug, Clone)]
pub struct KernelValue {
    pub log: f64,
    /// `∇H / H`
    pub grad_log: Vec<f64>,
    /// `ΔH / H`
    pub lap_ratio: f64,
}

impl KernelValue {
    pub fn value(&self) -> f64 {
        self.log.exp()
    }

    /// Potential `f = −log H − (n/2) log(4πs)`.
    pub fn potential(&self, s: f64) -> f64 {
        let n = self.grad_log.len() as f64;
        -self.log - 0.5 * n * (4.0 * PI * s).ln()
    }

    /// `P = 2Δf − |∇f|² − 2n/s` for the kernel on a flat torus.
    pub fn harnack_p(&self, s: f64) -> f64 {
        let n = self.grad_log.len() as f64;
        let g2: f64 = self.grad_log.iter().map(|v| v * v).sum();
        // f = −log H + c: ∇f = −∇H/H, Δf = −ΔH/H + |∇H/H|².
        let lap_f = -self.lap_ratio + g2;
        2.0 * lap_f - g2 - 2.0 * n / s
    }
}

pub fn torus_heat_kernel(lengths: &[f64], x: &[f64], y: &[f64], s: f64) -> KernelValue {
    assert!(s > 0.0, "heat kernel time must be positive");
    let axes: Vec<Axis> = lengths
        .iter()
        .enumerate()
        .map(|(a, l)| axis_sum(x[a] - y[a], *l, s))
        .collect();
    let log = axes.iter().map(|a| a.log).sum();
    let grad_log = axes.iter().map(|a| a.d1).collect();
    let lap_ratio = axes.iter().map(|a| a.d2).sum();
    KernelValue {
        log,
        grad_log,
        lap_ratio,
    }
}
