//! Second-order finite-difference operators against a metric state.
//!
//! All operators share the same centered stencils, so the Laplacian is
//! exactly the trace of the discrete Hessian returned by [`jet`].

use super::{DiscreteGeometry, MetricParams, MetricState, ScalarField};
use crate::error::Result;

pub(crate) fn d1(g: &DiscreteGeometry, f: &[f64], axis: usize) -> Vec<f64> {
    let h2 = 2.0 * g.spacing()[axis];
    let (p, m) = (g.plus(axis), g.minus(axis));
    (0..f.len()).map(|i| (f[p[i]] - f[m[i]]) / h2).collect()
}

pub(crate) fn d2(g: &DiscreteGeometry, f: &[f64], axis: usize) -> Vec<f64> {
    let hh = g.spacing()[axis].powi(2);
    let (p, m) = (g.plus(axis), g.minus(axis));
    (0..f.len())
        .map(|i| (f[p[i]] - 2.0 * f[i] + f[m[i]]) / hh)
        .collect()
}

fn d_mixed(g: &DiscreteGeometry, f: &[f64], a: usize, b: usize) -> Vec<f64> {
    let scale = 4.0 * g.spacing()[a] * g.spacing()[b];
    let (pa, ma, pb, mb) = (g.plus(a), g.minus(a), g.plus(b), g.minus(b));
    (0..f.len())
        .map(|i| (f[pb[pa[i]]] - f[mb[pa[i]]] - f[pb[ma[i]]] + f[mb[ma[i]]]) / scale)
        .collect()
}

/// Flat coordinate Laplacian `Σ ∂_k² f` with the geometry's stencils.
pub fn flat_laplacian(g: &DiscreteGeometry, f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for a in 0..g.axes() {
        for (o, v) in out.iter_mut().zip(d2(g, f, a)) {
            *o += v;
        }
    }
    out
}

/// Laplace–Beltrami operator `|g|^{-1/2} ∂_i(|g|^{1/2} g^{ij} ∂_j f)`.
pub fn laplace_beltrami(m: &MetricState, f: &ScalarField) -> Result<ScalarField> {
    m.check_field(f)?;
    let g = m.geometry();
    let v = f.values();
    let out = match m.params() {
        MetricParams::Sphere { r2 } => {
            let n1 = (g.dim() - 1) as f64;
            let (ft, ftt) = (d1(g, v, 0), d2(g, v, 0));
            let cot = g.cot();
            (0..v.len())
                .map(|i| (ftt[i] + n1 * cot[i] * ft[i]) / r2)
                .collect()
        }
        MetricParams::Flat { coeffs } => {
            let mut out = vec![0.0; v.len()];
            for (a, c) in coeffs.iter().enumerate() {
                for (o, x) in out.iter_mut().zip(d2(g, v, a)) {
                    *o += x / c;
                }
            }
            out
        }
        MetricParams::Conformal { phi } => flat_laplacian(g, v)
            .into_iter()
            .zip(phi)
            .map(|(l, p)| (-2.0 * p).exp() * l)
            .collect(),
    };
    Ok(ScalarField::from_parts(g.clone(), out))
}

/// `⟨∇a, ∇b⟩_g` pointwise.
pub fn grad_inner(m: &MetricState, a: &ScalarField, b: &ScalarField) -> Result<ScalarField> {
    m.check_field(a)?;
    m.check_field(b)?;
    let g = m.geometry();
    let n = g.node_count();
    let mut out = vec![0.0; n];
    for axis in 0..g.axes() {
        let da = d1(g, a.values(), axis);
        let db = if std::ptr::eq(a, b) {
            da.clone()
        } else {
            d1(g, b.values(), axis)
        };
        let inv: Box<dyn Fn(usize) -> f64> = match m.params() {
            MetricParams::Sphere { r2 } => {
                let s = 1.0 / r2;
                Box::new(move |_| s)
            }
            MetricParams::Flat { coeffs } => {
                let s = 1.0 / coeffs[axis];
                Box::new(move |_| s)
            }
            MetricParams::Conformal { phi } => Box::new(move |i| (-2.0 * phi[i]).exp()),
        };
        for i in 0..n {
            out[i] += inv(i) * da[i] * db[i];
        }
    }
    Ok(ScalarField::from_parts(g.clone(), out))
}

/// `|∇f|²_g = g^{ij} ∂_i f ∂_j f`, nonnegative by construction.
pub fn grad_norm_sq(m: &MetricState, f: &ScalarField) -> Result<ScalarField> {
    grad_inner(m, f, f)
}

/// First and second covariant derivatives of a field, expressed in an
/// orthonormal frame at each node.
#[derive(Debug, Clone)]
pub struct Jet {
    n: usize,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl Jet {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.grad.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.grad.is_empty()
    }

    pub fn grad(&self, i: usize) -> &[f64] {
        &self.grad[i * self.n..(i + 1) * self.n]
    }

    /// Row-major `n × n` Hessian block at node `i`.
    pub fn hess(&self, i: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.hess[i * nn..(i + 1) * nn]
    }

    pub fn grad_norm_sq(&self, i: usize) -> f64 {
        self.grad(i).iter().map(|x| x * x).sum()
    }

    pub fn hess_norm_sq(&self, i: usize) -> f64 {
        self.hess(i).iter().map(|x| x * x).sum()
    }

    pub fn trace(&self, i: usize) -> f64 {
        let h = self.hess(i);
        (0..self.n).map(|k| h[k * self.n + k]).sum()
    }

    /// `|Hess + s·g|²` at node `i`.
    pub fn shifted_norm_sq(&self, i: usize, s: f64) -> f64 {
        let h = self.hess(i);
        let mut acc = 0.0;
        for a in 0..self.n {
            for b in 0..self.n {
                let v = h[a * self.n + b] + if a == b { s } else { 0.0 };
                acc += v * v;
            }
        }
        acc
    }
}

pub fn jet(m: &MetricState, f: &ScalarField) -> Result<Jet> {
    m.check_field(f)?;
    let g = m.geometry();
    let v = f.values();
    let count = g.node_count();
    let n = g.dim();
    let mut grad = vec![0.0; count * n];
    let mut hess = vec![0.0; count * n * n];
    match m.params() {
        MetricParams::Sphere { r2 } => {
            let r = r2.sqrt();
            let (ft, ftt) = (d1(g, v, 0), d2(g, v, 0));
            let cot = g.cot();
            for i in 0..count {
                grad[i * n] = ft[i] / r;
                let h = &mut hess[i * n * n..(i + 1) * n * n];
                h[0] = ftt[i] / r2;
                for k in 1..n {
                    h[k * n + k] = cot[i] * ft[i] / r2;
                }
            }
        }
        MetricParams::Flat { coeffs } => {
            let first: Vec<Vec<f64>> = (0..n).map(|a| d1(g, v, a)).collect();
            for a in 0..n {
                let sa = coeffs[a].sqrt();
                for i in 0..count {
                    grad[i * n + a] = first[a][i] / sa;
                }
                for b in a..n {
                    let sab = (coeffs[a] * coeffs[b]).sqrt();
                    let second = if a == b {
                        d2(g, v, a)
                    } else {
                        d_mixed(g, v, a, b)
                    };
                    for i in 0..count {
                        let x = second[i] / sab;
                        hess[i * n * n + a * n + b] = x;
                        hess[i * n * n + b * n + a] = x;
                    }
                }
            }
        }
        MetricParams::Conformal { phi } => {
            let fd = [d1(g, v, 0), d1(g, v, 1)];
            let pd = [d1(g, phi, 0), d1(g, phi, 1)];
            let fxx = d2(g, v, 0);
            let fyy = d2(g, v, 1);
            let fxy = d_mixed(g, v, 0, 1);
            for i in 0..count {
                let e1 = (-phi[i]).exp();
                let e2 = e1 * e1;
                grad[i * 2] = e1 * fd[0][i];
                grad[i * 2 + 1] = e1 * fd[1][i];
                // Hess_ij = f_ij − φ_i f_j − φ_j f_i + δ_ij ⟨dφ, df⟩
                let dot = pd[0][i] * fd[0][i] + pd[1][i] * fd[1][i];
                let hxx = fxx[i] - 2.0 * pd[0][i] * fd[0][i] + dot;
                let hyy = fyy[i] - 2.0 * pd[1][i] * fd[1][i] + dot;
                let hxy = fxy[i] - pd[0][i] * fd[1][i] - pd[1][i] * fd[0][i];
                let h = &mut hess[i * 4..i * 4 + 4];
                h[0] = e2 * hxx;
                h[1] = e2 * hxy;
                h[2] = e2 * hxy;
                h[3] = e2 * hyy;
            }
        }
    }
    Ok(Jet { n, grad, hess })
}

/// The function `κ` with `Ric = κ g`.
pub fn ricci_factor(m: &MetricState) -> ScalarField {
    let g = m.geometry();
    let count = g.node_count();
    let values = match m.params() {
        MetricParams::Sphere { r2 } => vec![(g.dim() - 1) as f64 / r2; count],
        MetricParams::Flat { .. } => vec![0.0; count],
        MetricParams::Conformal { phi } => flat_laplacian(g, phi)
            .into_iter()
            .zip(phi)
            .map(|(l, p)| -(-2.0 * p).exp() * l)
            .collect(),
    };
    ScalarField::from_parts(g.clone(), values)
}

/// Scalar curvature `R = n κ`; on the conformal torus `R = −2 e^{−2φ} Δ₀ φ`.
pub fn scalar_curvature(m: &MetricState) -> ScalarField {
    let n = m.dim() as f64;
    ricci_factor(m).map(|k| n * k)
}

/// Per-node quadrature weights of the Riemannian volume `dμ`.
pub fn volume_weights(m: &MetricState) -> Vec<f64> {
    let g = m.geometry();
    let base = g.base_weights();
    match m.params() {
        MetricParams::Sphere { r2 } => {
            let s = r2.powf(g.dim() as f64 / 2.0);
            base.iter().map(|w| w * s).collect()
        }
        MetricParams::Flat { coeffs } => {
            let s = coeffs.iter().product::<f64>().sqrt();
            base.iter().map(|w| w * s).collect()
        }
        MetricParams::Conformal { phi } => base
            .iter()
            .zip(phi)
            .map(|(w, p)| w * (2.0 * p).exp())
            .collect(),
    }
}

/// `∫_M f dμ`.
pub fn integrate(m: &MetricState, f: &ScalarField) -> Result<f64> {
    m.check_field(f)?;
    Ok(volume_weights(m)
        .iter()
        .zip(f.values())
        .map(|(w, v)| w * v)
        .sum())
}

pub fn volume(m: &MetricState) -> f64 {
    volume_weights(m).iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, ModelGeometry};
    use std::f64::consts::PI;

    fn sphere(n: usize, nodes: usize, r: f64) -> MetricState {
        build_geometry(ModelGeometry::RoundSphere {
            dim: n,
            radius: r,
            nodes,
        })
        .unwrap()
        .initial_metric()
    }

    fn flat(size: usize) -> MetricState {
        build_geometry(ModelGeometry::square_flat_torus(2, 2.0 * PI, size))
            .unwrap()
            .initial_metric()
    }

    fn conformal(size: usize, phi: impl Fn(f64, f64) -> f64) -> MetricState {
        build_geometry(ModelGeometry::conformal_from_fn(
            [2.0 * PI; 2],
            [size; 2],
            phi,
        ))
        .unwrap()
        .initial_metric()
    }

    fn max_err(a: &ScalarField, b: &ScalarField) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn laplacian_of_constant_is_exactly_zero() {
        for m in [
            sphere(3, 32, 1.3),
            flat(16),
            conformal(16, |x, y| 0.3 * x.sin() * y.cos()),
        ] {
            let c = m.geometry().constant(2.75);
            let l = laplace_beltrami(&m, &c).unwrap();
            assert!(l.values().iter().all(|v| *v == 0.0));
            let gsq = grad_norm_sq(&m, &c).unwrap();
            assert!(gsq.values().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn flat_torus_sine_is_an_eigenfunction() {
        let m = flat(64);
        let f = m.geometry().sample(|p| p[0].sin());
        let l = laplace_beltrami(&m, &f).unwrap();
        let expect = f.map(|v| -v);
        // 5-point eigenvalue is −(2 − 2cos h)/h² = −1 + h²/12 + …
        let h = 2.0 * PI / 64.0;
        assert!(max_err(&l, &expect) < h * h / 12.0 * 1.01);
    }

    #[test]
    fn sphere_first_harmonic_converges_at_second_order() {
        let err = |nodes: usize| {
            let m = sphere(2, nodes, 1.0);
            let f = m.geometry().sample(|p| p[0].cos());
            let l = laplace_beltrami(&m, &f).unwrap();
            max_err(&l, &f.map(|v| -2.0 * v))
        };
        let (e1, e2) = (err(64), err(128));
        let ratio = e1 / e2;
        assert!(e1 < 5e-3, "e1 = {e1}");
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn sphere_gradient_of_cosine() {
        let m = sphere(2, 256, 1.0);
        let f = m.geometry().sample(|p| p[0].cos());
        let g = grad_norm_sq(&m, &f).unwrap();
        let expect = m.geometry().sample(|p| p[0].sin().powi(2));
        assert!(max_err(&g, &expect) < 1e-4);
    }

    #[test]
    fn conformal_gradient_scales_by_exp_minus_two_c() {
        let c = 0.3;
        let m = conformal(64, |_, _| c);
        let f = m.geometry().sample(|p| p[0].sin());
        let g = grad_norm_sq(&m, &f).unwrap();
        let expect = m
            .geometry()
            .sample(|p| (-2.0 * c).exp() * p[0].cos().powi(2));
        let h = 2.0 * PI / 64.0;
        assert!(max_err(&g, &expect) < h * h);
    }

    #[test]
    fn scalar_curvature_of_model_families() {
        let r = scalar_curvature(&flat(16));
        assert!(r.values().iter().all(|v| *v == 0.0));

        let g = build_geometry(ModelGeometry::RoundSphere {
            dim: 2,
            radius: 1.0,
            nodes: 16,
        })
        .unwrap();
        let m = MetricState::new(g, 0.0, MetricParams::Sphere { r2: 0.5 }).unwrap();
        assert!(scalar_curvature(&m)
            .values()
            .iter()
            .all(|v| (v - 4.0).abs() < 1e-14));

        let err = |size: usize| {
            let m = conformal(size, |x, _| 0.1 * x.sin());
            let r = scalar_curvature(&m);
            let expect = m
                .geometry()
                .sample(|p| 0.2 * (-0.2 * p[0].sin()).exp() * p[0].sin());
            max_err(&r, &expect)
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e1 < 1e-3);
        assert!((3.5..=4.5).contains(&(e1 / e2)));
    }

    #[test]
    fn integrals_of_one() {
        let a = integrate(
            &sphere(2, 256, 1.0),
            &sphere(2, 256, 1.0).geometry().constant(1.0),
        )
        .unwrap();
        assert!((a - 4.0 * PI).abs() < 1e-4);
        let m = flat(64);
        let v = integrate(&m, &m.geometry().constant(1.0)).unwrap();
        assert!((v - 4.0 * PI * PI).abs() < 1e-10);
        let c = -0.2;
        let m = conformal(32, |_, _| c);
        let v = integrate(&m, &m.geometry().constant(1.0)).unwrap();
        assert!((v - (2.0 * c).exp() * 4.0 * PI * PI).abs() < 1e-10);
    }

    #[test]
    fn laplacian_is_the_trace_of_the_hessian() {
        let cases = [
            sphere(3, 40, 0.8),
            flat(24),
            conformal(24, |x, y| 0.2 * x.sin() + 0.1 * (2.0 * y).cos()),
        ];
        for m in cases {
            let f = m
                .geometry()
                .sample(|p| (p[0]).cos() + 0.3 * p.iter().sum::<f64>().sin());
            let l = laplace_beltrami(&m, &f).unwrap();
            let j = jet(&m, &f).unwrap();
            let gsq = grad_norm_sq(&m, &f).unwrap();
            for i in 0..f.values().len() {
                assert!((j.trace(i) - l[i]).abs() < 1e-10 * (1.0 + l[i].abs()));
                assert!((j.grad_norm_sq(i) - gsq[i]).abs() < 1e-10 * (1.0 + gsq[i]));
            }
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::geometry::{build_geometry, ModelGeometry};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn conformal(a: f64, size: usize) -> MetricState {
        build_geometry(ModelGeometry::conformal_from_fn(
            [2.0 * PI; 2],
            [size; 2],
            move |x, y| a * x.sin() * y.cos(),
        ))
        .unwrap()
        .initial_metric()
    }

    fn trig(m: &MetricState, c: &[f64]) -> ScalarField {
        m.geometry().sample(|x| {
            let y = x.get(1).copied().unwrap_or(0.0);
            c[0] * x[0].sin()
                + c[1] * (2.0 * y).cos()
                + c[2] * (x[0] + y).sin()
                + c[3] * (3.0 * x[0]).cos()
        })
    }

    fn by_parts_gap(m: &MetricState, f: &ScalarField, v: &ScalarField) -> f64 {
        let lf = laplace_beltrami(m, f).unwrap();
        let lv = laplace_beltrami(m, v).unwrap();
        let a = integrate(m, &lf.zip_map(v, |x, y| x * y)).unwrap();
        let b = integrate(m, &f.zip_map(&lv, |x, y| x * y)).unwrap();
        (a - b).abs()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn grad_norm_is_nonnegative(a in -0.5..0.5f64, c in prop::collection::vec(-3.0..3.0f64, 4)) {
            let m = conformal(a, 16);
            prop_assert!(grad_norm_sq(&m, &trig(&m, &c)).unwrap().min() >= 0.0);
        }

        #[test]
        fn torus_laplacian_is_self_adjoint(
            a in -0.5..0.5f64,
            c in prop::collection::vec(-3.0..3.0f64, 4),
            d in prop::collection::vec(-3.0..3.0f64, 4),
        ) {
            let m = conformal(a, 16);
            let (f, v) = (trig(&m, &c), trig(&m, &d));
            let scale = integrate(&m, &f.map(|x| x * x)).unwrap() + integrate(&m, &v.map(|x| x * x)).unwrap();
            prop_assert!(by_parts_gap(&m, &f, &v) <= 1e-12 * (1.0 + scale));
        }
    }

    #[test]
    fn sphere_integration_by_parts_is_second_order() {
        let gap = |nodes| {
            let m = build_geometry(ModelGeometry::RoundSphere {
                dim: 3,
                radius: 1.0,
                nodes,
            })
            .unwrap()
            .initial_metric();
            let f = m
                .geometry()
                .sample(|x| x[0].cos() + 0.5 * (2.0 * x[0]).cos());
            let v = m.geometry().sample(|x| (3.0 * x[0]).cos());
            by_parts_gap(&m, &f, &v)
        };
        let ratio = gap(64) / gap(128);
        assert!(ratio > 3.5, "ratio {ratio}");
    }
}
