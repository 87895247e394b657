//! Residual and inequality reports with CSV export.

use std::io::Write;

use crate::error::Result;

/// Grid parameters a report was computed at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMeta {
    pub h: f64,
    pub dt: f64,
    pub nodes: usize,
}

impl GridMeta {
    /// `h² + Δt²`, the scale of second-order discretization error.
    pub fn error_scale(&self) -> f64 {
        self.h * self.h + self.dt * self.dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub name: String,
    pub max: f64,
    pub l2: f64,
}

/// Observed convergence of one residual between two resolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub name: String,
    pub ratio: f64,
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub grid: GridMeta,
    pub residuals: Vec<Residual>,
    pub convergence: Vec<Convergence>,
}

impl ResidualReport {
    pub fn new(grid: GridMeta) -> Self {
        ResidualReport {
            grid,
            residuals: Vec::new(),
            convergence: Vec::new(),
        }
    }

    pub fn push(&mut self, acc: ResidualAccumulator) {
        self.residuals.push(acc.finish());
    }

    pub fn get(&self, name: &str) -> Option<&Residual> {
        self.residuals.iter().find(|r| r.name == name)
    }

    pub fn max(&self, name: &str) -> f64 {
        self.get(name).map(|r| r.max).unwrap_or(f64::NAN)
    }

    /// Fine-grid report annotated with max-norm ratios against a coarse one.
    /// The order assumes the error scale `h² + Δt²` shrank by `coarse/fine`.
    pub fn with_refinement(coarse: &ResidualReport, fine: &ResidualReport) -> ResidualReport {
        let mut out = fine.clone();
        let scale_ratio = coarse.grid.h / fine.grid.h;
        out.convergence = fine
            .residuals
            .iter()
            .filter_map(|r| {
                let c = coarse.get(&r.name)?;
                let ratio = c.max / r.max;
                Some(Convergence {
                    name: r.name.clone(),
                    ratio,
                    order: ratio.ln() / scale_ratio.ln(),
                })
            })
            .collect();
        out
    }

    pub fn order(&self, name: &str) -> f64 {
        self.convergence
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.order)
            .unwrap_or(f64::NAN)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "# h={:.6e} dt={:.6e} nodes={}",
            self.grid.h, self.grid.dt, self.grid.nodes
        )?;
        writeln!(out, "residual,max,l2,ratio,order")?;
        for r in &self.residuals {
            let conv = self.convergence.iter().find(|c| c.name == r.name);
            match conv {
                Some(c) => writeln!(
                    out,
                    "{},{:.9e},{:.9e},{:.6},{:.6}",
                    r.name, r.max, r.l2, c.ratio, c.order
                )?,
                None => writeln!(out, "{},{:.9e},{:.9e},,", r.name, r.max, r.l2)?,
            }
        }
        Ok(())
    }
}

/// Running max and space-time L² norms of a residual field.
#[derive(Debug, Clone)]
pub struct ResidualAccumulator {
    name: String,
    max: f64,
    sum_sq: f64,
}

impl ResidualAccumulator {
    pub fn new(name: impl Into<String>) -> Self {
        ResidualAccumulator {
            name: name.into(),
            max: 0.0,
            sum_sq: 0.0,
        }
    }

    /// Adds one time slice with quadrature weights `weights` and time weight `dt`.
    pub fn add(&mut self, values: &[f64], weights: &[f64], dt: f64) {
        for (v, w) in values.iter().zip(weights) {
            // NaN propagates into max rather than being swallowed.
            if v.is_nan() {
                self.max = f64::NAN;
            } else if v.abs() > self.max {
                self.max = v.abs();
            }
            self.sum_sq += v * v * w * dt;
        }
    }

    pub fn add_scalar(&mut self, value: f64, dt: f64) {
        self.add(&[value], &[1.0], dt);
    }

    pub fn finish(self) -> Residual {
        Residual {
            name: self.name,
            max: self.max,
            l2: self.sum_sq.sqrt(),
        }
    }
}

/// One evaluated point (or pair) of an inequality check. `margin ≥ 0` means
/// the inequality holds at that sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub key: Vec<f64>,
    pub value: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnackReport {
    pub quantity: String,
    pub key_names: Vec<String>,
    pub samples: Vec<Sample>,
    pub tolerance: f64,
    pub grid: GridMeta,
    /// Free-form `(label, value)` pairs carried into the summary block.
    pub notes: Vec<(String, f64)>,
}

impl HarnackReport {
    pub fn new(
        quantity: impl Into<String>,
        key_names: &[&str],
        tolerance: f64,
        grid: GridMeta,
    ) -> Self {
        HarnackReport {
            quantity: quantity.into(),
            key_names: key_names.iter().map(|s| s.to_string()).collect(),
            samples: Vec::new(),
            tolerance,
            grid,
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, key: Vec<f64>, value: f64, margin: f64) {
        self.samples.push(Sample { key, value, margin });
    }

    pub fn note(&mut self, label: impl Into<String>, value: f64) {
        self.notes.push((label.into(), value));
    }

    pub fn note_value(&self, label: &str) -> Option<f64> {
        self.notes.iter().find(|(l, _)| l == label).map(|(_, v)| *v)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.value)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.value)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return f64::NAN;
        }
        self.samples.iter().map(|s| s.value).sum::<f64>() / self.samples.len() as f64
    }

    pub fn min_margin(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.margin)
            .fold(f64::INFINITY, f64::min)
    }

    /// Samples whose margin is below `−tolerance`.
    pub fn violations(&self) -> Vec<&Sample> {
        self.samples
            .iter()
            .filter(|s| !(s.margin >= -self.tolerance))
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut header = self.key_names.clone();
        header.push("value".into());
        header.push("margin".into());
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            for k in &s.key {
                write!(out, "{k:.12e},")?;
            }
            writeln!(out, "{:.12e},{:.12e}", s.value, s.margin)?;
        }
        self.write_summary(out)
    }

    pub fn write_summary<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# quantity: {}", self.quantity)?;
        writeln!(out, "# samples: {}", self.samples.len())?;
        writeln!(
            out,
            "# max: {:.9e}  mean: {:.9e}  min: {:.9e}",
            self.max(),
            self.mean(),
            self.min()
        )?;
        writeln!(out, "# min margin: {:.9e}", self.min_margin())?;
        writeln!(out, "# tolerance: {:.9e}", self.tolerance)?;
        writeln!(out, "# violations: {}", self.violations().len())?;
        writeln!(
            out,
            "# grid: h={:.6e} dt={:.6e} nodes={}",
            self.grid.h, self.grid.dt, self.grid.nodes
        )?;
        for (label, v) in &self.notes {
            writeln!(out, "# {label}: {v:.9e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_are_ordered_and_violations_counted() {
        let grid = GridMeta {
            h: 0.1,
            dt: 0.01,
            nodes: 3,
        };
        let mut r = HarnackReport::new("P", &["node"], 1e-3, grid);
        r.push(vec![0.0], -1.0, 1.0);
        r.push(vec![1.0], 0.0005, -0.0005);
        r.push(vec![2.0], 0.5, -0.5);
        assert!(r.max() >= r.mean() && r.mean() >= r.min());
        assert_eq!(r.violations().len(), 1);
        assert!(!r.passed());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("node,value,margin\n"));
        assert!(text.contains("# violations: 1"));
    }

    #[test]
    fn refinement_order() {
        let grid = |h| GridMeta {
            h,
            dt: 0.0,
            nodes: 1,
        };
        let mut c = ResidualReport::new(grid(0.2));
        let mut acc = ResidualAccumulator::new("r");
        acc.add_scalar(4e-2, 1.0);
        c.push(acc);
        let mut f = ResidualReport::new(grid(0.1));
        let mut acc = ResidualAccumulator::new("r");
        acc.add_scalar(1e-2, 1.0);
        f.push(acc);
        let r = ResidualReport::with_refinement(&c, &f);
        assert!((r.order("r") - 2.0).abs() < 1e-12);
    }
}
