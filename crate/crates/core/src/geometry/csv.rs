//! Scalar field CSV: a header of axis names plus `value`, then one row per
//! grid node in row-major order.

use std::io::{BufRead, Write};
use std::sync::Arc;

use super::{DiscreteGeometry, ScalarField};
use crate::error::{LabError, Result};

pub fn write_field_csv<W: Write>(field: &ScalarField, out: &mut W) -> Result<()> {
    let g = field.geometry();
    let mut header = g.axis_names();
    header.push("value".into());
    writeln!(out, "{}", header.join(","))?;
    for (i, v) in field.values().iter().enumerate() {
        for c in g.node_coords(i) {
            write!(out, "{c:.17e},")?;
        }
        writeln!(out, "{v:.17e}")?;
    }
    Ok(())
}

/// Reads a field written by [`write_field_csv`], checking that the node
/// coordinates match the geometry's grid.
pub fn read_field_csv<R: BufRead>(
    geometry: &Arc<DiscreteGeometry>,
    input: R,
) -> Result<ScalarField> {
    let axes = geometry.axes();
    let tol = 1e-9 * geometry.h();
    let mut values = Vec::with_capacity(geometry.node_count());
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if lineno == 0 || line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| LabError::Parse(format!("line {}: {e}", lineno + 1)))?;
        if cols.len() != axes + 1 {
            return Err(LabError::Parse(format!(
                "line {}: expected {} columns, found {}",
                lineno + 1,
                axes + 1,
                cols.len()
            )));
        }
        let node = values.len();
        if node >= geometry.node_count() {
            return Err(LabError::ShapeMismatch {
                expected: geometry.node_count(),
                found: node + 1,
            });
        }
        let expect = geometry.node_coords(node);
        if expect.iter().zip(&cols).any(|(a, b)| (a - b).abs() > tol) {
            return Err(LabError::Parse(format!(
                "line {}: coordinates do not match grid node {node}",
                lineno + 1
            )));
        }
        values.push(cols[axes]);
    }
    ScalarField::new(geometry.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, ModelGeometry};

    #[test]
    fn round_trip_is_bit_exact() {
        let g = build_geometry(ModelGeometry::square_flat_torus(2, 3.0, 8)).unwrap();
        let f = g.sample(|p| (p[0] * 1.7).sin() * (p[1] + 0.1).exp());
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        let back = read_field_csv(&g, buf.as_slice()).unwrap();
        assert_eq!(back.values(), f.values());
    }

    #[test]
    fn rejects_wrong_shape() {
        let g = build_geometry(ModelGeometry::square_flat_torus(2, 3.0, 8)).unwrap();
        let text = "x,y,value\n0,0,1.0\n";
        assert!(read_field_csv(&g, text.as_bytes()).is_err());
    }
}
