//! Text output helpers shared by the CSV writers.

use std::io::Write;

use nalgebra::DMatrix;

use crate::hilbert::C64;

/// Twelve significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.11e}")
}

/// Write a dense matrix as `row,col,re,im` records.
pub fn write_matrix_csv<W: Write>(mut w: W, m: &DMatrix<C64>) -> std::io::Result<()> {
    writeln!(w, "row,col,re,im")?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            writeln!(w, "{i},{j},{},{}", fmt_float(z.re), fmt_float(z.im))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_float(0.2), "2.00000000000e-1");
        assert_eq!(fmt_float(-1.79), "-1.79000000000e0");
        let back: f64 = fmt_float(std::f64::consts::PI).parse().unwrap();
        assert!((back - std::f64::consts::PI).abs() < 1e-11);
    }
}
