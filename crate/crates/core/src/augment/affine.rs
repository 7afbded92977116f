use nalgebra::{Matrix2, Matrix2x3, Vector2};

use crate::{Error, Result};

/// Least-squares 2D affine `dst ~ A [src; 1]` and its RMS pixel residual.
pub fn fit_affine(pairs: &[([f64; 2], [f64; 2])]) -> Result<(Matrix2x3<f64>, f64)> {
    if pairs.len() < 3 {
        return Err(Error::Degenerate(format!(
            "{} correspondences, need at least 3",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    type Pair = ([f64; 2], [f64; 2]);
    let mean = |sel: fn(&Pair) -> [f64; 2]| {
        let s = pairs.iter().map(sel).fold([0.0; 2], |a, p| [a[0] + p[0], a[1] + p[1]]);
        Vector2::new(s[0] / n, s[1] / n)
    };
    let src_mean = mean(|p| p.0);
    let dst_mean = mean(|p| p.1);

    // Centered second moments.
    let mut css = Matrix2::zeros();
    let mut cds = Matrix2::zeros();
    for (s, d) in pairs {
        let s = Vector2::new(s[0], s[1]) - src_mean;
        let d = Vector2::new(d[0], d[1]) - dst_mean;
        css += s * s.transpose();
        cds += d * s.transpose();
    }
    let trace = css.trace();
    if !(trace > 0.0) || css.determinant() <= 1e-12 * trace * trace {
        return Err(Error::Degenerate("source points are collinear".into()));
    }
    let inv = css
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("source points are collinear".into()))?;
    let lin = cds * inv;
    let t = dst_mean - lin * src_mean;
    let affine = Matrix2x3::new(lin[(0, 0)], lin[(0, 1)], t.x, lin[(1, 0)], lin[(1, 1)], t.y);

    let sq: f64 = pairs
        .iter()
        .map(|(s, d)| {
            let x = affine[(0, 0)] * s[0] + affine[(0, 1)] * s[1] + affine[(0, 2)] - d[0];
            let y = affine[(1, 0)] * s[0] + affine[(1, 1)] * s[1] + affine[(1, 2)] - d[1];
            x * x + y * y
        })
        .sum();
    Ok((affine, (sq / n).sqrt()))
}
