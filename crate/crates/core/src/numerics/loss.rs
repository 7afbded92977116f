use serde::{Deserialize, Serialize};

use super::kernels::{bce_term, focal_term};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Focal loss shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha: 0.25,
        }
    }
}

fn check_pair(op: &'static str, pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape {
            op,
            expected: pred.shape().to_vec(),
            actual: target.shape().to_vec(),
        });
    }
    if !pred.is_finite() || !target.is_finite() {
        return Err(Error::NonFinite(op));
    }
    Ok(())
}

/// Mean binary cross-entropy. Predictions are clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_pair("bce_loss", pred, target)?;
    let n = pred.numel() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &y)| bce_term(p, y))
        .sum::<f64>()
        / n)
}

/// Mean soft-label focal loss. With `gamma = 0, alpha = 0.5` this is half
/// of [`bce_loss`].
pub fn focal_loss(pred: &Tensor, target: &Tensor, params: FocalParams) -> Result<f64> {
    check_pair("focal_loss", pred, target)?;
    if params.gamma < 0.0 {
        return Err(Error::OutOfRange {
            name: "gamma",
            value: params.gamma,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    let n = pred.numel() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &y)| focal_term(p, y, params.gamma, params.alpha))
        .sum::<f64>()
        / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bce_at_half_is_ln2() {
        let p = Tensor::full(&[4, 4], 0.5);
        let v = bce_loss(&p, &p).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_matches_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50;
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let want = p
            .iter()
            .zip(&y)
            .map(|(p, y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
            .sum::<f64>()
            / n as f64;
        let got = bce_loss(&Tensor::vector(p), &Tensor::vector(y)).unwrap();
        assert!((got - want).abs() / want < 1e-10);
    }

    #[test]
    fn focal_matches_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 40;
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        // Hard-label form: -alpha_t (1 - p_t)^gamma ln p_t.
        let want = p
            .iter()
            .zip(&y)
            .map(|(&p, &y)| {
                let (pt, at) = if y == 1.0 { (p, 0.25) } else { (1.0 - p, 0.75) };
                -at * (1.0 - pt).powi(2) * pt.ln()
            })
            .sum::<f64>()
            / n as f64;
        let got = focal_loss(&Tensor::vector(p), &Tensor::vector(y), FocalParams::default()).unwrap();
        assert!((got - want).abs() / want < 1e-10);
    }

    #[test]
    fn focal_gamma0_is_half_bce_and_clamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = Tensor::vector((0..30).map(|_| rng.random_range(0.0..1.0)).collect());
        let y = Tensor::vector((0..30).map(|_| rng.random_range(0.0..1.0)).collect());
        let f = focal_loss(&p, &y, FocalParams { gamma: 0.0, alpha: 0.5 }).unwrap();
        let b = bce_loss(&p, &y).unwrap();
        assert!((f - 0.5 * b).abs() / b < 1e-10);

        let ones = Tensor::full(&[5], 1.0);
        assert!(focal_loss(&ones, &ones, FocalParams::default()).unwrap() < 1e-7);
        let zeros = Tensor::zeros(&[5]);
        assert!(bce_loss(&zeros, &zeros).unwrap() < 2e-7);
        assert!(bce_loss(&ones, &zeros).unwrap().is_finite());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Tensor::zeros(&[3]);
        let b = Tensor::zeros(&[4]);
        assert!(bce_loss(&a, &b).is_err());
    }
}
