use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::graph::{Graph, NodeId};
use super::tensor::{ParamId, ParamStore};
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    /// Max over checked coordinates of `|analytic - numeric| / max(1, |analytic|)`.
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// Param name and flat offset of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Compares tape gradients against central differences on `n_coords`
/// scalar coordinates drawn (without replacement) from every param in
/// `store`. `build` records a scalar loss and must be deterministic.
pub fn finite_diff_grad_check<F>(
    build: F,
    store: &ParamStore,
    h: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId>,
{
    let mut analytic = store.clone();
    analytic.zero_grad();
    let mut g = Graph::new();
    let loss = build(&mut g, &analytic)?;
    g.backward(loss, &mut analytic)?;

    let offsets: Vec<(ParamId, usize)> = store
        .ids()
        .flat_map(|id| (0..store.value(id).numel()).map(move |i| (id, i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, offsets.len(), n_coords.min(offsets.len()));

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = build(&mut g, s)?;
        Ok(g.value(l).item())
    };

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        coords_checked: 0,
        worst: None,
    };
    for pick in picks.iter() {
        let (id, i) = offsets[pick];
        let orig = store.value(id).data()[i];
        probe.get_mut(id).value.data_mut()[i] = orig + h;
        let up = eval(&probe)?;
        probe.get_mut(id).value.data_mut()[i] = orig - h;
        let down = eval(&probe)?;
        probe.get_mut(id).value.data_mut()[i] = orig;

        let numeric = (up - down) / (2.0 * h);
        let an = analytic.grad(id).data()[i];
        let rel = (an - numeric).abs() / an.abs().max(1.0);
        report.coords_checked += 1;
        if rel > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(rel);
            report.worst = Some((store.name(id).to_string(), i));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{LossKind, Module2D, Tensor};

    #[test]
    fn quadratic_loss_passes() {
        // loss = sum((w - c)^2) + sum(w^3) / 3
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![0.3, -1.2, 2.0, 0.7]));
        let c = Tensor::vector(vec![-1.0, -0.5, 0.25, -2.0]);
        let build = |g: &mut Graph, s: &ParamStore| {
            let wn = g.param(s, w);
            let cn = g.input(c.clone());
            let d = g.add(wn, cn)?;
            let sq = g.mul(d, d)?;
            let w2 = g.mul(wn, wn)?;
            let w3 = g.mul(w2, wn)?;
            let cube = g.scale(w3, 1.0 / 3.0);
            let t = g.add(sq, cube)?;
            Ok(g.sum(t))
        };
        let rep = finite_diff_grad_check(build, &store, 1e-5, 100, 0).unwrap();
        assert_eq!(rep.coords_checked, 4);
        assert!(rep.max_rel_err < 1e-8, "{rep:?}");
    }

    #[test]
    fn bce_head_on_8x8_map_passes() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut store = ParamStore::new();
        let head = Module2D::sampler_head(&mut store, 3, &mut rng);
        let feat = Tensor::new(
            vec![3, 8, 8],
            (0..192).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect(),
        )
        .unwrap();
        let target = Tensor::new(vec![1, 8, 8], (0..64).map(|i| (i % 7) as f64 / 6.0).collect()).unwrap();
        let build = |g: &mut Graph, s: &ParamStore| {
            let x = g.input(feat.clone());
            let logits = head.forward(g, s, x)?;
            let p = g.sigmoid(logits);
            let l = g.mean_loss(p, &target, LossKind::Bce)?;
            Ok(g.scale(l, 2.0))
        };
        let rep = finite_diff_grad_check(build, &store, 1e-5, 100, 1).unwrap();
        assert_eq!(rep.coords_checked, 100);
        assert!(rep.max_rel_err < 1e-4, "{rep:?}");
    }
}
