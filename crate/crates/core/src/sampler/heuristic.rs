use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PixelSampleSet, WindowPartition};

/// How window draw probabilities follow the projected point counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicMode {
    /// Same probability for every kept window.
    Uniformity,
    /// Proportional to the count.
    Density,
    /// Proportional to the inverse count.
    Sparsity,
}

impl HeuristicMode {
    fn weight(self, count: usize) -> f64 {
        match self {
            HeuristicMode::Uniformity => 1.0,
            HeuristicMode::Density => count as f64,
            HeuristicMode::Sparsity => 1.0 / count as f64,
        }
    }
}

/// Draws `min(n, cells in kept windows)` distinct cells. Each draw picks a
/// kept window with probability given by `mode` (among windows that still
/// have unused cells), then a uniform unused cell inside it.
pub fn heuristic_sample(part: &WindowPartition, mode: HeuristicMode, n: usize, rng: &mut impl Rng) -> PixelSampleSet {
    let mut pools: Vec<(f64, Vec<(usize, usize)>)> = part
        .kept()
        .map(|w| (mode.weight(w.count), w.cells().collect()))
        .collect();
    let mut pixels = Vec::with_capacity(n);
    while pixels.len() < n {
        let total: f64 = pools.iter().filter(|p| !p.1.is_empty()).map(|p| p.0).sum();
        if total <= 0.0 {
            break;
        }
        let mut x = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, (wt, cells)) in pools.iter().enumerate() {
            if cells.is_empty() {
                continue;
            }
            pick = Some(i);
            if x < *wt {
                break;
            }
            x -= wt;
        }
        let Some(i) = pick else { break };
        let cells = &mut pools[i].1;
        let j = rng.random_range(0..cells.len());
        pixels.push(cells.swap_remove(j));
    }
    PixelSampleSet { pixels, scores: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::partition_windows;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn one_window_all_modes_agree() {
        let part = partition_windows((16, 16), &[(2, 2), (3, 9)], 16).unwrap();
        let draw = |m| heuristic_sample(&part, m, 50, &mut ChaCha8Rng::seed_from_u64(3));
        let a = draw(HeuristicMode::Uniformity);
        assert_eq!(a, draw(HeuristicMode::Density));
        assert_eq!(a, draw(HeuristicMode::Sparsity));
        assert_eq!(a.len(), 50);
    }

    #[test]
    fn exhausts_available_cells_without_repeats() {
        let part = partition_windows((8, 8), &[(0, 0), (7, 7)], 4).unwrap();
        let s = heuristic_sample(&part, HeuristicMode::Density, 1000, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(s.len(), 32);
        let uniq: HashSet<_> = s.pixels.iter().collect();
        assert_eq!(uniq.len(), 32);
        assert!(s.pixels.iter().all(|&p| part.kept().any(|w| w.contains(p))));
    }

    #[test]
    fn no_kept_windows_is_empty() {
        let part = partition_windows((8, 8), &[], 4).unwrap();
        assert!(heuristic_sample(&part, HeuristicMode::Uniformity, 5, &mut ChaCha8Rng::seed_from_u64(1)).is_empty());
    }
}
