use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentRecord;
use crate::exec::Exec;
use crate::geometry::{compose_projection, Camera, GridSpec, ProjectionTransform};
use crate::ray::construct_rays;
use crate::{Error, Result};

/// A cubic grid of `n^3` voxels spanning 40 x 40 x 8 m in front of a
/// 90-degree camera whose feature grid has at least `cells` cells.
pub fn bench_setup(n: usize, cells: usize) -> Result<(GridSpec, ProjectionTransform)> {
    let stride = 4;
    let side = (cells as f64).sqrt().ceil() as usize;
    let px = side * stride;
    let size = 40.0 / n as f64;
    let grid = GridSpec::new([2.0, -20.0, -3.0], [size, size, 8.0 / n as f64], [n, n, n])?;
    let camera = Camera::forward(px as f64 / 2.0, px, px);
    let vt = compose_projection(&grid, &camera, &AugmentRecord::identity(), stride)?;
    Ok((grid, vt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub rays: usize,
    pub ray_voxels: usize,
    /// Best of the repeats.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub grid: usize,
    pub rows: Vec<BenchRow>,
    /// Seconds per ray from a least-squares line through the rows.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line `y = a + b x`; returns `(a, b, r2)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (my - b * mx, b, r2)
}

/// Times ray construction for each count over the first cells of one
/// seeded shuffle, so larger counts extend smaller ones.
pub fn bench_rays(n: usize, counts: &[usize], repeats: usize, exec: Exec, seed: u64) -> Result<BenchReport> {
    let max = counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(Error::Config("bench needs a positive ray count".into()));
    }
    let (grid, vt) = bench_setup(n, max)?;
    let (hf, wf) = vt.feature_dims();
    let mut cells: Vec<(usize, usize)> = (0..hf).flat_map(|v| (0..wf).map(move |u| (u, v))).collect();
    cells.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rows = Vec::new();
    for &k in counts {
        let pixels = &cells[..k];
        let mut best = f64::INFINITY;
        let mut voxels = 0;
        for _ in 0..repeats.max(1) {
            let t = Instant::now();
            let rays = construct_rays(&vt, &grid, pixels, exec)?;
            best = best.min(t.elapsed().as_secs_f64());
            voxels = rays.iter().map(|r| r.len()).sum();
        }
        rows.push(BenchRow {
            rays: k,
            ray_voxels: voxels,
            seconds: best,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.rays as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    let (intercept, slope, r2) = linear_fit(&xs, &ys);
    Ok(BenchReport {
        grid: n,
        rows,
        slope,
        intercept,
        r2,
    })
}

impl BenchReport {
    pub fn table(&self) -> String {
        let mut out = format!(
            "grid {}^3\n{:>8} {:>12} {:>12} {:>14}\n",
            self.grid, "rays", "voxels", "ms", "us/ray"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:>8} {:>12} {:>12.3} {:>14.3}\n",
                r.rays,
                r.ray_voxels,
                r.seconds * 1e3,
                r.seconds * 1e6 / r.rays as f64
            ));
        }
        out.push_str(&format!(
            "linear fit: {:.3} us/ray, R^2 = {:.4}\n",
            self.slope * 1e6,
            self.r2
        ));
        out
    }
}
