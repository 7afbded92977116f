use nalgebra::Vector3;

use super::Ray;
use crate::exec::Exec;
use crate::geometry::{GridSpec, Projection, ProjectionTransform, VoxelField, VoxelIndex};
use crate::{Error, Result};

/// Largest grid the exhaustive oracle accepts (64^3).
pub const ORACLE_MAX_VOXELS: usize = 64 * 64 * 64;

fn sort_by_depth(vt: &ProjectionTransform, voxels: &mut [VoxelIndex]) {
    voxels.sort_by(|a, b| vt.depth(*a).total_cmp(&vt.depth(*b)).then(a.cmp(b)));
}

fn check_pixel(vt: &ProjectionTransform, pixel: (usize, usize)) -> Result<()> {
    let (hf, wf) = vt.feature_dims();
    if pixel.0 >= wf || pixel.1 >= hf {
        return Err(Error::Config(format!(
            "cell {pixel:?} outside the {wf}x{hf} feature grid"
        )));
    }
    Ok(())
}

/// Scans every voxel of the grid with the projection predicate.
pub fn brute_force_ray_oracle(
    vt: &ProjectionTransform,
    grid: &GridSpec,
    pixel: (usize, usize),
) -> Result<Vec<VoxelIndex>> {
    if grid.num_voxels() > ORACLE_MAX_VOXELS {
        return Err(Error::GridTooLarge(grid.num_voxels()));
    }
    check_pixel(vt, pixel)?;
    let target = Projection::Cell { u: pixel.0, v: pixel.1 };
    let mut out: Vec<VoxelIndex> = grid.iter().filter(|&v| vt.project(v) == target).collect();
    sort_by_depth(vt, &mut out);
    Ok(out)
}

/// Voxels whose centers project onto feature cell `pixel`.
///
/// The cell's frustum is bounded by the four rays through its corners.
/// The walk steps through the voxel-center planes of the axis the cell's
/// central ray is most aligned with; in each plane the corner rays cut out
/// a quadrilateral whose bounding box, grown by one voxel, is tested with
/// the exact projection predicate. When the frustum is not one-sided along
/// that axis every voxel of the plane is tested instead.
pub fn construct_ray(vt: &ProjectionTransform, grid: &GridSpec, pixel: (usize, usize)) -> Result<Ray> {
    check_pixel(vt, pixel)?;
    let s = vt.stride as f64;
    let (u, v) = (pixel.0 as f64, pixel.1 as f64);
    let (origin, central) = vt.back_project((u + 0.5) * s, (v + 0.5) * s)?;
    let corners: Vec<Vector3<f64>> = [(u, v), (u + 1.0, v), (u, v + 1.0), (u + 1.0, v + 1.0)]
        .iter()
        .map(|&(cu, cv)| vt.back_project(cu * s, cv * s).map(|(_, d)| d))
        .collect::<Result<_>>()?;

    let axis = (0..3)
        .max_by(|&a, &b| central[a].abs().total_cmp(&central[b].abs()))
        .unwrap_or(0);
    let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
    let sign = central[axis].signum();
    let one_sided = corners.iter().all(|d| d[axis] * sign > 0.0);

    let target = Projection::Cell { u: pixel.0, v: pixel.1 };
    let dims = grid.dims;
    let mut voxels = Vec::new();
    for k in 0..dims[axis] {
        let plane = k as f64 + 0.5;
        let (lo1, hi1, lo2, hi2) = if one_sided {
            let ts: Vec<f64> = corners.iter().map(|d| (plane - origin[axis]) / d[axis]).collect();
            if ts.iter().any(|t| !(*t > 0.0)) {
                continue;
            }
            let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
            for (d, t) in corners.iter().zip(&ts) {
                let p1 = origin[a1] + t * d[a1];
                let p2 = origin[a2] + t * d[a2];
                b = [b[0].min(p1), b[1].max(p1), b[2].min(p2), b[3].max(p2)];
            }
            match (clip(b[0], b[1], dims[a1]), clip(b[2], b[3], dims[a2])) {
                (Some((l1, h1)), Some((l2, h2))) => (l1, h1, l2, h2),
                _ => continue,
            }
        } else {
            (0, dims[a1] - 1, 0, dims[a2] - 1)
        };
        for i1 in lo1..=hi1 {
            for i2 in lo2..=hi2 {
                let mut idx = [0usize; 3];
                idx[axis] = k;
                idx[a1] = i1;
                idx[a2] = i2;
                let vox = VoxelIndex(idx);
                if vt.project(vox) == target {
                    voxels.push(vox);
                }
            }
        }
    }
    sort_by_depth(vt, &mut voxels);
    Ok(Ray {
        pixel,
        voxels,
        anchors: Vec::new(),
    })
}

/// Voxel-index range whose centers fall in `[lo, hi]` grown by one voxel,
/// clipped to `0..n`.
fn clip(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Some((0, n - 1));
    }
    let first = (lo - 0.5).floor() - 1.0;
    let last = (hi - 0.5).ceil() + 1.0;
    if last < 0.0 || first > (n - 1) as f64 {
        return None;
    }
    Some((first.max(0.0) as usize, last.min((n - 1) as f64) as usize))
}

/// Builds one ray per pixel, in input order.
pub fn construct_rays(
    vt: &ProjectionTransform,
    grid: &GridSpec,
    pixels: &[(usize, usize)],
    exec: Exec,
) -> Result<Vec<Ray>> {
    exec.map(pixels, |&p| construct_ray(vt, grid, p)).into_iter().collect()
}

/// Records which ray voxels are occupied in `field`.
pub fn mark_anchors(mut ray: Ray, field: &VoxelField) -> Ray {
    ray.anchors = (0..ray.voxels.len())
        .filter(|&i| field.is_occupied(ray.voxels[i]))
        .collect();
    ray
}
