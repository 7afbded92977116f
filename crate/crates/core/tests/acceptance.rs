//! Acceptance suite: one line per criterion, nonzero exit on any failure.
//!
//! Runs as a plain binary (`harness = false`) so the report reads top to
//! bottom in criterion order:
//!
//! ```text
//! cargo test -p vff-core --test acceptance
//! ```

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vff::augment::{
    apply_flip, apply_rescale, apply_rotate, fit_affine, sample_correspondences, AugmentRecord, Image, ImageOpMode,
    PixelBox, AFFINE_SAMPLES,
};
use vff::exec::with_threads;
use vff::fusion::{
    fuse_frame, fuse_local, fuse_ray, fuse_single, gaussian_target_3d, gaussian_weight, select_top, FusionConfig,
    FusionMode, LocalMode, ScoredRay,
};
use vff::geometry::{
    compose_projection, parse_kitti_calib, Camera, GridSpec, PointCloud, Projection, VoxelField, VoxelIndex,
};
use vff::numerics::{focal_loss, FocalParams, Tensor};
use vff::pipeline::{
    build_train_set, cast_rays, gen_scene, grad_check_vff, prepare_frame, run_fusion_pass, train_heads, Config,
    FeatureEncoder, Model, SamplerMode, SceneSpec,
};
use vff::ray::{brute_force_ray_oracle, construct_ray, Ray};
use vff::sampler::{
    gaussian_target_2d, heuristic_sample, importance_from_scores, partition_windows, HeuristicMode, Target2D,
    SAMPLER_LOSS_WEIGHT, SCORE_THRESHOLD,
};
use vff::Exec;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const KITTI_000000: &str = "\
P0: 7.215377000000e+02 0.000000000000e+00 6.095593000000e+02 0.000000000000e+00 0.000000000000e+00 7.215377000000e+02 1.728540000000e+02 0.000000000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 0.000000000000e+00
P1: 7.215377000000e+02 0.000000000000e+00 6.095593000000e+02 -3.875744000000e+02 0.000000000000e+00 7.215377000000e+02 1.728540000000e+02 0.000000000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 0.000000000000e+00
P2: 7.215377000000e+02 0.000000000000e+00 6.095593000000e+02 4.485728000000e+01 0.000000000000e+00 7.215377000000e+02 1.728540000000e+02 2.163791000000e-01 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 2.745884000000e-03
P3: 7.215377000000e+02 0.000000000000e+00 6.095593000000e+02 -3.395242000000e+02 0.000000000000e+00 7.215377000000e+02 1.728540000000e+02 2.199936000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 2.729905000000e-03
R0_rect: 9.999239000000e-01 9.837760000000e-03 -7.445048000000e-03 -9.869795000000e-03 9.999421000000e-01 -4.278459000000e-03 7.402527000000e-03 4.351614000000e-03 9.999631000000e-01
Tr_velo_to_cam: 7.533745000000e-03 -9.999714000000e-01 -6.166020000000e-04 -4.069766000000e-03 1.480249000000e-02 7.280733000000e-04 -9.998902000000e-01 -7.631618000000e-02 9.998621000000e-01 7.523790000000e-03 1.480755000000e-02 -2.717806000000e-01
Tr_imu_to_velo: 9.999976000000e-01 7.553071000000e-04 -2.035826000000e-03 -8.086759000000e-01 -7.854027000000e-04 9.998898000000e-01 -1.482298000000e-02 3.195559000000e-01 2.024406000000e-03 1.482454000000e-02 9.998881000000e-01 -7.997231000000e-01
";

fn kitti_camera() -> Camera {
    Camera::from_kitti(&parse_kitti_calib(KITTI_000000).expect("fixture parses"), 375, 1242)
}

/// LiDAR-frame points in front of the KITTI rig.
fn kitti_points(n: usize, rng: &mut impl Rng) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| {
                [
                    rng.random_range(5.0..40.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-2.0..1.0),
                    rng.random_range(0.0..1.0),
                ]
            })
            .collect(),
    )
}

/// Pinhole `K [R | t]` at `eye` looking at `target`, image x right, y down.
fn look_at(eye: Vector3<f64>, target: Vector3<f64>, f: f64, w: usize, h: usize) -> Camera {
    let fwd = (target - eye).normalize();
    let right = fwd.cross(&Vector3::z()).normalize();
    let down = fwd.cross(&right);
    let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), fwd.transpose()]);
    let t = -(r * eye);
    let k = Matrix3::new(f, 0.0, w as f64 / 2.0, 0.0, f, h as f64 / 2.0, 0.0, 0.0, 1.0);
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    rt.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    Camera {
        matrix: k * rt,
        height: h,
        width: w,
    }
}

fn c1_ray_oracle() -> Outcome {
    let start = Instant::now();
    let grid = GridSpec::new([0.0; 3], [1.0; 3], [16; 3]).map_err(|e| e.to_string())?;
    let center = Vector3::new(8.0, 8.0, 8.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut rays, mut voxels, mut cameras) = (0usize, 0usize, 0usize);
    while cameras < 8 {
        let az = rng.random_range(0.0..std::f64::consts::TAU);
        let el = rng.random_range(-0.6f64..0.6);
        let dist = rng.random_range(20.0..40.0);
        let eye = center + dist * Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
        let jitter = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let cam = look_at(eye, center + jitter, rng.random_range(30.0..90.0), 64, 64);
        let vt = compose_projection(&grid, &cam, &AugmentRecord::identity(), 4).map_err(|e| e.to_string())?;
        ensure!(vt.feature_dims() == (16, 16), "feature dims {:?}", vt.feature_dims());
        for v in 0..16 {
            for u in 0..16 {
                let ray = construct_ray(&vt, &grid, (u, v)).map_err(|e| e.to_string())?;
                let oracle = brute_force_ray_oracle(&vt, &grid, (u, v)).map_err(|e| e.to_string())?;
                ensure!(
                    ray.voxels == oracle,
                    "camera {cameras} cell ({u}, {v}): {} voxels vs oracle {}",
                    ray.len(),
                    oracle.len()
                );
                rays += 1;
                voxels += oracle.len();
            }
        }
        cameras += 1;
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(30), "took {took:?}");
    ensure!(voxels > 0, "no voxel projected into any camera");
    Ok(format!(
        "{cameras} cameras, {rays} cells, {voxels} ray voxels, {took:.2?}"
    ))
}

fn c2_projection() -> Outcome {
    let grid = GridSpec::new([-2.0, -4.0, -2.0], [1.0, 1.0, 0.5], [8; 3]).map_err(|e| e.to_string())?;
    let cam = Camera::forward(32.0, 64, 64);
    let (_, rec) = apply_rotate(&PointCloud::new(Vec::new()), 0.3).map_err(|e| e.to_string())?;
    let vt = compose_projection(&grid, &cam, &rec, 4).map_err(|e| e.to_string())?;
    let m = vt.matrix;
    let (mut cells, mut behind, mut outside) = (0, 0, 0);
    for v in grid.iter() {
        let c = [v.0[0] as f64 + 0.5, v.0[1] as f64 + 0.5, v.0[2] as f64 + 0.5, 1.0];
        let mut h = [0.0f64; 3];
        for (r, hr) in h.iter_mut().enumerate() {
            for (k, ck) in c.iter().enumerate() {
                *hr += m[(r, k)] * ck;
            }
        }
        let expected = if h[2] <= 0.0 {
            behind += 1;
            Projection::Behind
        } else {
            let (x, y) = (h[0] / h[2], h[1] / h[2]);
            if x < 0.0 || y < 0.0 || x >= 64.0 || y >= 64.0 {
                outside += 1;
                Projection::OutOfBounds
            } else {
                cells += 1;
                Projection::Cell {
                    u: (x / 4.0).floor() as usize,
                    v: (y / 4.0).floor() as usize,
                }
            }
        };
        ensure!(
            vt.project(v) == expected,
            "voxel {:?}: {:?} vs {expected:?}",
            v.0,
            vt.project(v)
        );
    }
    ensure!(cells + behind + outside == 512, "visited {}", cells + behind + outside);
    ensure!(
        cells > 0 && behind > 0 && outside > 0,
        "cases {cells}/{behind}/{outside}"
    );
    Ok(format!(
        "512 voxels exact ({cells} in image, {behind} behind, {outside} outside)"
    ))
}

fn c3_augmentation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let cam = Camera::forward(32.0, 64, 64);
    let pts = PointCloud::new(
        (0..2000)
            .map(|_| {
                let x = rng.random_range(2.0..30.0);
                [x, rng.random_range(-x..x), rng.random_range(-x..x), 0.0]
            })
            .collect(),
    );
    let img = Image::from_fn(64, 64, 3, |u, v, c| (u * 131 + v * 17 + c) as f32);
    let (flipped, fimg, _) = apply_flip(&pts, &img, &cam, ImageOpMode::ImageLevel);
    let mut visible = 0;
    for (p, q) in pts.points.iter().zip(&flipped.points) {
        let a = cam.pixel_of(PointCloud::xyz(p));
        let b = cam.pixel_of(PointCloud::xyz(q));
        if let Some((u, v)) = a {
            visible += 1;
            ensure!(b == Some((63 - u, v)), "point {p:?}: ({u}, {v}) flipped to {b:?}");
        }
    }
    for v in 0..64 {
        for u in 0..64 {
            ensure!(
                fimg.pixel(u, v) == img.pixel(63 - u, v),
                "image pixel ({u}, {v}) not mirrored"
            );
        }
    }
    ensure!(visible > 100, "only {visible} visible points");

    let kitti = kitti_camera();
    let cloud = kitti_points(3000, &mut rng);
    let kimg = Image::new(1242, 375, 3);
    let scale = Matrix4::new_nonuniform_scaling(&Vector3::new(1.05, 1.05, 1.05));
    let pairs = sample_correspondences(&cloud, &kitti, &scale, &mut ChaCha8Rng::seed_from_u64(33));
    let (_, _, rec) = apply_rescale(
        &cloud,
        &kimg,
        1.05,
        &kitti,
        ImageOpMode::ImageLevel,
        &mut ChaCha8Rng::seed_from_u64(33),
    )
    .map_err(|e| e.to_string())?;
    ensure!(pairs.len() == AFFINE_SAMPLES, "{} correspondences", pairs.len());
    let (_, fit) = fit_affine(&pairs).map_err(|e| e.to_string())?;
    let sq: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| {
            let (x, y) = rec.map_pixel(a[0], a[1]);
            (x - b[0]).powi(2) + (y - b[1]).powi(2)
        })
        .collect();
    let rms = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
    ensure!(rms < 0.5, "rescale rms residual {rms} px");
    ensure!(
        (rms - rec.fit_residual).abs() < 1e-9,
        "reported {} vs {rms}",
        rec.fit_residual
    );
    ensure!((fit - rms).abs() < 1e-9, "fit {fit} vs {rms}");

    let angle = std::f64::consts::FRAC_PI_8;
    let (rotated, rrec) = apply_rotate(&cloud, angle).map_err(|e| e.to_string())?;
    let grid = GridSpec::new([0.0, -40.0, -3.0], [0.2, 0.2, 0.1], [400, 400, 40]).map_err(|e| e.to_string())?;
    let vt = compose_projection(&grid, &kitti, &rrec, 1).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (p, q) in cloud.points.iter().zip(&rotated.points) {
        let (x0, y0, d0) = kitti.project_point(PointCloud::xyz(p));
        if d0 <= 0.0 {
            continue;
        }
        let c = [0, 1, 2].map(|a| (q[a] - grid.origin[a]) / grid.voxel_size[a]);
        let h = vt.homogeneous(c);
        worst = worst.max((h[0] / h[2] - x0).abs()).max((h[1] / h[2] - y0).abs());
    }
    ensure!(worst < 1e-9, "rotate two-path residual {worst:e} px");
    Ok(format!(
        "flip exact on {visible} points, rescale rms {rms:.4} px over {} pairs, rotate residual {worst:.1e} px",
        pairs.len()
    ))
}

fn c4_targets() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dims = (40, 60);
    let mut peaks = 0;
    for _ in 0..50 {
        let u0 = rng.random_range(0..50);
        let v0 = rng.random_range(0..30);
        let b = PixelBox {
            u0,
            v0,
            u1: u0 + rng.random_range(1..=10),
            v1: v0 + rng.random_range(1..=10),
        };
        let t = gaussian_target_2d(&[b], dims);
        let (cu, cv) = Target2D::center(&b);
        ensure!(t.at(cu, cv) == 1.0, "box {b:?}: center {}", t.at(cu, cv));
        for v in 0..dims.0 {
            for u in 0..dims.1 {
                if !b.contains(u, v) {
                    ensure!(t.at(u, v) == 0.0, "box {b:?}: ({u}, {v}) = {}", t.at(u, v));
                }
            }
        }
        peaks += 1;
    }

    let e2 = gaussian_weight(1.0, 1.0, 0.5);
    ensure!((e2 - (-2.0f64).exp()).abs() <= 1e-12, "weight at 1 = {e2}");

    let (radius, sigma) = (2.0, 0.5);
    let mut zeros = 0;
    let mut inside = 0;
    for _ in 0..200 {
        let len = rng.random_range(1..24);
        let start = [0, 1, 2].map(|_| rng.random_range(0..8usize));
        let voxels: Vec<VoxelIndex> = (0..len)
            .map(|i| VoxelIndex::new(start[0] + i, start[1] + i / 3, start[2] + i / 5))
            .collect();
        let anchors: Vec<usize> = (0..len).filter(|_| rng.random_bool(0.15)).collect();
        let ray = Ray {
            pixel: (0, 0),
            voxels,
            anchors,
        };
        let t = gaussian_target_3d(&ray, radius, sigma);
        for (j, &v) in ray.voxels.iter().enumerate() {
            let mut expect = 0.0f64;
            for &a in &ray.anchors {
                let a = ray.voxels[a];
                let d2: f64 = (0..3).map(|k| (a.0[k] as f64 - v.0[k] as f64).powi(2)).sum();
                if d2 <= radius * radius {
                    expect = expect.max((-d2 / (2.0 * sigma * sigma)).exp());
                }
            }
            if expect == 0.0 {
                zeros += 1;
                ensure!(t.values[j] == 0.0, "voxel {:?} beyond radius: {}", v.0, t.values[j]);
            } else {
                inside += 1;
                ensure!(
                    (t.values[j] - expect).abs() <= 1e-12,
                    "voxel {:?}: {} vs {expect}",
                    v.0,
                    t.values[j]
                );
            }
            if ray.anchors.contains(&j) {
                ensure!(t.values[j] == 1.0, "anchor {:?}: {}", v.0, t.values[j]);
            }
        }
    }
    ensure!(
        zeros > 0 && inside > 0,
        "degenerate sample: {zeros} zero, {inside} inside"
    );
    Ok(format!(
        "{peaks} boxes peak 1.0, w(1) - e^-2 = {:.1e}, {zeros} cutoff zeros exact, {inside} inside values",
        e2 - (-2.0f64).exp()
    ))
}

fn c5_gradients() -> Outcome {
    let cfg = Config::default();
    ensure!(SAMPLER_LOSS_WEIGHT == 2.0, "sampler weight {SAMPLER_LOSS_WEIGHT}");
    ensure!(cfg.fusion.loss_weight == 5.0, "ray weight {}", cfg.fusion.loss_weight);
    let rep = grad_check_vff(&cfg, 100, Exec::Sequential).map_err(|e| e.to_string())?;
    ensure!(rep.coords_checked == 100, "checked {}", rep.coords_checked);
    ensure!(
        rep.max_rel_err < 1e-4,
        "max rel err {:e} at {:?}",
        rep.max_rel_err,
        rep.worst
    );

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = 64;
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let bce = p
            .iter()
            .zip(&y)
            .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
            .sum::<f64>()
            / n as f64;
        let focal = focal_loss(
            &Tensor::vector(p),
            &Tensor::vector(y),
            FocalParams { gamma: 0.0, alpha: 0.5 },
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max(((focal - 0.5 * bce) / (0.5 * bce)).abs());
    }
    ensure!(worst <= 1e-10, "focal vs half BCE rel err {worst:e}");
    Ok(format!(
        "grad rel err {:.2e} over {} coords, focal/BCE rel err {worst:.1e}",
        rep.max_rel_err, rep.coords_checked
    ))
}

fn max_field_diff(a: &VoxelField, b: &VoxelField) -> f64 {
    let keys: BTreeSet<VoxelIndex> = a.features().keys().chain(b.features().keys()).copied().collect();
    keys.iter()
        .flat_map(|&v| a.read(v).into_iter().zip(b.read(v)).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

fn c6_fusion_algebra() -> Outcome {
    let (mut rays_seen, mut local_worst, mut budgets) = (0usize, 0.0f64, 0usize);
    for seed in 0..50u64 {
        let mut cfg = Config::default();
        cfg.seed = seed;
        cfg.sampler.mode = SamplerMode::Uniformity;
        cfg.sampler.n = 96;
        cfg.scene.channels = 8;
        cfg.fusion.mode = FusionMode::RayWise;
        let scene = gen_scene(&SceneSpec::from_config(&cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let model = Model::new(cfg.scene.channels, 4, 1, seed);
        let frame = prepare_frame(&scene, &cfg, &FeatureEncoder::from_config(&cfg)).map_err(|e| e.to_string())?;
        let samples = vff::pipeline::sample_pixels(&frame, &cfg, &model, seed).map_err(|e| e.to_string())?;
        let rays = cast_rays(&frame, &samples.pixels, Exec::Sequential).map_err(|e| e.to_string())?;

        for ray in &rays {
            let zero = ScoredRay {
                weights: vec![0.0; ray.len()],
                fused: vec![vec![1.0; 4]; ray.len()],
            };
            let mut field = frame.field.clone();
            let written = fuse_ray(&mut field, ray, &zero, &vec![true; ray.len()]);
            ensure!(
                written == 0 && field == frame.field,
                "seed {seed}: zero-weight ray changed the field"
            );

            let feat = vff::fusion::cell_feature(&frame.features, ray.pixel).map_err(|e| e.to_string())?;
            let mut single = frame.field.clone();
            fuse_single(&mut single, ray, &feat, &model.fusion, 0, &model.store).map_err(|e| e.to_string())?;
            for mode in [LocalMode::Aggregate, LocalMode::Propagate] {
                let mut local = frame.field.clone();
                fuse_local(&mut local, ray, &feat, &model.fusion, 0, &model.store, mode, 0.0, 0.5)
                    .map_err(|e| e.to_string())?;
                ensure!(
                    local.occupancy() == single.occupancy(),
                    "seed {seed}: {mode:?} occupancy differs"
                );
                let d = max_field_diff(&local, &single);
                local_worst = local_worst.max(d);
                ensure!(d <= 1e-12, "seed {seed}: {mode:?} r=0 differs from single by {d:e}");
            }
            rays_seen += 1;
        }

        let fcfg = FusionConfig {
            mode: FusionMode::RayWise,
            ..cfg.fusion
        };
        let (_, stats) = fuse_frame(
            &frame.field,
            &rays,
            &frame.features,
            &model.fusion,
            0,
            &model.store,
            &fcfg,
            true,
            Exec::Sequential,
        )
        .map_err(|e| e.to_string())?;
        let occupied = frame.field.occupied_count();
        let quarter = occupied.div_ceil(4);
        ensure!(
            stats.occupied_before == occupied,
            "seed {seed}: occupancy {}",
            stats.occupied_before
        );
        ensure!(
            stats.budget == quarter,
            "seed {seed}: budget {} vs {quarter}",
            stats.budget
        );
        ensure!(
            stats.fused == quarter.min(stats.ray_voxels),
            "seed {seed}: fused {} vs min({quarter}, {})",
            stats.fused,
            stats.ray_voxels
        );
        let candidates: Vec<(VoxelIndex, f64)> = rays.iter().flat_map(|r| r.voxels.iter().map(|&v| (v, 0.5))).collect();
        let chosen = select_top(&candidates, occupied, 0.25, None);
        ensure!(
            chosen.len() == quarter.min(candidates.len()),
            "seed {seed}: select_top {}",
            chosen.len()
        );
        budgets += 1;
    }
    Ok(format!(
        "50 scenes, {rays_seen} rays: zero-weight no-op, local r=0 max diff {local_worst:.1e}, {budgets} budgets = ceil(N/4)"
    ))
}

fn c7_sampler() -> Outcome {
    let mut projected: Vec<(usize, usize)> = (0..9).map(|i| (i, i)).collect();
    projected.push((100, 10));
    let part = partition_windows((64, 128), &projected, 64).map_err(|e| e.to_string())?;
    ensure!(
        part.windows.len() == 2 && part.windows[0].count == 9 && part.windows[1].count == 1,
        "windows {:?}",
        part.windows
    );
    let n = 1000usize;
    let mut lines = Vec::new();
    for (mode, p) in [(HeuristicMode::Density, 0.9), (HeuristicMode::Sparsity, 0.1)] {
        let s = heuristic_sample(&part, mode, n, &mut ChaCha8Rng::seed_from_u64(7));
        ensure!(s.len() == n, "{mode:?} drew {}", s.len());
        let first = s.pixels.iter().filter(|&&c| part.windows[0].contains(c)).count();
        let mean = n as f64 * p;
        let bound = 3.0 * (n as f64 * p * (1.0 - p)).sqrt();
        ensure!(
            (first as f64 - mean).abs() <= bound,
            "{mode:?}: {first} draws in the 9-point window, expected {mean} +- {bound:.2}"
        );
        lines.push(format!("{mode:?} {first}/{n} (expect {mean} +- {bound:.2})"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (h, w) = (24, 40);
    let mut checked = 0;
    for trial in 0..20 {
        let mut scores: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect();
        scores[trial] = SCORE_THRESHOLD;
        let pts: Vec<(usize, usize)> = (0..rng.random_range(1..6))
            .map(|_| (rng.random_range(0..w), rng.random_range(0..h)))
            .collect();
        let part = partition_windows((h, w), &pts, 8).map_err(|e| e.to_string())?;
        let expected: Vec<(usize, usize)> = (0..h)
            .flat_map(|v| (0..w).map(move |u| (u, v)))
            .filter(|&(u, v)| scores[v * w + u] > 0.5 && part.kept().any(|win| win.contains((u, v))))
            .collect();
        let map = Tensor::new(vec![1, h, w], scores).map_err(|e| e.to_string())?;
        let got = importance_from_scores(&map, &part, h * w, &mut rng).map_err(|e| e.to_string())?;
        ensure!(
            got.pixels == expected,
            "trial {trial}: {} cells vs {} thresholded",
            got.len(),
            expected.len()
        );
        checked += expected.len();
    }
    lines.push(format!("importance == threshold set on 20 maps ({checked} cells)"));
    Ok(lines.join(", "))
}

fn c8_training() -> Outcome {
    with_threads(1, || {
        let start = Instant::now();
        let cfg = Config::default();
        let frames = build_train_set(&cfg, Exec::Sequential).map_err(|e| e.to_string())?;
        ensure!(frames.len() == 4, "{} frames", frames.len());
        let mut model = Model::new(cfg.scene.channels, 4, 1, cfg.seed);
        let rep = train_heads(&frames, &mut model, &cfg, 200, 0.05, Exec::Sequential).map_err(|e| e.to_string())?;
        let took = start.elapsed();
        let ma = rep.moving_average(50);
        if let Some(i) = ma.windows(2).position(|w| !(w[1] < w[0])) {
            return Err(format!(
                "moving average rises at window {i}: {} -> {}",
                ma[i],
                ma[i + 1]
            ));
        }
        ensure!(
            rep.anchor_score > rep.far_score,
            "anchor score {} <= far score {}",
            rep.anchor_score,
            rep.far_score
        );
        ensure!(took < Duration::from_secs(120), "took {took:?}");
        Ok(format!(
            "loss {:.4} -> {:.4}, {} windows decreasing, anchor {:.3} > far {:.3}, {took:.1?}",
            rep.losses[0],
            rep.losses[rep.steps],
            ma.len(),
            rep.anchor_score,
            rep.far_score
        ))
    })
}

fn c9_determinism() -> Outcome {
    let mut a = Config::default();
    a.augment.flip = true;
    a.augment.rescale = 1.05;
    a.sampler.mode = SamplerMode::Uniformity;
    a.sampler.n = 128;
    let mut b = Config::default();
    b.seed = 11;
    b.augment.rotate = 0.2;
    let mut c = Config::default();
    c.seed = 5;
    c.fusion.mode = FusionMode::LocalPropagate;
    c.sampler.mode = SamplerMode::Density;

    let mut hashes = Vec::new();
    for cfg in [a, b, c] {
        let scene = gen_scene(&SceneSpec::from_config(&cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let model = Model::new(cfg.scene.channels, 4, 1, cfg.seed);
        let run = |threads| {
            with_threads(threads, || run_fusion_pass(&scene, &cfg, &model, Exec::Parallel))
                .map(|(_, r)| r)
                .map_err(|e| e.to_string())
        };
        let one = run(1)?;
        let four = run(4)?;
        let seq = run_fusion_pass(&scene, &cfg, &model, Exec::Sequential)
            .map_err(|e| e.to_string())?
            .1;
        ensure!(
            one.hash() == four.hash(),
            "seed {}: 1 vs 4 threads {} / {}",
            cfg.seed,
            one.hash(),
            four.hash()
        );
        ensure!(one.hash() == seq.hash(), "seed {}: parallel vs sequential", cfg.seed);
        ensure!(one.rays > 0, "seed {}: no rays cast", cfg.seed);
        hashes.push(one.hash()[..12].to_string());
    }
    Ok(format!(
        "3 configs, 1/4 threads and sequential agree ({})",
        hashes.join(", ")
    ))
}

fn main() {
    type Check = (&'static str, fn() -> Outcome);
    let criteria: [Check; 9] = [
        ("ray oracle equivalence", c1_ray_oracle),
        ("projection exactness", c2_projection),
        ("augmentation alignment", c3_augmentation),
        ("gaussian targets", c4_targets),
        ("loss and gradient", c5_gradients),
        ("fusion algebra", c6_fusion_algebra),
        ("sampler statistics", c7_sampler),
        ("toy training", c8_training),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
