use proptest::prelude::*;

use vff::fusion::FusionMode;
use vff::geometry::{voxelize, Projection};
use vff::pipeline::{
    build_train_set, cast_rays, gen_scene, prepare_frame, run_fusion_pass, sample_pixels, train_heads, Config,
    FeatureEncoder, Model, SamplerMode, SceneSpec,
};
use vff::Exec;

fn small(seed: u64) -> Config {
    let mut cfg = Config::default();
    cfg.seed = seed;
    cfg.scene.channels = 8;
    cfg.sampler.mode = SamplerMode::Uniformity;
    cfg.sampler.n = 64;
    cfg
}

fn run(cfg: &Config) -> (vff::geometry::VoxelField, vff::pipeline::RunReport) {
    let scene = gen_scene(&SceneSpec::from_config(cfg).unwrap()).unwrap();
    let model = Model::new(cfg.scene.channels, 4, 1, cfg.seed);
    run_fusion_pass(&scene, cfg, &model, Exec::Parallel).unwrap()
}

#[test]
fn single_mode_without_samples_leaves_voxelized_field() {
    let mut cfg = small(2);
    cfg.fusion.mode = FusionMode::Single;
    cfg.sampler.n = 0;
    let scene = gen_scene(&SceneSpec::from_config(&cfg).unwrap()).unwrap();
    let (expected, _) = voxelize(&scene.points, &scene.grid);
    let (field, report) = run(&cfg);
    assert_eq!(report.rays, 0);
    assert_eq!(report.ray_loss, None);
    assert_eq!(field, expected);
}

#[test]
fn ray_wise_fuses_exactly_the_budget() {
    for seed in 0..5 {
        let mut cfg = small(seed);
        cfg.sampler.n = 256;
        let (_, r) = run(&cfg);
        assert_eq!(r.budget, r.occupancy_before.div_ceil(4));
        assert_eq!(r.fused, r.budget.min(r.ray_voxels), "seed {seed}");
    }
}

#[test]
fn inference_threshold_only_shrinks_the_selection() {
    let mut cfg = small(4);
    cfg.sampler.n = 256;
    let (_, train) = run(&cfg);
    cfg.inference = true;
    let (_, infer) = run(&cfg);
    assert!(infer.fused <= train.fused);
}

#[test]
fn same_seed_same_report() {
    let mut cfg = small(9);
    cfg.augment.flip = true;
    cfg.augment.rotate = -0.3;
    let (fa, a) = run(&cfg);
    let (fb, b) = run(&cfg);
    assert_eq!(fa, fb);
    assert_eq!(a.hash(), b.hash());
    let mut other = cfg.clone();
    other.seed = 10;
    assert_ne!(run(&other).1.hash(), a.hash());
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let mut cfg = small(1);
    cfg.train.scenes = 1;
    let frames = build_train_set(&cfg, Exec::Parallel).unwrap();
    let mut model = Model::new(cfg.scene.channels, 4, 1, cfg.seed);
    let rep = train_heads(&frames, &mut model, &cfg, 5, 0.0, Exec::Parallel).unwrap();
    assert_eq!(rep.losses.len(), 6);
    assert!(rep.losses.iter().all(|&l| l == rep.losses[0]));
    assert!(train_heads(&frames, &mut model, &cfg, 0, 0.1, Exec::Parallel).is_err());
}

#[test]
fn training_lowers_the_loss() {
    let mut cfg = small(1);
    cfg.train.scenes = 2;
    let frames = build_train_set(&cfg, Exec::Parallel).unwrap();
    let mut model = Model::new(cfg.scene.channels, 4, 1, cfg.seed);
    let rep = train_heads(&frames, &mut model, &cfg, 20, 0.05, Exec::Parallel).unwrap();
    assert!(rep.losses[20] < rep.losses[0]);
}

fn mode_strategy() -> impl Strategy<Value = FusionMode> {
    prop_oneof![
        Just(FusionMode::Single),
        Just(FusionMode::LocalAggregate),
        Just(FusionMode::LocalPropagate),
        Just(FusionMode::RayWise),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fusion_never_removes_occupancy(seed in 0u64..1000, mode in mode_strategy(), flip in any::<bool>()) {
        let mut cfg = small(seed);
        cfg.fusion.mode = mode;
        cfg.augment.flip = flip;
        let (_, r) = run(&cfg);
        prop_assert!(r.occupancy_after >= r.occupancy_before);
        prop_assert!(r.occupancy_after <= r.occupancy_before + r.fused);
        prop_assert!(r.sampled_pixels <= cfg.sampler.n);
        prop_assert!(r.total_loss.is_finite());
    }

    #[test]
    fn cast_rays_hit_their_cell_in_depth_order(seed in 0u64..1000, rotate in -0.5f64..0.5) {
        let mut cfg = small(seed);
        cfg.augment.rotate = rotate;
        let scene = gen_scene(&SceneSpec::from_config(&cfg).unwrap()).unwrap();
        let model = Model::new(cfg.scene.channels, 4, 1, seed);
        let frame = prepare_frame(&scene, &cfg, &FeatureEncoder::from_config(&cfg)).unwrap();
        let px = sample_pixels(&frame, &cfg, &model, seed).unwrap();
        for ray in cast_rays(&frame, &px.pixels, Exec::Sequential).unwrap() {
            let (u, v) = ray.pixel;
            for &vox in &ray.voxels {
                prop_assert_eq!(frame.vt.project(vox), Projection::Cell { u, v });
            }
            let d = ray.depths(&frame.vt);
            prop_assert!(d.windows(2).all(|w| w[0] <= w[1]));
            for &a in &ray.anchors {
                prop_assert!(frame.field.is_occupied(ray.voxels[a]));
            }
            let anchors = ray.voxels.iter().filter(|&&x| frame.field.is_occupied(x)).count();
            prop_assert_eq!(anchors, ray.anchors.len());
        }
    }
}
