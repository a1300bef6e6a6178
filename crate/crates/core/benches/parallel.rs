//! Sequential vs rayon timings for the data-parallel stages on the default scene.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use freespace_core::color_lines::{build_model, road_scores_with, ColorLinesParams};
use freespace_core::freespace::{backproject_mask_with, BackprojectParams};
use freespace_core::plane_fit::{fit_plane_hough_with, PlaneSearchConfig};
use freespace_core::priors::indicator_map_with;
use freespace_core::scenegen::{car_on_plane, gen_scene_with, SceneSpec};
use freespace_core::Execution;
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn stages(c: &mut Criterion) {
    let mut spec = SceneSpec::acceptance();
    spec.noise_sigma = 0.02;
    spec.outlier_fraction = 0.2;
    let frames = gen_scene_with(&spec, Execution::Parallel).unwrap();
    let f = &frames[0];
    let plane = spec.gt_plane().unwrap();
    let boxes = [car_on_plane(&plane, 8.0, -2.5), car_on_plane(&plane, 15.0, 2.0)];
    let model = build_model(&f.image, &f.gt_mask, &ColorLinesParams::default()).unwrap();
    let search = PlaneSearchConfig::default();
    let bp = BackprojectParams::default();

    let mut g = c.benchmark_group("stages");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("indicator_map", name), &exec, |b, &e| {
            b.iter(|| indicator_map_with(&spec.camera, &f.pose, &plane, &boxes, e))
        });
        g.bench_with_input(BenchmarkId::new("plane_hough", name), &exec, |b, &e| {
            b.iter(|| fit_plane_hough_with(black_box(&f.cloud), &search, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("road_scores", name), &exec, |b, &e| {
            b.iter(|| road_scores_with(&f.image, &model, e))
        });
        g.bench_with_input(BenchmarkId::new("backproject", name), &exec, |b, &e| {
            b.iter(|| backproject_mask_with(&f.gt_mask, &spec.camera, &f.pose, &plane, &bp, 0, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("gen_scene", name), &exec, |b, &e| {
            b.iter(|| gen_scene_with(&spec, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
