use std::sync::OnceLock;

use omnisweep::image::{psnr, RgbImage};
use omnisweep::linalg::Vec3;
use omnisweep::rig::{default_intrinsics, default_rig_with};
use omnisweep::spherical::{SphericalCoord, SphericalGrid};
use omnisweep::stitcher::{
    blend_weights, compose_panorama, fuse_distance_maps, stitch, BlendOptions, StitchOutput, StitchParams,
};
use omnisweep::sweep::{DistanceCandidates, DistanceMap};
use omnisweep::synth::{bundled_scene, render_equirect, render_rig_camera, sphere_scene, Scene};
use omnisweep::RigConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IMAGE: usize = 512;

fn rig() -> RigConfig {
    default_rig_with(0.1, default_intrinsics(IMAGE, IMAGE)).unwrap()
}

/// Settings scaled to the 512-pixel test images.
fn params() -> StitchParams {
    StitchParams {
        grid: [256, 128],
        panorama: [1024, 512],
        fused_grid: [512, 256],
        ..StitchParams::default()
    }
}

fn render(scene: &Scene, rig: &RigConfig) -> Vec<RgbImage> {
    rig.cameras.iter().map(|c| render_rig_camera(scene, c, [IMAGE, IMAGE], 2).0).collect()
}

struct Bundled {
    images: Vec<RgbImage>,
    truth: RgbImage,
    out: StitchOutput,
}

fn bundled() -> &'static Bundled {
    static CASE: OnceLock<Bundled> = OnceLock::new();
    CASE.get_or_init(|| {
        let rig = rig();
        let scene = bundled_scene();
        let images = render(&scene, &rig);
        let p = params();
        let (truth, _) = render_equirect(&scene, &Vec3::zero(), p.panorama[0], p.panorama[1], 2).unwrap();
        let out = stitch(&images, &rig, &p).unwrap();
        Bundled { images, truth, out }
    })
}

fn constant_map(d: f64, size: [usize; 2]) -> DistanceMap {
    let cands = DistanceCandidates::inverse_uniform(0.3, 50.0, 32).unwrap();
    let mut m = DistanceMap::empty(None, SphericalGrid::full(size[0], size[1]).unwrap(), &cands);
    m.distance.iter_mut().for_each(|v| *v = d);
    m.confidence.iter_mut().for_each(|v| *v = 1.0);
    m
}

#[test]
fn bundled_scene_matches_the_ground_truth_panorama() {
    let b = bundled();
    let pano = &b.out.panorama;
    assert!(pano.coverage_fraction() > 0.99);
    let db = psnr(&pano.image, &b.truth, Some(&pano.coverage));
    assert!(db >= 30.0, "PSNR {db:.2} dB");
}

#[test]
fn blend_weights_are_a_partition_of_unity() {
    let rig = rig();
    let opts = BlendOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20_000 {
        let z: f64 = rng.random_range(-1.0..1.0);
        let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - z * z).sqrt();
        let p = Vec3::new(s * t.cos(), s * t.sin(), z).scale(rng.random_range(0.3..50.0));
        let w = blend_weights(&rig, &p, &opts);
        assert!(!w.is_empty(), "four 220° cameras cover the sphere");
        assert!(w.iter().all(|&(_, v)| v >= 0.0));
        let total: f64 = w.iter().map(|&(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }
}

#[test]
fn fused_sphere_distance_is_the_radius() {
    let rig = rig();
    let cands = params().candidates().unwrap();
    let r = cands.get(28);
    let images = render(&sphere_scene(r, 0), &rig);
    let out = stitch(&images, &rig, &params()).unwrap();
    let half = 0.5 * cands.spacing_at(r);
    let n = out.fused.distance.len();
    let within = out.fused.distance.iter().filter(|&&d| (d - r).abs() < half).count();
    assert!(out.fused.distance.iter().all(|&d| d > 0.0), "fused map has holes");
    let frac = within as f64 / n as f64;
    assert!(frac >= 0.99, "{:.2}% within half a spacing", 100.0 * frac);
}

#[test]
fn disjoint_maps_fuse_to_their_union() {
    let rig = rig();
    let size = [64, 32];
    let mut left = constant_map(2.0, size);
    let mut right = constant_map(7.0, size);
    for i in 0..left.distance.len() {
        let x = i % size[0];
        if x < size[0] / 2 {
            right.distance[i] = 0.0;
        } else {
            left.distance[i] = 0.0;
        }
    }
    let fused = fuse_distance_maps(&[left, right], &rig, size, 0).unwrap();
    for i in 0..fused.distance.len() {
        let want = if i % size[0] < size[0] / 2 { 2.0 } else { 7.0 };
        assert!((fused.distance[i] - want).abs() < 1e-9, "pixel {i}: {}", fused.distance[i]);
    }
}

#[test]
fn a_point_seen_by_one_camera_takes_that_cameras_sample() {
    // every direction is seen twice by the full rig; the front/back pair
    // leaves single-camera caps around both axes
    let full = rig();
    let rig = RigConfig::new(full.cameras[..2].to_vec(), [0, 1]).unwrap();
    let b = bundled();
    let size = [256, 128];
    let fused = constant_map(5.0, size);
    let pano = compose_panorama(&b.images[..2], &fused, &rig, size, &BlendOptions::default()).unwrap();
    let grid = SphericalGrid::full(size[0], size[1]).unwrap();
    let mut checked = 0;
    for y in 0..size[1] {
        for x in 0..size[0] {
            let p = grid.direction(x, y).scale(5.0);
            let seen: Vec<_> = rig.cameras.iter().enumerate().filter(|(_, c)| c.sees(&c.to_camera(&p))).collect();
            if seen.len() != 1 {
                continue;
            }
            let (k, cam) = seen[0];
            let px = cam.intrinsics.project(&cam.to_camera(&p)).unwrap();
            let want = b.images[k].sample_bilinear(px.u, px.v).unwrap();
            assert_eq!(pano.image.get(x, y), want, "({x}, {y})");
            checked += 1;
        }
    }
    assert!(checked > 1000, "{checked} single-camera pixels");
}

#[test]
fn constant_scene_gives_a_constant_panorama_for_any_distances() {
    let rig = rig();
    let color = [0.3, 0.5, 0.7];
    let images: Vec<_> = rig.cameras.iter().map(|_| RgbImage::filled(IMAGE, IMAGE, color)).collect();
    let size = [256, 128];
    let mut fused = constant_map(1.0, size);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    fused.distance.iter_mut().for_each(|d| *d = rng.random_range(0.3..50.0));
    let pano = compose_panorama(&images, &fused, &rig, size, &BlendOptions::default()).unwrap();
    for (c, &covered) in pano.image.data.iter().zip(&pano.coverage) {
        assert!(covered);
        for k in 0..3 {
            assert!((c[k] - color[k]).abs() < 1e-6);
        }
    }
}

#[test]
fn composing_twice_is_bit_identical() {
    let rig = rig();
    let b = bundled();
    let p = params();
    let again = compose_panorama(&b.images, &b.out.fused, &rig, p.panorama, &p.blend).unwrap();
    assert_eq!(again.image.data, b.out.panorama.image.data);
    assert_eq!(again.coverage, b.out.panorama.coverage);
}

#[test]
fn swapping_reference_cameras_barely_changes_the_result() {
    let rig = rig();
    let b = bundled();
    let p = StitchParams {
        reference_ids: Some([rig.reference_ids[1], rig.reference_ids[0]]),
        ..params()
    };
    let swapped = stitch(&b.images, &rig, &p).unwrap();
    let a = psnr(&b.out.panorama.image, &b.truth, Some(&b.out.panorama.coverage));
    let s = psnr(&swapped.panorama.image, &b.truth, Some(&swapped.panorama.coverage));
    assert!((a - s).abs() < 1.0, "{a:.2} vs {s:.2} dB");
}

#[test]
fn fused_distances_stay_in_the_candidate_range() {
    let b = bundled();
    let f = &b.out.fused;
    assert!(f.distance.iter().all(|&d| d >= f.d_min && d <= f.d_max));
}

#[test]
fn fused_map_is_nearer_than_every_contributing_estimate() {
    let rig = rig();
    let b = bundled();
    let f = &b.out.fused;
    let cands = params().candidates().unwrap();
    for m in &b.out.reference_maps {
        let pose = rig.camera(m.reference_id.unwrap()).unwrap().pose;
        for i in (0..m.distance.len()).step_by(7) {
            if !m.is_estimated(i) {
                continue;
            }
            let p = pose.transform(&m.direction(i).scale(m.distance[i]));
            let (x, y) = f.grid.nearest_pixel(&SphericalCoord::from_direction(&p)).unwrap();
            let d = p.norm();
            assert!(f.get(x, y) <= d + 0.5 * cands.spacing_at(d) + 1e-9);
        }
    }
}

#[test]
fn stage_timings_cover_the_pipeline() {
    let names: Vec<_> = bundled().out.timings.iter().map(|t| t.stage).collect();
    assert_eq!(names, ["normalize", "sweep", "aggregate", "extract", "fuse", "compose"]);
}
