//! Regenerates the synthetic demo dataset under demo/upstream plus the
//! demo/hashes.json manifest.
//!
//! The dataset is a small block-design run with known properties:
//! an ellipsoidal "brain" at baseline 100, Gaussian-ish noise, an
//! activated block following the convolved task regressor, a slow linear
//! drift, two bright initial calibration volumes, and two global
//! intensity spikes for the outlier diagnostics to find.
//!
//! Usage: cargo run --example make_demo_data [DEMO_DIR]

use std::path::PathBuf;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use voxelrun::design::{hemodynamic_regressor, parse_events, HrfParams};
use voxelrun::nifti::{save_image, Image};
use voxelrun::pipeline::manifest_from_dir;

const SHAPE: [usize; 3] = [16, 16, 8];
const N_HOT: usize = 2; // bright initial volumes, dropped in the demo
const N_SCANS: usize = 40;
const TR_S: f64 = 2.5;
const EVENTS: &str = "10 17.5 1\n55 17.5 1\n";
/// Spike volumes, indexed on the trimmed (post-drop) timeline.
const SPIKES: [usize; 2] = [15, 30];

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn main() {
    let demo_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("demo"));
    let upstream = demo_dir.join("upstream");
    std::fs::create_dir_all(&upstream).expect("create upstream dir");

    let events = parse_events(EVENTS).expect("demo events parse");
    let regressor =
        hemodynamic_regressor(&events, &HrfParams::default(), TR_S, N_SCANS, 100)
            .expect("demo regressor");

    let (ni, nj, nk) = (SHAPE[0], SHAPE[1], SHAPE[2]);
    let nvox = ni * nj * nk;
    let total = N_HOT + N_SCANS;

    let center = [7.5, 7.5, 3.5];
    let radii = [6.5, 6.5, 3.2];
    let in_brain = |i: usize, j: usize, k: usize| {
        let d = [
            (i as f64 - center[0]) / radii[0],
            (j as f64 - center[1]) / radii[1],
            (k as f64 - center[2]) / radii[2],
        ];
        d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= 1.0
    };
    let in_active_block =
        |i: usize, j: usize, k: usize| (4..8).contains(&i) && (4..8).contains(&j) && (2..5).contains(&k);

    let mut rng = ChaCha8Rng::seed_from_u64(2015);
    let mut data = Vec::with_capacity(nvox * total);
    for t in 0..total {
        // global intensity factor: hot start, then occasional spikes
        let trimmed = t.checked_sub(N_HOT);
        let gain = if trimmed.is_none() {
            1.5
        } else if SPIKES.contains(&trimmed.unwrap()) {
            1.25
        } else {
            1.0
        };
        let drift = trimmed.map_or(0.0, |tt| 1.5 * tt as f64 / N_SCANS as f64);
        let activation = trimmed.map_or(0.0, |tt| regressor[tt]);
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    let value = if in_brain(i, j, k) {
                        let signal = if in_active_block(i, j, k) { activation } else { 0.0 };
                        gain * (100.0 + drift + signal) + gaussian(&mut rng)
                    } else {
                        0.1 * gaussian(&mut rng).abs()
                    };
                    data.push(value);
                }
            }
        }
    }

    let mut affine = [[0.0f64; 4]; 4];
    affine[0][0] = 3.0;
    affine[1][1] = 3.0;
    affine[2][2] = 4.0;
    affine[0][3] = -22.5;
    affine[1][3] = -22.5;
    affine[2][3] = -14.0;
    affine[3][3] = 1.0;

    let img = Image::new(data, [ni, nj, nk, total], affine, TR_S).expect("demo image");
    save_image(&img, upstream.join("bold.nii")).expect("write bold.nii");
    std::fs::write(upstream.join("cond_task.txt"), EVENTS).expect("write events");

    let manifest = manifest_from_dir(&upstream).expect("hash upstream tree");
    std::fs::write(demo_dir.join("hashes.json"), manifest.to_json()).expect("write hashes.json");

    println!("wrote {}", upstream.join("bold.nii").display());
    println!("wrote {}", upstream.join("cond_task.txt").display());
    println!("wrote {}", demo_dir.join("hashes.json").display());
}
