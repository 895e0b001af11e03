use std::f64::consts::{PI, TAU};

use rand::Rng;

use serde::{Deserialize, Serialize};

use crate::rng::{stream, Domain};
use crate::tensorcore::{rotation, FeatureMap};

/// Wavelength (grating), standard deviation × 4 (blob) or cell pair size
/// (checker) at `s = 1`, in pixels.
pub const BASE_PERIOD: f64 = 18.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternKind {
    OrientedGrating,
    GaussianBlob,
    Checker,
}

/// An analytic `size × size` pattern equal to the base pattern warped by
/// rotation `theta` and scale `s` about the center.
pub fn synth_pattern(kind: PatternKind, size: usize, theta: f64, s: f64) -> FeatureMap {
    synth_pattern_with_period(kind, size, theta, s, BASE_PERIOD)
}

pub fn synth_pattern_with_period(
    kind: PatternKind,
    size: usize,
    theta: f64,
    s: f64,
    period: f64,
) -> FeatureMap {
    let r = rotation(theta);
    // Base coordinates R_θᵀ x / s.
    let base = move |[y, x]: [f64; 2]| {
        [
            (r[0][0] * y + r[1][0] * x) / s,
            (r[0][1] * y + r[1][1] * x) / s,
        ]
    };
    let f = match kind {
        PatternKind::OrientedGrating => {
            FeatureMap::from_fn(size, size, |p| (2.0 * PI * base(p)[1] / period).cos())
        }
        PatternKind::GaussianBlob => {
            let sigma = period / 4.0 * s;
            FeatureMap::from_fn(size, size, |[y, x]| {
                (-(y * y + x * x) / (2.0 * sigma * sigma)).exp()
            })
        }
        PatternKind::Checker => FeatureMap::from_fn(size, size, |p| {
            let [u, v] = base(p);
            let w = (PI * u * 2.0 / period).sin() * (PI * v * 2.0 / period).sin();
            if w > 0.0 {
                1.0
            } else if w < 0.0 {
                -1.0
            } else {
                0.0
            }
        }),
    };
    f.expect("analytic patterns are finite")
}

/// Number of plane waves in [`synth_texture`].
pub const TEXTURE_WAVES: usize = 24;

/// Band-limited random texture: a sum of plane waves with wavenumbers
/// drawn uniformly from `band` (radians per pixel), random directions,
/// phases and amplitudes in `[0.2, 1)`.
pub fn synth_texture(size: usize, band: [f64; 2], seed: u64, index: u64) -> FeatureMap {
    let mut rng = stream(seed, Domain::Harness, index);
    let waves: Vec<[f64; 4]> = (0..TEXTURE_WAVES)
        .map(|_| {
            let k = rng.gen_range(band[0]..=band[1]);
            let dir = rng.gen_range(0.0..TAU);
            [
                k * dir.sin(),
                k * dir.cos(),
                rng.gen_range(0.0..TAU),
                rng.gen_range(0.2..1.0),
            ]
        })
        .collect();
    let mut data = Vec::with_capacity(size * size);
    let half = (size as f64 - 1.0) / 2.0;
    for i in 0..size {
        for j in 0..size {
            let (y, x) = (i as f64 - half, j as f64 - half);
            data.push(
                waves
                    .iter()
                    .map(|[ky, kx, p, a]| a * (ky * y + kx * x + p).cos())
                    .sum(),
            );
        }
    }
    FeatureMap::from_parts(1, size, size, data)
}
