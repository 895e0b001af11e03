use std::f64::consts::TAU;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetMeta, Distortion, LabeledDataset};
use crate::rng::{stream, Domain};
use crate::tensorcore::{warp, FeatureMap, Sim2Transform};
use crate::{Error, Result};

/// Side of the padded canvas.
pub const CANVAS: usize = 56;

const MAX_DRAWS: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SrtMode {
    Plain,
    R,
    S,
    T,
    Srt,
}

impl SrtMode {
    pub fn name(self) -> &'static str {
        match self {
            SrtMode::Plain => "plain",
            SrtMode::R => "r",
            SrtMode::S => "s",
            SrtMode::T => "t",
            SrtMode::Srt => "srt",
        }
    }
}

impl FromStr for SrtMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" => Ok(SrtMode::Plain),
            "r" => Ok(SrtMode::R),
            "s" => Ok(SrtMode::S),
            "t" => Ok(SrtMode::T),
            "srt" => Ok(SrtMode::Srt),
            other => Err(Error::InvalidParameter(format!(
                "unknown distortion mode {other:?} (expected plain, r, s, t or srt)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrtRanges {
    /// Rotation range `[lo, hi)` in radians.
    pub theta: [f64; 2],
    /// Scale range `[lo, hi)`.
    pub scale: [f64; 2],
    /// Maximum absolute shift per axis in pixels.
    pub shift: f64,
    pub canvas: usize,
}

impl Default for SrtRanges {
    fn default() -> Self {
        Self {
            theta: [0.0, TAU],
            scale: [1.0, 2.0],
            shift: 10.0,
            canvas: CANVAS,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn draw(rng: &mut ChaCha8Rng, mode: SrtMode, r: &SrtRanges) -> (f64, f64, [f64; 2]) {
    let rot = matches!(mode, SrtMode::R | SrtMode::Srt);
    let scl = matches!(mode, SrtMode::S | SrtMode::Srt);
    let sft = matches!(mode, SrtMode::T | SrtMode::Srt);
    let theta = if rot { uniform(rng, r.theta) } else { 0.0 };
    let s = if scl { uniform(rng, r.scale) } else { 1.0 };
    let t = if sft {
        [
            uniform(rng, [-r.shift, r.shift]),
            uniform(rng, [-r.shift, r.shift]),
        ]
    } else {
        [0.0, 0.0]
    };
    (s, theta, t)
}

/// First draw of `(s, θ, t)` for item `index`, before any clipping check.
pub fn draw_distortion(
    seed: u64,
    index: usize,
    mode: SrtMode,
    ranges: &SrtRanges,
) -> (f64, f64, [f64; 2]) {
    draw(
        &mut stream(seed, Domain::Distortion, index as u64),
        mode,
        ranges,
    )
}

fn clips(f: &FeatureMap, t: &Sim2Transform) -> bool {
    let half = [
        (f.height() as f64 - 1.0) / 2.0,
        (f.width() as f64 - 1.0) / 2.0,
    ];
    let [or, oc] = f.origin();
    let plane = f.channel(0);
    (0..f.height()).any(|i| {
        (0..f.width()).any(|j| {
            plane[i * f.width() + j] > 0.0 && {
                let q = t.apply([i as f64 - or, j as f64 - oc]);
                q[0].abs() > half[0] || q[1].abs() > half[1]
            }
        })
    })
}

/// Pads every image to the canvas and applies a per-image similarity drawn
/// from `(seed, index)`.
///
/// Draws that would push nonzero content off the canvas are rejected and
/// redrawn from the same stream. After repeated rejections the image keeps
/// its rotation with `s = 1, t = 0`, which never clips on a canvas at least
/// `√2` times the content size.
pub fn make_srt_variant(
    ds: &LabeledDataset,
    seed: u64,
    mode: SrtMode,
    ranges: &SrtRanges,
) -> Result<LabeledDataset> {
    if !(ranges.scale[0] > 0.0 && ranges.shift >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bad distortion ranges {ranges:?}"
        )));
    }
    let padded = ds.padded(ranges.canvas)?;
    let mut images = Vec::with_capacity(ds.len());
    let mut distortions = Vec::with_capacity(ds.len());
    let mut rejected = 0u64;
    for (index, f) in padded.images.iter().enumerate() {
        let mut rng = stream(seed, Domain::Distortion, index as u64);
        let mut redraws = 0;
        let (mut s, mut theta, mut t) = draw(&mut rng, mode, ranges);
        let mut tf = Sim2Transform::with_pixel_shift(s, theta, t)?;
        while clips(f, &tf) {
            redraws += 1;
            if redraws >= MAX_DRAWS {
                (s, t) = (1.0, [0.0, 0.0]);
                tf = Sim2Transform::with_pixel_shift(s, theta, t)?;
                break;
            }
            (s, theta, t) = draw(&mut rng, mode, ranges);
            tf = Sim2Transform::with_pixel_shift(s, theta, t)?;
        }
        rejected += redraws as u64;
        images.push(warp(f, &tf));
        distortions.push(Distortion {
            index,
            seed,
            s,
            theta,
            t,
            redraws,
        });
    }
    if rejected > 0 {
        log::info!(
            "{} variant: {rejected} clipping draws rejected",
            mode.name()
        );
    }
    LabeledDataset::new(
        images,
        padded.labels,
        DatasetMeta {
            source: ds.meta.source.clone(),
            padding: ranges.canvas,
            mode: Some(mode.name().to_string()),
            distortions,
        },
    )
}
