use std::f64::consts::FRAC_PI_2;

use super::{FeatureMap, InterpSample, Sim2Transform};

/// `L_T[f](x) = f(T⁻¹ x)`, sampled bilinearly about `f.origin()`; reads
/// outside the grid return 0.
pub fn warp(f: &FeatureMap, t: &Sim2Transform) -> FeatureMap {
    if t.is_identity() {
        return f.clone();
    }
    let (h, w) = (f.height(), f.width());
    let [or, oc] = f.origin();
    let n = f.plane_len();
    let mut out = vec![0.0; f.channels() * n];
    for i in 0..h {
        for j in 0..w {
            let p = t.apply_inverse([i as f64 - or, j as f64 - oc]);
            let s = InterpSample::new([p[0] + or, p[1] + oc], h, w);
            for c in 0..f.channels() {
                out[c * n + i * w + j] = s.apply(f.channel(c), w);
            }
        }
    }
    FeatureMap::from_parts(f.channels(), h, w, out).with_origin(f.origin())
}

/// Exact rotation by `k · 90°` through index permutation. Requires a square
/// map; agrees with [`warp`] by a quarter-turn transform up to rounding.
pub fn rotate_quarter_turns(f: &FeatureMap, k: i32) -> FeatureMap {
    assert_eq!(f.height(), f.width(), "quarter turns need a square map");
    let n = f.height();
    let mut cur = f.clone();
    for _ in 0..k.rem_euclid(4) {
        let mut out = vec![0.0; cur.data().len()];
        for c in 0..cur.channels() {
            let src = cur.channel(c);
            let dst = &mut out[c * n * n..(c + 1) * n * n];
            for i in 0..n {
                for j in 0..n {
                    dst[i * n + j] = src[(n - 1 - j) * n + i];
                }
            }
        }
        cur = FeatureMap::from_parts(cur.channels(), n, n, out).with_origin(f.origin());
    }
    cur
}

/// Applies `T`, using index permutation for pure quarter turns of a square,
/// centered map and bilinear [`warp`] otherwise.
pub fn transform(f: &FeatureMap, t: &Sim2Transform) -> FeatureMap {
    if let Some(k) = quarter_turns(f, t) {
        return rotate_quarter_turns(f, k);
    }
    warp(f, t)
}

fn quarter_turns(f: &FeatureMap, t: &Sim2Transform) -> Option<i32> {
    let centered = f.origin() == FeatureMap::zeros(1, f.height(), f.width()).origin();
    if t.scale() != 1.0 || t.translation() != [0.0, 0.0] || f.height() != f.width() || !centered {
        return None;
    }
    let q = t.theta() / FRAC_PI_2;
    let k = q.round();
    ((q - k).abs() < 1e-12).then_some(k as i32)
}
