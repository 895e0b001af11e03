//! Similarity convolution.
//!
//! `out_o(x) = q · Σ_c Σ_{t∈R} φ_{o,c}(t) · Σ_m G(x + M(x) t, m) f_c(m) + b_o`
//! with `G` the bilinear kernel, `M(x) = A_Λ(x) R_Γ(x)` from the geometry
//! field and `q = V/n` the quadrature weight. With `M = I` and `q = 1` this
//! is plain zero-padded cross-correlation.

use serde::{Deserialize, Serialize};

use crate::geometry::GeometryField;
use crate::tensorcore::{FeatureMap, InterpSample, Mat2};
use crate::{Error, Result};

/// Centered `k × k` integer offsets `[row, col]`, row-major.
pub fn square_support(k: usize) -> Result<Vec<[i32; 2]>> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "support side must be odd, got {k}"
        )));
    }
    let h = (k / 2) as i32;
    Ok((-h..=h)
        .flat_map(|r| (-h..=h).map(move |c| [r, c]))
        .collect())
}

/// `y_t = x + M t` for every offset, in support order.
pub fn sample_offsets(x: [f64; 2], m: &Mat2, support: &[[i32; 2]]) -> Vec<[f64; 2]> {
    support
        .iter()
        .map(|&[tr, tc]| {
            let (tr, tc) = (tr as f64, tc as f64);
            [
                x[0] + m[0][0] * tr + m[0][1] * tc,
                x[1] + m[1][0] * tr + m[1][1] * tc,
            ]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub support: Vec<[i32; 2]>,
    /// `[out][in][tap]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub quad_weight: f64,
}

impl SimConvLayer {
    /// Zero weights and bias over a `k × k` support, `quad_weight = 1`.
    pub fn zeros(in_channels: usize, out_channels: usize, k: usize) -> Result<Self> {
        let support = square_support(k)?;
        Ok(Self {
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * in_channels * support.len()],
            bias: vec![0.0; out_channels],
            support,
            quad_weight: 1.0,
        })
    }

    pub fn taps(&self) -> usize {
        self.support.len()
    }

    pub fn weight_index(&self, o: usize, c: usize, t: usize) -> usize {
        (o * self.in_channels + c) * self.taps() + t
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.out_channels * self.in_channels * self.taps();
        if self.weights.len() != n {
            return Err(Error::shape(format!("{n} weights"), self.weights.len()));
        }
        if self.bias.len() != self.out_channels {
            return Err(Error::shape(
                format!("{} biases", self.out_channels),
                self.bias.len(),
            ));
        }
        if !(self.quad_weight > 0.0) || self.support.is_empty() {
            return Err(Error::InvalidParameter(
                "quad_weight must be positive and the support non-empty".into(),
            ));
        }
        Ok(())
    }

    fn check_input(&self, f: &FeatureMap, plan: &SamplingPlan) -> Result<()> {
        if f.channels() != self.in_channels {
            return Err(Error::InvalidArgument(format!(
                "layer expects {} input channels, got {}",
                self.in_channels,
                f.channels()
            )));
        }
        if (f.height(), f.width()) != (plan.height, plan.width) || plan.taps != self.taps() {
            return Err(Error::InvalidArgument(format!(
                "sampling plan for {}x{} with {} taps does not fit {} input and {} taps",
                plan.height,
                plan.width,
                plan.taps,
                f.shape_string(),
                self.taps()
            )));
        }
        Ok(())
    }

    /// Bilinear samples `S[c][t][x]` of `f` at every tap location.
    pub fn gather(&self, f: &FeatureMap, plan: &SamplingPlan) -> Result<Vec<f64>> {
        self.check_input(f, plan)?;
        let npx = plan.height * plan.width;
        let taps = self.taps();
        let mut samples = vec![0.0; self.in_channels * taps * npx];
        for c in 0..self.in_channels {
            let plane = f.channel(c);
            let block = &mut samples[c * taps * npx..(c + 1) * taps * npx];
            for px in 0..npx {
                for t in 0..taps {
                    let k = px * taps + t;
                    let (idx, w) = (&plan.index[k], &plan.weight[k]);
                    block[t * npx + px] = w[0] * plane[idx[0] as usize]
                        + w[1] * plane[idx[1] as usize]
                        + w[2] * plane[idx[2] as usize]
                        + w[3] * plane[idx[3] as usize];
                }
            }
        }
        Ok(samples)
    }

    /// Output from precomputed samples.
    pub fn apply_samples(&self, samples: &[f64], height: usize, width: usize) -> FeatureMap {
        let npx = height * width;
        let rows = self.in_channels * self.taps();
        debug_assert_eq!(samples.len(), rows * npx);
        let mut out = vec![0.0; self.out_channels * npx];
        for start in (0..npx).step_by(TILE) {
            let end = (start + TILE).min(npx);
            for o in 0..self.out_channels {
                let plane = &mut out[o * npx + start..o * npx + end];
                plane.iter_mut().for_each(|v| *v = self.bias[o]);
                let w = &self.weights[o * rows..(o + 1) * rows];
                for (row, &wt) in w.iter().enumerate() {
                    if wt == 0.0 {
                        continue;
                    }
                    let a = self.quad_weight * wt;
                    for (v, s) in plane
                        .iter_mut()
                        .zip(&samples[row * npx + start..row * npx + end])
                    {
                        *v += a * s;
                    }
                }
            }
        }
        FeatureMap::from_parts(self.out_channels, height, width, out)
    }

    pub fn forward_planned(&self, f: &FeatureMap, plan: &SamplingPlan) -> Result<FeatureMap> {
        let samples = self.gather(f, plan)?;
        Ok(self
            .apply_samples(&samples, plan.height, plan.width)
            .with_origin(f.origin()))
    }

    /// Gradients given the forward samples of the same input.
    pub fn backward_samples(
        &self,
        samples: &[f64],
        plan: &SamplingPlan,
        upstream: &FeatureMap,
        need_input: bool,
    ) -> Result<SimConvGrads> {
        let (h, w) = (plan.height, plan.width);
        if (upstream.channels(), upstream.height(), upstream.width()) != (self.out_channels, h, w) {
            return Err(Error::shape(
                format!("{}x{h}x{w}", self.out_channels),
                upstream.shape_string(),
            ));
        }
        let npx = h * w;
        let taps = self.taps();
        let rows = self.in_channels * taps;
        let q = self.quad_weight;
        let mut d_weights = vec![0.0; self.weights.len()];
        let d_bias: Vec<f64> = (0..self.out_channels)
            .map(|o| upstream.channel(o).iter().sum())
            .collect();
        let mut d_in = need_input.then(|| vec![0.0; self.in_channels * npx]);
        let mut d_s = vec![0.0; rows * TILE];
        for start in (0..npx).step_by(TILE) {
            let end = (start + TILE).min(npx);
            let len = end - start;
            for o in 0..self.out_channels {
                let up = &upstream.channel(o)[start..end];
                for row in 0..rows {
                    let s = &samples[row * npx + start..row * npx + end];
                    d_weights[o * rows + row] +=
                        q * up.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            let Some(d_in) = d_in.as_mut() else { continue };
            d_s[..rows * len].iter_mut().for_each(|v| *v = 0.0);
            for o in 0..self.out_channels {
                let up = &upstream.channel(o)[start..end];
                for row in 0..rows {
                    let wt = self.weights[o * rows + row];
                    if wt == 0.0 {
                        continue;
                    }
                    let a = q * wt;
                    for (d, u) in d_s[row * len..(row + 1) * len].iter_mut().zip(up) {
                        *d += a * u;
                    }
                }
            }
            for c in 0..self.in_channels {
                let plane = &mut d_in[c * npx..(c + 1) * npx];
                for t in 0..taps {
                    let row = c * taps + t;
                    for (i, &g) in d_s[row * len..(row + 1) * len].iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        let k = (start + i) * taps + t;
                        let (idx, wq) = (&plan.index[k], &plan.weight[k]);
                        for j in 0..4 {
                            plane[idx[j] as usize] += wq[j] * g;
                        }
                    }
                }
            }
        }
        let d_input = d_in.map(|d| FeatureMap::from_parts(self.in_channels, h, w, d));
        Ok(SimConvGrads {
            d_weights,
            d_input,
            d_bias,
        })
    }
}

/// Pixels per cache block in the sample-matrix kernels.
const TILE: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConvGrads {
    pub d_weights: Vec<f64>,
    /// `None` when the caller did not ask for the input gradient.
    pub d_input: Option<FeatureMap>,
    pub d_bias: Vec<f64>,
}

/// Bilinear stencils of every `(pixel, tap)` pair for one geometry field.
///
/// Layers that share a field and a support share the plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub height: usize,
    pub width: usize,
    pub taps: usize,
    index: Vec<[u32; 4]>,
    weight: Vec<[f64; 4]>,
}

impl SamplingPlan {
    pub fn new(field: &GeometryField, support: &[[i32; 2]]) -> Self {
        let (h, w) = (field.height, field.width);
        let taps = support.len();
        let mut index = Vec::with_capacity(h * w * taps);
        let mut weight = Vec::with_capacity(h * w * taps);
        for i in 0..h {
            for j in 0..w {
                let m = field.matrix(i * w + j);
                for y in sample_offsets([i as f64, j as f64], &m, support) {
                    let s = InterpSample::new(y, h, w);
                    index.push(s.flat_indices(w).map(|v| v as u32));
                    weight.push(s.weights);
                }
            }
        }
        Self {
            height: h,
            width: w,
            taps,
            index,
            weight,
        }
    }
}

fn check_field(f: &FeatureMap, field: &GeometryField) -> Result<()> {
    if (f.height(), f.width()) != (field.height, field.width) {
        return Err(Error::InvalidArgument(format!(
            "geometry field is {}x{} but the input is {}",
            field.height,
            field.width,
            f.shape_string()
        )));
    }
    Ok(())
}

pub fn simconv_forward(
    f: &FeatureMap,
    layer: &SimConvLayer,
    field: &GeometryField,
) -> Result<FeatureMap> {
    layer.validate()?;
    check_field(f, field)?;
    layer.forward_planned(f, &SamplingPlan::new(field, &layer.support))
}

/// Gradients of `Σ upstream · simconv_forward(f)` with the field held fixed.
pub fn simconv_backward(
    f: &FeatureMap,
    layer: &SimConvLayer,
    field: &GeometryField,
    upstream: &FeatureMap,
) -> Result<SimConvGrads> {
    layer.validate()?;
    check_field(f, field)?;
    let plan = SamplingPlan::new(field, &layer.support);
    let samples = layer.gather(f, &plan)?;
    layer.backward_samples(&samples, &plan, upstream, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::IDENTITY;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn random_layer(rng: &mut ChaCha8Rng, cin: usize, cout: usize, k: usize) -> SimConvLayer {
        let mut l = SimConvLayer::zeros(cin, cout, k).unwrap();
        l.weights
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-1.0..1.0));
        l.bias
            .iter_mut()
            .for_each(|b| *b = rng.gen_range(-1.0..1.0));
        l
    }

    fn random_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
        FeatureMap::new(
            c,
            h,
            w,
            (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, h: usize, w: usize) -> GeometryField {
        let mut field = GeometryField::identity(h, w);
        for px in 0..h * w {
            field.scale[px] = rng.gen_range(0.5..2.0);
            field.orientation[px] = rng.gen_range(0.0..std::f64::consts::TAU);
            field.confidence[px] = rng.gen_bool(0.8);
        }
        field
    }

    /// Nested-loop zero-padded cross-correlation.
    fn conv_oracle(f: &FeatureMap, l: &SimConvLayer) -> Vec<f64> {
        let (h, w) = (f.height() as i64, f.width() as i64);
        let mut out = vec![0.0; l.out_channels * (h * w) as usize];
        for o in 0..l.out_channels {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = l.bias[o];
                    for c in 0..l.in_channels {
                        for (t, &[dr, dc]) in l.support.iter().enumerate() {
                            let (r, q) = (i + dr as i64, j + dc as i64);
                            if r >= 0 && q >= 0 && r < h && q < w {
                                acc += l.weights[l.weight_index(o, c, t)]
                                    * f.get(c, r as usize, q as usize);
                            }
                        }
                    }
                    out[(o as i64 * h * w + i * w + j) as usize] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn sample_offset_examples() {
        let sup = square_support(3).unwrap();
        let ys = sample_offsets([0.0, 0.0], &IDENTITY, &sup);
        for (y, t) in ys.iter().zip(&sup) {
            assert_eq!(*y, [t[0] as f64, t[1] as f64]);
        }
        let y = sample_offsets([0.0, 0.0], &[[2.0, 0.0], [0.0, 2.0]], &[[1, 0]]);
        assert_eq!(y[0], [2.0, 0.0]);
        let r = crate::tensorcore::rotation(FRAC_PI_4);
        let y = sample_offsets([3.0, 4.0], &r, &[[1, 0]]);
        let h = FRAC_PI_4.cos();
        assert!((y[0][0] - (3.0 + h)).abs() < 1e-15 && (y[0][1] - (4.0 - h)).abs() < 1e-15);
        assert!(square_support(4).is_err());
    }

    #[test]
    fn identity_field_is_plain_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for case in 0..20 {
            let (h, w) = (rng.gen_range(3..12), rng.gen_range(3..12));
            let (cin, cout) = (rng.gen_range(1..4), rng.gen_range(1..4));
            let k = if case % 4 == 0 { 5 } else { 3 };
            let f = random_map(&mut rng, cin, h, w);
            let l = random_layer(&mut rng, cin, cout, k);
            let out = simconv_forward(&f, &l, &GeometryField::identity(h, w)).unwrap();
            let oracle = conv_oracle(&f, &l);
            let err = out
                .data()
                .iter()
                .zip(&oracle)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-12, "case {case}: {err}");
        }
    }

    #[test]
    fn delta_filter_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_map(&mut rng, 1, 9, 7);
        let mut l = SimConvLayer::zeros(1, 1, 3).unwrap();
        l.weights[4] = 1.0;
        l.bias[0] = 0.25;
        let out = simconv_forward(&f, &l, &random_field(&mut rng, 9, 7)).unwrap();
        for (a, b) in out.data().iter().zip(f.data()) {
            assert!((a - (b + 0.25)).abs() < 1e-15);
        }
    }

    #[test]
    fn quarter_turn_field_rotates_the_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_map(&mut rng, 2, 10, 8);
        let l = random_layer(&mut rng, 2, 3, 3);
        let field = GeometryField::uniform(10, 8, 1.0, FRAC_PI_2, true);
        // M t maps (r, c) to (c, -r), so tap (r, c) reads where the plain
        // filter's tap (c, -r) would.
        let mut rotated = l.clone();
        for o in 0..3 {
            for c in 0..2 {
                for (t, &[r, q]) in l.support.iter().enumerate() {
                    let dst = l.support.iter().position(|&s| s == [q, -r]).unwrap();
                    rotated.weights[l.weight_index(o, c, dst)] = l.weights[l.weight_index(o, c, t)];
                }
            }
        }
        let got = simconv_forward(&f, &l, &field).unwrap();
        let oracle = conv_oracle(&f, &rotated);
        let err = got
            .data()
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-12, "{err}");
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_map(&mut rng, 2, 6, 6);
        let l = random_layer(&mut rng, 2, 2, 3);
        let g = simconv_backward(
            &f,
            &l,
            &random_field(&mut rng, 6, 6),
            &FeatureMap::zeros(2, 6, 6),
        )
        .unwrap();
        assert!(g.d_weights.iter().chain(&g.d_bias).all(|v| *v == 0.0));
        assert!(g.d_input.unwrap().data().iter().all(|v| *v == 0.0));
        let bad = simconv_backward(
            &f,
            &l,
            &GeometryField::identity(6, 6),
            &FeatureMap::zeros(1, 6, 6),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn identity_field_weight_gradient_matches_conv_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_map(&mut rng, 2, 7, 9);
        let l = random_layer(&mut rng, 2, 3, 3);
        let up = random_map(&mut rng, 3, 7, 9);
        let g = simconv_backward(&f, &l, &GeometryField::identity(7, 9), &up).unwrap();
        for o in 0..3 {
            for c in 0..2 {
                for (t, &[dr, dc]) in l.support.iter().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..7i64 {
                        for j in 0..9i64 {
                            let (r, q) = (i + dr as i64, j + dc as i64);
                            if (0..7).contains(&r) && (0..9).contains(&q) {
                                acc += up.get(o, i as usize, j as usize)
                                    * f.get(c, r as usize, q as usize);
                            }
                        }
                    }
                    assert!((g.d_weights[l.weight_index(o, c, t)] - acc).abs() <= 1e-10);
                }
            }
        }
    }

    /// Loss `Σ up · out`; central differences in every weight, the biases
    /// and a random subset of input positions.
    pub(crate) fn gradient_check(seed: u64, inputs_checked: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (8, 8);
        let f = random_map(&mut rng, 1, h, w);
        let mut l = random_layer(&mut rng, 1, 2, 3);
        l.quad_weight = 0.7;
        // Keep taps off exact grid lines, where bilinear weights have kinks.
        let mut field = random_field(&mut rng, h, w);
        field.confidence.iter_mut().for_each(|c| *c = true);
        let up = random_map(&mut rng, 2, h, w);
        let loss = |f: &FeatureMap, l: &SimConvLayer| -> f64 {
            let out = simconv_forward(f, l, &field).unwrap();
            out.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
        };
        let g = simconv_backward(&f, &l, &field, &up).unwrap();
        let eps = 1e-6;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
        let mut worst: f64 = 0.0;
        for k in 0..l.weights.len() {
            let (mut p, mut m) = (l.clone(), l.clone());
            p.weights[k] += eps;
            m.weights[k] -= eps;
            worst = worst.max(rel(
                (loss(&f, &p) - loss(&f, &m)) / (2.0 * eps),
                g.d_weights[k],
            ));
        }
        for k in 0..l.bias.len() {
            let (mut p, mut m) = (l.clone(), l.clone());
            p.bias[k] += eps;
            m.bias[k] -= eps;
            worst = worst.max(rel(
                (loss(&f, &p) - loss(&f, &m)) / (2.0 * eps),
                g.d_bias[k],
            ));
        }
        let d_in = g.d_input.unwrap();
        for _ in 0..inputs_checked {
            let k = rng.gen_range(0..h * w);
            let mut dp = f.data().to_vec();
            let mut dm = f.data().to_vec();
            dp[k] += eps;
            dm[k] -= eps;
            let fp = FeatureMap::new(1, h, w, dp).unwrap();
            let fm = FeatureMap::new(1, h, w, dm).unwrap();
            worst = worst.max(rel(
                (loss(&fp, &l) - loss(&fm, &l)) / (2.0 * eps),
                d_in.data()[k],
            ));
        }
        worst
    }

    #[test]
    fn finite_differences_agree() {
        let worst = gradient_check(6, 64);
        assert!(worst <= 1e-5, "max relative error {worst}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn linear_in_input_and_weights(seed in 0u64..10_000, a in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (f1, f2) = (random_map(&mut rng, 2, 6, 5), random_map(&mut rng, 2, 6, 5));
            let mut l = random_layer(&mut rng, 2, 2, 3);
            l.bias = vec![0.0; 2];
            let field = random_field(&mut rng, 6, 5);
            let mix = f1.axpby(a, &f2, 1.0).unwrap();
            let lhs = simconv_forward(&mix, &l, &field).unwrap();
            let rhs = simconv_forward(&f1, &l, &field).unwrap()
                .axpby(a, &simconv_forward(&f2, &l, &field).unwrap(), 1.0).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12);

            let l2 = random_layer(&mut rng, 2, 2, 3);
            let mut lmix = l.clone();
            for (w, v) in lmix.weights.iter_mut().zip(&l2.weights) {
                *w = a * *w + v;
            }
            let mut l2b = l2.clone();
            l2b.bias = vec![0.0; 2];
            let lhs = simconv_forward(&f1, &lmix, &field).unwrap();
            let rhs = simconv_forward(&f1, &l, &field).unwrap()
                .axpby(a, &simconv_forward(&f1, &l2b, &field).unwrap(), 1.0).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12);
        }
    }
}
