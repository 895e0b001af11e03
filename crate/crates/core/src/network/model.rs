use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fourier_argand::BasisConfig;
use crate::geometry::{GeometryEstimator, GeometryField, GridConfig};
use crate::rng::{stream, Domain};
use crate::simconv::{SamplingPlan, SimConvLayer};
use crate::tensorcore::FeatureMap;
use crate::{Error, Result};

/// Where block geometry comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryMode {
    /// Estimated per block from the block input.
    Full,
    /// Identity everywhere: a plain CNN with the same parameters.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub in_channels: usize,
    /// Output channels of every layer, grouped by block.
    pub blocks: Vec<Vec<usize>>,
    /// Side of the square SimConv support.
    pub support: usize,
    pub classes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            in_channels: 1,
            blocks: vec![vec![16, 16], vec![32, 32]],
            support: 3,
            classes: 10,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.classes == 0 || self.blocks.is_empty() {
            return Err(Error::InvalidParameter(
                "architecture needs input channels, classes and at least one block".into(),
            ));
        }
        if self.blocks.iter().any(|b| b.is_empty() || b.contains(&0)) {
            return Err(Error::InvalidParameter(
                "every block needs at least one layer with nonzero channels".into(),
            ));
        }
        Ok(())
    }

    pub fn feature_channels(&self) -> usize {
        *self
            .blocks
            .last()
            .and_then(|b| b.last())
            .unwrap_or(&self.in_channels)
    }

    /// Spatial side of the smallest block input for a square input.
    pub fn smallest_block_input(&self, side: usize) -> usize {
        side >> (self.blocks.len() - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimBlock {
    pub layers: Vec<SimConvLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                self.bias[o]
                    + self.weights[o * self.inputs..(o + 1) * self.inputs]
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect()
    }
}

fn xavier(rng: &mut impl Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// 2× average pooling (trailing odd row/column dropped).
pub fn avgpool2(f: &FeatureMap) -> FeatureMap {
    let (h, w) = (f.height() / 2, f.width() / 2);
    let mut out = Vec::with_capacity(f.channels() * h * w);
    for c in 0..f.channels() {
        let p = f.channel(c);
        for i in 0..h {
            for j in 0..w {
                let a = 2 * i * f.width() + 2 * j;
                out.push(0.25 * (p[a] + p[a + 1] + p[a + f.width()] + p[a + f.width() + 1]));
            }
        }
    }
    FeatureMap::from_parts(f.channels(), h, w, out)
}

pub fn avgpool2_backward(grad: &FeatureMap, height: usize, width: usize) -> FeatureMap {
    let mut out = vec![0.0; grad.channels() * height * width];
    let (h, w) = (grad.height(), grad.width());
    for c in 0..grad.channels() {
        let g = grad.channel(c);
        let plane = &mut out[c * height * width..(c + 1) * height * width];
        for i in 0..h {
            for j in 0..w {
                let v = 0.25 * g[i * w + j];
                let a = 2 * i * width + 2 * j;
                plane[a] += v;
                plane[a + 1] += v;
                plane[a + width] += v;
                plane[a + width + 1] += v;
            }
        }
    }
    FeatureMap::from_parts(grad.channels(), height, width, out)
}

/// Per-channel spatial maximum and its flat position (first on ties).
pub fn global_max(f: &FeatureMap) -> (Vec<f64>, Vec<usize>) {
    (0..f.channels())
        .map(|c| {
            f.channel(c)
                .iter()
                .enumerate()
                .fold((f64::NEG_INFINITY, 0), |(bv, bi), (i, &v)| {
                    if v > bv {
                        (v, i)
                    } else {
                        (bv, bi)
                    }
                })
        })
        .unzip()
}

fn relu_in_place(f: FeatureMap) -> FeatureMap {
    let (c, h, w) = (f.channels(), f.height(), f.width());
    let origin = f.origin();
    let mut data = f.into_data();
    data.iter_mut().for_each(|v| *v = v.max(0.0));
    FeatureMap::from_parts(c, h, w, data).with_origin(origin)
}

/// Applies one block: geometry from `channel_reduce(f)` (or identity when
/// `estimator` is `None`), then SimConv + rectifier for every layer.
pub fn simblock_forward(
    f: &FeatureMap,
    block: &SimBlock,
    estimator: Option<&GeometryEstimator>,
) -> Result<FeatureMap> {
    let field = match estimator {
        Some(est) => est.estimate(f)?,
        None => GeometryField::identity(f.height(), f.width()),
    };
    let mut x = f.clone();
    let mut plan: Option<SamplingPlan> = None;
    for layer in &block.layers {
        let p = match &plan {
            Some(p) if p.taps == layer.taps() => p,
            _ => plan.insert(SamplingPlan::new(&field, &layer.support)),
        };
        x = relu_in_place(layer.forward_planned(&x, p)?);
    }
    Ok(x)
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub logits: Vec<f64>,
    blocks: Vec<BlockTrace>,
    pooled_from: Vec<usize>,
    feature_dims: (usize, usize, usize),
}

#[derive(Debug, Clone)]
struct BlockTrace {
    plan: SamplingPlan,
    input_dims: (usize, usize),
    /// Per layer: bilinear samples of its input and its rectified output.
    samples: Vec<Vec<f64>>,
    outputs: Vec<FeatureMap>,
}

/// Gradients for every parameter, in the model's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
    pub head_weights: Vec<f64>,
    pub head_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &SrenModel) -> Self {
        Self {
            layers: model
                .blocks
                .iter()
                .map(|b| {
                    b.layers
                        .iter()
                        .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                        .collect()
                })
                .collect(),
            head_weights: vec![0.0; model.head.weights.len()],
            head_bias: vec![0.0; model.head.bias.len()],
        }
    }

    /// Flat views in the same order as [`SrenModel::params_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for block in &self.layers {
            for (w, b) in block {
                out.push(w);
                out.push(b);
            }
        }
        out.push(&self.head_weights);
        out.push(&self.head_bias);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for block in &mut self.layers {
            for (w, b) in block {
                out.push(w);
                out.push(b);
            }
        }
        out.push(&mut self.head_weights);
        out.push(&mut self.head_bias);
        out
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= k);
        }
    }
}

#[derive(Debug, Clone)]
pub struct SrenModel {
    pub arch: Architecture,
    pub mode: GeometryMode,
    pub basis: BasisConfig,
    pub grid: GridConfig,
    pub seed: u64,
    pub blocks: Vec<SimBlock>,
    pub head: Linear,
    estimator: GeometryEstimator,
}

impl SrenModel {
    /// Xavier-uniform weights and zero biases drawn from `seed`.
    pub fn new(
        arch: Architecture,
        mode: GeometryMode,
        basis: BasisConfig,
        grid: GridConfig,
        seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        let estimator = GeometryEstimator::new(&basis, &grid)?;
        let mut stream_id = 0;
        let mut next_rng = || {
            stream_id += 1;
            stream(seed, Domain::Init, stream_id)
        };
        let mut cin = arch.in_channels;
        let mut blocks = Vec::new();
        for spec in &arch.blocks {
            let mut layers = Vec::new();
            for &cout in spec {
                let mut layer = SimConvLayer::zeros(cin, cout, arch.support)?;
                let n = layer.taps();
                layer.weights = xavier(&mut next_rng(), cin * n, cout * n, layer.weights.len());
                layers.push(layer);
                cin = cout;
            }
            blocks.push(SimBlock { layers });
        }
        let head = Linear {
            inputs: cin,
            outputs: arch.classes,
            weights: xavier(&mut next_rng(), cin, arch.classes, cin * arch.classes),
            bias: vec![0.0; arch.classes],
        };
        Ok(Self {
            arch,
            mode,
            basis,
            grid,
            seed,
            blocks,
            head,
            estimator,
        })
    }

    /// Rebuilds a model around existing parameters.
    pub fn from_parts(
        arch: Architecture,
        mode: GeometryMode,
        basis: BasisConfig,
        grid: GridConfig,
        seed: u64,
        blocks: Vec<SimBlock>,
        head: Linear,
    ) -> Result<Self> {
        let mut model = Self::new(arch, mode, basis, grid, seed)?;
        let shapes_match = blocks.len() == model.blocks.len()
            && blocks.iter().zip(&model.blocks).all(|(a, b)| {
                a.layers.len() == b.layers.len()
                    && a.layers.iter().zip(&b.layers).all(|(x, y)| {
                        x.validate().is_ok()
                            && (x.in_channels, x.out_channels, &x.support)
                                == (y.in_channels, y.out_channels, &y.support)
                    })
            })
            && (
                head.inputs,
                head.outputs,
                head.weights.len(),
                head.bias.len(),
            ) == (
                model.head.inputs,
                model.head.outputs,
                model.head.weights.len(),
                model.head.bias.len(),
            );
        if !shapes_match {
            return Err(Error::InvalidArgument(
                "parameters do not match the declared architecture".into(),
            ));
        }
        model.blocks = blocks;
        model.head = head;
        Ok(model)
    }

    pub fn estimator(&self) -> &GeometryEstimator {
        &self.estimator
    }

    fn active_estimator(&self) -> Option<&GeometryEstimator> {
        (self.mode == GeometryMode::Full).then_some(&self.estimator)
    }

    pub fn param_count(&self) -> usize {
        self.blocks
            .iter()
            .flat_map(|b| &b.layers)
            .map(|l| l.weights.len() + l.bias.len())
            .sum::<usize>()
            + self.head.weights.len()
            + self.head.bias.len()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for block in &self.blocks {
            for l in &block.layers {
                out.push(&l.weights);
                out.push(&l.bias);
            }
        }
        out.push(&self.head.weights);
        out.push(&self.head.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for block in &mut self.blocks {
            for l in &mut block.layers {
                out.push(&mut l.weights);
                out.push(&mut l.bias);
            }
        }
        out.push(&mut self.head.weights);
        out.push(&mut self.head.bias);
        out
    }

    /// Geometry the first block would use for `f`.
    pub fn input_field(&self, f: &FeatureMap) -> Result<GeometryField> {
        match self.active_estimator() {
            Some(est) => est.estimate(f),
            None => Ok(GeometryField::identity(f.height(), f.width())),
        }
    }

    fn check_input(&self, f: &FeatureMap) -> Result<()> {
        if f.channels() != self.arch.in_channels {
            return Err(Error::InvalidArgument(format!(
                "model expects {} input channels, got {}",
                self.arch.in_channels,
                f.channels()
            )));
        }
        let smallest = self.arch.smallest_block_input(f.height().min(f.width()));
        if smallest < self.basis.patch {
            return Err(Error::InvalidArgument(format!(
                "a {} input shrinks to {smallest} px at the last block, below the {} px basis patch",
                f.shape_string(),
                self.basis.patch
            )));
        }
        Ok(())
    }

    /// Output of the last block.
    pub fn features(&self, f: &FeatureMap) -> Result<FeatureMap> {
        self.check_input(f)?;
        let mut x = f.clone();
        for (b, block) in self.blocks.iter().enumerate() {
            if b > 0 {
                x = avgpool2(&x);
            }
            x = simblock_forward(&x, block, self.active_estimator())?;
        }
        Ok(x)
    }

    pub fn forward(&self, f: &FeatureMap) -> Result<Vec<f64>> {
        Ok(self.head.apply(&global_max(&self.features(f)?).0))
    }

    /// Forward pass that keeps intermediates. `first_field` replaces the
    /// first block's geometry (it depends only on the input, so callers can
    /// cache it).
    pub fn trace(&self, f: &FeatureMap, first_field: Option<&GeometryField>) -> Result<Trace> {
        self.check_input(f)?;
        let mut x = f.clone();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (b, block) in self.blocks.iter().enumerate() {
            if b > 0 {
                x = avgpool2(&x);
            }
            let field = match (b, first_field) {
                (0, Some(field)) => {
                    if (field.height, field.width) != (x.height(), x.width()) {
                        return Err(Error::InvalidArgument(
                            "cached field does not match the input".into(),
                        ));
                    }
                    field.clone()
                }
                _ => self.input_field(&x)?,
            };
            let plan = SamplingPlan::new(&field, &block.layers[0].support);
            let input_dims = (x.height(), x.width());
            let mut samples = Vec::with_capacity(block.layers.len());
            let mut outputs = Vec::with_capacity(block.layers.len());
            for layer in &block.layers {
                let s = layer.gather(&x, &plan)?;
                x = relu_in_place(layer.apply_samples(&s, x.height(), x.width()));
                samples.push(s);
                outputs.push(x.clone());
            }
            blocks.push(BlockTrace {
                plan,
                input_dims,
                samples,
                outputs,
            });
        }
        let (pooled, pooled_from) = global_max(&x);
        Ok(Trace {
            logits: self.head.apply(&pooled),
            blocks,
            pooled_from,
            feature_dims: (x.channels(), x.height(), x.width()),
        })
    }

    /// Gradients of `Σ d_logits · logits` through a recorded pass.
    pub fn backward(&self, trace: &Trace, d_logits: &[f64]) -> Result<Gradients> {
        if d_logits.len() != self.head.outputs {
            return Err(Error::shape(self.head.outputs, d_logits.len()));
        }
        let mut grads = Gradients::zeros_like(self);
        let (c, h, w) = trace.feature_dims;
        let pooled: Vec<f64> = (0..c)
            .map(|ch| {
                trace
                    .blocks
                    .last()
                    .unwrap()
                    .outputs
                    .last()
                    .unwrap()
                    .channel(ch)[trace.pooled_from[ch]]
            })
            .collect();
        let mut d_feat = vec![0.0; c * h * w];
        for o in 0..self.head.outputs {
            grads.head_bias[o] = d_logits[o];
            for i in 0..self.head.inputs {
                grads.head_weights[o * self.head.inputs + i] = d_logits[o] * pooled[i];
                d_feat[i * h * w + trace.pooled_from[i]] +=
                    d_logits[o] * self.head.weights[o * self.head.inputs + i];
            }
        }
        let mut upstream = FeatureMap::from_parts(c, h, w, d_feat);
        for b in (0..self.blocks.len()).rev() {
            let block = &self.blocks[b];
            let bt = &trace.blocks[b];
            for l in (0..block.layers.len()).rev() {
                let out = &bt.outputs[l];
                let masked: Vec<f64> = upstream
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                    .collect();
                let d_pre =
                    FeatureMap::from_parts(out.channels(), out.height(), out.width(), masked);
                let need_input = b > 0 || l > 0;
                let g = block.layers[l].backward_samples(
                    &bt.samples[l],
                    &bt.plan,
                    &d_pre,
                    need_input,
                )?;
                grads.layers[b][l] = (g.d_weights, g.d_bias);
                if let Some(d_in) = g.d_input {
                    upstream = d_in;
                }
            }
            if b > 0 {
                let (ph, pw) = trace.blocks[b - 1].input_dims;
                upstream = avgpool2_backward(&upstream, ph, pw);
            }
        }
        Ok(grads)
    }
}
