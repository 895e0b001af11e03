//! Per-pixel scale and orientation from normalized basis responses.
//!
//! For each pixel the normalized cross-correlations `f_{k1,k2}(x)` with the
//! basis atoms are combined with steering coefficients
//! `c_{k1,k2}(λ, γ) = exp(-i k1 γ - i k2 ω ln λ) λ^{-m}` and the `(λ, γ)`
//! cell with the largest real score is taken as `(Λ(x), Γ(x))`. A warp of
//! the input by scale `s` and rotation `α` shifts that argmax to
//! `(s Λ, Γ + α)` at the corresponding location.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fourier_argand::{BasisConfig, BasisSet};
use crate::tensorcore::{normalize_angle, rotation, FeatureMap, Mat2};
use crate::{Error, Result};

/// Patches whose standard deviation is at or below this are treated as flat.
pub const SIGMA_FLOOR: f64 = 1e-8;

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// Normalized basis responses of a single-channel map.
#[derive(Debug, Clone)]
pub struct ResponseStack {
    pub height: usize,
    pub width: usize,
    pub orders: Vec<(i32, i32)>,
    /// One `H×W` grid per entry of `orders`.
    pub responses: Vec<Vec<Complex64>>,
    pub local_mean: Vec<f64>,
    pub local_std: Vec<f64>,
    /// `local_std > SIGMA_FLOOR`.
    pub valid: Vec<bool>,
    pub basis: BasisConfig,
}

impl ResponseStack {
    pub fn response(&self, k1: i32, k2: i32) -> Option<&[Complex64]> {
        self.orders
            .iter()
            .position(|&o| o == (k1, k2))
            .map(|i| self.responses[i].as_slice())
    }

    /// Multiplies every response by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.responses
            .iter_mut()
            .flatten()
            .for_each(|v| *v *= factor);
        out
    }
}

/// `f_k(x) = ([f ⋆ H_k](x) - N μ_i(x) μ_H) / (σ_i(x) σ_H)` over the annulus
/// footprint, with `σ_i = ‖f - μ_i‖₂` on the footprint and `σ_H` the
/// centered atom norm. The numerator is accumulated as `Σ (f - μ_i) H`,
/// which is the same quantity. Reads outside the image are zero.
pub fn basis_responses(f: &FeatureMap, basis: &BasisSet) -> Result<ResponseStack> {
    if f.channels() != 1 {
        return Err(Error::InvalidArgument(format!(
            "basis responses need a single-channel map, got {} channels",
            f.channels()
        )));
    }
    let cfg = basis.config();
    let (h, w) = (f.height(), f.width());
    if h < cfg.patch || w < cfg.patch {
        return Err(Error::InvalidArgument(format!(
            "{h}x{w} map is smaller than the {0}x{0} basis patch",
            cfg.patch
        )));
    }
    let plane = f.channel(0);
    let footprint = basis.footprint();
    let n = footprint.len();

    // Only compute one of each conjugate pair; real input makes the other exact.
    let atoms = basis.atoms();
    let primary: Vec<usize> = atoms
        .iter()
        .enumerate()
        .filter(|(_, a)| a.k1 > 0 || (a.k1 == 0 && a.k2 >= 0))
        .map(|(i, _)| i)
        .collect();
    let re: Vec<Vec<f64>> = primary
        .iter()
        .map(|&i| atoms[i].support.iter().map(|v| v.re).collect())
        .collect();
    let im: Vec<Vec<f64>> = primary
        .iter()
        .map(|&i| atoms[i].support.iter().map(|v| v.im).collect())
        .collect();

    let npx = h * w;
    let mut responses = vec![vec![Complex64::new(0.0, 0.0); npx]; atoms.len()];
    let mut local_mean = vec![0.0; npx];
    let mut local_std = vec![0.0; npx];
    let mut valid = vec![false; npx];
    let mut window = vec![0.0; n];

    for i in 0..h {
        for j in 0..w {
            let interior = i >= cfg.patch / 2
                && j >= cfg.patch / 2
                && i + cfg.patch / 2 < h
                && j + cfg.patch / 2 < w;
            for (v, &[dr, dc]) in window.iter_mut().zip(footprint) {
                let (r, c) = (i as i64 + dr as i64, j as i64 + dc as i64);
                *v = if interior || (r >= 0 && c >= 0 && r < h as i64 && c < w as i64) {
                    plane[r as usize * w + c as usize]
                } else {
                    0.0
                };
            }
            let px = i * w + j;
            let mean = window.iter().sum::<f64>() / n as f64;
            window.iter_mut().for_each(|v| *v -= mean);
            let sigma = window.iter().map(|v| v * v).sum::<f64>().sqrt();
            local_mean[px] = mean;
            local_std[px] = sigma;
            if sigma <= SIGMA_FLOOR {
                continue;
            }
            valid[px] = true;
            for (q, &ai) in primary.iter().enumerate() {
                let (mut sr, mut si) = (0.0, 0.0);
                for ((v, a), b) in window.iter().zip(&re[q]).zip(&im[q]) {
                    sr += v * a;
                    si += v * b;
                }
                let scale = 1.0 / (sigma * atoms[ai].norm);
                responses[ai][px] = Complex64::new(sr * scale, si * scale);
            }
        }
    }
    for (ai, atom) in atoms.iter().enumerate() {
        if primary.contains(&ai) {
            continue;
        }
        let mirror = atoms
            .iter()
            .position(|a| a.k1 == -atom.k1 && a.k2 == -atom.k2)
            .expect("basis orders are symmetric");
        let conj: Vec<Complex64> = responses[mirror].iter().map(|v| v.conj()).collect();
        responses[ai] = conj;
    }

    Ok(ResponseStack {
        height: h,
        width: w,
        orders: atoms.iter().map(|a| (a.k1, a.k2)).collect(),
        responses,
        local_mean,
        local_std,
        valid,
        basis: *cfg,
    })
}

/// Search-grid parameters as they appear in run configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_lambda: usize,
    pub n_gamma: usize,
    pub lambda_range: [f64; 2],
    /// Minimum `best - median` score; `None` means `0.01 · |orders|`.
    pub conf_threshold: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_lambda: 9,
            n_gamma: 16,
            lambda_range: [0.5, 2.0],
            conf_threshold: None,
        }
    }
}

impl GridConfig {
    pub fn threshold_for(&self, basis: &BasisConfig) -> f64 {
        self.conf_threshold
            .unwrap_or(0.01 * basis.order_count() as f64)
    }
}

/// Candidate `(λ, γ)` cells and their steering coefficients.
#[derive(Debug, Clone)]
pub struct SearchGrid {
    pub basis: BasisConfig,
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub orders: Vec<(i32, i32)>,
    /// `c_k(λ, γ)` at `[(li * n_gamma + gi) * n_orders + k]`.
    pub table: Vec<Complex64>,
    /// Unit-modulus radial phases `exp(-i k2 ω ln λ)` at `[li * n_k2 + k2 + K2]`.
    radial_phase: Vec<Complex64>,
    /// `exp(-i k1 γ)` at `[gi * n_k1 + k1 + K1]`.
    angular_phase: Vec<Complex64>,
}

pub fn build_search_grid(
    basis: &BasisConfig,
    n_lambda: usize,
    n_gamma: usize,
    lambda_range: (f64, f64),
) -> Result<SearchGrid> {
    basis.validate()?;
    let (lo, hi) = lambda_range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda range must satisfy 0 < lo < hi, got ({lo}, {hi})"
        )));
    }
    if n_lambda == 0 || n_gamma == 0 {
        return Err(Error::InvalidParameter(
            "search grid must be non-empty".into(),
        ));
    }
    let lambdas: Vec<f64> = if n_lambda == 1 {
        vec![(lo * hi).sqrt()]
    } else {
        (0..n_lambda)
            .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n_lambda - 1) as f64).exp())
            .collect()
    };
    let gammas: Vec<f64> = (0..n_gamma)
        .map(|i| TAU * i as f64 / n_gamma as f64)
        .collect();
    let orders = basis.orders();
    let omega = basis.radial_frequency();
    let (k1_max, k2_max) = (basis.k1_max as i32, basis.k2_max as i32);

    let mut table = Vec::with_capacity(n_lambda * n_gamma * orders.len());
    for &lambda in &lambdas {
        for &gamma in &gammas {
            for &(k1, k2) in &orders {
                let phase = -(k1 as f64) * gamma - k2 as f64 * omega * lambda.ln();
                table.push(Complex64::from_polar(lambda.powf(-basis.m), phase));
            }
        }
    }
    let radial_phase = lambdas
        .iter()
        .flat_map(|l| {
            (-k2_max..=k2_max)
                .map(move |k2| Complex64::from_polar(1.0, -(k2 as f64) * omega * l.ln()))
        })
        .collect();
    let angular_phase = gammas
        .iter()
        .flat_map(|g| {
            (-k1_max..=k1_max).map(move |k1| Complex64::from_polar(1.0, -(k1 as f64) * g))
        })
        .collect();
    Ok(SearchGrid {
        basis: *basis,
        lambdas,
        gammas,
        orders,
        table,
        radial_phase,
        angular_phase,
    })
}

impl SearchGrid {
    pub fn from_config(basis: &BasisConfig, cfg: &GridConfig) -> Result<Self> {
        build_search_grid(
            basis,
            cfg.n_lambda,
            cfg.n_gamma,
            (cfg.lambda_range[0], cfg.lambda_range[1]),
        )
    }

    pub fn cells(&self) -> usize {
        self.lambdas.len() * self.gammas.len()
    }

    pub fn entry(&self, li: usize, gi: usize, k1: i32, k2: i32) -> Complex64 {
        let k = self
            .orders
            .iter()
            .position(|&o| o == (k1, k2))
            .expect("order in grid");
        self.table[(li * self.gammas.len() + gi) * self.orders.len() + k]
    }

    /// Log-spacing of the λ candidates (0 for a single candidate).
    pub fn lambda_step(&self) -> f64 {
        if self.lambdas.len() < 2 {
            0.0
        } else {
            (self.lambdas[1] / self.lambdas[0]).ln()
        }
    }

    pub fn gamma_step(&self) -> f64 {
        TAU / self.gammas.len() as f64
    }

    /// Scores of every cell for one pixel's response vector, written into
    /// `out` (length `cells()`).
    ///
    /// `score(λ, γ) = Re Σ_k f_k c_k(λ, γ) / λ^{-m}`: each table row is
    /// rescaled to unit-modulus entries, which equals dividing by its L2
    /// norm up to the constant `sqrt(|orders|)`, so that the `λ^{-m}`
    /// factor does not bias the argmax towards one end of the λ range.
    pub fn scores(&self, responses: &[Complex64], out: &mut [f64]) {
        let n_k1 = 2 * self.basis.k1_max as usize + 1;
        let n_k2 = 2 * self.basis.k2_max as usize + 1;
        let ng = self.gammas.len();
        let mut partial = vec![Complex64::new(0.0, 0.0); n_k1];
        for li in 0..self.lambdas.len() {
            let rp = &self.radial_phase[li * n_k2..(li + 1) * n_k2];
            for (q, p) in partial.iter_mut().enumerate() {
                *p = responses[q * n_k2..(q + 1) * n_k2]
                    .iter()
                    .zip(rp)
                    .map(|(f, c)| f * c)
                    .sum();
            }
            for gi in 0..ng {
                let ap = &self.angular_phase[gi * n_k1..(gi + 1) * n_k1];
                out[li * ng + gi] = partial
                    .iter()
                    .zip(ap)
                    .map(|(p, c)| p.re * c.re - p.im * c.im)
                    .sum();
            }
        }
    }
}

/// Per-pixel `Λ`, `Γ` and confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryField {
    pub height: usize,
    pub width: usize,
    pub scale: Vec<f64>,
    pub orientation: Vec<f64>,
    pub confidence: Vec<bool>,
}

impl GeometryField {
    /// Every pixel at `Λ = 1`, `Γ = 0`, not confident: SimConv on this field
    /// is plain cross-correlation.
    pub fn identity(height: usize, width: usize) -> Self {
        Self::uniform(height, width, 1.0, 0.0, false)
    }

    pub fn uniform(
        height: usize,
        width: usize,
        scale: f64,
        orientation: f64,
        confident: bool,
    ) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            scale: vec![scale; n],
            orientation: vec![normalize_angle(orientation); n],
            confidence: vec![confident; n],
        }
    }

    /// `M(x) = A_Λ R_Γ` at a flat pixel index, identity where not confident.
    #[inline]
    pub fn matrix(&self, px: usize) -> Mat2 {
        if !self.confidence[px] {
            return IDENTITY;
        }
        let r = rotation(self.orientation[px]);
        let l = self.scale[px];
        [[l * r[0][0], l * r[0][1]], [l * r[1][0], l * r[1][1]]]
    }

    pub fn confident_fraction(&self) -> f64 {
        self.confidence.iter().filter(|&&c| c).count() as f64 / self.confidence.len().max(1) as f64
    }
}

/// Grid-search argmax of the steering score at every pixel.
///
/// Ties go to the smallest λ index, then the smallest γ index. A pixel is
/// confident when its patch is not flat and `best - median ≥ conf_threshold`.
pub fn estimate_geometry(
    stack: &ResponseStack,
    grid: &SearchGrid,
    conf_threshold: f64,
) -> Result<GeometryField> {
    if stack.basis != grid.basis || stack.orders != grid.orders {
        return Err(Error::InvalidArgument(
            "response stack and search grid come from different bases".into(),
        ));
    }
    let npx = stack.height * stack.width;
    let ng = grid.gammas.len();
    let mut field = GeometryField::identity(stack.height, stack.width);
    let mut vec = vec![Complex64::new(0.0, 0.0); stack.orders.len()];
    let mut scores = vec![0.0; grid.cells()];
    let mut sorted = vec![0.0; grid.cells()];
    for px in 0..npx {
        for (v, r) in vec.iter_mut().zip(&stack.responses) {
            *v = r[px];
        }
        grid.scores(&vec, &mut scores);
        let mut best = 0;
        for (cell, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = cell;
            }
        }
        field.scale[px] = grid.lambdas[best / ng];
        field.orientation[px] = grid.gammas[best % ng];
        if stack.valid[px] {
            sorted.copy_from_slice(&scores);
            let median = median_in_place(&mut sorted);
            field.confidence[px] = scores[best] - median >= conf_threshold;
        }
    }
    Ok(field)
}

fn median_in_place(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `M_f(x) = A_{Λ(x)} R_{Γ(x)}` for every pixel (identity where not confident).
pub fn geometry_to_matrices(field: &GeometryField) -> Vec<Mat2> {
    (0..field.height * field.width)
        .map(|px| field.matrix(px))
        .collect()
}

/// Mean over channels.
pub fn channel_reduce(f: &FeatureMap) -> FeatureMap {
    if f.channels() == 1 {
        return f.clone();
    }
    let n = f.plane_len();
    let mut out = vec![0.0; n];
    for c in 0..f.channels() {
        for (o, v) in out.iter_mut().zip(f.channel(c)) {
            *o += v;
        }
    }
    let inv = 1.0 / f.channels() as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    FeatureMap::from_parts(1, f.height(), f.width(), out).with_origin(f.origin())
}

/// Basis, search grid and threshold bundled for repeated use.
#[derive(Debug, Clone)]
pub struct GeometryEstimator {
    pub basis: BasisSet,
    pub grid: SearchGrid,
    pub conf_threshold: f64,
}

impl GeometryEstimator {
    pub fn new(basis: &BasisConfig, grid: &GridConfig) -> Result<Self> {
        if basis.k1_max == 0 {
            return Err(Error::InvalidParameter(
                "orientation estimation needs k1_max >= 1".into(),
            ));
        }
        Ok(Self {
            basis: crate::fourier_argand::build_basis(basis)?,
            grid: SearchGrid::from_config(basis, grid)?,
            conf_threshold: grid.threshold_for(basis),
        })
    }

    /// Geometry of the channel mean of `f`.
    pub fn estimate(&self, f: &FeatureMap) -> Result<GeometryField> {
        let stack = basis_responses(&channel_reduce(f), &self.basis)?;
        estimate_geometry(&stack, &self.grid, self.conf_threshold)
    }
}
