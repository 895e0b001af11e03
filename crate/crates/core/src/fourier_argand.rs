//! The scalable Fourier-Argand basis.
//!
//! Atoms are `H_{k1,k2}(r, θ) = r^m · exp(i (k1 θ + k2 · 2π ln r / ln(b/a)))`
//! on the annulus `a ≤ r < b`. In log-polar coordinates `(θ, ρ = ln r)` the
//! phase part is a plain 2-D Fourier mode, so rotating by `α` and scaling by
//! `s` multiplies each atom by the constant `exp(-i k1 α - i k2 ω ln s) s^{-m}`
//! with `ω = 2π / ln(b/a)`.
//!
//! Pixel polar coordinates use `r = |(dr, dc)|` and `θ = atan2(dr, dc)` for
//! a `[row, col]` offset from the patch center. With this convention a warp
//! by `R_α` (see [`crate::tensorcore::rotation`]) shifts polar angle by `+α`.

use std::f64::consts::TAU;

pub use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::tensorcore::srtn::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConfig {
    /// Inner radius in pixels.
    pub a: f64,
    /// Outer radius in pixels.
    pub b: f64,
    /// Radial exponent.
    pub m: f64,
    /// Angular orders `|k1| ≤ k1_max`.
    pub k1_max: u32,
    /// Log-radial orders `|k2| ≤ k2_max`.
    pub k2_max: u32,
    /// Side of the sampled filter grid.
    pub patch: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            a: 0.7,
            b: 7.5,
            m: -1.0,
            k1_max: 4,
            k2_max: 2,
            patch: 15,
        }
    }
}

impl BasisConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.patch == 0 {
            return bad("patch must be at least 1 pixel".into());
        }
        if !(self.a > 0.0 && self.a < self.b) {
            return bad(format!("need 0 < a < b, got a={} b={}", self.a, self.b));
        }
        if self.b > self.patch as f64 / 2.0 {
            return bad(format!(
                "b={} exceeds patch/2={}",
                self.b,
                self.patch as f64 / 2.0
            ));
        }
        if !self.m.is_finite() {
            return bad("m must be finite".into());
        }
        Ok(())
    }

    /// `ln(b/a)`, the log-radial period.
    pub fn log_period(&self) -> f64 {
        (self.b / self.a).ln()
    }

    /// `2π / ln(b/a)`.
    pub fn radial_frequency(&self) -> f64 {
        TAU / self.log_period()
    }

    pub fn orders(&self) -> Vec<(i32, i32)> {
        orders(self.k1_max, self.k2_max)
    }

    pub fn order_count(&self) -> usize {
        ((2 * self.k1_max + 1) * (2 * self.k2_max + 1)) as usize
    }

    pub fn in_annulus(&self, r: f64) -> bool {
        r >= self.a && r < self.b
    }

    /// The continuous atom `H_{k1,k2}(r, θ)`, zero off the annulus.
    pub fn atom_value(&self, k1: i32, k2: i32, r: f64, theta: f64) -> Complex64 {
        if !self.in_annulus(r) {
            return Complex64::new(0.0, 0.0);
        }
        let phase = k1 as f64 * theta + k2 as f64 * self.radial_frequency() * r.ln();
        Complex64::from_polar(r.powf(self.m), phase)
    }

    /// Multiplier that steers order `(k1, k2)` by rotation `alpha` and scale `s`.
    pub fn steering_factor(&self, k1: i32, k2: i32, alpha: f64, s: f64) -> Complex64 {
        let phase = -(k1 as f64) * alpha - k2 as f64 * self.radial_frequency() * s.ln();
        Complex64::from_polar(s.powf(-self.m), phase)
    }
}

/// All `(k1, k2)` with `|k1| ≤ k1_max`, `|k2| ≤ k2_max`, `k1`-major.
pub fn orders(k1_max: u32, k2_max: u32) -> Vec<(i32, i32)> {
    let (k1, k2) = (k1_max as i32, k2_max as i32);
    (-k1..=k1)
        .flat_map(|a| (-k2..=k2).map(move |b| (a, b)))
        .collect()
}

/// Polar coordinates `(r, θ ∈ [0, 2π))` of a `[row, col]` offset.
pub fn polar(dr: f64, dc: f64) -> (f64, f64) {
    (dr.hypot(dc), dr.atan2(dc).rem_euclid(TAU))
}

/// One sampled atom plus the statistics used by normalized correlation.
#[derive(Debug, Clone)]
pub struct Atom {
    pub k1: i32,
    pub k2: i32,
    /// `patch × patch` samples, zero outside the annulus.
    pub values: Vec<Complex64>,
    /// Samples at [`BasisSet::footprint`] positions.
    pub support: Vec<Complex64>,
    /// Mean over the annulus samples.
    pub mean: Complex64,
    /// `sqrt(Σ |H - mean|²)` over the annulus samples.
    pub norm: f64,
}

#[derive(Debug, Clone)]
pub struct BasisSet {
    config: BasisConfig,
    footprint: Vec<[i32; 2]>,
    atoms: Vec<Atom>,
}

pub fn build_basis(config: &BasisConfig) -> Result<BasisSet> {
    config.validate()?;
    let p = config.patch;
    let half = (p as f64 - 1.0) / 2.0;
    let mut footprint = Vec::new();
    let mut coords = Vec::new();
    for i in 0..p {
        for j in 0..p {
            let (dr, dc) = (i as f64 - half, j as f64 - half);
            let (r, theta) = polar(dr, dc);
            if config.in_annulus(r) {
                footprint.push([dr.round() as i32, dc.round() as i32]);
                coords.push((i * p + j, r, theta));
            }
        }
    }
    if footprint.is_empty() {
        return Err(Error::InvalidParameter(
            "annulus contains no pixel centers".into(),
        ));
    }
    let n = footprint.len() as f64;
    let mut atoms: Vec<Atom> = Vec::with_capacity(config.order_count());
    for (k1, k2) in config.orders() {
        // Negative orders are exact conjugates of positive ones.
        let mirror = atoms.iter().find(|a| a.k1 == -k1 && a.k2 == -k2);
        let support: Vec<Complex64> = match mirror {
            Some(m) => m.support.iter().map(|v| v.conj()).collect(),
            None => coords
                .iter()
                .map(|&(_, r, theta)| config.atom_value(k1, k2, r, theta))
                .collect(),
        };
        let mut values = vec![Complex64::new(0.0, 0.0); p * p];
        for (&(idx, _, _), &v) in coords.iter().zip(&support) {
            values[idx] = v;
        }
        let mean = support.iter().sum::<Complex64>() / n;
        let norm = support
            .iter()
            .map(|v| (v - mean).norm_sqr())
            .sum::<f64>()
            .sqrt();
        atoms.push(Atom {
            k1,
            k2,
            values,
            support,
            mean,
            norm,
        });
    }
    Ok(BasisSet {
        config: *config,
        footprint,
        atoms,
    })
}

impl BasisSet {
    pub fn config(&self) -> &BasisConfig {
        &self.config
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Integer `[row, col]` offsets of the annulus pixels.
    pub fn footprint(&self) -> &[[i32; 2]] {
        &self.footprint
    }

    pub fn atom(&self, k1: i32, k2: i32) -> Option<&Atom> {
        self.atoms.iter().find(|a| a.k1 == k1 && a.k2 == k2)
    }

    /// All atoms as one `[2, n_atoms, patch, patch]` tensor (real plane,
    /// then imaginary plane).
    pub fn to_tensor(&self) -> Tensor {
        let p = self.config.patch;
        let mut data = Vec::with_capacity(2 * self.atoms.len() * p * p);
        data.extend(
            self.atoms
                .iter()
                .flat_map(|a| a.values.iter().map(|v| v.re)),
        );
        data.extend(
            self.atoms
                .iter()
                .flat_map(|a| a.values.iter().map(|v| v.im)),
        );
        Tensor::new(vec![2, self.atoms.len(), p, p], data).expect("consistent dims")
    }
}

/// Complex coefficients `h_{k1,k2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTable {
    pub config: BasisConfig,
    pub values: Vec<Complex64>,
    /// Set when the quadrature was below four times the Nyquist count.
    pub coarse_quadrature: bool,
}

impl CoeffTable {
    pub fn zeros(config: &BasisConfig) -> Self {
        Self {
            config: *config,
            values: vec![Complex64::new(0.0, 0.0); config.order_count()],
            coarse_quadrature: false,
        }
    }

    pub fn index(&self, k1: i32, k2: i32) -> Option<usize> {
        let (m1, m2) = (self.config.k1_max as i32, self.config.k2_max as i32);
        (k1.abs() <= m1 && k2.abs() <= m2).then(|| ((k1 + m1) * (2 * m2 + 1) + (k2 + m2)) as usize)
    }

    pub fn get(&self, k1: i32, k2: i32) -> Complex64 {
        self.index(k1, k2)
            .map_or(Complex64::new(0.0, 0.0), |i| self.values[i])
    }

    pub fn set(&mut self, k1: i32, k2: i32, v: Complex64) {
        let i = self.index(k1, k2).expect("order within table bounds");
        self.values[i] = v;
    }

    pub fn orders(&self) -> Vec<(i32, i32)> {
        self.config.orders()
    }

    /// Largest `|h_{-k} - conj(h_k)|`; zero for tables of real functions.
    pub fn conjugate_asymmetry(&self) -> f64 {
        self.orders()
            .into_iter()
            .map(|(k1, k2)| (self.get(-k1, -k2) - self.get(k1, k2).conj()).norm())
            .fold(0.0, f64::max)
    }
}

/// Uniform `(θ, ρ)` quadrature resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quadrature {
    pub n_theta: usize,
    pub n_rho: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            n_theta: 512,
            n_rho: 256,
        }
    }
}

/// Samples of a function on the uniform log-polar grid
/// `θ_j = 2πj / n_θ`, `ρ_l = ln a + l · ln(b/a) / n_ρ`, stored `θ`-major.
#[derive(Debug, Clone)]
pub struct PolarSamples {
    pub quad: Quadrature,
    pub values: Vec<Complex64>,
}

impl PolarSamples {
    pub fn from_fn(
        config: &BasisConfig,
        quad: Quadrature,
        h: impl Fn(f64, f64) -> Complex64,
    ) -> Self {
        let mut values = Vec::with_capacity(quad.n_theta * quad.n_rho);
        for j in 0..quad.n_theta {
            let theta = TAU * j as f64 / quad.n_theta as f64;
            for l in 0..quad.n_rho {
                values.push(h(rho_node(config, quad, l).exp(), theta));
            }
        }
        Self { quad, values }
    }
}

fn rho_node(config: &BasisConfig, quad: Quadrature, l: usize) -> f64 {
    config.a.ln() + config.log_period() * l as f64 / quad.n_rho as f64
}

/// Coefficients of `h(r, θ)` by the trapezoid rule on the uniform
/// `(θ, ρ = ln r)` grid.
pub fn analyze_coefficients(
    h: impl Fn(f64, f64) -> Complex64,
    config: &BasisConfig,
    quad: Quadrature,
) -> Result<CoeffTable> {
    config.validate()?;
    if quad.n_theta == 0 || quad.n_rho == 0 {
        return Err(Error::InvalidParameter(
            "quadrature must be non-empty".into(),
        ));
    }
    analyze_samples(&PolarSamples::from_fn(config, quad, h), config)
}

pub fn analyze_samples(samples: &PolarSamples, config: &BasisConfig) -> Result<CoeffTable> {
    config.validate()?;
    let Quadrature { n_theta, n_rho } = samples.quad;
    if samples.values.len() != n_theta * n_rho {
        return Err(Error::shape(n_theta * n_rho, samples.values.len()));
    }
    let (k1_max, k2_max) = (config.k1_max as i32, config.k2_max as i32);
    let omega = config.radial_frequency();

    // Radial transform first: g[j][k2] = Σ_l h(θ_j, ρ_l) e^{-ρ_l m} e^{-i k2 ω ρ_l}.
    let radial: Vec<Vec<Complex64>> = (-k2_max..=k2_max)
        .map(|k2| {
            (0..n_rho)
                .map(|l| {
                    let rho = rho_node(config, samples.quad, l);
                    Complex64::from_polar((-rho * config.m).exp(), -(k2 as f64) * omega * rho)
                })
                .collect()
        })
        .collect();
    let n_k2 = radial.len();
    let mut g = vec![Complex64::new(0.0, 0.0); n_theta * n_k2];
    for j in 0..n_theta {
        let row = &samples.values[j * n_rho..(j + 1) * n_rho];
        for (q, kernel) in radial.iter().enumerate() {
            g[j * n_k2 + q] = row.iter().zip(kernel).map(|(a, b)| a * b).sum();
        }
    }

    let mut table = CoeffTable::zeros(config);
    let norm = (n_theta * n_rho) as f64;
    for (k1, k2) in config.orders() {
        let q = (k2 + k2_max) as usize;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n_theta {
            let theta = TAU * j as f64 / n_theta as f64;
            acc += g[j * n_k2 + q] * Complex64::from_polar(1.0, -(k1 as f64) * theta);
        }
        table.set(k1, k2, acc / norm);
    }
    table.coarse_quadrature =
        n_theta < 4 * (2 * k1_max as usize + 1) || n_rho < 4 * (2 * k2_max as usize + 1);
    if table.coarse_quadrature {
        log::warn!(
            "quadrature {n_theta}x{n_rho} is below 4x Nyquist for orders ({k1_max}, {k2_max})"
        );
    }
    Ok(table)
}

/// `Σ h_{k1,k2} H_{k1,k2}` sampled at pixel centers of a `patch × patch` grid.
pub fn synthesize(coeffs: &CoeffTable, config: &BasisConfig) -> Result<Vec<Complex64>> {
    config.validate()?;
    let p = config.patch;
    let half = (p as f64 - 1.0) / 2.0;
    let mut out = vec![Complex64::new(0.0, 0.0); p * p];
    for (idx, v) in out.iter_mut().enumerate() {
        let (r, theta) = polar((idx / p) as f64 - half, (idx % p) as f64 - half);
        if !config.in_annulus(r) {
            continue;
        }
        for (k1, k2) in coeffs.orders() {
            let h = coeffs.get(k1, k2);
            if h != Complex64::new(0.0, 0.0) {
                *v += h * config.atom_value(k1, k2, r, theta);
            }
        }
    }
    Ok(out)
}

/// Coefficients of the filter rotated by `alpha` and scaled by `s`.
pub fn steer_coefficients(coeffs: &CoeffTable, alpha: f64, s: f64) -> Result<CoeffTable> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {s}"
        )));
    }
    let mut out = coeffs.clone();
    for (k1, k2) in coeffs.orders() {
        let f = coeffs.config.steering_factor(k1, k2, alpha, s);
        out.set(k1, k2, coeffs.get(k1, k2) * f);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::FRAC_PI_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_order_atom_is_real_power() {
        let cfg = BasisConfig::default();
        let basis = build_basis(&cfg).unwrap();
        let atom = basis.atom(0, 0).unwrap();
        let p = cfg.patch;
        for (idx, v) in atom.values.iter().enumerate() {
            let (r, _) = polar((idx / p) as f64 - 7.0, (idx % p) as f64 - 7.0);
            if cfg.in_annulus(r) {
                assert!((v.re - r.powf(cfg.m)).abs() < 1e-15);
                assert_eq!(v.im, 0.0);
            } else {
                assert_eq!(*v, c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn first_angular_atom_at_quarter_turn_is_i() {
        let cfg = BasisConfig::default();
        let basis = build_basis(&cfg).unwrap();
        let atom = basis.atom(1, 0).unwrap();
        // Offset (+3, 0) rows below the center has θ = π/2.
        let v = atom.values[(7 + 3) * 15 + 7];
        let expected = c(0.0, 3f64.powf(cfg.m));
        assert!((v - expected).norm() < 1e-15);
        assert!((cfg.atom_value(1, 0, 2.5, FRAC_PI_2) - c(0.0, 0.4)).norm() < 1e-15);
    }

    #[test]
    fn window_exponent_halves_at_radius_two() {
        let cfg = BasisConfig::default();
        assert_eq!(cfg.m, -1.0);
        for (k1, k2) in cfg.orders() {
            assert!((cfg.atom_value(k1, k2, 2.0, 0.3).norm() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn atoms_vanish_off_annulus_and_have_unit_phase_inside() {
        let cfg = BasisConfig::default();
        let basis = build_basis(&cfg).unwrap();
        assert_eq!(basis.atoms().len(), 45);
        let center = basis.atom(2, -1).unwrap().values[7 * 15 + 7];
        assert_eq!(center, c(0.0, 0.0));
        let corner = basis.atom(2, -1).unwrap().values[0];
        assert_eq!(corner, c(0.0, 0.0));
        for atom in basis.atoms() {
            for (&[dr, dc], v) in basis.footprint().iter().zip(&atom.support) {
                let r = (dr as f64).hypot(dc as f64);
                assert!((v.norm() - r.powf(cfg.m)).abs() < 1e-14);
            }
            assert!(atom.norm > 0.0);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = BasisConfig::default();
        for cfg in [
            BasisConfig { a: 0.0, ..base },
            BasisConfig { a: 8.0, ..base },
            BasisConfig { b: 9.0, ..base },
            BasisConfig {
                m: f64::NAN,
                ..base
            },
        ] {
            assert!(matches!(build_basis(&cfg), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn zero_function_has_zero_coefficients() {
        let cfg = BasisConfig::default();
        let t = analyze_coefficients(|_, _| c(0.0, 0.0), &cfg, Quadrature::default()).unwrap();
        assert!(t.values.iter().all(|v| *v == c(0.0, 0.0)));
        assert!(!t.coarse_quadrature);
    }

    #[test]
    fn coarse_quadrature_is_flagged() {
        let cfg = BasisConfig::default();
        let quad = Quadrature {
            n_theta: 16,
            n_rho: 8,
        };
        let t = analyze_coefficients(|r, th| cfg.atom_value(1, 1, r, th), &cfg, quad).unwrap();
        assert!(t.coarse_quadrature);
    }

    #[test]
    fn atom_analysis_is_a_kronecker_delta() {
        let cfg = BasisConfig::default();
        let t = analyze_coefficients(
            |r, th| cfg.atom_value(1, 1, r, th),
            &cfg,
            Quadrature::default(),
        )
        .unwrap();
        for (k1, k2) in cfg.orders() {
            let expected = if (k1, k2) == (1, 1) { 1.0 } else { 0.0 };
            assert!(
                (t.get(k1, k2) - expected).norm() <= 1e-8,
                "order ({k1},{k2})"
            );
        }
    }

    #[test]
    fn linear_combination_is_recovered() {
        let cfg = BasisConfig::default();
        let h = |r: f64, th: f64| {
            cfg.atom_value(0, 1, r, th) * 2.0 + cfg.atom_value(2, 0, r, th) * c(0.0, 3.0)
        };
        let t = analyze_coefficients(h, &cfg, Quadrature::default()).unwrap();
        assert!((t.get(0, 1) - c(2.0, 0.0)).norm() <= 1e-8);
        assert!((t.get(2, 0) - c(0.0, 3.0)).norm() <= 1e-8);
        let rest = cfg
            .orders()
            .into_iter()
            .filter(|&k| k != (0, 1) && k != (2, 0))
            .map(|(k1, k2)| t.get(k1, k2).norm())
            .fold(0.0, f64::max);
        assert!(rest <= 1e-8);
    }

    #[test]
    fn real_function_gives_conjugate_symmetric_table() {
        let cfg = BasisConfig::default();
        let h = |r: f64, th: f64| {
            let v = cfg.atom_value(1, 2, r, th) * c(0.3, -1.2) + cfg.atom_value(3, -1, r, th);
            c(2.0 * v.re, 0.0)
        };
        let t = analyze_coefficients(h, &cfg, Quadrature::default()).unwrap();
        assert!(t.conjugate_asymmetry() <= 1e-10);
        assert!((t.get(1, 2) - c(0.3, -1.2)).norm() <= 1e-8);
        assert!((t.get(-1, -2) - c(0.3, 1.2)).norm() <= 1e-8);
    }

    #[test]
    fn synthesis_of_single_and_zero_tables() {
        let cfg = BasisConfig::default();
        let basis = build_basis(&cfg).unwrap();
        let zero = synthesize(&CoeffTable::zeros(&cfg), &cfg).unwrap();
        assert!(zero.iter().all(|v| *v == c(0.0, 0.0)));
        let mut t = CoeffTable::zeros(&cfg);
        t.set(0, 0, c(1.0, 0.0));
        let patch = synthesize(&t, &cfg).unwrap();
        for (a, b) in patch.iter().zip(&basis.atom(0, 0).unwrap().values) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn analysis_synthesis_round_trip() {
        let cfg = BasisConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut truth = CoeffTable::zeros(&cfg);
        for (k1, k2) in cfg.orders() {
            truth.set(
                k1,
                k2,
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            );
        }
        let h = |r: f64, th: f64| {
            cfg.orders()
                .into_iter()
                .map(|(k1, k2)| truth.get(k1, k2) * cfg.atom_value(k1, k2, r, th))
                .sum::<Complex64>()
        };
        let recovered = analyze_coefficients(h, &cfg, Quadrature::default()).unwrap();
        let a = synthesize(&truth, &cfg).unwrap();
        let b = synthesize(&recovered, &cfg).unwrap();
        let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = a.iter().map(|x| x.norm_sqr()).sum();
        assert!((num / den).sqrt() <= 1e-6);
    }

    #[test]
    fn steering_identity_and_inverse() {
        let cfg = BasisConfig::default();
        let mut t = CoeffTable::zeros(&cfg);
        t.set(1, 0, c(1.0, 0.0));
        assert_eq!(steer_coefficients(&t, 0.0, 1.0).unwrap(), t);
        let rotated = steer_coefficients(&t, FRAC_PI_2, 1.0).unwrap();
        assert!((rotated.get(1, 0) - c(0.0, -1.0)).norm() < 1e-15);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for (k1, k2) in cfg.orders() {
            t.set(
                k1,
                k2,
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            );
        }
        let there = steer_coefficients(&t, 1.1, 1.6).unwrap();
        let back = steer_coefficients(&there, -1.1, 1.0 / 1.6).unwrap();
        for (x, y) in back.values.iter().zip(&t.values) {
            assert!((x - y).norm() <= 1e-12);
        }
        assert!(steer_coefficients(&t, 0.0, 0.0).is_err());
    }

    #[test]
    fn steering_matches_transformed_atom() {
        let cfg = BasisConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for (k1, k2) in cfg.orders() {
            let mut checked = 0;
            while checked < 100 {
                let r = rng.gen_range(cfg.a..cfg.b);
                let s = rng.gen_range(0.6..1.8);
                if !cfg.in_annulus(r / s) {
                    continue;
                }
                let theta = rng.gen_range(0.0..TAU);
                let alpha = rng.gen_range(0.0..TAU);
                let lhs = cfg.atom_value(k1, k2, r / s, theta - alpha);
                let rhs = cfg.atom_value(k1, k2, r, theta) * cfg.steering_factor(k1, k2, alpha, s);
                assert!((lhs - rhs).norm() <= 1e-12, "({k1},{k2}) r={r} s={s}");
                checked += 1;
            }
        }
    }
}
