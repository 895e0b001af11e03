//! Equivariance error, logit invariance and deformation-stability sweeps.
//!
//! The error between transform-then-operate and operate-then-transform is
//! `‖L_T Φf − Φ L_T f‖² / ‖L_T Φf‖²` over an interior crop. Both paths
//! recompute geometry on their own inputs.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::data::{synth_texture, LabeledDataset};
use crate::fourier_argand::BasisConfig;
use crate::geometry::{GeometryEstimator, GridConfig};
use crate::network::{evaluate, simblock_forward, SimBlock, SrenModel};
use crate::rng::{stream, Domain};
use crate::simconv::SimConvLayer;
use crate::tensorcore::{make_sim2, transform, FeatureMap, Sim2Transform};
use crate::{Error, Result};

/// `⌈b · λ_max⌉ + patch / 2`.
pub fn default_crop_margin(basis: &BasisConfig, grid: &GridConfig) -> usize {
    (basis.b * grid.lambda_range[1]).ceil() as usize + basis.patch / 2
}

/// Relative squared discrepancy of `reference` and `candidate` on the crop.
pub fn relative_error(reference: &FeatureMap, candidate: &FeatureMap, crop: usize) -> Result<f64> {
    if !reference.same_shape(candidate) {
        return Err(Error::shape(
            reference.shape_string(),
            candidate.shape_string(),
        ));
    }
    let a = reference.crop(crop)?;
    let b = candidate.crop(crop)?;
    let den = a.norm_sq();
    if den == 0.0 || !den.is_finite() {
        return Err(Error::UndefinedMetric);
    }
    Ok(a.axpby(1.0, &b, -1.0)?.norm_sq() / den)
}

/// Equivariance error of `op` at `f` under `t`.
pub fn equivariance_error<F>(op: F, f: &FeatureMap, t: &Sim2Transform, crop: usize) -> Result<f64>
where
    F: Fn(&FeatureMap) -> Result<FeatureMap>,
{
    let reference = transform(&op(f)?, t);
    let candidate = op(&transform(f, t))?;
    relative_error(&reference, &candidate, crop)
}

/// Errors after each block of a stack (no pooling between blocks). With
/// `estimator = None` every block uses identity geometry.
pub fn stack_equivariance_errors(
    blocks: &[SimBlock],
    estimator: Option<&GeometryEstimator>,
    f: &FeatureMap,
    t: &Sim2Transform,
    crop: usize,
) -> Result<Vec<f64>> {
    let mut direct = f.clone();
    let mut warped = transform(f, t);
    let mut errors = Vec::with_capacity(blocks.len());
    for block in blocks {
        direct = simblock_forward(&direct, block, estimator)?;
        warped = simblock_forward(&warped, block, estimator)?;
        errors.push(relative_error(&transform(&direct, t), &warped, crop)?);
    }
    Ok(errors)
}

/// Which operator a report measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    /// Estimated geometry.
    SimConv,
    /// Identity geometry, i.e. plain convolution.
    Plain,
}

impl OperatorKind {
    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::SimConv => "simconv",
            OperatorKind::Plain => "plain",
        }
    }
}

/// One measured error.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivReport {
    pub run_id: String,
    pub operator: OperatorKind,
    /// Transform family, e.g. `rot90`.
    pub case: String,
    pub input: usize,
    pub transform: Sim2Transform,
    /// 1-based depth of the measured output.
    pub layer_index: usize,
    pub error: f64,
    pub crop_margin: usize,
}

pub const REPORT_HEADER: &str = "run_id,layer,s,theta,tx,ty,crop,error";

pub fn reports_to_csv(reports: &[EquivReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        let [ty, tx] = r.transform.pixel_shift();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:e}",
            r.run_id,
            r.layer_index,
            r.transform.scale(),
            r.transform.theta(),
            tx,
            ty,
            r.crop_margin,
            r.error
        );
    }
    out
}

pub fn write_reports(path: impl AsRef<Path>, reports: &[EquivReport]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, reports_to_csv(reports)).map_err(|e| Error::io(path, e))
}

pub fn mean_error(reports: &[EquivReport]) -> f64 {
    reports.iter().map(|r| r.error).sum::<f64>() / reports.len().max(1) as f64
}

/// Mean error of the reports matching `operator`, `case` and (if given)
/// `layer`; `None` when nothing matches.
pub fn mean_where(
    reports: &[EquivReport],
    operator: OperatorKind,
    case: &str,
    layer: Option<usize>,
) -> Option<f64> {
    let picked: Vec<EquivReport> = reports
        .iter()
        .filter(|r| {
            r.operator == operator && r.case == case && layer.is_none_or(|l| r.layer_index == l)
        })
        .cloned()
        .collect();
    (!picked.is_empty()).then(|| mean_error(&picked))
}

/// Inputs, stack and transforms for the equivariance protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub inputs: usize,
    /// Side of the square texture inputs.
    pub size: usize,
    /// Texture wavenumber band in radians per pixel.
    pub band: [f64; 2],
    pub channels: usize,
    pub layers: usize,
    /// Crop margin; `None` uses [`default_crop_margin`].
    pub crop: Option<usize>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            inputs: 20,
            size: 96,
            band: [0.1, 0.35],
            channels: 8,
            layers: 4,
            crop: None,
        }
    }
}

/// Transform families measured for every input.
pub const HARNESS_CASES: [&str; 4] = ["identity", "rot90", "rot45-s1.3", "random"];

/// Single-layer blocks `1 → c → … → c` with Xavier-uniform weights.
pub fn harness_stack(cfg: &HarnessConfig, seed: u64) -> Result<Vec<SimBlock>> {
    let mut cin = 1;
    (0..cfg.layers)
        .map(|k| {
            let mut layer = SimConvLayer::zeros(cin, cfg.channels, 3)?;
            let n = layer.taps();
            let limit = (6.0 / ((cin + cfg.channels) * n) as f64).sqrt();
            let mut rng = stream(seed, Domain::Init, 1000 + k as u64);
            layer
                .weights
                .iter_mut()
                .for_each(|w| *w = rng.gen_range(-limit..limit));
            cin = cfg.channels;
            Ok(SimBlock {
                layers: vec![layer],
            })
        })
        .collect()
}

fn case_transform(case: &str, seed: u64, input: usize) -> Result<Sim2Transform> {
    match case {
        "identity" => Ok(Sim2Transform::identity()),
        "rot90" => make_sim2(1.0, std::f64::consts::FRAC_PI_2, [0.0, 0.0]),
        "rot45-s1.3" => make_sim2(1.3, std::f64::consts::FRAC_PI_4, [0.0, 0.0]),
        "random" => {
            let mut rng = stream(seed, Domain::Harness, 10_000 + input as u64);
            make_sim2(
                rng.gen_range(1.0..2.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
                [0.0, 0.0],
            )
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown harness case {other:?}"
        ))),
    }
}

/// Errors of the random stack after every layer, for each texture input,
/// each case in [`HARNESS_CASES`] and both operators.
pub fn run_protocol(
    cfg: &HarnessConfig,
    basis: &BasisConfig,
    grid: &GridConfig,
    seed: u64,
) -> Result<Vec<EquivReport>> {
    if cfg.inputs == 0 || cfg.layers == 0 || cfg.channels == 0 {
        return Err(Error::InvalidParameter(
            "harness needs inputs, layers and channels".into(),
        ));
    }
    let estimator = GeometryEstimator::new(basis, grid)?;
    let blocks = harness_stack(cfg, seed)?;
    let crop = cfg.crop.unwrap_or_else(|| default_crop_margin(basis, grid));
    let mut reports = Vec::new();
    for input in 0..cfg.inputs {
        let f = synth_texture(cfg.size, cfg.band, seed, input as u64);
        for case in HARNESS_CASES {
            let t = case_transform(case, seed, input)?;
            for operator in [OperatorKind::SimConv, OperatorKind::Plain] {
                let est = (operator == OperatorKind::SimConv).then_some(&estimator);
                let errors = stack_equivariance_errors(&blocks, est, &f, &t, crop)?;
                for (k, error) in errors.into_iter().enumerate() {
                    reports.push(EquivReport {
                        run_id: format!("{}-{case}-{input:02}", operator.name()),
                        operator,
                        case: case.to_string(),
                        input,
                        transform: t,
                        layer_index: k + 1,
                        error,
                        crop_margin: crop,
                    });
                }
            }
        }
        log::info!("harness input {input} done");
    }
    Ok(reports)
}

/// `‖logits(f) − logits(L_T f)‖∞ / (‖logits(f)‖∞ + 1e-9)`.
pub fn invariance_check(model: &SrenModel, f: &FeatureMap, t: &Sim2Transform) -> Result<f64> {
    let a = model.forward(f)?;
    let b = model.forward(&transform(f, t))?;
    let dev = a
        .iter()
        .zip(&b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let norm = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(dev / (norm + 1e-9))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Angle,
    Scale,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Angle => "angle",
            SweepAxis::Scale => "scale",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    /// Radians for angles.
    pub value: f64,
    pub accuracy: f64,
}

/// Accuracy on the whole dataset warped by each angle (at scale 1) and
/// each scale (at angle 0), about the image center.
pub fn stability_sweep(
    model: &SrenModel,
    data: &LabeledDataset,
    angles: &[f64],
    scales: &[f64],
) -> Result<Vec<SweepRow>> {
    let settings = angles
        .iter()
        .map(|&a| (SweepAxis::Angle, a, make_sim2(1.0, a, [0.0, 0.0])))
        .chain(
            scales
                .iter()
                .map(|&s| (SweepAxis::Scale, s, make_sim2(s, 0.0, [0.0, 0.0]))),
        );
    let mut rows = Vec::new();
    for (axis, value, t) in settings {
        let t = t?;
        let warped = LabeledDataset {
            images: data.images.iter().map(|f| transform(f, &t)).collect(),
            labels: data.labels.clone(),
            meta: data.meta.clone(),
        };
        let accuracy = evaluate(model, &warped)?.accuracy;
        log::info!("sweep {} {value:.4}: accuracy {accuracy:.4}", axis.name());
        rows.push(SweepRow {
            axis,
            value,
            accuracy,
        });
    }
    Ok(rows)
}

/// Largest minus smallest accuracy over rows on `axis`, in points.
pub fn sweep_spread(rows: &[SweepRow], axis: SweepAxis) -> f64 {
    let acc = rows
        .iter()
        .filter(|r| r.axis == axis)
        .map(|r| 100.0 * r.accuracy);
    let (lo, hi) = acc.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), a| {
        (l.min(a), h.max(a))
    });
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("axis,value,accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6}", r.axis.name(), r.value, r.accuracy);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_texture;
    use crate::geometry::GeometryField;
    use crate::simconv::{simconv_forward, SimConvLayer};
    use crate::tensorcore::rotate_quarter_turns;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    const BAND: [f64; 2] = [0.1, 0.35];

    fn random_layer(cin: usize, cout: usize, seed: u64) -> SimConvLayer {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut layer = SimConvLayer::zeros(cin, cout, 3).unwrap();
        layer
            .weights
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-1.0..1.0));
        layer
    }

    fn estimator() -> GeometryEstimator {
        GeometryEstimator::new(&BasisConfig::default(), &GridConfig::default()).unwrap()
    }

    #[test]
    fn identity_transform_gives_zero() {
        let est = estimator();
        let layer = random_layer(1, 2, 1);
        let f = synth_texture(64, BAND, 1, 0);
        let op = |x: &FeatureMap| simconv_forward(x, &layer, &est.estimate(x)?);
        let e = equivariance_error(op, &f, &Sim2Transform::identity(), 22).unwrap();
        assert_eq!(e, 0.0);
        let t = make_sim2(1.3, 0.4, [0.0, 0.0]).unwrap();
        assert_eq!(
            equivariance_error(op, &f, &t, 22).unwrap(),
            equivariance_error(op, &f, &t, 22).unwrap()
        );
    }

    #[test]
    fn flat_features_are_undefined() {
        let op = |x: &FeatureMap| x.map(|_| 0.0);
        let f = synth_texture(40, BAND, 2, 0);
        assert!(matches!(
            equivariance_error(op, &f, &Sim2Transform::identity(), 5),
            Err(Error::UndefinedMetric)
        ));
    }

    #[test]
    fn quarter_turn_error_is_tiny_and_crop_monotone() {
        let est = estimator();
        let layer = random_layer(1, 3, 2);
        let op = |x: &FeatureMap| simconv_forward(x, &layer, &est.estimate(x)?);
        let t = make_sim2(1.0, FRAC_PI_2, [0.0, 0.0]).unwrap();
        let f = synth_texture(72, BAND, 3, 0);
        let base = equivariance_error(op, &f, &t, 22).unwrap();
        assert!(base <= 1e-4, "{base}");
        for crop in [24, 28] {
            assert!(equivariance_error(op, &f, &t, crop).unwrap() <= base + 1e-6);
        }
        let direct = rotate_quarter_turns(&op(&f).unwrap(), 1);
        assert_eq!(transform(&op(&f).unwrap(), &t), direct);
    }

    #[test]
    fn plain_convolution_breaks_rotation_equivariance() {
        let est = estimator();
        let layer = random_layer(1, 3, 3);
        let sim = |x: &FeatureMap| simconv_forward(x, &layer, &est.estimate(x)?);
        let plain = |x: &FeatureMap| {
            simconv_forward(x, &layer, &GeometryField::identity(x.height(), x.width()))
        };
        let t = make_sim2(1.3, FRAC_PI_4, [0.0, 0.0]).unwrap();
        let f = synth_texture(80, BAND, 4, 0);
        let es = equivariance_error(sim, &f, &t, 22).unwrap();
        let ep = equivariance_error(plain, &f, &t, 22).unwrap();
        assert!(ep >= 5.0 * es, "plain {ep} vs simconv {es}");
    }

    #[test]
    fn integer_shift_is_exact_for_plain_layers() {
        let layer = random_layer(1, 2, 5);
        let plain = |x: &FeatureMap| {
            simconv_forward(x, &layer, &GeometryField::identity(x.height(), x.width()))
        };
        let f = synth_texture(48, BAND, 5, 0);
        let t = Sim2Transform::with_pixel_shift(1.0, 0.0, [3.0, -4.0]).unwrap();
        assert!(equivariance_error(plain, &f, &t, 8).unwrap() < 1e-24);
    }

    #[test]
    fn report_csv_columns() {
        let r = EquivReport {
            run_id: "r0".into(),
            operator: OperatorKind::SimConv,
            case: "random".into(),
            input: 0,
            transform: Sim2Transform::with_pixel_shift(1.5, 0.25, [2.0, -1.0]).unwrap(),
            layer_index: 2,
            error: 0.125,
            crop_margin: 22,
        };
        let csv = reports_to_csv(std::slice::from_ref(&r));
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(REPORT_HEADER));
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), 8);
        assert_eq!(fields[0], "r0");
        assert_eq!(fields[1], "2");
        assert!((fields[4].parse::<f64>().unwrap() + 1.0).abs() < 1e-12);
        assert!((fields[5].parse::<f64>().unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fields[7].parse::<f64>().unwrap(), 0.125);
        let both = [r.clone(), EquivReport { error: 0.375, ..r }];
        assert_eq!(mean_error(&both), 0.25);
        assert_eq!(
            mean_where(&both, OperatorKind::SimConv, "random", Some(2)),
            Some(0.25)
        );
        assert_eq!(mean_where(&both, OperatorKind::Plain, "random", None), None);
    }

    #[test]
    fn sweep_spread_in_points() {
        let rows = [
            SweepRow {
                axis: SweepAxis::Angle,
                value: 0.0,
                accuracy: 0.9,
            },
            SweepRow {
                axis: SweepAxis::Angle,
                value: 1.0,
                accuracy: 0.6,
            },
            SweepRow {
                axis: SweepAxis::Scale,
                value: 2.0,
                accuracy: 0.1,
            },
        ];
        assert!((sweep_spread(&rows, SweepAxis::Angle) - 30.0).abs() < 1e-9);
        assert_eq!(sweep_spread(&rows, SweepAxis::Scale), 0.0);
        assert!(sweep_to_csv(&rows).starts_with("axis,value,accuracy\nangle,0,0.900000\n"));
    }

    #[test]
    fn small_protocol_layout() {
        let cfg = HarnessConfig {
            inputs: 1,
            size: 64,
            channels: 2,
            layers: 2,
            ..Default::default()
        };
        let reports =
            run_protocol(&cfg, &BasisConfig::default(), &GridConfig::default(), 3).unwrap();
        assert_eq!(reports.len(), HARNESS_CASES.len() * 2 * 2);
        for r in reports.iter().filter(|r| r.case == "identity") {
            assert_eq!(r.error, 0.0);
        }
        let rot = mean_where(&reports, OperatorKind::SimConv, "rot90", Some(1)).unwrap();
        assert!(rot <= 1e-4, "{rot}");
        assert_eq!(
            run_protocol(&cfg, &BasisConfig::default(), &GridConfig::default(), 3).unwrap(),
            reports
        );
    }
}
