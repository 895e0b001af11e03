use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde_json::json;
use sren::data::{load_idx, make_srt_variant, pgm, LabeledDataset, SrtMode};
use sren::equivariance::{
    mean_where, run_protocol, stability_sweep, sweep_to_csv, write_reports, OperatorKind,
    HARNESS_CASES,
};
use sren::fourier_argand::{analyze_coefficients, build_basis, synthesize, CoeffTable, Quadrature};
use sren::geometry::GeometryEstimator;
use sren::network::{evaluate, load_model, save_model, train as train_model, SrenModel};
use sren::rng::{stream, Domain};
use sren::tensorcore::srtn::Tensor;
use sren::tensorcore::FeatureMap;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| sren::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| {
        CliError::from(sren::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    write_text(
        path,
        &serde_json::to_string_pretty(value).map_err(sren::Error::from)?,
    )
}

pub fn basis(cfg: &RunConfig) -> CliResult<()> {
    let dir = out_dir(cfg)?;
    let b = &cfg.basis;
    let set = build_basis(b)?;
    set.to_tensor().write(dir.join("atoms.srtn"))?;
    let quad = Quadrature::default();

    let mut ortho = 0.0f64;
    for (k1, k2) in b.orders() {
        let table = analyze_coefficients(|r, t| b.atom_value(k1, k2, r, t), b, quad)?;
        for (j1, j2) in b.orders() {
            let expected = if (j1, j2) == (k1, k2) { 1.0 } else { 0.0 };
            ortho = ortho.max((table.get(j1, j2) - expected).norm());
        }
    }

    let mut rng = stream(cfg.seed, Domain::Harness, 0);
    let mut truth = CoeffTable::zeros(b);
    for (k1, k2) in b.orders() {
        truth.set(
            k1,
            k2,
            sren::fourier_argand::Complex64::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ),
        );
    }
    let h = |r: f64, t: f64| {
        b.orders()
            .into_iter()
            .map(|(k1, k2)| truth.get(k1, k2) * b.atom_value(k1, k2, r, t))
            .sum()
    };
    let recovered = analyze_coefficients(h, b, quad)?;
    let x = synthesize(&truth, b)?;
    let y = synthesize(&recovered, b)?;
    let num: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).norm_sqr()).sum();
    let den: f64 = x.iter().map(|p| p.norm_sqr()).sum();
    let round_trip = if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    };

    let report = json!({
        "atoms": set.atoms().len(),
        "footprint": set.footprint().len(),
        "patch": b.patch,
        "quadrature": [quad.n_theta, quad.n_rho],
        "orthogonality_max_dev": ortho,
        "round_trip_l2": round_trip,
    });
    write_json(&dir.join("report.json"), &report)?;
    println!(
        "atoms {} orthogonality {ortho:.3e} round_trip_l2 {round_trip:.3e}",
        set.atoms().len()
    );
    Ok(())
}

fn read_image(path: &Path) -> CliResult<FeatureMap> {
    let is_srtn = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("srtn"));
    let f = if is_srtn {
        Tensor::read(path)?.to_feature_map()?
    } else {
        pgm::read_pgm(path)?
    };
    Ok(f)
}

pub fn geometry(cfg: &RunConfig, image: &Path) -> CliResult<()> {
    let f = read_image(image)?;
    let dir = out_dir(cfg)?;
    let est = GeometryEstimator::new(&cfg.basis, &cfg.grid)?;
    let field = est.estimate(&f)?;
    let (h, w) = (field.height, field.width);
    let conf: Vec<f64> = field
        .confidence
        .iter()
        .map(|&c| f64::from(u8::from(c)))
        .collect();
    Tensor::new(vec![h, w], field.scale.clone())?.write(dir.join("scale.srtn"))?;
    Tensor::new(vec![h, w], field.orientation.clone())?.write(dir.join("orientation.srtn"))?;
    Tensor::new(vec![h, w], conf.clone())?.write(dir.join("confidence.srtn"))?;

    let [lo, hi] = cfg.grid.lambda_range;
    let scale_px: Vec<f64> = field
        .scale
        .iter()
        .map(|s| (s / lo).ln() / (hi / lo).ln())
        .collect();
    let orient_px: Vec<f64> = field
        .orientation
        .iter()
        .map(|t| t / std::f64::consts::TAU)
        .collect();
    pgm::write_pgm(dir.join("scale.pgm"), h, w, &scale_px)?;
    pgm::write_pgm(dir.join("orientation.pgm"), h, w, &orient_px)?;
    pgm::write_pgm(dir.join("confidence.pgm"), h, w, &conf)?;

    let gammas = &est.grid.gammas;
    let mut hist = vec![0usize; gammas.len()];
    for (o, &c) in field.orientation.iter().zip(&field.confidence) {
        if c {
            if let Some(i) = gammas.iter().position(|g| (g - o).abs() < 1e-9) {
                hist[i] += 1;
            }
        }
    }
    let modal = hist
        .iter()
        .enumerate()
        .max_by_key(|&(i, &n)| (n, std::cmp::Reverse(i)))
        .filter(|&(_, &n)| n > 0)
        .map(|(i, _)| gammas[i]);
    let summary = json!({
        "height": h,
        "width": w,
        "confident_fraction": field.confident_fraction(),
        "modal_orientation": modal,
        "orientation_histogram": hist,
    });
    write_json(&dir.join("geometry.json"), &summary)?;
    println!(
        "{h}x{w} confident {:.3} modal orientation {}",
        field.confident_fraction(),
        modal.map_or("none".into(), |m| format!("{m:.4}"))
    );
    Ok(())
}

pub fn equivcheck(cfg: &RunConfig) -> CliResult<()> {
    let dir = out_dir(cfg)?;
    let reports = run_protocol(&cfg.harness, &cfg.basis, &cfg.grid, cfg.seed)?;
    write_reports(dir.join("equivariance.csv"), &reports)?;
    let mut rows = Vec::new();
    for case in HARNESS_CASES {
        for layer in 1..=cfg.harness.layers {
            let sim = mean_where(&reports, OperatorKind::SimConv, case, Some(layer));
            let plain = mean_where(&reports, OperatorKind::Plain, case, Some(layer));
            println!(
                "{case:>11} layer {layer}: simconv {:.3e} plain {:.3e}",
                sim.unwrap_or(f64::NAN),
                plain.unwrap_or(f64::NAN)
            );
            rows.push(json!({ "case": case, "layer": layer, "simconv": sim, "plain": plain }));
        }
    }
    write_json(
        &dir.join("equivariance_summary.json"),
        &json!({ "means": rows }),
    )
}

fn idx_path(dir: &Path, stem: &str) -> PathBuf {
    let plain = dir.join(stem);
    let gz = dir.join(format!("{stem}.gz"));
    if !plain.exists() && gz.exists() {
        gz
    } else {
        plain
    }
}

fn load_split(cfg: &RunConfig, train: bool) -> CliResult<LabeledDataset> {
    let dir = &cfg.data.mnist_dir;
    let prefix = if train { "train" } else { "t10k" };
    let ds = load_idx(
        idx_path(dir, &format!("{prefix}-images-idx3-ubyte")),
        idx_path(dir, &format!("{prefix}-labels-idx1-ubyte")),
    )?;
    let (size, seed) = if train {
        (cfg.data.train_size, cfg.seed)
    } else {
        (cfg.data.test_size, cfg.seed.wrapping_add(1))
    };
    Ok(match size {
        Some(n) if n < ds.len() => ds.seeded_subset(n, seed),
        _ => ds,
    })
}

fn test_variant(cfg: &RunConfig, mode: SrtMode) -> CliResult<LabeledDataset> {
    Ok(make_srt_variant(
        &load_split(cfg, false)?,
        cfg.seed,
        mode,
        &cfg.data.ranges,
    )?)
}

pub fn train(cfg: &RunConfig) -> CliResult<()> {
    let dir = out_dir(cfg)?;
    let data = load_split(cfg, true)?.padded(cfg.data.ranges.canvas)?;
    let mut model = SrenModel::new(
        cfg.model.architecture.clone(),
        cfg.model.geometry,
        cfg.basis,
        cfg.grid,
        cfg.seed,
    )?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    let report = train_model(&mut model, &data, &train_cfg)?;
    save_model(&model, dir.join("model"))?;
    report.write_csv(&dir.join("metrics.csv"))?;
    write_json(
        &dir.join("train_report.json"),
        &json!({
            "samples": data.len(),
            "params": model.param_count(),
            "final_accuracy": report.final_accuracy,
            "epochs": report.epochs,
        }),
    )?;
    println!(
        "trained on {} images: final accuracy {:.4}",
        data.len(),
        report.final_accuracy
    );
    Ok(())
}

fn open_model(dir: &Path) -> CliResult<SrenModel> {
    if !dir.join("manifest.json").is_file() {
        return Err(CliError::Missing(dir.join("manifest.json")));
    }
    Ok(load_model(dir)?)
}

pub fn eval(cfg: &RunConfig, model_dir: &Path) -> CliResult<()> {
    let model = open_model(model_dir)?;
    let data = test_variant(cfg, cfg.data.mode)?;
    let result = evaluate(&model, &data)?;
    let dir = out_dir(cfg)?;
    let csv = dir.join("eval.csv");
    let fresh = !csv.exists();
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&csv)
        .map_err(|e| sren::Error::Io {
            path: csv.clone(),
            source: e,
        })?;
    let line = format!(
        "{}{},{:.6},{},{}\n",
        if fresh {
            "mode,accuracy,correct,total\n"
        } else {
            ""
        },
        cfg.data.mode.name(),
        result.accuracy,
        result.correct,
        result.total
    );
    file.write_all(line.as_bytes())
        .map_err(|e| sren::Error::Io {
            path: csv.clone(),
            source: e,
        })?;
    write_json(
        &dir.join(format!("eval_{}.json", cfg.data.mode.name())),
        &json!({
            "mode": cfg.data.mode.name(),
            "accuracy": result.accuracy,
            "per_class": result.per_class,
        }),
    )?;
    println!(
        "{} accuracy {:.4} ({}/{})",
        cfg.data.mode.name(),
        result.accuracy,
        result.correct,
        result.total
    );
    Ok(())
}

pub fn sweep(cfg: &RunConfig, model_dir: &Path) -> CliResult<()> {
    let model = open_model(model_dir)?;
    let data = test_variant(cfg, SrtMode::Plain)?;
    let angles: Vec<f64> = cfg.sweep.angles.iter().map(|d| d.to_radians()).collect();
    let rows = stability_sweep(&model, &data, &angles, &cfg.sweep.scales)?;
    let dir = out_dir(cfg)?;
    write_text(&dir.join("sweep.csv"), &sweep_to_csv(&rows))?;
    for r in &rows {
        println!("{} {:.4}: {:.4}", r.axis.name(), r.value, r.accuracy);
    }
    Ok(())
}

pub fn gendata(cfg: &RunConfig) -> CliResult<()> {
    let data = test_variant(cfg, cfg.data.mode)?;
    let dir = out_dir(cfg)?.join(format!("data-{}", cfg.data.mode.name()));
    data.save(&dir)?;
    let previews = dir.join("previews");
    fs::create_dir_all(&previews).map_err(|e| sren::Error::Io {
        path: previews.clone(),
        source: e,
    })?;
    for (i, f) in data.images.iter().take(8).enumerate() {
        pgm::write_pgm(
            previews.join(format!("{i:02}.pgm")),
            f.height(),
            f.width(),
            f.channel(0),
        )?;
    }
    println!("wrote {} images to {}", data.len(), dir.display());
    Ok(())
}
