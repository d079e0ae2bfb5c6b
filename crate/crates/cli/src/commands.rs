use std::path::{Path, PathBuf};

use alens_core::eval::{
    randomization_experiment, run_curves, run_localization, CurveMode, LocalizationReport,
    LocalizationRow,
};
use alens_core::io::{
    load_model, read_image, read_map, read_stack, write_bytes, write_json, write_map, write_pgm,
    write_stack,
};
use alens_core::report::{
    curve_csv, fmt_sig9, improvement, localization_csv, sanity_csv, sanity_summary_csv,
};
use alens_core::toymodel::{forward_logits, QuadrantSample};
use alens_core::{attribute_stack, refine_detailed, select_classes, Error, Result, ToyModel64};
use anyhow::Context;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::data::{read_dataset, write_dataset};
use crate::{Cli, Command, GlobalArgs, ModeArg};

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("cannot parse {what} entry '{}'", p.trim())))
        })
        .collect()
}

/// Config file plus command-line overrides, validated.
fn effective_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.out = out.clone();
    }
    if global.no_mask {
        cfg.lens.mask_enabled = false;
    }
    if let Some(scales) = &global.scales {
        cfg.lens.inverse_temperatures = parse_list(scales, "scale")?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

/// Samples and model from a gen-data directory, or freshly generated.
fn inputs(cfg: &RunConfig, data: Option<&Path>) -> Result<(ToyModel64, Vec<QuadrantSample<f64>>)> {
    match data {
        Some(dir) => {
            let (_, model, samples) = read_dataset(dir)?;
            Ok((model, samples))
        }
        None => {
            let dataset = cfg.generate_dataset()?;
            let model = cfg.build_model(&dataset)?;
            Ok((model, dataset.samples))
        }
    }
}

#[derive(Serialize)]
struct Summary<'a, P: Serialize> {
    command: &'a str,
    data: Option<&'a Path>,
    config: &'a RunConfig,
    results: P,
}

fn write_summary<P: Serialize>(
    cfg: &RunConfig,
    command: &str,
    data: Option<&Path>,
    results: P,
) -> Result<PathBuf> {
    let path = cfg.out.join(format!("{}.json", command.replace('-', "_")));
    write_json(
        &path,
        &Summary {
            command,
            data,
            config: cfg,
            results,
        },
    )?;
    Ok(path)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = effective_config(&cli.global)?;
    match cli.command {
        Command::GenData => gen_data(&cfg),
        Command::Attribute {
            model,
            image,
            classes,
            output,
        } => attribute(&cfg, &model, &image, classes.as_deref(), output),
        Command::Refine {
            stack,
            target,
            output,
        } => refine(&cfg, &stack, target, output),
        Command::EvalLoc { data } => eval_loc(&cfg, data.as_deref()),
        Command::Curve { mode, data } => curve(&cfg, mode, data.as_deref()),
        Command::Sanity { data } => sanity(&cfg, data.as_deref()),
        Command::ExportHeatmap { map, output } => export_heatmap(&cfg, &map, output),
    }
}

fn gen_data(cfg: &RunConfig) -> anyhow::Result<()> {
    let dataset = cfg.generate_dataset()?;
    let model = cfg.build_model(&dataset)?;
    let manifest = write_dataset(&cfg.out, cfg.seed, &cfg.dataset, &model, &dataset.samples)
        .with_context(|| format!("writing dataset to {}", cfg.out.display()))?;
    println!(
        "wrote {} samples to {}",
        manifest.samples.len(),
        cfg.out.display()
    );
    Ok(())
}

fn attribute(
    cfg: &RunConfig,
    model: &Path,
    image: &Path,
    classes: Option<&str>,
    output: Option<PathBuf>,
) -> anyhow::Result<()> {
    let model: ToyModel64 = load_model(model)?;
    let image = read_image(image)?;
    let classes = match classes {
        Some(raw) => parse_list(raw, "class")?,
        None => {
            let logits = forward_logits(&model, image.pixels())?;
            select_classes(logits.as_slice().expect("contiguous logits"), &cfg.strategy)?
        }
    };
    let stack = attribute_stack(&model, &image, &classes, &cfg.method)?;
    let output = output.unwrap_or_else(|| cfg.out.join("stack.npy"));
    if let Some(parent) = output.parent() {
        ensure_dir(parent)?;
    }
    write_stack(&output, &stack)?;
    println!(
        "wrote {} maps for classes {:?} to {}",
        stack.len(),
        stack.class_ids(),
        output.display()
    );
    Ok(())
}

fn refine(
    cfg: &RunConfig,
    stack: &Path,
    target: usize,
    output: Option<PathBuf>,
) -> anyhow::Result<()> {
    let stack = read_stack::<f64>(stack)?;
    let refined = refine_detailed(&stack, target, &cfg.lens)?;
    let output = output.unwrap_or_else(|| cfg.out.join("refined.npy"));
    if let Some(parent) = output.parent() {
        ensure_dir(parent)?;
    }
    write_map(&output, &refined.map)?;
    println!("mask coverage: {}", fmt_sig9(refined.kept_fraction));
    println!("wrote {}", output.display());
    Ok(())
}

fn mean_report(
    rows: &[LocalizationRow],
    pick: fn(&LocalizationRow) -> &LocalizationReport,
) -> LocalizationReport {
    let n = rows.len().max(1) as f64;
    let sum = |f: fn(&LocalizationReport) -> f64| rows.iter().map(|r| f(pick(r))).sum::<f64>() / n;
    LocalizationReport {
        ra: sum(|r| r.ra),
        iou: sum(|r| r.iou),
        precision: sum(|r| r.precision),
        recall: sum(|r| r.recall),
        f1: sum(|r| r.f1),
    }
}

fn eval_loc(cfg: &RunConfig, data: Option<&Path>) -> anyhow::Result<()> {
    let (model, samples) = inputs(cfg, data)?;
    let rows = run_localization(
        &model,
        &samples,
        &cfg.method,
        &cfg.lens,
        &cfg.metrics.localization,
    )?;
    ensure_dir(&cfg.out)?;
    let csv_path = cfg.out.join("localization.csv");
    write_bytes(
        &csv_path,
        localization_csv(cfg.method.name(), &rows).as_bytes(),
    )?;

    let (vanilla, lens) = (
        mean_report(&rows, |r| &r.vanilla),
        mean_report(&rows, |r| &r.lens),
    );
    let mut table = serde_json::Map::new();
    for (name, get) in LocalizationReport::METRICS {
        let wins = rows
            .iter()
            .filter(|r| get(&r.lens) > get(&r.vanilla))
            .count();
        table.insert(
            name.into(),
            json!({
                "vanilla": get(&vanilla),
                "lens": get(&lens),
                "improvement": improvement(get(&vanilla), get(&lens), true),
                "lens_wins": wins,
            }),
        );
    }
    let results = json!({ "method": cfg.method.name(), "rows": rows.len(), "metrics": table });
    let summary = write_summary(cfg, "eval-loc", data, results)?;
    println!(
        "wrote {} rows to {} and {}",
        rows.len(),
        csv_path.display(),
        summary.display()
    );
    Ok(())
}

fn curve(cfg: &RunConfig, mode: ModeArg, data: Option<&Path>) -> anyhow::Result<()> {
    let mode = match mode {
        ModeArg::Insertion => CurveMode::Insertion,
        ModeArg::Deletion => CurveMode::Deletion,
    };
    let (model, samples) = inputs(cfg, data)?;
    let rows = run_curves(
        &model,
        &samples,
        &cfg.method,
        &cfg.lens,
        &cfg.metrics.curve,
        mode,
    )?;
    ensure_dir(&cfg.out)?;
    let csv_path = cfg.out.join(format!("curve_{}.csv", mode.name()));
    write_bytes(
        &csv_path,
        curve_csv(cfg.method.name(), mode, &rows).as_bytes(),
    )?;

    let n = rows.len().max(1) as f64;
    let vanilla = rows.iter().map(|r| r.vanilla_auc).sum::<f64>() / n;
    let lens = rows.iter().map(|r| r.lens_auc).sum::<f64>() / n;
    let better = |r: &&alens_core::eval::CurveRow| {
        if mode.higher_is_better() {
            r.lens_auc > r.vanilla_auc
        } else {
            r.lens_auc < r.vanilla_auc
        }
    };
    let results = json!({
        "method": cfg.method.name(),
        "mode": mode.name(),
        "rows": rows.len(),
        "auc": {
            "vanilla": vanilla,
            "lens": lens,
            "improvement": improvement(vanilla, lens, mode.higher_is_better()),
            "lens_wins": rows.iter().filter(better).count(),
        },
    });
    let summary = write_summary(cfg, &format!("curve_{}", mode.name()), data, results)?;
    println!(
        "wrote {} rows to {} and {}",
        rows.len(),
        csv_path.display(),
        summary.display()
    );
    Ok(())
}

fn sanity(cfg: &RunConfig, data: Option<&Path>) -> anyhow::Result<()> {
    let (model, samples) = inputs(cfg, data)?;
    let images: Vec<_> = samples
        .into_iter()
        .take(cfg.sanity.images)
        .map(|s| s.image)
        .collect();
    let report = randomization_experiment(&model, &images, &cfg.randomization(), &cfg.lens)?;
    ensure_dir(&cfg.out)?;
    let rows_path = cfg.out.join("sanity.csv");
    write_bytes(&rows_path, sanity_csv(&report).as_bytes())?;
    write_bytes(
        cfg.out.join("sanity_summary.csv"),
        sanity_summary_csv(&report).as_bytes(),
    )?;
    let results = json!({
        "images": images.len(),
        "similarity_mode": report.similarity_mode,
        "groups_total": report.groups_total,
        "summary": report.summary,
    });
    let summary = write_summary(cfg, "sanity", data, results)?;
    println!(
        "wrote {} rows to {} and {}",
        report.rows.len(),
        rows_path.display(),
        summary.display()
    );
    Ok(())
}

fn export_heatmap(cfg: &RunConfig, map: &Path, output: Option<PathBuf>) -> anyhow::Result<()> {
    let values = read_map::<f64>(map)?;
    let output = output.unwrap_or_else(|| {
        let stem = map
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("heatmap");
        cfg.out.join(format!("{stem}.pgm"))
    });
    if let Some(parent) = output.parent() {
        ensure_dir(parent)?;
    }
    write_pgm(&output, &values)?;
    println!("wrote {}", output.display());
    Ok(())
}
