//! Subcommand implementations behind the `alacpd` binary: `detect`, `eval`,
//! `bench`, `synth`, and `gradcheck`. The binary itself only parses arguments
//! and maps errors to exit codes; everything here is callable from tests.
//!
//! Hyperparameters come from a flat key-value config file using the names
//! `w, U, M, S, h, C, beta, n_cpd, n_init_frac, e_init, e_train, e_reinit,
//! lr` (plus `c_grace_mult`, `c_grace_len`, `n_init`, `standardize`,
//! `forward_fill`); command-line flags override file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, load_dataset, standardize, FitRange, SegmentSpec, SpikeSpec,
    SyntheticSpec, TimeSeries,
};
use crate::detector::{run, DetectionReport, EnsembleConfig};
use crate::error::{Error, Result};
use crate::metrics::{
    average_rank, covering, f1_score, AnnotationFile, F1Result, MatchConfig, ScoreTable,
};
use crate::ndcore::finite_diff_check;
use crate::taenet::{TaenetConfig, TaenetModel, WindowSample};

/// Ablation variants exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Full,
    NoAr,
    NoAe,
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_ar" => Ok(Ablation::NoAr),
            "no_ae" => Ok(Ablation::NoAe),
            other => Err(Error::invalid_input(format!(
                "unknown ablation '{other}' (expected full|no_ar|no_ae)"
            ))),
        }
    }
}

/// How the series is standardized before detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StandardizeMode {
    /// Fit on the initialization prefix only (no peeking at the future).
    #[default]
    Prefix,
    /// Fit on the whole series, as the benchmark protocol does.
    Full,
    /// Feed the series as-is.
    None,
}

impl std::str::FromStr for StandardizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prefix" => Ok(StandardizeMode::Prefix),
            "full" => Ok(StandardizeMode::Full),
            "none" => Ok(StandardizeMode::None),
            other => Err(Error::invalid_input(format!(
                "unknown standardize mode '{other}' (expected prefix|full|none)"
            ))),
        }
    }
}

/// Values read from the flat key-value config file; `None` means "not set".
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    pub window: Option<usize>,
    pub hidden: Option<usize>,
    pub ensemble: Option<usize>,
    pub skip_sizes: Option<Vec<usize>>,
    pub horizon: Option<usize>,
    pub threshold_coeff: Option<f64>,
    pub vote_fraction: Option<f64>,
    pub n_cpd: Option<usize>,
    pub n_init_frac: Option<f64>,
    pub n_init: Option<usize>,
    pub e_init: Option<usize>,
    pub e_train: Option<usize>,
    pub e_reinit: Option<usize>,
    pub learning_rate: Option<f64>,
    pub grace_mult: Option<f64>,
    pub grace_len: Option<usize>,
    pub standardize: Option<StandardizeMode>,
    pub forward_fill: Option<bool>,
    pub reset_on_change: Option<bool>,
}

fn parse_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    parse_kv_text(&text, &path.display().to_string())
}

fn parse_kv_text(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(
                format!("{origin}: line {}", lineno + 1),
                "expected 'key = value'",
            ));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let map = parse_kv(path)?;
        let mut cfg = FileConfig::default();
        for (key, value) in &map {
            let parse_err = |e: String| Error::parse(format!("{}: {key}", path.display()), e);
            match key.as_str() {
                "w" => cfg.window = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?),
                "U" => cfg.hidden = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?),
                "M" => cfg.ensemble = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?),
                "S" => {
                    let sizes: std::result::Result<Vec<usize>, _> =
                        value.split(',').map(|v| v.trim().parse()).collect();
                    cfg.skip_sizes = Some(sizes.map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?);
                }
                "h" => cfg.horizon = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?),
                "C" => cfg.threshold_coeff = Some(value.parse().map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?),
                "beta" => cfg.vote_fraction = Some(value.parse().map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?),
                "n_cpd" => cfg.n_cpd = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?),
                "n_init_frac" => cfg.n_init_frac = Some(value.parse().map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?),
                "n_init" => cfg.n_init = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?),
                "e_init" => cfg.e_init = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?),
                "e_train" => cfg.e_train = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?),
                "e_reinit" => cfg.e_reinit = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?),
                "lr" => cfg.learning_rate = Some(value.parse().map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?),
                "c_grace_mult" => cfg.grace_mult = Some(value.parse().map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?),
                "c_grace_len" => cfg.grace_len = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?),
                "standardize" => cfg.standardize = Some(value.parse()?),
                "reset_on_change" => {
                    cfg.reset_on_change = Some(value.parse().map_err(|e: std::str::ParseBoolError| parse_err(e.to_string()))?)
                }
                "forward_fill" => {
                    cfg.forward_fill = Some(value.parse().map_err(|e: std::str::ParseBoolError| parse_err(e.to_string()))?)
                }
                other => {
                    return Err(Error::parse(
                        format!("{}: {other}", path.display()),
                        "unknown configuration key",
                    ))
                }
            }
        }
        Ok(cfg)
    }

    /// Resolve against the published defaults for a series of length `n`.
    pub fn resolve(&self, n: usize) -> Result<(EnsembleConfig, StandardizeMode, bool)> {
        let n_init = match (self.n_init, self.n_init_frac) {
            (Some(abs), _) => abs,
            (None, frac) => {
                let frac = frac.unwrap_or(0.10);
                if !(frac > 0.0 && frac < 1.0) {
                    return Err(Error::config(format!("n_init_frac {frac} out of (0,1)")));
                }
                ((n as f64) * frac).round() as usize
            }
        };
        let mut cfg = EnsembleConfig::published_defaults(n_init);
        if let Some(v) = self.window {
            cfg.window = v;
        }
        if let Some(v) = self.hidden {
            cfg.hidden = v;
        }
        if let Some(v) = self.ensemble {
            cfg.ensemble = v;
        }
        if let Some(v) = &self.skip_sizes {
            cfg.skip_sizes = v.clone();
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.threshold_coeff {
            cfg.threshold_coeff = v;
        }
        if let Some(v) = self.vote_fraction {
            cfg.vote_fraction = v;
        }
        if let Some(v) = self.n_cpd {
            cfg.n_cpd = v;
        }
        if let Some(v) = self.e_init {
            cfg.e_init = v;
        }
        if let Some(v) = self.e_train {
            cfg.e_train = v;
        }
        if let Some(v) = self.e_reinit {
            cfg.e_reinit = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.grace_mult {
            cfg.grace_mult = v;
        }
        if let Some(v) = self.grace_len {
            cfg.grace_len = v;
        }
        if let Some(v) = self.reset_on_change {
            cfg.reset_on_change = v;
        }
        Ok((
            cfg,
            self.standardize.unwrap_or_default(),
            self.forward_fill.unwrap_or(false),
        ))
    }
}

/// Everything `detect` needs; mirrors the command line.
#[derive(Debug, Clone)]
pub struct DetectArgs {
    pub data: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub seeds: usize,
    pub ablation: Ablation,
    pub trace: bool,
    pub out: PathBuf,
}

/// Per-run summary written next to the per-seed detection files.
#[derive(Debug, Serialize, Deserialize)]
pub struct DetectSummary {
    pub dataset: String,
    pub variant: String,
    pub n_init: usize,
    pub seeds: Vec<u64>,
    pub change_points_per_seed: BTreeMap<String, Vec<usize>>,
    pub union: Vec<usize>,
}

fn prepare_series(
    data: &Path,
    config: Option<&Path>,
    n_hint: Option<usize>,
) -> Result<(TimeSeries, EnsembleConfig, StandardizeMode)> {
    let file_cfg = match config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    // Forward-fill must be known before loading; peek with a default resolve.
    let forward_fill = file_cfg.forward_fill.unwrap_or(false);
    let series = load_dataset(data, forward_fill)?;
    let n = n_hint.unwrap_or_else(|| series.len());
    let (cfg, mode, _) = file_cfg.resolve(n)?;
    Ok((series, cfg, mode))
}

fn standardized(series: &TimeSeries, mode: StandardizeMode, n_init: usize) -> Result<TimeSeries> {
    match mode {
        StandardizeMode::Prefix => Ok(standardize(series, FitRange::Prefix(n_init))?.0),
        StandardizeMode::Full => Ok(standardize(series, FitRange::Full)?.0),
        StandardizeMode::None => Ok(series.clone()),
    }
}

/// Run detection for `seeds` consecutive master seeds and write one JSON per
/// seed plus a summary. Returns the reports in seed order.
pub fn cmd_detect(args: &DetectArgs) -> Result<Vec<DetectionReport>> {
    if args.seeds == 0 {
        return Err(Error::invalid_input("need at least one seed"));
    }
    let (series, mut cfg, mode) = prepare_series(&args.data, args.config.as_deref(), None)?;
    match args.ablation {
        Ablation::Full => {}
        Ablation::NoAr => cfg.use_ar = false,
        Ablation::NoAe => cfg.use_ae = false,
    }
    cfg.validate()?;
    let input = standardized(&series, mode, cfg.n_init)?;

    std::fs::create_dir_all(&args.out)?;
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|k| args.seed + k).collect();
    let reports: Vec<DetectionReport> = seeds
        .par_iter()
        .map(|&seed| run(&input, &cfg, seed, args.trace))
        .collect::<Result<_>>()?;

    let mut per_seed = BTreeMap::new();
    let mut union = std::collections::BTreeSet::new();
    for report in &reports {
        per_seed.insert(report.seed.to_string(), report.change_points.clone());
        union.extend(report.change_points.iter().copied());
        let path = args
            .out
            .join(format!("detect_{}_seed{}.json", report.dataset, report.seed));
        std::fs::write(&path, serde_json::to_string_pretty(report)?)?;
    }
    let summary = DetectSummary {
        dataset: series.name.clone(),
        variant: cfg.variant_name().to_string(),
        n_init: cfg.n_init,
        seeds,
        change_points_per_seed: per_seed,
        union: union.into_iter().collect(),
    };
    let summary_path = args.out.join(format!("summary_{}.json", series.name));
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    Ok(reports)
}

/// Scores for one prediction set against one annotation file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub covering: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub margin: usize,
    pub trivial_start: bool,
    pub per_seed: Vec<SeedScore>,
    pub mean_covering: f64,
    pub mean_f1: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub pred: PathBuf,
    pub annotations: PathBuf,
    pub margin: usize,
    pub trivial_start: bool,
    pub out: Option<PathBuf>,
}

fn collect_reports(pred: &Path) -> Result<Vec<DetectionReport>> {
    let mut reports: Vec<DetectionReport> = Vec::new();
    if pred.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(pred)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("detect_") && n.ends_with(".json"))
            })
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            reports.push(
                serde_json::from_str(&text)
                    .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?,
            );
        }
    } else {
        let text = std::fs::read_to_string(pred)?;
        reports.push(
            serde_json::from_str(&text)
                .map_err(|e| Error::parse(pred.display().to_string(), e.to_string()))?,
        );
    }
    if reports.is_empty() {
        return Err(Error::invalid_input(format!(
            "no detection files found under {}",
            pred.display()
        )));
    }
    reports.sort_by_key(|r| r.seed);
    Ok(reports)
}

/// Score stored predictions against an annotation file.
pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let annotations = AnnotationFile::load(&args.annotations)?;
    let truth = annotations.annotation_set()?;
    let reports = collect_reports(&args.pred)?;
    let match_cfg = MatchConfig {
        margin: args.margin,
        include_trivial_start: args.trivial_start,
    };
    let mut per_seed = Vec::with_capacity(reports.len());
    for report in &reports {
        if report.dataset != annotations.dataset {
            return Err(Error::invalid_input(format!(
                "prediction dataset '{}' does not match annotations '{}'",
                report.dataset, annotations.dataset
            )));
        }
        let c = covering(&report.change_points, &truth, annotations.n)?;
        let f: F1Result = f1_score(&report.change_points, &truth, &match_cfg)?;
        per_seed.push(SeedScore {
            seed: report.seed,
            covering: c,
            f1: f.f1,
            precision: f.precision,
            recall: f.recall,
        });
    }
    let k = per_seed.len() as f64;
    let report = EvalReport {
        dataset: annotations.dataset.clone(),
        margin: args.margin,
        trivial_start: args.trivial_start,
        mean_covering: per_seed.iter().map(|s| s.covering).sum::<f64>() / k,
        mean_f1: per_seed.iter().map(|s| s.f1).sum::<f64>() / k,
        mean_precision: per_seed.iter().map(|s| s.precision).sum::<f64>() / k,
        mean_recall: per_seed.iter().map(|s| s.recall).sum::<f64>() / k,
        per_seed,
    };
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(report)
}

/// Benchmark manifest: datasets, variants, seed count, optional config.
#[derive(Debug, Deserialize)]
pub struct BenchManifest {
    pub datasets: Vec<BenchDataset>,
    #[serde(default = "default_variants")]
    pub variants: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub config: Option<PathBuf>,
    #[serde(default = "default_margin")]
    pub margin: usize,
    pub out: PathBuf,
}

fn default_variants() -> Vec<String> {
    vec!["full".into(), "no_ar".into(), "no_ae".into()]
}

fn default_seeds() -> usize {
    10
}

fn default_margin() -> usize {
    5
}

#[derive(Debug, Deserialize)]
pub struct BenchDataset {
    pub data: PathBuf,
    pub annotations: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub datasets: Vec<String>,
    pub variants: Vec<String>,
    pub seeds: usize,
    /// `scores[variant][dataset]` mean over seeds.
    pub mean_covering: Vec<Vec<f64>>,
    pub mean_f1: Vec<Vec<f64>>,
    pub rank_covering: Vec<f64>,
    pub rank_f1: Vec<f64>,
}

/// Multi-dataset, multi-variant, multi-seed benchmark with rank aggregation.
pub fn cmd_bench(manifest_path: &Path) -> Result<BenchReport> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::parse(manifest_path.display().to_string(), e.to_string()))?;
    let manifest: BenchManifest = serde_json::from_str(&text)
        .map_err(|e| Error::parse(manifest_path.display().to_string(), e.to_string()))?;
    if manifest.datasets.is_empty() || manifest.variants.is_empty() || manifest.seeds == 0 {
        return Err(Error::invalid_input(
            "manifest needs datasets, variants, and at least one seed",
        ));
    }
    std::fs::create_dir_all(&manifest.out)?;

    let dataset_names: Vec<String> = manifest
        .datasets
        .iter()
        .map(|d| {
            load_dataset(&d.data, false).map(|s| s.name)
        })
        .collect::<Result<_>>()?;

    let mut cov_table = ScoreTable::new(manifest.variants.clone(), dataset_names.clone());
    let mut f1_table = ScoreTable::new(manifest.variants.clone(), dataset_names.clone());
    let mut mean_covering = vec![vec![0.0; manifest.datasets.len()]; manifest.variants.len()];
    let mut mean_f1 = vec![vec![0.0; manifest.datasets.len()]; manifest.variants.len()];

    for (di, dataset) in manifest.datasets.iter().enumerate() {
        for (vi, variant) in manifest.variants.iter().enumerate() {
            let sub = manifest
                .out
                .join(format!("{}_{}", dataset_names[di], variant));
            let detect = DetectArgs {
                data: dataset.data.clone(),
                config: manifest.config.clone(),
                seed: 0,
                seeds: manifest.seeds,
                ablation: variant.parse()?,
                trace: false,
                out: sub.clone(),
            };
            cmd_detect(&detect)?;
            let eval = EvalArgs {
                pred: sub.clone(),
                annotations: dataset.annotations.clone(),
                margin: manifest.margin,
                trivial_start: true,
                out: Some(sub.join("scores.json")),
            };
            let report = cmd_eval(&eval)?;
            mean_covering[vi][di] = report.mean_covering;
            mean_f1[vi][di] = report.mean_f1;
            cov_table.set(vi, di, report.mean_covering);
            f1_table.set(vi, di, report.mean_f1);
        }
    }

    let report = BenchReport {
        datasets: dataset_names,
        variants: manifest.variants.clone(),
        seeds: manifest.seeds,
        mean_covering,
        mean_f1,
        rank_covering: average_rank(&cov_table)?,
        rank_f1: average_rank(&f1_table)?,
    };
    std::fs::write(
        manifest.out.join("bench_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    // Plot-ready rank data: one line per variant, x = variant, y = mean rank.
    for (metric, ranks) in [("covering", &report.rank_covering), ("f1", &report.rank_f1)] {
        let mut csv = String::from("variant,mean_rank\n");
        for (variant, rank) in report.variants.iter().zip(ranks) {
            let _ = writeln!(csv, "{variant},{rank}");
        }
        std::fs::write(manifest.out.join(format!("ranks_{metric}.csv")), csv)?;
    }
    Ok(report)
}

/// Parse the key-value synthetic description:
///
/// ```text
/// name = shift3
/// dims = 3
/// seed = 42
/// segment = 300, 0;0;0, 1.0, 0.5     # len, means, std, ar1
/// spike = 200, 0.75                  # index, magnitude
/// ```
pub fn parse_synth_spec(text: &str, origin: &str) -> Result<SyntheticSpec> {
    let mut name = "synthetic".to_string();
    let mut dims = 1usize;
    let mut seed = 0u64;
    let mut segments = Vec::new();
    let mut spikes = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let here = || format!("{origin}: line {}", lineno + 1);
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(here(), "expected 'key = value'"));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "name" => name = value.to_string(),
            "dims" => dims = value.parse().map_err(|e: std::num::ParseIntError| Error::parse(here(), e.to_string()))?,
            "seed" => seed = value.parse().map_err(|e: std::num::ParseIntError| Error::parse(here(), e.to_string()))?,
            "segment" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 4 {
                    return Err(Error::parse(here(), "segment needs 'len, means, std, ar1'"));
                }
                let len = parts[0].parse().map_err(|e: std::num::ParseIntError| Error::parse(here(), e.to_string()))?;
                let means: std::result::Result<Vec<f64>, _> =
                    parts[1].split(';').map(|m| m.trim().parse()).collect();
                let means = means.map_err(|e: std::num::ParseFloatError| Error::parse(here(), e.to_string()))?;
                let std = parts[2].parse().map_err(|e: std::num::ParseFloatError| Error::parse(here(), e.to_string()))?;
                let ar1 = parts[3].parse().map_err(|e: std::num::ParseFloatError| Error::parse(here(), e.to_string()))?;
                segments.push(SegmentSpec { len, means, std, ar1 });
            }
            "spike" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return Err(Error::parse(here(), "spike needs 'index, magnitude'"));
                }
                spikes.push(SpikeSpec {
                    index: parts[0].parse().map_err(|e: std::num::ParseIntError| Error::parse(here(), e.to_string()))?,
                    magnitude: parts[1].parse().map_err(|e: std::num::ParseFloatError| Error::parse(here(), e.to_string()))?,
                });
            }
            other => return Err(Error::parse(here(), format!("unknown key '{other}'"))),
        }
    }
    let spec = SyntheticSpec { name, dims, segments, spikes, seed };
    spec.validate()?;
    Ok(spec)
}

/// Generate a synthetic dataset file (benchmark JSON schema) plus its
/// annotation file with the true change-points.
pub fn cmd_synth(spec_path: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| Error::parse(spec_path.display().to_string(), e.to_string()))?;
    let spec = parse_synth_spec(&text, &spec_path.display().to_string())?;
    let (series, truth) = generate_synthetic(&spec)?;
    std::fs::write(
        out,
        serde_json::to_string(&crate::data::to_benchmark_json(&series))?,
    )?;
    let mut annotations = BTreeMap::new();
    annotations.insert("1".to_string(), truth);
    let ann = AnnotationFile {
        dataset: series.name.clone(),
        n: series.len(),
        annotations,
    };
    let ann_path = out.with_extension("annotations.json");
    std::fs::write(&ann_path, serde_json::to_string_pretty(&ann)?)?;
    println!(
        "wrote {} ({} samples, {} dims) and {}",
        out.display(),
        series.len(),
        series.dims(),
        ann_path.display()
    );
    Ok(())
}

/// One gradient-check case: max relative error between analytic BPTT
/// gradients and central finite differences.
pub fn gradcheck_case(hidden: usize, window: usize, dims: usize, skip: usize, seed: u64) -> Result<f64> {
    let cfg = TaenetConfig::new(window, dims, hidden, skip, 2);
    let mut model = TaenetModel::new(cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let n = cfg.ar_reach() + window + 2;
    let data: Vec<f64> = (0..n * dims).map(|_| rng.random_range(-1.5..1.5)).collect();
    let values = crate::ndcore::Matrix::from_vec(n, dims, data)?;
    let sample = WindowSample::from_series(&values, n - 1, &cfg)?;
    let trace = model.forward(&sample)?;
    crate::ndcore::ParamModel::zero_grads(&mut model);
    model.backward(&sample, &trace);
    finite_diff_check(&mut model, |m| m.loss(&sample), 1e-5)
}

/// The numerical verification suite: gradient checks over a grid of small
/// network configurations. Returns the worst relative error.
pub fn cmd_gradcheck() -> Result<f64> {
    let grid = [
        (2, 3, 1, 1),
        (2, 3, 2, 2),
        (2, 4, 1, 2),
        (4, 3, 2, 1),
        (4, 4, 1, 1),
        (4, 4, 2, 2),
    ];
    let mut worst: f64 = 0.0;
    for (i, &(hidden, window, dims, skip)) in grid.iter().enumerate() {
        let err = gradcheck_case(hidden, window, dims, skip, 1000 + i as u64)?;
        println!(
            "gradcheck U={hidden} w={window} D={dims} S={skip}: max relative error {err:.3e}"
        );
        worst = worst.max(err);
    }
    println!("worst case: {worst:.3e} (tolerance 1e-4)");
    if worst < 1e-4 {
        Ok(worst)
    } else {
        Err(Error::training(format!(
            "gradient check failed: {worst:.3e} >= 1e-4"
        )))
    }
}
