//! Command-line driver.
//!
//! Exit codes: 0 success, 1 usage, 2 IO or parse failure, 3 some evaluation
//! cases failed.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::components::label_components;
use crate::dataset_stats::{corpus_stats, render_table, CorpusStats, StdKind};
use crate::error::Error;
use crate::io::{read_mask, read_volume, write_mask, write_real, Volume};
use crate::losses::{
    combined_loss, normalize_gradient, DegeneratePolicy, EmptyGtMode, LossConfig, LossKind,
    LossWeights,
};
use crate::metrics::{
    aggregate, case_metrics, quartile_recall, AggregateMetrics, CaseMetrics, QuartileRecall,
};
use crate::phantoms::{build_phantom, figure1_scenario, figure2_scenario, random_phantom};
use crate::volume::{binarize, sigmoid, BinaryMask, Shape, Spacing, DEFAULT_THRESHOLD};
use crate::voronoi::{voronoi_partition, DistanceMetric, TIE_POLICY};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

pub const THREADS_ENV: &str = "LESIONWISE_THREADS";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) => EXIT_USAGE,
            _ => EXIT_IO,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::from(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossArg {
    Dicece,
    CcDicece,
    BlobDicece,
}

impl From<LossArg> for LossKind {
    fn from(a: LossArg) -> Self {
        match a {
            LossArg::Dicece => LossKind::DiceCE,
            LossArg::CcDicece => LossKind::CCDiceCE,
            LossArg::BlobDicece => LossKind::BlobDiceCE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceArg {
    Voxel,
    Physical,
}

impl DistanceArg {
    fn metric(self, spacing: Spacing) -> DistanceMetric {
        match self {
            DistanceArg::Voxel => DistanceMetric::VoxelIndex,
            DistanceArg::Physical => DistanceMetric::Physical(spacing),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyGtArg {
    GlobalOnly,
    Zero,
}

impl From<EmptyGtArg> for EmptyGtMode {
    fn from(a: EmptyGtArg) -> Self {
        match a {
            EmptyGtArg::GlobalOnly => EmptyGtMode::GlobalOnly,
            EmptyGtArg::Zero => EmptyGtMode::Zero,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomName {
    Figure1,
    Figure2,
    Random,
}

#[derive(Debug, Parser)]
#[command(
    name = "lesionwise",
    version,
    about = "Instance-aware segmentation losses and lesion-wise evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, clap::Args, Serialize)]
pub struct CommonOpts {
    /// Distance used for nearest-lesion regions.
    #[arg(long, value_enum, default_value = "voxel")]
    pub distance: DistanceArg,
    /// Output directory (or file for `voronoi`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report formats, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json,csv")]
    pub format: Vec<FormatArg>,
}

#[derive(Clone, Debug, clap::Args, Serialize)]
pub struct LossOpts {
    #[arg(long = "loss", value_enum, default_value = "cc-dicece")]
    pub loss: LossArg,
    #[arg(long, default_value_t = 1.0)]
    pub w_global: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_instance: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_dice: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_ce: f64,
    /// Behaviour when the ground truth has no lesions.
    #[arg(long, value_enum, default_value = "global-only")]
    pub empty_gt: EmptyGtArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate (gt, pred) pairs listed in a CSV manifest with header `gt,pred`.
    Eval {
        manifest: PathBuf,
        /// Probability threshold applied to float (logit) predictions.
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Compute a loss and optionally export its gradient map.
    Loss {
        gt: PathBuf,
        logits: PathBuf,
        #[command(flatten)]
        loss: LossOpts,
        #[command(flatten)]
        common: CommonOpts,
        /// Write the per-panel normalised gradient here.
        #[arg(long)]
        grad_out: Option<PathBuf>,
        /// Write the raw gradient here.
        #[arg(long)]
        grad_raw_out: Option<PathBuf>,
    },
    /// Component statistics for one or more directories of masks.
    Stats {
        #[arg(required = true)]
        mask_dirs: Vec<PathBuf>,
        /// Use the sample (n - 1) standard deviation.
        #[arg(long)]
        sample_std: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Write a synthetic scenario to volume files.
    Phantom {
        #[arg(value_enum)]
        name: PhantomName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of lesions for `random`.
        #[arg(long, default_value_t = 5)]
        count: usize,
        /// Grid size for `random`, as nx,ny,nz.
        #[arg(long, value_delimiter = ',', default_value = "32,32,32")]
        shape: Vec<usize>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Export the nearest-lesion region of every voxel.
    Voronoi {
        gt: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
}

/// Run configuration echoed into every report.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub inputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossOpts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub distance: DistanceArg,
    pub out: Option<String>,
    pub format: Vec<FormatArg>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseRecord {
    pub case: usize,
    pub gt: String,
    pub pred: String,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<CaseMetrics>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub config: RunConfig,
    pub tie_policy: &'static str,
    pub undefined_policy: &'static str,
    pub quartile_boundaries: &'static str,
    pub n_cases: usize,
    pub n_failed: usize,
    pub cases: Vec<CaseRecord>,
    pub aggregate: Option<AggregateMetrics>,
    pub quartile_recall: QuartileRecall,
}

const UNDEFINED_POLICY: &str = "zero-denominator metrics are null and excluded from aggregation";
const QUARTILE_SOURCE: &str = "pooled over all evaluated cases; linear-interpolation percentiles";

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn thread_count() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::usage(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)),
    }
}

fn pool() -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start worker pool: {e}")))
}

fn require_out(common: &CommonOpts) -> CliResult<&Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| CliError::usage("--out is required for this command"))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

fn dispatch(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Eval {
            manifest,
            threshold,
            common,
        } => cmd_eval(&manifest, threshold, &common),
        Command::Loss {
            gt,
            logits,
            loss,
            common,
            grad_out,
            grad_raw_out,
        } => cmd_loss(
            &gt,
            &logits,
            &loss,
            &common,
            grad_out.as_deref(),
            grad_raw_out.as_deref(),
        ),
        Command::Stats {
            mask_dirs,
            sample_std,
            common,
        } => cmd_stats(&mask_dirs, sample_std, &common),
        Command::Phantom {
            name,
            seed,
            count,
            shape,
            common,
        } => cmd_phantom(name, seed, count, &shape, &common),
        Command::Voronoi { gt, common } => cmd_voronoi(&gt, &common),
    }
}

fn read_manifest(path: &Path) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| CliError {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        })?
        .clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::usage(format!(
                "{}: manifest needs a `{name}` column",
                path.display()
            ))
        })
    };
    let (gi, pi) = (col("gt")?, col("pred")?);
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        })?;
        let get = |i: usize| base.join(record.get(i).unwrap_or(""));
        pairs.push((get(gi), get(pi)));
    }
    if pairs.is_empty() {
        return Err(CliError::usage(format!(
            "{}: manifest lists no cases",
            path.display()
        )));
    }
    Ok(pairs)
}

fn load_prediction(path: &Path, threshold: f64) -> crate::Result<BinaryMask> {
    match read_volume(path)? {
        Volume::Mask(m) => Ok(m),
        Volume::Logits(l) => binarize(&sigmoid(&l), threshold),
    }
}

fn evaluate_case(
    gt: &Path,
    pred: &Path,
    threshold: f64,
    distance: DistanceArg,
) -> crate::Result<CaseMetrics> {
    let gt_mask = read_mask(gt)?;
    let pred_mask = load_prediction(pred, threshold)?;
    case_metrics(&pred_mask, &gt_mask, distance.metric(gt_mask.spacing()))
}

/// Evaluate every manifest pair and assemble the report, in manifest order.
pub fn evaluate_manifest(
    manifest: &Path,
    threshold: f64,
    common: &CommonOpts,
) -> CliResult<EvaluationReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CliError::usage(format!(
            "--threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if common.format.is_empty() {
        return Err(CliError::usage("--format needs at least one of json, csv"));
    }
    let config = RunConfig {
        command: "eval".into(),
        inputs: vec![display(manifest)],
        loss: None,
        threshold: Some(threshold),
        distance: common.distance,
        out: common.out.as_deref().map(display),
        format: common.format.clone(),
    };
    let pairs = read_manifest(manifest)?;
    let pool = pool()?;
    let results: Vec<crate::Result<CaseMetrics>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(g, p)| evaluate_case(g, p, threshold, common.distance))
            .collect()
    });

    let mut cases = Vec::with_capacity(pairs.len());
    let mut ok = Vec::new();
    for (i, ((g, p), r)) in pairs.iter().zip(results).enumerate() {
        let (status, error, metrics) = match r {
            Ok(m) => {
                ok.push(m.clone());
                ("ok", None, Some(m))
            }
            Err(e) => ("error", Some(e.to_string()), None),
        };
        cases.push(CaseRecord {
            case: i,
            gt: display(g),
            pred: display(p),
            status,
            error,
            metrics,
        });
    }
    let n_failed = cases.len() - ok.len();
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME"),
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        tie_policy: TIE_POLICY,
        undefined_policy: UNDEFINED_POLICY,
        quartile_boundaries: QUARTILE_SOURCE,
        n_cases: cases.len(),
        n_failed,
        aggregate: aggregate(&ok).ok(),
        quartile_recall: quartile_recall(&ok),
        cases,
    })
}

pub fn cases_csv(report: &EvaluationReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "case",
        "gt",
        "pred",
        "status",
        "dice",
        "cc_dice",
        "precision",
        "recall",
        "f1",
        "n_gt",
        "n_pred",
        "tp",
        "fp",
        "fn",
        "error",
    ])
    .expect("in-memory write");
    for c in &report.cases {
        let m = c.metrics.as_ref();
        let count = |f: fn(&CaseMetrics) -> usize| m.map(|m| f(m).to_string()).unwrap_or_default();
        w.write_record([
            c.case.to_string(),
            c.gt.clone(),
            c.pred.clone(),
            c.status.to_string(),
            opt_cell(m.map(|m| m.dice)),
            opt_cell(m.and_then(|m| m.cc_dice)),
            opt_cell(m.and_then(|m| m.precision)),
            opt_cell(m.and_then(|m| m.recall)),
            opt_cell(m.and_then(|m| m.f1)),
            count(|m| m.n_gt),
            count(|m| m.n_pred),
            count(|m| m.tp),
            count(|m| m.fp),
            count(|m| m.fn_),
            c.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn summary_csv(report: &EvaluationReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "mean", "std", "n", "n_undefined"])
        .expect("write");
    if let Some(a) = &report.aggregate {
        for (name, s) in [
            ("dice", &a.dice),
            ("cc_dice", &a.cc_dice),
            ("precision", &a.precision),
            ("recall", &a.recall),
            ("f1", &a.f1),
        ] {
            w.write_record([
                name.to_string(),
                opt_cell(s.mean),
                opt_cell(s.std),
                s.n.to_string(),
                s.n_undefined.to_string(),
            ])
            .expect("write");
        }
    }
    let q = &report.quartile_recall;
    for (k, label) in ["recall_q1", "recall_q2", "recall_q3", "recall_q4"]
        .iter()
        .enumerate()
    {
        w.write_record([
            label.to_string(),
            opt_cell(q.recall[k]),
            String::new(),
            q.total[k].to_string(),
            String::new(),
        ])
        .expect("write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

fn cmd_eval(manifest: &Path, threshold: f64, common: &CommonOpts) -> CliResult<i32> {
    let out = require_out(common)?.to_path_buf();
    let report = evaluate_manifest(manifest, threshold, common)?;
    ensure_dir(&out)?;
    if common.format.contains(&FormatArg::Json) {
        write_text(&out.join("report.json"), &to_json(&report))?;
    }
    if common.format.contains(&FormatArg::Csv) {
        write_text(&out.join("cases.csv"), &cases_csv(&report))?;
        write_text(&out.join("summary.csv"), &summary_csv(&report))?;
    }
    for c in report.cases.iter().filter(|c| c.status != "ok") {
        eprintln!(
            "case {} failed: {}",
            c.case,
            c.error.as_deref().unwrap_or("")
        );
    }
    if let Some(a) = &report.aggregate {
        println!(
            "{} cases ({} failed): dice {} cc_dice {} f1 {}",
            report.n_cases,
            report.n_failed,
            opt_cell(a.dice.mean),
            opt_cell(a.cc_dice.mean),
            opt_cell(a.f1.mean)
        );
    }
    Ok(if report.n_failed > 0 {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    })
}

#[derive(Debug, Serialize)]
pub struct LossReport {
    pub schema_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub config: RunConfig,
    pub tie_policy: &'static str,
    pub empty_gt_policy: &'static str,
    pub kind: &'static str,
    pub total: f64,
    pub global: f64,
    pub instance: Option<f64>,
    pub n_components: usize,
}

fn cmd_loss(
    gt: &Path,
    logits: &Path,
    opts: &LossOpts,
    common: &CommonOpts,
    grad_out: Option<&Path>,
    grad_raw_out: Option<&Path>,
) -> CliResult<i32> {
    let weights = LossWeights {
        w_global: opts.w_global,
        w_instance: opts.w_instance,
        w_dice: opts.w_dice,
        w_ce: opts.w_ce,
    };
    weights.validate()?;
    let gt_mask = read_mask(gt)?;
    let l = match read_volume(logits)? {
        Volume::Logits(l) => l,
        Volume::Mask(_) => {
            return Err(CliError::usage(format!(
                "{}: logits must be a float volume",
                logits.display()
            )))
        }
    };
    let cfg = LossConfig {
        weights,
        policy: DegeneratePolicy {
            empty_gt: opts.empty_gt.into(),
            ..DegeneratePolicy::default()
        },
        metric: common.distance.metric(gt_mask.spacing()),
    };
    let kind: LossKind = opts.loss.into();
    let result = combined_loss(kind, &l, &gt_mask, &cfg)?;
    if let Some(p) = grad_out {
        write_real(&normalize_gradient(&result.total.grad), p)?;
    }
    if let Some(p) = grad_raw_out {
        write_real(&result.total.grad, p)?;
    }
    let report = LossReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME"),
        tool_version: env!("CARGO_PKG_VERSION"),
        config: RunConfig {
            command: "loss".into(),
            inputs: vec![display(gt), display(logits)],
            loss: Some(opts.clone()),
            threshold: None,
            distance: common.distance,
            out: common.out.as_deref().map(display),
            format: common.format.clone(),
        },
        tie_policy: TIE_POLICY,
        empty_gt_policy: cfg.policy.empty_gt.name(),
        kind: kind.name(),
        total: result.total.value,
        global: result.global,
        instance: result.instance,
        n_components: result.n_components,
    };
    let text = to_json(&report);
    if let Some(dir) = &common.out {
        ensure_dir(dir)?;
        write_text(&dir.join("loss.json"), &text)?;
    }
    print!("{text}");
    Ok(EXIT_OK)
}

fn list_volumes(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if name.ends_with(".json") || name.ends_with(".nii") || name.ends_with(".nii.gz") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn stats_csv(rows: &[(String, CorpusStats)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "dataset",
        "n_scans",
        "n_components",
        "cc_p25",
        "cc_p50",
        "cc_p75",
        "vol_mean_mm3",
        "vol_std_mm3",
        "CC P50 [P25, P75]",
        "Mean volume ± std [mm³]",
    ])
    .expect("write");
    for (name, s) in rows {
        w.write_record([
            name.clone(),
            s.n_scans.to_string(),
            s.n_components.to_string(),
            s.cc_p25.to_string(),
            s.cc_p50.to_string(),
            s.cc_p75.to_string(),
            opt_cell(s.vol_mean_mm3),
            opt_cell(s.vol_std_mm3),
            s.cc_cell(),
            s.volume_cell(),
        ])
        .expect("write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

fn cmd_stats(dirs: &[PathBuf], sample_std: bool, common: &CommonOpts) -> CliResult<i32> {
    let kind = if sample_std {
        StdKind::Sample
    } else {
        StdKind::Population
    };
    let pool = pool()?;
    let mut rows = Vec::new();
    for dir in dirs {
        let files = list_volumes(dir)?;
        if files.is_empty() {
            return Err(CliError::usage(format!(
                "{}: no volumes found",
                dir.display()
            )));
        }
        let masks: Vec<BinaryMask> = pool.install(|| {
            files
                .par_iter()
                .map(read_mask)
                .collect::<crate::Result<Vec<_>>>()
        })?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| display(dir));
        rows.push((name, corpus_stats(&masks, kind)?));
    }
    print!("{}", render_table(&rows));
    if let Some(out) = &common.out {
        ensure_dir(out)?;
        if common.format.contains(&FormatArg::Csv) {
            write_text(&out.join("stats.csv"), &stats_csv(&rows))?;
        }
        if common.format.contains(&FormatArg::Json) {
            #[derive(Serialize)]
            struct Row<'a> {
                dataset: &'a str,
                #[serde(flatten)]
                stats: &'a CorpusStats,
            }
            let rows: Vec<Row> = rows
                .iter()
                .map(|(d, s)| Row {
                    dataset: d,
                    stats: s,
                })
                .collect();
            write_text(&out.join("stats.json"), &to_json(&rows))?;
        }
        write_text(&out.join("stats.txt"), &render_table(&rows))?;
    }
    Ok(EXIT_OK)
}

fn cmd_phantom(
    name: PhantomName,
    seed: u64,
    count: usize,
    shape: &[usize],
    common: &CommonOpts,
) -> CliResult<i32> {
    let out = require_out(common)?;
    ensure_dir(out)?;
    match name {
        PhantomName::Figure1 => {
            let f = figure1_scenario();
            write_mask(&f.gt, out.join("gt"))?;
            write_real(f.pred_perfect.grid(), out.join("pred_perfect"))?;
            write_real(f.pred_partial.grid(), out.join("pred_partial"))?;
        }
        PhantomName::Figure2 => {
            let f = figure2_scenario();
            write_mask(&f.gt, out.join("gt"))?;
            write_real(f.logits.grid(), out.join("pred"))?;
        }
        PhantomName::Random => {
            let &[nx, ny, nz] = shape else {
                return Err(CliError::usage("--shape needs three values nx,ny,nz"));
            };
            let shape = Shape::new(nx, ny, nz)?;
            let max_size = (nx.min(ny).min(nz) / 4).max(1);
            let spec = random_phantom(shape, Spacing::unit(), count, max_size, seed)?;
            let (gt, _) = build_phantom(&spec)?;
            write_mask(&gt, out.join("gt"))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_voronoi(gt: &Path, common: &CommonOpts) -> CliResult<i32> {
    let out = require_out(common)?;
    let mask = read_mask(gt)?;
    let lab = label_components(&mask);
    let part = voronoi_partition(&lab, common.distance.metric(mask.spacing()))?;
    // Region IDs are exact in f32 below 2^24.
    write_real(&part.region_of().map(|&r| r as f64), out)?;
    println!("{} regions", part.count());
    Ok(EXIT_OK)
}
