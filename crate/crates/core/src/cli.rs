//! Command-line front end: `separate`, `confidence`, `bootstrap-dataset`
//! and `evaluate`.
//!
//! Exit codes: 0 success, 1 user error, 2 partial corpus failure,
//! 3 internal error. Failures are reported on stderr as one JSON object.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::audio::{downmix, load_audio, save_audio, BitDepth};
use crate::bootstrap::{
    build_dataset, filter_by_confidence, quartile_boundaries, select_quartile, separate_corpus, CorpusOptions,
    DatasetOptions, SegmentParams, DEFAULT_DROP_FRACTION, SNIPPET_S, SNR_RANGE_DB,
};
use crate::confidence::{confidence_report, ConfidenceReport, DEFAULT_SAMPLES};
use crate::ensemble::{separate, SeparationResult, DEFAULT_BETA};
use crate::error::Error;
use crate::eval::{correlation_report, evaluate, MetricResult, Regression};
use crate::primitives::PrimitiveConfig;
use crate::tfr::write_msk1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "PRIMSEP_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfidenceSettings {
    pub samples: usize,
    pub seed: u64,
}

impl Default for ConfidenceSettings {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSettings {
    pub snr_range_db: (f64, f64),
    pub snippet_s: f64,
    pub drop_fraction: f64,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        Self {
            snr_range_db: SNR_RANGE_DB,
            snippet_s: SNIPPET_S,
            drop_fraction: DEFAULT_DROP_FRACTION,
        }
    }
}

/// Everything a run depends on besides its inputs. Loaded from the
/// `--config` TOML file, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub beta: f64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub primitives: PrimitiveConfig,
    pub confidence: ConfidenceSettings,
    pub segments: SegmentParams,
    pub dataset: DatasetSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            threads: 0,
            primitives: PrimitiveConfig::default(),
            confidence: ConfidenceSettings::default(),
            segments: SegmentParams::default(),
            dataset: DatasetSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> crate::Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::invalid(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be positive and finite, got {}", self.beta)));
        }
        if self.confidence.samples == 0 {
            return Err(Error::invalid("confidence samples must be at least 1"));
        }
        self.primitives.validate()?;
        self.segments.validate()?;
        let (lo, hi) = self.dataset.snr_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid(format!("bad SNR range [{lo}, {hi}]")));
        }
        if !(self.dataset.snippet_s > 0.0 && self.dataset.snippet_s <= self.segments.length_s) {
            return Err(Error::invalid(format!(
                "snippet length {} s must be positive and fit in a {} s segment",
                self.dataset.snippet_s, self.segments.length_s
            )));
        }
        if !(0.0..1.0).contains(&self.dataset.drop_fraction) {
            return Err(Error::invalid(format!(
                "drop fraction {} outside [0, 1)",
                self.dataset.drop_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "primsep", version, about = "Primitive-clustering vocal separation and dataset bootstrapping")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    /// Clustering hardness.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Seed for confidence sampling and dataset generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Silhouette sample size.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Separate one mixture into vocals and accompaniment.
    Separate(SeparateArgs),
    /// Print the confidence report of one mixture's separation.
    Confidence(ConfidenceArgs),
    /// Separate a corpus, filter by confidence and write remixed training data.
    BootstrapDataset(BootstrapArgs),
    /// Score estimates against references.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct SeparateArgs {
    input: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Also write every primitive mask and the clustered masks as MSK1 files.
    #[arg(long)]
    dump_masks: bool,
    #[arg(long, default_value = "float32", value_parser = parse_depth)]
    bit_depth: BitDepth,
}

#[derive(Debug, Args)]
struct ConfidenceArgs {
    input: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    /// Directory of WAV mixtures.
    corpus: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Number of remixes to generate.
    #[arg(long)]
    count: usize,
    /// Fraction of least confident estimates to drop.
    #[arg(long, conflicts_with = "quartile")]
    drop_fraction: Option<f64>,
    /// Use only one confidence quartile (Q1 = least confident).
    #[arg(long, value_parser = parse_quartile)]
    quartile: Option<u8>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Reference directory: one sub-directory per track holding
    /// vocals.wav and accompaniment.wav.
    #[arg(long, required_unless_present = "manifest")]
    refs: Option<PathBuf>,
    /// Estimate directory laid out like `--refs`, optionally with a
    /// confidence.json per track.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    estimates: Option<PathBuf>,
    /// JSON list of {track_id, source, reference, estimate, confidence?}.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

fn parse_depth(s: &str) -> Result<BitDepth, String> {
    match s {
        "16" => Ok(BitDepth::Int16),
        "24" => Ok(BitDepth::Int24),
        "float32" | "32f" => Ok(BitDepth::Float32),
        _ => Err(format!("bit depth must be 16, 24 or float32, got {s}")),
    }
}

fn parse_quartile(s: &str) -> Result<u8, String> {
    let digits = s.trim_start_matches(['Q', 'q']);
    match digits.parse::<u8>() {
        Ok(q @ 1..=4) => Ok(q),
        _ => Err(format!("quartile must be Q1..Q4, got {s}")),
    }
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    fn user(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USER,
            kind: "user",
            message: message.into(),
        }
    }

    fn json(&self) -> String {
        serde_json::json!({ "error": self.kind, "message": self.message, "exit_code": self.code }).to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let internal = matches!(
            e,
            Error::NonFinite(_) | Error::NotNormalized(_) | Error::ShapeMismatch { .. } | Error::Serde(_)
        );
        Self {
            code: if internal { EXIT_INTERNAL } else { EXIT_USER },
            kind: if internal { "internal" } else { "user" },
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<i32, Failure>;

fn resolve_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::from(Error::io(p, e)))?;
            RunConfig::from_toml_str(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(b) = cli.beta {
        cfg.beta = b;
    }
    if let Some(s) = cli.seed {
        cfg.confidence.seed = s;
    }
    if let Some(n) = cli.samples {
        cfg.confidence.samples = n;
    }
    if let Command::BootstrapDataset(b) = &cli.command {
        if let Some(d) = b.drop_fraction {
            cfg.dataset.drop_fraction = d;
        }
        if b.quartile.is_some() {
            cfg.dataset.drop_fraction = 0.0;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e).into())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    Ok(serde_json::to_string_pretty(v).map_err(Error::from)? + "\n")
}

fn separate_and_score(path: &Path, cfg: &RunConfig) -> Result<(SeparationResult, ConfidenceReport), Failure> {
    let clip = downmix(&load_audio(path)?);
    let result = separate(&clip, &cfg.primitives, cfg.beta)?;
    let report = confidence_report(
        &result.embedding,
        &result.clustering.assignment,
        &result.magnitude,
        cfg.confidence.samples,
        cfg.confidence.seed,
    )?;
    Ok((result, report))
}

fn cmd_separate(args: &SeparateArgs, cfg: &RunConfig) -> CmdResult {
    let (result, report) = separate_and_score(&args.input, cfg)?;
    create_dir(&args.out)?;
    for (clip, name) in [(&result.vocals, "vocals.wav"), (&result.accompaniment, "accompaniment.wav")] {
        let saved = save_audio(clip, args.out.join(name), args.bit_depth)?;
        if saved.clipped > 0 {
            log::warn!("{name}: {} samples clipped", saved.clipped);
        }
    }
    write_file(&args.out.join("confidence.json"), &to_json(&report)?)?;
    if args.dump_masks {
        let dir = args.out.join("masks");
        create_dir(&dir)?;
        for (p, m) in &result.primitive_masks {
            write_msk1(dir.join(format!("{}.msk1", p.name())), m.values())?;
        }
        write_msk1(dir.join("vocals.msk1"), result.clustering.vocals.values())?;
        write_msk1(dir.join("accompaniment.msk1"), result.clustering.accompaniment.values())?;
    }
    Ok(EXIT_OK)
}

fn cmd_confidence(args: &ConfidenceArgs, cfg: &RunConfig) -> CmdResult {
    let (_, report) = separate_and_score(&args.input, cfg)?;
    let json = to_json(&report)?;
    match &args.out {
        Some(p) => write_file(p, &json)?,
        None => print!("{json}"),
    }
    Ok(EXIT_OK)
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::from(Error::io(dir, e)))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Serialize)]
struct BootstrapSummary {
    files: usize,
    failed_files: Vec<crate::bootstrap::CorpusFailure>,
    pool_size: usize,
    dropped: usize,
    kept: usize,
    quartile: Option<u8>,
    confidence_quartiles: Option<[f64; 3]>,
    entries: usize,
    manifest: PathBuf,
}

fn cmd_bootstrap(args: &BootstrapArgs, cfg: &RunConfig) -> CmdResult {
    let files = wav_files(&args.corpus)?;
    if files.is_empty() {
        return Err(Failure::user(format!("no .wav files in {}", args.corpus.display())));
    }
    let opts = CorpusOptions {
        primitives: cfg.primitives.clone(),
        beta: cfg.beta,
        confidence_samples: cfg.confidence.samples,
        seed: cfg.confidence.seed,
        segments: cfg.segments,
    };
    let run = separate_corpus(&files, &opts, &args.out.join("estimates"))?;
    write_file(&args.out.join("estimates.json"), &to_json(&run)?)?;
    if run.estimates.is_empty() {
        return Err(Failure::user("no usable segments in corpus"));
    }
    let pool = match args.quartile {
        Some(q) => select_quartile(&run.estimates, q)?,
        None => filter_by_confidence(&run.estimates, cfg.dataset.drop_fraction)?,
    };
    let dataset = DatasetOptions {
        count: args.count,
        snr_range_db: cfg.dataset.snr_range_db,
        snippet_s: cfg.dataset.snippet_s,
        seed: cfg.confidence.seed,
        drop_fraction: cfg.dataset.drop_fraction,
        quartile: args.quartile,
    };
    let dir = args.out.join("dataset");
    let manifest = build_dataset(&pool, &dataset, &dir)?;
    let manifest_path = dir.join("manifest.json");
    write_file(&manifest_path, &manifest.to_json()?)?;
    let summary = BootstrapSummary {
        files: files.len(),
        failed_files: run.failures.clone(),
        pool_size: run.estimates.len(),
        dropped: run.estimates.len() - pool.len(),
        kept: pool.len(),
        quartile: args.quartile,
        confidence_quartiles: quartile_boundaries(&run.estimates),
        entries: manifest.entries.len(),
        manifest: manifest_path,
    };
    print!("{}", to_json(&summary)?);
    Ok(if run.failures.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

/// One reference/estimate pair to score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub track_id: String,
    pub source: String,
    pub reference: PathBuf,
    pub estimate: PathBuf,
    #[serde(default)]
    pub confidence: Option<f64>,
}

const SOURCES: [&str; 2] = ["vocals", "accompaniment"];

fn pairs_from_dirs(refs: &Path, ests: &Path) -> Result<Vec<EvalPair>, Failure> {
    let entries = std::fs::read_dir(refs).map_err(|e| Failure::from(Error::io(refs, e)))?;
    let mut tracks: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    tracks.sort();
    let mut pairs = Vec::new();
    for track in tracks {
        let conf_path = ests.join(&track).join("confidence.json");
        let confidence = match std::fs::read_to_string(&conf_path) {
            Ok(text) => {
                let report: ConfidenceReport = serde_json::from_str(&text)
                    .map_err(|e| Failure::user(format!("{}: {e}", conf_path.display())))?;
                Some(report.confidence)
            }
            Err(_) => None,
        };
        for source in SOURCES {
            pairs.push(EvalPair {
                track_id: track.clone(),
                source: source.into(),
                reference: refs.join(&track).join(format!("{source}.wav")),
                estimate: ests.join(&track).join(format!("{source}.wav")),
                confidence,
            });
        }
    }
    Ok(pairs)
}

#[derive(Debug, Serialize)]
struct EvalRow {
    track_id: String,
    #[serde(flatten)]
    metrics: MetricResult,
    confidence: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EvalFailure {
    track_id: String,
    source: String,
    error: String,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum RegressionOutcome {
    Fit(Regression),
    Unavailable { error: String, points: usize },
}

#[derive(Debug, Serialize)]
struct EvalReport {
    rows: Vec<EvalRow>,
    failures: Vec<EvalFailure>,
    /// Confidence-vs-SD-SDR regression per source, when confidences exist.
    regression: std::collections::BTreeMap<String, RegressionOutcome>,
}

fn score(pair: &EvalPair) -> crate::Result<MetricResult> {
    let r = downmix(&load_audio(&pair.reference)?);
    let e = downmix(&load_audio(&pair.estimate)?);
    evaluate(&pair.source, r.samples(), e.samples())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_evaluate(args: &EvaluateArgs, _cfg: &RunConfig) -> CmdResult {
    let pairs = match (&args.manifest, &args.refs, &args.estimates) {
        (Some(m), _, _) => {
            let text = std::fs::read_to_string(m).map_err(|e| Failure::from(Error::io(m, e)))?;
            serde_json::from_str::<Vec<EvalPair>>(&text).map_err(|e| Failure::user(format!("{}: {e}", m.display())))?
        }
        (None, Some(r), Some(e)) => pairs_from_dirs(r, e)?,
        _ => return Err(Failure::user("evaluate needs --manifest or both --refs and --estimates")),
    };
    if pairs.is_empty() {
        return Err(Failure::user("nothing to evaluate"));
    }
    use rayon::prelude::*;
    let results: Vec<crate::Result<MetricResult>> = pairs.par_iter().map(score).collect();
    let mut report = EvalReport {
        rows: Vec::new(),
        failures: Vec::new(),
        regression: Default::default(),
    };
    for (pair, r) in pairs.iter().zip(results) {
        match r {
            Ok(metrics) => report.rows.push(EvalRow {
                track_id: pair.track_id.clone(),
                metrics,
                confidence: pair.confidence,
            }),
            Err(e) => report.failures.push(EvalFailure {
                track_id: pair.track_id.clone(),
                source: pair.source.clone(),
                error: e.to_string(),
            }),
        }
    }
    let mut sources: Vec<&str> = report.rows.iter().map(|r| r.metrics.source.as_str()).collect();
    sources.sort();
    sources.dedup();
    for source in sources {
        let points: Vec<(f64, f64)> = report
            .rows
            .iter()
            .filter(|r| r.metrics.source == source)
            .filter_map(|r| r.confidence.map(|c| (c, r.metrics.sd_sdr_db.0)))
            .collect();
        if points.is_empty() {
            continue;
        }
        let outcome = match correlation_report(&points) {
            Ok(fit) => RegressionOutcome::Fit(fit),
            Err(e) => RegressionOutcome::Unavailable {
                error: e.to_string(),
                points: points.len(),
            },
        };
        report.regression.insert(source.to_string(), outcome);
    }

    create_dir(&args.out)?;
    let mut csv = String::from("track_id,source,sd_sdr_db,si_sdr_db,confidence\n");
    for r in &report.rows {
        let conf = r.confidence.map(|c| c.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{},{},{}",
            csv_field(&r.track_id),
            csv_field(&r.metrics.source),
            r.metrics.sd_sdr_db,
            r.metrics.si_sdr_db,
            conf
        )
        .expect("writing to a String");
    }
    write_file(&args.out.join("metrics.csv"), &csv)?;
    write_file(&args.out.join("metrics.json"), &to_json(&report)?)?;
    for f in &report.failures {
        log::error!("{} / {}: {}", f.track_id, f.source, f.error);
    }
    if report.failures.is_empty() {
        Ok(EXIT_OK)
    } else {
        let names: Vec<String> = report.failures.iter().map(|f| format!("{}/{}", f.track_id, f.source)).collect();
        eprintln!(
            "{}",
            serde_json::json!({
                "error": "partial",
                "message": format!("{} pair(s) failed: {}", names.len(), names.join(", ")),
                "failures": report.failures,
                "exit_code": EXIT_PARTIAL,
            })
        );
        Ok(EXIT_PARTIAL)
    }
}

fn dispatch(cli: &Cli) -> CmdResult {
    let cfg = resolve_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml_string());
        return Ok(EXIT_OK);
    }
    if cfg.threads > 0 {
        // Fails only if the global pool was already built, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    match &cli.command {
        Command::Separate(a) => cmd_separate(a, &cfg),
        Command::Confidence(a) => cmd_confidence(a, &cfg),
        Command::BootstrapDataset(a) => cmd_bootstrap(a, &cfg),
        Command::Evaluate(a) => cmd_evaluate(a, &cfg),
    }
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprintln!("{}", Failure::user(e.to_string().trim_end()).json());
            return EXIT_USER;
        }
    };
    match std::panic::catch_unwind(|| dispatch(&cli)) {
        Ok(Ok(code)) => code,
        Ok(Err(f)) => {
            eprintln!("{}", f.json());
            f.code
        }
        Err(_) => {
            let f = Failure {
                code: EXIT_INTERNAL,
                kind: "internal",
                message: "unexpected panic".into(),
            };
            eprintln!("{}", f.json());
            f.code
        }
    }
}

pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(std::env::args_os())
}
