//! Command-line front end. Every subcommand writes into an output
//! directory and leaves the effective configuration next to its results.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::decomposition::StlConfig;
use crate::detectors::{write_events_csv, AdwinConfig, DdmConfig};
use crate::features::{extract_features, FEATURE_WIDTH};
use crate::forest::{kfold_evaluate, train, ForestConfig, ForestModel};
use crate::harness::{
    run_matrix, run_prequential_with_trace, write_matrix_csv, HarnessConfig, HarnessMode, RetrainAction,
};
use crate::ingest::{load_csv, Profile};
use crate::labeling::{label_series, LabeledSeries, LabelingConfig, AGING, NORMAL};
use crate::plot::render_svg;
use crate::report::RunReport;
use crate::scenarios::{
    generate_profile, profile_seed, reference_training_profile, standard_scenarios, ShiftSpec,
};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "agewatch", version, about = "Software aging detection under workload shift")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; absent keys keep their defaults
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides the `seed` key of the config
    #[arg(long, env = "AGEWATCH_SEED")]
    pub seed: Option<u64>,
    /// Output directory, created if missing
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label a raw memory CSV (elapsed_seconds,memory_used) by trend slope
    Label {
        input: PathBuf,
        /// Profile name recorded with the series
        #[arg(long, default_value = "low")]
        profile: String,
        /// Overrides labeling.warmup_seconds
        #[arg(long)]
        warmup_seconds: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a forest on a labeled CSV and cross-validate it
    Train {
        input: PathBuf,
        /// Overrides train.folds
        #[arg(long)]
        folds: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a shift scenario stream from a TOML spec or a built-in name
    Simulate {
        #[arg(required_unless_present = "standard", conflicts_with = "standard")]
        spec: Option<PathBuf>,
        /// One of the built-in scenarios, e.g. `sudden_low_high`
        #[arg(long)]
        standard: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Prequential run of one model over one labeled stream
    Run {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// static, ddm or adwin
        #[arg(long, default_value = "static")]
        mode: HarnessMode,
        /// Also draw plot.svg
        #[arg(long)]
        svg: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Every scenario under every mode
    Matrix {
        /// Scenario specs; the four built-in scenarios when omitted
        #[arg(long = "scenario")]
        scenarios: Vec<PathBuf>,
        /// Initial model; when omitted one is trained on a Low profile
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Print a metrics table for a report JSON written by train, run or matrix
    Report {
        input: PathBuf,
        /// Write the table here instead of stdout
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecompositionSettings {
    /// Seasonal period in samples.
    pub period: usize,
    pub stl: StlConfig,
}

impl Default for DecompositionSettings {
    fn default() -> Self {
        DecompositionSettings {
            period: 720,
            stl: StlConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSettings {
    pub window: usize,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        FeatureSettings {
            window: crate::features::DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub folds: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings { folds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessSettings {
    pub retrain_window: usize,
    pub segment_length: usize,
    pub ddm: DdmConfig,
    pub adwin: AdwinConfig,
}

impl Default for HarnessSettings {
    fn default() -> Self {
        let h = HarnessConfig::default();
        HarnessSettings {
            retrain_window: h.retrain_window,
            segment_length: h.segment_length,
            ddm: h.ddm,
            adwin: h.adwin,
        }
    }
}

/// Effective configuration of a command. `seed` replaces `forest.rng_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub labeling: LabelingConfig,
    pub decomposition: DecompositionSettings,
    pub features: FeatureSettings,
    pub forest: ForestConfig,
    pub train: TrainSettings,
    pub harness: HarnessSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            labeling: LabelingConfig::default(),
            decomposition: DecompositionSettings::default(),
            features: FeatureSettings::default(),
            forest: ForestConfig::default().with_seed(DEFAULT_SEED),
            train: TrainSettings::default(),
            harness: HarnessSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads the file (or defaults) and applies the seed override.
    pub fn resolve(common: &Common) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Self::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        cfg.forest.rng_seed = cfg.seed;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).context("serializing the effective config")
    }

    pub fn harness(&self, mode: HarnessMode) -> HarnessConfig {
        HarnessConfig {
            mode,
            retrain_window: self.harness.retrain_window,
            forest: self.forest.clone(),
            ddm: self.harness.ddm.clone(),
            adwin: self.harness.adwin.clone(),
            segment_length: self.harness.segment_length,
        }
    }
}

/// Layout of every report JSON: the effective config, the scenarios that
/// were generated (if any), and one report per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<ShiftSpec>,
    pub reports: Vec<RunReport>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Label {
            input,
            profile,
            warmup_seconds,
            common,
        } => cmd_label(&input, &profile, warmup_seconds, &common),
        Command::Train { input, folds, common } => cmd_train(&input, folds, &common),
        Command::Simulate { spec, standard, common } => cmd_simulate(spec.as_deref(), standard.as_deref(), &common),
        Command::Run {
            input,
            model,
            mode,
            svg,
            common,
        } => cmd_run(&input, &model, mode, svg, &common),
        Command::Matrix {
            scenarios,
            model,
            common,
        } => cmd_matrix(&scenarios, model.as_deref(), &common),
        Command::Report { input, out } => cmd_report(&input, out.as_deref()),
    }
}

fn prepare_out(common: &Common, cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    write_text(&common.out.join("config.toml"), &cfg.to_toml_string()?)?;
    Ok(common.out.clone())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn load_labeled(path: &Path) -> Result<LabeledSeries> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("stream");
    LabeledSeries::read_csv(file, Profile::Synthetic(name.to_string()))
        .with_context(|| format!("reading {}", path.display()))
}

pub fn cmd_label(input: &Path, profile: &str, warmup_seconds: Option<f64>, common: &Common) -> Result<()> {
    let mut cfg = RunConfig::resolve(common)?;
    if let Some(w) = warmup_seconds {
        cfg.labeling.warmup_seconds = w;
    }
    let profile: Profile = profile.parse().expect("infallible");
    let series = load_csv(input, profile).with_context(|| format!("reading {}", input.display()))?;
    let (labeled, decomposition) =
        label_series(&series, &cfg.labeling, cfg.decomposition.period, &cfg.decomposition.stl)?;
    let out = prepare_out(common, &cfg)?;
    let mut w = create(&out.join("labeled.csv"))?;
    labeled.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&out.join("decomposition.csv"))?;
    decomposition.write_csv(&mut w)?;
    w.flush()?;
    let aging = labeled.labels.iter().filter(|&&l| l == AGING).count();
    log::info!("labeled {} samples, {aging} aging", labeled.len());
    Ok(())
}

pub fn cmd_train(input: &Path, folds: Option<usize>, common: &Common) -> Result<()> {
    let mut cfg = RunConfig::resolve(common)?;
    if let Some(k) = folds {
        cfg.train.folds = k;
    }
    let series = load_labeled(input)?;
    for class in [NORMAL, AGING] {
        if !series.labels.contains(&class) {
            let name = if class == NORMAL { "Normal" } else { "Aging" };
            bail!("{} holds no {name} samples; training needs both classes", input.display());
        }
    }
    let rows = extract_features(&series, cfg.features.window)?;
    let mut kfold = kfold_evaluate(&rows, &cfg.forest, cfg.train.folds)?;
    kfold.name = input.display().to_string();
    let model = train(&rows, &cfg.forest)?;
    let out = prepare_out(common, &cfg)?;
    model.save(out.join("model.json"))?;
    write_json(
        &out.join("kfold.json"),
        &ReportFile {
            config: cfg,
            scenarios: Vec::new(),
            reports: vec![kfold],
        },
    )
}

pub fn cmd_simulate(spec: Option<&Path>, standard: Option<&str>, common: &Common) -> Result<()> {
    let cfg = RunConfig::resolve(common)?;
    let spec = match (spec, standard) {
        (Some(path), _) => {
            let mut spec = ShiftSpec::load(path).with_context(|| format!("loading {}", path.display()))?;
            if let Some(seed) = common.seed {
                spec.rng_seed = seed;
                for (i, p) in spec.profiles.iter_mut().enumerate() {
                    p.rng_seed = profile_seed(seed, i as u64 + 1);
                }
            }
            spec
        }
        (None, Some(name)) => standard_scenarios(cfg.seed)
            .into_iter()
            .find(|s| s.name == name)
            .with_context(|| {
                let names: Vec<String> = standard_scenarios(0).into_iter().map(|s| s.name).collect();
                format!("unknown scenario `{name}` (built-in: {})", names.join(", "))
            })?,
        (None, None) => bail!("give a scenario spec file or --standard NAME"),
    };
    let stream = spec.generate()?;
    let out = prepare_out(common, &cfg)?;
    write_text(&out.join("scenario.toml"), &spec.to_toml_string()?)?;
    let mut w = create(&out.join("scenario.csv"))?;
    stream.write_scenario_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn cmd_run(input: &Path, model_path: &Path, mode: HarnessMode, svg: bool, common: &Common) -> Result<()> {
    let cfg = RunConfig::resolve(common)?;
    let series = load_labeled(input)?;
    let rows = extract_features(&series, cfg.features.window)?;
    let model = ForestModel::load(model_path, FEATURE_WIDTH)
        .with_context(|| format!("loading {}", model_path.display()))?;
    let (mut report, trace) = run_prequential_with_trace(&rows, &model, &cfg.harness(mode))?;
    report.name = input.display().to_string();
    let out = prepare_out(common, &cfg)?;

    let mut w = create(&out.join("events.csv"))?;
    write_events_csv(&trace.detector_events, &mut w)?;
    w.flush()?;

    let mut w = create(&out.join("plotdata.csv"))?;
    writeln!(w, "step,sample_index,memory_used,label,prediction,model_version,retrain")?;
    let mut events = report.retrain_events.iter().peekable();
    for (step, row) in rows.iter().enumerate() {
        let mut retrain = "";
        while let Some(e) = events.next_if(|e| e.step == step) {
            retrain = match e.action {
                RetrainAction::Retrained => "retrained",
                RetrainAction::SkippedSingleClass => "skipped",
            };
        }
        writeln!(
            w,
            "{step},{},{},{},{},{},{retrain}",
            row.index, row.features[0], row.label, trace.predictions[step], trace.model_versions[step]
        )?;
    }
    w.flush()?;

    if svg {
        let memory: Vec<f64> = rows.iter().map(|r| r.features[0]).collect();
        let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
        let title = format!("{} ({mode})", report.name);
        write_text(
            &out.join("plot.svg"),
            &render_svg(&title, &memory, &labels, &report.retrain_events),
        )?;
    }
    log::info!("{mode}: f1 {:.4}, {} retrains", report.metrics.f1, report.retrain_count());
    write_json(
        &out.join("report.json"),
        &ReportFile {
            config: cfg,
            scenarios: Vec::new(),
            reports: vec![report],
        },
    )
}

/// Trains the reference static model on a Low profile derived from `cfg.seed`
/// and cross-validates it on the same rows.
pub fn reference_model(cfg: &RunConfig) -> Result<(ForestModel, RunReport)> {
    let spec = reference_training_profile(cfg.seed);
    let rows = extract_features(&generate_profile(&spec)?, cfg.features.window)?;
    let mut kfold = kfold_evaluate(&rows, &cfg.forest, cfg.train.folds)?;
    kfold.name = "low_in_distribution".into();
    Ok((train(&rows, &cfg.forest)?, kfold))
}

pub fn cmd_matrix(scenario_paths: &[PathBuf], model_path: Option<&Path>, common: &Common) -> Result<()> {
    let cfg = RunConfig::resolve(common)?;
    let scenarios = if scenario_paths.is_empty() {
        standard_scenarios(cfg.seed)
    } else {
        scenario_paths
            .iter()
            .map(|p| ShiftSpec::load(p).with_context(|| format!("loading {}", p.display())))
            .collect::<Result<_>>()?
    };
    let out = prepare_out(common, &cfg)?;
    let mut reports = Vec::new();
    let model = match model_path {
        Some(p) => ForestModel::load(p, FEATURE_WIDTH).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let (model, kfold) = reference_model(&cfg)?;
            model.save(out.join("model.json"))?;
            reports.push(kfold);
            model
        }
    };
    let runs = run_matrix(
        &scenarios,
        &HarnessMode::ALL,
        &model,
        &cfg.harness(HarnessMode::Static),
        cfg.features.window,
    )?;
    let mut w = create(&out.join("matrix.csv"))?;
    write_matrix_csv(&runs, &mut w)?;
    w.flush()?;
    reports.extend(runs);
    write_json(
        &out.join("matrix.json"),
        &ReportFile {
            config: cfg,
            scenarios,
            reports,
        },
    )
}

/// Markdown table with one line per report.
pub fn format_table(file: &ReportFile) -> String {
    let mut s = String::from("| run | mode | instances | accuracy | precision | recall | f1 | retrains | skipped |\n");
    s.push_str("|---|---|---:|---:|---:|---:|---:|---:|---:|\n");
    for r in &file.reports {
        let m = &r.metrics;
        s.push_str(&format!(
            "| {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {} | {} |\n",
            r.name,
            r.mode.as_str(),
            r.instances,
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            r.retrain_count(),
            r.retrain_events.len() - r.retrain_count()
        ));
    }
    s
}

pub fn cmd_report(input: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let file: ReportFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
    let table = format_table(&file);
    match out {
        Some(path) => write_text(path, &table),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}
