//! `phasemix`: simulate, analyze and report on phase-mixed photocurrent
//! records. Stages exchange dataset and report files only.
//!
//! Exit codes: 0 success, 1 statistical verdict "fail" (the run itself
//! succeeded), 2 invalid input or configuration, 3 failure while running.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use phasemix_core::analysis::{fit_phase_mixed_gaussian, infer_asymmetry, reconstruct_symmetric_covariance, ReportOptions};
use phasemix_core::io::{
    analyze_values, profile_from_header, read_dataset, render_text, run_pipeline, simulate_beams, simulate_scan,
    write_dataset, write_dataset_text, AnalysisSpec, Dataset, OutputFormat, RunConfig,
};
use phasemix_core::sim::rng::derive_seed;
use phasemix_core::state::ResonatorResponse;
use phasemix_core::Error;
use serde_json::json;

const EXIT_VERDICT_FAIL: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "phasemix", version, about = "Phase-mixed photocurrent simulation and Gaussianity analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured beams and write their datasets.
    Simulate(RunArgs),
    /// Simulate the configured setting sweep and write it as one dataset.
    Scan(RunArgs),
    /// Moment ratios, Gaussianity verdict and asymmetry for each setting of a dataset.
    Analyze(InputArgs),
    /// Phase-mixed Gaussian maximum-likelihood fit of a dataset.
    Fit(InputArgs),
    /// Recover (alpha, beta, gamma, delta) from a scan dataset.
    Reconstruct(InputArgs),
    /// Run the whole chain from a configuration and write the report bundle.
    Report(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Binary,
    Text,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Binary => OutputFormat::Binary,
            FormatArg::Text => OutputFormat::Text,
        }
    }
}

#[derive(Args, Clone)]
struct Overrides {
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Dataset file format.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Highest moment order analyzed (4 to 14).
    #[arg(long)]
    max_order: Option<u32>,
    /// Per-order significance threshold in standard errors.
    #[arg(long)]
    significance: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct InputArgs {
    /// Dataset file (binary or text).
    #[arg(long)]
    input: PathBuf,
    /// Optional configuration supplying the analysis options.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERDICT_FAIL),
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e
                .chain()
                .find_map(|c| c.downcast_ref::<Error>())
                .is_some_and(Error::is_validation)
                || e.downcast_ref::<UsageError>().is_some();
            ExitCode::from(if validation { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}

/// Bad command-line usage detected after parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn load_config(path: &Path, o: &Overrides) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &o.out_dir {
        cfg.output.dir = Some(dir.clone());
    }
    if let Some(f) = o.format {
        cfg.output.format = f.into();
    }
    apply_analysis_overrides(&mut cfg.analysis, o);
    cfg.validate()?;
    Ok(cfg)
}

fn apply_analysis_overrides(a: &mut AnalysisSpec, o: &Overrides) {
    if let Some(m) = o.max_order {
        a.max_order = m;
    }
    if let Some(s) = o.significance {
        a.significance = s;
    }
}

fn out_dir(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    match &cfg.output.dir {
        Some(d) => {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
            Ok(d.clone())
        }
        None => Err(UsageError("no output directory: pass --out-dir or set output.dir".into()).into()),
    }
}

fn write_ds(ds: &Dataset, dir: &Path, name: &str, format: OutputFormat) -> anyhow::Result<PathBuf> {
    let path = match format {
        OutputFormat::Binary => dir.join(format!("{name}.bin")),
        OutputFormat::Text => dir.join(format!("{name}.tsv")),
    };
    match format {
        OutputFormat::Binary => write_dataset(ds, &path)?,
        OutputFormat::Text => write_dataset_text(ds, &path)?,
    }
    Ok(path)
}

/// Writes `value` as `<dir>/<name>` or prints it when no directory is given.
fn emit(value: &serde_json::Value, dir: Option<&Path>, name: &str) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            let path = d.join(name);
            fs::write(&path, text)?;
            println!("{}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = load_config(&args.config, &args.overrides)?;
            let dir = out_dir(&cfg)?;
            for ds in simulate_beams(&cfg)? {
                let path = write_ds(&ds, &dir, &ds.header.beam, cfg.output.format)?;
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::Scan(args) => {
            let cfg = load_config(&args.config, &args.overrides)?;
            let dir = out_dir(&cfg)?;
            let Some(ds) = simulate_scan(&cfg)? else {
                bail!(UsageError("the configuration has no [scan] section".into()));
            };
            println!("{}", write_ds(&ds, &dir, "scan", cfg.output.format)?.display());
            Ok(true)
        }
        Command::Analyze(args) => analyze(&args),
        Command::Fit(args) => {
            let (ds, analysis, _) = load_input(&args)?;
            let fit = fit_phase_mixed_gaussian(ds.values(), &analysis.fit_options())?;
            let value = json!({
                "seed": ds.header.seed,
                "config_digest": ds.header.config_digest,
                "beam": ds.header.beam,
                "fit": fit,
            });
            emit(&value, args.overrides.out_dir.as_deref(), "fit.json")?;
            Ok(true)
        }
        Command::Reconstruct(args) => {
            let (ds, analysis, seed) = load_input(&args)?;
            let profile = profile_from_header(&ds.header)?;
            let rec = reconstruct_symmetric_covariance(
                &ds,
                profile.as_deref().map(|p| p as &dyn ResonatorResponse),
                analysis.bootstrap_rounds,
                derive_seed(seed, "reconstruct", 0),
            )?;
            let value = json!({
                "seed": seed,
                "config_digest": ds.header.config_digest,
                "beam": ds.header.beam,
                "reconstruction": rec,
            });
            emit(&value, args.overrides.out_dir.as_deref(), "reconstruction.json")?;
            Ok(true)
        }
        Command::Report(args) => {
            let cfg = load_config(&args.config, &args.overrides)?;
            let run = run_pipeline(&cfg, None)?;
            if run.files.is_empty() {
                print!("{}", render_text(&run.bundle));
            } else {
                for f in &run.files {
                    println!("{}", f.display());
                }
            }
            Ok(run.bundle.passed())
        }
    }
}

/// The dataset, the analysis options and the seed for input-driven commands.
fn load_input(args: &InputArgs) -> anyhow::Result<(Dataset, AnalysisSpec, u64)> {
    if !args.input.is_file() {
        bail!(UsageError(format!("no such dataset file: {}", args.input.display())));
    }
    let ds = read_dataset(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let mut analysis = match &args.config {
        Some(p) => RunConfig::from_path(p)?.analysis,
        None => AnalysisSpec::default(),
    };
    apply_analysis_overrides(&mut analysis, &args.overrides);
    // Validate the analysis options through a throwaway run configuration.
    let probe = RunConfig::from_toml_str("seed = 0\n[state]\nkind = \"vacuum\"\n[samples]\ncount = 100\n")?;
    RunConfig { analysis, ..probe }.validate()?;
    let seed = args.overrides.seed.unwrap_or(ds.header.seed);
    Ok((ds, analysis, seed))
}

fn analyze(args: &InputArgs) -> anyhow::Result<bool> {
    let (ds, analysis, seed) = load_input(args)?;
    let mut reports = Vec::new();
    let mut pass = true;
    for (i, (setting, group)) in ds.groups().enumerate() {
        let options = ReportOptions {
            seed: derive_seed(seed, "analysis", i as u64),
            ..analysis.report_options(seed, None)
        };
        let report = analyze_values(group, ds.header.background_variance, &options)?;
        let asymmetry = infer_asymmetry(&report, report.variance.value.sqrt());
        pass &= report.all_pass;
        reports.push(json!({
            "setting": setting,
            "background_variance": ds.header.background_variance,
            "gaussianity": report,
            "asymmetry": asymmetry,
        }));
    }
    let value = json!({
        "seed": seed,
        "config_digest": ds.header.config_digest,
        "beam": ds.header.beam,
        "technique": ds.header.technique,
        "pass": pass,
        "settings": reports,
    });
    emit(&value, args.overrides.out_dir.as_deref(), "analysis.json")?;
    Ok(pass)
}
