use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use signal_decay::pipeline::{execute, Command, Manifest, PipelineConfig, StageStatus};
use signal_decay::similarity::SimilarityMethod;
use signal_decay::strata::StratumLevel;
use signal_decay::synth::{self, ScenarioConfig, SCENARIOS};
use signal_decay::tspm::Granularity;
use signal_decay::Error;

#[derive(Parser)]
#[command(name = "sigdecay", version, about = "Regional signal decay in dementia diagnosis coding")]
struct Cli {
    /// Worker threads; defaults to one per core. Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic cohort with known ground truth.
    Synth(SynthArgs),
    /// Per-code patient counts and per-state category shares.
    Frequencies(RunArgs),
    /// Mine event pairs and write the correlation matrices.
    Mine(RunArgs),
    /// Score every stratum against the national matrices.
    Similarity(RunArgs),
    /// Regress county scores on county covariates.
    Regress(RunArgs),
    /// Run every stage and write a manifest.
    Pipeline(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Built-in scenario name.
    #[arg(long, default_value = "uniform")]
    scenario: String,
    /// Scenario TOML file; overrides --scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = signal_decay::similarity::DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline TOML file. Flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding beneficiaries.csv, hospitalizations.csv and covariates.csv.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    beneficiaries: Option<PathBuf>,
    #[arg(long)]
    hospitalizations: Option<PathBuf>,
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Precomputed county scores for `regress`.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Replacement code table.
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// Read tab-separated inputs.
    #[arg(long)]
    tab_separated: bool,
    /// code17 or category5.
    #[arg(long)]
    granularity: Option<Granularity>,
    /// rs or 1-mad.
    #[arg(long)]
    method: Option<SimilarityMethod>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    skewers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    censor_threshold: Option<usize>,
    /// national, state, county or race.
    #[arg(long)]
    level: Option<StratumLevel>,
    #[arg(long)]
    min_age: Option<i32>,
    /// Fit without state fixed effects.
    #[arg(long)]
    no_fixed_effects: bool,
    /// Weight counties by patient count.
    #[arg(long)]
    weighted: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(self) -> Result<PipelineConfig, Error> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(dir) = &self.data {
            c = c.with_data_dir(dir);
        }
        macro_rules! set {
            ($($field:ident <- $flag:ident),*) => {$(
                if let Some(v) = self.$flag { c.$field = v; }
            )*};
        }
        set!(beneficiaries <- beneficiaries, hospitalizations <- hospitalizations,
             granularity <- granularity, method <- method, alpha <- alpha, n_skewers <- skewers,
             seed <- seed, censor_threshold <- censor_threshold, level <- level,
             min_age <- min_age, out <- out);
        if self.covariates.is_some() {
            c.covariates = self.covariates;
        }
        if self.scores.is_some() {
            c.scores = self.scores;
        }
        if self.codebook.is_some() {
            c.codebook = self.codebook;
        }
        c.tab_separated |= self.tab_separated;
        c.state_fixed_effects &= !self.no_fixed_effects;
        c.weight_by_patients |= self.weighted;
        Ok(c)
    }
}

fn synth(args: SynthArgs) -> Result<(), Error> {
    let config = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => synth::scenario(&args.scenario).ok_or_else(|| {
            Error::Config(format!(
                "unknown scenario '{}'; known scenarios: {}",
                args.scenario,
                SCENARIOS.join(", ")
            ))
        })?,
    };
    let files = synth::generate(&config, args.seed)?.write(&args.out)?;
    for path in [&files.beneficiaries, &files.hospitalizations, &files.covariates, &files.truth]
        .into_iter()
        .chain(&files.planted_scores)
    {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn report(manifest: &Manifest) {
    for stage in &manifest.stages {
        let status = match stage.status {
            StageStatus::Ok => "ok",
            StageStatus::Failed => "failed",
        };
        println!("{:<12} {status}", stage.name);
        for o in &stage.outputs {
            println!("  {} ({} rows)", o.file, o.rows);
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let (args, command) = match cli.command {
        Cmd::Synth(args) => return synth(args),
        Cmd::Frequencies(a) => (a, Command::Frequencies),
        Cmd::Mine(a) => (a, Command::Mine),
        Cmd::Similarity(a) => (a, Command::Similarity),
        Cmd::Regress(a) => (a, Command::Regress),
        Cmd::Pipeline(a) => (a, Command::Pipeline),
    };
    let manifest = execute(args.config()?, command)?;
    report(&manifest);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
