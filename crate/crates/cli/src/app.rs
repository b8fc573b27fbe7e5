use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trajekt_core::survival::{Competing, Ties, WeightTemplate};
use trajekt_core::synth::{generate_cohort, SynthConfig};

use crate::config::{Overrides, PipelineConfig};
use crate::error::{CliError, CliResult, StageContext, EXIT_CONFIG, EXIT_OK};
use crate::seed::SEED_ENV;
use crate::stages::{Pipeline, Stage};

#[derive(Debug, Parser)]
#[command(name = "trajekt", version, about = "Disease-progression analytics on event-log data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Master seed; overrides TRAJEKT_SEED and the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub concepts: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub ties: Option<Ties>,
    #[arg(long, global = true)]
    pub weights: Option<WeightTemplate>,
    #[arg(long, global = true)]
    pub competing: Option<Competing>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Number of states; skips knee selection.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub bootstrap: Option<usize>,
    #[arg(long, global = true)]
    pub missing_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub knn_k: Option<usize>,
    #[arg(long, global = true)]
    pub softimpute_lambda: Option<f64>,
    /// Zero vectors for (person, day) pairs absent from external embeddings.
    #[arg(long, global = true)]
    pub allow_fallback: bool,
    /// Only warnings and errors on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// One transient state plus CKD and death, with planted DM and HTN effects.
    ThreeState,
    /// `--states` ordered states with forward and backward moves.
    Progressive,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the event log and concept configuration.
    Ingest,
    /// Build the AKI cohort and attrition report.
    Cohort,
    /// Cohort-wide covariate completion.
    Impute,
    /// Patient trajectory vectors.
    Featurize,
    /// K sweep, knee, final clustering and state characterization.
    Cluster,
    /// Transitions, Aalen-Johansen curves, terminal table and bootstrap bands.
    Msm,
    /// Weighted Cox risk-factor models per subpopulation.
    Cox,
    /// Report bundle from upstream artifacts.
    Report,
    /// Several stages in order; all of them by default.
    Run {
        #[arg(long, value_delimiter = ',')]
        stages: Vec<String>,
    },
    /// Write a synthetic cohort with planted ground truth.
    Simulate {
        #[arg(long, value_enum, default_value = "progressive")]
        preset: Preset,
        #[arg(long, default_value_t = 15)]
        states: usize,
        #[arg(long, default_value_t = 1000)]
        patients: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            input_dir: self.input.clone(),
            concepts: self.concepts.clone(),
            output_dir: self.output.clone(),
            ties: self.ties,
            weights: self.weights,
            competing: self.competing,
            alpha: self.alpha,
            k: self.k,
            bootstrap: self.bootstrap,
            missing_threshold: self.missing_threshold,
            knn_k: self.knn_k,
            softimpute_lambda: self.softimpute_lambda,
            allow_fallback: self.allow_fallback,
        }
    }
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok().filter(|s| !s.trim().is_empty())
}

pub fn execute(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.global.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        // fails only if a pool already exists, as in repeated in-process calls
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let stages: Vec<Stage> = match &cli.command {
        Command::Simulate { preset, states, patients, out } => {
            let seed = match (cli.global.seed, env_seed()) {
                (Some(s), _) => s,
                (None, Some(s)) => s
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?,
                (None, None) => 0,
            };
            let cfg = match preset {
                Preset::ThreeState => SynthConfig::three_state(*patients),
                Preset::Progressive => SynthConfig::progressive(*states, *patients),
            };
            let cohort = generate_cohort(&cfg, seed).stage("simulate")?;
            cohort.write(out).stage("simulate")?;
            log::info!("simulate: {patients} patients written to {}", out.display());
            return Ok(());
        }
        Command::Ingest => vec![Stage::Ingest],
        Command::Cohort => vec![Stage::Cohort],
        Command::Impute => vec![Stage::Impute],
        Command::Featurize => vec![Stage::Featurize],
        Command::Cluster => vec![Stage::Cluster],
        Command::Msm => vec![Stage::Msm],
        Command::Cox => vec![Stage::Cox],
        Command::Report => vec![Stage::Report],
        Command::Run { stages } if stages.is_empty() => Stage::ALL.to_vec(),
        Command::Run { stages } => stages.iter().map(|s| s.parse()).collect::<CliResult<_>>()?,
    };
    let cfg = PipelineConfig::resolve(cli.global.config.as_deref(), env_seed(), &cli.global.overrides())?;
    Pipeline::new(cfg)?.run(&stages)
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let level = if cli.global.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_parse_into_overrides() {
        let cli = Cli::try_parse_from(["trajekt", "cox", "--ties", "breslow", "--competing", "exclude_deaths", "--k", "7"]).unwrap();
        let o = cli.global.overrides();
        assert_eq!(o.ties, Some(Ties::Breslow));
        assert_eq!(o.competing, Some(Competing::ExcludeDeaths));
        assert_eq!(o.k, Some(7));
        assert!(Cli::try_parse_from(["trajekt", "cox", "--ties", "exact"]).is_err());
    }

    #[test]
    fn unknown_stage_is_a_config_error() {
        let cli = Cli::try_parse_from(["trajekt", "run", "--stages", "ingest,bogus"]).unwrap();
        assert!(matches!(execute(cli), Err(CliError::Config(_))));
    }
}
