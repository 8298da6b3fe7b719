use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use dqlab::data::Dataset;
use dqlab::envs::{generate_dataset, BeerGame, Behavior, Environment, Recommender, TabularMdp};
use dqlab::harness::{self, Check, ExperimentConfig, ExperimentKind, HarnessError, RunManifest, Table};
use dqlab::qlearn::{
    dqn_train, fitted_q_iteration, write_curve_csv, DqnConfig, FqiConfig, HypothesisSpace, InputMode, LinearBasis,
};
use dqlab::rng::RngContract;

#[derive(Parser, Debug)]
#[command(name = "dqlab", version, about = "Finite-horizon deep Q-learning experiments")]
struct Cli {
    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for rollouts and grid cells.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify the constructive approximation nets.
    Approx,
    /// Evaluate the generalization bounds.
    Bounds,
    /// Sample a dataset of trajectories under uniform behavior.
    GenData {
        #[arg(long, value_enum, default_value_t = EnvKind::Tabular)]
        env: EnvKind,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
    },
    /// Batch fitted-Q iteration on a dataset file.
    FitQ {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = SpaceKind::Tabular)]
        space: SpaceKind,
        /// Cells per state axis for the tabular space.
        #[arg(long, default_value_t = 4)]
        bins: usize,
        /// Hidden layers of the deep space.
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        /// Condition on the whole history instead of the current state.
        #[arg(long)]
        history: bool,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Train one DQN learner.
    Dqn {
        #[arg(long, value_enum, default_value_t = OnlineEnv::Beer)]
        env: OnlineEnv,
        #[arg(long, default_value_t = 3)]
        depth: usize,
    },
    /// Run a study grid.
    Study {
        #[arg(value_enum)]
        which: StudyKind,
    },
    /// Re-derive acceptance checks from an output directory.
    Report {
        /// Run directory; defaults to --out.
        dir: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EnvKind {
    Tabular,
    Beer,
    Recsys,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OnlineEnv {
    Beer,
    Recsys,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SpaceKind {
    Tabular,
    Linear,
    Shallow,
    Deep,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StudyKind {
    Depth,
    Reward,
    Datasize,
    Recsys,
}

impl StudyKind {
    fn kind(self) -> ExperimentKind {
        match self {
            Self::Depth => ExperimentKind::DepthSweep,
            Self::Reward => ExperimentKind::RewardCompare,
            Self::Datasize => ExperimentKind::DataSize,
            Self::Recsys => ExperimentKind::Recommender,
        }
    }
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let config = e.chain().any(|c| c.downcast_ref::<HarnessError>().is_some_and(HarnessError::is_config));
        if config {
            Failure::Config(e)
        } else {
            Failure::Run(e)
        }
    }
}

fn config_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

/// Loads the experiment file, or the kind's defaults without one. A file
/// without `kind` takes the one implied by the command.
fn load_config(cli: &Cli, kind: ExperimentKind) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        None => ExperimentConfig::new(kind),
        Some(path) => ExperimentConfig::load_as(path, Some(kind)).map_err(config_error)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(config_error)?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn print_checks(checks: &[Check]) -> bool {
    for c in checks {
        println!("{}", c.line());
    }
    harness::all_pass(checks)
}

fn run_experiment(cli: &Cli, kind: ExperimentKind) -> Result<bool, Failure> {
    let cfg = load_config(cli, kind)?;
    if cfg.kind != kind {
        return Err(config_error(anyhow!(
            "config file describes a {} run, not {}",
            cfg.kind.label(),
            kind.label()
        )));
    }
    let dir = out_dir(cli, Some(&cfg));
    let manifest = harness::run(&cfg, &dir)?;
    for f in &manifest.failures {
        eprintln!("cell {} seed {} failed: {}", f.cell, f.seed, f.error);
    }
    println!("wrote {} outputs to {}", manifest.outputs.len(), dir.display());
    let checks = harness::report(&dir)?;
    let ok = print_checks(&checks);
    // only approx runs gate the exit code on their checks
    Ok(ok || kind != ExperimentKind::ApproxCertify)
}

fn gen_data(cli: &Cli, env: EnvKind, episodes: usize) -> Result<bool, Failure> {
    let seed = cli.seed.unwrap_or(0);
    let rng = RngContract::new(seed);
    let data = match env {
        EnvKind::Tabular => generate_dataset(&TabularMdp::benchmark(seed), &Behavior::Uniform, episodes, &rng),
        EnvKind::Beer => {
            let cfg = load_config(cli, ExperimentKind::DepthSweep)?;
            let game = BeerGame::new(cfg.beer_config().map_err(config_error)?).map_err(config_error)?;
            generate_dataset(&game, &Behavior::Uniform, episodes, &rng)
        }
        EnvKind::Recsys => {
            let cfg = load_config(cli, ExperimentKind::Recommender)?;
            let rec = Recommender::new(cfg.recsys_config().map_err(config_error)?).map_err(config_error)?;
            generate_dataset(&rec, &Behavior::Uniform, episodes, &rng)
        }
    }
    .map_err(HarnessError::from)?;
    let dir = out_dir(cli, None);
    std::fs::create_dir_all(&dir).context("creating output directory")?;
    let path = dir.join("dataset.jsonl");
    let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    data.write_jsonl(std::io::BufWriter::new(file)).context("writing dataset")?;
    let desc = format!("command = \"gen-data\"\nenv = \"{env:?}\"\nepisodes = {episodes}\n");
    let mut manifest = RunManifest::for_command("gen-data", desc, seed, vec![seed]);
    manifest.record(&dir, "dataset.jsonl", "dataset_jsonl/v1", data.len()).context("hashing dataset")?;
    manifest.write(&dir).context("writing manifest")?;
    println!("wrote {} trajectories of {} to {}", data.len(), data.provenance.environment, path.display());
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn fit_q(
    cli: &Cli,
    data: &Path,
    space: SpaceKind,
    bins: usize,
    depth: usize,
    width: usize,
    history: bool,
    iterations: Option<usize>,
) -> Result<bool, Failure> {
    let seed = cli.seed.unwrap_or(0);
    let file = std::fs::File::open(data).with_context(|| format!("opening {}", data.display())).map_err(config_error)?;
    let dataset = Dataset::read_jsonl(std::io::BufReader::new(file)).context("reading dataset").map_err(config_error)?;
    let space = match space {
        SpaceKind::Tabular => HypothesisSpace::Tabular { bins },
        SpaceKind::Linear => HypothesisSpace::Linear { basis: LinearBasis::PerActionAffine },
        SpaceKind::Shallow => HypothesisSpace::Shallow { width },
        SpaceKind::Deep => HypothesisSpace::Deep { widths: vec![width; depth.max(2)] },
    };
    let mut trainer = FqiConfig::default().trainer;
    if let Some(it) = iterations {
        trainer.iterations = it;
    }
    let mode = if history { InputMode::History } else { InputMode::Markov };
    let cfg = FqiConfig { mode, trainer };
    let out = fitted_q_iteration(&dataset, std::slice::from_ref(&space), &cfg, &RngContract::new(seed)).map_err(HarnessError::from)?;
    let dir = out_dir(cli, None);
    std::fs::create_dir_all(&dir).context("creating output directory")?;
    let policy_path = dir.join("policy.json");
    std::fs::write(&policy_path, out.policy.to_json()).context("writing policy")?;
    let mut fits = Table::new("stage_fits.csv", "stage_fits/v1", &["stage", "samples", "train_loss"]);
    for f in &out.fits {
        fits.push(vec![f.stage.to_string(), f.samples.to_string(), f.train_loss.to_string()]);
    }
    let desc = format!(
        "command = \"fit-q\"\ndata = \"{}\"\nspace = \"{}\"\nmode = \"{mode:?}\"\ntrainer_iterations = {}\n",
        data.display(),
        space.label(),
        cfg.trainer.iterations
    );
    let mut manifest = RunManifest::for_command("fit-q", desc, seed, vec![seed]);
    fits.write(&dir, &mut manifest).context("writing stage fits")?;
    manifest.record(&dir, "policy.json", "policy_json/v1", out.policy.horizon()).context("hashing policy")?;
    manifest.write(&dir).context("writing manifest")?;
    println!("fitted {} stages with {}; policy in {}", out.fits.len(), space.label(), policy_path.display());
    Ok(true)
}

fn dqn(cli: &Cli, env: OnlineEnv, depth: usize) -> Result<bool, Failure> {
    if depth == 0 {
        return Err(config_error(anyhow!("depth must be positive")));
    }
    let kind = match env {
        OnlineEnv::Beer => ExperimentKind::DepthSweep,
        OnlineEnv::Recsys => ExperimentKind::Recommender,
    };
    let cfg = load_config(cli, kind)?;
    let study = cfg.study_config().map_err(config_error)?;
    let base = cfg.dqn_config().map_err(config_error)?;
    let dir = out_dir(cli, Some(&cfg));
    std::fs::create_dir_all(&dir).context("creating output directory")?;
    let rng = RngContract::new(cfg.seed);
    fn train<E: Environment>(env: &E, base: &DqnConfig, depth: usize, study: &harness::StudyConfig, rng: &RngContract) -> Result<dqlab::qlearn::DqnOutcome, Failure> {
        let input = env.spec().state_dims[0] + env.spec().action_dims[0];
        let cfg = DqnConfig { widths: harness::widths_for(depth, input, study), ..base.clone() };
        Ok(dqn_train(env, &cfg, rng).map_err(HarnessError::from)?)
    }
    let out = match env {
        OnlineEnv::Beer => {
            let game = BeerGame::new(cfg.beer_config().map_err(config_error)?).map_err(config_error)?;
            train(&game, &base, depth, &study, &rng)?
        }
        OnlineEnv::Recsys => {
            let rec = Recommender::new(cfg.recsys_config().map_err(config_error)?).map_err(config_error)?;
            train(&rec, &base, depth, &study, &rng)?
        }
    };
    let curve_path = dir.join("dqn_curve.csv");
    let file = std::fs::File::create(&curve_path).with_context(|| format!("creating {}", curve_path.display()))?;
    write_curve_csv(&out.curve, cfg.seed, file).context("writing curve")?;
    std::fs::write(dir.join("dqn_net.json"), out.net.to_json()).context("writing network")?;
    let desc = format!("command = \"dqn\"\ndepth = {depth}\n{}", cfg.to_toml());
    let mut manifest = RunManifest::for_command("dqn", desc, cfg.seed, vec![cfg.seed]);
    manifest.record(&dir, "dqn_curve.csv", "dqn_curve/v1", out.curve.len()).context("hashing curve")?;
    manifest.record(&dir, "dqn_net.json", "relu_net_json/v1", 1).context("hashing network")?;
    manifest.write(&dir).context("writing manifest")?;
    if let Some(last) = out.curve.last() {
        println!(
            "iteration {}: eval score {:.3} +- {:.3}, {} samples consumed",
            last.iteration, last.eval_score, last.eval_stderr, out.samples_consumed
        );
    }
    Ok(true)
}

fn dispatch(cli: &Cli) -> Result<bool, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config_error(anyhow!("--threads must be positive")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
    }
    match &cli.command {
        Command::Approx => run_experiment(cli, ExperimentKind::ApproxCertify),
        Command::Bounds => run_experiment(cli, ExperimentKind::Bounds),
        Command::GenData { env, episodes } => gen_data(cli, *env, *episodes),
        Command::FitQ { data, space, bins, depth, width, history, iterations } => {
            fit_q(cli, data, *space, *bins, *depth, *width, *history, *iterations)
        }
        Command::Dqn { env, depth } => dqn(cli, *env, *depth),
        Command::Study { which } => run_experiment(cli, which.kind()),
        Command::Report { dir } => {
            let dir = dir.clone().unwrap_or_else(|| out_dir(cli, None));
            let checks = harness::report(&dir)?;
            let ok = print_checks(&checks);
            let table = harness::checks_table(&checks);
            std::fs::write(dir.join(&table.file), table.to_bytes().map_err(|e| Failure::Run(e.into()))?)
                .context("writing report")?;
            Ok(ok)
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
