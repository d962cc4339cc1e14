use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ricesim_core::engine::{run_episode_observed, EpisodeLog};
use ricesim_core::experiments::{run_experiment1, run_experiment2, ExperimentSettings};
use ricesim_core::policy::{train_cem, FixedRates, LinearPolicy, PolicyFile};
use ricesim_core::report::{plot_data, read_report, render_tables, write_report, ReportFormat};
use ricesim_core::{Error, Model, PolicyAssignment, PolicySpec, Result, RunOptions, SimConfig};

#[derive(Parser)]
#[command(name = "ricesim", version, about = "Multi-region climate-economy simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one episode with a scripted or stored policy.
    Run(RunArgs),
    /// Train a linear policy with the cross-entropy method.
    Train(TrainArgs),
    /// Negotiation against no negotiation, trained from scratch per seed.
    Exp1(ExpArgs),
    /// The 8 x 9 labor/technology perturbation grid.
    Exp2(ExpArgs),
    /// Render tables from a stored result, or convert between formats.
    Report(ReportArgs),
    /// Time full episodes at several region counts.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct Common {
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Negotiation stage; defaults to the config setting.
    #[arg(long, value_enum)]
    nego: Option<Toggle>,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stream one JSON record per step to stdout.
    #[arg(long)]
    verbose: bool,
}

impl Common {
    fn config(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(p) => SimConfig::load(p)?,
            None => SimConfig::default(),
        };
        if let Some(t) = self.nego {
            cfg.negotiation_on = matches!(t, Toggle::On);
        }
        Ok(cfg)
    }

    fn seed(&self, cfg: &SimConfig) -> u64 {
        self.seed.or_else(|| cfg.seeds.first().copied()).unwrap_or(0)
    }

    fn options(&self, cfg: &SimConfig) -> RunOptions {
        RunOptions {
            negotiation_on: cfg.negotiation_on,
            verbose: self.verbose,
            quantize_levels: cfg.quantize_levels,
            episode: 0,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScriptedPolicy {
    Zero,
    Fixed,
    Random,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "zero")]
    policy: ScriptedPolicy,
    /// Stored policy file; overrides --policy.
    #[arg(long)]
    policy_file: Option<PathBuf>,
    /// Savings rate of the fixed policy.
    #[arg(long, default_value_t = 0.2)]
    savings: f64,
    /// Mitigation rate of the fixed policy.
    #[arg(long, default_value_t = 0.0)]
    mitigation: f64,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
}

impl BudgetArgs {
    fn apply(&self, cfg: &mut SimConfig) {
        if let Some(i) = self.iterations {
            cfg.training.iterations = i;
        }
        if let Some(p) = self.population {
            cfg.training.population = p;
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct ExpArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Comma-separated seeds; overrides --seed and the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Stored result.
    #[arg(long = "in")]
    input: PathBuf,
    /// Format of --out; inferred from its extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write plot-ready CSV here.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Region counts to time.
    #[arg(long, value_delimiter = ',', default_values_t = vec![27, 200])]
    regions: Vec<usize>,
    /// Episodes per region count.
    #[arg(long, default_value_t = 20)]
    episodes: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(a) => run(a),
        Command::Train(a) => train(a),
        Command::Exp1(a) => experiment(a, false),
        Command::Exp2(a) => experiment(a, true),
        Command::Report(a) => report(a),
        Command::Bench(a) => bench(a),
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_policy(path: &Path) -> Result<PolicyAssignment> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let file: PolicyFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    PolicyAssignment::from_file(&file)
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = a.common.config()?;
    let model = cfg.model()?;
    let seed = a.common.seed(&cfg);
    let policy = match &a.policy_file {
        Some(p) => load_policy(p)?,
        None => PolicyAssignment::Shared(match a.policy {
            ScriptedPolicy::Zero => PolicySpec::Zero,
            ScriptedPolicy::Fixed => PolicySpec::Fixed(FixedRates::rates(a.savings, a.mitigation)),
            ScriptedPolicy::Random => PolicySpec::Random { seed },
        }),
    };
    let options = a.common.options(&cfg);
    let stdout = std::io::stdout();
    let log = run_episode_observed(&model, &policy, seed, &options, |record, round| {
        if options.verbose {
            let line = serde_json::json!({ "record": record, "negotiation": round });
            let _ = writeln!(stdout.lock(), "{line}");
        }
    })?;
    if let Some(out) = &a.common.out {
        write_json(&log, out)?;
    }
    print_summary(&log);
    Ok(())
}

fn print_summary(log: &EpisodeLog) {
    if let Some(s) = &log.summary {
        eprintln!(
            "collective reward {:.4}, temperature increase {:.4} °C over {} steps",
            s.collective_reward, s.temperature_increase, log.num_steps
        );
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = a.common.config()?;
    a.budget.apply(&mut cfg);
    let model = cfg.model()?;
    let template = PolicyAssignment::Shared(PolicySpec::LinearCem(LinearPolicy::zeros()));
    let out = train_cem(
        &model,
        &template,
        &cfg.training,
        a.common.seed(&cfg),
        &a.common.options(&cfg),
    )?;
    eprintln!(
        "fitness {:.6} -> {:.6} after {} iterations",
        out.initial_fitness,
        out.best_fitness,
        out.history.len()
    );
    let path = a.common.out.unwrap_or_else(|| cfg.output.dir.join("policy.json"));
    ensure_parent(&path)?;
    write_json(&out.policy.to_file(), &path)?;
    eprintln!("policy written to {}", path.display());
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn experiment(a: ExpArgs, grid: bool) -> Result<()> {
    let mut cfg = a.common.config()?;
    a.budget.apply(&mut cfg);
    if !a.seeds.is_empty() {
        cfg.seeds = a.seeds.clone();
    } else if let Some(s) = a.common.seed {
        cfg.seeds = vec![s];
    }
    let settings = ExperimentSettings::from_config(&cfg)?;
    let result = if grid {
        run_experiment2(&settings)?
    } else {
        run_experiment1(&settings)?
    };
    let default_name = if grid { "exp2.json" } else { "exp1.json" };
    let path = a.common.out.unwrap_or_else(|| cfg.output.dir.join(default_name));
    let format = a.format.map_or_else(|| ReportFormat::from_path(&path), Into::into);
    ensure_parent(&path)?;
    write_report(&result, format, &path)?;
    print!("{}", render_tables(&result)?);
    eprintln!("result written to {}", path.display());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let result = read_report(&a.input, ReportFormat::from_path(&a.input))?;
    print!("{}", render_tables(&result)?);
    if let Some(out) = &a.common.out {
        let format = a.format.map_or_else(|| ReportFormat::from_path(out), Into::into);
        write_report(&result, format, out)?;
    }
    if let Some(plot) = &a.plot {
        std::fs::write(plot, plot_data(&result)).map_err(|e| Error::Io {
            path: plot.clone(),
            source: e,
        })?;
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.episodes == 0 {
        return Err(Error::InvalidArgument("--episodes must be positive".into()));
    }
    let cfg = a.common.config()?;
    let seed = a.common.seed(&cfg);
    let mut lines = Vec::new();
    for &n in &a.regions {
        let model = Model::tiled(n)?;
        let policy = PolicyAssignment::Shared(PolicySpec::Fixed(FixedRates::rates(0.25, 0.3)));
        let options = RunOptions::negotiation(cfg.negotiation_on);
        // warm-up
        ricesim_core::engine::run_episode(&model, &policy, seed, &options)?;
        let started = Instant::now();
        for k in 0..a.episodes {
            ricesim_core::engine::run_episode(&model, &policy, seed.wrapping_add(k as u64), &options)?;
        }
        let ms = started.elapsed().as_secs_f64() * 1e3 / a.episodes as f64;
        let line = format!("regions={n} episodes={} ms_per_episode={ms:.3}", a.episodes);
        println!("{line}");
        lines.push(serde_json::json!({ "regions": n, "episodes": a.episodes, "ms_per_episode": ms }));
    }
    if let Some(out) = &a.common.out {
        write_json(&lines, out)?;
    }
    Ok(())
}
