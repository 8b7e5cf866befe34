//! `tasksel`: run soft-constraint selection experiments from scenario files.
//!
//! Exit status is 0 on success, 2 when no feasible subset exists, and 1 on
//! any other error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use tasksel::mask::{MaskParseError, SubsetMask};
use tasksel::report::{
    run_compare, run_method, trajectory_csv_string, CompareError, CompareTable, Method, RunError,
    RunReport, RunSettings,
};
use tasksel::scenario::{load_scenario, DisturbanceLevel, Scenario, ScenarioError};

#[derive(Parser, Debug)]
#[command(name = "tasksel", version, about = "Soft task-constraint selection for CBF-QP controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Roll out the policy for a fixed mask.
    Rollout(Common),
    /// Greedy Lagrange-score dropping.
    Greedy(Common),
    /// Genetic search (one-shot, or receding with --receding).
    Ga(GaArgs),
    /// Try every mask.
    Exhaustive(Common),
    /// Grid reachability oracle.
    Reach(Common),
    /// Run several methods and summarize.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's disturbance level.
    #[arg(long)]
    level: Option<DisturbanceLevel>,
    #[arg(long)]
    seed: Option<u64>,
    /// Runs per seed for stochastic methods.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Final time step.
    #[arg(long)]
    horizon: Option<usize>,
    /// Mask for `rollout`, bit 0 first (e.g. 1011).
    #[arg(long)]
    mask: Option<String>,
    /// Write reports and trajectories here instead of printing the report.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Reach grid cells per axis.
    #[arg(long)]
    grid_res: Option<usize>,
    /// Receding replanning period in steps.
    #[arg(long)]
    replan_every: Option<usize>,
    /// Receding lookahead in steps.
    #[arg(long)]
    lookahead: Option<usize>,
}

#[derive(Args, Debug)]
struct GaArgs {
    #[command(flatten)]
    common: Common,
    /// Replan over a short lookahead while executing.
    #[arg(long)]
    receding: bool,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Methods to run, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "reach,exhaustive,greedy,ga,ga-receding")]
    methods: Vec<Method>,
    /// Number of consecutive base seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error("invalid mask: {0}")]
    Mask(#[from] MaskParseError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Run(e) if e.is_no_feasible_subset() => 2,
            _ => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Rollout(c) => single(&c, Method::Rollout),
        Command::Greedy(c) => single(&c, Method::Greedy),
        Command::Exhaustive(c) => single(&c, Method::Exhaustive),
        Command::Reach(c) => single(&c, Method::Reach),
        Command::Ga(g) => {
            let method = if g.receding {
                Method::GaReceding
            } else {
                Method::Ga
            };
            single(&g.common, method)
        }
        Command::Compare(c) => compare(&c),
    }
}

fn prepare(c: &Common) -> Result<(Scenario, RunSettings), CliError> {
    let mut scenario = load_scenario(&c.scenario)?;
    if let Some(level) = c.level {
        scenario = scenario.with_level(level);
    }
    let mut settings = RunSettings::for_scenario(&scenario);
    if let Some(h) = c.horizon {
        settings.set_horizon(h);
    }
    if let Some(seed) = c.seed {
        settings.seed = seed;
    }
    if let Some(r) = c.grid_res {
        settings.grid_resolution = r;
    }
    if let Some(r) = c.replan_every {
        settings.replan_every = r;
    }
    if let Some(l) = c.lookahead {
        settings.lookahead = l;
    }
    if let Some(m) = &c.mask {
        settings.mask = Some(SubsetMask::parse_len(m, scenario.num_soft())?);
    }
    if c.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    Ok((scenario, settings))
}

fn write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

fn stem(report: &RunReport) -> String {
    format!(
        "{}_{}_s{}_r{}",
        report.scenario, report.method, report.seed, report.repeat
    )
}

fn render(table: &CompareTable, format: Format) -> String {
    match format {
        Format::Json if table.rows.len() == 1 => table.rows[0].to_json() + "\n",
        Format::Json => table.to_json() + "\n",
        Format::Csv => table.rows_csv(),
    }
}

fn one_line(r: &RunReport) -> String {
    match (&r.metrics, &r.error) {
        (_, Some(e)) => format!("{} seed={}: error {}", r.method, r.seed, e.message),
        (Some(m), None) => format!(
            "{} seed={} mask={} arrived={} credited={} goal={} T'={}/{} evaluations={}+{}",
            r.method,
            r.seed,
            r.mask.as_ref().map(|m| m.to_string()).unwrap_or_default(),
            m.waypoints_arrived,
            r.credited_arrivals,
            m.goal_reached,
            m.feasible_horizon,
            m.steps,
            r.evaluations,
            r.extra_evaluations
        ),
        (None, None) => format!("{} seed={}", r.method, r.seed),
    }
}

fn single(c: &Common, method: Method) -> Result<(), CliError> {
    let (scenario, settings) = prepare(c)?;
    if c.repeats > 1 && method.is_stochastic() {
        let table = run_compare(&scenario, &[method], &[settings.seed], c.repeats, &settings)?;
        return emit_table(c, &scenario, &table);
    }
    let mut out = run_method(&scenario, method, &settings)?;
    match &c.out_dir {
        None => print!("{}", render(&CompareTable { rows: vec![out.report], summary: vec![] }, c.format)),
        Some(dir) => {
            ensure_dir(dir)?;
            let stem = stem(&out.report);
            let traj = format!("{stem}.csv");
            write(&dir.join(&traj), trajectory_csv_string(&scenario, &out.trace).as_bytes())?;
            out.report.trajectory = Some(traj);
            if let Some(grid) = &out.grid {
                write(&dir.join(format!("{stem}.grid")), &grid.to_bytes())?;
            }
            let table = CompareTable {
                rows: vec![out.report],
                summary: vec![],
            };
            let ext = match c.format {
                Format::Json => "json",
                Format::Csv => "report.csv",
            };
            write(&dir.join(format!("{stem}.{ext}")), render(&table, c.format).as_bytes())?;
            println!("{}", one_line(&table.rows[0]));
        }
    }
    Ok(())
}

fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let (scenario, settings) = prepare(&a.common)?;
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..a.seeds).map(|k| settings.seed.wrapping_add(k)).collect();
    let table = run_compare(&scenario, &a.methods, &seeds, a.common.repeats, &settings)?;
    emit_table(&a.common, &scenario, &table)
}

fn emit_table(c: &Common, scenario: &Scenario, table: &CompareTable) -> Result<(), CliError> {
    match &c.out_dir {
        None => print!("{}", render(table, c.format)),
        Some(dir) => {
            ensure_dir(dir)?;
            let ext = match c.format {
                Format::Json => "json",
                Format::Csv => "csv",
            };
            write(
                &dir.join(format!("{}_compare.{ext}", scenario.name)),
                render(table, c.format).as_bytes(),
            )?;
        }
    }
    eprint!("{}", table.render_summary(scenario.num_soft()));
    Ok(())
}
