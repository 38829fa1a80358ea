//! Command-line front end for the arinfer library.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use arinfer::baselines::{asymptotic_ls_ci, df_null_quantiles, NullQuantileTable};
use arinfer::estimation::EstimatorSpec;
use arinfer::experiments::{
    emit_ci_pairs, run_ci_study, run_sequential_demo, run_unit_root_study, run_unit_root_study_with_table,
    stream_series, StudyConfig, DEFAULT_SEED, WORKERS_ENV,
};
use arinfer::model::{simulate, Family, InitPolicy, ParamDomain, TimeSeries};
use arinfer::region::ScanConfig;
use arinfer::sequential::EProcessState;
use arinfer::split::{split_region, test_statistic, NullSpec, SplitConfig};
use arinfer::Error;

#[derive(Parser, Debug)]
#[command(name = "arinfer", version, about = "Finite-sample and anytime-valid inference for AR(1) models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a trajectory and print one value per line.
    Simulate(SimulateArgs),
    /// Split-ratio confidence region and LS interval for a series file.
    Ci(CiArgs),
    /// Split-ratio test of a simple or interval null for a series file.
    Test(TestArgs),
    /// Stream a series through the e-process and print per-step CSV.
    Sequential(SequentialArgs),
    /// Simulate a Dickey-Fuller normalized-bias null quantile table.
    DfTable(DfTableArgs),
    /// Rerun one of the reference studies.
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Normal,
    Cauchy,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Normal => Family::Normal,
            FamilyArg::Cauchy => Family::Cauchy,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EstimatorArg {
    Ls,
    Mle,
}

impl From<EstimatorArg> for EstimatorSpec {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Ls => EstimatorSpec::LeastSquares,
            EstimatorArg::Mle => EstimatorSpec::mle(),
        }
    }
}

fn parse_init(s: &str) -> Result<InitPolicy, String> {
    match s.split_once(':') {
        None if s == "stationary" => Ok(InitPolicy::Stationary),
        Some(("fixed", v)) => v.parse().map(InitPolicy::Fixed).map_err(|e| format!("{e}")),
        Some(("burnin", v)) => v.parse().map(InitPolicy::BurnIn).map_err(|e| format!("{e}")),
        _ => Err(format!("expected stationary, fixed:<x0> or burnin:<n>, got {s:?}")),
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "normal")]
    family: FamilyArg,
    #[arg(long)]
    theta: f64,
    #[arg(short = 'T', long = "len")]
    t_len: usize,
    /// stationary, fixed:<x0> or burnin:<n>; defaults to stationary for |theta| < 1 and fixed:0 otherwise.
    #[arg(long, value_parser = parse_init)]
    init: Option<InitPolicy>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SeriesArgs {
    /// One value per line; `#` starts a comment.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "normal")]
    family: FamilyArg,
    /// Last index of the estimation block; defaults to floor(T/2).
    #[arg(long)]
    t1: Option<usize>,
    #[arg(long, value_enum, default_value = "ls")]
    estimator: EstimatorArg,
}

#[derive(Args, Debug)]
struct CiArgs {
    #[command(flatten)]
    series: SeriesArgs,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
}

#[derive(Args, Debug)]
struct NullArgs {
    /// Simple null value.
    #[arg(long, conflicts_with_all = ["null_lo", "null_hi"])]
    null_theta: Option<f64>,
    /// Lower end of an interval null.
    #[arg(long, requires = "null_hi")]
    null_lo: Option<f64>,
    /// Upper end of an interval null.
    #[arg(long, requires = "null_lo")]
    null_hi: Option<f64>,
}

impl NullArgs {
    fn spec(&self) -> Result<NullSpec, Error> {
        match (self.null_theta, self.null_lo, self.null_hi) {
            (Some(t), _, _) => Ok(NullSpec::Simple(t)),
            (None, Some(lo), Some(hi)) => Ok(NullSpec::Composite(ParamDomain::new(lo, hi)?)),
            _ => Ok(NullSpec::Simple(1.0)),
        }
    }
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    series: SeriesArgs,
    #[command(flatten)]
    null: NullArgs,
}

#[derive(Args, Debug)]
struct SequentialArgs {
    /// Series file; without it a trajectory is simulated.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "normal")]
    family: FamilyArg,
    #[arg(long, value_enum, default_value = "ls")]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[command(flatten)]
    null: NullArgs,
    /// True parameter of the simulated trajectory (also used for the coverage column).
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(short = 'T', long = "len", default_value_t = 200)]
    t_len: usize,
    #[arg(short = 'r', long, default_value_t = 1)]
    replications: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the final e-process state here (input mode only).
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
    /// Resume from a snapshot before streaming the input.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DfTableArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.025,0.05,0.1,0.5,0.9,0.95,0.975,0.99")]
    probs: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    n_sims: usize,
    #[arg(long, default_value_t = 1000)]
    t_sim: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StudyArg {
    NormalCi,
    CauchyCi,
    UnitRoot,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    #[arg(value_enum)]
    study: StudyArg,
    /// Root seed; the default reproduces the shipped reference outputs.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(short = 'r', long)]
    replications: Option<usize>,
    #[arg(short = 'T', long = "len")]
    t_len: Option<usize>,
    #[arg(long)]
    t1: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    theta0: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    #[arg(long)]
    null_theta: Option<f64>,
    /// Number of FS/LS pairs written to ci_pairs.csv.
    #[arg(long, default_value_t = 20)]
    pairs: usize,
    /// Null quantile table for the unit-root study (JSON).
    #[arg(long)]
    df_table: Option<PathBuf>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn read_series(path: &Path) -> Result<TimeSeries, Error> {
    TimeSeries::from_text(&std::fs::read_to_string(path)?)
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn split_for(args: &SeriesArgs, series: &TimeSeries) -> Result<SplitConfig, Error> {
    let t1 = args.t1.unwrap_or(series.len() / 2);
    SplitConfig::new(t1, 1, series.len())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(a) => {
            let init = a.init.unwrap_or_else(|| InitPolicy::default_for(a.theta));
            let s = simulate(Family::from(a.family).model(), a.theta, a.t_len, init, a.seed)?;
            let text: String = s.values().iter().map(|v| format!("{v}\n")).collect();
            write_or_print(a.out.as_deref(), &text)
        }
        Command::Ci(a) => {
            let series = read_series(&a.series.input)?;
            let split = split_for(&a.series, &series)?;
            let model = Family::from(a.series.family).model();
            let fs = split_region(model, &series, split, &a.series.estimator.into(), a.alpha, &ScanConfig::default())?;
            let ls = asymptotic_ls_ci(&series, a.alpha)?;
            let out = json!({
                "alpha": a.alpha,
                "t1": split.t1,
                "theta_hat": fs.theta_hat,
                "fs_region": fs.region,
                "fs_length": fs.region.total_length(),
                "ls_interval": ls,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
        Command::Test(a) => {
            let series = read_series(&a.series.input)?;
            let split = split_for(&a.series, &series)?;
            let model = Family::from(a.series.family).model();
            let t = test_statistic(model, &series, split, &a.series.estimator.into(), &a.null.spec()?)?;
            println!("{}", serde_json::to_string_pretty(&json!({ "t1": split.t1, "test": t }))?);
            Ok(())
        }
        Command::Sequential(a) => run_sequential(a),
        Command::DfTable(a) => {
            let table = df_null_quantiles(&a.probs, a.n_sims, a.t_sim, a.seed)?;
            let mut text = table.to_json()?;
            text.push('\n');
            write_or_print(a.out.as_deref(), &text)
        }
        Command::Reproduce(a) => run_reproduce(a),
    }
}

fn run_sequential(a: SequentialArgs) -> Result<(), Error> {
    let family = Family::from(a.family);
    let null = a.null.spec()?;
    let Some(input) = &a.input else {
        let mut cfg = StudyConfig::sequential_demo(a.seed);
        cfg.family = family;
        cfg.estimator = a.estimator.into();
        cfg.alpha = a.alpha;
        cfg.theta0 = vec![a.theta];
        cfg.t_len = a.t_len;
        cfg.r = a.replications;
        cfg.workers = a.workers;
        cfg.null_theta = match null {
            NullSpec::Simple(t) => t,
            NullSpec::Composite(_) => return Err(Error::Argument("simulated demo takes a simple null".into())),
        };
        let demo = run_sequential_demo(&cfg)?;
        return write_or_print(a.out.as_deref(), &demo.steps_csv()?);
    };
    let series = read_series(input)?;
    let (state, steps) = match &a.resume {
        Some(path) => {
            let mut state = EProcessState::from_snapshot_str(&std::fs::read_to_string(path)?)?;
            let offset = state.t();
            let mut history = state.history().to_vec();
            history.extend_from_slice(series.values());
            let (full, mut steps) =
                stream_series(state.family(), state.plugin(), &history, a.alpha, &null, a.theta, 0)?;
            steps.drain(..offset);
            state = full;
            (state, steps)
        }
        None => stream_series(family, a.estimator.into(), series.values(), a.alpha, &null, a.theta, 0)?,
    };
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for s in &steps {
            w.serialize(s)?;
        }
        w.flush()?;
    }
    write_or_print(a.out.as_deref(), &String::from_utf8_lossy(&out))?;
    if let Some(path) = &a.snapshot_out {
        std::fs::write(path, state.to_snapshot_string()?)?;
    }
    Ok(())
}

fn run_reproduce(a: ReproduceArgs) -> Result<(), Error> {
    let mut cfg = match a.study {
        StudyArg::NormalCi => StudyConfig::normal_ci(a.seed),
        StudyArg::CauchyCi => StudyConfig::cauchy_ci(a.seed),
        StudyArg::UnitRoot => StudyConfig::unit_root(a.seed),
    };
    if let Some(r) = a.replications {
        cfg.r = r;
    }
    if let Some(t) = a.t_len {
        cfg.t_len = t;
    }
    if a.t1.is_some() {
        cfg.t1 = a.t1;
    }
    if let Some(alpha) = a.alpha {
        cfg.alpha = alpha;
    }
    if let Some(theta0) = a.theta0 {
        cfg.theta0 = theta0;
    }
    if let Some(f) = a.family {
        cfg.family = f.into();
    }
    if let Some(e) = a.estimator {
        cfg.estimator = e.into();
    }
    if let Some(n) = a.null_theta {
        cfg.null_theta = n;
    }
    cfg.workers = a.workers;
    cfg.validate()?;
    std::fs::create_dir_all(&a.out_dir)?;

    let report = match a.study {
        StudyArg::UnitRoot => match &a.df_table {
            Some(path) => {
                let table = NullQuantileTable::from_json(&std::fs::read_to_string(path)?)?;
                run_unit_root_study_with_table(&cfg, &table)?
            }
            None => run_unit_root_study(&cfg)?,
        },
        _ => {
            let report = run_ci_study(&cfg)?;
            let k = a.pairs.min(report.ci_records.len());
            emit_ci_pairs(&report, k, &a.out_dir.join("ci_pairs.csv"))?;
            report
        }
    };
    report.write_json(&a.out_dir.join("report.json"))?;
    std::fs::write(a.out_dir.join("summary.csv"), report.summary_csv()?)?;
    eprintln!("done in {:.2?}; outputs in {}", report.wall_time, a.out_dir.display());
    print!("{}", report.summary_csv()?);
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::FailureBudget { .. }
        | Error::Optimization(_)
        | Error::ScanWindow { .. }
        | Error::DegenerateDesign { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
