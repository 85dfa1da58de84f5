//! `grp`: goodness-of-fit and group tests for GLMs from the command line.
//!
//! Results go to stdout (or `--out`), logs to stderr. Exit status is 0 on
//! success, 1 on any error and 2 when the test ran but its direction was
//! degenerate.

mod data;
mod indices;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use grp_core::{
    catalog, find_scenario, glm_lasso, glm_lasso_cv, gof_test, group_test, run_mc, CvConfig, Dataset,
    ForestConfig, GlmFamily, GofConfig, GroupTestConfig, GrpError, LambdaChoice, LassoOptions,
    PredictorSpec, ReportFormat, SqrtLambdaChoice,
};

const EXIT_ERROR: u8 = 1;
const EXIT_DEGENERATE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "grp", version, about = "Generalized residual prediction tests for GLMs")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "GRP_THREADS")]
    threads: Option<usize>,

    /// Suppress log output.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Goodness-of-fit test of a GLM on CSV data.
    Gof(GofArgs),
    /// Test that a group of coefficients is zero.
    Group(GroupArgs),
    /// Run a named Monte Carlo study.
    Simulate(SimulateArgs),
    /// Fit a standalone GLM Lasso.
    Fit(FitArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long, short)]
    input: PathBuf,

    /// Name of the response column; every other column is a feature.
    #[arg(long, short, default_value = "y")]
    response: String,

    /// GLM family: logistic, poisson or gaussian.
    #[arg(long, short, default_value = "logistic")]
    family: GlmFamily,

    /// Root seed for the sample split, CV folds, forest and bootstrap.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Write JSON here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,

    /// Fit the GLM without an intercept.
    #[arg(long)]
    no_intercept: bool,
}

#[derive(Args, Debug)]
struct ForestArgs {
    /// Trees in the residual forest.
    #[arg(long, default_value_t = 500)]
    num_trees: usize,

    /// Minimum observations per forest leaf.
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,

    /// Features tried per split (default: max(1, p/3)).
    #[arg(long)]
    mtry: Option<usize>,

    /// Maximum tree depth (default: unlimited).
    #[arg(long)]
    max_depth: Option<usize>,
}

impl ForestArgs {
    fn config(&self) -> ForestConfig {
        ForestConfig {
            num_trees: self.num_trees,
            min_leaf: self.min_leaf,
            mtry: self.mtry,
            max_depth: self.max_depth,
            ..ForestConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct GofArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Fraction of rows in the auxiliary sample.
    #[arg(long, default_value_t = 0.5)]
    split_fraction: f64,

    /// Main-sample Lasso penalty: a number or `cv`.
    #[arg(long, default_value = "cv", value_parser = parse_lambda)]
    lambda: LambdaChoice,

    /// Auxiliary-sample Lasso penalty: a number or `cv`.
    #[arg(long, default_value = "cv", value_parser = parse_lambda)]
    lambda_aux: LambdaChoice,

    /// Square-root Lasso penalty: a number or `default` for sqrt(2 ln p / n).
    #[arg(long, default_value = "default", value_parser = parse_sqrt_lambda)]
    lambda_sq: SqrtLambdaChoice,

    /// Residual predictor: forest, zero or linear.
    #[arg(long, default_value = "forest")]
    predictor: String,

    #[command(flatten)]
    forest: ForestArgs,

    /// Penalize the main-fit support in the square-root Lasso as well.
    #[arg(long)]
    no_exact_orth: bool,

    /// Report 2(1 - Φ(|T|)) instead of 1 - Φ(T).
    #[arg(long)]
    two_sided: bool,
}

#[derive(Args, Debug)]
struct GroupArgs {
    #[command(flatten)]
    data: DataArgs,

    /// 1-based feature indices under test, e.g. `5..100`, `1,3,5..7`, `8..`, `all-but 1..4`.
    #[arg(long, short)]
    group: String,

    /// Bootstrap draws.
    #[arg(long = "B", default_value_t = 1000)]
    bootstrap_draws: usize,

    /// Lasso penalty on the complement: a number or `cv`.
    #[arg(long, default_value = "cv", value_parser = parse_lambda)]
    lambda: LambdaChoice,

    /// Nodewise square-root Lasso penalty: a number or `default`.
    #[arg(long, default_value = "default", value_parser = parse_sqrt_lambda)]
    lambda_nw: SqrtLambdaChoice,

    /// Include every bootstrap draw in the output.
    #[arg(long)]
    emit_bootstrap: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario name (see --list-scenarios).
    #[arg(long, short, required_unless_present = "list_scenarios")]
    scenario: Option<String>,

    /// Print the scenario catalog and exit.
    #[arg(long)]
    list_scenarios: bool,

    /// Misspecification scale.
    #[arg(long)]
    sigma: Option<f64>,

    /// Fifth coefficient (group scenarios).
    #[arg(long)]
    theta: Option<f64>,

    /// Monte Carlo replications.
    #[arg(long, default_value_t = 50, value_parser = parse_reps)]
    reps: usize,

    /// Rejection level.
    #[arg(long, default_value_t = 0.05)]
    level: f64,

    /// Root seed; replication r uses a stream derived from (seed, r).
    #[arg(long, required_unless_present = "list_scenarios")]
    seed: Option<u64>,

    /// Report format: csv or json.
    #[arg(long, default_value = "csv")]
    format: ReportFormat,

    /// Write the report here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,

    /// Override the forest size of gof scenarios.
    #[arg(long)]
    num_trees: Option<usize>,

    /// Override the bootstrap draws of group scenarios.
    #[arg(long = "B")]
    bootstrap_draws: Option<usize>,

    /// Record wall-clock time in the JSON report (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Penalty: a number or `cv`.
    #[arg(long, default_value = "cv", value_parser = parse_lambda)]
    lambda: LambdaChoice,

    /// Cross-validation folds when --lambda is `cv`.
    #[arg(long, default_value_t = 10)]
    folds: usize,
}

fn parse_lambda(s: &str) -> Result<LambdaChoice, String> {
    if s.eq_ignore_ascii_case("cv") {
        return Ok(LambdaChoice::Cv);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(LambdaChoice::Fixed(v)),
        _ => Err(format!("expected a non-negative number or 'cv', got '{s}'")),
    }
}

fn parse_sqrt_lambda(s: &str) -> Result<SqrtLambdaChoice, String> {
    if s.eq_ignore_ascii_case("default") {
        return Ok(SqrtLambdaChoice::DefaultRate);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(SqrtLambdaChoice::Fixed(v)),
        _ => Err(format!("expected a positive number or 'default', got '{s}'")),
    }
}

fn parse_reps(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("reps must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

enum Outcome {
    Done,
    Degenerate,
}

fn load(args: &DataArgs) -> Result<(Dataset, Vec<String>)> {
    let table = data::read_table(&args.input, &args.response)?;
    let data = Dataset::for_family(table.x, table.y, args.family)
        .with_context(|| format!("invalid data in {}", args.input.display()))?;
    Ok((data, table.feature_names))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn cv_config(folds: usize) -> CvConfig {
    CvConfig {
        num_folds: folds,
        ..CvConfig::default()
    }
}

fn cmd_gof(args: &GofArgs) -> Result<Outcome> {
    let (data, names) = load(&args.data)?;
    let predictor = PredictorSpec::from_name(&args.predictor, args.forest.config())?;
    let config = GofConfig {
        split_fraction: args.split_fraction,
        lambda_main: args.lambda,
        lambda_aux: args.lambda_aux,
        lambda_sq: args.lambda_sq,
        predictor,
        exact_orthogonalization: !args.no_exact_orth,
        two_sided: args.two_sided,
        intercept: !args.data.no_intercept,
        cv: CvConfig::default(),
        seed: args.data.seed,
    };
    let res = gof_test(&data, args.data.family, &config)?;
    let degenerate = res.degenerate;
    let json = output::gof_json(&args.data, &data, &names, &config, &res);
    emit(args.data.out.as_deref(), &output::to_text(&json)?)?;
    Ok(if degenerate { Outcome::Degenerate } else { Outcome::Done })
}

fn cmd_group(args: &GroupArgs) -> Result<Outcome> {
    let (data, names) = load(&args.data)?;
    let group = indices::parse_index_spec(&args.group, data.p()).context("invalid --group")?;
    if group.len() == data.p() {
        bail!("--group covers all {} feature columns; nothing is left to fit under the null", data.p());
    }
    let config = GroupTestConfig {
        group: group.clone(),
        bootstrap_draws: args.bootstrap_draws,
        lambda: args.lambda,
        lambda_nw: args.lambda_nw,
        intercept: !args.data.no_intercept,
        cv: CvConfig::default(),
        seed: args.data.seed,
    };
    match group_test(&data, args.data.family, &config) {
        Ok(res) => {
            let json = output::group_json(&args.data, &data, &names, &group, &res, args.emit_bootstrap);
            emit(args.data.out.as_deref(), &output::to_text(&json)?)?;
            Ok(Outcome::Done)
        }
        Err(GrpError::Degenerate(msg)) => {
            log::warn!("{msg}");
            let json = output::group_degenerate_json(&args.data, &data, &group, &msg);
            emit(args.data.out.as_deref(), &output::to_text(&json)?)?;
            Ok(Outcome::Degenerate)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Outcome> {
    if args.list_scenarios {
        let mut text = String::new();
        for s in catalog() {
            text.push_str(&format!("{}\t{}\n", s.name, s.description));
        }
        emit(None, &text)?;
        return Ok(Outcome::Done);
    }
    let name = args.scenario.as_deref().expect("required by clap");
    let seed = args.seed.expect("required by clap");
    let mut scenario = find_scenario(name)?;
    if let Some(sigma) = args.sigma {
        scenario = scenario.with_sigma(sigma);
    }
    if let Some(theta) = args.theta {
        scenario = scenario.with_theta(theta);
    }
    if let Some(trees) = args.num_trees {
        scenario = scenario.with_num_trees(trees);
    }
    if let Some(b) = args.bootstrap_draws {
        scenario = scenario.with_bootstrap_draws(b);
    }
    let mut report = run_mc(&scenario, args.reps, args.level, seed)?;
    if !args.timing {
        report.wall_time_secs = None;
    }
    let text = grp_core::emit_report(&report, args.format)?;
    emit(args.out.as_deref(), &text)?;
    let summary = format!(
        "scenario={} sigma={} reps={} level={} rejection_rate={} degenerate={} failures={}",
        scenario.name,
        scenario.sigma,
        report.reps,
        report.level,
        report.rejection_rate,
        report.degenerate_count,
        report.failures
    );
    if args.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(Outcome::Done)
}

fn cmd_fit(args: &FitArgs) -> Result<Outcome> {
    let (data, names) = load(&args.data)?;
    let family = args.data.family;
    family.validate_response(data.y())?;
    let mut cv = cv_config(args.folds);
    cv.lasso = LassoOptions {
        intercept: !args.data.no_intercept,
        ..LassoOptions::default()
    };
    let (fit, cv_res) = match args.lambda {
        LambdaChoice::Fixed(l) => (glm_lasso(data.x(), data.y(), family, l, &cv.lasso)?, None),
        LambdaChoice::Cv => {
            let res = glm_lasso_cv(data.x(), data.y(), family, &cv, args.data.seed)?;
            (res.fit.clone(), Some(res))
        }
    };
    let json = output::fit_json(&args.data, &data, &names, &fit, cv_res.as_ref());
    emit(args.data.out.as_deref(), &output::to_text(&json)?)?;
    Ok(Outcome::Done)
}

fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Gof(a) => cmd_gof(a),
        Command::Group(a) => cmd_group(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.quiet { "off" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Degenerate) => ExitCode::from(EXIT_DEGENERATE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
