mod errors;
mod ingest;
mod job;

use clap::{Args, Parser, Subcommand};

use errors::{CliError, CliResult};
use job::JobSpec;

#[derive(Parser)]
#[command(
    name = "cvboot",
    about = "Cross-validation estimates with bootstrap standard errors and confidence intervals",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate model performance with a confidence interval.
    Estimate(CommonArgs),
    /// Confidence interval for the performance difference of two learners.
    Compare(CommonArgs),
    /// Pre-validated ROC curve with pointwise confidence intervals.
    Roc(CommonArgs),
    /// Coverage experiments on built-in data generators.
    Simulate(CommonArgs),
    /// Split a fit budget using a small pilot run.
    Pilot(CommonArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Job file (JSON); its fields win over flags and are echoed into the
    /// report.
    #[arg(long)]
    job: Option<String>,

    /// Input CSV (header required, UTF-8).
    #[arg(long)]
    data: Option<String>,
    /// Outcome column name.
    #[arg(long)]
    outcome: Option<String>,
    /// Treatment column name (0/1).
    #[arg(long)]
    treatment: Option<String>,
    /// Comma-separated feature columns; default: all remaining columns.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// continuous | binary (default inferred from learner/metric).
    #[arg(long)]
    outcome_kind: Option<String>,

    /// ols | lasso | logistic | lasso-logistic | itr | itr-lasso.
    #[arg(long)]
    learner: Option<String>,
    /// L1 penalty for lasso learners.
    #[arg(long)]
    lambda: Option<f64>,
    /// L1 penalty on the prognostic block (itr-lasso).
    #[arg(long)]
    lambda_gamma: Option<f64>,
    /// Treatment probability (itr learners); default: observed fraction.
    #[arg(long)]
    treat_prob: Option<f64>,
    /// Penalize raw-scale coefficients instead of standardized ones.
    #[arg(long)]
    no_standardize: bool,
    /// Second learner for `compare`.
    #[arg(long)]
    learner_b: Option<String>,
    /// L1 penalty for the second learner.
    #[arg(long)]
    lambda_b: Option<f64>,

    /// mape | c-index | subgroup-ate (default inferred from learner).
    #[arg(long)]
    metric: Option<String>,
    /// Count tied score pairs as zero instead of one half.
    #[arg(long)]
    strict_ties: bool,
    /// positive | nonpositive.
    #[arg(long)]
    subgroup_side: Option<String>,
    /// Score cutoff for the subgroup metric.
    #[arg(long)]
    cutoff: Option<f64>,

    /// Training size; `simulate` accepts a comma-separated grid.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    /// Splits for the point estimate.
    #[arg(long)]
    b_cv_point: Option<usize>,
    /// Bootstrap draws.
    #[arg(long)]
    b_boot: Option<usize>,
    /// Splits per bootstrap draw.
    #[arg(long)]
    b_cv: Option<usize>,
    /// Nominal error rate of the intervals.
    #[arg(long)]
    alpha: Option<f64>,
    /// Master seed (default: env CVBOOT_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Run the calibration bootstrap.
    #[arg(long)]
    calibrate: bool,
    /// Calibration replicates.
    #[arg(long)]
    l_reps: Option<usize>,
    /// Stratify splits on a binary outcome.
    #[arg(long)]
    stratify: bool,
    /// Redraw budget for degenerate folds.
    #[arg(long)]
    max_redraws: Option<u32>,
    /// Folds for pre-validation.
    #[arg(long)]
    kfold_k: Option<usize>,
    /// Folds used under bootstrap weights.
    #[arg(long)]
    kfold_k_adj: Option<usize>,

    /// Generator for `simulate`: linear_lowdim | linear_highdim |
    /// logistic_lowdim | logistic_highdim | itr_lowdim | itr_highdim.
    #[arg(long)]
    generator: Option<String>,
    /// Override the generator's sample size.
    #[arg(long)]
    n: Option<usize>,
    /// Override the generator's dimension.
    #[arg(long)]
    p: Option<usize>,
    /// Simulated datasets per training size.
    #[arg(long)]
    n_sims: Option<usize>,
    /// Training replicates for the Monte-Carlo truth.
    #[arg(long)]
    true_reps: Option<usize>,
    /// Evaluation rows for the Monte-Carlo truth.
    #[arg(long)]
    true_test: Option<usize>,
    /// Known true values (skips the Monte-Carlo truth run).
    #[arg(long, value_delimiter = ',')]
    true_errs: Option<Vec<f64>>,

    /// Total fit budget for `pilot`.
    #[arg(long)]
    total_fits: Option<usize>,

    /// Output path ("-" = stdout).
    #[arg(long)]
    out: Option<String>,
    /// json | csv.
    #[arg(long)]
    format: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonArgs {
    fn into_jobspec(self, command: &str) -> JobSpec {
        JobSpec {
            command: Some(command.to_string()),
            data: self.data,
            outcome: self.outcome,
            treatment: self.treatment,
            features: self.features,
            outcome_kind: self.outcome_kind,
            learner: self.learner,
            lambda: self.lambda,
            lambda_gamma: self.lambda_gamma,
            treat_prob: self.treat_prob,
            standardize: self.no_standardize.then_some(false),
            learner_b: self.learner_b,
            lambda_b: self.lambda_b,
            metric: self.metric,
            strict_ties: self.strict_ties.then_some(true),
            subgroup_side: self.subgroup_side,
            cutoff: self.cutoff,
            m: self.m,
            b_cv_point: self.b_cv_point,
            b_boot: self.b_boot,
            b_cv: self.b_cv,
            alpha: self.alpha,
            seed: self.seed,
            calibrate: self.calibrate.then_some(true),
            l_reps: self.l_reps,
            stratify: self.stratify.then_some(true),
            max_redraws: self.max_redraws,
            kfold_k: self.kfold_k,
            kfold_k_adj: self.kfold_k_adj,
            generator: self.generator,
            n: self.n,
            p: self.p,
            n_sims: self.n_sims,
            true_reps: self.true_reps,
            true_test: self.true_test,
            true_errs: self.true_errs,
            total_fits: self.total_fits,
            out: self.out,
            format: self.format,
            threads: self.threads,
        }
    }
}

fn assemble(args: CommonArgs, command: &str) -> CliResult<JobSpec> {
    let job_file = args.job.clone();
    let mut job = args.into_jobspec(command);
    if let Some(path) = job_file {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Io(format!("cannot read job file {path}: {e}")))?;
        let from_file: JobSpec =
            serde_json::from_str(&text).map_err(|e| CliError::BadArgs(format!("job file: {e}")))?;
        job = job.overlaid_with(from_file)?;
        job.command.get_or_insert_with(|| command.to_string());
    }
    if job.seed.is_none() {
        if let Ok(s) = std::env::var("CVBOOT_SEED") {
            let parsed = s
                .parse::<u64>()
                .map_err(|_| CliError::BadArgs(format!("CVBOOT_SEED={s:?} is not a u64")))?;
            job.seed = Some(parsed);
        }
    }
    Ok(job)
}

fn real_main() -> CliResult<()> {
    let cli = Cli::parse();
    let (args, command) = match cli.command {
        Command::Estimate(a) => (a, "estimate"),
        Command::Compare(a) => (a, "compare"),
        Command::Roc(a) => (a, "roc"),
        Command::Simulate(a) => (a, "simulate"),
        Command::Pilot(a) => (a, "pilot"),
    };
    let job = assemble(args, command)?;
    if let Some(t) = job.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::BadArgs(e.to_string()))?;
    }
    let envelope = job::run_job(&job)?;
    let target = job::write_report(&envelope)?;
    if target != "-" {
        eprintln!("report written to {target}");
    }
    Ok(())
}

fn main() {
    if let Err(e) = real_main() {
        let obj = serde_json::json!({
            "error": { "code": e.code(), "message": e.to_string() }
        });
        eprintln!("{obj}");
        std::process::exit(1);
    }
}
