//! Job specification: the single declarative description of a run,
//! assembled from flags and/or a job file, echoed verbatim into every
//! report together with a hash so runs can be reproduced bit for bit.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cvboot::engine::{
    compare_models, fast_bootstrap, kfold_prevalidate_ci, pilot_allocate, RocBand, RunConfig,
};
use cvboot::learners::{LearnerKind, LearnerSpec};
use cvboot::metrics::{Metric, SubgroupSide};
use cvboot::sim::{coverage_experiment, CoverageTable, GeneratorKind, GeneratorSpec};
use cvboot::{InferenceReport, OutcomeKind};

use crate::errors::{CliError, CliResult};
use crate::ingest::{ingest_csv, IngestSummary};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct JobSpec {
    pub command: Option<String>,
    pub data: Option<String>,
    pub outcome: Option<String>,
    pub treatment: Option<String>,
    pub features: Option<Vec<String>>,
    pub outcome_kind: Option<String>,

    pub learner: Option<String>,
    pub lambda: Option<f64>,
    pub lambda_gamma: Option<f64>,
    pub treat_prob: Option<f64>,
    pub standardize: Option<bool>,
    pub learner_b: Option<String>,
    pub lambda_b: Option<f64>,

    pub metric: Option<String>,
    pub strict_ties: Option<bool>,
    pub subgroup_side: Option<String>,
    pub cutoff: Option<f64>,

    pub m: Option<Vec<usize>>,
    pub b_cv_point: Option<usize>,
    pub b_boot: Option<usize>,
    pub b_cv: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub calibrate: Option<bool>,
    pub l_reps: Option<usize>,
    pub stratify: Option<bool>,
    pub max_redraws: Option<u32>,
    pub kfold_k: Option<usize>,
    pub kfold_k_adj: Option<usize>,

    pub generator: Option<String>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub n_sims: Option<usize>,
    pub true_reps: Option<usize>,
    pub true_test: Option<usize>,
    pub true_errs: Option<Vec<f64>>,

    pub total_fits: Option<usize>,

    pub out: Option<String>,
    pub format: Option<String>,
    pub threads: Option<usize>,
}

impl JobSpec {
    /// Overlay `file` on top of `self`: the job file wins on conflict.
    pub fn overlaid_with(self, file: JobSpec) -> CliResult<JobSpec> {
        let mut base = serde_json::to_value(&self).expect("jobspec serializes");
        let over = serde_json::to_value(&file).expect("jobspec serializes");
        if let (Some(b), Some(o)) = (base.as_object_mut(), over.as_object()) {
            for (k, v) in o {
                if !v.is_null() {
                    b.insert(k.clone(), v.clone());
                }
            }
        }
        serde_json::from_value(base).map_err(|e| CliError::BadArgs(e.to_string()))
    }
}

fn parse_learner(name: &str) -> CliResult<LearnerKind> {
    match name {
        "ols" => Ok(LearnerKind::Ols),
        "lasso" => Ok(LearnerKind::Lasso),
        "logistic" => Ok(LearnerKind::Logistic),
        "lasso-logistic" | "lasso_logistic" => Ok(LearnerKind::LassoLogistic),
        "itr" | "itr-linear" | "itr_linear" => Ok(LearnerKind::ItrLinear),
        "itr-lasso" | "itr_lasso" => Ok(LearnerKind::ItrLasso),
        other => Err(CliError::BadArgs(format!("unknown learner {other:?}"))),
    }
}

fn build_learner(
    kind: LearnerKind,
    lambda: Option<f64>,
    lambda_gamma: Option<f64>,
    treat_prob: Option<f64>,
    standardize: Option<bool>,
) -> LearnerSpec {
    let mut spec = LearnerSpec::new(kind);
    if let Some(l) = lambda {
        spec.lambda = l;
    }
    if let Some(l) = lambda_gamma {
        spec.lambda_gamma = l;
    }
    spec.treat_prob = treat_prob;
    if let Some(s) = standardize {
        spec.standardize = s;
    }
    spec
}

fn parse_metric(job: &JobSpec, learner: LearnerKind) -> CliResult<Metric> {
    let side = match job.subgroup_side.as_deref() {
        None | Some("positive") => SubgroupSide::Positive,
        Some("nonpositive") => SubgroupSide::Nonpositive,
        Some(other) => {
            return Err(CliError::BadArgs(format!(
                "unknown subgroup side {other:?}"
            )))
        }
    };
    let cutoff = job.cutoff.unwrap_or(0.0);
    let strict = job.strict_ties.unwrap_or(false);
    match job.metric.as_deref() {
        Some("mape") => Ok(Metric::Mape),
        Some("c-index") | Some("c_index") => Ok(Metric::CIndex { strict_ties: strict }),
        Some("subgroup-ate") | Some("subgroup_ate") => {
            Ok(Metric::SubgroupAte { side, cutoff })
        }
        Some(other) => Err(CliError::BadArgs(format!("unknown metric {other:?}"))),
        None => Ok(match learner {
            LearnerKind::Ols | LearnerKind::Lasso => Metric::Mape,
            LearnerKind::Logistic | LearnerKind::LassoLogistic => {
                Metric::CIndex { strict_ties: strict }
            }
            LearnerKind::ItrLinear | LearnerKind::ItrLasso => {
                Metric::SubgroupAte { side, cutoff }
            }
        }),
    }
}

fn outcome_kind(job: &JobSpec, learner: LearnerKind, metric: &Metric) -> CliResult<OutcomeKind> {
    match job.outcome_kind.as_deref() {
        Some("continuous") => Ok(OutcomeKind::Continuous),
        Some("binary") => Ok(OutcomeKind::Binary),
        Some(other) => Err(CliError::BadArgs(format!(
            "unknown outcome kind {other:?}"
        ))),
        None => Ok(
            if learner.is_classifier() || matches!(metric, Metric::CIndex { .. }) {
                OutcomeKind::Binary
            } else {
                OutcomeKind::Continuous
            },
        ),
    }
}

fn run_config(job: &JobSpec, m: usize) -> RunConfig {
    let mut cfg = RunConfig::new(m);
    if let Some(v) = job.b_cv_point {
        cfg.n_cv_point = v;
    }
    if let Some(v) = job.b_boot {
        cfg.n_boot = v;
    }
    if let Some(v) = job.b_cv {
        cfg.n_cv = v;
    }
    if let Some(v) = job.alpha {
        cfg.alpha = v;
    }
    cfg.seed = job.seed.unwrap_or(0);
    cfg.calibrate = job.calibrate.unwrap_or(false);
    if let Some(v) = job.l_reps {
        cfg.l_reps = v;
    }
    cfg.stratify = job.stratify.unwrap_or(false);
    if let Some(v) = job.max_redraws {
        cfg.max_redraws = v;
    }
    cfg.kfold_k = job.kfold_k;
    cfg.kfold_k_adj = job.kfold_k_adj;
    cfg
}

fn single_m(job: &JobSpec) -> CliResult<usize> {
    match job.m.as_deref() {
        Some([m]) => Ok(*m),
        Some(_) => Err(CliError::BadArgs(
            "this command takes a single training size".into(),
        )),
        None => Err(CliError::BadArgs("--m is required".into())),
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum JobResult {
    Estimate(InferenceReport),
    Compare(InferenceReport),
    Roc(Box<RocBand>),
    Simulate(CoverageTable),
    Pilot {
        n_boot: usize,
        n_cv: usize,
        total_fits: usize,
    },
}

#[derive(Debug, Serialize)]
pub struct Reproducibility {
    pub seed: u64,
    pub config_hash: String,
    pub fits_used: u64,
    pub generated_at_unix: u64,
}

#[derive(Debug, Serialize)]
pub struct ReportEnvelope {
    pub job: JobSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestSummary>,
    pub result: JobResult,
    pub reproducibility: Reproducibility,
}

fn load_data(job: &JobSpec, kind: OutcomeKind) -> CliResult<(cvboot::Dataset, IngestSummary)> {
    let path = job
        .data
        .as_deref()
        .ok_or_else(|| CliError::BadArgs("--data is required".into()))?;
    let outcome = job
        .outcome
        .as_deref()
        .ok_or_else(|| CliError::BadArgs("--outcome is required".into()))?;
    ingest_csv(
        path,
        outcome,
        job.treatment.as_deref(),
        job.features.as_deref(),
        kind,
    )
}

/// Execute the job and return the full report envelope.
pub fn run_job(job: &JobSpec) -> CliResult<ReportEnvelope> {
    let command = job
        .command
        .as_deref()
        .ok_or_else(|| CliError::BadArgs("no command given".into()))?
        .to_string();
    let learner_kind = parse_learner(job.learner.as_deref().unwrap_or("ols"))?;
    let learner = build_learner(
        learner_kind,
        job.lambda,
        job.lambda_gamma,
        job.treat_prob,
        job.standardize,
    );
    let metric = parse_metric(job, learner_kind)?;
    let kind = outcome_kind(job, learner_kind, &metric)?;

    let mut ingest = None;
    let result = match command.as_str() {
        "estimate" => {
            let (data, summary) = load_data(job, kind)?;
            ingest = Some(summary);
            let cfg = run_config(job, single_m(job)?);
            let (_, report) = fast_bootstrap(&data, &learner, &metric, &cfg)?;
            JobResult::Estimate(report)
        }
        "compare" => {
            let (data, summary) = load_data(job, kind)?;
            ingest = Some(summary);
            let kind_b = parse_learner(
                job.learner_b
                    .as_deref()
                    .ok_or_else(|| CliError::BadArgs("--learner-b is required".into()))?,
            )?;
            let learner_b = build_learner(
                kind_b,
                job.lambda_b.or(job.lambda),
                job.lambda_gamma,
                job.treat_prob,
                job.standardize,
            );
            let cfg = run_config(job, single_m(job)?);
            let (_, report) = compare_models(&data, &learner, &learner_b, &metric, &cfg)?;
            JobResult::Compare(report)
        }
        "roc" => {
            let (data, summary) = load_data(job, OutcomeKind::Binary)?;
            ingest = Some(summary);
            // the training size is implied by the fold count
            let m = data.n() - data.n() / job.kfold_k.unwrap_or(10);
            let cfg = run_config(job, m.clamp(1, data.n() - 1));
            let band = kfold_prevalidate_ci(&data, &learner, &cfg, None)?;
            JobResult::Roc(Box::new(band))
        }
        "simulate" => {
            let gen_kind = GeneratorKind::parse(
                job.generator
                    .as_deref()
                    .ok_or_else(|| CliError::BadArgs("--generator is required".into()))?,
            )?;
            let mut spec = GeneratorSpec::new(gen_kind);
            if let Some(n) = job.n {
                spec.n = n;
            }
            if let Some(p) = job.p {
                spec.p = p;
            }
            let learner = if job.learner.is_some() {
                learner
            } else {
                spec.default_learner()
            };
            let metric = if job.metric.is_some() {
                metric
            } else {
                spec.default_metric()
            };
            let m_grid = job
                .m
                .clone()
                .ok_or_else(|| CliError::BadArgs("--m is required".into()))?;
            let cfg = run_config(job, m_grid[0]);
            let table = coverage_experiment(
                &spec,
                &learner,
                &metric,
                &m_grid,
                &cfg,
                job.n_sims.unwrap_or(200),
                job.true_errs.as_deref(),
                (
                    job.true_reps.unwrap_or(1000),
                    job.true_test.unwrap_or(100_000),
                ),
                cfg.seed,
            )?;
            JobResult::Simulate(table)
        }
        "pilot" => {
            let (data, summary) = load_data(job, kind)?;
            ingest = Some(summary);
            let mut cfg = run_config(job, single_m(job)?);
            if job.b_boot.is_none() {
                cfg.n_boot = 10;
            }
            if job.b_cv.is_none() {
                cfg.n_cv = 10;
            }
            let total = job
                .total_fits
                .ok_or_else(|| CliError::BadArgs("--total-fits is required".into()))?;
            let full = pilot_allocate(&data, &learner, &metric, &cfg, total)?;
            JobResult::Pilot {
                n_boot: full.n_boot,
                n_cv: full.n_cv,
                total_fits: total,
            }
        }
        other => return Err(CliError::BadArgs(format!("unknown command {other:?}"))),
    };

    let fits_used = match &result {
        JobResult::Estimate(r) | JobResult::Compare(r) => r.fits_used,
        JobResult::Roc(b) => b.fits.total(),
        JobResult::Simulate(t) => nominal_sim_fits(job, t),
        JobResult::Pilot { .. } => (job.b_boot.unwrap_or(10) * job.b_cv.unwrap_or(10)) as u64,
    };

    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(job).expect("jobspec serializes"));
    let config_hash = hex_digest(hasher);
    Ok(ReportEnvelope {
        job: job.clone(),
        ingest,
        result,
        reproducibility: Reproducibility {
            seed: job.seed.unwrap_or(0),
            config_hash,
            fits_used,
            generated_at_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        },
    })
}

fn nominal_sim_fits(job: &JobSpec, table: &CoverageTable) -> u64 {
    let per_sim = job.b_cv_point.unwrap_or(400) + job.b_boot.unwrap_or(400) * job.b_cv.unwrap_or(20);
    table
        .rows
        .iter()
        .map(|r| (r.n_sims * per_sim) as u64)
        .sum()
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Serialize the envelope in the requested format.
pub fn render(envelope: &ReportEnvelope, format: &str) -> CliResult<String> {
    match format {
        "json" => serde_json::to_string_pretty(envelope)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| CliError::Io(e.to_string())),
        "csv" => render_csv(envelope),
        other => Err(CliError::BadArgs(format!("unknown format {other:?}"))),
    }
}

fn render_csv(envelope: &ReportEnvelope) -> CliResult<String> {
    let mut out = String::new();
    match &envelope.result {
        JobResult::Estimate(r) | JobResult::Compare(r) => {
            out.push_str(
                "point,se,se_adj,ci_lo,ci_hi,ci_adj_lo,ci_adj_hi,ci_cal_lo,ci_cal_hi,crit,m,m_adj,alpha,fits_used\n",
            );
            let cal = r
                .ci_calibrated
                .map(|c| format!("{},{},{}", c.lo, c.hi, c.crit))
                .unwrap_or_else(|| ",,".into());
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.point,
                r.se,
                r.se_adj,
                r.ci_normal.lo,
                r.ci_normal.hi,
                r.ci_adj.lo,
                r.ci_adj.hi,
                cal,
                r.train_size,
                r.train_size_adj,
                r.alpha,
                r.fits_used
            ));
        }
        JobResult::Roc(b) => {
            out.push_str("grid,sensitivity,se,ci_lo,ci_hi\n");
            for i in 0..b.curve.grid.len() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    b.curve.grid[i], b.curve.sensitivity[i], b.se[i], b.ci_lo[i], b.ci_hi[i]
                ));
            }
            out.push_str(&format!(
                "auc,{},{},{},{}\n",
                b.curve.auc, b.auc_se, b.auc_ci.lo, b.auc_ci.hi
            ));
        }
        JobResult::Simulate(t) => {
            out.push_str(
                "m,n_sims,true_err,mean_estimate,bias,empirical_sd,mean_se,mean_se_adj,coverage,coverage_adj,coverage_calibrated,coverage_mc_se,coverage_adj_mc_se,zero_variance_sims\n",
            );
            for r in &t.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    r.train_size,
                    r.n_sims,
                    r.true_err,
                    r.mean_estimate,
                    r.bias,
                    r.empirical_sd,
                    r.mean_se,
                    r.mean_se_adj,
                    r.coverage,
                    r.coverage_adj,
                    r.coverage_calibrated.map(|c| c.to_string()).unwrap_or_default(),
                    r.coverage_mc_se,
                    r.coverage_adj_mc_se,
                    r.zero_variance_sims
                ));
            }
        }
        JobResult::Pilot {
            n_boot,
            n_cv,
            total_fits,
        } => {
            out.push_str("n_boot,n_cv,total_fits\n");
            out.push_str(&format!("{n_boot},{n_cv},{total_fits}\n"));
        }
    }
    Ok(out)
}

/// Write the rendered report to the output target ("-" for stdout).
pub fn write_report(envelope: &ReportEnvelope) -> CliResult<String> {
    let format = envelope.job.format.as_deref().unwrap_or("json");
    let rendered = render(envelope, format)?;
    match envelope.job.out.as_deref() {
        None | Some("-") => {
            std::io::stdout().write_all(rendered.as_bytes())?;
            Ok("-".into())
        }
        Some(path) => {
            if let Some(parent) = std::path::Path::new(path).parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(path, rendered)?;
            Ok(path.to_string())
        }
    }
}
