use thiserror::Error;

/// Errors surfaced by dataset validation, resampling, model fitting,
/// evaluation and inference.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("outcome declared binary but contains {0}")]
    NonBinaryOutcome(f64),
    #[error("treatment column present but the {0} arm is empty")]
    EmptyArm(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("stratified split infeasible: class {class} has {available} rows, quota {needed}")]
    InfeasibleStratification {
        class: u8,
        available: usize,
        needed: usize,
    },
    #[error("fold is degenerate: {0}")]
    DegenerateFold(&'static str),

    #[error("need at least 2 bootstrap rows and 2 splits per row, got {n_boot}x{n_cv}")]
    InsufficientReplication { n_boot: usize, n_cv: usize },
    #[error("between-bootstrap variance is zero; allocation undefined (increase the pilot budget)")]
    ZeroBetweenVariance,
    #[error("calibration degenerate: {rejected} of {total} resamples had a nonpositive variance estimate")]
    CalibrationDegenerate { rejected: usize, total: usize },

    #[error("design matrix singular even after ridge fallback")]
    SingularDesign,
    #[error("logistic fit diverged; data are (quasi-)separable")]
    Separation,
    #[error("fold contains only one outcome class")]
    OneClassFold,
    #[error("sample contains only one outcome class")]
    OneClass,
    #[error("subgroup has no rows in the {0} arm")]
    EmptySubgroupArm(&'static str),
    #[error("learner requires a treatment column")]
    MissingTreatment,
}

impl Error {
    /// True for errors tied to one unlucky train/test division; the engine
    /// responds by redrawing the split rather than aborting the run.
    pub fn is_fold_local(&self) -> bool {
        matches!(
            self,
            Error::DegenerateFold(_)
                | Error::OneClassFold
                | Error::OneClass
                | Error::EmptySubgroupArm(_)
                | Error::Separation
                | Error::SingularDesign
        )
    }

    /// Stable machine-readable code, used by front ends.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonBinaryOutcome(_) => "non_binary_outcome",
            Error::EmptyArm(_) => "empty_arm",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InfeasibleStratification { .. } => "infeasible_stratification",
            Error::DegenerateFold(_) => "degenerate_fold",
            Error::InsufficientReplication { .. } => "insufficient_replication",
            Error::ZeroBetweenVariance => "zero_between_variance",
            Error::CalibrationDegenerate { .. } => "calibration_degenerate",
            Error::SingularDesign => "singular_design",
            Error::Separation => "separation",
            Error::OneClassFold => "one_class_fold",
            Error::OneClass => "one_class",
            Error::EmptySubgroupArm(_) => "empty_subgroup_arm",
            Error::MissingTreatment => "missing_treatment",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
