//! The in-memory data model all resampling acts on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether the outcome column is continuous or coded 0/1. Declared by the
/// caller; never inferred from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

/// An immutable table of `n` rows: a feature matrix, an outcome column and
/// an optional binary treatment column. Row identifiers survive resampling
/// so downstream reports can reference original rows.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<f64>, // row-major, n * p
    n: usize,
    p: usize,
    outcome: Vec<f64>,
    outcome_kind: OutcomeKind,
    treatment: Option<Vec<u8>>,
    ids: Vec<u64>,
}

impl Dataset {
    /// Build and validate a dataset. `features` is row-major with `p`
    /// columns; `ids` defaults to `0..n`.
    pub fn new(
        features: Vec<f64>,
        p: usize,
        outcome: Vec<f64>,
        outcome_kind: OutcomeKind,
        treatment: Option<Vec<u8>>,
        ids: Option<Vec<u64>>,
    ) -> Result<Self> {
        let n = outcome.len();
        if p == 0 {
            return Err(Error::DimensionMismatch("need p >= 1 features".into()));
        }
        if n < 2 {
            return Err(Error::DimensionMismatch(format!(
                "need at least 2 rows, got {n}"
            )));
        }
        if features.len() != n * p {
            return Err(Error::DimensionMismatch(format!(
                "feature matrix has {} cells, expected {n} x {p}",
                features.len()
            )));
        }
        if let Some(g) = &treatment {
            if g.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "treatment column has {} rows, expected {n}",
                    g.len()
                )));
            }
        }
        let ids = match ids {
            Some(v) => {
                if v.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "id column has {} rows, expected {n}",
                        v.len()
                    )));
                }
                v
            }
            None => (0..n as u64).collect(),
        };
        let ds = Dataset {
            features,
            n,
            p,
            outcome,
            outcome_kind,
            treatment,
            ids,
        };
        ds.validate()
    }

    /// Check the declared outcome kind and treatment-arm occupancy.
    pub fn validate(self) -> Result<Self> {
        if self.outcome_kind == OutcomeKind::Binary {
            for &y in &self.outcome {
                if y != 0.0 && y != 1.0 {
                    return Err(Error::NonBinaryOutcome(y));
                }
            }
        }
        if let Some(g) = &self.treatment {
            let ones = g.iter().filter(|&&v| v == 1).count();
            if g.iter().any(|&v| v > 1) {
                return Err(Error::DimensionMismatch(
                    "treatment values must be 0 or 1".into(),
                ));
            }
            if ones == 0 {
                return Err(Error::EmptyArm("treated"));
            }
            if ones == g.len() {
                return Err(Error::EmptyArm("control"));
            }
        }
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn treatment(&self) -> Option<&[u8]> {
        self.treatment.as_deref()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Binary class labels for stratified splitting (`true` = outcome 1).
    pub fn binary_labels(&self) -> Option<Vec<bool>> {
        match self.outcome_kind {
            OutcomeKind::Binary => Some(self.outcome.iter().map(|&y| y == 1.0).collect()),
            OutcomeKind::Continuous => None,
        }
    }

    /// A concrete dataset made of the given rows (duplicates allowed);
    /// identifiers are carried along.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.p);
        let mut outcome = Vec::with_capacity(rows.len());
        let mut ids = Vec::with_capacity(rows.len());
        let mut treatment = self.treatment.as_ref().map(|_| Vec::with_capacity(rows.len()));
        for &r in rows {
            features.extend_from_slice(self.row(r));
            outcome.push(self.outcome[r]);
            ids.push(self.ids[r]);
            if let (Some(dst), Some(src)) = (treatment.as_mut(), self.treatment.as_ref()) {
                dst.push(src[r]);
            }
        }
        Dataset {
            features,
            n: rows.len(),
            p: self.p,
            outcome,
            outcome_kind: self.outcome_kind,
            treatment,
            ids,
        }
    }
}

/// One row seen through a [`WeightedView`].
#[derive(Debug, Clone, Copy)]
pub struct WeightedRow<'a> {
    pub index: usize,
    pub features: &'a [f64],
    pub outcome: f64,
    pub treatment: Option<u8>,
    pub weight: u32,
}

/// A fold of a dataset under integer row multiplicities: the rows listed in
/// `rows`, each carrying its weight (possibly zero). A row with weight `w`
/// is equivalent to `w` duplicated rows.
#[derive(Debug, Clone, Copy)]
pub struct WeightedView<'a> {
    data: &'a Dataset,
    rows: &'a [usize],
    weights: &'a [u32],
}

impl<'a> WeightedView<'a> {
    /// `weights` is indexed by dataset row, not by position in `rows`.
    pub fn new(data: &'a Dataset, rows: &'a [usize], weights: &'a [u32]) -> Result<Self> {
        if weights.len() != data.n() {
            return Err(Error::DimensionMismatch(format!(
                "weight vector has {} entries, expected {}",
                weights.len(),
                data.n()
            )));
        }
        Ok(WeightedView {
            data,
            rows,
            weights,
        })
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn rows(&self) -> &'a [usize] {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.data.p()
    }

    pub fn total_weight(&self) -> u64 {
        self.rows.iter().map(|&r| self.weights[r] as u64).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = WeightedRow<'a>> + '_ {
        let data = self.data;
        let weights = self.weights;
        self.rows.iter().map(move |&r| WeightedRow {
            index: r,
            features: data.row(r),
            outcome: data.outcome()[r],
            treatment: data.treatment().map(|g| g[r]),
            weight: weights[r],
        })
    }

    /// Weighted share of treated rows, used as the default treatment
    /// probability for treatment-rule learners.
    pub fn treated_fraction(&self) -> Result<f64> {
        let g = self.data.treatment().ok_or(Error::MissingTreatment)?;
        let mut total = 0.0;
        let mut treated = 0.0;
        for &r in self.rows {
            let w = self.weights[r] as f64;
            total += w;
            if g[r] == 1 {
                treated += w;
            }
        }
        if total == 0.0 {
            return Err(Error::DegenerateFold("zero total weight"));
        }
        Ok(treated / total)
    }
}
