//! Performance functionals with bootstrap-weight support.
//!
//! Each metric treats a row of weight `w` exactly like `w` duplicated
//! rows, so evaluating a weighted fold equals evaluating the expanded
//! dataset.

use serde::{Deserialize, Serialize};

use crate::dataset::WeightedView;
use crate::error::{Error, Result};
use crate::learners::Scorer;

/// Which side of the treatment-rule cutoff a subgroup metric averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgroupSide {
    /// Rows the rule recommends for treatment (`score > cutoff`).
    Positive,
    /// The complement (`score <= cutoff`).
    Nonpositive,
}

/// A scalar performance functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Metric {
    /// Mean absolute prediction error.
    Mape,
    /// Concordance between scores and a binary outcome. With `strict_ties`
    /// tied pairs count zero instead of one half.
    CIndex { strict_ties: bool },
    /// Observed treated-minus-control outcome difference inside the
    /// subgroup selected by the model score.
    SubgroupAte { side: SubgroupSide, cutoff: f64 },
}

impl Metric {
    pub fn c_index() -> Self {
        Metric::CIndex { strict_ties: false }
    }

    pub fn subgroup_ate() -> Self {
        Metric::SubgroupAte {
            side: SubgroupSide::Positive,
            cutoff: 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mape => "mape",
            Metric::CIndex { .. } => "c_index",
            Metric::SubgroupAte { .. } => "subgroup_ate",
        }
    }
}

/// The evaluator plugin contract.
pub trait Evaluator: Sync {
    fn evaluate(&self, test: &WeightedView<'_>, model: &dyn Scorer) -> Result<f64>;

    fn name(&self) -> String {
        "custom".into()
    }
}

impl Evaluator for Metric {
    fn evaluate(&self, test: &WeightedView<'_>, model: &dyn Scorer) -> Result<f64> {
        match *self {
            Metric::Mape => mape(test, model),
            Metric::CIndex { strict_ties } => c_index(test, model, strict_ties),
            Metric::SubgroupAte { side, cutoff } => subgroup_ate(test, model, side, cutoff),
        }
    }

    fn name(&self) -> String {
        Metric::name(self).into()
    }
}

/// Weighted mean absolute prediction error
/// `sum_i w_i |y_i - score(z_i)| / sum_i w_i`.
pub fn mape(test: &WeightedView<'_>, model: &dyn Scorer) -> Result<f64> {
    let mut num = 0.0;
    let mut denom = 0.0;
    for row in test.iter() {
        if row.weight == 0 {
            continue;
        }
        let w = row.weight as f64;
        num += w * (row.outcome - model.score(row.features)).abs();
        denom += w;
    }
    if denom == 0.0 {
        return Err(Error::DegenerateFold("zero total weight"));
    }
    Ok(num / denom)
}

/// Weighted concordance index: the probability that a random case outranks
/// a random control under the model score, ties counting one half (or zero
/// in strict mode). Computed by a weighted rank sweep in O(W log W).
pub fn c_index(test: &WeightedView<'_>, model: &dyn Scorer, strict_ties: bool) -> Result<f64> {
    let mut scored: Vec<(f64, bool, f64)> = Vec::with_capacity(test.len());
    for row in test.iter() {
        if row.weight == 0 {
            continue;
        }
        scored.push((
            model.score(row.features),
            row.outcome == 1.0,
            row.weight as f64,
        ));
    }
    c_index_from_scores(&mut scored, strict_ties).map_err(|e| match e {
        Error::OneClass => Error::OneClassFold,
        other => other,
    })
}

/// Core concordance sweep over `(score, is_case, weight)` triples; the
/// slice is sorted in place.
pub fn c_index_from_scores(scored: &mut [(f64, bool, f64)], strict_ties: bool) -> Result<f64> {
    let w1: f64 = scored.iter().filter(|t| t.1).map(|t| t.2).sum();
    let w0: f64 = scored.iter().filter(|t| !t.1).map(|t| t.2).sum();
    if w1 == 0.0 || w0 == 0.0 {
        return Err(Error::OneClass);
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut concordant = 0.0;
    let mut controls_below = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        let mut case_w = 0.0;
        let mut control_w = 0.0;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            if scored[j].1 {
                case_w += scored[j].2;
            } else {
                control_w += scored[j].2;
            }
            j += 1;
        }
        concordant += case_w * controls_below;
        if !strict_ties {
            concordant += 0.5 * case_w * control_w;
        }
        controls_below += control_w;
        i = j;
    }
    Ok(concordant / (w0 * w1))
}

/// Weighted treated-minus-control mean outcome among rows on the requested
/// side of the score cutoff.
pub fn subgroup_ate(
    test: &WeightedView<'_>,
    model: &dyn Scorer,
    side: SubgroupSide,
    cutoff: f64,
) -> Result<f64> {
    if test.data().treatment().is_none() {
        return Err(Error::MissingTreatment);
    }
    let mut y1 = 0.0;
    let mut w1 = 0.0;
    let mut y0 = 0.0;
    let mut w0 = 0.0;
    for row in test.iter() {
        if row.weight == 0 {
            continue;
        }
        let s = model.score(row.features);
        let selected = match side {
            SubgroupSide::Positive => s > cutoff,
            SubgroupSide::Nonpositive => s <= cutoff,
        };
        if !selected {
            continue;
        }
        let w = row.weight as f64;
        match row.treatment {
            Some(1) => {
                y1 += w * row.outcome;
                w1 += w;
            }
            _ => {
                y0 += w * row.outcome;
                w0 += w;
            }
        }
    }
    if w1 == 0.0 {
        return Err(Error::EmptySubgroupArm("treated"));
    }
    if w0 == 0.0 {
        return Err(Error::EmptySubgroupArm("control"));
    }
    Ok(y1 / w1 - y0 / w0)
}

/// An estimated ROC curve evaluated on a fixed grid.
///
/// `grid` holds false-positive rates (one minus specificity);
/// `sensitivity[i]` is the estimated true-positive rate at that level, so
/// the curve is nondecreasing along the grid. `auc` is the exact pairwise
/// concordance of the underlying scores (ties counting one half);
/// `auc_trapezoid` integrates the gridded curve with (0,0) and (1,1)
/// anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub grid: Vec<f64>,
    pub sensitivity: Vec<f64>,
    pub auc: f64,
    pub auc_trapezoid: f64,
}

/// Default grid: 0.05, 0.10, ..., 0.95.
pub fn default_roc_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Empirical ROC from per-row scores: the case survival function evaluated
/// at the control survival function's right-continuous inverse.
pub fn roc_from_scores(
    scores: &[f64],
    outcome: &[f64],
    weights: &[f64],
    grid: &[f64],
) -> Result<RocCurve> {
    if scores.len() != outcome.len() || scores.len() != weights.len() {
        return Err(Error::DimensionMismatch(
            "scores, outcome and weights must have equal length".into(),
        ));
    }
    if grid.iter().any(|u| !(0.0 < *u && *u < 1.0)) {
        return Err(Error::InvalidConfig(
            "grid levels must lie strictly inside (0, 1)".into(),
        ));
    }
    let mut class0: Vec<(f64, f64)> = Vec::new();
    let mut class1: Vec<(f64, f64)> = Vec::new();
    let mut scored: Vec<(f64, bool, f64)> = Vec::new();
    for i in 0..scores.len() {
        if weights[i] == 0.0 {
            continue;
        }
        if outcome[i] == 1.0 {
            class1.push((scores[i], weights[i]));
        } else {
            class0.push((scores[i], weights[i]));
        }
        scored.push((scores[i], outcome[i] == 1.0, weights[i]));
    }
    if class0.is_empty() || class1.is_empty() {
        return Err(Error::OneClass);
    }
    class0.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    class1.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let w0: f64 = class0.iter().map(|t| t.1).sum();
    let w1: f64 = class1.iter().map(|t| t.1).sum();

    // survival of the case scores above a threshold
    let surv1 = |c: f64| -> f64 {
        let first_above = class1.partition_point(|t| t.0 <= c);
        class1[first_above..].iter().map(|t| t.1).sum::<f64>() / w1
    };

    // prefix sums of control weight for the inverse lookup
    let mut cum = 0.0;
    let control_surv_after: Vec<f64> = class0
        .iter()
        .map(|t| {
            cum += t.1;
            (w0 - cum) / w0
        })
        .collect();

    let mut sensitivity = Vec::with_capacity(grid.len());
    for &u in grid {
        // smallest control score with survival <= u; survival is flat
        // between observed scores, so candidates are the scores themselves
        let idx = control_surv_after.partition_point(|&s| s > u);
        let threshold = if idx < class0.len() {
            class0[idx].0
        } else {
            // survival never reaches u among controls: every threshold
            // below the minimum keeps all cases
            f64::NEG_INFINITY
        };
        sensitivity.push(surv1(threshold));
    }

    let auc = c_index_from_scores(&mut scored, false)?;
    let mut pts: Vec<(f64, f64)> = std::iter::once((0.0, 0.0))
        .chain(grid.iter().copied().zip(sensitivity.iter().copied()))
        .chain(std::iter::once((1.0, 1.0)))
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let auc_trapezoid = pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();

    Ok(RocCurve {
        grid: grid.to_vec(),
        sensitivity,
        auc,
        auc_trapezoid,
    })
}
