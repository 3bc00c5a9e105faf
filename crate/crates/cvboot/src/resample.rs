//! Random train/test splits, multinomial bootstrap weights, the
//! training-size adjustment and the effective-sample-size factor.
//!
//! A bootstrap sample is represented as integer row multiplicities over the
//! original dataset rather than a copied table. Splitting the *original*
//! rows and weighting both sides keeps bootstrapped train and test folds
//! disjoint, which is the property the whole inference rests on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, WeightedView};
use crate::error::{Error, Result};

/// Fraction of distinct rows in a bootstrap sample, `1 - (1 - 1/n)^n` for
/// large `n`, kept at the conventional three digits so size adjustments are
/// reproducible.
pub const DISTINCT_FRACTION: f64 = 0.632;

/// Default weight on the testing-size term of the size-adjustment
/// objective: `1 - 0.632`.
pub const DEFAULT_SIZE_PENALTY: f64 = 0.368;

/// A disjoint train/test partition of `0..n` for one CV iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    train: Vec<usize>,
    test: Vec<usize>,
}

impl SplitAssignment {
    pub fn new(train: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        let n = train.len() + test.len();
        if train.is_empty() || test.is_empty() {
            return Err(Error::InvalidConfig(
                "both folds must be nonempty".into(),
            ));
        }
        let mut seen = vec![false; n];
        for &i in train.iter().chain(test.iter()) {
            if i >= n || seen[i] {
                return Err(Error::DimensionMismatch(
                    "train and test must partition 0..n".into(),
                ));
            }
            seen[i] = true;
        }
        Ok(SplitAssignment { train, test })
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn n(&self) -> usize {
        self.train.len() + self.test.len()
    }
}

/// Integer multiplicities realizing one bootstrap draw; they always sum
/// to `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootWeights {
    w: Vec<u32>,
}

impl BootWeights {
    /// Unit weights, i.e. the original sample.
    pub fn unit(n: usize) -> Self {
        BootWeights { w: vec![1; n] }
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn total(&self) -> u64 {
        self.w.iter().map(|&x| x as u64).sum()
    }
}

/// How to draw one train/test split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Number of rows assigned to training.
    pub train_size: usize,
    /// Balance binary outcome classes across the two folds.
    pub stratify_on_outcome: bool,
    /// Retries for folds that come out degenerate under bootstrap weights.
    pub max_redraws: u32,
}

impl SplitConfig {
    pub fn new(train_size: usize) -> Self {
        SplitConfig {
            train_size,
            stratify_on_outcome: false,
            max_redraws: 100,
        }
    }
}

fn sample_subset<R: Rng>(pool: &mut [usize], take: usize, rng: &mut R) -> Vec<usize> {
    // partial Fisher-Yates: the first `take` entries are a uniform subset
    for i in 0..take {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool[..take].to_vec()
}

/// Draw a uniformly random size-`m` training set (optionally stratified on
/// a binary label), the remainder forming the test set.
pub fn draw_split<R: Rng>(
    n: usize,
    config: &SplitConfig,
    labels: Option<&[bool]>,
    rng: &mut R,
) -> Result<SplitAssignment> {
    let m = config.train_size;
    if m == 0 || m >= n {
        return Err(Error::InvalidConfig(format!(
            "train size {m} must lie in [1, {}]",
            n - 1
        )));
    }
    if !config.stratify_on_outcome {
        let mut pool: Vec<usize> = (0..n).collect();
        let train = sample_subset(&mut pool, m, rng);
        let test = pool[m..].to_vec();
        return Ok(SplitAssignment { train, test });
    }

    let labels = labels.ok_or_else(|| {
        Error::InvalidConfig("stratified split requires binary outcome labels".into())
    })?;
    if labels.len() != n {
        return Err(Error::DimensionMismatch(
            "label vector length must equal n".into(),
        ));
    }
    let mut class1: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let mut class0: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
    let (n1, n0) = (class1.len(), class0.len());
    // proportional quota; each class must land on both sides of the split
    let m1 = ((m as f64 * n1 as f64 / n as f64).round() as usize).clamp(1, m.saturating_sub(1));
    let m0 = m - m1;
    for (class, avail, quota) in [(1u8, n1, m1), (0u8, n0, m0)] {
        let test_quota = avail.saturating_sub(quota);
        if quota == 0 || quota >= avail + 1 || test_quota == 0 {
            return Err(Error::InfeasibleStratification {
                class,
                available: avail,
                needed: if quota >= avail + 1 { quota } else { quota + 1 },
            });
        }
    }
    let mut train = sample_subset(&mut class1, m1, rng);
    train.extend(sample_subset(&mut class0, m0, rng));
    let mut test: Vec<usize> = class1[m1..].to_vec();
    test.extend_from_slice(&class0[m0..]);
    Ok(SplitAssignment { train, test })
}

/// One multinomial(n; 1/n, ..., 1/n) draw of row multiplicities.
pub fn draw_boot_weights<R: Rng>(n: usize, rng: &mut R) -> BootWeights {
    let mut w = vec![0u32; n];
    for _ in 0..n {
        w[rng.random_range(0..n)] += 1;
    }
    BootWeights { w }
}

fn size_objective(n: usize, m: usize, m_adj: usize, lambda0: f64) -> f64 {
    let fit = DISTINCT_FRACTION * m_adj as f64 / m as f64 - 1.0;
    let shrink = (n - m) as f64 / (n - m_adj) as f64 - 1.0;
    fit * fit + lambda0 * shrink * shrink
}

/// Enlarged training size for bootstrapped cross-validation: the integer
/// `m_adj` in `[m, n-1]` minimizing
/// `(0.632 m_adj / m - 1)^2 + lambda0 ((n-m)/(n-m_adj) - 1)^2`,
/// found by exhaustive scan with ties broken toward the smaller value.
///
/// The first term pulls the expected number of distinct bootstrapped
/// training rows (`0.632 m_adj`) toward `m`; the second limits the loss of
/// testing rows.
pub fn solve_m_adj(n: usize, m: usize, lambda0: f64) -> Result<usize> {
    if m == 0 || m >= n {
        return Err(Error::InvalidConfig(format!(
            "train size {m} must lie in [1, {}]",
            n - 1
        )));
    }
    if lambda0 < 0.0 {
        return Err(Error::InvalidConfig("lambda0 must be >= 0".into()));
    }
    let mut best = m;
    let mut best_val = size_objective(n, m, m, lambda0);
    for cand in (m + 1)..n {
        let val = size_objective(n, m, cand, lambda0);
        if val < best_val {
            best = cand;
            best_val = val;
        }
    }
    Ok(best)
}

/// Effective-sample-size factor `(n - 0.368 m_adj) / n` multiplying the
/// bootstrap variance; it corrects the upward bias caused by the reduced
/// number of distinct training rows.
pub fn adjustment_factor(n: usize, m_adj: usize) -> f64 {
    (n as f64 - DEFAULT_SIZE_PENALTY * m_adj as f64) / n as f64
}

/// Apply bootstrap weights to both sides of a split. Rows keep their
/// original indices; weight-zero rows stay in the view with weight zero.
pub fn weighted_fold<'a>(
    data: &'a Dataset,
    split: &'a SplitAssignment,
    weights: &'a BootWeights,
) -> Result<(WeightedView<'a>, WeightedView<'a>)> {
    if split.n() != data.n() || weights.n() != data.n() {
        return Err(Error::DimensionMismatch(
            "split and weights must cover the same n rows".into(),
        ));
    }
    let train = WeightedView::new(data, split.train(), weights.as_slice())?;
    let test = WeightedView::new(data, split.test(), weights.as_slice())?;
    if train.total_weight() == 0 {
        return Err(Error::DegenerateFold("training fold has zero total weight"));
    }
    if test.total_weight() == 0 {
        return Err(Error::DegenerateFold("testing fold has zero total weight"));
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::OutcomeKind;
    use crate::streams::rng_for;

    #[test]
    fn split_partitions() {
        let mut rng = rng_for(1, &[0]);
        let s = draw_split(5, &SplitConfig::new(3), None, &mut rng).unwrap();
        assert_eq!(s.train().len(), 3);
        assert_eq!(s.test().len(), 2);
        let mut all: Vec<usize> = s.train().iter().chain(s.test()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn split_inclusion_frequency_uniform() {
        // each index should land in the training fold with probability m/n
        let (n, m, draws) = (90usize, 80usize, 10_000usize);
        let mut counts = vec![0usize; n];
        let mut rng = rng_for(2, &[0]);
        let cfg = SplitConfig::new(m);
        for _ in 0..draws {
            for &i in draw_split(n, &cfg, None, &mut rng).unwrap().train() {
                counts[i] += 1;
            }
        }
        let want = m as f64 / n as f64;
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - want).abs() < 0.02, "freq {freq} vs {want}");
        }
    }

    #[test]
    fn stratified_infeasible_with_two_cases() {
        // two cases cannot appear on both sides once the test fold shrinks
        // to a single row
        let n = 10;
        let labels: Vec<bool> = (0..n).map(|i| i < 2).collect();
        let mut cfg = SplitConfig::new(n - 1);
        cfg.stratify_on_outcome = true;
        let mut rng = rng_for(3, &[0]);
        let err = draw_split(n, &cfg, Some(&labels), &mut rng).unwrap_err();
        assert!(matches!(err, Error::InfeasibleStratification { .. }));
    }

    #[test]
    fn stratified_split_balances_classes() {
        let n = 40;
        let labels: Vec<bool> = (0..n).map(|i| i % 4 == 0).collect(); // 10 cases
        let mut cfg = SplitConfig::new(20);
        cfg.stratify_on_outcome = true;
        let mut rng = rng_for(4, &[0]);
        for _ in 0..50 {
            let s = draw_split(n, &cfg, Some(&labels), &mut rng).unwrap();
            let cases_train = s.train().iter().filter(|&&i| labels[i]).count();
            assert_eq!(cases_train, 5);
        }
    }

    #[test]
    fn boot_weights_sum_to_n() {
        let mut rng = rng_for(5, &[0]);
        for n in [2usize, 3, 17, 100] {
            for _ in 0..200 {
                assert_eq!(draw_boot_weights(n, &mut rng).total(), n as u64);
            }
        }
    }

    #[test]
    fn boot_weights_match_multinomial_pmf_n2() {
        let mut rng = rng_for(6, &[0]);
        let draws = 10_000;
        let mut counts = [0usize; 3]; // w[0] in {0,1,2}
        for _ in 0..draws {
            counts[draw_boot_weights(2, &mut rng).as_slice()[0] as usize] += 1;
        }
        let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
        assert!((probs[0] - 0.25).abs() < 0.02);
        assert!((probs[1] - 0.50).abs() < 0.02);
        assert!((probs[2] - 0.25).abs() < 0.02);
    }

    #[test]
    fn boot_weights_zero_fraction() {
        // E[fraction of zero-weight rows] = (1 - 1/n)^n
        let n = 100;
        let mut rng = rng_for(7, &[0]);
        let draws = 10_000;
        let mut zero_frac = 0.0;
        for _ in 0..draws {
            let w = draw_boot_weights(n, &mut rng);
            zero_frac += w.as_slice().iter().filter(|&&x| x == 0).count() as f64 / n as f64;
        }
        zero_frac /= draws as f64;
        let want = (1.0 - 1.0 / n as f64).powi(n as i32); // ~0.366
        assert!((zero_frac - want).abs() < 0.01, "{zero_frac} vs {want}");
    }

    #[test]
    fn m_adj_examples() {
        // second term off: minimizer is the integer nearest m / 0.632
        assert_eq!(solve_m_adj(90, 40, 0.0).unwrap(), 63);
        // frozen from an independent exhaustive scan of the objective
        assert_eq!(solve_m_adj(90, 80, DEFAULT_SIZE_PENALTY).unwrap(), 81);
        // huge penalty pins the testing size, so m_adj = m
        assert_eq!(solve_m_adj(90, 80, 1e6).unwrap(), 80);
        // m = n-1 leaves a single feasible value
        assert_eq!(solve_m_adj(90, 89, DEFAULT_SIZE_PENALTY).unwrap(), 89);
    }

    #[test]
    fn m_adj_agrees_with_scan_and_is_monotone() {
        // independent oracle: smallest argmin of the raw objective
        fn oracle(n: usize, m: usize, lambda0: f64) -> usize {
            (m..n)
                .map(|c| (c, size_objective(n, m, c, lambda0)))
                .fold((m, f64::INFINITY), |acc, (c, v)| {
                    if v < acc.1 {
                        (c, v)
                    } else {
                        acc
                    }
                })
                .0
        }
        for n in [10usize, 37, 90, 200] {
            let mut prev = 0usize;
            for m in 1..n {
                let got = solve_m_adj(n, m, DEFAULT_SIZE_PENALTY).unwrap();
                assert_eq!(got, oracle(n, m, DEFAULT_SIZE_PENALTY));
                assert!(got >= prev, "m_adj not weakly increasing at n={n} m={m}");
                prev = got;
            }
        }
    }

    #[test]
    fn adjustment_factor_examples() {
        assert!((adjustment_factor(90, 80) - (90.0 - 0.368 * 80.0) / 90.0).abs() < 1e-12);
        assert!((adjustment_factor(90, 80) - 0.672889).abs() < 1e-6);
        assert_eq!(adjustment_factor(50, 0), 1.0);
        for n in [5usize, 90, 1000] {
            for m_adj in 1..n {
                let f = adjustment_factor(n, m_adj);
                assert!(f > 0.632 && f <= 1.0);
            }
        }
    }

    #[test]
    fn weighted_fold_detects_zero_weight_side() {
        let data = Dataset::new(
            vec![0.0; 4],
            1,
            vec![1.0, 2.0, 3.0, 4.0],
            OutcomeKind::Continuous,
            None,
            None,
        )
        .unwrap();
        let split = SplitAssignment::new(vec![1, 2], vec![0, 3]).unwrap();
        let w = BootWeights { w: vec![4, 0, 0, 0] };
        let err = weighted_fold(&data, &split, &w).unwrap_err();
        assert!(matches!(err, Error::DegenerateFold(_)));

        let unit = BootWeights::unit(4);
        let (tr, te) = weighted_fold(&data, &split, &unit).unwrap();
        assert_eq!(tr.total_weight(), 2);
        assert_eq!(te.total_weight(), 2);
    }

    #[test]
    fn splits_and_weights_reproducible() {
        let cfg = SplitConfig::new(40);
        let a = draw_split(90, &cfg, None, &mut rng_for(9, &[1])).unwrap();
        let b = draw_split(90, &cfg, None, &mut rng_for(9, &[1])).unwrap();
        assert_eq!(a, b);
        let wa = draw_boot_weights(90, &mut rng_for(9, &[2]));
        let wb = draw_boot_weights(90, &mut rng_for(9, &[2]));
        assert_eq!(wa, wb);
    }
}
