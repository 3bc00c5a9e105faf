//! Logistic learners: weighted maximum likelihood via iteratively
//! reweighted least squares, and its lasso-penalized variant solved by
//! coordinate descent on the quadratic surrogate.

use nalgebra::{DMatrix, DVector};

use crate::dataset::WeightedView;
use crate::error::{Error, Result};

use super::{
    densify, solve_gram, solve_penalized_wls, DenseFold, FitMeta, FittedModel, LearnerKind,
    LearnerSpec, PenalizedWls, SEPARATION_CAP,
};

const OMEGA_FLOOR: f64 = 1e-10;

#[inline]
fn expit(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

#[inline]
fn log1p_exp(eta: f64) -> f64 {
    // ln(1 + e^eta), stable for large |eta|
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

fn check_two_classes(fold: &DenseFold) -> Result<()> {
    let mut w1 = 0.0;
    let mut w0 = 0.0;
    for (y, w) in fold.y.iter().zip(&fold.w) {
        if *y == 1.0 {
            w1 += w;
        } else {
            w0 += w;
        }
    }
    if w1 == 0.0 || w0 == 0.0 {
        return Err(Error::OneClassFold);
    }
    Ok(())
}

fn log_likelihood(fold: &DenseFold, coef: &[f64]) -> f64 {
    let mut ll = 0.0;
    for i in 0..fold.n {
        let eta = coef[0]
            + coef[1..]
                .iter()
                .zip(&fold.x[i * fold.p..(i + 1) * fold.p])
                .map(|(c, z)| c * z)
                .sum::<f64>();
        ll += fold.w[i] * (fold.y[i] * eta - log1p_exp(eta));
    }
    ll
}

/// Weighted logistic MLE via IRLS, run until the scaled score vector drops
/// below `spec.tol`. Coefficients crossing [`SEPARATION_CAP`] abort the fit
/// as (quasi-)separated.
pub fn fit_logistic(train: &WeightedView<'_>, spec: &LearnerSpec) -> Result<FittedModel> {
    let fold = densify(train)?;
    check_two_classes(&fold)?;
    let dim = fold.p + 1;
    let total_w: f64 = fold.w.iter().sum();
    let mut coef = vec![0.0; dim];
    let mut ll = log_likelihood(&fold, &coef);
    let mut iterations = 0;
    let mut converged = false;
    let mut zt = vec![0.0; dim];
    while iterations < spec.max_iter.max(1) {
        iterations += 1;
        let mut gram = DMatrix::zeros(dim, dim);
        let mut score = DVector::zeros(dim);
        for i in 0..fold.n {
            zt[0] = 1.0;
            zt[1..].copy_from_slice(&fold.x[i * fold.p..(i + 1) * fold.p]);
            let eta: f64 = coef.iter().zip(&zt).map(|(c, z)| c * z).sum();
            let p = expit(eta);
            let omega = (p * (1.0 - p)).max(OMEGA_FLOOR);
            let w = fold.w[i];
            let resid = w * (fold.y[i] - p);
            for a in 0..dim {
                score[a] += resid * zt[a];
                let wz = w * omega * zt[a];
                for b in a..dim {
                    gram[(a, b)] += wz * zt[b];
                }
            }
        }
        if score.amax() / total_w <= spec.tol {
            converged = true;
            break;
        }
        for a in 0..dim {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        let delta = solve_gram(gram, score)?;
        // step halving keeps the likelihood nondecreasing
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let cand: Vec<f64> = coef
                .iter()
                .zip(delta.iter())
                .map(|(c, d)| c + step * d)
                .collect();
            let cand_ll = log_likelihood(&fold, &cand);
            if cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) {
                debug_assert!(cand_ll >= ll - 1e-8 * (1.0 + ll.abs()));
                coef = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if coef.iter().any(|c| c.abs() > SEPARATION_CAP) {
            return Err(Error::Separation);
        }
    }
    Ok(FittedModel {
        kind: LearnerKind::Logistic,
        coef,
        meta: FitMeta {
            iterations,
            converged,
        },
    })
}

/// Lasso-penalized logistic regression: maximizes the weighted average
/// log-likelihood minus `lambda |b|_1` (intercept unpenalized) by IRLS with
/// a coordinate-descent inner solve on the quadratic surrogate.
pub fn fit_lasso_logistic(train: &WeightedView<'_>, spec: &LearnerSpec) -> Result<FittedModel> {
    let fold = densify(train)?;
    check_two_classes(&fold)?;
    let total_w: f64 = fold.w.iter().sum();

    let mut cols: Vec<Vec<f64>> = (0..fold.p)
        .map(|j| (0..fold.n).map(|i| fold.x[i * fold.p + j]).collect())
        .collect();
    let mut scales = vec![1.0; fold.p];
    if spec.standardize {
        for (j, col) in cols.iter_mut().enumerate() {
            let mean: f64 = col.iter().zip(&fold.w).map(|(x, w)| x * w).sum::<f64>() / total_w;
            let var: f64 = col
                .iter()
                .zip(&fold.w)
                .map(|(x, w)| w * (x - mean) * (x - mean))
                .sum::<f64>()
                / total_w;
            let sd = var.sqrt();
            if sd > 1e-12 {
                scales[j] = sd;
                for x in col.iter_mut() {
                    *x /= sd;
                }
            }
        }
    }
    let penalties = vec![spec.lambda; fold.p];

    // working state on the scaled basis
    let mut intercept = 0.0;
    let mut slopes = vec![0.0; fold.p];
    let mut iterations = 0;
    let mut converged = false;
    let outer_cap = spec.max_iter.clamp(1, 100);
    let mut v = vec![0.0; fold.n];
    let mut zeta = vec![0.0; fold.n];
    while iterations < outer_cap {
        iterations += 1;
        for i in 0..fold.n {
            let eta = intercept
                + cols
                    .iter()
                    .zip(&slopes)
                    .map(|(c, b)| c[i] * b)
                    .sum::<f64>();
            let p = expit(eta);
            let omega = (p * (1.0 - p)).max(1e-5);
            v[i] = fold.w[i] * omega;
            zeta[i] = eta + (fold.y[i] - p) / omega;
        }
        let sol = solve_penalized_wls(
            &PenalizedWls {
                cols: &cols,
                v: &v,
                y: &zeta,
                penalties: &penalties,
                tol: spec.tol,
                max_sweeps: spec.max_iter,
            },
            Some(&slopes),
        );
        let change = (sol.intercept - intercept)
            .abs()
            .max(
                sol.slopes
                    .iter()
                    .zip(&slopes)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            );
        intercept = sol.intercept;
        slopes = sol.slopes;
        if intercept.abs() > SEPARATION_CAP
            || slopes
                .iter()
                .zip(&scales)
                .any(|(b, s)| (b / s).abs() > SEPARATION_CAP)
        {
            return Err(Error::Separation);
        }
        if change <= spec.tol.max(1e-10) * 10.0 {
            converged = true;
            break;
        }
    }

    let mut coef = Vec::with_capacity(fold.p + 1);
    coef.push(intercept);
    for (b, s) in slopes.iter().zip(&scales) {
        coef.push(b / s);
    }
    Ok(FittedModel {
        kind: LearnerKind::LassoLogistic,
        coef,
        meta: FitMeta {
            iterations,
            converged,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, OutcomeKind, WeightedView};
    use crate::streams::rng_for;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn binary_data(z: &[Vec<f64>], y: &[f64]) -> Dataset {
        let p = z[0].len();
        Dataset::new(
            z.iter().flat_map(|r| r.iter().copied()).collect(),
            p,
            y.to_vec(),
            OutcomeKind::Binary,
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn intercept_only_mle_is_logit_prevalence() {
        // constant feature: slope 0, intercept = logit of weighted prevalence
        let z: Vec<Vec<f64>> = (0..12).map(|_| vec![2.5]).collect();
        let y: Vec<f64> = (0..12).map(|i| if i < 9 { 1.0 } else { 0.0 }).collect();
        let data = binary_data(&z, &y);
        let rows: Vec<usize> = (0..12).collect();
        let w = vec![1u32; 12];
        let view = WeightedView::new(&data, &rows, &w).unwrap();
        let m = fit_logistic(&view, &LearnerSpec::new(LearnerKind::Logistic)).unwrap();
        let prev: f64 = 9.0 / 12.0;
        let eta = m.coef[0] + m.coef[1] * 2.5;
        assert!((eta - (prev / (1.0 - prev)).ln()).abs() < 1e-6, "{eta}");
    }

    #[test]
    fn weight_equals_duplication() {
        let mut rng = rng_for(41, &[0]);
        let n = 30;
        let z: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let y: Vec<f64> = z
            .iter()
            .map(|r| {
                let p = expit(0.3 + r[0] - r[1]);
                if rng.random_range(0.0..1.0) < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let data = binary_data(&z, &y);
        let weights: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let rows: Vec<usize> = (0..n).collect();
        let view = WeightedView::new(&data, &rows, &weights).unwrap();
        let spec = LearnerSpec::new(LearnerKind::Logistic);
        let weighted = fit_logistic(&view, &spec).unwrap();

        let expanded_rows: Vec<usize> = (0..n)
            .flat_map(|i| std::iter::repeat(i).take(weights[i] as usize))
            .collect();
        let expanded = data.select_rows(&expanded_rows);
        let all: Vec<usize> = (0..expanded.n()).collect();
        let unit = vec![1u32; expanded.n()];
        let ev = WeightedView::new(&expanded, &all, &unit).unwrap();
        let plain = fit_logistic(&ev, &spec).unwrap();
        for (a, b) in weighted.coef.iter().zip(&plain.coef) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn separation_flagged() {
        let z: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i >= 5 { 1.0 } else { 0.0 }).collect();
        let data = binary_data(&z, &y);
        let rows: Vec<usize> = (0..10).collect();
        let w = vec![1u32; 10];
        let view = WeightedView::new(&data, &rows, &w).unwrap();
        let err = fit_logistic(&view, &LearnerSpec::new(LearnerKind::Logistic)).unwrap_err();
        assert_eq!(err, Error::Separation);
    }

    #[test]
    fn one_class_fold_rejected() {
        let z: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let y = vec![1.0; 6];
        // bypass dataset validation via continuous outcome kind, the learner
        // still needs both classes
        let data = Dataset::new(
            z.iter().flatten().copied().collect(),
            1,
            y,
            OutcomeKind::Continuous,
            None,
            None,
        )
        .unwrap();
        let rows: Vec<usize> = (0..6).collect();
        let w = vec![1u32; 6];
        let view = WeightedView::new(&data, &rows, &w).unwrap();
        assert_eq!(
            fit_logistic(&view, &LearnerSpec::new(LearnerKind::Logistic)).unwrap_err(),
            Error::OneClassFold
        );
    }

    #[test]
    fn lasso_logistic_zero_penalty_matches_mle() {
        let mut rng = rng_for(42, &[0]);
        let n = 120;
        let z: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let y: Vec<f64> = z
            .iter()
            .map(|r| {
                let p = expit(-0.2 + 0.8 * r[0] - 0.5 * r[2]);
                if rng.random_range(0.0..1.0) < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let data = binary_data(&z, &y);
        let rows: Vec<usize> = (0..n).collect();
        let w = vec![1u32; n];
        let view = WeightedView::new(&data, &rows, &w).unwrap();
        let mle = fit_logistic(&view, &LearnerSpec::new(LearnerKind::Logistic)).unwrap();
        let lasso =
            fit_lasso_logistic(&view, &LearnerSpec::new(LearnerKind::LassoLogistic)).unwrap();
        for (a, b) in mle.coef.iter().zip(&lasso.coef) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn huge_penalty_shrinks_to_prevalence() {
        let mut rng = rng_for(43, &[0]);
        let n = 60;
        let z: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let data = binary_data(&z, &y);
        let rows: Vec<usize> = (0..n).collect();
        let w = vec![1u32; n];
        let view = WeightedView::new(&data, &rows, &w).unwrap();
        let m = fit_lasso_logistic(
            &view,
            &LearnerSpec::new(LearnerKind::LassoLogistic).with_lambda(50.0),
        )
        .unwrap();
        assert!(m.slopes().iter().all(|&b| b == 0.0));
        let prev = y.iter().sum::<f64>() / n as f64;
        assert!((m.coef[0] - (prev / (1.0 - prev)).ln()).abs() < 1e-4, "{}", m.coef[0]);
    }
}
