//! Least-squares learners: OLS and the lasso.

use nalgebra::{DMatrix, DVector};

use crate::dataset::WeightedView;
use crate::error::Result;

use super::{
    densify, solve_gram, solve_penalized_wls, FitMeta, FittedModel, LearnerKind, LearnerSpec,
    PenalizedWls,
};

/// Weighted ordinary least squares with an intercept: minimizes
/// `sum_i w_i (y_i - b . (1, z_i))^2`.
pub fn fit_ols(train: &WeightedView<'_>, _spec: &LearnerSpec) -> Result<FittedModel> {
    let fold = densify(train)?;
    let dim = fold.p + 1;
    let mut gram = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let mut zt = vec![0.0; dim];
    for i in 0..fold.n {
        let w = fold.w[i];
        zt[0] = 1.0;
        zt[1..].copy_from_slice(&fold.x[i * fold.p..(i + 1) * fold.p]);
        for a in 0..dim {
            let wz = w * zt[a];
            rhs[a] += wz * fold.y[i];
            for b in a..dim {
                gram[(a, b)] += wz * zt[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let coef = solve_gram(gram, rhs)?;
    Ok(FittedModel {
        kind: LearnerKind::Ols,
        coef: coef.iter().copied().collect(),
        meta: FitMeta {
            iterations: 1,
            converged: true,
        },
    })
}

/// Smallest penalty that zeroes every slope:
/// `max_j |(1/W) sum_i w_i z_ij (y_i - ybar_w)|`, computed on the same
/// scale the fit penalizes (standardized when `spec.standardize`).
pub fn lasso_lambda_max(train: &WeightedView<'_>, spec: &LearnerSpec) -> Result<f64> {
    let fold = densify(train)?;
    let total_w: f64 = fold.w.iter().sum();
    let y_mean = fold.y.iter().zip(&fold.w).map(|(y, w)| y * w).sum::<f64>() / total_w;
    let mut worst = 0.0f64;
    for j in 0..fold.p {
        let mut dot = 0.0;
        let mut mean = 0.0;
        let mut sq = 0.0;
        for i in 0..fold.n {
            let x = fold.x[i * fold.p + j];
            dot += fold.w[i] * x * (fold.y[i] - y_mean);
            mean += fold.w[i] * x;
            sq += fold.w[i] * x * x;
        }
        dot /= total_w;
        mean /= total_w;
        let sd = (sq / total_w - mean * mean).max(0.0).sqrt();
        let scaled = if spec.standardize {
            if sd > 0.0 {
                dot / sd
            } else {
                0.0
            }
        } else {
            dot
        };
        worst = worst.max(scaled.abs());
    }
    Ok(worst)
}

/// Lasso regression: minimizes
/// `(1/(2W)) sum_i w_i (y_i - a - b . z_i)^2 + lambda |b|_1`
/// by cyclic coordinate descent, intercept unpenalized. With
/// `spec.standardize` the penalty applies to standardized coefficients.
pub fn fit_lasso(train: &WeightedView<'_>, spec: &LearnerSpec) -> Result<FittedModel> {
    let fold = densify(train)?;
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
    let sol = solve_penalized_wls(
        &PenalizedWls {
            cols: &cols,
            v: &fold.w,
            y: &fold.y,
            penalties: &penalties,
            tol: spec.tol,
            max_sweeps: spec.max_iter,
        },
        None,
    );

    let mut coef = Vec::with_capacity(fold.p + 1);
    coef.push(sol.intercept);
    for (b, s) in sol.slopes.iter().zip(&scales) {
        coef.push(b / s);
    }
    // intercept was computed on the scaled basis; rescaling slopes keeps the
    // fitted values identical, so it carries over unchanged
    Ok(FittedModel {
        kind: LearnerKind::Lasso,
        coef,
        meta: FitMeta {
            iterations: sol.sweeps,
            converged: sol.converged,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, OutcomeKind};
    use crate::learners::lasso_kkt_residual;
    use crate::learners::Scorer;
    use crate::streams::rng_for;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn view_all(data: &Dataset, weights: &[u32]) -> (Vec<usize>, Vec<u32>) {
        ((0..data.n()).collect(), weights.to_vec())
    }

    fn make(xs: &[&[f64]], y: &[f64]) -> Dataset {
        let p = xs[0].len();
        Dataset::new(
            xs.iter().flat_map(|r| r.iter().copied()).collect(),
            p,
            y.to_vec(),
            OutcomeKind::Continuous,
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn ols_interpolates_two_points() {
        let data = make(&[&[0.0], &[1.0]], &[1.0, 3.0]);
        let (rows, w) = view_all(&data, &[1, 1]);
        let view = crate::dataset::WeightedView::new(&data, &rows, &w).unwrap();
        let m = fit_ols(&view, &LearnerSpec::new(LearnerKind::Ols)).unwrap();
        assert!((m.coef[0] - 1.0).abs() < 1e-10);
        assert!((m.coef[1] - 2.0).abs() < 1e-10);
        assert!((m.score(&[0.5]) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn ols_weight_two_equals_duplicated_row() {
        let mut rng = rng_for(31, &[0]);
        for _ in 0..50 {
            let n = 8;
            let rows_raw: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let refs: Vec<&[f64]> = rows_raw.iter().map(|r| r.as_slice()).collect();
            let data = make(&refs, &y);
            let weights: Vec<u32> = (0..n).map(|_| rng.random_range(0..4)).collect();
            if weights.iter().map(|&w| w as usize).sum::<usize>() < 5 {
                continue;
            }
            let rows: Vec<usize> = (0..n).collect();
            let view = crate::dataset::WeightedView::new(&data, &rows, &weights).unwrap();
            let weighted = fit_ols(&view, &LearnerSpec::new(LearnerKind::Ols)).unwrap();

            let expanded_rows: Vec<usize> = (0..n)
                .flat_map(|i| std::iter::repeat(i).take(weights[i] as usize))
                .collect();
            let expanded = data.select_rows(&expanded_rows);
            let unit = vec![1u32; expanded.n()];
            let all: Vec<usize> = (0..expanded.n()).collect();
            let ev = crate::dataset::WeightedView::new(&expanded, &all, &unit).unwrap();
            let plain = fit_ols(&ev, &LearnerSpec::new(LearnerKind::Ols)).unwrap();
            for (a, b) in weighted.coef.iter().zip(&plain.coef) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn lasso_with_zero_penalty_matches_ols() {
        let mut rng = rng_for(32, &[0]);
        let n = 40;
        let rows_raw: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let y: Vec<f64> = rows_raw
            .iter()
            .map(|r| 0.5 + r[0] - 2.0 * r[2] + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let refs: Vec<&[f64]> = rows_raw.iter().map(|r| r.as_slice()).collect();
        let data = make(&refs, &y);
        let rows: Vec<usize> = (0..n).collect();
        let w = vec![1u32; n];
        let view = crate::dataset::WeightedView::new(&data, &rows, &w).unwrap();
        let ols = fit_ols(&view, &LearnerSpec::new(LearnerKind::Ols)).unwrap();
        let lasso = fit_lasso(&view, &LearnerSpec::new(LearnerKind::Lasso)).unwrap();
        for (a, b) in ols.coef.iter().zip(&lasso.coef) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn lambda_at_threshold_zeroes_all_slopes() {
        let mut rng = rng_for(33, &[0]);
        for standardize in [false, true] {
            let n = 30;
            let rows_raw: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..3)
                        .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal) + 1.0)
                        .collect()
                })
                .collect();
            let y: Vec<f64> = rows_raw
                .iter()
                .map(|r| r[0] + rng.sample::<f64, _>(StandardNormal))
                .collect();
            let refs: Vec<&[f64]> = rows_raw.iter().map(|r| r.as_slice()).collect();
            let data = make(&refs, &y);
            let rows: Vec<usize> = (0..n).collect();
            let w = vec![1u32; n];
            let view = crate::dataset::WeightedView::new(&data, &rows, &w).unwrap();
            let spec = LearnerSpec::new(LearnerKind::Lasso).with_standardize(standardize);
            let lmax = lasso_lambda_max(&view, &spec).unwrap();
            let at = fit_lasso(&view, &spec.clone().with_lambda(lmax * (1.0 + 1e-9))).unwrap();
            assert!(at.slopes().iter().all(|&b| b == 0.0), "{:?}", at.slopes());
            let below = fit_lasso(&view, &spec.with_lambda(lmax * 0.95)).unwrap();
            assert!(below.slopes().iter().any(|&b| b != 0.0));
        }
    }

    #[test]
    fn univariate_soft_threshold_closed_form() {
        // one predictor standardized to unit weighted variance
        let mut rng = rng_for(34, &[0]);
        let n = 200;
        let mut z: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mean = z.iter().sum::<f64>() / n as f64;
        let sd = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        for x in z.iter_mut() {
            *x = (*x - mean) / sd;
        }
        let y: Vec<f64> = z
            .iter()
            .map(|&x| 0.9 * x + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let refs: Vec<Vec<f64>> = z.iter().map(|&x| vec![x]).collect();
        let refs2: Vec<&[f64]> = refs.iter().map(|r| r.as_slice()).collect();
        let data = make(&refs2, &y);
        let rows: Vec<usize> = (0..n).collect();
        let w = vec![1u32; n];
        let view = crate::dataset::WeightedView::new(&data, &rows, &w).unwrap();
        let ols = fit_ols(&view, &LearnerSpec::new(LearnerKind::Ols)).unwrap();
        let lam = 0.2;
        let lasso = fit_lasso(
            &view,
            &LearnerSpec::new(LearnerKind::Lasso).with_lambda(lam),
        )
        .unwrap();
        let want = super::super::soft_threshold(ols.coef[1], lam);
        assert!(
            (lasso.coef[1] - want).abs() < 1e-6,
            "{} vs {want}",
            lasso.coef[1]
        );
    }

    #[test]
    fn lasso_kkt_residual_within_tol() {
        let mut rng = rng_for(35, &[0]);
        for trial in 0..100 {
            let n = 25;
            let p = 6;
            let rows_raw: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            let y: Vec<f64> = rows_raw
                .iter()
                .map(|r| r[0] - r[1] + 0.5 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let refs: Vec<&[f64]> = rows_raw.iter().map(|r| r.as_slice()).collect();
            let data = make(&refs, &y);
            let rows: Vec<usize> = (0..n).collect();
            let w: Vec<u32> = (0..n).map(|_| rng.random_range(1..4)).collect();
            let view = crate::dataset::WeightedView::new(&data, &rows, &w).unwrap();
            let lam = [0.0, 0.05, 0.3][trial % 3];
            let spec = LearnerSpec::new(LearnerKind::Lasso)
                .with_lambda(lam)
                .with_standardize(false);
            let fit = fit_lasso(&view, &spec).unwrap();
            assert!(fit.meta.converged);
            let cols: Vec<Vec<f64>> = (0..p)
                .map(|j| rows_raw.iter().map(|r| r[j]).collect())
                .collect();
            let v: Vec<f64> = w.iter().map(|&x| x as f64).collect();
            let kkt = lasso_kkt_residual(
                &cols,
                &v,
                &y,
                &vec![lam; p],
                fit.coef[0],
                &fit.coef[1..],
            );
            assert!(kkt <= spec.tol * 10.0, "kkt residual {kkt}");
        }
    }
}
