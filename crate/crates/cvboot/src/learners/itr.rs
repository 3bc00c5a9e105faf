//! Individualized-treatment-rule learners.
//!
//! The score is fit by least squares on the expanded design
//! `[ (1, z) | (g - pi)(1, z) ]`: the first block captures prognosis, the
//! second approximates the conditional average treatment effect. Only the
//! second block is returned, so the fitted model scores a patient by the
//! estimated treatment benefit of assignment `g = 1`.

use nalgebra::{DMatrix, DVector};

use crate::dataset::WeightedView;
use crate::error::{Error, Result};

use super::{
    densify, solve_gram, solve_penalized_wls, FitMeta, FittedModel, LearnerKind, LearnerSpec,
    PenalizedWls,
};

pub fn fit_itr(train: &WeightedView<'_>, spec: &LearnerSpec) -> Result<FittedModel> {
    let fold = densify(train)?;
    let g = fold.g.as_ref().ok_or(Error::MissingTreatment)?;
    let total_w: f64 = fold.w.iter().sum();
    let treated_w: f64 = fold
        .w
        .iter()
        .zip(g)
        .filter(|(_, &t)| t == 1)
        .map(|(w, _)| w)
        .sum();
    if treated_w == 0.0 || treated_w == total_w {
        // a one-armed fold makes the contrast block collinear with the
        // prognostic block
        return Err(Error::SingularDesign);
    }
    let pi = match spec.treat_prob {
        Some(p) => p,
        None => treated_w / total_w,
    };

    let p = fold.p;
    let dim = 2 * (p + 1);
    match spec.kind {
        LearnerKind::ItrLasso => fit_itr_lasso(&fold, g, pi, spec),
        _ => {
            let mut gram = DMatrix::zeros(dim, dim);
            let mut rhs = DVector::zeros(dim);
            let mut row = vec![0.0; dim];
            for i in 0..fold.n {
                let contrast = g[i] as f64 - pi;
                row[0] = 1.0;
                row[1..=p].copy_from_slice(&fold.x[i * p..(i + 1) * p]);
                row[p + 1] = contrast;
                for j in 0..p {
                    row[p + 2 + j] = contrast * fold.x[i * p + j];
                }
                let w = fold.w[i];
                for a in 0..dim {
                    let wz = w * row[a];
                    rhs[a] += wz * fold.y[i];
                    for b in a..dim {
                        gram[(a, b)] += wz * row[b];
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
                kind: LearnerKind::ItrLinear,
                coef: coef.iter().skip(p + 1).copied().collect(),
                meta: FitMeta {
                    iterations: 1,
                    converged: true,
                },
            })
        }
    }
}

/// Penalized variant: `lambda_gamma` on the prognostic slopes, `lambda` on
/// the whole contrast block (its intercept included); the prognostic
/// intercept stays free.
fn fit_itr_lasso(
    fold: &super::DenseFold,
    g: &[u8],
    pi: f64,
    spec: &LearnerSpec,
) -> Result<FittedModel> {
    let p = fold.p;
    let total_w: f64 = fold.w.iter().sum();
    let q = 2 * p + 1; // z block, contrast, contrast * z block
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(q);
    for j in 0..p {
        cols.push((0..fold.n).map(|i| fold.x[i * p + j]).collect());
    }
    cols.push((0..fold.n).map(|i| g[i] as f64 - pi).collect());
    for j in 0..p {
        cols.push(
            (0..fold.n)
                .map(|i| (g[i] as f64 - pi) * fold.x[i * p + j])
                .collect(),
        );
    }
    let mut scales = vec![1.0; q];
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
    let mut penalties = vec![spec.lambda_gamma; p];
    penalties.extend(vec![spec.lambda; p + 1]);

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
    // keep only the contrast block, on the original scale
    let mut coef = Vec::with_capacity(p + 1);
    for j in p..q {
        coef.push(sol.slopes[j] / scales[j]);
    }
    Ok(FittedModel {
        kind: LearnerKind::ItrLasso,
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
    use crate::dataset::{Dataset, OutcomeKind, WeightedView};
    use crate::learners::Scorer;
    use crate::streams::rng_for;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn itr_dataset(n: usize, seed: u64) -> Dataset {
        // two potential-outcome regressions; the score target is their
        // slope difference (0, 0, 0.5, 0, 0.5, 0, ...)
        let p = 10;
        let b1 = [0.25, 0.25, 0.25, 0.25];
        let b0 = [0.25, -0.25, 0.25, -0.25];
        let mut rng = rng_for(seed, &[0]);
        let mut z = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        let mut gv = Vec::with_capacity(n);
        let mut assignment: Vec<u8> = (0..n).map(|i| (i < n / 2) as u8).collect();
        // random permutation of a balanced vector
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            assignment.swap(i, j);
        }
        for &gi in assignment.iter() {
            let zi: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let eps: f64 = rng.sample(StandardNormal);
            let coefs = if gi == 1 { &b1 } else { &b0 };
            let yi: f64 = zi[..4].iter().zip(coefs).map(|(z, b)| z * b).sum::<f64>() + eps;
            z.extend_from_slice(&zi);
            y.push(yi);
            gv.push(gi);
        }
        Dataset::new(z, p, y, OutcomeKind::Continuous, Some(gv), None).unwrap()
    }

    #[test]
    fn recovers_slope_difference_in_large_samples() {
        let n = 100_000;
        let data = itr_dataset(n, 51);
        let rows: Vec<usize> = (0..n).collect();
        let w = vec![1u32; n];
        let view = WeightedView::new(&data, &rows, &w).unwrap();
        let spec = LearnerSpec::new(LearnerKind::ItrLinear).with_treat_prob(0.5);
        let m = fit_itr(&view, &spec).unwrap();
        let want = [0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        for (a, b) in m.coef.iter().zip(&want) {
            assert!((a - b).abs() < 0.02, "{:?}", m.coef);
        }
    }

    #[test]
    fn constant_treatment_is_singular() {
        let n = 40;
        let mut rng = rng_for(52, &[0]);
        let z: Vec<f64> = (0..n * 2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        // constant treatment fails dataset validation, so fabricate the
        // degenerate arm through weights: all control rows get weight zero
        let g: Vec<u8> = (0..n).map(|i| (i < n - 1) as u8).collect();
        let data = Dataset::new(z, 2, y, OutcomeKind::Continuous, Some(g), None).unwrap();
        let rows: Vec<usize> = (0..n).collect();
        let mut w = vec![1u32; n];
        w[n - 1] = 0;
        let view = WeightedView::new(&data, &rows, &w).unwrap();
        let err = fit_itr(&view, &LearnerSpec::new(LearnerKind::ItrLinear)).unwrap_err();
        assert_eq!(err, Error::SingularDesign);
    }

    #[test]
    fn flipping_arms_negates_the_score() {
        let n = 400;
        let data = itr_dataset(n, 53);
        let flipped_g: Vec<u8> = data.treatment().unwrap().iter().map(|&t| 1 - t).collect();
        let flipped = Dataset::new(
            (0..n).flat_map(|i| data.row(i).to_vec()).collect(),
            data.p(),
            data.outcome().to_vec(),
            OutcomeKind::Continuous,
            Some(flipped_g),
            None,
        )
        .unwrap();
        let rows: Vec<usize> = (0..n).collect();
        let w = vec![1u32; n];
        let spec = LearnerSpec::new(LearnerKind::ItrLinear).with_treat_prob(0.5);
        let a = fit_itr(&WeightedView::new(&data, &rows, &w).unwrap(), &spec).unwrap();
        let b = fit_itr(&WeightedView::new(&flipped, &rows, &w).unwrap(), &spec).unwrap();
        for (x, y) in a.coef.iter().zip(&b.coef) {
            assert!((x + y).abs() < 1e-8, "{x} vs {y}");
        }
        let probe: Vec<f64> = (0..data.p()).map(|j| 0.1 * j as f64).collect();
        assert!((a.score(&probe) + b.score(&probe)).abs() < 1e-7);
    }

    #[test]
    fn weighted_fit_equals_expansion() {
        let n = 60;
        let data = itr_dataset(n, 54);
        let mut rng = rng_for(54, &[1]);
        let weights: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let rows: Vec<usize> = (0..n).collect();
        let spec = LearnerSpec::new(LearnerKind::ItrLinear).with_treat_prob(0.5);
        let view = WeightedView::new(&data, &rows, &weights).unwrap();
        let weighted = fit_itr(&view, &spec).unwrap();
        let expanded_rows: Vec<usize> = (0..n)
            .flat_map(|i| std::iter::repeat(i).take(weights[i] as usize))
            .collect();
        let expanded = data.select_rows(&expanded_rows);
        let all: Vec<usize> = (0..expanded.n()).collect();
        let unit = vec![1u32; expanded.n()];
        let plain = fit_itr(&WeightedView::new(&expanded, &all, &unit).unwrap(), &spec).unwrap();
        for (a, b) in weighted.coef.iter().zip(&plain.coef) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn itr_lasso_shrinks_but_keeps_signal() {
        let n = 4000;
        let data = itr_dataset(n, 55);
        let rows: Vec<usize> = (0..n).collect();
        let w = vec![1u32; n];
        let view = WeightedView::new(&data, &rows, &w).unwrap();
        let spec = LearnerSpec::new(LearnerKind::ItrLasso)
            .with_treat_prob(0.5)
            .with_lambda(0.01)
            .with_lambda_gamma(0.01);
        let m = fit_itr(&view, &spec).unwrap();
        // signal coordinates present, shrunk toward (not past) zero
        assert!(m.coef[2] > 0.2 && m.coef[2] < 0.55, "{:?}", m.coef);
        assert!(m.coef[4] > 0.2 && m.coef[4] < 0.55, "{:?}", m.coef);
        let huge = fit_itr(&view, &spec.clone().with_lambda(100.0).with_lambda_gamma(100.0))
            .unwrap();
        assert!(huge.coef.iter().all(|&c| c == 0.0));
    }
}
