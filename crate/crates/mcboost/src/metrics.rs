//! Loss, error-count, improvement, and significance statistics.
//!
//! The loss is the negative multinomial log-likelihood
//! `L = sum_i -log p_{i,y_i}` with probabilities clipped below at
//! [`PROB_CLIP`] inside the logarithm only, so a converged run cannot
//! produce infinities. The per-class decomposition
//! `L^(k) = sum_{i: y_i = k} -log p_{i,k}` drives adaptive base-class
//! selection and sums back to the total.
//!
//! Error comparisons follow the convention that `a` is the baseline and `b`
//! the challenger: `relative_improvement(a, b)` is the percentage of
//! baseline errors removed, and `binomial_pvalue(a, b, n)` is the one-sided
//! upper-tail normal approximation for the difference of two error
//! proportions, small when `b` beats `a` by more than chance.

use thiserror::Error;

use crate::dataset::Dataset;
use crate::matrix::Matrix;
use crate::model::{Model, ModelError};

/// Probabilities are clipped below at this value inside logarithms, and only
/// there; stored probabilities are never modified.
pub const PROB_CLIP: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("baseline error count is 0, relative improvement is undefined")]
    ZeroBaseline,
    #[error("error count {count} exceeds sample count {n}")]
    CountExceedsN { count: usize, n: usize },
    #[error("sample count must be >= 1")]
    EmptySample,
}

#[inline]
fn neg_log_clipped(p: f64) -> f64 {
    -p.max(PROB_CLIP).ln()
}

/// Total loss `sum_i -log p_{i,y_i}` over all samples.
pub fn multinomial_loss(p: &Matrix, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| neg_log_clipped(p.get(i, y)))
        .sum()
}

/// Per-class losses `L^(k) = sum_{i: y_i = k} -log p_{i,k}`. Classes with no
/// samples contribute 0; the components sum to [`multinomial_loss`].
pub fn per_class_loss(p: &Matrix, labels: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; p.cols()];
    for (i, &y) in labels.iter().enumerate() {
        out[y] += neg_log_clipped(p.get(i, y));
    }
    out
}

/// Counts rows whose argmax score differs from the label, ties broken by
/// the lowest class index.
pub fn count_errors_from_scores(scores: &Matrix, labels: &[usize]) -> usize {
    let mut errors = 0;
    for (i, &y) in labels.iter().enumerate() {
        let row = scores.row(i);
        let mut best = 0;
        for (k, &s) in row.iter().enumerate() {
            if s > row[best] {
                best = k;
            }
        }
        if best != y {
            errors += 1;
        }
    }
    errors
}

/// Number of dataset samples the model misclassifies.
pub fn misclassification_count(model: &Model, data: &Dataset) -> Result<usize, ModelError> {
    if data.d() != model.d {
        return Err(ModelError::Dimension {
            expected: model.d,
            got: data.d(),
        });
    }
    let mut errors = 0;
    for i in 0..data.n() {
        if model.predict_class(data.row(i))? != data.label(i) {
            errors += 1;
        }
    }
    Ok(errors)
}

/// Percentage of baseline errors removed: `(baseline - new) / baseline * 100`.
/// Negative when the challenger is worse.
pub fn relative_improvement(
    errors_baseline: usize,
    errors_new: usize,
) -> Result<f64, MetricsError> {
    if errors_baseline == 0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok((errors_baseline as f64 - errors_new as f64) / errors_baseline as f64 * 100.0)
}

/// One-sided significance for "challenger `b` has a lower error rate than
/// baseline `a`". `degenerate` marks a zero standard error, where the normal
/// approximation collapses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PValue {
    pub value: f64,
    pub degenerate: bool,
}

/// Upper-tail normal probability at
/// `z = (p_a - p_b) / sqrt(p_a(1-p_a)/n + p_b(1-p_b)/n)` where
/// `p_a = errors_a / n`, `p_b = errors_b / n`. Small values mean `b` beats
/// `a` by more than chance. With a zero standard error the z statistic is
/// undefined; the result is then 0.5/0/1 for equal/better/worse counts and
/// flagged degenerate.
pub fn binomial_pvalue(
    errors_a: usize,
    errors_b: usize,
    n_test: usize,
) -> Result<PValue, MetricsError> {
    if n_test == 0 {
        return Err(MetricsError::EmptySample);
    }
    for count in [errors_a, errors_b] {
        if count > n_test {
            return Err(MetricsError::CountExceedsN { count, n: n_test });
        }
    }
    let n = n_test as f64;
    let pa = errors_a as f64 / n;
    let pb = errors_b as f64 / n;
    let variance = pa * (1.0 - pa) / n + pb * (1.0 - pb) / n;
    if variance == 0.0 {
        let value = match errors_a.cmp(&errors_b) {
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Greater => 0.0,
            std::cmp::Ordering::Less => 1.0,
        };
        return Ok(PValue {
            value,
            degenerate: true,
        });
    }
    let z = (pa - pb) / variance.sqrt();
    // P(Z >= z) for standard normal Z, via the complementary error function
    let value = 0.5 * libm::erfc(z / std::f64::consts::SQRT_2);
    Ok(PValue {
        value,
        degenerate: false,
    })
}

/// Baseline comparison attached to an [`EvalReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    /// percentage of baseline errors removed
    pub r_err: f64,
    pub p_value: f64,
    /// true when the p-value came from a zero standard error
    pub degenerate: bool,
}

/// Everything one evaluation produces. `train_loss` is the multinomial loss
/// over the evaluated dataset (named for the training-set report the trainer
/// prints; the same quantity on held-out data is the test loss).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub error_count: usize,
    pub error_rate: f64,
    pub train_loss: f64,
    pub per_class_losses: Vec<f64>,
    pub comparison: Option<Comparison>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Evaluates a model on a dataset: error count and rate, loss, per-class
/// losses, and, when a baseline model is supplied, the improvement and
/// significance of this model's error count against the baseline's on the
/// same data.
pub fn evaluate_model(
    model: &Model,
    data: &Dataset,
    baseline: Option<&Model>,
) -> Result<EvalReport, EvalError> {
    if data.d() != model.d {
        return Err(ModelError::Dimension {
            expected: model.d,
            got: data.d(),
        }
        .into());
    }
    if data.k() != model.k {
        return Err(ModelError::Invalid(format!(
            "dataset has {} classes, model has {}",
            data.k(),
            model.k
        ))
        .into());
    }
    let n = data.n();
    let mut probs = Matrix::zeros(n, model.k);
    let mut errors = 0;
    for i in 0..n {
        let scores = model.predict_scores(data.row(i), model.num_rounds())?;
        let p = crate::boosting::softmax_row(&scores);
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = k;
            }
        }
        if best != data.label(i) {
            errors += 1;
        }
        probs.row_mut(i).copy_from_slice(&p);
    }
    let comparison = match baseline {
        None => None,
        Some(base_model) => {
            let base_errors = misclassification_count(base_model, data)?;
            let r_err = relative_improvement(base_errors, errors)?;
            let p = binomial_pvalue(base_errors, errors, n)?;
            Some(Comparison {
                r_err,
                p_value: p.value,
                degenerate: p.degenerate,
            })
        }
    };
    Ok(EvalReport {
        error_count: errors,
        error_rate: errors as f64 / n as f64,
        train_loss: multinomial_loss(&probs, data.labels()),
        per_class_losses: per_class_loss(&probs, data.labels()),
        comparison,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::{train, TrainConfig, Variant};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_prob_matrix(n: usize, k: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Matrix::zeros(n, k);
        for i in 0..n {
            let row = m.row_mut(i);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = rng.gen_range(0.01..1.0);
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        m
    }

    #[test]
    fn uniform_loss_is_n_ln_k() {
        let n = 37;
        let k = 5;
        let p = Matrix::filled(n, k, 1.0 / k as f64);
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        assert_relative_eq!(
            multinomial_loss(&p, &labels),
            n as f64 * (k as f64).ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn perfect_fit_loss_is_zero() {
        let mut p = Matrix::zeros(3, 2);
        let labels = [0, 1, 0];
        for (i, &y) in labels.iter().enumerate() {
            p.row_mut(i)[y] = 1.0;
        }
        assert_eq!(multinomial_loss(&p, &labels), 0.0);
    }

    #[test]
    fn zero_probability_is_clipped_not_infinite() {
        let p = Matrix::zeros(1, 2);
        let loss = multinomial_loss(&p, &[0]);
        assert!(loss.is_finite());
        assert_relative_eq!(loss, -PROB_CLIP.ln(), max_relative = 1e-12);
    }

    #[test]
    fn loss_decomposes_into_per_class_sums() {
        let p = random_prob_matrix(200, 7, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let labels: Vec<usize> = (0..200).map(|_| rng.gen_range(0..7)).collect();
        let total = multinomial_loss(&p, &labels);
        let parts = per_class_loss(&p, &labels);
        assert!((total - parts.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn per_class_loss_handles_empty_class_and_uniform() {
        let k = 4;
        let p = Matrix::filled(6, k, 0.25);
        let labels = [0, 0, 0, 2, 2, 3]; // class 1 absent
        let l = per_class_loss(&p, &labels);
        assert_eq!(l[1], 0.0);
        assert_relative_eq!(l[0], 3.0 * 4.0f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(l[2], 2.0 * 4.0f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(l[3], 4.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn error_count_breaks_ties_to_lowest_class() {
        let scores = Matrix::zeros(2, 3); // all-tie rows resolve to class 0
        assert_eq!(count_errors_from_scores(&scores, &[0, 0]), 0);
        assert_eq!(count_errors_from_scores(&scores, &[1, 2]), 2);
    }

    #[test]
    fn misclassification_matches_independent_recount() {
        let features = Matrix::from_vec(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], 8, 1);
        let labels = vec![0, 0, 1, 1, 2, 2, 0, 1];
        let ds = Dataset::from_parts(features, labels, vec!["0".into(), "1".into(), "2".into()])
            .unwrap();
        let (model, _) = train(&ds, &TrainConfig::new(Variant::Abc, 3, 0.5, 10), None).unwrap();
        let counted = misclassification_count(&model, &ds).unwrap();
        let mut recount = 0;
        for i in 0..ds.n() {
            let scores = model.predict_scores(ds.row(i), model.num_rounds()).unwrap();
            let mut best = 0;
            for (k, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = k;
                }
            }
            if best != ds.label(i) {
                recount += 1;
            }
        }
        assert_eq!(counted, recount);
        assert!(counted <= ds.n());
    }

    #[test]
    fn constant_class_zero_model_is_perfect_on_class_zero_data() {
        let features = Matrix::from_vec(vec![0.0, 1.0, 2.0, 3.0], 4, 1);
        let ds =
            Dataset::from_parts(features, vec![0, 0, 0, 0], vec!["0".into(), "1".into()]).unwrap();
        let (model, _) = train(&ds, &TrainConfig::new(Variant::Mart, 2, 0.1, 3), None).unwrap();
        assert_eq!(misclassification_count(&model, &ds).unwrap(), 0);
    }

    #[test]
    fn relative_improvement_reference_values() {
        let r = relative_improvement(11133, 10203).unwrap();
        assert!((r - 8.4).abs() <= 0.1);
        assert_relative_eq!(r, 93000.0 / 11133.0, max_relative = 1e-12);
        let r = relative_improvement(135, 111).unwrap();
        assert!((r - 17.8).abs() <= 0.1);
        assert_relative_eq!(r, 1600.0 / 90.0, max_relative = 1e-12);
        assert_eq!(relative_improvement(42, 42).unwrap(), 0.0);
        assert!(relative_improvement(10, 15).unwrap() < 0.0);
        assert!(matches!(
            relative_improvement(0, 5),
            Err(MetricsError::ZeroBaseline)
        ));
    }

    #[test]
    fn pvalue_reference_values() {
        let p = binomial_pvalue(11133, 10203, 290506).unwrap();
        assert!(!p.degenerate);
        assert!((p.value - 4.4e-11).abs() <= 0.2e-11, "got {}", p.value);
        let p = binomial_pvalue(135, 111, 4000).unwrap();
        assert!(!p.degenerate);
        assert!((p.value - 0.060).abs() <= 0.002, "got {}", p.value);
    }

    #[test]
    fn pvalue_equal_counts_is_half() {
        let p = binomial_pvalue(57, 57, 1000).unwrap();
        assert_eq!(p.value, 0.5);
        assert!(!p.degenerate);
    }

    #[test]
    fn pvalue_degenerate_cases() {
        let p = binomial_pvalue(0, 0, 10).unwrap();
        assert_eq!((p.value, p.degenerate), (0.5, true));
        let p = binomial_pvalue(10, 0, 10).unwrap();
        assert_eq!((p.value, p.degenerate), (0.0, true));
        let p = binomial_pvalue(0, 10, 10).unwrap();
        assert_eq!((p.value, p.degenerate), (1.0, true));
    }

    #[test]
    fn pvalue_complement_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(10..10_000);
            let a = rng.gen_range(1..n);
            let b = rng.gen_range(1..n);
            let pab = binomial_pvalue(a, b, n).unwrap().value;
            let pba = binomial_pvalue(b, a, n).unwrap().value;
            assert!((pab + pba - 1.0).abs() < 1e-12, "a={a} b={b} n={n}");
        }
    }

    #[test]
    fn pvalue_input_validation() {
        assert!(matches!(
            binomial_pvalue(1, 1, 0),
            Err(MetricsError::EmptySample)
        ));
        assert!(matches!(
            binomial_pvalue(11, 1, 10),
            Err(MetricsError::CountExceedsN { count: 11, n: 10 })
        ));
    }

    #[test]
    fn evaluate_report_is_consistent() {
        // duplicate feature values with conflicting labels keep the error
        // count strictly positive no matter how long training runs
        let features = Matrix::from_vec(vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0], 6, 1);
        let ds = Dataset::from_parts(
            features,
            vec![0, 1, 1, 2, 2, 0],
            vec!["x".into(), "y".into(), "z".into()],
        )
        .unwrap();
        let (model, history) =
            train(&ds, &TrainConfig::new(Variant::Abc, 3, 0.5, 8), None).unwrap();
        let report = evaluate_model(&model, &ds, None).unwrap();
        assert_eq!(
            report.error_count,
            misclassification_count(&model, &ds).unwrap()
        );
        assert_relative_eq!(
            report.error_rate,
            report.error_count as f64 / ds.n() as f64,
            max_relative = 1e-15
        );
        // replayed loss agrees with the trainer's last recorded loss
        let last = history.last().unwrap();
        assert!((report.train_loss - last.train_loss).abs() < 1e-9);
        let sum: f64 = report.per_class_losses.iter().sum();
        assert!((sum - report.train_loss).abs() < 1e-9);

        // identical baseline: no improvement, even odds
        assert!(
            report.error_count > 0,
            "conflicting labels must leave errors"
        );
        let report = evaluate_model(&model, &ds, Some(&model)).unwrap();
        let c = report.comparison.expect("baseline comparison requested");
        assert_eq!(c.r_err, 0.0);
        assert_eq!(c.p_value, 0.5);
        assert!(!c.degenerate);
    }

    #[test]
    fn evaluate_rejects_dimension_mismatch() {
        let ds = Dataset::from_parts(
            Matrix::from_vec(vec![0.0, 1.0, 2.0, 3.0], 2, 2),
            vec![0, 1],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        let (model, _) = train(&ds, &TrainConfig::new(Variant::Mart, 2, 0.1, 1), None).unwrap();
        let narrow = Dataset::from_parts(
            Matrix::from_vec(vec![0.0, 1.0], 2, 1),
            vec![0, 1],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        assert!(evaluate_model(&model, &narrow, None).is_err());
    }
}
