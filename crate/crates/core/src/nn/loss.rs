//! Losses over a logit matrix, each returning the scalar loss and its
//! gradient with respect to the logits.

use super::matrix::{softmax_row, Matrix};
use crate::error::{Error, Result};

fn check_rows(logits: &Matrix, n: usize, what: &str) -> Result<()> {
    if logits.rows() != n {
        return Err(Error::Shape(format!("{} logit rows but {n} {what}", logits.rows())));
    }
    if logits.rows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    if !logits.is_finite() {
        return Err(Error::Numeric("logits contain NaN or infinity".into()));
    }
    Ok(())
}

/// Weighted cross entropy: `(1/B) Σ_b w_b · -log softmax(z_b)[y_b]`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize], weights: &[f64]) -> Result<(f64, Matrix)> {
    check_rows(logits, labels.len(), "labels")?;
    if weights.len() != labels.len() {
        return Err(Error::Shape("weights and labels differ in length".into()));
    }
    let classes = logits.cols();
    let batch = labels.len() as f64;
    let mut grad = Matrix::zeros(logits.rows(), classes);
    let mut loss = 0.0;
    for (b, (&y, &w)) in labels.iter().zip(weights).enumerate() {
        if y >= classes {
            return Err(Error::Shape(format!("label {y} outside {classes} classes")));
        }
        let row = logits.row(b);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        loss += w * (lse - row[y]);
        let g = grad.row_mut(b);
        softmax_row(row, g);
        g[y] -= 1.0;
        let scale = w / batch;
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    Ok((loss / batch, grad))
}

/// Cross entropy against soft targets: `(1/B) Σ_b -Σ_c t_bc log softmax(z_b)_c`.
pub fn soft_cross_entropy(logits: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    check_rows(logits, targets.rows(), "targets")?;
    if targets.cols() != logits.cols() {
        return Err(Error::Shape("targets and logits differ in width".into()));
    }
    let batch = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for b in 0..logits.rows() {
        let row = logits.row(b);
        let t = targets.row(b);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let mass: f64 = t.iter().sum();
        loss += t.iter().zip(row).map(|(tc, z)| tc * (lse - z)).sum::<f64>();
        let g = grad.row_mut(b);
        softmax_row(row, g);
        for (gc, tc) in g.iter_mut().zip(t) {
            *gc = (mass * *gc - tc) / batch;
        }
    }
    Ok((loss / batch, grad))
}

pub(crate) fn validate_prior(prior: &[f64]) -> Result<()> {
    if prior.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::Domain("class prior entries must be positive".into()));
    }
    let sum: f64 = prior.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("class prior sums to {sum}, not 1")));
    }
    Ok(())
}

/// Cross entropy on `logits + log π`.
pub fn balanced_softmax_loss(
    logits: &Matrix,
    labels: &[usize],
    prior: &[f64],
    weights: &[f64],
) -> Result<(f64, Matrix)> {
    validate_prior(prior)?;
    if prior.len() != logits.cols() {
        return Err(Error::Shape(format!(
            "prior has {} classes, logits have {}",
            prior.len(),
            logits.cols()
        )));
    }
    let mut shifted = logits.clone();
    let log_prior: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
    for r in 0..shifted.rows() {
        for (z, lp) in shifted.row_mut(r).iter_mut().zip(&log_prior) {
            *z += lp;
        }
    }
    // The shift is constant in the parameters, so the gradient passes through.
    cross_entropy(&shifted, labels, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln2() {
        let (loss, g) = cross_entropy(&Matrix::from_rows(&[[0.0, 0.0]]), &[0], &[1.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((g.get(0, 0) + 0.5).abs() < 1e-15);
        assert!((g.get(0, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn three_to_one_odds() {
        let (loss, _) = cross_entropy(&Matrix::from_rows(&[[3f64.ln(), 0.0]]), &[0], &[1.0]).unwrap();
        assert!((loss - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((loss - 0.287682).abs() < 1e-6);
    }

    #[test]
    fn zero_weights_annihilate() {
        let logits = Matrix::from_rows(&[[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]]);
        let (loss, g) = cross_entropy(&logits, &[0, 2], &[0.0, 0.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_logits_rejected() {
        let logits = Matrix::from_rows(&[[f64::NAN, 0.0]]);
        assert!(matches!(cross_entropy(&logits, &[0], &[1.0]), Err(Error::Numeric(_))));
    }

    #[test]
    fn balanced_softmax_arithmetic() {
        let z = Matrix::from_rows(&[[0.0, 0.0]]);
        let (l1, _) = balanced_softmax_loss(&z, &[1], &[0.9, 0.1], &[1.0]).unwrap();
        assert!((l1 - 10f64.ln()).abs() < 1e-12);
        let (l0, _) = balanced_softmax_loss(&z, &[0], &[0.9, 0.1], &[1.0]).unwrap();
        assert!((l0 - (10.0f64 / 9.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn balanced_softmax_rejects_bad_prior() {
        let z = Matrix::from_rows(&[[0.0, 0.0]]);
        assert!(matches!(
            balanced_softmax_loss(&z, &[0], &[1.0, 0.0], &[1.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            balanced_softmax_loss(&z, &[0], &[1.2, -0.2], &[1.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn soft_targets_reduce_to_hard_on_onehot() {
        let z = Matrix::from_rows(&[[0.3, -1.2, 2.0], [1.0, 1.0, 0.0]]);
        let t = Matrix::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let (ls, gs) = soft_cross_entropy(&z, &t).unwrap();
        let (lh, gh) = cross_entropy(&z, &[1, 2], &[1.0, 1.0]).unwrap();
        assert!((ls - lh).abs() < 1e-12);
        for (a, b) in gs.as_slice().iter().zip(gh.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
