use super::{DenseMatrix, NnError};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BceLoss {
    pub value: f64,
    /// Per-example unweighted losses.
    pub per_sample: Vec<f64>,
    /// dL/d(probs).
    pub grad: DenseMatrix,
}

/// Unweighted per-example BCE on two-column probabilities; label 1 selects column 0.
pub fn bce_per_sample(probs: &DenseMatrix, labels: &[u8]) -> Result<Vec<f64>, NnError> {
    check(probs, labels.len())?;
    Ok((0..probs.rows())
        .map(|i| -clamp(probs.get(i, label_col(labels[i]))).ln())
        .collect())
}

/// Weighted binary cross-entropy `-Σ wᵢ ln p(yᵢ)` and its gradient.
pub fn bce_loss(probs: &DenseMatrix, labels: &[u8], weights: &[f64]) -> Result<BceLoss, NnError> {
    check(probs, labels.len())?;
    if weights.len() != probs.rows() {
        return Err(NnError::Shape(format!("{} weights for {} rows", weights.len(), probs.rows())));
    }
    let mut grad = DenseMatrix::zeros(probs.rows(), 2);
    let mut per_sample = Vec::with_capacity(probs.rows());
    let mut value = 0.0;
    for i in 0..probs.rows() {
        let col = label_col(labels[i]);
        let raw = probs.get(i, col);
        let p = clamp(raw);
        let l = -p.ln();
        per_sample.push(l);
        value += weights[i] * l;
        if raw == p {
            grad.set(i, col, -weights[i] / p);
        }
    }
    Ok(BceLoss { value, per_sample, grad })
}

fn label_col(label: u8) -> usize {
    if label == 1 {
        0
    } else {
        1
    }
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn check(probs: &DenseMatrix, n: usize) -> Result<(), NnError> {
    if probs.cols() != 2 || probs.rows() != n {
        return Err(NnError::Shape(format!("probs {:?} with {} labels", probs.shape(), n)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(rows: &[[f64; 2]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn reference_values() {
        let confident = bce_loss(&probs(&[[1.0, 0.0]]), &[1], &[1.0]).unwrap();
        assert!(confident.value.abs() < 1e-11);
        let even = bce_loss(&probs(&[[0.5, 0.5]]), &[1], &[1.0]).unwrap();
        assert!((even.value - 2f64.ln()).abs() < 1e-15);
        let weighted = bce_loss(&probs(&[[0.5, 0.5]]), &[1], &[3.0]).unwrap();
        assert!((weighted.value - 3.0 * 2f64.ln()).abs() < 1e-15);
        let neg = bce_loss(&probs(&[[0.2, 0.8]]), &[0], &[1.0]).unwrap();
        assert!((neg.value + 0.8f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn confident_wrong_prediction_is_finite() {
        let l = bce_loss(&probs(&[[0.0, 1.0]]), &[1], &[1.0]).unwrap();
        assert!((l.value - 1e12f64.ln()).abs() < 1e-9);
        assert!(l.grad.is_finite());
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let p = probs(&[[0.3, 0.7], [0.6, 0.4]]);
        let labels = [1, 0];
        let w = [0.5, 2.0];
        let g = bce_loss(&p, &labels, &w).unwrap().grad;
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..2 {
                let mut up = p.clone();
                up.set(i, j, p.get(i, j) + h);
                let mut dn = p.clone();
                dn.set(i, j, p.get(i, j) - h);
                let fd = (bce_loss(&up, &labels, &w).unwrap().value - bce_loss(&dn, &labels, &w).unwrap().value) / (2.0 * h);
                assert!((fd - g.get(i, j)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn shapes_are_checked() {
        assert!(bce_loss(&probs(&[[0.5, 0.5]]), &[1, 0], &[1.0]).is_err());
        assert!(bce_loss(&probs(&[[0.5, 0.5]]), &[1], &[1.0, 1.0]).is_err());
    }
}
