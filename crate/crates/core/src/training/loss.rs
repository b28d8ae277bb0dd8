//! Training objectives on the representation matrix `Z`.

use ndarray::{Array1, Array2};

use crate::attention::softmax;
use crate::error::{Error, Result};
use crate::graph::{Edge, Labels};

/// Arguments of `ln` are clamped from below to this value.
pub const LOG_FLOOR: f64 = 1e-12;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss value with its gradients.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub loss: f64,
    pub d_z: Array2<f64>,
    /// Gradient of the classifier head (semi-supervised only).
    pub d_head: Option<Array2<f64>>,
}

fn check_finite(term: f64, what: impl FnOnce() -> String) -> Result<()> {
    if term.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite loss term {term} from {}", what())))
    }
}

fn label_of(labels: &Labels, node: usize) -> Result<usize> {
    labels
        .get(node)
        .ok_or_else(|| Error::Config(format!("node {node} is in the labeled set but has no label")))
}

/// `-(1/C)·Σ_l ln softmax(headᵀ z_l)[y_l]` over the labeled nodes.
pub fn semi_loss(z: &Array2<f64>, head: &Array2<f64>, labeled: &[usize], labels: &Labels) -> Result<f64> {
    semi_loss_grad(z, head, labeled, labels).map(|g| g.loss)
}

pub fn semi_loss_grad(z: &Array2<f64>, head: &Array2<f64>, labeled: &[usize], labels: &Labels) -> Result<LossGrad> {
    if labeled.is_empty() {
        return Err(Error::Config(
            "semi-supervised loss needs at least one labeled node".into(),
        ));
    }
    let classes = labels.classes();
    if head.nrows() != z.ncols() || head.ncols() != classes {
        return Err(Error::shape(format!(
            "head is {}x{}, expected {}x{classes}",
            head.nrows(),
            head.ncols(),
            z.ncols()
        )));
    }
    let scale = 1.0 / classes as f64;
    let mut loss = 0.0;
    let mut d_z = Array2::zeros(z.raw_dim());
    let mut d_head = Array2::zeros(head.raw_dim());
    for &node in labeled {
        let y = label_of(labels, node)?;
        let zl = z.row(node);
        let probs = softmax(zl.dot(head).view());
        let p = probs[y];
        let term = -p.max(LOG_FLOOR).ln();
        check_finite(term, || format!("labeled node {node}"))?;
        loss += term;
        if p < LOG_FLOOR {
            continue;
        }
        let mut d_logits: Array1<f64> = probs * scale;
        d_logits[y] -= scale;
        d_z.row_mut(node).assign(&head.dot(&d_logits));
        for (r, &zv) in zl.iter().enumerate() {
            d_head.row_mut(r).scaled_add(zv, &d_logits);
        }
    }
    Ok(LossGrad {
        loss: loss * scale,
        d_z,
        d_head: Some(d_head),
    })
}

/// `-Σ_pos ln σ(z_iᵀz_j) - Σ_neg ln σ(-z_iᵀz_k)`.
pub fn unsup_loss(z: &Array2<f64>, positives: &[Edge], negatives: &[Edge]) -> Result<f64> {
    unsup_loss_grad(z, positives, negatives).map(|g| g.loss)
}

pub fn unsup_loss_grad(z: &Array2<f64>, positives: &[Edge], negatives: &[Edge]) -> Result<LossGrad> {
    if positives.is_empty() {
        return Err(Error::Config(
            "unsupervised loss needs at least one positive edge".into(),
        ));
    }
    let n = z.nrows();
    let mut loss = 0.0;
    let mut d_z = Array2::zeros(z.raw_dim());
    let terms = positives
        .iter()
        .map(|e| (e, 1.0))
        .chain(negatives.iter().map(|e| (e, -1.0)));
    for (&(i, j), sign) in terms {
        if i >= n || j >= n {
            return Err(Error::shape(format!("edge ({i}, {j}) outside {n} nodes")));
        }
        let score = z.row(i).dot(&z.row(j));
        // ln σ(sign·score), clamped
        let prob = sigmoid(sign * score);
        let term = -prob.max(LOG_FLOOR).ln();
        check_finite(term, || {
            let kind = if sign > 0.0 { "positive" } else { "negative" };
            format!("{kind} edge ({i}, {j})")
        })?;
        loss += term;
        if prob < LOG_FLOOR {
            continue;
        }
        // d/d score of -ln σ(sign·score) = -sign·(1 - σ(sign·score))
        let g = -sign * (1.0 - prob);
        let (zi, zj) = (z.row(i).to_owned(), z.row(j).to_owned());
        d_z.row_mut(i).scaled_add(g, &zj);
        d_z.row_mut(j).scaled_add(g, &zi);
    }
    Ok(LossGrad {
        loss,
        d_z,
        d_head: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn labels(classes: usize, per_node: &[usize]) -> Labels {
        Labels::new(classes, per_node.iter().map(|&l| Some(l)).collect()).unwrap()
    }

    #[test]
    fn uniform_prediction_binary() {
        let z = array![[0.0, 0.0]];
        let head = Array2::zeros((2, 2));
        let l = semi_loss(&z, &head, &[0], &labels(2, &[1])).unwrap();
        assert!((l - 2f64.ln() / 2.0).abs() < 1e-15);
        assert!((l - 0.34657).abs() < 1e-5);
    }

    #[test]
    fn two_uniform_nodes_four_classes() {
        let z = Array2::zeros((2, 3));
        let head = Array2::zeros((3, 4));
        let l = semi_loss(&z, &head, &[0, 1], &labels(4, &[0, 3])).unwrap();
        assert!((l - 2.0 * 4f64.ln() / 4.0).abs() < 1e-15);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_correct_prediction_is_zero_loss() {
        let z = array![[1.0], [-1.0]];
        let head = array![[1000.0, -1000.0]];
        let g = semi_loss_grad(&z, &head, &[0, 1], &labels(2, &[0, 1])).unwrap();
        assert_eq!(g.loss, 0.0);
        assert!(g.d_z.iter().all(|v| v.abs() < 1e-12));
        assert!(g.d_head.unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn empty_or_unlabeled_sets_fail() {
        let z = Array2::zeros((2, 2));
        let head = Array2::zeros((2, 2));
        let l = Labels::new(2, vec![Some(0), None]).unwrap();
        assert!(matches!(semi_loss(&z, &head, &[], &l), Err(Error::Config(_))));
        assert!(matches!(semi_loss(&z, &head, &[1], &l), Err(Error::Config(_))));
        assert!(matches!(unsup_loss(&z, &[], &[(0, 1)]), Err(Error::Config(_))));
    }

    #[test]
    fn zero_representations_give_ln2_per_term() {
        let z = Array2::zeros((4, 3));
        let pos = [(0, 1), (1, 2), (2, 3)];
        let neg = [(0, 2), (0, 3), (1, 3)];
        let l = unsup_loss(&z, &pos, &neg).unwrap();
        assert!((l - 6.0 * 2f64.ln()).abs() < 1e-12);
        assert!((l - 4.1589).abs() < 1e-4);
    }

    #[test]
    fn saturated_scores_vanish() {
        let z = array![[30.0], [30.0], [-30.0]];
        let l = unsup_loss(&z, &[(0, 1)], &[(0, 2)]).unwrap();
        assert!(l < 1e-12);
    }

    #[test]
    fn single_positive_ln3() {
        let a = 3f64.ln().sqrt();
        let z = array![[a], [a]];
        let l = unsup_loss(&z, &[(0, 1)], &[]).unwrap();
        assert!((l + (0.75f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn floored_terms_stay_finite() {
        let z = array![[100.0], [-100.0]];
        let l = unsup_loss(&z, &[(0, 1)], &[]).unwrap();
        assert!((l + LOG_FLOOR.ln()).abs() < 1e-9);
        let g = unsup_loss_grad(&z, &[(0, 1)], &[]).unwrap();
        assert!(g.d_z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let z = array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.7], [-0.6, 0.2, 0.9], [0.05, -0.3, 0.2]];
        let head = array![[0.5, -1.0], [0.2, 0.3], [-0.4, 0.8]];
        let lab = labels(2, &[0, 1, 1, 0]);
        let nodes = [0, 2, 3];
        let pos = [(0, 1), (2, 3)];
        let neg = [(0, 3), (1, 2)];
        let eps = 1e-6;
        let semi = semi_loss_grad(&z, &head, &nodes, &lab).unwrap();
        let unsup = unsup_loss_grad(&z, &pos, &neg).unwrap();
        for idx in 0..z.len() {
            let mut p = z.clone();
            let mut m = z.clone();
            p.as_slice_mut().unwrap()[idx] += eps;
            m.as_slice_mut().unwrap()[idx] -= eps;
            let num = (semi_loss(&p, &head, &nodes, &lab).unwrap() - semi_loss(&m, &head, &nodes, &lab).unwrap())
                / (2.0 * eps);
            assert!((num - semi.d_z.as_slice().unwrap()[idx]).abs() < 1e-8);
            let num = (unsup_loss(&p, &pos, &neg).unwrap() - unsup_loss(&m, &pos, &neg).unwrap()) / (2.0 * eps);
            assert!((num - unsup.d_z.as_slice().unwrap()[idx]).abs() < 1e-8);
        }
        let d_head = semi.d_head.unwrap();
        for idx in 0..head.len() {
            let mut p = head.clone();
            let mut m = head.clone();
            p.as_slice_mut().unwrap()[idx] += eps;
            m.as_slice_mut().unwrap()[idx] -= eps;
            let num =
                (semi_loss(&z, &p, &nodes, &lab).unwrap() - semi_loss(&z, &m, &nodes, &lab).unwrap()) / (2.0 * eps);
            assert!((num - d_head.as_slice().unwrap()[idx]).abs() < 1e-8);
        }
    }
}
