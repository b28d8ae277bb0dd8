use ndarray::Zip;

use super::model::ModelParams;
use crate::error::Result;

/// Adam moments and step count, shaped like the parameters they track.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first: ModelParams,
    second: ModelParams,
    step: u64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, lr: f64) -> Result<()> {
    params.check_same_shape(grads)?;
    params.check_same_shape(&state.first)?;
    state.step += 1;
    let t = state.step as i32;
    let correct1 = 1.0 - AdamState::BETA1.powi(t);
    let correct2 = 1.0 - AdamState::BETA2.powi(t);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.first.tensors_mut())
        .zip(state.second.tensors_mut());
    for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
        Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            *m = AdamState::BETA1 * *m + (1.0 - AdamState::BETA1) * g;
            *v = AdamState::BETA2 * *v + (1.0 - AdamState::BETA2) * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *p -= lr * m_hat / (v_hat.sqrt() + AdamState::EPSILON);
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregator::{AggregatorKind, AggregatorParams};
    use ndarray::{array, Array2};

    fn single(w: Array2<f64>) -> ModelParams {
        ModelParams {
            aggregator: AggregatorParams {
                kind: AggregatorKind::Gcn,
                weights: vec![w],
            },
            factorizer: None,
            attention: None,
            head: None,
        }
    }

    #[test]
    fn first_step_moves_by_lr_against_the_sign() {
        let mut p = single(array![[1.0, -2.0], [0.5, 3.0]]);
        let before = p.clone();
        let g = single(array![[0.3, -4.0], [1e-3, 250.0]]);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, 0.01).unwrap();
        assert_eq!(s.step(), 1);
        let w0 = &before.aggregator.weights[0];
        let w1 = &p.aggregator.weights[0];
        let gw = &g.aggregator.weights[0];
        for ((a, b), gv) in w0.iter().zip(w1.iter()).zip(gw.iter()) {
            let expected = -0.01 * gv.signum();
            assert!((b - a - expected).abs() < 1e-7, "{a} -> {b}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = single(array![[1.0, -2.0]]);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut s, 0.1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn mirrored_parameters_stay_mirrored() {
        let mut a = single(array![[0.7, -1.1]]);
        let mut b = single(array![[-0.7, 1.1]]);
        let mut sa = AdamState::new(&a);
        let mut sb = AdamState::new(&b);
        for _ in 0..2 {
            let ga = single(a.aggregator.weights[0].mapv(|w| 2.0 * w));
            let gb = single(b.aggregator.weights[0].mapv(|w| 2.0 * w));
            adam_step(&mut a, &ga, &mut sa, 0.05).unwrap();
            adam_step(&mut b, &gb, &mut sb, 0.05).unwrap();
        }
        assert_eq!(a.aggregator.weights[0], -&b.aggregator.weights[0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = single(array![[1.0, 2.0]]);
        let g = single(array![[1.0], [2.0]]);
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &g, &mut s, 0.1).is_err());
    }
}
