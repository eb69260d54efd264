use super::{HyperParams, ModelDims, ModelParams};

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(dims: ModelDims) -> Self {
        AdamState { m: ModelParams::zeros(dims), v: ModelParams::zeros(dims), step: 0 }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, hp: &HyperParams) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (hp.adam_beta1, hp.adam_beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = hp.learning_rate;
    let eps = hp.adam_eps;

    let p_all = params.tensors_mut();
    let g_all = grads.tensors();
    let m_all = state.m.tensors_mut();
    let v_all = state.v.tensors_mut();
    for (((p, g), m), v) in p_all.into_iter().zip(g_all).zip(m_all).zip(v_all) {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelDims {
        ModelDims { d_model: 2, hidden: 1 }
    }

    fn filled(value: f64) -> ModelParams {
        let mut p = ModelParams::zeros(tiny());
        for t in p.tensors_mut() {
            t.fill(value);
        }
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let hp = HyperParams::default();
        let mut p = filled(0.3);
        let mut st = AdamState::new(tiny());
        adam_step(&mut p, &ModelParams::zeros(tiny()), &mut st, &hp);
        assert_eq!(p, filled(0.3));
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let hp = HyperParams::default();
        let mut p = filled(0.0);
        let mut st = AdamState::new(tiny());
        adam_step(&mut p, &filled(1.0), &mut st, &hp);
        // m̂ = 1, v̂ = 1 → Δ = lr / (1 + ε)
        let expected = -5e-5 / (1.0 + 1e-8);
        for t in p.tensors() {
            for &v in t {
                assert!((v - expected).abs() < 1e-18);
            }
        }
    }

    #[test]
    fn zero_gradients_after_nonzero_drift_less_than_lr() {
        let hp = HyperParams::default();
        let mut p = filled(0.0);
        let mut st = AdamState::new(tiny());
        adam_step(&mut p, &filled(1.0), &mut st, &hp);
        let zero = ModelParams::zeros(tiny());
        for _ in 0..2 {
            let before = p.clone();
            adam_step(&mut p, &zero, &mut st, &hp);
            // decayed momentum still nudges, but by less than lr
            for (a, b) in p.tensors().iter().zip(before.tensors()) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() < hp.learning_rate);
                }
            }
        }
    }
}
