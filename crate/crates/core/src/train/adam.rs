use crate::error::{Error, Result};
use crate::model::IptModel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moments per parameter tensor, in model parameter order,
/// plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub t: u64,
}

impl AdamState {
    pub fn for_model(model: &IptModel) -> AdamState {
        let m: Vec<Vec<f32>> = model.params().iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        AdamState { v: m.clone(), m, t: 0 }
    }
}

/// One bias-corrected Adam update on a flat parameter slice. `t_next` is
/// the step count after this update (1 on the first call).
pub fn adam_step_slice<E: Scalar>(
    params: &mut [E],
    grads: &[E],
    m: &mut [E],
    v: &mut [E],
    t_next: u64,
    hp: &AdamHyper,
) -> Result<()> {
    if grads.len() != params.len() || m.len() != params.len() || v.len() != params.len() {
        return Err(Error::Contract(format!(
            "adam buffers disagree: {} params, {} grads, {} m, {} v",
            params.len(),
            grads.len(),
            m.len(),
            v.len()
        )));
    }
    let b1 = E::from_f64(hp.beta1);
    let b2 = E::from_f64(hp.beta2);
    let one = E::one();
    let lr = E::from_f64(hp.learning_rate);
    let eps = E::from_f64(hp.eps);
    let bc1 = E::from_f64(1.0 - hp.beta1.powi(t_next as i32));
    let bc2 = E::from_f64(1.0 - hp.beta2.powi(t_next as i32));
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let hp = AdamHyper::default();
        let mut p = vec![0.5f32, -1.25, 3.0];
        let orig = p.clone();
        let mut m = vec![0.0f32; 3];
        let mut v = vec![0.0f32; 3];
        adam_step_slice(&mut p, &[0.0; 3], &mut m, &mut v, 1, &hp).unwrap();
        assert_eq!(p, orig);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // g=1, t 0→1: m̂=1, v̂=1, Δ = −lr·1/(1+eps) ≈ −1e-3.
        let hp = AdamHyper { learning_rate: 1e-3, ..AdamHyper::default() };
        let mut p = vec![0.0f64];
        let mut m = vec![0.0f64];
        let mut v = vec![0.0f64];
        adam_step_slice(&mut p, &[1.0], &mut m, &mut v, 1, &hp).unwrap();
        let expected = -1e-3 * (1.0 / (1.0 + 1e-8));
        assert!((p[0] - expected).abs() < 1e-12, "got {}", p[0]);
    }

    #[test]
    fn mismatched_buffers_are_a_contract_error() {
        let hp = AdamHyper::default();
        let mut p = vec![0.0f32; 3];
        let mut m = vec![0.0f32; 3];
        let mut v = vec![0.0f32; 3];
        assert!(adam_step_slice(&mut p, &[0.0; 2], &mut m, &mut v, 1, &hp).is_err());
    }
}
