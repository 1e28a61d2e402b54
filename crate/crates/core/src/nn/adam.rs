use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Grads, Mlp};

/// Adam moment accumulators, mirroring the network's parameter shapes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<(Vec<f64>, Vec<f64>)>,
    pub v: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(net: &Mlp, alpha: f64) -> Self {
        let zeros: Vec<(Vec<f64>, Vec<f64>)> = net
            .layers
            .iter()
            .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
            .collect();
        Self {
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// Rescale gradients in place so their global L2 norm is at most `max_norm`.
pub fn global_norm_clip(grads: &mut Grads, max_norm: f64) {
    let sq: f64 = grads
        .iter()
        .flat_map(|(gw, gb)| gw.iter().chain(gb.iter()))
        .map(|g| g * g)
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (gw, gb) in grads.iter_mut() {
            gw.iter_mut().for_each(|g| *g *= scale);
            gb.iter_mut().for_each(|g| *g *= scale);
        }
    }
}

/// One bias-corrected Adam update. Rejects non-finite gradients so a
/// diverging run aborts instead of silently poisoning the parameters.
pub fn adam_step(net: &mut Mlp, grads: &Grads, state: &mut AdamState) -> Result<()> {
    if grads.len() != net.layers.len() {
        return Err(Error::ShapeMismatch("gradient/layer count mismatch".into()));
    }
    for (gw, gb) in grads {
        if gw.iter().chain(gb.iter()).any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
    }
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);
    let (alpha, beta1, beta2, eps) = (state.alpha, state.beta1, state.beta2, state.eps);
    for (li, layer) in net.layers.iter_mut().enumerate() {
        let (gw, gb) = &grads[li];
        if gw.len() != layer.w.len() || gb.len() != layer.b.len() {
            return Err(Error::ShapeMismatch(format!("layer {li} gradient shape")));
        }
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
            }
        };
        let (mw, mb) = &mut state.m[li];
        let (vw, vb) = &mut state.v[li];
        update(&mut layer.w, gw, mw, vw);
        update(&mut layer.b, gb, mb, vb);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn net_1x1() -> Mlp {
        let mut rng = crate::SimRng::seed_from_u64(1);
        let mut net = Mlp::new(&[1, 1], &mut rng);
        net.layers[0].w = vec![0.0];
        net.layers[0].b = vec![0.0];
        net
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut rng = crate::SimRng::seed_from_u64(2);
        let mut net = Mlp::new(&[3, 8, 2], &mut rng);
        let before = net.clone();
        let mut st = AdamState::new(&net, 0.01);
        let grads = net.zero_grads();
        adam_step(&mut net, &grads, &mut st).unwrap();
        assert_eq!(st.t, 1);
        for (a, b) in net.layers.iter().zip(&before.layers) {
            assert_eq!(a.w, b.w);
            assert_eq!(a.b, b.b);
        }
    }

    #[test]
    fn first_step_is_minus_alpha_sign() {
        // Bias-corrected Adam step 1 with g = 1: delta = -alpha * 1/(1 + eps').
        let mut net = net_1x1();
        let mut st = AdamState::new(&net, 0.01);
        let grads = vec![(vec![1.0], vec![0.0])];
        adam_step(&mut net, &grads, &mut st).unwrap();
        // m_hat = 1, v_hat = 1, so w = -alpha / (1 + eps) ~= -0.01.
        assert!((net.layers[0].w[0] + 0.01).abs() < 1e-6);
    }

    #[test]
    fn deterministic_repeat() {
        let mut rng = crate::SimRng::seed_from_u64(3);
        let grads = vec![(vec![0.3; 6], vec![-0.2; 2]), (vec![0.1; 12], vec![0.0; 6])];
        let run = |seed: u64| {
            let mut r = crate::SimRng::seed_from_u64(seed);
            let mut net = Mlp::new(&[3, 2, 6], &mut r);
            let mut st = AdamState::new(&net, 0.01);
            for _ in 0..5 {
                adam_step(&mut net, &grads, &mut st).unwrap();
            }
            serde_json::to_string(&net).unwrap()
        };
        let _ = &mut rng;
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut net = net_1x1();
        let mut st = AdamState::new(&net, 0.01);
        let grads = vec![(vec![f64::NAN], vec![0.0])];
        assert!(matches!(
            adam_step(&mut net, &grads, &mut st),
            Err(Error::NonFiniteGradient)
        ));
    }

    #[test]
    fn global_clip_caps_norm() {
        let mut grads = vec![(vec![3.0, 4.0], vec![0.0])];
        global_norm_clip(&mut grads, 1.0);
        let norm: f64 = grads[0].0.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        // Under the cap: untouched.
        let mut small = vec![(vec![0.1, 0.1], vec![0.0])];
        global_norm_clip(&mut small, 10.0);
        assert_eq!(small[0].0, vec![0.1, 0.1]);
    }

    #[test]
    fn params_stay_finite_under_bounded_gradients() {
        let mut rng = crate::SimRng::seed_from_u64(4);
        let mut net = Mlp::new(&[4, 16, 16, 3], &mut rng);
        let mut st = AdamState::new(&net, 0.01);
        use rand::Rng;
        for _ in 0..10_000 {
            let grads: Grads = net
                .layers
                .iter()
                .map(|l| {
                    (
                        (0..l.w.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                        (0..l.b.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    )
                })
                .collect();
            adam_step(&mut net, &grads, &mut st).unwrap();
        }
        assert!(net
            .layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|p| p.is_finite())));
    }
}
