use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SimRng;

/// Dense layer; weights are row-major `[out_dim x in_dim]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Fully-connected network; hidden layers use ReLU with inverted dropout,
/// the head is linear.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Activations and dropout masks recorded by `forward` for `backward`.
pub struct Cache {
    batch: usize,
    /// Input to each layer, batch-major `[batch x in_dim]`.
    inputs: Vec<Vec<f64>>,
    /// Post-ReLU pre-dropout activations per hidden layer.
    relu_out: Vec<Vec<f64>>,
    /// Dropout keep-masks (0 or 1/keep) per hidden layer; empty when inactive.
    masks: Vec<Vec<f64>>,
}

pub type Grads = Vec<(Vec<f64>, Vec<f64>)>;

impl Mlp {
    /// He-uniform weights (fan-in scaling), zero biases.
    pub fn new(sizes: &[usize], rng: &mut SimRng) -> Self {
        assert!(sizes.len() >= 2);
        let layers = sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                DenseLayer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    w: (0..fan_in * fan_out)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect(),
                    b: vec![0.0; fan_out],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn zero_grads(&self) -> Grads {
        self.layers
            .iter()
            .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
            .collect()
    }

    /// Batched forward pass. `x` is batch-major `[batch x input_dim]`.
    /// Dropout (inverted, so inference needs no rescaling) is applied after
    /// each hidden ReLU only when `training` and `dropout_rate > 0`.
    pub fn forward(
        &self,
        x: &[f64],
        batch: usize,
        dropout_rate: f64,
        training: bool,
        rng: &mut SimRng,
    ) -> Result<(Vec<f64>, Cache)> {
        if batch == 0 || x.len() != batch * self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input len {} != batch {batch} x dim {}",
                x.len(),
                self.input_dim()
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::ShapeMismatch(format!(
                "dropout_rate {dropout_rate} outside [0, 1)"
            )));
        }
        let drop_active = training && dropout_rate > 0.0;
        let keep = 1.0 - dropout_rate;
        let n_layers = self.layers.len();
        let mut cache = Cache {
            batch,
            inputs: Vec::with_capacity(n_layers),
            relu_out: Vec::with_capacity(n_layers - 1),
            masks: Vec::with_capacity(n_layers - 1),
        };
        let mut cur = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            cache.inputs.push(cur.clone());
            let mut out = vec![0.0; batch * layer.out_dim];
            for b_i in 0..batch {
                let xin = &cur[b_i * layer.in_dim..(b_i + 1) * layer.in_dim];
                let row = &mut out[b_i * layer.out_dim..(b_i + 1) * layer.out_dim];
                for o in 0..layer.out_dim {
                    let wrow = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let mut acc = layer.b[o];
                    for i in 0..layer.in_dim {
                        acc += wrow[i] * xin[i];
                    }
                    row[o] = acc;
                }
            }
            let last = li + 1 == n_layers;
            if !last {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                cache.relu_out.push(out.clone());
                if drop_active {
                    let mask: Vec<f64> = out
                        .iter()
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    for (v, m) in out.iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    cache.masks.push(mask);
                } else {
                    cache.masks.push(Vec::new());
                }
            }
            cur = out;
        }
        Ok((cur, cache))
    }

    /// Reverse-mode gradients of `sum(output .* grad_out)` w.r.t. parameters,
    /// honoring the dropout masks recorded in `cache`.
    pub fn backward(&self, cache: &Cache, grad_out: &[f64]) -> Grads {
        let batch = cache.batch;
        assert_eq!(grad_out.len(), batch * self.output_dim());
        let mut grads = self.zero_grads();
        let mut delta = grad_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let xin = &cache.inputs[li];
            let (gw, gb) = &mut grads[li];
            for b_i in 0..batch {
                let d = &delta[b_i * layer.out_dim..(b_i + 1) * layer.out_dim];
                let x = &xin[b_i * layer.in_dim..(b_i + 1) * layer.in_dim];
                for o in 0..layer.out_dim {
                    gb[o] += d[o];
                    let grow = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let dv = d[o];
                    if dv != 0.0 {
                        for i in 0..layer.in_dim {
                            grow[i] += dv * x[i];
                        }
                    }
                }
            }
            if li == 0 {
                break;
            }
            // Propagate into the previous layer's activation space.
            let mut prev = vec![0.0; batch * layer.in_dim];
            for b_i in 0..batch {
                let d = &delta[b_i * layer.out_dim..(b_i + 1) * layer.out_dim];
                let p = &mut prev[b_i * layer.in_dim..(b_i + 1) * layer.in_dim];
                for o in 0..layer.out_dim {
                    let dv = d[o];
                    if dv != 0.0 {
                        let wrow = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for i in 0..layer.in_dim {
                            p[i] += dv * wrow[i];
                        }
                    }
                }
            }
            // Through dropout then ReLU of hidden layer li-1.
            let mask = &cache.masks[li - 1];
            if !mask.is_empty() {
                for (p, m) in prev.iter_mut().zip(mask) {
                    *p *= m;
                }
            }
            let relu = &cache.relu_out[li - 1];
            for (p, &r) in prev.iter_mut().zip(relu) {
                if r <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        grads
    }
}
