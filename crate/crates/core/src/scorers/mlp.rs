//! The NCF-style scoring tower: user and item embeddings concatenated, then
//! a small fully connected net with rectifier hidden layers and a linear
//! scalar output. Gradients are hand-derived (plain backprop through dense
//! layers), traded for zero framework dependencies.

use crate::matrix::{dot, Matrix};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One dense layer, also reused as the holder for its gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out × in` weights.
    pub w: Matrix,
    /// `out` biases.
    pub b: Vec<f64>,
}

impl Dense {
    fn zeros_like(other: &Dense) -> Dense {
        Dense { w: Matrix::zeros(other.w.rows(), other.w.cols()), b: vec![0.0; other.b.len()] }
    }
}

/// The full tower. Hidden layers use ReLU; the last layer is linear and
/// emits the raw (pre-sigmoid) score — objectives do their own squashing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

/// Per-layer activations captured by a forward pass, for backprop.
/// `activations[0]` is the input; the last entry is the scalar output.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub activations: Vec<Vec<f64>>,
}

/// Gradients mirroring [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl MlpParams {
    /// Fan-in-scaled uniform init (the rectifier-friendly Kaiming bound
    /// `sqrt(6 / fan_in)`), biases zero. `widths` runs input → output,
    /// e.g. `[2d, 64, 32, 1]`.
    pub fn new<R: Rng>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        assert_eq!(*widths.last().unwrap(), 1, "output must be scalar");
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                Dense { w: Matrix::rand_uniform(fan_out, fan_in, bound, rng), b: vec![0.0; fan_out] }
            })
            .collect();
        MlpParams { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].w.cols()
    }

    /// Forward pass; returns the scalar score and the activation trace.
    pub fn forward(&self, input: &[f64]) -> (f64, MlpTrace) {
        assert_eq!(input.len(), self.input_width());
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = activations.last().unwrap();
            let last = l + 1 == self.layers.len();
            let mut out = Vec::with_capacity(layer.b.len());
            for o in 0..layer.b.len() {
                let z = dot(layer.w.row(o), prev) + layer.b[o];
                out.push(if last { z } else { z.max(0.0) });
            }
            activations.push(out);
        }
        let score = activations.last().unwrap()[0];
        (score, MlpTrace { activations })
    }

    /// Backprop `upstream` through the trace. Returns parameter gradients
    /// and the gradient w.r.t. the input vector.
    pub fn backward(&self, trace: &MlpTrace, upstream: f64) -> (MlpGrads, Vec<f64>) {
        let mut grads = MlpGrads { layers: self.layers.iter().map(Dense::zeros_like).collect() };
        let mut delta = vec![upstream];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let a_in = &trace.activations[l];
            let g = &mut grads.layers[l];
            for o in 0..layer.b.len() {
                g.b[o] += delta[o];
                let grow = g.w.row_mut(o);
                for (gw, &ai) in grow.iter_mut().zip(a_in) {
                    *gw += delta[o] * ai;
                }
            }
            // d(input of this layer) = Wᵀ delta, gated by ReLU for hidden
            // activations (post-activation > 0 ⟺ pre-activation > 0; the
            // kink takes subgradient 0)
            let mut d_in = vec![0.0; a_in.len()];
            for o in 0..layer.b.len() {
                for (di, &wv) in d_in.iter_mut().zip(layer.w.row(o)) {
                    *di += delta[o] * wv;
                }
            }
            if l > 0 {
                for (di, &a) in d_in.iter_mut().zip(a_in) {
                    if a <= 0.0 {
                        *di = 0.0;
                    }
                }
            }
            delta = d_in;
        }
        (grads, delta)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.is_finite() && l.b.iter().all(|v| v.is_finite()))
    }
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGrads { layers: params.layers.iter().map(Dense::zeros_like).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_output_the_final_bias() {
        let mut mlp = MlpParams::new(&[4, 3, 1], &mut ChaCha8Rng::seed_from_u64(0));
        for l in &mut mlp.layers {
            l.w = Matrix::zeros(l.w.rows(), l.w.cols());
            l.b.fill(0.0);
        }
        mlp.layers.last_mut().unwrap().b[0] = 2.5;
        let (s, _) = mlp.forward(&[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(s, 2.5);
    }

    #[test]
    fn single_linear_layer_with_unit_weights_sums_inputs() {
        let mlp = MlpParams {
            layers: vec![Dense { w: Matrix::from_vec(1, 3, vec![1.0, 1.0, 1.0]), b: vec![0.0] }],
        };
        let (s, _) = mlp.forward(&[1.0, 2.0, 3.5]);
        assert_eq!(s, 6.5);
    }

    #[test]
    fn forward_matches_straight_line_recomputation() {
        // independent recomputation of a 2-layer net, written out longhand
        let mlp = MlpParams::new(&[4, 3, 1], &mut ChaCha8Rng::seed_from_u64(42));
        let input = [0.3, -1.2, 0.8, 2.0];
        let (got, _) = mlp.forward(&input);

        let l0 = &mlp.layers[0];
        let mut h = [0.0f64; 3];
        for o in 0..3 {
            let mut z = l0.b[o];
            for i in 0..4 {
                z += l0.w.row(o)[i] * input[i];
            }
            h[o] = z.max(0.0);
        }
        let l1 = &mlp.layers[1];
        let mut out = l1.b[0];
        for o in 0..3 {
            out += l1.w.row(0)[o] * h[o];
        }
        assert!((got - out).abs() < 1e-10, "{got} vs {out}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mlp = MlpParams::new(&[6, 5, 4, 1], &mut ChaCha8Rng::seed_from_u64(7));
        let input: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 0.9).collect();
        let (_, trace) = mlp.forward(&input);
        let (grads, d_in) = mlp.backward(&trace, 1.0);
        let h = 1e-6;

        // input gradient
        for i in 0..input.len() {
            let mut plus = input.clone();
            plus[i] += h;
            let mut minus = input.clone();
            minus[i] -= h;
            let num = (mlp.forward(&plus).0 - mlp.forward(&minus).0) / (2.0 * h);
            assert!((d_in[i] - num).abs() < 1e-6, "input {i}: {} vs {num}", d_in[i]);
        }
        // a sample of weight gradients from each layer
        for l in 0..mlp.layers.len() {
            for (r, c) in [(0, 0), (0, 1)] {
                let mut bumped = mlp.clone();
                bumped.layers[l].w.row_mut(r)[c] += h;
                let mut dumped = mlp.clone();
                dumped.layers[l].w.row_mut(r)[c] -= h;
                let num = (bumped.forward(&input).0 - dumped.forward(&input).0) / (2.0 * h);
                let ana = grads.layers[l].w.row(r)[c];
                assert!((ana - num).abs() < 1e-6, "layer {l} w[{r},{c}]: {ana} vs {num}");
            }
            let mut bumped = mlp.clone();
            bumped.layers[l].b[0] += h;
            let mut dumped = mlp.clone();
            dumped.layers[l].b[0] -= h;
            let num = (bumped.forward(&input).0 - dumped.forward(&input).0) / (2.0 * h);
            assert!((grads.layers[l].b[0] - num).abs() < 1e-6, "layer {l} bias");
        }
    }

    #[test]
    fn upstream_scales_linearly() {
        let mlp = MlpParams::new(&[4, 3, 1], &mut ChaCha8Rng::seed_from_u64(3));
        let input = [0.1, 0.2, -0.3, 0.4];
        let (_, trace) = mlp.forward(&input);
        let (g1, d1) = mlp.backward(&trace, 1.0);
        let (g3, d3) = mlp.backward(&trace, 3.0);
        for i in 0..4 {
            assert!((3.0 * d1[i] - d3[i]).abs() < 1e-12);
        }
        assert!((3.0 * g1.layers[0].w.row(0)[0] - g3.layers[0].w.row(0)[0]).abs() < 1e-12);
    }
}
