//! Feed-forward stacks: affine + tanh on hidden layers, affine on the output.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::param::{ParamId, ParamStore};
use crate::nn::tape::{NodeRef, Tape};

#[derive(Debug, Clone)]
pub struct FeedForwardStack {
    /// input -> hidden... -> output dimensions; one affine layer per step.
    pub layer_dims: Vec<usize>,
    pub weights: Vec<ParamId>,
    pub biases: Vec<ParamId>,
}

impl FeedForwardStack {
    /// Registers one weight/bias pair per consecutive dim pair, initialized
    /// uniform(-1/sqrt(d_in), 1/sqrt(d_in)).
    pub fn init(name: &str, dims: &[usize], store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "stack needs at least input and output dims");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, pair) in dims.windows(2).enumerate() {
            let (d_in, d_out) = (pair[0], pair[1]);
            weights.push(store.uniform_init(&format!("{name}.w{l}"), d_out, d_in, d_in, rng));
            biases.push(store.uniform_init(&format!("{name}.b{l}"), 1, d_out, d_in, rng));
        }
        Self { layer_dims: dims.to_vec(), weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn param_count(&self, store: &ParamStore) -> usize {
        self.weights.iter().chain(self.biases.iter()).map(|p| store.get(*p).len()).sum()
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.weights.iter().chain(self.biases.iter()).copied().collect()
    }

    /// Forward on the tape; tanh on hidden layers, identity on the output.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeRef) -> Result<NodeRef> {
        let (r, c) = tape.shape(x);
        if (r, c) != (1, self.input_dim()) {
            return Err(Error::Shape {
                tensor: "ff input".into(),
                expected: format!("(1, {})", self.input_dim()),
                actual: format!("({r}, {c})"),
            });
        }
        let n_layers = self.weights.len();
        let mut h = x;
        for l in 0..n_layers {
            let w = tape.param(store, self.weights[l]);
            let b = tape.param(store, self.biases[l]);
            h = tape.linear(w, b, h);
            if l + 1 < n_layers {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }

    /// Tape-free forward for frozen inference.
    pub fn apply(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                tensor: "ff input".into(),
                expected: format!("(1, {})", self.input_dim()),
                actual: format!("(1, {})", x.len()),
            });
        }
        let n_layers = self.weights.len();
        let mut h = x.to_vec();
        for l in 0..n_layers {
            let w = store.get(self.weights[l]);
            let b = store.get(self.biases[l]);
            let (d_out, d_in) = (w.rows, w.cols);
            let mut y = b.values.clone();
            for j in 0..d_out {
                let row = &w.values[j * d_in..(j + 1) * d_in];
                let mut acc = 0.0;
                for i in 0..d_in {
                    acc += row[i] * h[i];
                }
                y[j] += acc;
            }
            if l + 1 < n_layers {
                for v in &mut y {
                    *v = v.tanh();
                }
            }
            h = y;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_stack_outputs_zero() {
        let mut store = ParamStore::new();
        let w = store.zeros("w0", 3, 2);
        let b = store.zeros("b0", 1, 3);
        let stack =
            FeedForwardStack { layer_dims: vec![2, 3], weights: vec![w], biases: vec![b] };
        assert_eq!(stack.apply(&store, &[1.0, -2.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_single_layer_passes_input_through() {
        let mut store = ParamStore::new();
        let w = store.insert("w0", 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let b = store.zeros("b0", 1, 2);
        let stack =
            FeedForwardStack { layer_dims: vec![2, 2], weights: vec![w], biases: vec![b] };
        assert_eq!(stack.apply(&store, &[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn scalar_affine_matches_hand_calc() {
        // f(x) = 2x + 0.5, so f(1) = 2.5
        let mut store = ParamStore::new();
        let w = store.insert("w0", 1, 1, vec![2.0]);
        let b = store.insert("b0", 1, 1, vec![0.5]);
        let stack =
            FeedForwardStack { layer_dims: vec![1, 1], weights: vec![w], biases: vec![b] };
        assert_eq!(stack.apply(&store, &[1.0]).unwrap(), vec![2.5]);
    }

    #[test]
    fn tape_and_plain_forward_agree() {
        let mut store = ParamStore::new();
        let mut rng = stream(5, "ff");
        let stack = FeedForwardStack::init("enc", &[4, 6, 3], &mut store, &mut rng);
        let x = vec![0.2, -0.4, 0.9, 0.1];
        let plain = stack.apply(&store, &x).unwrap();
        let mut tape = Tape::new();
        let xn = tape.vector(x);
        let out = stack.forward(&mut tape, &store, xn).unwrap();
        for (a, b) in plain.iter().zip(tape.value(out)) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn dim_mismatch_is_an_error() {
        let mut store = ParamStore::new();
        let mut rng = stream(5, "ff");
        let stack = FeedForwardStack::init("enc", &[4, 3], &mut store, &mut rng);
        assert!(stack.apply(&store, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn parameter_count_matches_dims() {
        let mut store = ParamStore::new();
        let mut rng = stream(5, "ff");
        let stack = FeedForwardStack::init("enc", &[4, 6, 3], &mut store, &mut rng);
        assert_eq!(stack.param_count(&store), 4 * 6 + 6 + 6 * 3 + 3);
    }
}
