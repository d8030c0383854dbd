use matrixmultiply::dgemm;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

/// Hidden-layer nonlinearity; the output layer is always linear.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub(crate) fn from_code(c: u64) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Weights and biases of a fully connected network.
///
/// Layer `i` maps `sizes[i]` inputs to `sizes[i + 1]` outputs; its weight
/// matrix is stored row-major as `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub(crate) sizes: Vec<usize>,
    pub(crate) activation: Activation,
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) biases: Vec<Vec<f64>>,
}

/// Per-layer activations of one batched forward pass, kept for [`NetworkParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// `acts[0]` is the input, `acts[last]` the output.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Output block, row-major `[batch][out]`.
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds at least the input")
    }
}

/// Gradients with the same layout as [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|g| g.is_finite())
    }

    /// Multiplies every entry by `s`.
    pub fn scale(&mut self, s: f64) {
        for g in self.weights.iter_mut().chain(self.biases.iter_mut()).flatten() {
            *g *= s;
        }
    }
}

impl NetworkParams {
    /// He-uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self, NnError> {
        let mut p = Self::zeros(sizes, activation)?;
        for (i, w) in p.weights.iter_mut().enumerate() {
            let bound = (6.0 / sizes[i] as f64).sqrt();
            for x in w.iter_mut() {
                *x = rng.gen_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::Shape(format!(
                "layer sizes {sizes:?} need at least two nonzero entries"
            )));
        }
        let weights = sizes.windows(2).map(|s| vec![0.0; s[0] * s[1]]).collect();
        let biases = sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    /// Builds a network from explicit `[out][in]` row-major weights.
    pub fn from_parts(
        sizes: &[usize],
        activation: Activation,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self, NnError> {
        let shape = Self::zeros(sizes, activation)?;
        let fits = weights.len() == shape.weights.len()
            && biases.len() == shape.biases.len()
            && weights.iter().zip(&shape.weights).all(|(a, b)| a.len() == b.len())
            && biases.iter().zip(&shape.biases).all(|(a, b)| a.len() == b.len());
        if !fits {
            return Err(NnError::Shape(format!("parameters do not match layer sizes {sizes:?}")));
        }
        let p = Self {
            sizes: sizes.to_vec(),
            activation,
            weights,
            biases,
        };
        if !p.is_finite() {
            return Err(NnError::NonFinite("parameters"));
        }
        Ok(p)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().expect("validated at construction")
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.weights[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|x| x.is_finite())
    }

    /// Copies every parameter into `target`, reusing its buffers.
    pub fn clone_into(&self, target: &mut NetworkParams) {
        target.clone_from(self);
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Q-values for a single input.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_batch(input, 1)?.output().to_vec())
    }

    /// Forward pass over `batch` inputs stored row-major in `inputs`.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<ForwardCache, NnError> {
        if inputs.len() != batch * self.input_len() {
            return Err(NnError::Shape(format!(
                "expected {batch} x {} inputs, got {} values",
                self.input_len(),
                inputs.len()
            )));
        }
        let last = self.n_layers() - 1;
        let mut acts = Vec::with_capacity(self.n_layers() + 1);
        acts.push(inputs.to_vec());
        for layer in 0..self.n_layers() {
            let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
            let x = &acts[layer];
            let mut z = Vec::with_capacity(batch * n_out);
            for _ in 0..batch {
                z.extend_from_slice(&self.biases[layer]);
            }
            // z[batch x out] += x[batch x in] * W^T
            unsafe {
                dgemm(
                    batch,
                    n_in,
                    n_out,
                    1.0,
                    x.as_ptr(),
                    n_in as isize,
                    1,
                    self.weights[layer].as_ptr(),
                    1,
                    n_in as isize,
                    1.0,
                    z.as_mut_ptr(),
                    n_out as isize,
                    1,
                );
            }
            if layer < last {
                let act = self.activation;
                z.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            acts.push(z);
        }
        Ok(ForwardCache { batch, acts })
    }

    /// Reverse-mode gradients of `sum(grad_output * output)` with respect to
    /// every parameter, for the batch held in `cache`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<Gradients, NnError> {
        let batch = cache.batch;
        if cache.acts.len() != self.n_layers() + 1
            || cache.acts.iter().zip(&self.sizes).any(|(a, &n)| a.len() != batch * n)
        {
            return Err(NnError::Shape(
                "forward cache was produced by a different network".into(),
            ));
        }
        if grad_output.len() != batch * self.output_len() {
            return Err(NnError::Shape(format!(
                "expected {batch} x {} output gradients, got {}",
                self.output_len(),
                grad_output.len()
            )));
        }
        let mut grads = self.zero_gradients();
        let mut delta = grad_output.to_vec();
        for layer in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
            let x = &cache.acts[layer];
            // dW[out x in] = delta^T * x
            unsafe {
                dgemm(
                    n_out,
                    batch,
                    n_in,
                    1.0,
                    delta.as_ptr(),
                    1,
                    n_out as isize,
                    x.as_ptr(),
                    n_in as isize,
                    1,
                    0.0,
                    grads.weights[layer].as_mut_ptr(),
                    n_in as isize,
                    1,
                );
            }
            let db = &mut grads.biases[layer];
            for row in delta.chunks_exact(n_out) {
                for (d, v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
            if layer == 0 {
                break;
            }
            // dx[batch x in] = delta * W, then through the activation of layer - 1
            let mut dx = vec![0.0; batch * n_in];
            unsafe {
                dgemm(
                    batch,
                    n_out,
                    n_in,
                    1.0,
                    delta.as_ptr(),
                    n_out as isize,
                    1,
                    self.weights[layer].as_ptr(),
                    n_in as isize,
                    1,
                    0.0,
                    dx.as_mut_ptr(),
                    n_in as isize,
                    1,
                );
            }
            let act = self.activation;
            for (d, &y) in dx.iter_mut().zip(x) {
                *d *= act.derivative_from_output(y);
            }
            delta = dx;
        }
        Ok(grads)
    }
}
