//! Dense feed-forward network with ReLU hidden layers and a linear output.
//!
//! Inputs are batched row-major: one sample per row. Weights are stored as
//! `(in_dim, out_dim)` so a layer evaluates `x · W + b` on a whole batch with a
//! single matrix product.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::Rng;

use crate::error::{config, usage, Error, Result};

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// Shape `(in_dim, out_dim)`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: Array2::zeros((in_dim, out_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Parameters of a multilayer perceptron.
///
/// The same type doubles as the container for parameter gradients and Adam
/// moments, which always mirror the parameter shapes.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
    generation: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Per-layer activations recorded by [`Mlp::forward`], consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    generation: u64,
    /// Input of each layer (post-ReLU output of the previous one).
    inputs: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

impl Mlp {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization for weights and biases.
    ///
    /// `sizes` lists every layer width including input and output, so
    /// `[9, 256, 256, 256, 1]` is three hidden layers of 256.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                Dense {
                    weights: Array2::from_shape_fn((w[0], w[1]), |_| dist.sample(rng)),
                    bias: Array1::from_shape_fn(w[1], |_| dist.sample(rng)),
                }
            })
            .collect();
        Ok(Self {
            layers,
            generation: next_generation(),
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            generation: next_generation(),
        })
    }

    /// Builds a network from explicit layers, validating that dimensions chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return config("network needs at least one layer");
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return config(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                ));
            }
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return config(format!("layer {k} bias length does not match its width"));
            }
        }
        let net = Self {
            layers,
            generation: next_generation(),
        };
        net.check_finite("network")?;
        Ok(net)
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 {
            return config("layer size list needs an input and an output width");
        }
        if sizes.contains(&0) {
            return config(format!("zero-width layer in {sizes:?}"));
        }
        Ok(())
    }

    /// Zero-valued network with this network's shape.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim(), l.out_dim()))
                .collect(),
            generation: next_generation(),
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access to the layers. Invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.generation = next_generation();
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Layer widths including input and output.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Dense::out_dim));
        s
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.sizes() == other.sizes()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Flattened parameters: per layer, row-major weights then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return config(format!(
                "flat vector has {} entries, network has {}",
                flat.len(),
                self.num_params()
            ));
        }
        let mut it = flat.iter().copied();
        for l in self.layers_mut() {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        for (k, l) in self.layers.iter().enumerate() {
            if !l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "{what}: non-finite value in layer {k}"
                )));
            }
        }
        Ok(())
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return config(format!(
                "input has {} features, network expects {}",
                input.ncols(),
                self.input_dim()
            ));
        }
        if !input.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite network input".into()));
        }
        Ok(())
    }

    /// Batched forward pass returning the output and the activation record.
    pub fn forward(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        self.check_input(&input)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = x.dot(&layer.weights);
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(x);
            x = z;
        }
        Ok((
            x,
            MlpCache {
                generation: self.generation,
                inputs,
            },
        ))
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let last = self.layers.len() - 1;
        let mut x = input.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = x.dot(&layer.weights);
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            x = z;
        }
        Ok(x)
    }

    /// Single-sample convenience wrapper around [`Mlp::predict`].
    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Gradients of `sum(output ⊙ output_grad)` w.r.t. every parameter (summed
    /// over the batch) and w.r.t. the input rows.
    pub fn backward(
        &self,
        cache: &MlpCache,
        output_grad: ArrayView2<f64>,
    ) -> Result<(Mlp, Array2<f64>)> {
        if cache.generation != self.generation || cache.inputs.len() != self.layers.len() {
            return usage("activation cache was produced by different parameters");
        }
        if output_grad.nrows() != cache.batch_size() || output_grad.ncols() != self.output_dim() {
            return usage(format!(
                "output gradient shape {:?} does not match batch {} x {}",
                output_grad.shape(),
                cache.batch_size(),
                self.output_dim()
            ));
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.to_owned();
        for k in (0..self.layers.len()).rev() {
            let x = &cache.inputs[k];
            let layer = &self.layers[k];
            let gw = x.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            let mut dx = delta.dot(&layer.weights.t());
            if k > 0 {
                // x is a ReLU output; zero entries had non-positive pre-activation.
                Zip::from(&mut dx).and(x).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            grads.push(Dense {
                weights: gw,
                bias: gb,
            });
            delta = dx;
        }
        grads.reverse();
        Ok((
            Mlp {
                layers: grads,
                generation: next_generation(),
            },
            delta,
        ))
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Mlp, scale: f64) {
        for (a, b) in self.layers_mut().iter_mut().zip(&other.layers) {
            a.weights.scaled_add(scale, &b.weights);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    /// Euclidean distance between two same-shaped parameter sets.
    pub fn distance(&self, other: &Mlp) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| {
                let w: f64 = Zip::from(&a.weights)
                    .and(&b.weights)
                    .fold(0.0, |acc, x, y| acc + (x - y) * (x - y));
                let c: f64 = Zip::from(&a.bias)
                    .and(&b.bias)
                    .fold(0.0, |acc, x, y| acc + (x - y) * (x - y));
                w + c
            })
            .sum::<f64>()
            .sqrt()
    }
}
