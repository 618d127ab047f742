//! Fully connected ReLU networks with an optional two-way softmax head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DenseMatrix, NnError, Parameterized, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputHead {
    /// Two logits turned into `(y1, y2)` probabilities.
    Softmax2,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// `[input, hidden..., output]`
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub output_head: OutputHead,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, output_head: OutputHead) -> Result<Self, NnError> {
        if layer_widths.len() < 2 || layer_widths.contains(&0) {
            return Err(NnError::Spec(format!("invalid layer widths {layer_widths:?}")));
        }
        if output_head == OutputHead::Softmax2 && *layer_widths.last().unwrap() != 2 {
            return Err(NnError::Spec("softmax2 head needs an output width of 2".into()));
        }
        Ok(Self { layer_widths, activation: Activation::Relu, output_head })
    }

    /// `[input, 32, 8, 2]` with a softmax head.
    pub fn attack(input: usize) -> Self {
        Self::new(vec![input, 32, 8, 2], OutputHead::Softmax2).expect("static widths")
    }

    /// `[input, hidden..., output]` with an identity head.
    pub fn decoder(input: usize, hidden: &[usize], output: usize) -> Result<Self, NnError> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        Self::new(widths, OutputHead::Identity)
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }
}

/// Affine map `y = x·W + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: DenseMatrix::zeros(input, output), bias: vec![0.0; output] }
    }

    /// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let data = (0..input * output).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            weight: DenseMatrix::from_vec(input, output, data).expect("sized"),
            bias: vec![0.0; output],
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix, NnError> {
        let mut y = x.matmul(&self.weight)?;
        for i in 0..y.rows() {
            y.row_mut(i).iter_mut().zip(&self.bias).for_each(|(v, b)| *v += b);
        }
        Ok(y)
    }

    /// Returns `(grad, dL/dx)` for upstream `dL/dy`.
    pub fn backward(&self, x: &DenseMatrix, dy: &DenseMatrix) -> Result<(Linear, DenseMatrix), NnError> {
        let weight = x.t_matmul(dy)?;
        let mut bias = vec![0.0; dy.cols()];
        for i in 0..dy.rows() {
            bias.iter_mut().zip(dy.row(i)).for_each(|(b, g)| *b += g);
        }
        let dx = dy.matmul_t(&self.weight)?;
        Ok((Linear { weight, bias }, dx))
    }
}

impl Parameterized for Linear {
    fn params(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice(), &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }

    fn tensors(&self, prefix: &str) -> Vec<Tensor> {
        vec![
            Tensor::new(format!("{prefix}.weight"), vec![self.weight.rows(), self.weight.cols()], self.weight.as_slice().to_vec()),
            Tensor::new(format!("{prefix}.bias"), vec![self.bias.len()], self.bias.clone()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Linear>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer (the batch itself, then post-ReLU activations).
    inputs: Vec<DenseMatrix>,
    /// Pre-activation output of each layer.
    pre: Vec<DenseMatrix>,
    output: DenseMatrix,
}

impl MlpCache {
    pub fn output(&self) -> &DenseMatrix {
        &self.output
    }

    pub fn into_output(self) -> DenseMatrix {
        self.output
    }
}

impl Mlp {
    pub fn glorot<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let layers = spec.layer_widths.windows(2).map(|w| Linear::glorot(w[0], w[1], rng)).collect();
        Self { spec, layers }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let layers = spec.layer_widths.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect();
        Self { spec, layers }
    }

    pub fn forward(&self, input: &DenseMatrix) -> Result<MlpCache, NnError> {
        if input.cols() != self.spec.input_width() {
            return Err(NnError::Shape(format!(
                "MLP expects {} input columns, got {}",
                self.spec.input_width(),
                input.cols()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&current)?;
            inputs.push(current);
            current = if l + 1 < self.layers.len() { relu(&z) } else { z.clone() };
            pre.push(z);
        }
        let output = match self.spec.output_head {
            OutputHead::Identity => current,
            OutputHead::Softmax2 => softmax_rows(&current),
        };
        Ok(MlpCache { inputs, pre, output })
    }

    pub fn predict(&self, input: &DenseMatrix) -> Result<DenseMatrix, NnError> {
        Ok(self.forward(input)?.into_output())
    }

    /// Parameter gradients and input gradient for `upstream = dL/d(output)`.
    pub fn backward(&self, cache: &MlpCache, upstream: &DenseMatrix) -> Result<(Mlp, DenseMatrix), NnError> {
        if cache.inputs.len() != self.layers.len() || upstream.shape() != cache.output.shape() {
            return Err(NnError::StaleCache(format!(
                "cache has {} layers and output {:?}, upstream is {:?}",
                cache.inputs.len(),
                cache.output.shape(),
                upstream.shape()
            )));
        }
        let mut dz = match self.spec.output_head {
            OutputHead::Identity => upstream.clone(),
            OutputHead::Softmax2 => softmax_backward(&cache.output, upstream),
        };
        let mut grads: Vec<Linear> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let (g, mut dx) = self.layers[l].backward(&cache.inputs[l], &dz)?;
            grads.push(g);
            if l > 0 {
                let pre = &cache.pre[l - 1];
                dx.as_mut_slice().iter_mut().zip(pre.as_slice()).for_each(|(d, &z)| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            dz = dx;
        }
        grads.reverse();
        Ok((Mlp { spec: self.spec.clone(), layers: grads }, dz))
    }
}

impl Parameterized for Mlp {
    fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn tensors(&self, prefix: &str) -> Vec<Tensor> {
        self.layers.iter().enumerate().flat_map(|(i, l)| l.tensors(&format!("{prefix}.layers.{i}"))).collect()
    }
}

fn relu(z: &DenseMatrix) -> DenseMatrix {
    let mut out = z.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

fn softmax_rows(z: &DenseMatrix) -> DenseMatrix {
    let mut out = z.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

fn softmax_backward(probs: &DenseMatrix, upstream: &DenseMatrix) -> DenseMatrix {
    let mut dz = DenseMatrix::zeros(probs.rows(), probs.cols());
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let g = upstream.row(i);
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        dz.row_mut(i).iter_mut().zip(p.iter().zip(g)).for_each(|(d, (pi, gi))| *d = pi * (gi - dot));
    }
    dz
}
