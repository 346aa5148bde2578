use rand::Rng;

use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::{mix_seed, rng};

use super::layers::{Network, TensorInfo};
use super::spec::ModelSpec;

/// A model: its spec, initialization seed and parameter tensors in
/// declaration order (weight, bias, weight, bias, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub seed: u64,
    pub tensors: Vec<Vec<f64>>,
    network: Network,
}

/// Row-major `batch x classes` logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Logits {
    pub values: Vec<f64>,
    pub num_rows: usize,
    pub num_classes: usize,
}

impl Logits {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn argmax(&self) -> Vec<usize> {
        (0..self.num_rows).map(|i| argmax(self.row(i))).collect()
    }

    pub fn softmax(&self) -> Vec<Vec<f64>> {
        (0..self.num_rows).map(|i| softmax(self.row(i))).collect()
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Fan-in uniform initialization: weights drawn from `U(-l, l)` with
/// `l = sqrt(6 / fan_in)`, biases zero. Each tensor draws from its own
/// stream so shapes of other layers do not affect it.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    let network = spec.network()?;
    let tensors = network
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, t)| init_tensor(t, mix_seed(seed, i as u64)))
        .collect();
    Ok(ModelParams { spec: spec.clone(), seed, tensors, network })
}

fn init_tensor(t: &TensorInfo, seed: u64) -> Vec<f64> {
    if !t.is_weight {
        return vec![0.0; t.len()];
    }
    let fan_in: usize = t.shape[1..].iter().product();
    let limit = (6.0 / fan_in as f64).sqrt();
    let mut r = rng(seed);
    (0..t.len()).map(|_| r.random_range(-limit..limit)).collect()
}

impl ModelParams {
    /// Wraps existing tensors, checking them against the spec.
    pub fn from_tensors(spec: ModelSpec, seed: u64, tensors: Vec<Vec<f64>>) -> Result<Self> {
        let network = spec.network()?;
        network.check_params(&tensors)?;
        if tensors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure("non-finite parameter".into()));
        }
        Ok(Self { spec, seed, tensors, network })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn tensor_info(&self) -> Vec<TensorInfo> {
        self.network.tensors().to_vec()
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn check_input(&self, x: &FeatureMatrix) -> Result<()> {
        if x.shape() != self.spec.input_shape {
            return Err(Error::Shape(format!(
                "input {:?} does not match model input {:?}",
                x.shape(),
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &[&FeatureMatrix]) -> Result<Logits> {
        let net = &self.network;
        let mut values = Vec::with_capacity(batch.len() * self.spec.num_classes);
        for x in batch {
            self.check_input(x)?;
            values.extend(net.forward_one(&self.tensors, &x.values));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite logits".into()));
        }
        Ok(Logits { values, num_rows: batch.len(), num_classes: self.spec.num_classes })
    }

    pub fn predict(&self, batch: &[&FeatureMatrix]) -> Result<Vec<usize>> {
        Ok(self.forward(batch)?.argmax())
    }

    /// Mean softmax cross-entropy over the batch.
    pub fn loss(&self, batch: &[&FeatureMatrix], labels: &[usize]) -> Result<f64> {
        if batch.len() != labels.len() || batch.is_empty() {
            return Err(Error::Shape(format!("{} inputs but {} labels", batch.len(), labels.len())));
        }
        let logits = self.forward(batch)?;
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let z = logits.row(i);
            if y >= z.len() {
                return Err(Error::Label(format!("label {y} outside 0..{}", z.len())));
            }
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            total += m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - z[y];
        }
        Ok(total / labels.len() as f64)
    }

    /// Mean softmax cross-entropy over the batch and its gradient.
    pub fn loss_and_grad(&self, batch: &[&FeatureMatrix], labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
        for x in batch {
            self.check_input(x)?;
        }
        let inputs: Vec<&[f64]> = batch.iter().map(|x| x.values.as_slice()).collect();
        loss_and_grad_raw(&self.network, &self.tensors, &inputs, labels)
    }
}

/// Mean softmax cross-entropy and gradient for flat inputs.
pub fn loss_and_grad_raw(
    net: &Network,
    params: &[Vec<f64>],
    inputs: &[&[f64]],
    labels: &[usize],
) -> Result<(f64, Vec<Vec<f64>>)> {
    net.check_params(params)?;
    if inputs.len() != labels.len() {
        return Err(Error::Shape(format!("{} inputs but {} labels", inputs.len(), labels.len())));
    }
    if inputs.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let k = net.output_len();
    let mut grads = net.zeros();
    let mut total = 0.0;
    let scale = 1.0 / inputs.len() as f64;
    for (x, &y) in inputs.iter().zip(labels) {
        if y >= k {
            return Err(Error::Label(format!("label {y} outside 0..{k}")));
        }
        if x.len() != net.input_len() {
            return Err(Error::Shape(format!("input of {} values, expected {}", x.len(), net.input_len())));
        }
        let trace = net.forward_trace(params, x);
        let z = trace.logits();
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[y];
        let mut d: Vec<f64> = z.iter().map(|v| (v - lse).exp() * scale).collect();
        d[y] -= scale;
        net.backward(params, &trace, &d, &mut grads);
    }
    let loss = total * scale;
    if !loss.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "loss is {loss} over a batch of {} (max |param| {:.3e})",
            inputs.len(),
            params.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()))
        )));
    }
    Ok((loss, grads))
}
