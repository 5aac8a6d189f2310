//! Small fully connected autoencoder trained with Adam on mean squared
//! reconstruction error. Hidden layers use tanh, the output is linear.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::rng_for;
use crate::{Error, Result};

/// Encoder widths after the input layer; the decoder mirrors them.
pub const ENCODER_WIDTHS: [usize; 4] = [24, 12, 8, 4];

const CHECKPOINT_MAGIC: &[u8; 4] = b"VAEC";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct AutoEncoder {
    widths: Vec<usize>,
    params: Vec<f64>,
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeTrainConfig {
    pub epochs: u32,
    pub lr: f64,
    /// Mini-batch size, used once the training set exceeds [`FULL_BATCH_LIMIT`].
    pub batch: usize,
    pub seed: u64,
}

/// Training sets up to this size are trained full-batch.
pub const FULL_BATCH_LIMIT: usize = 256;

impl Default for AeTrainConfig {
    /// Per-cycle retraining recipe.
    fn default() -> Self {
        AeTrainConfig {
            epochs: 20,
            lr: 8.0e-4,
            batch: 64,
            seed: 0,
        }
    }
}

impl AeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lr must be > 0, got {}",
                self.lr
            )));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs: u32,
}

impl AutoEncoder {
    /// Default architecture for an input of dimension `input_dim`:
    /// `input -> 24 -> 12 -> 8 -> 4 -> 8 -> 12 -> 24 -> input`.
    pub fn new(input_dim: usize, seed: u64) -> Self {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(&ENCODER_WIDTHS);
        widths.extend(ENCODER_WIDTHS.iter().rev().skip(1));
        widths.push(input_dim);
        Self::with_widths(&widths, seed)
    }

    /// Xavier-uniform initialized network with the given layer widths.
    pub fn with_widths(widths: &[usize], seed: u64) -> Self {
        assert!(widths.len() >= 2, "need at least one layer");
        let mut ae = Self::zeros(widths);
        ae.seed = seed;
        let mut rng = rng_for(&[seed, 0x6165_696e]);
        for l in 0..ae.num_layers() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w, _) = ae.layer_ranges(l);
            for p in &mut ae.params[w] {
                *p = rng.gen_range(-limit..limit);
            }
        }
        ae
    }

    pub fn zeros(widths: &[usize]) -> Self {
        let n = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        AutoEncoder {
            widths: widths.to_vec(),
            params: vec![0.0; n],
            seed: 0,
        }
    }

    pub fn from_params(widths: &[usize], params: Vec<f64>, seed: u64) -> Result<Self> {
        let mut ae = Self::zeros(widths);
        if params.len() != ae.params.len() {
            return Err(Error::DimensionMismatch {
                what: "autoencoder parameters",
                expected: ae.params.len(),
                found: params.len(),
            });
        }
        ae.params = params;
        ae.seed = seed;
        Ok(ae)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn latent_dim(&self) -> usize {
        *self.widths.iter().min().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Parameter index ranges of the weights and biases of layer `l`.
    fn layer_ranges(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start: usize = self.widths[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        let nw = self.widths[l] * self.widths[l + 1];
        (
            start..start + nw,
            start + nw..start + nw + self.widths[l + 1],
        )
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "autoencoder input",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Activations of every layer, input first.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.num_layers() - 1;
        for l in 0..=last {
            let (wr, br) = self.layer_ranges(l);
            let (w, b) = (&self.params[wr], &self.params[br]);
            let input = &acts[l];
            let n_in = input.len();
            let out: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bias)| {
                    let z = bias
                        + w[o * n_in..(o + 1) * n_in]
                            .iter()
                            .zip(input)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    if l == last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.activations(x).pop().unwrap())
    }

    /// Mean over samples and dimensions of the squared reconstruction error.
    pub fn loss(&self, batch: &[&[f64]]) -> Result<f64> {
        let mut total = 0.0;
        for x in batch {
            total += self.reconstruction_error(x)?;
        }
        Ok(total / batch.len().max(1) as f64)
    }

    pub fn reconstruction_error(&self, x: &[f64]) -> Result<f64> {
        let y = self.forward(x)?;
        Ok(y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64)
    }

    /// Batch loss and its gradient with respect to the flat parameters.
    pub fn loss_and_grad(&self, batch: &[&[f64]]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let bsz = batch.len().max(1) as f64;
        let last = self.num_layers() - 1;
        for x in batch {
            self.check_input(x)?;
            let acts = self.activations(x);
            let d = x.len() as f64;
            let out = &acts[last + 1];
            loss += out
                .iter()
                .zip(*x)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / d;
            let mut delta: Vec<f64> = out
                .iter()
                .zip(*x)
                .map(|(a, b)| 2.0 * (a - b) / (d * bsz))
                .collect();
            for l in (0..=last).rev() {
                if l != last {
                    for (dv, a) in delta.iter_mut().zip(&acts[l + 1]) {
                        *dv *= 1.0 - a * a;
                    }
                }
                let (wr, br) = self.layer_ranges(l);
                let input = &acts[l];
                let n_in = input.len();
                let w_start = wr.start;
                for (o, dv) in delta.iter().enumerate() {
                    grad[br.start + o] += dv;
                    let row = &mut grad[w_start + o * n_in..w_start + (o + 1) * n_in];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += dv * a;
                    }
                }
                if l > 0 {
                    let w = &self.params[wr];
                    let mut prev = vec![0.0; n_in];
                    for (o, dv) in delta.iter().enumerate() {
                        for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                            *p += wv * dv;
                        }
                    }
                    delta = prev;
                }
            }
        }
        Ok((loss / bsz, grad))
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf).expect("in-memory write");
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Header (magic, version, seed, widths) then the parameters as
    /// little-endian f32.
    pub fn write_checkpoint<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&(self.widths.len() as u32).to_le_bytes())?;
        for w in &self.widths {
            out.write_all(&(*w as u32).to_le_bytes())?;
        }
        out.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for p in &self.params {
            out.write_all(&(*p as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(&mut bytes.as_slice())
    }

    pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<Self> {
        let bad = |e: std::io::Error| Error::Parse(format!("autoencoder checkpoint: {e}"));
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(bad)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Parse("autoencoder checkpoint: bad magic".into()));
        }
        let version = read_u32(input).map_err(bad)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "autoencoder checkpoint: unsupported version {version}"
            )));
        }
        let mut seed = [0u8; 8];
        input.read_exact(&mut seed).map_err(bad)?;
        let n_widths = read_u32(input).map_err(bad)? as usize;
        if !(2..=64).contains(&n_widths) {
            return Err(Error::Parse(format!(
                "autoencoder checkpoint: {n_widths} layer widths"
            )));
        }
        let widths = (0..n_widths)
            .map(|_| read_u32(input).map(|v| v as usize))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(bad)?;
        let n = read_u32(input).map_err(bad)? as usize;
        let mut params = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let mut b = [0u8; 4];
            input.read_exact(&mut b).map_err(bad)?;
            params.push(f32::from_le_bytes(b) as f64);
        }
        Self::from_params(&widths, params, u64::from_le_bytes(seed))
    }
}

fn read_u32<R: Read>(input: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Trains a copy of `ae` on `features`. Full-batch up to
/// [`FULL_BATCH_LIMIT`] samples, shuffled mini-batches of `cfg.batch`
/// beyond; the shuffle order depends only on `cfg.seed` and the epoch.
pub fn ae_train(
    ae: &AutoEncoder,
    features: &[Vec<f64>],
    cfg: &AeTrainConfig,
) -> Result<(AutoEncoder, TrainReport)> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::InvalidArgument(
            "ae_train needs at least one feature".into(),
        ));
    }
    let all: Vec<&[f64]> = features.iter().map(|f| f.as_slice()).collect();
    let initial_loss = ae.loss(&all)?;
    let mut net = ae.clone();
    let mut adam = Adam::new(net.param_count());
    let batch = if features.len() <= FULL_BATCH_LIMIT {
        features.len()
    } else {
        cfg.batch
    };
    let mut order: Vec<usize> = (0..features.len()).collect();
    for epoch in 0..cfg.epochs {
        if batch < features.len() {
            order.sort_unstable();
            order.shuffle(&mut rng_for(&[cfg.seed, 0x7368_7566, epoch as u64]));
        }
        for chunk in order.chunks(batch) {
            let b: Vec<&[f64]> = chunk.iter().map(|&i| all[i]).collect();
            let (loss, grad) = net.loss_and_grad(&b)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite loss {loss} at epoch {epoch} (lr {}, batch {})",
                    cfg.lr,
                    b.len()
                )));
            }
            adam.step(&mut net.params, &grad, cfg.lr);
        }
    }
    let final_loss = net.loss(&all)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged(format!(
            "non-finite final loss {final_loss}"
        )));
    }
    Ok((
        net,
        TrainReport {
            initial_loss,
            final_loss,
            epochs: cfg.epochs,
        },
    ))
}
