use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fixed::{round_shift_rne, saturate_i16, Fx16, FRAC_BITS};
use super::latency;
use super::KernelError;

/// Fully connected network with Fx16 parameters.
///
/// `weights[l]` is row-major `[n_out][n_in]` for layer `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<Fx16>>,
    pub biases: Vec<Vec<Fx16>>,
    pub reuse_factor: usize,
    #[serde(default = "default_pipeline_depth")]
    pub pipeline_depth: u64,
}

fn default_pipeline_depth() -> u64 {
    8
}

/// Borrowed view of one dense layer.
#[derive(Debug, Clone, Copy)]
pub struct DenseLayer<'a> {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: &'a [Fx16],
    pub biases: &'a [Fx16],
}

impl MlpModel {
    pub fn new(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<Fx16>>,
        biases: Vec<Vec<Fx16>>,
        reuse_factor: usize,
    ) -> Result<Self, KernelError> {
        let m = Self {
            layer_sizes,
            weights,
            biases,
            reuse_factor,
            pipeline_depth: default_pipeline_depth(),
        };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<(), KernelError> {
        if self.layer_sizes.len() < 2 {
            return Err(KernelError::Model(
                "a model needs at least two layer sizes".into(),
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(KernelError::Model("layer sizes must be positive".into()));
        }
        if self.reuse_factor == 0 {
            return Err(KernelError::Model("reuse_factor must be at least 1".into()));
        }
        let n = self.layer_sizes.len() - 1;
        if self.weights.len() != n || self.biases.len() != n {
            return Err(KernelError::Model(format!(
                "{} layers declared but {} weight and {} bias tensors given",
                n,
                self.weights.len(),
                self.biases.len()
            )));
        }
        for l in 0..n {
            let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            if self.weights[l].len() != i * o || self.biases[l].len() != o {
                return Err(KernelError::Model(format!(
                    "layer {l} expects {o}x{i} weights and {o} biases"
                )));
            }
        }
        Ok(())
    }

    pub fn zeros(layer_sizes: &[usize], reuse_factor: usize) -> Self {
        let weights = layer_sizes
            .windows(2)
            .map(|w| vec![Fx16::ZERO; w[0] * w[1]])
            .collect();
        let biases = layer_sizes
            .windows(2)
            .map(|w| vec![Fx16::ZERO; w[1]])
            .collect();
        Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            reuse_factor,
            pipeline_depth: default_pipeline_depth(),
        }
    }

    /// Deterministic random initialization, weights scaled by `1/sqrt(n_in)`.
    pub fn random(layer_sizes: &[usize], seed: u64, reuse_factor: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(layer_sizes, reuse_factor);
        for (l, &n_in) in layer_sizes[..m.n_layers()].iter().enumerate() {
            let scale = 1.0 / (n_in as f64).sqrt();
            for w in m.weights[l].iter_mut() {
                *w = Fx16::from_f64(rng.gen_range(-scale..scale));
            }
            for b in m.biases[l].iter_mut() {
                *b = Fx16::from_f64(rng.gen_range(-0.125..0.125));
            }
        }
        m
    }

    pub fn load(path: &Path) -> Result<Self, KernelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KernelError::Model(format!("{}: {e}", path.display())))?;
        let m: MlpModel = serde_json::from_str(&text)
            .map_err(|e| KernelError::Model(format!("{}: {e}", path.display())))?;
        m.check()?;
        Ok(m)
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_len(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.layer_sizes.last().expect("checked model")
    }

    pub fn layer(&self, l: usize) -> DenseLayer<'_> {
        DenseLayer {
            n_in: self.layer_sizes[l],
            n_out: self.layer_sizes[l + 1],
            weights: &self.weights[l],
            biases: &self.biases[l],
        }
    }

    /// Compute cycles of the whole network under the reuse-factor model.
    pub fn cycles(&self) -> u64 {
        latency::mlp_cycles(&self.layer_sizes, self.reuse_factor, self.pipeline_depth)
    }

    pub fn layer_cycles(&self, l: usize) -> u64 {
        let layer = self.layer(l);
        latency::dense_layer_cost(
            layer.n_in,
            layer.n_out,
            self.reuse_factor,
            self.pipeline_depth,
        )
        .cycles
    }
}

/// One dense layer. Products are accumulated exactly and rounded once.
pub fn dense(layer: DenseLayer<'_>, input: &[Fx16], relu: bool) -> Result<Vec<Fx16>, KernelError> {
    if input.len() != layer.n_in {
        return Err(KernelError::Shape {
            expected: layer.n_in,
            got: input.len(),
        });
    }
    let out = (0..layer.n_out)
        .map(|j| {
            let row = &layer.weights[j * layer.n_in..(j + 1) * layer.n_in];
            let acc: i64 = row
                .iter()
                .zip(input)
                .map(|(w, x)| w.raw() as i64 * x.raw() as i64)
                .sum::<i64>()
                + ((layer.biases[j].raw() as i64) << FRAC_BITS);
            let y = Fx16::from_raw(saturate_i16(round_shift_rne(acc, FRAC_BITS)));
            if relu {
                y.relu()
            } else {
                y
            }
        })
        .collect();
    Ok(out)
}

/// Classifier inference: ReLU on hidden layers, raw logits out.
pub fn mlp_infer(model: &MlpModel, input: &[Fx16]) -> Result<Vec<Fx16>, KernelError> {
    if input.len() != model.input_len() {
        return Err(KernelError::Shape {
            expected: model.input_len(),
            got: input.len(),
        });
    }
    let last = model.n_layers() - 1;
    let mut act = input.to_vec();
    for l in 0..model.n_layers() {
        act = dense(model.layer(l), &act, l != last)?;
    }
    Ok(act)
}

/// Largest Fx16 value that still maps to a valid pixel (255/256).
pub const PIXEL_MAX: Fx16 = Fx16::from_raw(255 << (FRAC_BITS - 8));

/// Autoencoder inference: as [`mlp_infer`], with the linear output clamped to
/// the pixel range [0, 255/256].
pub fn autoencoder_infer(model: &MlpModel, input: &[Fx16]) -> Result<Vec<Fx16>, KernelError> {
    let out = mlp_infer(model, input)?;
    Ok(out
        .into_iter()
        .map(|y| y.clamp(Fx16::ZERO, PIXEL_MAX))
        .collect())
}

/// argmax over logits, lowest index on ties.
pub fn classify(logits: &[Fx16]) -> Option<usize> {
    logits
        .iter()
        .enumerate()
        .fold(None, |best, (i, &v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}
