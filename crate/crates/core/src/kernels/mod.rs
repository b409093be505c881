//! Functional and timing models of the accelerator kernels.

mod fixed;
pub mod image;
pub mod latency;
mod mlp;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixed::{round_shift_rne, saturate_i16, Fx16, FRAC_BITS};
pub use image::{hist_equalize, histogram, night_vision, noise_filter, Image};
pub use mlp::{autoencoder_infer, classify, dense, mlp_infer, DenseLayer, MlpModel, PIXEL_MAX};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("shape mismatch: expected {expected} words, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("invalid kernel parameters: {0}")]
    Spec(String),
}

/// Kernel identifier exposed through the KERNEL_ID register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccelKind {
    Identity,
    Affine,
    Mix,
    MedianFilter,
    Histogram,
    Equalize,
    NightVision,
    Mlp,
    Autoencoder,
    Dense,
}

impl AccelKind {
    pub const ALL: [AccelKind; 10] = [
        AccelKind::Identity,
        AccelKind::Affine,
        AccelKind::Mix,
        AccelKind::MedianFilter,
        AccelKind::Histogram,
        AccelKind::Equalize,
        AccelKind::NightVision,
        AccelKind::Mlp,
        AccelKind::Autoencoder,
        AccelKind::Dense,
    ];

    pub fn id(self) -> u64 {
        Self::ALL.iter().position(|&k| k == self).expect("listed") as u64 + 1
    }

    pub fn from_id(id: u64) -> Option<Self> {
        (id as usize)
            .checked_sub(1)
            .and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn name(self) -> &'static str {
        match self {
            AccelKind::Identity => "identity",
            AccelKind::Affine => "affine",
            AccelKind::Mix => "mix",
            AccelKind::MedianFilter => "median_filter",
            AccelKind::Histogram => "histogram",
            AccelKind::Equalize => "equalize",
            AccelKind::NightVision => "night_vision",
            AccelKind::Mlp => "mlp",
            AccelKind::Autoencoder => "autoencoder",
            AccelKind::Dense => "dense",
        }
    }
}

impl fmt::Display for AccelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accelerator parameters as written in a SoC description. Which fields are
/// required depends on `kernel`; see [`Kernel::from_spec`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccelSpec {
    pub kernel: Option<AccelKind>,
    /// Input chunk length of the synthetic kernels.
    pub words: Option<usize>,
    pub out_words: Option<usize>,
    /// Input part lengths of the `mix` kernel.
    pub parts: Option<Vec<usize>>,
    pub mul: Option<u64>,
    pub add: Option<u64>,
    /// Cycles per input word (synthetic) or per pixel (image kernels).
    pub alpha: Option<u64>,
    pub fixed_cycles: Option<u64>,
    /// JSON model file, relative to the SoC description.
    pub model: Option<PathBuf>,
    pub layers: Option<Vec<usize>>,
    pub model_seed: Option<u64>,
    pub reuse_factor: Option<usize>,
    pub pipeline_depth: Option<u64>,
    pub layer: Option<usize>,
    pub relu: Option<bool>,
    pub pixel_input: Option<bool>,
}

impl AccelSpec {
    pub fn of(kind: AccelKind) -> Self {
        Self {
            kernel: Some(kind),
            ..Default::default()
        }
    }
}

/// Value distribution of a kernel input part, used to generate workloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputDomain {
    /// Pixel intensities in `[0, max]`.
    Pixels { max: u8 },
    /// 256 bins summing to 1024.
    Histogram,
    /// Fx16 words in [-1, 1).
    Activations,
    /// Arbitrary 32-bit values.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticCost {
    pub alpha: u64,
    pub fixed: u64,
}

impl SyntheticCost {
    fn cycles(self, words: usize) -> u64 {
        self.fixed + self.alpha * words as u64
    }
}

/// A configured kernel: pure function plus cycle cost.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// Copies its input; accepts a short final chunk.
    Identity {
        words: usize,
        cost: SyntheticCost,
    },
    /// `out[i] = in[i % words] * mul + add + i` (wrapping).
    Affine {
        words: usize,
        out_words: usize,
        mul: u64,
        add: u64,
        cost: SyntheticCost,
    },
    /// `out[i] = sum_p (p + 1) * part_p[i % len_p]` (wrapping).
    Mix {
        parts: Vec<usize>,
        out_words: usize,
        cost: SyntheticCost,
    },
    MedianFilter {
        alpha: u64,
    },
    Histogram {
        alpha: u64,
    },
    /// Inputs: image (1024 words) then its histogram (256 words).
    Equalize {
        alpha: u64,
    },
    /// Median filter, histogram and equalization fused in one accelerator.
    NightVision {
        alpha: u64,
    },
    Mlp {
        model: Arc<MlpModel>,
    },
    Autoencoder {
        model: Arc<MlpModel>,
    },
    /// One layer of a partitioned network.
    Dense {
        model: Arc<MlpModel>,
        layer: usize,
        relu: bool,
        pixel_input: bool,
    },
}

fn need<T: Clone>(v: &Option<T>, kind: AccelKind, field: &str) -> Result<T, KernelError> {
    v.clone()
        .ok_or_else(|| KernelError::Spec(format!("{kind} kernel requires `{field}`")))
}

impl Kernel {
    /// Resolves a spec. Model files are looked up relative to `base_dir`.
    pub fn from_spec(spec: &AccelSpec, base_dir: &Path) -> Result<Kernel, KernelError> {
        let kind = spec
            .kernel
            .ok_or_else(|| KernelError::Spec("missing `kernel`".into()))?;
        let cost = SyntheticCost {
            alpha: spec.alpha.unwrap_or(1),
            fixed: spec.fixed_cycles.unwrap_or(0),
        };
        let positive = |n: usize, field: &str| {
            if n == 0 {
                Err(KernelError::Spec(format!(
                    "{kind} kernel: `{field}` must be positive"
                )))
            } else {
                Ok(n)
            }
        };
        let k = match kind {
            AccelKind::Identity => Kernel::Identity {
                words: positive(need(&spec.words, kind, "words")?, "words")?,
                cost,
            },
            AccelKind::Affine => {
                let words = positive(need(&spec.words, kind, "words")?, "words")?;
                Kernel::Affine {
                    words,
                    out_words: positive(spec.out_words.unwrap_or(words), "out_words")?,
                    mul: spec.mul.unwrap_or(1),
                    add: spec.add.unwrap_or(0),
                    cost,
                }
            }
            AccelKind::Mix => {
                let parts = need(&spec.parts, kind, "parts")?;
                if parts.is_empty() || parts.len() > 4 || parts.contains(&0) {
                    return Err(KernelError::Spec(
                        "mix kernel needs 1 to 4 nonempty parts".into(),
                    ));
                }
                let out_words = positive(spec.out_words.unwrap_or(parts[0]), "out_words")?;
                Kernel::Mix {
                    parts,
                    out_words,
                    cost,
                }
            }
            AccelKind::MedianFilter => Kernel::MedianFilter {
                alpha: spec.alpha.unwrap_or(1),
            },
            AccelKind::Histogram => Kernel::Histogram {
                alpha: spec.alpha.unwrap_or(1),
            },
            AccelKind::Equalize => Kernel::Equalize {
                alpha: spec.alpha.unwrap_or(1),
            },
            AccelKind::NightVision => Kernel::NightVision {
                alpha: spec.alpha.unwrap_or(3),
            },
            AccelKind::Mlp => Kernel::Mlp {
                model: Arc::new(load_model(spec, kind, base_dir)?),
            },
            AccelKind::Autoencoder => {
                let model = load_model(spec, kind, base_dir)?;
                if model.input_len() != image::PIXELS || model.output_len() != image::PIXELS {
                    return Err(KernelError::Spec(
                        "autoencoder must map 1024 pixels to 1024 pixels".into(),
                    ));
                }
                Kernel::Autoencoder {
                    model: Arc::new(model),
                }
            }
            AccelKind::Dense => {
                let model = load_model(spec, kind, base_dir)?;
                let layer = need(&spec.layer, kind, "layer")?;
                if layer >= model.n_layers() {
                    return Err(KernelError::Spec(format!(
                        "layer {layer} out of range for a {}-layer model",
                        model.n_layers()
                    )));
                }
                Kernel::Dense {
                    relu: spec.relu.unwrap_or(layer + 1 < model.n_layers()),
                    pixel_input: spec.pixel_input.unwrap_or(layer == 0),
                    model: Arc::new(model),
                    layer,
                }
            }
        };
        Ok(k)
    }

    pub fn kind(&self) -> AccelKind {
        match self {
            Kernel::Identity { .. } => AccelKind::Identity,
            Kernel::Affine { .. } => AccelKind::Affine,
            Kernel::Mix { .. } => AccelKind::Mix,
            Kernel::MedianFilter { .. } => AccelKind::MedianFilter,
            Kernel::Histogram { .. } => AccelKind::Histogram,
            Kernel::Equalize { .. } => AccelKind::Equalize,
            Kernel::NightVision { .. } => AccelKind::NightVision,
            Kernel::Mlp { .. } => AccelKind::Mlp,
            Kernel::Autoencoder { .. } => AccelKind::Autoencoder,
            Kernel::Dense { .. } => AccelKind::Dense,
        }
    }

    /// Word count of each input part of one chunk, in load order.
    pub fn in_parts(&self) -> Vec<usize> {
        match self {
            Kernel::Identity { words, .. } | Kernel::Affine { words, .. } => vec![*words],
            Kernel::Mix { parts, .. } => parts.clone(),
            Kernel::MedianFilter { .. } | Kernel::Histogram { .. } | Kernel::NightVision { .. } => {
                vec![image::PIXELS]
            }
            Kernel::Equalize { .. } => vec![image::PIXELS, image::BINS],
            Kernel::Mlp { model } | Kernel::Autoencoder { model } => vec![model.input_len()],
            Kernel::Dense { model, layer, .. } => vec![model.layer_sizes[*layer]],
        }
    }

    /// Total input words of one full chunk (IN_CHUNK_WORDS).
    pub fn in_words(&self) -> usize {
        self.in_parts().iter().sum()
    }

    /// Output words of one full chunk (OUT_CHUNK_WORDS).
    pub fn out_words(&self) -> usize {
        match self {
            Kernel::Identity { words, .. } => *words,
            Kernel::Affine { out_words, .. } | Kernel::Mix { out_words, .. } => *out_words,
            Kernel::MedianFilter { .. } | Kernel::Equalize { .. } | Kernel::NightVision { .. } => {
                image::PIXELS
            }
            Kernel::Histogram { .. } => image::BINS,
            Kernel::Mlp { model } | Kernel::Autoencoder { model } => model.output_len(),
            Kernel::Dense { model, layer, .. } => model.layer_sizes[*layer + 1],
        }
    }

    /// Whether a final chunk shorter than [`Kernel::in_words`] is allowed.
    pub fn accepts_partial(&self) -> bool {
        matches!(self, Kernel::Identity { .. })
    }

    /// Output length for an input chunk of `in_words` words.
    pub fn out_words_for(&self, in_words: usize) -> usize {
        match self {
            Kernel::Identity { .. } => in_words,
            _ => self.out_words(),
        }
    }

    pub fn input_domain(&self, part: usize) -> InputDomain {
        match self {
            Kernel::Identity { .. } | Kernel::Affine { .. } | Kernel::Mix { .. } => {
                InputDomain::Raw
            }
            Kernel::NightVision { .. } => InputDomain::Pixels { max: 63 },
            Kernel::Equalize { .. } if part == 1 => InputDomain::Histogram,
            Kernel::MedianFilter { .. }
            | Kernel::Histogram { .. }
            | Kernel::Equalize { .. }
            | Kernel::Mlp { .. }
            | Kernel::Autoencoder { .. } => InputDomain::Pixels { max: 255 },
            Kernel::Dense {
                pixel_input: true, ..
            } => InputDomain::Pixels { max: 255 },
            Kernel::Dense { .. } => InputDomain::Activations,
        }
    }

    /// Compute latency for a chunk of `in_words` input words.
    pub fn cycles(&self, in_words: usize) -> u64 {
        match self {
            Kernel::Identity { cost, .. } => cost.cycles(in_words),
            Kernel::Affine { words, cost, .. } => cost.cycles(*words),
            Kernel::Mix { parts, cost, .. } => cost.cycles(parts.iter().sum()),
            Kernel::MedianFilter { alpha }
            | Kernel::Histogram { alpha }
            | Kernel::Equalize { alpha }
            | Kernel::NightVision { alpha } => latency::image_cycles(*alpha, image::PIXELS),
            Kernel::Mlp { model } | Kernel::Autoencoder { model } => model.cycles(),
            Kernel::Dense { model, layer, .. } => model.layer_cycles(*layer),
        }
    }

    /// Runs the kernel on one chunk (input parts concatenated).
    pub fn compute(&self, input: &[u64]) -> Result<Vec<u64>, KernelError> {
        let full = self.in_words();
        let exact = |expected: usize| {
            if input.len() == expected {
                Ok(())
            } else {
                Err(KernelError::Shape {
                    expected,
                    got: input.len(),
                })
            }
        };
        match self {
            Kernel::Identity { words, .. } => {
                if input.is_empty() || input.len() > *words {
                    return Err(KernelError::Shape {
                        expected: *words,
                        got: input.len(),
                    });
                }
                Ok(input.to_vec())
            }
            Kernel::Affine {
                words,
                out_words,
                mul,
                add,
                ..
            } => {
                exact(*words)?;
                Ok((0..*out_words)
                    .map(|i| {
                        input[i % words]
                            .wrapping_mul(*mul)
                            .wrapping_add(*add)
                            .wrapping_add(i as u64)
                    })
                    .collect())
            }
            Kernel::Mix {
                parts, out_words, ..
            } => {
                exact(full)?;
                let mut slices = Vec::with_capacity(parts.len());
                let mut at = 0;
                for &len in parts {
                    slices.push(&input[at..at + len]);
                    at += len;
                }
                Ok((0..*out_words)
                    .map(|i| {
                        slices.iter().enumerate().fold(0u64, |acc, (p, s)| {
                            acc.wrapping_add((p as u64 + 1).wrapping_mul(s[i % s.len()]))
                        })
                    })
                    .collect())
            }
            Kernel::MedianFilter { .. } => Ok(noise_filter(&Image::from_words(input)?).to_words()),
            Kernel::Histogram { .. } => {
                Ok(image::hist_to_words(&histogram(&Image::from_words(input)?)))
            }
            Kernel::Equalize { .. } => {
                exact(full)?;
                let img = Image::from_words(&input[..image::PIXELS])?;
                let hist = image::hist_from_words(&input[image::PIXELS..])?;
                Ok(hist_equalize(&img, &hist).to_words())
            }
            Kernel::NightVision { .. } => Ok(night_vision(&Image::from_words(input)?).to_words()),
            Kernel::Mlp { model } => {
                let x = pixels_to_fx(input)?;
                Ok(mlp_infer(model, &x)?
                    .into_iter()
                    .map(Fx16::to_word)
                    .collect())
            }
            Kernel::Autoencoder { model } => {
                let x = pixels_to_fx(input)?;
                Ok(autoencoder_infer(model, &x)?
                    .into_iter()
                    .map(|y| y.to_pixel() as u64)
                    .collect())
            }
            Kernel::Dense {
                model,
                layer,
                relu,
                pixel_input,
            } => {
                let x = if *pixel_input {
                    pixels_to_fx(input)?
                } else {
                    input.iter().map(|&w| Fx16::from_word(w)).collect()
                };
                Ok(dense(model.layer(*layer), &x, *relu)?
                    .into_iter()
                    .map(Fx16::to_word)
                    .collect())
            }
        }
    }
}

fn pixels_to_fx(words: &[u64]) -> Result<Vec<Fx16>, KernelError> {
    words
        .iter()
        .map(|&w| {
            u8::try_from(w)
                .map(Fx16::from_pixel)
                .map_err(|_| KernelError::Domain(format!("pixel word {w} exceeds 255")))
        })
        .collect()
}

fn load_model(spec: &AccelSpec, kind: AccelKind, base_dir: &Path) -> Result<MlpModel, KernelError> {
    let mut model = match (&spec.model, &spec.layers) {
        (Some(path), None) => MlpModel::load(&base_dir.join(path))?,
        (None, Some(layers)) => {
            let seed = need(&spec.model_seed, kind, "model_seed")?;
            let m = MlpModel::random(layers, seed, spec.reuse_factor.unwrap_or(1));
            m.check()?;
            m
        }
        (Some(_), Some(_)) => {
            return Err(KernelError::Spec(format!(
                "{kind} kernel: give either `model` or `layers`, not both"
            )))
        }
        (None, None) => {
            return Err(KernelError::Spec(format!(
                "{kind} kernel requires `model` or `layers`"
            )))
        }
    };
    if let Some(r) = spec.reuse_factor {
        if r == 0 {
            return Err(KernelError::Spec("reuse_factor must be at least 1".into()));
        }
        model.reuse_factor = r;
    }
    if let Some(d) = spec.pipeline_depth {
        model.pipeline_depth = d;
    }
    Ok(model)
}
