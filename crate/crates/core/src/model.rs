//! The convolutional encoder-decoder enhancement network.
//!
//! The encoder is a stack of stride-2 convolutions, each followed by dropout
//! and a leaky ReLU, halving the sequence length per level. Its last output is
//! the latent representation. The decoder walks the levels back up: a stride-1
//! convolution, dropout and activation, then subpixel upsampling (doubling the
//! length, halving the channels) and concatenation with the encoder input at
//! that level. The outermost level concatenates the network input itself. A
//! final linear single-channel convolution is added to the input as a
//! residual, so the network learns a correction to the coded signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{self, AudioClip, AudioError, NARROWBAND_RATE, WIDEBAND_RATE};
use crate::tensor::{Graph, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input length {len} is not a multiple of 2^{levels}")]
    InputLength { len: usize, levels: usize },
    #[error("cannot enhance an empty clip")]
    EmptyClip,
    #[error("expected {expected} Hz audio, got {got} Hz")]
    SampleRate { expected: u32, got: u32 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub levels: usize,
    /// Kernel count per encoder level.
    pub channels: Vec<usize>,
    /// Kernel width per level (shared by the mirrored decoder level).
    pub kernel_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub activation_slope: f64,
    /// Width of the final single-channel projection.
    pub output_kernel: usize,
    /// Start the projection at zero so the untrained network is the identity.
    pub zero_init_output: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            levels: 6,
            channels: vec![256, 512, 512, 512, 512, 512],
            kernel_sizes: vec![65, 33, 33, 17, 9, 9],
            dropout_rate: 0.1,
            activation_slope: 0.2,
            output_kernel: 9,
            zero_init_output: false,
            seed: 0,
        }
    }
}

/// Shape of one convolution in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl LayerSpec {
    pub fn parameter_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel + self.out_channels
    }
}

impl ModelConfig {
    /// Two levels, `[16, 32]` kernels of width 9: the desk-scale test model.
    pub fn toy() -> Self {
        Self {
            levels: 2,
            channels: vec![16, 32],
            kernel_sizes: vec![9, 9],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        if self.channels.len() != self.levels || self.kernel_sizes.len() != self.levels {
            return bad(format!(
                "{} levels need {0} channel counts and {0} kernel sizes, got {} and {}",
                self.levels,
                self.channels.len(),
                self.kernel_sizes.len()
            ));
        }
        if let Some(k) = self
            .kernel_sizes
            .iter()
            .chain(std::iter::once(&self.output_kernel))
            .find(|k| *k % 2 == 0)
        {
            return bad(format!("kernel sizes must be odd, got {k}"));
        }
        if let Some(c) = self.channels.iter().find(|c| **c == 0 || **c % 2 != 0) {
            return bad(format!(
                "channel counts must be even and positive for subpixel upsampling, got {c}"
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if !self.activation_slope.is_finite() {
            return bad("activation slope must be finite".into());
        }
        Ok(())
    }

    /// Required divisor of the input length, `2^levels`.
    pub fn length_multiple(&self) -> usize {
        1 << self.levels
    }

    pub fn encoder_layers(&self) -> Vec<LayerSpec> {
        (0..self.levels)
            .map(|l| LayerSpec {
                in_channels: if l == 0 { 1 } else { self.channels[l - 1] },
                out_channels: self.channels[l],
                kernel: self.kernel_sizes[l],
                stride: 2,
            })
            .collect()
    }

    /// Decoder convolutions, deepest level first.
    pub fn decoder_layers(&self) -> Vec<LayerSpec> {
        (0..self.levels)
            .rev()
            .map(|l| LayerSpec {
                in_channels: if l + 1 == self.levels {
                    self.channels[l]
                } else {
                    self.channels[l + 1] / 2 + self.channels[l]
                },
                out_channels: self.channels[l],
                kernel: self.kernel_sizes[l],
                stride: 1,
            })
            .collect()
    }

    pub fn output_layer(&self) -> LayerSpec {
        LayerSpec {
            in_channels: self.channels[0] / 2 + 1,
            out_channels: 1,
            kernel: self.output_kernel,
            stride: 1,
        }
    }

    /// Every convolution in parameter order: encoder, decoder, projection.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut all = self.encoder_layers();
        all.extend(self.decoder_layers());
        all.push(self.output_layer());
        all
    }
}

/// Network parameters. Each layer owns a `[out, in, k]` kernel followed by
/// an `[out]` bias, in [`ModelConfig::layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: Vec<Tensor>,
}

/// Handles produced by one forward pass over a [`Graph`].
#[derive(Debug, Clone)]
pub struct Forward {
    pub output: Var,
    pub latent: Var,
    /// One handle per entry of [`Model::params`].
    pub params: Vec<Var>,
}

impl Model {
    /// Builds a model from `config.seed`: Glorot-uniform kernels, zero biases.
    pub fn build(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config.layers();
        let last = layers.len() - 1;
        let mut params = Vec::with_capacity(layers.len() * 2);
        for (i, layer) in layers.iter().enumerate() {
            let fan_in = layer.in_channels * layer.kernel;
            let fan_out = layer.out_channels * layer.kernel;
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let zero = i == last && config.zero_init_output;
            let w: Vec<f64> = (0..layer.out_channels * layer.in_channels * layer.kernel)
                .map(|_| if zero { 0.0 } else { rng.gen_range(-bound..bound) })
                .collect();
            let b = vec![0.0; layer.out_channels];
            params.push(Tensor::new(vec![layer.out_channels, layer.in_channels, layer.kernel], w)?);
            params.push(Tensor::new(vec![layer.out_channels], b)?);
        }
        Ok(Self { config, params })
    }

    /// Reassembles a model from stored parameters, checking every shape.
    pub fn from_parts(config: ModelConfig, params: Vec<Tensor>) -> Result<Self, ModelError> {
        config.validate()?;
        let layers = config.layers();
        if params.len() != 2 * layers.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameter tensors, got {}",
                2 * layers.len(),
                params.len()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            let kshape = [layer.out_channels, layer.in_channels, layer.kernel];
            if params[2 * i].shape() != kshape || params[2 * i + 1].shape() != [layer.out_channels] {
                return Err(ModelError::Config(format!("layer {i} parameter shape mismatch")));
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::Config("non-finite parameter".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Records a forward pass of a `[1, L]` input on `graph`.
    pub fn forward<'a, R: Rng>(
        &'a self,
        graph: &mut Graph<'a>,
        input: Var,
        training: bool,
        rng: &mut R,
    ) -> Result<Forward, ModelError> {
        let shape = graph.value(input).shape().to_vec();
        let len = match shape[..] {
            [1, l] => l,
            _ => {
                return Err(ModelError::Tensor(TensorError::Shape {
                    op: "forward",
                    detail: format!("expected [1, L] input, got {shape:?}"),
                }))
            }
        };
        let levels = self.config.levels;
        if len == 0 || len % self.config.length_multiple() != 0 {
            return Err(ModelError::InputLength { len, levels });
        }
        let params: Vec<Var> = self.params.iter().map(|p| graph.param(p)).collect();
        let rate = self.config.dropout_rate;
        let slope = self.config.activation_slope;

        // skips[l] is the input to encoder level l; skips[0] is the network input.
        let mut skips = Vec::with_capacity(levels);
        let mut h = input;
        for l in 0..levels {
            skips.push(h);
            h = graph.conv1d(h, params[2 * l], params[2 * l + 1], 2)?;
            h = graph.dropout(h, rate, training, rng)?;
            h = graph.leaky_relu(h, slope);
        }
        let latent = h;
        for (i, l) in (0..levels).rev().enumerate() {
            let p = 2 * (levels + i);
            h = graph.conv1d(h, params[p], params[p + 1], 1)?;
            h = graph.dropout(h, rate, training, rng)?;
            h = graph.leaky_relu(h, slope);
            h = graph.subpixel_upsample(h)?;
            h = graph.concat_channels(h, skips[l])?;
        }
        let p = 4 * levels;
        let correction = graph.conv1d(h, params[p], params[p + 1], 1)?;
        let output = graph.add(input, correction)?;
        Ok(Forward {
            output,
            latent,
            params,
        })
    }

    /// Eval-mode forward pass over samples of any length: zero-pads to a
    /// multiple of `2^levels` and trims the result back.
    pub fn infer(&self, samples: &[f64]) -> Result<Vec<f64>, ModelError> {
        let len = samples.len();
        let padded_len = len.div_ceil(self.config.length_multiple()) * self.config.length_multiple();
        let mut padded = samples.to_vec();
        padded.resize(padded_len, 0.0);
        let mut graph = Graph::new();
        let x = graph.leaf(Tensor::signal(padded));
        // Dropout is inactive in eval mode, so the generator is never drawn.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fwd = self.forward(&mut graph, x, false, &mut rng)?;
        let mut out = graph.value(fwd.output).data().to_vec();
        out.truncate(len);
        Ok(out)
    }

    /// Upsamples an 8 kHz coded clip to 16 kHz and runs the network on it.
    pub fn enhance(&self, coded: &AudioClip) -> Result<AudioClip, ModelError> {
        if coded.is_empty() {
            return Err(ModelError::EmptyClip);
        }
        if coded.sample_rate != NARROWBAND_RATE {
            return Err(ModelError::SampleRate {
                expected: NARROWBAND_RATE,
                got: coded.sample_rate,
            });
        }
        let upsampled = audio_io::resample(coded, WIDEBAND_RATE)?;
        self.enhance_upsampled(&upsampled)
    }

    /// Runs the network on a clip already at 16 kHz.
    pub fn enhance_upsampled(&self, clip: &AudioClip) -> Result<AudioClip, ModelError> {
        if clip.is_empty() {
            return Err(ModelError::EmptyClip);
        }
        if clip.sample_rate != WIDEBAND_RATE {
            return Err(ModelError::SampleRate {
                expected: WIDEBAND_RATE,
                got: clip.sample_rate,
            });
        }
        Ok(AudioClip::new(self.infer(&clip.samples)?, WIDEBAND_RATE))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            channels: vec![4, 8],
            kernel_sizes: vec![9, 9],
            ..ModelConfig::toy()
        }
    }

    #[test]
    fn default_config_matches_published_architecture() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        let enc = cfg.encoder_layers();
        assert_eq!(enc.iter().map(|l| l.out_channels).collect::<Vec<_>>(), [256, 512, 512, 512, 512, 512]);
        assert_eq!(enc.iter().map(|l| l.kernel).collect::<Vec<_>>(), [65, 33, 33, 17, 9, 9]);
        assert!(enc.iter().all(|l| l.stride == 2));
        assert_eq!(enc[0].in_channels, 1);
    }

    #[test]
    fn config_validation() {
        let mut c = tiny();
        c.kernel_sizes = vec![9, 8];
        assert!(Model::build(c).is_err());
        let mut c = tiny();
        c.channels = vec![4, 5];
        assert!(Model::build(c).is_err());
        let mut c = tiny();
        c.levels = 3;
        assert!(Model::build(c).is_err());
    }

    #[test]
    fn parameter_count_closed_form() {
        let model = Model::build(tiny()).unwrap();
        let enc: usize = 1 * 4 * 9 + 4 + 4 * 8 * 9 + 8;
        assert_eq!(enc, 336);
        // decoder: 8 -> 8, then (8/2 + 4) -> 4, projection (4/2 + 1) -> 1
        let dec = 8 * 8 * 9 + 8 + 8 * 4 * 9 + 4 + 3 * 9 + 1;
        assert_eq!(model.parameter_count(), enc + dec);
        let encoder_alloc: usize = model.params()[..4].iter().map(Tensor::numel).sum();
        assert_eq!(encoder_alloc, enc);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Model::build(ModelConfig { seed: 7, ..tiny() }).unwrap();
        let b = Model::build(ModelConfig { seed: 7, ..tiny() }).unwrap();
        assert_eq!(a, b);
        let c = Model::build(ModelConfig { seed: 8, ..tiny() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn forward_lengths() {
        let model = Model::build(tiny()).unwrap();
        let mut g = Graph::new();
        let x = g.leaf(Tensor::signal((0..64).map(|i| (i as f64 * 0.3).sin() * 0.1).collect()));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fwd = model.forward(&mut g, x, true, &mut rng).unwrap();
        assert_eq!(g.value(fwd.latent).shape(), &[8, 16]);
        assert_eq!(g.value(fwd.output).shape(), &[1, 64]);
        let mut g = Graph::new();
        let x = g.leaf(Tensor::signal(vec![0.0; 62]));
        assert!(matches!(
            model.forward(&mut g, x, false, &mut rng),
            Err(ModelError::InputLength { len: 62, levels: 2 })
        ));
    }

    #[test]
    fn zero_projection_is_identity() {
        let model = Model::build(ModelConfig {
            zero_init_output: true,
            ..tiny()
        })
        .unwrap();
        let x: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.5).collect();
        assert_eq!(model.infer(&x).unwrap(), x);
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let model = Model::build(tiny()).unwrap();
        let x: Vec<f64> = (0..128).map(|i| (i as f64 * 0.05).cos() * 0.2).collect();
        assert_eq!(model.infer(&x).unwrap(), model.infer(&x).unwrap());
    }

    #[test]
    fn enhance_doubles_sample_count() {
        let model = Model::build(tiny()).unwrap();
        let coded = AudioClip::new((0..8000).map(|i| (i as f64 * 0.01).sin() * 0.1).collect(), 8000);
        let out = model.enhance(&coded).unwrap();
        assert_eq!(out.sample_rate, 16000);
        assert_eq!(out.len(), 16000);
        assert!(matches!(model.enhance(&AudioClip::silence(0, 8000)), Err(ModelError::EmptyClip)));
        assert!(matches!(
            model.enhance(&AudioClip::silence(10, 16000)),
            Err(ModelError::SampleRate { .. })
        ));
    }

    #[test]
    fn from_parts_checks_shapes() {
        let model = Model::build(tiny()).unwrap();
        let mut params = model.params().to_vec();
        assert!(Model::from_parts(tiny(), params.clone()).is_ok());
        params.pop();
        assert!(Model::from_parts(tiny(), params).is_err());
    }
}
