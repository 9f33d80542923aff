//! WAV input/output and band-limited sample-rate conversion.
//!
//! Only 16-bit integer PCM, mono, is supported. Samples are held as `f64`
//! normalized to `[-1.0, 1.0]` (integer value / 32768).

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::{Path, PathBuf};

use log::warn;
use thiserror::Error;

/// Sample rate of the original high-quality corpus.
pub const SOURCE_RATE: u32 = 48_000;
/// Sample rate of the ground truth and of the enhanced output.
pub const WIDEBAND_RATE: u32 = 16_000;
/// Sample rate of codec output.
pub const NARROWBAND_RATE: u32 = 8_000;

/// Kaiser window shape parameter of the resampling filter.
const KAISER_BETA: f64 = 8.0;
/// Half-width of the resampling filter, in zero crossings of the sinc kernel.
const SINC_HALF_WIDTH: usize = 64;
/// Largest number of fractional phases for which filter taps are tabulated.
const MAX_TABULATED_PHASES: u64 = 1024;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("{path}: expected mono audio, found {channels} channels")]
    ChannelCount { path: PathBuf, channels: u16 },
    #[error("{path}: unsupported sample format: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("{path}: data chunk truncated ({found} of {declared} samples present)")]
    Truncated {
        path: PathBuf,
        declared: u32,
        found: u32,
    },
    #[error("{path}: malformed WAV: {detail}")]
    Malformed { path: PathBuf, detail: String },
    #[error("{path}: read failed: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {detail}")]
    Write { path: PathBuf, detail: String },
    #[error("invalid sample rate {0}")]
    InvalidRate(u32),
}

/// A mono clip of normalized samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Truncates or zero-pads to exactly `len` samples.
    pub fn fit_to_len(&mut self, len: usize) {
        self.samples.resize(len, 0.0);
    }
}

/// Reads a 16-bit mono PCM WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => AudioError::NotFound(path.to_path_buf()),
        _ => AudioError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    decode_wav(BufReader::new(file), path)
}

/// Decodes WAV bytes from any reader. `path` is used only for error messages.
pub fn decode_wav<R: Read>(reader: R, path: &Path) -> Result<AudioClip, AudioError> {
    let p = || path.to_path_buf();
    let mut wav = hound::WavReader::new(reader).map_err(|e| match e {
        hound::Error::IoError(source) if source.kind() == io::ErrorKind::UnexpectedEof => {
            AudioError::Malformed {
                path: p(),
                detail: "file ends inside the header".into(),
            }
        }
        hound::Error::IoError(source) => AudioError::Io { path: p(), source },
        hound::Error::Unsupported => AudioError::UnsupportedFormat {
            path: p(),
            detail: "unsupported WAV encoding".into(),
        },
        other => AudioError::Malformed {
            path: p(),
            detail: other.to_string(),
        },
    })?;
    let spec = wav.spec();
    if spec.channels != 1 {
        return Err(AudioError::ChannelCount {
            path: p(),
            channels: spec.channels,
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedFormat {
            path: p(),
            detail: format!(
                "{:?} with {} bits per sample (need 16-bit integer PCM)",
                spec.sample_format, spec.bits_per_sample
            ),
        });
    }
    let declared = wav.len();
    let mut samples = Vec::with_capacity(declared as usize);
    for s in wav.samples::<i16>() {
        match s {
            Ok(v) => samples.push(v as f64 / 32768.0),
            // hound reports a short data chunk as UnexpectedEof or, for a
            // partial sample, as a generic "failed to read enough bytes".
            Err(hound::Error::IoError(e))
                if matches!(e.kind(), io::ErrorKind::UnexpectedEof | io::ErrorKind::Other) =>
            {
                return Err(AudioError::Truncated {
                    path: p(),
                    declared,
                    found: samples.len() as u32,
                })
            }
            Err(hound::Error::IoError(source)) => return Err(AudioError::Io { path: p(), source }),
            Err(other) => {
                return Err(AudioError::Malformed {
                    path: p(),
                    detail: other.to_string(),
                })
            }
        }
    }
    if samples.len() < declared as usize {
        return Err(AudioError::Truncated {
            path: p(),
            declared,
            found: samples.len() as u32,
        });
    }
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Quantizes one normalized sample to 16-bit PCM.
pub fn quantize_i16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes a clip as 16-bit mono PCM. Out-of-range samples are clamped.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let path = path.as_ref();
    let werr = |detail: String| AudioError::Write {
        path: path.to_path_buf(),
        detail,
    };
    if clip.sample_rate == 0 {
        return Err(AudioError::InvalidRate(0));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| werr(e.to_string()))?;
    let clipped = clip
        .samples
        .iter()
        .filter(|s| !(-1.0..=1.0).contains(*s))
        .count();
    if clipped > 0 {
        warn!(
            "{}: {clipped} samples outside [-1, 1] clamped on write",
            path.display()
        );
    }
    for &s in &clip.samples {
        let s = if s.is_finite() { s } else { 0.0 };
        writer
            .write_sample(quantize_i16(s))
            .map_err(|e| werr(e.to_string()))?;
    }
    writer.finalize().map_err(|e| werr(e.to_string()))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Windowed-sinc low-pass kernel used by [`resample`].
struct SincKernel {
    /// Cutoff times two, in cycles per input sample.
    bandwidth: f64,
    /// Half-width in input samples.
    half_width: usize,
    i0_beta: f64,
}

impl SincKernel {
    fn new(in_rate: u32, out_rate: u32) -> Self {
        let bandwidth = in_rate.min(out_rate) as f64 / in_rate as f64;
        let half_width = (SINC_HALF_WIDTH as f64 / bandwidth).ceil() as usize;
        Self {
            bandwidth,
            half_width,
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    fn eval(&self, d: f64) -> f64 {
        let x = d / self.half_width as f64;
        if x.abs() >= 1.0 {
            return 0.0;
        }
        let arg = PI * self.bandwidth * d;
        let sinc = if arg.abs() < 1e-12 { 1.0 } else { arg.sin() / arg };
        let window = bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / self.i0_beta;
        self.bandwidth * sinc * window
    }

    /// Taps for input indices `base - half_width + 1 ..= base + half_width`
    /// when the output falls `frac` samples after `base`.
    fn taps(&self, frac: f64) -> Vec<f64> {
        let hw = self.half_width as isize;
        (-hw + 1..=hw).map(|j| self.eval(frac - j as f64)).collect()
    }
}

/// Converts `clip` to `target_rate` by windowed-sinc interpolation.
///
/// The low-pass cutoff is half the lower of the two rates, so downsampling is
/// anti-aliased. Output length is `round(len * target_rate / rate)`; samples
/// outside the clip are treated as zero.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidRate(target_rate));
    }
    if clip.sample_rate == 0 {
        return Err(AudioError::InvalidRate(clip.sample_rate));
    }
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }
    let in_rate = clip.sample_rate as u64;
    let out_rate = target_rate as u64;
    let in_len = clip.samples.len() as u64;
    let out_len = ((in_len as u128 * out_rate as u128 + in_rate as u128 / 2) / in_rate as u128) as usize;

    let g = gcd(in_rate, out_rate);
    let up = out_rate / g;
    let down = in_rate / g;
    let kernel = SincKernel::new(clip.sample_rate, target_rate);
    let table: Option<Vec<Vec<f64>>> = (up <= MAX_TABULATED_PHASES)
        .then(|| (0..up).map(|p| kernel.taps(p as f64 / up as f64)).collect());

    let x = &clip.samples;
    let hw = kernel.half_width as i64;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let num = n * down;
        let base = (num / up) as i64;
        let phase = num % up;
        let computed;
        let taps: &[f64] = match &table {
            Some(t) => &t[phase as usize],
            None => {
                computed = kernel.taps(phase as f64 / up as f64);
                &computed
            }
        };
        let first = base - hw + 1;
        let lo = first.max(0);
        let hi = (base + hw).min(in_len as i64 - 1);
        let mut acc = 0.0;
        if lo <= hi {
            let t0 = (lo - first) as usize;
            for (w, s) in taps[t0..].iter().zip(&x[lo as usize..=hi as usize]) {
                acc += w * s;
            }
        }
        out.push(acc);
    }
    Ok(AudioClip::new(out, target_rate))
}
