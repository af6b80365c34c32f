//! Audio ingestion: WAV decoding, mono mixdown, resampling and length
//! canonicalization.

use std::io::{Read, Seek, Write};
use std::path::Path;

use thiserror::Error;

/// Canonical sample rate of every clip fed to feature extraction.
pub const SAMPLE_RATE: u32 = 22050;
/// Canonical clip length: seven seconds at [`SAMPLE_RATE`].
pub const CLIP_SAMPLES: usize = 154_350;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed RIFF/WAVE container: {0}")]
    MalformedContainer(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio contains no sample frames")]
    EmptyAudio,
}

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Sample encoding used when writing WAV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            AudioError::MalformedContainer(format!("truncated data: {e}"))
        }
        hound::Error::IoError(e) => AudioError::Io(e),
        hound::Error::FormatError(msg) => AudioError::MalformedContainer(msg.to_string()),
        hound::Error::Unsupported => AudioError::UnsupportedEncoding("compressed or unknown format tag".into()),
        hound::Error::TooWide => AudioError::UnsupportedEncoding("sample too wide".into()),
        hound::Error::UnfinishedSample => AudioError::MalformedContainer("data chunk ends mid-sample".into()),
        hound::Error::InvalidSampleFormat => AudioError::UnsupportedEncoding("invalid sample format".into()),
    }
}

/// Decode a RIFF/WAVE file into a mono clip at its declared sample rate.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let file = std::fs::File::open(path.as_ref())?;
    decode_wav(std::io::BufReader::new(file))
}

/// Decode WAV bytes from any seekable reader.
///
/// Accepts 16-bit PCM, 24-bit PCM and 32-bit float with one or two
/// channels. Integer samples are scaled by `2^(bits-1)`; stereo is mixed down
/// by the per-frame channel mean.
pub fn decode_wav<R: Read + Seek>(reader: R) -> Result<AudioClip, AudioError> {
    let mut wav = hound::WavReader::new(reader).map_err(map_hound)?;
    let spec = wav.spec();
    let channels = usize::from(spec.channels);
    if !(1..=2).contains(&channels) {
        return Err(AudioError::UnsupportedEncoding(format!("{channels} channels")));
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::MalformedContainer("sample rate is zero".into()));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = f64::from(1u32 << (bits - 1));
            wav.samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<Result<_, _>>()
                .map_err(map_hound)?
        }
        (hound::SampleFormat::Float, 32) => {
            wav.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>().map_err(map_hound)?
        }
        (fmt, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!("{bits}-bit {fmt:?}")));
        }
    };

    if interleaved.len() < channels {
        return Err(AudioError::EmptyAudio);
    }
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved.chunks_exact(channels).map(|frame| frame.iter().sum::<f64>() / channels as f64).collect()
    };
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Encode a clip as a mono WAV file.
///
/// `Pcm16` rounds and saturates to the 16-bit range; `Float32` keeps
/// amplitudes outside [-1, 1] intact.
pub fn write_wav<W: Write + Seek>(writer: W, clip: &AudioClip, encoding: WavEncoding) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut w = hound::WavWriter::new(writer, spec).map_err(map_hound)?;
    for &s in &clip.samples {
        match encoding {
            WavEncoding::Pcm16 => {
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                w.write_sample(v).map_err(map_hound)?;
            }
            WavEncoding::Float32 => w.write_sample(s as f32).map_err(map_hound)?,
        }
    }
    w.finalize().map_err(map_hound)
}

pub fn save_wav(path: impl AsRef<Path>, clip: &AudioClip, encoding: WavEncoding) -> Result<(), AudioError> {
    let file = std::fs::File::create(path.as_ref())?;
    write_wav(std::io::BufWriter::new(file), clip, encoding)
}

/// Linear-interpolation resampling to `target_rate`.
///
/// The output holds `round(len * target / source)` samples. Equal rates
/// return an identical copy.
pub fn resample(clip: &AudioClip, target_rate: u32) -> AudioClip {
    assert!(target_rate > 0, "target rate must be positive");
    if clip.sample_rate == target_rate {
        return clip.clone();
    }
    let n = clip.samples.len();
    let out_len = (n as f64 * f64::from(target_rate) / f64::from(clip.sample_rate)).round() as usize;
    let step = f64::from(clip.sample_rate) / f64::from(target_rate);
    let samples = (0..out_len).map(|i| interpolate(&clip.samples, i as f64 * step)).collect();
    AudioClip::new(samples, target_rate)
}

/// Stretch or squeeze a sample sequence to exactly `out_len` samples by
/// linear interpolation, keeping the first sample aligned.
pub fn resample_to_length(samples: &[f64], out_len: usize) -> Vec<f64> {
    if samples.len() == out_len {
        return samples.to_vec();
    }
    if samples.is_empty() {
        return vec![0.0; out_len];
    }
    let step = samples.len() as f64 / out_len as f64;
    (0..out_len).map(|i| interpolate(samples, i as f64 * step)).collect()
}

fn interpolate(samples: &[f64], pos: f64) -> f64 {
    let i0 = pos.floor() as usize;
    let last = samples.len() - 1;
    if i0 >= last {
        return samples[last];
    }
    let frac = pos - i0 as f64;
    samples[i0] + (samples[i0 + 1] - samples[i0]) * frac
}

/// Trim the tail or zero-pad to exactly `n_samples`.
pub fn fix_length(clip: &AudioClip, n_samples: usize) -> AudioClip {
    let mut samples = clip.samples.clone();
    samples.resize(n_samples, 0.0);
    AudioClip::new(samples, clip.sample_rate)
}

/// Resample to [`SAMPLE_RATE`] then force the length to `n_samples`.
pub fn canonicalize(clip: &AudioClip, n_samples: usize) -> AudioClip {
    fix_length(&resample(clip, SAMPLE_RATE), n_samples)
}
