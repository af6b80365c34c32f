//! The five waveform transforms used to synthesize extra positives.

use super::vocoder::phase_vocoder;
use super::AugmentError;
use crate::audio::{resample_to_length, AudioClip};
use crate::features::Stft;

const VOCODER_N_FFT: usize = 2048;
const VOCODER_HOP: usize = 512;
/// Frame length used to measure silence when trimming.
pub const TRIM_FRAME: usize = 2048;

/// Change duration by `1 / rate` while keeping pitch.
pub fn time_stretch(clip: &AudioClip, rate: f64) -> Result<AudioClip, AugmentError> {
    if !(0.1..=10.0).contains(&rate) {
        return Err(AugmentError::RateOutOfRange(rate));
    }
    let stft = Stft::new(VOCODER_N_FFT, VOCODER_HOP);
    Ok(AudioClip::new(phase_vocoder(&stft, &clip.samples, rate), clip.sample_rate))
}

/// Shift pitch by `semitones` while keeping duration.
///
/// The clip is stretched to `2^(s/12)` times its length, then squeezed back
/// to the original length by resampling, which scales every frequency by the
/// same factor.
pub fn pitch_shift(clip: &AudioClip, semitones: f64) -> Result<AudioClip, AugmentError> {
    if !(semitones.abs() <= 12.0) {
        return Err(AugmentError::SemitonesOutOfRange(semitones));
    }
    if clip.is_empty() {
        return Ok(clip.clone());
    }
    let stretched = time_stretch(clip, 2f64.powf(-semitones / 12.0))?;
    Ok(AudioClip::new(resample_to_length(&stretched.samples, clip.len()), clip.sample_rate))
}

/// Move samples by `round(fraction * len)` positions (positive is later in
/// time). With `rollover` the samples wrap around, otherwise vacated
/// positions are zero.
pub fn shift(clip: &AudioClip, fraction: f64, rollover: bool) -> Result<AudioClip, AugmentError> {
    if !(fraction.abs() <= 1.0) {
        return Err(AugmentError::ParameterOutOfRange(format!("shift fraction {fraction}")));
    }
    let n = clip.len();
    if n == 0 {
        return Ok(clip.clone());
    }
    let k = (fraction * n as f64).round() as i64;
    let mut samples = vec![0.0; n];
    if rollover {
        let k = k.rem_euclid(n as i64) as usize;
        samples[k..].copy_from_slice(&clip.samples[..n - k]);
        samples[..k].copy_from_slice(&clip.samples[n - k..]);
    } else if k >= 0 {
        let k = (k as usize).min(n);
        samples[k..].copy_from_slice(&clip.samples[..n - k]);
    } else {
        let k = (k.unsigned_abs() as usize).min(n);
        samples[..n - k].copy_from_slice(&clip.samples[k..]);
    }
    Ok(AudioClip::new(samples, clip.sample_rate))
}

/// Output of [`trim_silence`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trimmed {
    pub clip: AudioClip,
    /// The whole input was silent; `clip` is empty and must be re-padded.
    pub silent: bool,
}

/// Drop leading and trailing [`TRIM_FRAME`]-sample frames whose RMS lies
/// more than `threshold_db` below the loudest frame.
pub fn trim_silence(clip: &AudioClip, threshold_db: f64) -> Trimmed {
    let rms: Vec<f64> = clip
        .samples
        .chunks(TRIM_FRAME)
        .map(|f| (f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64).sqrt())
        .collect();
    let peak = rms.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Trimmed { clip: AudioClip::new(Vec::new(), clip.sample_rate), silent: true };
    }
    let floor = peak * 10f64.powf(-threshold_db / 20.0);
    let first = rms.iter().position(|&r| r >= floor).expect("peak frame qualifies");
    let last = rms.iter().rposition(|&r| r >= floor).expect("peak frame qualifies");
    let end = ((last + 1) * TRIM_FRAME).min(clip.len());
    Trimmed { clip: AudioClip::new(clip.samples[first * TRIM_FRAME..end].to_vec(), clip.sample_rate), silent: false }
}

/// Scale amplitude by `10^(db/20)` without clipping.
pub fn gain(clip: &AudioClip, db: f64) -> Result<AudioClip, AugmentError> {
    if !(db.abs() <= 40.0) {
        return Err(AugmentError::ParameterOutOfRange(format!("gain {db} dB")));
    }
    if db == 0.0 {
        return Ok(clip.clone());
    }
    let factor = 10f64.powf(db / 20.0);
    Ok(AudioClip::new(clip.samples.iter().map(|s| s * factor).collect(), clip.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;
    use proptest::prelude::*;

    fn tone(freq: f64, n: usize) -> AudioClip {
        AudioClip::new(
            (0..n).map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 22050.0).sin()).collect(),
            SAMPLE_RATE,
        )
    }

    fn dominant_bin(clip: &AudioClip) -> usize {
        let stft = Stft::new(2048, 512);
        let spec = stft.power(&clip.samples);
        let mut total = vec![0.0; spec.n_bins];
        for t in 2..spec.n_frames - 2 {
            for (acc, p) in total.iter_mut().zip(spec.frame(t)) {
                *acc += p;
            }
        }
        (0..total.len()).max_by(|&a, &b| total[a].total_cmp(&total[b])).unwrap()
    }

    fn nearest_bin(freq: f64) -> usize {
        (freq * 2048.0 / 22050.0).round() as usize
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn noisy(n: usize) -> AudioClip {
        let mut state = 12345u64;
        AudioClip::new(
            (0..n)
                .map(|i| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let white = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                    0.3 * white + 0.4 * (i as f64 * 0.05).sin()
                })
                .collect(),
            SAMPLE_RATE,
        )
    }

    #[test]
    fn stretch_identity_rate() {
        let clip = noisy(30_000);
        let out = time_stretch(&clip, 1.0).unwrap();
        assert!(out.len().abs_diff(clip.len()) <= 512);
        assert!(correlation(&clip.samples, &out.samples) > 0.99);
    }

    #[test]
    fn stretch_length_formula() {
        let clip = noisy(154_350);
        let out = time_stretch(&clip, 2.0).unwrap();
        assert!(out.len().abs_diff(77_175) <= 512);
        for rate in [0.8, 1.25, 0.5] {
            let out = time_stretch(&clip, rate).unwrap();
            let expect = (154_350.0 / rate).round() as usize;
            assert!(out.len().abs_diff(expect) <= 512);
        }
    }

    #[test]
    fn stretch_keeps_pitch() {
        let clip = tone(440.0, 22_050);
        let out = time_stretch(&clip, 0.8).unwrap();
        assert_eq!(dominant_bin(&out), dominant_bin(&clip));
        assert_eq!(dominant_bin(&clip), nearest_bin(440.0));
    }

    #[test]
    fn stretch_rejects_bad_rates() {
        let clip = tone(440.0, 4096);
        assert!(matches!(time_stretch(&clip, 0.05), Err(AugmentError::RateOutOfRange(_))));
        assert!(matches!(time_stretch(&clip, 11.0), Err(AugmentError::RateOutOfRange(_))));
        assert!(time_stretch(&clip, f64::NAN).is_err());
    }

    #[test]
    fn pitch_shift_octave_up() {
        let clip = tone(440.0, 22_050);
        let out = pitch_shift(&clip, 12.0).unwrap();
        assert_eq!(out.len(), clip.len());
        assert_eq!(dominant_bin(&out), nearest_bin(880.0));
        let down = pitch_shift(&clip, -5.0).unwrap();
        assert_eq!(dominant_bin(&down), nearest_bin(440.0 * 2f64.powf(-5.0 / 12.0)));
    }

    #[test]
    fn pitch_shift_zero_is_near_identity() {
        let clip = noisy(20_000);
        let out = pitch_shift(&clip, 0.0).unwrap();
        assert_eq!(out.len(), clip.len());
        assert!(correlation(&clip.samples, &out.samples) > 0.99);
        assert!(matches!(pitch_shift(&clip, 12.5), Err(AugmentError::SemitonesOutOfRange(_))));
    }

    #[test]
    fn shift_examples() {
        let clip = AudioClip::new(vec![1.0, 2.0, 3.0, 4.0], SAMPLE_RATE);
        assert_eq!(shift(&clip, 0.5, true).unwrap().samples, vec![3.0, 4.0, 1.0, 2.0]);
        assert_eq!(shift(&clip, 0.0, true).unwrap(), clip);
        assert_eq!(shift(&clip, 0.0, false).unwrap(), clip);
        assert_eq!(shift(&clip, 0.25, false).unwrap().samples, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(shift(&clip, -0.5, false).unwrap().samples, vec![3.0, 4.0, 0.0, 0.0]);
        assert_eq!(shift(&clip, -0.25, true).unwrap().samples, vec![2.0, 3.0, 4.0, 1.0]);
        assert_eq!(shift(&clip, 1.0, false).unwrap().samples, vec![0.0; 4]);
        assert!(shift(&clip, 1.5, true).is_err());
    }

    #[test]
    fn trim_removes_silent_edges() {
        let mut samples = vec![0.0; 10 * TRIM_FRAME];
        for s in &mut samples[4 * TRIM_FRAME + 100..5 * TRIM_FRAME + 50] {
            *s = 0.7;
        }
        let clip = AudioClip::new(samples, SAMPLE_RATE);
        let out = trim_silence(&clip, 20.0);
        assert!(!out.silent);
        assert_eq!(out.clip.samples, clip.samples[4 * TRIM_FRAME..6 * TRIM_FRAME]);
    }

    #[test]
    fn trim_keeps_loud_clip_and_flags_silence() {
        let clip = noisy(9000);
        assert_eq!(trim_silence(&clip, 20.0).clip, clip);
        let out = trim_silence(&AudioClip::new(vec![0.0; 5000], SAMPLE_RATE), 20.0);
        assert!(out.silent);
        assert!(out.clip.is_empty());
    }

    #[test]
    fn gain_examples() {
        let clip = noisy(100);
        assert_eq!(gain(&clip, 0.0).unwrap(), clip);
        let doubled = gain(&clip, 20.0 * 2f64.log10()).unwrap();
        for (a, b) in clip.samples.iter().zip(&doubled.samples) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        let quiet = gain(&clip, -40.0).unwrap();
        for (a, b) in clip.samples.iter().zip(&quiet.samples) {
            assert!((0.01 * a - b).abs() < 1e-15);
        }
        assert!(gain(&clip, 41.0).is_err());
    }

    proptest! {
        #[test]
        fn rollover_shift_is_a_permutation(
            xs in prop::collection::vec(-1.0f64..1.0, 1..200),
            fraction in -1.0f64..=1.0,
        ) {
            let clip = AudioClip::new(xs.clone(), SAMPLE_RATE);
            let out = shift(&clip, fraction, true).unwrap();
            let mut a: Vec<u64> = xs.iter().map(|v| v.to_bits()).collect();
            let mut b: Vec<u64> = out.samples.iter().map(|v| v.to_bits()).collect();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn gain_preserves_zeros(
            xs in prop::collection::vec(prop_oneof![Just(0.0f64), -1.0f64..1.0], 1..100),
            db in -40.0f64..40.0,
        ) {
            let out = gain(&AudioClip::new(xs.clone(), SAMPLE_RATE), db).unwrap();
            for (a, b) in xs.iter().zip(&out.samples) {
                prop_assert_eq!(*a == 0.0, *b == 0.0);
            }
        }

        #[test]
        fn pitch_shift_preserves_length(n in 3000usize..12000, semis in -12.0f64..12.0) {
            let clip = noisy(n);
            prop_assert_eq!(pitch_shift(&clip, semis).unwrap().len(), n);
        }
    }
}
