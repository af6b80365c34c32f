use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::features::Stft;

fn wrap_phase(x: f64) -> f64 {
    x - 2.0 * PI * (x / (2.0 * PI)).round()
}

/// Phase-vocoder time stretch.
///
/// Analysis frames are read at fractional positions `0, rate, 2*rate, ...`
/// with linearly interpolated magnitudes and accumulated phase, then resynthesized
/// at the original hop. The result holds `round(len / rate)` samples.
pub(crate) fn phase_vocoder(stft: &Stft, signal: &[f64], rate: f64) -> Vec<f64> {
    let out_len = (signal.len() as f64 / rate).round() as usize;
    if signal.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    let mut frames = stft.analyze(signal);
    let n_bins = stft.n_bins();
    frames.push(vec![Complex64::new(0.0, 0.0); n_bins]);
    let n_analysis = frames.len() - 1;

    let advance: Vec<f64> = (0..n_bins).map(|k| 2.0 * PI * stft.hop as f64 * k as f64 / stft.n_fft as f64).collect();
    let mut phase: Vec<f64> = frames[0].iter().map(|c| c.arg()).collect();
    let mut out = Vec::new();

    let mut step = 0usize;
    loop {
        let t = step as f64 * rate;
        if t >= n_analysis as f64 {
            break;
        }
        let i = t.floor() as usize;
        let alpha = t - i as f64;
        let (c0, c1) = (&frames[i], &frames[i + 1]);
        let mut frame = Vec::with_capacity(n_bins);
        for k in 0..n_bins {
            let mag = (1.0 - alpha) * c0[k].norm() + alpha * c1[k].norm();
            frame.push(Complex64::from_polar(mag, phase[k]));
            let dphase = wrap_phase(c1[k].arg() - c0[k].arg() - advance[k]);
            phase[k] += advance[k] + dphase;
        }
        out.push(frame);
        step += 1;
    }
    stft.synthesize(&out, out_len)
}
