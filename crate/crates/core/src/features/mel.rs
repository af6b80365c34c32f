use super::FeatureError;

/// Mel value of a frequency in Hz: `2595 * log10(1 + f / 700)`.
pub fn hz_to_mel(hz: f64) -> Result<f64, FeatureError> {
    if !(hz >= 0.0) {
        return Err(FeatureError::Domain(format!("frequency {hz} Hz is negative")));
    }
    Ok(2595.0 * (1.0 + hz / 700.0).log10())
}

/// Inverse of [`hz_to_mel`].
pub fn mel_to_hz(mel: f64) -> Result<f64, FeatureError> {
    if !(mel >= 0.0) {
        return Err(FeatureError::Domain(format!("mel value {mel} is negative")));
    }
    Ok(700.0 * (10f64.powf(mel / 2595.0) - 1.0))
}

/// Triangular filters spaced evenly on the mel axis from 0 Hz to Nyquist.
///
/// Each row covers `n_fft / 2 + 1` FFT bins and is scaled so its largest
/// weight is exactly 1.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    /// Row-major `n_mels x n_bins`.
    pub weights: Vec<f64>,
    /// Half-open range of non-zero bins for each filter.
    support: Vec<(usize, usize)>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32) -> Result<Self, FeatureError> {
        if n_mels == 0 {
            return Err(FeatureError::Domain("n_mels must be at least 1".into()));
        }
        let n_bins = n_fft / 2 + 1;
        let nyquist = f64::from(sample_rate) / 2.0;
        let mel_max = hz_to_mel(nyquist)?;
        let breakpoints = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
            .collect::<Result<Vec<_>, _>>()?;
        let bin_hz: Vec<f64> = (0..n_bins).map(|k| k as f64 * f64::from(sample_rate) / n_fft as f64).collect();

        let mut weights = vec![0.0; n_mels * n_bins];
        let mut support = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (lo, center, hi) = (breakpoints[m], breakpoints[m + 1], breakpoints[m + 2]);
            let row = &mut weights[m * n_bins..(m + 1) * n_bins];
            for (w, &f) in row.iter_mut().zip(&bin_hz) {
                let rising = (f - lo) / (center - lo);
                let falling = (hi - f) / (hi - center);
                *w = rising.min(falling).max(0.0);
            }
            let peak = row.iter().cloned().fold(0.0, f64::max);
            if peak > 0.0 {
                row.iter_mut().for_each(|w| *w /= peak);
            }
            let first = row.iter().position(|&w| w > 0.0).unwrap_or(0);
            let last = row.iter().rposition(|&w| w > 0.0).map_or(0, |i| i + 1);
            support.push((first, last.max(first)));
        }
        Ok(Self { n_mels, n_bins, weights, support })
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Apply the bank to one power spectrum frame.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        debug_assert_eq!(power.len(), self.n_bins);
        for (m, o) in out.iter_mut().enumerate().take(self.n_mels) {
            let (a, b) = self.support[m];
            *o = self.row(m)[a..b].iter().zip(&power[a..b]).map(|(w, p)| w * p).sum();
        }
    }
}
