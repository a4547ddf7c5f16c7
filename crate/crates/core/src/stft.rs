//! Framing, DC removal, Hamming windowing and the short-time Fourier
//! transform, plus the principal-value phase wrap shared by every phase
//! feature.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio_io::AudioClip;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum StftError {
    #[error("non-finite value {0} has no principal value")]
    NonFinite(f64),
    #[error("signal of {len} samples is shorter than one {frame_len}-sample frame")]
    EmptySignal { len: usize, frame_len: usize },
    #[error("invalid stft config: {0}")]
    InvalidConfig(String),
    #[error("spectrogram shape mismatch: {0}")]
    Shape(String),
}

/// Wraps an angle into `[-pi, pi)`.
pub fn princ(x: f64) -> Result<f64, StftError> {
    if !x.is_finite() {
        return Err(StftError::NonFinite(x));
    }
    Ok(wrap(x))
}

/// `princ` for inputs already known to be finite.
#[inline]
pub(crate) fn wrap(x: f64) -> f64 {
    if (-PI..PI).contains(&x) {
        return x;
    }
    let mut r = x - TWO_PI * ((x + PI) / TWO_PI).floor();
    // floor() can land one period off when x + pi rounds onto a multiple of 2pi.
    if r >= PI {
        r -= TWO_PI;
    }
    if r < -PI {
        r += TWO_PI;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftConfig {
    pub frame_len_samples: usize,
    pub hop_samples: usize,
    pub fft_len: usize,
    pub n_bins_kept: usize,
}

impl Default for StftConfig {
    /// 25 ms frames, 10 ms hop, 512-point FFT, 256 bins at 16 kHz.
    fn default() -> Self {
        Self {
            frame_len_samples: 400,
            hop_samples: 160,
            fft_len: 512,
            n_bins_kept: 256,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<(), StftError> {
        let bad = |m: String| Err(StftError::InvalidConfig(m));
        if self.hop_samples == 0 || self.frame_len_samples == 0 || self.n_bins_kept == 0 {
            return bad("frame length, hop and bin count must be positive".into());
        }
        if !self.fft_len.is_power_of_two() {
            return bad(format!("fft_len {} is not a power of two", self.fft_len));
        }
        if self.hop_samples > self.frame_len_samples || self.frame_len_samples > self.fft_len {
            return bad(format!(
                "need hop ({}) <= frame ({}) <= fft ({})",
                self.hop_samples, self.frame_len_samples, self.fft_len
            ));
        }
        if self.n_bins_kept > self.fft_len / 2 + 1 {
            return bad(format!(
                "n_bins_kept {} exceeds fft_len/2 + 1 = {}",
                self.n_bins_kept,
                self.fft_len / 2 + 1
            ));
        }
        Ok(())
    }

    /// Number of full frames; trailing samples that do not fill a frame are dropped.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_len_samples {
            0
        } else {
            (len - self.frame_len_samples) / self.hop_samples + 1
        }
    }
}

/// Symmetric Hamming window `0.54 - 0.46 cos(2 pi n / (N - 1))`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (TWO_PI * i as f64 / denom).cos())
        .collect()
}

/// Raw (unprocessed) frames of `samples` on the configured grid.
pub fn raw_frames<'a>(samples: &'a [f64], cfg: &StftConfig) -> impl Iterator<Item = &'a [f64]> + 'a {
    let n = cfg.frame_count(samples.len());
    let (len, hop) = (cfg.frame_len_samples, cfg.hop_samples);
    (0..n).map(move |i| &samples[i * hop..i * hop + len])
}

/// Removes the frame mean, then applies the window.
pub fn condition_frame(raw: &[f64], window: &[f64]) -> Vec<f64> {
    // Mean taken about the first sample so constant frames cancel exactly.
    let pivot = raw.first().copied().unwrap_or(0.0);
    let mean = pivot + raw.iter().map(|x| x - pivot).sum::<f64>() / raw.len() as f64;
    raw.iter().zip(window).map(|(x, w)| w * (x - mean)).collect()
}

/// Frame-level analysis pipeline for one configuration. Holds the window
/// and a planned FFT so repeated calls share them.
#[derive(Clone)]
pub struct Analyzer {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Analyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Analyzer").field("cfg", &self.cfg).finish()
    }
}

impl Analyzer {
    pub fn new(cfg: StftConfig) -> Result<Self, StftError> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_len);
        Ok(Self {
            cfg,
            window: hamming(cfg.frame_len_samples),
            fft,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    fn check_len(&self, clip: &AudioClip) -> Result<(), StftError> {
        if clip.len() < self.cfg.frame_len_samples {
            return Err(StftError::EmptySignal {
                len: clip.len(),
                frame_len: self.cfg.frame_len_samples,
            });
        }
        Ok(())
    }

    /// DC-removed, Hamming-windowed frames.
    pub fn frames(&self, clip: &AudioClip) -> Result<Vec<Vec<f64>>, StftError> {
        self.check_len(clip)?;
        Ok(raw_frames(clip.samples(), &self.cfg)
            .map(|raw| condition_frame(raw, &self.window))
            .collect())
    }

    /// Frames weighted by their in-frame sample index before conditioning.
    pub fn ramp_frames(&self, clip: &AudioClip) -> Result<Vec<Vec<f64>>, StftError> {
        self.check_len(clip)?;
        Ok(raw_frames(clip.samples(), &self.cfg)
            .map(|raw| {
                let ramped: Vec<f64> = raw.iter().enumerate().map(|(l, x)| l as f64 * x).collect();
                condition_frame(&ramped, &self.window)
            })
            .collect())
    }

    /// Zero-padded FFT of one prepared frame, all `fft_len` bins.
    pub fn full_spectrum(&self, frame: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.cfg.fft_len];
        for (b, &x) in buf.iter_mut().zip(frame) {
            b.re = x;
        }
        self.fft.process(&mut buf);
        buf
    }

    /// Zero-padded FFT of one prepared frame, truncated to the kept bins.
    pub fn spectrum(&self, frame: &[f64]) -> Vec<Complex64> {
        let mut buf = self.full_spectrum(frame);
        buf.truncate(self.cfg.n_bins_kept);
        buf
    }

    /// Spectrogram of already prepared frames (no further DC removal or windowing).
    pub fn spectrogram_of_frames(&self, frames: &[Vec<f64>]) -> ComplexSpectrogram {
        let bins = self.cfg.n_bins_kept;
        let mut values = Vec::with_capacity(frames.len() * bins);
        for f in frames {
            values.extend(self.spectrum(f));
        }
        ComplexSpectrogram {
            values,
            n_frames: frames.len(),
            n_bins: bins,
            config: self.cfg,
        }
    }

    pub fn stft(&self, clip: &AudioClip) -> Result<ComplexSpectrogram, StftError> {
        Ok(self.spectrogram_of_frames(&self.frames(clip)?))
    }
}

pub fn frame_signal(clip: &AudioClip, cfg: &StftConfig) -> Result<Vec<Vec<f64>>, StftError> {
    Analyzer::new(*cfg)?.frames(clip)
}

pub fn stft(clip: &AudioClip, cfg: &StftConfig) -> Result<ComplexSpectrogram, StftError> {
    Analyzer::new(*cfg)?.stft(clip)
}

/// Frames x bins complex STFT values, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    values: Vec<Complex64>,
    n_frames: usize,
    n_bins: usize,
    config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn from_values(
        values: Vec<Complex64>,
        n_frames: usize,
        config: StftConfig,
    ) -> Result<Self, StftError> {
        let n_bins = config.n_bins_kept;
        if values.len() != n_frames * n_bins {
            return Err(StftError::Shape(format!(
                "{} values for {n_frames} frames x {n_bins} bins",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(StftError::Shape("non-finite spectrogram cell".into()));
        }
        Ok(Self {
            values,
            n_frames,
            n_bins,
            config,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn frame(&self, n: usize) -> &[Complex64] {
        &self.values[n * self.n_bins..(n + 1) * self.n_bins]
    }

    pub fn get(&self, n: usize, k: usize) -> Complex64 {
        self.values[n * self.n_bins + k]
    }

    pub fn magnitude(&self, n: usize, k: usize) -> f64 {
        self.get(n, k).norm()
    }

    /// Phase in `[-pi, pi)`.
    pub fn phase(&self, n: usize, k: usize) -> f64 {
        let v = self.get(n, k);
        wrap(v.im.atan2(v.re))
    }

    /// All phases, row-major.
    pub fn phases(&self) -> Vec<f64> {
        self.values.iter().map(|v| wrap(v.im.atan2(v.re))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip::new(samples, 16000).unwrap()
    }

    fn random_clip(len: usize, seed: u64) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        clip((0..len).map(|_| rng.random_range(-0.5..0.5)).collect())
    }

    #[test]
    fn princ_examples() {
        assert_eq!(princ(0.0).unwrap(), 0.0);
        assert!((princ(1.5 * PI).unwrap() + 0.5 * PI).abs() < 1e-15);
        assert_eq!(princ(PI).unwrap(), -PI);
        assert_eq!(princ(-PI).unwrap(), -PI);
        assert!(princ(f64::NAN).is_err());
        assert!(princ(f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn princ_range_and_period(x in -1e4f64..1e4, k in -50i32..50) {
            let p = princ(x).unwrap();
            prop_assert!((-PI..PI).contains(&p));
            let q = princ(x + TWO_PI * k as f64).unwrap();
            prop_assert!(wrap(p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn config_validation() {
        assert!(StftConfig::default().validate().is_ok());
        let mut c = StftConfig::default();
        c.fft_len = 500;
        assert!(c.validate().is_err());
        c = StftConfig::default();
        c.hop_samples = 401;
        assert!(c.validate().is_err());
        c = StftConfig::default();
        c.n_bins_kept = 258;
        assert!(c.validate().is_err());
        c.n_bins_kept = 257;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn frame_count_and_starts() {
        let samples: Vec<f64> = (0..720).map(|i| i as f64 / 1000.0).collect();
        let cfg = StftConfig::default();
        let starts: Vec<f64> = raw_frames(&samples, &cfg).map(|f| f[0]).collect();
        assert_eq!(starts, vec![0.0, 0.16, 0.32]);
        assert_eq!(cfg.frame_count(16000), 98);
    }

    #[test]
    fn short_clip_is_error() {
        let err = frame_signal(&clip(vec![0.1; 399]), &StftConfig::default()).unwrap_err();
        assert!(matches!(err, StftError::EmptySignal { len: 399, .. }));
    }

    #[test]
    fn dc_removal_kills_constants() {
        let frames = frame_signal(&clip(vec![0.7; 1000]), &StftConfig::default()).unwrap();
        assert!(frames.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn frames_match_direct_recomputation() {
        let cfg = StftConfig::default();
        let c = random_clip(2000, 3);
        let frames = frame_signal(&c, &cfg).unwrap();
        assert_eq!(frames.len(), cfg.frame_count(2000));
        for (i, f) in frames.iter().enumerate() {
            let raw = &c.samples()[i * 160..i * 160 + 400];
            let mean: f64 = raw.iter().sum::<f64>() / 400.0;
            // Pipeline may differ from this oracle by rounding only.
            for (n, (&got, &x)) in f.iter().zip(raw).enumerate() {
                let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / 399.0).cos();
                assert!((got - w * (x - mean)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hamming_endpoints() {
        let w = hamming(400);
        assert!((w[0] - 0.08).abs() < 1e-15);
        assert!((w[399] - 0.08).abs() < 1e-15);
        assert_eq!(hamming(1), vec![1.0]);
    }

    #[test]
    fn zero_clip_zero_spectrum() {
        let s = stft(&clip(vec![0.0; 1600]), &StftConfig::default()).unwrap();
        assert!(s.values().iter().all(|v| v.norm() == 0.0));
        assert_eq!(s.n_bins(), 256);
    }

    #[test]
    fn bin_centered_tone_peaks_at_its_bin() {
        let cfg = StftConfig::default();
        for k in [10usize, 37, 64, 200] {
            let f = k as f64 * 16000.0 / 512.0;
            let c = clip((0..4000).map(|i| 0.5 * (TWO_PI * f * i as f64 / 16000.0).sin()).collect());
            let s = stft(&c, &cfg).unwrap();
            for n in 0..s.n_frames() {
                let peak = (0..s.n_bins())
                    .max_by(|&a, &b| s.magnitude(n, a).total_cmp(&s.magnitude(n, b)))
                    .unwrap();
                assert_eq!(peak, k);
            }
        }
    }

    #[test]
    fn parseval_on_full_spectrum() {
        let cfg = StftConfig {
            n_bins_kept: 257,
            ..StftConfig::default()
        };
        let an = Analyzer::new(cfg).unwrap();
        let c = random_clip(1200, 9);
        for f in an.frames(&c).unwrap() {
            let time: f64 = f.iter().map(|x| x * x).sum();
            let freq: f64 = an.full_spectrum(&f).iter().map(|v| v.norm_sqr()).sum::<f64>() / 512.0;
            assert!((time - freq).abs() < 1e-10 * time.max(1.0));
        }
    }

    #[test]
    fn stft_is_linear() {
        let cfg = StftConfig::default();
        let x = random_clip(1500, 1);
        let y = random_clip(1500, 2);
        let (a, b) = (0.3, -0.6);
        let mix = clip(
            x.samples()
                .iter()
                .zip(y.samples())
                .map(|(p, q)| a * p + b * q)
                .collect(),
        );
        let (sx, sy, sm) = (stft(&x, &cfg).unwrap(), stft(&y, &cfg).unwrap(), stft(&mix, &cfg).unwrap());
        for i in 0..sm.values().len() {
            let expect = sx.values()[i] * a + sy.values()[i] * b;
            assert!((sm.values()[i] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn stored_phases_half_open() {
        let s = stft(&random_clip(3000, 4), &StftConfig::default()).unwrap();
        assert!(s.phases().iter().all(|p| (-PI..PI).contains(p)));
        // atan2 gives +pi for a negative real axis cell; storage wraps it.
        let cfg = StftConfig { n_bins_kept: 1, ..StftConfig::default() };
        let neg = ComplexSpectrogram::from_values(vec![Complex64::new(-1.0, 0.0)], 1, cfg).unwrap();
        assert_eq!(neg.phase(0, 0), -PI);
    }

    #[test]
    fn from_values_checks_shape() {
        let cfg = StftConfig::default();
        assert!(ComplexSpectrogram::from_values(vec![Complex64::new(0.0, 0.0); 10], 1, cfg).is_err());
    }
}
