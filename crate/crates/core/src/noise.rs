//! Additive-noise corruption at a target A-weighted SNR.
//!
//! The SNR is the ratio of mean per-frame A-weighted power of the clean
//! signal over its speech-active frames to that of the whole noise segment.
//! A-weighting is applied to frame power spectra, not as a time-domain
//! filter. After mixing, the signal is rescaled globally if its peak would
//! exceed the clip ceiling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio_io::{AudioClip, WavError};
use crate::stft::{hamming, raw_frames, StftConfig};

/// Peak magnitude allowed in a mixed output.
pub const CLIP_CEILING: f64 = 0.999;

#[derive(Error, Debug)]
pub enum NoiseError {
    #[error("A-weighting is defined for positive frequencies, got {0} Hz")]
    Domain(f64),
    #[error("clip of {len} samples is shorter than one {frame_len}-sample analysis frame")]
    TooShort { len: usize, frame_len: usize },
    #[error("activity mask has {mask} frames but the clip has {frames}")]
    MaskLength { mask: usize, frames: usize },
    #[error("zero energy in {0}; SNR is undefined")]
    ZeroEnergy(&'static str),
    #[error("noise has {available} samples, {needed} required (no wrap-around)")]
    InsufficientNoise { needed: usize, available: usize },
    #[error("sample rates differ: clean {clean} Hz, noise {noise} Hz")]
    SampleRateMismatch { clean: u32, noise: u32 },
    #[error("target SNR must be finite, got {0}")]
    InvalidSnr(f64),
    #[error("invalid activity config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Wav(#[from] WavError),
}

fn r_a(f: f64) -> f64 {
    let f2 = f * f;
    let num = 12194.0f64.powi(2) * f2 * f2;
    let den = (f2 + 20.6f64.powi(2))
        * ((f2 + 107.7f64.powi(2)) * (f2 + 737.9f64.powi(2))).sqrt()
        * (f2 + 12194.0f64.powi(2));
    num / den
}

/// Analytic A-weighting response as a linear power gain, 1.0 at 1 kHz.
pub fn a_weight_gain(freq_hz: f64) -> Result<f64, NoiseError> {
    if !(freq_hz > 0.0 && freq_hz.is_finite()) {
        return Err(NoiseError::Domain(freq_hz));
    }
    Ok((r_a(freq_hz) / r_a(1000.0)).powi(2))
}

/// Frame grid and threshold of the speech-activity detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivityConfig {
    pub frame_len_samples: usize,
    pub hop_samples: usize,
    /// A frame is active when its RMS is within this many dB of the loudest frame.
    pub threshold_db: f64,
}

impl Default for ActivityConfig {
    fn default() -> Self {
        Self {
            frame_len_samples: 400,
            hop_samples: 160,
            threshold_db: 40.0,
        }
    }
}

impl ActivityConfig {
    pub fn validate(&self) -> Result<(), NoiseError> {
        if self.frame_len_samples == 0 || self.hop_samples == 0 || self.hop_samples > self.frame_len_samples {
            return Err(NoiseError::InvalidConfig(format!(
                "need 0 < hop ({}) <= frame ({})",
                self.hop_samples, self.frame_len_samples
            )));
        }
        if !(self.threshold_db > 0.0 && self.threshold_db.is_finite()) {
            return Err(NoiseError::InvalidConfig(format!(
                "threshold {} dB must be positive",
                self.threshold_db
            )));
        }
        Ok(())
    }

    fn grid(&self) -> StftConfig {
        StftConfig {
            frame_len_samples: self.frame_len_samples,
            hop_samples: self.hop_samples,
            fft_len: self.frame_len_samples.next_power_of_two(),
            n_bins_kept: self.frame_len_samples.next_power_of_two() / 2 + 1,
        }
    }

    fn frame_count(&self, clip: &AudioClip) -> Result<usize, NoiseError> {
        let n = self.grid().frame_count(clip.len());
        if n == 0 {
            return Err(NoiseError::TooShort {
                len: clip.len(),
                frame_len: self.frame_len_samples,
            });
        }
        Ok(n)
    }
}

/// Per-frame speech activity on an [`ActivityConfig`] grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivityMask(pub Vec<bool>);

impl ActivityMask {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.0.iter().filter(|&&a| a).count()
    }
}

pub fn frame_rms(clip: &AudioClip, cfg: &ActivityConfig) -> Result<Vec<f64>, NoiseError> {
    cfg.validate()?;
    cfg.frame_count(clip)?;
    Ok(raw_frames(clip.samples(), &cfg.grid())
        .map(|f| (f.iter().map(|x| x * x).sum::<f64>() / f.len() as f64).sqrt())
        .collect())
}

pub fn speech_activity_mask(clip: &AudioClip, cfg: &ActivityConfig) -> Result<ActivityMask, NoiseError> {
    let rms = frame_rms(clip, cfg)?;
    let peak = rms.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(ActivityMask(vec![false; rms.len()]));
    }
    let floor = peak * 10f64.powf(-cfg.threshold_db / 20.0);
    Ok(ActivityMask(rms.iter().map(|&r| r > 0.0 && r >= floor).collect()))
}

/// Per-frame A-weighted power on the activity grid: Hamming-windowed frames,
/// one-sided power spectrum weighted by the A-curve at bin centres.
pub struct AWeightedMeter {
    cfg: ActivityConfig,
    window: Vec<f64>,
    weights: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl AWeightedMeter {
    pub fn new(cfg: ActivityConfig, sample_rate_hz: u32) -> Result<Self, NoiseError> {
        cfg.validate()?;
        let grid = cfg.grid();
        let n = grid.fft_len;
        let weights = (0..=n / 2)
            .map(|k| {
                if k == 0 {
                    return Ok(0.0);
                }
                let g = a_weight_gain(k as f64 * sample_rate_hz as f64 / n as f64)?;
                // Interior bins stand for their negative-frequency mirror too.
                Ok(if k == n / 2 { g } else { 2.0 * g })
            })
            .collect::<Result<_, NoiseError>>()?;
        Ok(Self {
            cfg,
            window: hamming(cfg.frame_len_samples),
            weights,
            fft: FftPlanner::new().plan_fft_forward(n),
        })
    }

    pub fn frame_energies(&self, clip: &AudioClip) -> Result<Vec<f64>, NoiseError> {
        self.frame_energies_of(clip.samples())
    }

    pub fn frame_energies_of(&self, samples: &[f64]) -> Result<Vec<f64>, NoiseError> {
        let grid = self.cfg.grid();
        if grid.frame_count(samples.len()) == 0 {
            return Err(NoiseError::TooShort {
                len: samples.len(),
                frame_len: self.cfg.frame_len_samples,
            });
        }
        let n = self.weights.len() * 2 - 2;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        Ok(raw_frames(samples, &grid)
            .map(|f| {
                buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
                for ((b, x), w) in buf.iter_mut().zip(f).zip(&self.window) {
                    b.re = x * w;
                }
                self.fft.process(&mut buf);
                buf.iter().zip(&self.weights).map(|(v, g)| g * v.norm_sqr()).sum::<f64>() / n as f64
            })
            .collect())
    }

    /// Summed A-weighted energy over the masked (or all) frames, and the
    /// number of frames summed.
    pub fn energy(&self, clip: &AudioClip, mask: Option<&ActivityMask>) -> Result<(f64, usize), NoiseError> {
        let e = self.frame_energies(clip)?;
        match mask {
            None => Ok((e.iter().sum(), e.len())),
            Some(m) => {
                if m.len() != e.len() {
                    return Err(NoiseError::MaskLength {
                        mask: m.len(),
                        frames: e.len(),
                    });
                }
                let count = m.active_count();
                if count == 0 {
                    return Err(NoiseError::ZeroEnergy("activity mask (no active frames)"));
                }
                let sum = e.iter().zip(&m.0).filter(|(_, &a)| a).map(|(v, _)| v).sum();
                Ok((sum, count))
            }
        }
    }

    /// Mean per-frame A-weighted power over the masked (or all) frames.
    pub fn power(&self, clip: &AudioClip, mask: Option<&ActivityMask>) -> Result<f64, NoiseError> {
        let (sum, count) = self.energy(clip, mask)?;
        Ok(sum / count as f64)
    }
}

/// Summed A-weighted energy over active frames (all frames without a mask).
pub fn a_weighted_energy(clip: &AudioClip, mask: Option<&ActivityMask>) -> Result<f64, NoiseError> {
    let meter = AWeightedMeter::new(ActivityConfig::default(), clip.sample_rate_hz())?;
    Ok(meter.energy(clip, mask)?.0)
}

/// Uniform offset in `[0, noise_len - length]` drawn from a generator seeded by `seed`.
pub fn select_noise_segment(noise: &AudioClip, length: usize, seed: u64) -> Result<(usize, Vec<f64>), NoiseError> {
    if noise.len() < length {
        return Err(NoiseError::InsufficientNoise {
            needed: length,
            available: noise.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.random_range(0..=noise.len() - length);
    Ok((offset, noise.samples()[offset..offset + length].to_vec()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixSpec {
    pub noise_label: String,
    pub target_snr_db: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixResult {
    pub noisy: AudioClip,
    pub noise_offset_samples: usize,
    pub noise_gain: f64,
    pub post_scale: f64,
    pub measured_snr_db: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixConfig {
    pub activity: ActivityConfig,
    pub clip_ceiling: f64,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            activity: ActivityConfig::default(),
            clip_ceiling: CLIP_CEILING,
        }
    }
}

/// Speech-active A-weighted power of `clean` over A-weighted power of `noise`, in dB.
pub fn measure_snr_db(clean: &AudioClip, noise: &AudioClip, cfg: &ActivityConfig) -> Result<f64, NoiseError> {
    let meter = AWeightedMeter::new(*cfg, clean.sample_rate_hz())?;
    let mask = speech_activity_mask(clean, cfg)?;
    let ps = meter.power(clean, Some(&mask))?;
    let pn = meter.power(noise, None)?;
    if ps == 0.0 {
        return Err(NoiseError::ZeroEnergy("clean speech"));
    }
    if pn == 0.0 {
        return Err(NoiseError::ZeroEnergy("noise segment"));
    }
    Ok(10.0 * (ps / pn).log10())
}

pub fn mix(clean: &AudioClip, noise: &AudioClip, spec: &MixSpec) -> Result<MixResult, NoiseError> {
    mix_with(clean, noise, spec, &MixConfig::default())
}

pub fn mix_with(clean: &AudioClip, noise: &AudioClip, spec: &MixSpec, cfg: &MixConfig) -> Result<MixResult, NoiseError> {
    if !spec.target_snr_db.is_finite() {
        return Err(NoiseError::InvalidSnr(spec.target_snr_db));
    }
    if clean.sample_rate_hz() != noise.sample_rate_hz() {
        return Err(NoiseError::SampleRateMismatch {
            clean: clean.sample_rate_hz(),
            noise: noise.sample_rate_hz(),
        });
    }
    let (offset, segment) = select_noise_segment(noise, clean.len(), spec.seed)?;
    let segment = AudioClip::new(segment, noise.sample_rate_hz())?;

    let meter = AWeightedMeter::new(cfg.activity, clean.sample_rate_hz())?;
    let mask = speech_activity_mask(clean, &cfg.activity)?;
    let speech_power = match meter.power(clean, Some(&mask)) {
        Ok(p) if p > 0.0 => p,
        Ok(_) | Err(NoiseError::ZeroEnergy(_)) => return Err(NoiseError::ZeroEnergy("clean speech")),
        Err(e) => return Err(e),
    };
    let noise_power = meter.power(&segment, None)?;
    if noise_power == 0.0 {
        return Err(NoiseError::ZeroEnergy("noise segment"));
    }

    let gain = (speech_power / (noise_power * 10f64.powf(spec.target_snr_db / 10.0))).sqrt();
    let scaled_noise: Vec<f64> = segment.samples().iter().map(|s| gain * s).collect();
    let raw: Vec<f64> = clean
        .samples()
        .iter()
        .zip(&scaled_noise)
        .map(|(c, n)| c + n)
        .collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let post_scale = if peak > cfg.clip_ceiling {
        cfg.clip_ceiling / peak
    } else {
        1.0
    };
    let noisy = AudioClip::new(
        raw.iter().map(|v| (post_scale * v).clamp(-cfg.clip_ceiling, cfg.clip_ceiling)).collect(),
        clean.sample_rate_hz(),
    )?;

    // Measured from the pre-scale components actually summed.
    // The scaled noise can exceed full scale before the rescale, so it is
    // measured as raw samples rather than as a clip.
    let noise_part = meter.frame_energies_of(&scaled_noise)?;
    let noise_part_power = noise_part.iter().sum::<f64>() / noise_part.len() as f64;
    let measured_snr_db = 10.0 * (speech_power / noise_part_power).log10();

    Ok(MixResult {
        noisy,
        noise_offset_samples: offset,
        noise_gain: gain,
        post_scale,
        measured_snr_db,
    })
}

/// Zero-mean Gaussian noise normalized to a peak of [`CLIP_CEILING`].
pub fn gen_white_noise(length: usize, seed: u64, sample_rate_hz: u32) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..length).map(|_| StandardNormal.sample(&mut rng)).collect();
    let peak = raw.iter().fold(0.0f64, |m, v: &f64| m.max(v.abs()));
    let scale = if peak > 0.0 { CLIP_CEILING / peak } else { 0.0 };
    AudioClip::new(raw.iter().map(|v| v * scale).collect(), sample_rate_hz).expect("peak-normalized noise is in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, len: usize, amp: f64) -> AudioClip {
        AudioClip::new(
            (0..len).map(|i| amp * (2.0 * PI * freq * i as f64 / 16000.0).cos()).collect(),
            16000,
        )
        .unwrap()
    }

    fn db(x: f64) -> f64 {
        10.0 * x.log10()
    }

    #[test]
    fn a_weighting_anchor_values() {
        assert!((a_weight_gain(1000.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((db(a_weight_gain(100.0).unwrap()) + 19.1).abs() < 0.05);
        assert!((db(a_weight_gain(10000.0).unwrap()) + 2.5).abs() < 0.05);
        // Most sensitive region sits above 1 kHz.
        assert!(a_weight_gain(3000.0).unwrap() > 1.0);
        assert!(matches!(a_weight_gain(0.0), Err(NoiseError::Domain(_))));
        assert!(a_weight_gain(-5.0).is_err());
    }

    #[test]
    fn tone_is_fully_active() {
        let m = speech_activity_mask(&tone(440.0, 8000, 0.3), &ActivityConfig::default()).unwrap();
        assert_eq!(m.active_count(), m.len());
    }

    #[test]
    fn trailing_zeros_are_inactive() {
        let mut s = tone(440.0, 8000, 0.3).into_samples();
        s.extend(std::iter::repeat(0.0).take(8000));
        let clip = AudioClip::new(s, 16000).unwrap();
        let cfg = ActivityConfig::default();
        let m = speech_activity_mask(&clip, &cfg).unwrap();
        for (i, &a) in m.0.iter().enumerate() {
            let (start, end) = (i * 160, i * 160 + 400);
            if end <= 8000 {
                assert!(a, "frame {i} inside tone");
            } else if start >= 8000 {
                assert!(!a, "frame {i} inside silence");
            }
        }
    }

    #[test]
    fn silent_clip_has_no_active_frames() {
        let clip = AudioClip::silence(4000, 16000);
        let m = speech_activity_mask(&clip, &ActivityConfig::default()).unwrap();
        assert_eq!(m.active_count(), 0);
        assert!(matches!(
            a_weighted_energy(&clip, Some(&m)),
            Err(NoiseError::ZeroEnergy(_))
        ));
        assert_eq!(a_weighted_energy(&clip, None).unwrap(), 0.0);
    }

    #[test]
    fn energy_is_quadratic_in_scale() {
        let c = gen_white_noise(8000, 3, 16000).scaled(0.5).unwrap();
        let e1 = a_weighted_energy(&c, None).unwrap();
        let e2 = a_weighted_energy(&c.scaled(0.25).unwrap(), None).unwrap();
        assert!((e2 / e1 - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn energy_ratio_follows_weighting_curve() {
        let hi = a_weighted_energy(&tone(1000.0, 16000, 0.5), None).unwrap();
        let lo = a_weighted_energy(&tone(100.0, 16000, 0.5), None).unwrap();
        let ratio_db = db(hi / lo);
        // The windowed 100 Hz tone leaks into 62.5..156 Hz bins whose gains differ.
        assert!((ratio_db - 19.1).abs() < 0.75, "{ratio_db}");
    }

    #[test]
    fn mask_length_checked() {
        let c = tone(500.0, 4000, 0.2);
        assert!(matches!(
            a_weighted_energy(&c, Some(&ActivityMask(vec![true; 3]))),
            Err(NoiseError::MaskLength { .. })
        ));
    }

    #[test]
    fn too_short_for_a_frame() {
        let c = tone(500.0, 100, 0.2);
        assert!(matches!(
            speech_activity_mask(&c, &ActivityConfig::default()),
            Err(NoiseError::TooShort { .. })
        ));
    }

    #[test]
    fn segment_selection() {
        let noise = gen_white_noise(5000, 1, 16000);
        assert_eq!(select_noise_segment(&noise, 5000, 99).unwrap().0, 0);
        let a = select_noise_segment(&noise, 1000, 42).unwrap();
        let b = select_noise_segment(&noise, 1000, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a.1[..], &noise.samples()[a.0..a.0 + 1000]);
        assert!(matches!(
            select_noise_segment(&noise, 5001, 0),
            Err(NoiseError::InsufficientNoise { needed: 5001, available: 5000 })
        ));
    }

    #[test]
    fn segment_offsets_are_uniform() {
        let noise = AudioClip::silence(1_600_000, 16000);
        let len = 16000;
        let span = (noise.len() - len + 1) as f64;
        let mut buckets = [0usize; 16];
        let draws = 10_000;
        for seed in 0..draws {
            let (off, _) = select_noise_segment(&noise, len, seed).unwrap();
            buckets[((off as f64 / span) * 16.0) as usize] += 1;
        }
        let expect = draws as f64 / 16.0;
        let chi2: f64 = buckets.iter().map(|&b| (b as f64 - expect).powi(2) / expect).sum();
        // 15 degrees of freedom, p = 0.001.
        assert!(chi2 < 37.70, "chi2 = {chi2}");
    }

    fn spec(snr: f64, seed: u64) -> MixSpec {
        MixSpec {
            noise_label: "white".into(),
            target_snr_db: snr,
            seed,
        }
    }

    #[test]
    fn equal_energies_at_zero_db_give_unit_gain() {
        let clean = gen_white_noise(8000, 5, 16000).scaled(0.3).unwrap();
        let r = mix(&clean, &clean, &spec(0.0, 1)).unwrap();
        assert!((r.noise_gain - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measured_snr_hits_target() {
        let clean = tone(700.0, 16000, 0.4);
        let noise = gen_white_noise(40000, 2, 16000);
        for snr in [20.0, 10.0, 0.0, -5.0] {
            let r = mix(&clean, &noise, &spec(snr, 7)).unwrap();
            assert!((r.measured_snr_db - snr).abs() <= 0.1);
            assert!(r.noisy.peak() <= CLIP_CEILING);
        }
    }

    #[test]
    fn rescale_to_avoid_clipping() {
        let clean = tone(1000.0, 4000, 0.9);
        let noise = tone(1000.0, 4000, 0.5);
        let r = mix(&clean, &noise, &spec(0.0, 0)).unwrap();
        assert!((r.noise_gain - 1.8).abs() < 1e-9);
        assert!((r.post_scale - 0.999 / 1.8).abs() < 1e-9);
        assert!((r.post_scale - 0.555).abs() < 1e-3);
        assert!(r.noisy.peak() <= CLIP_CEILING);
        for (i, &y) in r.noisy.samples().iter().enumerate() {
            let expect = r.post_scale * (clean.samples()[i] + r.noise_gain * noise.samples()[i]);
            assert!((y - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn no_rescale_when_mix_fits() {
        let clean = tone(500.0, 8000, 0.2);
        let noise = gen_white_noise(9000, 4, 16000);
        let r = mix(&clean, &noise, &spec(20.0, 3)).unwrap();
        assert_eq!(r.post_scale, 1.0);
    }

    #[test]
    fn lower_snr_means_larger_gain() {
        let clean = tone(300.0, 8000, 0.3);
        let noise = gen_white_noise(20000, 9, 16000);
        let gains: Vec<f64> = [20.0, 10.0, 0.0]
            .iter()
            .map(|&s| mix(&clean, &noise, &spec(s, 11)).unwrap().noise_gain)
            .collect();
        assert!(gains[0] < gains[1] && gains[1] < gains[2]);
    }

    #[test]
    fn mix_is_deterministic() {
        let clean = tone(300.0, 8000, 0.3);
        let noise = gen_white_noise(20000, 9, 16000);
        assert_eq!(mix(&clean, &noise, &spec(10.0, 5)).unwrap(), mix(&clean, &noise, &spec(10.0, 5)).unwrap());
    }

    #[test]
    fn mix_error_paths() {
        let clean = tone(300.0, 8000, 0.3);
        let short = gen_white_noise(4000, 1, 16000);
        assert!(matches!(mix(&clean, &short, &spec(10.0, 0)), Err(NoiseError::InsufficientNoise { .. })));
        let other_rate = AudioClip::new(vec![0.1; 9000], 8000).unwrap();
        assert!(matches!(mix(&clean, &other_rate, &spec(10.0, 0)), Err(NoiseError::SampleRateMismatch { .. })));
        let silent = AudioClip::silence(8000, 16000);
        let noise = gen_white_noise(9000, 1, 16000);
        assert!(matches!(mix(&silent, &noise, &spec(10.0, 0)), Err(NoiseError::ZeroEnergy(_))));
        assert!(matches!(mix(&clean, &AudioClip::silence(9000, 16000), &spec(10.0, 0)), Err(NoiseError::ZeroEnergy(_))));
        assert!(matches!(mix(&clean, &noise, &spec(f64::NAN, 0)), Err(NoiseError::InvalidSnr(_))));
    }

    #[test]
    fn white_noise_statistics() {
        let a = gen_white_noise(1 << 20, 17, 16000);
        assert_eq!(a, gen_white_noise(1 << 20, 17, 16000));
        assert!(a.peak() <= CLIP_CEILING);
        let n = a.len() as f64;
        let mean = a.samples().iter().sum::<f64>() / n;
        let sd = (a.samples().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 3.0 * sd / n.sqrt());

        let mut buf: Vec<Complex64> = a.samples().iter().map(|&x| Complex64::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        let half = buf.len() / 2;
        let band = half / 32;
        let bands: Vec<f64> = (0..32)
            .map(|b| buf[1 + b * band..1 + (b + 1) * band].iter().map(|v| v.norm_sqr()).sum::<f64>() / band as f64)
            .collect();
        let (lo, hi) = bands.iter().fold((f64::MAX, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi / lo < 2.0);
    }
}
