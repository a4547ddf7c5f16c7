//! The six spectral features: log magnitude (LMS), LPC-residual log
//! magnitude (RLMS), instantaneous frequency derivative (IF), baseband phase
//! difference (BPD), group delay (GD) and modified group delay (MGD), plus
//! delta/acceleration stacking.

mod file;
pub mod lpc;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::audio_io::AudioClip;
use crate::stft::{wrap, Analyzer, ComplexSpectrogram, StftConfig, StftError};

pub use file::{decode_features, encode_features, read_features, write_features, FEATURE_MAGIC, FEATURE_VERSION};
pub use lpc::{LpcConfig, LpcError};

/// Magnitudes are floored here before taking the log.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Error, Debug)]
pub enum FeatureError {
    #[error(transparent)]
    Stft(#[from] StftError),
    #[error(transparent)]
    Lpc(#[from] LpcError),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("feature matrix is already stacked with deltas")]
    AlreadyStacked,
    #[error("invalid feature matrix: {0}")]
    Invalid(String),
    #[error("invalid mgd config: {0}")]
    MgdConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("feature file format error: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Lms,
    Rlms,
    If,
    Bpd,
    Gd,
    Mgd,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::Lms,
        FeatureKind::Rlms,
        FeatureKind::If,
        FeatureKind::Bpd,
        FeatureKind::Gd,
        FeatureKind::Mgd,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Lms => "LMS",
            FeatureKind::Rlms => "RLMS",
            FeatureKind::If => "IF",
            FeatureKind::Bpd => "BPD",
            FeatureKind::Gd => "GD",
            FeatureKind::Mgd => "MGD",
        }
    }

    /// Kinds whose values are principal-valued angles.
    pub fn is_wrapped_phase(self) -> bool {
        matches!(self, FeatureKind::If | FeatureKind::Bpd | FeatureKind::Gd)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown feature kind {s:?} (expected one of LMS, RLMS, IF, BPD, GD, MGD)"))
    }
}

/// Frames x dims real matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    kind: FeatureKind,
    stacked: bool,
    n_frames: usize,
    dims: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(
        kind: FeatureKind,
        stacked: bool,
        n_frames: usize,
        dims: usize,
        values: Vec<f64>,
    ) -> Result<Self, FeatureError> {
        if values.len() != n_frames * dims {
            return Err(FeatureError::Invalid(format!(
                "{} values for {n_frames} x {dims}",
                values.len()
            )));
        }
        if stacked && !dims.is_multiple_of(3) {
            return Err(FeatureError::Invalid(format!(
                "stacked matrix with {dims} dims is not a multiple of 3"
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(FeatureError::Invalid(format!("non-finite value {v}")));
        }
        Ok(Self {
            kind,
            stacked,
            n_frames,
            dims,
            values,
        })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn is_stacked(&self) -> bool {
        self.stacked
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn base_dims(&self) -> usize {
        if self.stacked {
            self.dims / 3
        } else {
            self.dims
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.dims..(n + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dims.max(1)).take(self.n_frames)
    }

    pub fn get(&self, n: usize, d: usize) -> f64 {
        self.values[n * self.dims + d]
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.values.iter().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MgdConfig {
    pub gamma: f64,
    pub alpha: f64,
    /// Number of low-quefrency cepstral coefficients kept when smoothing
    /// `|X|`; `None` uses `|X|` directly.
    pub cepstral_lifter_order: Option<usize>,
}

impl Default for MgdConfig {
    fn default() -> Self {
        Self {
            gamma: 0.7,
            alpha: 0.2,
            cepstral_lifter_order: Some(30),
        }
    }
}

impl MgdConfig {
    pub fn validate(&self, fft_len: usize) -> Result<(), FeatureError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(FeatureError::MgdConfig(format!("gamma {} not in (0, 1]", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(FeatureError::MgdConfig(format!("alpha {} not in (0, 1]", self.alpha)));
        }
        match self.cepstral_lifter_order {
            Some(0) => Err(FeatureError::MgdConfig("lifter order must be positive".into())),
            Some(q) if q > fft_len / 2 => Err(FeatureError::MgdConfig(format!(
                "lifter order {q} exceeds fft_len/2"
            ))),
            _ => Ok(()),
        }
    }
}

fn log_floor(m: f64, floor: f64) -> f64 {
    m.max(floor).ln()
}

fn from_spec_map(
    spec: &ComplexSpectrogram,
    kind: FeatureKind,
    f: impl Fn(Complex64) -> f64,
) -> FeatureMatrix {
    FeatureMatrix {
        kind,
        stacked: false,
        n_frames: spec.n_frames(),
        dims: spec.n_bins(),
        values: spec.values().iter().map(|&v| f(v)).collect(),
    }
}

fn require_frames(spec: &ComplexSpectrogram, min: usize) -> Result<(), FeatureError> {
    if spec.n_frames() < min {
        return Err(FeatureError::Degenerate(format!(
            "need at least {min} frame(s), spectrogram has {}",
            spec.n_frames()
        )));
    }
    Ok(())
}

/// `ln(max(|X|, 1e-10))` per cell.
pub fn lms(spec: &ComplexSpectrogram) -> Result<FeatureMatrix, FeatureError> {
    require_frames(spec, 1)?;
    Ok(from_spec_map(spec, FeatureKind::Lms, |v| log_floor(v.norm(), LOG_FLOOR)))
}

/// Log magnitude of the per-frame LPC residual. LPC is estimated on the
/// DC-removed, windowed frame and the same frame is inverse filtered.
pub fn rlms(clip: &AudioClip, stft_cfg: &StftConfig, lpc_cfg: &LpcConfig) -> Result<FeatureMatrix, FeatureError> {
    lpc_cfg.validate(stft_cfg.frame_len_samples)?;
    let an = Analyzer::new(*stft_cfg)?;
    let frames = an.frames(clip)?;
    let residuals: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| lpc::residual(f, &lpc::lpc_coeffs(f, lpc_cfg)))
        .collect();
    let spec = an.spectrogram_of_frames(&residuals);
    Ok(from_spec_map(&spec, FeatureKind::Rlms, |v| {
        log_floor(v.norm(), lpc_cfg.floor_epsilon)
    }))
}

/// Frame-to-frame phase difference per bin; row 0 is zero.
pub fn if_feature(spec: &ComplexSpectrogram) -> Result<FeatureMatrix, FeatureError> {
    require_frames(spec, 2)?;
    let bins = spec.n_bins();
    let phase = spec.phases();
    let mut values = vec![0.0; phase.len()];
    for n in 1..spec.n_frames() {
        for k in 0..bins {
            values[n * bins + k] = wrap(phase[n * bins + k] - phase[(n - 1) * bins + k]);
        }
    }
    Ok(FeatureMatrix {
        kind: FeatureKind::If,
        stacked: false,
        n_frames: spec.n_frames(),
        dims: bins,
        values,
    })
}

/// IF with the per-hop phase advance `2 pi k hop / fft_len` of each bin
/// centre removed. Row 0 is zero, as for IF.
pub fn bpd(spec: &ComplexSpectrogram) -> Result<FeatureMatrix, FeatureError> {
    let mut m = if_feature(spec)?;
    let cfg = spec.config();
    let bins = m.dims;
    let advance: Vec<f64> = (0..bins)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / cfg.fft_len as f64 * cfg.hop_samples as f64)
        .collect();
    for n in 1..m.n_frames {
        for (v, a) in m.values[n * bins..(n + 1) * bins].iter_mut().zip(&advance) {
            *v = wrap(*v - a);
        }
    }
    m.kind = FeatureKind::Bpd;
    Ok(m)
}

/// Bin-to-bin phase difference per frame; column 0 is zero.
pub fn gd(spec: &ComplexSpectrogram) -> Result<FeatureMatrix, FeatureError> {
    require_frames(spec, 1)?;
    let bins = spec.n_bins();
    if bins < 2 {
        return Err(FeatureError::Degenerate("group delay needs at least 2 bins".into()));
    }
    let phase = spec.phases();
    let mut values = vec![0.0; phase.len()];
    for n in 0..spec.n_frames() {
        let row = &phase[n * bins..(n + 1) * bins];
        for k in 1..bins {
            values[n * bins + k] = wrap(row[k] - row[k - 1]);
        }
    }
    Ok(FeatureMatrix {
        kind: FeatureKind::Gd,
        stacked: false,
        n_frames: spec.n_frames(),
        dims: bins,
        values,
    })
}

/// Cepstrally smoothed magnitude: keep quefrencies `0..order` (and their
/// mirror images) of the real cepstrum of `ln |X|`, then exponentiate.
fn cepstral_smooth(full: &[Complex64], order: usize, inverse: &dyn rustfft::Fft<f64>) -> Vec<f64> {
    let n = full.len();
    let mut buf: Vec<Complex64> = full
        .iter()
        .map(|v| Complex64::new(log_floor(v.norm(), LOG_FLOOR), 0.0))
        .collect();
    inverse.process(&mut buf);
    for (q, c) in buf.iter_mut().enumerate() {
        let keep = q < order || q > n - order;
        *c = if keep { *c / n as f64 } else { Complex64::new(0.0, 0.0) };
    }
    inverse.process(&mut buf);
    // Lifter is symmetric, so the log spectrum comes back real.
    buf.iter().map(|c| c.re.exp()).collect()
}

/// Modified group delay `sign(tau) |tau|^alpha` with
/// `tau = (X_R Y_R + X_I Y_I) / S^(2 gamma)`, where `Y` is the spectrum of
/// the index-weighted frame and `S` the smoothed magnitude of `X`.
pub fn mgd(clip: &AudioClip, stft_cfg: &StftConfig, cfg: &MgdConfig) -> Result<FeatureMatrix, FeatureError> {
    cfg.validate(stft_cfg.fft_len)?;
    let an = Analyzer::new(*stft_cfg)?;
    let frames = an.frames(clip)?;
    let ramped = an.ramp_frames(clip)?;
    let bins = stft_cfg.n_bins_kept;
    let inverse = rustfft::FftPlanner::new().plan_fft_inverse(stft_cfg.fft_len);
    let mut values = Vec::with_capacity(frames.len() * bins);
    for (x, y) in frames.iter().zip(&ramped) {
        let xs = an.full_spectrum(x);
        let ys = an.spectrum(y);
        let smooth = match cfg.cepstral_lifter_order {
            Some(order) => cepstral_smooth(&xs, order, inverse.as_ref()),
            None => xs.iter().map(|v| v.norm()).collect(),
        };
        for k in 0..bins {
            let num = xs[k].re * ys[k].re + xs[k].im * ys[k].im;
            let tau = if num == 0.0 {
                0.0
            } else {
                num / smooth[k].max(LOG_FLOOR).powf(2.0 * cfg.gamma)
            };
            values.push(modified_power(tau, cfg.alpha));
        }
    }
    FeatureMatrix::new(FeatureKind::Mgd, false, frames.len(), bins, values)
}

/// `(tau / |tau|) |tau|^alpha`, with 0 at `tau = 0`.
pub fn modified_power(tau: f64, alpha: f64) -> f64 {
    if tau == 0.0 {
        0.0
    } else {
        tau.signum() * tau.abs().powf(alpha)
    }
}

/// Extracts one unstacked feature matrix of the given kind.
pub fn extract(
    clip: &AudioClip,
    kind: FeatureKind,
    stft_cfg: &StftConfig,
    lpc_cfg: &LpcConfig,
    mgd_cfg: &MgdConfig,
) -> Result<FeatureMatrix, FeatureError> {
    match kind {
        FeatureKind::Rlms => rlms(clip, stft_cfg, lpc_cfg),
        FeatureKind::Mgd => mgd(clip, stft_cfg, mgd_cfg),
        _ => {
            let spec = crate::stft::stft(clip, stft_cfg)?;
            match kind {
                FeatureKind::Lms => lms(&spec),
                FeatureKind::If => if_feature(&spec),
                FeatureKind::Bpd => bpd(&spec),
                FeatureKind::Gd => gd(&spec),
                _ => unreachable!(),
            }
        }
    }
}

const DELTA_WINDOW: usize = 2;

/// Regression deltas over +/-2 frames with edge replication.
fn regression_delta(values: &[f64], n_frames: usize, dims: usize) -> Vec<f64> {
    let norm: f64 = 2.0 * (1..=DELTA_WINDOW).map(|d| (d * d) as f64).sum::<f64>();
    let last = n_frames as isize - 1;
    let at = |t: isize, j: usize| values[(t.clamp(0, last) as usize) * dims + j];
    let mut out = vec![0.0; values.len()];
    for t in 0..n_frames as isize {
        for j in 0..dims {
            let mut acc = 0.0;
            for d in 1..=DELTA_WINDOW as isize {
                acc += d as f64 * (at(t + d, j) - at(t - d, j));
            }
            out[t as usize * dims + j] = acc / norm;
        }
    }
    out
}

/// Appends delta and acceleration blocks: `[static | delta | accel]`.
pub fn append_deltas(m: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
    if m.stacked {
        return Err(FeatureError::AlreadyStacked);
    }
    if m.n_frames == 0 {
        return Err(FeatureError::Degenerate("cannot stack an empty matrix".into()));
    }
    let (n, d) = (m.n_frames, m.dims);
    let delta = regression_delta(&m.values, n, d);
    let accel = regression_delta(&delta, n, d);
    let mut values = Vec::with_capacity(n * d * 3);
    for t in 0..n {
        values.extend_from_slice(&m.values[t * d..(t + 1) * d]);
        values.extend_from_slice(&delta[t * d..(t + 1) * d]);
        values.extend_from_slice(&accel[t * d..(t + 1) * d]);
    }
    Ok(FeatureMatrix {
        kind: m.kind,
        stacked: true,
        n_frames: n,
        dims: 3 * d,
        values,
    })
}
