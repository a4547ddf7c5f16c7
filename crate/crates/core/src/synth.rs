//! Deterministic stand-in corpus of "human" and "spoof" utterances.
//!
//! A human utterance is a harmonic source with declination, vibrato and
//! jitter, passed through a time-varying formant cascade, with pauses at
//! known positions and a little aspiration noise. A spoof shares every
//! random choice with its human twin and adds one artifact:
//!
//! * phase randomization: each harmonic drifts in phase independently,
//! * constant pitch: resynthesis at a fixed 125 Hz monotone,
//! * envelope quantization: the formant envelope is applied as a
//!   zero-phase, coarsely quantized gain on each harmonic.
//!
//! Spoofs also carry less aspiration noise. Artifact strength varies per
//! utterance so the classes overlap slightly.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::audio_io::{AudioClip, WavError};
use crate::eval::Truth;
use crate::noise::gen_white_noise;

#[derive(Error, Debug)]
pub enum SynthError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("wav error: {0}")]
    Wav(#[from] WavError),
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusSpec {
    /// Human utterances per split; each gets one spoof twin per variant.
    pub n_per_class: usize,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub seed: u64,
    pub attack_variants: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_per_class: 10,
            duration_s: 1.0,
            sample_rate_hz: 16000,
            seed: 0,
            attack_variants: 3,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_per_class == 0 || self.attack_variants == 0 {
            return Err(SynthError::InvalidSpec(
                "n_per_class and attack_variants must be at least 1".into(),
            ));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) || self.sample_rate_hz < 8000 {
            return Err(SynthError::InvalidSpec(format!(
                "duration {} s at {} Hz is not usable",
                self.duration_s, self.sample_rate_hz
            )));
        }
        if self.n_samples() < 400 {
            return Err(SynthError::InvalidSpec("duration shorter than one analysis frame".into()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz as f64).round() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Artifact {
    PhaseRandomization,
    ConstantPitch,
    EnvelopeQuantization,
}

impl Artifact {
    /// Variant `v >= 1` cycles through the artifacts in declaration order.
    pub fn for_variant(v: usize) -> Artifact {
        match (v.max(1) - 1) % 3 {
            0 => Artifact::PhaseRandomization,
            1 => Artifact::ConstantPitch,
            _ => Artifact::EnvelopeQuantization,
        }
    }
}

pub fn attack_label(variant: usize) -> String {
    format!("S{variant}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub clip: AudioClip,
    pub truth: Truth,
    pub attack_label: String,
    /// Sample ranges holding only the noise floor.
    pub silences: Vec<Range<usize>>,
    pub f0_mean_hz: f64,
}

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(base ^ mix64(a)) ^ b)
}

const VOWELS: [[f64; 4]; 5] = [
    [730.0, 1090.0, 2440.0, 3400.0],
    [270.0, 2290.0, 3010.0, 3700.0],
    [300.0, 870.0, 2240.0, 3300.0],
    [530.0, 1840.0, 2480.0, 3500.0],
    [570.0, 840.0, 2410.0, 3300.0],
];
const BANDWIDTHS: [f64; 5] = [70.0, 100.0, 130.0, 170.0, 250.0];
const F5_HZ: f64 = 4500.0;
const BLOCK: usize = 80;
const RAMP_S: f64 = 0.025;
const BREATH_DB: f64 = -22.0;
const MONOTONE_F0_HZ: f64 = 125.0;
const FLOOR_DB: f64 = -62.0;

/// Every random choice shared between twins.
struct Plan {
    n: usize,
    fs: f64,
    f0_base: f64,
    declination: f64,
    vib_rate: f64,
    vib_depth: f64,
    vib_phase: f64,
    jitter: Vec<f64>,
    tract_scale: f64,
    /// (center sample, vowel) control points for formant interpolation.
    targets: Vec<(f64, usize)>,
    envelope: Vec<f64>,
    silences: Vec<Range<usize>>,
    breath: Vec<f64>,
    floor: Vec<f64>,
    peak: f64,
}

fn raised_cosine_segment(env: &mut [f64], seg: Range<usize>, ramp: usize, level: impl Fn(usize) -> f64) {
    let len = seg.end - seg.start;
    let ramp = ramp.min(len / 2).max(1);
    for i in seg.clone() {
        let k = i - seg.start;
        let edge = k.min(len - 1 - k);
        let w = if edge < ramp {
            0.5 - 0.5 * (PI * (edge as f64 + 0.5) / ramp as f64).cos()
        } else {
            1.0
        };
        env[i] = w * level(i);
    }
}

fn make_plan(n: usize, fs: f64, rng: &mut ChaCha8Rng, with_pauses: bool) -> Plan {
    let frac = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (rng.random_range(lo..hi) * n as f64) as usize;
    let mut silences = Vec::new();
    let voiced: Vec<Range<usize>> = if with_pauses {
        let lead = frac(rng, 0.05, 0.10);
        let trail = frac(rng, 0.05, 0.10);
        let pause = frac(rng, 0.12, 0.20);
        let centre = frac(rng, 0.42, 0.58);
        let (p0, p1) = (centre - pause / 2, centre + pause / 2);
        silences.push(0..lead);
        silences.push(p0..p1);
        silences.push(n - trail..n);
        vec![lead..p0, p1..n - trail]
    } else {
        vec![0..n]
    };
    let mut envelope = vec![0.0; n];
    let mut targets = Vec::new();
    let syllable = 0.16 * fs;
    for seg in &voiced {
        let len = seg.end - seg.start;
        let k = ((len as f64 / syllable).round() as usize).max(1);
        let mut bounds: Vec<usize> = (0..=k).map(|i| seg.start + i * len / k).collect();
        for b in bounds.iter_mut().take(k).skip(1) {
            *b = (*b as i64 + rng.random_range(-(len as i64) / (6 * k as i64)..=(len as i64) / (6 * k as i64))) as usize;
        }
        let bumps: Vec<(f64, f64)> = (0..k).map(|_| (rng.random_range(0.6..1.0), rng.random_range(0.35..0.65))).collect();
        for (j, w) in bounds.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let (height, peak_at) = bumps[j];
            targets.push(((a + b) as f64 / 2.0, rng.random_range(0..VOWELS.len())));
            // Syllable dips stay well above the 40 dB activity threshold.
            for (i, e) in envelope.iter_mut().enumerate().take(b).skip(a) {
                let u = (i - a) as f64 / (b - a).max(1) as f64;
                let shape = if u < peak_at { u / peak_at } else { (1.0 - u) / (1.0 - peak_at) };
                *e = height * (0.45 + 0.55 * (0.5 - 0.5 * (PI * shape).cos()));
            }
        }
        let ramp = (RAMP_S * fs) as usize;
        let levels: Vec<f64> = envelope[seg.clone()].to_vec();
        raised_cosine_segment(&mut envelope, seg.clone(), ramp, |i| levels[i - seg.start]);
    }
    let jitter_std = rng.random_range(0.01..0.02);
    let jn = Normal::new(0.0, jitter_std).unwrap();
    let jitter_blocks: Vec<f64> = (0..n / BLOCK + 2).map(|_| jn.sample(rng)).collect();
    let jitter = (0..n)
        .map(|i| {
            let p = i as f64 / BLOCK as f64;
            let (k, t) = (p as usize, p.fract());
            jitter_blocks[k] * (1.0 - t) + jitter_blocks[k + 1] * t
        })
        .collect();
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let breath = (0..n).map(|_| std_normal.sample(rng)).collect();
    let floor = (0..n).map(|_| std_normal.sample(rng)).collect();
    Plan {
        n,
        fs,
        f0_base: rng.random_range(100.0..220.0),
        declination: rng.random_range(-0.15..0.0),
        vib_rate: rng.random_range(4.0..6.5),
        vib_depth: rng.random_range(0.02..0.045),
        vib_phase: rng.random_range(0.0..2.0 * PI),
        jitter,
        tract_scale: rng.random_range(0.9..1.15),
        targets,
        envelope,
        silences,
        breath,
        floor,
        peak: rng.random_range(0.3..0.7),
    }
}

impl Plan {
    /// Formant frequencies at sample `i`, interpolated between syllable centres.
    fn formants(&self, i: usize) -> [f64; 5] {
        let t = i as f64;
        let pick = |v: usize| VOWELS[v];
        let f = if self.targets.is_empty() {
            VOWELS[0]
        } else if t <= self.targets[0].0 {
            pick(self.targets[0].1)
        } else if t >= self.targets.last().unwrap().0 {
            pick(self.targets.last().unwrap().1)
        } else {
            let j = self.targets.partition_point(|c| c.0 <= t) - 1;
            let ((c0, v0), (c1, v1)) = (self.targets[j], self.targets[j + 1]);
            let u = (t - c0) / (c1 - c0);
            let (a, b) = (pick(v0), pick(v1));
            [0, 1, 2, 3].map(|k| a[k] + u * (b[k] - a[k]))
        };
        let s = self.tract_scale;
        [f[0] * s, f[1] * s, f[2] * s, f[3] * s, F5_HZ * s.min(1.05)]
    }

    fn f0_track(&self, constant: f64) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let t = i as f64 / self.fs;
                let u = i as f64 / self.n as f64 - 0.5;
                let contour = (1.0 + self.declination * u)
                    * (1.0 + self.vib_depth * (2.0 * PI * self.vib_rate * t + self.vib_phase).sin())
                    * (1.0 + self.jitter[i]);
                let f = self.f0_base * contour;
                f + constant * (self.f0_base - f)
            })
            .collect()
    }
}

/// Coefficients `(g, a1, a2)` of a DC-normalized two-pole resonator.
fn resonator(freq: f64, bw: f64, fs: f64) -> (f64, f64, f64) {
    let r = (-PI * bw / fs).exp();
    let a1 = 2.0 * r * (2.0 * PI * freq / fs).cos();
    let a2 = -r * r;
    (1.0 - a1 - a2, a1, a2)
}

fn tract_gain(formants: &[f64; 5], f: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * f / fs;
    formants
        .iter()
        .zip(BANDWIDTHS)
        .map(|(&fr, bw)| {
            let (g, a1, a2) = resonator(fr, bw, fs);
            let re = 1.0 - a1 * w.cos() - a2 * (2.0 * w).cos();
            let im = a1 * w.sin() + a2 * (2.0 * w).sin();
            g / (re * re + im * im).sqrt()
        })
        .product()
}

/// Time-varying cascade; coefficients refresh every block.
fn tract_filter(plan: &Plan, x: &[f64]) -> Vec<f64> {
    let mut state = [[0.0f64; 2]; 5];
    let mut coef = [(0.0, 0.0, 0.0); 5];
    let mut out = vec![0.0; x.len()];
    for (i, (&xi, o)) in x.iter().zip(out.iter_mut()).enumerate() {
        if i % BLOCK == 0 {
            let f = plan.formants(i + BLOCK / 2);
            for k in 0..5 {
                coef[k] = resonator(f[k], BANDWIDTHS[k], plan.fs);
            }
        }
        let mut v = xi;
        for k in 0..5 {
            let (g, a1, a2) = coef[k];
            let y = g * v + a1 * state[k][0] + a2 * state[k][1];
            state[k][1] = state[k][0];
            state[k][0] = y;
            v = y;
        }
        *o = v;
    }
    out
}

fn source_tilt(f: f64) -> f64 {
    1.0 / (1.0 + (f / 250.0).powi(2)).sqrt()
}

/// Envelope held constant over 24 bands and rounded to `step_db`.
fn quantized_envelope(formants: &[f64; 5], f: f64, fs: f64, step_db: f64) -> f64 {
    let band = fs / 2.0 / 16.0;
    let centre = ((f / band).floor() + 0.5) * band;
    let db = 20.0 * tract_gain(formants, centre, fs).log10();
    10f64.powf((db / step_db).round() * step_db / 20.0)
}

struct Voice<'a> {
    plan: &'a Plan,
    f0: Vec<f64>,
    /// Per-harmonic phase drift: per-block std in radians.
    drift_std: f64,
    /// Zero-phase envelope quantization step in dB, if any.
    quant_step_db: Option<f64>,
    /// Aspiration level relative to the harmonic source.
    breath_db: f64,
}

impl Voice<'_> {
    fn render(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let plan = self.plan;
        let (n, fs) = (plan.n, plan.fs);
        let nyq_limit = 0.45 * fs;
        let max_h = (nyq_limit / self.f0.iter().cloned().fold(f64::INFINITY, f64::min)).floor() as usize;
        let n_blocks = n / BLOCK + 2;
        let mut phase = vec![0.0; n];
        let mut acc = 0.0;
        for (p, f) in phase.iter_mut().zip(&self.f0) {
            *p = acc;
            acc = (acc + 2.0 * PI * f / fs) % (2.0 * PI * 1e6);
        }
        let drift = Normal::new(0.0, self.drift_std.max(1e-300)).unwrap();
        let mut harm = vec![0.0; n];
        let mut amp = vec![0.0; n_blocks];
        let mut theta = vec![0.0; n_blocks];
        for h in 1..=max_h {
            let hf = h as f64;
            for (b, a) in amp.iter_mut().enumerate() {
                let i = (b * BLOCK).min(n - 1);
                let f = hf * self.f0[i];
                let cutoff = ((nyq_limit - f) / 400.0).clamp(0.0, 1.0);
                let env = match self.quant_step_db {
                    Some(step) => quantized_envelope(&plan.formants(i), f, fs, step),
                    None => 1.0,
                };
                *a = source_tilt(f) * cutoff * env;
            }
            if self.drift_std > 0.0 {
                let mut walk = rng.random_range(0.0..2.0 * PI);
                for t in theta.iter_mut() {
                    *t = walk;
                    walk += drift.sample(rng);
                }
            }
            for (i, (hv, &ph)) in harm.iter_mut().zip(&phase).enumerate() {
                let p = i as f64 / BLOCK as f64;
                let (b, u) = (p as usize, p.fract());
                let a = amp[b] + u * (amp[b + 1] - amp[b]);
                if a == 0.0 {
                    continue;
                }
                let th = theta[b] + u * (theta[b + 1] - theta[b]);
                *hv += a * (hf * ph + th).cos();
            }
        }
        let breath_gain = 10f64.powf(self.breath_db / 20.0);
        let ex_breath: Vec<f64> = plan.breath.iter().zip(&plan.envelope).map(|(b, e)| b * e * breath_gain).collect();
        let ex_harm: Vec<f64> = harm.iter().zip(&plan.envelope).map(|(h, e)| h * e).collect();
        if self.quant_step_db.is_some() {
            let breath = tract_filter(plan, &ex_breath);
            ex_harm.iter().zip(&breath).map(|(h, b)| h + b).collect()
        } else {
            let ex: Vec<f64> = ex_harm.iter().zip(&ex_breath).map(|(h, b)| h + b).collect();
            tract_filter(plan, &ex)
        }
    }
}

fn finish(plan: &Plan, mut y: Vec<f64>, fs: u32) -> AudioClip {
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let g = if peak > 0.0 { plan.peak / peak } else { 0.0 };
    let floor = plan.peak * 10f64.powf(FLOOR_DB / 20.0);
    for (v, f) in y.iter_mut().zip(&plan.floor) {
        *v = (*v * g + f * floor).clamp(-1.0, 1.0);
    }
    AudioClip::new(y, fs).expect("bounded synthetic samples")
}

/// One utterance. Humans ignore `variant`; spoofs need `variant >= 1`.
pub fn gen_utterance(spec: &CorpusSpec, truth: Truth, variant: usize, seed: u64) -> Utterance {
    let fs = spec.sample_rate_hz as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = make_plan(spec.n_samples(), fs, &mut rng, true);
    let mut art_rng = ChaCha8Rng::seed_from_u64(seed);
    art_rng.set_stream(1 + variant as u64);
    let strength: f64 = art_rng.random_range(0.15..1.0);
    let (f0, drift, quant) = match (truth, Artifact::for_variant(variant)) {
        (Truth::Human, _) => (plan.f0_track(0.0), 0.0, None),
        (Truth::Spoof, Artifact::PhaseRandomization) => (plan.f0_track(0.0), 1.5 + 2.0 * strength, None),
        (Truth::Spoof, Artifact::ConstantPitch) => (vec![MONOTONE_F0_HZ; plan.n], 0.0, None),
        (Truth::Spoof, Artifact::EnvelopeQuantization) => (plan.f0_track(0.0), 0.0, Some(6.0 + 10.0 * strength)),
    };
    // Every spoof also carries less aspiration noise than its twin.
    let breath_db = match truth {
        Truth::Human => BREATH_DB,
        Truth::Spoof => BREATH_DB - 6.0 - 14.0 * strength,
    };
    let f0_mean_hz = f0.iter().sum::<f64>() / f0.len() as f64;
    let voice = Voice {
        plan: &plan,
        f0,
        drift_std: drift,
        quant_step_db: quant,
        breath_db,
    };
    let y = voice.render(&mut art_rng);
    Utterance {
        clip: finish(&plan, y, spec.sample_rate_hz),
        truth,
        attack_label: match truth {
            Truth::Human => crate::eval::HUMAN_LABEL.to_string(),
            Truth::Spoof => attack_label(variant),
        },
        silences: plan.silences.clone(),
        f0_mean_hz,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Babble,
    Volvo,
    Street,
    Cafe,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 5] = [
        NoiseKind::White,
        NoiseKind::Babble,
        NoiseKind::Volvo,
        NoiseKind::Street,
        NoiseKind::Cafe,
    ];

    pub fn label(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Babble => "babble",
            NoiseKind::Volvo => "volvo",
            NoiseKind::Street => "street",
            NoiseKind::Cafe => "cafe",
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown noise kind {s:?}"))
    }
}

/// Pink-ish noise via a three-pole approximation of a -3 dB/octave slope.
fn pink(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let norm = Normal::new(0.0, 1.0).unwrap();
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    (0..n)
        .map(|_| {
            let w: f64 = norm.sample(rng);
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect()
}

fn babble(n: usize, fs: f64, voices: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for _ in 0..voices {
        let mut vrng = ChaCha8Rng::seed_from_u64(rng.random());
        let plan = make_plan(n, fs, &mut vrng, false);
        let voice = Voice {
            plan: &plan,
            f0: plan.f0_track(0.0),
            drift_std: 0.0,
            quant_step_db: None,
            breath_db: BREATH_DB,
        };
        let y = voice.render(&mut vrng);
        let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        let g = rng.random_range(0.5..1.0) / peak;
        out.iter_mut().zip(&y).for_each(|(o, v)| *o += g * v);
    }
    out
}

fn normalize_peak(mut x: Vec<f64>, target: f64) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / peak);
    }
    x
}

/// Deterministic noise recording stand-in, peak-normalized to 0.9.
pub fn gen_noise(kind: NoiseKind, length: usize, seed: u64, sample_rate_hz: u32) -> AudioClip {
    let fs = sample_rate_hz as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(kind as u64 + 100);
    let x = match kind {
        NoiseKind::White => return gen_white_noise(length, seed, sample_rate_hz),
        NoiseKind::Babble => babble(length, fs, 6, &mut rng),
        NoiseKind::Volvo => {
            // Low rumble plus a wandering engine tone and its harmonic.
            let norm = Normal::new(0.0, 1.0).unwrap();
            let mut lp = 0.0;
            let mut lp2 = 0.0;
            let base = rng.random_range(30.0..45.0);
            let mut ph = 0.0;
            (0..length)
                .map(|i| {
                    lp = 0.995 * lp + 0.05 * norm.sample(&mut rng);
                    lp2 = 0.9 * lp2 + 0.1 * lp;
                    let f = base * (1.0 + 0.05 * (2.0 * PI * 0.2 * i as f64 / fs).sin());
                    ph += 2.0 * PI * f / fs;
                    lp2 + 0.02 * ph.sin() + 0.01 * (2.0 * ph).sin()
                })
                .collect()
        }
        NoiseKind::Street => {
            let p = pink(length, &mut rng);
            let mut out: Vec<f64> = p.iter().map(|v| 0.05 * v).collect();
            // Passing vehicles: slow broadband swells.
            let mut t = 0usize;
            while t < length {
                let dur = (rng.random_range(1.0..3.0) * fs) as usize;
                let gain = rng.random_range(0.5..2.0);
                for i in t..(t + dur).min(length) {
                    let u = (i - t) as f64 / dur as f64;
                    out[i] *= 1.0 + gain * (PI * u).sin().powi(2);
                }
                t += dur + (rng.random_range(0.5..2.0) * fs) as usize;
            }
            // Occasional horn.
            let horns = length / (4 * sample_rate_hz as usize) + 1;
            for _ in 0..horns {
                let start = rng.random_range(0..length);
                let f = rng.random_range(380.0..520.0);
                let dur = (0.3 * fs) as usize;
                for i in start..(start + dur).min(length) {
                    let u = (i - start) as f64 / dur as f64;
                    let w = (PI * u).sin();
                    out[i] += 0.15 * w * ((2.0 * PI * f * i as f64 / fs).sin() + 0.5 * (4.0 * PI * f * i as f64 / fs).sin());
                }
            }
            out
        }
        NoiseKind::Cafe => {
            let b = normalize_peak(babble(length, fs, 4, &mut rng), 0.5);
            let p = pink(length, &mut rng);
            let mut out: Vec<f64> = b.iter().zip(&p).map(|(b, p)| b + 0.03 * p).collect();
            // Cutlery clinks: short decaying high tones.
            let clinks = length / (sample_rate_hz as usize / 2) + 1;
            for _ in 0..clinks {
                let start = rng.random_range(0..length);
                let f = rng.random_range(2000.0..5000.0);
                let amp = rng.random_range(0.1..0.4);
                let dur = (0.08 * fs) as usize;
                for i in start..(start + dur).min(length) {
                    let u = (i - start) as f64 / fs;
                    out[i] += amp * (-u * 60.0).exp() * (2.0 * PI * f * u).sin();
                }
            }
            out
        }
    };
    let x = normalize_peak(x, 0.9);
    AudioClip::new(x, sample_rate_hz).expect("normalized noise")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusRow {
    pub utt_id: String,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub truth: Truth,
    pub attack_label: String,
    pub split: Split,
}

pub const MANIFEST_HEADER: &str = "utt_id\tpath\ttruth\tattack_label\tsplit";
pub const MANIFEST_NAME: &str = "manifest.tsv";

pub fn format_manifest(rows: &[CorpusRow]) -> String {
    let mut out = format!("{MANIFEST_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.utt_id,
            r.path.display(),
            r.truth,
            r.attack_label,
            r.split.as_str()
        );
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<CorpusRow>, SynthError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') || line == MANIFEST_HEADER {
            continue;
        }
        let err = |reason: String| SynthError::Manifest { line: i + 1, reason };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 tab-separated fields, found {}", f.len())));
        }
        rows.push(CorpusRow {
            utt_id: f[0].to_string(),
            path: PathBuf::from(f[1]),
            truth: f[2].parse().map_err(err)?,
            attack_label: f[3].to_string(),
            split: f[4].parse().map_err(err)?,
        });
    }
    Ok(rows)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Trials of one split in generation order: each human, then its twins.
pub fn corpus_plan(spec: &CorpusSpec, split: Split) -> Vec<(String, Truth, usize, u64)> {
    let mut out = Vec::new();
    for i in 0..spec.n_per_class {
        let seed = derive_seed(spec.seed, split as u64, i as u64);
        let stem = format!("{}_{i:04}", split.as_str());
        out.push((format!("{stem}_human"), Truth::Human, 0, seed));
        for v in 1..=spec.attack_variants {
            out.push((format!("{stem}_{}", attack_label(v)), Truth::Spoof, v, seed));
        }
    }
    out
}

/// Writes `<split>/<utt_id>.wav` files and `manifest.tsv` under `out_dir`;
/// returns the manifest path and rows.
pub fn gen_corpus(spec: &CorpusSpec, out_dir: impl AsRef<Path>) -> Result<(PathBuf, Vec<CorpusRow>), SynthError> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let jobs: Vec<(Split, String, Truth, usize, u64)> = [Split::Train, Split::Dev]
        .into_iter()
        .flat_map(|s| corpus_plan(spec, s).into_iter().map(move |(id, t, v, seed)| (s, id, t, v, seed)))
        .collect();
    for split in [Split::Train, Split::Dev] {
        let dir = out_dir.join(split.as_str());
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let rows = jobs
        .par_iter()
        .map(|(split, id, truth, variant, seed)| {
            let utt = gen_utterance(spec, *truth, *variant, *seed);
            let rel = PathBuf::from(split.as_str()).join(format!("{id}.wav"));
            let path = out_dir.join(&rel);
            crate::audio_io::write_wav(&path, &utt.clip)?;
            Ok(CorpusRow {
                utt_id: id.clone(),
                path: rel,
                truth: *truth,
                attack_label: utt.attack_label,
                split: *split,
            })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    let manifest = out_dir.join(MANIFEST_NAME);
    fs::write(&manifest, format_manifest(&rows)).map_err(io_err(&manifest))?;
    Ok((manifest, rows))
}
