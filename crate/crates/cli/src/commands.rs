//! Subcommand bodies. Workers fan out per utterance; manifests, indexes and
//! reports are written once by the caller after all workers finish.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use spoofnoise::audio_io::{encode_wav, parse_wav};
use spoofnoise::eval::{
    eer_table, format_report_text, format_report_tsv, format_scores, fuse as fuse_sets, read_scores, GroupBy, ScoreSet,
    TrialScore, CLEAN_LABEL,
};
use spoofnoise::features::{append_deltas, decode_features, encode_features, extract as extract_kind, FeatureKind, FeatureMatrix};
use spoofnoise::mlp::{decode_model, encode_model, score_utterance, train as train_model, Dataset, MlpError};
use spoofnoise::noise::{mix_with, MixSpec};
use spoofnoise::synth::{derive_seed, gen_corpus, gen_noise, CorpusSpec, NoiseKind, SynthError};
use spoofnoise::AudioClip;

use crate::fsutil::write_atomic;
use crate::tables::{format_index, format_trials, read_index, read_trials, trial_tag, IndexRow, MixMeta, TrialRow, INDEX_NAME};
use crate::{CliError, EvalArgs, ExtractArgs, FuseArgs, GenArgs, InspectArgs, MixArgs, Overrides, ScoreArgs, TrainArgs};

pub struct Context {
    pub seed: u64,
    pub overrides: Overrides,
}

const NOISE_STREAM: u64 = 0x006e_6f69_7365;
const MANIFEST: &str = "manifest.tsv";

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Logs each failure and returns the batch outcome.
fn batch_outcome(what: &str, failures: &[(String, anyhow::Error)], total: usize) -> Result<(), CliError> {
    for (item, e) in failures {
        log::error!("{what} {item}: {e:#}");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial {
            failed: failures.len(),
            total,
        })
    }
}

/// Per-trial mixing seed: the global seed xor a hash of the trial key.
pub fn mix_seed(global: u64, utt_id: &str, noise_label: &str, snr_db: f64) -> u64 {
    let key = format!("{utt_id}/{noise_label}/{}", spoofnoise::eval::fmt_g9(snr_db));
    let digest = Sha256::digest(key.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    global ^ u64::from_le_bytes(b)
}

fn read_clip(path: &Path) -> Result<AudioClip> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_wav(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn write_clip(path: &Path, clip: &AudioClip) -> Result<()> {
    write_atomic(path, &encode_wav(clip)?)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn gen_testdata(ctx: &Context, a: &GenArgs) -> Result<(), CliError> {
    let spec = CorpusSpec {
        n_per_class: a.n_per_class,
        duration_s: a.duration,
        sample_rate_hz: a.sample_rate,
        seed: ctx.seed,
        attack_variants: a.variants,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    if !(a.noise_seconds.is_finite() && a.noise_seconds > 0.0) {
        return Err(usage(format!("--noise-seconds must be positive, got {}", a.noise_seconds)));
    }
    let noise_len = (a.noise_seconds * a.sample_rate as f64).round() as usize;
    if noise_len < spec.n_samples() {
        return Err(usage("--noise-seconds must be at least --duration"));
    }
    let (manifest, rows) = gen_corpus(&spec, &a.out).map_err(|e| match e {
        SynthError::InvalidSpec(m) => usage(m),
        other => CliError::Data(other.into()),
    })?;
    let noise_dir = a.out.join("noise");
    NoiseKind::ALL
        .par_iter()
        .enumerate()
        .map(|(i, &kind)| {
            let clip = gen_noise(kind, noise_len, derive_seed(ctx.seed, NOISE_STREAM, i as u64), a.sample_rate);
            write_clip(&noise_dir.join(format!("{}.wav", kind.label())), &clip)
        })
        .collect::<Result<Vec<()>>>()?;
    log::info!(
        "wrote {} utterances to {} and {} noise files to {}",
        rows.len(),
        manifest.display(),
        NoiseKind::ALL.len(),
        noise_dir.display()
    );
    Ok(())
}

fn noise_sources(a: &MixArgs) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut out: Vec<(String, PathBuf)> = Vec::new();
    for n in &a.noise {
        let (label, path) = n
            .split_once('=')
            .ok_or_else(|| usage(format!("--noise expects label=path, got {n:?}")))?;
        out.push((label.to_string(), PathBuf::from(path)));
    }
    if let Some(dir) = &a.noise_dir {
        let entries = fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
        for e in entries {
            let p = e.context("listing noise directory")?.path();
            if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
                let label = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                out.push((label, p));
            }
        }
    }
    out.sort();
    for w in out.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(usage(format!("noise label {:?} given twice", w[0].0)));
        }
    }
    for (label, _) in &out {
        if label.is_empty() || label == CLEAN_LABEL || label.contains(['\t', '/', '\\']) {
            return Err(usage(format!("invalid noise label {label:?}")));
        }
    }
    Ok(out)
}

pub fn mix(ctx: &Context, a: &MixArgs) -> Result<(), CliError> {
    let sources = noise_sources(a)?;
    if sources.is_empty() && !a.include_clean {
        return Err(usage("no noise given; use --noise or --noise-dir"));
    }
    if let Some(bad) = a.snr.iter().find(|s| !s.is_finite()) {
        return Err(usage(format!("invalid SNR {bad}")));
    }
    let mut snrs = a.snr.clone();
    snrs.dedup_by(|x, y| x.to_bits() == y.to_bits());
    let rows: Vec<TrialRow> = read_trials(&a.manifest)?
        .into_iter()
        .filter(|r| r.in_split(a.split.as_deref()))
        .collect();
    if let Some(r) = rows.iter().find(|r| r.noise_label != CLEAN_LABEL) {
        return Err(CliError::Data(anyhow!("{} is already mixed ({})", r.utt_id, r.noise_label)));
    }
    if rows.is_empty() {
        log::warn!("{}: no utterances to mix", a.manifest.display());
    }
    let noises: Vec<(String, AudioClip)> = sources
        .iter()
        .map(|(l, p)| Ok((l.clone(), read_clip(p)?)))
        .collect::<Result<_>>()?;
    let cfg = ctx.overrides.mix;
    let wav_dir = a.out.join("wav");

    let per_utt = (a.include_clean as usize) + noises.len() * snrs.len();
    let per_row: Vec<Vec<Result<TrialRow, (String, anyhow::Error)>>> = rows
        .par_iter()
        .map(|row| {
            let clean = match read_clip(&row.path) {
                Ok(c) => c,
                // every output of this utterance fails
                Err(e) => return (0..per_utt).map(|_| Err((row.utt_id.clone(), anyhow!("{e:#}")))).collect(),
            };
            let mut out = Vec::new();
            if a.include_clean {
                let path = wav_dir.join(format!("{}.wav", row.tag()));
                out.push(
                    write_clip(&path, &clean)
                        .map(|()| TrialRow {
                            path,
                            ..row.clone()
                        })
                        .map_err(|e| (row.tag(), e)),
                );
            }
            for (label, noise) in &noises {
                for &snr in &snrs {
                    let tag = trial_tag(&row.utt_id, label, Some(snr));
                    let spec = MixSpec {
                        noise_label: label.clone(),
                        target_snr_db: snr,
                        seed: mix_seed(ctx.seed, &row.utt_id, label, snr),
                    };
                    let path = wav_dir.join(format!("{tag}.wav"));
                    let res = (|| -> Result<TrialRow> {
                        let m = mix_with(&clean, noise, &spec, &cfg)?;
                        write_clip(&path, &m.noisy)?;
                        Ok(TrialRow {
                            path: path.clone(),
                            noise_label: label.clone(),
                            snr_db: Some(snr),
                            mix: Some(MixMeta {
                                noise_offset: m.noise_offset_samples,
                                noise_gain: m.noise_gain,
                                post_scale: m.post_scale,
                                measured_snr_db: m.measured_snr_db,
                            }),
                            ..row.clone()
                        })
                    })();
                    out.push(res.map_err(|e| (tag, e)));
                }
            }
            out
        })
        .collect();

    let total = rows.len() * per_utt;
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for r in per_row.into_iter().flatten() {
        match r {
            Ok(row) => done.push(row),
            Err(f) => failures.push(f),
        }
    }
    write_atomic(&a.out.join(MANIFEST), format_trials(&done, &a.out).as_bytes())?;
    log::info!("mixed {} of {total} trials into {}", done.len(), a.out.display());
    batch_outcome("mix", &failures, total)
}

fn parse_kinds(s: &str) -> Result<Vec<FeatureKind>, CliError> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(FeatureKind::ALL.to_vec());
    }
    let mut kinds: Vec<FeatureKind> = s
        .split(',')
        .map(|k| k.trim().parse::<FeatureKind>().map_err(usage))
        .collect::<Result<_, _>>()?;
    kinds.sort();
    kinds.dedup();
    Ok(kinds)
}

/// Stacked features of one clip.
pub fn stacked_features(clip: &AudioClip, kind: FeatureKind, o: &Overrides) -> Result<FeatureMatrix> {
    let m = extract_kind(clip, kind, &o.stft, &o.lpc, &o.mgd)?;
    Ok(append_deltas(&m)?)
}

pub fn extract(ctx: &Context, a: &ExtractArgs) -> Result<(), CliError> {
    let kinds = parse_kinds(&a.kind)?;
    let rows: Vec<TrialRow> = read_trials(&a.manifest)?
        .into_iter()
        .filter(|r| r.in_split(a.split.as_deref()))
        .collect();
    if rows.is_empty() {
        log::warn!("{}: no trials to extract", a.manifest.display());
    }
    let dir = |k: FeatureKind| a.out.join(k.name());

    let results: Vec<Vec<Result<IndexRow, (String, anyhow::Error)>>> = rows
        .par_iter()
        .map(|row| {
            let clip = match read_clip(&row.path) {
                Ok(c) => c,
                Err(e) => return kinds.iter().map(|k| Err((format!("{k} {}", row.tag()), anyhow!("{e:#}")))).collect(),
            };
            kinds
                .iter()
                .map(|&kind| {
                    let path = dir(kind).join(format!("{}.sbft", row.tag()));
                    let res = (|| -> Result<IndexRow> {
                        let m = stacked_features(&clip, kind, &ctx.overrides)?;
                        write_atomic(&path, &encode_features(&m)?)?;
                        Ok(IndexRow {
                            utt_id: row.utt_id.clone(),
                            truth: row.truth,
                            attack_label: row.attack_label.clone(),
                            split: row.split.clone(),
                            noise_label: row.noise_label.clone(),
                            snr_db: row.snr_db,
                            kind,
                            frames: m.n_frames(),
                            dims: m.dims(),
                            path: path.clone(),
                        })
                    })();
                    res.map_err(|e| (format!("{kind} {}", row.tag()), e))
                })
                .collect()
        })
        .collect();

    let mut per_kind: Vec<Vec<IndexRow>> = vec![Vec::new(); kinds.len()];
    let mut failures = Vec::new();
    for per_row in results {
        for (ki, r) in per_row.into_iter().enumerate() {
            match r {
                Ok(ix) => {
                    log::debug!("{} {}: {} frames", ix.kind, ix.utt_id, ix.frames);
                    per_kind[ki].push(ix)
                }
                Err(f) => failures.push(f),
            }
        }
    }
    for (kind, ix) in kinds.iter().zip(&per_kind) {
        let d = dir(*kind);
        write_atomic(&d.join(INDEX_NAME), format_index(ix, &d).as_bytes())?;
        let frames: usize = ix.iter().map(|r| r.frames).sum();
        log::info!("{kind}: {} files, {frames} frames in {}", ix.len(), d.display());
    }
    batch_outcome("extract", &failures, rows.len() * kinds.len())
}

/// Index rows and their decoded matrices, checked for one kind and one shape.
fn load_features(rows: &[IndexRow], index: &Path) -> Result<Vec<FeatureMatrix>> {
    if let Some(first) = rows.first() {
        if let Some(r) = rows.iter().find(|r| r.kind != first.kind || r.dims != first.dims) {
            bail!(
                "{}: mixed feature shapes ({} x {} vs {} x {} for {})",
                index.display(),
                first.kind,
                first.dims,
                r.kind,
                r.dims,
                r.utt_id
            );
        }
    }
    rows.par_iter()
        .map(|r| {
            let bytes = fs::read(&r.path).with_context(|| format!("reading {}", r.path.display()))?;
            let m = decode_features(&bytes).with_context(|| format!("decoding {}", r.path.display()))?;
            if m.kind() != r.kind || m.n_frames() != r.frames || m.dims() != r.dims {
                bail!(
                    "{} holds {} {} x {}, index says {} {} x {}",
                    r.path.display(),
                    m.kind(),
                    m.n_frames(),
                    m.dims(),
                    r.kind,
                    r.frames,
                    r.dims
                );
            }
            if !m.is_stacked() {
                bail!("{} is not delta-stacked", r.path.display());
            }
            Ok(m)
        })
        .collect()
}

pub fn train(ctx: &Context, a: &TrainArgs) -> Result<(), CliError> {
    let split = (a.split != "any").then_some(a.split.as_str());
    let rows: Vec<IndexRow> = read_index(&a.index)?.into_iter().filter(|r| r.in_split(split)).collect();
    let Some(first) = rows.first() else {
        return Err(CliError::Data(anyhow!("{}: no rows in split {:?}", a.index.display(), a.split)));
    };
    let mats = load_features(&rows, &a.index)?;
    let mut data = Dataset::new(first.dims);
    for (r, m) in rows.iter().zip(&mats) {
        data.push_matrix(m, r.truth == spoofnoise::Truth::Spoof, ctx.overrides.frame_stride)
            .map_err(anyhow::Error::from)?;
    }
    let cfg = ctx.overrides.train_config(ctx.seed);
    log::info!(
        "training {} on {} frames from {} utterances (hidden {}, {} epochs)",
        first.kind,
        data.len(),
        rows.len(),
        cfg.hidden_dim,
        cfg.epochs
    );
    let outcome = train_model(&data, &cfg).map_err(|e| match e {
        MlpError::InvalidConfig(m) => usage(m),
        other => CliError::Data(other.into()),
    })?;
    for (i, l) in outcome.epoch_losses.iter().enumerate() {
        log::debug!("epoch {}: loss {l:.6}", i + 1);
    }
    if let (Some(f), Some(l)) = (outcome.epoch_losses.first(), outcome.epoch_losses.last()) {
        log::info!("loss {f:.4} -> {l:.4}");
    }
    write_atomic(&a.out, &encode_model(&outcome.model))?;
    Ok(())
}

pub fn score(_ctx: &Context, a: &ScoreArgs) -> Result<(), CliError> {
    let bytes = fs::read(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let model = decode_model(&bytes).with_context(|| format!("decoding {}", a.model.display()))?;
    let rows: Vec<IndexRow> = read_index(&a.index)?
        .into_iter()
        .filter(|r| r.in_split(a.split.as_deref()))
        .collect();
    if let Some(r) = rows.iter().find(|r| r.dims != model.input_dim) {
        return Err(CliError::Data(anyhow!(
            "{} has {} dims, model expects {}",
            r.utt_id,
            r.dims,
            model.input_dim
        )));
    }
    let mats = load_features(&rows, &a.index)?;
    let scores: Vec<f64> = mats
        .par_iter()
        .map(|m| score_utterance(&model, m))
        .collect::<Result<_, _>>()
        .map_err(anyhow::Error::from)?;
    let trials: Vec<TrialScore> = rows
        .iter()
        .zip(scores)
        .map(|(r, score)| TrialScore {
            utt_id: r.utt_id.clone(),
            truth: r.truth,
            attack_label: r.attack_label.clone(),
            noise_label: r.noise_label.clone(),
            snr_db: r.snr_db,
            score,
        })
        .collect();
    let system = match (&a.system_id, rows.first()) {
        (Some(s), _) => s.clone(),
        (None, Some(r)) => r.kind.name().to_string(),
        (None, None) => a.model.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
    };
    let set = ScoreSet::new(system, trials).map_err(anyhow::Error::from)?;
    write_atomic(&a.out, format_scores(&set).as_bytes())?;
    log::info!("scored {} trials into {}", set.len(), a.out.display());
    Ok(())
}

pub fn fuse(_ctx: &Context, a: &FuseArgs) -> Result<(), CliError> {
    let sets: Vec<ScoreSet> = a
        .scores
        .iter()
        .map(|p| read_scores(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<_>>()?;
    let fused = fuse_sets(&sets).map_err(anyhow::Error::from)?;
    write_atomic(&a.out, format_scores(&fused).as_bytes())?;
    log::info!("fused {} systems over {} trials as {}", sets.len(), fused.len(), fused.system_id());
    Ok(())
}

fn parse_group_by(items: &[String]) -> Result<GroupBy, CliError> {
    let mut by = GroupBy::default();
    for i in items {
        match i.trim() {
            "attack" => by.attack = true,
            "noise" => by.noise = true,
            "snr" => by.snr = true,
            "" | "none" => {}
            other => return Err(usage(format!("unknown --group-by field {other:?} (attack, noise, snr)"))),
        }
    }
    Ok(by)
}

pub fn eval(_ctx: &Context, a: &EvalArgs) -> Result<(), CliError> {
    let by = parse_group_by(&a.group_by)?;
    let set = read_scores(&a.scores).with_context(|| format!("reading {}", a.scores.display()))?;
    let table = eer_table(set.trials(), by);
    for r in table.undefined() {
        log::warn!(
            "EER undefined for {} {} ({} human, {} spoof)",
            r.attack_label.as_deref().unwrap_or("all"),
            r.condition.label(),
            r.n_human,
            r.n_spoof
        );
    }
    let text = format!("system {}\n{}", set.system_id(), format_report_text(&table));
    write_atomic(&with_suffix(&a.out, ".tsv"), format_report_tsv(&table).as_bytes())?;
    write_atomic(&with_suffix(&a.out, ".txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

/// Binary PGM with time left to right and the first dimension at the bottom,
/// min-max scaled; a constant matrix renders mid-gray.
pub fn feature_pgm(m: &FeatureMatrix) -> Vec<u8> {
    let (w, h) = (m.n_frames(), m.dims());
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    let (lo, hi) = m.min_max().unwrap_or((0.0, 0.0));
    let span = hi - lo;
    for d in (0..h).rev() {
        for n in 0..w {
            let px = if span > 0.0 {
                ((m.get(n, d) - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                128
            };
            out.push(px);
        }
    }
    out
}

pub fn inspect(_ctx: &Context, a: &InspectArgs) -> Result<(), CliError> {
    let bytes = fs::read(&a.file).with_context(|| format!("reading {}", a.file.display()))?;
    let magic = bytes.get(..4).unwrap_or(&bytes);
    let mut s = String::new();
    let mut matrix = None;
    match magic {
        b"RIFF" => {
            let c = parse_wav(&bytes).map_err(anyhow::Error::from)?;
            let rms = (c.samples().iter().map(|x| x * x).sum::<f64>() / c.len().max(1) as f64).sqrt();
            let _ = writeln!(s, "type: wav");
            let _ = writeln!(s, "sample_rate_hz: {}", c.sample_rate_hz());
            let _ = writeln!(s, "samples: {}", c.len());
            let _ = writeln!(s, "duration_s: {:.4}", c.len() as f64 / c.sample_rate_hz() as f64);
            let _ = writeln!(s, "peak: {:.6}", c.peak());
            let _ = writeln!(s, "rms: {rms:.6}");
        }
        b"SBFT" => {
            let m = decode_features(&bytes).map_err(anyhow::Error::from)?;
            let _ = writeln!(s, "type: features");
            let _ = writeln!(s, "kind: {}", m.kind());
            let _ = writeln!(s, "stacked: {}", m.is_stacked());
            let _ = writeln!(s, "frames: {}", m.n_frames());
            let _ = writeln!(s, "dims: {}", m.dims());
            if let Some((lo, hi)) = m.min_max() {
                let _ = writeln!(s, "min: {lo:.6}");
                let _ = writeln!(s, "max: {hi:.6}");
            }
            matrix = Some(m);
        }
        b"SBML" => {
            let m = decode_model(&bytes).map_err(anyhow::Error::from)?;
            let _ = writeln!(s, "type: model");
            let _ = writeln!(s, "input_dim: {}", m.input_dim);
            let _ = writeln!(s, "hidden_dim: {}", m.hidden_dim);
            let _ = writeln!(s, "parameters: {}", m.param_count());
        }
        other => {
            return Err(CliError::Data(anyhow!(
                "{}: unknown file magic {:?}",
                a.file.display(),
                String::from_utf8_lossy(other)
            )))
        }
    }
    print!("{s}");
    if let Some(p) = &a.pgm {
        let m = matrix.ok_or_else(|| usage("--pgm needs a feature file"))?;
        write_atomic(p, &feature_pgm(&m))?;
        log::info!("wrote {}", p.display());
    }
    Ok(())
}
