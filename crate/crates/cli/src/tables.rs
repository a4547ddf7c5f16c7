//! Tab-separated manifests passed between subcommands.
//!
//! Readers are header-driven: columns may appear in any order and unknown
//! columns are ignored. Paths are stored relative to the manifest's own
//! directory and resolved on read.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use spoofnoise::eval::{fmt_g9, Truth, CLEAN_LABEL};
use spoofnoise::features::FeatureKind;

pub const MIX_COLUMNS: &[&str] = &[
    "utt_id",
    "path",
    "truth",
    "attack_label",
    "split",
    "noise_label",
    "snr_db",
    "noise_offset",
    "noise_gain",
    "post_scale",
    "measured_snr_db",
];

pub const INDEX_COLUMNS: &[&str] = &[
    "utt_id",
    "truth",
    "attack_label",
    "split",
    "noise_label",
    "snr_db",
    "kind",
    "frames",
    "dims",
    "path",
];

pub const INDEX_NAME: &str = "index.tsv";

/// Noise parameters of one mixed trial.
#[derive(Clone, Debug, PartialEq)]
pub struct MixMeta {
    pub noise_offset: usize,
    pub noise_gain: f64,
    pub post_scale: f64,
    pub measured_snr_db: f64,
}

/// One audio trial: a clean utterance or a noisy copy.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRow {
    pub utt_id: String,
    /// Resolved against the manifest directory.
    pub path: PathBuf,
    pub truth: Truth,
    pub attack_label: String,
    /// Empty when the manifest has no split column.
    pub split: String,
    pub noise_label: String,
    pub snr_db: Option<f64>,
    pub mix: Option<MixMeta>,
}

impl TrialRow {
    /// File stem unique per (utterance, noise, SNR).
    pub fn tag(&self) -> String {
        trial_tag(&self.utt_id, &self.noise_label, self.snr_db)
    }

    pub fn in_split(&self, split: Option<&str>) -> bool {
        split.is_none_or(|s| self.split == s)
    }
}

pub fn trial_tag(utt_id: &str, noise_label: &str, snr_db: Option<f64>) -> String {
    match snr_db {
        Some(s) => format!("{utt_id}__{noise_label}_{}dB", fmt_g9(s)),
        None => format!("{utt_id}__{noise_label}"),
    }
}

pub fn fmt_snr(snr: Option<f64>) -> String {
    snr.map_or_else(|| "-".to_string(), fmt_g9)
}

fn parse_snr(s: &str) -> Result<Option<f64>> {
    if s == "-" || s.is_empty() {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| anyhow!("bad snr_db {s:?}"))?;
    if !v.is_finite() {
        bail!("non-finite snr_db {s:?}");
    }
    Ok(Some(v))
}

/// Header-indexed view of a TSV file.
struct Table<'a> {
    columns: HashMap<&'a str, usize>,
    rows: Vec<(usize, Vec<&'a str>)>,
}

impl<'a> Table<'a> {
    fn parse(text: &'a str, required: &[&str]) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let Some((_, header)) = lines.next() else {
            return Ok(Table {
                columns: HashMap::new(),
                rows: Vec::new(),
            });
        };
        let columns: HashMap<&str, usize> = header.split('\t').enumerate().map(|(i, c)| (c.trim(), i)).collect();
        for r in required {
            if !columns.contains_key(r) {
                bail!("missing column {r:?} in header");
            }
        }
        let width = header.split('\t').count();
        let mut rows = Vec::new();
        for (i, l) in lines {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != width {
                bail!("line {}: expected {width} fields, found {}", i + 1, f.len());
            }
            rows.push((i + 1, f));
        }
        Ok(Table { columns, rows })
    }

    fn get<'r>(&self, row: &'r [&'a str], col: &str) -> Option<&'a str> {
        self.columns.get(col).map(|&i| row[i])
    }
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn check_unique(keys: impl IntoIterator<Item = String>) -> Result<()> {
    let mut seen = HashSet::new();
    for k in keys {
        if !seen.insert(k.clone()) {
            bail!("duplicate trial {k}");
        }
    }
    Ok(())
}

pub fn parse_trials(text: &str, base: &Path) -> Result<Vec<TrialRow>> {
    let t = Table::parse(text, &["utt_id", "path", "truth", "attack_label"])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, f) in &t.rows {
        let row = (|| -> Result<TrialRow> {
            let col = |c| t.get(f, c).unwrap_or_default();
            let mix = match t.get(f, "noise_offset") {
                Some(off) if off != "-" => Some(MixMeta {
                    noise_offset: off.parse().context("noise_offset")?,
                    noise_gain: col("noise_gain").parse().context("noise_gain")?,
                    post_scale: col("post_scale").parse().context("post_scale")?,
                    measured_snr_db: col("measured_snr_db").parse().context("measured_snr_db")?,
                }),
                _ => None,
            };
            let utt_id = col("utt_id").to_string();
            if utt_id.is_empty() {
                bail!("empty utt_id");
            }
            Ok(TrialRow {
                utt_id,
                path: base.join(col("path")),
                truth: col("truth").parse().map_err(|e: String| anyhow!(e))?,
                attack_label: col("attack_label").to_string(),
                split: col("split").to_string(),
                noise_label: t.get(f, "noise_label").unwrap_or(CLEAN_LABEL).to_string(),
                snr_db: parse_snr(col("snr_db"))?,
                mix,
            })
        })()
        .with_context(|| format!("line {line}"))?;
        out.push(row);
    }
    check_unique(out.iter().map(TrialRow::tag))?;
    Ok(out)
}

pub fn read_trials(manifest: &Path) -> Result<Vec<TrialRow>> {
    let text = std::fs::read_to_string(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    parse_trials(&text, &base_dir(manifest)).with_context(|| format!("parsing {}", manifest.display()))
}

fn rel<'p>(path: &'p Path, base: &Path) -> &'p Path {
    path.strip_prefix(base).unwrap_or(path)
}

/// Mix manifest with paths relative to `base`.
pub fn format_trials(rows: &[TrialRow], base: &Path) -> String {
    let mut out = MIX_COLUMNS.join("\t");
    out.push('\n');
    for r in rows {
        let (off, gain, scale, snr) = match &r.mix {
            Some(m) => (
                m.noise_offset.to_string(),
                fmt_g9(m.noise_gain),
                fmt_g9(m.post_scale),
                fmt_g9(m.measured_snr_db),
            ),
            None => ("-".into(), "-".into(), "-".into(), "-".into()),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{off}\t{gain}\t{scale}\t{snr}",
            r.utt_id,
            rel(&r.path, base).display(),
            r.truth,
            r.attack_label,
            r.split,
            r.noise_label,
            fmt_snr(r.snr_db),
        );
    }
    out
}

/// One extracted feature file.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexRow {
    pub utt_id: String,
    pub truth: Truth,
    pub attack_label: String,
    pub split: String,
    pub noise_label: String,
    pub snr_db: Option<f64>,
    pub kind: FeatureKind,
    pub frames: usize,
    pub dims: usize,
    /// Resolved against the index directory.
    pub path: PathBuf,
}

impl IndexRow {
    pub fn in_split(&self, split: Option<&str>) -> bool {
        split.is_none_or(|s| self.split == s)
    }
}

pub fn format_index(rows: &[IndexRow], base: &Path) -> String {
    let mut out = INDEX_COLUMNS.join("\t");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.utt_id,
            r.truth,
            r.attack_label,
            r.split,
            r.noise_label,
            fmt_snr(r.snr_db),
            r.kind,
            r.frames,
            r.dims,
            rel(&r.path, base).display(),
        );
    }
    out
}

pub fn parse_index(text: &str, base: &Path) -> Result<Vec<IndexRow>> {
    let t = Table::parse(text, INDEX_COLUMNS)?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, f) in &t.rows {
        let row = (|| -> Result<IndexRow> {
            let col = |c| t.get(f, c).unwrap_or_default();
            Ok(IndexRow {
                utt_id: col("utt_id").to_string(),
                truth: col("truth").parse().map_err(|e: String| anyhow!(e))?,
                attack_label: col("attack_label").to_string(),
                split: col("split").to_string(),
                noise_label: col("noise_label").to_string(),
                snr_db: parse_snr(col("snr_db"))?,
                kind: col("kind").parse().map_err(|e: String| anyhow!(e))?,
                frames: col("frames").parse().context("frames")?,
                dims: col("dims").parse().context("dims")?,
                path: base.join(col("path")),
            })
        })()
        .with_context(|| format!("line {line}"))?;
        out.push(row);
    }
    check_unique(out.iter().map(|r| trial_tag(&r.utt_id, &r.noise_label, r.snr_db)))?;
    Ok(out)
}

pub fn read_index(path: &Path) -> Result<Vec<IndexRow>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_index(&text, &base_dir(path)).with_context(|| format!("parsing {}", path.display()))
}
