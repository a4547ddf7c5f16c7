//! Score fusion and equal error rates.
//!
//! The EER is the ROC-convex-hull value: trials are sorted by score, the
//! spoof indicator is made monotone by pool-adjacent-violators, and the EER
//! is read off the resulting hull. A spoof trial counts as accepted (a false
//! acceptance) when its score is below the threshold.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum EvalError {
    #[error("EER needs both classes, got {n_human} human and {n_spoof} spoof trials")]
    SingleClass { n_human: usize, n_spoof: usize },
    #[error("non-finite score for trial {0}")]
    NonFinite(String),
    #[error("truth/attack label mismatch for trial {utt_id}: truth {truth}, attack {attack}")]
    LabelMismatch { utt_id: String, truth: Truth, attack: String },
    #[error("duplicate trial key {0}")]
    DuplicateKey(String),
    #[error("fusion needs at least one score set")]
    NoSystems,
    #[error("score sets are not aligned: {0}")]
    Alignment(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Truth {
    Human,
    Spoof,
}

impl Truth {
    pub fn as_str(self) -> &'static str {
        match self {
            Truth::Human => "human",
            Truth::Spoof => "spoof",
        }
    }
}

impl std::fmt::Display for Truth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Truth {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "human" => Ok(Truth::Human),
            "spoof" => Ok(Truth::Spoof),
            other => Err(format!("unknown truth label {other:?}")),
        }
    }
}

pub const HUMAN_LABEL: &str = "human";
pub const CLEAN_LABEL: &str = "clean";

#[derive(Clone, Debug, PartialEq)]
pub struct TrialScore {
    pub utt_id: String,
    pub truth: Truth,
    pub attack_label: String,
    pub noise_label: String,
    pub snr_db: Option<f64>,
    /// Higher is more spoof-like.
    pub score: f64,
}

/// Identity of a trial within a score set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrialKey {
    pub utt_id: String,
    pub noise_label: String,
    snr_bits: Option<u64>,
}

impl std::fmt::Display for TrialKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.utt_id, self.noise_label, fmt_snr(self.snr_bits.map(f64::from_bits)))
    }
}

impl TrialScore {
    pub fn key(&self) -> TrialKey {
        TrialKey {
            utt_id: self.utt_id.clone(),
            noise_label: self.noise_label.clone(),
            snr_bits: self.snr_db.map(f64::to_bits),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if (self.truth == Truth::Human) != (self.attack_label == HUMAN_LABEL) {
            return Err(EvalError::LabelMismatch {
                utt_id: self.utt_id.clone(),
                truth: self.truth,
                attack: self.attack_label.clone(),
            });
        }
        if !self.score.is_finite() {
            return Err(EvalError::NonFinite(self.utt_id.clone()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet {
    system_id: String,
    trials: Vec<TrialScore>,
}

impl ScoreSet {
    pub fn new(system_id: impl Into<String>, trials: Vec<TrialScore>) -> Result<Self, EvalError> {
        let mut seen = BTreeSet::new();
        for t in &trials {
            t.validate()?;
            if !seen.insert(t.key()) {
                return Err(EvalError::DuplicateKey(t.key().to_string()));
            }
        }
        Ok(Self {
            system_id: system_id.into(),
            trials,
        })
    }

    pub fn system_id(&self) -> &str {
        &self.system_id
    }

    pub fn trials(&self) -> &[TrialScore] {
        &self.trials
    }

    pub fn into_trials(self) -> Vec<TrialScore> {
        self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }
}

/// Mean of values, computed as `min + sum(v - min) / k` over sorted values so
/// it is independent of input order and exact for identical inputs.
fn stable_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let v0 = values[0];
    let spread: f64 = values.iter().map(|v| v - v0).sum();
    v0 + spread / values.len() as f64
}

/// Per-trial mean score across systems, in the trial order of the first set.
pub fn fuse(sets: &[ScoreSet]) -> Result<ScoreSet, EvalError> {
    let first = sets.first().ok_or(EvalError::NoSystems)?;
    let index: Vec<HashMap<TrialKey, &TrialScore>> = sets
        .iter()
        .map(|s| s.trials.iter().map(|t| (t.key(), t)).collect())
        .collect();
    let mut problems = Vec::new();
    for (s, idx) in sets.iter().zip(&index).skip(1) {
        for t in &first.trials {
            match idx.get(&t.key()) {
                None => problems.push(format!("{} missing from {}", t.key(), s.system_id)),
                Some(o) if o.truth != t.truth || o.attack_label != t.attack_label => {
                    problems.push(format!("{} has different labels in {}", t.key(), s.system_id))
                }
                Some(_) => {}
            }
        }
        for t in &s.trials {
            if !index[0].contains_key(&t.key()) {
                problems.push(format!("{} missing from {}", t.key(), first.system_id));
            }
        }
    }
    if !problems.is_empty() {
        return Err(EvalError::Alignment(problems.join("; ")));
    }
    let mut buf = Vec::with_capacity(sets.len());
    let trials = first
        .trials
        .iter()
        .map(|t| {
            let key = t.key();
            buf.clear();
            buf.extend(index.iter().map(|idx| idx[&key].score));
            TrialScore {
                score: stable_mean(&mut buf),
                ..t.clone()
            }
        })
        .collect();
    let mut ids: Vec<&str> = sets.iter().map(|s| s.system_id.as_str()).collect();
    ids.sort_unstable();
    ScoreSet::new(format!("fused({})", ids.join("+")), trials)
}

/// Points of the ROC convex hull as `(p_fa, p_miss)` with spoof as target:
/// `p_miss` is the fraction of spoofs below threshold, `p_fa` the fraction of
/// humans at or above it. Starts at `(1, 0)` and ends at `(0, 1)`.
pub fn rocch(human: &[f64], spoof: &[f64]) -> Vec<(f64, f64)> {
    let mut all: Vec<(f64, bool)> = spoof
        .iter()
        .map(|&s| (s, true))
        .chain(human.iter().map(|&s| (s, false)))
        .collect();
    // Spoofs first within ties so tied blocks always pool.
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    // Pool-adjacent-violators on the spoof indicator: blocks of (spoofs, humans).
    let mut blocks: Vec<(u64, u64)> = Vec::new();
    for &(_, is_spoof) in &all {
        blocks.push(if is_spoof { (1, 0) } else { (0, 1) });
        while blocks.len() >= 2 {
            let (ts, th) = blocks[blocks.len() - 1];
            let (ps, ph) = blocks[blocks.len() - 2];
            // Merge while mean(prev) >= mean(top).
            if ps * (ts + th) >= ts * (ps + ph) {
                blocks.pop();
                let prev = blocks.last_mut().unwrap();
                *prev = (ps + ts, ph + th);
            } else {
                break;
            }
        }
    }
    let (ns, nh) = (spoof.len() as f64, human.len() as f64);
    let mut pts = Vec::with_capacity(blocks.len() + 1);
    let (mut cs, mut ch) = (0u64, 0u64);
    pts.push((1.0, 0.0));
    for (s, h) in blocks {
        cs += s;
        ch += h;
        pts.push((1.0 - ch as f64 / nh, cs as f64 / ns));
    }
    pts
}

fn split_classes(trials: &[TrialScore]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let mut human = Vec::new();
    let mut spoof = Vec::new();
    for t in trials {
        if !t.score.is_finite() {
            return Err(EvalError::NonFinite(t.utt_id.clone()));
        }
        match t.truth {
            Truth::Human => human.push(t.score),
            Truth::Spoof => spoof.push(t.score),
        }
    }
    if human.is_empty() || spoof.is_empty() {
        return Err(EvalError::SingleClass {
            n_human: human.len(),
            n_spoof: spoof.len(),
        });
    }
    Ok((human, spoof))
}

/// ROCCH-EER of raw score lists, in percent.
pub fn eer_scores(human: &[f64], spoof: &[f64]) -> Result<f64, EvalError> {
    if human.is_empty() || spoof.is_empty() {
        return Err(EvalError::SingleClass {
            n_human: human.len(),
            n_spoof: spoof.len(),
        });
    }
    let pts = rocch(human, spoof);
    let mut eer = 0.0f64;
    for w in pts.windows(2) {
        let ((x1, y1), (x2, y2)) = (w[0], w[1]);
        if x1 == x2 || y1 == y2 {
            continue;
        }
        // Line a*x + b*y = 1 through both points meets x = y at 1 / (a + b).
        let det = x1 * y2 - x2 * y1;
        let denom = (y2 - y1) + (x1 - x2);
        if det != 0.0 {
            eer = eer.max(det / denom);
        }
    }
    Ok(100.0 * eer)
}

/// ROCCH-EER in percent.
pub fn eer(trials: &[TrialScore]) -> Result<f64, EvalError> {
    let (h, s) = split_classes(trials)?;
    eer_scores(&h, &s)
}

/// Cross-check EER without the hull: linear interpolation between the two
/// raw threshold points where false acceptance and false rejection cross.
pub fn eer_interpolated(trials: &[TrialScore]) -> Result<f64, EvalError> {
    let (mut h, mut s) = split_classes(trials)?;
    h.sort_by(f64::total_cmp);
    s.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = h.iter().chain(&s).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let (nh, ns) = (h.len() as f64, s.len() as f64);
    // (far, frr) as the threshold rises: far grows, frr shrinks.
    let point = |t: f64| {
        let spoof_below = s.partition_point(|&v| v < t) as f64;
        let human_below = h.partition_point(|&v| v < t) as f64;
        (spoof_below / ns, 1.0 - human_below / nh)
    };
    let mut prev = point(thresholds[0]);
    for &t in &thresholds[1..] {
        let cur = point(t);
        let (d0, d1) = (prev.0 - prev.1, cur.0 - cur.1);
        if d0 == 0.0 {
            return Ok(100.0 * prev.0);
        }
        if d0 < 0.0 && d1 >= 0.0 {
            let w = d0 / (d0 - d1);
            return Ok(100.0 * (prev.0 + w * (cur.0 - prev.0)));
        }
        prev = cur;
    }
    Ok(100.0 * prev.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GroupBy {
    pub attack: bool,
    pub noise: bool,
    pub snr: bool,
}

impl GroupBy {
    pub const ALL: GroupBy = GroupBy {
        attack: true,
        noise: true,
        snr: true,
    };
}

/// Noise condition of a group; `None` fields are pooled.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub noise_label: Option<String>,
    pub snr_db: Option<Option<f64>>,
}

impl Condition {
    fn matches(&self, t: &TrialScore) -> bool {
        self.noise_label.as_ref().is_none_or(|n| *n == t.noise_label)
            && self.snr_db.is_none_or(|s| s.map(f64::to_bits) == t.snr_db.map(f64::to_bits))
    }

    pub fn label(&self) -> String {
        let noise = self.noise_label.as_deref().unwrap_or("all");
        match self.snr_db {
            None => noise.to_string(),
            Some(None) => noise.to_string(),
            Some(Some(snr)) => format!("{noise}@{}dB", fmt_g9(snr)),
        }
    }

    fn sort_key(&self, other: &Self) -> Ordering {
        let rank = |c: &Self| c.noise_label.as_deref() != Some(CLEAN_LABEL);
        rank(self)
            .cmp(&rank(other))
            .then_with(|| self.noise_label.cmp(&other.noise_label))
            .then_with(|| {
                let s = |c: &Self| c.snr_db.flatten().unwrap_or(f64::INFINITY);
                s(other).total_cmp(&s(self))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupRow {
    /// `None` when attacks are pooled.
    pub attack_label: Option<String>,
    pub condition: Condition,
    /// `None` when the group lacks a class.
    pub eer: Option<f64>,
    pub eer_interpolated: Option<f64>,
    pub n_human: usize,
    pub n_spoof: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AverageScope {
    All,
    Known,
    Unknown,
    /// Single EER over all trials of the condition rather than a mean over groups.
    Pooled,
}

impl AverageScope {
    pub fn label(self) -> &'static str {
        match self {
            AverageScope::All => "avg_all",
            AverageScope::Known => "avg_known",
            AverageScope::Unknown => "avg_unknown",
            AverageScope::Pooled => "pooled",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AverageRow {
    pub scope: AverageScope,
    pub condition: Condition,
    pub eer: Option<f64>,
    /// Defined groups averaged, or trials pooled for [`AverageScope::Pooled`].
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EerTable {
    pub group_by: GroupBy,
    pub rows: Vec<GroupRow>,
    pub averages: Vec<AverageRow>,
}

impl EerTable {
    pub fn undefined(&self) -> impl Iterator<Item = &GroupRow> {
        self.rows.iter().filter(|r| r.eer.is_none())
    }
}

/// Attack number of labels of the form `S<n>`.
pub fn attack_index(label: &str) -> Option<u32> {
    label.strip_prefix('S').and_then(|n| n.parse().ok())
}

pub fn is_known_attack(label: &str) -> bool {
    matches!(attack_index(label), Some(1..=5))
}

pub fn is_unknown_attack(label: &str) -> bool {
    matches!(attack_index(label), Some(6..=10))
}

fn attack_order(a: &str, b: &str) -> Ordering {
    match (attack_index(a), attack_index(b)) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.cmp(b),
    }
}

fn conditions(trials: &[TrialScore], by: GroupBy) -> Vec<Condition> {
    let mut out: Vec<Condition> = Vec::new();
    for t in trials {
        let c = Condition {
            noise_label: by.noise.then(|| t.noise_label.clone()),
            snr_db: by.snr.then_some(t.snr_db),
        };
        if !out.iter().any(|o| o.noise_label == c.noise_label && o.snr_db.map(|s| s.map(f64::to_bits)) == c.snr_db.map(|s| s.map(f64::to_bits))) {
            out.push(c);
        }
    }
    out.sort_by(|a, b| a.sort_key(b));
    out
}

fn group_eer(trials: &[&TrialScore]) -> (Option<f64>, Option<f64>, usize, usize) {
    let owned: Vec<TrialScore> = trials.iter().map(|&t| t.clone()).collect();
    let n_human = owned.iter().filter(|t| t.truth == Truth::Human).count();
    let n_spoof = owned.len() - n_human;
    (eer(&owned).ok(), eer_interpolated(&owned).ok(), n_human, n_spoof)
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        (None, 0)
    } else {
        (Some(v.iter().sum::<f64>() / v.len() as f64), v.len())
    }
}

/// EER per group. With attack grouping, every attack group of a condition
/// holds all human trials of that condition plus the attack's spoofs.
pub fn eer_table(trials: &[TrialScore], by: GroupBy) -> EerTable {
    let conds = conditions(trials, by);
    let mut attacks: Vec<String> = trials
        .iter()
        .filter(|t| t.truth == Truth::Spoof)
        .map(|t| t.attack_label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    attacks.sort_by(|a, b| attack_order(a, b));
    let attack_slots: Vec<Option<&String>> = if by.attack {
        attacks.iter().map(Some).collect()
    } else {
        vec![None]
    };
    let jobs: Vec<(Option<&String>, &Condition)> = attack_slots
        .iter()
        .flat_map(|a| conds.iter().map(move |c| (*a, c)))
        .collect();
    let rows: Vec<GroupRow> = jobs
        .par_iter()
        .map(|&(attack, cond)| {
            let members: Vec<&TrialScore> = trials
                .iter()
                .filter(|t| cond.matches(t))
                .filter(|t| attack.is_none_or(|a| t.truth == Truth::Human || t.attack_label == *a))
                .collect();
            let (eer, eer_interpolated, n_human, n_spoof) = group_eer(&members);
            GroupRow {
                attack_label: attack.cloned(),
                condition: cond.clone(),
                eer,
                eer_interpolated,
                n_human,
                n_spoof,
            }
        })
        .collect();
    let mut averages = Vec::new();
    for cond in &conds {
        let in_cond = || rows.iter().filter(|r| r.condition == *cond);
        if by.attack {
            let scopes: [(AverageScope, fn(&str) -> bool); 3] = [
                (AverageScope::All, |_| true),
                (AverageScope::Known, is_known_attack),
                (AverageScope::Unknown, is_unknown_attack),
            ];
            for (scope, keep) in scopes {
                let (eer, n) = mean_defined(
                    in_cond()
                        .filter(|r| r.attack_label.as_deref().is_some_and(keep))
                        .map(|r| r.eer),
                );
                averages.push(AverageRow {
                    scope,
                    condition: cond.clone(),
                    eer,
                    n,
                });
            }
        }
        let members: Vec<&TrialScore> = trials.iter().filter(|t| cond.matches(t)).collect();
        let (eer, _, nh, ns) = group_eer(&members);
        averages.push(AverageRow {
            scope: AverageScope::Pooled,
            condition: cond.clone(),
            eer,
            n: nh + ns,
        });
    }
    EerTable {
        group_by: by,
        rows,
        averages,
    }
}

/// `%.9g`-style formatting: 9 significant digits, trailing zeros trimmed.
pub fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..9).contains(&exp) {
        trim(&format!("{x:.*}", (8 - exp) as usize))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    }
}

fn fmt_snr(snr: Option<f64>) -> String {
    snr.map_or_else(|| "-".to_string(), fmt_g9)
}

pub const SCORE_HEADER: &str = "utt_id\ttruth\tattack_label\tnoise_label\tsnr_db\tscore";
const SYSTEM_PREFIX: &str = "#system_id\t";

pub fn format_scores(set: &ScoreSet) -> String {
    let mut out = format!("{SYSTEM_PREFIX}{}\n{SCORE_HEADER}\n", set.system_id);
    for t in &set.trials {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            t.utt_id,
            t.truth,
            t.attack_label,
            t.noise_label,
            fmt_snr(t.snr_db),
            fmt_g9(t.score)
        );
    }
    out
}

pub fn parse_scores(text: &str, default_system: &str) -> Result<ScoreSet, EvalError> {
    let mut system = default_system.to_string();
    let mut trials = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if let Some(id) = line.strip_prefix(SYSTEM_PREFIX) {
            system = id.to_string();
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') || line == SCORE_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let err = |reason: String| EvalError::Parse { line: line_no, reason };
        if f.len() != 6 {
            return Err(err(format!("expected 6 tab-separated fields, found {}", f.len())));
        }
        let truth: Truth = f[1].parse().map_err(err)?;
        let snr_db = match f[4] {
            "-" => None,
            s => Some(s.parse::<f64>().map_err(|e| EvalError::Parse {
                line: line_no,
                reason: format!("bad snr_db {s:?}: {e}"),
            })?),
        };
        let score = f[5].parse::<f64>().map_err(|e| EvalError::Parse {
            line: line_no,
            reason: format!("bad score {:?}: {e}", f[5]),
        })?;
        trials.push(TrialScore {
            utt_id: f[0].to_string(),
            truth,
            attack_label: f[2].to_string(),
            noise_label: f[3].to_string(),
            snr_db,
            score,
        });
    }
    ScoreSet::new(system, trials)
}

pub fn write_scores(path: impl AsRef<Path>, set: &ScoreSet) -> Result<(), EvalError> {
    fs::write(path, format_scores(set))?;
    Ok(())
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreSet, EvalError> {
    let path = path.as_ref();
    let default = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_scores(&fs::read_to_string(path)?, &default)
}

fn fmt_opt_eer(e: Option<f64>) -> String {
    e.map_or_else(|| "undefined".to_string(), fmt_g9)
}

fn cond_fields(c: &Condition) -> (String, String) {
    (
        c.noise_label.clone().unwrap_or_else(|| "*".into()),
        match c.snr_db {
            None => "*".into(),
            Some(s) => fmt_snr(s),
        },
    )
}

pub const REPORT_HEADER: &str = "row\tnoise_label\tsnr_db\teer_pct\teer_interp_pct\tn_human\tn_spoof";

/// Machine-readable report: group rows, then average rows. Undefined groups
/// appear with `undefined` EERs.
pub fn format_report_tsv(table: &EerTable) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in &table.rows {
        let (noise, snr) = cond_fields(&r.condition);
        let _ = writeln!(
            out,
            "{}\t{noise}\t{snr}\t{}\t{}\t{}\t{}",
            r.attack_label.as_deref().unwrap_or("*"),
            fmt_opt_eer(r.eer),
            fmt_opt_eer(r.eer_interpolated),
            r.n_human,
            r.n_spoof
        );
    }
    for a in &table.averages {
        let (noise, snr) = cond_fields(&a.condition);
        let _ = writeln!(out, "{}\t{noise}\t{snr}\t{}\t-\t{}\t-", a.scope.label(), fmt_opt_eer(a.eer), a.n);
    }
    out
}

/// Aligned text table: one row per attack group and average, one column per
/// condition, EERs in percent with two decimals.
pub fn format_report_text(table: &EerTable) -> String {
    let mut conds: Vec<&Condition> = Vec::new();
    for r in &table.rows {
        if !conds.contains(&&r.condition) {
            conds.push(&r.condition);
        }
    }
    let cell = |e: Option<f64>| e.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
    let mut lines: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["EER (%)".to_string()];
    header.extend(conds.iter().map(|c| c.label()));
    lines.push(header);
    let mut labels: Vec<Option<String>> = Vec::new();
    for r in &table.rows {
        if !labels.contains(&r.attack_label) {
            labels.push(r.attack_label.clone());
        }
    }
    for label in &labels {
        let mut line = vec![label.clone().unwrap_or_else(|| "all".into())];
        for c in &conds {
            let r = table.rows.iter().find(|r| r.attack_label == *label && r.condition == **c);
            line.push(cell(r.and_then(|r| r.eer)));
        }
        lines.push(line);
    }
    let scopes = [AverageScope::All, AverageScope::Known, AverageScope::Unknown, AverageScope::Pooled];
    for scope in scopes {
        let present: Vec<&AverageRow> = table.averages.iter().filter(|a| a.scope == scope).collect();
        if present.is_empty() {
            continue;
        }
        let mut line = vec![scope.label().to_string()];
        for c in &conds {
            line.push(cell(present.iter().find(|a| a.condition == **c).and_then(|a| a.eer)));
        }
        lines.push(line);
    }
    let ncol = lines[0].len();
    let widths: Vec<usize> = (0..ncol)
        .map(|j| lines.iter().map(|l| l[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for l in &lines {
        let mut row = format!("{:<w$}", l[0], w = widths[0]);
        for j in 1..ncol {
            let _ = write!(row, "  {:>w$}", l[j], w = widths[j]);
        }
        out.push_str(row.trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trial(id: &str, truth: Truth, attack: &str, noise: &str, snr: Option<f64>, score: f64) -> TrialScore {
        TrialScore {
            utt_id: id.into(),
            truth,
            attack_label: attack.into(),
            noise_label: noise.into(),
            snr_db: snr,
            score,
        }
    }

    fn from_scores(human: &[f64], spoof: &[f64]) -> Vec<TrialScore> {
        let h = human
            .iter()
            .enumerate()
            .map(|(i, &s)| trial(&format!("h{i}"), Truth::Human, HUMAN_LABEL, CLEAN_LABEL, None, s));
        let sp = spoof
            .iter()
            .enumerate()
            .map(|(i, &s)| trial(&format!("s{i}"), Truth::Spoof, "S1", CLEAN_LABEL, None, s));
        h.chain(sp).collect()
    }

    /// Threshold sweep with "score >= t means spoof", lower hull by monotone
    /// chain, then the hull's crossing with the diagonal by interpolation.
    fn oracle_eer(human: &[f64], spoof: &[f64]) -> f64 {
        let mut ts: Vec<f64> = human.iter().chain(spoof).copied().collect();
        ts.push(f64::INFINITY);
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let (nh, ns) = (human.len() as f64, spoof.len() as f64);
        let mut pts: Vec<(f64, f64)> = ts
            .iter()
            .map(|&t| {
                let fa = human.iter().filter(|&&h| h >= t).count() as f64 / nh;
                let miss = spoof.iter().filter(|&&s| s < t).count() as f64 / ns;
                (fa, miss)
            })
            .collect();
        pts.push((1.0, 0.0));
        pts.push((0.0, 1.0));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.dedup();
        let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
        let mut hull: Vec<(f64, f64)> = Vec::new();
        for p in pts {
            while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        for w in hull.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (da, db) = (a.1 - a.0, b.1 - b.0);
            if da >= 0.0 && db <= 0.0 {
                if da == db {
                    return 100.0 * a.0;
                }
                let u = da / (da - db);
                return 100.0 * (a.0 + u * (b.0 - a.0));
            }
        }
        unreachable!("hull always crosses the diagonal")
    }

    #[test]
    fn perfect_separation_is_zero() {
        assert_eq!(eer(&from_scores(&[0.0; 4], &[1.0; 3])).unwrap(), 0.0);
    }

    #[test]
    fn identical_distributions_are_fifty() {
        let s = [0.1, 0.2, 0.2, 0.7];
        assert!((eer(&from_scores(&s, &s)).unwrap() - 50.0).abs() < 1e-12);
        assert!((eer(&from_scores(&[0.3; 5], &[0.3; 2])).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn small_example_matches_oracle() {
        let (h, s) = ([0.1, 0.2], [0.15, 0.9]);
        let e = eer(&from_scores(&h, &s)).unwrap();
        assert!((e - oracle_eer(&h, &s)).abs() < 1e-9);
        assert!((e - 25.0).abs() < 1e-9, "{e}");
    }

    #[test]
    fn single_class_is_error() {
        assert!(matches!(eer(&from_scores(&[0.1], &[])), Err(EvalError::SingleClass { .. })));
        assert!(eer(&from_scores(&[], &[0.1])).is_err());
    }

    #[test]
    fn random_sets_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let nh = rng.random_range(1..100);
            let ns = rng.random_range(1..100);
            let shift: f64 = rng.random_range(-1.0..3.0);
            let q = |x: f64| (x * 8.0).round() / 8.0;
            let h: Vec<f64> = (0..nh).map(|_| q(rng.random_range(0.0..2.0))).collect();
            let s: Vec<f64> = (0..ns).map(|_| q(rng.random_range(0.0..2.0) + shift)).collect();
            let e = eer_scores(&h, &s).unwrap();
            assert!((e - oracle_eer(&h, &s)).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolated_eer_agrees_on_simple_sets() {
        assert_eq!(eer_interpolated(&from_scores(&[0.0; 3], &[1.0; 3])).unwrap(), 0.0);
        let s = [0.1, 0.5, 0.9];
        assert!((eer_interpolated(&from_scores(&s, &s)).unwrap() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn fuse_examples() {
        let a = ScoreSet::new("a", from_scores(&[0.2], &[0.9])).unwrap();
        let mut b_trials = from_scores(&[0.4], &[0.1]);
        b_trials.reverse();
        let b = ScoreSet::new("b", b_trials).unwrap();
        let f = fuse(&[a.clone(), b.clone()]).unwrap();
        assert!((f.trials()[0].score - 0.3).abs() < 1e-15);
        assert!((f.trials()[1].score - 0.5).abs() < 1e-15);
        let g = fuse(&[b, a.clone()]).unwrap();
        let sorted = |s: &ScoreSet| {
            let mut t = s.trials().to_vec();
            t.sort_by_key(|t| t.key());
            t
        };
        assert_eq!(sorted(&f), sorted(&g));
        assert_eq!(fuse(&[a.clone(), a.clone(), a.clone()]).unwrap().trials(), a.trials());
        assert!(matches!(fuse(&[]), Err(EvalError::NoSystems)));
    }

    #[test]
    fn fuse_reports_missing_keys() {
        let a = ScoreSet::new("a", from_scores(&[0.2, 0.3], &[0.9])).unwrap();
        let b = ScoreSet::new("b", from_scores(&[0.2], &[0.9])).unwrap();
        match fuse(&[a, b]) {
            Err(EvalError::Alignment(msg)) => assert!(msg.contains("h1/clean/-"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn score_set_invariants() {
        let dup = vec![
            trial("u", Truth::Human, HUMAN_LABEL, CLEAN_LABEL, None, 0.1),
            trial("u", Truth::Human, HUMAN_LABEL, CLEAN_LABEL, None, 0.2),
        ];
        assert!(matches!(ScoreSet::new("x", dup), Err(EvalError::DuplicateKey(_))));
        let ok = vec![
            trial("u", Truth::Human, HUMAN_LABEL, CLEAN_LABEL, None, 0.1),
            trial("u", Truth::Human, HUMAN_LABEL, "white", Some(0.0), 0.2),
        ];
        assert!(ScoreSet::new("x", ok).is_ok());
        let bad = vec![trial("u", Truth::Spoof, HUMAN_LABEL, CLEAN_LABEL, None, 0.1)];
        assert!(matches!(ScoreSet::new("x", bad), Err(EvalError::LabelMismatch { .. })));
    }

    fn grid_trials(rng: &mut ChaCha8Rng) -> Vec<TrialScore> {
        let mut out = Vec::new();
        for (noise, snr) in [(CLEAN_LABEL, None), ("white", Some(20.0)), ("white", Some(0.0))] {
            for i in 0..20 {
                out.push(trial(&format!("h{i}"), Truth::Human, HUMAN_LABEL, noise, snr, rng.random_range(0.0..1.0)));
            }
            for a in 1..=7 {
                for i in 0..10 {
                    let s = rng.random_range(0.0..1.0) + a as f64 * 0.1;
                    out.push(trial(&format!("S{a}_{i}"), Truth::Spoof, &format!("S{a}"), noise, snr, s));
                }
            }
        }
        out
    }

    #[test]
    fn single_group_matches_eer() {
        let t = from_scores(&[0.1, 0.4, 0.5], &[0.3, 0.8]);
        let table = eer_table(&t, GroupBy::default());
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].eer, Some(eer(&t).unwrap()));
        assert_eq!(table.averages.len(), 1);
        assert_eq!(table.averages[0].eer, Some(eer(&t).unwrap()));
    }

    #[test]
    fn disjoint_perfect_groups() {
        let t = vec![
            trial("h0", Truth::Human, HUMAN_LABEL, CLEAN_LABEL, None, 0.0),
            trial("a0", Truth::Spoof, "S1", CLEAN_LABEL, None, 1.0),
            trial("h0", Truth::Human, HUMAN_LABEL, "babble", Some(10.0), 5.0),
            trial("a0", Truth::Spoof, "S1", "babble", Some(10.0), 6.0),
        ];
        let table = eer_table(&t, GroupBy::ALL);
        assert_eq!(table.rows.len(), 2);
        assert!(table.rows.iter().all(|r| r.eer == Some(0.0)));
        let all: Vec<_> = table.averages.iter().filter(|a| a.scope == AverageScope::All).collect();
        assert!(all.iter().all(|a| a.eer == Some(0.0)));
        assert_eq!(table.rows[0].condition.noise_label.as_deref(), Some(CLEAN_LABEL));
    }

    #[test]
    fn per_group_values_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = grid_trials(&mut rng);
        let table = eer_table(&t, GroupBy::ALL);
        assert_eq!(table.rows.len(), 7 * 3);
        for r in &table.rows {
            let attack = r.attack_label.as_deref().unwrap();
            let members: Vec<&TrialScore> = t
                .iter()
                .filter(|x| Some(&x.noise_label) == r.condition.noise_label.as_ref())
                .filter(|x| Some(x.snr_db) == r.condition.snr_db)
                .collect();
            let h: Vec<f64> = members.iter().filter(|x| x.truth == Truth::Human).map(|x| x.score).collect();
            let s: Vec<f64> = members.iter().filter(|x| x.attack_label == attack).map(|x| x.score).collect();
            assert_eq!((r.n_human, r.n_spoof), (20, 10));
            assert!((r.eer.unwrap() - oracle_eer(&h, &s)).abs() < 1e-9);
        }
        for a in table.averages.iter().filter(|a| a.scope == AverageScope::Known) {
            let expect: f64 = table
                .rows
                .iter()
                .filter(|r| r.condition == a.condition && is_known_attack(r.attack_label.as_deref().unwrap()))
                .map(|r| r.eer.unwrap())
                .sum::<f64>()
                / 5.0;
            assert_eq!(a.n, 5);
            assert!((a.eer.unwrap() - expect).abs() < 1e-12);
        }
        let unknown = table.averages.iter().find(|a| a.scope == AverageScope::Unknown).unwrap();
        assert_eq!(unknown.n, 2);
    }

    #[test]
    fn groups_missing_a_class_are_listed() {
        let t = vec![
            trial("h0", Truth::Human, HUMAN_LABEL, CLEAN_LABEL, None, 0.0),
            trial("a0", Truth::Spoof, "S1", CLEAN_LABEL, None, 1.0),
            trial("a0", Truth::Spoof, "S1", "white", Some(0.0), 1.0),
        ];
        let table = eer_table(&t, GroupBy::ALL);
        let undefined: Vec<_> = table.undefined().collect();
        assert_eq!(undefined.len(), 1);
        assert_eq!(undefined[0].condition.noise_label.as_deref(), Some("white"));
        assert!(format_report_tsv(&table).contains("undefined"));
        assert!(format_report_text(&table).contains("n/a"));
    }

    #[test]
    fn g9_formatting() {
        assert_eq!(fmt_g9(0.5), "0.5");
        assert_eq!(fmt_g9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_g9(123456789.4), "123456789");
        assert_eq!(fmt_g9(1234567890.0), "1.23456789e+09");
        assert_eq!(fmt_g9(-2.5e-7), "-2.5e-07");
        assert_eq!(fmt_g9(20.0), "20");
        assert_eq!(fmt_g9(0.0), "0");
    }

    #[test]
    fn score_tsv_round_trip() {
        let mut t = from_scores(&[0.125, 0.3], &[0.75]);
        t.push(trial("h0", Truth::Human, HUMAN_LABEL, "babble", Some(-5.0), 1.0 / 3.0));
        let set = ScoreSet::new("LMS", t).unwrap();
        let text = format_scores(&set);
        let back = parse_scores(&text, "other").unwrap();
        assert_eq!(back.system_id(), "LMS");
        assert_eq!(back.len(), 4);
        assert_eq!(format_scores(&back), text);
        assert_eq!(back.trials()[3].snr_db, Some(-5.0));
        assert!((back.trials()[3].score - 1.0 / 3.0).abs() < 1e-9);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.tsv");
        write_scores(&p, &set).unwrap();
        assert_eq!(read_scores(&p).unwrap(), back);
    }

    #[test]
    fn score_tsv_errors() {
        assert!(parse_scores("a\tb\n", "x").is_err());
        let bad_truth = "u\tmaybe\thuman\tclean\t-\t0.5\n";
        assert!(matches!(parse_scores(bad_truth, "x"), Err(EvalError::Parse { line: 1, .. })));
        let bad_score = "u\thuman\thuman\tclean\t-\tabc\n";
        assert!(parse_scores(bad_score, "x").is_err());
    }

    #[test]
    fn text_report_is_aligned() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let table = eer_table(&grid_trials(&mut rng), GroupBy::ALL);
        let text = format_report_text(&table);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("EER (%)"));
        assert!(lines[0].contains("clean") && lines[0].contains("white@20dB") && lines[0].contains("white@0dB"));
        assert!(lines[0].find("white@20dB") < lines[0].find("white@0dB"));
        assert_eq!(lines.len(), 1 + 7 + 4);
        assert!(lines[1].starts_with("S1 "));
        assert!(lines[7].starts_with("S7 "));
    }

    fn score_lists() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(-5.0f64..5.0, 1..60),
            proptest::collection::vec(-5.0f64..5.0, 1..60),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn monotone_transforms_preserve_eer((h, s) in score_lists()) {
            let e = eer_scores(&h, &s).unwrap();
            let f = |x: &f64| (x * 0.7).exp() * 3.0 - 1.0;
            let e2 = eer_scores(&h.iter().map(f).collect::<Vec<_>>(), &s.iter().map(f).collect::<Vec<_>>()).unwrap();
            prop_assert!((e - e2).abs() < 1e-9);
            prop_assert!((0.0..=100.0).contains(&e));
            prop_assert!((e - oracle_eer(&h, &s)).abs() < 1e-9);
        }

        #[test]
        fn negation_with_label_swap((h, s) in score_lists()) {
            let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
            let e = eer_scores(&h, &s).unwrap();
            prop_assert!((e - eer_scores(&neg(&s), &neg(&h)).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn constant_shift_of_all_systems((h, s) in score_lists(), c in -3.0f64..3.0) {
            let a = ScoreSet::new("a", from_scores(&h, &s)).unwrap();
            let shift = |set: &ScoreSet| ScoreSet::new("b", set.trials().iter().map(|t| TrialScore { score: t.score + c, ..t.clone() }).collect()).unwrap();
            let fused = fuse(&[a.clone(), a.clone()]).unwrap();
            let fused_shift = fuse(&[shift(&a), shift(&a)]).unwrap();
            for (x, y) in fused.trials().iter().zip(fused_shift.trials()) {
                prop_assert!((x.score + c - y.score).abs() < 1e-12);
            }
            let e1 = eer(fused.trials()).unwrap();
            let e2 = eer(fused_shift.trials()).unwrap();
            prop_assert!((e1 - oracle_eer(&h, &s)).abs() < 1e-9);
            prop_assert!((e2 - oracle_eer(&h.iter().map(|x| x + c).collect::<Vec<_>>(), &s.iter().map(|x| x + c).collect::<Vec<_>>())).abs() < 1e-9);
        }
    }
}
