//! Truth alignment, {FPR, TPR} metrics, noise sweeps and run comparisons.
//!
//! FPR here is the false fraction of all detections, so a perfect run scores
//! `{fpr, tpr} = {0, 1}`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pipeline::{run_level, LevelOutcome, PipelineConfig};
use crate::synth::{load_manifest, read_truth_csv, verify_file, ManifestLevel, Recording, TruthEvent};
use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: u64 = 12;

/// A labeled detection; the label is the matcher's neuron label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledEvent {
    pub sample_index: u64,
    pub label: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub truth_total: u64,
}

/// Greedy chronological matching.
///
/// Each detection, in order, takes the nearest still-unmatched truth event
/// with the same label within `tolerance` samples (ties go to the earlier
/// one). A detection with no such truth is a false positive; its nearby
/// truth of another label stays available and is a false negative unless a
/// correctly labeled detection claims it.
pub fn align(truth: &[TruthEvent], decisions: &[LabeledEvent], tolerance: u64) -> Result<Counts> {
    if truth.windows(2).any(|w| w[0].sample_index > w[1].sample_index) {
        return Err(Error::Unsorted("truth"));
    }
    if decisions.windows(2).any(|w| w[0].sample_index > w[1].sample_index) {
        return Err(Error::Unsorted("decisions"));
    }
    let mut open: BTreeMap<u32, BTreeSet<(u64, usize)>> = BTreeMap::new();
    for (i, t) in truth.iter().enumerate() {
        open.entry(t.neuron_id).or_default().insert((t.sample_index, i));
    }
    let mut tp = 0u64;
    for d in decisions {
        let Some(set) = open.get_mut(&d.label) else { continue };
        let lo = d.sample_index.saturating_sub(tolerance);
        let hi = d.sample_index.saturating_add(tolerance);
        let best = set
            .range((lo, 0)..=(hi, usize::MAX))
            .min_by_key(|(s, i)| (s.abs_diff(d.sample_index), *s, *i))
            .copied();
        if let Some(k) = best {
            set.remove(&k);
            tp += 1;
        }
    }
    let n = truth.len() as u64;
    Ok(Counts {
        true_pos: tp,
        false_pos: decisions.len() as u64 - tp,
        false_neg: n - tp,
        truth_total: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: f64,
    pub fpr: f64,
    pub accuracy: f64,
    pub counts: Counts,
}

pub fn metrics(c: Counts) -> Metrics {
    let tpr = if c.truth_total == 0 { 0.0 } else { c.true_pos as f64 / c.truth_total as f64 };
    let detections = c.true_pos + c.false_pos;
    let fpr = if detections == 0 { 0.0 } else { c.false_pos as f64 / detections as f64 };
    Metrics { tpr, fpr, accuracy: tpr, counts: c }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level_db: f64,
    pub metrics: Metrics,
    /// Largest table serialization seen during the run, bits.
    pub max_table_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config_hash: String,
    pub dataset_seed: u64,
    pub detector_seed: u64,
    pub levels: Vec<LevelResult>,
}

impl SweepResult {
    pub fn grid(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.level_db).collect()
    }

    pub fn level(&self, level_db: f64) -> Option<&LevelResult> {
        self.levels.iter().find(|l| l.level_db == level_db)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::format("sweep csv", e.to_string());
        writeln!(w, "# config_hash={}", self.config_hash).map_err(io)?;
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::format("sweep csv", e.to_string());
        wr.write_record(["level_db", "tpr", "fpr", "accuracy", "tp", "fp", "fn", "truth_total"])
            .map_err(err)?;
        for l in &self.levels {
            let m = &l.metrics;
            wr.write_record([
                l.level_db.to_string(),
                format!("{:.6}", m.tpr),
                format!("{:.6}", m.fpr),
                format!("{:.6}", m.accuracy),
                m.counts.true_pos.to_string(),
                m.counts.false_pos.to_string(),
                m.counts.false_neg.to_string(),
                m.counts.truth_total.to_string(),
            ])
            .map_err(err)?;
        }
        wr.flush().map_err(io)?;
        Ok(())
    }

    /// Parses only the columns written by [`SweepResult::write_csv`].
    pub fn read_csv(text: &str) -> Result<SweepResult> {
        let bad = |r: String| Error::format("sweep csv", r);
        let mut lines = text.splitn(2, '\n');
        let first = lines.next().unwrap_or_default();
        let config_hash = first
            .strip_prefix("# config_hash=")
            .ok_or_else(|| bad("missing config_hash line".into()))?
            .trim()
            .to_string();
        let body = lines.next().unwrap_or_default();
        let mut rd = csv::Reader::from_reader(body.as_bytes());
        let mut levels = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let f = |i: usize| rec.get(i).ok_or_else(|| bad(format!("missing column {i}")));
            let num = |i: usize| -> Result<f64> { f(i)?.parse().map_err(|_| bad(format!("bad number in column {i}"))) };
            let int = |i: usize| -> Result<u64> { f(i)?.parse().map_err(|_| bad(format!("bad count in column {i}"))) };
            levels.push(LevelResult {
                level_db: num(0)?,
                metrics: Metrics {
                    tpr: num(1)?,
                    fpr: num(2)?,
                    accuracy: num(3)?,
                    counts: Counts {
                        true_pos: int(4)?,
                        false_pos: int(5)?,
                        false_neg: int(6)?,
                        truth_total: int(7)?,
                    },
                },
                max_table_bits: 0,
            });
        }
        Ok(SweepResult { config_hash, dataset_seed: 0, detector_seed: 0, levels })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format("sweep json", e.to_string()))
    }
}

/// Decodes one level after checking both file hashes.
pub fn load_level(dataset_dir: &Path, level: &ManifestLevel) -> Result<Recording> {
    let bytes = verify_file(dataset_dir, &level.recording)?;
    verify_file(dataset_dir, &level.truth)?;
    let mut rec = crate::synth::decode_recording(&bytes)?;
    rec.ground_truth = read_truth_csv(&dataset_dir.join(&level.truth.file))?;
    Ok(rec)
}

/// Runs the pipeline on one level of a dataset directory.
pub fn run_dataset_level(dataset_dir: &Path, level_db: f64, cfg: &PipelineConfig) -> Result<LevelOutcome> {
    let manifest = load_manifest(dataset_dir)?;
    let level = manifest
        .level(level_db)
        .ok_or_else(|| Error::config("level_db", format!("{level_db} dB not in the dataset grid")))?;
    let rec = load_level(dataset_dir, level)?;
    let scene = manifest.spec.build_scene()?;
    run_level(&scene, &manifest.spec, &rec, cfg)
}

/// Runs the pipeline on every level of a dataset directory.
pub fn sweep(dataset_dir: &Path, cfg: &PipelineConfig) -> Result<SweepResult> {
    let manifest = load_manifest(dataset_dir)?;
    let spec = manifest.spec.clone();
    let scene = spec.build_scene()?;
    let mut levels: Vec<_> = manifest.levels.clone();
    levels.sort_by(|a, b| a.level_db.total_cmp(&b.level_db));
    if levels.windows(2).any(|w| w[0].level_db == w[1].level_db) {
        return Err(Error::Integrity("duplicate level in manifest".into()));
    }
    let results: Vec<Result<LevelResult>> = levels
        .par_iter()
        .map(|l| {
            let rec = load_level(dataset_dir, l)?;
            let out = run_level(&scene, &spec, &rec, cfg)?;
            Ok(LevelResult {
                level_db: l.level_db,
                metrics: out.metrics,
                max_table_bits: out.max_table_bits,
            })
        })
        .collect();
    Ok(SweepResult {
        config_hash: cfg.hash()?,
        dataset_seed: spec.seed,
        detector_seed: cfg.detector_seed,
        levels: results.into_iter().collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub level_db: f64,
    /// `100 · (tpr_b − tpr_a) / tpr_a`.
    pub tpr_pct: Option<f64>,
    /// `100 · (fpr_a − fpr_b) / fpr_a`; positive means fewer false positives.
    pub fpr_reduction_pct: Option<f64>,
}

fn pct(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| 100.0 * num / den)
}

pub fn compare(a: &SweepResult, b: &SweepResult) -> Result<Vec<Delta>> {
    if a.grid() != b.grid() {
        return Err(Error::Comparison(format!("level grids differ: {:?} vs {:?}", a.grid(), b.grid())));
    }
    Ok(a.levels
        .iter()
        .zip(&b.levels)
        .map(|(x, y)| Delta {
            level_db: x.level_db,
            tpr_pct: pct(y.metrics.tpr - x.metrics.tpr, x.metrics.tpr),
            fpr_reduction_pct: pct(x.metrics.fpr - y.metrics.fpr, x.metrics.fpr),
        })
        .collect())
}

/// Header `level_db,delta_tpr_pct,fpr_reduction_pct`; undefined deltas are written as `undefined`.
pub fn write_deltas_csv<W: Write>(w: W, deltas: &[Delta]) -> Result<()> {
    let err = |e: csv::Error| Error::format("delta csv", e.to_string());
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["level_db", "delta_tpr_pct", "fpr_reduction_pct"]).map_err(err)?;
    let cell = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.3}"));
    for d in deltas {
        wr.write_record([d.level_db.to_string(), cell(d.tpr_pct), cell(d.fpr_reduction_pct)])
            .map_err(err)?;
    }
    wr.flush().map_err(|e| Error::format("delta csv", e.to_string()))?;
    Ok(())
}
