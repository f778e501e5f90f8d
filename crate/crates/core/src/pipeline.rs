//! One recording end to end: detect, merge, fingerprint, classify, align.

use serde::{Deserialize, Serialize};

use crate::detect::{detect_all, merge_cross_channel, DetectorConfig, SpikeEvent};
use crate::eval::{align, metrics, Counts, LabeledEvent, Metrics, DEFAULT_TOLERANCE};
use crate::fingerprint::{
    fine_fingerprint, global_fingerprint, quantize_fingerprint, Code, Fingerprint, NeighborWindow, MAX_LAG,
    MAX_NEIGHBORS, NEIGHBOR_SPAN,
};
use crate::matching::{distance, seed_population, Fplt, FpltConfig, MatchDecision, TrainReport};
use crate::neuromodel::{distance as geo_distance, NeuronScene};
use crate::synth::{attenuation, propagation_delay, DatasetSpec, Recording, TemplateBank};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub table: FpltConfig,
    /// Alignment tolerance, samples.
    pub tolerance: u64,
    /// Tips closer than this are merged when they fire together.
    pub merge_radius_um: f64,
    pub merge_window: usize,
    pub neighbor_radius_um: f64,
    pub detector_count: usize,
    pub detector_seed: u64,
    /// Events before this time feed detector training.
    pub train_window_s: f64,
    /// Pre-load the table with noise-free fingerprints of the active units.
    pub seed_table: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            table: FpltConfig::default(),
            tolerance: DEFAULT_TOLERANCE,
            merge_radius_um: 60.0,
            merge_window: 12,
            neighbor_radius_um: 36.0,
            detector_count: 30,
            detector_seed: 11,
            train_window_s: 1.0,
            seed_table: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.table.validate()?;
        if !(self.merge_radius_um >= 0.0) || !(self.neighbor_radius_um >= 0.0) {
            return Err(Error::config("merge_radius_um", "radii must be >= 0"));
        }
        if !(self.train_window_s >= 0.0) {
            return Err(Error::config("train_window_s", "must be >= 0"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let json = crate::canonical_json::to_string(self)?;
        Ok(crate::synth::sha256_hex(json.as_bytes()))
    }
}

#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub events: Vec<SpikeEvent>,
    pub fingerprints: Vec<Fingerprint>,
    pub decisions: Vec<MatchDecision>,
    pub labeled: Vec<LabeledEvent>,
    pub counts: Counts,
    pub metrics: Metrics,
    pub table: Fplt,
    pub train: TrainReport,
    pub max_table_bits: u64,
}

/// Neighbor slices `[start - 16, start + 80)` with `start = pivot - window_pre`.
fn neighbor_windows<'a>(
    channels: &'a [Vec<f64>],
    neighbors: &[usize],
    pivot: usize,
    window_pre: usize,
) -> Vec<NeighborWindow<'a>> {
    neighbors
        .iter()
        .map(|&c| {
            let lo = pivot.checked_sub(window_pre + MAX_LAG as usize)?;
            channels[c].get(lo..lo + NEIGHBOR_SPAN)
        })
        .collect()
}

fn fingerprint_event(
    event: &SpikeEvent,
    channels: &[Vec<f64>],
    neighbors: &[usize],
    history: &[usize],
    fs: u32,
    cfg: &DetectorConfig,
) -> Result<Fingerprint> {
    let fine = fine_fingerprint(event)?;
    let windows = neighbor_windows(channels, neighbors, event.pivot, cfg.window_pre);
    let global = global_fingerprint(event, &windows, history, fs);
    quantize_fingerprint(fine, global)
}

fn neighbor_table(scene: &NeuronScene, radius_um: f64) -> Vec<Vec<usize>> {
    (0..scene.tip_count())
        .map(|t| scene.adjacent_tips(t, radius_um, MAX_NEIGHBORS))
        .collect()
}

/// Noise-free fingerprint of every active unit, labeled by its tip index.
///
/// The rate field is the unit's nominal firing rate.
pub fn seed_fingerprints(scene: &NeuronScene, spec: &DatasetSpec, cfg: &PipelineConfig) -> Result<Vec<(u8, Fingerprint)>> {
    let bank = TemplateBank::default();
    let neighbors = neighbor_table(scene, cfg.neighbor_radius_um);
    let len = 512;
    let t0 = 128;
    let mut out = Vec::new();
    for unit in scene.active_units() {
        let node = scene.dominant(unit);
        let label = u8::try_from(node.id)
            .map_err(|_| Error::config("channels", format!("unit id {} does not fit a table label", node.id)))?;
        let template = bank.template(node.template_id as usize);
        let channels: Vec<Vec<f64>> = scene
            .tips
            .iter()
            .map(|tip| {
                let d = geo_distance(&node.position, tip);
                let mut x = vec![0.0; len];
                let start = t0 + propagation_delay(d);
                for (k, v) in template.iter().enumerate() {
                    x[start + k] += attenuation(d) * v;
                }
                x
            })
            .collect();
        let own = geo_distance(&node.position, &scene.tips[unit]);
        let pivot = t0 + propagation_delay(own) + bank.peak_offset(node.template_id as usize);
        let w = &cfg.detector;
        let event = SpikeEvent {
            channel: unit,
            pivot,
            window: channels[unit][pivot - w.window_pre..pivot + w.window_post].to_vec(),
            threshold_at_detect: 0.0,
        };
        let mut fp = fingerprint_event(&event, &channels, &neighbors[unit], &[], spec.fs, w)?;
        fp.global.rate = node.base_rate;
        fp = quantize_fingerprint(fp.fine, fp.global)?;
        out.push((label, fp));
    }
    Ok(out)
}

pub fn run_level(scene: &NeuronScene, spec: &DatasetSpec, rec: &Recording, cfg: &PipelineConfig) -> Result<LevelOutcome> {
    cfg.validate()?;
    if rec.channels != scene.tip_count() {
        return Err(Error::config("channels", format!("recording has {} channels, scene {} tips", rec.channels, scene.tip_count())));
    }
    let channels = rec.to_f64();
    let raw = detect_all(&channels, &cfg.detector)?;
    let adjacency: Vec<Vec<usize>> = (0..scene.tip_count())
        .map(|t| scene.adjacent_tips(t, cfg.merge_radius_um, usize::MAX))
        .collect();
    let events = merge_cross_channel(raw, &adjacency, cfg.merge_window, &cfg.detector);

    let mut history: Vec<Vec<usize>> = vec![Vec::new(); rec.channels];
    for e in &events {
        history[e.channel].push(e.pivot);
    }
    let neighbors = neighbor_table(scene, cfg.neighbor_radius_um);
    let mut fingerprints = Vec::with_capacity(events.len());
    for e in &events {
        let h = &history[e.channel];
        let upto = h.partition_point(|&p| p <= e.pivot);
        fingerprints.push(fingerprint_event(e, &channels, &neighbors[e.channel], &h[..upto], rec.fs, &cfg.detector)?);
    }

    let seeds: Vec<(u8, Code)> = if cfg.seed_table {
        seed_fingerprints(scene, spec, cfg)?.into_iter().map(|(l, f)| (l, f.code)).collect()
    } else {
        Vec::new()
    };
    let mut table = seed_population(cfg.table, &seeds)?;

    let train_end = (cfg.train_window_s * rec.fs as f64) as usize;
    let pool: Vec<Code> = events
        .iter()
        .zip(&fingerprints)
        .filter(|(e, _)| e.pivot < train_end)
        .map(|(_, f)| f.code)
        .filter(|c| seeds.iter().all(|(_, s)| distance(s, c) > cfg.table.theta_new))
        .collect();
    // With no self entries every detector would cover the whole code space.
    let train = if cfg.detector_count == 0 || table.entries.is_empty() {
        TrainReport { requested: 0, trained: 0, censored: 0, candidates: 0 }
    } else if pool.is_empty() {
        table.train_detectors(cfg.detector_count, cfg.detector_seed)
    } else {
        table.train_detectors_from(&pool, cfg.detector_count, cfg.detector_seed)
    };

    let mut max_table_bits = table.used_bits();
    let mut decisions = Vec::with_capacity(events.len());
    let mut labeled = Vec::new();
    for (e, f) in events.iter().zip(&fingerprints) {
        let d = table.classify(&f.code);
        max_table_bits = max_table_bits.max(table.used_bits());
        if let Some(label) = d.label() {
            labeled.push(LabeledEvent { sample_index: e.pivot as u64, label: label as u32 });
        }
        decisions.push(d);
    }
    let counts = align(&rec.ground_truth, &labeled, cfg.tolerance)?;
    Ok(LevelOutcome {
        events,
        fingerprints,
        decisions,
        labeled,
        counts,
        metrics: metrics(counts),
        table,
        train,
        max_table_bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuromodel::FractalSpec;
    use crate::synth::{render, NoiseModel};

    fn clean_spec() -> DatasetSpec {
        DatasetSpec {
            scene: FractalSpec { branching: 3, depth: 2, ..FractalSpec::default() },
            duration: 2.0,
            noise: NoiseModel::silent(),
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.tolerance = 13;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn seeds_are_distinct_units() {
        let spec = clean_spec();
        let scene = spec.build_scene().unwrap();
        let seeds = seed_fingerprints(&scene, &spec, &PipelineConfig::default()).unwrap();
        let labels: Vec<u8> = seeds.iter().map(|s| s.0).collect();
        assert_eq!(labels, vec![0, 3, 15]);
        for i in 0..seeds.len() {
            for j in i + 1..seeds.len() {
                assert!(distance(&seeds[i].1.code, &seeds[j].1.code) > 0.0);
            }
        }
    }

    #[test]
    fn clean_run_is_perfect() {
        let spec = clean_spec();
        let scene = spec.build_scene().unwrap();
        let rec = render(&scene, &spec, 0.0).unwrap();
        let out = run_level(&scene, &spec, &rec, &PipelineConfig::default()).unwrap();
        assert_eq!(out.metrics.tpr, 1.0, "{:?}", out.counts);
        assert_eq!(out.metrics.fpr, 0.0, "{:?}", out.counts);
    }
}
