//! Adaptive-threshold spike detection and pivot alignment.
//!
//! The threshold is `max(k · σ̂, min_threshold)` with `σ̂ = median(|x|)/0.6745`
//! re-estimated per `mad_block` samples. Detection works on `|x|` so both
//! polarities trigger.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Minimum samples for a σ̂ estimate.
pub const MIN_BLOCK: usize = 64;
const MAD_SCALE: f64 = 0.6745;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub k: f64,
    pub window_pre: usize,
    pub window_post: usize,
    pub refractory: usize,
    pub mad_block: usize,
    /// Absolute lower bound on the threshold, in unit-peak units.
    pub min_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            k: 4.0,
            window_pre: 20,
            window_post: 44,
            refractory: 24,
            mad_block: 4096,
            min_threshold: 0.25,
        }
    }
}

impl DetectorConfig {
    pub fn window_len(&self) -> usize {
        self.window_pre + self.window_post
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len() != crate::fingerprint::WINDOW {
            return Err(Error::config(
                "window_pre",
                format!("window_pre + window_post must be {}", crate::fingerprint::WINDOW),
            ));
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::config("k", "must be > 0"));
        }
        if self.refractory < 1 {
            return Err(Error::config("refractory", "must be >= 1"));
        }
        if self.mad_block < MIN_BLOCK {
            return Err(Error::config("mad_block", format!("must be >= {MIN_BLOCK}")));
        }
        if !(self.min_threshold >= 0.0) {
            return Err(Error::config("min_threshold", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub channel: usize,
    pub pivot: usize,
    /// Samples `[pivot - window_pre, pivot + window_post)`.
    pub window: Vec<f64>,
    pub threshold_at_detect: f64,
}

impl SpikeEvent {
    pub fn peak(&self, cfg: &DetectorConfig) -> f64 {
        self.window[cfg.window_pre]
    }
}

/// `median(|x|) / 0.6745`.
pub fn noise_sigma(block: &[f64]) -> Result<f64> {
    if block.len() < MIN_BLOCK {
        return Err(Error::BlockTooShort {
            len: block.len(),
            min: MIN_BLOCK,
        });
    }
    let mut a: Vec<f64> = block.iter().map(|x| x.abs()).collect();
    let n = a.len();
    let mid = n / 2;
    let (lo, &mut hi, _) = a.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if n % 2 == 1 {
        hi
    } else {
        let below = lo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (below + hi) / 2.0
    };
    Ok(median / MAD_SCALE)
}

/// Threshold for every block; a trailing block shorter than [`MIN_BLOCK`]
/// reuses the previous estimate.
fn block_thresholds(x: &[f64], cfg: &DetectorConfig) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut last = None;
    for block in x.chunks(cfg.mad_block) {
        let sigma = match (noise_sigma(block), last) {
            (Ok(s), _) => s,
            (Err(_), Some(s)) => s,
            (Err(e), None) => return Err(e),
        };
        last = Some(sigma);
        out.push((cfg.k * sigma).max(cfg.min_threshold));
    }
    Ok(out)
}

fn argmax_abs_in(x: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for i in lo..hi {
        if x[i].abs() > x[best].abs() {
            best = i;
        }
    }
    best
}

/// Detects spikes on one channel.
///
/// Streams shorter than `mad_block` are estimated as a single block.
pub fn detect(channel: usize, x: &[f64], cfg: &DetectorConfig) -> Result<Vec<SpikeEvent>> {
    cfg.validate()?;
    let thresholds = block_thresholds(x, cfg)?;
    let n = x.len();
    let mut events: Vec<SpikeEvent> = Vec::new();
    let mut next_open = 0usize;
    let mut i = 0usize;
    while i < n {
        let t = thresholds[i / cfg.mad_block];
        if i < next_open || x[i].abs() <= t {
            i += 1;
            continue;
        }
        let mut p = argmax_abs_in(x, i, (i + cfg.window_post).min(n));
        // climb until the pivot dominates its own window
        loop {
            let lo = p.saturating_sub(cfg.window_pre);
            let hi = (p + cfg.window_post).min(n);
            let q = argmax_abs_in(x, lo, hi);
            if x[q].abs() > x[p].abs() {
                p = q;
            } else {
                break;
            }
        }
        next_open = p + cfg.refractory;
        let spaced = events.last().map_or(true, |e| p >= e.pivot + cfg.refractory);
        if spaced && p >= cfg.window_pre && p + cfg.window_post <= n {
            events.push(SpikeEvent {
                channel,
                pivot: p,
                window: x[p - cfg.window_pre..p + cfg.window_post].to_vec(),
                threshold_at_detect: t,
            });
        }
        i = (i + 1).max(next_open);
    }
    Ok(events)
}

/// Runs [`detect`] on every channel in parallel; output sorted by (pivot, channel).
pub fn detect_all(channels: &[Vec<f64>], cfg: &DetectorConfig) -> Result<Vec<SpikeEvent>> {
    let per: Vec<Result<Vec<SpikeEvent>>> = channels
        .par_iter()
        .enumerate()
        .map(|(c, x)| detect(c, x, cfg))
        .collect();
    let mut all = Vec::new();
    for r in per {
        all.extend(r?);
    }
    all.sort_by_key(|e| (e.pivot, e.channel));
    Ok(all)
}

/// Collapses one spike seen on several tips into the event with the largest peak.
///
/// Events are visited by decreasing `|peak|`; each kept event suppresses
/// events on its adjacent channels within `max_offset` samples. The result
/// is sorted by (pivot, channel).
pub fn merge_cross_channel(
    events: Vec<SpikeEvent>,
    adjacency: &[Vec<usize>],
    max_offset: usize,
    cfg: &DetectorConfig,
) -> Vec<SpikeEvent> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| {
        events[b]
            .peak(cfg)
            .abs()
            .total_cmp(&events[a].peak(cfg).abs())
            .then(events[a].pivot.cmp(&events[b].pivot))
            .then(events[a].channel.cmp(&events[b].channel))
    });
    // per channel, pivots of kept events (sorted) for range lookups
    let channels = adjacency.len().max(events.iter().map(|e| e.channel + 1).max().unwrap_or(0));
    let mut kept_by_channel: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); channels];
    let mut keep = vec![false; events.len()];
    for idx in order {
        let e = &events[idx];
        let lo = e.pivot.saturating_sub(max_offset);
        let hi = e.pivot + max_offset;
        let suppressed = adjacency
            .get(e.channel)
            .into_iter()
            .flatten()
            .any(|&c| kept_by_channel[c].range(lo..=hi).next().is_some());
        if !suppressed {
            keep[idx] = true;
            kept_by_channel[e.channel].insert(e.pivot);
        }
    }
    let mut out: Vec<SpikeEvent> = events
        .into_iter()
        .zip(keep)
        .filter_map(|(e, k)| k.then_some(e))
        .collect();
    out.sort_by_key(|e| (e.pivot, e.channel));
    out
}

/// Header `channel,pivot,threshold`.
pub fn write_events_csv<W: Write>(w: W, events: &[SpikeEvent]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::format("event csv", e.to_string());
    wr.write_record(["channel", "pivot", "threshold"]).map_err(err)?;
    for e in events {
        wr.write_record([
            e.channel.to_string(),
            e.pivot.to_string(),
            format!("{:.6e}", e.threshold_at_detect),
        ])
        .map_err(err)?;
    }
    wr.flush().map_err(|e| Error::format("event csv", e.to_string()))?;
    Ok(())
}
