//! Browser bindings for the demo page in `www/`.
//!
//! Each export returns a JSON string; the plain functions behind them are
//! callable (and tested) natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;
use zydeco::detect::{detect, DetectorConfig};
use zydeco::neuromodel::{Plasticity, SynapseState};
use zydeco::pipeline::{run_level, PipelineConfig};
use zydeco::synth::{render, DatasetSpec};

/// Longest recording the page may request, seconds.
const MAX_DURATION: f64 = 20.0;

fn spec(seed: u64, duration_s: f64, levels: Vec<f64>) -> Result<DatasetSpec, String> {
    if !(duration_s > 0.0 && duration_s <= MAX_DURATION) {
        return Err(format!("duration must be in (0, {MAX_DURATION}] s"));
    }
    Ok(DatasetSpec { seed, duration: duration_s, noise_levels_db: levels, ..DatasetSpec::default() })
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
pub struct Preview {
    pub fs: u32,
    pub channel: usize,
    pub samples: Vec<f32>,
    pub threshold: f64,
    pub truth: Vec<(u32, u32)>,
    pub detected: Vec<usize>,
}

/// One channel of a freshly rendered recording with truth spikes and detections.
pub fn preview(seed: u64, level_db: f64, duration_ms: f64, channel: usize) -> Result<Preview, String> {
    let spec = spec(seed, duration_ms / 1000.0, vec![level_db])?;
    if channel >= spec.channels {
        return Err(format!("channel {channel} out of range 0..{}", spec.channels));
    }
    let scene = spec.build_scene().map_err(|e| e.to_string())?;
    let rec = render(&scene, &spec, level_db).map_err(|e| e.to_string())?;
    let x = rec.channel_f64(channel);
    let cfg = DetectorConfig::default();
    let events = detect(channel, &x, &cfg).map_err(|e| e.to_string())?;
    let threshold = events.first().map_or(cfg.min_threshold, |e| e.threshold_at_detect);
    Ok(Preview {
        fs: rec.fs,
        channel,
        samples: x.iter().map(|&v| v as f32).collect(),
        threshold,
        truth: rec
            .ground_truth
            .iter()
            .filter(|t| t.channel as usize == channel)
            .map(|t| (t.sample_index as u32, t.neuron_id))
            .collect(),
        detected: events.iter().map(|e| e.pivot).collect(),
    })
}

#[derive(Serialize)]
pub struct Trajectory {
    pub omega: f64,
    pub tau: f64,
    pub t: Vec<f64>,
    pub euler: Vec<f64>,
    pub closed_form: Vec<f64>,
}

/// Synaptic weight under constant calcium, stepped and in closed form.
pub fn trajectory(w0: f64, calcium: f64, steps_per_tau: u32, horizon_tau: f64) -> Result<Trajectory, String> {
    let p = Plasticity::default();
    if !(0.0..=p.w_max).contains(&w0) || !(calcium >= 0.0) {
        return Err(format!("need 0 <= w0 <= {} and calcium >= 0", p.w_max));
    }
    if steps_per_tau < 10 || !(horizon_tau > 0.0 && horizon_tau <= 50.0) {
        return Err("need steps_per_tau >= 10 and horizon in (0, 50] tau".into());
    }
    let tau = p.tau(calcium);
    let dt = tau / steps_per_tau as f64;
    let n = (horizon_tau * steps_per_tau as f64).round() as usize;
    let stride = (n / 500).max(1);
    let mut s = SynapseState { w: w0, calcium, x_pre: 0.0, x_post: 0.0 };
    let mut out = Trajectory { omega: p.omega(calcium), tau, t: vec![0.0], euler: vec![w0], closed_form: vec![w0] };
    for i in 1..=n {
        s = p.step_weight(s, dt).map_err(|e| e.to_string())?;
        if i % stride == 0 || i == n {
            let t = i as f64 * dt;
            out.t.push(t);
            out.euler.push(s.w);
            out.closed_form.push(p.closed_form(w0, calcium, t));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
pub struct SweepRow {
    pub level_db: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub events: usize,
    pub truth: u64,
}

/// Full pipeline over the default noise grid on a short in-memory dataset.
pub fn noise_sweep(seed: u64, duration_s: f64) -> Result<Vec<SweepRow>, String> {
    let spec = spec(seed, duration_s, DatasetSpec::default().noise_levels_db)?;
    let scene = spec.build_scene().map_err(|e| e.to_string())?;
    let cfg = PipelineConfig::default();
    spec.noise_levels_db
        .iter()
        .map(|&level| {
            let rec = render(&scene, &spec, level).map_err(|e| e.to_string())?;
            let out = run_level(&scene, &spec, &rec, &cfg).map_err(|e| e.to_string())?;
            Ok(SweepRow {
                level_db: level,
                tpr: out.metrics.tpr,
                fpr: out.metrics.fpr,
                events: out.events.len(),
                truth: out.counts.truth_total,
            })
        })
        .collect()
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| json(&v)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = previewRecording)]
pub fn preview_recording(seed: u32, level_db: f64, duration_ms: f64, channel: u32) -> Result<String, JsValue> {
    to_js(preview(seed as u64, level_db, duration_ms, channel as usize))
}

#[wasm_bindgen(js_name = weightTrajectory)]
pub fn weight_trajectory(w0: f64, calcium: f64, steps_per_tau: u32, horizon_tau: f64) -> Result<String, JsValue> {
    to_js(trajectory(w0, calcium, steps_per_tau, horizon_tau))
}

#[wasm_bindgen(js_name = noiseSweep)]
pub fn noise_sweep_js(seed: u32, duration_s: f64) -> Result<String, JsValue> {
    to_js(noise_sweep(seed as u64, duration_s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preview_marks_truth_on_a_dominant_channel() {
        let p = preview(7, 0.0, 500.0, 0).unwrap();
        assert_eq!(p.samples.len(), 12_000);
        assert!(!p.truth.is_empty());
        for (idx, _) in &p.truth {
            assert!(p.detected.iter().any(|&d| (d as i64 - *idx as i64).abs() <= 12), "truth {idx} not detected");
        }
    }

    #[test]
    fn preview_rejects_bad_channel_and_duration() {
        assert!(preview(7, 0.0, 500.0, 16).is_err());
        assert!(preview(7, 0.0, 0.0, 0).is_err());
    }

    #[test]
    fn trajectory_ends_near_the_fixed_point() {
        let t = trajectory(0.0, 1.0, 1000, 8.0).unwrap();
        assert_eq!(t.t.len(), t.euler.len());
        let last = *t.euler.last().unwrap();
        assert!((last - t.omega).abs() < 1e-3);
        let (a, b) = (t.euler.last().unwrap(), t.closed_form.last().unwrap());
        assert!((a - b).abs() < 1e-3);
        assert!(trajectory(0.0, 1.0, 5, 1.0).is_err());
    }

    #[test]
    fn sweep_covers_the_grid() {
        let rows = noise_sweep(7, 1.0).unwrap();
        let levels: Vec<f64> = rows.iter().map(|r| r.level_db).collect();
        assert_eq!(levels, vec![0.0, 5.0, 7.0, 10.0]);
        assert!(rows[0].tpr > 0.8);
        assert!(json(&rows).unwrap().starts_with('['));
    }
}
