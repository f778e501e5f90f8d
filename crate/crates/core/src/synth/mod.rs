//! Ground-truthed multi-channel recording synthesis.
//!
//! A recording is the superposition of three independent components:
//!
//! 1. dominant-neuron spikes, unit-peak templates at renewal-process times,
//!    copied onto every channel with distance attenuation and delay;
//! 2. the surrounding-neuron field of each tip: ≈48,000 spikes/s with
//!    Normal(1, 0.2) amplitudes, attenuated by distance and by the synaptic
//!    weights along each neighbor's path to the dominant neuron;
//! 3. a white Gaussian floor with σ = 0.05 · 10^(level/20).
//!
//! Larger dB values mean more noise.

mod dataset;
mod format;

pub use dataset::{level_stem, load_manifest, sha256_hex, verify_file, write_dataset, DatasetFile, Manifest, ManifestLevel};
pub use format::{
    decode_recording, encode_recording, read_recording, read_truth_csv, write_recording, write_truth_csv,
    HEADER_LEN, MAGIC,
};

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::neuromodel::{build_scene_with, distance, FractalSpec, NeuronScene, SceneOptions};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

pub const DEFAULT_FS: u32 = 24_000;
pub const TEMPLATE_LEN: usize = 64;
/// Float value represented by `i16::MAX`, in unit-peak units.
pub const FULL_SCALE: f64 = 8.0;
/// Attenuation half-distance, µm.
pub const ATTENUATION_D0_UM: f64 = 25.0;
/// Distance covered per sample of propagation delay, µm.
pub const DELAY_QUANTUM_UM: f64 = 12.5;
pub const FLOOR_SIGMA_AT_0DB: f64 = 0.05;
/// Dominant spikes are kept this many samples away from the recording start.
pub const LEAD_MARGIN: usize = 64;
/// ... and this many samples (plus the unit's largest delay) from the end.
pub const TAIL_MARGIN: usize = 128;

/// `1 / (1 + (d/d₀)²)`.
pub fn attenuation(distance_um: f64) -> f64 {
    1.0 / (1.0 + (distance_um / ATTENUATION_D0_UM).powi(2))
}

/// `round(d / 12.5 µm)` samples.
pub fn propagation_delay(distance_um: f64) -> usize {
    (distance_um / DELAY_QUANTUM_UM).round() as usize
}

pub fn floor_sigma(level_db: f64) -> f64 {
    FLOOR_SIGMA_AT_0DB * 10f64.powf(level_db / 20.0)
}

pub fn quantize_sample(x: f64) -> i16 {
    (x / FULL_SCALE * i16::MAX as f64)
        .round()
        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn dequantize_sample(q: i16) -> f64 {
    q as f64 * FULL_SCALE / i16::MAX as f64
}

/// Biphasic spike shape: `g(t; rise, decay) / Σg − g(t; rise2, decay2) / Σg2`,
/// where `g(t) = e^(−t/decay) − e^(−t/rise)`, scaled to unit peak and given
/// `polarity`. The two lobes have equal area, so every template sums to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateShape {
    pub rise: f64,
    pub decay: f64,
    pub rebound_rise: f64,
    pub rebound_decay: f64,
    pub polarity: f64,
}

impl TemplateShape {
    pub fn render(&self, len: usize) -> Vec<f64> {
        let g = |rise: f64, decay: f64| -> Vec<f64> {
            let v: Vec<f64> = (0..len)
                .map(|t| (-(t as f64) / decay).exp() - (-(t as f64) / rise).exp())
                .collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        };
        let a = g(self.rise, self.decay);
        let b = g(self.rebound_rise, self.rebound_decay);
        let h: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let peak = h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        h.into_iter().map(|x| self.polarity * x / peak).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBank {
    templates: Vec<Vec<f64>>,
    peaks: Vec<usize>,
}

impl TemplateBank {
    pub const DEFAULT_SHAPES: [TemplateShape; 3] = [
        // narrow negative trough, slow small positive rebound
        TemplateShape { rise: 0.8, decay: 2.5, rebound_rise: 4.0, rebound_decay: 10.0, polarity: -1.0 },
        // wider positive peak, negative rebound
        TemplateShape { rise: 1.5, decay: 4.0, rebound_rise: 6.0, rebound_decay: 16.0, polarity: 1.0 },
        // brief positive peak, trough about half as deep
        TemplateShape { rise: 1.0, decay: 4.0, rebound_rise: 2.0, rebound_decay: 3.0, polarity: 1.0 },
    ];

    pub fn from_shapes(shapes: &[TemplateShape], len: usize) -> Self {
        let templates: Vec<Vec<f64>> = shapes.iter().map(|s| s.render(len)).collect();
        let peaks = templates.iter().map(|t| argmax_abs(t)).collect();
        Self { templates, peaks }
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn template(&self, id: usize) -> &[f64] {
        &self.templates[id % self.templates.len()]
    }

    /// Sample offset of the template extremum.
    pub fn peak_offset(&self, id: usize) -> usize {
        self.peaks[id % self.peaks.len()]
    }
}

impl Default for TemplateBank {
    fn default() -> Self {
        Self::from_shapes(&Self::DEFAULT_SHAPES, TEMPLATE_LEN)
    }
}

pub(crate) fn argmax_abs(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Surrounding-neuron spikes per second per tip.
    pub spike_rate: f64,
    pub amp_mean: f64,
    pub amp_std: f64,
    pub sphere_radius_um: f64,
    pub floor_enabled: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            spike_rate: crate::neuromodel::BACKGROUND_SPIKES_PER_TIP,
            amp_mean: 1.0,
            amp_std: 0.2,
            sphere_radius_um: 50.0,
            floor_enabled: true,
        }
    }
}

impl NoiseModel {
    /// Everything off: recordings contain dominant spikes only.
    pub fn silent() -> Self {
        Self {
            spike_rate: 0.0,
            floor_enabled: false,
            ..Self::default()
        }
    }

    /// Normal(amp_mean, amp_std) truncated to positive values by resampling.
    pub fn sample_amplitude<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.amp_std <= 0.0 {
            return self.amp_mean;
        }
        let normal = Normal::new(self.amp_mean, self.amp_std).expect("finite std");
        loop {
            let a = normal.sample(rng);
            if a > 0.0 {
                return a;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub scene: FractalSpec,
    pub geometry: SceneOptions,
    pub channels: usize,
    pub neuron_count: usize,
    pub duration: f64,
    pub fs: u32,
    pub noise_levels_db: Vec<f64>,
    pub noise: NoiseModel,
    /// Absolute refractory period of dominant neurons, seconds.
    pub refractory_s: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            scene: FractalSpec::default(),
            geometry: SceneOptions::default(),
            channels: 16,
            neuron_count: 3,
            duration: 10.0,
            fs: DEFAULT_FS,
            noise_levels_db: vec![0.0, 5.0, 7.0, 10.0],
            noise: NoiseModel::default(),
            refractory_s: 0.002,
            seed: 7,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.channels == 0 {
            return Err(Error::config("channels", "must be >= 1"));
        }
        if self.neuron_count < 1 || self.neuron_count > self.channels {
            return Err(Error::config(
                "neuron_count",
                format!("{} not in [1, {}]", self.neuron_count, self.channels),
            ));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::config("duration", "must be > 0"));
        }
        if self.fs == 0 {
            return Err(Error::config("fs", "must be > 0"));
        }
        if self.noise_levels_db.is_empty() {
            return Err(Error::config("noise_levels_db", "must be non-empty"));
        }
        for &l in &self.noise_levels_db {
            if !l.is_finite() || (l * 100.0).round().abs() > i16::MAX as f64 {
                return Err(Error::config("noise_levels_db", format!("{l} dB not representable")));
            }
        }
        if !(self.noise.spike_rate >= 0.0) || !(self.noise.amp_std >= 0.0) {
            return Err(Error::config("noise", "rate and std must be >= 0"));
        }
        if !(self.refractory_s >= 0.0) || self.refractory_s * self.geometry.dominant_rate_hz >= 1.0 {
            return Err(Error::config("refractory_s", "must be in [0, 1/rate)"));
        }
        self.sample_count()?;
        Ok(())
    }

    /// `round(duration · fs)`, rejected when it does not fit the index types.
    pub fn sample_count(&self) -> Result<usize> {
        let t = (self.duration * self.fs as f64).round();
        if !(t < u32::MAX as f64) {
            return Err(Error::Size(format!("{t} samples exceeds u32 index range")));
        }
        let t = t as usize;
        t.checked_mul(self.channels)
            .ok_or_else(|| Error::Size("channels x samples overflows".into()))?;
        Ok(t)
    }

    pub fn build_scene(&self) -> Result<NeuronScene> {
        let options = SceneOptions {
            active_units: Some(self.neuron_count),
            sphere_radius_um: self.noise.sphere_radius_um,
            background_rate_per_tip: self.noise.spike_rate,
            ..self.geometry.clone()
        };
        build_scene_with(self.scene, self.channels, &options)
    }

    fn level_index(&self, level_db: f64) -> Result<usize> {
        self.noise_levels_db
            .iter()
            .position(|&l| l == level_db)
            .ok_or_else(|| Error::config("level_db", format!("{level_db} dB not in the dataset grid")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TruthEvent {
    pub neuron_id: u32,
    pub channel: u16,
    pub sample_index: u64,
}

/// Channel-major i16 samples plus the dominant-spike ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub fs: u32,
    pub noise_level_db: f64,
    pub channels: usize,
    pub samples: Vec<i16>,
    pub ground_truth: Vec<TruthEvent>,
}

impl Recording {
    pub fn len(&self) -> usize {
        if self.channels == 0 {
            0
        } else {
            self.samples.len() / self.channels
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[i16] {
        let t = self.len();
        &self.samples[c * t..(c + 1) * t]
    }

    pub fn channel_f64(&self, c: usize) -> Vec<f64> {
        self.channel(c).iter().map(|&q| dequantize_sample(q)).collect()
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        (0..self.channels).map(|c| self.channel_f64(c)).collect()
    }
}

/// Float channel-major signal, `channels × samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub channels: usize,
    pub samples: usize,
    pub data: Vec<f64>,
}

impl Signal {
    pub fn zeros(channels: usize, samples: usize) -> Self {
        Self {
            channels,
            samples,
            data: vec![0.0; channels * samples],
        }
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.samples..(c + 1) * self.samples]
    }

    fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.samples..(c + 1) * self.samples]
    }

    pub fn add(&mut self, other: &Signal) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn quantize(&self) -> Vec<i16> {
        self.data.iter().map(|&x| quantize_sample(x)).collect()
    }
}

fn add_template(dst: &mut [f64], start: usize, template: &[f64], gain: f64) {
    if start >= dst.len() {
        return;
    }
    let n = template.len().min(dst.len() - start);
    for (d, t) in dst[start..start + n].iter_mut().zip(&template[..n]) {
        *d += gain * t;
    }
}

pub struct NoiseField {
    pub signal: Signal,
    /// Surrounding-neuron events drawn per tip.
    pub events_per_tip: Vec<u64>,
}

/// Renders the components of a dataset's recordings.
pub struct Renderer<'a> {
    scene: &'a NeuronScene,
    spec: &'a DatasetSpec,
    bank: TemplateBank,
    samples: usize,
}

impl<'a> Renderer<'a> {
    pub fn new(scene: &'a NeuronScene, spec: &'a DatasetSpec) -> Result<Self> {
        spec.validate()?;
        if scene.tip_count() != spec.channels {
            return Err(Error::config(
                "channels",
                format!("scene has {} tips, spec {} channels", scene.tip_count(), spec.channels),
            ));
        }
        Ok(Self {
            scene,
            spec,
            bank: TemplateBank::default(),
            samples: spec.sample_count()?,
        })
    }

    pub fn bank(&self) -> &TemplateBank {
        &self.bank
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Spike emission times of one dominant unit, in samples.
    pub fn spike_train(&self, unit: usize) -> Vec<usize> {
        let node = self.scene.dominant(unit);
        if node.base_rate <= 0.0 {
            return Vec::new();
        }
        let fs = self.spec.fs as f64;
        let max_delay = self.delays(unit).into_iter().max().unwrap_or(0);
        let last = self.samples.saturating_sub(TAIL_MARGIN + max_delay + TEMPLATE_LEN);
        let refractory = self.spec.refractory_s;
        // mean ISI stays 1/rate once the dead time is added back
        let exp = Exp::new(1.0 / (1.0 / node.base_rate - refractory)).expect("positive rate");
        let mut rng = stream_rng(self.spec.seed, Stream::DominantTrain, unit as u64);
        let mut t = LEAD_MARGIN as f64 / fs + exp.sample(&mut rng);
        let mut out = Vec::new();
        loop {
            let idx = (t * fs).round() as usize;
            if idx >= last {
                break;
            }
            out.push(idx);
            t += refractory + exp.sample(&mut rng);
        }
        out
    }

    fn delays(&self, unit: usize) -> Vec<usize> {
        let pos = self.scene.dominant(unit).position;
        self.scene
            .tips
            .iter()
            .map(|tip| propagation_delay(distance(&pos, tip)))
            .collect()
    }

    /// Spikes of the given dominant units on every channel, plus their truth.
    pub fn dominant(&self, units: &[usize]) -> (Signal, Vec<TruthEvent>) {
        let mut sig = Signal::zeros(self.spec.channels, self.samples);
        let mut truth = Vec::new();
        for &u in units {
            let node = self.scene.dominant(u);
            let template = self.bank.template(node.template_id as usize);
            let peak = self.bank.peak_offset(node.template_id as usize);
            let gains: Vec<f64> = self
                .scene
                .tips
                .iter()
                .map(|tip| attenuation(distance(&node.position, tip)))
                .collect();
            let delays = self.delays(u);
            for t in self.spike_train(u) {
                for c in 0..self.spec.channels {
                    add_template(sig.channel_mut(c), t + delays[c], template, gains[c]);
                }
                truth.push(TruthEvent {
                    neuron_id: node.id,
                    channel: node.tip,
                    sample_index: (t + delays[u] + peak) as u64,
                });
            }
        }
        truth.sort_by_key(|e| (e.sample_index, e.neuron_id));
        (sig, truth)
    }

    /// Surrounding-neuron activity; each tip's neighbors are rendered onto that tip's channel.
    pub fn neighbor_field(&self) -> NoiseField {
        let mut sig = Signal::zeros(self.spec.channels, self.samples);
        let mut events_per_tip = vec![0u64; self.spec.channels];
        let noise = &self.spec.noise;
        if noise.spike_rate <= 0.0 || self.samples == 0 {
            return NoiseField { signal: sig, events_per_tip };
        }
        let rates = crate::neuromodel::activity_rates(self.scene, self.spec.duration)
            .expect("duration validated");
        for tip in 0..self.spec.channels {
            let mut rng = stream_rng(self.spec.seed, Stream::NeighborNoise, tip as u64);
            let tip_pos = self.scene.tips[tip];
            let dst = sig.channel_mut(tip);
            for node in self.scene.nodes.iter().filter(|n| n.tip as usize == tip && n.ring > 0) {
                let expected = rates[node.id as usize];
                if expected <= 0.0 {
                    continue;
                }
                let count = Poisson::new(expected).expect("positive mean").sample(&mut rng) as u64;
                events_per_tip[tip] += count;
                let d = distance(&node.position, &tip_pos);
                let gain = attenuation(d) * self.scene.path_weight(node.id);
                let delay = propagation_delay(d);
                let template = self.bank.template(node.template_id as usize);
                for _ in 0..count {
                    let t = rng.random_range(0..self.samples);
                    let a = noise.sample_amplitude(&mut rng);
                    add_template(dst, t + delay, template, a * gain);
                }
            }
        }
        NoiseField { signal: sig, events_per_tip }
    }

    /// White Gaussian floor for one grid level (zero when disabled).
    pub fn floor(&self, level_db: f64) -> Result<Signal> {
        let index = self.spec.level_index(level_db)?;
        let mut sig = Signal::zeros(self.spec.channels, self.samples);
        if !self.spec.noise.floor_enabled {
            return Ok(sig);
        }
        let normal = Normal::new(0.0, floor_sigma(level_db)).expect("finite sigma");
        for c in 0..self.spec.channels {
            let mut rng = stream_rng(
                self.spec.seed,
                Stream::Floor,
                (index as u64) << 32 | c as u64,
            );
            for x in sig.channel_mut(c) {
                *x = normal.sample(&mut rng);
            }
        }
        Ok(sig)
    }

    pub fn compose(&self, parts: &[&Signal], level_db: f64, truth: Vec<TruthEvent>) -> Recording {
        let mut total = Signal::zeros(self.spec.channels, self.samples);
        for p in parts {
            total.add(p);
        }
        Recording {
            fs: self.spec.fs,
            noise_level_db: level_db,
            channels: self.spec.channels,
            samples: total.quantize(),
            ground_truth: truth,
        }
    }
}

/// Renders one grid level of a dataset.
pub fn render(scene: &NeuronScene, spec: &DatasetSpec, level_db: f64) -> Result<Recording> {
    let r = Renderer::new(scene, spec)?;
    spec.level_index(level_db)?;
    let (dom, truth) = r.dominant(&scene.active_units());
    let field = r.neighbor_field();
    let floor = r.floor(level_db)?;
    Ok(r.compose(&[&dom, &field.signal, &floor], level_db, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> DatasetSpec {
        DatasetSpec {
            scene: FractalSpec { branching: 2, depth: 2, scale: 0.5, seed: 1 },
            channels: 4,
            neuron_count: 1,
            duration: 0.5,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn attenuation_examples() {
        assert_eq!(attenuation(0.0), 1.0);
        assert!((attenuation(25.0) - 0.5).abs() < 1e-15);
        assert!((attenuation(50.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn delay_examples() {
        assert_eq!(propagation_delay(0.0), 0);
        assert_eq!(propagation_delay(50.0), 4);
        assert_eq!(propagation_delay(30.0), 2);
    }

    #[test]
    fn templates_unit_peak_zero_sum() {
        let bank = TemplateBank::default();
        assert_eq!(bank.len(), 3);
        for id in 0..bank.len() {
            let t = bank.template(id);
            assert_eq!(t.len(), TEMPLATE_LEN);
            let peak = t.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!((peak - 1.0).abs() < 1e-12);
            assert!(t.iter().sum::<f64>().abs() < 1e-12);
            assert_eq!(t[bank.peak_offset(id)].abs(), peak);
            // tails must stay below the detector floor once the refractory window has passed
            let tail = t[bank.peak_offset(id) + 24..].iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(tail < 0.2, "template {id} tail {tail}");
        }
    }

    #[test]
    fn amplitude_resampling_positive() {
        let m = NoiseModel { amp_std: 2.0, ..NoiseModel::default() };
        let mut rng = stream_rng(3, Stream::Amplitudes, 0);
        for _ in 0..10_000 {
            assert!(m.sample_amplitude(&mut rng) > 0.0);
        }
    }

    #[test]
    fn quantization_round_trip_half_lsb() {
        let lsb = FULL_SCALE / i16::MAX as f64;
        for i in -1000..1000 {
            let x = i as f64 * 0.00731;
            assert!((dequantize_sample(quantize_sample(x)) - x).abs() <= lsb / 2.0 + 1e-15);
        }
    }

    #[test]
    fn single_spike_noise_free() {
        let spec = DatasetSpec { noise: NoiseModel::silent(), ..small_spec() };
        let scene = spec.build_scene().unwrap();
        let rec = render(&scene, &spec, 0.0).unwrap();
        let r = Renderer::new(&scene, &spec).unwrap();
        let train = r.spike_train(0);
        assert!(!train.is_empty());
        assert_eq!(rec.ground_truth.len(), train.len());

        // reconstruct the first spike by hand on every channel
        let node = scene.dominant(0);
        let template = r.bank().template(node.template_id as usize);
        let t0 = train[0];
        for c in 0..spec.channels {
            let d = distance(&node.position, &scene.tips[c]);
            let start = t0 + propagation_delay(d);
            let ch = rec.channel_f64(c);
            for (k, &v) in template.iter().enumerate().take(20) {
                let expect = attenuation(d) * v;
                if train.get(1).map_or(true, |&t1| start + k < t1) {
                    assert!((ch[start + k] - expect).abs() < 2e-4, "ch {c} k {k}");
                }
            }
        }
        let first = rec.ground_truth[0];
        assert_eq!(first.channel, 0);
        let ch0 = rec.channel_f64(0);
        let pk = first.sample_index as usize;
        assert!(ch0[pk].abs() >= ch0[pk - 3..pk + 3].iter().fold(0.0f64, |m, x| m.max(x.abs())));
    }

    #[test]
    fn truth_sorted_in_range() {
        let spec = DatasetSpec { neuron_count: 3, channels: 4, ..small_spec() };
        let scene = spec.build_scene().unwrap();
        let rec = render(&scene, &spec, 5.0).unwrap();
        assert!(rec.ground_truth.windows(2).all(|w| w[0].sample_index <= w[1].sample_index));
        assert!(rec.ground_truth.iter().all(|e| (e.sample_index as usize) < rec.len()));
        assert_eq!(rec.len(), 12_000);
    }

    #[test]
    fn level_must_be_in_grid() {
        let spec = small_spec();
        let scene = spec.build_scene().unwrap();
        assert!(matches!(render(&scene, &spec, 3.0), Err(Error::Config { field: "level_db", .. })));
    }

    #[test]
    fn oversize_rejected() {
        let spec = DatasetSpec { duration: 1e6, ..small_spec() };
        assert!(matches!(spec.sample_count(), Err(Error::Size(_))));
    }

    #[test]
    fn floor_level_scaling() {
        let spec = DatasetSpec { noise_levels_db: vec![0.0, 10.0], duration: 1.0, channels: 1, ..small_spec() };
        let scene = spec.build_scene().unwrap();
        let r = Renderer::new(&scene, &spec).unwrap();
        for (l, s) in [(0.0, 0.05), (10.0, 0.05 * 10f64.sqrt())] {
            let f = r.floor(l).unwrap();
            let var = f.data.iter().map(|x| x * x).sum::<f64>() / f.data.len() as f64;
            assert!((var.sqrt() / s - 1.0).abs() < 0.02);
        }
    }
}
