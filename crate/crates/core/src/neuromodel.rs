//! Fractal surrounding-neuron scene and calcium-dependent synaptic weights.
//!
//! Each electrode tip owns a dominant (ring-0) neuron sitting next to the tip
//! and a self-similar tree of neighbors: `branching` ring-1 neurons inside the
//! 50 µm noise sphere, each with `branching` ring-2 children on a ring of
//! radius `scale · 50 µm`, and so on to `depth`. Every parent→child edge is a
//! synapse whose weight follows
//!
//! ```text
//! dW/dt = (Ω(c) − W) / τ(c)
//! ```
//!
//! and the product of weights along a neighbor's path to the dominant neuron
//! sets how strongly its spikes couple into the tip's channel.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

pub type Point3 = [f64; 3];

/// Aggregate surrounding-neuron activity per tip, spikes/s.
pub const BACKGROUND_SPIKES_PER_TIP: f64 = 48_000.0;

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FractalSpec {
    pub branching: usize,
    pub depth: usize,
    pub scale: f64,
    pub seed: u64,
}

impl Default for FractalSpec {
    fn default() -> Self {
        Self {
            branching: 6,
            depth: 3,
            scale: 0.5,
            seed: 0,
        }
    }
}

impl FractalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.branching < 1 {
            return Err(Error::config("branching", "must be >= 1"));
        }
        if self.depth < 1 {
            return Err(Error::config("depth", "must be >= 1"));
        }
        if !(self.scale > 0.0 && self.scale < 1.0) {
            return Err(Error::config("scale", format!("{} not in (0, 1)", self.scale)));
        }
        Ok(())
    }

    /// Neurons per tip, dominant included: Σ_{k=0..depth} M^k.
    pub fn nodes_per_tip(&self) -> usize {
        (0..=self.depth).map(|k| self.branching.pow(k as u32)).sum()
    }
}

/// Calcium-to-weight laws. `Ω(c) = w_max · c / (c + c_half)`, `τ(c) = τ₀ / (1 + c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Plasticity {
    pub w_max: f64,
    pub c_half: f64,
    pub tau0: f64,
}

impl Default for Plasticity {
    fn default() -> Self {
        Self {
            w_max: 1.0,
            c_half: 0.5,
            tau0: 1.0,
        }
    }
}

impl Plasticity {
    pub fn omega(&self, calcium: f64) -> f64 {
        self.w_max * calcium / (calcium + self.c_half)
    }

    pub fn tau(&self, calcium: f64) -> f64 {
        self.tau0 / (1.0 + calcium)
    }

    /// Calcium level whose fixed point is `w`, for `0 <= w < w_max`.
    pub fn calcium_for_weight(&self, w: f64) -> f64 {
        self.c_half * w / (self.w_max - w)
    }

    /// Closed-form solution at constant calcium: `Ω + (W₀ − Ω)·e^(−t/τ)`.
    pub fn closed_form(&self, w0: f64, calcium: f64, t: f64) -> f64 {
        let omega = self.omega(calcium);
        omega + (w0 - omega) * (-t / self.tau(calcium)).exp()
    }

    /// One explicit Euler step of the weight ODE, clamped to `[0, w_max]`.
    ///
    /// `dt` must satisfy `0 < dt <= τ(c)/10`.
    pub fn step_weight(&self, s: SynapseState, dt: f64) -> Result<SynapseState> {
        let tau = self.tau(s.calcium);
        let max = tau / 10.0;
        if !(dt > 0.0 && dt <= max) {
            return Err(Error::StepSize { dt, max });
        }
        let w = s.w + dt * (self.omega(s.calcium) - s.w) / tau;
        Ok(SynapseState {
            w: w.clamp(0.0, self.w_max),
            ..s
        })
    }

    /// Hebbian increment applied on top of the ODE state, clamped.
    pub fn apply_hebbian(&self, s: SynapseState, rate: f64) -> SynapseState {
        let w = s.w + rate * hebbian_delta(s.x_pre, s.x_post);
        SynapseState {
            w: w.clamp(0.0, self.w_max),
            ..s
        }
    }
}

/// `Δw_ij = x_i · x_j`.
pub fn hebbian_delta(x_pre: f64, x_post: f64) -> f64 {
    x_pre * x_post
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynapseState {
    pub w: f64,
    pub calcium: f64,
    pub x_pre: f64,
    pub x_post: f64,
}

impl SynapseState {
    pub fn at_rest(plasticity: &Plasticity, calcium: f64) -> Self {
        Self {
            w: plasticity.omega(calcium),
            calcium: calcium.max(0.0),
            x_pre: 0.0,
            x_post: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronNode {
    pub id: u32,
    pub tip: u16,
    pub parent: Option<u32>,
    pub position: Point3,
    pub ring: u8,
    pub template_id: u16,
    pub base_rate: f64,
}

/// The edge from `parent` to `child`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synapse {
    pub parent: u32,
    pub child: u32,
    pub state: SynapseState,
}

/// Geometry and activity knobs that are not part of the fractal itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneOptions {
    pub pitch_um: f64,
    pub sphere_radius_um: f64,
    pub ring1_jitter_um: f64,
    pub dominant_offset_um: f64,
    pub dominant_rate_hz: f64,
    /// Number of dominant neurons that fire; `None` means all tips.
    pub active_units: Option<usize>,
    pub background_rate_per_tip: f64,
    pub edge_calcium: f64,
    pub template_count: u16,
    pub plasticity: Plasticity,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self {
            pitch_um: 25.0,
            sphere_radius_um: 50.0,
            ring1_jitter_um: 10.0,
            dominant_offset_um: 5.0,
            dominant_rate_hz: 20.0,
            active_units: None,
            background_rate_per_tip: BACKGROUND_SPIKES_PER_TIP,
            edge_calcium: 1.0,
            template_count: 3,
            plasticity: Plasticity::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronScene {
    pub spec: FractalSpec,
    pub options: SceneOptions,
    pub tips: Vec<Point3>,
    /// Ring-0 nodes first (id = tip index), then each tip's tree breadth-first.
    pub nodes: Vec<NeuronNode>,
    pub synapses: Vec<Synapse>,
}

pub fn build_scene(spec: FractalSpec, tip_count: usize) -> Result<NeuronScene> {
    build_scene_with(spec, tip_count, &SceneOptions::default())
}

pub fn build_scene_with(
    spec: FractalSpec,
    tip_count: usize,
    options: &SceneOptions,
) -> Result<NeuronScene> {
    spec.validate()?;
    if tip_count < 1 {
        return Err(Error::config("tip_count", "must be >= 1"));
    }
    if tip_count > u16::MAX as usize {
        return Err(Error::config("tip_count", "exceeds 65535"));
    }
    if options.ring1_jitter_um < 0.0 || options.ring1_jitter_um > options.sphere_radius_um {
        return Err(Error::config("ring1_jitter_um", "must lie in [0, sphere radius]"));
    }
    if options.dominant_offset_um < 0.0 || options.dominant_offset_um > options.sphere_radius_um {
        return Err(Error::config("dominant_offset_um", "must lie in [0, sphere radius]"));
    }
    if options.template_count == 0 {
        return Err(Error::config("template_count", "must be >= 1"));
    }
    let active = options.active_units.unwrap_or(tip_count);
    if active > tip_count {
        return Err(Error::config(
            "active_units",
            format!("{active} exceeds tip count {tip_count}"),
        ));
    }
    let total = tip_count
        .checked_mul(spec.nodes_per_tip())
        .filter(|n| *n <= u32::MAX as usize)
        .ok_or_else(|| Error::config("depth", "scene too large"))?;

    let tips = grid_tips(tip_count, options.pitch_um);
    let order = farthest_point_order(&tips);
    let mut rank = vec![0usize; tip_count];
    for (r, &t) in order.iter().enumerate() {
        rank[t] = r;
    }

    let mut nodes = Vec::with_capacity(total);
    let mut synapses = Vec::with_capacity(total - tip_count);
    let mut rng = stream_rng(spec.seed, Stream::Scene, 0);

    for (t, tip) in tips.iter().enumerate() {
        let offset = random_direction(&mut rng);
        let r = rng.random::<f64>() * options.dominant_offset_um;
        let firing = rank[t] < active;
        nodes.push(NeuronNode {
            id: t as u32,
            tip: t as u16,
            parent: None,
            position: add(tip, &scaled(&offset, r)),
            ring: 0,
            template_id: (rank[t] % options.template_count as usize) as u16,
            base_rate: if firing { options.dominant_rate_hz } else { 0.0 },
        });
    }

    let neighbors_per_tip = (spec.nodes_per_tip() - 1) as f64;
    let neighbor_rate = options.background_rate_per_tip / neighbors_per_tip;
    let rest = SynapseState::at_rest(&options.plasticity, options.edge_calcium);

    for (t, tip) in tips.iter().enumerate() {
        let mut frontier = vec![t as u32];
        for ring in 1..=spec.depth {
            let mut next = Vec::with_capacity(frontier.len() * spec.branching);
            for &parent in &frontier {
                let parent_pos = nodes[parent as usize].position;
                for _ in 0..spec.branching {
                    let position = if ring == 1 {
                        let r = options.sphere_radius_um - rng.random::<f64>() * options.ring1_jitter_um;
                        add(tip, &scaled(&random_direction(&mut rng), r))
                    } else {
                        let radial = sub(&parent_pos, tip);
                        let u = outward_direction(&mut rng, &radial);
                        let len = options.sphere_radius_um * spec.scale.powi(ring as i32 - 1);
                        add(&parent_pos, &scaled(&u, len))
                    };
                    let id = nodes.len() as u32;
                    nodes.push(NeuronNode {
                        id,
                        tip: t as u16,
                        parent: Some(parent),
                        position,
                        ring: ring as u8,
                        template_id: rng.random_range(0..options.template_count),
                        base_rate: neighbor_rate,
                    });
                    synapses.push(Synapse {
                        parent,
                        child: id,
                        state: rest,
                    });
                    next.push(id);
                }
            }
            frontier = next;
        }
    }

    Ok(NeuronScene {
        spec,
        options: options.clone(),
        tips,
        nodes,
        synapses,
    })
}

impl NeuronScene {
    pub fn tip_count(&self) -> usize {
        self.tips.len()
    }

    pub fn dominant(&self, tip: usize) -> &NeuronNode {
        &self.nodes[tip]
    }

    /// Dominant neurons with a nonzero firing rate, by tip index.
    pub fn active_units(&self) -> Vec<usize> {
        (0..self.tip_count())
            .filter(|&t| self.nodes[t].base_rate > 0.0)
            .collect()
    }

    pub fn synapse_into(&self, child: u32) -> Option<&Synapse> {
        // synapses are pushed in node order after the ring-0 block
        let idx = (child as usize).checked_sub(self.tip_count())?;
        self.synapses.get(idx).filter(|s| s.child == child)
    }

    /// Product of synaptic weights on the path from `node` to its dominant neuron.
    pub fn path_weight(&self, node: u32) -> f64 {
        let mut w = 1.0;
        let mut cur = node;
        while let Some(parent) = self.nodes[cur as usize].parent {
            w *= self.synapse_into(cur).map_or(0.0, |s| s.state.w);
            cur = parent;
        }
        w
    }

    /// Tips within `radius_um` of `tip`, nearest first (ties by index), at most `max`.
    pub fn adjacent_tips(&self, tip: usize, radius_um: f64, max: usize) -> Vec<usize> {
        let mut v: Vec<(f64, usize)> = (0..self.tip_count())
            .filter(|&j| j != tip)
            .map(|j| (distance(&self.tips[tip], &self.tips[j]), j))
            .filter(|(d, _)| *d <= radius_um + 1e-9)
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        v.into_iter().take(max).map(|(_, j)| j).collect()
    }

    /// Replace every edge's calcium level and reset its weight to the new fixed point.
    pub fn set_edge_calcium(&mut self, calcium: f64) {
        let rest = SynapseState::at_rest(&self.options.plasticity, calcium);
        self.options.edge_calcium = calcium;
        for s in &mut self.synapses {
            s.state = rest;
        }
    }

    pub fn to_canonical_json(&self) -> Result<String> {
        crate::canonical_json::to_string(self)
    }
}

/// Expected spike count per neuron over `duration` seconds.
///
/// Neighbor base rates are normalized at build time so that each tip's
/// surrounding neurons sum to the background rate exactly.
pub fn activity_rates(scene: &NeuronScene, duration: f64) -> Result<Vec<f64>> {
    if !(duration > 0.0) {
        return Err(Error::config("duration", "must be > 0"));
    }
    Ok(scene.nodes.iter().map(|n| n.base_rate * duration).collect())
}

fn grid_tips(n: usize, pitch: f64) -> Vec<Point3> {
    let cols = (n as f64).sqrt().ceil() as usize;
    (0..n)
        .map(|i| [(i % cols) as f64 * pitch, (i / cols) as f64 * pitch, 0.0])
        .collect()
}

/// Greedy max-min ordering starting at tip 0; ties go to the lowest index.
pub fn farthest_point_order(tips: &[Point3]) -> Vec<usize> {
    let n = tips.len();
    let mut order = Vec::with_capacity(n);
    let mut taken = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut cur = 0;
    for _ in 0..n {
        order.push(cur);
        taken[cur] = true;
        let mut best: Option<(f64, usize)> = None;
        for j in 0..n {
            if taken[j] {
                continue;
            }
            nearest[j] = nearest[j].min(distance(&tips[cur], &tips[j]));
            if best.map_or(true, |(d, _)| nearest[j] > d + 1e-9) {
                best = Some((nearest[j], j));
            }
        }
        match best {
            Some((_, j)) => cur = j,
            None => break,
        }
    }
    order
}

fn add(a: &Point3, b: &Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scaled(a: &Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn random_direction(rng: &mut ChaCha8Rng) -> Point3 {
    loop {
        let v = [
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
        ];
        let n2 = dot(&v, &v);
        if n2 > 1e-6 && n2 <= 1.0 {
            return scaled(&v, 1.0 / n2.sqrt());
        }
    }
}

fn outward_direction(rng: &mut ChaCha8Rng, radial: &Point3) -> Point3 {
    let u = random_direction(rng);
    if dot(&u, radial) < 0.0 {
        scaled(&u, -1.0)
    } else {
        u
    }
}
