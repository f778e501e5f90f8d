//! Fingerprint lookup table (FPLT) and the negative-selection matcher.
//!
//! The table is charged against a fixed bit budget using its canonical
//! serialization: a 16-byte header, 40-byte entries and 34-byte detectors.
//! A quarter of the budget is reserved for detectors by default.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fingerprint::{Code, CODE_LEN};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FPLT";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 16;
pub const ENTRY_BYTES: usize = CODE_LEN + 1 + 2 + 4;
pub const DETECTOR_BYTES: usize = CODE_LEN + 1;

const FULL: u64 = 255 * 255 * CODE_LEN as u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpltConfig {
    pub budget_bits: u32,
    /// Fraction of the budget held back for detectors.
    pub detector_reserve: f64,
    pub theta_match: f64,
    pub theta_new: f64,
    pub r_det: f64,
}

impl Default for FpltConfig {
    fn default() -> Self {
        Self {
            budget_bits: 32_768,
            detector_reserve: 0.25,
            theta_match: 0.15,
            theta_new: 0.30,
            r_det: 0.10,
        }
    }
}

impl FpltConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget_bits % 8 != 0 || self.budget_bytes() > u16::MAX as usize {
            return Err(Error::config("budget_bits", "must be a multiple of 8 and at most 524,280"));
        }
        if self.budget_bytes() < HEADER_BYTES {
            return Err(Error::config("budget_bits", "smaller than the table header"));
        }
        if !(0.0..1.0).contains(&self.detector_reserve) {
            return Err(Error::config("detector_reserve", "must be in [0, 1)"));
        }
        if !(self.theta_match > 0.0 && self.theta_match <= self.theta_new && self.theta_new <= 1.0) {
            return Err(Error::config("theta_match", "need 0 < theta_match <= theta_new <= 1"));
        }
        if !(self.r_det >= 0.0) {
            return Err(Error::config("r_det", "must be >= 0"));
        }
        Ok(())
    }

    pub fn budget_bytes(&self) -> usize {
        self.budget_bits as usize / 8
    }

    pub fn reserve_bytes(&self) -> usize {
        (self.budget_bytes() as f64 * self.detector_reserve).floor() as usize
    }

    pub fn entry_capacity(&self) -> usize {
        self.budget_bytes().saturating_sub(HEADER_BYTES + self.reserve_bytes()) / ENTRY_BYTES
    }

    pub fn detector_capacity(&self) -> usize {
        self.reserve_bytes() / DETECTOR_BYTES
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FpltEntry {
    pub code: Code,
    pub label: u8,
    pub hit_count: u16,
    pub last_used: u32,
}

/// A non-self region: codes strictly closer than `radius / 255` match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detector {
    pub code: Code,
    pub radius: u8,
}

impl Detector {
    pub fn matches(&self, code: &Code) -> bool {
        let r = self.radius as u64;
        squared_byte_distance(&self.code, code) < CODE_LEN as u64 * r * r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchKind {
    Known(u8),
    New(u8),
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchDecision {
    pub kind: MatchKind,
    /// Distance to the nearest entry; `None` when a detector fired or the table was empty.
    pub distance: Option<f64>,
}

impl MatchDecision {
    pub fn label(&self) -> Option<u8> {
        match self.kind {
            MatchKind::Known(l) | MatchKind::New(l) => Some(l),
            MatchKind::Rejected => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainReport {
    pub requested: usize,
    pub trained: usize,
    pub censored: usize,
    pub candidates: usize,
}

pub fn squared_byte_distance(a: &Code, b: &Code) -> u64 {
    a.0.iter()
        .zip(&b.0)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum()
}

/// `sqrt(Σ (Δbyte/255)² / 33)`, in [0, 1].
pub fn distance(a: &Code, b: &Code) -> f64 {
    squared_from_bytes(squared_byte_distance(a, b))
}

fn squared_from_bytes(s: u64) -> f64 {
    (s as f64 / FULL as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fplt {
    pub config: FpltConfig,
    pub entries: Vec<FpltEntry>,
    pub detectors: Vec<Detector>,
    pub next_label: u8,
    /// Incremented on every classify call.
    pub clock: u32,
}

/// Loads one entry per labeled code; detectors start empty.
pub fn seed_population(config: FpltConfig, templates: &[(u8, Code)]) -> Result<Fplt> {
    config.validate()?;
    let required = (HEADER_BYTES + templates.len() * ENTRY_BYTES + config.reserve_bytes()) as u64 * 8;
    let available = config.budget_bits as u64;
    if required > available || templates.len() > config.entry_capacity() {
        return Err(Error::Capacity { required, available });
    }
    let entries = templates
        .iter()
        .map(|&(label, code)| FpltEntry { code, label, hit_count: 0, last_used: 0 })
        .collect();
    let next_label = templates.iter().map(|t| t.0).max().map_or(0, |m| m.wrapping_add(1));
    Ok(Fplt {
        config,
        entries,
        detectors: Vec::new(),
        next_label,
        clock: 0,
    })
}

impl Fplt {
    pub fn empty(config: FpltConfig) -> Result<Self> {
        seed_population(config, &[])
    }

    pub fn used_bytes(&self) -> usize {
        HEADER_BYTES + self.entries.len() * ENTRY_BYTES + self.detectors.len() * DETECTOR_BYTES
    }

    pub fn used_bits(&self) -> u64 {
        self.used_bytes() as u64 * 8
    }

    /// Index and squared byte distance of the nearest entry; ties go to the lowest label.
    pub fn nearest(&self, code: &Code) -> Option<(usize, u64)> {
        let mut best: Option<(usize, u64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            let bound = best.map_or(u64::MAX, |b| b.1);
            let mut s = 0u64;
            let mut abandoned = false;
            for (&x, &y) in e.code.0.iter().zip(&code.0) {
                let d = x as i64 - y as i64;
                s += (d * d) as u64;
                if s > bound {
                    abandoned = true;
                    break;
                }
            }
            if abandoned {
                continue;
            }
            best = match best {
                Some((j, b)) if b < s || (b == s && self.entries[j].label <= e.label) => Some((j, b)),
                _ => Some((i, s)),
            };
        }
        best
    }

    fn nearest_self_squared(&self, code: &Code) -> Option<u64> {
        self.entries.iter().map(|e| squared_byte_distance(&e.code, code)).min()
    }

    /// V-detector radius for a candidate, or `None` when censored.
    fn detector_radius(&self, code: &Code) -> Option<u8> {
        let Some(s_min) = self.nearest_self_squared(code) else {
            return Some(u8::MAX);
        };
        let d_min = squared_from_bytes(s_min);
        if d_min <= self.config.r_det {
            return None;
        }
        let mut r = ((d_min - self.config.theta_match) * 255.0).floor().clamp(0.0, 255.0) as u64;
        // strict integer guarantee that no self entry falls inside
        while r > 0 && CODE_LEN as u64 * r * r >= s_min {
            r -= 1;
        }
        (r > 0).then_some(r as u8)
    }

    fn push_candidates(&mut self, candidates: impl Iterator<Item = Code>, count: usize) -> TrainReport {
        let room = self.config.detector_capacity().saturating_sub(self.detectors.len());
        let target = count.min(room);
        let mut report = TrainReport { requested: count, trained: 0, censored: 0, candidates: 0 };
        for c in candidates {
            if report.trained >= target {
                break;
            }
            report.candidates += 1;
            match self.detector_radius(&c) {
                Some(radius) => {
                    self.detectors.push(Detector { code: c, radius });
                    report.trained += 1;
                }
                None => report.censored += 1,
            }
        }
        report
    }

    /// Negative selection over uniformly random candidate codes.
    pub fn train_detectors(&mut self, count: usize, seed: u64) -> TrainReport {
        let mut rng = stream_rng(seed, Stream::Detectors, 0);
        let limit = count.saturating_mul(64).max(64);
        let candidates = (0..limit).map(move |_| {
            let mut c = [0u8; CODE_LEN];
            rng.fill(&mut c[..]);
            Code(c)
        });
        self.push_candidates(candidates, count)
    }

    /// Negative selection over observed candidates, visited in seeded random order.
    pub fn train_detectors_from(&mut self, pool: &[Code], count: usize, seed: u64) -> TrainReport {
        let mut order: Vec<Code> = pool.to_vec();
        order.shuffle(&mut stream_rng(seed, Stream::Detectors, 1));
        self.push_candidates(order.into_iter(), count)
    }

    pub fn classify(&mut self, code: &Code) -> MatchDecision {
        self.clock = self.clock.wrapping_add(1);
        let decision = if self.detectors.iter().any(|d| d.matches(code)) {
            MatchDecision { kind: MatchKind::Rejected, distance: None }
        } else {
            match self.nearest(code) {
                None => {
                    let label = self.insert(*code);
                    MatchDecision { kind: MatchKind::New(label), distance: None }
                }
                Some((i, s)) => {
                    let d = squared_from_bytes(s);
                    if d <= self.config.theta_match {
                        let clock = self.clock;
                        let e = &mut self.entries[i];
                        e.hit_count = e.hit_count.saturating_add(1);
                        e.last_used = clock;
                        MatchDecision { kind: MatchKind::Known(e.label), distance: Some(d) }
                    } else if d > self.config.theta_new {
                        let label = self.insert(*code);
                        MatchDecision { kind: MatchKind::New(label), distance: Some(d) }
                    } else {
                        MatchDecision { kind: MatchKind::Rejected, distance: Some(d) }
                    }
                }
            }
        };
        debug_assert!(
            self.used_bits() <= self.config.budget_bits as u64,
            "table over budget: {} bits",
            self.used_bits()
        );
        decision
    }

    fn allocate_label(&mut self) -> u8 {
        let mut label = self.next_label;
        for _ in 0..256 {
            if !self.entries.iter().any(|e| e.label == label) {
                break;
            }
            label = label.wrapping_add(1);
        }
        self.next_label = label.wrapping_add(1);
        label
    }

    fn insert(&mut self, code: Code) -> u8 {
        if self.entries.len() >= self.config.entry_capacity() {
            if let Some(victim) = self
                .entries
                .iter()
                .enumerate()
                .min_by_key(|(_, e)| (e.last_used, e.label))
                .map(|(i, _)| i)
            {
                self.entries.remove(victim);
            }
        }
        let label = self.allocate_label();
        self.entries.push(FpltEntry { code, label, hit_count: 1, last_used: self.clock });
        // detectors reaching into the new entry's match ball would reject it
        let theta = self.config.theta_match;
        self.detectors
            .retain(|d| distance(&d.code, &code) >= d.radius as f64 / 255.0 + theta);
        label
    }

    pub fn serialize(&self) -> Result<Vec<u8>> {
        let bits = self.used_bits();
        if bits > self.config.budget_bits as u64 {
            return Err(Error::Invariant(format!(
                "{bits} bits exceeds budget {}",
                self.config.budget_bits
            )));
        }
        let mut out = Vec::with_capacity(self.used_bytes());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.next_label);
        out.extend_from_slice(&(self.entries.len() as u16).to_le_bytes());
        out.extend_from_slice(&(self.detectors.len() as u16).to_le_bytes());
        out.extend_from_slice(&(self.config.budget_bytes() as u16).to_le_bytes());
        out.extend_from_slice(&self.clock.to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.code.0);
            out.push(e.label);
            out.extend_from_slice(&e.hit_count.to_le_bytes());
            out.extend_from_slice(&e.last_used.to_le_bytes());
        }
        for d in &self.detectors {
            out.extend_from_slice(&d.code.0);
            out.push(d.radius);
        }
        debug_assert_eq!(out.len(), self.used_bytes());
        Ok(out)
    }

    /// Parses a serialization; the budget in the header overrides `config`.
    pub fn deserialize(bytes: &[u8], config: FpltConfig) -> Result<Self> {
        let bad = |r: String| Error::format("fplt", r);
        if bytes.len() < HEADER_BYTES {
            return Err(bad(format!("{} bytes, header needs {HEADER_BYTES}", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(bad(format!("unsupported version {}", bytes[4])));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let next_label = bytes[5];
        let n_entries = u16_at(6) as usize;
        let n_detectors = u16_at(8) as usize;
        let budget_bytes = u16_at(10) as usize;
        let clock = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
        let expected = HEADER_BYTES + n_entries * ENTRY_BYTES + n_detectors * DETECTOR_BYTES;
        if bytes.len() != expected {
            return Err(bad(format!("length {} != {expected}", bytes.len())));
        }
        let config = FpltConfig { budget_bits: budget_bytes as u32 * 8, ..config };
        config.validate()?;
        if expected > budget_bytes {
            return Err(Error::Invariant(format!("{} bits exceeds budget {}", expected * 8, budget_bytes * 8)));
        }
        let code_at = |i: usize| Code(bytes[i..i + CODE_LEN].try_into().expect("code length"));
        let mut entries = Vec::with_capacity(n_entries);
        let mut at = HEADER_BYTES;
        for _ in 0..n_entries {
            entries.push(FpltEntry {
                code: code_at(at),
                label: bytes[at + CODE_LEN],
                hit_count: u16_at(at + CODE_LEN + 1),
                last_used: u32::from_le_bytes(bytes[at + CODE_LEN + 3..at + ENTRY_BYTES].try_into().expect("4 bytes")),
            });
            at += ENTRY_BYTES;
        }
        let mut detectors = Vec::with_capacity(n_detectors);
        for _ in 0..n_detectors {
            detectors.push(Detector { code: code_at(at), radius: bytes[at + CODE_LEN] });
            at += DETECTOR_BYTES;
        }
        Ok(Self { config, entries, detectors, next_label, clock })
    }
}

/// JSON written next to a table snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: FpltConfig,
    pub labels: Vec<u8>,
    pub entries: usize,
    pub detectors: usize,
    pub bits: u64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_snapshot(path: &Path, table: &Fplt) -> Result<()> {
    let bytes = table.serialize()?;
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let side = Sidecar {
        config: table.config,
        labels: table.entries.iter().map(|e| e.label).collect(),
        entries: table.entries.len(),
        detectors: table.detectors.len(),
        bits: bytes.len() as u64 * 8,
    };
    let sp = sidecar_path(path);
    let json = serde_json::to_string_pretty(&side).map_err(|e| Error::format("sidecar", e.to_string()))?;
    std::fs::write(&sp, json).map_err(|e| Error::io(&sp, e))
}

/// Reads a snapshot; thresholds come from the sidecar when present.
pub fn read_snapshot(path: &Path) -> Result<Fplt> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let sp = sidecar_path(path);
    let config = match std::fs::read_to_string(&sp) {
        Ok(text) => {
            serde_json::from_str::<Sidecar>(&text)
                .map_err(|e| Error::format("sidecar", e.to_string()))?
                .config
        }
        Err(_) => FpltConfig::default(),
    };
    Fplt::deserialize(&bytes, config)
}
