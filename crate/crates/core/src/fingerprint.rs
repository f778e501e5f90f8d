//! Fine and global-local fingerprints and their 33-byte quantized code.
//!
//! Code layout: 16 pooled shape bins, 8 neighbor delays, 8 neighbor peak
//! ratios, 1 firing rate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::detect::SpikeEvent;
use crate::{Error, Result};

pub const WINDOW: usize = 64;
pub const POOL: usize = 4;
pub const SHAPE_LEN: usize = WINDOW / POOL;
pub const MAX_NEIGHBORS: usize = 8;
pub const MAX_LAG: i32 = 16;
pub const CODE_LEN: usize = SHAPE_LEN + 2 * MAX_NEIGHBORS + 1;
/// Delay value stored for a neighbor without a usable correlation peak.
pub const DELAY_SENTINEL: i32 = MAX_LAG + 1;
pub const NCC_FLOOR: f64 = 0.2;

/// Quantization range `[lo, hi]` of each code field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranges {
    pub shape: (f64, f64),
    pub delay: (f64, f64),
    pub ratio: (f64, f64),
    pub rate_hz: (f64, f64),
}

impl Default for Ranges {
    fn default() -> Self {
        Self {
            shape: (-1.0, 1.0),
            delay: (-(MAX_LAG as f64), DELAY_SENTINEL as f64),
            ratio: (0.0, 1.0),
            rate_hz: (0.0, 255.0),
        }
    }
}

impl Ranges {
    pub fn of(&self, index: usize) -> (f64, f64) {
        match index {
            i if i < SHAPE_LEN => self.shape,
            i if i < SHAPE_LEN + MAX_NEIGHBORS => self.delay,
            i if i < SHAPE_LEN + 2 * MAX_NEIGHBORS => self.ratio,
            _ => self.rate_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineFingerprint {
    pub shape: [f64; SHAPE_LEN],
    pub peak_trough_ratio: f64,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalFingerprint {
    /// Lag per neighbor slot; [`DELAY_SENTINEL`] when missing.
    pub delays: [i32; MAX_NEIGHBORS],
    pub ratios: [f64; MAX_NEIGHBORS],
    pub rate: f64,
}

impl GlobalFingerprint {
    pub fn empty(rate: f64) -> Self {
        Self {
            delays: [DELAY_SENTINEL; MAX_NEIGHBORS],
            ratios: [0.0; MAX_NEIGHBORS],
            rate,
        }
    }
}

/// Serialized as a hex string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Code(pub [u8; CODE_LEN]);

impl Code {
    pub fn as_bytes(&self) -> &[u8; CODE_LEN] {
        &self.0
    }
}

impl Serialize for Code {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Code {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(&text).map_err(serde::de::Error::custom)?;
        let arr: [u8; CODE_LEN] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom(format!("code must be {CODE_LEN} bytes")))?;
        Ok(Code(arr))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub fine: FineFingerprint,
    pub global: GlobalFingerprint,
    pub code: Code,
}

/// Peak-normalizes the window and mean-pools it by 4.
pub fn fine_fingerprint(event: &SpikeEvent) -> Result<FineFingerprint> {
    fine_from_window(&event.window)
}

pub fn fine_from_window(window: &[f64]) -> Result<FineFingerprint> {
    if window.len() != WINDOW {
        return Err(Error::format("event window", format!("length {} != {WINDOW}", window.len())));
    }
    let pivot = crate::synth::argmax_abs(window);
    let peak = window[pivot];
    if peak == 0.0 {
        return Err(Error::DegenerateEvent);
    }
    // polarity is kept: the pooled shape spans [-1, 1]
    let scale = peak.abs();
    let w: Vec<f64> = window.iter().map(|x| x / scale).collect();
    let mut shape = [0.0; SHAPE_LEN];
    for (b, chunk) in shape.iter_mut().zip(w.chunks(POOL)) {
        *b = chunk.iter().sum::<f64>() / POOL as f64;
    }
    let sign = w[pivot].signum();
    let peak_trough_ratio = w
        .iter()
        .filter(|x| x.signum() == -sign)
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let same = |x: f64| x.signum() == sign && x.abs() >= 0.5;
    let mut lo = pivot;
    while lo > 0 && same(w[lo - 1]) {
        lo -= 1;
    }
    let mut hi = pivot;
    while hi + 1 < WINDOW && same(w[hi + 1]) {
        hi += 1;
    }
    Ok(FineFingerprint {
        shape,
        peak_trough_ratio,
        width: hi - lo + 1,
    })
}

/// Samples of one neighbor channel covering `[start - 16, start + 64 + 16)`,
/// where `start = pivot - window_pre`.
pub type NeighborWindow<'a> = Option<&'a [f64]>;

pub const NEIGHBOR_SPAN: usize = WINDOW + 2 * MAX_LAG as usize;

fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Least-squares scale of `b` onto `a`: `<a, b> / <a, a>`.
fn gain(a: &[f64], b: &[f64]) -> f64 {
    let aa: f64 = a.iter().map(|x| x * x).sum();
    if aa == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / aa
}

/// Lag in `[-16, 16]` maximizing normalized cross-correlation, or `None`
/// when the best value is below [`NCC_FLOOR`]. Ties go to the smaller |lag|,
/// then the negative one.
pub fn best_lag(window: &[f64], neighbor: &[f64]) -> Option<i32> {
    if neighbor.len() < NEIGHBOR_SPAN || window.len() != WINDOW {
        return None;
    }
    let mut best: Option<(f64, i32)> = None;
    for mag in 0..=MAX_LAG {
        for lag in if mag == 0 { vec![0] } else { vec![-mag, mag] } {
            let off = (MAX_LAG + lag) as usize;
            let r = ncc(window, &neighbor[off..off + WINDOW]);
            if best.map_or(true, |(b, _)| r > b) {
                best = Some((r, lag));
            }
        }
    }
    best.filter(|(r, _)| *r >= NCC_FLOOR).map(|(_, lag)| lag)
}

/// Delays and peak ratios toward up to 8 neighbor channels, plus the
/// trailing-1 s firing rate from `history` (pivots on the event's channel).
pub fn global_fingerprint(
    event: &SpikeEvent,
    neighbors: &[NeighborWindow<'_>],
    history: &[usize],
    fs: u32,
) -> GlobalFingerprint {
    let mut g = GlobalFingerprint::empty(trailing_rate(event.pivot, history, fs));
    for (slot, n) in neighbors.iter().take(MAX_NEIGHBORS).enumerate() {
        let Some(n) = n else { continue };
        let Some(lag) = best_lag(&event.window, n) else { continue };
        g.delays[slot] = lag;
        let off = (MAX_LAG + lag) as usize;
        g.ratios[slot] = gain(&event.window, &n[off..off + WINDOW]).clamp(0.0, 1.0);
    }
    g
}

/// Pivots in `(pivot - fs, pivot]`, per second.
pub fn trailing_rate(pivot: usize, history: &[usize], fs: u32) -> f64 {
    let fs = fs as usize;
    let count = history.iter().filter(|&&p| p <= pivot && p + fs > pivot).count();
    count as f64
}

/// Feature vector in code order.
pub fn features(fine: &FineFingerprint, global: &GlobalFingerprint) -> [f64; CODE_LEN] {
    let mut v = [0.0; CODE_LEN];
    v[..SHAPE_LEN].copy_from_slice(&fine.shape);
    for i in 0..MAX_NEIGHBORS {
        v[SHAPE_LEN + i] = global.delays[i] as f64;
        v[SHAPE_LEN + MAX_NEIGHBORS + i] = global.ratios[i];
    }
    v[CODE_LEN - 1] = global.rate;
    v
}

fn to_byte(v: f64, (lo, hi): (f64, f64)) -> u8 {
    ((v - lo) / (hi - lo) * 255.0).round_ties_even().clamp(0.0, 255.0) as u8
}

pub fn quantize_features(v: &[f64; CODE_LEN], ranges: &Ranges) -> Result<Code> {
    let mut code = [0u8; CODE_LEN];
    for (i, (&x, b)) in v.iter().zip(code.iter_mut()).enumerate() {
        if !x.is_finite() {
            return Err(Error::Quantization { index: i, value: x });
        }
        *b = to_byte(x, ranges.of(i));
    }
    Ok(Code(code))
}

pub fn dequantize(code: &Code, ranges: &Ranges) -> [f64; CODE_LEN] {
    let mut v = [0.0; CODE_LEN];
    for (i, (&b, x)) in code.0.iter().zip(v.iter_mut()).enumerate() {
        let (lo, hi) = ranges.of(i);
        *x = lo + b as f64 / 255.0 * (hi - lo);
    }
    v
}

pub fn quantize_fingerprint(fine: FineFingerprint, global: GlobalFingerprint) -> Result<Fingerprint> {
    let code = quantize_features(&features(&fine, &global), &Ranges::default())?;
    Ok(Fingerprint { fine, global, code })
}

/// Rows of `channel,pivot,label,b0..b32`; `label` is empty when unknown.
pub fn write_codes_csv<W: Write>(w: W, rows: &[(usize, usize, Option<u32>, Code)]) -> Result<()> {
    let err = |e: csv::Error| Error::format("fingerprint csv", e.to_string());
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["channel".to_string(), "pivot".into(), "label".into()];
    header.extend((0..CODE_LEN).map(|i| format!("b{i}")));
    wr.write_record(&header).map_err(err)?;
    for (channel, pivot, label, code) in rows {
        let mut rec = vec![channel.to_string(), pivot.to_string(), label.map_or(String::new(), |l| l.to_string())];
        rec.extend(code.0.iter().map(|b| b.to_string()));
        wr.write_record(&rec).map_err(err)?;
    }
    wr.flush().map_err(|e| Error::format("fingerprint csv", e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::TemplateBank;
    use proptest::prelude::*;

    fn event(window: Vec<f64>) -> SpikeEvent {
        SpikeEvent { channel: 0, pivot: 1000, window, threshold_at_detect: 0.25 }
    }

    /// Template placed so its extremum sits at index 20.
    fn aligned(id: usize) -> Vec<f64> {
        let bank = TemplateBank::default();
        let t = bank.template(id);
        let p = bank.peak_offset(id);
        (0..WINDOW)
            .map(|i| {
                let k = i as isize - 20 + p as isize;
                if (0..t.len() as isize).contains(&k) { t[k as usize] } else { 0.0 }
            })
            .collect()
    }

    #[test]
    fn amplitude_invariance() {
        let w = aligned(2);
        let a = fine_fingerprint(&event(w.iter().map(|x| x * 3.7).collect())).unwrap();
        let b = fine_fingerprint(&event(w.iter().map(|x| x * 0.4).collect())).unwrap();
        for (x, y) in a.shape.iter().zip(&b.shape) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(a.width, b.width);
        assert!((a.peak_trough_ratio - b.peak_trough_ratio).abs() < 1e-12);
    }

    #[test]
    fn impulse() {
        let mut w = vec![0.0; WINDOW];
        w[20] = 2.0;
        let f = fine_fingerprint(&event(w)).unwrap();
        let nonzero: Vec<(usize, f64)> = f.shape.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        assert_eq!(nonzero, vec![(5, 0.25)]);
        assert_eq!(f.width, 1);
        assert_eq!(f.peak_trough_ratio, 0.0);
    }

    #[test]
    fn zero_window_degenerate() {
        assert!(matches!(fine_fingerprint(&event(vec![0.0; WINDOW])), Err(Error::DegenerateEvent)));
    }

    #[test]
    fn template_one_matches_frozen_reference() {
        // pooled, peak-aligned template 1, computed offline
        const REFERENCE: [f64; SHAPE_LEN] = [
            0.0, 0.0, 0.0, 0.0,
            0.20097727382427016, 0.8207695610167387, 0.21681958385748185, -0.09379512064081151,
            -0.1853645095828419, -0.1910012214475184, -0.16845084047939052, -0.1397280376609376,
            -0.1126235929338371, -0.08945040925176365, -0.0704783297279274, -0.05527773377402171,
        ];
        let f = fine_fingerprint(&event(aligned(1))).unwrap();
        for (i, (x, r)) in f.shape.iter().zip(&REFERENCE).enumerate() {
            assert!((x - r).abs() < 1e-9, "bin {i}: {x} vs {r}");
        }
    }

    fn neighbor_of(x: &[f64], start: usize, shift: i32, gain: f64) -> Vec<f64> {
        // neighbor stream n[t] = gain * x[t - shift], windowed at start - 16
        (0..NEIGHBOR_SPAN)
            .map(|k| {
                let t = start as i64 - MAX_LAG as i64 + k as i64 - shift as i64;
                if t >= 0 && (t as usize) < x.len() { gain * x[t as usize] } else { 0.0 }
            })
            .collect()
    }

    fn stream() -> (Vec<f64>, usize) {
        let mut x = vec![0.0; 300];
        let w = aligned(0);
        x[100..164].copy_from_slice(&w);
        (x, 100)
    }

    #[test]
    fn shifted_copy_delay_and_ratio() {
        let (x, start) = stream();
        let ev = SpikeEvent { channel: 0, pivot: start + 20, window: x[start..start + 64].to_vec(), threshold_at_detect: 0.25 };
        let n = neighbor_of(&x, start, 4, 0.5);
        let g = global_fingerprint(&ev, &[Some(&n)], &[], 24_000);
        assert_eq!(g.delays[0], 4);
        assert!((g.ratios[0] - 0.5).abs() < 1e-12);
        assert_eq!(&g.delays[1..], &[DELAY_SENTINEL; 7]);
    }

    #[test]
    fn silent_neighbor_sentinel() {
        let (x, start) = stream();
        let ev = SpikeEvent { channel: 0, pivot: start + 20, window: x[start..start + 64].to_vec(), threshold_at_detect: 0.25 };
        let n = vec![0.0; NEIGHBOR_SPAN];
        let g = global_fingerprint(&ev, &[Some(&n)], &[], 24_000);
        assert_eq!(g.delays[0], DELAY_SENTINEL);
        assert_eq!(g.ratios[0], 0.0);
    }

    #[test]
    fn all_shifts_recovered() {
        let (x, start) = stream();
        let w = x[start..start + 64].to_vec();
        for shift in -MAX_LAG..=MAX_LAG {
            let n = neighbor_of(&x, start, shift, 0.3);
            assert_eq!(best_lag(&w, &n), Some(shift), "shift {shift}");
        }
    }

    #[test]
    fn rate_is_trailing_count() {
        let history = [10, 500, 30_000, 40_000, 53_999, 54_000];
        assert_eq!(trailing_rate(54_000, &history, 24_000), 3.0);
        assert_eq!(trailing_rate(600, &history, 24_000), 2.0);
    }

    #[test]
    fn byte_endpoints_and_midpoint() {
        assert_eq!(to_byte(0.0, (0.0, 1.0)), 0);
        assert_eq!(to_byte(1.0, (0.0, 1.0)), 255);
        assert_eq!(to_byte(0.5, (0.0, 1.0)), 128);
        assert_eq!(to_byte(DELAY_SENTINEL as f64, Ranges::default().delay), 255);
    }

    #[test]
    fn non_finite_rejected() {
        let mut v = [0.0; CODE_LEN];
        v[3] = f64::NAN;
        assert!(matches!(quantize_features(&v, &Ranges::default()), Err(Error::Quantization { index: 3, .. })));
    }

    proptest! {
        #[test]
        fn quantize_idempotent(bytes in proptest::array::uniform32(any::<u8>()), last in any::<u8>()) {
            let mut c = [0u8; CODE_LEN];
            c[..32].copy_from_slice(&bytes);
            c[32] = last;
            let code = Code(c);
            let r = Ranges::default();
            prop_assert_eq!(quantize_features(&dequantize(&code, &r), &r).unwrap(), code);
        }

        #[test]
        fn quantization_error_half_step(vals in proptest::collection::vec(0.0f64..1.0, CODE_LEN)) {
            let r = Ranges::default();
            let mut v = [0.0; CODE_LEN];
            for (i, u) in vals.iter().enumerate() {
                let (lo, hi) = r.of(i);
                v[i] = lo + u * (hi - lo);
            }
            let back = dequantize(&quantize_features(&v, &r).unwrap(), &r);
            for i in 0..CODE_LEN {
                let (lo, hi) = r.of(i);
                prop_assert!((back[i] - v[i]).abs() <= (hi - lo) / 255.0 / 2.0 + 1e-12);
            }
        }

        #[test]
        fn fine_amplitude_invariant(alpha in 1e-3f64..1e3, id in 0usize..3) {
            let w = aligned(id);
            let a = fine_from_window(&w).unwrap();
            let b = fine_from_window(&w.iter().map(|x| x * alpha).collect::<Vec<_>>()).unwrap();
            for (x, y) in a.shape.iter().zip(&b.shape) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert_eq!(a.width, b.width);
        }
    }
}
