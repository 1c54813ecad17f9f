//! Converts feature-match counts and pupil-detection confidence into the
//! weight schedule driving the fusion, including blink classification and
//! linear decay around poorly matched edges.
//!
//! Pupil and iris blinks are classified separately: a sample with low pupil
//! confidence but surviving iris matches is a partial blink and keeps its
//! weights; only a complete blink (no matches on either adjacent edge)
//! zeroes the velocity weights and drops the position weight to the floor.
//! Outside blinks the position weight and the mean adjacent velocity weight
//! sum to one.

use crate::error::{Error, Result};
use crate::fusion::WeightSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceConfig {
    /// Matches needed for full velocity confidence.
    pub min_matches: u32,
    /// Pupil confidence below this marks a blink sample.
    pub conf_threshold: f64,
    /// Cap on the velocity weight.
    pub beta_cap: f64,
    /// Edges on each side of a low edge covered by the decay ramp.
    pub decay_span: usize,
    /// Floor keeping the position weight positive through blinks.
    pub floor: f64,
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        Self {
            min_matches: 50,
            conf_threshold: 0.3,
            beta_cap: 0.9,
            decay_span: 2,
            floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlinkKind {
    Partial,
    Complete,
}

/// A maximal run of low-confidence samples, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlinkRecord {
    pub start: usize,
    pub end: usize,
    pub kind: BlinkKind,
}

/// Velocity weight for one edge: `min(cap, cap * n_matches / min_matches)`.
pub fn iris_weight(n_matches: u32, cfg: &ConfidenceConfig) -> f64 {
    let scaled = cfg.beta_cap * n_matches as f64 / cfg.min_matches as f64;
    scaled.min(cfg.beta_cap)
}

/// Forces a linear ramp around every edge whose weight is below the cap, so
/// no adjacent pair jumps from the cap to a low value in one step. The
/// output is the pointwise minimum of the input and all ramps.
pub fn apply_linear_decay(raw_beta_i: &[f64], cfg: &ConfidenceConfig) -> Vec<f64> {
    let mut out = raw_beta_i.to_vec();
    if cfg.decay_span == 0 {
        return out;
    }
    let span = cfg.decay_span as f64;
    for (e, &low) in raw_beta_i.iter().enumerate() {
        if low >= cfg.beta_cap {
            continue;
        }
        for d in 1..=cfg.decay_span {
            let ramp = low + (cfg.beta_cap - low) * d as f64 / span;
            if e >= d && ramp < out[e - d] {
                out[e - d] = ramp;
            }
            if e + d < raw_beta_i.len() && ramp < out[e + d] {
                out[e + d] = ramp;
            }
        }
    }
    out
}

/// Splits low-pupil-confidence samples into blink intervals.
///
/// A sample is a complete-blink candidate when every adjacent edge has zero
/// matches; a run containing at least one such sample is a complete blink,
/// otherwise it is partial.
pub fn classify_blinks(
    pupil_conf: &[f64],
    n_matches: &[u32],
    cfg: &ConfidenceConfig,
) -> Result<Vec<BlinkRecord>> {
    let n = pupil_conf.len();
    if n == 0 {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    if n_matches.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            what: "n_matches",
            expected: n - 1,
            got: n_matches.len(),
        });
    }

    let mut records = Vec::new();
    let mut k = 0;
    while k < n {
        if pupil_conf[k] >= cfg.conf_threshold {
            k += 1;
            continue;
        }
        let start = k;
        let mut any_complete = false;
        while k < n && pupil_conf[k] < cfg.conf_threshold {
            let left_zero = k == 0 || n_matches[k - 1] == 0;
            let right_zero = k >= n_matches.len() || n_matches[k] == 0;
            any_complete |= left_zero && right_zero;
            k += 1;
        }
        records.push(BlinkRecord {
            start,
            end: k - 1,
            kind: if any_complete { BlinkKind::Complete } else { BlinkKind::Partial },
        });
    }
    Ok(records)
}

/// Builds the full weight schedule.
///
/// Edge weights come from [`iris_weight`] followed by [`apply_linear_decay`];
/// edges interior to a complete blink are zeroed. Position weights enforce
/// `beta_p + mean(adjacent beta_i) = 1` outside blinks and drop to the floor
/// inside complete blinks.
pub fn build_weight_schedule(
    pupil_conf: &[f64],
    n_matches: &[u32],
    blinks: &[BlinkRecord],
    cfg: &ConfidenceConfig,
) -> Result<WeightSchedule> {
    let n = pupil_conf.len();
    if n == 0 {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    if n_matches.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            what: "n_matches",
            expected: n - 1,
            got: n_matches.len(),
        });
    }

    let raw: Vec<f64> = n_matches.iter().map(|&m| iris_weight(m, cfg)).collect();
    let mut beta_i = apply_linear_decay(&raw, cfg);
    for blink in blinks.iter().filter(|b| b.kind == BlinkKind::Complete) {
        for e in blink.start..blink.end.min(n - 1) {
            beta_i[e] = 0.0;
        }
    }

    let mut beta_p = Vec::with_capacity(n);
    for k in 0..n {
        let mut sum = 0.0;
        let mut cnt = 0usize;
        if k > 0 {
            sum += beta_i[k - 1];
            cnt += 1;
        }
        if k < beta_i.len() {
            sum += beta_i[k];
            cnt += 1;
        }
        let adj = if cnt == 0 { 0.0 } else { sum / cnt as f64 };
        beta_p.push((1.0 - adj).max(cfg.floor));
    }
    for blink in blinks.iter().filter(|b| b.kind == BlinkKind::Complete) {
        for p in beta_p.iter_mut().take(blink.end + 1).skip(blink.start) {
            *p = cfg.floor;
        }
    }

    WeightSchedule::new(beta_p, beta_i, cfg.floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iris_weight_formula() {
        let cfg = ConfidenceConfig::default();
        assert_eq!(iris_weight(50, &cfg), 0.9);
        assert_eq!(iris_weight(100, &cfg), 0.9);
        assert!((iris_weight(25, &cfg) - 0.45).abs() < 1e-15);
        assert_eq!(iris_weight(0, &cfg), 0.0);
    }

    #[test]
    fn iris_weight_monotone_and_capped() {
        let cfg = ConfidenceConfig::default();
        let mut prev = -1.0;
        for m in 0..200 {
            let w = iris_weight(m, &cfg);
            assert!(w >= prev);
            assert!(w <= cfg.beta_cap);
            prev = w;
        }
    }

    #[test]
    fn decay_ramp_by_hand() {
        let cfg = ConfidenceConfig::default();
        let out = apply_linear_decay(&[0.9, 0.9, 0.0, 0.9, 0.9], &cfg);
        let want = [0.9, 0.45, 0.0, 0.45, 0.9];
        for (got, want) in out.iter().zip(want) {
            assert!((got - want).abs() < 1e-15, "{out:?}");
        }
    }

    #[test]
    fn decay_leaves_full_weights_untouched() {
        let cfg = ConfidenceConfig::default();
        assert_eq!(apply_linear_decay(&[0.9; 6], &cfg), vec![0.9; 6]);
        assert_eq!(apply_linear_decay(&[0.3], &cfg), vec![0.3]);
    }

    #[test]
    fn decay_never_raises_and_bounds_steps() {
        let cfg = ConfidenceConfig::default();
        let raw = [0.9, 0.1, 0.9, 0.9, 0.0, 0.9, 0.6];
        let out = apply_linear_decay(&raw, &cfg);
        for (o, r) in out.iter().zip(raw) {
            assert!(*o <= r + 1e-15);
        }
        let max_step = cfg.beta_cap / cfg.decay_span as f64;
        for pair in out.windows(2) {
            assert!((pair[1] - pair[0]).abs() <= max_step + 1e-12);
        }
    }

    #[test]
    fn classify_no_blinks() {
        let cfg = ConfidenceConfig::default();
        let blinks = classify_blinks(&[1.0; 4], &[50; 3], &cfg).unwrap();
        assert!(blinks.is_empty());
    }

    #[test]
    fn classify_complete_blink() {
        let cfg = ConfidenceConfig::default();
        let blinks = classify_blinks(&[1.0, 0.1, 0.1, 1.0], &[50, 0, 0], &cfg).unwrap();
        assert_eq!(
            blinks,
            vec![BlinkRecord { start: 1, end: 2, kind: BlinkKind::Complete }]
        );
    }

    #[test]
    fn classify_partial_blink() {
        let cfg = ConfidenceConfig::default();
        let blinks = classify_blinks(&[1.0, 0.1, 1.0], &[30, 30], &cfg).unwrap();
        assert_eq!(
            blinks,
            vec![BlinkRecord { start: 1, end: 1, kind: BlinkKind::Partial }]
        );
    }

    #[test]
    fn classify_intervals_disjoint_sorted() {
        let cfg = ConfidenceConfig::default();
        let conf = [0.1, 1.0, 0.1, 0.1, 1.0, 0.1];
        let matches = [10, 10, 0, 10, 10];
        let blinks = classify_blinks(&conf, &matches, &cfg).unwrap();
        assert_eq!(blinks.len(), 3);
        for pair in blinks.windows(2) {
            assert!(pair[0].end < pair[1].start);
        }
    }

    #[test]
    fn schedule_without_blinks_sums_to_one() {
        let cfg = ConfidenceConfig::default();
        let conf = [1.0; 5];
        let matches = [60, 70, 50, 55];
        let blinks = classify_blinks(&conf, &matches, &cfg).unwrap();
        let w = build_weight_schedule(&conf, &matches, &blinks, &cfg).unwrap();
        for b in &w.beta_i {
            assert!((b - 0.9).abs() < 1e-15);
        }
        for (k, bp) in w.beta_p.iter().enumerate() {
            assert!((bp - 0.1).abs() < 1e-15);
            assert!((bp + w.adjacent_beta_i_mean(k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_complete_blink_floors_weights() {
        let cfg = ConfidenceConfig::default();
        let conf = [1.0, 1.0, 0.1, 0.1, 0.1, 1.0, 1.0];
        let matches = [50, 50, 0, 0, 0, 50];
        let blinks = classify_blinks(&conf, &matches, &cfg).unwrap();
        assert_eq!(blinks[0].kind, BlinkKind::Complete);
        let w = build_weight_schedule(&conf, &matches, &blinks, &cfg).unwrap();
        for k in 2..=4 {
            assert_eq!(w.beta_p[k], cfg.floor);
        }
        assert_eq!(w.beta_i[2], 0.0);
        assert_eq!(w.beta_i[3], 0.0);
        let overall = w.overall_confidence();
        assert_eq!(overall[3], 0.0);
    }

    #[test]
    fn schedule_partial_blink_keeps_sum_to_one() {
        let cfg = ConfidenceConfig::default();
        let conf = [1.0, 0.1, 0.1, 0.1, 1.0];
        let matches = [30, 30, 30, 30];
        let blinks = classify_blinks(&conf, &matches, &cfg).unwrap();
        assert_eq!(blinks[0].kind, BlinkKind::Partial);
        let w = build_weight_schedule(&conf, &matches, &blinks, &cfg).unwrap();
        for k in 1..=3 {
            assert!((w.beta_i[k - 1] - 0.54).abs() < 1e-15);
            assert!((w.beta_p[k] - 0.46).abs() < 1e-15);
        }
    }

    #[test]
    fn sum_to_one_outside_any_blink() {
        let cfg = ConfidenceConfig::default();
        let conf = [1.0, 1.0, 0.1, 1.0, 1.0, 1.0];
        let matches = [50, 20, 20, 40, 50];
        let blinks = classify_blinks(&conf, &matches, &cfg).unwrap();
        let w = build_weight_schedule(&conf, &matches, &blinks, &cfg).unwrap();
        for k in 0..conf.len() {
            let in_blink = blinks.iter().any(|b| k >= b.start && k <= b.end);
            if !in_blink {
                assert!((w.beta_p[k] + w.adjacent_beta_i_mean(k) - 1.0).abs() < 1e-12);
            }
        }
    }
}
