//! Uniformly sampled 2D signal containers.
//!
//! [`ChannelTrace`] holds an absolute position channel (one sample per
//! frame) with a per-sample confidence in `[0, 1]`. [`VelocityTrace`] holds
//! a relative velocity channel: edge `k` is the displacement between frames
//! `k` and `k + 1` in signal units per frame, together with the number of
//! feature matches that produced it.

use crate::error::{Error, Result};

/// Uniformly sampled 2D position channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    /// Time of the first sample, seconds.
    pub t0: f64,
    /// Sampling interval, seconds. Always positive.
    pub dt: f64,
    /// Samples as `[x, y]` pairs.
    pub samples: Vec<[f64; 2]>,
    /// Per-sample confidence in `[0, 1]`, same length as `samples`.
    pub confidence: Vec<f64>,
}

impl ChannelTrace {
    pub fn new(t0: f64, dt: f64, samples: Vec<[f64; 2]>, confidence: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput("dt must be positive"));
        }
        if confidence.len() != samples.len() {
            return Err(Error::DimensionMismatch {
                what: "confidence",
                expected: samples.len(),
                got: confidence.len(),
            });
        }
        if confidence.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidInput("confidence must lie in [0, 1]"));
        }
        Ok(Self { t0, dt, samples, confidence })
    }

    /// Builds a trace with confidence 1 everywhere.
    pub fn with_full_confidence(t0: f64, dt: f64, samples: Vec<[f64; 2]>) -> Result<Self> {
        let n = samples.len();
        Self::new(t0, dt, samples, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time of sample `k` in seconds.
    pub fn time_at(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// First sample index whose time is `>= t` (with a small slack for
    /// accumulated rounding), or `None` when `t` is past the end.
    pub fn index_at_or_after(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t0) / self.dt - 1e-9).ceil().max(0.0) as usize;
        (k < self.len()).then_some(k)
    }

    /// One axis as a plain vector (`0` = x, `1` = y).
    pub fn axis(&self, ax: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[ax]).collect()
    }

    /// Sub-trace over `[start, end)` with `t0` shifted accordingly.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidWindow("slice out of bounds"));
        }
        Ok(Self {
            t0: self.time_at(start),
            dt: self.dt,
            samples: self.samples[start..end].to_vec(),
            confidence: self.confidence[start..end].to_vec(),
        })
    }
}

/// Uniformly sampled 2D velocity channel; edge `k` spans frames `k` and
/// `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityTrace {
    /// Time of frame 0, seconds.
    pub t0: f64,
    /// Frame interval, seconds. Always positive.
    pub dt: f64,
    /// Per-edge `[vx, vy]` in signal units per frame.
    pub edges: Vec<[f64; 2]>,
    /// Feature matches behind each edge, same length as `edges`.
    pub n_matches: Vec<u32>,
}

impl VelocityTrace {
    pub fn new(t0: f64, dt: f64, edges: Vec<[f64; 2]>, n_matches: Vec<u32>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput("dt must be positive"));
        }
        if n_matches.len() != edges.len() {
            return Err(Error::DimensionMismatch {
                what: "n_matches",
                expected: edges.len(),
                got: n_matches.len(),
            });
        }
        Ok(Self { t0, dt, edges, n_matches })
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Time of the first frame of edge `k`.
    pub fn time_at(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn axis(&self, ax: usize) -> Vec<f64> {
        self.edges.iter().map(|e| e[ax]).collect()
    }
}

/// Checks that two traces share one sampling grid.
pub(crate) fn same_grid(dt_a: f64, dt_b: f64, what: &'static str) -> Result<()> {
    if (dt_a - dt_b).abs() > 1e-12 * dt_a.max(dt_b) {
        return Err(Error::SamplingMismatch(what));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dt_and_confidence() {
        assert!(ChannelTrace::with_full_confidence(0.0, 0.0, vec![[0.0, 0.0]]).is_err());
        assert!(ChannelTrace::new(0.0, 0.1, vec![[0.0, 0.0]], vec![1.5]).is_err());
        assert!(ChannelTrace::new(0.0, 0.1, vec![[0.0, 0.0]], vec![]).is_err());
    }

    #[test]
    fn index_lookup() {
        let t = ChannelTrace::with_full_confidence(1.0, 0.5, vec![[0.0; 2]; 4]).unwrap();
        assert_eq!(t.index_at_or_after(0.0), Some(0));
        assert_eq!(t.index_at_or_after(1.0), Some(0));
        assert_eq!(t.index_at_or_after(1.2), Some(1));
        assert_eq!(t.index_at_or_after(2.5), Some(3));
        assert_eq!(t.index_at_or_after(2.6), None);
    }

    #[test]
    fn slice_shifts_origin() {
        let t = ChannelTrace::with_full_confidence(
            0.0,
            0.25,
            (0..8).map(|k| [k as f64, 0.0]).collect(),
        )
        .unwrap();
        let s = t.slice(2, 6).unwrap();
        assert_eq!(s.len(), 4);
        assert!((s.t0 - 0.5).abs() < 1e-15);
        assert_eq!(s.samples[0], [2.0, 0.0]);
    }
}
