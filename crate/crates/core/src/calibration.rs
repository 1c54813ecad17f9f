//! Maps raw signals to visual angle.
//!
//! The position channel is calibrated by a full second-order polynomial of
//! the raw `(u, v)` coordinates. The velocity channel cannot use the same
//! scheme (its integral drifts), so it gets a 2x2 linear map fitted from
//! the relative displacements across calibration saccades: the velocity is
//! integrated from 30 ms before each saccade onset to 30 ms after its
//! landing and paired with the known target displacement. A small affine
//! model corrects for the raster-display rewrite delay at a given stimulus
//! position.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::trace::{ChannelTrace, VelocityTrace};

/// Quadratic basis `[1, u, v, uv, u^2, v^2]`.
fn poly_basis(u: f64, v: f64) -> [f64; 6] {
    [1.0, u, v, u * v, u * u, v * v]
}

/// Full second-order polynomial map from raw `(u, v)` to degrees, one
/// coefficient row per output axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCalibration {
    pub coeffs: [[f64; 6]; 2],
    pub residual_rms: f64,
}

impl PolyCalibration {
    pub fn identity() -> Self {
        Self {
            coeffs: [[0.0, 1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]],
            residual_rms: 0.0,
        }
    }

    pub fn apply(&self, raw: [f64; 2]) -> [f64; 2] {
        let basis = poly_basis(raw[0], raw[1]);
        let mut out = [0.0; 2];
        for ax in 0..2 {
            out[ax] = self.coeffs[ax].iter().zip(&basis).map(|(c, b)| c * b).sum();
        }
        out
    }
}

/// 2x2 linear map from raw displacement units to degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityCalibration {
    pub matrix: [[f64; 2]; 2],
    pub residual_rms: f64,
    /// Singular-value condition number of the raw-displacement design.
    pub condition: f64,
}

impl VelocityCalibration {
    pub fn identity() -> Self {
        Self { matrix: [[1.0, 0.0], [0.0, 1.0]], residual_rms: 0.0, condition: 1.0 }
    }

    pub fn apply(&self, raw: [f64; 2]) -> [f64; 2] {
        [
            self.matrix[0][0] * raw[0] + self.matrix[0][1] * raw[1],
            self.matrix[1][0] * raw[0] + self.matrix[1][1] * raw[1],
        ]
    }
}

/// Target onsets (strictly increasing, seconds) and positions (degrees).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTargets {
    onsets: Vec<f64>,
    positions: Vec<[f64; 2]>,
}

impl CalibrationTargets {
    pub fn new(onsets: Vec<f64>, positions: Vec<[f64; 2]>) -> Result<Self> {
        if positions.len() != onsets.len() {
            return Err(Error::DimensionMismatch {
                what: "target positions",
                expected: onsets.len(),
                got: positions.len(),
            });
        }
        if onsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("target onsets must be strictly increasing"));
        }
        Ok(Self { onsets, positions })
    }

    pub fn len(&self) -> usize {
        self.onsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.onsets.is_empty()
    }

    pub fn onset(&self, k: usize) -> f64 {
        self.onsets[k]
    }

    pub fn position(&self, k: usize) -> [f64; 2] {
        self.positions[k]
    }

    pub fn onsets(&self) -> &[f64] {
        &self.onsets
    }
}

/// Knobs for saccade displacement extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    /// Integration margin before onset and after landing, seconds.
    pub saccade_margin_s: f64,
    /// A saccade spans the samples around its speed peak that stay above
    /// this fraction of the peak.
    pub landing_fraction: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { saccade_margin_s: 0.030, landing_fraction: 0.2 }
    }
}

/// Least-squares fit of the quadratic map from `(raw uv, target degrees)`
/// pairs. Needs at least six well-spread samples.
pub fn fit_poly(samples: &[([f64; 2], [f64; 2])]) -> Result<PolyCalibration> {
    if samples.len() < 6 {
        return Err(Error::DegenerateCalibration("need at least 6 calibration samples"));
    }

    let mut coeffs = [[0.0; 6]; 2];
    for ax in 0..2 {
        let mut ata = vec![vec![0.0; 6]; 6];
        let mut atb = vec![0.0; 6];
        for (raw, target) in samples {
            let basis = poly_basis(raw[0], raw[1]);
            for r in 0..6 {
                for c in 0..6 {
                    ata[r][c] += basis[r] * basis[c];
                }
                atb[r] += basis[r] * target[ax];
            }
        }
        let sol = solve_dense(&mut ata, &mut atb)
            .ok_or(Error::DegenerateCalibration("rank-deficient polynomial design"))?;
        coeffs[ax].copy_from_slice(&sol);
    }

    let cal = PolyCalibration { coeffs, residual_rms: 0.0 };
    let sq_sum: f64 = samples
        .iter()
        .map(|(raw, target)| {
            let got = cal.apply(*raw);
            (got[0] - target[0]).powi(2) + (got[1] - target[1]).powi(2)
        })
        .sum();
    Ok(PolyCalibration { residual_rms: (sq_sum / samples.len() as f64).sqrt(), ..cal })
}

/// Least-squares 2x2 map from `(raw displacement, target displacement)`
/// pairs. Needs two linearly independent raw displacements.
pub fn fit_velocity_map(pairs: &[([f64; 2], [f64; 2])]) -> Result<VelocityCalibration> {
    if pairs.len() < 2 {
        return Err(Error::DegenerateCalibration("need at least 2 saccade displacements"));
    }

    // Shared Gram matrix G = sum raw raw', cross term C = sum target raw'.
    let mut g = [[0.0; 2]; 2];
    let mut c = [[0.0; 2]; 2];
    for (raw, target) in pairs {
        for r in 0..2 {
            for col in 0..2 {
                g[r][col] += raw[r] * raw[col];
                c[r][col] += target[r] * raw[col];
            }
        }
    }
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let scale = (g[0][0] + g[1][1]) / 2.0;
    if det <= 1e-12 * scale * scale {
        return Err(Error::DegenerateCalibration("saccade displacements are not independent"));
    }
    let inv = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
    let mut matrix = [[0.0; 2]; 2];
    for r in 0..2 {
        for col in 0..2 {
            matrix[r][col] = c[r][0] * inv[0][col] + c[r][1] * inv[1][col];
        }
    }

    // Eigenvalues of the symmetric Gram matrix give the squared singular
    // values of the design.
    let tr = g[0][0] + g[1][1];
    let gap = ((tr * tr - 4.0 * det).max(0.0)).sqrt();
    let (lo, hi) = ((tr - gap) / 2.0, (tr + gap) / 2.0);
    let condition = (hi / lo.max(1e-300)).sqrt();

    let cal = VelocityCalibration { matrix, residual_rms: 0.0, condition };
    let sq_sum: f64 = pairs
        .iter()
        .map(|(raw, target)| {
            let got = cal.apply(*raw);
            (got[0] - target[0]).powi(2) + (got[1] - target[1]).powi(2)
        })
        .sum();
    Ok(VelocityCalibration { residual_rms: (sq_sum / pairs.len() as f64).sqrt(), ..cal })
}

/// Extracts one `(raw displacement, target displacement)` pair per target
/// transition by integrating the velocity channel across the saccade.
///
/// Within each transition window the saccade is the contiguous run around
/// the speed peak staying above `landing_fraction * peak`; the integration
/// extends `saccade_margin_s` beyond it on both sides (clamped to the
/// window). Transitions with no motion are skipped.
pub fn saccade_displacements(
    velocity: &VelocityTrace,
    targets: &CalibrationTargets,
    cfg: &CalibrationConfig,
) -> Result<Vec<([f64; 2], [f64; 2])>> {
    if targets.len() < 2 {
        return Err(Error::DegenerateCalibration("need at least 2 targets"));
    }
    let n = velocity.len();
    if n == 0 {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let dt = velocity.dt;
    let margin = (cfg.saccade_margin_s / dt).round() as usize;

    let edge_at = |t: f64|-> usize {
        (((t - velocity.t0) / dt - 1e-9).ceil().max(0.0) as usize).min(n)
    };

    let mut pairs = Vec::new();
    for k in 1..targets.len() {
        let w_start = edge_at(targets.onset(k));
        let w_end = if k + 1 < targets.len() { edge_at(targets.onset(k + 1)) } else { n };
        if w_start >= w_end {
            continue;
        }
        let speeds: Vec<f64> = velocity.edges[w_start..w_end]
            .iter()
            .map(|e| (e[0] * e[0] + e[1] * e[1]).sqrt())
            .collect();
        let (peak_rel, &peak) = speeds
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        if peak <= 0.0 {
            continue;
        }
        let cutoff = cfg.landing_fraction * peak;
        let mut onset = peak_rel;
        while onset > 0 && speeds[onset - 1] >= cutoff {
            onset -= 1;
        }
        let mut landing = peak_rel;
        while landing + 1 < speeds.len() && speeds[landing + 1] >= cutoff {
            landing += 1;
        }
        let lo = w_start + onset.saturating_sub(margin);
        let hi = (w_start + landing + margin).min(w_end - 1);

        let mut raw = [0.0; 2];
        for e in &velocity.edges[lo..=hi] {
            raw[0] += e[0];
            raw[1] += e[1];
        }
        let prev = targets.position(k - 1);
        let here = targets.position(k);
        pairs.push((raw, [here[0] - prev[0], here[1] - prev[1]]));
    }

    if pairs.len() < 2 {
        return Err(Error::DegenerateCalibration("fewer than 2 usable saccades"));
    }
    Ok(pairs)
}

/// Default delay-model coefficients `[per-x, per-y, constant]` in ms.
pub const DISPLAY_DELAY_COEFFS: [f64; 3] = [21.4, 4.26, -2.35];

/// Raster rewrite delay in ms for a stimulus at `(x, y)`.
pub fn display_delay_ms(x: f64, y: f64) -> f64 {
    display_delay_with(&DISPLAY_DELAY_COEFFS, x, y)
}

/// Same model with caller-supplied coefficients.
pub fn display_delay_with(coeffs: &[f64; 3], x: f64, y: f64) -> f64 {
    coeffs[0] * x + coeffs[1] * y + coeffs[2]
}

/// Applies both calibrations, turning raw units into degrees.
pub fn apply_calibration(
    position: &ChannelTrace,
    velocity: &VelocityTrace,
    poly: &PolyCalibration,
    vel_map: &VelocityCalibration,
) -> (ChannelTrace, VelocityTrace) {
    let samples = position.samples.iter().map(|&s| poly.apply(s)).collect();
    let pos = ChannelTrace {
        t0: position.t0,
        dt: position.dt,
        samples,
        confidence: position.confidence.clone(),
    };
    let edges = velocity.edges.iter().map(|&e| vel_map.apply(e)).collect();
    let vel = VelocityTrace {
        t0: velocity.t0,
        dt: velocity.dt,
        edges,
        n_matches: velocity.n_matches.clone(),
    };
    (pos, vel)
}

/// On-disk calibration format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub poly: PolyCoeffs,
    pub velocity: [[f64; 2]; 2],
    pub residuals: CalibrationResiduals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyCoeffs {
    pub x: [f64; 6],
    pub y: [f64; 6],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResiduals {
    pub poly: f64,
    pub velocity: f64,
}

impl CalibrationFile {
    pub fn from_parts(poly: &PolyCalibration, vel: &VelocityCalibration) -> Self {
        Self {
            poly: PolyCoeffs { x: poly.coeffs[0], y: poly.coeffs[1] },
            velocity: vel.matrix,
            residuals: CalibrationResiduals {
                poly: poly.residual_rms,
                velocity: vel.residual_rms,
            },
        }
    }

    pub fn into_parts(self) -> (PolyCalibration, VelocityCalibration) {
        let poly = PolyCalibration {
            coeffs: [self.poly.x, self.poly.y],
            residual_rms: self.residuals.poly,
        };
        let g = &self.velocity;
        let vel = VelocityCalibration {
            matrix: *g,
            residual_rms: self.residuals.velocity,
            condition: 0.0,
        };
        (poly, vel)
    }
}
