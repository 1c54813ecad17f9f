//! Removes camera- and head-relative motion from the raw channels.
//!
//! The position channel becomes `P - CR`, where `CR` is the center of the
//! circle fitted through the valid glint centers of each frame, and the
//! velocity channel becomes `i - H_v`, the iris velocity minus the head
//! velocity measured from a fixed head region.

use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::trace::{same_grid, ChannelTrace, VelocityTrace};

/// Glint centers detected in one frame, with per-glint validity. Off-cornea
/// glints arrive flagged invalid and are excluded from the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct GlintFrame {
    pub points: Vec<[f64; 2]>,
    pub valid: Vec<bool>,
}

impl GlintFrame {
    pub fn new(points: Vec<[f64; 2]>, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != points.len() {
            return Err(Error::DimensionMismatch {
                what: "glint validity",
                expected: points.len(),
                got: valid.len(),
            });
        }
        Ok(Self { points, valid })
    }

    pub fn all_valid(points: Vec<[f64; 2]>) -> Self {
        let n = points.len();
        Self { points, valid: vec![true; n] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrQuality {
    /// Three or more glints, least-squares circle fit.
    CircleFit,
    /// One or two glints (or a degenerate constellation): plain centroid.
    Centroid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrEstimate {
    pub center: [f64; 2],
    pub quality: CrQuality,
}

/// Combines the valid glints of one frame into a single CR center.
///
/// With three or more valid glints the center comes from the algebraic
/// least-squares circle fit (normal equations on the `x^2 + y^2` form,
/// computed about the centroid for conditioning); with one or two it is the
/// centroid. Zero valid glints is an error so the caller can lower the
/// position confidence instead.
pub fn combine_glints(frame: &GlintFrame) -> Result<CrEstimate> {
    let pts: Vec<[f64; 2]> = frame
        .points
        .iter()
        .zip(&frame.valid)
        .filter(|(_, &v)| v)
        .map(|(p, _)| *p)
        .collect();
    if pts.is_empty() {
        return Err(Error::MissingCr);
    }

    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    if pts.len() < 3 {
        return Ok(CrEstimate { center: [cx, cy], quality: CrQuality::Centroid });
    }

    // Fit x^2 + y^2 = a x + b y + c in centered coordinates.
    let mut m = vec![vec![0.0; 3]; 3];
    let mut rhs = vec![0.0; 3];
    for p in &pts {
        let (x, y) = (p[0] - cx, p[1] - cy);
        let z = x * x + y * y;
        let row = [x, y, 1.0];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += row[r] * row[c];
            }
            rhs[r] += row[r] * z;
        }
    }
    match solve_dense(&mut m, &mut rhs) {
        Some(sol) => Ok(CrEstimate {
            center: [cx + sol[0] / 2.0, cy + sol[1] / 2.0],
            quality: CrQuality::CircleFit,
        }),
        // Collinear glints: the circle is unconstrained, fall back.
        None => Ok(CrEstimate { center: [cx, cy], quality: CrQuality::Centroid }),
    }
}

/// Subtracts the compensatory channels: position becomes `P - CR` with the
/// minimum of the paired confidences, velocity becomes `i - H_v` with the
/// minimum of the paired match counts.
pub fn compensate(
    position: &ChannelTrace,
    cr: &ChannelTrace,
    velocity: &VelocityTrace,
    head_velocity: &VelocityTrace,
) -> Result<(ChannelTrace, VelocityTrace)> {
    if cr.len() != position.len() {
        return Err(Error::DimensionMismatch {
            what: "cr trace",
            expected: position.len(),
            got: cr.len(),
        });
    }
    if head_velocity.len() != velocity.len() {
        return Err(Error::DimensionMismatch {
            what: "head velocity",
            expected: velocity.len(),
            got: head_velocity.len(),
        });
    }
    same_grid(position.dt, cr.dt, "position vs cr dt")?;
    same_grid(velocity.dt, head_velocity.dt, "iris vs head velocity dt")?;

    let samples = position
        .samples
        .iter()
        .zip(&cr.samples)
        .map(|(p, c)| [p[0] - c[0], p[1] - c[1]])
        .collect();
    let confidence = position
        .confidence
        .iter()
        .zip(&cr.confidence)
        .map(|(a, b)| a.min(*b))
        .collect();
    let out_pos = ChannelTrace::new(position.t0, position.dt, samples, confidence)?;

    let edges = velocity
        .edges
        .iter()
        .zip(&head_velocity.edges)
        .map(|(v, h)| [v[0] - h[0], v[1] - h[1]])
        .collect();
    let matches = velocity
        .n_matches
        .iter()
        .zip(&head_velocity.n_matches)
        .map(|(a, b)| *a.min(b))
        .collect();
    let out_vel = VelocityTrace::new(velocity.t0, velocity.dt, edges, matches)?;

    Ok((out_pos, out_vel))
}
