//! Trace, gaze and target file ingestion.
//!
//! Trace CSV schema (header required):
//! `timestamp_ms,pupil_x,pupil_y,pupil_conf,cr_x,cr_y,glints,iris_vx,
//! iris_vy,n_matches,head_vx,head_vy` — the `glints` column (semicolon
//! separated `x:y` pairs) is optional and, when non-empty, overrides
//! `cr_x`/`cr_y` through the circle fit. Missing numeric fields are empty
//! cells: a frame without a pupil sample (or without a confidence value)
//! reads as zero confidence, missing velocities become zero-match edges.
//! Timestamps must be strictly increasing; rows are resampled onto
//! a uniform grid (median frame interval, nearest sample) on load with a
//! warning for gaps above twice the interval.
//!
//! Velocity columns on row `k` describe the motion from frame `k - 1` to
//! frame `k`; the first row's velocity cells are ignored.

use std::fs;
use std::path::Path;

use gazefuse_core::compensation::{combine_glints, GlintFrame};
use gazefuse_core::trace::{ChannelTrace, VelocityTrace};

use crate::CliError;

/// All channels of one eye, on the uniform grid.
pub struct LoadedTrace {
    pub pupil: ChannelTrace,
    pub cr: ChannelTrace,
    pub iris: VelocityTrace,
    pub head: VelocityTrace,
}

struct RawRow {
    line: usize,
    t_ms: f64,
    pupil: Option<[f64; 2]>,
    pupil_conf: Option<f64>,
    cr: Option<[f64; 2]>,
    glints: Vec<[f64; 2]>,
    iris_v: Option<[f64; 2]>,
    n_matches: u32,
    head_v: Option<[f64; 2]>,
}

fn input(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("line {line}: {msg}"))
}

fn parse_opt_f64(field: &str, line: usize, name: &str) -> Result<Option<f64>, CliError> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| input(line, format!("bad {name} value {field:?}")))
}

fn parse_glints(field: &str, line: usize) -> Result<Vec<[f64; 2]>, CliError> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(';')
        .map(|pair| {
            let (x, y) = pair
                .split_once(':')
                .ok_or_else(|| input(line, format!("bad glint pair {pair:?}")))?;
            let x = x.trim().parse::<f64>().map_err(|_| input(line, "bad glint x"))?;
            let y = y.trim().parse::<f64>().map_err(|_| input(line, "bad glint y"))?;
            Ok([x, y])
        })
        .collect()
}

pub fn load_trace(path: &Path) -> Result<LoadedTrace, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (_, header) = lines.next().ok_or_else(|| CliError::Input("empty trace file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| cols.iter().position(|c| *c == name);
    let need = |name: &'static str| {
        col(name).ok_or_else(|| CliError::Input(format!("missing column {name}")))
    };
    let c_t = need("timestamp_ms")?;
    let c_px = need("pupil_x")?;
    let c_py = need("pupil_y")?;
    let c_pc = need("pupil_conf")?;
    let c_cx = need("cr_x")?;
    let c_cy = need("cr_y")?;
    let c_gl = col("glints");
    let c_ivx = need("iris_vx")?;
    let c_ivy = need("iris_vy")?;
    let c_nm = need("n_matches")?;
    let c_hvx = need("head_vx")?;
    let c_hvy = need("head_vy")?;

    let mut rows: Vec<RawRow> = Vec::new();
    for (idx, raw_line) in lines {
        let line = idx + 1; // 1-based, header is line 1
        let fields: Vec<&str> = raw_line.split(',').collect();
        if fields.len() < cols.len() {
            return Err(input(line, format!("expected {} fields, got {}", cols.len(), fields.len())));
        }
        let t_ms = parse_opt_f64(fields[c_t], line, "timestamp_ms")?
            .ok_or_else(|| input(line, "missing timestamp"))?;
        if let Some(prev) = rows.last() {
            if t_ms <= prev.t_ms {
                return Err(input(line, "timestamps must be strictly increasing"));
            }
        }
        let pair = |cx: usize, cy: usize, name: &str| -> Result<Option<[f64; 2]>, CliError> {
            let x = parse_opt_f64(fields[cx], line, name)?;
            let y = parse_opt_f64(fields[cy], line, name)?;
            Ok(match (x, y) {
                (Some(x), Some(y)) => Some([x, y]),
                _ => None,
            })
        };
        let n_matches = {
            let f = fields[c_nm].trim();
            if f.is_empty() {
                0
            } else {
                f.parse::<u32>().map_err(|_| input(line, format!("bad n_matches {f:?}")))?
            }
        };
        rows.push(RawRow {
            line,
            t_ms,
            pupil: pair(c_px, c_py, "pupil")?,
            pupil_conf: parse_opt_f64(fields[c_pc], line, "pupil_conf")?,
            cr: pair(c_cx, c_cy, "cr")?,
            glints: c_gl.map_or(Ok(Vec::new()), |c| parse_glints(fields[c], line))?,
            iris_v: pair(c_ivx, c_ivy, "iris velocity")?,
            n_matches,
            head_v: pair(c_hvx, c_hvy, "head velocity")?,
        });
    }

    if rows.len() < 2 {
        return Err(CliError::Input(format!(
            "trace needs at least 2 samples, got {}",
            rows.len()
        )));
    }

    // Uniform grid at the median frame interval, nearest input row wins.
    let mut diffs: Vec<f64> = rows.windows(2).map(|w| w[1].t_ms - w[0].t_ms).collect();
    diffs.sort_by(f64::total_cmp);
    let dt_ms = diffs[diffs.len() / 2];
    for w in rows.windows(2) {
        if w[1].t_ms - w[0].t_ms > 2.0 * dt_ms {
            eprintln!(
                "warning: {} ms gap before line {} exceeds twice the frame interval",
                w[1].t_ms - w[0].t_ms,
                w[1].line
            );
        }
    }
    let t0_ms = rows[0].t_ms;
    let span = rows.last().unwrap().t_ms - t0_ms;
    let n = (span / dt_ms).round() as usize + 1;
    let mut picked: Vec<&RawRow> = Vec::with_capacity(n);
    let mut cursor = 0usize;
    for k in 0..n {
        let t = t0_ms + k as f64 * dt_ms;
        while cursor + 1 < rows.len()
            && (rows[cursor + 1].t_ms - t).abs() <= (rows[cursor].t_ms - t).abs()
        {
            cursor += 1;
        }
        picked.push(&rows[cursor]);
    }

    let t0 = t0_ms / 1000.0;
    let dt = dt_ms / 1000.0;

    // Pupil channel: missing samples carry the last position with zero
    // confidence.
    let mut pupil_samples = Vec::with_capacity(n);
    let mut pupil_conf = Vec::with_capacity(n);
    let mut last_pupil = [0.0, 0.0];
    for row in &picked {
        match row.pupil {
            Some(p) => {
                last_pupil = p;
                pupil_samples.push(p);
                pupil_conf.push(row.pupil_conf.unwrap_or(0.0).clamp(0.0, 1.0));
            }
            None => {
                pupil_samples.push(last_pupil);
                pupil_conf.push(0.0);
            }
        }
    }

    // CR channel: glints dominate, then explicit centers; missing frames
    // carry the last center with zero confidence.
    let mut cr_samples = Vec::with_capacity(n);
    let mut cr_conf = Vec::with_capacity(n);
    let mut last_cr = [0.0, 0.0];
    for row in &picked {
        let from_glints = if row.glints.is_empty() {
            None
        } else {
            combine_glints(&GlintFrame::all_valid(row.glints.clone())).ok()
        };
        match from_glints.map(|e| e.center).or(row.cr) {
            Some(c) => {
                last_cr = c;
                cr_samples.push(c);
                cr_conf.push(1.0);
            }
            None => {
                cr_samples.push(last_cr);
                cr_conf.push(0.0);
            }
        }
    }

    // Velocity edges: row k + 1 carries the edge from frame k to k + 1.
    let mut iris_edges = Vec::with_capacity(n - 1);
    let mut matches = Vec::with_capacity(n - 1);
    let mut head_edges = Vec::with_capacity(n - 1);
    for row in picked.iter().skip(1) {
        match row.iris_v {
            Some(v) => {
                iris_edges.push(v);
                matches.push(row.n_matches);
            }
            None => {
                iris_edges.push([0.0, 0.0]);
                matches.push(0);
            }
        }
        head_edges.push(row.head_v.unwrap_or([0.0, 0.0]));
    }

    let to_num = |e: gazefuse_core::Error| CliError::Input(e.to_string());
    Ok(LoadedTrace {
        pupil: ChannelTrace::new(t0, dt, pupil_samples, pupil_conf).map_err(to_num)?,
        cr: ChannelTrace::new(t0, dt, cr_samples, cr_conf).map_err(to_num)?,
        iris: VelocityTrace::new(t0, dt, iris_edges, matches).map_err(to_num)?,
        head: VelocityTrace::new(t0, dt, head_edges, vec![u32::MAX; n - 1]).map_err(to_num)?,
    })
}

/// A gaze CSV as written by `fuse`: comment line, header
/// `t_ms,x,y,variance,confidence`.
pub fn load_gaze(path: &Path) -> Result<ChannelTrace, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut times = Vec::new();
    let mut samples = Vec::new();
    let mut confidence = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("t_ms") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() < 5 {
            return Err(input(line, "expected t_ms,x,y,variance,confidence"));
        }
        let num = |k: usize, name: &str| -> Result<f64, CliError> {
            fields[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| input(line, format!("bad {name} value {:?}", fields[k])))
        };
        times.push(num(0, "t_ms")?);
        samples.push([num(1, "x")?, num(2, "y")?]);
        confidence.push(num(4, "confidence")?.clamp(0.0, 1.0));
    }
    if times.len() < 2 {
        return Err(CliError::Input("gaze file needs at least 2 samples".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Input("gaze timestamps must be strictly increasing".into()));
    }
    let dt = (times[1] - times[0]) / 1000.0;
    ChannelTrace::new(times[0] / 1000.0, dt, samples, confidence)
        .map_err(|e| CliError::Input(e.to_string()))
}

/// Stimulus target rows: `onset_ms,x_deg,y_deg[,x_px,y_px]`. Degree
/// columns may be absent for onset-only files.
#[derive(Debug, Clone, Copy)]
pub struct TargetRow {
    pub onset_s: f64,
    pub position: Option<[f64; 2]>,
    pub pixels: Option<[f64; 2]>,
}

pub fn load_targets(path: &Path) -> Result<Vec<TargetRow>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| CliError::Input("empty targets file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| cols.iter().position(|c| *c == name);
    let c_on = col("onset_ms").ok_or_else(|| CliError::Input("missing column onset_ms".into()))?;
    let c_x = col("x_deg");
    let c_y = col("y_deg");
    let c_px = col("x_px");
    let c_py = col("y_px");

    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() < cols.len() {
            return Err(input(line, format!("expected {} fields, got {}", cols.len(), fields.len())));
        }
        let get = |c: Option<usize>, name: &str| -> Result<Option<f64>, CliError> {
            match c {
                Some(c) => parse_opt_f64(fields[c], line, name),
                None => Ok(None),
            }
        };
        let onset = get(Some(c_on), "onset_ms")?
            .ok_or_else(|| input(line, "missing onset_ms"))?;
        let position = match (get(c_x, "x_deg")?, get(c_y, "y_deg")?) {
            (Some(x), Some(y)) => Some([x, y]),
            _ => None,
        };
        let pixels = match (get(c_px, "x_px")?, get(c_py, "y_px")?) {
            (Some(x), Some(y)) => Some([x, y]),
            _ => None,
        };
        if let Some(prev) = rows.last() {
            let prev: &TargetRow = prev;
            if onset / 1000.0 <= prev.onset_s {
                return Err(input(line, "target onsets must be strictly increasing"));
            }
        }
        rows.push(TargetRow { onset_s: onset / 1000.0, position, pixels });
    }
    if rows.is_empty() {
        return Err(CliError::Input("targets file has no rows".into()));
    }
    Ok(rows)
}
