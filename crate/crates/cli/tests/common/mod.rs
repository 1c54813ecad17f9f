//! Shared fixture generators for the CLI tests: synthetic recordings with
//! known calibration maps and gaze trajectories, written in the trace CSV
//! schema, plus a copy of the output formatter for byte-level oracles.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

/// Mirrors the binary's 9-significant-digit formatter so oracles can
/// predict output bytes.
pub fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let sci = format!("{:.8e}", x);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..=12).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mant))
    }
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gazefuse"))
}

pub fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gazefuse-tests-{}", std::process::id())).join(name);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn poly_apply(coeffs: &[[f64; 6]; 2], uv: [f64; 2]) -> [f64; 2] {
    let basis = [1.0, uv[0], uv[1], uv[0] * uv[1], uv[0] * uv[0], uv[1] * uv[1]];
    let mut out = [0.0; 2];
    for ax in 0..2 {
        out[ax] = coeffs[ax].iter().zip(basis).map(|(c, b)| c * b).sum();
    }
    out
}

fn mat_apply(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn mat_inv(m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

pub struct CalibrationFixture {
    pub trace: PathBuf,
    pub targets: PathBuf,
    pub poly: [[f64; 6]; 2],
    pub vmap: [[f64; 2]; 2],
    /// True gaze in degrees per frame.
    pub gaze_deg: Vec<[f64; 2]>,
    pub onsets_s: Vec<f64>,
    pub fs: f64,
}

/// A clean 12-target recording: piecewise-constant raw eye position with
/// 6-edge saccades 40 ms after each onset, a drifting corneal reflection,
/// a small head-motion velocity, and exactly consistent iris velocities.
pub fn write_calibration_recording(dir: &Path) -> CalibrationFixture {
    let fs = 250.0;
    let dwell = 250usize; // 1 s per target
    let poly = [
        [0.2, 2.0, 0.1, 0.03, 0.02, -0.01],
        [-0.1, 0.05, 1.8, -0.02, 0.01, 0.03],
    ];
    let vmap = [[1.7, 0.15], [-0.1, 2.1]];
    let vmap_inv = mat_inv(&vmap);
    let raw_points: [[f64; 2]; 12] = [
        [-2.0, -1.5],
        [1.0, 0.5],
        [-1.0, 1.5],
        [2.0, -0.5],
        [0.0, 0.0],
        [-2.0, 1.0],
        [2.0, 1.5],
        [-1.0, -1.0],
        [1.0, 1.0],
        [0.0, -1.5],
        [2.0, 0.5],
        [-2.0, 0.0],
    ];

    let n = raw_points.len() * dwell;
    let mut raw = Vec::with_capacity(n);
    for (k, point) in raw_points.iter().enumerate() {
        for j in 0..dwell {
            if k > 0 && j < 10 {
                // still on the previous target during the 40 ms latency
                raw.push(raw_points[k - 1]);
            } else if k > 0 && j < 16 {
                // 6-frame linear saccade
                let f = (j - 9) as f64 / 6.0;
                let prev = raw_points[k - 1];
                raw.push([
                    prev[0] + (point[0] - prev[0]) * f,
                    prev[1] + (point[1] - prev[1]) * f,
                ]);
            } else {
                raw.push(*point);
            }
        }
    }

    let gaze_deg: Vec<[f64; 2]> = raw.iter().map(|&uv| poly_apply(&poly, uv)).collect();

    // Head velocity and CR drift exercise the compensation path.
    let head_v: Vec<[f64; 2]> = (0..n - 1)
        .map(|k| [0.002 * (k as f64 / 50.0).sin(), 0.0015 * (k as f64 / 70.0).cos()])
        .collect();
    let cr: Vec<[f64; 2]> = (0..n)
        .map(|k| [100.0 + 0.01 * (k as f64 / 90.0).sin(), 120.0 + 0.01 * (k as f64 / 110.0).cos()])
        .collect();

    let mut lines = vec![
        "timestamp_ms,pupil_x,pupil_y,pupil_conf,cr_x,cr_y,glints,iris_vx,iris_vy,n_matches,head_vx,head_vy"
            .to_string(),
    ];
    for k in 0..n {
        let t_ms = k as f64 * 1000.0 / fs;
        let pupil = [raw[k][0] + cr[k][0], raw[k][1] + cr[k][1]];
        // Four glints on a circle around the CR center.
        let glints = [0.0_f64, 1.6, 3.2, 4.8]
            .iter()
            .map(|a| {
                format!(
                    "{}:{}",
                    fmt_g9(cr[k][0] + 3.0 * a.cos()),
                    fmt_g9(cr[k][1] + 3.0 * a.sin())
                )
            })
            .collect::<Vec<_>>()
            .join(";");
        let (iris_v, head) = if k == 0 {
            (String::from(",,"), String::from(","))
        } else {
            let dg = [
                gaze_deg[k][0] - gaze_deg[k - 1][0],
                gaze_deg[k][1] - gaze_deg[k - 1][1],
            ];
            let mut v = mat_apply(&vmap_inv, dg);
            v[0] += head_v[k - 1][0];
            v[1] += head_v[k - 1][1];
            (
                format!("{},{},80", fmt_g9(v[0]), fmt_g9(v[1])),
                format!("{},{}", fmt_g9(head_v[k - 1][0]), fmt_g9(head_v[k - 1][1])),
            )
        };
        lines.push(format!(
            "{},{},{},1,{},{},{glints},{iris_v},{head}",
            fmt_g9(t_ms),
            fmt_g9(pupil[0]),
            fmt_g9(pupil[1]),
            fmt_g9(cr[k][0]),
            fmt_g9(cr[k][1]),
        ));
    }
    let trace = dir.join("recording.csv");
    fs::write(&trace, lines.join("\n") + "\n").unwrap();

    let onsets_s: Vec<f64> = (0..raw_points.len()).map(|k| k as f64 * dwell as f64 / fs).collect();
    let mut tlines = vec!["onset_ms,x_deg,y_deg".to_string()];
    for (k, &uv) in raw_points.iter().enumerate() {
        let deg = poly_apply(&poly, uv);
        tlines.push(format!(
            "{},{},{}",
            fmt_g9(onsets_s[k] * 1000.0),
            fmt_g9(deg[0]),
            fmt_g9(deg[1])
        ));
    }
    let targets = dir.join("targets.csv");
    fs::write(&targets, tlines.join("\n") + "\n").unwrap();

    CalibrationFixture { trace, targets, poly, vmap, gaze_deg, onsets_s, fs }
}

/// A plain random-walk trace without glints: returns the values the loader
/// will see (already round-tripped through the formatter).
pub struct PlainTrace {
    pub path: PathBuf,
    pub pupil: Vec<[f64; 2]>,
    pub cr: Vec<[f64; 2]>,
    pub iris_v: Vec<[f64; 2]>,
    pub head_v: Vec<[f64; 2]>,
}

pub fn write_plain_trace(dir: &Path, n: usize, seed: u64) -> PlainTrace {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let round = |x: f64| fmt_g9(x).parse::<f64>().unwrap();

    let mut pupil = Vec::with_capacity(n);
    let mut cr = Vec::with_capacity(n);
    let mut iris_v = Vec::with_capacity(n.saturating_sub(1));
    let mut head_v = Vec::with_capacity(n.saturating_sub(1));
    let mut p = [50.0, 60.0];
    for k in 0..n {
        p[0] += rng.random_range(-0.05..0.05);
        p[1] += rng.random_range(-0.05..0.05);
        pupil.push([round(p[0]), round(p[1])]);
        cr.push([round(100.0 + 0.001 * k as f64), round(120.0 - 0.0005 * k as f64)]);
        if k > 0 {
            iris_v.push([round(rng.random_range(-0.02..0.02)), round(rng.random_range(-0.02..0.02))]);
            head_v.push([round(rng.random_range(-0.001..0.001)), round(0.0)]);
        }
    }

    let mut lines = vec![
        "timestamp_ms,pupil_x,pupil_y,pupil_conf,cr_x,cr_y,glints,iris_vx,iris_vy,n_matches,head_vx,head_vy"
            .to_string(),
    ];
    for k in 0..n {
        let vel = if k == 0 {
            String::from(",,,,")
        } else {
            format!(
                "{},{},80,{},{}",
                fmt_g9(iris_v[k - 1][0]),
                fmt_g9(iris_v[k - 1][1]),
                fmt_g9(head_v[k - 1][0]),
                fmt_g9(head_v[k - 1][1]),
            )
        };
        lines.push(format!(
            "{},{},{},1,{},{},,{vel}",
            fmt_g9(k as f64 * 4.0),
            fmt_g9(pupil[k][0]),
            fmt_g9(pupil[k][1]),
            fmt_g9(cr[k][0]),
            fmt_g9(cr[k][1]),
        ));
    }
    let path = dir.join(format!("plain-{seed}.csv"));
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    PlainTrace { path, pupil, cr, iris_v, head_v }
}
