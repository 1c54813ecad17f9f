//! The five subcommands. Each one is deterministic for fixed inputs,
//! config and seed; all numeric output goes through the 9-digit formatter.

use std::fs;
use std::path::{Path, PathBuf};

use gazefuse_core::calibration::{
    apply_calibration, display_delay_with, fit_poly, fit_velocity_map, saccade_displacements,
    CalibrationFile, CalibrationTargets, PolyCalibration, VelocityCalibration,
};
use gazefuse_core::compensation::compensate;
use gazefuse_core::confidence::{build_weight_schedule, classify_blinks};
use gazefuse_core::events::{count_in_windows, detect_microsaccades, EventKind};
use gazefuse_core::fusion::{fuse, FusionResult};
use gazefuse_core::metrics::{
    accuracy, detrend_pursuit, fixation_window, s2s_rms, std_precision, RampStimulus,
    SampleWindow,
};
use gazefuse_core::simulator::{make_original, run_study, run_trial, SimReport};
use gazefuse_core::trace::ChannelTrace;
use gazefuse_core::Error as CoreError;

use crate::config::RunConfig;
use crate::CliError;
use crate::format::fmt_g9;
use crate::tracefile::{load_gaze, load_targets, load_trace, LoadedTrace, TargetRow};

/// Numerical failures exit 3, everything else about the inputs exits 2.
pub fn core_err(e: CoreError) -> CliError {
    match e {
        CoreError::SingularSystem { .. }
        | CoreError::ResidualCheck { .. }
        | CoreError::DegenerateCalibration(_)
        | CoreError::DegenerateDistribution(_) => CliError::Numerical(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(path) => fs::write(path, content)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn load_calibration_file(path: &Path) -> Result<(PolyCalibration, VelocityCalibration), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let file: CalibrationFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("bad calibration {}: {e}", path.display())))?;
    Ok(file.into_parts())
}

/// Per-eye pipeline: compensate, optionally calibrate, weight, fuse.
fn fuse_one(
    loaded: &LoadedTrace,
    calibration: Option<&(PolyCalibration, VelocityCalibration)>,
    cfg: &RunConfig,
) -> Result<FusionResult, CliError> {
    let (pos, vel) = compensate(&loaded.pupil, &loaded.cr, &loaded.iris, &loaded.head)
        .map_err(core_err)?;
    let (pos, vel) = match calibration {
        Some((poly, vmap)) => apply_calibration(&pos, &vel, poly, vmap),
        None => (pos, vel),
    };
    let ccfg = cfg.confidence.to_core();
    let blinks = classify_blinks(&pos.confidence, &vel.n_matches, &ccfg).map_err(core_err)?;
    let weights =
        build_weight_schedule(&pos.confidence, &vel.n_matches, &blinks, &ccfg).map_err(core_err)?;
    fuse(&pos, &vel, &weights).map_err(core_err)
}

fn gaze_csv(result: &FusionResult, calibrated: bool) -> String {
    let units = if calibrated { "degrees" } else { "raw" };
    let trace = &result.hybrid;
    let mut out = String::new();
    out.push_str(&format!("# gazefuse fuse units={units}\n"));
    out.push_str("t_ms,x,y,variance,confidence\n");
    for k in 0..trace.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_g9(trace.time_at(k) * 1000.0),
            fmt_g9(trace.samples[k][0]),
            fmt_g9(trace.samples[k][1]),
            fmt_g9(result.variance[k]),
            fmt_g9(trace.confidence[k]),
        ));
    }
    out
}

pub struct FuseOpts {
    pub traces: Vec<PathBuf>,
    pub cyclopean: bool,
    pub calibration: Option<PathBuf>,
    pub calibration2: Option<PathBuf>,
    pub uncalibrated: bool,
    pub output: Option<PathBuf>,
}

pub fn cmd_fuse(opts: &FuseOpts, cfg: &RunConfig) -> Result<(), CliError> {
    if opts.cyclopean && opts.traces.len() != 2 {
        return Err(CliError::Input("--cyclopean needs two trace files".into()));
    }
    if !opts.cyclopean && opts.traces.len() != 1 {
        return Err(CliError::Input("expected one trace file (or two with --cyclopean)".into()));
    }
    let calibrated = !opts.uncalibrated;
    let calib_first = match (&opts.calibration, calibrated) {
        (Some(path), true) => Some(load_calibration_file(path)?),
        (None, true) => {
            return Err(CliError::Input(
                "no calibration file; pass --calibration or --uncalibrated".into(),
            ))
        }
        (_, false) => None,
    };
    let calib_second = match (&opts.calibration2, calibrated) {
        (Some(path), true) => Some(load_calibration_file(path)?),
        _ => calib_first.clone(),
    };

    let first = fuse_one(&load_trace(&opts.traces[0])?, calib_first.as_ref(), cfg)?;
    let result = if opts.cyclopean {
        let second = fuse_one(&load_trace(&opts.traces[1])?, calib_second.as_ref(), cfg)?;
        midpoint(&first, &second)?
    } else {
        first
    };
    write_output(opts.output.as_deref(), &gaze_csv(&result, calibrated))
}

/// Cyclopean combination: midpoint of the eye traces, variance of the
/// average, minimum confidence.
fn midpoint(left: &FusionResult, right: &FusionResult) -> Result<FusionResult, CliError> {
    let (l, r) = (&left.hybrid, &right.hybrid);
    if l.len() != r.len() {
        return Err(CliError::Input(format!(
            "cyclopean traces differ in length: {} vs {}",
            l.len(),
            r.len()
        )));
    }
    if (l.dt - r.dt).abs() > 1e-12 * l.dt {
        return Err(CliError::Input("cyclopean traces differ in frame interval".into()));
    }
    let samples = l
        .samples
        .iter()
        .zip(&r.samples)
        .map(|(a, b)| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0])
        .collect();
    let confidence = l
        .confidence
        .iter()
        .zip(&r.confidence)
        .map(|(a, b)| a.min(*b))
        .collect();
    let variance = left
        .variance
        .iter()
        .zip(&right.variance)
        .map(|(a, b)| (a + b) / 4.0)
        .collect();
    Ok(FusionResult {
        hybrid: ChannelTrace::new(l.t0, l.dt, samples, confidence)
            .map_err(|e| CliError::Input(e.to_string()))?,
        variance,
    })
}

/// Targets with positions, onsets optionally shifted by the display delay.
fn positioned_targets(
    rows: &[TargetRow],
    cfg: &RunConfig,
) -> Result<CalibrationTargets, CliError> {
    let mut onsets = Vec::with_capacity(rows.len());
    let mut positions = Vec::with_capacity(rows.len());
    for row in rows {
        let position = row
            .position
            .ok_or_else(|| CliError::Input("targets file needs x_deg and y_deg columns".into()))?;
        onsets.push(corrected_onset(row, cfg));
        positions.push(position);
    }
    CalibrationTargets::new(onsets, positions).map_err(core_err)
}

fn corrected_onset(row: &TargetRow, cfg: &RunConfig) -> f64 {
    let cal = &cfg.calibration;
    match (cal.apply_display_delay, row.pixels) {
        (true, Some([x, y])) => {
            row.onset_s + display_delay_with(&cal.delay_coeffs, x, y) / 1000.0
        }
        _ => row.onset_s,
    }
}

/// Mean of the window samples that are not blink-masked.
fn window_mean(trace: &ChannelTrace, window: SampleWindow) -> [f64; 2] {
    let kept: Vec<usize> = (window.start..window.end)
        .filter(|&k| trace.confidence[k] > 0.0)
        .collect();
    let idx: Vec<usize> = if kept.is_empty() {
        (window.start..window.end).collect()
    } else {
        kept
    };
    let n = idx.len() as f64;
    let mut mean = [0.0; 2];
    for &k in &idx {
        mean[0] += trace.samples[k][0] / n;
        mean[1] += trace.samples[k][1] / n;
    }
    mean
}

/// Bounds the fixation search for target `k` by the next onset.
fn target_window(
    trace: &ChannelTrace,
    targets: &CalibrationTargets,
    k: usize,
    span_ms: f64,
) -> Result<(ChannelTrace, SampleWindow), CliError> {
    let onset = targets.onset(k);
    let start = trace
        .index_at_or_after(onset)
        .ok_or_else(|| CliError::Input(format!("target {k} starts past the end of the trace")))?;
    let end = if k + 1 < targets.len() {
        trace.index_at_or_after(targets.onset(k + 1)).unwrap_or(trace.len())
    } else {
        trace.len()
    };
    let slice = trace.slice(start, end).map_err(core_err)?;
    let window = fixation_window(&slice, onset, span_ms).map_err(core_err)?;
    Ok((slice, window))
}

pub struct CalibrateOpts {
    pub trace: PathBuf,
    pub targets: PathBuf,
    pub output: Option<PathBuf>,
}

pub fn cmd_calibrate(opts: &CalibrateOpts, cfg: &RunConfig) -> Result<(), CliError> {
    let loaded = load_trace(&opts.trace)?;
    let targets = positioned_targets(&load_targets(&opts.targets)?, cfg)?;
    let (pos, vel) = compensate(&loaded.pupil, &loaded.cr, &loaded.iris, &loaded.head)
        .map_err(core_err)?;

    let mut pairs = Vec::with_capacity(targets.len());
    for k in 0..targets.len() {
        let (slice, window) = target_window(&pos, &targets, k, cfg.calibration.fixation_span_ms)?;
        pairs.push((window_mean(&slice, window), targets.position(k)));
    }
    let poly = fit_poly(&pairs).map_err(core_err)?;

    let displacements =
        saccade_displacements(&vel, &targets, &cfg.calibration.to_core()).map_err(core_err)?;
    let vmap = fit_velocity_map(&displacements).map_err(core_err)?;

    let file = CalibrationFile::from_parts(&poly, &vmap);
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::Input(format!("cannot serialize calibration: {e}")))?;
    write_output(opts.output.as_deref(), &format!("{json}\n"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsTask {
    Fixation,
    Pursuit,
}

pub struct MetricsOpts {
    pub gaze: PathBuf,
    pub targets: PathBuf,
    pub task: MetricsTask,
    pub eye: Option<String>,
    pub trace_id: Option<String>,
    pub output: Option<PathBuf>,
}

pub fn cmd_metrics(opts: &MetricsOpts, cfg: &RunConfig) -> Result<(), CliError> {
    let gaze = load_gaze(&opts.gaze)?;
    let targets = positioned_targets(&load_targets(&opts.targets)?, cfg)?;
    let trace_id = opts
        .trace_id
        .clone()
        .or_else(|| opts.gaze.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "trace".into());
    let eye = opts.eye.clone().unwrap_or_default();

    let mut out = String::from("trace_id,task,eye,s2s_rms_deg,std_deg,acc_x_deg,acc_y_deg\n");
    match opts.task {
        MetricsTask::Fixation => {
            for k in 0..targets.len() {
                let (slice, window) =
                    target_window(&gaze, &targets, k, cfg.calibration.fixation_span_ms)?;
                let rms = s2s_rms(&slice, window).map_err(core_err)?;
                let std = std_precision(&slice, window).map_err(core_err)?;
                let acc = accuracy(&slice, window, targets.position(k)).map_err(core_err)?;
                out.push_str(&format!(
                    "{trace_id},fixation,{eye},{},{},{},{}\n",
                    fmt_g9(rms),
                    fmt_g9(std),
                    fmt_g9(acc[0]),
                    fmt_g9(acc[1]),
                ));
            }
        }
        MetricsTask::Pursuit => {
            if targets.len() < 2 {
                return Err(CliError::Input("pursuit task needs at least 2 waypoints".into()));
            }
            for k in 0..targets.len() - 1 {
                let (t0, t1) = (targets.onset(k), targets.onset(k + 1));
                let (p0, p1) = (targets.position(k), targets.position(k + 1));
                let stim = RampStimulus {
                    start_s: t0,
                    end_s: t1,
                    start_pos: p0,
                    velocity: [(p1[0] - p0[0]) / (t1 - t0), (p1[1] - p0[1]) / (t1 - t0)],
                };
                let segment = detrend_pursuit(&gaze, &stim).map_err(core_err)?;
                let window = SampleWindow::new(0, segment.detrended.len());
                let rms = s2s_rms(&segment.detrended, window).map_err(core_err)?;
                let std = std_precision(&segment.detrended, window).map_err(core_err)?;
                out.push_str(&format!(
                    "{trace_id},pursuit,{eye},{},{},,\n",
                    fmt_g9(rms),
                    fmt_g9(std),
                ));
            }
        }
    }
    write_output(opts.output.as_deref(), &out)
}

pub struct DetectOpts {
    pub gaze: PathBuf,
    pub onsets: PathBuf,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

pub fn cmd_detect(opts: &DetectOpts, cfg: &RunConfig) -> Result<(), CliError> {
    let gaze = load_gaze(&opts.gaze)?;
    let rows = load_targets(&opts.onsets)?;
    let onsets: Vec<f64> = rows.iter().map(|r| corrected_onset(r, cfg)).collect();
    let ecfg = cfg.events.to_core(opts.seed);

    let detection = detect_microsaccades(&gaze, &ecfg).map_err(core_err)?;
    let mut out = String::from("onset_ms,offset_ms,peak_vel_dps,amplitude_deg,kind\n");
    for event in &detection.events {
        let kind = match event.kind {
            EventKind::Microsaccade => "microsaccade",
            EventKind::Saccade => "saccade",
        };
        out.push_str(&format!(
            "{},{},{},{},{kind}\n",
            fmt_g9((gaze.t0 + event.onset as f64 * gaze.dt) * 1000.0),
            fmt_g9((gaze.t0 + event.offset as f64 * gaze.dt) * 1000.0),
            fmt_g9(event.peak_velocity),
            fmt_g9(event.amplitude),
        ));
    }

    let tallies = count_in_windows(&detection.events, &onsets, gaze.t0, gaze.dt, &ecfg);
    let detected = tallies.iter().filter(|t| t.detected).count();
    let extras: usize = tallies.iter().map(|t| t.extras).sum();
    eprintln!(
        "threshold {:.3} deg/s; {detected}/{} windows with a microsaccade, {extras} extra",
        detection.threshold_dps,
        tallies.len(),
    );
    write_output(opts.output.as_deref(), &out)
}

pub struct SimulateOpts {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub output: Option<PathBuf>,
    pub dump_trials: Option<PathBuf>,
}

fn sim_table(report: &SimReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>22} {:>22} {:>10} {:>10}\n",
        "signal", "mse_orig(x1e-4)", "mse_grad(x1e-4)", "r2_orig", "r2_grad"
    ));
    for (name, stats) in [
        ("noisy", &report.noisy),
        ("drifting", &report.drifting),
        ("fused", &report.fused),
    ] {
        let band = |m: gazefuse_core::simulator::MeanStd| {
            format!("{:.2} +/- {:.2}", m.mean * 1e4, m.std * 1e4)
        };
        out.push_str(&format!(
            "{:<10} {:>22} {:>22} {:>10.4} {:>10.4}\n",
            name,
            band(stats.mse_orig),
            band(stats.mse_grad),
            stats.r2_orig.mean,
            stats.r2_grad.mean,
        ));
    }
    out.push_str(&format!("trials {} seed {}\n", report.trials, report.seed));
    out
}

pub fn cmd_simulate(opts: &SimulateOpts, cfg: &RunConfig) -> Result<(), CliError> {
    let sim_cfg = cfg.sim.to_core(opts.seed, opts.trials);
    let report = run_study(&sim_cfg).map_err(core_err)?;

    print!("{}", sim_table(&report));
    if let Some(path) = &opts.output {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Input(format!("cannot serialize report: {e}")))?;
        fs::write(path, format!("{json}\n"))
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some(path) = &opts.dump_trials {
        let original = make_original(&sim_cfg);
        let dt_ms = 1000.0 / sim_cfg.fs;
        let mut dump = String::from("trial,k,t_ms,original,noisy,drifting,fused\n");
        for trial in 0..sim_cfg.trials {
            let signals = run_trial(&original, &sim_cfg, trial as u64).map_err(core_err)?;
            for (k, &orig) in original.iter().enumerate() {
                dump.push_str(&format!(
                    "{trial},{k},{},{},{},{},{}\n",
                    fmt_g9(k as f64 * dt_ms),
                    fmt_g9(orig),
                    fmt_g9(signals.noisy[k]),
                    fmt_g9(signals.drifting[k]),
                    fmt_g9(signals.fused[k]),
                ));
            }
        }
        fs::write(path, dump)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}
