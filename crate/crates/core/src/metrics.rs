//! Accuracy and precision measures over fixation windows, plus detrended
//! precision for smooth-pursuit segments.
//!
//! S2S-RMS is the root mean square of adjacent-sample Euclidean
//! displacement (divisor = number of differences); STD combines the
//! per-axis population standard deviations as `sqrt((var_x + var_y) / 2)`.
//! Both are translation and rotation invariant.

use crate::error::{Error, Result};
use crate::trace::ChannelTrace;

/// Half-open sample range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleWindow {
    pub start: usize,
    pub end: usize,
}

impl SampleWindow {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    fn checked(&self, trace: &ChannelTrace, min_len: usize) -> Result<()> {
        if self.end > trace.len() || self.start >= self.end {
            return Err(Error::InvalidWindow("window out of trace bounds"));
        }
        if self.len() < min_len {
            return Err(Error::InvalidWindow("window too short"));
        }
        Ok(())
    }
}

/// Precision summary over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionReport {
    pub s2s_rms: f64,
    pub std: f64,
    pub n_samples: usize,
    pub window: SampleWindow,
}

/// Sample-to-sample RMS displacement over the window.
pub fn s2s_rms(trace: &ChannelTrace, window: SampleWindow) -> Result<f64> {
    window.checked(trace, 2)?;
    let samples = &trace.samples[window.start..window.end];
    let sum: f64 = samples
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2))
        .sum();
    Ok((sum / (samples.len() - 1) as f64).sqrt())
}

/// Combined per-axis population standard deviation over the window.
pub fn std_precision(trace: &ChannelTrace, window: SampleWindow) -> Result<f64> {
    window.checked(trace, 2)?;
    let samples = &trace.samples[window.start..window.end];
    let n = samples.len() as f64;
    let mut var = [0.0; 2];
    for ax in 0..2 {
        let mean = samples.iter().map(|s| s[ax]).sum::<f64>() / n;
        var[ax] = samples.iter().map(|s| (s[ax] - mean).powi(2)).sum::<f64>() / n;
    }
    Ok(((var[0] + var[1]) / 2.0).sqrt())
}

pub fn precision_report(trace: &ChannelTrace, window: SampleWindow) -> Result<PrecisionReport> {
    Ok(PrecisionReport {
        s2s_rms: s2s_rms(trace, window)?,
        std: std_precision(trace, window)?,
        n_samples: window.len(),
        window,
    })
}

/// Finds the window of `span_ms` after `onset_s` minimizing dispersion
/// (x extent plus y extent); ties break toward the earliest start.
///
/// Runs in O(n) with monotonic min/max deques.
pub fn fixation_window(
    trace: &ChannelTrace,
    onset_s: f64,
    span_ms: f64,
) -> Result<SampleWindow> {
    if !(span_ms > 0.0) {
        return Err(Error::InvalidWindow("span must be positive"));
    }
    let span_samples = ((span_ms / 1000.0) / trace.dt + 1e-9).floor() as usize + 1;
    let w = span_samples.max(2);
    let first = trace
        .index_at_or_after(onset_s)
        .ok_or(Error::InvalidWindow("onset past end of trace"))?;
    if first + w > trace.len() {
        return Err(Error::InvalidWindow("trace too short after onset"));
    }

    // One monotonic deque per (axis, extremum); fronts hold the current
    // window extreme.
    let mut best_start = first;
    let mut best_disp = f64::INFINITY;
    let mut maxq: [std::collections::VecDeque<usize>; 2] = Default::default();
    let mut minq: [std::collections::VecDeque<usize>; 2] = Default::default();
    for k in first..trace.len() {
        for ax in 0..2 {
            let v = trace.samples[k][ax];
            while maxq[ax].back().is_some_and(|&b| trace.samples[b][ax] <= v) {
                maxq[ax].pop_back();
            }
            maxq[ax].push_back(k);
            while minq[ax].back().is_some_and(|&b| trace.samples[b][ax] >= v) {
                minq[ax].pop_back();
            }
            minq[ax].push_back(k);
        }
        if k + 1 < first + w {
            continue;
        }
        let start = k + 1 - w;
        for ax in 0..2 {
            while *maxq[ax].front().unwrap() < start {
                maxq[ax].pop_front();
            }
            while *minq[ax].front().unwrap() < start {
                minq[ax].pop_front();
            }
        }
        let disp: f64 = (0..2)
            .map(|ax| {
                trace.samples[*maxq[ax].front().unwrap()][ax]
                    - trace.samples[*minq[ax].front().unwrap()][ax]
            })
            .sum();
        if disp < best_disp {
            best_disp = disp;
            best_start = start;
        }
    }
    Ok(SampleWindow::new(best_start, best_start + w))
}

/// Offset from the mean gaze to the target: `target - mean(gaze)` per axis.
/// Samples whose confidence is exactly zero (masked blinks) are excluded;
/// if every sample is masked the plain mean is used instead.
pub fn accuracy(trace: &ChannelTrace, window: SampleWindow, target: [f64; 2]) -> Result<[f64; 2]> {
    window.checked(trace, 1)?;
    let range = window.start..window.end;
    let kept: Vec<usize> = range.clone().filter(|&k| trace.confidence[k] > 0.0).collect();
    let idx: Vec<usize> = if kept.is_empty() { range.collect() } else { kept };
    let n = idx.len() as f64;
    let mut mean = [0.0; 2];
    for &k in &idx {
        mean[0] += trace.samples[k][0];
        mean[1] += trace.samples[k][1];
    }
    Ok([target[0] - mean[0] / n, target[1] - mean[1] / n])
}

/// One constant-velocity leg of a pursuit stimulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampStimulus {
    pub start_s: f64,
    pub end_s: f64,
    pub start_pos: [f64; 2],
    /// Stimulus velocity in units per second.
    pub velocity: [f64; 2],
}

impl RampStimulus {
    pub fn position_at(&self, t: f64) -> [f64; 2] {
        let dt = t - self.start_s;
        [
            self.start_pos[0] + self.velocity[0] * dt,
            self.start_pos[1] + self.velocity[1] * dt,
        ]
    }
}

/// Detrended pursuit segment ready for the precision measures.
#[derive(Debug, Clone, PartialEq)]
pub struct PursuitSegment {
    /// Index and (time, gaze) of the starting point in the source trace.
    pub start_index: usize,
    pub start_point: (f64, [f64; 2]),
    /// Index and (time, gaze) of the ending point.
    pub end_index: usize,
    pub end_point: (f64, [f64; 2]),
    /// Slope of the subtracted line, units per second per axis.
    pub slope: [f64; 2],
    /// Gaze minus the line through the start and end points; zero at both.
    pub detrended: ChannelTrace,
}

/// Selects the pursuit segment against a constant-velocity stimulus leg and
/// subtracts the line through its start and end gaze points.
///
/// The starting point is the sample minimizing the sum of the position and
/// velocity errors to the stimulus, each normalized by its standard
/// deviation over the leg; the ending point is the last sample before the
/// leg ends. Per-sample gaze velocity uses central differences.
pub fn detrend_pursuit(trace: &ChannelTrace, stimulus: &RampStimulus) -> Result<PursuitSegment> {
    let lo = trace
        .index_at_or_after(stimulus.start_s)
        .ok_or(Error::InvalidWindow("stimulus starts past end of trace"))?;
    let mut hi = lo;
    while hi + 1 < trace.len() && trace.time_at(hi + 1) <= stimulus.end_s + 1e-9 {
        hi += 1;
    }
    let len = hi + 1 - lo;
    if len < 4 {
        return Err(Error::InvalidSegment { needed: 4, got: len });
    }

    // Per-sample errors to the stimulus.
    let vel_at = |k: usize| -> [f64; 2] {
        let (a, b, span) = if k == 0 {
            (0, 1, trace.dt)
        } else if k == trace.len() - 1 {
            (k - 1, k, trace.dt)
        } else {
            (k - 1, k + 1, 2.0 * trace.dt)
        };
        [
            (trace.samples[b][0] - trace.samples[a][0]) / span,
            (trace.samples[b][1] - trace.samples[a][1]) / span,
        ]
    };
    let pos_err: Vec<f64> = (lo..=hi)
        .map(|k| {
            let stim = stimulus.position_at(trace.time_at(k));
            let s = trace.samples[k];
            ((s[0] - stim[0]).powi(2) + (s[1] - stim[1]).powi(2)).sqrt()
        })
        .collect();
    let vel_err: Vec<f64> = (lo..=hi)
        .map(|k| {
            let v = vel_at(k);
            ((v[0] - stimulus.velocity[0]).powi(2) + (v[1] - stimulus.velocity[1]).powi(2)).sqrt()
        })
        .collect();

    let norm = |errs: &[f64]| -> f64 {
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 0.0 {
            sd
        } else {
            1.0
        }
    };
    let (sp, sv) = (norm(&pos_err), norm(&vel_err));
    let start_rel = (0..len)
        .min_by(|&a, &b| {
            (pos_err[a] / sp + vel_err[a] / sv).total_cmp(&(pos_err[b] / sp + vel_err[b] / sv))
        })
        .unwrap();
    let start = lo + start_rel;
    let end = hi;
    if end - start + 1 < 4 {
        return Err(Error::InvalidSegment { needed: 4, got: end - start + 1 });
    }

    let (t_start, t_end) = (trace.time_at(start), trace.time_at(end));
    let g_start = trace.samples[start];
    let g_end = trace.samples[end];
    let span = t_end - t_start;
    let slope = [(g_end[0] - g_start[0]) / span, (g_end[1] - g_start[1]) / span];

    let samples = (start..=end)
        .map(|k| {
            let t = trace.time_at(k) - t_start;
            [
                trace.samples[k][0] - (g_start[0] + slope[0] * t),
                trace.samples[k][1] - (g_start[1] + slope[1] * t),
            ]
        })
        .collect();
    let detrended = ChannelTrace::new(
        t_start,
        trace.dt,
        samples,
        trace.confidence[start..=end].to_vec(),
    )?;

    Ok(PursuitSegment {
        start_index: start,
        start_point: (t_start, g_start),
        end_index: end,
        end_point: (t_end, g_end),
        slope,
        detrended,
    })
}
