//! Microsaccade detection on the fused velocity signal.
//!
//! The per-frame horizontal velocity is denoised with an exact direct 1D
//! total-variation solver, converted to deg/s, and thresholded. The
//! threshold is adaptive: a deterministic two-component Gaussian mixture is
//! fitted to the speed distribution (noise vs saccade) and the crossing of
//! the two weighted densities between the means becomes the threshold.
//! Runs above the threshold become events via velocity-threshold
//! identification; events below the amplitude cap are microsaccades.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trace::ChannelTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct EventConfig {
    /// Total-variation regularization on the per-frame velocity.
    pub tv_lambda: f64,
    /// Counting window after each target onset, seconds.
    pub window_start_s: f64,
    pub window_end_s: f64,
    /// Events with at least this amplitude (degrees) are plain saccades.
    pub max_amplitude: f64,
    /// Mixture size; only 2 is supported.
    pub gmm_components: usize,
    /// Seed for the deterministic k-means++ initialization.
    pub seed: u64,
    /// EM iteration cap and mean log-likelihood convergence delta.
    pub em_max_iters: usize,
    pub em_tol: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            tv_lambda: 0.05,
            window_start_s: 0.100,
            window_end_s: 0.500,
            max_amplitude: 0.5,
            gmm_components: 2,
            seed: 42,
            em_max_iters: 500,
            em_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Microsaccade,
    Saccade,
}

/// One detected velocity event; indices point into the velocity signal and
/// are inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub onset: usize,
    pub offset: usize,
    /// Peak speed, deg/s.
    pub peak_velocity: f64,
    /// Net displacement magnitude over the run, degrees.
    pub amplitude: f64,
    pub kind: EventKind,
}

/// Exact minimizer of `0.5 ||u - v||^2 + lambda TV(u)` by the direct
/// non-iterative algorithm of Condat (running segment bounds `vmin`/`vmax`
/// with jump emission). O(n) time, no tolerance.
pub fn tv_denoise(v: &[f64], lambda: f64) -> Vec<f64> {
    assert!(lambda > 0.0, "tv_denoise: lambda must be positive");
    let n = v.len();
    if n <= 1 {
        return v.to_vec();
    }
    let mut x = vec![0.0; n];

    let mut k = 0usize; // current sample
    let mut k0 = 0usize; // segment start
    let mut km = 0usize; // last position where vmin was updated
    let mut kp = 0usize; // last position where vmax was updated
    let mut vmin = v[0] - lambda;
    let mut vmax = v[0] + lambda;
    let mut umin = lambda;
    let mut umax = -lambda;

    loop {
        if k == n - 1 {
            // End of scan: resolve the last segment.
            if umin < 0.0 {
                // vmin was too high; emit a negative jump and restart after it.
                for xi in x.iter_mut().take(km + 1).skip(k0) {
                    *xi = vmin;
                }
                k = km + 1;
                k0 = k;
                km = k;
                vmin = v[k];
                umin = lambda;
                umax = v[k] + lambda - vmax;
            } else if umax > 0.0 {
                // vmax was too low; emit a positive jump.
                for xi in x.iter_mut().take(kp + 1).skip(k0) {
                    *xi = vmax;
                }
                k = kp + 1;
                k0 = k;
                kp = k;
                vmax = v[k];
                umax = -lambda;
                umin = v[k] - lambda - vmin;
            } else {
                let value = vmin + umin / (k - k0 + 1) as f64;
                for xi in x.iter_mut().take(n).skip(k0) {
                    *xi = value;
                }
                return x;
            }
            if k == n - 1 {
                // Jump landed on the final sample: its value is pinned by the
                // running sums and the scan is over.
                x[k] = vmin + umin;
                return x;
            }
            continue;
        }

        if v[k + 1] + umin < vmin - lambda {
            // Negative jump is necessary.
            for xi in x.iter_mut().take(km + 1).skip(k0) {
                *xi = vmin;
            }
            k = km + 1;
            k0 = k;
            km = k;
            kp = k;
            vmin = v[k];
            vmax = v[k] + 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
        } else if v[k + 1] + umax > vmax + lambda {
            // Positive jump is necessary.
            for xi in x.iter_mut().take(kp + 1).skip(k0) {
                *xi = vmax;
            }
            k = kp + 1;
            k0 = k;
            km = k;
            kp = k;
            vmax = v[k];
            vmin = v[k] - 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
        } else {
            // No jump: absorb the sample into the running segment.
            k += 1;
            umin += v[k] - vmin;
            umax += v[k] - vmax;
            if umin >= lambda {
                vmin += (umin - lambda) / (k - k0 + 1) as f64;
                umin = lambda;
                km = k;
            }
            if umax <= -lambda {
                vmax += (umax + lambda) / (k - k0 + 1) as f64;
                umax = -lambda;
                kp = k;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Gaussian {
    weight: f64,
    mean: f64,
    var: f64,
}

impl Gaussian {
    fn log_density(&self, x: f64) -> f64 {
        let d = x - self.mean;
        self.weight.ln() - 0.5 * (2.0 * std::f64::consts::PI * self.var).ln()
            - d * d / (2.0 * self.var)
    }
}

/// Fits a deterministic two-component Gaussian mixture to the speed values
/// and returns the speed where the weighted component densities cross
/// between the two means. Falls back to `mean + 3 sigma` of the lower
/// component when there is no crossing in that interval.
pub fn adaptive_threshold(speeds: &[f64], cfg: &EventConfig) -> Result<f64> {
    if cfg.gmm_components != 2 {
        return Err(Error::InvalidInput("only two-component mixtures are supported"));
    }
    let n = speeds.len();
    if n < 50 {
        return Err(Error::TooShort { needed: 50, got: n });
    }
    let lo = speeds.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::DegenerateDistribution("speed signal is constant"));
    }
    let global_var = {
        let mean = speeds.iter().sum::<f64>() / n as f64;
        speeds.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64
    };
    let var_floor = 1e-12 * global_var;

    // k-means++ seeding with a fixed stream, then Lloyd refinement.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c1 = speeds[rng.random_range(0..n)];
    let dist2: Vec<f64> = speeds.iter().map(|s| (s - c1).powi(2)).collect();
    let total: f64 = dist2.iter().sum();
    let mut pick = rng.random::<f64>() * total;
    let mut c2 = speeds[n - 1];
    for (s, d) in speeds.iter().zip(&dist2) {
        pick -= d;
        if pick <= 0.0 {
            c2 = *s;
            break;
        }
    }
    let mut centers = [c1, c2];
    let mut assign = vec![false; n];
    for _ in 0..100 {
        let mut changed = false;
        for (a, s) in assign.iter_mut().zip(speeds) {
            let to_second = (s - centers[1]).abs() < (s - centers[0]).abs();
            if *a != to_second {
                *a = to_second;
                changed = true;
            }
        }
        for c in 0..2 {
            let members: Vec<f64> = speeds
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == (c == 1))
                .map(|(s, _)| *s)
                .collect();
            if !members.is_empty() {
                centers[c] = members.iter().sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }

    // Mixture init from the k-means partition.
    let mut comps = [
        Gaussian { weight: 0.5, mean: centers[0], var: global_var },
        Gaussian { weight: 0.5, mean: centers[1], var: global_var },
    ];
    for c in 0..2 {
        let members: Vec<f64> = speeds
            .iter()
            .zip(&assign)
            .filter(|(_, &a)| a == (c == 1))
            .map(|(s, _)| *s)
            .collect();
        if !members.is_empty() {
            let m = members.iter().sum::<f64>() / members.len() as f64;
            let v = members.iter().map(|s| (s - m).powi(2)).sum::<f64>() / members.len() as f64;
            comps[c] = Gaussian {
                weight: members.len() as f64 / n as f64,
                mean: m,
                var: v.max(var_floor),
            };
        }
    }

    // EM to convergence of the mean log-likelihood.
    let mut last_ll = f64::NEG_INFINITY;
    for _ in 0..cfg.em_max_iters {
        let mut resp_sum = [0.0; 2];
        let mut mean_sum = [0.0; 2];
        let mut ll = 0.0;
        let mut resp = vec![0.0; n];
        for (k, &s) in speeds.iter().enumerate() {
            let l0 = comps[0].log_density(s);
            let l1 = comps[1].log_density(s);
            let m = l0.max(l1);
            let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
            let sum = e0 + e1;
            let r1 = e1 / sum;
            resp[k] = r1;
            resp_sum[0] += 1.0 - r1;
            resp_sum[1] += r1;
            mean_sum[0] += (1.0 - r1) * s;
            mean_sum[1] += r1 * s;
            ll += m + sum.ln();
        }
        ll /= n as f64;

        for c in 0..2 {
            if resp_sum[c] <= 0.0 {
                return Err(Error::DegenerateDistribution("mixture component vanished"));
            }
            comps[c].weight = resp_sum[c] / n as f64;
            comps[c].mean = mean_sum[c] / resp_sum[c];
        }
        let mut var_sum = [0.0; 2];
        for (k, &s) in speeds.iter().enumerate() {
            var_sum[0] += (1.0 - resp[k]) * (s - comps[0].mean).powi(2);
            var_sum[1] += resp[k] * (s - comps[1].mean).powi(2);
        }
        for c in 0..2 {
            comps[c].var = (var_sum[c] / resp_sum[c]).max(var_floor);
        }

        if (ll - last_ll).abs() < cfg.em_tol {
            break;
        }
        last_ll = ll;
    }

    if comps[0].mean > comps[1].mean {
        comps.swap(0, 1);
    }
    Ok(density_crossing(&comps[0], &comps[1]))
}

/// Crossing of two weighted Gaussian densities between their means; falls
/// back to `mean + 3 sigma` of the lower component.
fn density_crossing(low: &Gaussian, high: &Gaussian) -> f64 {
    let fallback = low.mean + 3.0 * low.var.sqrt();
    // log densities equal: quadratic a x^2 + b x + c = 0.
    let a = 0.5 / high.var - 0.5 / low.var;
    let b = low.mean / low.var - high.mean / high.var;
    let c = 0.5 * high.mean * high.mean / high.var - 0.5 * low.mean * low.mean / low.var
        + (low.weight / high.weight).ln()
        + 0.5 * (high.var / low.var).ln();
    let in_range = |x: f64| x > low.mean && x < high.mean;

    let scale = a.abs().max(b.abs()).max(1e-300);
    if a.abs() < 1e-12 * scale {
        if b.abs() < 1e-300 {
            return fallback;
        }
        let x = -c / b;
        return if in_range(x) { x } else { fallback };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return fallback;
    }
    let sq = disc.sqrt();
    let roots = [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)];
    roots.into_iter().find(|&r| in_range(r)).unwrap_or(fallback)
}

/// Velocity-threshold identification: maximal runs of `|v| > threshold`
/// become events. Amplitude is the magnitude of the net displacement over
/// the run; `dt` converts deg/s samples to degrees.
pub fn ivt_detect(
    velocity_dps: &[f64],
    dt: f64,
    threshold: f64,
    cfg: &EventConfig,
) -> Vec<EventRecord> {
    let mut events = Vec::new();
    let mut k = 0;
    while k < velocity_dps.len() {
        if velocity_dps[k].abs() <= threshold {
            k += 1;
            continue;
        }
        let onset = k;
        let mut sum = 0.0;
        let mut peak = 0.0_f64;
        while k < velocity_dps.len() && velocity_dps[k].abs() > threshold {
            sum += velocity_dps[k];
            peak = peak.max(velocity_dps[k].abs());
            k += 1;
        }
        let amplitude = (sum * dt).abs();
        events.push(EventRecord {
            onset,
            offset: k - 1,
            peak_velocity: peak,
            amplitude,
            kind: if amplitude < cfg.max_amplitude {
                EventKind::Microsaccade
            } else {
                EventKind::Saccade
            },
        });
    }
    events
}

/// Per-onset tally of microsaccades inside the counting window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowTally {
    pub onset_s: f64,
    /// Whether at least one microsaccade onset fell inside the window.
    pub detected: bool,
    /// Microsaccades in the window beyond the first.
    pub extras: usize,
}

/// Counts microsaccade onsets inside `[onset + window_start, onset +
/// window_end]` for each stimulus onset. Only the first event per window
/// counts; the rest are reported as extras.
pub fn count_in_windows(
    events: &[EventRecord],
    onsets: &[f64],
    t0: f64,
    dt: f64,
    cfg: &EventConfig,
) -> Vec<WindowTally> {
    debug_assert!(onsets.windows(2).all(|w| w[0] <= w[1]), "onsets must be sorted");
    onsets
        .iter()
        .map(|&onset| {
            let lo = onset + cfg.window_start_s;
            let hi = onset + cfg.window_end_s;
            let hits = events
                .iter()
                .filter(|e| e.kind == EventKind::Microsaccade)
                .filter(|e| {
                    let t = t0 + e.onset as f64 * dt;
                    t >= lo - 1e-12 && t <= hi + 1e-12
                })
                .count();
            WindowTally { onset_s: onset, detected: hits > 0, extras: hits.saturating_sub(1) }
        })
        .collect()
}

/// Detection output of the full pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Adaptive speed threshold, deg/s.
    pub threshold_dps: f64,
    pub events: Vec<EventRecord>,
}

/// Full microsaccade pipeline on the horizontal component of a fused gaze
/// trace: per-frame differences, TV denoising, adaptive threshold on the
/// deg/s speeds, then I-VT labeling.
pub fn detect_microsaccades(hybrid: &ChannelTrace, cfg: &EventConfig) -> Result<Detection> {
    if hybrid.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: hybrid.len() });
    }
    let per_frame: Vec<f64> = hybrid
        .samples
        .windows(2)
        .map(|w| w[1][0] - w[0][0])
        .collect();
    let denoised = tv_denoise(&per_frame, cfg.tv_lambda);
    let dps: Vec<f64> = denoised.iter().map(|v| v / hybrid.dt).collect();
    let speeds: Vec<f64> = dps.iter().map(|v| v.abs()).collect();
    let threshold = adaptive_threshold(&speeds, cfg)?;
    let events = ivt_detect(&dps, hybrid.dt, threshold, cfg);
    Ok(Detection { threshold_dps: threshold, events })
}
