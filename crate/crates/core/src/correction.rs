//! Sliding-window recursive optimization of model-correction gains.
//!
//! Model mismatch (wrong mean current or conduction resistance) is
//! compensated by injecting the output error into the mean-coefficient
//! equations of the Galerkin system: `+ mu1 (Tc_hat - Tc0)` on the core mean
//! and `+ mu2 (Ts_hat - Ts0)` on the surface mean, with the measurement
//! pulled toward the model (stabilizing sign). Higher-order coefficient
//! equations are untouched.
//!
//! The gains minimize the windowed sum of squared errors between the
//! corrected mean predictions and the window data. Windows advance by
//! `moving_rate` samples; each optimization warm-starts from the previous
//! optimum. Surface data are the noisy measurements; core data come from the
//! surface-residual observer running at the same gains.

use crate::error::{Error, Result};
use crate::fdd;
use crate::galerkin::{rk4_step_vec, GalerkinSystem, Rk4Scratch};
use crate::jcr::build_map;
use crate::optimize::{minimize, OptProblem};
use crate::scenario::{MeasurementTrace, ModeLabel, OperatingMode};
use crate::thermal::BatteryParams;
use crate::fdd::{LibraryEntry, ModeLibrary};
use serde::{Deserialize, Serialize};

/// Window geometry: `length` samples per optimization, advanced by
/// `moving_rate` samples per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub moving_rate: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { length: 80, moving_rate: 1 }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::InvalidParameter(format!(
                "window length {} must be at least 2",
                self.length
            )));
        }
        if self.moving_rate == 0 || self.moving_rate > self.length {
            return Err(Error::InvalidParameter(format!(
                "moving rate {} must lie in 1..={}",
                self.moving_rate, self.length
            )));
        }
        Ok(())
    }
}

/// Optimized correction gains (1/s) with the objective value they achieved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionGains {
    pub mu_core: f64,
    pub mu_surf: f64,
    pub converged: bool,
    pub objective: f64,
}

impl CorrectionGains {
    pub fn zero() -> Self {
        Self { mu_core: 0.0, mu_surf: 0.0, converged: true, objective: 0.0 }
    }

    pub fn pair(&self) -> (f64, f64) {
        (self.mu_core, self.mu_surf)
    }
}

/// Optimizer settings for the window objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainOptions {
    /// Half-width of the symmetric gain search box (1/s).
    pub gain_box: f64,
    /// Integration step inside the window objective (s).
    pub dt: f64,
    /// Evaluation budget per optimizer start.
    pub max_evals: usize,
}

impl Default for GainOptions {
    fn default() -> Self {
        Self { gain_box: 1.0, dt: 3.0, max_evals: 60 }
    }
}

/// One optimization window: the coefficient state at the opening sample plus
/// the `L + 1` data pairs `(Tc_hat, Ts_hat)` aligned with samples
/// `0, 1, .., L` of the window. The objective sums errors over samples
/// `1..=L`; the injection during each period holds the previous sample's
/// pair.
#[derive(Debug, Clone)]
pub struct WindowData {
    pub start_state: Vec<f64>,
    pub targets: Vec<(f64, f64)>,
    pub period_s: f64,
}

/// Corrected right-hand side: the base Galerkin derivatives with the output
/// injection added to the two mean-coefficient equations.
pub fn corrected_rhs(
    sys: &GalerkinSystem,
    gains: (f64, f64),
    measurement: (f64, f64),
    state: &[f64],
    out: &mut [f64],
) {
    sys.rhs(state, out);
    let n = sys.basis().len();
    out[0] += gains.0 * (measurement.0 - state[0]);
    out[n] += gains.1 * (measurement.1 - state[n]);
}

/// The connected block of coefficient indices containing the mean row under
/// the coupling sparsity pattern. Only these rows feel the injection and feed
/// the window objective, so candidate evaluations integrate just this block.
fn mean_block(sys: &GalerkinSystem) -> Vec<usize> {
    let n = sys.basis().len();
    let mut in_block = vec![false; n];
    let mut stack = vec![0usize];
    in_block[0] = true;
    while let Some(k) = stack.pop() {
        for i in 0..n {
            if !in_block[i] && sys.coupling(k, i).abs() > 1e-14 {
                in_block[i] = true;
                stack.push(i);
            }
        }
    }
    (0..n).filter(|&i| in_block[i]).collect()
}

/// Reduced corrected system over the mean-coupled block.
struct BlockSystem {
    idx: Vec<usize>,
    coupling: Vec<f64>,
    source: Vec<f64>,
    c_core: f64,
    c_surf: f64,
    r_conv: f64,
    t_amb: f64,
}

impl BlockSystem {
    fn new(sys: &GalerkinSystem) -> Self {
        let idx = mean_block(sys);
        let m = idx.len();
        let mut coupling = vec![0.0; m * m];
        for (a, &k) in idx.iter().enumerate() {
            for (b, &i) in idx.iter().enumerate() {
                coupling[a * m + b] = sys.coupling(k, i);
            }
        }
        let source = idx.iter().map(|&k| sys.source_power(k)).collect();
        let p = sys.params();
        Self {
            idx,
            coupling,
            source,
            c_core: p.c_core,
            c_surf: p.c_surf,
            r_conv: p.r_conv,
            t_amb: p.t_amb,
        }
    }

    fn dim(&self) -> usize {
        2 * self.idx.len()
    }

    fn extract(&self, full: &[f64], n: usize) -> Vec<f64> {
        let m = self.idx.len();
        let mut out = vec![0.0; 2 * m];
        for (a, &k) in self.idx.iter().enumerate() {
            out[a] = full[k];
            out[m + a] = full[n + k];
        }
        out
    }

    /// Derivatives of the block; index 0 is the mean row by construction.
    fn rhs(&self, gains: (f64, f64), target: (f64, f64), state: &[f64], out: &mut [f64]) {
        let m = self.idx.len();
        for a in 0..m {
            let row = &self.coupling[a * m..(a + 1) * m];
            let mut conduction = 0.0;
            for b in 0..m {
                conduction += (state[m + b] - state[b]) * row[b];
            }
            let ambient = if self.idx[a] == 0 { self.t_amb } else { 0.0 };
            out[a] = (self.source[a] + conduction) / self.c_core;
            out[m + a] = ((ambient - state[m + a]) / self.r_conv - conduction) / self.c_surf;
        }
        out[0] += gains.0 * (target.0 - state[0]);
        out[m] += gains.1 * (target.1 - state[m]);
    }
}

/// Windowed sum of squared errors for one gain pair.
fn window_objective(
    block: &BlockSystem,
    win: &WindowData,
    gains: (f64, f64),
    dt: f64,
    scratch: &mut Rk4Scratch,
    state_buf: &mut Vec<f64>,
    n_full: usize,
) -> f64 {
    let m = block.idx.len();
    state_buf.clear();
    state_buf.extend(block.extract(&win.start_state, n_full));
    let n_sub = (win.period_s / dt).ceil().max(1.0) as usize;
    let sub_dt = win.period_s / n_sub as f64;
    let mut j = 0.0;
    for i in 1..win.targets.len() {
        let held = win.targets[i - 1];
        for _ in 0..n_sub {
            rk4_step_vec(
                |s, out| block.rhs(gains, held, s, out),
                state_buf,
                sub_dt,
                scratch,
            );
        }
        let dc = state_buf[0] - win.targets[i].0;
        let ds = state_buf[m] - win.targets[i].1;
        if !(dc.is_finite() && ds.is_finite()) {
            return f64::MAX;
        }
        j += dc * dc + ds * ds;
    }
    j
}

/// Minimize the window objective over the gain box, warm-started from `warm`
/// plus a fixed set of restarts.
pub fn optimize_gains(
    win: &WindowData,
    sys: &GalerkinSystem,
    warm: (f64, f64),
    opts: &GainOptions,
) -> Result<CorrectionGains> {
    if win.targets.len() < 3 {
        return Err(Error::InvalidParameter(
            "window needs at least two data samples".into(),
        ));
    }
    if win.start_state.len() != sys.state_dim() {
        return Err(Error::InvalidParameter(
            "window start state does not match the system dimension".into(),
        ));
    }
    let block = BlockSystem::new(sys);
    let n_full = sys.basis().len();
    let bx = opts.gain_box;
    let bounds = [(-bx, bx), (-bx, bx)];
    let starts: Vec<Vec<f64>> = [
        warm,
        (0.0, 0.0),
        (0.04 * bx, 0.04 * bx),
        (0.4 * bx, 0.4 * bx),
        (-0.4 * bx, 0.4 * bx),
        (0.4 * bx, -0.4 * bx),
    ]
    .iter()
    .map(|&(a, b)| vec![a, b])
    .collect();

    let scratch = std::cell::RefCell::new((Rk4Scratch::new(block.dim()), Vec::new()));
    let problem = OptProblem {
        objective: |mu: &[f64]| {
            let (ref mut s, ref mut buf) = *scratch.borrow_mut();
            window_objective(&block, win, (mu[0], mu[1]), opts.dt, s, buf, n_full)
        },
        bounds: &bounds,
        starts: &starts,
        tol_x: 1e-7,
        tol_f: 1e-12,
        max_evals: opts.max_evals,
    };
    let r = minimize(&problem)?;
    Ok(CorrectionGains {
        mu_core: r.argmin[0],
        mu_surf: r.argmin[1],
        converged: r.converged,
        objective: r.value,
    })
}

/// One emitted gain update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainStep {
    pub step: usize,
    pub time_s: f64,
    pub mu_core: f64,
    pub mu_surf: f64,
    pub objective: f64,
}

/// Gain updates over a trace, one entry per window advance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainTrajectory {
    pub steps: Vec<GainStep>,
}

impl GainTrajectory {
    pub fn mu_core_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.mu_core).collect()
    }

    pub fn mu_surf_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.mu_surf).collect()
    }

    /// CSV with header `step,time_s,mu1,mu2,J`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,time_s,mu1,mu2,J")?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{},{},{},{}",
                s.step, s.time_s, s.mu_core, s.mu_surf, s.objective
            )?;
        }
        Ok(())
    }
}

/// Sample variance of a series.
pub fn series_variance(series: &[f64]) -> f64 {
    if series.len() < 2 {
        return 0.0;
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Plateau test: the final quarter fluctuates less than the first quarter.
pub fn plateau_reached(series: &[f64]) -> bool {
    let q = series.len() / 4;
    if q < 2 {
        return false;
    }
    series_variance(&series[series.len() - q..]) < series_variance(&series[..q])
}

/// First step index from which the series stays inside a band around its
/// plateau value (the median of the final quarter). The band is 15% of the
/// series' full range, so a series that keeps drifting settles late.
pub fn settle_step(series: &[f64]) -> usize {
    if series.len() < 8 {
        return 0;
    }
    let mut tail: Vec<f64> = series[series.len() - series.len() / 4..].to_vec();
    tail.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let plateau = tail[tail.len() / 2];
    let max = series.iter().cloned().fold(f64::MIN, f64::max);
    let min = series.iter().cloned().fold(f64::MAX, f64::min);
    let range = max - min;
    if range == 0.0 {
        return 0;
    }
    let band = 0.15 * range;
    let mut settle = 0;
    for (k, &v) in series.iter().enumerate() {
        if (v - plateau).abs() > band {
            settle = k + 1;
        }
    }
    settle.min(series.len() - 1)
}

/// How `run_online` advances and optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineOptions {
    pub gains: GainOptions,
    /// Integration step used to advance the corrected trajectory (s).
    pub advance_dt: f64,
    /// Initial gains before the first window completes.
    pub init_gains: (f64, f64),
    /// Optimization starts once this many samples exist; the window grows
    /// until it reaches the configured length and slides from then on.
    pub min_window: usize,
}

impl Default for OnlineOptions {
    fn default() -> Self {
        Self {
            gains: GainOptions::default(),
            advance_dt: 3.0,
            init_gains: (0.0, 0.0),
            min_window: 8,
        }
    }
}

/// Result of one online correction pass.
#[derive(Debug, Clone)]
pub struct OnlineRun {
    pub gains: GainTrajectory,
    pub final_gains: CorrectionGains,
    /// Corrected coefficient state at every trace sample.
    pub states: Vec<Vec<f64>>,
    pub times: Vec<f64>,
}

/// Recursive online correction along a measurement trace.
///
/// The corrected system and the core-estimating observer advance together
/// through the trace at the currently optimized gains; once `length` samples
/// have accumulated, every `moving_rate` samples the window objective is
/// re-minimized (warm-started) and the gains update.
pub fn run_online(
    trace: &MeasurementTrace,
    spec: &WindowSpec,
    sys: &GalerkinSystem,
    opts: &OnlineOptions,
) -> Result<OnlineRun> {
    spec.validate()?;
    if trace.len() <= spec.length {
        return Err(Error::InvalidParameter(format!(
            "trace has {} samples, window needs more than {}",
            trace.len(),
            spec.length
        )));
    }
    let period = trace.times[1] - trace.times[0];
    let p = sys.params();
    let assumed = OperatingMode {
        // Observer runs at the assumed (possibly mismatched) mode means.
        label: trace.labels[0],
        current_mean: sys.current().mean,
        r_cond_mean: sys.resistance().mean,
        current_std: sys.current().std,
        r_cond_std: sys.resistance().std,
    };

    let mut gains = CorrectionGains {
        mu_core: opts.init_gains.0,
        mu_surf: opts.init_gains.1,
        converged: true,
        objective: f64::NAN,
    };
    let mut state = sys.ambient_init();
    let mut states = vec![state.clone()];
    let mut targets: Vec<(f64, f64)> = Vec::with_capacity(trace.len());
    // The core-estimating observer advances alongside at the live gains.
    let mut obs = (p.t_amb, p.t_amb);
    targets.push((obs.0, trace.ts_meas[0]));

    let mut scratch = Rk4Scratch::new(sys.state_dim());
    let n_sub = (period / opts.advance_dt).ceil().max(1.0) as usize;
    let sub_dt = period / n_sub as f64;
    let mut trajectory = Vec::new();
    let mut step_count = 0usize;

    for i in 1..trace.len() {
        let y = trace.ts_meas[i];
        obs = fdd::observer_step(obs, y, period, p, &assumed, gains.pair());
        targets.push((obs.0, y));

        // Advance the corrected trajectory holding the previous sample pair.
        let held = targets[i - 1];
        for _ in 0..n_sub {
            rk4_step_vec(
                |s, out| corrected_rhs(sys, gains.pair(), held, s, out),
                &mut state,
                sub_dt,
                &mut scratch,
            );
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationBlowup { step: i, time: trace.times[i] });
        }
        states.push(state.clone());

        // Re-optimize on the growing-then-sliding window.
        let min_window = opts.min_window.max(2).min(spec.length);
        if i >= min_window && (i - min_window) % spec.moving_rate == 0 {
            let start_idx = i.saturating_sub(spec.length);
            let win = WindowData {
                start_state: states[start_idx].clone(),
                targets: targets[start_idx..=i].to_vec(),
                period_s: period,
            };
            gains = optimize_gains(&win, sys, gains.pair(), &opts.gains)?;
            trajectory.push(GainStep {
                step: step_count,
                time_s: trace.times[i],
                mu_core: gains.mu_core,
                mu_surf: gains.mu_surf,
                objective: gains.objective,
            });
            step_count += 1;
        }
    }
    Ok(OnlineRun {
        gains: GainTrajectory { steps: trajectory },
        final_gains: gains,
        states,
        times: trace.times.clone(),
    })
}

/// Per-mode online correction: returns the corrected library plus the gain
/// trajectories, one per mode.
pub struct CorrectionOutcome {
    pub library: ModeLibrary,
    pub trajectories: Vec<(ModeLabel, GainTrajectory)>,
    pub final_gains: Vec<(ModeLabel, CorrectionGains)>,
}

/// Correct every library entry against its own training trace and rebuild
/// the JCR maps around the corrected steady coefficients (the tail average
/// of the corrected trajectory).
pub fn correct_library(
    assumed: &ModeLibrary,
    params: &BatteryParams,
    traces: &[(ModeLabel, MeasurementTrace)],
    window: &WindowSpec,
    opts: &OnlineOptions,
    systems: &[(ModeLabel, GalerkinSystem)],
) -> Result<CorrectionOutcome> {
    let mut entries = Vec::with_capacity(assumed.entries.len());
    let mut trajectories = Vec::new();
    let mut final_gains = Vec::new();
    let _ = params;
    for entry in &assumed.entries {
        let label = entry.mode.label;
        let trace = &traces
            .iter()
            .find(|(l, _)| *l == label)
            .ok_or_else(|| Error::InvalidParameter(format!("no training trace for {label}")))?
            .1;
        let sys = &systems
            .iter()
            .find(|(l, _)| *l == label)
            .ok_or_else(|| Error::InvalidParameter(format!("no system for {label}")))?
            .1;
        let run = run_online(trace, window, sys, opts)?;

        // Corrected steady coefficients: average the final quarter of the
        // corrected trajectory.
        let tail_start = run.states.len() - run.states.len() / 4;
        let dim = sys.state_dim();
        let mut avg = vec![0.0; dim];
        for s in &run.states[tail_start..] {
            for (a, v) in avg.iter_mut().zip(s) {
                *a += v;
            }
        }
        let count = (run.states.len() - tail_start) as f64;
        for a in avg.iter_mut() {
            *a /= count;
        }
        let (tc, ts) = sys.surrogates(&avg)?;
        let map = build_map(
            label,
            &tc,
            &ts,
            entry.map.n_samples,
            entry.map.grid.bins,
            entry.map.seed,
        )?;
        entries.push(LibraryEntry { mode: entry.mode, tc, ts, map });
        trajectories.push((label, run.gains));
        final_gains.push((label, run.final_gains));
    }
    Ok(CorrectionOutcome {
        library: ModeLibrary { entries },
        trajectories,
        final_gains,
    })
}
