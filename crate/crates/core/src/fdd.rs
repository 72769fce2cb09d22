//! Classification of temperature measurements into operating modes.
//!
//! Each library mode carries its steady-state temperature surrogates and a
//! JCR map. A measurement pair is attributed to the mode whose surrogate pair
//! can come closest to it over the three-sigma germ box (a derivative-free
//! minimization per mode); near-ties are resolved by the JCR membership
//! probability of the measured pair, then by mode declaration order.
//!
//! The unmeasured core temperature is estimated by a surface-residual
//! observer: the deterministic model at the assumed mode's mean inputs with
//! the output error `y - Ts` injected into both state equations through the
//! correction gains.

use crate::basis::{GpcSurrogate, MultiIndexBasis};
use crate::error::{Error, Result};
use crate::galerkin::{assemble, UncertainInput};
use crate::jcr::{build_map, JcrMap};
use crate::optimize::{minimize, OptProblem};
use crate::scenario::{ModeLabel, ModeSet, OperatingMode, MODE_LABELS};
use crate::thermal::BatteryParams;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Germ search box per the three-sigma rule.
pub const GERM_BOX: f64 = 3.0;

/// Distances closer than this count as a tie and fall through to the
/// membership comparison.
const TIE_EPS: f64 = 1e-9;

/// Observer estimates beyond this magnitude are flagged as divergent.
pub const DIVERGENCE_BOUND_C: f64 = 200.0;

/// One calibrated mode: its gPC surrogate pair at steady state plus the JCR
/// map built from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub mode: OperatingMode,
    pub tc: GpcSurrogate,
    pub ts: GpcSurrogate,
    pub map: JcrMap,
}

/// The full four-mode library, in declaration order of `ModeLabel`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeLibrary {
    pub entries: Vec<LibraryEntry>,
}

/// Calibration settings for `build_library`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Integration horizon used to settle each mode (s).
    pub horizon_s: f64,
    /// Integration step (s).
    pub dt_s: f64,
    /// Samples per JCR map.
    pub jcr_samples: usize,
    /// Bins per JCR axis.
    pub jcr_bins: usize,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            horizon_s: 6.0 * 3600.0,
            dt_s: 1.0,
            jcr_samples: 10_000,
            jcr_bins: 40,
            seed: 0x0ca1_1b0a,
        }
    }
}

/// Calibrate the library: per mode, assemble the Galerkin system, integrate
/// to steady state from ambient, and build the JCR map.
pub fn build_library(
    params: &BatteryParams,
    modes: &ModeSet,
    basis: &Arc<MultiIndexBasis>,
    opts: &CalibrationOptions,
) -> Result<ModeLibrary> {
    let mut entries = Vec::with_capacity(4);
    for mode in modes.iter() {
        let sys = assemble(
            params,
            UncertainInput::new(mode.current_mean, mode.current_std, 0),
            UncertainInput::new(mode.r_cond_mean, mode.r_cond_std, 1),
            basis,
        )?;
        let traj = sys.integrate(opts.horizon_s, opts.dt_s, &sys.ambient_init())?;
        let (tc, ts) = sys.surrogates(traj.last())?;
        let map = build_map(
            mode.label,
            &tc,
            &ts,
            opts.jcr_samples,
            opts.jcr_bins,
            opts.seed ^ mode.label.index() as u64,
        )?;
        entries.push(LibraryEntry { mode: *mode, tc, ts, map });
    }
    Ok(ModeLibrary { entries })
}

impl ModeLibrary {
    pub fn entry(&self, label: ModeLabel) -> &LibraryEntry {
        self.entries
            .iter()
            .find(|e| e.mode.label == label)
            .expect("library covers every mode")
    }
}

/// Core estimate series from the surface-residual observer.
#[derive(Debug, Clone)]
pub struct CoreEstimate {
    pub t_core: Vec<f64>,
    pub t_surf: Vec<f64>,
    /// Set when the estimate left the configured magnitude bound.
    pub diverged: bool,
}

/// Advance the observer one sample period under a held measurement `y`.
///
/// RK4 at a sub-second step; the surface residual `y - Ts` feeds both state
/// equations through the gains.
pub fn observer_step(
    state: (f64, f64),
    y: f64,
    period_s: f64,
    params: &BatteryParams,
    mode: &OperatingMode,
    gains: (f64, f64),
) -> (f64, f64) {
    let n_sub = (period_s.ceil() as usize).max(1);
    let sub_dt = period_s / n_sub as f64;
    let heat = mode.current_mean * mode.current_mean * params.r_elec;
    let rc = mode.r_cond_mean;
    let (mut tc, mut ts) = state;
    let f = |tc: f64, ts: f64| -> (f64, f64) {
        let cond = (ts - tc) / rc;
        let residual = y - ts;
        (
            (heat + cond) / params.c_core + gains.0 * residual,
            ((params.t_amb - ts) / params.r_conv - cond) / params.c_surf + gains.1 * residual,
        )
    };
    for _ in 0..n_sub {
        let k1 = f(tc, ts);
        let k2 = f(tc + 0.5 * sub_dt * k1.0, ts + 0.5 * sub_dt * k1.1);
        let k3 = f(tc + 0.5 * sub_dt * k2.0, ts + 0.5 * sub_dt * k2.1);
        let k4 = f(tc + sub_dt * k3.0, ts + sub_dt * k3.1);
        tc += sub_dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        ts += sub_dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    (tc, ts)
}

/// Run the observer along a measured surface series with sample period
/// `period_s`, starting from ambient.
///
/// Gains are `(mu_core, mu_surf)` in 1/s; with both zero the observer is the
/// open-loop model at the assumed mode's mean inputs.
pub fn estimate_core(
    ts_measured: &[f64],
    period_s: f64,
    params: &BatteryParams,
    mode: &OperatingMode,
    gains: (f64, f64),
) -> Result<CoreEstimate> {
    params.validate()?;
    if ts_measured.is_empty() {
        return Err(Error::InvalidParameter("empty measurement series".into()));
    }
    if !(period_s.is_finite() && period_s > 0.0) {
        return Err(Error::InvalidParameter("period must be positive".into()));
    }
    if !(gains.0.is_finite() && gains.1.is_finite()) {
        return Err(Error::NonFinite("gains".into()));
    }

    let mut state = (params.t_amb, params.t_amb);
    let mut out_core = Vec::with_capacity(ts_measured.len());
    let mut out_surf = Vec::with_capacity(ts_measured.len());
    let mut diverged = false;
    out_core.push(state.0);
    out_surf.push(state.1);
    for &y in &ts_measured[1..] {
        if !diverged {
            state = observer_step(state, y, period_s, params, mode, gains);
            if !(state.0.is_finite() && state.1.is_finite())
                || state.0.abs() > DIVERGENCE_BOUND_C
            {
                diverged = true;
            }
        }
        out_core.push(state.0);
        out_surf.push(state.1);
    }
    Ok(CoreEstimate { t_core: out_core, t_surf: out_surf, diverged })
}

/// Closed-form equilibrium of the observer under a constant measurement `y`.
///
/// Returns `(t_core, t_surf)`. Errors when the gain combination removes the
/// stable equilibrium (non-positive effective leak).
pub fn estimate_core_steady(
    y: f64,
    params: &BatteryParams,
    mode: &OperatingMode,
    gains: (f64, f64),
) -> Result<(f64, f64)> {
    params.validate()?;
    if !y.is_finite() {
        return Err(Error::NonFinite("surface measurement".into()));
    }
    let heat = mode.current_mean * mode.current_mean * params.r_elec;
    let weight = params.c_core * gains.0 + params.c_surf * gains.1;
    let den = 1.0 / params.r_conv + weight;
    if den <= 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "observer gains ({}, {}) leave no stable equilibrium",
            gains.0, gains.1
        )));
    }
    let ts = (heat + params.t_amb / params.r_conv + weight * y) / den;
    let tc = ts + mode.r_cond_mean * (heat + params.c_core * gains.0 * (y - ts));
    Ok((tc, ts))
}

/// Outcome of one reachable-set distance minimization.
#[derive(Debug, Clone)]
pub struct MinDistance {
    /// Squared distance in degrees Celsius squared.
    pub j: f64,
    /// Minimizing germ vector.
    pub xi: Vec<f64>,
    pub converged: bool,
}

/// Squared-distance objective between the surrogate pair at `xi` and the
/// measured pair.
fn distance_sq(tc: &GpcSurrogate, ts: &GpcSurrogate, measured: (f64, f64), xi: &[f64]) -> f64 {
    let dc = tc.eval(xi) - measured.0;
    let ds = ts.eval(xi) - measured.1;
    dc * dc + ds * ds
}

/// Minimize the squared distance between the mode's surrogate pair and a
/// measured `(T_c, T_s)` pair over the three-sigma germ box.
pub fn min_distance(
    tc: &GpcSurrogate,
    ts: &GpcSurrogate,
    measured: (f64, f64),
) -> Result<MinDistance> {
    if !(measured.0.is_finite() && measured.1.is_finite()) {
        return Err(Error::NonFinite("measured pair".into()));
    }
    let n = tc.basis().n_germs();
    let bounds = vec![(-GERM_BOX, GERM_BOX); n];
    // Fixed spread of starts: the center plus the four off-axis points.
    let mut starts = vec![vec![0.0; n]];
    if n == 2 {
        for corner in [(1.8, 1.8), (-1.8, 1.8), (1.8, -1.8), (-1.8, -1.8)] {
            starts.push(vec![corner.0, corner.1]);
        }
    } else {
        for g in 0..n {
            let mut s = vec![0.0; n];
            s[g] = 1.8;
            starts.push(s.clone());
            s[g] = -1.8;
            starts.push(s);
        }
    }
    let problem = OptProblem {
        objective: |xi: &[f64]| distance_sq(tc, ts, measured, xi),
        bounds: &bounds,
        starts: &starts,
        tol_x: 1e-9,
        tol_f: 1e-16,
        max_evals: 400,
    };
    let r = minimize(&problem)?;
    Ok(MinDistance { j: r.value, xi: r.argmin, converged: r.converged })
}

/// Classification of one measurement pair.
#[derive(Debug, Clone)]
pub struct ClassificationResult {
    pub predicted: ModeLabel,
    /// Minimum distance per mode, in declaration order.
    pub distances: Vec<f64>,
    /// Minimizing germ per mode.
    pub xi_stars: Vec<Vec<f64>>,
    /// JCR membership probability of the measured pair under the winner.
    pub membership: f64,
    pub all_converged: bool,
}

/// Attribute a measured pair to a mode by the minimum-distance criterion.
pub fn classify(measured: (f64, f64), library: &ModeLibrary) -> Result<ClassificationResult> {
    if library.entries.len() != MODE_LABELS.len() {
        return Err(Error::InvalidParameter(format!(
            "library has {} entries, expected {}",
            library.entries.len(),
            MODE_LABELS.len()
        )));
    }
    let mut distances = Vec::with_capacity(library.entries.len());
    let mut xi_stars = Vec::with_capacity(library.entries.len());
    let mut all_converged = true;
    for entry in &library.entries {
        let d = min_distance(&entry.tc, &entry.ts, measured)?;
        all_converged &= d.converged;
        distances.push(d.j);
        xi_stars.push(d.xi);
    }
    let j_min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    // Near-ties fall through to the membership probability, then to
    // declaration order (the first tied entry wins).
    let mut best_idx = usize::MAX;
    let mut best_membership = f64::NEG_INFINITY;
    for (idx, entry) in library.entries.iter().enumerate() {
        if distances[idx] <= j_min + TIE_EPS {
            let m = entry.map.membership(measured.0, measured.1);
            if m > best_membership {
                best_membership = m;
                best_idx = idx;
            }
        }
    }
    Ok(ClassificationResult {
        predicted: library.entries[best_idx].mode.label,
        distances,
        xi_stars,
        membership: best_membership,
        all_converged,
    })
}

/// Classification accuracy over a labeled suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub n_total: usize,
    pub n_id: usize,
    /// Fault classification rate `n_id / n_total`.
    pub r_fcr: f64,
    /// `confusion[truth][predicted]` in mode declaration order.
    pub confusion: [[usize; 4]; 4],
}

/// Exact counting of correct classifications and the confusion matrix.
pub fn score(predictions: &[ModeLabel], truth: &[ModeLabel]) -> Result<ClassificationReport> {
    if predictions.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidParameter("empty classification suite".into()));
    }
    let mut confusion = [[0usize; 4]; 4];
    let mut n_id = 0usize;
    for (&p, &t) in predictions.iter().zip(truth) {
        confusion[t.index()][p.index()] += 1;
        if p == t {
            n_id += 1;
        }
    }
    Ok(ClassificationReport {
        n_total: predictions.len(),
        n_id,
        r_fcr: n_id as f64 / predictions.len() as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_modes;
    use crate::thermal;
    use approx::assert_abs_diff_eq;

    fn paper_basis() -> Arc<MultiIndexBasis> {
        MultiIndexBasis::new(2, 2).unwrap()
    }

    fn quick_opts() -> CalibrationOptions {
        CalibrationOptions {
            horizon_s: 6.0 * 3600.0,
            dt_s: 2.0,
            jcr_samples: 20_000,
            jcr_bins: 40,
            seed: 77,
        }
    }

    fn library() -> ModeLibrary {
        build_library(
            &BatteryParams::default(),
            &default_modes(),
            &paper_basis(),
            &quick_opts(),
        )
        .unwrap()
    }

    #[test]
    fn library_means_match_the_closed_forms() {
        let lib = library();
        assert_eq!(lib.entries.len(), 4);
        let mut seen = std::collections::HashSet::new();
        for entry in &lib.entries {
            let ss = thermal::steady_state(
                &BatteryParams::default().with_r_cond(entry.mode.r_cond_mean),
                entry.mode.current_mean,
            )
            .unwrap();
            assert!((entry.tc.mean() - ss.t_core).abs() < 0.2, "{}", entry.mode.label);
            assert!((entry.ts.mean() - ss.t_surf).abs() < 0.2);
            seen.insert((
                (entry.tc.mean() * 1e6) as i64,
                (entry.ts.mean() * 1e6) as i64,
            ));
        }
        assert_eq!(seen.len(), 4, "mean pairs must be distinct");
    }

    #[test]
    fn library_serialization_is_deterministic() {
        let a = serde_json::to_string(&library()).unwrap();
        let b = serde_json::to_string(&library()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn min_distance_recovers_a_center_point() {
        let lib = library();
        let e = lib.entry(ModeLabel::Normal);
        let target = (e.tc.eval(&[0.0, 0.0]), e.ts.eval(&[0.0, 0.0]));
        let d = min_distance(&e.tc, &e.ts, target).unwrap();
        assert!(d.j < 1e-12, "j = {}", d.j);
        assert!(d.xi[0].abs() < 0.1 && d.xi[1].abs() < 0.1, "xi = {:?}", d.xi);
    }

    #[test]
    fn min_distance_recovers_an_interior_point() {
        let lib = library();
        let e = lib.entry(ModeLabel::Normal);
        let target = (e.tc.eval(&[1.5, -2.0]), e.ts.eval(&[1.5, -2.0]));
        let d = min_distance(&e.tc, &e.ts, target).unwrap();
        assert!(d.j < 1e-6, "j = {}", d.j);
    }

    #[test]
    fn far_point_activates_the_box_boundary() {
        let lib = library();
        let e = lib.entry(ModeLabel::Normal);
        let target = (e.tc.mean() + 10.0, e.ts.mean() + 10.0);
        let d = min_distance(&e.tc, &e.ts, target).unwrap();
        assert!(d.j > 0.0);
        let on_edge = d.xi.iter().any(|x| (x.abs() - GERM_BOX).abs() < 1e-6);
        assert!(on_edge, "xi = {:?}", d.xi);

        // Grid-search oracle over the box: the optimizer is never worse.
        let mut grid_best = f64::INFINITY;
        for i in 0..200 {
            for j in 0..200 {
                let xi = [
                    -GERM_BOX + 6.0 * i as f64 / 199.0,
                    -GERM_BOX + 6.0 * j as f64 / 199.0,
                ];
                grid_best = grid_best.min(distance_sq(&e.tc, &e.ts, target, &xi));
            }
        }
        assert!(d.j <= grid_best + 1e-6, "opt {} vs grid {}", d.j, grid_best);
    }

    #[test]
    fn optimizer_beats_a_coarse_grid_on_random_pairs() {
        let lib = library();
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(55);
        for _ in 0..25 {
            let target = (
                28.0 + rng.gen::<f64>() * 8.0,
                26.0 + rng.gen::<f64>() * 4.0,
            );
            for entry in &lib.entries {
                let d = min_distance(&entry.tc, &entry.ts, target).unwrap();
                let mut grid_best = f64::INFINITY;
                for i in 0..50 {
                    for j in 0..50 {
                        let xi = [
                            -GERM_BOX + 6.0 * i as f64 / 49.0,
                            -GERM_BOX + 6.0 * j as f64 / 49.0,
                        ];
                        grid_best = grid_best.min(distance_sq(&entry.tc, &entry.ts, target, &xi));
                    }
                }
                assert!(
                    d.j <= grid_best + 1e-6,
                    "opt {} vs grid {} for {:?}",
                    d.j,
                    grid_best,
                    target
                );
            }
        }
    }

    #[test]
    fn classify_mode_means() {
        let lib = library();
        for label in MODE_LABELS {
            let e = lib.entry(label);
            let r = classify((e.tc.mean(), e.ts.mean()), &lib).unwrap();
            assert_eq!(r.predicted, label, "means of {label}");
        }
    }

    #[test]
    fn simultaneous_fault_means_are_far_from_everything_else() {
        let lib = library();
        let e = lib.entry(ModeLabel::Faulty3);
        let r = classify((e.tc.mean(), e.ts.mean()), &lib).unwrap();
        assert_eq!(r.predicted, ModeLabel::Faulty3);
        assert!(r.distances[ModeLabel::Faulty3.index()] < 1e-9);
        for label in [ModeLabel::Normal, ModeLabel::Faulty1, ModeLabel::Faulty2] {
            assert!(
                r.distances[label.index()] > 0.05,
                "{label}: {}",
                r.distances[label.index()]
            );
        }
    }

    #[test]
    fn classification_is_stable_under_library_reordering() {
        let lib = library();
        let mut reversed = lib.clone();
        reversed.entries.reverse();
        for label in MODE_LABELS {
            let e = lib.entry(label);
            // Clearly separated point: the mode's own mean.
            let pair = (e.tc.mean(), e.ts.mean());
            let a = classify(pair, &lib).unwrap();
            let b = classify(pair, &reversed).unwrap();
            assert_eq!(a.predicted, b.predicted);
        }
    }

    #[test]
    fn score_arithmetic() {
        let truth: Vec<ModeLabel> = (0..1000)
            .map(|i| ModeLabel::from_index(i % 4).unwrap())
            .collect();
        let mut predictions = truth.clone();
        for p in predictions.iter_mut().take(60) {
            *p = if *p == ModeLabel::Normal { ModeLabel::Faulty1 } else { ModeLabel::Normal };
        }
        let report = score(&predictions, &truth).unwrap();
        assert_eq!(report.n_total, 1000);
        assert_eq!(report.n_id, 940);
        assert_abs_diff_eq!(report.r_fcr, 0.94, epsilon = 1e-12);
        let row_sums: Vec<usize> =
            report.confusion.iter().map(|row| row.iter().sum()).collect();
        assert_eq!(row_sums, vec![250, 250, 250, 250]);

        let all_wrong: Vec<ModeLabel> = truth
            .iter()
            .map(|t| ModeLabel::from_index((t.index() + 1) % 4).unwrap())
            .collect();
        assert_eq!(score(&all_wrong, &truth).unwrap().r_fcr, 0.0);

        let small = score(
            &[ModeLabel::Normal, ModeLabel::Normal, ModeLabel::Faulty1, ModeLabel::Faulty2],
            &[ModeLabel::Normal, ModeLabel::Normal, ModeLabel::Faulty1, ModeLabel::Faulty3],
        )
        .unwrap();
        assert_abs_diff_eq!(small.r_fcr, 0.75, epsilon = 1e-12);

        assert!(score(&[], &[]).is_err());
        assert!(score(&[ModeLabel::Normal], &[]).is_err());
    }

    #[test]
    fn observer_with_zero_gains_reproduces_its_own_model() {
        // Measurements generated by the same model from the same start: the
        // open-loop observer must match the truth exactly.
        let params = BatteryParams::default();
        let mode = *default_modes().get(ModeLabel::Normal);
        let p = params.with_r_cond(mode.r_cond_mean);
        let truth = thermal::integrate(
            &p,
            |_| mode.current_mean,
            3600.0,
            1.0,
            thermal::ThermalState::uniform(25.0),
        )
        .unwrap();
        let measured: Vec<f64> = truth.states.iter().step_by(60).map(|s| s.t_surf).collect();
        let est = estimate_core(&measured, 60.0, &params, &mode, (0.0, 0.0)).unwrap();
        assert!(!est.diverged);
        for (i, est_tc) in est.t_core.iter().enumerate() {
            let true_tc = truth.states[i * 60].t_core;
            assert!((est_tc - true_tc).abs() < 1e-9, "sample {i}");
        }
    }

    #[test]
    fn open_loop_bias_equals_the_steady_state_difference() {
        let params = BatteryParams::default();
        let mode = *default_modes().get(ModeLabel::Normal);
        let true_current = mode.current_mean * 1.1;
        let p = params.with_r_cond(mode.r_cond_mean);
        let true_ss = thermal::steady_state(&p, true_current).unwrap();
        let assumed_ss = thermal::steady_state(&p, mode.current_mean).unwrap();

        let (tc_est, _) =
            estimate_core_steady(true_ss.t_surf, &params, &mode, (0.0, 0.0)).unwrap();
        let bias = (true_ss.t_core - tc_est).abs();
        let expected = (true_ss.t_core - assumed_ss.t_core).abs();
        assert_abs_diff_eq!(bias, expected, epsilon = 1e-9);
    }

    #[test]
    fn feedback_gains_cut_the_open_loop_bias() {
        let params = BatteryParams::default();
        let mode = *default_modes().get(ModeLabel::Normal);
        let true_current = mode.current_mean * 1.1;
        let p = params.with_r_cond(mode.r_cond_mean);
        let true_ss = thermal::steady_state(&p, true_current).unwrap();

        let (open, _) = estimate_core_steady(true_ss.t_surf, &params, &mode, (0.0, 0.0)).unwrap();
        let (closed, _) =
            estimate_core_steady(true_ss.t_surf, &params, &mode, (0.05, 0.5)).unwrap();
        let bias_open = (true_ss.t_core - open).abs();
        let bias_closed = (true_ss.t_core - closed).abs();
        assert!(
            bias_closed < 0.5 * bias_open,
            "open {bias_open} closed {bias_closed}"
        );
    }

    #[test]
    fn steady_and_series_observers_agree_on_a_constant_input() {
        let params = BatteryParams::default();
        let mode = *default_modes().get(ModeLabel::Normal);
        let y = 28.5;
        let gains = (0.02, 0.3);
        let measured = vec![y; 400];
        let series = estimate_core(&measured, 60.0, &params, &mode, gains).unwrap();
        let (tc, ts) = estimate_core_steady(y, &params, &mode, gains).unwrap();
        assert!((series.t_core.last().unwrap() - tc).abs() < 1e-6);
        assert!((series.t_surf.last().unwrap() - ts).abs() < 1e-6);
    }

    #[test]
    fn runaway_gains_set_the_divergence_flag() {
        let params = BatteryParams::default();
        let mode = *default_modes().get(ModeLabel::Normal);
        let measured = vec![30.0; 50];
        // Strongly positive feedback destabilizes the observer.
        let est = estimate_core(&measured, 60.0, &params, &mode, (-0.9, -0.9)).unwrap();
        assert!(est.diverged);
    }
}
