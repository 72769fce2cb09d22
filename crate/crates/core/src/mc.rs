//! Monte Carlo reference implementation.
//!
//! Forward propagation draws (I, Rc) samples and pushes each through the
//! closed-form steady state; it is the oracle every gPC moment claim is
//! checked against. The inverse path identifies the mean and standard
//! deviation of both inputs from one measured temperature pair by matching N
//! simulated pairs to the measurement, then classifies by the nearest mode in
//! normalized mean space. Common random numbers make the identification
//! objective deterministic by default.

use crate::error::{Error, Result};
use crate::optimize::{minimize, OptProblem};
use crate::scenario::{ModeLabel, ModeSet, OperatingMode};
use crate::thermal::{steady_state, BatteryParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Search box for the identified input distribution parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifyBounds {
    pub i_mean: (f64, f64),
    pub i_std: (f64, f64),
    pub rc_mean: (f64, f64),
    pub rc_std: (f64, f64),
}

impl Default for IdentifyBounds {
    fn default() -> Self {
        Self {
            i_mean: (10.0, 20.0),
            i_std: (0.0, 1.5),
            rc_mean: (1.0, 3.0),
            rc_std: (0.0, 0.2),
        }
    }
}

/// Monte Carlo identification settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Samples per objective evaluation.
    pub n_samples: usize,
    pub seed: u64,
    /// Reuse one sample set across optimizer iterations (common random
    /// numbers); turning this off reproduces the noisier fresh-draw behavior.
    pub reuse_samples: bool,
    pub bounds: IdentifyBounds,
    /// Evaluation budget per optimizer start.
    pub max_evals: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            seed: 0x6d63,
            reuse_samples: true,
            bounds: IdentifyBounds::default(),
            max_evals: 200,
        }
    }
}

/// Forward propagation through the closed-form steady state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McPropagation {
    pub tc: Vec<f64>,
    pub ts: Vec<f64>,
    pub mean_tc: f64,
    pub std_tc: f64,
    pub mean_ts: f64,
    pub std_ts: f64,
}

fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Draw `n` (I, Rc) samples from the mode and record each sample's steady
/// state. Non-positive resistance draws are redrawn.
pub fn mc_propagate(
    params: &BatteryParams,
    mode: &OperatingMode,
    n: usize,
    seed: u64,
) -> Result<McPropagation> {
    params.validate()?;
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n} must be at least 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tc = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    for _ in 0..n {
        let i = mode.current_mean + mode.current_std * rng.sample::<f64, _>(StandardNormal);
        let rc = loop {
            let v = mode.r_cond_mean + mode.r_cond_std * rng.sample::<f64, _>(StandardNormal);
            if v > 0.0 {
                break v;
            }
        };
        let ss = steady_state(&params.with_r_cond(rc), i)?;
        tc.push(ss.t_core);
        ts.push(ss.t_surf);
    }
    let (mean_tc, std_tc) = moments(&tc);
    let (mean_ts, std_ts) = moments(&ts);
    Ok(McPropagation { tc, ts, mean_tc, std_tc, mean_ts, std_ts })
}

/// Identified input distribution for one measurement pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McIdentification {
    pub i_mean: f64,
    pub i_std: f64,
    pub rc_mean: f64,
    pub rc_std: f64,
    pub objective: f64,
    pub wall_time_s: f64,
    pub converged: bool,
}

/// Minimize the summed squared deviation of `n_samples` simulated steady
/// pairs from the measured pair over (I mean, I std, Rc mean, Rc std).
pub fn mc_identify(
    measured: (f64, f64),
    params: &BatteryParams,
    cfg: &McConfig,
) -> Result<McIdentification> {
    params.validate()?;
    if !(measured.0.is_finite() && measured.1.is_finite()) {
        return Err(Error::NonFinite("measured pair".into()));
    }
    if cfg.n_samples < 1 {
        return Err(Error::InvalidParameter("n_samples must be positive".into()));
    }
    let started = std::time::Instant::now();
    let b = &cfg.bounds;
    let bounds = [b.i_mean, b.i_std, b.rc_mean, b.rc_std];

    // Common random numbers: one z-set shared by every evaluation. In
    // fresh-draw mode each evaluation redraws, so the surface is noisy the
    // way repeated simulation is.
    let draw_set = |rng: &mut ChaCha8Rng| -> Vec<(f64, f64)> {
        (0..cfg.n_samples)
            .map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect()
    };
    let mut seed_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shared: Vec<(f64, f64)> = draw_set(&mut seed_rng);
    let fresh_rng = std::cell::RefCell::new(seed_rng);

    let heat_factor = params.r_elec;
    let objective = |lambda: &[f64]| -> f64 {
        let (i_mean, i_std, rc_mean, rc_std) = (lambda[0], lambda[1], lambda[2], lambda[3]);
        let mut j = 0.0;
        let fresh;
        let zs: &[(f64, f64)] = if cfg.reuse_samples {
            &shared
        } else {
            fresh = draw_set(&mut fresh_rng.borrow_mut());
            &fresh
        };
        for &(z1, z2) in zs {
            let i = i_mean + i_std * z1;
            let rc = (rc_mean + rc_std * z2).max(1e-3);
            let heat = i * i * heat_factor;
            let ts = params.t_amb + heat * params.r_conv;
            let tc = ts + heat * rc;
            let dc = tc - measured.0;
            let ds = ts - measured.1;
            j += dc * dc + ds * ds;
        }
        j
    };

    // Neutral starts: the box center plus a fixed quarter-width spread in
    // the two mean directions. The identification is not seeded with any
    // mode's parameters.
    let center = [
        0.5 * (b.i_mean.0 + b.i_mean.1),
        0.5 * (b.i_std.0 + b.i_std.1),
        0.5 * (b.rc_mean.0 + b.rc_mean.1),
        0.5 * (b.rc_std.0 + b.rc_std.1),
    ];
    let wi = 0.25 * (b.i_mean.1 - b.i_mean.0);
    let wr = 0.25 * (b.rc_mean.1 - b.rc_mean.0);
    let mut starts: Vec<Vec<f64>> = vec![center.to_vec()];
    for (di, dr) in [(wi, wr), (-wi, wr), (wi, -wr), (-wi, -wr)] {
        let mut s = center.to_vec();
        s[0] += di;
        s[2] += dr;
        starts.push(s);
    }

    let problem = OptProblem {
        objective,
        bounds: &bounds,
        starts: &starts,
        tol_x: 1e-7,
        tol_f: 1e-12,
        max_evals: cfg.max_evals,
    };
    let r = minimize(&problem)?;
    Ok(McIdentification {
        i_mean: r.argmin[0],
        i_std: r.argmin[1],
        rc_mean: r.argmin[2],
        rc_std: r.argmin[3],
        objective: r.value,
        wall_time_s: started.elapsed().as_secs_f64(),
        converged: r.converged,
    })
}

/// Nearest mode to the identified means, each axis normalized by the spread
/// between the two mean levels. Ties resolve in declaration order.
pub fn mc_classify(id: &McIdentification, modes: &ModeSet) -> ModeLabel {
    let spread = |values: Vec<f64>| -> f64 {
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        let min = values.iter().cloned().fold(f64::MAX, f64::min);
        if max > min {
            max - min
        } else {
            1.0
        }
    };
    let i_scale = spread(modes.iter().map(|m| m.current_mean).collect());
    let rc_scale = spread(modes.iter().map(|m| m.r_cond_mean).collect());
    let mut best = ModeLabel::Normal;
    let mut best_d = f64::INFINITY;
    for m in modes.iter() {
        let di = (id.i_mean - m.current_mean) / i_scale;
        let dr = (id.rc_mean - m.r_cond_mean) / rc_scale;
        let d = di * di + dr * dr;
        if d < best_d {
            best_d = d;
            best = m.label;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_modes;

    fn params() -> BatteryParams {
        BatteryParams::default()
    }

    #[test]
    fn zero_std_mode_collapses_to_the_deterministic_steady_state() {
        let mode = OperatingMode {
            label: ModeLabel::Normal,
            current_mean: 13.8,
            r_cond_mean: 1.68,
            current_std: 0.0,
            r_cond_std: 0.0,
        };
        let prop = mc_propagate(&params(), &mode, 50, 1).unwrap();
        let ss = steady_state(&params().with_r_cond(1.68), 13.8).unwrap();
        for (&tc, &ts) in prop.tc.iter().zip(&prop.ts) {
            assert_eq!(tc, ss.t_core);
            assert_eq!(ts, ss.t_surf);
        }
        assert!(prop.std_tc < 1e-12);
    }

    #[test]
    fn propagated_moments_match_the_analytic_values() {
        let modes = default_modes();
        let prop = mc_propagate(&params(), modes.get(ModeLabel::Normal), 100_000, 42).unwrap();
        // E[Tc*] = Tf + E[I^2] Re (Ru + Rc mean); I and Rc independent.
        let e_i_sq = 13.8 * 13.8 + 0.45 * 0.45;
        let expected_tc = 25.0 + e_i_sq * 0.01 * (1.5 + 1.68);
        let expected_ts = 25.0 + e_i_sq * 0.01 * 1.5;
        assert!((prop.mean_tc - expected_tc).abs() < 0.01, "{}", prop.mean_tc);
        assert!((prop.mean_ts - expected_ts).abs() < 0.01, "{}", prop.mean_ts);
        assert!(prop.std_tc > prop.std_ts);
    }

    #[test]
    fn mc_error_shrinks_at_the_square_root_rate() {
        let modes = default_modes();
        let mode = modes.get(ModeLabel::Normal);
        let spread_of_means = |n: usize| -> f64 {
            let means: Vec<f64> = (0..20)
                .map(|k| {
                    mc_propagate(&params(), mode, n, 1000 + k).unwrap().mean_tc
                })
                .collect();
            let avg = means.iter().sum::<f64>() / means.len() as f64;
            (means.iter().map(|m| (m - avg) * (m - avg)).sum::<f64>() / 19.0).sqrt()
        };
        let s100 = spread_of_means(100);
        let s10000 = spread_of_means(10_000);
        let ratio = s100 / s10000;
        assert!(
            ratio > 5.0 && ratio < 20.0,
            "expected ~10x shrink from 100 to 10000 samples, got {ratio}"
        );
    }

    #[test]
    fn identify_recovers_the_normal_mode_from_noise_free_means() {
        let ss = steady_state(&params().with_r_cond(1.68), 13.8).unwrap();
        let id = mc_identify((ss.t_core, ss.t_surf), &params(), &McConfig::default()).unwrap();
        assert!((id.i_mean - 13.8).abs() / 13.8 < 0.02, "i_mean {}", id.i_mean);
        assert!((id.rc_mean - 1.68).abs() / 1.68 < 0.02, "rc_mean {}", id.rc_mean);
        assert!(id.wall_time_s > 0.0);
    }

    #[test]
    fn common_random_numbers_make_identification_deterministic() {
        let cfg = McConfig::default();
        let a = mc_identify((31.0, 27.9), &params(), &cfg).unwrap();
        let b = mc_identify((31.0, 27.9), &params(), &cfg).unwrap();
        assert_eq!(a.i_mean, b.i_mean);
        assert_eq!(a.rc_mean, b.rc_mean);
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn collapsed_bounds_return_the_single_point() {
        let cfg = McConfig {
            bounds: IdentifyBounds {
                i_mean: (14.0, 14.0),
                i_std: (0.1, 0.1),
                rc_mean: (2.0, 2.0),
                rc_std: (0.05, 0.05),
            },
            ..McConfig::default()
        };
        let id = mc_identify((31.0, 27.9), &params(), &cfg).unwrap();
        assert_eq!(id.i_mean, 14.0);
        assert_eq!(id.i_std, 0.1);
        assert_eq!(id.rc_mean, 2.0);
        assert_eq!(id.rc_std, 0.05);
        assert!(id.objective.is_finite());
    }

    #[test]
    fn classify_exact_and_nearby_means() {
        let modes = default_modes();
        let mk = |i_mean: f64, rc_mean: f64| McIdentification {
            i_mean,
            i_std: 0.4,
            rc_mean,
            rc_std: 0.06,
            objective: 0.0,
            wall_time_s: 0.0,
            converged: true,
        };
        assert_eq!(mc_classify(&mk(13.8, 1.68), &modes), ModeLabel::Normal);
        assert_eq!(mc_classify(&mk(16.0, 2.20), &modes), ModeLabel::Faulty3);
        assert_eq!(mc_classify(&mk(16.2, 1.68), &modes), ModeLabel::Faulty1);
        assert_eq!(mc_classify(&mk(13.9, 2.3), &modes), ModeLabel::Faulty2);
    }

    #[test]
    fn tiny_sample_counts_are_rejected_in_propagation() {
        let modes = default_modes();
        assert!(mc_propagate(&params(), modes.get(ModeLabel::Normal), 1, 1).is_err());
    }
}
