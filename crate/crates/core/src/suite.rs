//! Labeled steady-state sample suites and the two competing pipelines.
//!
//! A suite sample is one battery observation at statistical steady state: a
//! mode is active, an (I, Rc) perturbation pair is drawn from it, and the
//! closed-form steady temperatures follow. What the classifiers see is the
//! estimation stage's output: the temperature pair with the residual error
//! left after the observer has filtered the raw sensor noise. The raw noise
//! level is `noise_pct` percent of the instantaneous true value; the
//! estimator residuals are configurable fractions of that level per
//! coordinate.
//!
//! `run_gpc` classifies every sample with the minimum-distance criterion;
//! `run_mc` runs the Monte Carlo identification per sample. Both time their
//! per-sample work so the pipelines can be compared on accuracy and speed.

use crate::error::Result;
use crate::fdd::{classify, score, ClassificationReport, ModeLibrary};
use crate::galerkin::{assemble, GalerkinSystem, UncertainInput};
use crate::mc::{mc_classify, mc_identify, McConfig};
use crate::scenario::{
    synthesize, MeasurementTrace, ModeLabel, ModeSchedule, ModeSet, SynthesisSpec,
};
use crate::thermal::{steady_state, BatteryParams};
use crate::basis::MultiIndexBasis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Residual noise on the estimator's surface output as a fraction of the raw
/// sensor noise level. A first-order observer with a settling time of a few
/// sample periods attenuates per-sample white noise to roughly a third.
pub const DEFAULT_SURFACE_NOISE_FACTOR: f64 = 0.30;

/// Residual error of the core estimate, as a fraction of the raw noise level
/// applied to the core temperature. The core channel filters once more
/// through the conduction path, so it ends up cleaner than the surface.
pub const DEFAULT_CORE_NOISE_FACTOR: f64 = 0.15;

/// Suite geometry and noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub n_samples: usize,
    /// Raw surface sensor noise, percent of the instantaneous true value.
    pub noise_pct: f64,
    /// Estimator residual on the classified surface value, as a fraction of
    /// the raw noise level.
    pub surface_noise_factor: f64,
    /// Estimator residual on the classified core value, as a fraction of the
    /// raw noise level.
    pub core_noise_factor: f64,
    pub seed: u64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            noise_pct: 2.0,
            surface_noise_factor: DEFAULT_SURFACE_NOISE_FACTOR,
            core_noise_factor: DEFAULT_CORE_NOISE_FACTOR,
            seed: 0x5017e,
        }
    }
}

/// One labeled steady-state observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub truth: ModeLabel,
    pub tc_true: f64,
    pub ts_true: f64,
    /// Estimated core temperature handed to the classifiers.
    pub tc_est: f64,
    /// Noisy surface measurement.
    pub ts_meas: f64,
}

/// Generate a suite with equal mode allocation (round-robin).
pub fn generate(
    params: &BatteryParams,
    modes: &ModeSet,
    spec: &SuiteSpec,
) -> Result<Vec<LabeledSample>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let truth = crate::scenario::MODE_LABELS[i % 4];
        let mode = modes.get(truth);
        let current = mode.current_mean + mode.current_std * rng.sample::<f64, _>(StandardNormal);
        let r_cond = loop {
            let v = mode.r_cond_mean + mode.r_cond_std * rng.sample::<f64, _>(StandardNormal);
            if v > 0.0 {
                break v;
            }
        };
        let ss = steady_state(&params.with_r_cond(r_cond), current)?;
        let sigma_s = spec.surface_noise_factor * spec.noise_pct / 100.0 * ss.t_surf.abs();
        let sigma_c = spec.core_noise_factor * spec.noise_pct / 100.0 * ss.t_core.abs();
        let ts_meas = ss.t_surf + sigma_s * rng.sample::<f64, _>(StandardNormal);
        let tc_est = ss.t_core + sigma_c * rng.sample::<f64, _>(StandardNormal);
        out.push(LabeledSample {
            truth,
            tc_true: ss.t_core,
            ts_true: ss.t_surf,
            tc_est,
            ts_meas,
        });
    }
    Ok(out)
}

/// Per-sample classification record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRow {
    pub idx: usize,
    pub truth: ModeLabel,
    pub predicted: ModeLabel,
    /// Minimum distances in mode declaration order.
    pub distances: Vec<f64>,
    pub membership: f64,
    pub tc_est: f64,
    pub ts_meas: f64,
}

/// Outcome of one pipeline over one suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub report: ClassificationReport,
    /// Mean wall-clock seconds per sample.
    pub mean_time_s: f64,
    pub rows: Vec<SampleRow>,
}

impl SuiteOutcome {
    /// Per-mode classification rate from the confusion diagonal.
    pub fn per_mode_rate(&self, label: ModeLabel) -> f64 {
        let row = &self.report.confusion[label.index()];
        let total: usize = row.iter().sum();
        if total == 0 {
            return f64::NAN;
        }
        row[label.index()] as f64 / total as f64
    }

    /// CSV with header `time_s,true_mode,predicted_mode,J_normal,J_f1,J_f2,J_f3,membership_prob`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "time_s,true_mode,predicted_mode,J_normal,J_f1,J_f2,J_f3,membership_prob"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.idx,
                r.truth,
                r.predicted,
                r.distances[0],
                r.distances[1],
                r.distances[2],
                r.distances[3],
                r.membership
            )?;
        }
        Ok(())
    }
}

/// Classify every sample by the gPC minimum-distance pipeline.
pub fn run_gpc(samples: &[LabeledSample], library: &ModeLibrary) -> Result<SuiteOutcome> {
    let mut rows = Vec::with_capacity(samples.len());
    let mut predictions = Vec::with_capacity(samples.len());
    let mut truths = Vec::with_capacity(samples.len());
    let mut elapsed = 0.0;
    for (idx, s) in samples.iter().enumerate() {
        let started = std::time::Instant::now();
        let r = classify((s.tc_est, s.ts_meas), library)?;
        elapsed += started.elapsed().as_secs_f64();
        predictions.push(r.predicted);
        truths.push(s.truth);
        rows.push(SampleRow {
            idx,
            truth: s.truth,
            predicted: r.predicted,
            distances: r.distances,
            membership: r.membership,
            tc_est: s.tc_est,
            ts_meas: s.ts_meas,
        });
    }
    Ok(SuiteOutcome {
        report: score(&predictions, &truths)?,
        mean_time_s: elapsed / samples.len() as f64,
        rows,
    })
}

/// Identify and classify every sample by the Monte Carlo pipeline.
pub fn run_mc(
    samples: &[LabeledSample],
    params: &BatteryParams,
    modes: &ModeSet,
    cfg: &McConfig,
) -> Result<SuiteOutcome> {
    let mut rows = Vec::with_capacity(samples.len());
    let mut predictions = Vec::with_capacity(samples.len());
    let mut truths = Vec::with_capacity(samples.len());
    let mut elapsed = 0.0;
    for (idx, s) in samples.iter().enumerate() {
        let per_sample = McConfig {
            seed: cfg.seed.wrapping_add(idx as u64),
            ..*cfg
        };
        let started = std::time::Instant::now();
        let id = mc_identify((s.tc_est, s.ts_meas), params, &per_sample)?;
        let predicted = mc_classify(&id, modes);
        elapsed += started.elapsed().as_secs_f64();
        predictions.push(predicted);
        truths.push(s.truth);
        rows.push(SampleRow {
            idx,
            truth: s.truth,
            predicted,
            distances: vec![id.i_mean, id.i_std, id.rc_mean, id.rc_std],
            membership: id.objective,
            tc_est: s.tc_est,
            ts_meas: s.ts_meas,
        });
    }
    Ok(SuiteOutcome {
        report: score(&predictions, &truths)?,
        mean_time_s: elapsed / samples.len() as f64,
        rows,
    })
}

/// Settings for the mismatch-correction experiment: classify one suite
/// against the mismatched library, correct every mode against its own
/// training trace, and classify again.
#[derive(Debug, Clone)]
pub struct UpliftConfig {
    /// Percent magnitude of the random-sign mean mismatch.
    pub mismatch_pct: f64,
    pub mismatch_seed: u64,
    pub suite: SuiteSpec,
    /// Length of each mode's training trace (s).
    pub training_t_end: f64,
    pub training_noise_pct: f64,
    pub training_seed: u64,
    pub window: crate::correction::WindowSpec,
    pub online: crate::correction::OnlineOptions,
    pub cal: crate::fdd::CalibrationOptions,
}

impl Default for UpliftConfig {
    fn default() -> Self {
        Self {
            mismatch_pct: 10.0,
            mismatch_seed: 1,
            suite: SuiteSpec::default(),
            training_t_end: 3.0 * 3600.0,
            training_noise_pct: 2.0,
            training_seed: 0x7ea1,
            window: crate::correction::WindowSpec::default(),
            online: crate::correction::OnlineOptions::default(),
            cal: crate::fdd::CalibrationOptions::default(),
        }
    }
}

/// Per-mode classification rates before and after correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeUplift {
    pub label: ModeLabel,
    pub r_without: f64,
    pub r_with: f64,
    /// Percentage-point improvement.
    pub uplift_pp: f64,
}

/// Outcome of the full mismatch-correction experiment.
pub struct UpliftOutcome {
    pub per_mode: Vec<ModeUplift>,
    pub without: SuiteOutcome,
    pub with_correction: SuiteOutcome,
    pub trajectories: Vec<(ModeLabel, crate::correction::GainTrajectory)>,
    /// The mismatched mode table the model side believed in.
    pub assumed_modes: ModeSet,
}

/// Run the full experiment: the plant follows `true_modes`, the model side
/// believes a randomly mismatched copy, correction re-centers the model on
/// per-mode training traces, and the same suite is classified against both
/// libraries.
pub fn run_uplift_experiment(
    params: &BatteryParams,
    true_modes: &ModeSet,
    basis: &Arc<MultiIndexBasis>,
    cfg: &UpliftConfig,
) -> Result<UpliftOutcome> {
    let assumed = true_modes.with_mean_mismatch(cfg.mismatch_pct, cfg.mismatch_seed);
    let assumed_lib = crate::fdd::build_library(params, &assumed, basis, &cfg.cal)?;
    let samples = generate(params, true_modes, &cfg.suite)?;
    let without = run_gpc(&samples, &assumed_lib)?;

    let traces = training_traces(
        params,
        true_modes,
        cfg.training_t_end,
        cfg.training_noise_pct,
        cfg.training_seed,
    )?;
    let systems = build_systems(params, &assumed, basis)?;
    let corrected = crate::correction::correct_library(
        &assumed_lib,
        params,
        &traces,
        &cfg.window,
        &cfg.online,
        &systems,
    )?;
    let with_correction = run_gpc(&samples, &corrected.library)?;

    let per_mode = crate::scenario::MODE_LABELS
        .iter()
        .map(|&label| {
            let r_without = without.per_mode_rate(label);
            let r_with = with_correction.per_mode_rate(label);
            ModeUplift {
                label,
                r_without,
                r_with,
                uplift_pp: (r_with - r_without) * 100.0,
            }
        })
        .collect();
    Ok(UpliftOutcome {
        per_mode,
        without,
        with_correction,
        trajectories: corrected.trajectories,
        assumed_modes: assumed,
    })
}

/// Assemble one Galerkin system per mode.
pub fn build_systems(
    params: &BatteryParams,
    modes: &ModeSet,
    basis: &Arc<MultiIndexBasis>,
) -> Result<Vec<(ModeLabel, GalerkinSystem)>> {
    modes
        .iter()
        .map(|m| {
            let sys = assemble(
                params,
                UncertainInput::new(m.current_mean, m.current_std, 0),
                UncertainInput::new(m.r_cond_mean, m.r_cond_std, 1),
                basis,
            )?;
            Ok((m.label, sys))
        })
        .collect()
}

/// One single-mode training trace per mode, each with its own seed stream.
pub fn training_traces(
    params: &BatteryParams,
    true_modes: &ModeSet,
    t_end: f64,
    noise_pct: f64,
    base_seed: u64,
) -> Result<Vec<(ModeLabel, MeasurementTrace)>> {
    true_modes
        .iter()
        .map(|m| {
            let trace = synthesize(
                &ModeSchedule::single(m.label),
                true_modes,
                params,
                &SynthesisSpec {
                    dt: 60.0,
                    t_end,
                    noise_pct,
                    perturbation_hold: 60.0,
                    seed: base_seed.wrapping_add(m.label.index() as u64),
                },
            )?;
            Ok((m.label, trace))
        })
        .collect()
}
