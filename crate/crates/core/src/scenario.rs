//! Ground-truth fault scenarios and noisy measurement traces.
//!
//! A fault is a stochastic perturbation superimposed on a pair of mean values
//! for the current and the conduction resistance. The four operating modes
//! pair two current levels with two resistance levels; perturbations are
//! normal, share one standard deviation per parameter across modes, and are
//! held piecewise constant while the true temperatures integrate through
//! them.

use crate::error::{Error, Result};
use crate::thermal::{rk4_step, BatteryParams, ThermalState};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// The four operating modes: one normal, two individual faults, one
/// simultaneous fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeLabel {
    Normal,
    Faulty1,
    Faulty2,
    Faulty3,
}

pub const MODE_LABELS: [ModeLabel; 4] = [
    ModeLabel::Normal,
    ModeLabel::Faulty1,
    ModeLabel::Faulty2,
    ModeLabel::Faulty3,
];

impl ModeLabel {
    pub fn index(self) -> usize {
        match self {
            ModeLabel::Normal => 0,
            ModeLabel::Faulty1 => 1,
            ModeLabel::Faulty2 => 2,
            ModeLabel::Faulty3 => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        MODE_LABELS.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModeLabel::Normal => "normal",
            ModeLabel::Faulty1 => "faulty1",
            ModeLabel::Faulty2 => "faulty2",
            ModeLabel::Faulty3 => "faulty3",
        }
    }
}

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(ModeLabel::Normal),
            "faulty1" => Ok(ModeLabel::Faulty1),
            "faulty2" => Ok(ModeLabel::Faulty2),
            "faulty3" => Ok(ModeLabel::Faulty3),
            other => Err(Error::InvalidParameter(format!("unknown mode {other:?}"))),
        }
    }
}

/// A labeled pair of mean values with the shared perturbation deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingMode {
    pub label: ModeLabel,
    /// Mean electric current (A).
    pub current_mean: f64,
    /// Mean conduction resistance (K/W).
    pub r_cond_mean: f64,
    /// Perturbation standard deviation of the current (A).
    pub current_std: f64,
    /// Perturbation standard deviation of the resistance (K/W).
    pub r_cond_std: f64,
}

/// The full four-mode table, indexable by label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub modes: [OperatingMode; 4],
}

/// Default mode table: Normal = (13.8 A, 1.68 K/W), Faulty1 = (16.2, 1.68),
/// Faulty2 = (13.8, 2.28), Faulty3 = (16.2, 2.28), with perturbation
/// deviations 0.45 A and 0.066 K/W.
pub fn default_modes() -> ModeSet {
    ModeSet::from_levels(13.8, 16.2, 1.68, 2.28, 0.45, 0.066)
}

impl ModeSet {
    /// Build the four modes from the two current levels and two resistance
    /// levels (low = normal).
    pub fn from_levels(
        i_normal: f64,
        i_fault: f64,
        rc_normal: f64,
        rc_fault: f64,
        current_std: f64,
        r_cond_std: f64,
    ) -> Self {
        let mk = |label, current_mean, r_cond_mean| OperatingMode {
            label,
            current_mean,
            r_cond_mean,
            current_std,
            r_cond_std,
        };
        Self {
            modes: [
                mk(ModeLabel::Normal, i_normal, rc_normal),
                mk(ModeLabel::Faulty1, i_fault, rc_normal),
                mk(ModeLabel::Faulty2, i_normal, rc_fault),
                mk(ModeLabel::Faulty3, i_fault, rc_fault),
            ],
        }
    }

    pub fn get(&self, label: ModeLabel) -> &OperatingMode {
        &self.modes[label.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &OperatingMode> {
        self.modes.iter()
    }

    /// Copy with a random +/-`pct` percent change applied independently to
    /// every mean value. The sign is drawn per (mode, parameter) from `seed`;
    /// the magnitude is fixed at `pct`.
    pub fn with_mean_mismatch(&self, pct: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = *self;
        for mode in out.modes.iter_mut() {
            let sign_i = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let sign_r = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            mode.current_mean *= 1.0 + sign_i * pct / 100.0;
            mode.r_cond_mean *= 1.0 + sign_r * pct / 100.0;
        }
        out
    }
}

/// Ordered mode switches; the first entry must start at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSchedule {
    pub entries: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub start_s: f64,
    pub mode: ModeLabel,
}

impl ModeSchedule {
    pub fn new(entries: Vec<(f64, ModeLabel)>) -> Result<Self> {
        let entries: Vec<ScheduleEntry> = entries
            .into_iter()
            .map(|(start_s, mode)| ScheduleEntry { start_s, mode })
            .collect();
        let schedule = Self { entries };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn single(mode: ModeLabel) -> Self {
        Self {
            entries: vec![ScheduleEntry { start_s: 0.0, mode }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidParameter("schedule is empty".into()));
        }
        if self.entries[0].start_s != 0.0 {
            return Err(Error::InvalidParameter(
                "first schedule entry must start at t = 0".into(),
            ));
        }
        for w in self.entries.windows(2) {
            if w[1].start_s <= w[0].start_s {
                return Err(Error::InvalidParameter(
                    "schedule start times must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    /// Active mode at time `t` (the last entry whose start is `<= t`).
    pub fn mode_at(&self, t: f64) -> ModeLabel {
        let mut active = self.entries[0].mode;
        for e in &self.entries {
            if e.start_s <= t {
                active = e.mode;
            } else {
                break;
            }
        }
        active
    }
}

/// How a trace is synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    /// Sample spacing of the recorded trace (s).
    pub dt: f64,
    /// Trace end time (s).
    pub t_end: f64,
    /// Measurement noise on the surface temperature, percent of the
    /// instantaneous true value.
    pub noise_pct: f64,
    /// How long each drawn (I, Rc) perturbation is held (s).
    pub perturbation_hold: f64,
    pub seed: u64,
}

/// Time-indexed synthetic record: true inputs, true temperatures, the noisy
/// surface measurement, and the ground-truth mode label per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementTrace {
    pub times: Vec<f64>,
    pub i_true: Vec<f64>,
    pub rc_true: Vec<f64>,
    pub tc_true: Vec<f64>,
    pub ts_true: Vec<f64>,
    pub ts_meas: Vec<f64>,
    pub labels: Vec<ModeLabel>,
    pub seed: u64,
}

impl MeasurementTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Ground-truth label at time `t`.
    pub fn label_at(&self, t: f64) -> Result<ModeLabel> {
        let t_end = *self.times.last().unwrap();
        if !t.is_finite() || t < 0.0 || t > t_end {
            return Err(Error::OutOfRange(format!(
                "t = {t} outside trace span [0, {t_end}]"
            )));
        }
        let dt = self.times[1] - self.times[0];
        let idx = ((t / dt).floor() as usize).min(self.labels.len() - 1);
        Ok(self.labels[idx])
    }

    /// CSV with header `time_s,mode,I_true,Rc_true,Tc_true,Ts_true,Ts_meas`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time_s,mode,I_true,Rc_true,Tc_true,Ts_true,Ts_meas")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.times[i],
                self.labels[i],
                self.i_true[i],
                self.rc_true[i],
                self.tc_true[i],
                self.ts_true[i],
                self.ts_meas[i]
            )?;
        }
        Ok(())
    }
}

/// Synthesize a trace: piecewise-constant perturbation draws drive the
/// deterministic thermal model from ambient, and independent relative noise
/// corrupts each recorded surface sample.
///
/// Exactly reproducible from `(schedule, modes, params, spec)`.
pub fn synthesize(
    schedule: &ModeSchedule,
    modes: &ModeSet,
    params: &BatteryParams,
    spec: &SynthesisSpec,
) -> Result<MeasurementTrace> {
    schedule.validate()?;
    params.validate()?;
    if !(spec.dt.is_finite() && spec.dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {} must be > 0", spec.dt)));
    }
    if spec.t_end < spec.dt {
        return Err(Error::InvalidParameter(format!(
            "t_end = {} must be at least dt = {}",
            spec.t_end, spec.dt
        )));
    }
    if spec.noise_pct < 0.0 {
        return Err(Error::InvalidParameter("noise_pct must be >= 0".into()));
    }
    if spec.perturbation_hold < spec.dt {
        return Err(Error::InvalidParameter(
            "perturbation_hold must be at least dt".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_samples = (spec.t_end / spec.dt).floor() as usize;
    // Integrate internally at <= 1 s resolution, an even divisor of dt.
    let n_sub = (spec.dt.ceil() as usize).max(1);
    let sub_dt = spec.dt / n_sub as f64;

    let draw_inputs = |mode: &OperatingMode, rng: &mut ChaCha8Rng| -> (f64, f64) {
        let i = if mode.current_std > 0.0 {
            Normal::new(mode.current_mean, mode.current_std).unwrap().sample(rng)
        } else {
            mode.current_mean
        };
        let rc = if mode.r_cond_std > 0.0 {
            let dist = Normal::new(mode.r_cond_mean, mode.r_cond_std).unwrap();
            // A non-positive draw is unphysical; redraw (unreachable at the
            // default three-sigma margins).
            loop {
                let v = dist.sample(rng);
                if v > 0.0 {
                    break v;
                }
            }
        } else {
            mode.r_cond_mean
        };
        (i, rc)
    };

    let mut state = ThermalState::uniform(params.t_amb);
    let mut times = Vec::with_capacity(n_samples + 1);
    let mut i_true = Vec::with_capacity(n_samples + 1);
    let mut rc_true = Vec::with_capacity(n_samples + 1);
    let mut tc_true = Vec::with_capacity(n_samples + 1);
    let mut ts_true = Vec::with_capacity(n_samples + 1);
    let mut ts_meas = Vec::with_capacity(n_samples + 1);
    let mut labels = Vec::with_capacity(n_samples + 1);

    let mut held = {
        let mode = modes.get(schedule.mode_at(0.0));
        draw_inputs(mode, &mut rng)
    };
    let mut hold_started = 0.0;

    for sample in 0..=n_samples {
        let t = sample as f64 * spec.dt;
        let label = schedule.mode_at(t);
        // Record the sample under the currently held inputs.
        times.push(t);
        labels.push(label);
        i_true.push(held.0);
        rc_true.push(held.1);
        tc_true.push(state.t_core);
        ts_true.push(state.t_surf);
        let noisy = if spec.noise_pct > 0.0 {
            let sigma = spec.noise_pct / 100.0 * state.t_surf.abs();
            state.t_surf + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal)
        } else {
            state.t_surf
        };
        ts_meas.push(noisy);

        if sample == n_samples {
            break;
        }
        // Advance one recording interval, redrawing at hold boundaries.
        for sub in 0..n_sub {
            let now = t + sub as f64 * sub_dt;
            if now - hold_started >= spec.perturbation_hold - 1e-9 {
                let mode = modes.get(schedule.mode_at(now));
                held = draw_inputs(mode, &mut rng);
                hold_started = now;
            }
            let p = params.with_r_cond(held.1);
            state = rk4_step(state, &p, held.0, sub_dt);
        }
        if !(state.t_core.is_finite() && state.t_surf.is_finite()) {
            return Err(Error::IntegrationBlowup { step: sample + 1, time: t + spec.dt });
        }
    }

    Ok(MeasurementTrace {
        times,
        i_true,
        rc_true,
        tc_true,
        ts_true,
        ts_meas,
        labels,
        seed: spec.seed,
    })
}
