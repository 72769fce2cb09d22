//! Deterministic two-node thermal model of a cylindrical Li-ion cell.
//!
//! Heat generated by ohmic losses enters the core, conducts to the surface
//! through `r_cond`, and leaves to ambient air through `r_conv`:
//!
//! ```text
//! C_c dTc/dt = I^2 Re + (Ts - Tc) / Rc
//! C_s dTs/dt = (Tf - Ts) / Ru - (Ts - Tc) / Rc
//! ```
//!
//! The model is linear in the temperatures, so the equilibrium has a closed
//! form which the rest of the toolkit leans on heavily as an oracle:
//! `Ts* = Tf + I^2 Re Ru` and `Tc* = Ts* + I^2 Re Rc`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Physical constants of the two-node cell model.
///
/// Units: heat capacities in J/K, resistances in ohm (electrical) and K/W
/// (thermal), ambient temperature in degrees Celsius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    /// Heat capacity of the core material (J/K).
    pub c_core: f64,
    /// Heat capacity of the surface material (J/K).
    pub c_surf: f64,
    /// Electrical resistance (ohm).
    pub r_elec: f64,
    /// Conduction resistance between core and surface (K/W).
    pub r_cond: f64,
    /// Convection resistance between surface and ambient (K/W).
    pub r_conv: f64,
    /// Ambient air temperature (deg C).
    pub t_amb: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            c_core: 268.0,
            c_surf: 18.8,
            r_elec: 0.010,
            r_cond: 2.0,
            r_conv: 1.5,
            t_amb: 25.0,
        }
    }
}

impl BatteryParams {
    /// Check positivity of every capacity and resistance and finiteness of
    /// the ambient temperature.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c_core", self.c_core),
            ("c_surf", self.c_surf),
            ("r_elec", self.r_elec),
            ("r_cond", self.r_cond),
            ("r_conv", self.r_conv),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if !self.t_amb.is_finite() {
            return Err(Error::NonFinite("t_amb".into()));
        }
        Ok(())
    }

    /// Copy with a different conduction resistance (the faulty parameter).
    pub fn with_r_cond(&self, r_cond: f64) -> Self {
        Self { r_cond, ..*self }
    }
}

/// Core and surface temperature pair (deg C).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    pub t_core: f64,
    pub t_surf: f64,
}

impl ThermalState {
    pub fn new(t_core: f64, t_surf: f64) -> Self {
        Self { t_core, t_surf }
    }

    /// Uniform state at the given temperature.
    pub fn uniform(t: f64) -> Self {
        Self { t_core: t, t_surf: t }
    }
}

/// Electrical resistance law. The constant variant is the default; the
/// affine variant models the dependence on state of charge and core
/// temperature when coefficients are available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResistanceLaw {
    Constant { r_elec: f64 },
    Affine { beta0: f64, beta1: f64, beta2: f64 },
}

impl ResistanceLaw {
    /// Evaluate the law. `soc` must lie in [0, 1]; a non-positive result is
    /// rejected as unphysical.
    pub fn resistance(&self, soc: f64, t_core: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&soc) {
            return Err(Error::OutOfRange(format!("soc = {soc} not in [0, 1]")));
        }
        let r = match *self {
            ResistanceLaw::Constant { r_elec } => r_elec,
            ResistanceLaw::Affine { beta0, beta1, beta2 } => beta0 + beta1 * soc + beta2 * t_core,
        };
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "resistance law produced non-positive value {r} at soc = {soc}, t_core = {t_core}"
            )));
        }
        Ok(r)
    }
}

/// Time derivatives `(dTc/dt, dTs/dt)` in deg C per second.
pub fn derivs(state: ThermalState, params: &BatteryParams, current: f64) -> Result<(f64, f64)> {
    params.validate()?;
    if !current.is_finite() {
        return Err(Error::NonFinite("current".into()));
    }
    if !(state.t_core.is_finite() && state.t_surf.is_finite()) {
        return Err(Error::NonFinite("thermal state".into()));
    }
    Ok(derivs_unchecked(state, params, current))
}

#[inline]
fn derivs_unchecked(state: ThermalState, params: &BatteryParams, current: f64) -> (f64, f64) {
    let conduction = (state.t_surf - state.t_core) / params.r_cond;
    let d_core = (current * current * params.r_elec + conduction) / params.c_core;
    let d_surf =
        ((params.t_amb - state.t_surf) / params.r_conv - conduction) / params.c_surf;
    (d_core, d_surf)
}

/// Closed-form equilibrium under a constant current.
pub fn steady_state(params: &BatteryParams, current: f64) -> Result<ThermalState> {
    params.validate()?;
    if !current.is_finite() {
        return Err(Error::NonFinite("current".into()));
    }
    let heat = current * current * params.r_elec;
    let t_surf = params.t_amb + heat * params.r_conv;
    let t_core = t_surf + heat * params.r_cond;
    Ok(ThermalState { t_core, t_surf })
}

/// One classical RK4 step of the two-state model.
#[inline]
pub(crate) fn rk4_step(
    state: ThermalState,
    params: &BatteryParams,
    current: f64,
    dt: f64,
) -> ThermalState {
    let f = |s: ThermalState| derivs_unchecked(s, params, current);
    let k1 = f(state);
    let k2 = f(ThermalState::new(
        state.t_core + 0.5 * dt * k1.0,
        state.t_surf + 0.5 * dt * k1.1,
    ));
    let k3 = f(ThermalState::new(
        state.t_core + 0.5 * dt * k2.0,
        state.t_surf + 0.5 * dt * k2.1,
    ));
    let k4 = f(ThermalState::new(
        state.t_core + dt * k3.0,
        state.t_surf + dt * k3.1,
    ));
    ThermalState::new(
        state.t_core + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        state.t_surf + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// A fixed-step trajectory of the deterministic model.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ThermalState>,
}

impl Trajectory {
    pub fn last(&self) -> ThermalState {
        *self.states.last().expect("trajectory is never empty")
    }

    /// CSV with header `time_s,T_c,T_s`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time_s,T_c,T_s")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            writeln!(w, "{},{},{}", t, s.t_core, s.t_surf)?;
        }
        Ok(())
    }
}

/// Integrate the model with classical fixed-step RK4.
///
/// `current` is sampled at the start of each step and held across it. The
/// returned trajectory has `floor(t_span/dt) + 1` points including the
/// initial state. A non-finite state aborts with the offending step index.
pub fn integrate(
    params: &BatteryParams,
    current: impl Fn(f64) -> f64,
    t_span: f64,
    dt: f64,
    init: ThermalState,
) -> Result<Trajectory> {
    params.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
    }
    if t_span < dt {
        return Err(Error::InvalidParameter(format!(
            "t_span = {t_span} must be at least dt = {dt}"
        )));
    }
    let n_steps = (t_span / dt).floor() as usize;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    states.push(init);
    let mut state = init;
    for step in 0..n_steps {
        let t = step as f64 * dt;
        let i = current(t);
        if !i.is_finite() {
            return Err(Error::NonFinite(format!("current at t = {t}")));
        }
        state = rk4_step(state, params, i, dt);
        if !(state.t_core.is_finite() && state.t_surf.is_finite()) {
            return Err(Error::IntegrationBlowup { step: step + 1, time: t + dt });
        }
        times.push((step + 1) as f64 * dt);
        states.push(state);
    }
    Ok(Trajectory { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn table1() -> BatteryParams {
        BatteryParams::default()
    }

    #[test]
    fn ambient_equilibrium_has_zero_derivatives() {
        let p = table1();
        let (dc, ds) = derivs(ThermalState::uniform(25.0), &p, 0.0).unwrap();
        assert_eq!(dc, 0.0);
        assert_eq!(ds, 0.0);
    }

    #[test]
    fn core_heating_rate_from_ohmic_source() {
        let p = table1();
        let (dc, ds) = derivs(ThermalState::uniform(25.0), &p, 13.8).unwrap();
        assert_abs_diff_eq!(dc, 13.8 * 13.8 * 0.01 / 268.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dc, 7.106e-3, epsilon = 1e-6);
        assert_eq!(ds, 0.0);
    }

    #[test]
    fn derivatives_vanish_at_closed_form_equilibrium() {
        let p = table1().with_r_cond(1.68);
        let ss = steady_state(&p, 13.8).unwrap();
        assert_abs_diff_eq!(ss.t_surf, 27.8566, epsilon = 1e-4);
        assert_abs_diff_eq!(ss.t_core, 31.0560, epsilon = 1e-4);
        let (dc, ds) = derivs(ss, &p, 13.8).unwrap();
        assert!(dc.abs() < 1e-9);
        assert!(ds.abs() < 1e-9);
    }

    #[test]
    fn steady_state_matches_spiked_mode() {
        let p = table1().with_r_cond(2.28);
        let ss = steady_state(&p, 16.2).unwrap();
        assert_abs_diff_eq!(ss.t_surf, 28.9366, epsilon = 1e-4);
        assert_abs_diff_eq!(ss.t_core, 34.9202, epsilon = 1e-4);
    }

    #[test]
    fn steady_state_at_zero_current_is_ambient() {
        let p = table1();
        let ss = steady_state(&p, 0.0).unwrap();
        assert_eq!(ss.t_core, 25.0);
        assert_eq!(ss.t_surf, 25.0);
    }

    #[test]
    fn constant_law_ignores_inputs() {
        let law = ResistanceLaw::Constant { r_elec: 0.01 };
        assert_eq!(law.resistance(0.0, -40.0).unwrap(), 0.01);
        assert_eq!(law.resistance(1.0, 90.0).unwrap(), 0.01);
    }

    #[test]
    fn affine_law_arithmetic() {
        let law = ResistanceLaw::Affine { beta0: 0.008, beta1: 0.004, beta2: 0.0 };
        assert_abs_diff_eq!(law.resistance(0.5, 30.0).unwrap(), 0.010, epsilon = 1e-15);
        let degenerate = ResistanceLaw::Affine { beta0: 0.01, beta1: 0.0, beta2: 0.0 };
        assert_eq!(degenerate.resistance(0.7, 10.0).unwrap(), 0.01);
    }

    #[test]
    fn affine_law_rejects_non_positive_resistance() {
        let law = ResistanceLaw::Affine { beta0: 0.001, beta1: 0.0, beta2: -0.001 };
        assert!(law.resistance(0.5, 10.0).is_err());
        assert!(law.resistance(1.5, 10.0).is_err()); // soc out of range
    }

    #[test]
    fn zero_current_trajectory_is_constant() {
        let p = table1();
        let traj = integrate(&p, |_| 0.0, 600.0, 1.0, ThermalState::uniform(25.0)).unwrap();
        assert_eq!(traj.states.len(), 601);
        for s in &traj.states {
            assert_eq!(s.t_core, 25.0);
            assert_eq!(s.t_surf, 25.0);
        }
    }

    #[test]
    fn trajectory_converges_to_steady_state() {
        let p = table1().with_r_cond(1.68);
        let ss = steady_state(&p, 13.8).unwrap();
        let traj = integrate(&p, |_| 13.8, 14400.0, 1.0, ThermalState::uniform(25.0)).unwrap();
        let end = traj.last();
        assert!((end.t_core - ss.t_core).abs() < 1e-4);
        assert!((end.t_surf - ss.t_surf).abs() < 1e-4);
    }

    #[test]
    fn halving_dt_barely_moves_the_endpoint() {
        let p = table1().with_r_cond(1.68);
        let init = ThermalState::uniform(25.0);
        let coarse = integrate(&p, |_| 13.8, 3600.0, 2.0, init).unwrap().last();
        let fine = integrate(&p, |_| 13.8, 3600.0, 1.0, init).unwrap().last();
        assert!((coarse.t_core - fine.t_core).abs() < 1e-6);
        assert!((coarse.t_surf - fine.t_surf).abs() < 1e-6);
    }

    #[test]
    fn global_error_scales_as_dt4() {
        let p = table1().with_r_cond(1.68);
        let init = ThermalState::uniform(25.0);
        let horizon = 1200.0;
        let reference = integrate(&p, |_| 13.8, horizon, 0.125, init).unwrap().last();
        let err = |dt: f64| {
            let end = integrate(&p, |_| 13.8, horizon, dt, init).unwrap().last();
            ((end.t_core - reference.t_core).abs()).max((end.t_surf - reference.t_surf).abs())
        };
        let e4 = err(4.0);
        let e2 = err(2.0);
        let e1 = err(1.0);
        // Fourth order: each halving should shrink the error ~16x. Allow a
        // generous band for higher-order contamination.
        assert!(e4 / e2 > 8.0 && e4 / e2 < 32.0, "e4/e2 = {}", e4 / e2);
        assert!(e2 / e1 > 8.0 && e2 / e1 < 32.0, "e2/e1 = {}", e2 / e1);
    }

    #[test]
    fn heating_starts_in_the_core() {
        let p = table1();
        let traj = integrate(&p, |_| 13.8, 60.0, 1.0, ThermalState::uniform(25.0)).unwrap();
        // Core heats immediately; the surface only responds once the core is
        // warmer than the surface.
        assert!(traj.states[1].t_core > 25.0);
        for w in traj.states.windows(2) {
            if w[0].t_core > w[0].t_surf {
                assert!(w[1].t_surf >= w[0].t_surf);
            }
        }
        assert!(traj.last().t_surf > 25.0);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let mut p = table1();
        p.c_core = -1.0;
        assert!(derivs(ThermalState::uniform(25.0), &p, 1.0).is_err());
        let p = table1();
        assert!(derivs(ThermalState::uniform(25.0), &p, f64::NAN).is_err());
        assert!(derivs(ThermalState::new(f64::INFINITY, 25.0), &p, 1.0).is_err());
        assert!(integrate(&p, |_| 0.0, 10.0, 0.0, ThermalState::uniform(25.0)).is_err());
        assert!(integrate(&p, |_| 0.0, 0.5, 1.0, ThermalState::uniform(25.0)).is_err());
    }

    proptest! {
        // Equilibrium consistency: derivatives vanish at the closed form for
        // any valid parameters and current.
        #[test]
        fn equilibrium_consistency(
            current in 0.0f64..40.0,
            r_cond in 0.2f64..5.0,
            r_conv in 0.2f64..5.0,
            t_amb in -20.0f64..45.0,
        ) {
            let p = BatteryParams { r_cond, r_conv, t_amb, ..BatteryParams::default() };
            let ss = steady_state(&p, current).unwrap();
            let (dc, ds) = derivs(ss, &p, current).unwrap();
            prop_assert!(dc.abs() < 1e-9);
            prop_assert!(ds.abs() < 1e-9);
        }

        // Steady temperatures rise with |I| and the core-surface gap widens
        // with the conduction resistance.
        #[test]
        fn steady_state_monotonicity(
            i_low in 0.5f64..20.0,
            bump in 0.1f64..10.0,
            r_cond in 0.2f64..5.0,
            extra_r in 0.05f64..2.0,
        ) {
            let p = BatteryParams { r_cond, ..BatteryParams::default() };
            let lo = steady_state(&p, i_low).unwrap();
            let hi = steady_state(&p, i_low + bump).unwrap();
            prop_assert!(hi.t_core > lo.t_core);
            prop_assert!(hi.t_surf > lo.t_surf);

            let wider = steady_state(&p.with_r_cond(r_cond + extra_r), i_low).unwrap();
            prop_assert!(wider.t_core - wider.t_surf > lo.t_core - lo.t_surf);
        }
    }
}
