//! Intrusive stochastic Galerkin assembly of the battery thermal model.
//!
//! With the current on germ 1 and the conduction resistance on germ 2, the
//! two model temperatures become gPC expansions and the thermal ODEs turn
//! into one coupled deterministic system for all expansion coefficients.
//!
//! The ohmic source is quadratic in the current germ and expands exactly onto
//! the constant, linear, and quadratic basis terms. The conduction term
//! `(Ts - Tc) / Rc` is handled by expanding `1 / Rc(xi2)` into its own gPC
//! series and projecting the product back onto the basis through the
//! triple-product tensor, which reproduces the block coupling pattern
//! {0, 2, 4} / {1, 5} / {3} of the six-term basis.

use crate::basis::{expand_transform, norms_and_triples, GalerkinTensors, GpcSurrogate, MultiIndexBasis};
use crate::error::{Error, Result};
use crate::thermal::BatteryParams;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Gauss-Hermite nodes per germ used to expand parameter transforms.
const QUAD_ORDER: usize = 10;

/// One uncertain scalar input: `mean + std * xi_germ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertainInput {
    pub mean: f64,
    pub std: f64,
    /// Which germ this input rides on (0 = current, 1 = resistance).
    pub germ: usize,
}

impl UncertainInput {
    pub fn new(mean: f64, std: f64, germ: usize) -> Self {
        Self { mean, std, germ }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean.is_finite() && self.std.is_finite()) {
            return Err(Error::NonFinite("uncertain input".into()));
        }
        if self.std < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "std = {} must be non-negative",
                self.std
            )));
        }
        Ok(())
    }

    /// Two-term gPC representation on the shared basis.
    pub fn as_surrogate(&self, basis: &Arc<MultiIndexBasis>) -> Result<GpcSurrogate> {
        self.validate()?;
        let mut coeffs = vec![0.0; basis.len()];
        coeffs[0] = self.mean;
        if self.std > 0.0 {
            let idx = basis.linear_term(self.germ).ok_or_else(|| {
                Error::InvalidParameter(format!("basis has no linear term for germ {}", self.germ))
            })?;
            coeffs[idx] = self.std;
        }
        GpcSurrogate::new(basis.clone(), coeffs)
    }
}

/// The assembled coefficient ODE system.
///
/// State layout: `[Tc_0 .. Tc_Q, Ts_0 .. Ts_Q]`, dimension `2 (Q + 1)`.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    basis: Arc<MultiIndexBasis>,
    tensors: GalerkinTensors,
    params: BatteryParams,
    current: UncertainInput,
    resistance: UncertainInput,
    /// gPC coefficients of `1 / Rc`.
    recip_coeffs: Vec<f64>,
    /// `coupling[k][i] = sum_j r_j <phi_i phi_j phi_k> / <phi_k^2>`, row-major.
    coupling: Vec<f64>,
    /// Projection of `I^2` onto each basis term (watts once multiplied by Re).
    source_sq: Vec<f64>,
}

/// Project the stochastic model onto the basis.
///
/// Rejects a resistance whose three-sigma support touches zero; the
/// reciprocal expansion would integrate across the pole.
pub fn assemble(
    params: &BatteryParams,
    current: UncertainInput,
    resistance: UncertainInput,
    basis: &Arc<MultiIndexBasis>,
) -> Result<GalerkinSystem> {
    params.validate()?;
    current.validate()?;
    resistance.validate()?;
    if resistance.mean - 3.0 * resistance.std <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "conduction resistance support touches zero: mean {} - 3 std {}",
            resistance.mean, resistance.std
        )));
    }
    if current.germ == resistance.germ {
        return Err(Error::InvalidParameter(
            "current and resistance must ride on distinct germs".into(),
        ));
    }

    let tensors = norms_and_triples(basis);
    let recip = expand_transform(|r| 1.0 / r, &resistance.as_surrogate(basis)?, QUAD_ORDER)?;
    let recip_coeffs = recip.coeffs().to_vec();

    let n = basis.len();
    let mut coupling = vec![0.0; n * n];
    for k in 0..n {
        let norm = tensors.norm_sq(k);
        for i in 0..n {
            let mut acc = 0.0;
            for (j, &r_j) in recip_coeffs.iter().enumerate() {
                if r_j != 0.0 {
                    acc += r_j * tensors.triple(i, j, k);
                }
            }
            coupling[k * n + i] = acc / norm;
        }
    }

    // I(xi)^2 = (I0^2 + I1^2) + 2 I0 I1 He1(xi) + I1^2 He2(xi), exactly.
    let mut source_sq = vec![0.0; n];
    source_sq[0] = current.mean * current.mean + current.std * current.std;
    if current.std > 0.0 {
        let lin = basis.linear_term(current.germ).ok_or_else(|| {
            Error::InvalidParameter("basis lacks the current's linear term".into())
        })?;
        source_sq[lin] = 2.0 * current.mean * current.std;
        if let Some(quad) = basis.quadratic_term(current.germ) {
            source_sq[quad] = current.std * current.std;
        }
    }

    Ok(GalerkinSystem {
        basis: basis.clone(),
        tensors,
        params: *params,
        current,
        resistance,
        recip_coeffs,
        coupling,
        source_sq,
    })
}

impl GalerkinSystem {
    pub fn basis(&self) -> &Arc<MultiIndexBasis> {
        &self.basis
    }

    pub fn tensors(&self) -> &GalerkinTensors {
        &self.tensors
    }

    pub fn params(&self) -> &BatteryParams {
        &self.params
    }

    pub fn current(&self) -> UncertainInput {
        self.current
    }

    pub fn resistance(&self) -> UncertainInput {
        self.resistance
    }

    /// gPC coefficients of the reciprocal conduction resistance.
    pub fn recip_coeffs(&self) -> &[f64] {
        &self.recip_coeffs
    }

    /// `sum_j r_j <phi_i phi_j phi_k> / <phi_k^2>`.
    pub fn coupling(&self, k: usize, i: usize) -> f64 {
        self.coupling[k * self.basis.len() + i]
    }

    /// Ohmic source power on basis term `k` (watts).
    pub fn source_power(&self, k: usize) -> f64 {
        self.source_sq[k] * self.params.r_elec
    }

    pub fn state_dim(&self) -> usize {
        2 * self.basis.len()
    }

    /// Deterministic ambient start: mean slots at `t_amb`, all else zero.
    pub fn ambient_init(&self) -> Vec<f64> {
        let mut state = vec![0.0; self.state_dim()];
        state[0] = self.params.t_amb;
        state[self.basis.len()] = self.params.t_amb;
        state
    }

    /// Coefficient derivatives. `state` and `out` are `[Tc_*, Ts_*]`.
    pub fn rhs(&self, state: &[f64], out: &mut [f64]) {
        let n = self.basis.len();
        debug_assert_eq!(state.len(), 2 * n);
        debug_assert_eq!(out.len(), 2 * n);
        let p = &self.params;
        for k in 0..n {
            let row = &self.coupling[k * n..(k + 1) * n];
            let mut conduction = 0.0;
            for i in 0..n {
                conduction += (state[n + i] - state[i]) * row[i];
            }
            let ambient = if k == 0 { p.t_amb } else { 0.0 };
            out[k] = (self.source_sq[k] * p.r_elec + conduction) / p.c_core;
            out[n + k] = ((ambient - state[n + k]) / p.r_conv - conduction) / p.c_surf;
        }
    }

    /// Closed-form equilibrium of the coefficient system (it is linear in the
    /// state). Used as the calibration oracle against long integrations.
    pub fn steady_state(&self) -> Result<Vec<f64>> {
        let n = self.basis.len();
        let dim = 2 * n;
        let mut a = vec![0.0; dim * dim];
        let mut b = vec![0.0; dim];
        let p = &self.params;
        for k in 0..n {
            // Core row: sum_i coupling[k][i] (Ts_i - Tc_i) = -Re src_k
            for i in 0..n {
                let c = self.coupling[k * n + i];
                a[k * dim + i] = -c;
                a[k * dim + n + i] = c;
            }
            b[k] = -self.source_sq[k] * p.r_elec;
            // Surface row: (tf_k - Ts_k)/Ru - sum_i coupling[k][i] (Ts_i - Tc_i) = 0
            let r = n + k;
            for i in 0..n {
                let c = self.coupling[k * n + i];
                a[r * dim + i] = c;
                a[r * dim + n + i] = -c;
            }
            a[r * dim + n + k] -= 1.0 / p.r_conv;
            let ambient = if k == 0 { p.t_amb } else { 0.0 };
            b[r] = -ambient / p.r_conv;
        }
        solve_dense(&mut a, &mut b, dim)?;
        Ok(b)
    }

    /// Integrate the coefficient system with fixed-step RK4.
    pub fn integrate(&self, t_span: f64, dt: f64, init: &[f64]) -> Result<GpcTrajectory> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
        }
        if t_span < dt {
            return Err(Error::InvalidParameter(format!(
                "t_span = {t_span} must be at least dt = {dt}"
            )));
        }
        if init.len() != self.state_dim() {
            return Err(Error::InvalidParameter(format!(
                "initial state has dimension {}, system needs {}",
                init.len(),
                self.state_dim()
            )));
        }
        let n_steps = (t_span / dt).floor() as usize;
        let mut state = init.to_vec();
        let mut times = Vec::with_capacity(n_steps + 1);
        let mut states = Vec::with_capacity(n_steps + 1);
        times.push(0.0);
        states.push(state.clone());
        let mut scratch = Rk4Scratch::new(self.state_dim());
        for step in 0..n_steps {
            rk4_step_vec(|s, out| self.rhs(s, out), &mut state, dt, &mut scratch);
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationBlowup {
                    step: step + 1,
                    time: (step + 1) as f64 * dt,
                });
            }
            times.push((step + 1) as f64 * dt);
            states.push(state.clone());
        }
        Ok(GpcTrajectory {
            times,
            states,
            basis: self.basis.clone(),
        })
    }

    /// Split a coefficient vector into the two temperature surrogates.
    pub fn surrogates(&self, coeffs: &[f64]) -> Result<(GpcSurrogate, GpcSurrogate)> {
        split_surrogates(&self.basis, coeffs)
    }
}

fn split_surrogates(
    basis: &Arc<MultiIndexBasis>,
    coeffs: &[f64],
) -> Result<(GpcSurrogate, GpcSurrogate)> {
    let n = basis.len();
    if coeffs.len() != 2 * n {
        return Err(Error::InvalidParameter(format!(
            "coefficient vector has length {}, expected {}",
            coeffs.len(),
            2 * n
        )));
    }
    let tc = GpcSurrogate::new(basis.clone(), coeffs[..n].to_vec())?;
    let ts = GpcSurrogate::new(basis.clone(), coeffs[n..].to_vec())?;
    Ok((tc, ts))
}

/// Scratch buffers for allocation-free RK4 stepping.
pub(crate) struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

/// One classical RK4 step on a flat state vector.
pub(crate) fn rk4_step_vec(
    rhs: impl Fn(&[f64], &mut [f64]),
    state: &mut [f64],
    dt: f64,
    s: &mut Rk4Scratch,
) {
    rhs(state, &mut s.k1);
    for i in 0..state.len() {
        s.tmp[i] = state[i] + 0.5 * dt * s.k1[i];
    }
    rhs(&s.tmp, &mut s.k2);
    for i in 0..state.len() {
        s.tmp[i] = state[i] + 0.5 * dt * s.k2[i];
    }
    rhs(&s.tmp, &mut s.k3);
    for i in 0..state.len() {
        s.tmp[i] = state[i] + dt * s.k3[i];
    }
    rhs(&s.tmp, &mut s.k4);
    for i in 0..state.len() {
        state[i] += dt / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
}

/// Gaussian elimination with partial pivoting; solution overwrites `b`.
fn solve_dense(a: &mut [f64], b: &mut [f64], dim: usize) -> Result<()> {
    for col in 0..dim {
        let mut pivot = col;
        let mut best = a[col * dim + col].abs();
        for row in col + 1..dim {
            let v = a[row * dim + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-300 {
            return Err(Error::SingularSystem(format!("pivot column {col}")));
        }
        if pivot != col {
            for j in 0..dim {
                a.swap(col * dim + j, pivot * dim + j);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * dim + col];
        for row in col + 1..dim {
            let factor = a[row * dim + col] / diag;
            if factor != 0.0 {
                for j in col..dim {
                    a[row * dim + j] -= factor * a[col * dim + j];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    for col in (0..dim).rev() {
        let mut acc = b[col];
        for j in col + 1..dim {
            acc -= a[col * dim + j] * b[j];
        }
        b[col] = acc / a[col * dim + col];
    }
    Ok(())
}

/// Time-indexed gPC coefficient trajectory.
#[derive(Debug, Clone)]
pub struct GpcTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    basis: Arc<MultiIndexBasis>,
}

impl GpcTrajectory {
    pub fn basis(&self) -> &Arc<MultiIndexBasis> {
        &self.basis
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }

    /// Temperature surrogates at the grid point nearest to `t`.
    pub fn surrogates_at(&self, t: f64) -> Result<(GpcSurrogate, GpcSurrogate)> {
        let t_end = *self.times.last().unwrap();
        if !t.is_finite() || t < 0.0 || t > t_end {
            return Err(Error::OutOfRange(format!(
                "t = {t} outside trajectory span [0, {t_end}]"
            )));
        }
        let dt = if self.times.len() > 1 { self.times[1] - self.times[0] } else { 1.0 };
        let idx = ((t / dt).round() as usize).min(self.states.len() - 1);
        split_surrogates(&self.basis, &self.states[idx])
    }

    /// CSV with header `time_s,Tc0..,Ts0..,var_Tc,var_Ts`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.basis.len();
        let tensors = norms_and_triples(&self.basis);
        write!(w, "time_s")?;
        for k in 0..n {
            write!(w, ",Tc{k}")?;
        }
        for k in 0..n {
            write!(w, ",Ts{k}")?;
        }
        writeln!(w, ",var_Tc,var_Ts")?;
        for (t, state) in self.times.iter().zip(&self.states) {
            write!(w, "{t}")?;
            for v in state {
                write!(w, ",{v}")?;
            }
            let var = |offset: usize| -> f64 {
                (1..n).map(|k| state[offset + k].powi(2) * tensors.norm_sq(k)).sum()
            };
            writeln!(w, ",{},{}", var(0), var(n))?;
        }
        Ok(())
    }
}
