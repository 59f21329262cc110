//! Continuous-time SPMSM electro-mechanical model and fixed-step integrator.
//!
//! The model lives in the stationary αβ frame:
//!
//! ```text
//! θ̇  = ω
//! ω̇  = -(B/J)·ω + τ_m/J - τ_L/J
//! i̇_α = -(R/L)·i_α + (PΦ/L)·sin(Pθ)·ω + v_α/L
//! i̇_β = -(R/L)·i_β - (PΦ/L)·cos(Pθ)·ω + v_β/L
//! ```
//!
//! with the torque `τ_m = -(3/2)PΦ·sin(Pθ)·i_α + (3/2)PΦ·cos(Pθ)·i_β`.
//! θ is never wrapped; the trigonometric terms consume it directly, which
//! keeps position tracking errors free of 2π discontinuities.

use serde::Serialize;

use crate::config::MotorParams;
use crate::NonFiniteState;

/// Continuous plant state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotorState {
    /// Rotor angular position (rad), unwrapped.
    pub theta: f64,
    /// Rotor angular velocity (rad/s).
    pub omega: f64,
    /// α-axis stator current (A).
    pub i_alpha: f64,
    /// β-axis stator current (A).
    pub i_beta: f64,
}

impl MotorState {
    pub fn zero() -> Self {
        Self { theta: 0.0, omega: 0.0, i_alpha: 0.0, i_beta: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite()
            && self.omega.is_finite()
            && self.i_alpha.is_finite()
            && self.i_beta.is_finite()
    }

    fn axpy(&self, h: f64, d: &StateDerivative) -> Self {
        Self {
            theta: self.theta + h * d.d_theta,
            omega: self.omega + h * d.d_omega,
            i_alpha: self.i_alpha + h * d.d_i_alpha,
            i_beta: self.i_beta + h * d.d_i_beta,
        }
    }
}

/// Inputs held constant while the plant integrates (zero-order hold).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantInputs {
    /// α-axis terminal voltage (V), inverter error already applied.
    pub v_alpha: f64,
    /// β-axis terminal voltage (V).
    pub v_beta: f64,
    /// Load torque (N·m).
    pub tau_l: f64,
}

/// Time derivative of [`MotorState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub d_theta: f64,
    pub d_omega: f64,
    pub d_i_alpha: f64,
    pub d_i_beta: f64,
}

/// Ideal measurement of the plant state (no quantization, no delay).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub theta: f64,
    pub omega: f64,
    pub i_alpha: f64,
    pub i_beta: f64,
}

/// Electromagnetic torque in the αβ frame (N·m).
pub fn motor_torque(i_alpha: f64, i_beta: f64, theta: f64, p: &MotorParams) -> f64 {
    let km = p.torque_constant();
    let (s, c) = (f64::from(p.pole_pairs) * theta).sin_cos();
    -km * s * i_alpha + km * c * i_beta
}

/// Right-hand side of the SPMSM dynamics.
pub fn plant_derivative(state: &MotorState, inp: &PlantInputs, p: &MotorParams) -> StateDerivative {
    let pp = f64::from(p.pole_pairs);
    let (s, c) = (pp * state.theta).sin_cos();
    let tau_m = motor_torque(state.i_alpha, state.i_beta, state.theta, p);
    StateDerivative {
        d_theta: state.omega,
        d_omega: -(p.b / p.j) * state.omega + tau_m / p.j - inp.tau_l / p.j,
        d_i_alpha: -(p.r / p.l) * state.i_alpha + pp * p.phi / p.l * s * state.omega
            + inp.v_alpha / p.l,
        d_i_beta: -(p.r / p.l) * state.i_beta - pp * p.phi / p.l * c * state.omega
            + inp.v_beta / p.l,
    }
}

/// One classical 4th-order Runge–Kutta step with inputs held constant.
pub fn rk4_step(
    state: &MotorState,
    inp: &PlantInputs,
    dt: f64,
    p: &MotorParams,
) -> Result<MotorState, NonFiniteState> {
    let k1 = plant_derivative(state, inp, p);
    let k2 = plant_derivative(&state.axpy(0.5 * dt, &k1), inp, p);
    let k3 = plant_derivative(&state.axpy(0.5 * dt, &k2), inp, p);
    let k4 = plant_derivative(&state.axpy(dt, &k3), inp, p);
    let next = MotorState {
        theta: state.theta + dt / 6.0 * (k1.d_theta + 2.0 * k2.d_theta + 2.0 * k3.d_theta + k4.d_theta),
        omega: state.omega + dt / 6.0 * (k1.d_omega + 2.0 * k2.d_omega + 2.0 * k3.d_omega + k4.d_omega),
        i_alpha: state.i_alpha
            + dt / 6.0 * (k1.d_i_alpha + 2.0 * k2.d_i_alpha + 2.0 * k3.d_i_alpha + k4.d_i_alpha),
        i_beta: state.i_beta
            + dt / 6.0 * (k1.d_i_beta + 2.0 * k2.d_i_beta + 2.0 * k3.d_i_beta + k4.d_i_beta),
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(NonFiniteState)
    }
}

/// Ideal sensors: identity pass-through, θ unwrapped.
pub fn measure(state: &MotorState) -> Measurement {
    Measurement {
        theta: state.theta,
        omega: state.omega,
        i_alpha: state.i_alpha,
        i_beta: state.i_beta,
    }
}
