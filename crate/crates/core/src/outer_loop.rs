//! Outer-loop control: torque modulation, αβ current reference generation
//! and the N-PI disturbance observer that estimates the load torque.
//!
//! The observer is a copy of the mechanical model driven by the torque
//! command, corrected through the saturating nonlinearity μ and an integral
//! of the velocity estimation error:
//!
//! ```text
//! ω̂̇  = -(B/J)·ω̂ + τ_m^d/J - τ̂_L/J
//! τ̂_L = -μ_τ(ω - ω̂) - l_i_tau·∫(ω - ω̂)
//! ```

use crate::config::{GainSet, MotorParams};
use crate::NonFiniteState;

/// Saturating nonlinear gain μ(x) = l_p·x / ((x/x_max)² + 1).
///
/// Odd, with peak magnitude l_p·x_max/2 reached at |x| = x_max.
pub fn mu(x: f64, l_p: f64, x_max: f64) -> f64 {
    let y = x / x_max;
    l_p * x / (y * y + 1.0)
}

/// Analytic derivative of [`mu`]; bounded by l_p over |x| ≤ x_max.
pub fn d_mu(x: f64, l_p: f64, x_max: f64) -> f64 {
    let y2 = (x / x_max) * (x / x_max);
    l_p * (1.0 - y2) / ((y2 + 1.0) * (y2 + 1.0))
}

/// Load-torque observer state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterObserverState {
    /// Velocity estimate used only for load-torque estimation (rad/s).
    pub omega_hat: f64,
    /// Integral of the velocity estimation error ω̃ (rad).
    pub z_tau: f64,
    /// Algebraic output at the most recent measurement (N·m).
    pub tau_l_hat: f64,
}

impl OuterObserverState {
    /// Start the estimator with zero initial estimation error.
    pub fn init(omega_meas: f64) -> Self {
        Self { omega_hat: omega_meas, z_tau: 0.0, tau_l_hat: 0.0 }
    }
}

/// Desired torque from the position/velocity controller:
/// τ_m^d = J·ω̇_d + B·ω_d + k_θ·e_θ + k_ω·e_ω + τ̂_L.
pub fn torque_modulation(
    e_theta: f64,
    e_omega: f64,
    omega_d: f64,
    omega_dot_d: f64,
    tau_l_hat: f64,
    g: &GainSet,
    p: &MotorParams,
) -> f64 {
    p.j * omega_dot_d + p.b * omega_d + g.k_theta * e_theta + g.k_omega * e_omega + tau_l_hat
}

/// αβ current references realising the desired torque at rotor angle θ:
/// i_α^d = -(2τ/3PΦ)·sin(Pθ), i_β^d = (2τ/3PΦ)·cos(Pθ).
pub fn current_references(tau_m_d: f64, theta: f64, p: &MotorParams) -> (f64, f64) {
    let scale = 2.0 * tau_m_d / (3.0 * f64::from(p.pole_pairs) * p.phi);
    let (s, c) = (f64::from(p.pole_pairs) * theta).sin_cos();
    (-scale * s, scale * c)
}

/// Algebraic observer output for a fresh velocity measurement:
/// τ̂_L = −μ_τ(ω − ω̂) − l_i_tau·z.
pub fn outer_dob_output(s: &OuterObserverState, omega_meas: f64, g: &GainSet) -> f64 {
    -mu(omega_meas - s.omega_hat, g.l_p_tau, g.omega_tilde_max) - g.l_i_tau * s.z_tau
}

/// One control-tick update of the load-torque observer.
///
/// Evaluation order: (1) ω̃ from the fresh measurement, (2) the algebraic
/// output τ̂_L from the pre-update state, (3) propagation of (ω̂, z) over one
/// tick with the measurement and torque command held (zero-order hold).
///
/// Propagation integrates the observer ODE with a single RK4 stage per tick.
/// Forward Euler is unusable here: with fast integral gains the estimation
/// error dynamics are a lightly damped resonance and Euler's stability
/// region excludes it at any practical sample rate, while the RK4 stability
/// boundary covers ωn·dt up to 2√2.
pub fn outer_dob_update(
    s: &OuterObserverState,
    omega_meas: f64,
    tau_m_d: f64,
    dt: f64,
    g: &GainSet,
    p: &MotorParams,
) -> Result<(OuterObserverState, f64), NonFiniteState> {
    let tau_l_hat = outer_dob_output(s, omega_meas, g);

    let rhs = |omega_hat: f64, z: f64| -> (f64, f64) {
        let w_t = omega_meas - omega_hat;
        let est = -mu(w_t, g.l_p_tau, g.omega_tilde_max) - g.l_i_tau * z;
        (-(p.b / p.j) * omega_hat + tau_m_d / p.j - est / p.j, w_t)
    };
    let (k1w, k1z) = rhs(s.omega_hat, s.z_tau);
    let (k2w, k2z) = rhs(s.omega_hat + 0.5 * dt * k1w, s.z_tau + 0.5 * dt * k1z);
    let (k3w, k3z) = rhs(s.omega_hat + 0.5 * dt * k2w, s.z_tau + 0.5 * dt * k2z);
    let (k4w, k4z) = rhs(s.omega_hat + dt * k3w, s.z_tau + dt * k3z);

    let next = OuterObserverState {
        omega_hat: s.omega_hat + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
        z_tau: s.z_tau + dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z),
        tau_l_hat,
    };
    if next.omega_hat.is_finite() && next.z_tau.is_finite() && tau_l_hat.is_finite() {
        Ok((next, tau_l_hat))
    } else {
        Err(NonFiniteState)
    }
}
