//! Inner-loop control: per-axis N-PI disturbance observers, the
//! Lyapunov-redesign current controller and voltage-reference synthesis.
//!
//! Each axis j ∈ {α, β} runs an observer over the current tracking error:
//!
//! ```text
//! ê̇_j = -(R/L)·ê_j + u_j/L - d̂_j/L
//! d̂_j = -μ_e(e_j - ê_j) - l_i_e·∫(e_j - ê_j)
//! ```
//!
//! and the controller u_j = -η₁·e_j/(V + η₂) + d̂_j shares one
//! V = e_α² + e_β² across both axes.

use crate::config::{GainSet, MotorParams};
use crate::outer_loop::mu;
use crate::NonFiniteState;

/// Observer state for one current axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerAxisState {
    /// Estimate of the current tracking error (A).
    pub e_hat: f64,
    /// Integral of the estimation error ẽ_j (A·s).
    pub z: f64,
    /// Algebraic disturbance estimate at the most recent inputs (V).
    pub d_hat: f64,
}

impl InnerAxisState {
    /// Start with zero initial estimation error.
    pub fn init(e_meas: f64) -> Self {
        Self { e_hat: e_meas, z: 0.0, d_hat: 0.0 }
    }
}

/// Both current-axis observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerObserverState {
    pub alpha: InnerAxisState,
    pub beta: InnerAxisState,
}

/// Feedback control inputs u_{αβ}; the rational term is globally bounded by
/// η₁·‖e‖/η₂.
pub fn current_control(e_alpha: f64, e_beta: f64, d_hat: (f64, f64), g: &GainSet) -> (f64, f64) {
    let v = e_alpha * e_alpha + e_beta * e_beta;
    (
        -g.eta1 * e_alpha / (v + g.eta2) + d_hat.0,
        -g.eta1 * e_beta / (v + g.eta2) + d_hat.1,
    )
}

/// Voltage references commanded to the inverter:
/// v_α^d = R·i_α^d − PΦ·sin(Pθ)·ω − u_α, v_β^d = R·i_β^d + PΦ·cos(Pθ)·ω − u_β.
pub fn voltage_reference(
    i_d: (f64, f64),
    omega: f64,
    theta: f64,
    u: (f64, f64),
    p: &MotorParams,
) -> (f64, f64) {
    let pp = f64::from(p.pole_pairs);
    let (s, c) = (pp * theta).sin_cos();
    (
        p.r * i_d.0 - pp * p.phi * s * omega - u.0,
        p.r * i_d.1 + pp * p.phi * c * omega - u.1,
    )
}

/// Algebraic observer output for a fresh error measurement:
/// d̂_j = −μ_e(e_j − ê_j) − l_i_e·z_j.
pub fn inner_dob_output(s: &InnerAxisState, e_meas: f64, g: &GainSet) -> f64 {
    -mu(e_meas - s.e_hat, g.l_p_e, g.e_tilde_max) - g.l_i_e * s.z
}

/// One control-tick update of a per-axis disturbance observer.
///
/// Same structure as the outer observer: algebraic output first from the
/// fresh measurement, then one RK4 propagation of (ê_j, z_j) with the
/// measurement and control input held over the tick.
pub fn inner_dob_update(
    s: &InnerAxisState,
    e_meas: f64,
    u: f64,
    dt: f64,
    g: &GainSet,
    p: &MotorParams,
) -> Result<(InnerAxisState, f64), NonFiniteState> {
    let d_hat = inner_dob_output(s, e_meas, g);

    let rhs = |e_hat: f64, z: f64| -> (f64, f64) {
        let et = e_meas - e_hat;
        let est = -mu(et, g.l_p_e, g.e_tilde_max) - g.l_i_e * z;
        (-(p.r / p.l) * e_hat + u / p.l - est / p.l, et)
    };
    let (k1e, k1z) = rhs(s.e_hat, s.z);
    let (k2e, k2z) = rhs(s.e_hat + 0.5 * dt * k1e, s.z + 0.5 * dt * k1z);
    let (k3e, k3z) = rhs(s.e_hat + 0.5 * dt * k2e, s.z + 0.5 * dt * k2z);
    let (k4e, k4z) = rhs(s.e_hat + dt * k3e, s.z + dt * k3z);

    let next = InnerAxisState {
        e_hat: s.e_hat + dt / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e),
        z: s.z + dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z),
        d_hat,
    };
    if next.e_hat.is_finite() && next.z.is_finite() && d_hat.is_finite() {
        Ok((next, d_hat))
    } else {
        Err(NonFiniteState)
    }
}
