//! References and exogenous signals: the slew-limited velocity reference,
//! the load-torque profile and the inverter voltage-error models.

use serde::Serialize;

/// Velocity reference as target segments joined by slew-limited ramps.
///
/// A hard velocity step would make the feed-forward term J·ω̇_d a
/// distribution, so steps are realised as ramps at `slew` rad/s².
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceProfile {
    /// Ordered `(start time s, target velocity rad/s)` pairs.
    pub segments: Vec<(f64, f64)>,
    /// Maximum |ω̇_d| (rad/s²).
    pub slew: f64,
}

/// One point of the reference trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    /// Desired position: the exact running integral of ω_d (rad).
    pub theta_d: f64,
    /// Desired velocity (rad/s).
    pub omega_d: f64,
    /// Desired acceleration, piecewise constant (rad/s²).
    pub omega_dot_d: f64,
}

#[derive(Debug, Clone, Copy)]
struct Knot {
    t: f64,
    omega: f64,
    /// ω̇_d on [t, next knot).
    slope: f64,
    /// θ_d accumulated up to `t`.
    theta: f64,
}

/// Piecewise-polynomial reference trajectory compiled from a profile.
///
/// ω_d is piecewise linear and θ_d its exact integral (piecewise quadratic),
/// so θ_d(t) − θ_d(s) equals ∫ω_d over [s,t] to machine precision.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    knots: Vec<Knot>,
}

impl ReferenceTrajectory {
    /// Compile a profile; `theta0` anchors θ_d(0) to the plant's initial θ.
    pub fn new(profile: &ReferenceProfile, theta0: f64) -> Self {
        let mut knots: Vec<Knot> = Vec::new();
        let (mut t, mut w) = (0.0_f64, 0.0_f64);
        // A segment starting at t <= 0 sets the initial velocity outright.
        let mut rest = profile.segments.as_slice();
        if let Some(&(ts, v)) = rest.first() {
            if ts <= 0.0 {
                w = v;
                rest = &rest[1..];
            }
        }
        for &(ts, target) in rest {
            let ts = ts.max(t);
            if ts > t {
                knots.push(Knot { t, omega: w, slope: 0.0, theta: 0.0 });
                t = ts;
            }
            if target != w {
                let slope = profile.slew * (target - w).signum();
                let dur = (target - w).abs() / profile.slew;
                knots.push(Knot { t, omega: w, slope, theta: 0.0 });
                t += dur;
                w = target;
            }
        }
        knots.push(Knot { t, omega: w, slope: 0.0, theta: 0.0 });

        let mut theta = theta0;
        for i in 0..knots.len() {
            knots[i].theta = theta;
            if i + 1 < knots.len() {
                let dt = knots[i + 1].t - knots[i].t;
                theta += knots[i].omega * dt + 0.5 * knots[i].slope * dt * dt;
            }
        }
        Self { knots }
    }

    pub fn sample(&self, t: f64) -> ReferenceSample {
        let idx = match self.knots.iter().rposition(|k| k.t <= t) {
            Some(i) => i,
            None => {
                // before the first knot: hold its velocity backwards in time
                let k = &self.knots[0];
                let dt = t - k.t;
                return ReferenceSample {
                    theta_d: k.theta + k.omega * dt,
                    omega_d: k.omega,
                    omega_dot_d: 0.0,
                };
            }
        };
        let k = &self.knots[idx];
        let dt = t - k.t;
        ReferenceSample {
            theta_d: k.theta + k.omega * dt + 0.5 * k.slope * dt * dt,
            omega_d: k.omega + k.slope * dt,
            omega_dot_d: k.slope,
        }
    }
}

/// Sample a reference profile at time `t` with θ_d(0) = `theta0`.
///
/// Convenience wrapper; repeated sampling should compile a
/// [`ReferenceTrajectory`] once instead.
pub fn reference(t: f64, profile: &ReferenceProfile, theta0: f64) -> ReferenceSample {
    ReferenceTrajectory::new(profile, theta0).sample(t)
}

/// Piecewise-constant load torque with optional first-order smoothing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadProfile {
    /// Ordered `(time s, torque N·m)` pairs; the value before the first step is 0.
    pub steps: Vec<(f64, f64)>,
    /// First-order smoothing time constant (s); 0 keeps exact steps.
    pub smoothing_tau: f64,
}

/// Load torque at time `t`.
pub fn load_torque(t: f64, profile: &LoadProfile) -> f64 {
    if profile.smoothing_tau <= 0.0 {
        let mut v = 0.0;
        for &(ts, tv) in &profile.steps {
            if ts <= t {
                v = tv;
            } else {
                break;
            }
        }
        return v;
    }
    // chain first-order responses toward each step target
    let tau = profile.smoothing_tau;
    let mut v = 0.0; // value carried at the previous event time
    let mut target = 0.0;
    let mut t_prev = f64::NEG_INFINITY;
    for &(ts, tv) in &profile.steps {
        if ts > t {
            break;
        }
        v = if t_prev.is_finite() {
            target + (v - target) * (-(ts - t_prev) / tau).exp()
        } else {
            target
        };
        target = tv;
        t_prev = ts;
    }
    if t_prev.is_finite() {
        target + (v - target) * (-(t - t_prev) / tau).exp()
    } else {
        0.0
    }
}

/// Additive inverter voltage error e_v = v_applied − v_commanded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InverterErrorModel {
    /// Ideal inverter.
    None,
    /// First and second electrical harmonics of the rotor angle; reproduces
    /// the spectral signature seen on real drives (harmonics of Pω).
    Harmonic { amplitude_1: f64, amplitude_2: f64, phase_1: f64, phase_2: f64 },
    /// Dead-time sign distortion: a fixed voltage opposing the commanded
    /// current direction on each axis.
    DeadTimeSign { v_dead: f64 },
}

/// Inverter voltage error for the commanded operating point.
pub fn inverter_error(
    theta: f64,
    pole_pairs: u32,
    cmd_currents: (f64, f64),
    model: &InverterErrorModel,
) -> (f64, f64) {
    match *model {
        InverterErrorModel::None => (0.0, 0.0),
        InverterErrorModel::Harmonic { amplitude_1, amplitude_2, phase_1, phase_2 } => {
            let pt = f64::from(pole_pairs) * theta;
            (
                amplitude_1 * (pt + phase_1).sin() + amplitude_2 * (2.0 * pt + phase_2).sin(),
                amplitude_1 * (pt + phase_1).cos() + amplitude_2 * (2.0 * pt + phase_2).cos(),
            )
        }
        InverterErrorModel::DeadTimeSign { v_dead } => {
            let sgn = |x: f64| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            };
            (-v_dead * sgn(cmd_currents.0), -v_dead * sgn(cmd_currents.1))
        }
    }
}
