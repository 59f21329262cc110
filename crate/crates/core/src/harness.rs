//! Closed-loop scheduler, trajectory logging, metrics, comparative runs and
//! error-dynamics consistency diagnostics.
//!
//! One control tick runs: measure → reference → outer DOB → torque
//! modulation → current references → current errors → inner DOBs →
//! current control → voltage references → inverter error → plant
//! integration (RK4 sub-steps with held voltages and load torque).

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::config::{ControllerVariant, GainSet, MotorParams, Scenario};
use crate::inner_loop::{
    current_control, inner_dob_output, inner_dob_update, voltage_reference, InnerAxisState,
};
use crate::outer_loop::{
    current_references, d_mu, outer_dob_output, outer_dob_update, torque_modulation,
    OuterObserverState,
};
use crate::plant::{measure, rk4_step, PlantInputs};
use crate::signals::{inverter_error, load_torque, ReferenceTrajectory};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state became non-finite at control tick {tick} (t = {t} s)")]
    NonFiniteState { tick: usize, t: f64 },
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("window [{0}, {1}) contains no log records")]
    EmptyWindow(f64, f64),
    #[error("logs do not share a scenario: {0}")]
    ScenarioMismatch(String),
    #[error("log too short: need at least {0} records")]
    LogTooShort(usize),
}

/// Everything recorded at one control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub theta: f64,
    pub omega: f64,
    pub i_alpha: f64,
    pub i_beta: f64,
    pub theta_d: f64,
    pub omega_d: f64,
    pub tau_l: f64,
    pub tau_m_d: f64,
    pub i_alpha_d: f64,
    pub i_beta_d: f64,
    pub v_alpha_d: f64,
    pub v_beta_d: f64,
    pub u_alpha: f64,
    pub u_beta: f64,
    pub tau_l_hat: f64,
    pub omega_hat: f64,
    pub e_hat_alpha: f64,
    pub e_hat_beta: f64,
    pub d_hat_alpha: f64,
    pub d_hat_beta: f64,
    pub e_theta: f64,
    pub e_omega: f64,
    pub e_alpha: f64,
    pub e_beta: f64,
    pub e_v_alpha: f64,
    pub e_v_beta: f64,
    /// Diagnostic −L·(d/dt)i_j^d + e_vj with the reference derivative taken
    /// as a symmetric finite difference across ticks (filled after the run).
    pub d_true_alpha: f64,
    pub d_true_beta: f64,
}

/// CSV column names, in declared order.
pub const LOG_COLUMNS: [&str; 29] = [
    "t", "theta", "omega", "i_alpha", "i_beta", "theta_d", "omega_d", "tau_l", "tau_m_d",
    "i_alpha_d", "i_beta_d", "v_alpha_d", "v_beta_d", "u_alpha", "u_beta", "tau_l_hat",
    "omega_hat", "e_hat_alpha", "e_hat_beta", "d_hat_alpha", "d_hat_beta", "e_theta", "e_omega",
    "e_alpha", "e_beta", "e_v_alpha", "e_v_beta", "d_true_alpha", "d_true_beta",
];

impl LogRecord {
    pub fn values(&self) -> [f64; 29] {
        [
            self.t,
            self.theta,
            self.omega,
            self.i_alpha,
            self.i_beta,
            self.theta_d,
            self.omega_d,
            self.tau_l,
            self.tau_m_d,
            self.i_alpha_d,
            self.i_beta_d,
            self.v_alpha_d,
            self.v_beta_d,
            self.u_alpha,
            self.u_beta,
            self.tau_l_hat,
            self.omega_hat,
            self.e_hat_alpha,
            self.e_hat_beta,
            self.d_hat_alpha,
            self.d_hat_beta,
            self.e_theta,
            self.e_omega,
            self.e_alpha,
            self.e_beta,
            self.e_v_alpha,
            self.e_v_beta,
            self.d_true_alpha,
            self.d_true_beta,
        ]
    }
}

/// Run one closed-loop scenario and return the per-tick log.
pub fn run_scenario(
    p: &MotorParams,
    g: &GainSet,
    scenario: &Scenario,
) -> Result<Vec<LogRecord>, SimError> {
    let timing = scenario.timing;
    let dt = timing.dt_ctrl;
    let substeps = timing.substeps();
    let n_ticks = timing.ticks();

    let trajectory = ReferenceTrajectory::new(&scenario.reference, scenario.initial_state.theta);
    let variant = scenario.variant;

    let mut state = scenario.initial_state;
    let mut outer: Option<OuterObserverState> = None;
    let mut inner_a: Option<InnerAxisState> = None;
    let mut inner_b: Option<InnerAxisState> = None;

    let mut log = Vec::with_capacity(n_ticks);
    for tick in 0..n_ticks {
        let t = tick as f64 * dt;
        let meas = measure(&state);
        let refs = trajectory.sample(t);
        let tau_l = load_torque(t, &scenario.load);

        // algebraic observer outputs from the fresh measurements; the state
        // propagation happens at the end of the tick once the commands that
        // will actually be held over the coming interval are known
        let use_outer = !matches!(variant, ControllerVariant::NoDob);
        if use_outer && outer.is_none() {
            outer = Some(OuterObserverState::init(meas.omega));
        }
        let tau_l_hat = match &outer {
            Some(s) if use_outer => outer_dob_output(s, meas.omega, g),
            _ => 0.0,
        };
        let omega_hat_logged = outer.as_ref().map_or(0.0, |s| s.omega_hat);

        let e_theta = refs.theta_d - meas.theta;
        let e_omega = refs.omega_d - meas.omega;
        let tau_m_d = torque_modulation(
            e_theta,
            e_omega,
            refs.omega_d,
            refs.omega_dot_d,
            tau_l_hat,
            g,
            p,
        );
        let (i_alpha_d, i_beta_d) = current_references(tau_m_d, meas.theta, p);
        let e_alpha = i_alpha_d - meas.i_alpha;
        let e_beta = i_beta_d - meas.i_beta;

        let use_inner = matches!(variant, ControllerVariant::Full);
        if use_inner && inner_a.is_none() {
            inner_a = Some(InnerAxisState::init(e_alpha));
            inner_b = Some(InnerAxisState::init(e_beta));
        }
        let d_hat = if use_inner {
            (
                inner_dob_output(inner_a.as_ref().unwrap(), e_alpha, g),
                inner_dob_output(inner_b.as_ref().unwrap(), e_beta, g),
            )
        } else {
            (0.0, 0.0)
        };
        let inner_logged = (
            inner_a.as_ref().map_or(0.0, |s| s.e_hat),
            inner_b.as_ref().map_or(0.0, |s| s.e_hat),
        );

        let (u_alpha, u_beta) = current_control(e_alpha, e_beta, d_hat, g);
        let (v_alpha_d, v_beta_d) =
            voltage_reference((i_alpha_d, i_beta_d), meas.omega, meas.theta, (u_alpha, u_beta), p);
        let (e_v_alpha, e_v_beta) = inverter_error(
            meas.theta,
            p.pole_pairs,
            (i_alpha_d, i_beta_d),
            &scenario.inverter_error,
        );

        log.push(LogRecord {
            t,
            theta: meas.theta,
            omega: meas.omega,
            i_alpha: meas.i_alpha,
            i_beta: meas.i_beta,
            theta_d: refs.theta_d,
            omega_d: refs.omega_d,
            tau_l,
            tau_m_d,
            i_alpha_d,
            i_beta_d,
            v_alpha_d,
            v_beta_d,
            u_alpha,
            u_beta,
            tau_l_hat,
            omega_hat: omega_hat_logged,
            e_hat_alpha: inner_logged.0,
            e_hat_beta: inner_logged.1,
            d_hat_alpha: d_hat.0,
            d_hat_beta: d_hat.1,
            e_theta,
            e_omega,
            e_alpha,
            e_beta,
            e_v_alpha,
            e_v_beta,
            d_true_alpha: 0.0,
            d_true_beta: 0.0,
        });

        // propagate observers over [t, t+dt) with this tick's held commands;
        // the update's algebraic output equals the one computed above
        if let Some(s) = outer.take() {
            let (next, out) = outer_dob_update(&s, meas.omega, tau_m_d, dt, g, p)
                .map_err(|_| SimError::NonFiniteState { tick, t })?;
            debug_assert_eq!(out, tau_l_hat);
            outer = Some(next);
        }
        if use_inner {
            let (na, da) =
                inner_dob_update(inner_a.as_ref().unwrap(), e_alpha, u_alpha, dt, g, p)
                    .map_err(|_| SimError::NonFiniteState { tick, t })?;
            let (nb, db) = inner_dob_update(inner_b.as_ref().unwrap(), e_beta, u_beta, dt, g, p)
                .map_err(|_| SimError::NonFiniteState { tick, t })?;
            debug_assert_eq!((da, db), d_hat);
            inner_a = Some(na);
            inner_b = Some(nb);
        }

        let inputs = PlantInputs {
            v_alpha: v_alpha_d + e_v_alpha,
            v_beta: v_beta_d + e_v_beta,
            tau_l,
        };
        for _ in 0..substeps {
            state = rk4_step(&state, &inputs, timing.dt_plant, p)
                .map_err(|_| SimError::NonFiniteState { tick, t })?;
        }
    }

    fill_d_true(&mut log, p, dt);
    Ok(log)
}

/// Fill the d_true diagnostics: symmetric finite differences of the current
/// references across ticks (one-sided at the ends).
fn fill_d_true(log: &mut [LogRecord], p: &MotorParams, dt: f64) {
    let n = log.len();
    for k in 0..n {
        let (da, db) = if n < 2 {
            (0.0, 0.0)
        } else {
            let (lo, hi, span) = if k == 0 {
                (0, 1, dt)
            } else if k == n - 1 {
                (n - 2, n - 1, dt)
            } else {
                (k - 1, k + 1, 2.0 * dt)
            };
            (
                (log[hi].i_alpha_d - log[lo].i_alpha_d) / span,
                (log[hi].i_beta_d - log[lo].i_beta_d) / span,
            )
        };
        log[k].d_true_alpha = -p.l * da + log[k].e_v_alpha;
        log[k].d_true_beta = -p.l * db + log[k].e_v_beta;
    }
}

/// Write the log as CSV: exact column order, full f64 precision (17
/// significant digits, round-trip exact).
pub fn write_csv<W: Write>(log: &[LogRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{}", LOG_COLUMNS.join(","))?;
    let mut line = String::with_capacity(29 * 26);
    for rec in log {
        line.clear();
        for (i, v) in rec.values().iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Render the log as a CSV string.
pub fn csv_string(log: &[LogRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(log, &mut buf).expect("infallible in-memory write");
    String::from_utf8(buf).expect("CSV is ASCII")
}

/// Metrics of one time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowMetrics {
    pub t_start: f64,
    pub t_end: f64,
    pub ticks: usize,
    /// RMS of ‖(e_α, e_β)‖₂.
    pub rms_e_ab: f64,
    pub rms_e_omega: f64,
    pub rms_tau_l_tilde: f64,
    pub sup_e_ab: f64,
    pub sup_e_omega: f64,
    pub sup_tau_l_tilde: f64,
    /// Fraction of ticks with ‖(e_α, e_β)‖ below the ball radius.
    pub occupancy: f64,
}

/// Windowed run metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub ball_radius: f64,
    pub windows: Vec<WindowMetrics>,
}

/// Compute RMS/sup/occupancy metrics over the given `(t_start, t_end)`
/// windows by direct summation.
pub fn compute_metrics(
    log: &[LogRecord],
    windows: &[(f64, f64)],
    ball_radius: f64,
) -> Result<RunMetrics, MetricsError> {
    let mut out = Vec::with_capacity(windows.len());
    for &(t0, t1) in windows {
        let recs: Vec<&LogRecord> =
            log.iter().filter(|r| r.t >= t0 && r.t < t1).collect();
        if recs.is_empty() {
            return Err(MetricsError::EmptyWindow(t0, t1));
        }
        let n = recs.len() as f64;
        let mut sum_e2 = 0.0;
        let mut sum_w2 = 0.0;
        let mut sum_tl2 = 0.0;
        let mut sup_e: f64 = 0.0;
        let mut sup_w: f64 = 0.0;
        let mut sup_tl: f64 = 0.0;
        let mut inside = 0usize;
        for r in &recs {
            let e = (r.e_alpha * r.e_alpha + r.e_beta * r.e_beta).sqrt();
            let tl = (r.tau_l - r.tau_l_hat).abs();
            sum_e2 += e * e;
            sum_w2 += r.e_omega * r.e_omega;
            sum_tl2 += tl * tl;
            sup_e = sup_e.max(e);
            sup_w = sup_w.max(r.e_omega.abs());
            sup_tl = sup_tl.max(tl);
            if e < ball_radius {
                inside += 1;
            }
        }
        out.push(WindowMetrics {
            t_start: t0,
            t_end: t1,
            ticks: recs.len(),
            rms_e_ab: (sum_e2 / n).sqrt(),
            rms_e_omega: (sum_w2 / n).sqrt(),
            rms_tau_l_tilde: (sum_tl2 / n).sqrt(),
            sup_e_ab: sup_e,
            sup_e_omega: sup_w,
            sup_tau_l_tilde: sup_tl,
            occupancy: inside as f64 / n,
        });
    }
    Ok(RunMetrics { ball_radius, windows: out })
}

/// Residual of one error-dynamics equation over the checked ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquationResidual {
    pub equation: &'static str,
    /// max |finite difference − right-hand side| over checked ticks.
    pub max_residual: f64,
    pub rms_residual: f64,
    /// Activity scale: max |right-hand side| over checked ticks.
    pub scale: f64,
    pub checked_ticks: usize,
}

/// Consistency report for the four estimation-error equations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub dt_ctrl: f64,
    pub equations: Vec<EquationResidual>,
    /// Empirical sup of |d/dt d_true_j| over the checked ticks, the measured
    /// disturbance-derivative bound usable as δ_j in certificates.
    pub sup_d_true_dot: f64,
}

/// Check the logged trajectories against the continuous estimation-error
/// dynamics using central finite differences.
///
/// Ticks adjacent to profile discontinuities (detected from second
/// differences of the logged τ_L and ω_d columns) and the run boundaries are
/// excluded.
pub fn consistency_check(
    log: &[LogRecord],
    p: &MotorParams,
    g: &GainSet,
) -> Result<ConsistencyReport, MetricsError> {
    consistency_check_with(log, p, g, true)
}

/// [`consistency_check`] with the ω̃-equation current-coupling term made
/// optional; disabling it is the negative control showing the check has
/// teeth.
pub fn consistency_check_with(
    log: &[LogRecord],
    p: &MotorParams,
    g: &GainSet,
    include_current_coupling: bool,
) -> Result<ConsistencyReport, MetricsError> {
    let n = log.len();
    if n < 3 {
        return Err(MetricsError::LogTooShort(3));
    }
    let dt = log[1].t - log[0].t;
    let km = p.torque_constant();

    let excluded = excluded_ticks(log);
    let fd = |f: &dyn Fn(&LogRecord) -> f64, k: usize| (f(&log[k + 1]) - f(&log[k - 1])) / (2.0 * dt);

    let omega_tilde = |r: &LogRecord| r.omega - r.omega_hat;
    let tau_tilde = |r: &LogRecord| r.tau_l - r.tau_l_hat;
    let e_tilde_a = |r: &LogRecord| r.e_alpha - r.e_hat_alpha;
    let e_tilde_b = |r: &LogRecord| r.e_beta - r.e_hat_beta;
    let d_tilde_a = |r: &LogRecord| r.d_true_alpha - r.d_hat_alpha;
    let d_tilde_b = |r: &LogRecord| r.d_true_beta - r.d_hat_beta;
    let coupling = |r: &LogRecord| {
        let (s, c) = (f64::from(p.pole_pairs) * r.theta).sin_cos();
        km / p.j * (s * r.e_alpha - c * r.e_beta)
    };

    struct Acc {
        equation: &'static str,
        max_r: f64,
        sum_r2: f64,
        scale: f64,
        count: usize,
    }
    impl Acc {
        fn new(equation: &'static str) -> Self {
            Self { equation, max_r: 0.0, sum_r2: 0.0, scale: 0.0, count: 0 }
        }
        fn push(&mut self, fd: f64, rhs: f64) {
            let r = (fd - rhs).abs();
            self.max_r = self.max_r.max(r);
            self.sum_r2 += r * r;
            self.scale = self.scale.max(rhs.abs());
            self.count += 1;
        }
        fn finish(self) -> EquationResidual {
            EquationResidual {
                equation: self.equation,
                max_residual: self.max_r,
                rms_residual: if self.count > 0 {
                    (self.sum_r2 / self.count as f64).sqrt()
                } else {
                    0.0
                },
                scale: self.scale,
                checked_ticks: self.count,
            }
        }
    }

    let mut eq_omega = Acc::new("omega_tilde");
    let mut eq_tau = Acc::new("tau_l_tilde");
    let mut eq_e = Acc::new("e_tilde");
    let mut eq_d = Acc::new("d_tilde");
    let mut sup_ddot: f64 = 0.0;

    for k in 1..n - 1 {
        if excluded[k] {
            continue;
        }
        let r = &log[k];

        // ω̃̇ = −(B/J)·ω̃ + (k_m/J)(S·e_α − C·e_β) − τ̃_L/J
        let coup = if include_current_coupling { coupling(r) } else { 0.0 };
        let rhs = -(p.b / p.j) * omega_tilde(r) + coup - tau_tilde(r) / p.j;
        eq_omega.push(fd(&omega_tilde, k), rhs);

        // τ̃̇_L = (−∂μ_τ·B/J + l_i_tau)·ω̃ − ∂μ_τ/J·τ̃_L + ∂μ_τ·coupling + τ̇_L
        let dm = d_mu(omega_tilde(r), g.l_p_tau, g.omega_tilde_max);
        let rhs = (-dm * p.b / p.j + g.l_i_tau) * omega_tilde(r) - dm / p.j * tau_tilde(r)
            + dm * coupling(r)
            + fd(&|r: &LogRecord| r.tau_l, k);
        eq_tau.push(fd(&tau_tilde, k), rhs);

        // per-axis: ẽ̇_j = −(R/L)·ẽ_j − d̃_j/L
        //           d̃̇_j = (−∂μ_e·R/L + l_i_e)·ẽ_j − ∂μ_e/L·d̃_j + ḋ_j
        let axes: [(&dyn Fn(&LogRecord) -> f64, &dyn Fn(&LogRecord) -> f64, &dyn Fn(&LogRecord) -> f64); 2] = [
            (&e_tilde_a, &d_tilde_a, &|r: &LogRecord| r.d_true_alpha),
            (&e_tilde_b, &d_tilde_b, &|r: &LogRecord| r.d_true_beta),
        ];
        for (et, dtl, d_true) in axes {
            let rhs = -(p.r / p.l) * et(r) - dtl(r) / p.l;
            eq_e.push(fd(et, k), rhs);

            let dme = d_mu(et(r), g.l_p_e, g.e_tilde_max);
            let rhs_d = (-dme * p.r / p.l + g.l_i_e) * et(r) - dme / p.l * dtl(r) + fd(d_true, k);
            eq_d.push(fd(dtl, k), rhs_d);
        }

        let da = fd(&|r: &LogRecord| r.d_true_alpha, k).abs();
        let db = fd(&|r: &LogRecord| r.d_true_beta, k).abs();
        sup_ddot = sup_ddot.max(da).max(db);
    }

    Ok(ConsistencyReport {
        dt_ctrl: dt,
        equations: vec![eq_omega.finish(), eq_tau.finish(), eq_e.finish(), eq_d.finish()],
        sup_d_true_dot: sup_ddot,
    })
}

/// Ticks masked out of the consistency check: run boundaries and ±5 ticks
/// around second-difference spikes of the load and velocity-reference
/// columns (profile corners and steps).
fn excluded_ticks(log: &[LogRecord]) -> Vec<bool> {
    let n = log.len();
    let mut excluded = vec![false; n];
    let margin = 5usize;
    for k in 0..n {
        if k < margin.max(1) || k + margin.max(1) >= n {
            excluded[k] = true;
        }
    }
    let columns: [&dyn Fn(&LogRecord) -> f64; 2] =
        [&|r: &LogRecord| r.tau_l, &|r: &LogRecord| r.omega_d];
    for col in columns {
        let scale = log.iter().map(|r| col(r).abs()).fold(0.0_f64, f64::max).max(1e-9);
        for k in 1..n - 1 {
            let dd = col(&log[k + 1]) - 2.0 * col(&log[k]) + col(&log[k - 1]);
            if dd.abs() > 1e-7 * scale {
                let lo = k.saturating_sub(margin);
                let hi = (k + margin).min(n - 1);
                for e in excluded.iter_mut().take(hi + 1).skip(lo) {
                    *e = true;
                }
            }
        }
    }
    excluded
}

/// Per-window metric ratios between two runs of the same scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowComparison {
    pub t_start: f64,
    pub t_end: f64,
    /// RMS ‖e_{αβ}‖ of run A over run B.
    pub rms_e_ab_ratio: f64,
    /// Peak |e_ω| of run A over run B.
    pub peak_e_omega_ratio: f64,
    /// RMS |τ̃_L| of run A over run B.
    pub rms_tau_l_tilde_ratio: f64,
}

/// Comparison report between two variants of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub windows: Vec<WindowComparison>,
}

/// Compare two logs of identical scenarios (same grid, references and load)
/// that differ only in controller variant.
pub fn compare_runs(
    log_a: &[LogRecord],
    log_b: &[LogRecord],
    windows: &[(f64, f64)],
    ball_radius: f64,
) -> Result<ComparisonReport, MetricsError> {
    if log_a.len() != log_b.len() {
        return Err(MetricsError::ScenarioMismatch(format!(
            "lengths differ ({} vs {})",
            log_a.len(),
            log_b.len()
        )));
    }
    for (ra, rb) in log_a.iter().zip(log_b) {
        if ra.t != rb.t || ra.tau_l != rb.tau_l || ra.omega_d != rb.omega_d {
            return Err(MetricsError::ScenarioMismatch(format!(
                "grid or profiles differ at t = {}",
                ra.t
            )));
        }
    }
    let ma = compute_metrics(log_a, windows, ball_radius)?;
    let mb = compute_metrics(log_b, windows, ball_radius)?;
    let windows = ma
        .windows
        .iter()
        .zip(&mb.windows)
        .map(|(a, b)| WindowComparison {
            t_start: a.t_start,
            t_end: a.t_end,
            rms_e_ab_ratio: a.rms_e_ab / b.rms_e_ab,
            peak_e_omega_ratio: a.sup_e_omega / b.sup_e_omega,
            rms_tau_l_tilde_ratio: a.rms_tau_l_tilde / b.rms_tau_l_tilde,
        })
        .collect();
    Ok(ComparisonReport { windows })
}
