//! Acceptance suite: every release criterion as one test with a printed
//! pass/fail line. Criteria with fixed tolerances are asserted exactly as
//! stated; measured comparison ratios are printed as regression baselines.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use spmsm_lab::config::{load_config, ControllerVariant, GainSet, MotorParams, Scenario};
use spmsm_lab::harness::{
    compare_runs, consistency_check, consistency_check_with, csv_string, run_scenario,
};
use spmsm_lab::outer_loop::{current_references, d_mu, mu};
use spmsm_lab::plant::motor_torque;
use spmsm_lab::signals::{InverterErrorModel, LoadProfile, ReferenceProfile};
use spmsm_lab::stability::{
    error_matrices, finite_time_bound, gamma_star, solve_lyapunov, LoopKind, Matrix2,
    StabilityQuery,
};

fn default_config() -> (MotorParams, GainSet, Scenario) {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json");
    let text = std::fs::read_to_string(path).expect("default config present");
    load_config(&text).expect("default config valid")
}

fn high_gain_config() -> (MotorParams, GainSet, Scenario) {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/high_gain_observers.json");
    let text = std::fs::read_to_string(path).expect("high-gain config present");
    load_config(&text).expect("high-gain config valid")
}

/// Criterion 1: the published decay-rate certificates γ_e* = 50.4 and
/// γ_τ* = 0.03 for the high-gain observer set with Q0 = 1000·I, ε = 0.1,
/// δ = 1, within ±15 % relative under a documented norm convention.
#[test]
fn acceptance_1_stability_certificates() {
    let start = Instant::now();
    let (p, g, _) = high_gain_config();
    let query = |loop_kind| StabilityQuery {
        loop_kind,
        q0: Matrix2::scaled_identity(1000.0),
        epsilon: 0.1,
        delta: 1.0,
    };
    let inner = gamma_star(&query(LoopKind::Inner), &p, &g).expect("inner certificate");
    let outer = gamma_star(&query(LoopKind::Outer), &p, &g).expect("outer certificate");
    let elapsed = start.elapsed();

    let expected_inner = 50.4;
    let expected_outer = 0.03;
    let within = |got: f64, want: f64| (got - want).abs() <= 0.15 * want.abs();
    let conventions = [
        ("spectral", inner.gamma_star, outer.gamma_star),
        ("frobenius", inner.gamma_star_frobenius, outer.gamma_star_frobenius),
    ];
    println!("criterion 1: expected gamma_e* = {expected_inner}, gamma_tau* = {expected_outer} (tolerance 15%)");
    let mut matching = None;
    for (name, ge, gt) in conventions {
        let ok = within(ge, expected_inner) && within(gt, expected_outer);
        println!("  {name}: gamma_e* = {ge:.4}, gamma_tau* = {gt:.4} -> {}", if ok { "matches" } else { "does not match" });
        if ok && matching.is_none() {
            matching = Some(name);
        }
    }
    match matching {
        Some(name) => println!("  matching convention: {name}"),
        None => println!("  neither the spectral nor the Frobenius convention reproduces the published values"),
    }
    assert!(elapsed.as_secs_f64() < 1.0, "certificates took {elapsed:?}");

    let pass = matching.is_some();
    println!("ACCEPTANCE 1 (stability certificates): {}", if pass { "PASS" } else { "FAIL" });
    assert!(
        pass,
        "no norm convention reproduces gamma_e* = 50.4 / gamma_tau* = 0.03 within 15%: \
         spectral ({:.4}, {:.4}), frobenius ({:.4}, {:.4})",
        inner.gamma_star, outer.gamma_star, inner.gamma_star_frobenius, outer.gamma_star_frobenius,
    );
}

/// Criterion 2: 1000 random Hurwitz 2×2 matrices with random SPD Q — the
/// Lyapunov solve must return SPD P with substitution residual < 1e-9·‖Q‖.
#[test]
fn acceptance_2_lyapunov_property_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4c59_4150);
    let mut done = 0usize;
    while done < 1000 {
        let scale = 10f64.powf(rng.random_range(-1.0..2.0));
        let a = Matrix2::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        );
        if !(a.trace() < -0.1 && a.det() > 0.05) {
            continue;
        }
        let a = a.scale(scale);
        let m = Matrix2::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        let q = m.transpose().mul(&m).add(&Matrix2::scaled_identity(0.05));
        let q = q.scale(10f64.powf(rng.random_range(-1.0..1.0)));

        let p = solve_lyapunov(&a, &q).expect("Hurwitz + SPD must solve");
        assert!(p.is_spd(), "P not SPD for case {done}: {p:?}");
        let residual = a.transpose().mul(&p).add(&p.mul(&a)).add(&q);
        assert!(
            residual.norm_frobenius() < 1e-9 * q.norm_frobenius(),
            "case {done}: residual {} vs bound {}",
            residual.norm_frobenius(),
            1e-9 * q.norm_frobenius()
        );
        done += 1;
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "suite took {elapsed:?}");
    println!("ACCEPTANCE 2 (Lyapunov solver property suite): PASS ({done} cases in {elapsed:?})");
}

/// Criterion 3: μ-function analytics — zero at origin, odd, peak
/// l_p·x_max/2 at x_max, ∂μ(0) = l_p, ∂μ(±x_max) = 0, finite-difference
/// agreement to 1e-6 relative on a 1000-point grid.
#[test]
fn acceptance_3_mu_analytics() {
    let (l_p, x_max) = (0.0025, 15.6);
    assert_eq!(mu(0.0, l_p, x_max), 0.0);
    assert!((mu(x_max, l_p, x_max) - l_p * x_max / 2.0).abs() < 1e-15);
    assert_eq!(d_mu(0.0, l_p, x_max), l_p);
    assert!(d_mu(x_max, l_p, x_max).abs() < 1e-18);
    assert!(d_mu(-x_max, l_p, x_max).abs() < 1e-18);
    let h = 1e-5;
    for i in 0..1000 {
        let x = -3.0 * x_max + 6.0 * x_max * i as f64 / 999.0;
        assert!((mu(-x, l_p, x_max) + mu(x, l_p, x_max)).abs() < 1e-18, "odd symmetry at {x}");
        assert!(mu(x, l_p, x_max).abs() <= l_p * x_max / 2.0 + 1e-15, "peak bound at {x}");
        let fd = (mu(x + h, l_p, x_max) - mu(x - h, l_p, x_max)) / (2.0 * h);
        let an = d_mu(x, l_p, x_max);
        assert!(
            (fd - an).abs() <= 1e-6 * an.abs().max(l_p),
            "derivative mismatch at {x}: fd {fd} vs {an}"
        );
    }
    println!("ACCEPTANCE 3 (mu-function analytics): PASS");
}

/// Criterion 4: plugging the current references into the torque formula must
/// reconstruct the commanded torque to 1e-12 relative for 10⁴ random points.
#[test]
fn acceptance_4_torque_reconstruction() {
    let p = MotorParams::apm_sb03adk9();
    let mut rng = ChaCha8Rng::seed_from_u64(0x544f_5251);
    for case in 0..10_000 {
        let tau: f64 = rng.random_range(-5.0..5.0);
        let theta: f64 = rng.random_range(-100.0..100.0);
        let (ia, ib) = current_references(tau, theta, &p);
        let rebuilt = motor_torque(ia, ib, theta, &p);
        assert!(
            (rebuilt - tau).abs() <= 1e-12 * tau.abs().max(1.0),
            "case {case}: tau {tau}, rebuilt {rebuilt}"
        );
    }
    println!("ACCEPTANCE 4 (torque reconstruction identity): PASS (10000 cases)");
}

/// Criterion 5: finite-time certificate — the inner estimation error started
/// at ‖d(0)‖ = 10ε must enter B_ε no later than the Gronwall bound for 20
/// random disturbance realizations with ‖ḋ‖ ≤ δ.
#[test]
fn acceptance_5_finite_time_certificate() {
    let start = Instant::now();
    let p = MotorParams::apm_sb03adk9();
    // inner gains with a positive certificate at (Q0 = 1000·I, ε = 0.1, δ = 1)
    let mut g = default_gain_set();
    g.l_i_e = 600.0;
    let (epsilon, delta) = (0.1, 1.0);
    let query = StabilityQuery {
        loop_kind: LoopKind::Inner,
        q0: Matrix2::scaled_identity(1000.0),
        epsilon,
        delta,
    };
    let report = gamma_star(&query, &p, &g).expect("certificate");
    assert!(report.gamma_star > 0.0, "test gains must certify: {}", report.gamma_star);

    let mut rng = ChaCha8Rng::seed_from_u64(0x4652_4545);
    for realization in 0..20 {
        // disturbance with derivative amplitude a·ν ≤ δ
        let nu = rng.random_range(5.0..200.0);
        let amp = delta / nu * rng.random_range(0.2..1.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let d_dot = |t: f64| amp * nu * (nu * t + phase).cos();

        let dir = rng.random_range(0.0..std::f64::consts::TAU);
        let mut state = [10.0 * epsilon * dir.cos(), 10.0 * epsilon * dir.sin()];
        let v0 = quadratic_form(&report.p, &state);
        let t_bound = finite_time_bound(v0, epsilon, report.gamma_star).expect("bound exists");

        let h = 1e-6;
        let mut t = 0.0;
        let mut entered = None;
        while t < 2.0 * t_bound + 0.01 {
            state = rk4_error_dynamics(state, t, h, d_dot, &p, &g);
            t += h;
            if (state[0] * state[0] + state[1] * state[1]).sqrt() < epsilon {
                entered = Some(t);
                break;
            }
        }
        let entry = entered.unwrap_or(f64::INFINITY);
        assert!(
            entry <= t_bound + h,
            "realization {realization}: entry {entry} s exceeds bound {t_bound} s"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 5 (finite-time certificate): PASS (20 realizations, gamma* = {:.2}, {elapsed:?})",
        report.gamma_star
    );
}

/// Criterion 6: closed-loop regulation on the default scenario with the
/// inverter error disabled — after each load step |τ̃_L| < 1e-2 N·m and
/// |e_ω| < 0.5 rad/s within 0.5 s and until the next event; 20 s simulated
/// in under 30 s of wall time.
#[test]
fn acceptance_6_closed_loop_regulation() {
    let (p, g, mut scenario) = default_config();
    scenario.inverter_error = InverterErrorModel::None;
    scenario.variant = ControllerVariant::Full;

    let start = Instant::now();
    let log = run_scenario(&p, &g, &scenario).expect("run completes");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "20 s run took {elapsed:?}");

    // events: load steps at 8.5 / 10.9 / 16.2 s, reference ramp 13.5–13.6 s
    let windows = [(9.0, 10.9), (11.4, 13.5), (16.7, 20.0)];
    for &(t0, t1) in &windows {
        let mut max_tl: f64 = 0.0;
        let mut max_ew: f64 = 0.0;
        for r in log.iter().filter(|r| r.t >= t0 && r.t < t1) {
            max_tl = max_tl.max((r.tau_l - r.tau_l_hat).abs());
            max_ew = max_ew.max(r.e_omega.abs());
        }
        println!("  window [{t0}, {t1}): max |tau_l_tilde| = {max_tl:.3e}, max |e_omega| = {max_ew:.3e}");
        assert!(max_tl < 1e-2, "torque estimation error {max_tl} in [{t0}, {t1})");
        assert!(max_ew < 0.5, "velocity error {max_ew} in [{t0}, {t1})");
    }
    println!("ACCEPTANCE 6 (closed-loop regulation): PASS (wall {elapsed:?})");
}

/// Criterion 7: comparative directions under the harmonic inverter error —
/// the full variant beats outer-only on steady-state RMS ‖e_{αβ}‖ in every
/// steady window and on peak |e_ω| over the 13.5–13.6 s transient. The
/// measured ratios are printed as regression baselines; exact magnitudes are
/// not asserted.
#[test]
fn acceptance_7_comparative_claims() {
    let (p, g, scenario) = default_config();
    let mut full = scenario.clone();
    full.variant = ControllerVariant::Full;
    let mut outer_only = scenario.clone();
    outer_only.variant = ControllerVariant::OuterOnly;

    let log_full = run_scenario(&p, &g, &full).expect("full run");
    let log_outer = run_scenario(&p, &g, &outer_only).expect("outer-only run");

    let steady = [(1.0, 8.5), (9.0, 10.9), (11.4, 13.5), (14.1, 16.2), (16.7, 20.0)];
    let transient = (13.5, 13.6);

    let rep = compare_runs(&log_full, &log_outer, &steady, 0.1).expect("comparable");
    for w in &rep.windows {
        println!(
            "  steady [{}, {}): RMS |e_ab| ratio full/outer-only = {:.4}",
            w.t_start, w.t_end, w.rms_e_ab_ratio
        );
        assert!(
            w.rms_e_ab_ratio < 1.0,
            "full variant not better in [{}, {})",
            w.t_start,
            w.t_end
        );
    }
    let tr = compare_runs(&log_full, &log_outer, &[transient], 0.1).expect("comparable");
    println!(
        "  transient [13.5, 13.6): peak |e_omega| ratio full/outer-only = {:.4}",
        tr.windows[0].peak_e_omega_ratio
    );
    assert!(tr.windows[0].peak_e_omega_ratio < 1.0, "no transient improvement");
    println!("ACCEPTANCE 7 (comparative claims): PASS");
}

/// Criterion 8: error-dynamics consistency — residuals of all four logged
/// error equations bounded by 10·dt_ctrl·scale on a disturbance-free run,
/// and removing the current-coupling term from the ω̃ equation inflates its
/// residual at least tenfold (negative control).
#[test]
fn acceptance_8_consistency_oracle() {
    let (p, g, mut scenario) = default_config();
    scenario.inverter_error = InverterErrorModel::None;
    scenario.variant = ControllerVariant::Full;
    scenario.reference = ReferenceProfile { segments: vec![(0.0, 52.36)], slew: 523.6 };
    scenario.load = LoadProfile { steps: vec![(1.5, -0.3), (3.0, 0.0)], smoothing_tau: 0.0 };
    scenario.timing.duration = 4.5;

    let log = run_scenario(&p, &g, &scenario).expect("run completes");
    let report = consistency_check(&log, &p, &g).expect("consistency report");
    let dt = report.dt_ctrl;
    for eq in &report.equations {
        let bound = 10.0 * dt * eq.scale;
        println!(
            "  {}: max residual {:.3e} vs bound {:.3e} (scale {:.3e}, {} ticks)",
            eq.equation, eq.max_residual, bound, eq.scale, eq.checked_ticks
        );
        assert!(
            eq.max_residual <= bound,
            "{} residual {} exceeds 10·dt·scale = {}",
            eq.equation,
            eq.max_residual,
            bound
        );
    }
    // negative control: dropping the coupling term must blow the ω̃ residual up
    let gutted = consistency_check_with(&log, &p, &g, false).expect("report");
    let with = report.equations.iter().find(|e| e.equation == "omega_tilde").unwrap();
    let without = gutted.equations.iter().find(|e| e.equation == "omega_tilde").unwrap();
    let inflation = without.max_residual / with.max_residual;
    println!("  negative control: omega_tilde residual inflation x{inflation:.1}");
    assert!(inflation >= 10.0, "coupling term removal only inflated residual by {inflation}");
    println!("ACCEPTANCE 8 (error-dynamics consistency oracle): PASS");
}

/// Criterion 9: determinism and integration convergence — identical configs
/// produce byte-identical CSV logs, and halving dt_plant moves the final
/// state by less than 1e-6 relative.
#[test]
fn acceptance_9_determinism_and_convergence() {
    let (p, g, scenario) = default_config();

    let log_a = run_scenario(&p, &g, &scenario).expect("run a");
    let log_b = run_scenario(&p, &g, &scenario).expect("run b");
    let csv_a = csv_string(&log_a);
    let csv_b = csv_string(&log_b);
    assert!(csv_a == csv_b, "identical configs produced different CSV bytes");

    let mut fine = scenario.clone();
    fine.timing.dt_plant /= 2.0;
    let log_fine = run_scenario(&p, &g, &fine).expect("fine run");

    let last_a = log_a.last().unwrap();
    let last_f = log_fine.last().unwrap();
    let coarse = [last_a.theta, last_a.omega, last_a.i_alpha, last_a.i_beta];
    let refined = [last_f.theta, last_f.omega, last_f.i_alpha, last_f.i_beta];
    let diff: f64 = coarse
        .iter()
        .zip(&refined)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = refined.iter().map(|x| x * x).sum::<f64>().sqrt();
    let rel = diff / norm;
    println!("  dt_plant halving: relative final-state change {rel:.3e}");
    assert!(rel < 1e-6, "integration not converged: {rel}");
    println!("ACCEPTANCE 9 (determinism & integration convergence): PASS");
}

// -- helpers ----------------------------------------------------------------

fn default_gain_set() -> GainSet {
    let (_, g, _) = default_config();
    g
}

fn quadratic_form(p: &Matrix2, x: &[f64; 2]) -> f64 {
    let px = [
        p.0[0][0] * x[0] + p.0[0][1] * x[1],
        p.0[1][0] * x[0] + p.0[1][1] * x[1],
    ];
    x[0] * px[0] + x[1] * px[1]
}

/// One RK4 step of the standalone inner estimation-error dynamics
/// ḋ = (A0 + ∂μ_e(ẽ)·A1)·d + B·ḋ_ext.
fn rk4_error_dynamics(
    state: [f64; 2],
    t: f64,
    h: f64,
    d_dot: impl Fn(f64) -> f64,
    p: &MotorParams,
    g: &GainSet,
) -> [f64; 2] {
    let (a0, a1, _) = error_matrices(LoopKind::Inner, p, g);
    let f = |x: [f64; 2], tt: f64| -> [f64; 2] {
        let dm = d_mu(x[0], g.l_p_e, g.e_tilde_max);
        let a = a0.add(&a1.scale(dm));
        [
            a.0[0][0] * x[0] + a.0[0][1] * x[1],
            a.0[1][0] * x[0] + a.0[1][1] * x[1] + d_dot(tt),
        ]
    };
    let k1 = f(state, t);
    let k2 = f([state[0] + 0.5 * h * k1[0], state[1] + 0.5 * h * k1[1]], t + 0.5 * h);
    let k3 = f([state[0] + 0.5 * h * k2[0], state[1] + 0.5 * h * k2[1]], t + 0.5 * h);
    let k4 = f([state[0] + h * k3[0], state[1] + h * k3[1]], t + h);
    [
        state[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        state[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}
