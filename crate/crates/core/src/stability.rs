//! Numerical stability certificates for the estimation error dynamics:
//! 2×2 Lyapunov solves, decay-rate bounds γ*, Gronwall finite-time entry
//! bounds, and Hurwitz checks for the mechanical tracking loop.
//!
//! Both observers share one error-dynamics template
//!
//! ```text
//! ḋ = (A0 + ∂μ(x)·A1)·d + B·ḋ_ext,   B = (0, 1)ᵀ
//! ```
//!
//! with A0 = [−a, −b; l_i, 0] and A1 = [0, 0; −a, −b], where (a, b) is
//! (B/J, 1/J) for the load-torque loop and (R/L, 1/L) for the current loops.

use serde::Serialize;
use thiserror::Error;

use crate::config::{GainSet, MotorParams};

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("matrix is not Hurwitz (eigenvalue with nonnegative real part)")]
    NotHurwitz,
    #[error("Lyapunov system is numerically singular")]
    IllConditioned,
    #[error("Q must be symmetric positive definite")]
    NotPositiveDefinite,
    #[error("decay rate gamma* is not positive; no finite-time certificate")]
    NonPositiveGamma,
}

/// Dense 2×2 real matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Matrix2(pub [[f64; 2]; 2]);

impl Matrix2 {
    pub fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Self([[m11, m12], [m21, m22]])
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn scaled_identity(s: f64) -> Self {
        Self::new(s, 0.0, 0.0, s)
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.0[0][0], self.0[1][0], self.0[0][1], self.0[1][1])
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let a = &self.0;
        let b = &rhs.0;
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    pub fn add(&self, rhs: &Self) -> Self {
        Self::new(
            self.0[0][0] + rhs.0[0][0],
            self.0[0][1] + rhs.0[0][1],
            self.0[1][0] + rhs.0[1][0],
            self.0[1][1] + rhs.0[1][1],
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(s * self.0[0][0], s * self.0[0][1], s * self.0[1][0], s * self.0[1][1])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    /// Routh criterion: both eigenvalues in the open left half-plane.
    pub fn is_hurwitz(&self) -> bool {
        self.trace() < 0.0 && self.det() > 0.0
    }

    pub fn is_symmetric(&self) -> bool {
        let scale = self.norm_frobenius().max(1.0);
        (self.0[0][1] - self.0[1][0]).abs() <= 1e-12 * scale
    }

    /// Eigenvalues of a symmetric matrix, ascending.
    pub fn sym_eigenvalues(&self) -> (f64, f64) {
        let t = self.trace();
        let mid = 0.5 * t;
        let off = 0.5 * (self.0[0][0] - self.0[1][1]);
        let r = (off * off + self.0[0][1] * self.0[1][0]).max(0.0).sqrt();
        (mid - r, mid + r)
    }

    /// Symmetric positive definite test (Sylvester).
    pub fn is_spd(&self) -> bool {
        self.is_symmetric() && self.0[0][0] > 0.0 && self.det() > 0.0
    }

    /// Spectral (induced 2-) norm: largest singular value.
    pub fn norm_spectral(&self) -> f64 {
        let g = self.transpose().mul(self);
        let (_, lmax) = g.sym_eigenvalues();
        lmax.max(0.0).sqrt()
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|row| row.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// Which estimation loop a certificate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopKind {
    /// Load-torque estimation (mechanical side).
    Outer,
    /// Per-axis current disturbance estimation (electrical side).
    Inner,
}

impl std::str::FromStr for LoopKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "outer" => Ok(Self::Outer),
            "inner" => Ok(Self::Inner),
            other => Err(format!("unknown loop `{other}` (inner | outer)")),
        }
    }
}

/// Error-dynamics matrices of the requested loop: (A0, A1, B).
pub fn error_matrices(loop_kind: LoopKind, p: &MotorParams, g: &GainSet) -> (Matrix2, Matrix2, [f64; 2]) {
    let (a, b, l_i) = match loop_kind {
        LoopKind::Outer => (p.b / p.j, 1.0 / p.j, g.l_i_tau),
        LoopKind::Inner => (p.r / p.l, 1.0 / p.l, g.l_i_e),
    };
    let a0 = Matrix2::new(-a, -b, l_i, 0.0);
    let a1 = Matrix2::new(0.0, 0.0, -a, -b);
    (a0, a1, [0.0, 1.0])
}

/// Solve AᵀP + PA = −Q for symmetric P via the explicit 3-unknown linear
/// system; exact at this size.
pub fn solve_lyapunov(a: &Matrix2, q: &Matrix2) -> Result<Matrix2, StabilityError> {
    if !q.is_spd() {
        return Err(StabilityError::NotPositiveDefinite);
    }
    if !a.is_hurwitz() {
        return Err(StabilityError::NotHurwitz);
    }
    let [[a11, a12], [a21, a22]] = a.0;
    // unknowns x = (p11, p12, p22) from the (1,1), (1,2), (2,2) components
    let mut m = [
        [2.0 * a11, 2.0 * a21, 0.0, -q.0[0][0]],
        [a12, a11 + a22, a21, -q.0[0][1]],
        [0.0, 2.0 * a12, 2.0 * a22, -q.0[1][1]],
    ];
    // Gaussian elimination with partial pivoting
    for col in 0..3 {
        let pivot_row = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot_row][col].abs() < 1e-300 {
            return Err(StabilityError::IllConditioned);
        }
        m.swap(col, pivot_row);
        for row in (col + 1)..3 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = m[row][3];
        for k in (row + 1)..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
        if !x[row].is_finite() {
            return Err(StabilityError::IllConditioned);
        }
    }
    Ok(Matrix2::new(x[0], x[1], x[1], x[2]))
}

/// Inputs of a γ* certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityQuery {
    pub loop_kind: LoopKind,
    /// Symmetric positive definite Q0 of the Lyapunov solve.
    pub q0: Matrix2,
    /// Radius of the residual ball (same units as the error state norm).
    pub epsilon: f64,
    /// Bound on the disturbance derivative: sup‖ḋ_ext‖.
    pub delta: f64,
}

/// Result of a γ* certificate computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub loop_kind: LoopKind,
    pub hurwitz: bool,
    /// Lyapunov matrix of AᵀP + PA = −Q0.
    pub p: Matrix2,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
    /// Guaranteed decay rate of V = dᵀPd outside the ε-ball (1/s),
    /// spectral-norm convention.
    pub gamma_star: f64,
    /// Same bound with Frobenius matrix norms, for convention comparison.
    pub gamma_star_frobenius: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Controller decay factor ρ(η₂) = ε/(ε+η₂); inner loop only.
    pub rho: Option<f64>,
}

impl StabilityReport {
    /// Gronwall entry-time bound from Lyapunov value `v0` (seconds, relative
    /// to the instant where V = v0). See [`finite_time_bound`].
    pub fn finite_time_bound(&self, v0: f64) -> Result<f64, StabilityError> {
        finite_time_bound(v0, self.epsilon, self.gamma_star)
    }
}

/// Worst-case decay rate of the estimation error Lyapunov function outside
/// the ε-ball:
///
/// γ* = λ_min(Q0)/λ_max(P) − l_p·‖Q1‖/λ_min(P) − 2‖P‖·δ/(ε·λ_min(P))
///
/// with Q1 = A1ᵀP + PA1 and sup|∂μ| = l_p over the saturation domain.
pub fn gamma_star(
    q: &StabilityQuery,
    p: &MotorParams,
    g: &GainSet,
) -> Result<StabilityReport, StabilityError> {
    let (a0, a1, _) = error_matrices(q.loop_kind, p, g);
    if !a0.is_hurwitz() {
        return Err(StabilityError::NotHurwitz);
    }
    let pm = solve_lyapunov(&a0, &q.q0)?;
    let q1 = a1.transpose().mul(&pm).add(&pm.mul(&a1));
    let (lmin_p, lmax_p) = pm.sym_eigenvalues();
    let (lmin_q0, _) = q.q0.sym_eigenvalues();
    let l_p = match q.loop_kind {
        LoopKind::Outer => g.l_p_tau,
        LoopKind::Inner => g.l_p_e,
    };
    let gamma = |q1_norm: f64, p_norm: f64| {
        lmin_q0 / lmax_p - l_p * q1_norm / lmin_p - 2.0 * p_norm * q.delta / (q.epsilon * lmin_p)
    };
    Ok(StabilityReport {
        loop_kind: q.loop_kind,
        hurwitz: true,
        p: pm,
        lambda_min_p: lmin_p,
        lambda_max_p: lmax_p,
        gamma_star: gamma(q1.norm_spectral(), pm.norm_spectral()),
        gamma_star_frobenius: gamma(q1.norm_frobenius(), pm.norm_frobenius()),
        epsilon: q.epsilon,
        delta: q.delta,
        rho: match q.loop_kind {
            LoopKind::Inner => Some(q.epsilon / (q.epsilon + g.eta2)),
            LoopKind::Outer => None,
        },
    })
}

/// Gronwall–Bellman entry-time bound: with V̇ ≤ −γ*·V outside B_ε, the error
/// enters the ball no later than (ln V(T₀) − 2 ln ε)/γ* after T₀.
pub fn finite_time_bound(v0: f64, epsilon: f64, gamma_star: f64) -> Result<f64, StabilityError> {
    if gamma_star <= 0.0 {
        return Err(StabilityError::NonPositiveGamma);
    }
    if v0 <= epsilon * epsilon {
        return Ok(0.0);
    }
    Ok((v0.ln() - 2.0 * epsilon.ln()) / gamma_star)
}

/// Mechanical tracking error matrix A_m = [0, 1; −k_θ/J, −(k_ω+B)/J] and its
/// Hurwitz flag.
pub fn mechanical_matrix(g: &GainSet, p: &MotorParams) -> (Matrix2, bool) {
    let a = Matrix2::new(0.0, 1.0, -g.k_theta / p.j, -(g.k_omega + p.b) / p.j);
    let hurwitz = a.is_hurwitz();
    (a, hurwitz)
}

/// Currents-loop decay bound −(2η₁/L)·ρ(η₂) + δ_{αβ}, with
/// ρ = ε_{αβ}/(ε_{αβ} + η₂) the infimum of x/(x+η₂) over the constraint set.
pub fn current_loop_decay(epsilon_ab: f64, g: &GainSet, p: &MotorParams, delta_ab: f64) -> f64 {
    let rho = epsilon_ab / (epsilon_ab + g.eta2);
    -(2.0 * g.eta1 / p.l) * rho + delta_ab
}
