//! Covariance-parameterized data-driven LQR.
//!
//! With `φ_t = [u_t; z_t]` and `Φ = (1/t) Σ φ φᵀ`, a gain `K` is written as
//! `[K; I] = Φ V`. The data-implied closed loop is `Z̄₁ V`, and the cost is
//! `J(V) = Tr((Q + Vᵀ ŪᵀRŪ V) Σ)` with `Σ = I + Z̄₁V Σ (Z̄₁V)ᵀ`.

use thiserror::Error;

use crate::numerics::{self, pseudoinverse, solve_dlyap, spectral_radius, spd_inverse, vstack, Matrix, Vector};
use crate::plant::{self, PlantError};

/// Condition number above which the sample covariance is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// `ρ(Z̄₁V)` at or above `1 - FEASIBILITY_MARGIN` is outside the feasible set.
pub const FEASIBILITY_MARGIN: f64 = 1e-9;
/// Allowed relative violation of `Z̄₀ V = I`.
pub const CONSTRAINT_TOL: f64 = 1e-6;
const STEP_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqrError {
    #[error("weights must be symmetric positive definite ({0})")]
    NotPositiveDefinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("sample covariance is rank deficient (condition number {0:e})")]
    RankDeficient(f64),
    #[error("parameterization is outside the feasible set (spectral radius {0})")]
    Unstable(f64),
    #[error("Riccati iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("data-implied model is not stabilizable")]
    Unstabilizable,
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
}

impl From<PlantError> for LqrError {
    fn from(e: PlantError) -> Self {
        match e {
            PlantError::NoConvergence(n) => LqrError::NoConvergence(n),
            PlantError::Numerics(e) => LqrError::Numerics(e),
            PlantError::Dimension(s) => LqrError::DimensionMismatch(s),
            _ => LqrError::Unstabilizable,
        }
    }
}

/// State and input weights `(Q, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    q: Matrix,
    r: Matrix,
}

impl LqrWeights {
    pub fn new(q: Matrix, r: Matrix) -> Result<Self, LqrError> {
        if !numerics::is_spd(&q) {
            return Err(LqrError::NotPositiveDefinite("Q"));
        }
        if !numerics::is_spd(&r) {
            return Err(LqrError::NotPositiveDefinite("R"));
        }
        Ok(Self { q, r })
    }

    /// `Q = I_r`, `R = I_m`.
    pub fn identity(state_dim: usize, input_dim: usize) -> Self {
        Self {
            q: Matrix::identity(state_dim, state_dim),
            r: Matrix::identity(input_dim, input_dim),
        }
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            q: &self.q * c,
            r: &self.r * c,
        }
    }
}

/// Running sample covariances of input-state data and of the successor state.
///
/// `Ū₀ = Φ[..m, :]` and `Z̄₀ = Φ[m.., :]` are row blocks of `Φ` and are not
/// stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCovariances {
    phi: Matrix,
    phi_inv: Matrix,
    z1_bar: Matrix,
    samples: usize,
    input_dim: usize,
    condition_estimate: f64,
}

impl DataCovariances {
    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn phi_inv(&self) -> &Matrix {
        &self.phi_inv
    }

    pub fn z1_bar(&self) -> &Matrix {
        &self.z1_bar
    }

    pub fn u_bar(&self) -> Matrix {
        self.phi.rows(0, self.input_dim).into_owned()
    }

    pub fn z0_bar(&self) -> Matrix {
        self.phi.rows(self.input_dim, self.state_dim()).into_owned()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn state_dim(&self) -> usize {
        self.phi.nrows() - self.input_dim
    }

    /// Upper bound `‖Φ‖_F ‖Φ⁻¹‖_F` on the condition number, refreshed each update.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    pub fn ill_conditioned(&self) -> bool {
        !(self.condition_estimate <= MAX_CONDITION)
    }

    /// Rebuilds from stored blocks; used when restoring snapshots.
    pub fn from_parts(phi: Matrix, z1_bar: Matrix, samples: usize, input_dim: usize) -> Result<Self, LqrError> {
        let n = phi.nrows();
        if !phi.is_square() || input_dim >= n || z1_bar.shape() != (n - input_dim, n) || samples == 0 {
            return Err(LqrError::DimensionMismatch("inconsistent covariance blocks".into()));
        }
        let phi = (&phi + phi.transpose()) * 0.5;
        let cond = numerics::symmetric_condition(&phi);
        let phi_inv = spd_inverse(&phi).ok_or(LqrError::RankDeficient(cond))?;
        Ok(Self {
            condition_estimate: phi.norm() * phi_inv.norm(),
            phi,
            phi_inv,
            z1_bar,
            samples,
            input_dim,
        })
    }

    /// Rebuilds from stored blocks, keeping the given inverse as is.
    pub fn restore(phi: Matrix, phi_inv: Matrix, z1_bar: Matrix, samples: usize, input_dim: usize) -> Result<Self, LqrError> {
        let n = phi.nrows();
        if !phi.is_square() || phi_inv.shape() != phi.shape() || input_dim >= n || z1_bar.shape() != (n - input_dim, n) || samples == 0 {
            return Err(LqrError::DimensionMismatch("inconsistent covariance blocks".into()));
        }
        Ok(Self {
            condition_estimate: phi.norm() * phi_inv.norm(),
            phi,
            phi_inv,
            z1_bar,
            samples,
            input_dim,
        })
    }

    /// Absorbs one sample `(u_t, z_t, z_{t+1})` with a Sherman–Morrison update of `Φ⁻¹`.
    pub fn update(&mut self, u: &Vector, z: &Vector, z_next: &Vector) -> Result<(), LqrError> {
        let (m, r) = (self.input_dim, self.state_dim());
        if u.len() != m || z.len() != r || z_next.len() != r {
            return Err(LqrError::DimensionMismatch(format!(
                "sample sizes ({}, {}, {}) for m = {m}, r = {r}",
                u.len(),
                z.len(),
                z_next.len()
            )));
        }
        let t = self.samples as f64;
        let phi_vec = stack_sample(u, z);
        let scale_old = t / (t + 1.0);
        let scale_new = 1.0 / (t + 1.0);

        self.phi *= scale_old;
        self.phi.ger(scale_new, &phi_vec, &phi_vec, 1.0);
        self.z1_bar *= scale_old;
        self.z1_bar.ger(scale_new, z_next, &phi_vec, 1.0);

        // Φ_{t+1}⁻¹ = (t+1)/t · (Φ_t⁻¹ − Φ_t⁻¹φφᵀΦ_t⁻¹ / (t + φᵀΦ_t⁻¹φ))
        let w = &self.phi_inv * &phi_vec;
        let denom = t + phi_vec.dot(&w);
        self.phi_inv.ger(-1.0 / denom, &w, &w, 1.0);
        self.phi_inv *= (t + 1.0) / t;
        self.samples += 1;

        self.condition_estimate = self.phi.norm() * self.phi_inv.norm();
        if self.ill_conditioned() {
            log::warn!("sample covariance condition estimate {:e} exceeds {MAX_CONDITION:e}", self.condition_estimate);
        }
        Ok(())
    }
}

fn stack_sample(u: &Vector, z: &Vector) -> Vector {
    let mut out = Vector::zeros(u.len() + z.len());
    out.rows_mut(0, u.len()).copy_from(u);
    out.rows_mut(u.len(), z.len()).copy_from(z);
    out
}

/// Batch covariances from `U (m×t)`, `Z₀ (r×t)` and `Z₁ (r×t)`.
pub fn cov_init(u: &Matrix, z: &Matrix, z_next: &Matrix) -> Result<DataCovariances, LqrError> {
    let t = u.ncols();
    let (m, r) = (u.nrows(), z.nrows());
    if z.ncols() != t || z_next.shape() != (r, t) || m == 0 || r == 0 {
        return Err(LqrError::DimensionMismatch(format!(
            "U {:?}, Z0 {:?}, Z1 {:?}",
            u.shape(),
            z.shape(),
            z_next.shape()
        )));
    }
    if t < m + r {
        return Err(LqrError::RankDeficient(f64::INFINITY));
    }
    let d = vstack(&[u, z]);
    let phi = &d * d.transpose() / t as f64;
    let phi = (&phi + phi.transpose()) * 0.5;
    let cond = numerics::symmetric_condition(&phi);
    if !(cond <= MAX_CONDITION) {
        return Err(LqrError::RankDeficient(cond));
    }
    let phi_inv = spd_inverse(&phi).ok_or(LqrError::RankDeficient(cond))?;
    let z1_bar = z_next * d.transpose() / t as f64;
    Ok(DataCovariances {
        condition_estimate: phi.norm() * phi_inv.norm(),
        phi,
        phi_inv,
        z1_bar,
        samples: t,
        input_dim: m,
    })
}

/// Functional form of [`DataCovariances::update`].
pub fn cov_update(cov: &DataCovariances, u: &Vector, z: &Vector, z_next: &Vector) -> Result<DataCovariances, LqrError> {
    let mut next = cov.clone();
    next.update(u, z, z_next)?;
    Ok(next)
}

/// The policy parameter `V` with `[K; I] = Φ V`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameterization {
    pub v: Matrix,
}

fn gain_stack(k: &Matrix) -> Matrix {
    let r = k.ncols();
    vstack(&[k, &Matrix::identity(r, r)])
}

pub fn parameterize(cov: &DataCovariances, k: &Matrix) -> Result<Parameterization, LqrError> {
    if k.shape() != (cov.input_dim(), cov.state_dim()) {
        return Err(LqrError::DimensionMismatch(format!(
            "gain is {:?}, expected {:?}",
            k.shape(),
            (cov.input_dim(), cov.state_dim())
        )));
    }
    if cov.ill_conditioned() {
        return Err(LqrError::RankDeficient(cov.condition_estimate()));
    }
    Ok(Parameterization {
        v: cov.phi_inv() * gain_stack(k),
    })
}

/// `K = Ū₀ V`.
pub fn recover_gain(cov: &DataCovariances, v: &Parameterization) -> Matrix {
    cov.u_bar() * &v.v
}

/// `‖Z̄₀ V − I‖_F`.
pub fn constraint_residual(cov: &DataCovariances, v: &Parameterization) -> f64 {
    let r = cov.state_dim();
    (cov.z0_bar() * &v.v - Matrix::identity(r, r)).norm()
}

/// Data-implied closed-loop matrix `Z̄₁ V`.
pub fn closed_loop(cov: &DataCovariances, v: &Parameterization) -> Matrix {
    cov.z1_bar() * &v.v
}

pub fn is_feasible(cov: &DataCovariances, v: &Parameterization) -> bool {
    spectral_radius(&closed_loop(cov, v)) < 1.0 - FEASIBILITY_MARGIN
}

fn weighted_input_gram(cov: &DataCovariances, weights: &LqrWeights) -> Matrix {
    let u_bar = cov.u_bar();
    u_bar.transpose() * weights.r() * u_bar
}

/// `J(V)`, or `None` when `ρ(Z̄₁V) ≥ 1 − 1e-9`.
///
/// `J` is evaluated on the whole space of `V`; the affine constraint is the
/// caller's responsibility (see [`constraint_residual`]).
pub fn data_cost(cov: &DataCovariances, v: &Parameterization, weights: &LqrWeights) -> Option<f64> {
    cost_and_gradient(cov, v, weights).ok().map(|(j, _)| j)
}

/// Analytic gradient `2 (ŪᵀRŪ + Z̄₁ᵀ P Z̄₁) V Σ`, with `P` and `Σ` from two Lyapunov solves.
pub fn gradient(cov: &DataCovariances, v: &Parameterization, weights: &LqrWeights) -> Result<Matrix, LqrError> {
    cost_and_gradient(cov, v, weights).map(|(_, g)| g)
}

pub fn cost_and_gradient(
    cov: &DataCovariances,
    v: &Parameterization,
    weights: &LqrWeights,
) -> Result<(f64, Matrix), LqrError> {
    let r = cov.state_dim();
    if v.v.shape() != (cov.phi().nrows(), r) || weights.q().nrows() != r || weights.r().nrows() != cov.input_dim() {
        return Err(LqrError::DimensionMismatch(format!("V is {:?}", v.v.shape())));
    }
    let a_cl = closed_loop(cov, v);
    let rho = spectral_radius(&a_cl);
    if !(rho < 1.0 - FEASIBILITY_MARGIN) {
        return Err(LqrError::Unstable(rho));
    }
    let sigma = solve_dlyap(&a_cl, &Matrix::identity(r, r))?;
    let m_gram = weighted_input_gram(cov, weights);
    let stage = weights.q() + v.v.transpose() * &m_gram * &v.v;
    let stage = (&stage + stage.transpose()) * 0.5;
    let cost = (&stage * &sigma).trace();
    let p = solve_dlyap(&a_cl.transpose(), &stage)?;
    let z1 = cov.z1_bar();
    let grad = (m_gram + z1.transpose() * p * z1) * &v.v * sigma * 2.0;
    Ok((cost, grad))
}

/// Orthogonal projector onto the nullspace of `Z̄₀`: `Π = I − Z̄₀† Z̄₀`.
pub fn nullspace_projection(cov: &DataCovariances) -> Matrix {
    let z0 = cov.z0_bar();
    let n = z0.ncols();
    let pi = Matrix::identity(n, n) - pseudoinverse(&z0) * z0;
    (&pi + pi.transpose()) * 0.5
}

/// Stepsize scaled by the inverse of `‖Ū Π Ūᵀ‖₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSize {
    pub eta: f64,
    /// The norm was below `1e-12` and the stepsize was capped.
    pub capped: bool,
}

pub fn adaptive_stepsize(cov: &DataCovariances, eta0: f64) -> StepSize {
    adaptive_stepsize_with(cov, &nullspace_projection(cov), eta0)
}

pub fn adaptive_stepsize_with(cov: &DataCovariances, projection: &Matrix, eta0: f64) -> StepSize {
    let u_bar = cov.u_bar();
    let snr = &u_bar * projection * u_bar.transpose();
    let snr = (&snr + snr.transpose()) * 0.5;
    let norm = snr.symmetric_eigenvalues().iter().map(|v| v.abs()).fold(0.0, f64::max);
    if norm < STEP_NORM_FLOOR {
        log::warn!("input excitation is numerically absent; stepsize capped");
        StepSize {
            eta: eta0 / STEP_NORM_FLOOR,
            capped: true,
        }
    } else {
        StepSize {
            eta: eta0 / norm,
            capped: false,
        }
    }
}

/// Certainty-equivalence estimate `[B̂, Â] = Z̄₁ Φ⁻¹`.
pub fn certainty_equivalent_model(cov: &DataCovariances) -> (Matrix, Matrix) {
    let theta = cov.z1_bar() * cov.phi_inv();
    let m = cov.input_dim();
    let b_hat = theta.columns(0, m).into_owned();
    let a_hat = theta.columns(m, cov.state_dim()).into_owned();
    (a_hat, b_hat)
}

/// Initial gain: LQR on the certainty-equivalent model, which solves the
/// data-driven problem when the noise covariance term is dropped.
pub fn initial_policy(cov: &DataCovariances, weights: &LqrWeights) -> Result<Matrix, LqrError> {
    if cov.ill_conditioned() {
        return Err(LqrError::RankDeficient(cov.condition_estimate()));
    }
    let (a_hat, b_hat) = certainty_equivalent_model(cov);
    Ok(plant::model_lqr_gain(&a_hat, &b_hat, weights.q(), weights.r())?)
}

/// Outcome of [`projected_gradient_descent`].
#[derive(Debug, Clone)]
pub struct DescentTrace {
    pub v: Parameterization,
    pub costs: Vec<f64>,
    pub projected_grad_norms: Vec<f64>,
}

/// Projected gradient descent on frozen covariances, from a feasible start.
///
/// Alternative initializer to [`initial_policy`]; each step halves the
/// stepsize (up to ten times) until the iterate stays feasible.
pub fn projected_gradient_descent(
    cov: &DataCovariances,
    weights: &LqrWeights,
    start: Parameterization,
    eta0: f64,
    max_iters: usize,
    tol: f64,
) -> Result<DescentTrace, LqrError> {
    let proj = nullspace_projection(cov);
    let step = adaptive_stepsize_with(cov, &proj, eta0);
    let mut v = start;
    let (mut cost, mut grad) = cost_and_gradient(cov, &v, weights)?;
    let mut costs = vec![cost];
    let mut norms = Vec::new();
    for _ in 0..max_iters {
        let dir = &proj * &grad;
        let gnorm = dir.norm();
        norms.push(gnorm);
        if gnorm < tol {
            break;
        }
        let mut eta = step.eta;
        let mut accepted = None;
        for _ in 0..=10 {
            let cand = Parameterization { v: &v.v - &dir * eta };
            if let Ok((c, g)) = cost_and_gradient(cov, &cand, weights) {
                accepted = Some((cand, c, g));
                break;
            }
            eta *= 0.5;
        }
        let Some((cand, c, g)) = accepted else { break };
        v = cand;
        cost = c;
        grad = g;
        costs.push(cost);
    }
    Ok(DescentTrace {
        v,
        costs,
        projected_grad_norms: norms,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::plant::{model_lqr_cost, model_lqr_gain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) struct StateData {
        pub a: Matrix,
        pub b: Matrix,
        pub u: Matrix,
        pub z0: Matrix,
        pub z1: Matrix,
    }

    /// State data from a random stable `(A, B)` driven by uniform inputs.
    pub(crate) fn state_data(seed: u64, n: usize, m: usize, t: usize, noise: f64) -> StateData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = &a * (rng.random_range(0.5..0.95) / spectral_radius(&a).max(1e-3));
        let b = Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let mut z = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let mut u = Matrix::zeros(m, t);
        let mut z0 = Matrix::zeros(n, t);
        let mut z1 = Matrix::zeros(n, t);
        for k in 0..t {
            let uk = Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let w = Vector::from_fn(n, |_, _| noise * rng.random_range(-1.0..1.0));
            let next = &a * &z + &b * &uk + w;
            u.set_column(k, &uk);
            z0.set_column(k, &z);
            z1.set_column(k, &next);
            z = next;
        }
        StateData { a, b, u, z0, z1 }
    }

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn sample(d: &StateData, k: usize) -> (Vector, Vector, Vector) {
        (d.u.column(k).into_owned(), d.z0.column(k).into_owned(), d.z1.column(k).into_owned())
    }

    #[test]
    fn orthonormal_data_gives_identity_covariance() {
        let (m, r) = (1, 2);
        let t = m + r;
        let q = Matrix::from_fn(t, t, |i, j| ((i + 2 * j) as f64).cos()).qr().q();
        let d = &q * (t as f64).sqrt();
        let cov = cov_init(&d.rows(0, m).into_owned(), &d.rows(m, r).into_owned(), &Matrix::zeros(r, t)).unwrap();
        assert!((cov.phi() - Matrix::identity(3, 3)).amax() < 1e-12);
        assert!((cov.phi_inv() - Matrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn rank_deficient_batch_rejected() {
        let u = Matrix::from_element(1, 10, 1.0);
        let z = Matrix::from_element(1, 10, 2.0);
        assert!(matches!(cov_init(&u, &z, &z), Err(LqrError::RankDeficient(_))));
    }

    #[test]
    fn batch_equals_sequential() {
        let d = state_data(1, 3, 2, 60, 0.0);
        let mut cov = cov_init(
            &d.u.columns(0, 10).into_owned(),
            &d.z0.columns(0, 10).into_owned(),
            &d.z1.columns(0, 10).into_owned(),
        )
        .unwrap();
        for k in 10..60 {
            let (u, z, zn) = sample(&d, k);
            cov.update(&u, &z, &zn).unwrap();
        }
        let batch = cov_init(&d.u, &d.z0, &d.z1).unwrap();
        assert!((cov.phi() - batch.phi()).amax() <= 1e-10);
        assert!((cov.z1_bar() - batch.z1_bar()).amax() <= 1e-10);
        assert!((cov.phi_inv() - batch.phi_inv()).amax() <= 1e-9 * batch.phi_inv().amax());
        assert_eq!(cov.samples(), 60);
    }

    #[test]
    fn zero_sample_scales_covariance() {
        let d = state_data(2, 2, 1, 20, 0.0);
        let cov = cov_init(&d.u, &d.z0, &d.z1).unwrap();
        let next = cov_update(&cov, &Vector::zeros(1), &Vector::zeros(2), &Vector::zeros(2)).unwrap();
        assert!((next.phi() - cov.phi() * (20.0 / 21.0)).amax() < 1e-15);
    }

    #[test]
    fn noiseless_successor_covariance_matches_model() {
        let d = state_data(3, 3, 1, 40, 0.0);
        let cov = cov_init(&d.u, &d.z0, &d.z1).unwrap();
        let ba = numerics::hstack(&[&d.b, &d.a]);
        assert!((cov.z1_bar() - ba * cov.phi()).amax() < 1e-12);
    }

    #[test]
    fn inverse_drift_stays_small() {
        let d = state_data(4, 4, 2, 10_050, 0.01);
        let mut cov = cov_init(
            &d.u.columns(0, 50).into_owned(),
            &d.z0.columns(0, 50).into_owned(),
            &d.z1.columns(0, 50).into_owned(),
        )
        .unwrap();
        for k in 50..10_050 {
            let (u, z, zn) = sample(&d, k);
            cov.update(&u, &z, &zn).unwrap();
        }
        let eye = Matrix::identity(6, 6);
        assert!((cov.phi() * cov.phi_inv() - &eye).amax() <= 1e-8);
        let fresh = cov.phi().clone().try_inverse().unwrap();
        assert!((cov.phi_inv() - fresh).amax() <= 1e-8 * cov.phi_inv().amax());
    }

    #[test]
    fn parameterization_round_trip() {
        let d = state_data(5, 3, 2, 50, 0.01);
        let cov = cov_init(&d.u, &d.z0, &d.z1).unwrap();
        let k = Matrix::from_fn(2, 3, |i, j| 0.1 * (i as f64 - j as f64));
        let v = parameterize(&cov, &k).unwrap();
        assert!((cov.phi() * &v.v - gain_stack(&k)).amax() < 1e-8);
        assert!((recover_gain(&cov, &v) - &k).amax() < 1e-8);
        assert!(constraint_residual(&cov, &v) < 1e-8);
    }

    #[test]
    fn identity_covariance_parameterization() {
        let cov = DataCovariances::from_parts(Matrix::identity(3, 3), Matrix::zeros(2, 3), 10, 1).unwrap();
        let k = Matrix::from_row_slice(1, 2, &[0.3, -0.7]);
        let v = parameterize(&cov, &k).unwrap();
        assert_eq!(v.v, gain_stack(&k));
        assert_eq!(recover_gain(&cov, &v), k);
        let zero = Parameterization { v: Matrix::zeros(3, 2) };
        assert_eq!(recover_gain(&cov, &zero), Matrix::zeros(1, 2));
    }

    #[test]
    fn data_cost_matches_model_cost_noiseless() {
        let d = state_data(6, 3, 2, 60, 0.0);
        let cov = cov_init(&d.u, &d.z0, &d.z1).unwrap();
        let w = LqrWeights::identity(3, 2);
        let k_star = model_lqr_gain(&d.a, &d.b, w.q(), w.r()).unwrap();
        let v = parameterize(&cov, &k_star).unwrap();
        let j_data = data_cost(&cov, &v, &w).unwrap();
        let j_model = model_lqr_cost(&d.a, &d.b, &k_star, w.q(), w.r()).unwrap();
        assert!((j_data - j_model).abs() <= 1e-6 * j_model.max(1.0));
    }

    #[test]
    fn deadbeat_data_cost_and_unstable_gate() {
        // Z̄₁ = 0 makes Σ = I
        let cov = DataCovariances::from_parts(Matrix::identity(3, 3), Matrix::zeros(2, 3), 10, 1).unwrap();
        let w = LqrWeights::identity(2, 1);
        let k = Matrix::from_row_slice(1, 2, &[0.5, 1.5]);
        let v = parameterize(&cov, &k).unwrap();
        let m_gram = weighted_input_gram(&cov, &w);
        let expected = (w.q() + v.v.transpose() * m_gram * &v.v).trace();
        assert!((data_cost(&cov, &v, &w).unwrap() - expected).abs() < 1e-14);

        // Z̄₁ = [0, 2I] with K = 0 gives a closed loop with radius 2
        let mut z1 = Matrix::zeros(2, 3);
        z1.view_mut((0, 1), (2, 2)).fill_diagonal(2.0);
        let cov = DataCovariances::from_parts(Matrix::identity(3, 3), z1, 10, 1).unwrap();
        let v = parameterize(&cov, &Matrix::zeros(1, 2)).unwrap();
        assert!(data_cost(&cov, &v, &w).is_none());
        assert!(matches!(gradient(&cov, &v, &w), Err(LqrError::Unstable(_))));
    }

    fn finite_difference(cov: &DataCovariances, v: &Parameterization, w: &LqrWeights, h: f64) -> Matrix {
        Matrix::from_fn(v.v.nrows(), v.v.ncols(), |i, j| {
            let mut plus = v.clone();
            plus.v[(i, j)] += h;
            let mut minus = v.clone();
            minus.v[(i, j)] -= h;
            (data_cost(cov, &plus, w).unwrap() - data_cost(cov, &minus, w).unwrap()) / (2.0 * h)
        })
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let d = state_data(7, 2, 1, 40, 0.05);
        let cov = cov_init(&d.u, &d.z0, &d.z1).unwrap();
        let w = LqrWeights::identity(2, 1);
        let mut checked = 0;
        while checked < 5 {
            let k = Matrix::from_fn(1, 2, |_, _| rng.random_range(-0.3..0.3));
            let mut v = parameterize(&cov, &k).unwrap();
            v.v += Matrix::from_fn(3, 2, |_, _| rng.random_range(-0.05..0.05));
            if !is_feasible(&cov, &v) {
                continue;
            }
            let g = gradient(&cov, &v, &w).unwrap();
            let fd = finite_difference(&cov, &v, &w, 1e-6);
            assert!((&g - &fd).norm() <= 1e-5 * g.norm(), "{g} vs {fd}");
            checked += 1;
        }
    }

    #[test]
    fn projected_gradient_vanishes_at_optimum() {
        let d = state_data(8, 3, 2, 80, 0.0);
        let cov = cov_init(&d.u, &d.z0, &d.z1).unwrap();
        let w = LqrWeights::identity(3, 2);
        let k_star = model_lqr_gain(&d.a, &d.b, w.q(), w.r()).unwrap();
        let v = parameterize(&cov, &k_star).unwrap();
        let g = gradient(&cov, &v, &w).unwrap();
        assert!((nullspace_projection(&cov) * g).norm() <= 1e-6);
    }

    #[test]
    fn gradient_is_linear_in_weights() {
        let d = state_data(9, 2, 1, 30, 0.01);
        let cov = cov_init(&d.u, &d.z0, &d.z1).unwrap();
        let w = LqrWeights::identity(2, 1);
        let v = parameterize(&cov, &Matrix::zeros(1, 2)).unwrap();
        let g = gradient(&cov, &v, &w).unwrap();
        let g3 = gradient(&cov, &v, &w.scaled(3.0)).unwrap();
        assert!((g3 - g * 3.0).amax() <= 1e-12 * (1.0 + cov.phi().amax()));
    }

    #[test]
    fn projection_properties() {
        let d = state_data(10, 3, 2, 40, 0.1);
        let cov = cov_init(&d.u, &d.z0, &d.z1).unwrap();
        let pi = nullspace_projection(&cov);
        assert!((&pi * &pi - &pi).amax() < 1e-9);
        assert!((cov.z0_bar() * &pi).amax() < 1e-9);
        assert!((&pi - pi.transpose()).amax() < 1e-12);
        assert!((&pi * pi.transpose() - &pi).amax() < 1e-9);
        assert!((pi.trace() - 2.0).abs() < 1e-9);

        let cov = DataCovariances::from_parts(Matrix::identity(4, 4), Matrix::zeros(2, 4), 10, 2).unwrap();
        let mut expected = Matrix::zeros(4, 4);
        expected.view_mut((0, 0), (2, 2)).fill_with_identity();
        assert!((nullspace_projection(&cov) - expected).amax() < 1e-14);
    }

    #[test]
    fn stepsize_examples() {
        let cov = DataCovariances::from_parts(Matrix::identity(3, 3), Matrix::zeros(2, 3), 10, 1).unwrap();
        let s = adaptive_stepsize(&cov, 1e-4);
        assert!(!s.capped && (s.eta - 1e-4).abs() < 1e-18);

        let mut phi = Matrix::identity(3, 3);
        phi[(0, 0)] = 1e-14;
        let cov = DataCovariances::from_parts(phi, Matrix::zeros(2, 3), 10, 1).unwrap();
        let s = adaptive_stepsize(&cov, 1e-4);
        assert!(s.capped && s.eta == 1e-4 / 1e-12);
    }

    #[test]
    fn stepsize_scales_with_fourth_power_of_input_amplitude() {
        // u rows orthogonal to z rows: Π = diag(I, 0) and ŪΠŪᵀ = (UUᵀ/t)²
        let t = 64;
        let u = Matrix::from_fn(1, t, |_, k| if k % 2 == 0 { 1.0 } else { -1.0 });
        let z = Matrix::from_fn(2, t, |i, k| ((k / 2) as f64 * (i as f64 + 1.0) * 0.37).sin());
        let cov1 = cov_init(&u, &z, &z).unwrap();
        let cov2 = cov_init(&(&u * 2.0), &z, &z).unwrap();
        assert!((cov1.u_bar().columns(1, 2)).amax() < 1e-12);
        let ratio = adaptive_stepsize(&cov2, 1e-4).eta / adaptive_stepsize(&cov1, 1e-4).eta;
        assert!((ratio - 1.0 / 16.0).abs() < 1e-12, "{ratio}");
    }

    #[test]
    fn initial_policy_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = 50;
        let u = Matrix::from_fn(1, t, |_, _| rng.random_range(-1.0..1.0));
        let mut z0 = Matrix::zeros(1, t);
        let mut z1 = Matrix::zeros(1, t);
        let mut z = 0.3;
        for k in 0..t {
            z0[(0, k)] = z;
            z = 0.5 * z + u[(0, k)];
            z1[(0, k)] = z;
        }
        let cov = cov_init(&u, &z0, &z1).unwrap();
        let k = initial_policy(&cov, &LqrWeights::identity(1, 1)).unwrap();
        let oracle = model_lqr_gain(&scalar(0.5), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!((k[(0, 0)] - oracle[(0, 0)]).abs() < 1e-9);
        assert!((k[(0, 0)] + 0.26556).abs() < 1e-5);
    }

    #[test]
    fn initial_policy_matches_model_and_beats_random_gains() {
        let d = state_data(12, 4, 2, 100, 0.0);
        let cov = cov_init(&d.u, &d.z0, &d.z1).unwrap();
        let w = LqrWeights::identity(4, 2);
        let k = initial_policy(&cov, &w).unwrap();
        let oracle = model_lqr_gain(&d.a, &d.b, w.q(), w.r()).unwrap();
        assert!((&k - &oracle).amax() < 1e-6);

        let j = model_lqr_cost(&d.a, &d.b, &k, w.q(), w.r()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut probes = 0;
        while probes < 50 {
            let kr = Matrix::from_fn(2, 4, |_, _| rng.random_range(-0.5..0.5));
            if let Some(jr) = model_lqr_cost(&d.a, &d.b, &kr, w.q(), w.r()) {
                assert!(j <= jr + 1e-9);
                probes += 1;
            }
        }
    }

    #[test]
    fn descent_battery_is_monotone() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let n = rng.random_range(1..=4);
            let m = rng.random_range(1..=2);
            let d = state_data(200 + seed, n, m, 30 * (n + m), 0.02);
            let cov = cov_init(&d.u, &d.z0, &d.z1).unwrap();
            let w = LqrWeights::identity(n, m);
            let k0 = Matrix::from_fn(m, n, |_, _| rng.random_range(-0.1..0.1));
            let v0 = parameterize(&cov, &k0).unwrap();
            if !is_feasible(&cov, &v0) {
                continue;
            }
            let res0 = constraint_residual(&cov, &v0);
            let trace = projected_gradient_descent(&cov, &w, v0, 1e-2, 300, 1e-8).unwrap();
            for pair in trace.costs.windows(2) {
                assert!(pair[1] <= pair[0] * (1.0 + 1e-12), "seed {seed}: {} -> {}", pair[0], pair[1]);
            }
            assert!(constraint_residual(&cov, &trace.v) <= res0 + 1e-9 * 300.0);
        }
    }

    #[test]
    fn single_projected_step_preserves_constraint() {
        let d = state_data(13, 3, 2, 60, 0.05);
        let cov = cov_init(&d.u, &d.z0, &d.z1).unwrap();
        let w = LqrWeights::identity(3, 2);
        let v = parameterize(&cov, &Matrix::zeros(2, 3)).unwrap();
        let g = gradient(&cov, &v, &w).unwrap();
        let eta = adaptive_stepsize(&cov, 1e-3).eta;
        let next = Parameterization { v: &v.v - nullspace_projection(&cov) * g * eta };
        assert!(constraint_residual(&cov, &next) <= constraint_residual(&cov, &v) + 1e-9);
    }
}
