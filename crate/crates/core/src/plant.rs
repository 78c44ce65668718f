//! Ground-truth LTI simulator and model-based oracle constructions.
//!
//! Nothing in this module is visible to the adaptive controller: the engine
//! only talks to an [`IoSystem`], which exposes inputs and outputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    self, hstack, numerical_rank, pseudoinverse, solve_dlyap, spectral_radius, vstack, Matrix,
    Vector, RANK_TOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("(A, B) is not controllable (rank {rank} < {n})")]
    NotControllable { rank: usize, n: usize },
    #[error("(A, C) is not observable (rank {rank} < {n})")]
    NotObservable { rank: usize, n: usize },
    #[error("non-finite signal at step {step}")]
    NonFinite { step: usize },
    #[error("lag bound {lag} is smaller than the observability index")]
    LagTooSmall { lag: usize },
    #[error("Riccati iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("pair is not stabilizable")]
    Unstabilizable,
    #[error("switch events must have strictly increasing times")]
    UnorderedSchedule,
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
}

/// Anything that maps an applied input to a measured output, one sample at a time.
pub trait IoSystem {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Applies `u_t` and returns the output `y_t` measured at the same instant.
    fn step(&mut self, u: &Vector) -> Result<Vector, PlantError>;
}

/// Discrete LTI plant `x⁺ = A x + B u + d`, `y = C x + v` with Gaussian noise.
#[derive(Debug, Clone)]
pub struct PlantModel {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    pub process_noise_std: f64,
    pub measurement_noise_std: f64,
    state: Vector,
    rng: ChaCha8Rng,
    rng_seed: u64,
    steps: usize,
}

fn check_system(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<(), PlantError> {
    let n = a.nrows();
    if !a.is_square() || n == 0 || b.nrows() != n || c.ncols() != n || b.ncols() == 0 || c.nrows() == 0 {
        return Err(PlantError::Dimension(format!(
            "A {:?}, B {:?}, C {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    let ctrb = controllability_matrix(a, b, n);
    let rank = numerical_rank(&ctrb, RANK_TOL);
    if rank < n {
        return Err(PlantError::NotControllable { rank, n });
    }
    let obs = observability_matrix(a, c, n);
    let rank = numerical_rank(&obs, RANK_TOL);
    if rank < n {
        return Err(PlantError::NotObservable { rank, n });
    }
    Ok(())
}

impl PlantModel {
    pub fn new(
        a: Matrix,
        b: Matrix,
        c: Matrix,
        process_noise_std: f64,
        measurement_noise_std: f64,
        rng_seed: u64,
    ) -> Result<Self, PlantError> {
        check_system(&a, &b, &c)?;
        if !(process_noise_std >= 0.0 && measurement_noise_std >= 0.0) {
            return Err(PlantError::Dimension("noise standard deviations must be nonnegative".into()));
        }
        let n = a.nrows();
        Ok(Self {
            a,
            b,
            c,
            process_noise_std,
            measurement_noise_std,
            state: Vector::zeros(n),
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            rng_seed,
            steps: 0,
        })
    }

    pub fn with_state(mut self, x0: Vector) -> Result<Self, PlantError> {
        self.set_state(x0)?;
        Ok(self)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn state(&self) -> &Vector {
        &self.state
    }
    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn set_state(&mut self, x: Vector) -> Result<(), PlantError> {
        if x.len() != self.n() {
            return Err(PlantError::Dimension(format!("state has length {}, expected {}", x.len(), self.n())));
        }
        self.state = x;
        Ok(())
    }

    /// Adds `dx` to the current state (an impulsive disturbance).
    pub fn kick(&mut self, dx: &Vector) -> Result<(), PlantError> {
        if dx.len() != self.n() {
            return Err(PlantError::Dimension("kick length differs from state dimension".into()));
        }
        self.state += dx;
        Ok(())
    }

    /// Replaces the dynamics, keeping the state. Input and output sizes must not change.
    pub fn set_dynamics(&mut self, a: Matrix, b: Matrix, c: Matrix) -> Result<(), PlantError> {
        check_system(&a, &b, &c)?;
        if a.nrows() != self.n() || b.ncols() != self.m() || c.nrows() != self.p() {
            return Err(PlantError::Dimension("switched system must keep n, m and p".into()));
        }
        self.a = a;
        self.b = b;
        self.c = c;
        Ok(())
    }

    fn gaussian(&mut self, len: usize, std: f64) -> Vector {
        if std == 0.0 {
            return Vector::zeros(len);
        }
        let rng = &mut self.rng;
        Vector::from_fn(len, |_, _| std * rng.sample::<f64, _>(StandardNormal))
    }

    /// Measures `y_t = C x_t + v_t`, then advances `x_{t+1} = A x_t + B u_t + d_t`.
    pub fn step(&mut self, u: &Vector) -> Result<Vector, PlantError> {
        if u.len() != self.m() {
            return Err(PlantError::Dimension(format!("input has length {}, expected {}", u.len(), self.m())));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::NonFinite { step: self.steps });
        }
        let v = self.gaussian(self.p(), self.measurement_noise_std);
        let y = &self.c * &self.state + v;
        let d = self.gaussian(self.n(), self.process_noise_std);
        let next = &self.a * &self.state + &self.b * u + d;
        if next.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::NonFinite { step: self.steps });
        }
        self.state = next;
        self.steps += 1;
        Ok(y)
    }
}

impl IoSystem for PlantModel {
    fn input_dim(&self) -> usize {
        self.m()
    }
    fn output_dim(&self) -> usize {
        self.p()
    }
    fn step(&mut self, u: &Vector) -> Result<Vector, PlantError> {
        PlantModel::step(self, u)
    }
}

/// A scheduled change of the plant: new dynamics and an optional state kick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub time_step: usize,
    #[serde(with = "numerics::nested_rows")]
    pub a: Matrix,
    #[serde(with = "numerics::nested_rows")]
    pub b: Matrix,
    #[serde(with = "numerics::nested_rows")]
    pub c: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kick: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SwitchSchedule {
    pub events: Vec<SwitchEvent>,
}

impl SwitchSchedule {
    pub fn new(events: Vec<SwitchEvent>) -> Result<Self, PlantError> {
        let s = Self { events };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.events.windows(2).any(|w| w[0].time_step >= w[1].time_step) {
            return Err(PlantError::UnorderedSchedule);
        }
        for e in &self.events {
            check_system(&e.a, &e.b, &e.c)?;
        }
        Ok(())
    }

    pub fn first_switch(&self) -> Option<usize> {
        self.events.first().map(|e| e.time_step)
    }
}

/// A plant together with its switch schedule and a step counter.
#[derive(Debug, Clone)]
pub struct ScheduledPlant {
    pub model: PlantModel,
    pub schedule: SwitchSchedule,
    t: usize,
}

impl ScheduledPlant {
    pub fn new(model: PlantModel, schedule: SwitchSchedule) -> Result<Self, PlantError> {
        schedule.validate()?;
        for e in &schedule.events {
            if e.a.nrows() != model.n() || e.b.ncols() != model.m() || e.c.nrows() != model.p() {
                return Err(PlantError::Dimension(format!("switch at step {} changes dimensions", e.time_step)));
            }
            if let Some(k) = &e.kick {
                if k.len() != model.n() {
                    return Err(PlantError::Dimension(format!("kick at step {} has wrong length", e.time_step)));
                }
            }
        }
        Ok(Self { model, schedule, t: 0 })
    }

    pub fn time(&self) -> usize {
        self.t
    }
}

impl IoSystem for ScheduledPlant {
    fn input_dim(&self) -> usize {
        self.model.m()
    }
    fn output_dim(&self) -> usize {
        self.model.p()
    }
    fn step(&mut self, u: &Vector) -> Result<Vector, PlantError> {
        let t = self.t;
        if let Some(e) = self.schedule.events.iter().find(|e| e.time_step == t) {
            self.model.set_dynamics(e.a.clone(), e.b.clone(), e.c.clone())?;
            if let Some(k) = &e.kick {
                self.model.kick(&Vector::from_column_slice(k))?;
            }
        }
        let y = self.model.step(u).map_err(|e| match e {
            PlantError::NonFinite { .. } => PlantError::NonFinite { step: t },
            other => other,
        })?;
        self.t += 1;
        Ok(y)
    }
}

/// Uniform white-noise excitation in `[-amplitude, amplitude]` per channel.
#[derive(Debug, Clone)]
pub struct UniformExcitation {
    pub amplitude: f64,
    rng: ChaCha8Rng,
}

impl UniformExcitation {
    pub fn new(amplitude: f64, seed: u64) -> Self {
        Self {
            amplitude,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self, m: usize) -> Vector {
        let amp = self.amplitude;
        if amp == 0.0 {
            return Vector::zeros(m);
        }
        let rng = &mut self.rng;
        Vector::from_fn(m, |_, _| rng.random_range(-amp..=amp))
    }
}

fn matrix_power(a: &Matrix, k: usize) -> Matrix {
    let mut out = Matrix::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        out = a * out;
    }
    out
}

/// Extended observability matrix with `C A^{l-1}` on top down to `C` at the bottom.
pub fn observability_matrix(a: &Matrix, c: &Matrix, lag: usize) -> Matrix {
    let blocks: Vec<Matrix> = (0..lag).rev().map(|k| c * matrix_power(a, k)).collect();
    vstack(&blocks.iter().collect::<Vec<_>>())
}

/// `[B, AB, …, A^{l-1} B]`.
pub fn controllability_matrix(a: &Matrix, b: &Matrix, lag: usize) -> Matrix {
    let mut blocks = Vec::with_capacity(lag);
    let mut cur = b.clone();
    for _ in 0..lag {
        let next = a * &cur;
        blocks.push(cur);
        cur = next;
    }
    hstack(&blocks.iter().collect::<Vec<_>>())
}

/// Impulse-response Toeplitz matrix: block `(i, j)` is `C A^{j-i-1} B` for `j > i`, zero otherwise.
pub fn toeplitz_matrix(a: &Matrix, b: &Matrix, c: &Matrix, lag: usize) -> Matrix {
    let (m, p) = (b.ncols(), c.nrows());
    let markov: Vec<Matrix> = (0..lag).map(|k| c * matrix_power(a, k) * b).collect();
    let mut out = Matrix::zeros(p * lag, m * lag);
    for i in 0..lag {
        for j in (i + 1)..lag {
            out.view_mut((i * p, j * m), (p, m)).copy_from(&markov[j - i - 1]);
        }
    }
    out
}

pub fn build_observability(model: &PlantModel, lag: usize) -> Matrix {
    observability_matrix(&model.a, &model.c, lag)
}

pub fn build_controllability(model: &PlantModel, lag: usize) -> Matrix {
    controllability_matrix(&model.a, &model.b, lag)
}

pub fn build_toeplitz(model: &PlantModel, lag: usize) -> Matrix {
    toeplitz_matrix(&model.a, &model.b, &model.c, lag)
}

/// Model-side non-minimal realization on the stacked input-output window.
#[derive(Debug, Clone)]
pub struct OracleRealization {
    pub lag: usize,
    pub obs: Matrix,
    pub ctrb: Matrix,
    pub toeplitz: Matrix,
    pub s_row: Matrix,
    pub a_xi: Matrix,
    pub b_xi: Matrix,
}

impl OracleRealization {
    /// Basis of the windows consistent with the plant: `ξ = [u; 𝒪 x + 𝒯 u]`.
    pub fn consistent_basis(&self) -> Matrix {
        let (pl, ml) = self.toeplitz.shape();
        let n = self.obs.ncols();
        let mut g = Matrix::zeros(ml + pl, ml + n);
        g.view_mut((0, 0), (ml, ml)).fill_with_identity();
        g.view_mut((ml, 0), (pl, ml)).copy_from(&self.toeplitz);
        g.view_mut((ml, ml), (pl, n)).copy_from(&self.obs);
        g
    }

    /// Exact reduced dynamics `(A_z, B_z)` for the state `z = T ξ`, where `T`
    /// must be injective on the consistent-window subspace.
    pub fn reduced_dynamics(&self, t_matrix: &Matrix) -> Result<(Matrix, Matrix), PlantError> {
        let g = self.consistent_basis();
        let tg = t_matrix * &g;
        if !tg.is_square() {
            return Err(PlantError::Dimension(format!(
                "reduction has {} rows but the consistent subspace has dimension {}",
                tg.nrows(),
                tg.ncols()
            )));
        }
        let tg_inv = tg.try_inverse().ok_or(PlantError::LagTooSmall { lag: self.lag })?;
        let a_z = t_matrix * &self.a_xi * &g * tg_inv;
        let b_z = t_matrix * &self.b_xi;
        Ok((a_z, b_z))
    }
}

pub fn build_nonminimal_oracle(model: &PlantModel, lag: usize) -> Result<OracleRealization, PlantError> {
    nonminimal_realization(&model.a, &model.b, &model.c, lag)
}

pub fn nonminimal_realization(a: &Matrix, b: &Matrix, c: &Matrix, lag: usize) -> Result<OracleRealization, PlantError> {
    let (n, m, p) = (a.nrows(), b.ncols(), c.nrows());
    if lag == 0 {
        return Err(PlantError::LagTooSmall { lag });
    }
    let obs = observability_matrix(a, c, lag);
    if numerical_rank(&obs, RANK_TOL) < n {
        return Err(PlantError::LagTooSmall { lag });
    }
    let ctrb = controllability_matrix(a, b, lag);
    let toeplitz = toeplitz_matrix(a, b, c, lag);
    let a_l = matrix_power(a, lag);
    let obs_pinv = pseudoinverse(&obs);
    let left = c * (&ctrb - &a_l * &obs_pinv * &toeplitz);
    let right = c * &a_l * &obs_pinv;
    let s_row = hstack(&[&left, &right]);

    let ml = m * lag;
    let dim = (m + p) * lag;
    let mut a_xi = Matrix::zeros(dim, dim);
    for i in 1..lag {
        a_xi.view_mut((i * m, (i - 1) * m), (m, m)).fill_with_identity();
        a_xi.view_mut((ml + i * p, ml + (i - 1) * p), (p, p)).fill_with_identity();
    }
    a_xi.view_mut((ml, 0), (p, dim)).copy_from(&s_row);
    let mut b_xi = Matrix::zeros(dim, m);
    b_xi.view_mut((0, 0), (m, m)).fill_with_identity();

    Ok(OracleRealization {
        lag,
        obs,
        ctrb,
        toeplitz,
        s_row,
        a_xi,
        b_xi,
    })
}

const RICCATI_MAX_ITERS: usize = 100_000;
const RICCATI_TOL: f64 = 1e-12;

/// Optimal LQR gain (convention `u = K z`) by Riccati fixed-point iteration.
pub fn model_lqr_gain(a_z: &Matrix, b_z: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix, PlantError> {
    let n = a_z.nrows();
    let m = b_z.ncols();
    if !a_z.is_square() || b_z.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(PlantError::Dimension(format!(
            "A {:?}, B {:?}, Q {:?}, R {:?}",
            a_z.shape(),
            b_z.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let at = a_z.transpose();
    let bt = b_z.transpose();
    let mut p = q.clone();
    for _ in 0..RICCATI_MAX_ITERS {
        let btp = &bt * &p;
        let gram = r + &btp * b_z;
        let gain_rhs = &btp * a_z;
        let k = gram.clone().cholesky().ok_or(PlantError::Unstabilizable)?.solve(&gain_rhs);
        let next = q + &at * &p * a_z - gain_rhs.transpose() * &k;
        let next = (&next + next.transpose()) * 0.5;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::Unstabilizable);
        }
        let delta = (&next - &p).norm();
        p = next;
        if delta <= RICCATI_TOL * p.norm().max(1.0) {
            let gram = r + &bt * &p * b_z;
            let k = -gram.cholesky().ok_or(PlantError::Unstabilizable)?.solve(&(&bt * &p * a_z));
            if spectral_radius(&(a_z + b_z * &k)) >= 1.0 {
                return Err(PlantError::Unstabilizable);
            }
            return Ok(k);
        }
    }
    Err(PlantError::NoConvergence(RICCATI_MAX_ITERS))
}

/// LQR cost `Tr((Q + KᵀRK) Σ_K)` with `Σ_K = I + (A+BK) Σ_K (A+BK)ᵀ`; `None` if unstable.
pub fn model_lqr_cost(a_z: &Matrix, b_z: &Matrix, k: &Matrix, q: &Matrix, r: &Matrix) -> Option<f64> {
    let a_cl = a_z + b_z * k;
    let n = a_z.nrows();
    let sigma = solve_dlyap(&a_cl, &Matrix::identity(n, n)).ok()?;
    Some(((q + k.transpose() * r * k) * sigma).trace())
}

/// Sampling rate the surrogate is discretized for.
pub const SURROGATE_SAMPLING_HZ: f64 = 200.0;

/// Step at which the surrogate's grid event happens (1 s at 200 Hz).
pub const SURROGATE_SWITCH_STEP: usize = 200;

fn modal_block(freq_hz: f64, damping: f64, fs: f64) -> [f64; 4] {
    let wn = 2.0 * std::f64::consts::PI * freq_hz;
    let sigma = damping * wn;
    let wd = wn * (1.0 - damping * damping).sqrt();
    let radius = (-sigma / fs).exp();
    let theta = wd / fs;
    [
        radius * theta.cos(),
        -radius * theta.sin(),
        radius * theta.sin(),
        radius * theta.cos(),
    ]
}

fn surrogate_a(osc_hz: f64, osc_damping: f64) -> Matrix {
    let fs = SURROGATE_SAMPLING_HZ;
    let osc = modal_block(osc_hz, osc_damping, fs);
    let slow = modal_block(3.0, 0.5, fs);
    let mut a = Matrix::zeros(4, 4);
    a.view_mut((0, 0), (2, 2)).copy_from_slice(&[osc[0], osc[2], osc[1], osc[3]]);
    a.view_mut((2, 2), (2, 2)).copy_from_slice(&[slow[0], slow[2], slow[1], slow[3]]);
    a
}

fn surrogate_b() -> Matrix {
    Matrix::from_row_slice(4, 2, &[0.30, 0.10, -0.05, 0.25, 0.15, -0.10, 0.05, 0.20])
}

fn surrogate_c() -> Matrix {
    Matrix::from_row_slice(2, 4, &[1.0, 0.3, 0.4, 0.1, 0.2, 0.9, -0.2, 0.5])
}

/// Post-switch dynamics: a 10 Hz mode with damping ratio 0.002.
pub fn surrogate_weak_grid_a() -> Matrix {
    surrogate_a(10.0, 0.002)
}

/// Nominal dynamics: the same mode at 12 Hz, damping ratio 0.3.
pub fn surrogate_nominal_a() -> Matrix {
    surrogate_a(12.0, 0.3)
}

/// Synthetic 4-state, 2-input, 2-output stand-in for a grid-following
/// converter. The nominal mode is well damped; the scheduled event at
/// 1 s switches to a lightly damped 10 Hz mode and kicks the state.
pub fn make_surrogate_converter(
    process_noise_std: f64,
    measurement_noise_std: f64,
    seed: u64,
) -> (PlantModel, SwitchSchedule) {
    let model = PlantModel::new(
        surrogate_nominal_a(),
        surrogate_b(),
        surrogate_c(),
        process_noise_std,
        measurement_noise_std,
        seed,
    )
    .expect("surrogate is controllable and observable");
    let event = SwitchEvent {
        time_step: SURROGATE_SWITCH_STEP,
        a: surrogate_weak_grid_a(),
        b: surrogate_b(),
        c: surrogate_c(),
        kick: Some(vec![0.5, 0.0, 0.0, 0.0]),
    };
    (model, SwitchSchedule { events: vec![event] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn random_system(seed: u64, n: usize, m: usize, p: usize) -> PlantModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a = &a * (0.9 / spectral_radius(&a).max(1e-3));
            let b = Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let c = Matrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
            if let Ok(model) = PlantModel::new(a, b, c, 0.0, 0.0, seed) {
                return model;
            }
        }
    }

    #[test]
    fn zero_state_response() {
        let mut plant = PlantModel::new(Matrix::zeros(2, 2), Matrix::identity(2, 2), Matrix::identity(2, 2), 0.0, 0.0, 0).unwrap();
        let y = plant.step(&Vector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(y, Vector::zeros(2));
        assert_eq!(plant.state(), &Vector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn geometric_decay() {
        let mut plant = PlantModel::new(scalar(0.5), scalar(1.0), scalar(1.0), 0.0, 0.0, 0)
            .unwrap()
            .with_state(Vector::from_element(1, 1.0))
            .unwrap();
        let ys: Vec<f64> = (0..4).map(|_| plant.step(&Vector::zeros(1)).unwrap()[0]).collect();
        assert_eq!(ys, vec![1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let base = random_system(4, 3, 1, 1);
        let run = || {
            let mut p = base.clone();
            p.process_noise_std = 0.1;
            p.measurement_noise_std = 0.05;
            (0..50)
                .map(|k| p.step(&Vector::from_element(1, (k as f64).sin())).unwrap()[0])
                .collect::<Vec<_>>()
        };
        let first = run();
        let second = run();
        assert!(first.iter().zip(&second).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn nonfinite_input_rejected() {
        let mut plant = random_system(1, 2, 1, 1);
        assert!(matches!(
            plant.step(&Vector::from_element(1, f64::NAN)),
            Err(PlantError::NonFinite { .. })
        ));
    }

    #[test]
    fn uncontrollable_rejected() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.3]));
        let b = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let c = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(matches!(PlantModel::new(a, b, c, 0.0, 0.0, 0), Err(PlantError::NotControllable { .. })));
    }

    #[test]
    fn block_matrices_scalar_example() {
        let model = PlantModel::new(scalar(0.5), scalar(1.0), scalar(1.0), 0.0, 0.0, 0).unwrap();
        assert_eq!(build_observability(&model, 2), Matrix::from_column_slice(2, 1, &[0.5, 1.0]));
        assert_eq!(build_controllability(&model, 2), Matrix::from_row_slice(1, 2, &[1.0, 0.5]));
        assert_eq!(build_toeplitz(&model, 2), Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn identity_output_lag_one() {
        let model = random_system(9, 3, 2, 3);
        let mut model = model;
        model.set_dynamics(model.a().clone(), model.b().clone(), Matrix::identity(3, 3)).unwrap();
        assert_eq!(build_observability(&model, 1), Matrix::identity(3, 3));
        assert_eq!(build_toeplitz(&model, 1), Matrix::zeros(3, 2));
        let oracle = build_nonminimal_oracle(&model, 1).unwrap();
        let expected = hstack(&[model.b(), model.a()]);
        assert!((&oracle.s_row - expected).norm() < 1e-12);
    }

    #[test]
    fn stacked_output_identity_holds() {
        // y-stack = 𝒪 x_{t-l} + 𝒯 u-stack on a noiseless run
        let mut model = random_system(21, 3, 2, 2);
        let lag = 3;
        let obs = build_observability(&model, lag);
        let toep = build_toeplitz(&model, lag);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        model.set_state(Vector::from_vec(vec![0.3, -0.2, 0.8])).unwrap();
        let mut xs = Vec::new();
        let mut us = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..20 {
            xs.push(model.state().clone());
            let u = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            ys.push(model.step(&u).unwrap());
            us.push(u);
        }
        for t in lag..20 {
            let ustack = Vector::from_iterator(2 * lag, (1..=lag).flat_map(|k| us[t - k].iter().copied()));
            let ystack = Vector::from_iterator(2 * lag, (1..=lag).flat_map(|k| ys[t - k].iter().copied()));
            let pred = &obs * &xs[t - lag] + &toep * ustack;
            assert!((pred - ystack).amax() < 1e-10);
        }
    }

    fn simulate_side_by_side(model: &PlantModel, lag: usize, steps: usize, seed: u64) -> f64 {
        let oracle = build_nonminimal_oracle(model, lag).unwrap();
        let (m, p) = (model.m(), model.p());
        let mut plant = model.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        plant.set_state(Vector::from_fn(model.n(), |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let mut us = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..lag {
            let u = Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            ys.push(plant.step(&u).unwrap());
            us.push(u);
        }
        let mut xi = Vector::zeros((m + p) * lag);
        for k in 1..=lag {
            xi.rows_mut((k - 1) * m, m).copy_from(&us[lag - k]);
            xi.rows_mut(m * lag + (k - 1) * p, p).copy_from(&ys[lag - k]);
        }
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            let u = Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let y_plant = plant.step(&u).unwrap();
            let y_real = &oracle.s_row * &xi;
            worst = worst.max((y_plant - y_real).amax());
            xi = &oracle.a_xi * &xi + &oracle.b_xi * &u;
        }
        worst
    }

    #[test]
    fn scalar_nonminimal_realization() {
        let model = PlantModel::new(scalar(0.5), scalar(1.0), scalar(1.0), 0.0, 0.0, 0).unwrap();
        let oracle = build_nonminimal_oracle(&model, 1).unwrap();
        assert!((&oracle.s_row - Matrix::from_row_slice(1, 2, &[1.0, 0.5])).norm() < 1e-14);
        assert!(simulate_side_by_side(&model, 1, 30, 1) < 1e-12);
    }

    #[test]
    fn mimo_nonminimal_realization_matches_plant() {
        let model = random_system(77, 4, 2, 2);
        assert!(simulate_side_by_side(&model, 4, 50, 3) <= 1e-9);
    }

    #[test]
    fn lag_too_small_detected() {
        let model = random_system(12, 4, 1, 1);
        assert!(matches!(build_nonminimal_oracle(&model, 2), Err(PlantError::LagTooSmall { .. })));
    }

    #[test]
    fn lqr_deadbeat_and_scalar() {
        let k = model_lqr_gain(&Matrix::zeros(2, 2), &Matrix::identity(2, 2), &Matrix::identity(2, 2), &Matrix::identity(2, 2)).unwrap();
        assert!(k.norm() < 1e-14);

        // P solves P² − 0.25 P − 1 = 0
        let p_star = (0.25 + (0.0625_f64 + 4.0).sqrt()) / 2.0;
        let k_star = -0.5 * p_star / (1.0 + p_star);
        let k = model_lqr_gain(&scalar(0.5), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!((k[(0, 0)] - k_star).abs() < 1e-10);
        assert!((p_star - 1.13278).abs() < 1e-5 && (k_star + 0.26556).abs() < 1e-5);
        let j = model_lqr_cost(&scalar(0.5), &scalar(1.0), &k, &scalar(1.0), &scalar(1.0)).unwrap();
        assert!((j - p_star).abs() < 1e-9);
    }

    #[test]
    fn lqr_locally_optimal() {
        let model = random_system(42, 3, 2, 1);
        let (a, b) = (model.a().clone(), model.b().clone());
        let q = Matrix::identity(3, 3);
        let r = Matrix::identity(2, 2);
        let k = model_lqr_gain(&a, &b, &q, &r).unwrap();
        let j = model_lqr_cost(&a, &b, &k, &q, &r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let dk = Matrix::from_fn(2, 3, |_, _| rng.random_range(-1e-3..1e-3));
            let jp = model_lqr_cost(&a, &b, &(&k + dk), &q, &r).unwrap();
            assert!(j <= jp + 1e-12);
        }
    }

    fn eigenvalues(a: &Matrix) -> Vec<Complex<f64>> {
        a.clone().complex_eigenvalues().iter().copied().collect()
    }

    #[test]
    fn surrogate_modes() {
        let (plant, schedule) = make_surrogate_converter(0.0, 0.0, 0);
        assert!(spectral_radius(plant.a()) < 0.97);
        let post = &schedule.events[0].a;
        let pair: Vec<_> = eigenvalues(post)
            .into_iter()
            .filter(|l| l.im.abs() > 1e-9 && l.norm() >= 0.995 && l.norm() <= 0.9999)
            .collect();
        assert_eq!(pair.len(), 2);
        let freq = pair[0].arg().abs() * SURROGATE_SAMPLING_HZ / (2.0 * std::f64::consts::PI);
        assert!((freq - 10.0).abs() < 0.1);
    }

    #[test]
    fn surrogate_post_switch_sustains_oscillation() {
        let (plant, schedule) = make_surrogate_converter(0.0, 0.0, 0);
        let event = &schedule.events[0];
        let mut plant = plant;
        plant.set_dynamics(event.a.clone(), event.b.clone(), event.c.clone()).unwrap();
        plant.set_state(Vector::from_vec(vec![0.5, 0.0, 0.0, 0.0])).unwrap();
        let ys: Vec<f64> = (0..200).map(|_| plant.step(&Vector::zeros(2)).unwrap()[0]).collect();
        let peak = |w: &[f64]| w.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let first = peak(&ys[0..20]);
        let later = peak(&ys[100..120]);
        assert!(later > 0.9 * first, "decay {first} -> {later}");
    }

    #[test]
    fn schedule_applies_switch_and_kick() {
        let (plant, schedule) = make_surrogate_converter(0.0, 0.0, 0);
        let mut sp = ScheduledPlant::new(plant, schedule).unwrap();
        for _ in 0..SURROGATE_SWITCH_STEP {
            let y = IoSystem::step(&mut sp, &Vector::zeros(2)).unwrap();
            assert_eq!(y, Vector::zeros(2));
        }
        let y = IoSystem::step(&mut sp, &Vector::zeros(2)).unwrap();
        assert!(y.norm() > 0.1);
        assert_eq!(sp.model.a(), &surrogate_weak_grid_a());
    }

    #[test]
    fn unordered_schedule_rejected() {
        let (_, schedule) = make_surrogate_converter(0.0, 0.0, 0);
        let mut events = schedule.events.clone();
        events.push(events[0].clone());
        assert!(matches!(SwitchSchedule::new(events), Err(PlantError::UnorderedSchedule)));
    }
}
