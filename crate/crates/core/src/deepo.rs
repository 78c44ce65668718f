//! Online output-feedback policy optimization.
//!
//! Offline: window the excitation data, reduce with SVD, form covariances and
//! take the certainty-equivalent LQR gain. Online, per sample: apply
//! `u = K z + e`, absorb `(u, z, z⁺)`, carry `V` forward with a rank-one
//! update, take one projected gradient step and read off the new gain.
//!
//! The engine only ever sees inputs and outputs (through [`IoSystem`]).

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lqr_core::{
    self, adaptive_stepsize_with, cost_and_gradient, nullspace_projection, parameterize, recover_gain, DataCovariances,
    LqrError, LqrWeights, Parameterization, FEASIBILITY_MARGIN,
};
use crate::numerics::{self, spectral_radius, Matrix, Vector};
use crate::plant::{IoSystem, PlantError};
use crate::realization::{self, build_xi_matrix, reduce_state, stack_window, IoHistory, IoWindow, RealizationError, ReductionMap};

/// Online constraint tolerance on `‖Z̄₀V − I‖_F`; beyond it `V` is re-anchored.
pub const ONLINE_CONSTRAINT_TOL: f64 = 1e-5;
const MAX_HALVINGS: usize = 10;

#[derive(Debug, Error)]
pub enum DeepoError {
    #[error("insufficient offline data: need {needed} windows, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("realization: {0}")]
    Realization(#[from] RealizationError),
    #[error("policy: {0}")]
    Lqr(#[from] LqrError),
    #[error("plant: {0}")]
    Plant(#[from] PlantError),
    #[error("run aborted at step {step}: {source}")]
    Aborted {
        step: usize,
        source: PlantError,
        records: Vec<StepRecord>,
    },
}

/// Optional weight matrices; missing ones default to identities of the right size.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_rows")]
    pub q: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_rows")]
    pub r: Option<Matrix>,
}

mod opt_rows {
    use crate::numerics::{nested_rows, Matrix};
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Matrix>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(nested_rows::to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Matrix>, D::Error> {
        Option::<Vec<Vec<f64>>>::deserialize(d)?
            .map(|rows| nested_rows::from_rows(&rows).map_err(D::Error::custom))
            .transpose()
    }
}

impl WeightSpec {
    pub fn resolve(&self, state_dim: usize, input_dim: usize) -> Result<LqrWeights, DeepoError> {
        let q = self.q.clone().unwrap_or_else(|| Matrix::identity(state_dim, state_dim));
        let r = self.r.clone().unwrap_or_else(|| Matrix::identity(input_dim, input_dim));
        if q.shape() != (state_dim, state_dim) || r.shape() != (input_dim, input_dim) {
            return Err(DeepoError::Config(format!(
                "weights are Q {:?}, R {:?} but the reduced state has dimension {state_dim} and {input_dim} inputs",
                q.shape(),
                r.shape()
            )));
        }
        Ok(LqrWeights::new(q, r)?)
    }
}

fn default_eta0() -> f64 {
    1e-4
}
fn default_probe_std() -> f64 {
    0.01
}
fn default_gap_ratio() -> f64 {
    1.8
}
fn default_steps() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepoConfig {
    pub lag: usize,
    #[serde(default = "default_eta0")]
    pub eta0: f64,
    /// Standard deviation of the probing noise added to the feedback input.
    #[serde(default = "default_probe_std")]
    pub probe_std: f64,
    #[serde(default)]
    pub r_override: Option<usize>,
    #[serde(default = "default_gap_ratio")]
    pub gap_ratio: f64,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default = "default_steps")]
    pub gradient_steps_per_sample: usize,
    #[serde(default)]
    pub seed: u64,
}

impl DeepoConfig {
    pub fn new(lag: usize) -> Self {
        Self {
            lag,
            eta0: default_eta0(),
            probe_std: default_probe_std(),
            r_override: None,
            gap_ratio: default_gap_ratio(),
            weights: WeightSpec::default(),
            gradient_steps_per_sample: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DeepoError> {
        if self.lag == 0 {
            return Err(DeepoError::Config("lag must be at least 1".into()));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(DeepoError::Config("eta0 must be positive".into()));
        }
        if !(self.probe_std >= 0.0 && self.probe_std.is_finite()) {
            return Err(DeepoError::Config("probe_std must be nonnegative".into()));
        }
        if !(self.gap_ratio > 1.0) {
            return Err(DeepoError::Config("gap_ratio must exceed 1".into()));
        }
        if self.gradient_steps_per_sample == 0 {
            return Err(DeepoError::Config("gradient_steps_per_sample must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    Excite,
    Deepo,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Idle => "idle",
            Mode::Excite => "excite",
            Mode::Deepo => "deepo",
        }
    }
}

/// One logged sample of the online loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub mode: Mode,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Data cost after the update; `None` when outside the feasible set or not evaluated.
    pub cost_estimate: Option<f64>,
    pub eta_used: Option<f64>,
    pub grad_norm: Option<f64>,
    /// Wall time of the update in microseconds (not part of reproducible traces).
    #[serde(skip)]
    pub update_micros: f64,
}

/// Control action at one instant: the applied input and the reduced state it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlAction {
    pub u: Vector,
    pub z: Vector,
}

/// Engine state: reduction map, covariances, gain and parameterization.
#[derive(Debug, Clone)]
pub struct DeepoState {
    config: DeepoConfig,
    map: ReductionMap,
    cov: DataCovariances,
    weights: LqrWeights,
    gain: Matrix,
    param: Parameterization,
    t: usize,
    rng: ChaCha8Rng,
    adaptive: bool,
    warnings: Vec<String>,
    records: Vec<StepRecord>,
}

/// Offline initialization with the SVD reduction.
pub fn offline_init(history: &IoHistory, config: &DeepoConfig) -> Result<DeepoState, DeepoError> {
    config.validate()?;
    let m = history.input_dim();
    let lag = config.lag;
    let windows = history.len().saturating_sub(lag);
    check_windows(history, lag, windows)?;
    let xi = build_xi_matrix(history, windows, lag)?;
    let map = realization::reduce_svd(&xi, m * lag, config.r_override, config.gap_ratio)?;
    offline_init_with_map(history, config, map)
}

fn check_windows(history: &IoHistory, lag: usize, windows: usize) -> Result<(), DeepoError> {
    let needed = 2 * (history.input_dim() + history.output_dim()) * lag;
    if windows < needed || history.input_dim() == 0 || history.output_dim() == 0 {
        return Err(DeepoError::InsufficientHistory {
            needed,
            available: windows,
        });
    }
    Ok(())
}

/// Offline initialization with a given reduction map (e.g. row selection or a replayed map).
pub fn offline_init_with_map(history: &IoHistory, config: &DeepoConfig, map: ReductionMap) -> Result<DeepoState, DeepoError> {
    config.validate()?;
    let lag = config.lag;
    let (m, p) = (history.input_dim(), history.output_dim());
    if map.window_dim() != (m + p) * lag {
        return Err(DeepoError::Config(format!(
            "reduction map expects windows of length {}, data gives {}",
            map.window_dim(),
            (m + p) * lag
        )));
    }
    let windows = history.len().saturating_sub(lag);
    check_windows(history, lag, windows)?;

    let r = map.reduced_dim;
    let mut u = Matrix::zeros(m, windows);
    let mut z0 = Matrix::zeros(r, windows);
    let mut z1 = Matrix::zeros(r, windows);
    let mut z_cur = reduce_state(&map, &stack_window(history, lag, lag)?)?;
    for j in 0..windows {
        let t = lag + j;
        let z_next = reduce_state(&map, &stack_window(history, t + 1, lag)?)?;
        u.set_column(j, &history.inputs[t]);
        z0.set_column(j, &z_cur);
        z1.set_column(j, &z_next);
        z_cur = z_next;
    }
    let cov = lqr_core::cov_init(&u, &z0, &z1)?;
    let weights = config.weights.resolve(r, m)?;
    let gain = lqr_core::initial_policy(&cov, &weights)?;
    let param = parameterize(&cov, &gain)?;

    let mut warnings = Vec::new();
    if map.no_gap {
        warnings.push(format!("no clear singular-value gap; reduced dimension set to {r}"));
    }
    if !lqr_core::is_feasible(&cov, &param) {
        warnings.push("initial policy is outside the data feasible set".into());
    }
    Ok(DeepoState {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        config: config.clone(),
        map,
        cov,
        weights,
        gain,
        param,
        t: windows,
        adaptive: true,
        warnings,
        records: Vec::new(),
    })
}

impl DeepoState {
    pub fn config(&self) -> &DeepoConfig {
        &self.config
    }
    pub fn map(&self) -> &ReductionMap {
        &self.map
    }
    pub fn covariances(&self) -> &DataCovariances {
        &self.cov
    }
    pub fn weights(&self) -> &LqrWeights {
        &self.weights
    }
    pub fn gain(&self) -> &Matrix {
        &self.gain
    }
    pub fn parameterization(&self) -> &Parameterization {
        &self.param
    }
    pub fn time(&self) -> usize {
        self.t
    }
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }
    pub fn take_records(&mut self) -> Vec<StepRecord> {
        std::mem::take(&mut self.records)
    }
    pub fn input_dim(&self) -> usize {
        self.cov.input_dim()
    }
    pub fn reduced_dim(&self) -> usize {
        self.map.reduced_dim
    }
    pub fn lag(&self) -> usize {
        self.config.lag
    }

    /// Frozen engines keep applying their gain and never learn.
    pub fn set_adaptive(&mut self, adaptive: bool) {
        self.adaptive = adaptive;
    }

    pub fn is_adaptive(&self) -> bool {
        self.adaptive
    }

    /// Replaces the gain, re-deriving `V = Φ⁻¹[K; I]`.
    pub fn set_gain(&mut self, gain: Matrix) -> Result<(), DeepoError> {
        self.param = parameterize(&self.cov, &gain)?;
        self.gain = gain;
        Ok(())
    }

    /// Explicit re-initialization from fresh data, e.g. after a detected plant change.
    pub fn reinitialize(&mut self, history: &IoHistory) -> Result<(), DeepoError> {
        let fresh = offline_init(history, &self.config)?;
        let records = std::mem::take(&mut self.records);
        let adaptive = self.adaptive;
        *self = fresh;
        self.records = records;
        self.adaptive = adaptive;
        Ok(())
    }

    /// Current data cost of the policy, `None` outside the feasible set.
    pub fn data_cost(&self) -> Option<f64> {
        lqr_core::data_cost(&self.cov, &self.param, &self.weights)
    }

    pub fn constraint_residual(&self) -> f64 {
        lqr_core::constraint_residual(&self.cov, &self.param)
    }

    /// `Φ⁻¹ [K; I]` recomputed from scratch, for checking the rank-one recursion.
    pub fn batch_parameterization(&self, gain: &Matrix) -> Result<Parameterization, DeepoError> {
        Ok(parameterize(&self.cov, gain)?)
    }

    pub fn reduce(&self, window: &IoWindow) -> Result<Vector, DeepoError> {
        Ok(reduce_state(&self.map, window)?)
    }

    fn probe(&mut self) -> Vector {
        let std = self.config.probe_std;
        let m = self.input_dim();
        if std == 0.0 {
            return Vector::zeros(m);
        }
        let rng = &mut self.rng;
        Vector::from_fn(m, |_, _| {
            let e: f64 = StandardNormal.sample(rng);
            std * e
        })
    }

    /// `u_t = K_t z_t + e_t` with `z_t = T ξ_t`.
    pub fn control_step(&mut self, window: &IoWindow) -> Result<ControlAction, DeepoError> {
        let z = self.reduce(window)?;
        let u = &self.gain * &z + self.probe();
        Ok(ControlAction { u, z })
    }

    /// Probing noise only, with the feedback switched off.
    pub fn excitation_step(&mut self, window: &IoWindow) -> Result<ControlAction, DeepoError> {
        let z = self.reduce(window)?;
        Ok(ControlAction { u: self.probe(), z })
    }

    /// Absorbs `(u_t, z_t, z_{t+1})` and performs the policy update.
    pub fn ingest_and_update(&mut self, u: &Vector, z: &Vector, z_next: &Vector) -> Result<StepRecord, DeepoError> {
        let started = Instant::now();
        let t_now = self.t;
        if !self.adaptive {
            let record = StepRecord {
                t: t_now,
                mode: Mode::Deepo,
                u: u.iter().copied().collect(),
                y: Vec::new(),
                z: z.iter().copied().collect(),
                cost_estimate: None,
                eta_used: None,
                grad_norm: None,
                update_micros: started.elapsed().as_secs_f64() * 1e6,
            };
            self.t += 1;
            self.records.push(record.clone());
            return Ok(record);
        }

        // V_{t+1} = (t+1)/t · (V' − Φ_t⁻¹φφᵀV' / (t + φᵀΦ_t⁻¹φ)), with Φ_t⁻¹ from before the update
        let phi_vec = stack(u, z);
        let t = self.cov.samples() as f64;
        let w = self.cov.phi_inv() * &phi_vec;
        let denom = t + phi_vec.dot(&w);
        let coupling = phi_vec.transpose() * &self.param.v;
        let mut v_next = &self.param.v - (&w * coupling) / denom;
        v_next *= (t + 1.0) / t;

        self.cov.update(u, z, z_next)?;
        let mut v = Parameterization { v: v_next };

        if lqr_core::constraint_residual(&self.cov, &v) > ONLINE_CONSTRAINT_TOL {
            self.warnings.push(format!("t={t_now}: parameterization drifted off the data constraint; re-anchored"));
            v = parameterize(&self.cov, &self.gain)?;
        }

        let projection = nullspace_projection(&self.cov);
        let mut eta_used = None;
        let mut grad_norm = None;
        for _ in 0..self.config.gradient_steps_per_sample {
            let grad = match cost_and_gradient(&self.cov, &v, &self.weights) {
                Ok((_, g)) => g,
                Err(LqrError::Unstable(rho)) => {
                    self.warnings.push(format!("t={t_now}: data closed loop has spectral radius {rho:.6}; gain held"));
                    break;
                }
                Err(e) => return Err(e.into()),
            };
            let direction = &projection * grad;
            grad_norm = Some(direction.norm());
            let step = adaptive_stepsize_with(&self.cov, &projection, self.config.eta0);
            if step.capped {
                self.warnings.push(format!("t={t_now}: stepsize capped, input excitation vanished"));
            }
            let mut eta = step.eta;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let cand = &v.v - &direction * eta;
                let rho = spectral_radius(&(self.cov.z1_bar() * &cand));
                if rho < 1.0 - FEASIBILITY_MARGIN {
                    accepted = Some(cand);
                    break;
                }
                eta *= 0.5;
            }
            match accepted {
                Some(cand) => {
                    v = Parameterization { v: cand };
                    eta_used = Some(eta);
                }
                None => {
                    self.warnings.push(format!("t={t_now}: no feasible step after {MAX_HALVINGS} halvings; gain held"));
                    break;
                }
            }
        }

        self.gain = recover_gain(&self.cov, &v);
        self.param = v;
        self.t += 1;
        let update_micros = started.elapsed().as_secs_f64() * 1e6;
        let record = StepRecord {
            t: t_now,
            mode: Mode::Deepo,
            u: u.iter().copied().collect(),
            y: Vec::new(),
            z: z.iter().copied().collect(),
            cost_estimate: self.data_cost(),
            eta_used,
            grad_norm,
            update_micros,
        };
        self.records.push(record.clone());
        Ok(record)
    }

    /// Runs the loop against `system`, whose recent input-output samples are in
    /// `recent` (at least `lag` of them). Steps before `activation_step` apply
    /// probing noise only; from then on the full update loop runs.
    pub fn run_online(
        &mut self,
        system: &mut dyn IoSystem,
        recent: &mut IoHistory,
        steps: usize,
        activation_step: usize,
    ) -> Result<Vec<StepRecord>, DeepoError> {
        let lag = self.lag();
        if system.input_dim() != self.input_dim() || recent.input_dim() != self.input_dim() {
            return Err(DeepoError::Config("system input dimension differs from the engine".into()));
        }
        if (system.input_dim() + system.output_dim()) * lag != self.map.window_dim() {
            return Err(DeepoError::Config("system dimensions do not match the reduction map".into()));
        }
        if recent.len() < lag {
            return Err(DeepoError::InsufficientHistory {
                needed: lag,
                available: recent.len(),
            });
        }
        let mut trace = Vec::with_capacity(steps);
        for k in 0..steps {
            recent.truncate_front(lag);
            let window = stack_window(recent, recent.len(), lag)?;
            let active = k >= activation_step;
            let action = if active {
                self.control_step(&window)?
            } else {
                self.excitation_step(&window)?
            };
            let y = match system.step(&action.u) {
                Ok(y) => y,
                Err(source) => {
                    return Err(DeepoError::Aborted {
                        step: k,
                        source,
                        records: trace,
                    })
                }
            };
            recent.push(action.u.clone(), y.clone());
            let mut record = if active {
                let z_next = self.reduce(&stack_window(recent, recent.len(), lag)?)?;
                self.ingest_and_update(&action.u, &action.z, &z_next)?
            } else {
                let rec = StepRecord {
                    t: self.t,
                    mode: Mode::Excite,
                    u: action.u.iter().copied().collect(),
                    y: Vec::new(),
                    z: action.z.iter().copied().collect(),
                    cost_estimate: None,
                    eta_used: None,
                    grad_norm: None,
                    update_micros: 0.0,
                };
                self.records.push(rec.clone());
                rec
            };
            record.y = y.iter().copied().collect();
            if let Some(last) = self.records.last_mut() {
                last.y = record.y.clone();
            }
            trace.push(record);
        }
        Ok(trace)
    }

    pub fn snapshot(&self) -> DeepoSnapshot {
        DeepoSnapshot {
            config: self.config.clone(),
            map: self.map.clone(),
            phi: self.cov.phi().clone(),
            phi_inv: self.cov.phi_inv().clone(),
            z1_bar: self.cov.z1_bar().clone(),
            samples: self.cov.samples(),
            input_dim: self.cov.input_dim(),
            gain: self.gain.clone(),
            v: self.param.v.clone(),
            t: self.t,
            rng_seed: self.rng.get_seed(),
            rng_word_pos: self.rng.get_word_pos(),
            adaptive: self.adaptive,
            warnings: self.warnings.clone(),
        }
    }

    pub fn from_snapshot(s: DeepoSnapshot) -> Result<Self, DeepoError> {
        s.config.validate()?;
        let cov = DataCovariances::restore(s.phi, s.phi_inv, s.z1_bar, s.samples, s.input_dim)?;
        let weights = s.config.weights.resolve(cov.state_dim(), cov.input_dim())?;
        if s.gain.shape() != (cov.input_dim(), cov.state_dim()) || s.v.shape() != (cov.phi().nrows(), cov.state_dim()) {
            return Err(DeepoError::Config("snapshot gain or parameterization has the wrong shape".into()));
        }
        let mut rng = ChaCha8Rng::from_seed(s.rng_seed);
        rng.set_word_pos(s.rng_word_pos);
        Ok(Self {
            config: s.config,
            map: s.map,
            cov,
            weights,
            gain: s.gain,
            param: Parameterization { v: s.v },
            t: s.t,
            rng,
            adaptive: s.adaptive,
            warnings: s.warnings,
            records: Vec::new(),
        })
    }
}

fn stack(u: &Vector, z: &Vector) -> Vector {
    let mut out = Vector::zeros(u.len() + z.len());
    out.rows_mut(0, u.len()).copy_from(u);
    out.rows_mut(u.len(), z.len()).copy_from(z);
    out
}

/// JSON checkpoint of an engine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeepoSnapshot {
    pub config: DeepoConfig,
    pub map: ReductionMap,
    #[serde(with = "numerics::nested_rows")]
    pub phi: Matrix,
    #[serde(with = "numerics::nested_rows")]
    pub phi_inv: Matrix,
    #[serde(with = "numerics::nested_rows")]
    pub z1_bar: Matrix,
    pub samples: usize,
    pub input_dim: usize,
    #[serde(with = "numerics::nested_rows")]
    pub gain: Matrix,
    #[serde(with = "numerics::nested_rows")]
    pub v: Matrix,
    pub t: usize,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub adaptive: bool,
    pub warnings: Vec<String>,
}

impl DeepoSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Adapts a closure into an [`IoSystem`]; the engine cannot tell what is behind it.
pub struct FnSystem<F> {
    m: usize,
    p: usize,
    f: F,
}

impl<F: FnMut(&Vector) -> Vector> FnSystem<F> {
    pub fn new(m: usize, p: usize, f: F) -> Self {
        Self { m, p, f }
    }
}

impl<F: FnMut(&Vector) -> Vector> IoSystem for FnSystem<F> {
    fn input_dim(&self) -> usize {
        self.m
    }
    fn output_dim(&self) -> usize {
        self.p
    }
    fn step(&mut self, u: &Vector) -> Result<Vector, PlantError> {
        let y = (self.f)(u);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::NonFinite { step: 0 });
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{build_nonminimal_oracle, model_lqr_gain, PlantModel, UniformExcitation};
    use rand::Rng;

    fn random_plant(seed: u64, n: usize, m: usize, p: usize, process: f64, measurement: f64) -> PlantModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a = &a * (0.85 / spectral_radius(&a).max(1e-3));
            let b = Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let c = Matrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
            if let Ok(pm) = PlantModel::new(a, b, c, process, measurement, seed) {
                return pm;
            }
        }
    }

    fn excite(plant: &mut PlantModel, len: usize, amp: f64, seed: u64) -> IoHistory {
        let mut ex = UniformExcitation::new(amp, seed);
        let mut h = IoHistory::default();
        for _ in 0..len {
            let u = ex.sample(plant.m());
            let y = plant.step(&u).unwrap();
            h.push(u, y);
        }
        h
    }

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_pipeline_recovers_model_gain() {
        let mut plant = PlantModel::new(scalar(0.5), scalar(1.0), scalar(1.0), 0.0, 0.0, 0).unwrap();
        let h = excite(&mut plant, 60, 1.0, 1);
        let cfg = DeepoConfig::new(1);
        let state = offline_init(&h, &cfg).unwrap();
        assert_eq!(state.reduced_dim(), 2);
        let oracle = build_nonminimal_oracle(&plant, 1).unwrap();
        let (a_z, b_z) = oracle.reduced_dynamics(&state.map().t_matrix).unwrap();
        let k_star = model_lqr_gain(&a_z, &b_z, &Matrix::identity(2, 2), &scalar(1.0)).unwrap();
        assert!((state.gain() - k_star).amax() < 1e-4);
    }

    #[test]
    fn identical_history_gives_identical_state() {
        let mut plant = random_plant(3, 2, 1, 1, 0.01, 0.01);
        let h = excite(&mut plant, 80, 0.5, 2);
        let cfg = DeepoConfig::new(2);
        let a = offline_init(&h, &cfg).unwrap();
        let b = offline_init(&h, &cfg).unwrap();
        assert_eq!(a.gain(), b.gain());
        assert_eq!(a.map(), b.map());
        assert_eq!(a.covariances(), b.covariances());
    }

    #[test]
    fn short_history_rejected() {
        let mut plant = random_plant(3, 2, 1, 1, 0.0, 0.0);
        let h = excite(&mut plant, 8, 0.5, 2);
        assert!(matches!(
            offline_init(&h, &DeepoConfig::new(2)),
            Err(DeepoError::InsufficientHistory { .. })
        ));
    }

    fn initialized(seed: u64, probe: f64) -> (DeepoState, PlantModel, IoHistory) {
        let mut plant = random_plant(seed, 3, 2, 2, 1e-3, 0.0);
        let h = excite(&mut plant, 120, 0.5, seed);
        let mut cfg = DeepoConfig::new(2);
        cfg.probe_std = probe;
        cfg.seed = seed;
        cfg.eta0 = 1e-3;
        let state = offline_init(&h, &cfg).unwrap();
        (state, plant, h)
    }

    #[test]
    fn control_step_examples() {
        let (mut state, _, h) = initialized(4, 0.0);
        let zero = IoWindow { xi: Vector::zeros(state.map().window_dim()) };
        assert_eq!(state.control_step(&zero).unwrap().u, Vector::zeros(2));
        let w = stack_window(&h, h.len(), 2).unwrap();
        let act = state.control_step(&w).unwrap();
        assert_eq!(act.u, state.gain() * &act.z);
    }

    #[test]
    fn probe_sequence_is_seeded() {
        let (state, _, h) = initialized(5, 0.1);
        let w = stack_window(&h, h.len(), 2).unwrap();
        let draw = |mut s: DeepoState| (0..5).map(|_| s.control_step(&w).unwrap().u).collect::<Vec<_>>();
        assert_eq!(draw(state.clone()), draw(state));
    }

    #[test]
    fn rank_one_recursion_matches_batch() {
        let (mut state, mut plant, h) = initialized(6, 0.05);
        let mut recent = h.clone();
        recent.truncate_front(2);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let w = stack_window(&recent, recent.len(), 2).unwrap();
            let act = state.control_step(&w).unwrap();
            let y = plant.step(&act.u).unwrap();
            recent.push(act.u.clone(), y);
            recent.truncate_front(2);
            let z_next = state.reduce(&stack_window(&recent, recent.len(), 2).unwrap()).unwrap();

            // prediction of V_{t+1} from the batch formula with K_t
            let gain_before = state.gain().clone();
            let mut cov_next = state.covariances().clone();
            cov_next.update(&act.u, &act.z, &z_next).unwrap();
            let batch = lqr_core::parameterize(&cov_next, &gain_before).unwrap();

            let t = state.covariances().samples() as f64;
            let phi_vec = stack(&act.u, &act.z);
            let wv = state.covariances().phi_inv() * &phi_vec;
            let coupling = phi_vec.transpose() * &state.parameterization().v;
            let recursive = (&state.parameterization().v - (&wv * coupling) / (t + phi_vec.dot(&wv))) * ((t + 1.0) / t);
            worst = worst.max((&recursive - &batch.v).amax());

            state.ingest_and_update(&act.u, &act.z, &z_next).unwrap();
            assert!(state.constraint_residual() <= 1e-6);
        }
        assert!(worst <= 1e-9, "worst recursion mismatch {worst:e}");
    }

    #[test]
    fn optimal_gain_is_a_fixed_point() {
        let mut plant = random_plant(7, 3, 1, 2, 0.0, 0.0);
        let h = excite(&mut plant, 150, 0.5, 7);
        let mut cfg = DeepoConfig::new(2);
        cfg.probe_std = 0.0;
        cfg.eta0 = 1e-3;
        let mut state = offline_init(&h, &cfg).unwrap();
        let k0 = state.gain().clone();
        let mut recent = h.clone();
        state.run_online(&mut plant, &mut recent, 100, 0).unwrap();
        assert!((state.gain() - k0).amax() <= 1e-6);
    }

    #[test]
    fn engine_runs_against_opaque_callback() {
        let plant = random_plant(8, 2, 1, 1, 1e-3, 1e-3);
        let mut inner = plant.clone();
        let mut warm = plant.clone();
        let h = excite(&mut warm, 100, 0.5, 8);
        let mut cfg = DeepoConfig::new(2);
        cfg.eta0 = 1e-3;
        let mut state = offline_init(&h, &cfg).unwrap();
        let mut sys = FnSystem::new(1, 1, move |u: &Vector| inner.step(u).unwrap());
        let mut recent = h.clone();
        let trace = state.run_online(&mut sys, &mut recent, 200, 20).unwrap();
        assert_eq!(trace.len(), 200);
        assert!(trace[..20].iter().all(|r| r.mode == Mode::Excite));
        assert!(trace[20..].iter().all(|r| r.mode == Mode::Deepo));
        assert!(state.constraint_residual() <= ONLINE_CONSTRAINT_TOL);
    }

    #[test]
    fn nonfinite_output_aborts_with_trace() {
        let plant = random_plant(9, 2, 1, 1, 0.0, 0.0);
        let mut warm = plant.clone();
        let h = excite(&mut warm, 100, 0.5, 9);
        let mut state = offline_init(&h, &DeepoConfig::new(2)).unwrap();
        let mut count = 0;
        let mut sys = FnSystem::new(1, 1, move |_: &Vector| {
            count += 1;
            Vector::from_element(1, if count > 5 { f64::NAN } else { 0.0 })
        });
        let mut recent = h.clone();
        match state.run_online(&mut sys, &mut recent, 10, 0) {
            Err(DeepoError::Aborted { step, records, .. }) => {
                assert_eq!(step, 5);
                assert_eq!(records.len(), 5);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn snapshot_round_trip_replays_identically() {
        let (mut state, plant, h) = initialized(10, 0.05);
        let json = state.snapshot().to_json();
        let mut restored = DeepoState::from_snapshot(DeepoSnapshot::from_json(&json).unwrap()).unwrap();
        let mut p1 = plant.clone();
        let mut p2 = plant;
        let mut r1 = h.clone();
        let mut r2 = h;
        let untimed = |mut rs: Vec<StepRecord>| {
            rs.iter_mut().for_each(|r| r.update_micros = 0.0);
            rs
        };
        let a = untimed(state.run_online(&mut p1, &mut r1, 50, 0).unwrap());
        let b = untimed(restored.run_online(&mut p2, &mut r2, 50, 0).unwrap());
        assert_eq!(a, b);
        assert_eq!(state.gain(), restored.gain());
    }

    #[test]
    fn frozen_engine_never_changes_gain() {
        let (mut state, mut plant, h) = initialized(11, 0.05);
        state.set_adaptive(false);
        let k0 = state.gain().clone();
        let mut recent = h;
        state.run_online(&mut plant, &mut recent, 100, 0).unwrap();
        assert_eq!(state.gain(), &k0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = DeepoConfig::new(0);
        assert!(cfg.validate().is_err());
        cfg.lag = 2;
        cfg.gradient_steps_per_sample = 0;
        assert!(cfg.validate().is_err());
        let parsed: DeepoConfig = serde_json::from_str(r#"{"lag": 3, "probe_std": 0.02}"#).unwrap();
        assert_eq!(parsed.lag, 3);
        assert_eq!(parsed.eta0, 1e-4);
        assert_eq!(parsed.gap_ratio, 1.8);
    }
}
