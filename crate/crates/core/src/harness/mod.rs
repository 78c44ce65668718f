//! Scenario runner: JSON configs in, CSV traces and JSON summaries out.
//!
//! A run walks a fixed timeline. The plant idles, may switch or be kicked,
//! is excited with uniform noise over `[excitation.start, excitation.end)`,
//! and from `activation_step` on the engine is initialized from that window
//! and closes the loop.

pub mod acceptance;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deepo::{offline_init, DeepoConfig, DeepoError, DeepoState, Mode};
use crate::numerics::{nested_rows, Matrix, Vector};
use crate::plant::{
    make_surrogate_converter, IoSystem, PlantError, PlantModel, ScheduledPlant, SwitchEvent, SwitchSchedule,
    UniformExcitation, SURROGATE_SAMPLING_HZ,
};
use crate::realization::{stack_window, IoHistory, RealizationError};

pub const SCHEMA_VERSION: u32 = 1;
pub const SURROGATE_NAME: &str = "surrogate_converter";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },
    #[error("could not parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("plant: {0}")]
    Plant(#[from] PlantError),
    #[error("engine at step {step}: {source}")]
    Engine { step: usize, source: DeepoError },
    #[error("plant at step {step}: {source}")]
    Simulation { step: usize, source: PlantError },
}

fn invalid(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::ConfigInvalid {
        field: field.into(),
        message: message.into(),
    }
}

fn engine_err(step: usize) -> impl Fn(DeepoError) -> HarnessError {
    move |source| HarnessError::Engine { step, source }
}

fn realization_err(step: usize) -> impl Fn(RealizationError) -> HarnessError {
    move |e| HarnessError::Engine {
        step,
        source: e.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantSpec {
    Named(String),
    Matrices {
        #[serde(with = "nested_rows")]
        a: Matrix,
        #[serde(with = "nested_rows")]
        b: Matrix,
        #[serde(with = "nested_rows")]
        c: Matrix,
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub process_std: f64,
    #[serde(default)]
    pub measurement_std: f64,
}

fn default_amplitude() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationSpec {
    pub start: usize,
    pub end: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

/// Impulsive state disturbance without a change of dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub time_step: usize,
    pub kick: Vec<f64>,
}

/// Step windows `[start, end)` the summary metrics are taken over.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default)]
    pub pre_window: Option<[usize; 2]>,
    #[serde(default)]
    pub post_window: Option<[usize; 2]>,
    #[serde(default)]
    pub envelope_window: Option<[usize; 2]>,
    #[serde(default)]
    pub disturbance_window: Option<[usize; 2]>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub stem: Option<String>,
    #[serde(default = "default_true")]
    pub csv: bool,
    #[serde(default = "default_true")]
    pub json: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            stem: None,
            csv: true,
            json: true,
        }
    }
}

fn default_sampling() -> f64 {
    SURROGATE_SAMPLING_HZ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub plant: PlantSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_sampling")]
    pub sampling_hz: f64,
    /// Dynamics changes. `None` keeps the plant's built-in schedule.
    #[serde(default)]
    pub switches: Option<Vec<SwitchEvent>>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    pub excitation: ExcitationSpec,
    pub activation_step: Option<usize>,
    /// Number of excitation samples the engine is initialized from.
    pub trajectory_length: usize,
    /// Total number of simulated steps.
    pub horizon: usize,
    pub deepo: DeepoConfig,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn samples_per(&self, seconds: f64) -> usize {
        (seconds * self.sampling_hz).round() as usize
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema != SCHEMA_VERSION {
            return Err(invalid("schema", format!("expected {SCHEMA_VERSION}, found {}", self.schema)));
        }
        if let PlantSpec::Named(name) = &self.plant {
            if name != SURROGATE_NAME {
                return Err(invalid("plant", format!("unknown plant `{name}`")));
            }
        }
        if !(self.sampling_hz > 0.0 && self.sampling_hz.is_finite()) {
            return Err(invalid("sampling_hz", "must be positive"));
        }
        if self.noise.process_std < 0.0 || self.noise.measurement_std < 0.0 {
            return Err(invalid("noise", "standard deviations must be nonnegative"));
        }
        let ex = &self.excitation;
        if ex.start >= ex.end {
            return Err(invalid("excitation", "start must precede end"));
        }
        if !(ex.amplitude > 0.0 && ex.amplitude.is_finite()) {
            return Err(invalid("excitation.amplitude", "must be positive"));
        }
        if ex.end > self.horizon {
            return Err(invalid("excitation.end", "exceeds horizon"));
        }
        if self.trajectory_length != ex.end - ex.start {
            return Err(invalid(
                "trajectory_length",
                format!("must equal the excitation window length {}", ex.end - ex.start),
            ));
        }
        if ex.start < self.deepo.lag {
            return Err(invalid("excitation.start", "must leave at least `lag` samples before it"));
        }
        if let Some(act) = self.activation_step {
            if act < ex.end {
                return Err(invalid("activation_step", "must not precede the end of the excitation window"));
            }
            if act >= self.horizon {
                return Err(invalid("activation_step", "must lie within the horizon"));
            }
        }
        self.deepo.validate().map_err(|e| invalid("deepo", e.to_string()))?;
        if let Some(sw) = &self.switches {
            if sw.iter().any(|e| e.time_step >= self.horizon) {
                return Err(invalid("switches", "event beyond horizon"));
            }
            SwitchSchedule { events: sw.clone() }
                .validate()
                .map_err(|e| invalid("switches", e.to_string()))?;
        }
        if self.disturbances.iter().any(|d| d.time_step >= self.horizon) {
            return Err(invalid("disturbances", "event beyond horizon"));
        }
        for (name, w) in [
            ("metrics.pre_window", self.metrics.pre_window),
            ("metrics.post_window", self.metrics.post_window),
            ("metrics.envelope_window", self.metrics.envelope_window),
            ("metrics.disturbance_window", self.metrics.disturbance_window),
        ] {
            if let Some([a, b]) = w {
                if a >= b || b > self.horizon {
                    return Err(invalid(name, "window must be non-empty and inside the horizon"));
                }
            }
        }
        Ok(())
    }

    /// Plant with its complete schedule, seeded from `rng_seed`.
    pub fn build_plant(&self) -> Result<ScheduledPlant, HarnessError> {
        let seed = self.rng_seed;
        let (model, builtin) = match &self.plant {
            PlantSpec::Named(_) => make_surrogate_converter(self.noise.process_std, self.noise.measurement_std, seed),
            PlantSpec::Matrices { a, b, c, x0 } => {
                let mut model = PlantModel::new(
                    a.clone(),
                    b.clone(),
                    c.clone(),
                    self.noise.process_std,
                    self.noise.measurement_std,
                    seed,
                )
                .map_err(|e| invalid("plant", e.to_string()))?;
                if let Some(x0) = x0 {
                    model = model
                        .with_state(Vector::from_column_slice(x0))
                        .map_err(|e| invalid("plant.x0", e.to_string()))?;
                }
                (model, SwitchSchedule::default())
            }
        };
        let schedule = match &self.switches {
            Some(events) => SwitchSchedule { events: events.clone() },
            None => builtin,
        };
        for d in &self.disturbances {
            if d.kick.len() != model.n() {
                return Err(invalid("disturbances", format!("kick at step {} has wrong length", d.time_step)));
            }
        }
        ScheduledPlant::new(model, schedule).map_err(|e| invalid("switches", e.to_string()))
    }

    fn first_event(&self, schedule: &SwitchSchedule) -> Option<usize> {
        let d = self.disturbances.iter().map(|d| d.time_step).min();
        match (schedule.first_switch(), d) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn resolved_windows(&self, schedule: &SwitchSchedule) -> ResolvedWindows {
        let ex = &self.excitation;
        let event = self.first_event(schedule).filter(|&s| s < ex.start).unwrap_or(0);
        let pre = self.metrics.pre_window.unwrap_or([event, ex.start]);
        let post_start = self.activation_step.unwrap_or(ex.end);
        let post = self
            .metrics
            .post_window
            .unwrap_or([post_start, (post_start + self.samples_per(1.5)).min(self.horizon)]);
        let envelope = self
            .metrics
            .envelope_window
            .unwrap_or([event, (event + self.samples_per(0.5)).min(self.horizon)]);
        ResolvedWindows {
            pre,
            post,
            envelope,
            disturbance: self.metrics.disturbance_window,
        }
    }
}

struct ResolvedWindows {
    pre: [usize; 2],
    post: [usize; 2],
    envelope: [usize; 2],
    disturbance: Option<[usize; 2]>,
}

/// One simulated step as written to the CSV trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub cost: Option<f64>,
    pub eta: Option<f64>,
    pub grad_norm: Option<f64>,
    pub mode: Mode,
    pub micros: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub input_dim: usize,
    pub output_dim: usize,
    pub reduced_dim: usize,
    pub rows: Vec<TraceRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Trace {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((0..self.input_dim).map(|i| format!("u{i}")));
        h.extend((0..self.output_dim).map(|i| format!("y{i}")));
        h.extend((0..self.reduced_dim).map(|i| format!("z{i}")));
        h.extend(["cost", "eta", "grad_norm", "mode"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(self.header())?;
        for row in &self.rows {
            let mut rec = vec![row.t.to_string()];
            rec.extend(row.u.iter().map(f64::to_string));
            rec.extend(row.y.iter().map(f64::to_string));
            match &row.z {
                Some(z) => rec.extend(z.iter().map(f64::to_string)),
                None => rec.extend(std::iter::repeat_n(String::new(), self.reduced_dim)),
            }
            rec.push(fmt_opt(row.cost));
            rec.push(fmt_opt(row.eta));
            rec.push(fmt_opt(row.grad_norm));
            rec.push(row.mode.as_str().to_string());
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, HarnessError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    /// Per-channel RMS of the output over `[start, end)`.
    pub fn output_rms(&self, [start, end]: [usize; 2]) -> Vec<f64> {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.t >= start && r.t < end).collect();
        (0..self.output_dim)
            .map(|i| {
                if rows.is_empty() {
                    return 0.0;
                }
                (rows.iter().map(|r| r.y[i] * r.y[i]).sum::<f64>() / rows.len() as f64).sqrt()
            })
            .collect()
    }

    /// RMS of the whole output vector over `[start, end)`.
    pub fn total_rms(&self, window: [usize; 2]) -> f64 {
        self.output_rms(window).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn peak(&self, start: usize, end: usize) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.t >= start && r.t < end)
            .flat_map(|r| r.y.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }

    /// `1 − (peak over the last `span` steps) / (peak over the first `span` steps)` of the window.
    pub fn envelope_decay(&self, [start, end]: [usize; 2], span: usize) -> f64 {
        let span = span.min((end - start) / 2).max(1);
        let first = self.peak(start, start + span);
        if first == 0.0 {
            return 0.0;
        }
        1.0 - self.peak(end - span, end) / first
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: Option<String>,
    pub steps: usize,
    pub pre_window: [usize; 2],
    pub post_window: [usize; 2],
    pub envelope_window: [usize; 2],
    pub pre_activation_rms: Vec<f64>,
    pub post_activation_rms: Vec<f64>,
    pub pre_activation_rms_total: f64,
    pub post_activation_rms_total: f64,
    /// Post-window RMS over pre-window RMS.
    pub rms_ratio: f64,
    pub envelope_decay: f64,
    pub disturbance_window: Option<[usize; 2]>,
    pub post_disturbance_rms: Option<f64>,
    pub reduced_dim: Option<usize>,
    pub final_cost: Option<f64>,
    pub mean_update_micros: Option<f64>,
    pub max_update_micros: Option<f64>,
    pub warnings: Vec<String>,
}

/// Result of a scenario run: trace, summary and the engine (if it was activated).
pub struct RunOutcome {
    pub trace: Trace,
    pub summary: RunSummary,
    pub engine: Option<DeepoState>,
}

/// Simulates the scenario timeline. `adaptive = false` freezes the gain after initialization.
pub fn simulate(config: &ScenarioConfig, adaptive: bool) -> Result<RunOutcome, HarnessError> {
    simulate_with(config, adaptive, |_| {})
}

/// As [`simulate`], with a hook that sees the engine right after offline initialization.
pub fn simulate_with(
    config: &ScenarioConfig,
    adaptive: bool,
    mut on_activation: impl FnMut(&mut DeepoState),
) -> Result<RunOutcome, HarnessError> {
    config.validate()?;
    let mut plant = config.build_plant()?;
    let (m, p) = (plant.input_dim(), plant.output_dim());
    let lag = config.deepo.lag;
    let ex = config.excitation;
    let mut excitation = UniformExcitation::new(ex.amplitude, config.rng_seed.wrapping_add(1));
    let mut deepo_cfg = config.deepo.clone();
    deepo_cfg.seed = config.rng_seed.wrapping_add(2);

    let mut history = IoHistory::default();
    let mut engine: Option<DeepoState> = None;
    let mut rows = Vec::with_capacity(config.horizon);

    for t in 0..config.horizon {
        if let Some(d) = config.disturbances.iter().find(|d| d.time_step == t) {
            plant.model.kick(&Vector::from_column_slice(&d.kick))?;
        }
        if config.activation_step == Some(t) {
            let first = ex.start - lag;
            let data = IoHistory::new(history.inputs[first..ex.end].to_vec(), history.outputs[first..ex.end].to_vec())
                .map_err(realization_err(t))?;
            let mut state = offline_init(&data, &deepo_cfg).map_err(engine_err(t))?;
            state.set_adaptive(adaptive);
            on_activation(&mut state);
            engine = Some(state);
        }

        let mode = match (&engine, t >= ex.start && t < ex.end) {
            (Some(_), _) => Mode::Deepo,
            (None, true) => Mode::Excite,
            (None, false) => Mode::Idle,
        };
        let (u, z) = match (&mut engine, mode) {
            (Some(state), Mode::Deepo) => {
                let w = stack_window(&history, history.len(), lag).map_err(realization_err(t))?;
                let act = state.control_step(&w).map_err(engine_err(t))?;
                (act.u, Some(act.z))
            }
            (_, Mode::Excite) => (excitation.sample(m), None),
            _ => (Vector::zeros(m), None),
        };
        let y = plant
            .step(&u)
            .map_err(|source| HarnessError::Simulation { step: t, source })?;
        history.push(u.clone(), y.clone());

        let mut row = TraceRow {
            t,
            u: u.iter().copied().collect(),
            y: y.iter().copied().collect(),
            z: None,
            cost: None,
            eta: None,
            grad_norm: None,
            mode,
            micros: None,
        };
        if let (Some(state), Some(z)) = (&mut engine, z) {
            let w = stack_window(&history, history.len(), lag).map_err(realization_err(t))?;
            let z_next = state.reduce(&w).map_err(engine_err(t))?;
            let rec = state.ingest_and_update(&u, &z, &z_next).map_err(engine_err(t))?;
            row.z = Some(rec.z);
            row.cost = rec.cost_estimate;
            row.eta = rec.eta_used;
            row.grad_norm = rec.grad_norm;
            row.micros = Some(rec.update_micros);
            state.take_records();
        }
        rows.push(row);
        if engine.is_some() {
            history.truncate_front(lag);
        }
    }

    let trace = Trace {
        input_dim: m,
        output_dim: p,
        reduced_dim: engine.as_ref().map_or(0, |e| e.reduced_dim()),
        rows,
    };
    let windows = config.resolved_windows(&plant.schedule);
    let summary = summarize(config, &trace, &windows, engine.as_ref());
    Ok(RunOutcome { trace, summary, engine })
}

fn summarize(config: &ScenarioConfig, trace: &Trace, w: &ResolvedWindows, engine: Option<&DeepoState>) -> RunSummary {
    let pre = trace.output_rms(w.pre);
    let post = trace.output_rms(w.post);
    let pre_total = trace.total_rms(w.pre);
    let post_total = trace.total_rms(w.post);
    let micros: Vec<f64> = trace.rows.iter().filter_map(|r| r.micros).collect();
    let mean = (!micros.is_empty()).then(|| micros.iter().sum::<f64>() / micros.len() as f64);
    let max = micros.iter().copied().reduce(f64::max);
    RunSummary {
        name: config.name.clone(),
        steps: trace.rows.len(),
        pre_window: w.pre,
        post_window: w.post,
        envelope_window: w.envelope,
        pre_activation_rms: pre,
        post_activation_rms: post,
        pre_activation_rms_total: pre_total,
        post_activation_rms_total: post_total,
        rms_ratio: if pre_total > 0.0 { post_total / pre_total } else { f64::INFINITY },
        envelope_decay: trace.envelope_decay(w.envelope, config.samples_per(0.1)),
        disturbance_window: w.disturbance,
        post_disturbance_rms: w.disturbance.map(|d| trace.total_rms(d)),
        reduced_dim: engine.map(|e| e.reduced_dim()),
        final_cost: trace.rows.iter().rev().find_map(|r| r.cost),
        mean_update_micros: mean,
        max_update_micros: max,
        warnings: engine.map(|e| e.warnings().to_vec()).unwrap_or_default(),
    }
}

fn output_paths(config: &ScenarioConfig, suffix: &str) -> Option<(PathBuf, String)> {
    let dir = config.output.dir.clone()?;
    let stem = config
        .output
        .stem
        .clone()
        .or_else(|| config.name.clone())
        .unwrap_or_else(|| "run".into());
    Some((dir, format!("{stem}{suffix}")))
}

fn write_outputs(config: &ScenarioConfig, suffix: &str, trace: &Trace, summary_json: &str) -> Result<Vec<PathBuf>, HarnessError> {
    let Some((dir, stem)) = output_paths(config, suffix) else {
        return Ok(Vec::new());
    };
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    if config.output.csv {
        let path = dir.join(format!("{stem}.csv"));
        trace.write_csv(fs::File::create(&path)?)?;
        written.push(path);
    }
    if config.output.json {
        let path = dir.join(format!("{stem}.json"));
        fs::write(&path, summary_json)?;
        written.push(path);
    }
    Ok(written)
}

/// Runs the scenario and writes the trace and summary to the configured output directory.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutcome, HarnessError> {
    let outcome = simulate(config, true)?;
    let json = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    write_outputs(config, "", &outcome.trace, &json)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationSummary {
    pub adaptive: RunSummary,
    pub frozen: RunSummary,
    pub adaptive_post_disturbance_rms: f64,
    pub frozen_post_disturbance_rms: f64,
}

pub struct AdaptationOutcome {
    pub adaptive: RunOutcome,
    pub frozen: RunOutcome,
    pub summary: AdaptationSummary,
}

/// Runs the scenario twice from identical seeds, once adaptive and once with the gain frozen.
pub fn run_adaptation_scenario(config: &ScenarioConfig) -> Result<AdaptationOutcome, HarnessError> {
    if config.activation_step.is_none() {
        return Err(invalid("activation_step", "adaptation runs need an activation step"));
    }
    let Some(window) = config.metrics.disturbance_window else {
        return Err(invalid("metrics.disturbance_window", "adaptation runs need a disturbance window"));
    };
    let adaptive = simulate(config, true)?;
    let frozen = simulate(config, false)?;
    let summary = AdaptationSummary {
        adaptive_post_disturbance_rms: adaptive.trace.total_rms(window),
        frozen_post_disturbance_rms: frozen.trace.total_rms(window),
        adaptive: adaptive.summary.clone(),
        frozen: frozen.summary.clone(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_outputs(config, "_adaptive", &adaptive.trace, &json)?;
    if config.output.csv {
        if let Some((dir, stem)) = output_paths(config, "_frozen") {
            frozen.trace.write_csv(fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        }
    }
    Ok(AdaptationOutcome {
        adaptive,
        frozen,
        summary,
    })
}

/// Bundled scenario files.
pub mod bundled {
    pub const CONVERTER: &str = include_str!("../../../../scenarios/converter.json");
    pub const WIND_SURROGATE: &str = include_str!("../../../../scenarios/wind_surrogate.json");
    pub const NO_DEEPO: &str = include_str!("../../../../scenarios/no_deepo.json");
    pub const ADAPTATION: &str = include_str!("../../../../scenarios/adaptation.json");
}
