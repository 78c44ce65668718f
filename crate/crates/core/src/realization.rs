//! Data-side construction of the controllable non-minimal state `z = T ξ`.
//!
//! `ξ_t` stacks the last `l` inputs above the last `l` outputs, most recent
//! first. The reduction `T` is either a 0/1 row selection (noiseless data)
//! or `Λ_r⁻¹ U_rᵀ` from the leading singular triplets of the window matrix.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RealizationError {
    #[error("insufficient history: need {needed} samples, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("history contains non-finite entries")]
    NonFinite,
}

/// Time-ordered input and output samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IoHistory {
    pub inputs: Vec<Vector>,
    pub outputs: Vec<Vector>,
}

impl IoHistory {
    pub fn new(inputs: Vec<Vector>, outputs: Vec<Vector>) -> Result<Self, RealizationError> {
        if inputs.len() != outputs.len() {
            return Err(RealizationError::DimensionMismatch(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        let h = Self { inputs, outputs };
        if let (Some(u0), Some(y0)) = (h.inputs.first(), h.outputs.first()) {
            let (m, p) = (u0.len(), y0.len());
            if h.inputs.iter().any(|u| u.len() != m) || h.outputs.iter().any(|y| y.len() != p) {
                return Err(RealizationError::DimensionMismatch("samples of varying length".into()));
            }
        }
        if h.inputs.iter().chain(&h.outputs).flat_map(|v| v.iter()).any(|v| !v.is_finite()) {
            return Err(RealizationError::NonFinite);
        }
        Ok(h)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, |u| u.len())
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.first().map_or(0, |y| y.len())
    }

    pub fn push(&mut self, u: Vector, y: Vector) {
        self.inputs.push(u);
        self.outputs.push(y);
    }

    /// Keeps only the most recent `keep` samples.
    pub fn truncate_front(&mut self, keep: usize) {
        if self.len() > keep {
            let drop = self.len() - keep;
            self.inputs.drain(..drop);
            self.outputs.drain(..drop);
        }
    }
}

/// The stacked window `ξ_t = [u_{t-1}; …; u_{t-l}; y_{t-1}; …; y_{t-l}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IoWindow {
    pub xi: Vector,
}

pub fn stack_window(history: &IoHistory, t: usize, lag: usize) -> Result<IoWindow, RealizationError> {
    if t < lag || t > history.len() {
        return Err(RealizationError::InsufficientHistory {
            needed: lag.max(t),
            available: history.len().min(t),
        });
    }
    let (m, p) = (history.input_dim(), history.output_dim());
    let mut xi = Vector::zeros((m + p) * lag);
    for k in 1..=lag {
        xi.rows_mut((k - 1) * m, m).copy_from(&history.inputs[t - k]);
        xi.rows_mut(m * lag + (k - 1) * p, p).copy_from(&history.outputs[t - k]);
    }
    Ok(IoWindow { xi })
}

/// `Ξ = [ξ_l, ξ_{l+1}, …, ξ_{l+t0-1}]`.
pub fn build_xi_matrix(history: &IoHistory, t0: usize, lag: usize) -> Result<Matrix, RealizationError> {
    let needed = t0 + lag;
    if t0 == 0 || history.len() < needed {
        return Err(RealizationError::InsufficientHistory {
            needed,
            available: history.len(),
        });
    }
    let rows = (history.input_dim() + history.output_dim()) * lag;
    let mut out = Matrix::zeros(rows, t0);
    for j in 0..t0 {
        out.set_column(j, &stack_window(history, lag + j, lag)?.xi);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMode {
    RowSelect,
    Svd,
}

/// The map `T` from windows to the reduced state, with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionMap {
    pub t_matrix: Matrix,
    pub reduced_dim: usize,
    pub inferred_order: usize,
    pub input_rows: usize,
    pub mode: ReductionMode,
    /// Set when the singular-value gap rule found no ratio above the threshold.
    pub no_gap: bool,
    pub singular_values: Vec<f64>,
}

impl ReductionMap {
    pub fn window_dim(&self) -> usize {
        self.t_matrix.ncols()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ReductionMapRecord::from(self)).expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        let rec: ReductionMapRecord = serde_json::from_str(s).map_err(|e| e.to_string())?;
        Self::try_from(rec)
    }
}

/// Flat JSON layout: dimensions plus row-major entries of `T`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionMapRecord {
    pub rows: usize,
    pub cols: usize,
    pub reduced_dim: usize,
    pub inferred_order: usize,
    pub input_rows: usize,
    pub mode: ReductionMode,
    #[serde(default)]
    pub no_gap: bool,
    #[serde(default)]
    pub singular_values: Vec<f64>,
    pub t: Vec<f64>,
}

impl From<&ReductionMap> for ReductionMapRecord {
    fn from(m: &ReductionMap) -> Self {
        Self {
            rows: m.t_matrix.nrows(),
            cols: m.t_matrix.ncols(),
            reduced_dim: m.reduced_dim,
            inferred_order: m.inferred_order,
            input_rows: m.input_rows,
            mode: m.mode,
            no_gap: m.no_gap,
            singular_values: m.singular_values.clone(),
            t: m.t_matrix.transpose().iter().copied().collect(),
        }
    }
}

impl TryFrom<ReductionMapRecord> for ReductionMap {
    type Error = String;

    fn try_from(r: ReductionMapRecord) -> Result<Self, String> {
        if r.rows * r.cols != r.t.len() || r.rows != r.reduced_dim {
            return Err("reduction map dimensions do not match its entries".into());
        }
        if r.reduced_dim <= r.input_rows || r.inferred_order != r.reduced_dim - r.input_rows {
            return Err("reduction map order bookkeeping is inconsistent".into());
        }
        Ok(Self {
            t_matrix: Matrix::from_row_slice(r.rows, r.cols, &r.t),
            reduced_dim: r.reduced_dim,
            inferred_order: r.inferred_order,
            input_rows: r.input_rows,
            mode: r.mode,
            no_gap: r.no_gap,
            singular_values: r.singular_values,
        })
    }
}

impl Serialize for ReductionMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ReductionMapRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReductionMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rec = ReductionMapRecord::deserialize(d)?;
        Self::try_from(rec).map_err(serde::de::Error::custom)
    }
}

/// Greedy top-down selection of linearly independent rows of `Ξ`.
///
/// Input rows come first in `ξ`, so under persistently exciting data all
/// `input_rows` of them are kept and the remaining picks count the order.
pub fn reduce_rowselect(xi_mat: &Matrix, input_rows: usize, tol: f64) -> Result<ReductionMap, RealizationError> {
    let (rows, cols) = xi_mat.shape();
    if cols < rows {
        return Err(RealizationError::DegenerateData(format!("{cols} columns for {rows} rows")));
    }
    let scale = numerics::spectral_norm(xi_mat);
    if scale == 0.0 {
        return Err(RealizationError::DegenerateData("all-zero data".into()));
    }
    let mut basis: Vec<Vector> = Vec::new();
    let mut selected = Vec::new();
    for i in 0..rows {
        let mut v: Vector = xi_mat.row(i).transpose();
        // two passes of Gram–Schmidt for numerical orthogonality
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > tol * scale {
            basis.push(v / norm);
            selected.push(i);
        }
    }
    let inputs_kept = selected.iter().filter(|&&i| i < input_rows).count();
    if inputs_kept < input_rows {
        return Err(RealizationError::DegenerateData(format!(
            "only {inputs_kept} of {input_rows} input rows are independent; input is not persistently exciting"
        )));
    }
    let r = selected.len();
    if r <= input_rows {
        return Err(RealizationError::DegenerateData("no output rows carry independent information".into()));
    }
    let mut t = Matrix::zeros(r, rows);
    for (k, &i) in selected.iter().enumerate() {
        t[(k, i)] = 1.0;
    }
    Ok(ReductionMap {
        t_matrix: t,
        reduced_dim: r,
        inferred_order: r - input_rows,
        input_rows,
        mode: ReductionMode::RowSelect,
        no_gap: false,
        singular_values: Vec::new(),
    })
}

/// Picks the reduced dimension from a nonincreasing singular-value list.
///
/// Among `r > input_rows` the index with the largest ratio `σ_r / σ_{r+1}`
/// wins (ties go to the smaller `r`). The flag is `true` when even that ratio
/// is below `gap_ratio`, i.e. there is no clear gap. Numerically zero
/// singular values are never kept. When no ratio can be formed, all
/// singular values are kept.
pub fn select_order(singular_values: &[f64], input_rows: usize, gap_ratio: f64) -> Result<(usize, bool), RealizationError> {
    let k = singular_values.len();
    if k <= input_rows {
        return Err(RealizationError::DegenerateData(format!(
            "{k} singular values cannot exceed the {input_rows} input directions"
        )));
    }
    let ratio = |r: usize| -> f64 {
        let (hi, lo) = (singular_values[r - 1], singular_values[r]);
        if lo > 0.0 {
            hi / lo
        } else if hi > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    };
    let floor = numerics::RANK_TOL * singular_values[0];
    let best = ((input_rows + 1)..k).filter(|&r| singular_values[r - 1] > floor).fold(None::<(usize, f64)>, |acc, r| match acc {
        Some((_, br)) if br >= ratio(r) => acc,
        _ => Some((r, ratio(r))),
    });
    Ok(match best {
        Some((r, q)) => (r, q < gap_ratio),
        None => (k, true),
    })
}

/// `T = Λ_r⁻¹ U_rᵀ` from the leading `r` singular triplets of `Ξ`.
pub fn reduce_svd(
    xi_mat: &Matrix,
    input_rows: usize,
    r_override: Option<usize>,
    gap_ratio: f64,
) -> Result<ReductionMap, RealizationError> {
    let (rows, cols) = xi_mat.shape();
    if cols < rows {
        return Err(RealizationError::DegenerateData(format!("{cols} columns for {rows} rows")));
    }
    if !(gap_ratio > 1.0) {
        return Err(RealizationError::DegenerateData("gap ratio must exceed 1".into()));
    }
    let dec = numerics::svd(xi_mat);
    let (r, no_gap) = match r_override {
        Some(r) if r > input_rows && r <= rows => (r, false),
        Some(r) => {
            return Err(RealizationError::DimensionMismatch(format!(
                "override r = {r} must lie in ({input_rows}, {rows}]"
            )))
        }
        None => select_order(&dec.singular_values, input_rows, gap_ratio)?,
    };
    if no_gap {
        log::warn!("no clear singular-value gap; using r = {r}");
    }
    let smax = dec.singular_values[0];
    if !(dec.singular_values[r - 1] > numerics::RANK_TOL * smax) {
        return Err(RealizationError::DegenerateData(format!("singular value {r} is numerically zero")));
    }
    let mut t = Matrix::zeros(r, rows);
    for i in 0..r {
        let row = dec.left_vectors.column(i).transpose() / dec.singular_values[i];
        t.set_row(i, &row);
    }
    Ok(ReductionMap {
        t_matrix: t,
        reduced_dim: r,
        inferred_order: r - input_rows,
        input_rows,
        mode: ReductionMode::Svd,
        no_gap,
        singular_values: dec.singular_values,
    })
}

pub fn reduce_state(map: &ReductionMap, window: &IoWindow) -> Result<Vector, RealizationError> {
    if window.xi.len() != map.window_dim() {
        return Err(RealizationError::DimensionMismatch(format!(
            "window has length {}, map expects {}",
            window.xi.len(),
            map.window_dim()
        )));
    }
    Ok(&map.t_matrix * &window.xi)
}
