//! The LSPIA iteration.
//!
//! Weighted form: `P ← P + Λ Aᵀ (Q − A P)`, computed geometrically as
//! difference vectors at the data points (DVD) gathered into weighted
//! averages at the control points (DVC).
//!
//! Uniform form: `P ← (I − α AᵀA) P + α AᵀQ`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{gather, CollocationMatrix, EmptyGroupPolicy, FitProblem, GroupTable, WeightMatrix};
use crate::points::PointMatrix;

/// Safety factor applied to the power-iteration estimate of `λ_max(AᵀA)`.
pub const ALPHA_SAFETY: f64 = 1.01;

/// Consecutive non-contracting steps with a flat residual before a run is
/// declared stagnated.
pub const STAGNATION_WINDOW: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Weighted,
    Uniform,
}

/// Step size of the uniform variant. Serialized as `"auto"` or a number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AlphaRepr", into = "AlphaRepr")]
pub enum Alpha {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaRepr {
    Number(f64),
    Text(String),
}

impl From<Alpha> for AlphaRepr {
    fn from(a: Alpha) -> Self {
        match a {
            Alpha::Auto => AlphaRepr::Text("auto".into()),
            Alpha::Fixed(v) => AlphaRepr::Number(v),
        }
    }
}

impl TryFrom<AlphaRepr> for Alpha {
    type Error = String;

    fn try_from(r: AlphaRepr) -> std::result::Result<Self, String> {
        match r {
            AlphaRepr::Number(v) => Ok(Alpha::Fixed(v)),
            AlphaRepr::Text(t) => t.parse(),
        }
    }
}

impl std::str::FromStr for Alpha {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Alpha::Auto);
        }
        s.parse::<f64>().map(Alpha::Fixed).map_err(|_| format!("alpha must be `auto` or a number, got `{s}`"))
    }
}

/// How a step obtains `Aᵀ(Q − A P)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepForm {
    /// `Normal` for tall systems whose `AᵀA` has fewer nonzeros than `A`,
    /// `Direct` otherwise.
    #[default]
    Auto,
    /// Difference vectors at every data point each step.
    Direct,
    /// Recurrence `g ← g − AᵀA Δ` on `g = Aᵀ(Q − A P)`, with the squared
    /// residual updated alongside. Re-evaluated directly every
    /// [`RESYNC_INTERVAL`] steps, whenever the residual has halved since the
    /// last evaluation, and at termination, to bound rounding drift.
    Normal,
}

/// Steps between direct re-evaluations in [`StepForm::Normal`].
pub const RESYNC_INTERVAL: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub variant: Variant,
    pub alpha: Alpha,
    pub max_iters: usize,
    pub tol_delta: f64,
    pub tol_residual_change: f64,
    pub empty_group_policy: EmptyGroupPolicy,
    pub step_form: StepForm,
    /// Record wall-clock time in the trace; off gives reproducible traces.
    pub record_timing: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Weighted,
            alpha: Alpha::Auto,
            max_iters: 100_000,
            tol_delta: 1e-10,
            tol_residual_change: 1e-12,
            empty_group_policy: EmptyGroupPolicy::Freeze,
            step_form: StepForm::Auto,
            record_timing: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if let Alpha::Fixed(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("alpha must be a positive finite number, got {a}")));
            }
            if self.variant == Variant::Weighted {
                return Err(Error::Config("alpha applies to the uniform variant only".into()));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        for (name, v) in [("tol_delta", self.tol_delta), ("tol_residual_change", self.tol_residual_change)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a positive finite number, got {v}")));
            }
        }
        Ok(())
    }
}

/// Current iterate `P^(k)` with its data-point residual `δ^(k) = Q − A P^(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationState {
    pub controls: PointMatrix,
    pub residual: PointMatrix,
    pub iteration: usize,
    /// `‖Q − A P^(k)‖₂` (Frobenius over all coordinates).
    pub residual_norm: f64,
    /// `max_i ‖Δ_i‖∞` of the step that produced this state, over unfrozen `i`.
    pub delta_norm: f64,
}

impl IterationState {
    pub fn new(problem: &FitProblem, controls: PointMatrix) -> Result<Self> {
        let residual = compute_dvd(problem.collocation(), problem.data(), &controls)?;
        let residual_norm = residual.frobenius_norm();
        if !residual_norm.is_finite() {
            return Err(Error::NumericalFailure { iteration: 0 });
        }
        Ok(Self { controls, residual, iteration: 0, residual_norm, delta_norm: 0.0 })
    }

    fn advance(self, problem: &FitProblem, update: PointMatrix) -> Result<Self> {
        let iteration = self.iteration + 1;
        let weights = problem.weights();
        let delta_norm = (0..update.rows())
            .filter(|&i| !weights.is_frozen(i))
            .map(|i| update.row(i).iter().fold(0.0, |m, v| f64::max(m, v.abs())))
            .fold(0.0, f64::max);
        let mut controls = self.controls;
        for (p, d) in controls.as_mut_slice().iter_mut().zip(update.as_slice()) {
            *p += d;
        }
        if !controls.is_finite() || !delta_norm.is_finite() {
            return Err(Error::NumericalFailure { iteration });
        }
        let residual = compute_dvd(problem.collocation(), problem.data(), &controls)?;
        let residual_norm = residual.frobenius_norm();
        if !residual_norm.is_finite() {
            return Err(Error::NumericalFailure { iteration });
        }
        Ok(Self { controls, residual, iteration, residual_norm, delta_norm })
    }
}

/// Difference vectors for data points: `δ = Q − A P`.
pub fn compute_dvd(a: &CollocationMatrix, q: &PointMatrix, p: &PointMatrix) -> Result<PointMatrix> {
    if q.rows() != a.nrows() || p.dim() != q.dim() {
        return Err(Error::Shape(format!(
            "Q is {}x{}, P is {}x{}, A is {}x{}",
            q.rows(),
            q.dim(),
            p.rows(),
            p.dim(),
            a.nrows(),
            a.ncols()
        )));
    }
    let mut delta = a.mul(p)?;
    for (d, &qv) in delta.as_mut_slice().iter_mut().zip(q.as_slice()) {
        *d = qv - *d;
    }
    Ok(delta)
}

/// Difference vectors for control points:
/// `Δ_i = Σ_{j∈I_i} B_i(t_j) δ_j / Σ_{j∈I_i} B_i(t_j)`, zero for frozen `i`.
pub fn compute_dvc(dvd: &PointMatrix, groups: &GroupTable, weights: &WeightMatrix) -> Result<PointMatrix> {
    if groups.len() != weights.len() {
        return Err(Error::Shape(format!("{} groups but {} weights", groups.len(), weights.len())));
    }
    if groups.samples() != dvd.rows() {
        return Err(Error::Shape(format!("groups index {} samples but δ has {} rows", groups.samples(), dvd.rows())));
    }
    let dim = dvd.dim();
    let mut out = PointMatrix::zeros(groups.len(), dim);
    for i in 0..groups.len() {
        if weights.is_frozen(i) {
            continue;
        }
        // the multiplier is 1 / Σ_{j∈I_i} B_i(t_j)
        let scale = weights.multiplier(i);
        let acc = out.row_mut(i);
        // SAFETY: group sample indices are < groups.samples() == dvd.rows()
        unsafe { gather(groups.slices(i), dvd.as_slice(), acc) };
        for a in acc.iter_mut() {
            *a *= scale;
        }
    }
    Ok(out)
}

/// One weighted step through the DVD/DVC construction.
pub fn step_weighted(state: IterationState, problem: &FitProblem) -> Result<IterationState> {
    let update = compute_dvc(&state.residual, problem.groups(), problem.weights())?;
    state.advance(problem, update)
}

/// One uniform step, `P + α Aᵀ (Q − A P)`.
pub fn step_uniform(state: IterationState, problem: &FitProblem, alpha: f64) -> Result<IterationState> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    let update = problem.collocation().tmul(&state.residual)?.scaled(alpha);
    state.advance(problem, update)
}

/// `P + Λ Aᵀ (Q − A P)` evaluated directly with sparse products.
pub fn weighted_update_matrix_form(problem: &FitProblem, p: &PointMatrix) -> Result<PointMatrix> {
    let a = problem.collocation();
    let r = compute_dvd(a, problem.data(), p)?;
    let mut out = a.tmul(&r)?;
    let w = problem.weights();
    for i in 0..out.rows() {
        let d = w.multiplier(i);
        for (o, &pv) in out.row_mut(i).iter_mut().zip(p.row(i)) {
            *o = pv + d * *o;
        }
    }
    Ok(out)
}

/// Power-iteration estimate of `λ_max(AᵀA)` (a Rayleigh quotient, hence a
/// lower bound).
pub fn estimate_lambda_max(a: &CollocationMatrix) -> Result<f64> {
    let n = a.ncols();
    if n == 0 || a.nnz() == 0 {
        return Err(Error::Degenerate("collocation matrix is zero".into()));
    }
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i as f64).sin()).collect();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let xm = PointMatrix::column(&x);
        let y = a.tmul(&a.mul(&xm)?)?;
        let y = y.as_slice();
        let rayleigh: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if ynorm == 0.0 || !ynorm.is_finite() {
            return Err(Error::Degenerate("power iteration failed to grow".into()));
        }
        x = y.iter().map(|v| v / ynorm).collect();
        let done = (rayleigh - lambda).abs() <= 1e-13 * rayleigh;
        lambda = rayleigh;
        if done {
            break;
        }
    }
    Ok(lambda)
}

/// Step size `1 / (1.01 λ̂_max)` keeping `ρ(α AᵀA) ≤ 1`.
pub fn choose_alpha(a: &CollocationMatrix) -> Result<f64> {
    Ok(1.0 / (ALPHA_SAFETY * estimate_lambda_max(a)?))
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialControls {
    Zero,
    /// Greedily picks, for each control point, the nearest unused data point
    /// in parameter space to its Greville point.
    Subset,
    Given(PointMatrix),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    Stagnated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub residual_norm: f64,
    pub delta_norm: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub controls: PointMatrix,
    pub trace: Vec<TraceRecord>,
    pub termination: Termination,
    pub iterations_used: usize,
    /// Step size actually used by the uniform variant.
    pub alpha: Option<f64>,
}

impl FitResult {
    pub fn final_residual(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.residual_norm)
    }
}

pub fn initial_controls(problem: &FitProblem, init: &InitialControls) -> Result<PointMatrix> {
    let (n, dim) = (problem.controls(), problem.dim());
    match init {
        InitialControls::Zero => Ok(PointMatrix::zeros(n, dim)),
        InitialControls::Given(p) => {
            if p.rows() != n || p.dim() != dim {
                return Err(Error::Shape(format!("initial controls are {}x{}, need {n}x{dim}", p.rows(), p.dim())));
            }
            Ok(p.clone())
        }
        InitialControls::Subset => Ok(subset_controls(problem)),
    }
}

fn subset_controls(problem: &FitProblem) -> PointMatrix {
    let (n, dim) = (problem.controls(), problem.dim());
    let q = problem.data();
    let mut out = PointMatrix::zeros(n, dim);
    let mut used = vec![false; q.rows()];
    match problem.space() {
        Some(space) => {
            let params = problem.params();
            for i in 0..n {
                let g = space.greville(i).expect("control index within basis");
                let dist = |j: usize| -> f64 {
                    params[j].coords().iter().zip(g.coords()).map(|(a, b)| (a - b) * (a - b)).sum()
                };
                let pick = (0..q.rows())
                    .filter(|&j| !used[j])
                    .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
                    .or_else(|| (0..q.rows()).min_by(|&a, &b| dist(a).total_cmp(&dist(b))))
                    .expect("data set is nonempty");
                used[pick] = true;
                out.row_mut(i).copy_from_slice(q.row(pick));
            }
        }
        None => {
            // no parameters available: take the sample carrying the largest basis value
            for i in 0..n {
                let group = problem.groups().group(i);
                let best =
                    |it: &mut dyn Iterator<Item = (usize, f64)>| it.max_by(|a, b| a.1.total_cmp(&b.1)).map(|(j, _)| j);
                let pick = best(&mut group.clone().filter(|(j, _)| !used[*j])).or_else(|| best(&mut group.clone()));
                if let Some(j) = pick {
                    used[j] = true;
                    out.row_mut(i).copy_from_slice(q.row(j));
                }
            }
        }
    }
    out
}

/// Runs the configured variant until the largest control update drops to
/// `tol_delta`, the iteration stagnates, or `max_iters` is reached.
pub fn fit(problem: &FitProblem, init: &InitialControls, config: &SolverConfig) -> Result<FitResult> {
    config.validate()?;
    if config.empty_group_policy == EmptyGroupPolicy::Strict {
        let frozen = problem.weights().frozen_indices();
        if !frozen.is_empty() {
            return Err(Error::SingularAssembly { indices: frozen });
        }
    }
    let alpha = match (config.variant, config.alpha) {
        (Variant::Weighted, _) => None,
        (Variant::Uniform, Alpha::Auto) => Some(choose_alpha(problem.collocation())?),
        (Variant::Uniform, Alpha::Fixed(a)) => {
            let lambda = estimate_lambda_max(problem.collocation())?;
            if a * lambda > 1.0 {
                log::warn!("alpha·λ_max ≈ {:.6} exceeds 1; the uniform iteration may diverge", a * lambda);
            }
            Some(a)
        }
    };

    let start = Instant::now();
    let elapsed = || if config.record_timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };

    let controls = initial_controls(problem, init)?;
    let mut engine = match normal_form_gram(problem, config.step_form)? {
        Some(gram) => Engine::Normal(NormalState::new(problem, controls, gram)?),
        None => Engine::Direct(IterationState::new(problem, controls)?),
    };
    let mut trace = vec![engine.record(elapsed())];
    let mut flat_steps = 0usize;
    let mut termination = Termination::MaxIters;
    let mut prev_delta = f64::INFINITY;

    for _ in 0..config.max_iters {
        let prev_residual = engine.residual_norm();
        engine = engine.step(problem, alpha)?;
        trace.push(engine.record(elapsed()));

        let delta = engine.delta_norm();
        if delta <= config.tol_delta {
            termination = Termination::Converged;
            break;
        }
        let change = (prev_residual - engine.residual_norm()).abs();
        let flat = change <= config.tol_residual_change * prev_residual;
        if flat && delta >= prev_delta {
            flat_steps += 1;
        } else {
            flat_steps = 0;
        }
        if flat_steps >= STAGNATION_WINDOW {
            termination = Termination::Stagnated;
            break;
        }
        prev_delta = delta;
    }

    if let Engine::Normal(state) = &mut engine {
        if state.synced_at != state.iteration {
            state.sync(problem)?;
            if let Some(last) = trace.last_mut() {
                last.residual_norm = state.residual_norm();
            }
        }
    }
    let iterations_used = engine.iteration();
    Ok(FitResult { iterations_used, controls: engine.into_controls(), trace, termination, alpha })
}

/// Gram matrix to use for the normal-form recurrence, if any.
fn normal_form_gram(problem: &FitProblem, form: StepForm) -> Result<Option<CollocationMatrix>> {
    let a = problem.collocation();
    match form {
        StepForm::Direct => Ok(None),
        StepForm::Normal => a.gram().map(Some),
        StepForm::Auto => {
            if a.nrows() <= 2 * a.ncols() {
                return Ok(None);
            }
            let gram = a.gram()?;
            Ok((gram.nnz() < a.nnz()).then_some(gram))
        }
    }
}

enum Engine {
    Direct(IterationState),
    Normal(NormalState),
}

impl Engine {
    fn step(self, problem: &FitProblem, alpha: Option<f64>) -> Result<Self> {
        Ok(match (self, alpha) {
            (Engine::Direct(s), None) => Engine::Direct(step_weighted(s, problem)?),
            (Engine::Direct(s), Some(a)) => Engine::Direct(step_uniform(s, problem, a)?),
            (Engine::Normal(mut s), _) => {
                s.step(problem, alpha)?;
                Engine::Normal(s)
            }
        })
    }

    fn residual_norm(&self) -> f64 {
        match self {
            Engine::Direct(s) => s.residual_norm,
            Engine::Normal(s) => s.residual_norm(),
        }
    }

    fn delta_norm(&self) -> f64 {
        match self {
            Engine::Direct(s) => s.delta_norm,
            Engine::Normal(s) => s.delta_norm,
        }
    }

    fn iteration(&self) -> usize {
        match self {
            Engine::Direct(s) => s.iteration,
            Engine::Normal(s) => s.iteration,
        }
    }

    fn record(&self, wall_ms: f64) -> TraceRecord {
        TraceRecord {
            iteration: self.iteration(),
            residual_norm: self.residual_norm(),
            delta_norm: self.delta_norm(),
            wall_ms,
        }
    }

    fn into_controls(self) -> PointMatrix {
        match self {
            Engine::Direct(s) => s.controls,
            Engine::Normal(s) => s.controls,
        }
    }
}

/// Iterate for [`StepForm::Normal`]: `g = Aᵀ(Q − A P)` and `‖Q − A P‖²` are
/// carried forward instead of the per-point residual.
struct NormalState {
    gram: CollocationMatrix,
    controls: PointMatrix,
    g: PointMatrix,
    residual_sq: f64,
    /// `residual_sq` and iteration at the last direct evaluation.
    synced_sq: f64,
    synced_at: usize,
    iteration: usize,
    delta_norm: f64,
}

impl NormalState {
    fn new(problem: &FitProblem, controls: PointMatrix, gram: CollocationMatrix) -> Result<Self> {
        let (n, dim) = (controls.rows(), controls.dim());
        let mut s = Self {
            gram,
            controls,
            g: PointMatrix::zeros(n, dim),
            residual_sq: 0.0,
            synced_sq: 0.0,
            synced_at: 0,
            iteration: 0,
            delta_norm: 0.0,
        };
        s.sync(problem)?;
        Ok(s)
    }

    fn residual_norm(&self) -> f64 {
        self.residual_sq.sqrt()
    }

    /// Recomputes `g` and the residual from the current controls.
    fn sync(&mut self, problem: &FitProblem) -> Result<()> {
        let r = compute_dvd(problem.collocation(), problem.data(), &self.controls)?;
        let norm = r.frobenius_norm();
        if !norm.is_finite() {
            return Err(Error::NumericalFailure { iteration: self.iteration });
        }
        self.residual_sq = norm * norm;
        self.synced_sq = self.residual_sq;
        self.synced_at = self.iteration;
        self.g = problem.collocation().tmul(&r)?;
        Ok(())
    }

    fn step(&mut self, problem: &FitProblem, alpha: Option<f64>) -> Result<()> {
        let weights = problem.weights();
        let mut update = self.g.clone();
        let mut delta_norm: f64 = 0.0;
        for i in 0..update.rows() {
            let scale = match alpha {
                Some(a) => a,
                None => weights.multiplier(i),
            };
            let frozen = weights.is_frozen(i);
            for v in update.row_mut(i) {
                *v *= scale;
                if !frozen {
                    delta_norm = delta_norm.max(v.abs());
                }
            }
        }
        self.iteration += 1;
        self.delta_norm = delta_norm;
        for (p, d) in self.controls.as_mut_slice().iter_mut().zip(update.as_slice()) {
            *p += d;
        }
        if !self.controls.is_finite() || !delta_norm.is_finite() {
            return Err(Error::NumericalFailure { iteration: self.iteration });
        }
        if self.iteration.is_multiple_of(RESYNC_INTERVAL) {
            return self.sync(problem);
        }
        // ‖r − AΔ‖² = ‖r‖² − 2⟨Δ, g⟩ + ⟨Δ, AᵀA Δ⟩. Rounding error scales with
        // the residual at the last sync, so resync once it has halved.
        let h = self.gram.mul(&update)?;
        let dot =
            |x: &PointMatrix, y: &PointMatrix| x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum::<f64>();
        self.residual_sq = (self.residual_sq - 2.0 * dot(&update, &self.g) + dot(&update, &h)).max(0.0);
        for (g, hv) in self.g.as_mut_slice().iter_mut().zip(h.as_slice()) {
            *g -= hv;
        }
        if !self.residual_sq.is_finite() {
            return Err(Error::NumericalFailure { iteration: self.iteration });
        }
        if self.residual_sq < 0.5 * self.synced_sq {
            return self.sync(problem);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisSpace, KnotVector, ParamPoint};
    use crate::fitting::{assemble, DataSet};
    use approx::assert_abs_diff_eq;

    fn singular() -> FitProblem {
        let a = CollocationMatrix::from_dense_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap();
        FitProblem::from_matrix(a, PointMatrix::column(&[2.0, 4.0]), EmptyGroupPolicy::Strict).unwrap()
    }

    fn linear_three() -> FitProblem {
        let s = BasisSpace::new(vec![KnotVector::new(vec![0., 0., 1., 1.], 1).unwrap()]).unwrap();
        let d = DataSet::new(
            PointMatrix::column(&[0.0, 1.0, 4.0]),
            vec![ParamPoint::u(0.0), ParamPoint::u(0.5), ParamPoint::u(1.0)],
        )
        .unwrap();
        assemble(&s, &d, EmptyGroupPolicy::Strict).unwrap()
    }

    #[test]
    fn dvd_examples() {
        let p = singular();
        let d = compute_dvd(p.collocation(), p.data(), &PointMatrix::column(&[3.0, 3.0])).unwrap();
        assert_eq!(d.as_slice(), &[-1.0, 1.0]);
        let d = compute_dvd(p.collocation(), p.data(), &PointMatrix::zeros(2, 1)).unwrap();
        assert_eq!(d, *p.data());
        assert!(compute_dvd(p.collocation(), p.data(), &PointMatrix::zeros(3, 1)).is_err());
        assert!(compute_dvd(p.collocation(), p.data(), &PointMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn dvc_examples() {
        let p = singular();
        let dvc = compute_dvc(&PointMatrix::column(&[2.0, 4.0]), p.groups(), p.weights()).unwrap();
        assert_eq!(dvc.get(0, 0), 3.0);
        let zero = compute_dvc(&PointMatrix::zeros(2, 1), p.groups(), p.weights()).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn weighted_step_linear_example() {
        let prob = linear_three();
        let s0 = IterationState::new(&prob, PointMatrix::column(&[0.0, 4.0])).unwrap();
        assert_eq!(s0.residual.as_slice(), &[0.0, -1.0, 0.0]);
        let s1 = step_weighted(s0, &prob).unwrap();
        assert_abs_diff_eq!(s1.controls.get(0, 0), -1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s1.controls.get(1, 0), 11.0 / 3.0, epsilon = 1e-15);
        assert_eq!(s1.iteration, 1);
        assert_abs_diff_eq!(s1.delta_norm, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_one_step_to_minimum_norm() {
        let prob = singular();
        let s1 = step_weighted(IterationState::new(&prob, PointMatrix::zeros(2, 1)).unwrap(), &prob).unwrap();
        assert_eq!(s1.controls.as_slice(), &[3.0, 3.0]);
        let s2 = step_weighted(s1.clone(), &prob).unwrap();
        assert_eq!(s2.controls, s1.controls);

        let u1 = step_uniform(IterationState::new(&prob, PointMatrix::zeros(2, 1)).unwrap(), &prob, 1.0).unwrap();
        assert_eq!(u1.controls.as_slice(), &[3.0, 3.0]);
    }

    #[test]
    fn null_space_component_is_invariant() {
        let a = CollocationMatrix::from_dense_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap();
        let prob = FitProblem::from_matrix(a, PointMatrix::column(&[0.0, 0.0]), EmptyGroupPolicy::Strict).unwrap();
        let mut s = IterationState::new(&prob, PointMatrix::column(&[1.0, -1.0])).unwrap();
        for _ in 0..5 {
            s = step_uniform(s, &prob, 0.7).unwrap();
            assert_eq!(s.controls.as_slice(), &[1.0, -1.0]);
        }
    }

    #[test]
    fn alpha_validation() {
        let cfg = SolverConfig { variant: Variant::Uniform, alpha: Alpha::Fixed(0.0), ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = SolverConfig { variant: Variant::Uniform, alpha: Alpha::Fixed(-1.0), ..Default::default() };
        assert!(cfg.validate().is_err());
        // oversized step is accepted (with a warning)
        let cfg =
            SolverConfig { variant: Variant::Uniform, alpha: Alpha::Fixed(1.5), max_iters: 3, ..Default::default() };
        assert!(fit(&singular(), &InitialControls::Zero, &cfg).is_ok());
        assert!(SolverConfig { max_iters: 0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { tol_delta: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn alpha_for_unit_spectrum() {
        let alpha = choose_alpha(singular().collocation()).unwrap();
        assert_abs_diff_eq!(alpha, 1.0 / 1.01, epsilon = 1e-12);
        let eye = CollocationMatrix::from_dense_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_abs_diff_eq!(choose_alpha(&eye).unwrap(), 1.0 / 1.01, epsilon = 1e-12);
        let zero = CollocationMatrix::from_rows(2, &[vec![], vec![]]).unwrap();
        assert!(matches!(choose_alpha(&zero), Err(Error::Degenerate(_))));
    }

    #[test]
    fn square_interpolation_converges() {
        // Greville-free interpolation at 6 distinct parameters with 6 cubic controls
        let s = BasisSpace::clamped_uniform(&[3], &[6]).unwrap();
        let params: Vec<ParamPoint> = (0..6).map(|k| ParamPoint::u(k as f64 / 5.0)).collect();
        let q = PointMatrix::from_rows(&(0..6).map(|k| [k as f64, (k * k) as f64 / 5.0]).collect::<Vec<_>>()).unwrap();
        let prob = assemble(&s, &DataSet::new(q, params).unwrap(), EmptyGroupPolicy::Strict).unwrap();
        for variant in [Variant::Weighted, Variant::Uniform] {
            let cfg = SolverConfig { variant, tol_delta: 1e-14, ..Default::default() };
            let r = fit(&prob, &InitialControls::Subset, &cfg).unwrap();
            assert_eq!(r.termination, Termination::Converged);
            assert!(r.final_residual() < 1e-10, "{variant:?}: {}", r.final_residual());
            assert_eq!(r.trace.len(), r.iterations_used + 1);
        }
    }

    #[test]
    fn strict_policy_rejects_frozen() {
        let a = CollocationMatrix::from_dense_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        let prob = FitProblem::from_matrix(a, PointMatrix::column(&[1.0, 2.0]), EmptyGroupPolicy::Freeze).unwrap();
        let cfg = SolverConfig { empty_group_policy: EmptyGroupPolicy::Strict, ..Default::default() };
        assert_eq!(fit(&prob, &InitialControls::Zero, &cfg).unwrap_err(), Error::SingularAssembly { indices: vec![1] });
        let r =
            fit(&prob, &InitialControls::Given(PointMatrix::column(&[0.0, 7.0])), &SolverConfig::default()).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert_abs_diff_eq!(r.controls.get(0, 0), 1.5, epsilon = 1e-10);
        assert_eq!(r.controls.get(1, 0), 7.0);
    }

    fn tall_patch() -> FitProblem {
        let s = BasisSpace::clamped_uniform(&[3, 3], &[8, 8]).unwrap();
        let params: Vec<ParamPoint> =
            (0..400).map(|k| ParamPoint::uv((k % 20) as f64 / 19.0, (k / 20) as f64 / 19.0)).collect();
        let q = PointMatrix::from_rows(
            &params.iter().map(|t| [t.coords()[0], (3.0 * t.coords()[1]).cos() * t.coords()[0]]).collect::<Vec<_>>(),
        )
        .unwrap();
        assemble(&s, &DataSet::new(q, params).unwrap(), EmptyGroupPolicy::Freeze).unwrap()
    }

    #[test]
    fn normal_form_tracks_direct_iteration() {
        let prob = tall_patch();
        for variant in [Variant::Weighted, Variant::Uniform] {
            let run = |step_form| {
                let cfg =
                    SolverConfig { variant, step_form, max_iters: 5000, record_timing: false, ..Default::default() };
                fit(&prob, &InitialControls::Zero, &cfg).unwrap()
            };
            let (direct, normal) = (run(StepForm::Direct), run(StepForm::Normal));
            assert!(direct.iterations_used > RESYNC_INTERVAL, "{variant:?}: {} iterations", direct.iterations_used);
            assert_eq!(direct.termination, normal.termination);
            assert!(direct.iterations_used.abs_diff(normal.iterations_used) <= 1);
            assert!(direct.controls.max_abs_diff(&normal.controls) <= 1e-10);
            for (d, n) in direct.trace.iter().zip(&normal.trace) {
                assert!((d.residual_norm - n.residual_norm).abs() <= 1e-10 * d.residual_norm.max(1.0), "{d:?} {n:?}");
                assert!((d.delta_norm - n.delta_norm).abs() <= 1e-12);
            }
            assert_abs_diff_eq!(direct.final_residual(), normal.final_residual(), epsilon = 1e-12);
        }
        let auto = fit(&prob, &InitialControls::Zero, &SolverConfig::default()).unwrap();
        let direct =
            fit(&prob, &InitialControls::Zero, &SolverConfig { step_form: StepForm::Direct, ..Default::default() })
                .unwrap();
        assert!(auto.controls.max_abs_diff(&direct.controls) <= 1e-10);
    }

    #[test]
    fn normal_form_keeps_frozen_controls() {
        let a = CollocationMatrix::from_dense_rows(&[
            [1.0, 0.0],
            [1.0, 0.0],
            [0.5, 0.0],
            [1.0, 0.0],
            [1.0, 0.0],
            [0.5, 0.0],
        ])
        .unwrap();
        let q = PointMatrix::column(&[1.0, 2.0, 1.0, 1.0, 2.0, 0.5]);
        let prob = FitProblem::from_matrix(a, q, EmptyGroupPolicy::Freeze).unwrap();
        let cfg = SolverConfig { step_form: StepForm::Normal, ..Default::default() };
        let r = fit(&prob, &InitialControls::Given(PointMatrix::column(&[0.0, -4.0])), &cfg).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert_eq!(r.controls.get(1, 0), -4.0);
        assert_abs_diff_eq!(r.controls.get(0, 0), 1.5, epsilon = 1e-9);
    }

    #[test]
    fn alpha_text_forms() {
        assert_eq!("auto".parse::<Alpha>().unwrap(), Alpha::Auto);
        assert_eq!(" 0.25 ".parse::<Alpha>().unwrap(), Alpha::Fixed(0.25));
        assert!("fast".parse::<Alpha>().is_err());
        let cfg = SolverConfig { variant: Variant::Uniform, alpha: Alpha::Fixed(0.5), ..Default::default() };
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"alpha\":0.5"), "{json}");
        assert_eq!(serde_json::from_str::<SolverConfig>(&json).unwrap(), cfg);
        let back: SolverConfig = serde_json::from_str(r#"{"alpha": "auto", "step_form": "normal"}"#).unwrap();
        assert_eq!((back.alpha, back.step_form), (Alpha::Auto, StepForm::Normal));
    }
}
