//! Estimating equations for the response-model coefficients and a damped
//! Newton solver.
//!
//! Four equations are supported:
//!
//! * maximum likelihood score `sum_S k_i (r_i - f_i) x_i = 0` with `k_i = 1`
//!   or `k_i = 1 / pi_i`;
//! * calibration to population totals,
//!   `sum_{S_r} x_i / (pi_i f_i) = sum_U x_i`;
//! * calibration to the full-sample HT totals,
//!   `sum_{S_r} x_i / (pi_i f_i) = sum_S x_i / pi_i`.
//!
//! The calibration residuals use the raking form `1 / f = 1 + exp(-x' lambda)`.
//! Non-convergence is reported in [`FitResult::status`], never as an error.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{check_len, Result};
use crate::linalg::{condition_estimate, dot, norm2, norm_inf, solve_checked, CONDITION_LIMIT};
use crate::population::{logistic_eta, logit};
use crate::survey::SurveyData;

/// Maximum number of step halvings per Newton iteration.
pub const MAX_HALVINGS: usize = 30;

/// Choice of `k_i` in the likelihood score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Weighting {
    /// `k_i = 1`: the ordinary likelihood.
    Unit,
    /// `k_i = 1 / pi_i`: the design-weighted score.
    InverseInclusion,
}

impl Weighting {
    #[inline]
    pub fn k(self, pi: f64) -> f64 {
        match self {
            Weighting::Unit => 1.0,
            Weighting::InverseInclusion => 1.0 / pi,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EquationKind {
    Mle(Weighting),
    CalPopulation,
    CalSample,
}

impl EquationKind {
    pub fn is_calibration(self) -> bool {
        matches!(self, EquationKind::CalPopulation | EquationKind::CalSample)
    }
}

/// An estimating equation over one sample, with its calibration target
/// (zero for the likelihood score).
#[derive(Clone, Debug)]
pub struct EstimatingEquation<'a> {
    kind: EquationKind,
    data: &'a SurveyData,
    target: Vec<f64>,
}

impl<'a> EstimatingEquation<'a> {
    pub fn mle(data: &'a SurveyData, weighting: Weighting) -> Self {
        Self {
            kind: EquationKind::Mle(weighting),
            data,
            target: vec![0.0; data.q()],
        }
    }

    /// Calibration to known population totals of the auxiliaries.
    pub fn calibration_population(data: &'a SurveyData, totals: &[f64]) -> Result<Self> {
        check_len("population totals", totals.len(), data.q())?;
        Ok(Self {
            kind: EquationKind::CalPopulation,
            data,
            target: totals.to_vec(),
        })
    }

    /// Calibration to the full-sample HT totals of the auxiliaries.
    pub fn calibration_sample(data: &'a SurveyData) -> Self {
        Self {
            kind: EquationKind::CalSample,
            data,
            target: data.ht_aux_totals(),
        }
    }

    pub fn kind(&self) -> EquationKind {
        self.kind
    }

    pub fn data(&self) -> &SurveyData {
        self.data
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Residual scale used by the convergence test, `max(1, |target|_inf)`.
    pub fn scale(&self) -> f64 {
        norm_inf(&self.target).max(1.0)
    }

    pub fn residual(&self, lambda: &[f64]) -> Vec<f64> {
        match self.kind {
            EquationKind::Mle(w) => score_mle(lambda, self.data, w),
            _ => calib_residual(lambda, self.data, &self.target),
        }
    }

    /// `lambda_0 = (logit(respondent fraction), 0, ..., 0)`. The fraction is
    /// design-weighted except for the unweighted likelihood, and kept away
    /// from 0 and 1 by half a unit.
    pub fn default_start(&self) -> Vec<f64> {
        let d = self.data;
        let n = d.len().max(1) as f64;
        let frac = match self.kind {
            EquationKind::Mle(Weighting::Unit) => d.respondent_count() as f64 / n,
            _ => {
                let all: f64 = d.pi().iter().map(|p| 1.0 / p).sum();
                let resp: f64 = d.respondents().map(|k| 1.0 / d.pi()[k]).sum();
                if all > 0.0 {
                    resp / all
                } else {
                    0.5
                }
            }
        };
        let frac = frac.clamp(0.5 / n, 1.0 - 0.5 / n);
        let mut start = vec![0.0; d.q()];
        start[0] = logit(frac);
        start
    }
}

/// `sum_S k_i (r_i - f(x_i; lambda)) x_i`.
pub fn score_mle(lambda: &[f64], data: &SurveyData, weighting: Weighting) -> Vec<f64> {
    let mut s = vec![0.0; data.q()];
    for (k, row) in data.x().rows().enumerate() {
        let eta = dot(row, lambda);
        // r - f without cancellation: 1 - f(eta) = f(-eta).
        let diff = if data.r()[k] { logistic_eta(-eta) } else { -logistic_eta(eta) };
        let c = weighting.k(data.pi()[k]) * diff;
        for (acc, v) in s.iter_mut().zip(row) {
            *acc += c * v;
        }
    }
    s
}

/// `sum_{S_r} (1 + exp(-x_i' lambda)) x_i / pi_i - target`.
///
/// The `exp` part is accumulated apart from the lambda-free part so that it
/// is not absorbed by rounding once it becomes small.
pub fn calib_residual(lambda: &[f64], data: &SurveyData, target: &[f64]) -> Vec<f64> {
    let q = target.len();
    let mut fixed = vec![0.0; q];
    let mut tail = vec![0.0; q];
    for k in data.respondents() {
        let row = data.x().row(k);
        let w = 1.0 / data.pi()[k];
        let e = (-dot(row, lambda)).exp() * w;
        for j in 0..q {
            fixed[j] += w * row[j];
            tail[j] += e * row[j];
        }
    }
    (0..q).map(|j| (fixed[j] - target[j]) + tail[j]).collect()
}

/// Analytical Jacobian of the equation's residual.
///
/// Likelihood: `-sum_S k_i f_i (1 - f_i) x_i x_i'`.
/// Calibration: `-sum_{S_r} exp(-x_i' lambda) / pi_i x_i x_i'`.
pub fn jacobian(lambda: &[f64], eq: &EstimatingEquation<'_>) -> DMatrix<f64> {
    let data = eq.data;
    let q = data.q();
    let mut j = DMatrix::<f64>::zeros(q, q);
    let mut accumulate = |row: &[f64], c: f64| {
        for a in 0..q {
            for b in 0..q {
                j[(a, b)] -= c * row[a] * row[b];
            }
        }
    };
    match eq.kind {
        EquationKind::Mle(w) => {
            for (k, row) in data.x().rows().enumerate() {
                let eta = dot(row, lambda);
                let c = w.k(data.pi()[k]) * logistic_eta(eta) * logistic_eta(-eta);
                accumulate(row, c);
            }
        }
        EquationKind::CalPopulation | EquationKind::CalSample => {
            for k in data.respondents() {
                let row = data.x().row(k);
                accumulate(row, (-dot(row, lambda)).exp() / data.pi()[k]);
            }
        }
    }
    j
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverControls {
    /// Convergence tolerance on `|residual|_inf / max(1, |target|_inf)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Cap on `|step|_inf` of a single Newton step.
    pub max_step: f64,
    /// Starting point; `None` uses [`EstimatingEquation::default_start`].
    pub lambda0: Option<Vec<f64>>,
    /// Iterates with `|lambda|_inf` beyond this are declared divergent.
    pub divergence_bound: f64,
    /// A converged iterate must also have a Newton step below
    /// `step_tol * max(1, |lambda|_inf)`; this separates genuine roots from
    /// residuals that only vanish as `lambda` runs off to infinity.
    pub step_tol: f64,
    /// Record one [`TraceRow`] per iteration.
    pub trace: bool,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            max_step: 10.0,
            lambda0: None,
            divergence_bound: 50.0,
            step_tol: 1e-6,
            trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FitStatus {
    Converged,
    MaxIterations,
    SingularJacobian,
    Diverged,
}

impl FitStatus {
    pub fn name(self) -> &'static str {
        match self {
            FitStatus::Converged => "converged",
            FitStatus::MaxIterations => "max_iterations",
            FitStatus::SingularJacobian => "singular_jacobian",
            FitStatus::Diverged => "diverged",
        }
    }

    pub fn is_converged(self) -> bool {
        self == FitStatus::Converged
    }
}

/// One Newton iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// `|residual|_inf` at the start of the iteration.
    pub residual_norm: f64,
    /// `|accepted step|_inf`.
    pub step_size: f64,
    pub halvings: usize,
    pub lambda: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub lambda_hat: Vec<f64>,
    /// Fitted probabilities for every sampled unit.
    pub p_hat: Vec<f64>,
    pub status: FitStatus,
    pub iterations: usize,
    /// `|residual|_inf` at `lambda_hat`.
    pub residual_norm: f64,
    pub condition_estimate: f64,
    pub trace: Vec<TraceRow>,
}

impl FitResult {
    /// Write the iteration trace as CSV.
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let q = self.lambda_hat.len();
        let mut header = vec!["iteration".to_string(), "residual_norm".into(), "step_size".into(), "halvings".into()];
        header.extend((0..q).map(|j| format!("lambda{j}")));
        out.write_record(&header)?;
        for t in &self.trace {
            let mut rec = vec![
                t.iteration.to_string(),
                t.residual_norm.to_string(),
                t.step_size.to_string(),
                t.halvings.to_string(),
            ];
            rec.extend(t.lambda.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Damped Newton iteration on `eq`.
///
/// Each step `-J^{-1} residual` is capped at `max_step` and halved (at most
/// [`MAX_HALVINGS`] times) until the residual 2-norm decreases.
pub fn solve(eq: &EstimatingEquation<'_>, controls: &SolverControls) -> FitResult {
    let q = eq.data.q();
    let threshold = controls.tol * eq.scale();
    let mut lambda = match &controls.lambda0 {
        Some(l) if l.len() == q => l.clone(),
        _ => eq.default_start(),
    };
    let mut res = eq.residual(&lambda);
    let mut cond = f64::NAN;
    let mut trace = Vec::new();
    let mut iterations = 0;

    let status = loop {
        if !finite(&res) || !finite(&lambda) {
            break FitStatus::Diverged;
        }
        let jac = jacobian(&lambda, eq);
        cond = condition_estimate(&jac);
        if cond > CONDITION_LIMIT {
            break FitStatus::SingularJacobian;
        }
        let neg: Vec<f64> = res.iter().map(|v| -v).collect();
        let mut delta = match solve_checked(&jac, &neg) {
            Ok((d, _)) => d,
            Err(_) => break FitStatus::SingularJacobian,
        };
        let res_inf = norm_inf(&res);
        let small_residual = res_inf <= threshold;
        let small_step = norm_inf(&delta) <= controls.step_tol * norm_inf(&lambda).max(1.0);
        if small_residual && small_step {
            break FitStatus::Converged;
        }
        if iterations >= controls.max_iter {
            break FitStatus::MaxIterations;
        }
        let len = norm_inf(&delta);
        if len > controls.max_step {
            let s = controls.max_step / len;
            delta.iter_mut().for_each(|d| *d *= s);
        }

        let base = norm2(&res);
        let mut t = 1.0;
        let mut accepted = None;
        for halvings in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = lambda.iter().zip(&delta).map(|(l, d)| l + t * d).collect();
            let rc = eq.residual(&cand);
            if finite(&rc) && norm2(&rc) < base {
                accepted = Some((cand, rc, halvings));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, rc, halvings)) = accepted else {
            // No decrease is possible at working precision.
            break if small_residual { FitStatus::Converged } else { FitStatus::MaxIterations };
        };
        iterations += 1;
        if controls.trace {
            trace.push(TraceRow {
                iteration: iterations,
                residual_norm: res_inf,
                step_size: t * norm_inf(&delta),
                halvings,
                lambda: cand.clone(),
            });
        }
        lambda = cand;
        res = rc;
        if norm_inf(&lambda) > controls.divergence_bound {
            break FitStatus::Diverged;
        }
    };

    let p_hat = eq.data.x().rows().map(|row| logistic_eta(dot(row, &lambda))).collect();
    FitResult {
        residual_norm: norm_inf(&res),
        lambda_hat: lambda,
        p_hat,
        status,
        iterations,
        condition_estimate: cond,
        trace,
    }
}
