//! Variance estimators for the NWA totals, the exact two-phase variance
//! decomposition used as an oracle, and normal-theory intervals.

use std::io::Write;

use crate::design::{DesignKind, DesignSpec};
use crate::error::{check_len, Error, Result};
use crate::estimators::diagnostics::gamma_cal_u_n;
use crate::estimators::{gamma_hat_cal, gamma_hat_mle, Variant};
use crate::linalg::{dot, weighted_normal_equations};
use crate::population::Population;
use crate::solver::{EquationKind, FitResult, Weighting};
use crate::survey::SurveyData;

/// Normal quantile used for every interval.
pub const Z_95: f64 = 1.96;

/// `V_hat = V_hat_sam + V_hat_nr` for one estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceEstimate {
    pub v_sam: f64,
    pub v_nr: f64,
    pub total: f64,
    /// Coefficient used to form the residuals; `None` when its normal
    /// equations were singular and zero was used instead.
    pub gamma_hat: Option<Vec<f64>>,
    /// `e_i` per respondent, in respondent order.
    pub residuals: Vec<f64>,
}

impl VarianceEstimate {
    fn new(v_sam: f64, v_nr: f64, gamma_hat: Option<Vec<f64>>, residuals: Vec<f64>) -> Self {
        Self {
            v_sam,
            v_nr,
            total: v_sam + v_nr,
            gamma_hat,
            residuals,
        }
    }

    pub fn singular_gamma(&self) -> bool {
        self.gamma_hat.is_none()
    }

    /// The sampling component can be negative under SRS in unlucky samples.
    pub fn negative_sampling(&self) -> bool {
        self.v_sam < 0.0
    }

    pub fn interval(&self, estimate: f64) -> Option<(f64, f64)> {
        confidence_interval(estimate, self.total)
    }
}

/// `[est - 1.96 sqrt(v), est + 1.96 sqrt(v)]`, absent for negative or
/// non-finite `v`.
pub fn confidence_interval(estimate: f64, variance: f64) -> Option<(f64, f64)> {
    if !(variance >= 0.0) || !variance.is_finite() || !estimate.is_finite() {
        return None;
    }
    let half = Z_95 * variance.sqrt();
    Some((estimate - half, estimate + half))
}

/// `sum_{S_r} (1-pi_i)/pi_i^2 z_i^2/p_i
///  + sum_{i != j in S_r} (pi_ij - pi_i pi_j)/(pi_i pi_j pi_ij) (z_i/p_i)(z_j/p_j)`
/// with `units` positions in the sample and `z`, `p` aligned with `units`.
pub fn sampling_term(data: &SurveyData, units: &[usize], z: &[f64], p: &[f64]) -> f64 {
    let pi = data.pi();
    let single: f64 = units
        .iter()
        .zip(z.iter().zip(p))
        .map(|(&k, (z, p))| (1.0 - pi[k]) / (pi[k] * pi[k]) * z * z / p)
        .sum();
    let joint = data.joint();
    if joint.is_independent() {
        return single;
    }
    let mut cross = 0.0;
    for a in 0..units.len() {
        let (i, ai) = (units[a], z[a] / p[a]);
        for b in (a + 1)..units.len() {
            let j = units[b];
            let pij = joint.pair(pi[i], pi[j]);
            cross += (pij - pi[i] * pi[j]) / (pi[i] * pi[j] * pij) * ai * (z[b] / p[b]);
        }
    }
    single + 2.0 * cross
}

/// `sum_{S_r} (1/pi_i^2) ((1 - p_i)/p_i^2) e_i^2`.
pub fn nonresponse_term(data: &SurveyData, units: &[usize], e: &[f64], p: &[f64]) -> f64 {
    let pi = data.pi();
    units
        .iter()
        .zip(e.iter().zip(p))
        .map(|(&k, (e, p))| (1.0 - p) / (pi[k] * pi[k] * p * p) * e * e)
        .sum()
}

/// Full-sample Horvitz-Thompson variance estimator (every sampled unit
/// contributes, no nonresponse).
pub fn ht_variance(data: &SurveyData, y: &[f64]) -> Result<f64> {
    check_len("y", y.len(), data.len())?;
    let units: Vec<usize> = (0..data.len()).collect();
    Ok(sampling_term(data, &units, y, &vec![1.0; data.len()]))
}

struct Parts {
    units: Vec<usize>,
    y: Vec<f64>,
    p: Vec<f64>,
}

fn respondent_parts(data: &SurveyData, y: &[f64], p_hat: &[f64]) -> Result<Parts> {
    check_len("y", y.len(), data.len())?;
    check_len("p_hat", p_hat.len(), data.len())?;
    if let Some(bad) = p_hat.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(crate::error::invalid("p_hat", format!("probabilities must lie in (0, 1], got {bad}")));
    }
    let units: Vec<usize> = data.respondents().collect();
    Ok(Parts {
        y: units.iter().map(|&k| y[k]).collect(),
        p: units.iter().map(|&k| p_hat[k]).collect(),
        units,
    })
}

/// Variance estimator for the likelihood-based NWA estimator with fitted
/// probabilities `p_hat` over the sample.
pub fn var_hat_mle(data: &SurveyData, y: &[f64], p_hat: &[f64], weighting: Weighting) -> Result<VarianceEstimate> {
    let parts = respondent_parts(data, y, p_hat)?;
    let gamma = gamma_hat_mle(data, y, p_hat, weighting).ok();
    let g = gamma.clone().unwrap_or_else(|| vec![0.0; data.q()]);
    let pi = data.pi();
    let e: Vec<f64> = parts
        .units
        .iter()
        .zip(&parts.y)
        .map(|(&k, y)| y - weighting.k(pi[k]) * pi[k] * p_hat[k] * dot(data.x().row(k), &g))
        .collect();
    let v_sam = sampling_term(data, &parts.units, &parts.y, &parts.p);
    let v_nr = nonresponse_term(data, &parts.units, &e, &parts.p);
    Ok(VarianceEstimate::new(v_sam, v_nr, gamma, e))
}

fn calibration_residuals(data: &SurveyData, y: &[f64], p_hat: &[f64], parts: &Parts) -> (Option<Vec<f64>>, Vec<f64>) {
    let gamma = gamma_hat_cal(data, y, p_hat).ok();
    let g = gamma.clone().unwrap_or_else(|| vec![0.0; data.q()]);
    let e = parts
        .units
        .iter()
        .zip(&parts.y)
        .map(|(&k, y)| y - dot(data.x().row(k), &g))
        .collect();
    (gamma, e)
}

/// Variance estimator for population-level calibration: both components
/// use the residuals `e_i = y_i - x_i' gamma_hat`.
pub fn var_hat_cal_u(data: &SurveyData, y: &[f64], p_hat: &[f64]) -> Result<VarianceEstimate> {
    let parts = respondent_parts(data, y, p_hat)?;
    let (gamma, e) = calibration_residuals(data, y, p_hat, &parts);
    let v_sam = sampling_term(data, &parts.units, &e, &parts.p);
    let v_nr = nonresponse_term(data, &parts.units, &e, &parts.p);
    Ok(VarianceEstimate::new(v_sam, v_nr, gamma, e))
}

/// Variance estimator for sample-level calibration: the sampling component
/// uses raw `y`, the nonresponse component the residuals.
pub fn var_hat_cal_s(data: &SurveyData, y: &[f64], p_hat: &[f64]) -> Result<VarianceEstimate> {
    let parts = respondent_parts(data, y, p_hat)?;
    let (gamma, e) = calibration_residuals(data, y, p_hat, &parts);
    let v_sam = sampling_term(data, &parts.units, &parts.y, &parts.p);
    let v_nr = nonresponse_term(data, &parts.units, &e, &parts.p);
    Ok(VarianceEstimate::new(v_sam, v_nr, gamma, e))
}

/// Dispatch on the fitted variant. Unfitted variants have no estimator.
pub fn variance_for(variant: Variant, data: &SurveyData, y: &[f64], fit: &FitResult) -> Result<VarianceEstimate> {
    if !fit.status.is_converged() {
        return Err(Error::NotConverged(fit.status.name()));
    }
    match variant.equation() {
        Some(EquationKind::Mle(w)) => var_hat_mle(data, y, &fit.p_hat, w),
        Some(EquationKind::CalPopulation) => var_hat_cal_u(data, y, &fit.p_hat),
        Some(EquationKind::CalSample) => var_hat_cal_s(data, y, &fit.p_hat),
        None => Err(crate::error::invalid("variant", format!("no variance estimator for `{variant}`"))),
    }
}

pub const CSV_HEADER: [&str; 6] = ["variant", "v_sam", "v_nr", "v_total", "ci_low", "ci_high"];

/// One CSV row per `(variant, estimate, variance)`.
pub fn write_csv<W: Write>(rows: &[(Variant, f64, VarianceEstimate)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for (variant, est, v) in rows {
        let (lo, hi) = match v.interval(*est) {
            Some((lo, hi)) => (format!("{lo:.16e}"), format!("{hi:.16e}")),
            None => (String::new(), String::new()),
        };
        out.write_record([
            variant.name().to_string(),
            format!("{:.16e}", v.v_sam),
            format!("{:.16e}", v.v_nr),
            format!("{:.16e}", v.total),
            lo,
            hi,
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Exact two-phase variance `V_sam + V_nr` of an estimator under known
/// design and response probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoreticalVariance {
    pub variant: Variant,
    pub v_sam: f64,
    pub v_nr: f64,
}

impl TheoreticalVariance {
    pub fn total(&self) -> f64 {
        self.v_sam + self.v_nr
    }
}

fn design_variance(pop_size: usize, design: &DesignSpec, z: &[f64]) -> f64 {
    match design.kind() {
        DesignKind::Poisson => design.pi().iter().zip(z).map(|(pi, z)| (1.0 - pi) / pi * z * z).sum(),
        DesignKind::Srs => {
            let big = pop_size as f64;
            let n = design.n_target();
            let mean = z.iter().sum::<f64>() / big;
            let s2 = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (big - 1.0);
            big * big * (1.0 - n / big) / n * s2
        }
    }
}

/// Exact variance decomposition of `variant` for population `pop` under
/// `design` with true response probabilities `p` over the population.
///
/// The sample-level coefficients of the linearized estimators are replaced
/// by their population analogs: population calibration's for both
/// calibration variants, and
/// `[sum_U pi_i k_i p_i (1-p_i) x_i x_i']^{-1} sum_U (1-p_i) x_i y_i`
/// for the likelihood variants.
pub fn theoretical_variance(pop: &Population, design: &DesignSpec, variant: Variant, p: &[f64]) -> Result<TheoreticalVariance> {
    let size = pop.size();
    check_len("p", p.len(), size)?;
    check_len("design pi", design.pi().len(), size)?;
    let pi = design.pi();
    let y = pop.y();
    let x = pop.aux();

    let fitted_line = |g: &[f64]| -> Vec<f64> { x.rows().map(|r| dot(r, g)).collect() };
    let (z, e): (Vec<f64>, Vec<f64>) = match variant {
        Variant::Ht => (y.to_vec(), vec![0.0; size]),
        Variant::TrueP => (y.to_vec(), y.to_vec()),
        Variant::CalU | Variant::CalS => {
            let fit = gamma_line(gamma_cal_u_n(pop, p), pop.q(), &fitted_line);
            let e: Vec<f64> = y.iter().zip(&fit).map(|(y, f)| y - f).collect();
            let z = if variant == Variant::CalU { e.clone() } else { y.to_vec() };
            (z, e)
        }
        Variant::MleUnit | Variant::MleInvPi => {
            let w = if variant == Variant::MleUnit { Weighting::Unit } else { Weighting::InverseInclusion };
            let lhs: Vec<f64> = (0..size).map(|i| pi[i] * w.k(pi[i]) * p[i] * (1.0 - p[i])).collect();
            let rhs: Vec<f64> = p.iter().map(|p| 1.0 - p).collect();
            let fit = gamma_line(weighted_normal_equations(x, &lhs, &rhs, y), pop.q(), &fitted_line);
            let e = (0..size).map(|i| y[i] - w.k(pi[i]) * pi[i] * p[i] * fit[i]).collect();
            (y.to_vec(), e)
        }
    };
    let v_sam = design_variance(size, design, &z);
    let v_nr = (0..size).map(|i| (1.0 - p[i]) / (pi[i] * p[i]) * e[i] * e[i]).sum();
    Ok(TheoreticalVariance { variant, v_sam, v_nr })
}

fn gamma_line(g: Result<Vec<f64>>, q: usize, line: &dyn Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    line(&g.unwrap_or_else(|_| vec![0.0; q]))
}
