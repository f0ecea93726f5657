//! Estimators of the population total.
//!
//! All vectors indexed "over the sample" are aligned with the rows of a
//! [`SurveyData`]. Values of `y` at nonrespondents are never read by the
//! production estimators; the simulation diagnostics in [`diagnostics`] do
//! read them.

use std::fmt;
use std::io::Write;

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{dot, weighted_normal_equations};
use crate::solver::{solve, EquationKind, EstimatingEquation, FitResult, SolverControls, Weighting};
use crate::survey::SurveyData;

/// The six estimators compared in the simulation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Full-sample Horvitz-Thompson, unavailable under nonresponse.
    Ht,
    /// Double expansion with the true response probabilities.
    TrueP,
    MleUnit,
    MleInvPi,
    CalU,
    CalS,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Ht,
        Variant::TrueP,
        Variant::MleUnit,
        Variant::MleInvPi,
        Variant::CalU,
        Variant::CalS,
    ];

    /// Variants whose response probabilities are fitted.
    pub const FITTED: [Variant; 4] = [Variant::MleUnit, Variant::MleInvPi, Variant::CalU, Variant::CalS];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ht => "HT",
            Variant::TrueP => "p",
            Variant::MleUnit => "mle_1",
            Variant::MleInvPi => "mle_1/pi",
            Variant::CalU => "cal_U",
            Variant::CalS => "cal_S",
        }
    }

    pub fn equation(self) -> Option<EquationKind> {
        match self {
            Variant::Ht | Variant::TrueP => None,
            Variant::MleUnit => Some(EquationKind::Mle(Weighting::Unit)),
            Variant::MleInvPi => Some(EquationKind::Mle(Weighting::InverseInclusion)),
            Variant::CalU => Some(EquationKind::CalPopulation),
            Variant::CalS => Some(EquationKind::CalSample),
        }
    }

    pub fn is_fitted(self) -> bool {
        self.equation().is_some()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name().to_ascii_lowercase() == key)
            .or(match key.as_str() {
                "truep" => Some(Variant::TrueP),
                "mle_k1" => Some(Variant::MleUnit),
                "mle_kinvpi" => Some(Variant::MleInvPi),
                _ => None,
            })
            .ok_or_else(|| invalid("variant", format!("unknown estimator `{s}`; expected one of HT, p, mle_1, mle_1/pi, cal_U, cal_S")))
    }
}

/// A weighted total over the contributing units with its final weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRecord {
    pub variant: Variant,
    pub value: f64,
    /// Positions (within the sample) of the contributing units.
    pub units: Vec<usize>,
    /// Final weights aligned with `units`.
    pub weights: Vec<f64>,
    pub sample_size: usize,
    pub fit: Option<FitResult>,
}

impl EstimateRecord {
    pub fn respondent_count(&self) -> usize {
        self.units.len()
    }

    pub fn max_weight(&self) -> Option<f64> {
        self.weights.iter().copied().reduce(f64::max)
    }

    pub const CSV_HEADER: [&'static str; 7] = ["variant", "value", "n", "n_r", "max_weight", "status", "iterations"];

    pub fn csv_row(&self) -> [String; 7] {
        let (status, iterations) = match &self.fit {
            Some(f) => (f.status.name().to_string(), f.iterations.to_string()),
            None => ("-".to_string(), "0".to_string()),
        };
        [
            self.variant.name().to_string(),
            format!("{:.16e}", self.value),
            self.sample_size.to_string(),
            self.units.len().to_string(),
            self.max_weight().map(|w| format!("{w:.16e}")).unwrap_or_default(),
            status,
            iterations,
        ]
    }

    pub fn write_csv<W: Write>(records: &[EstimateRecord], w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::CSV_HEADER)?;
        for r in records {
            out.write_record(r.csv_row())?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `sum_S y_i / pi_i`.
pub fn ht_estimate(data: &SurveyData, y: &[f64]) -> Result<f64> {
    check_len("y", y.len(), data.len())?;
    Ok(y.iter().zip(data.pi()).map(|(y, p)| y / p).sum())
}

/// `sum_{S_r} y_i / (pi_i p_i)` with known response probabilities.
pub fn two_phase_estimate(data: &SurveyData, y: &[f64], p: &[f64]) -> Result<f64> {
    Ok(double_expansion(Variant::TrueP, data, y, p)?.value)
}

/// The weighted total `sum_{S_r} y_i / (pi_i p_i)` with arbitrary response
/// probabilities `p` over the sample.
pub fn double_expansion(variant: Variant, data: &SurveyData, y: &[f64], p: &[f64]) -> Result<EstimateRecord> {
    check_len("y", y.len(), data.len())?;
    check_len("p", p.len(), data.len())?;
    if let Some(bad) = p.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
        return Err(invalid("p", format!("response probabilities must lie in (0, 1], got {bad}")));
    }
    let units: Vec<usize> = data.respondents().collect();
    let weights: Vec<f64> = units.iter().map(|&k| 1.0 / (data.pi()[k] * p[k])).collect();
    let value = units.iter().zip(&weights).map(|(&k, w)| w * y[k]).sum();
    Ok(EstimateRecord {
        variant,
        value,
        units,
        weights,
        sample_size: data.len(),
        fit: None,
    })
}

/// The NWA estimator `sum_{S_r} y_i / (pi_i p_hat_i)`. Refuses a fit that
/// did not converge.
pub fn nwa_estimate(variant: Variant, data: &SurveyData, y: &[f64], fit: &FitResult) -> Result<EstimateRecord> {
    if !fit.status.is_converged() {
        return Err(Error::NotConverged(fit.status.name()));
    }
    let mut rec = double_expansion(variant, data, y, &fit.p_hat)?;
    rec.fit = Some(fit.clone());
    Ok(rec)
}

/// Fit the response model of a fitted `variant`. Population calibration
/// needs `pop_totals = sum_U x`.
pub fn fit_variant(variant: Variant, data: &SurveyData, pop_totals: Option<&[f64]>, controls: &SolverControls) -> Result<FitResult> {
    let eq = match variant.equation() {
        Some(EquationKind::Mle(w)) => EstimatingEquation::mle(data, w),
        Some(EquationKind::CalPopulation) => {
            let t = pop_totals.ok_or_else(|| invalid("pop_totals", "population calibration needs the totals sum_U x"))?;
            EstimatingEquation::calibration_population(data, t)?
        }
        Some(EquationKind::CalSample) => EstimatingEquation::calibration_sample(data),
        None => return Err(invalid("variant", format!("`{variant}` has no response model to fit"))),
    };
    Ok(solve(&eq, controls))
}

/// `gamma_hat^{mle} = {sum_{S_r} k_i (1 - p_i) x_i x_i'}^{-1}
/// sum_{S_r} (1/pi_i) (1 - p_i)/p_i x_i y_i` with fitted `p_hat`.
pub fn gamma_hat_mle(data: &SurveyData, y: &[f64], p_hat: &[f64], weighting: Weighting) -> Result<Vec<f64>> {
    let resp: Vec<usize> = data.respondents().collect();
    let lhs: Vec<f64> = resp.iter().map(|&k| weighting.k(data.pi()[k]) * (1.0 - p_hat[k])).collect();
    let rhs: Vec<f64> = resp.iter().map(|&k| (1.0 - p_hat[k]) / (data.pi()[k] * p_hat[k])).collect();
    let ys: Vec<f64> = resp.iter().map(|&k| y[k]).collect();
    weighted_normal_equations(&data.x().select(&resp), &lhs, &rhs, &ys)
}

/// `gamma_hat^{cal}`: respondent regression with weights
/// `(1/pi_i) (1 - p_i)/p_i` on both sides.
pub fn gamma_hat_cal(data: &SurveyData, y: &[f64], p_hat: &[f64]) -> Result<Vec<f64>> {
    let resp: Vec<usize> = data.respondents().collect();
    let w: Vec<f64> = resp.iter().map(|&k| (1.0 - p_hat[k]) / (data.pi()[k] * p_hat[k])).collect();
    let ys: Vec<f64> = resp.iter().map(|&k| y[k]).collect();
    weighted_normal_equations(&data.x().select(&resp), &w, &w, &ys)
}

/// Theory diagnostics that need the true response probabilities and, for
/// population-level calibration, every unit of the population. None of this
/// is observable in a real survey.
pub mod diagnostics {
    use super::*;
    use crate::population::Population;

    /// Coefficients of the linearized estimators. A coefficient is `None`
    /// when its normal equations are singular or its inputs were not given.
    #[derive(Clone, Debug, Default, PartialEq)]
    pub struct GammaCoefficients {
        pub mle_n: Option<Vec<f64>>,
        pub cal_u_n: Option<Vec<f64>>,
        pub cal_s_n: Option<Vec<f64>>,
        pub hat_mle: Option<Vec<f64>>,
        pub hat_cal: Option<Vec<f64>>,
    }

    /// `gamma^{mle}_n = [sum_S k_i p_i (1 - p_i) x_i x_i']^{-1}
    /// sum_S (1 - p_i)/pi_i x_i y_i`.
    pub fn gamma_mle_n(data: &SurveyData, y: &[f64], p: &[f64], weighting: Weighting) -> Result<Vec<f64>> {
        check_len("y", y.len(), data.len())?;
        check_len("p", p.len(), data.len())?;
        let lhs: Vec<f64> = (0..data.len()).map(|k| weighting.k(data.pi()[k]) * p[k] * (1.0 - p[k])).collect();
        let rhs: Vec<f64> = (0..data.len()).map(|k| (1.0 - p[k]) / data.pi()[k]).collect();
        weighted_normal_equations(data.x(), &lhs, &rhs, y)
    }

    /// `gamma^{cal,U}_n = [sum_U (1 - p_i) x_i x_i']^{-1} sum_U (1 - p_i) x_i y_i`.
    pub fn gamma_cal_u_n(pop: &Population, p: &[f64]) -> Result<Vec<f64>> {
        check_len("p", p.len(), pop.size())?;
        let w: Vec<f64> = p.iter().map(|p| 1.0 - p).collect();
        weighted_normal_equations(pop.aux(), &w, &w, pop.y())
    }

    /// `gamma^{cal,S}_n = (sum_S (1 - p_i)/pi_i x_i x_i')^{-1}
    /// sum_S (1 - p_i)/pi_i x_i y_i`.
    pub fn gamma_cal_s_n(data: &SurveyData, y: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        check_len("y", y.len(), data.len())?;
        check_len("p", p.len(), data.len())?;
        let w: Vec<f64> = (0..data.len()).map(|k| (1.0 - p[k]) / data.pi()[k]).collect();
        weighted_normal_equations(data.x(), &w, &w, y)
    }

    /// Every coefficient that the supplied inputs allow.
    pub fn gamma_coefficients(
        pop: Option<&Population>,
        data: &SurveyData,
        y: &[f64],
        p: &[f64],
        p_hat: Option<&[f64]>,
        weighting: Weighting,
    ) -> GammaCoefficients {
        GammaCoefficients {
            mle_n: gamma_mle_n(data, y, p, weighting).ok(),
            cal_u_n: pop.and_then(|pop| gamma_cal_u_n(pop, pop.true_p()).ok()),
            cal_s_n: gamma_cal_s_n(data, y, p).ok(),
            hat_mle: p_hat.and_then(|ph| gamma_hat_mle(data, y, ph, weighting).ok()),
            hat_cal: p_hat.and_then(|ph| gamma_hat_cal(data, y, ph).ok()),
        }
    }

    /// Linearized form of the NWA estimator for `kind`, evaluated with the
    /// true `p` over the sample and coefficient `gamma`.
    ///
    /// * likelihood: `sum_S (1/pi_i)[k_i pi_i p_i x_i'g + (r_i/p_i)(y_i - k_i pi_i p_i x_i'g)]`
    /// * population calibration: `sum_U x_i'g + sum_{S_r} (y_i - x_i'g)/(pi_i p_i)`,
    ///   which needs `aux_totals = sum_U x_i`
    /// * sample calibration: `sum_S (1/pi_i)[x_i'g + (r_i/p_i)(y_i - x_i'g)]`
    pub fn linearized_estimate(
        kind: EquationKind,
        data: &SurveyData,
        y: &[f64],
        p: &[f64],
        gamma: &[f64],
        aux_totals: Option<&[f64]>,
    ) -> Result<f64> {
        check_len("y", y.len(), data.len())?;
        check_len("p", p.len(), data.len())?;
        check_len("gamma", gamma.len(), data.q())?;
        let x = data.x();
        let pi = data.pi();
        let r = data.r();
        let value = match kind {
            EquationKind::Mle(w) => (0..data.len())
                .map(|k| {
                    let m = w.k(pi[k]) * pi[k] * p[k] * dot(x.row(k), gamma);
                    let resid = if r[k] { (y[k] - m) / p[k] } else { 0.0 };
                    (m + resid) / pi[k]
                })
                .sum(),
            EquationKind::CalPopulation => {
                let totals = aux_totals.ok_or_else(|| invalid("aux_totals", "population calibration needs sum_U x"))?;
                check_len("aux_totals", totals.len(), data.q())?;
                dot(totals, gamma)
                    + data
                        .respondents()
                        .map(|k| (y[k] - dot(x.row(k), gamma)) / (pi[k] * p[k]))
                        .sum::<f64>()
            }
            EquationKind::CalSample => (0..data.len())
                .map(|k| {
                    let m = dot(x.row(k), gamma);
                    let resid = if r[k] { (y[k] - m) / p[k] } else { 0.0 };
                    (m + resid) / pi[k]
                })
                .sum(),
        };
        Ok(value)
    }
}
