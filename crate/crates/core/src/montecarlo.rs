//! Design-based Monte Carlo: repeated sampling from a fixed population,
//! nonresponse, estimation, and aggregation into relative bias, relative
//! root variance, variance bias, interval coverage and weight extremes.

use rayon::prelude::*;

use crate::design::DesignSpec;
use crate::error::{check_len, invalid, Result};
use crate::estimators::diagnostics::{gamma_cal_s_n, gamma_cal_u_n, gamma_mle_n, linearized_estimate};
use crate::estimators::{double_expansion, fit_variant, nwa_estimate, Variant};
use crate::population::Population;
use crate::response::draw_response;
use crate::rng::{derive_seed, StreamTag};
use crate::solver::{EquationKind, FitStatus, SolverControls};
use crate::survey::SurveyData;
use crate::variance::{confidence_interval, ht_variance, variance_for};

/// A fixed population, a design and everything needed to replicate.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub label: String,
    pub variants: Vec<Variant>,
    pub reps: usize,
    pub master_seed: u64,
    pub controls: SolverControls,
    /// Also evaluate the linearized estimators (needs the true `p`).
    pub diagnostics: bool,
    population: Population,
    design: DesignSpec,
    aux_totals: Vec<f64>,
    gamma_cal_u: Option<Vec<f64>>,
}

impl Scenario {
    pub fn new(label: impl Into<String>, population: Population, design: DesignSpec, reps: usize, master_seed: u64) -> Result<Self> {
        check_len("design pi", design.population_size(), population.size())?;
        if reps == 0 {
            return Err(invalid("reps", "need at least one replicate"));
        }
        Ok(Self {
            label: label.into(),
            variants: Variant::ALL.to_vec(),
            reps,
            master_seed,
            controls: SolverControls::default(),
            diagnostics: false,
            aux_totals: population.aux_totals(),
            gamma_cal_u: gamma_cal_u_n(&population, population.true_p()).ok(),
            population,
            design,
        })
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn design(&self) -> &DesignSpec {
        &self.design
    }

    /// `sum_U x`, the population-calibration target.
    pub fn aux_totals(&self) -> &[f64] {
        &self.aux_totals
    }
}

/// Everything retained about one variant in one replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantOutcome {
    pub estimate: f64,
    pub v_sam: Option<f64>,
    pub v_nr: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub max_weight: f64,
    pub iterations: usize,
    /// `|estimate - linearized estimate| / N` when diagnostics are on.
    pub linearization_gap: Option<f64>,
}

impl VariantOutcome {
    pub fn v_total(&self) -> Option<f64> {
        Some(self.v_sam? + self.v_nr.unwrap_or(0.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Ok(VariantOutcome),
    /// The response-model fit ended without converging.
    Failed(FitStatus),
    /// Fewer respondents than auxiliaries; no fit attempted.
    Insufficient,
}

impl Outcome {
    pub fn status_name(&self) -> &'static str {
        match self {
            Outcome::Ok(_) => "ok",
            Outcome::Failed(s) => s.name(),
            Outcome::Insufficient => "insufficient",
        }
    }

    pub fn ok(&self) -> Option<&VariantOutcome> {
        match self {
            Outcome::Ok(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRecord {
    pub index: usize,
    pub sample_size: usize,
    pub respondents: usize,
    pub outcomes: Vec<(Variant, Outcome)>,
}

impl ReplicateRecord {
    pub fn outcome(&self, v: Variant) -> Option<&Outcome> {
        self.outcomes.iter().find(|(w, _)| *w == v).map(|(_, o)| o)
    }
}

/// The realized survey of replicate `index`: sampled units with their
/// response indicators, `y` and true response probabilities over `S`.
pub fn replicate_data(sc: &Scenario, index: usize) -> (SurveyData, Vec<f64>, Vec<f64>) {
    let pop = &sc.population;
    let sample = crate::design::draw_sample(&sc.design, derive_seed(sc.master_seed, index as u64, StreamTag::Sampling));
    let p: Vec<f64> = sample.indices().iter().map(|&i| pop.true_p()[i]).collect();
    let y: Vec<f64> = sample.indices().iter().map(|&i| pop.y()[i]).collect();
    let response = draw_response(&sample, &p, derive_seed(sc.master_seed, index as u64, StreamTag::Response))
        .expect("population probabilities lie in (0, 1)");
    let data = SurveyData::from_sample(pop, &sample, &response).expect("sample drawn from this population");
    (data, y, p)
}

/// One replicate: draw `S`, draw `S_r`, fit and estimate every variant.
/// Fit failures are recorded, never propagated.
pub fn run_replicate(sc: &Scenario, index: usize) -> ReplicateRecord {
    let (data, y, p) = replicate_data(sc, index);
    let outcomes = sc.variants.iter().map(|&v| (v, evaluate(sc, &data, &y, &p, v))).collect();
    ReplicateRecord {
        index,
        sample_size: data.len(),
        respondents: data.respondent_count(),
        outcomes,
    }
}

fn evaluate(sc: &Scenario, data: &SurveyData, y: &[f64], p: &[f64], variant: Variant) -> Outcome {
    match variant.equation() {
        None => {
            let (estimate, max_weight, v_sam) = if variant == Variant::Ht {
                let est = crate::estimators::ht_estimate(data, y).unwrap_or(f64::NAN);
                let w = data.pi().iter().map(|pi| 1.0 / pi).fold(f64::NAN, f64::max);
                (est, w, ht_variance(data, y).ok())
            } else {
                match double_expansion(variant, data, y, p) {
                    Ok(r) => (r.value, r.max_weight().unwrap_or(f64::NAN), None),
                    Err(_) => return Outcome::Insufficient,
                }
            };
            Outcome::Ok(VariantOutcome {
                estimate,
                v_sam,
                v_nr: v_sam.map(|_| 0.0),
                ci: v_sam.and_then(|v| confidence_interval(estimate, v)),
                max_weight,
                iterations: 0,
                linearization_gap: None,
            })
        }
        Some(kind) => {
            if data.respondent_count() < data.q() {
                return Outcome::Insufficient;
            }
            let fit = fit_variant(variant, data, Some(&sc.aux_totals), &sc.controls).expect("fitted variant with totals of length q");
            let rec = match nwa_estimate(variant, data, y, &fit) {
                Ok(r) => r,
                Err(_) => return Outcome::Failed(fit.status),
            };
            let var = variance_for(variant, data, y, &fit).ok();
            let linearization_gap = if sc.diagnostics { linearization_gap(sc, data, y, p, kind, rec.value) } else { None };
            Outcome::Ok(VariantOutcome {
                estimate: rec.value,
                v_sam: var.as_ref().map(|v| v.v_sam),
                v_nr: var.as_ref().map(|v| v.v_nr),
                ci: var.as_ref().and_then(|v| v.interval(rec.value)),
                max_weight: rec.max_weight().unwrap_or(f64::NAN),
                iterations: fit.iterations,
                linearization_gap,
            })
        }
    }
}

fn linearization_gap(sc: &Scenario, data: &SurveyData, y: &[f64], p: &[f64], kind: EquationKind, estimate: f64) -> Option<f64> {
    let gamma = match kind {
        EquationKind::Mle(w) => gamma_mle_n(data, y, p, w).ok()?,
        EquationKind::CalPopulation => sc.gamma_cal_u.clone()?,
        EquationKind::CalSample => gamma_cal_s_n(data, y, p).ok()?,
    };
    let lin = linearized_estimate(kind, data, y, p, &gamma, Some(&sc.aux_totals)).ok()?;
    Some((estimate - lin).abs() / sc.population.size() as f64)
}

/// Monte Carlo aggregates for one variant. Metrics that need at least one
/// (or two) usable replicates are `None` otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantSummary {
    pub variant: Variant,
    pub replicates: usize,
    /// Replicates contributing to the point metrics.
    pub used: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub mean_estimate: Option<f64>,
    pub rb: Option<f64>,
    /// Monte Carlo standard error of `rb`.
    pub rb_se: Option<f64>,
    pub rrvar: Option<f64>,
    pub mc_variance: Option<f64>,
    pub mean_v_hat: Option<f64>,
    /// Standard error of `mean_v_hat`.
    pub v_hat_se: Option<f64>,
    pub var_rb: Option<f64>,
    pub intervals: usize,
    pub mean_ci_length: Option<f64>,
    pub coverage: Option<f64>,
    pub max_weight: Option<f64>,
    pub median_linearization_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyReport {
    pub label: String,
    pub design: &'static str,
    pub rho: Option<f64>,
    pub population_size: usize,
    pub n_target: f64,
    pub reps: usize,
    pub master_seed: u64,
    pub population_total: f64,
    pub mean_respondents: f64,
    pub summaries: Vec<VariantSummary>,
    pub records: Vec<ReplicateRecord>,
}

impl StudyReport {
    pub fn summary(&self, v: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == v)
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Unbiased sample variance; needs two values.
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    Some(values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64)
}

/// `(mean - Y) / Y`.
pub fn relative_bias(estimates: &[f64], truth: f64) -> Option<f64> {
    Some((mean(estimates)? - truth) / truth)
}

/// `sqrt(sample variance) / Y`.
pub fn relative_root_variance(estimates: &[f64], truth: f64) -> Option<f64> {
    Some(sample_variance(estimates)?.sqrt() / truth.abs())
}

/// `(mean V_hat - V_mc) / V_mc`.
pub fn variance_relative_bias(v_hats: &[f64], estimates: &[f64]) -> Option<f64> {
    let mc = sample_variance(estimates)?;
    Some((mean(v_hats)? - mc) / mc)
}

/// Fraction of intervals containing `truth`.
pub fn coverage_rate(intervals: &[(f64, f64)], truth: f64) -> Option<f64> {
    if intervals.is_empty() {
        return None;
    }
    let hit = intervals.iter().filter(|(lo, hi)| *lo <= truth && truth <= *hi).count();
    Some(hit as f64 / intervals.len() as f64)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Aggregate the records of one variant. Records are read in the given
/// order; only order-insensitive statistics are formed.
pub fn summarize(variant: Variant, records: &[ReplicateRecord], truth: f64) -> VariantSummary {
    let mut est = Vec::new();
    let mut v_hat = Vec::new();
    let mut cis = Vec::new();
    let mut gaps = Vec::new();
    let mut max_weight: Option<f64> = None;
    let mut failures = 0;
    let mut seen = 0;
    for r in records {
        let Some(o) = r.outcome(variant) else { continue };
        seen += 1;
        let Some(o) = o.ok() else {
            failures += 1;
            continue;
        };
        est.push(o.estimate);
        if let Some(v) = o.v_total() {
            v_hat.push(v);
        }
        if let Some(ci) = o.ci {
            cis.push(ci);
        }
        if let Some(g) = o.linearization_gap {
            gaps.push(g);
        }
        max_weight = Some(max_weight.map_or(o.max_weight, |m| m.max(o.max_weight)));
    }
    let mc_variance = sample_variance(&est);
    let mean_v_hat = mean(&v_hat);
    VariantSummary {
        variant,
        replicates: seen,
        used: est.len(),
        failures,
        failure_rate: if seen == 0 { 0.0 } else { failures as f64 / seen as f64 },
        mean_estimate: mean(&est),
        rb: relative_bias(&est, truth),
        rb_se: mc_variance.map(|v| (v / est.len() as f64).sqrt() / truth.abs()),
        rrvar: relative_root_variance(&est, truth),
        mc_variance,
        mean_v_hat,
        v_hat_se: sample_variance(&v_hat).map(|v| (v / v_hat.len() as f64).sqrt()),
        var_rb: if v_hat.is_empty() { None } else { variance_relative_bias(&v_hat, &est) },
        intervals: cis.len(),
        mean_ci_length: mean(&cis.iter().map(|(lo, hi)| hi - lo).collect::<Vec<_>>()),
        coverage: coverage_rate(&cis, truth),
        max_weight,
        median_linearization_gap: median(gaps),
    }
}

/// Run every replicate (in parallel on the current rayon pool) and reduce
/// them in replicate order.
pub fn run_study(sc: &Scenario) -> StudyReport {
    let records: Vec<ReplicateRecord> = (0..sc.reps).into_par_iter().map(|r| run_replicate(sc, r)).collect();
    let truth = sc.population.total();
    let summaries = sc.variants.iter().map(|&v| summarize(v, &records, truth)).collect();
    let mean_respondents = records.iter().map(|r| r.respondents as f64).sum::<f64>() / records.len() as f64;
    StudyReport {
        label: sc.label.clone(),
        design: sc.design.kind().name(),
        rho: sc.population.rho(),
        population_size: sc.population.size(),
        n_target: sc.design.n_target(),
        reps: sc.reps,
        master_seed: sc.master_seed,
        population_total: truth,
        mean_respondents,
        summaries,
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{poisson_design, srs_design};
    use crate::population::{generate_population, GenConfig};

    fn srs_scenario(reps: usize, seed: u64) -> Scenario {
        let pop = generate_population(&GenConfig::default()).unwrap();
        let design = srs_design(pop.size(), 100).unwrap();
        Scenario::new("srs", pop, design, reps, seed).unwrap()
    }

    #[test]
    fn two_point_metrics() {
        let e = [90.0, 110.0];
        assert_eq!(relative_bias(&e, 100.0), Some(0.0));
        let rr = relative_root_variance(&e, 100.0).unwrap();
        assert!((rr - 200f64.sqrt() / 100.0).abs() < 1e-15);
        assert_eq!(relative_root_variance(&[1.0], 1.0), None);
        assert_eq!(coverage_rate(&[(99.0, 101.0); 4], 100.0), Some(1.0));
        assert_eq!(coverage_rate(&[], 100.0), None);
        assert_eq!(relative_bias(&[], 1.0), None);
    }

    #[test]
    fn exact_estimates_give_zero_bias_and_full_coverage() {
        let recs: Vec<ReplicateRecord> = (0..5)
            .map(|i| ReplicateRecord {
                index: i,
                sample_size: 10,
                respondents: 10,
                outcomes: vec![(
                    Variant::CalS,
                    Outcome::Ok(VariantOutcome {
                        estimate: 50.0,
                        v_sam: Some(1.0),
                        v_nr: Some(0.0),
                        ci: confidence_interval(50.0, 1.0),
                        max_weight: 3.0,
                        iterations: 4,
                        linearization_gap: None,
                    }),
                )],
            })
            .collect();
        let s = summarize(Variant::CalS, &recs, 50.0);
        assert_eq!((s.rb, s.rrvar, s.coverage), (Some(0.0), Some(0.0), Some(1.0)));
        assert_eq!(s.failure_rate, 0.0);
    }

    #[test]
    fn failures_are_excluded_and_counted() {
        let ok = |e| Outcome::Ok(VariantOutcome {
            estimate: e,
            v_sam: None,
            v_nr: None,
            ci: None,
            max_weight: 2.0,
            iterations: 1,
            linearization_gap: None,
        });
        let recs = vec![
            ReplicateRecord { index: 0, sample_size: 3, respondents: 2, outcomes: vec![(Variant::CalU, ok(9.0))] },
            ReplicateRecord { index: 1, sample_size: 3, respondents: 2, outcomes: vec![(Variant::CalU, Outcome::Failed(FitStatus::Diverged))] },
            ReplicateRecord { index: 2, sample_size: 3, respondents: 2, outcomes: vec![(Variant::CalU, ok(11.0))] },
            ReplicateRecord { index: 3, sample_size: 3, respondents: 0, outcomes: vec![(Variant::CalU, Outcome::Insufficient)] },
        ];
        let s = summarize(Variant::CalU, &recs, 10.0);
        assert_eq!((s.used, s.failures, s.failure_rate), (2, 2, 0.5));
        assert_eq!(s.rb, Some(0.0));
        assert_eq!(s.coverage, None);
    }

    #[test]
    fn replicate_is_deterministic() {
        let sc = srs_scenario(1, 42);
        assert_eq!(run_replicate(&sc, 7), run_replicate(&sc, 7));
        assert_ne!(run_replicate(&sc, 7), run_replicate(&sc, 8));
    }

    #[test]
    fn full_response_population_flags_fitted_variants() {
        let pop = generate_population(&GenConfig::default()).unwrap().with_lambda(vec![30.0, 0.0]).unwrap();
        let design = srs_design(pop.size(), 100).unwrap();
        let sc = Scenario::new("full", pop, design, 1, 3).unwrap();
        let rec = run_replicate(&sc, 0);
        assert_eq!(rec.respondents, rec.sample_size);
        for (v, o) in &rec.outcomes {
            if *v == Variant::CalU {
                // Calibrating to N when the HT count already equals N has no
                // finite solution; the solver stalls or runs off.
                assert!(matches!(o, Outcome::Failed(_)), "{v}");
            } else if v.is_fitted() {
                assert_eq!(*o, Outcome::Failed(FitStatus::Diverged), "{v}");
            } else {
                assert!(o.ok().is_some());
            }
        }
    }

    #[test]
    fn respondent_rate_near_eighty_four_percent() {
        let sc = srs_scenario(400, 5);
        let rep = run_study(&sc);
        assert!((rep.mean_respondents - 84.0).abs() < 2.5, "{}", rep.mean_respondents);
    }

    #[test]
    fn report_independent_of_thread_count() {
        let sc = srs_scenario(64, 9);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_study(&sc));
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| run_study(&sc));
        assert_eq!(one, four);
    }

    #[test]
    fn aggregation_ignores_record_order() {
        let sc = srs_scenario(40, 13);
        let rep = run_study(&sc);
        let mut rev = rep.records.clone();
        rev.reverse();
        let a = summarize(Variant::CalS, &rep.records, rep.population_total);
        let b = summarize(Variant::CalS, &rev, rep.population_total);
        assert_eq!(a.used, b.used);
        assert_eq!(a.coverage, b.coverage);
        assert_eq!(a.max_weight, b.max_weight);
        let rel = |x: Option<f64>, y: Option<f64>| (x.unwrap() - y.unwrap()).abs() <= 1e-12 * x.unwrap().abs().max(1e-300);
        assert!(rel(a.mean_estimate, b.mean_estimate));
        assert!(rel(a.mc_variance, b.mc_variance));
    }

    #[test]
    fn poisson_scenario_runs() {
        let pop = generate_population(&GenConfig::default()).unwrap();
        let design = poisson_design(&pop, 100.0).unwrap();
        let sc = Scenario::new("poisson", pop, design, 20, 1).unwrap();
        let rep = run_study(&sc);
        assert_eq!(rep.summaries.len(), 6);
        assert!(rep.summary(Variant::Ht).unwrap().used == 20);
    }
}
