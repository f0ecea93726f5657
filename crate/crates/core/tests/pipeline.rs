//! The full public pipeline: population, sample, response, fit, estimate,
//! variance.

use nwa_core::estimators::{fit_variant, ht_estimate, nwa_estimate};
use nwa_core::variance::variance_for;
use nwa_core::{
    draw_response, draw_sample, FitStatus, generate_population, poisson_design, population_total, srs_design, GenConfig, Population,
    SolverControls, SurveyData, Variant,
};

fn population() -> Population {
    generate_population(&GenConfig { size: 1000, mean_mu: [4.0, 4.0], rho: 0.6, lambda: [0.1, 0.4], seed: 99 }).unwrap()
}

fn draw(pop: &Population, poisson: bool, seed: u64) -> (SurveyData, Vec<f64>) {
    let design = if poisson { poisson_design(pop, 100.0).unwrap() } else { srs_design(pop.size(), 100).unwrap() };
    let sample = draw_sample(&design, seed);
    let p: Vec<f64> = sample.indices().iter().map(|&i| pop.true_p()[i]).collect();
    let response = draw_response(&sample, &p, seed + 1).unwrap();
    let y = sample.indices().iter().map(|&i| pop.y()[i]).collect();
    (SurveyData::from_sample(pop, &sample, &response).unwrap(), y)
}

#[test]
fn every_fitted_variant_lands_near_the_total() {
    let pop = population();
    let truth = population_total(&pop);
    let totals = [pop.size() as f64, pop.aux().rows().map(|r| r[1]).sum()];
    for poisson in [false, true] {
        let (data, y) = draw(&pop, poisson, 5);
        for v in Variant::FITTED {
            let fit = fit_variant(v, &data, Some(&totals), &SolverControls::default()).unwrap();
            assert!(fit.status.is_converged(), "{v}: {:?}", fit.status);
            let est = nwa_estimate(v, &data, &y, &fit).unwrap();
            let var = variance_for(v, &data, &y, &fit).unwrap();
            assert!(var.total > 0.0);
            // Ten standard errors: a sanity bound on one draw.
            assert!((est.value - truth).abs() < 10.0 * var.total.sqrt(), "{v}: {} vs {truth}", est.value);
            assert_eq!(est.respondent_count(), data.respondents().count());
        }
    }
}

#[test]
fn full_response_calibration_to_sample_has_no_finite_root() {
    let pop = population();
    let design = srs_design(pop.size(), 100).unwrap();
    let sample = draw_sample(&design, 11);
    let full = nwa_core::RespondentSet::full(sample.len());
    let data = SurveyData::from_sample(&pop, &sample, &full).unwrap();
    let y: Vec<f64> = sample.indices().iter().map(|&i| pop.y()[i]).collect();
    let fit = fit_variant(Variant::CalS, &data, None, &SolverControls::default()).unwrap();
    assert_eq!(fit.status, FitStatus::Diverged);
    assert!(nwa_estimate(Variant::CalS, &data, &y, &fit).is_err());
    assert!(variance_for(Variant::CalS, &data, &y, &fit).is_err());
    assert!(ht_estimate(&data, &y).unwrap() > 0.0);
}
