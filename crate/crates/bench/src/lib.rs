//! Fixtures shared by the benchmarks.

use nwa_core::{generate_population, srs_design, GenConfig, Scenario, Variant};

/// The default strong-correlation SRS scenario with `n` sampled units.
pub fn scenario(n: usize, variants: &[Variant]) -> Scenario {
    let pop = generate_population(&GenConfig {
        size: 1000,
        mean_mu: [4.0, 4.0],
        rho: 0.6,
        lambda: [0.1, 0.4],
        seed: 17,
    })
    .expect("valid generator");
    let design = srs_design(pop.size(), n).expect("valid design");
    let mut sc = Scenario::new("bench", pop, design, 1, 17).expect("valid scenario");
    sc.variants = variants.to_vec();
    sc
}
