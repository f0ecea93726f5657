//! Sampling designs: first- and second-order inclusion probabilities and
//! sample selection.

use std::io::Write;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::population::Population;
use crate::rng;

/// Lower clamp on Poisson inclusion probabilities.
pub const PI_MIN: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DesignKind {
    /// Simple random sampling without replacement.
    Srs,
    Poisson,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Srs => "srs",
            DesignKind::Poisson => "poisson",
        }
    }
}

impl std::str::FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "srs" | "srswor" => Ok(DesignKind::Srs),
            "poisson" => Ok(DesignKind::Poisson),
            other => Err(invalid("design", format!("expected srs or poisson, got `{other}`"))),
        }
    }
}

/// Closed-form second-order inclusion probabilities; the `N x N` matrix is
/// never materialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JointInclusion {
    /// `pi_ij = n(n-1) / (N(N-1))` for `i != j`.
    Srs { population: usize, sample: usize },
    /// `pi_ij = pi_i pi_j` for `i != j`.
    Poisson,
}

impl JointInclusion {
    /// `pi_ij` for two distinct units with first-order probabilities
    /// `pi_i`, `pi_j`.
    #[inline]
    pub fn pair(&self, pi_i: f64, pi_j: f64) -> f64 {
        match *self {
            JointInclusion::Srs { population, sample } => {
                let (n, big) = (sample as f64, population as f64);
                n * (n - 1.0) / (big * (big - 1.0))
            }
            JointInclusion::Poisson => pi_i * pi_j,
        }
    }

    /// True when `pi_ij - pi_i pi_j` vanishes for every pair.
    pub fn is_independent(&self) -> bool {
        matches!(self, JointInclusion::Poisson)
    }
}

/// A sampling design over a population of `N` units.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignSpec {
    kind: DesignKind,
    pi: Vec<f64>,
    n_target: f64,
}

impl DesignSpec {
    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn population_size(&self) -> usize {
        self.pi.len()
    }

    /// Fixed sample size (SRS) or expected sample size (Poisson).
    pub fn n_target(&self) -> f64 {
        self.n_target
    }

    pub fn joint(&self) -> JointInclusion {
        match self.kind {
            DesignKind::Srs => JointInclusion::Srs {
                population: self.pi.len(),
                sample: self.n_target.round() as usize,
            },
            DesignKind::Poisson => JointInclusion::Poisson,
        }
    }
}

/// Simple random sampling without replacement of `n` out of `N` units.
pub fn srs_design(population: usize, n: usize) -> Result<DesignSpec> {
    if n == 0 || n >= population {
        return Err(invalid("n", format!("must satisfy 0 < n < N = {population}, got {n}")));
    }
    let pi = n as f64 / population as f64;
    Ok(DesignSpec {
        kind: DesignKind::Srs,
        pi: vec![pi; population],
        n_target: n as f64,
    })
}

/// Poisson sampling with `pi_i` proportional to `1 / x_i1^2`, expected size
/// `n`. Probabilities are clamped to `[PI_MIN, 1]` and the unclamped units
/// rescaled until the clamp set stops changing.
pub fn poisson_design(pop: &Population, n: f64) -> Result<DesignSpec> {
    if pop.q() < 2 {
        return Err(invalid("aux", "Poisson design needs a non-intercept auxiliary x1"));
    }
    let mut weights = Vec::with_capacity(pop.size());
    for (i, row) in pop.aux().rows().enumerate() {
        if row[1] == 0.0 {
            return Err(Error::Degenerate(format!("x1 = 0 for unit {i}; 1/x1^2 is undefined")));
        }
        weights.push(1.0 / (row[1] * row[1]));
    }
    let pi = proportional_probabilities(&weights, n, PI_MIN)?;
    Ok(DesignSpec {
        kind: DesignKind::Poisson,
        pi,
        n_target: n,
    })
}

/// Inclusion probabilities proportional to `weights` summing to `n`, clamped
/// to `[pi_min, 1]`.
pub fn proportional_probabilities(weights: &[f64], n: f64, pi_min: f64) -> Result<Vec<f64>> {
    let size = weights.len();
    if !(n > 0.0) || n >= size as f64 {
        return Err(invalid("n", format!("must satisfy 0 < n < N = {size}, got {n}")));
    }
    if pi_min * size as f64 > n {
        return Err(invalid("n", format!("{size} units at pi_min = {pi_min} already exceed n = {n}")));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Degenerate("weights must be positive and finite".into()));
    }
    // None = free, Some(v) = clamped at v.
    let mut fixed: Vec<Option<f64>> = vec![None; size];
    let mut pi = vec![0.0; size];
    loop {
        let budget = n - fixed.iter().flatten().sum::<f64>();
        let free_weight: f64 = weights
            .iter()
            .zip(&fixed)
            .filter(|(_, f)| f.is_none())
            .map(|(w, _)| w)
            .sum();
        if !(budget > 0.0) || free_weight <= 0.0 {
            return Err(Error::Degenerate(format!("cannot reach expected size {n} after clamping")));
        }
        let scale = budget / free_weight;
        let mut changed = false;
        for i in 0..size {
            match fixed[i] {
                Some(v) => pi[i] = v,
                None => {
                    let v = scale * weights[i];
                    if v > 1.0 {
                        fixed[i] = Some(1.0);
                        changed = true;
                    } else if v < pi_min {
                        fixed[i] = Some(pi_min);
                        changed = true;
                    }
                    pi[i] = v.clamp(pi_min, 1.0);
                }
            }
        }
        if !changed {
            return Ok(pi);
        }
    }
}

/// `pi_ij` of units `i` and `j` under `design`; the diagonal is `pi_i`.
pub fn joint_inclusion(design: &DesignSpec, i: usize, j: usize) -> Result<f64> {
    let len = design.population_size();
    for index in [i, j] {
        if index >= len {
            return Err(Error::IndexOutOfRange { index, len });
        }
    }
    if i == j {
        Ok(design.pi[i])
    } else {
        Ok(design.joint().pair(design.pi[i], design.pi[j]))
    }
}

/// A realized sample: selected population indices in increasing order.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    indices: Vec<usize>,
    pi: Vec<f64>,
    joint: JointInclusion,
}

impl Sample {
    /// Build a sample from arbitrary indices; they are sorted and must be
    /// distinct and in range.
    pub fn from_indices(design: &DesignSpec, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("indices", "sample indices must be distinct"));
        }
        if let Some(&index) = indices.iter().find(|&&i| i >= design.population_size()) {
            return Err(Error::IndexOutOfRange {
                index,
                len: design.population_size(),
            });
        }
        let pi = indices.iter().map(|&i| design.pi[i]).collect();
        Ok(Self {
            indices,
            pi,
            joint: design.joint(),
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Inclusion probabilities of the selected units, aligned with
    /// [`Sample::indices`].
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn joint(&self) -> JointInclusion {
        self.joint
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Write the selected indices as a one-column CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["unit", "pi"])?;
        for (i, pi) in self.indices.iter().zip(&self.pi) {
            out.write_record([i.to_string(), pi.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Select a sample. SRS uses a partial Fisher-Yates shuffle; Poisson draws
/// one independent Bernoulli(`pi_i`) per unit.
pub fn draw_sample(design: &DesignSpec, seed: u64) -> Sample {
    let mut rng = rng::stream(seed);
    let size = design.population_size();
    let indices = match design.kind {
        DesignKind::Srs => {
            let n = design.n_target.round() as usize;
            let mut perm: Vec<usize> = (0..size).collect();
            for k in 0..n {
                let j = rng.random_range(k..size);
                perm.swap(k, j);
            }
            perm.truncate(n);
            perm.sort_unstable();
            perm
        }
        DesignKind::Poisson => (0..size)
            .filter(|&i| rng.random::<f64>() < design.pi[i])
            .collect(),
    };
    let pi = indices.iter().map(|&i| design.pi[i]).collect();
    Sample {
        indices,
        pi,
        joint: design.joint(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::AuxMatrix;
    use crate::population::{generate_population, GenConfig};

    fn pop_with_x1(x1: &[f64]) -> Population {
        let rows: Vec<[f64; 2]> = x1.iter().map(|&v| [1.0, v]).collect();
        Population::new(AuxMatrix::from_rows(&rows).unwrap(), vec![1.0; x1.len()], vec![0.0, 0.0], None).unwrap()
    }

    #[test]
    fn srs_probabilities() {
        let d = srs_design(1000, 100).unwrap();
        assert!(d.pi().iter().all(|&p| p == 0.1));
        assert_eq!(joint_inclusion(&srs_design(2, 1).unwrap(), 0, 1).unwrap(), 0.0);
        assert!(srs_design(10, 10).is_err());
        assert!(srs_design(10, 0).is_err());
    }

    #[test]
    fn srs_joint_matches_enumeration() {
        // All C(5,2) = 10 samples are equally likely; count joint membership.
        let (big, n) = (5usize, 2usize);
        let mut samples = Vec::new();
        for a in 0..big {
            for b in a + 1..big {
                samples.push([a, b]);
            }
        }
        let d = srs_design(big, n).unwrap();
        for i in 0..big {
            for j in 0..big {
                let hits = samples.iter().filter(|s| s.contains(&i) && s.contains(&j)).count();
                let expected = hits as f64 / samples.len() as f64;
                assert!((joint_inclusion(&d, i, j).unwrap() - expected).abs() < 1e-15);
            }
        }
        assert!((joint_inclusion(&d, 0, 3).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn joint_inclusion_rejects_bad_index() {
        let d = srs_design(5, 2).unwrap();
        assert!(matches!(joint_inclusion(&d, 0, 5), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn poisson_equal_x_gives_equal_pi() {
        let pop = pop_with_x1(&[3.0; 20]);
        let d = poisson_design(&pop, 5.0).unwrap();
        assert!(d.pi().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn poisson_two_unit_hand_case() {
        let pop = pop_with_x1(&[1.0, 2.0]);
        let d = poisson_design(&pop, 1.0).unwrap();
        assert!((d.pi()[0] - 0.8).abs() < 1e-15);
        assert!((d.pi()[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn poisson_joint_is_product() {
        let pop = pop_with_x1(&[1.0, 2.0, 3.0]);
        let d = poisson_design(&pop, 1.0).unwrap();
        let (a, b) = (d.pi()[0], d.pi()[2]);
        assert_eq!(joint_inclusion(&d, 0, 2).unwrap(), a * b);
        assert_eq!(joint_inclusion(&d, 1, 1).unwrap(), d.pi()[1]);
    }

    #[test]
    fn poisson_zero_x_is_degenerate() {
        let pop = pop_with_x1(&[1.0, 0.0, 2.0]);
        assert!(matches!(poisson_design(&pop, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn clamping_reaches_fixpoint() {
        // One unit would get pi > 1 and another pi < PI_MIN.
        let w = [100.0, 1.0, 1.0, 1.0, 1e-6];
        let pi = proportional_probabilities(&w, 2.0, 0.001).unwrap();
        assert_eq!(pi[0], 1.0);
        assert_eq!(pi[4], 0.001);
        assert!((pi.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!((pi[1] - (1.0 - 0.001) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn default_poisson_design_has_expected_size_100() {
        let pop = generate_population(&GenConfig::default()).unwrap();
        let d = poisson_design(&pop, 100.0).unwrap();
        assert!((d.pi().iter().sum::<f64>() - 100.0).abs() < 1e-6);
        assert!(d.pi().iter().all(|&p| (PI_MIN..=1.0).contains(&p)));
    }

    #[test]
    fn srs_sample_size_is_fixed() {
        let d = srs_design(1000, 100).unwrap();
        for seed in 0..200 {
            let s = draw_sample(&d, seed);
            assert_eq!(s.len(), 100);
            assert!(s.indices().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let pop = generate_population(&GenConfig::default()).unwrap();
        let d = poisson_design(&pop, 100.0).unwrap();
        assert_eq!(draw_sample(&d, 42), draw_sample(&d, 42));
        assert_ne!(draw_sample(&d, 42), draw_sample(&d, 43));
    }

    fn inclusion_frequencies(d: &DesignSpec, reps: u64) -> Vec<f64> {
        let mut counts = vec![0u32; d.population_size()];
        for r in 0..reps {
            for &i in draw_sample(d, rng::derive_seed(9, r, rng::StreamTag::Sampling)).indices() {
                counts[i] += 1;
            }
        }
        counts.iter().map(|&c| c as f64 / reps as f64).collect()
    }

    #[test]
    fn poisson_inclusion_frequencies_match_pi() {
        let pop = generate_population(&GenConfig { size: 200, ..GenConfig::default() }).unwrap();
        let d = poisson_design(&pop, 20.0).unwrap();
        let reps = 10_000;
        for (f, &p) in inclusion_frequencies(&d, reps).iter().zip(d.pi()) {
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((f - p).abs() <= 4.0 * se + 1e-12, "freq {f} vs pi {p}");
        }
    }

    #[test]
    fn srs_inclusion_frequencies_match_pi() {
        let d = srs_design(200, 20).unwrap();
        let reps = 10_000;
        let se = (0.1 * 0.9 / reps as f64).sqrt();
        for f in inclusion_frequencies(&d, reps) {
            assert!((f - 0.1).abs() <= 4.0 * se, "freq {f}");
        }
    }
}
