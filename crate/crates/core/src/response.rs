//! The response mechanism: independent Bernoulli response of sampled units.

use rand::Rng;

use crate::design::Sample;
use crate::error::{check_len, invalid, Result};
use crate::rng;

/// Response indicators over a sample, aligned with the sample's units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RespondentSet {
    r: Vec<bool>,
}

impl RespondentSet {
    pub fn from_indicators(r: Vec<bool>) -> Self {
        Self { r }
    }

    /// Everyone responds.
    pub fn full(n: usize) -> Self {
        Self { r: vec![true; n] }
    }

    pub fn indicators(&self) -> &[bool] {
        &self.r
    }

    /// Positions (within the sample) of respondents, `S_r`.
    pub fn respondents(&self) -> Vec<usize> {
        (0..self.r.len()).filter(|&k| self.r[k]).collect()
    }

    /// Positions (within the sample) of nonrespondents, `S_m`.
    pub fn nonrespondents(&self) -> Vec<usize> {
        (0..self.r.len()).filter(|&k| !self.r[k]).collect()
    }

    pub fn respondent_count(&self) -> usize {
        self.r.iter().filter(|&&v| v).count()
    }

    pub fn sample_size(&self) -> usize {
        self.r.len()
    }
}

/// Draw `r_i ~ Bernoulli(p_i)` independently; `p` is aligned with the
/// sample's units.
pub fn draw_response(sample: &Sample, p: &[f64], seed: u64) -> Result<RespondentSet> {
    check_len("response probabilities", p.len(), sample.len())?;
    if let Some(bad) = p.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
        return Err(invalid("p", format!("response probabilities must lie in (0, 1], got {bad}")));
    }
    let mut rng = rng::stream(seed);
    let r = p.iter().map(|&pi| rng.random::<f64>() < pi).collect();
    Ok(RespondentSet { r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{draw_sample, srs_design};
    use crate::rng::{derive_seed, StreamTag};

    fn sample(n: usize) -> Sample {
        draw_sample(&srs_design(10 * n, n).unwrap(), 1)
    }

    #[test]
    fn certain_response() {
        let s = sample(50);
        let r = draw_response(&s, &vec![1.0; 50], 3).unwrap();
        assert_eq!(r.respondent_count(), 50);
        assert!(r.nonrespondents().is_empty());
    }

    #[test]
    fn probabilities_out_of_range() {
        let s = sample(3);
        assert!(draw_response(&s, &[0.5, 0.0, 0.5], 1).is_err());
        assert!(draw_response(&s, &[0.5, 1.2, 0.5], 1).is_err());
        assert!(draw_response(&s, &[0.5, 0.5], 1).is_err());
    }

    #[test]
    fn partition_of_sample() {
        let s = sample(40);
        let r = draw_response(&s, &vec![0.6; 40], 17).unwrap();
        let mut all = r.respondents();
        all.extend(r.nonrespondents());
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
        for k in r.respondents() {
            assert!(r.indicators()[k]);
        }
    }

    #[test]
    fn binomial_mean_of_respondent_counts() {
        let s = sample(100);
        let reps = 10_000;
        let total: usize = (0..reps)
            .map(|i| {
                draw_response(&s, &vec![0.5; 100], derive_seed(5, i, StreamTag::Response))
                    .unwrap()
                    .respondent_count()
            })
            .sum();
        let mean = total as f64 / reps as f64;
        // sd of the count is 5, of the replicate mean 0.05.
        assert!((mean - 50.0).abs() <= 4.0 * 5.0 / (reps as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn response_is_seed_deterministic() {
        let s = sample(100);
        let p = vec![0.7; 100];
        assert_eq!(draw_response(&s, &p, 9).unwrap(), draw_response(&s, &p, 9).unwrap());
    }
}
