//! Unit-level data of one realized sample with nonresponse.

use crate::design::{JointInclusion, Sample};
use crate::error::{check_len, invalid, Result};
use crate::linalg::AuxMatrix;
use crate::population::Population;
use crate::response::RespondentSet;

/// Auxiliaries, inclusion probabilities and response indicators of the
/// sampled units `S`. Row `k` describes the `k`-th sampled unit.
#[derive(Clone, Debug, PartialEq)]
pub struct SurveyData {
    x: AuxMatrix,
    pi: Vec<f64>,
    r: Vec<bool>,
    joint: JointInclusion,
}

impl SurveyData {
    pub fn new(x: AuxMatrix, pi: Vec<f64>, r: Vec<bool>, joint: JointInclusion) -> Result<Self> {
        let n = x.nrows();
        check_len("pi", pi.len(), n)?;
        check_len("r", r.len(), n)?;
        if let Some(bad) = pi.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(invalid("pi", format!("inclusion probabilities must lie in (0, 1], got {bad}")));
        }
        Ok(Self { x, pi, r, joint })
    }

    pub fn from_sample(pop: &Population, sample: &Sample, response: &RespondentSet) -> Result<Self> {
        check_len("response indicators", response.sample_size(), sample.len())?;
        Self::new(
            pop.aux().select(sample.indices()),
            sample.pi().to_vec(),
            response.indicators().to_vec(),
            sample.joint(),
        )
    }

    pub fn x(&self) -> &AuxMatrix {
        &self.x
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn r(&self) -> &[bool] {
        &self.r
    }

    pub fn joint(&self) -> JointInclusion {
        self.joint
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    pub fn respondent_count(&self) -> usize {
        self.r.iter().filter(|&&v| v).count()
    }

    /// Positions of respondents.
    pub fn respondents(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.r.len()).filter(move |&k| self.r[k])
    }

    /// Full-sample Horvitz-Thompson totals of the auxiliaries, `sum_S x / pi`.
    pub fn ht_aux_totals(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.q()];
        for (row, &pi) in self.x.rows().zip(&self.pi) {
            let w = 1.0 / pi;
            for (acc, v) in t.iter_mut().zip(row) {
                *acc += w * v;
            }
        }
        t
    }

    /// Same units with every unit responding.
    pub fn with_full_response(&self) -> Self {
        Self {
            r: vec![true; self.len()],
            ..self.clone()
        }
    }

    /// Units reordered by `perm` (a permutation of `0..len`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            x: self.x.select(perm),
            pi: perm.iter().map(|&k| self.pi[k]).collect(),
            r: perm.iter().map(|&k| self.r[k]).collect(),
            joint: self.joint,
        }
    }
}
