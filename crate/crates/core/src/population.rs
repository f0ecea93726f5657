//! Finite populations and the logistic response model.

use std::io::{Read, Write};

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{dot, AuxMatrix};
use crate::rng;

/// `1 / (1 + exp(-eta))`, evaluated on the branch that cannot overflow.
#[inline]
pub fn logistic_eta(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Response probability `f(x; lambda)` under the logistic model.
pub fn logistic(x: &[f64], lambda: &[f64]) -> Result<f64> {
    check_len("lambda", lambda.len(), x.len())?;
    Ok(logistic_eta(dot(x, lambda)))
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// A finite population `U` with auxiliaries, study variable and the true
/// response probabilities. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    aux: AuxMatrix,
    y: Vec<f64>,
    true_lambda: Vec<f64>,
    true_p: Vec<f64>,
    rho: Option<f64>,
    total: f64,
}

impl Population {
    /// Build a population; the first auxiliary column must be identically 1.
    /// Response probabilities are derived from `true_lambda`.
    pub fn new(aux: AuxMatrix, y: Vec<f64>, true_lambda: Vec<f64>, rho: Option<f64>) -> Result<Self> {
        let n = aux.nrows();
        if n == 0 {
            return Err(invalid("aux", "population must contain at least one unit"));
        }
        check_len("y", y.len(), n)?;
        check_len("true_lambda", true_lambda.len(), aux.ncols())?;
        if let Some(i) = aux.rows().position(|r| r[0] != 1.0) {
            return Err(invalid("aux", format!("column 0 must be 1, unit {i} differs")));
        }
        if y.iter().chain(aux.rows().flatten()).any(|v| !v.is_finite()) {
            return Err(invalid("aux", "all values must be finite"));
        }
        let true_p: Vec<f64> = aux.rows().map(|r| logistic_eta(dot(r, &true_lambda))).collect();
        if let Some(i) = true_p.iter().position(|&p| p <= 0.0 || p >= 1.0) {
            return Err(Error::Degenerate(format!(
                "response probability of unit {i} saturates at {}",
                true_p[i]
            )));
        }
        let total = compensated_sum(&y);
        Ok(Self {
            aux,
            y,
            true_lambda,
            true_p,
            rho,
            total,
        })
    }

    pub fn size(&self) -> usize {
        self.y.len()
    }

    pub fn q(&self) -> usize {
        self.aux.ncols()
    }

    pub fn aux(&self) -> &AuxMatrix {
        &self.aux
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn true_lambda(&self) -> &[f64] {
        &self.true_lambda
    }

    pub fn true_p(&self) -> &[f64] {
        &self.true_p
    }

    pub fn rho(&self) -> Option<f64> {
        self.rho
    }

    /// The population total `Y`.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Population totals of the auxiliary variables.
    pub fn aux_totals(&self) -> Vec<f64> {
        self.aux.column_totals()
    }

    /// Copy with `y` replaced; used to study variables other than the
    /// generated one on the same units.
    pub fn with_y(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.aux.clone(), y, self.true_lambda.clone(), self.rho)
    }

    /// Copy with different response coefficients.
    pub fn with_lambda(&self, lambda: Vec<f64>) -> Result<Self> {
        Self::new(self.aux.clone(), self.y.clone(), lambda, self.rho)
    }

    /// Write `unit,x1,y,p_true` rows. Only two-column auxiliaries (intercept
    /// plus `x1`) are representable.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        if self.q() != 2 {
            return Err(invalid("aux", "CSV export requires exactly one non-intercept auxiliary"));
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["unit", "x1", "y", "p_true"])?;
        for i in 0..self.size() {
            out.write_record([
                i.to_string(),
                self.aux.row(i)[1].to_string(),
                self.y[i].to_string(),
                self.true_p[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Read a population written by [`Population::write_csv`]. The supplied
    /// coefficients must reproduce the `p_true` column.
    pub fn read_csv<R: Read>(r: R, true_lambda: Vec<f64>, rho: Option<f64>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["unit", "x1", "y", "p_true"] {
            return Err(invalid("header", format!("expected unit,x1,y,p_true, got {}", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut p_file = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |k: usize, name: &'static str| -> Result<f64> {
                rec[k].trim().parse::<f64>().map_err(|e| invalid(name, e.to_string()))
            };
            rows.push([1.0, field(1, "x1")?]);
            y.push(field(2, "y")?);
            p_file.push(field(3, "p_true")?);
        }
        let pop = Self::new(AuxMatrix::from_rows(&rows)?, y, true_lambda, rho)?;
        for (i, (a, b)) in pop.true_p.iter().zip(&p_file).enumerate() {
            if (a - b).abs() > 1e-12 {
                return Err(invalid("p_true", format!("unit {i}: file has {b}, coefficients give {a}")));
            }
        }
        Ok(pop)
    }
}

/// `Y = sum_U y_i` with compensated summation.
pub fn population_total(pop: &Population) -> f64 {
    compensated_sum(pop.y())
}

/// Settings of the bivariate-normal population generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub size: usize,
    /// Means of `(y, x1)`.
    pub mean_mu: [f64; 2],
    /// Correlation of `(y, x1)`; both marginal variances are 1.
    pub rho: f64,
    /// Response coefficients `(intercept, slope on x1)`.
    pub lambda: [f64; 2],
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            size: 1000,
            mean_mu: [4.0, 4.0],
            rho: 0.6,
            lambda: [0.1, 0.4],
            seed: 1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(invalid("N", format!("must be >= 2, got {}", self.size)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(invalid("rho", format!("must lie in (-1, 1), got {}", self.rho)));
        }
        if self.mean_mu.iter().chain(&self.lambda).any(|v| !v.is_finite()) {
            return Err(invalid("mu", "means and coefficients must be finite"));
        }
        Ok(())
    }
}

/// Draw `(y_i, x_i1)` i.i.d. bivariate normal with unit variances:
/// `y = mu_y + z1`, `x1 = mu_x + rho z1 + sqrt(1 - rho^2) z2`.
pub fn generate_population(cfg: &GenConfig) -> Result<Population> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed);
    let c = (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut rows = Vec::with_capacity(cfg.size);
    let mut y = Vec::with_capacity(cfg.size);
    for _ in 0..cfg.size {
        let z1 = rng::standard_normal(&mut rng);
        let z2 = rng::standard_normal(&mut rng);
        y.push(cfg.mean_mu[0] + z1);
        rows.push([1.0, cfg.mean_mu[1] + cfg.rho * z1 + c * z2]);
    }
    Population::new(AuxMatrix::from_rows(&rows)?, y, cfg.lambda.to_vec(), Some(cfg.rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logistic_at_zero_coefficients() {
        assert_eq!(logistic(&[1.0, 4.0], &[0.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn logistic_reference_value() {
        // 1/(1+e^{-1.7}) evaluated in 50-digit arithmetic.
        let expected = 0.845_534_734_916_465_3;
        let p = logistic(&[1.0, 4.0], &[0.1, 0.4]).unwrap();
        assert!((p - expected).abs() < 1e-15);
    }

    #[test]
    fn logistic_length_mismatch() {
        assert!(matches!(logistic(&[1.0, 2.0], &[0.1]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn logistic_extreme_arguments_are_finite() {
        assert_eq!(logistic_eta(700.0), 1.0);
        let tiny = logistic_eta(-700.0);
        assert!(tiny > 0.0 && tiny.is_finite());
        assert!((tiny.ln() + 700.0).abs() < 1e-9);
    }

    #[test]
    fn total_of_small_vectors() {
        assert_eq!(compensated_sum(&[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(compensated_sum(&[0.0; 5]), 0.0);
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    /// Double-double accumulation, independent of the Neumaier path.
    fn double_double_sum(values: &[f64]) -> f64 {
        let (mut hi, mut lo) = (0.0_f64, 0.0_f64);
        for &v in values {
            let (s, e) = two_sum(hi, v);
            let (h, l) = two_sum(s, e + lo);
            hi = h;
            lo = l;
        }
        hi + lo
    }

    #[test]
    fn total_matches_high_precision_oracle() {
        let pop = generate_population(&GenConfig { seed: 99, ..GenConfig::default() }).unwrap();
        let oracle = double_double_sum(pop.y());
        assert!((population_total(&pop) - oracle).abs() <= 1e-12 * oracle.abs());
        assert_eq!(pop.total(), population_total(&pop));
    }

    #[test]
    fn independent_generation_has_small_correlation() {
        let pop = generate_population(&GenConfig { rho: 0.0, seed: 5, ..GenConfig::default() }).unwrap();
        let n = pop.size() as f64;
        let x: Vec<f64> = pop.aux().rows().map(|r| r[1]).collect();
        let (mx, my) = (x.iter().sum::<f64>() / n, pop.y().iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(pop.y()).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = pop.y().iter().map(|b| (b - my).powi(2)).sum();
        let r = sxy / (sxx * syy).sqrt();
        assert!(r.abs() <= 3.0 / n.sqrt(), "r = {r}");
    }

    #[test]
    fn default_population_has_84_percent_response() {
        let pop = generate_population(&GenConfig::default()).unwrap();
        let mean = pop.true_p().iter().sum::<f64>() / pop.size() as f64;
        assert!((0.82..=0.86).contains(&mean), "mean response {mean}");
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let cfg = GenConfig { seed: 1234, ..GenConfig::default() };
        assert_eq!(generate_population(&cfg).unwrap(), generate_population(&cfg).unwrap());
        let other = GenConfig { seed: 1235, ..cfg };
        assert_ne!(generate_population(&other).unwrap().y(), generate_population(&GenConfig { seed: 1234, ..GenConfig::default() }).unwrap().y());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(generate_population(&GenConfig { rho: 1.0, ..GenConfig::default() }).is_err());
        assert!(generate_population(&GenConfig { size: 1, ..GenConfig::default() }).is_err());
    }

    #[test]
    fn intercept_column_enforced() {
        let aux = AuxMatrix::from_rows(&[[1.0, 2.0], [0.5, 1.0]]).unwrap();
        assert!(Population::new(aux, vec![1.0, 2.0], vec![0.0, 0.0], None).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let pop = generate_population(&GenConfig { size: 50, seed: 8, ..GenConfig::default() }).unwrap();
        let mut buf = Vec::new();
        pop.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("unit,x1,y,p_true\n"));
        let back = Population::read_csv(buf.as_slice(), vec![0.1, 0.4], Some(0.6)).unwrap();
        assert_eq!(back, pop);
        assert!(Population::read_csv(buf.as_slice(), vec![0.2, 0.4], None).is_err());
    }

    proptest! {
        #[test]
        fn logistic_is_symmetric(eta in -700.0f64..700.0, x1 in -5.0f64..5.0) {
            let lam = [eta / 2.0, if x1 == 0.0 { 0.0 } else { eta / (2.0 * x1) }];
            let neg = [-lam[0], -lam[1]];
            let x = [1.0, x1];
            let s = logistic(&x, &lam).unwrap() + logistic(&x, &neg).unwrap();
            prop_assert!((s - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn logistic_is_monotone(a in -50.0f64..50.0, d in 1e-6f64..10.0) {
            prop_assert!(logistic_eta(a + d) >= logistic_eta(a));
            // Strict once the increase exceeds a few ulps.
            let f = logistic_eta(a);
            if f * (1.0 - f) * d.min(1.0) > 1e-15 {
                prop_assert!(logistic_eta(a + d) > f);
            }
        }

        #[test]
        fn generated_probabilities_are_interior(seed in any::<u64>(), rho in -0.95f64..0.95) {
            let pop = generate_population(&GenConfig { size: 200, rho, seed, ..GenConfig::default() }).unwrap();
            prop_assert!(pop.true_p().iter().all(|&p| p > 0.0 && p < 1.0));
            prop_assert!(pop.aux().rows().all(|r| r[0] == 1.0));
        }
    }
}
