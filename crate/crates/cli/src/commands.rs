//! Subcommand bodies. Everything numeric is delegated to `nwa_core`.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use nwa_core::estimators::{fit_variant, ht_estimate, nwa_estimate};
use nwa_core::montecarlo::replicate_data;
use nwa_core::report::{render_text, write_raw_csv, write_table_csv, Provenance, Table};
use nwa_core::rng::{derive_seed, StreamTag};
use nwa_core::variance::{self, variance_for};
use nwa_core::{
    generate_population, poisson_design, run_study, srs_design, AuxMatrix, DesignKind, DesignSpec, EstimateRecord, FitResult, JointInclusion,
    Population, Scenario, SolverControls, StudyReport, SurveyData, Variant,
};

use crate::config::RunConfig;

/// Correlations of the three study populations.
pub const STUDY_RHOS: [f64; 3] = [0.6, 0.3, 0.0];

pub fn provenance(cfg: &RunConfig) -> Provenance {
    Provenance {
        master_seed: cfg.seed,
        config_hash: cfg.hash(),
    }
}

/// The population with correlation `rho`. Its seed depends only on the
/// master seed and `rho`, so a single scenario and the full study agree.
pub fn population(cfg: &RunConfig, rho: f64) -> Result<Population> {
    let seed = derive_seed(cfg.seed, rho.to_bits(), StreamTag::Population);
    Ok(generate_population(&cfg.generator(rho, seed))?)
}

pub fn design(cfg: &RunConfig, pop: &Population, kind: DesignKind) -> Result<DesignSpec> {
    Ok(match kind {
        DesignKind::Srs => srs_design(pop.size(), cfg.n)?,
        DesignKind::Poisson => poisson_design(pop, cfg.n as f64)?,
    })
}

pub fn label(kind: DesignKind, rho: f64) -> String {
    format!("{}_rho{}", kind.name(), rho)
}

fn scenario(cfg: &RunConfig, pop: &Population, kind: DesignKind, rho: f64) -> Result<Scenario> {
    let mut sc = Scenario::new(label(kind, rho), pop.clone(), design(cfg, pop, kind)?, cfg.reps, cfg.seed)?;
    sc.variants = cfg.variants.clone();
    sc.controls = cfg.controls();
    Ok(sc)
}

/// The six study scenarios: three correlations, each under SRS and Poisson.
pub fn study_scenarios(cfg: &RunConfig) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    for rho in STUDY_RHOS {
        let pop = population(cfg, rho)?;
        for kind in [DesignKind::Srs, DesignKind::Poisson] {
            out.push(scenario(cfg, &pop, kind, rho)?);
        }
    }
    Ok(out)
}

/// The scenario selected by `design` and `rho`.
pub fn configured_scenario(cfg: &RunConfig) -> Result<Scenario> {
    let pop = population(cfg, cfg.rho)?;
    scenario(cfg, &pop, cfg.design, cfg.rho)
}

/// Run on a pool of `threads` workers (rayon's default when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t);
    }
    Ok(b.build().context("building worker pool")?.install(f))
}

pub fn run_all(cfg: &RunConfig, scenarios: &[Scenario]) -> Result<Vec<StudyReport>> {
    with_threads(cfg.threads, || scenarios.iter().map(run_study).collect())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Write `table2.csv`, `table3.csv`, `table4.csv`, `tables.txt` and, when
/// requested, one `raw_<scenario>.csv` per scenario. Returns written paths.
pub fn write_outputs(cfg: &RunConfig, reports: &[StudyReport], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let prov = provenance(cfg);
    let mut written = Vec::new();
    let mut text = prov.header();
    for table in [Table::Accuracy, Table::Weights, Table::Intervals] {
        let path = dir.join(table.file_name());
        let mut w = create(&path)?;
        write_table_csv(table, reports, &prov, &mut w)?;
        w.flush()?;
        written.push(path);
        text.push('\n');
        text.push_str(&render_text(table, reports));
    }
    text.push('\n');
    for r in reports {
        text.push_str(&format!(
            "{}: Y = {:.6e}, mean respondents = {:.2}, reps = {}\n",
            r.label, r.population_total, r.mean_respondents, r.reps
        ));
    }
    let path = dir.join("tables.txt");
    fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    if cfg.emit_raw {
        for r in reports {
            let path = dir.join(format!("raw_{}.csv", r.label));
            let mut w = create(&path)?;
            write_raw_csv(r, &prov, &mut w)?;
            w.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Survey data read from a `unit,pi,r,x1..,y` CSV; an intercept column is
/// prepended to the auxiliaries. `y` may be blank at nonrespondents.
#[derive(Debug, Clone)]
pub struct InputSurvey {
    pub units: Vec<String>,
    pub data: SurveyData,
    pub y: Vec<f64>,
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" => Some(true),
        "0" | "false" | "f" | "no" => Some(false),
        _ => None,
    }
}

pub fn read_survey_csv<R: Read>(r: R, joint: JointInclusion) -> Result<InputSurvey> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let header = rd.headers()?.clone();
    if header.len() < 5 {
        bail!("input needs columns unit,pi,r,x1[,x2..],y; found {}", header.len());
    }
    let q = header.len() - 3;
    let mut units = Vec::new();
    let mut pi = Vec::new();
    let mut resp = Vec::new();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let at = || format!("input row {}", line + 1);
        units.push(rec[0].to_string());
        pi.push(rec[1].parse::<f64>().with_context(|| format!("{}: bad pi `{}`", at(), &rec[1]))?);
        let r = parse_flag(&rec[2]).with_context(|| format!("{}: bad response flag `{}`", at(), &rec[2]))?;
        resp.push(r);
        let mut row = vec![1.0];
        for j in 3..header.len() - 1 {
            row.push(rec[j].parse::<f64>().with_context(|| format!("{}: bad {} `{}`", at(), &header[j], &rec[j]))?);
        }
        rows.push(row);
        let raw = &rec[header.len() - 1];
        let value = if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
            if r {
                bail!("{}: respondent without y", at());
            }
            f64::NAN
        } else {
            raw.parse::<f64>().with_context(|| format!("{}: bad y `{raw}`", at()))?
        };
        y.push(value);
    }
    let x = AuxMatrix::from_rows(&rows)?;
    debug_assert_eq!(x.ncols(), q);
    Ok(InputSurvey {
        units,
        data: SurveyData::new(x, pi, resp, joint)?,
        y,
    })
}

/// Result of fitting and estimating one variant on input data.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub variant: Variant,
    pub fit: Option<FitResult>,
    pub estimate: Option<EstimateRecord>,
    pub variance: Option<nwa_core::VarianceEstimate>,
}

/// Fit each variant; non-converged fits produce no estimate.
pub fn fit_survey(input: &InputSurvey, variants: &[Variant], pop_totals: Option<&[f64]>, controls: &SolverControls) -> Result<Vec<FitOutput>> {
    // Nonrespondent y is never read; zeros keep the arithmetic finite.
    let y: Vec<f64> = input.y.iter().map(|v| if v.is_nan() { 0.0 } else { *v }).collect();
    let mut out = Vec::new();
    for &v in variants {
        if !v.is_fitted() {
            bail!("`{v}` cannot be estimated from survey data; choose among mle_1, mle_1/pi, cal_U, cal_S");
        }
        let fit = fit_variant(v, &input.data, pop_totals, controls)?;
        let estimate = nwa_estimate(v, &input.data, &y, &fit).ok();
        let variance = estimate.as_ref().and_then(|_| variance_for(v, &input.data, &y, &fit).ok());
        out.push(FitOutput {
            variant: v,
            fit: Some(fit),
            estimate,
            variance,
        });
    }
    Ok(out)
}

/// Write `estimates.csv`, `variance.csv` and `weights.csv` into `dir`.
pub fn write_fit_outputs(input: &InputSurvey, outputs: &[FitOutput], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let records: Vec<EstimateRecord> = outputs.iter().filter_map(|o| o.estimate.clone()).collect();
    let est_path = dir.join("estimates.csv");
    EstimateRecord::write_csv(&records, create(&est_path)?)?;

    let var_rows: Vec<_> = outputs
        .iter()
        .filter_map(|o| Some((o.variant, o.estimate.as_ref()?.value, o.variance.clone()?)))
        .collect();
    let var_path = dir.join("variance.csv");
    variance::write_csv(&var_rows, create(&var_path)?)?;

    let w_path = dir.join("weights.csv");
    let mut w = csv::Writer::from_writer(create(&w_path)?);
    w.write_record(["unit", "variant", "weight"])?;
    for rec in &records {
        for (&k, weight) in rec.units.iter().zip(&rec.weights) {
            w.write_record([input.units[k].as_str(), rec.variant.name(), &format!("{weight:.16e}")])?;
        }
    }
    w.flush()?;
    Ok(vec![est_path, var_path, w_path])
}

/// Full-sample HT total, available only when every `y` is present.
pub fn input_ht(input: &InputSurvey) -> Option<f64> {
    if input.y.iter().any(|v| v.is_nan()) {
        None
    } else {
        ht_estimate(&input.data, &input.y).ok()
    }
}

/// Solver trace of `variant` on replicate `index` of the configured scenario.
pub fn trace_replicate(cfg: &RunConfig, variant: Variant, index: usize) -> Result<FitResult> {
    let sc = configured_scenario(cfg)?;
    let (data, _, _) = replicate_data(&sc, index);
    let controls = SolverControls { trace: true, ..cfg.controls() };
    Ok(fit_variant(variant, &data, Some(sc.aux_totals()), &controls)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "unit,pi,r,x1,y\na,0.1,1,3.0,4.5\nb,0.1,1,4.0,5.0\nc,0.1,0,3.5,\nd,0.1,1,2.5,3.0\ne,0.1,0,3.1,NA\nf,0.1,1,3.3,3.9\n";

    #[test]
    fn reads_survey_with_missing_y() {
        let s = read_survey_csv(CSV.as_bytes(), JointInclusion::Poisson).unwrap();
        assert_eq!(s.data.len(), 6);
        assert_eq!(s.data.q(), 2);
        assert_eq!(s.data.respondent_count(), 4);
        assert!(s.y[2].is_nan());
        assert_eq!(input_ht(&s), None);
    }

    #[test]
    fn respondent_needs_y() {
        let bad = "unit,pi,r,x1,y\na,0.5,1,3.0,\n";
        assert!(read_survey_csv(bad.as_bytes(), JointInclusion::Poisson).is_err());
    }

    #[test]
    fn fit_produces_all_files() {
        let s = read_survey_csv(CSV.as_bytes(), JointInclusion::Poisson).unwrap();
        let out = fit_survey(&s, &[Variant::CalS, Variant::MleUnit], None, &SolverControls::default()).unwrap();
        assert!(out.iter().all(|o| o.estimate.is_some()));
        let dir = tempfile::tempdir().unwrap();
        let files = write_fit_outputs(&s, &out, dir.path()).unwrap();
        let weights = fs::read_to_string(&files[2]).unwrap();
        assert_eq!(weights.lines().count(), 1 + 2 * 4);
    }

    #[test]
    fn population_calibration_needs_totals() {
        let s = read_survey_csv(CSV.as_bytes(), JointInclusion::Poisson).unwrap();
        assert!(fit_survey(&s, &[Variant::CalU], None, &SolverControls::default()).is_err());
    }

    #[test]
    fn scenario_matches_study_block() {
        let mut cfg = RunConfig { reps: 3, ..RunConfig::default() };
        cfg.rho = 0.3;
        cfg.design = DesignKind::Poisson;
        let one = configured_scenario(&cfg).unwrap();
        let all = study_scenarios(&cfg).unwrap();
        let same = all.iter().find(|s| s.label == one.label).unwrap();
        assert_eq!(same.population(), one.population());
        assert_eq!(run_study(same), run_study(&one));
    }
}
