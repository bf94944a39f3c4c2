//! Batch experiments: config documents, l-sweeps and report files.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytic;
use crate::bakermap::{baker_dense, verify_unitarity, BakerParams};
use crate::bitcore::{parse_spec, CellLabel, CoarseGrainingSpec, HistoryLabel, RawSpec};
use crate::error::{BakerError, BakerResult};
use crate::hilbert::N_DENSE_MAX;
use crate::histories::{analyze, AnalysisSettings, BranchEngine, DecoherenceReport, EngineOptions, OffDiagonalMode};
use crate::partitions::{build_partition, initial_ensemble, verify_partition};
use crate::refcheck::{compare_engines, OracleLimits};

pub const SCHEMA_VERSION: &str = "1";
/// Reports list per-history probabilities only up to this many histories.
pub const PROBABILITY_LISTING_LIMIT: usize = 4096;
/// Mass conservation tolerance checked on every analysed depth.
pub const MASS_TOLERANCE: f64 = 1e-6;

pub const ENTROPY_CSV_HEADER: &str =
    "l,N,k,H_measured,H_predicted,support_size,allowed_count,epsilon,pruned_mass,runtime_ms";
pub const PREDICT_CSV_HEADER: &str = "k,regime,allowed_count,probability_each,entropy_bits,unsupported_regime";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default)]
    pub entropy_csv: Option<PathBuf>,
    #[serde(default)]
    pub report_json: Option<PathBuf>,
    #[serde(default)]
    pub predict_csv: Option<PathBuf>,
}

fn default_k_max() -> usize {
    1
}

fn default_prune_tol() -> f64 {
    crate::histories::DEFAULT_PRUNE_TOL
}

fn default_support_fraction() -> f64 {
    AnalysisSettings::default().support_fraction
}

fn default_gram_fraction() -> f64 {
    AnalysisSettings::default().gram_fraction
}

fn default_sample_count() -> usize {
    crate::histories::DEFAULT_SAMPLE_COUNT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "N")]
    pub n_qubits: i64,
    pub n: i64,
    pub l: i64,
    pub r: i64,
    pub s: Vec<i64>,
    #[serde(default)]
    pub m: Vec<i64>,
    /// Initial cell as bit text, blocks optionally separated by `|`.
    pub x: String,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_prune_tol")]
    pub prune_tol: f64,
    /// Absent: full Gram for small supports, sampled pairs otherwise.
    #[serde(default)]
    pub offdiag_mode: Option<OffDiagonalMode>,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    #[serde(default)]
    pub sample_seed: u64,
    #[serde(default = "default_support_fraction")]
    pub support_fraction: f64,
    #[serde(default = "default_gram_fraction")]
    pub gram_fraction: f64,
    /// Values of l to run; N and n move with l so that γ and n − l stay fixed.
    #[serde(default)]
    pub l_sweep: Option<Vec<i64>>,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub allow_deep_k: bool,
    /// Require the dense oracle comparison in `validate`.
    #[serde(default)]
    pub dense_checks: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> BakerResult<Self> {
        serde_json::from_str(text).map_err(|e| BakerError::Shape(format!("config: {e}")))
    }

    pub fn base_raw(&self) -> RawSpec {
        RawSpec { n_qubits: self.n_qubits, n: self.n, l: self.l, r: self.r, s: self.s.clone(), m: self.m.clone() }
    }

    pub fn sweep_values(&self) -> Vec<i64> {
        self.l_sweep.clone().unwrap_or_else(|| vec![self.l])
    }

    /// One spec per sweep entry.
    pub fn specs(&self) -> BakerResult<Vec<CoarseGrainingSpec>> {
        parse_spec(&self.base_raw())?;
        self.sweep_values()
            .into_iter()
            .map(|l| {
                let shift = l - self.l;
                parse_spec(&RawSpec { n_qubits: self.n_qubits + shift, n: self.n + shift, l, ..self.base_raw() })
            })
            .collect()
    }

    pub fn check_depth(&self, spec: &CoarseGrainingSpec) -> BakerResult<()> {
        if self.k_max > spec.min_block() && !self.allow_deep_k {
            return Err(BakerError::Range(format!(
                "k_max = {} exceeds the shortest specified block {}; set allow_deep_k to run anyway",
                self.k_max,
                spec.min_block()
            )));
        }
        Ok(())
    }

    pub fn settings(&self) -> AnalysisSettings {
        AnalysisSettings {
            offdiag_mode: self.offdiag_mode,
            sample_count: self.sample_count,
            sample_seed: self.sample_seed,
            support_fraction: self.support_fraction,
            gram_fraction: self.gram_fraction,
        }
    }

    pub fn engine_options(&self) -> BakerResult<EngineOptions> {
        if self.prune_tol.is_nan() || self.prune_tol < 0.0 {
            return Err(BakerError::Range(format!("prune_tol must be non-negative, got {}", self.prune_tol)));
        }
        Ok(EngineOptions { prune_tol: self.prune_tol, ..Default::default() })
    }

    /// Run `f` on a pool with the configured thread count.
    pub fn with_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> BakerResult<T> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(threads) = self.threads {
            builder = builder.num_threads(threads.max(1));
        }
        let pool = builder.build().map_err(|e| BakerError::Capacity(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub spec: CoarseGrainingSpec,
    pub x: CellLabel,
    pub reports: Vec<DecoherenceReport>,
}

fn check_mass(report: &DecoherenceReport) -> BakerResult<()> {
    let total = report.total_probability + report.pruned_mass;
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(BakerError::Numerical(format!(
            "probability plus pruned mass is {total} at k = {}",
            report.k
        )));
    }
    Ok(())
}

pub fn run_sweep(cfg: &ExperimentConfig) -> BakerResult<Vec<SweepPoint>> {
    let specs = cfg.specs()?;
    let options = cfg.engine_options()?;
    let settings = cfg.settings();
    let mut points = Vec::with_capacity(specs.len());
    for spec in specs {
        cfg.check_depth(&spec)?;
        let x = CellLabel::parse(&spec, &cfg.x)?;
        let partition = build_partition(&spec)?;
        let init = initial_ensemble(&spec, &x)?;
        let baker = BakerParams::new(spec.n_qubits(), spec.n())?;
        let engine = BranchEngine::new(&partition, &baker, options)?;
        let reports = cfg.with_pool(|| analyze(&engine, &init, cfg.k_max, &settings))??;
        for report in &reports {
            check_mass(report)?;
        }
        points.push(SweepPoint { spec, x, reports });
    }
    Ok(points)
}

/// Decimal text with 12 significant digits.
pub fn format_sig12(value: f64) -> String {
    if value == 0.0 {
        return "0".into();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let exponent = value.abs().log10().floor() as i32;
    if (-6..15).contains(&exponent) {
        let decimals = (11 - exponent).max(0) as usize;
        let text = format!("{value:.decimals$}");
        if text.contains('.') {
            text.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            text
        }
    } else {
        format!("{value:.11e}")
    }
}

pub fn entropy_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(ENTROPY_CSV_HEADER);
    out.push('\n');
    for point in points {
        for r in &point.reports {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                point.spec.l(),
                point.spec.n_qubits(),
                r.k,
                format_sig12(r.entropy_bits),
                r.predicted_entropy_bits,
                r.support_size,
                r.allowed_count,
                format_sig12(r.epsilon),
                format_sig12(r.pruned_mass),
                r.runtime_ms
            )
            .expect("writing to a string");
        }
    }
    out
}

pub fn predict_csv(spec: &CoarseGrainingSpec, k_max: usize) -> String {
    let mut out = String::from(PREDICT_CSV_HEADER);
    out.push('\n');
    for k in 0..=k_max {
        let p = analytic::predict(spec, k);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            k,
            p.regime.as_str(),
            p.allowed_count,
            p.probability_each,
            p.entropy_bits,
            p.unsupported_regime
        )
        .expect("writing to a string");
    }
    out
}

fn report_value(spec: &CoarseGrainingSpec, report: &DecoherenceReport) -> BakerResult<Value> {
    let mut value = serde_json::to_value(report).map_err(|e| BakerError::Numerical(e.to_string()))?;
    let listed: Vec<(&Vec<u32>, &f64)> = if report.probabilities.len() <= PROBABILITY_LISTING_LIMIT {
        report.probabilities.iter().collect()
    } else if report.support_size <= PROBABILITY_LISTING_LIMIT {
        report.probabilities.iter().filter(|(_, &p)| p > report.support_threshold).collect()
    } else {
        Vec::new()
    };
    let complete = listed.len() == report.probabilities.len();
    let probabilities = listed
        .into_iter()
        .map(|(h, &p)| Ok(json!({ "history": HistoryLabel::from_ids(spec, h)?.to_string(), "p": p })))
        .collect::<BakerResult<Vec<_>>>()?;
    let map = value.as_object_mut().expect("report serialises to an object");
    map.insert("probabilities".into(), Value::Array(probabilities));
    map.insert("probabilities_complete".into(), Value::Bool(complete));
    map.insert("history_count".into(), json!(report.probabilities.len()));
    Ok(value)
}

/// Report document; keys are emitted in sorted order.
pub fn report_json(cfg: &ExperimentConfig, points: &[SweepPoint]) -> BakerResult<Value> {
    let points = points
        .iter()
        .map(|point| {
            let reports =
                point.reports.iter().map(|r| report_value(&point.spec, r)).collect::<BakerResult<Vec<_>>>()?;
            Ok(json!({
                "spec": point.spec.to_raw(),
                "x": point.x.to_string(),
                "advisories": point.spec.advisories(),
                "reports": reports,
            }))
        })
        .collect::<BakerResult<Vec<_>>>()?;
    Ok(json!({ "schema_version": SCHEMA_VERSION, "config": cfg, "points": points }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub l: usize,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub const UNITARITY_TOL: f64 = 1e-12;
pub const ORACLE_TOL: f64 = 1e-10;

/// Structural and numerical checks. Errors are returned for invalid configs
/// and for dense checks that were required but exceed capacity.
pub fn validate(cfg: &ExperimentConfig) -> BakerResult<ValidationReport> {
    let specs = cfg.specs()?;
    cfg.engine_options()?;
    let limits = OracleLimits::default();
    let mut checks = Vec::new();
    for spec in &specs {
        cfg.check_depth(spec)?;
        let x = CellLabel::parse(spec, &cfg.x)?;
        let l = spec.l();
        if cfg.dense_checks {
            limits.check(spec, cfg.k_max)?;
        }

        let partition = build_partition(spec)?;
        let report = verify_partition(&partition);
        checks.push(CheckResult {
            name: "partition".into(),
            l,
            passed: report.passed(),
            detail: format!(
                "{} indices checked ({}), {} violations",
                report.indices_checked,
                if report.exhaustive { "exhaustive" } else { "owner and bit-flip neighbours" },
                report.violations
            ),
        });

        let baker = BakerParams::new(spec.n_qubits(), spec.n())?;
        if spec.n_qubits() <= N_DENSE_MAX {
            let unitarity = verify_unitarity(&baker_dense(&baker)?);
            checks.push(CheckResult {
                name: "unitarity".into(),
                l,
                passed: unitarity.passes(UNITARITY_TOL),
                detail: format!("max |B†B − I| = {:e}", unitarity.max_deviation),
            });
        }

        // Deepest k the oracle can take.
        let cells = 1u128 << spec.specified_bits();
        let oracle_k = (0..=cfg.k_max.min(limits.max_k))
            .rev()
            .find(|&k| limits.check(spec, k).is_ok() && cells.pow(k as u32) <= limits.max_histories as u128);
        if let Some(k) = oracle_k {
            let cmp = compare_engines(spec, &x, &baker, k, 0.0)?;
            checks.push(CheckResult {
                name: "oracle".into(),
                l,
                passed: cmp.max_abs_dev <= ORACLE_TOL,
                detail: format!("k = {k}: max |ΔD| = {:e} over {} entries", cmp.max_abs_dev, cmp.entries_compared),
            });
        } else if cfg.dense_checks {
            return Err(BakerError::Capacity(format!("history set too large for the dense oracle at l = {l}")));
        }
    }
    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn local_config() -> ExperimentConfig {
        ExperimentConfig::from_json(r#"{"N": 8, "n": 5, "l": 3, "r": 2, "s": [3], "x": "011", "k_max": 2}"#).unwrap()
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(format_sig12(0.0), "0");
        assert_eq!(format_sig12(1.0), "1");
        assert_eq!(format_sig12(2.0 / 3.0), "0.666666666667");
        assert_eq!(format_sig12(1234.5), "1234.5");
        assert_eq!(format_sig12(-0.125), "-0.125");
        assert_eq!(format_sig12(1.5e-9), "1.50000000000e-9");
    }

    #[test]
    fn sweep_co_varies_n_and_big_n() {
        let mut cfg = local_config();
        cfg.l_sweep = Some(vec![3, 5]);
        let specs = cfg.specs().unwrap();
        assert_eq!((specs[1].n_qubits(), specs[1].n(), specs[1].l()), (10, 7, 5));
        assert_eq!(specs[0].gamma(), specs[1].gamma());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"N": 8, "n": 5, "l": 3, "r": 2, "s": [3], "x": "011", "bogus": 1}"#)
            .unwrap_err();
        assert_eq!(err.kind(), "SHAPE");
    }

    #[test]
    fn deep_k_needs_override() {
        let mut cfg = local_config();
        cfg.k_max = 4;
        assert_eq!(run_sweep(&cfg).unwrap_err().kind(), "RANGE");
        cfg.allow_deep_k = true;
        assert_eq!(run_sweep(&cfg).unwrap()[0].reports.len(), 5);
    }

    #[test]
    fn csv_rows_and_depth_zero() {
        let cfg = local_config();
        let points = run_sweep(&cfg).unwrap();
        let csv = entropy_csv(&points);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], ENTROPY_CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("3,8,0,0,0,1,1,0,0,"));
    }

    #[test]
    fn predict_rows() {
        let spec = CoarseGrainingSpec::new(21, 10, 8, 2, &[3, 2, 2], &[2, 2]).unwrap();
        let csv = predict_csv(&spec, 3);
        assert_eq!(csv.lines().nth(2).unwrap(), "1,short,8,1/8,3,false");
        let spec = CoarseGrainingSpec::new(23, 10, 8, 2, &[5, 5], &[3]).unwrap();
        assert!(predict_csv(&spec, 5).lines().nth(6).unwrap().starts_with("5,long,256,1/256,8,"));
    }

    #[test]
    fn report_document_shape() {
        let cfg = local_config();
        let points = run_sweep(&cfg).unwrap();
        let doc = report_json(&cfg, &points).unwrap();
        assert_eq!(doc["schema_version"], "1");
        let reports = doc["points"][0]["reports"].as_array().unwrap();
        assert_eq!(reports.len(), 3);
        let listed: f64 = reports[2]["probabilities"].as_array().unwrap().iter().map(|e| e["p"].as_f64().unwrap()).sum();
        assert!((listed + reports[2]["pruned_mass"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn validate_small_and_capacity() {
        let cfg = local_config();
        let report = validate(&cfg).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.checks.iter().any(|c| c.name == "oracle"));

        let mut big = ExperimentConfig::from_json(r#"{"N": 14, "n": 8, "l": 5, "r": 2, "s": [7], "x": "0110100"}"#).unwrap();
        big.dense_checks = true;
        assert_eq!(validate(&big).unwrap_err().kind(), "CAPACITY");
    }
}
