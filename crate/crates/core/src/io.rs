//! Dataset ingestion, request and study configuration, and report output.
//!
//! Covariates listed as categorical are expanded into indicator columns named
//! `column=level`. Levels are sorted bytewise and the first one is dropped.
//! Every other covariate must parse as a number. Empty fields and `NA` count
//! as missing and are rejected. Row numbers in errors are file line numbers
//! (the header is line 1).

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bayes::BayesConfig;
use crate::design::{sample_cre, sample_rem_with, threshold_from_pa, BalanceChecker, BalanceReport, DesignKind, DesignSpec, DEFAULT_MAX_TRIES};
use crate::error::{CaceError, Result};
use crate::population::{Assignment, ObservedDataset};
use crate::reference::QuantileCache;
use crate::regadj::ci_adj;
use crate::regression::RobustVariant;
use crate::report::{EstimateReport, Method};
use crate::rng::{derive_seed, stream};
use crate::simulation::{run_setting, study_design, DgpConfig, MethodSelector, SimOptions, SimSettingResult};
use crate::wald::{ci_wald_cre, ci_wald_rem, RemInference};

pub const SOFTWARE: &str = "cace";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn io_err(path: &Path, e: impl std::fmt::Display) -> CaceError {
    CaceError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn config_err(path: &Path, e: impl std::fmt::Display) -> CaceError {
    CaceError::InvalidConfig(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// A CSV file held as strings, with the line number of every record.
struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read<R: Read>(reader: R, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| io_err(path, e))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| io_err(path, e))?;
            let line = record.position().map_or(rows.len() + 2, |p| p.line() as usize);
            rows.push((line, record.iter().map(str::to_owned).collect()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn open(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
        Self::read(std::io::BufReader::new(file), path)
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CaceError::MissingColumn {
                path: self.path.clone(),
                column: name.to_owned(),
            })
    }

    fn parse_err(&self, line: usize, column: &str, message: impl Into<String>) -> CaceError {
        CaceError::Parse {
            path: self.path.clone(),
            row: line,
            column: column.to_owned(),
            message: message.into(),
        }
    }

    /// Non-missing field at `col`.
    fn field<'a>(&self, line: usize, fields: &'a [String], col: usize) -> Result<&'a str> {
        let name = &self.headers[col];
        match fields.get(col).map(String::as_str) {
            None => Err(self.parse_err(line, name, "row is too short")),
            Some("") | Some("NA") => Err(self.parse_err(line, name, "missing value")),
            Some(v) => Ok(v),
        }
    }

    fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        let col = self.column(name)?;
        self.rows
            .iter()
            .map(|(line, fields)| {
                let v = self.field(*line, fields, col)?;
                let x: f64 = v
                    .parse()
                    .map_err(|_| self.parse_err(*line, name, format!("`{v}` is not a number; list the column as categorical")))?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(self.parse_err(*line, name, format!("`{v}` is not finite")))
                }
            })
            .collect()
    }

    fn binary(&self, name: &str) -> Result<Vec<u8>> {
        let col = self.column(name)?;
        self.rows
            .iter()
            .map(|(line, fields)| match self.field(*line, fields, col)? {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(CaceError::NonBinaryTreatment {
                    path: self.path.clone(),
                    row: *line,
                    column: name.to_owned(),
                    value: other.to_owned(),
                }),
            })
            .collect()
    }

    /// Indicator columns for every level but the first.
    fn indicators(&self, name: &str) -> Result<Vec<(String, Vec<f64>)>> {
        let col = self.column(name)?;
        let values: Vec<&str> = self
            .rows
            .iter()
            .map(|(line, fields)| self.field(*line, fields, col))
            .collect::<Result<_>>()?;
        let levels: BTreeSet<&str> = values.iter().copied().collect();
        Ok(levels
            .into_iter()
            .skip(1)
            .map(|level| {
                let v = values.iter().map(|&s| f64::from(u8::from(s == level))).collect();
                (format!("{name}={level}"), v)
            })
            .collect())
    }

    fn covariates(&self, names: &[String], categorical: &[String]) -> Result<(DMatrix<f64>, Vec<String>)> {
        if let Some(c) = categorical.iter().find(|c| !names.contains(c)) {
            return Err(CaceError::InvalidConfig(format!("categorical column `{c}` is not a covariate")));
        }
        let mut cols: Vec<(String, Vec<f64>)> = Vec::new();
        for name in names {
            if categorical.contains(name) {
                cols.extend(self.indicators(name)?);
            } else {
                cols.push((name.clone(), self.numeric(name)?));
            }
        }
        let n = self.rows.len();
        let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j].1[i]);
        Ok((x, cols.into_iter().map(|(name, _)| name).collect()))
    }
}

/// Which CSV columns play which part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    pub assigned: String,
    pub received: String,
    pub outcome: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Subset of `covariates` to expand into indicators.
    #[serde(default)]
    pub categorical: Vec<String>,
}

impl ColumnRoles {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for name in [&self.assigned, &self.received, &self.outcome].into_iter().chain(&self.covariates) {
            if !seen.insert(name.as_str()) {
                return Err(CaceError::InvalidConfig(format!("column `{name}` has more than one role")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub dataset: ObservedDataset,
    /// Names of the columns of `dataset.x()`, after expansion.
    pub covariate_names: Vec<String>,
}

pub fn ingest_reader<R: Read>(reader: R, path: &Path, roles: &ColumnRoles) -> Result<Ingested> {
    roles.validate()?;
    let table = Table::read(reader, path)?;
    if table.rows.is_empty() {
        return Err(CaceError::EmptyInput { what: "data rows" });
    }
    let z = table.binary(&roles.assigned)?;
    let w = table.binary(&roles.received)?;
    let y = table.numeric(&roles.outcome)?;
    let (x, covariate_names) = table.covariates(&roles.covariates, &roles.categorical)?;
    Ok(Ingested {
        dataset: ObservedDataset::new(x, z, w, y)?,
        covariate_names,
    })
}

pub fn ingest_csv(path: &Path, roles: &ColumnRoles) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    ingest_reader(std::io::BufReader::new(file), path, roles)
}

/// Write the role columns back out; floats use the shortest representation
/// that parses to the same value.
pub fn write_dataset_csv<W: Write>(out: W, data: &Ingested, roles: &ColumnRoles) -> Result<()> {
    let obs = &data.dataset;
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec![roles.assigned.clone(), roles.received.clone(), roles.outcome.clone()];
    header.extend(data.covariate_names.iter().cloned());
    let werr = |e: csv::Error| io_err(Path::new("<output>"), e);
    wtr.write_record(&header).map_err(werr)?;
    for i in 0..obs.n() {
        let mut rec = vec![obs.z()[i].to_string(), obs.w_obs()[i].to_string(), obs.y_obs()[i].to_string()];
        rec.extend(obs.x().row(i).iter().map(f64::to_string));
        wtr.write_record(&rec).map_err(werr)?;
    }
    wtr.flush().map_err(|e| io_err(Path::new("<output>"), e))
}

/// How the analyzed data were assigned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSummary {
    pub kind: DesignKind,
    /// Acceptance probability of the rerandomization rule; the threshold is
    /// the `pa` quantile of χ² on the number of covariate columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pa: Option<f64>,
}

impl Default for DesignSummary {
    fn default() -> Self {
        Self {
            kind: DesignKind::Cre,
            pa: None,
        }
    }
}

impl DesignSummary {
    fn threshold(&self, k: usize) -> Result<f64> {
        match self.pa {
            None => Err(CaceError::InvalidConfig("rerandomized designs need `pa`".into())),
            Some(pa) if pa == 1.0 => Ok(f64::INFINITY),
            Some(pa) => threshold_from_pa(k, pa),
        }
    }
}

fn default_alpha() -> f64 {
    0.05
}

/// One analysis of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisRequest {
    /// Relative paths are resolved against the directory of the request file.
    pub data: PathBuf,
    pub columns: ColumnRoles,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Overrides the seeds in `bayes` and `rem` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub design: DesignSummary,
    #[serde(default)]
    pub bayes: BayesConfig,
    #[serde(default)]
    pub rem: RemInference,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_method() -> Method {
    Method::Wald
}

impl AnalysisRequest {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let mut req: Self = toml::from_str(text).map_err(|e| config_err(origin, e))?;
        req.base_dir = origin.parent().map(Path::to_path_buf);
        Ok(req)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&read_text(path)?, path)
    }

    pub fn data_path(&self) -> PathBuf {
        match &self.base_dir {
            Some(dir) if self.data.is_relative() => dir.join(&self.data),
            _ => self.data.clone(),
        }
    }

    fn effective(&self) -> (BayesConfig, RemInference) {
        let (mut bayes, mut rem) = (self.bayes, self.rem);
        if let Some(seed) = self.seed {
            bayes.seed = seed;
            rem.seed = seed;
        }
        (bayes, rem)
    }

    /// Seed that governs the Monte Carlo parts of the selected method.
    pub fn seed(&self) -> u64 {
        let (bayes, rem) = self.effective();
        match self.method {
            Method::Bayes => bayes.seed,
            _ => rem.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSummary {
    pub n: usize,
    pub n1: usize,
    pub n0: usize,
    pub covariates: Vec<String>,
    /// Mahalanobis balance of the realized assignment, for rerandomized data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balance_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_a: Option<f64>,
}

/// Everything written by `analyze`. Field order is the output key order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument {
    pub software: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub request: AnalysisRequest,
    pub sample: SampleSummary,
    pub estimate: EstimateReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_seconds: Option<f64>,
}

impl ReportDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

/// Run the requested estimator on an ingested dataset. Wald on rerandomized
/// data uses the λ-based interval.
pub fn analyze_dataset(req: &AnalysisRequest, data: &Ingested, cache: &QuantileCache) -> Result<ReportDocument> {
    let obs = &data.dataset;
    let (bayes, rem) = req.effective();
    let rem_design = req.design.kind == DesignKind::Rem;
    let threshold = if rem_design { Some(req.design.threshold(obs.k())?) } else { None };
    let estimate = match (req.method, threshold) {
        (Method::Wald, None) => ci_wald_cre(obs, req.alpha)?,
        (Method::Wald | Method::WaldRem, Some(a)) => ci_wald_rem(obs, req.alpha, a, &rem, cache)?,
        (Method::WaldRem, None) => {
            return Err(CaceError::InvalidConfig("`wald-rem` needs a rerandomized design".into()));
        }
        (Method::AdjEhw, _) => ci_adj(obs, req.alpha, RobustVariant::Ehw)?,
        (Method::AdjHc2, _) => ci_adj(obs, req.alpha, RobustVariant::Hc2)?,
        (Method::AdjHc3, _) => ci_adj(obs, req.alpha, RobustVariant::Hc3)?,
        (Method::Bayes, _) => crate::bayes::ci_bayes(obs, req.alpha, &bayes)?,
    };
    let balance_m = if rem_design {
        let a = Assignment::new(obs.z().to_vec())?;
        Some(BalanceChecker::new(obs.x())?.statistic(a.z()).0)
    } else {
        None
    };
    Ok(ReportDocument {
        software: SOFTWARE,
        version: VERSION,
        seed: req.seed(),
        request: req.clone(),
        sample: SampleSummary {
            n: obs.n(),
            n1: obs.n1(),
            n0: obs.n0(),
            covariates: data.covariate_names.clone(),
            balance_m,
            threshold_a: threshold,
        },
        estimate,
        elapsed_seconds: None,
    })
}

pub fn analyze(req: &AnalysisRequest) -> Result<ReportDocument> {
    let data = ingest_csv(&req.data_path(), &req.columns)?;
    analyze_dataset(req, &data, &QuantileCache::new())
}

/// An accepted assignment for a covariate file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignOutput {
    #[serde(skip)]
    pub assignment: Assignment,
    pub n: usize,
    pub n1: usize,
    pub pa: f64,
    pub threshold_a: f64,
    pub seed: u64,
    pub covariates: Vec<String>,
    pub balance: BalanceReport,
}

impl DesignOutput {
    pub fn write_assignment<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let werr = |e: csv::Error| io_err(Path::new("<output>"), e);
        wtr.write_record(["z"]).map_err(werr)?;
        for z in self.assignment.z() {
            wtr.write_record([z.to_string()]).map_err(werr)?;
        }
        wtr.flush().map_err(|e| io_err(Path::new("<output>"), e))
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

/// Covariates to balance on; an empty `columns` list takes every column.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CovariateSelection {
    pub columns: Vec<String>,
    pub categorical: Vec<String>,
}

pub fn read_covariates(path: &Path, sel: &CovariateSelection) -> Result<(DMatrix<f64>, Vec<String>)> {
    let table = Table::open(path)?;
    if table.rows.is_empty() {
        return Err(CaceError::EmptyInput { what: "covariate rows" });
    }
    let names = if sel.columns.is_empty() {
        table.headers.clone()
    } else {
        sel.columns.clone()
    };
    table.covariates(&names, &sel.categorical)
}

/// Draw an assignment of `n1` units; `pa = 1` is complete randomization.
pub fn emit_design(
    x: &DMatrix<f64>,
    covariates: Vec<String>,
    n1: usize,
    pa: f64,
    seed: u64,
    max_tries: Option<u64>,
) -> Result<DesignOutput> {
    let n = x.nrows();
    let checker = BalanceChecker::new(x)?;
    let mut rng = stream(seed, &[]);
    let (spec, balance) = if pa == 1.0 {
        let spec = DesignSpec::cre(n, n1)?;
        let a = sample_cre(n, n1, &mut rng)?;
        let (m, diff) = checker.statistic(a.z());
        let report = BalanceReport {
            m,
            mean_diff: diff.iter().copied().collect(),
            accepted: true,
            tries: 1,
        };
        (spec, (a, report))
    } else {
        let spec = DesignSpec::rem_from_pa(n, n1, x.ncols(), pa)?.with_max_tries(max_tries.unwrap_or(DEFAULT_MAX_TRIES));
        let drawn = sample_rem_with(&checker, &spec, &mut rng)?;
        (spec, drawn)
    };
    let (assignment, balance) = balance;
    Ok(DesignOutput {
        assignment,
        n,
        n1,
        pa,
        threshold_a: spec.threshold_a,
        seed,
        covariates,
        balance,
    })
}

/// A scalar or a list in a study file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

fn default_reps() -> usize {
    200
}

fn default_pa() -> f64 {
    0.01
}

fn default_designs() -> OneOrMany<DesignKind> {
    OneOrMany::One(DesignKind::Cre)
}

/// A simulation study: the Cartesian product of the listed settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "MethodSelector::all")]
    pub methods: MethodSelector,
    pub dgp: OneOrMany<u8>,
    pub n: OneOrMany<usize>,
    pub k: OneOrMany<usize>,
    pub p_co: OneOrMany<f64>,
    pub error_case: OneOrMany<u8>,
    #[serde(default = "default_designs")]
    pub design: OneOrMany<DesignKind>,
    #[serde(default = "default_pa")]
    pub pa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub bayes: BayesConfig,
    #[serde(default)]
    pub rem: RemInference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setting {
    pub id: u64,
    pub dgp: DgpConfig,
    pub design: DesignKind,
}

const POPULATION_TAG: u64 = 0x5e77;

impl SimulateConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(origin, e))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&read_text(path)?, path)
    }

    /// Settings in file order, designs varying fastest. Settings that differ
    /// only in design share a population.
    pub fn settings(&self) -> Result<Vec<Setting>> {
        let mut out = Vec::new();
        for dgp in self.dgp.values() {
            for n in self.n.values() {
                for k in self.k.values() {
                    for p_co in self.p_co.values() {
                        for error_case in self.error_case.values() {
                            let seed = derive_seed(
                                self.seed,
                                &[POPULATION_TAG, dgp as u64, n as u64, k as u64, p_co.to_bits(), error_case as u64],
                            );
                            let cfg = DgpConfig {
                                dgp,
                                n,
                                k,
                                p_co,
                                error_case,
                                seed,
                            };
                            cfg.validate()?;
                            for design in self.design.values() {
                                out.push(Setting {
                                    id: out.len() as u64,
                                    dgp: cfg,
                                    design,
                                });
                            }
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(CaceError::EmptyInput { what: "simulation settings" });
        }
        Ok(out)
    }

    pub fn options(&self) -> SimOptions {
        SimOptions {
            alpha: self.alpha,
            bayes: self.bayes,
            rem: self.rem,
        }
    }

    pub fn run_one(&self, setting: &Setting, cache: &QuantileCache) -> Result<SimSettingResult> {
        let design = study_design(&setting.dgp, setting.design, self.pa)?;
        run_setting(
            &setting.dgp,
            &design,
            &self.methods,
            self.reps,
            self.seed,
            setting.id,
            &self.options(),
            cache,
        )
    }
}

#[derive(Debug, Serialize)]
struct SimRow<'a> {
    setting_id: u64,
    method: &'a str,
    mae: f64,
    #[serde(rename = "crate")]
    crate_: f64,
    len: f64,
    removed: usize,
    dgp: u8,
    n: usize,
    k: usize,
    p_co: f64,
    error_case: u8,
    design: &'a str,
    truth: f64,
    mean_p_co: f64,
}

/// One CSV row per (setting, method).
pub fn write_simulation_csv<W: Write>(out: W, rows: &[(Setting, SimSettingResult)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let werr = |e: csv::Error| io_err(Path::new("<output>"), e);
    for (setting, result) in rows {
        for r in &result.records {
            wtr.serialize(SimRow {
                setting_id: setting.id,
                method: r.method.as_str(),
                mae: r.mae,
                crate_: r.crate_,
                len: r.len,
                removed: r.removed,
                dgp: setting.dgp.dgp,
                n: setting.dgp.n,
                k: setting.dgp.k,
                p_co: setting.dgp.p_co,
                error_case: setting.dgp.error_case,
                design: match setting.design {
                    DesignKind::Cre => "cre",
                    DesignKind::Rem => "rem",
                },
                truth: result.truth,
                mean_p_co: r.mean_p_co,
            })
            .map_err(werr)?;
        }
    }
    wtr.flush().map_err(|e| io_err(Path::new("<output>"), e))
}
