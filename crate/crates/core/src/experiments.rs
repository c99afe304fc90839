//! Seeded simulation experiments: null calibration of the error criteria,
//! the null phase-transition curve, AUC sweeps over covariance structures,
//! and coefficient distributions by edge status.
//!
//! Replication `r` of a run seeded with `s` draws its data from
//! `derive_seed(s, r)`; replications run in parallel and are collected in
//! index order, so reports do not depend on the thread count. Wall-clock
//! timings are kept apart from the reproducible outputs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ParsecError, Result};
use crate::inference::{ErrorControlSpec, SphericalCapParams};
use crate::io::{fmt_f64, DataMatrix};
use crate::metrics::{self, TruthGraph};
use crate::parallel::derive_seed;
use crate::parsec::SymmetrizeMode;
use crate::screen::{self, Estimate, Method, ScreenConfig};
use crate::simgen::{self, CovarianceModel, StructureSpec};
use crate::uscore;

/// Sampling law of the simulated rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleDist {
    Gaussian,
    StudentT { nu: f64 },
}

impl SampleDist {
    pub fn label(&self) -> String {
        match self {
            Self::Gaussian => "gaussian".into(),
            Self::StudentT { nu } => format!("t(nu={nu})"),
        }
    }

    pub fn draw(&self, model: &CovarianceModel, n: usize, seed: u64) -> Result<DataMatrix> {
        match *self {
            Self::Gaussian => simgen::sample_gaussian(model, n, seed),
            Self::StudentT { nu } => simgen::sample_mvt(model, nu, n, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Self::Int(v) => v.to_string(),
            Self::Float(v) => fmt_f64(*v),
            Self::Text(s) => s.clone(),
            Self::Missing => "NA".into(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Self::Int(v) => Some(v as f64),
            Self::Float(v) => Some(v),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Self::Int(v as i64)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Self::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Self::Missing, Self::Float)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cells of column `name` in rows where every `(column, value)` filter matches.
    pub fn select(&self, name: &str, filters: &[(&str, &str)]) -> Vec<&Cell> {
        let Some(target) = self.column(name) else { return Vec::new() };
        let idx: Vec<(usize, &str)> = filters
            .iter()
            .filter_map(|(c, v)| self.column(c).map(|i| (i, *v)))
            .collect();
        self.rows
            .iter()
            .filter(|row| idx.iter().all(|(i, v)| matches!(&row[*i], Cell::Text(s) if s == v)))
            .map(|row| &row[target])
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let wrap = |source| ParsecError::Write {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
        writeln!(w, "{}", self.columns.join(",")).map_err(wrap)?;
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::csv).collect();
            writeln!(w, "{}", line.join(",")).map_err(wrap)?;
        }
        w.flush().map_err(wrap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub setting: serde_json::Value,
    pub seed: u64,
    pub replications: usize,
    pub replication_seeds: Vec<u64>,
    /// One row per replication (and per method / criterion / grid point).
    #[serde(skip)]
    pub records: Table,
    /// Aggregates recomputable from `records`.
    pub aggregates: Table,
    pub summary: BTreeMap<String, f64>,
    /// Wall-clock seconds by label; not reproducible, written separately.
    #[serde(skip)]
    pub timing: BTreeMap<String, f64>,
}

/// Files written by [`ExperimentReport::write`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub records: PathBuf,
    pub aggregates: PathBuf,
    pub summary: PathBuf,
    pub timing: PathBuf,
}

impl ExperimentReport {
    /// Writes `<prefix>_records.csv`, `<prefix>_aggregates.csv`,
    /// `<prefix>_summary.json` and `<prefix>_timing.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, prefix: &str) -> Result<ReportFiles> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| ParsecError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        let files = ReportFiles {
            records: dir.join(format!("{prefix}_records.csv")),
            aggregates: dir.join(format!("{prefix}_aggregates.csv")),
            summary: dir.join(format!("{prefix}_summary.json")),
            timing: dir.join(format!("{prefix}_timing.json")),
        };
        self.records.write_csv(&files.records)?;
        self.aggregates.write_csv(&files.aggregates)?;
        write_json(&files.summary, self)?;
        write_json(&files.timing, &self.timing)?;
        Ok(files)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ParsecError::Write {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    std::fs::write(path, text + "\n").map_err(|source| ParsecError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Median of finite values (mean of the middle pair for even counts); NaN if empty.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// `floor(fraction * p(p-1)/2)`: k for a k-FWER tolerance given as a share
/// of all hypotheses.
pub fn kfwer_k(p: usize, fraction: f64) -> u64 {
    (fraction * (p as f64) * (p as f64 - 1.0) / 2.0).floor() as u64
}

fn rep_seeds(seed: u64, reps: usize) -> Vec<u64> {
    (0..reps as u64).map(|r| derive_seed(seed, r)).collect()
}

fn uscores_for(model: &CovarianceModel, dist: SampleDist, n: usize, seed: u64) -> Result<uscore::UScoreMatrix> {
    uscore::uscores(&dist.draw(model, n, seed)?)
}

/// A (method, criterion) pair evaluated in [`null_calibration`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub method: Method,
    pub control: ErrorControlSpec,
}

impl CalibrationEntry {
    pub fn label(&self) -> String {
        format!("{}:{}", self.method, self.control.label())
    }
}

/// Error control under `Sigma = I`: every discovery is false, so a
/// replication's FDP is 1 when anything is declared and 0 otherwise.
pub fn null_calibration(n: usize, p: usize, reps: usize, entries: &[CalibrationEntry], seed: u64) -> Result<ExperimentReport> {
    for e in entries {
        e.control.validate()?;
        if e.method == Method::PcsHub && e.control.is_fdr_family() {
            return Err(ParsecError::InvalidArgument(format!(
                "{} is not available for pcs-hub",
                e.control.label()
            )));
        }
    }
    let model = simgen::build_structure(&StructureSpec::Diagonal { p })?;
    let seeds = rep_seeds(seed, reps);
    let mut methods: Vec<Method> = entries.iter().map(|e| e.method).collect();
    methods.dedup();
    methods.sort_by_key(|m| m.as_str());
    methods.dedup();

    let started = Instant::now();
    let per_rep: Vec<Vec<(f64, usize)>> = seeds
        .par_iter()
        .map(|&s| -> Result<Vec<(f64, usize)>> {
            let u = uscores_for(&model, SampleDist::Gaussian, n, s)?;
            let estimates: Vec<(Method, Estimate)> = methods
                .iter()
                .map(|&m| screen::estimate_matrix(&u, m, SymmetrizeMode::UpperTriangle).map(|e| (m, e)))
                .collect::<Result<_>>()?;
            entries
                .iter()
                .map(|e| {
                    let est = &estimates.iter().find(|(m, _)| *m == e.method).expect("computed").1;
                    let out = screen::screen_estimate(est, n, &ScreenConfig::new(e.method, e.control))?;
                    Ok((out.level, out.edges.len()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let elapsed = started.elapsed().as_secs_f64();

    let mut records = Table::new(&["replication", "seed", "entry", "level", "discoveries", "exceeds_k", "fdp"]);
    let mut aggregates = Table::new(&["entry", "k", "fraction_exceeding_k", "mean_fdp", "mean_discoveries"]);
    let mut summary = BTreeMap::new();
    for (ei, e) in entries.iter().enumerate() {
        let k = e.control.k().unwrap_or(0);
        let (mut exceed, mut fdp, mut disc) = (Vec::new(), Vec::new(), Vec::new());
        for (r, rep) in per_rep.iter().enumerate() {
            let (level, count) = rep[ei];
            let ex = (count as u64 > k) as u64;
            let f = if count > 0 { 1.0 } else { 0.0 };
            records.push(vec![r.into(), seeds[r].into(), e.label().into(), level.into(), count.into(), ex.into(), f.into()]);
            exceed.push(ex as f64);
            fdp.push(f);
            disc.push(count as f64);
        }
        let frac = mean(&exceed);
        aggregates.push(vec![e.label().into(), k.into(), frac.into(), mean(&fdp).into(), mean(&disc).into()]);
        summary.insert(format!("{}.fraction_exceeding_k", e.label()), frac);
        summary.insert(format!("{}.mean_fdp", e.label()), mean(&fdp));
    }
    Ok(ExperimentReport {
        experiment: "null-calibration".into(),
        setting: serde_json::json!({ "n": n, "p": p, "entries": entries }),
        seed,
        replications: reps,
        replication_seeds: seeds,
        records,
        aggregates,
        summary,
        timing: BTreeMap::from([("total_seconds".to_string(), elapsed)]),
    })
}

/// `i / (points + 1)` for `i = 1..=points`.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|i| i as f64 / (points + 1) as f64).collect()
}

/// Share of features with at least one `|H_jk| >= rho` under the null,
/// against the independence approximation `1 - (1 - P0(rho, n))^(p-1)`.
pub fn phase_transition_curve(n: usize, p: usize, reps: usize, rho_grid: &[f64], seed: u64) -> Result<ExperimentReport> {
    if rho_grid.is_empty()
        || rho_grid.windows(2).any(|w| !(w[0] < w[1]))
        || rho_grid.iter().any(|&r| !(r > 0.0 && r < 1.0))
    {
        return Err(ParsecError::InvalidArgument(
            "rho grid must be strictly increasing inside (0, 1)".into(),
        ));
    }
    let model = simgen::build_structure(&StructureSpec::Diagonal { p })?;
    let cap = SphericalCapParams::new(n)?;
    let seeds = rep_seeds(seed, reps);
    let started = Instant::now();
    let per_rep: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&s| -> Result<Vec<f64>> {
            let u = uscores_for(&model, SampleDist::Gaussian, n, s)?;
            let est = screen::estimate_matrix(&u, Method::ParsecScalable, SymmetrizeMode::UpperTriangle)?;
            let h = est.values();
            let row_max: Vec<f64> = (0..p)
                .map(|j| (0..p).filter(|&k| k != j).map(|k| h[(j, k)].abs()).fold(0.0, f64::max))
                .collect();
            Ok(rho_grid
                .iter()
                .map(|&rho| row_max.iter().filter(|&&m| m >= rho).count() as f64 / p as f64)
                .collect())
        })
        .collect::<Result<_>>()?;
    let elapsed = started.elapsed().as_secs_f64();

    let mut records = Table::new(&["replication", "seed", "rho", "fraction"]);
    for (r, rep) in per_rep.iter().enumerate() {
        for (g, &rho) in rho_grid.iter().enumerate() {
            records.push(vec![r.into(), seeds[r].into(), rho.into(), rep[g].into()]);
        }
    }
    let mut aggregates = Table::new(&["rho", "empirical_median", "approximation", "abs_gap"]);
    let mut max_gap: f64 = 0.0;
    for (g, &rho) in rho_grid.iter().enumerate() {
        let column: Vec<f64> = per_rep.iter().map(|rep| rep[g]).collect();
        let emp = median(&column);
        let approx = 1.0 - (1.0 - cap.p0(rho)).powi(p as i32 - 1);
        let gap = (emp - approx).abs();
        max_gap = max_gap.max(gap);
        aggregates.push(vec![rho.into(), emp.into(), approx.into(), gap.into()]);
    }
    Ok(ExperimentReport {
        experiment: "phase-transition".into(),
        setting: serde_json::json!({ "n": n, "p": p, "rho_grid": rho_grid }),
        seed,
        replications: reps,
        replication_seeds: seeds,
        records,
        aggregates,
        summary: BTreeMap::from([("max_abs_gap".to_string(), max_gap)]),
        timing: BTreeMap::from([("total_seconds".to_string(), elapsed)]),
    })
}

/// Full AUC, capped AUC and estimation seconds for one method.
type MethodScore = (Option<f64>, Option<f64>, f64);

/// One simulated design in an AUC sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSetting {
    pub structure: StructureSpec,
    pub n: usize,
    pub dist: SampleDist,
}

impl SweepSetting {
    pub fn label(&self) -> String {
        format!("{}|n={}|{}", self.structure.label(), self.n, self.dist.label())
    }
}

/// False-positive-rate cap of the truncated AUC.
pub const AUC_FPR_CAP: f64 = 0.1;

/// Median AUC and AUC over `FPR < 0.1` per (setting, method).
pub fn auc_sweep(settings: &[SweepSetting], reps: usize, methods: &[Method], seed: u64) -> Result<ExperimentReport> {
    let mut records = Table::new(&["setting", "method", "replication", "seed", "auc", "auc_fpr_0.1"]);
    let mut aggregates = Table::new(&["setting", "method", "status", "median_auc", "median_auc_fpr_0.1"]);
    let mut summary = BTreeMap::new();
    let mut timing = BTreeMap::new();
    let mut all_seeds = Vec::new();

    for (si, setting) in settings.iter().enumerate() {
        let model = simgen::build_structure(&setting.structure)?;
        let truth = TruthGraph::new(model.p(), model.true_edges())?;
        let degenerate = truth.edge_count() == 0 || truth.edge_count() == truth.pair_count();
        let seeds = rep_seeds(derive_seed(seed, 1_000_000 + si as u64), reps);
        all_seeds.extend_from_slice(&seeds);
        let per_rep: Vec<Vec<MethodScore>> = seeds
            .par_iter()
            .map(|&s| -> Result<Vec<_>> {
                let u = uscores_for(&model, setting.dist, setting.n, s)?;
                methods
                    .iter()
                    .map(|&m| {
                        let t0 = Instant::now();
                        let est = screen::estimate_matrix(&u, m, SymmetrizeMode::UpperTriangle)?;
                        let secs = t0.elapsed().as_secs_f64();
                        if degenerate {
                            return Ok((None, None, secs));
                        }
                        let full = metrics::auc(est.values(), &truth, 1.0)?;
                        let capped = metrics::auc(est.values(), &truth, AUC_FPR_CAP)?;
                        Ok((Some(full), Some(capped), secs))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;

        for (mi, method) in methods.iter().enumerate() {
            let (mut full, mut capped, mut secs) = (Vec::new(), Vec::new(), Vec::new());
            for (r, rep) in per_rep.iter().enumerate() {
                let (a, b, t) = rep[mi];
                records.push(vec![setting.label().into(), method.as_str().into(), r.into(), seeds[r].into(), a.into(), b.into()]);
                full.extend(a);
                capped.extend(b);
                secs.push(t);
            }
            let key = format!("{}|{}", setting.label(), method);
            timing.insert(format!("{key}.median_seconds"), median(&secs));
            if degenerate {
                aggregates.push(vec![setting.label().into(), method.as_str().into(), "degenerate".into(), Cell::Missing, Cell::Missing]);
            } else {
                let (mf, mc) = (median(&full), median(&capped));
                aggregates.push(vec![setting.label().into(), method.as_str().into(), "ok".into(), mf.into(), mc.into()]);
                summary.insert(format!("{key}.median_auc"), mf);
                summary.insert(format!("{key}.median_auc_fpr_0.1"), mc);
            }
        }
    }
    Ok(ExperimentReport {
        experiment: "auc-sweep".into(),
        setting: serde_json::json!({ "settings": settings, "methods": methods }),
        seed,
        replications: reps,
        replication_seeds: all_seeds,
        records,
        aggregates,
        summary,
        timing,
    })
}

/// Pooled upper-triangle estimates split by true-edge / null status.
pub fn coef_distribution(
    structure: &StructureSpec,
    n: usize,
    dist: SampleDist,
    reps: usize,
    methods: &[Method],
    seed: u64,
) -> Result<ExperimentReport> {
    let model = simgen::build_structure(structure)?;
    let truth = TruthGraph::new(model.p(), model.true_edges())?;
    let p = model.p();
    let seeds = rep_seeds(seed, reps);
    let started = Instant::now();
    let per_rep: Vec<Vec<Vec<f64>>> = seeds
        .par_iter()
        .map(|&s| -> Result<Vec<Vec<f64>>> {
            let u = uscores_for(&model, dist, n, s)?;
            methods
                .iter()
                .map(|&m| {
                    let est = screen::estimate_matrix(&u, m, SymmetrizeMode::UpperTriangle)?;
                    let v = est.values();
                    Ok((0..p).flat_map(|j| ((j + 1)..p).map(move |k| (j, k))).map(|(j, k)| v[(j, k)]).collect())
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let elapsed = started.elapsed().as_secs_f64();

    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|j| ((j + 1)..p).map(move |k| (j, k))).collect();
    let status = |j: usize, k: usize| if truth.is_edge(j, k) { "edge" } else { "null" };
    let mut records = Table::new(&["method", "replication", "i", "j", "status", "value"]);
    let mut aggregates = Table::new(&["method", "status", "count", "median_abs", "median", "q25", "q75"]);
    let mut summary = BTreeMap::new();
    for (mi, method) in methods.iter().enumerate() {
        let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (r, rep) in per_rep.iter().enumerate() {
            for (&(j, k), &v) in pairs.iter().zip(&rep[mi]) {
                let st = status(j, k);
                records.push(vec![method.as_str().into(), r.into(), j.into(), k.into(), st.into(), v.into()]);
                groups.entry(st).or_default().push(v);
            }
        }
        for (st, values) in &groups {
            let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let q = |f: f64| sorted[((sorted.len() - 1) as f64 * f).round() as usize];
            let med_abs = median(&abs);
            aggregates.push(vec![
                method.as_str().into(),
                (*st).into(),
                values.len().into(),
                med_abs.into(),
                median(values).into(),
                q(0.25).into(),
                q(0.75).into(),
            ]);
            summary.insert(format!("{method}.{st}.median_abs"), med_abs);
        }
        if let (Some(e), Some(z)) = (groups.get("edge"), groups.get("null")) {
            let gap = median(&e.iter().map(|v| v.abs()).collect::<Vec<_>>()) - median(&z.iter().map(|v| v.abs()).collect::<Vec<_>>());
            summary.insert(format!("{method}.median_abs_gap"), gap);
        }
    }
    Ok(ExperimentReport {
        experiment: "coef-dist".into(),
        setting: serde_json::json!({ "structure": structure, "n": n, "dist": dist, "methods": methods }),
        seed,
        replications: reps,
        replication_seeds: seeds,
        records,
        aggregates,
        summary,
        timing: BTreeMap::from([("total_seconds".to_string(), elapsed)]),
    })
}
