//! Monte Carlo sweeps over the downlink SINR target or the CSI error level, with
//! CSV and manifest output.

mod trial;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{db_to_linear, watts_to_dbm, SystemConfig};
use crate::error::{Error, Result};
use crate::solver::Settings;

pub use trial::*;

pub const CSV_HEADER: &str = "scheme,axis_name,axis_value,nt,trials,feasible,mean_leakage_dbm,ci95_dbm,mean_solve_ms";
/// Written in the CI column when fewer than two samples exist.
pub const NOT_AVAILABLE: &str = "NA";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    DlSinrDb,
    Kappa2,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::DlSinrDb => "dl-sinr-db",
            Axis::Kappa2 => "kappa2",
        }
    }
}

/// How per-trial leakages are averaged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Mean of watts, then converted to dBm.
    Watts,
    /// Mean of per-trial dBm values.
    Dbm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub name: String,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub nt: Vec<usize>,
    /// Downlink target when the axis is `kappa2`.
    pub dl_sinr_db: f64,
    pub ul_sinr_db: f64,
    /// Error level when the axis is `dl-sinr-db`.
    pub kappa2: f64,
    pub trials: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    pub averaging: Averaging,
    /// Fill `mean_solve_ms`; wall-clock times are the only non-reproducible column.
    pub record_timing: bool,
    pub system: SystemConfig,
    pub solver: Settings,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::fig2()
    }
}

impl Scenario {
    pub fn fig2() -> Self {
        Scenario {
            name: "fig2".into(),
            axis: Axis::DlSinrDb,
            values: vec![2.0, 6.0, 10.0, 14.0],
            nt: vec![6, 7, 9],
            dl_sinr_db: 10.0,
            ul_sinr_db: 6.0,
            kappa2: 0.05,
            trials: 50,
            seed: 1,
            schemes: Scheme::ALL.to_vec(),
            averaging: Averaging::Watts,
            record_timing: true,
            system: SystemConfig::default(),
            solver: Settings::default(),
        }
    }

    pub fn fig3() -> Self {
        Scenario {
            name: "fig3".into(),
            axis: Axis::Kappa2,
            values: vec![0.01, 0.02, 0.05, 0.10],
            nt: vec![9],
            dl_sinr_db: 10.0,
            ul_sinr_db: 5.0,
            ..Scenario::fig2()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.values.is_empty() || self.nt.is_empty() || self.schemes.is_empty() {
            return bad("axis values, antenna counts and schemes must be non-empty".into());
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("axis values must be strictly increasing".into());
        }
        for &nt in &self.nt {
            for &v in &self.values {
                self.config(nt, v).validate()?;
            }
        }
        Ok(())
    }

    /// System configuration at one sweep point.
    pub fn config(&self, nt: usize, value: f64) -> SystemConfig {
        let mut cfg = SystemConfig { n_t: nt, gamma_ul: db_to_linear(self.ul_sinr_db), ..self.system.clone() };
        match self.axis {
            Axis::DlSinrDb => {
                cfg.gamma_dl = db_to_linear(value);
                cfg.kappa2 = self.kappa2;
            }
            Axis::Kappa2 => {
                cfg.gamma_dl = db_to_linear(self.dl_sinr_db);
                cfg.kappa2 = value;
            }
        }
        cfg
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Generator of trial `index`: one ChaCha stream per trial, so the draws of a
/// trial are fixed by the master seed and the index alone.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, Serialize)]
pub struct PointResult {
    pub scheme: Scheme,
    pub axis_value: f64,
    pub nt: usize,
    pub trials: usize,
    pub feasible: usize,
    pub infeasible: usize,
    pub numerical_failures: usize,
    pub audit_failures: usize,
    /// `None` without feasible trials.
    pub mean_leakage_dbm: Option<f64>,
    pub mean_leakage_watts: Option<f64>,
    /// `None` with fewer than two feasible trials.
    pub ci95_dbm: Option<f64>,
    pub mean_solve_ms: Option<f64>,
}

impl PointResult {
    pub fn feasibility_rate(&self) -> f64 {
        self.feasible as f64 / self.trials as f64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub points: Vec<PointResult>,
    /// Leakage in watts per `(nt index, value index, trial)` and scheme, `None` when not feasible.
    pub per_trial: Vec<Vec<Option<f64>>>,
    pub resamples: usize,
}

impl ScenarioResult {
    pub fn point(&self, scheme: Scheme, nt: usize, value: f64) -> Option<&PointResult> {
        self.points.iter().find(|p| p.scheme == scheme && p.nt == nt && p.axis_value == value)
    }

    pub fn audit_failures(&self) -> usize {
        self.points.iter().map(|p| p.audit_failures).sum()
    }

    /// Paired per-trial leakages of one scheme at one point, in trial order.
    pub fn trial_leakages(&self, scheme: Scheme, nt: usize, value: f64) -> Vec<Option<f64>> {
        let s = &self.scenario;
        let (Some(ni), Some(vi), Some(si)) = (
            s.nt.iter().position(|n| *n == nt),
            s.values.iter().position(|v| *v == value),
            s.schemes.iter().position(|x| *x == scheme),
        ) else {
            return Vec::new();
        };
        let base = (ni * s.values.len() + vi) * s.trials;
        (0..s.trials).map(|t| self.per_trial[base + t][si]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let axis = self.scenario.axis.name();
        for p in &self.points {
            let mean = p.mean_leakage_dbm.map(|v| format!("{v:.6}")).unwrap_or_default();
            let ci = match (p.feasible, p.ci95_dbm) {
                (0, _) => String::new(),
                (_, Some(c)) => format!("{c:.6}"),
                (_, None) => NOT_AVAILABLE.into(),
            };
            let time = match (self.scenario.record_timing, p.mean_solve_ms) {
                (true, Some(t)) => format!("{t:.3}"),
                _ => String::new(),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6},{},{},{}",
                p.scheme.name(),
                axis,
                p.axis_value,
                p.nt,
                p.trials,
                p.feasibility_rate(),
                mean,
                ci,
                time
            );
        }
        out
    }
}

fn mean_std(x: &[f64]) -> (f64, Option<f64>) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, None);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

fn summarize(scheme: Scheme, nt: usize, value: f64, outcomes: &[&SchemeOutcome], averaging: Averaging) -> PointResult {
    let count = |s: TrialStatus| outcomes.iter().filter(|o| o.status == s).count();
    let ok: Vec<&&SchemeOutcome> = outcomes.iter().filter(|o| o.status == TrialStatus::Feasible).collect();
    let watts: Vec<f64> = ok.iter().filter_map(|o| o.leakage).collect();
    let times: Vec<f64> = ok.iter().map(|o| o.solve_ms).collect();
    let (mean_w, mean_dbm, ci) = if watts.is_empty() {
        (None, None, None)
    } else {
        let z = 1.96 / (watts.len() as f64).sqrt();
        match averaging {
            Averaging::Watts => {
                let (m, sd) = mean_std(&watts);
                let ci = sd.map(|s| 10.0 * (1.0 + z * s / m).log10());
                (Some(m), Some(watts_to_dbm(m)), ci)
            }
            Averaging::Dbm => {
                let dbm: Vec<f64> = watts.iter().map(|w| watts_to_dbm(*w)).collect();
                let (m, sd) = mean_std(&dbm);
                (Some(mean_std(&watts).0), Some(m), sd.map(|s| z * s))
            }
        }
    };
    PointResult {
        scheme,
        axis_value: value,
        nt,
        trials: outcomes.len(),
        feasible: ok.len(),
        infeasible: count(TrialStatus::Infeasible),
        numerical_failures: count(TrialStatus::NumericalFailure),
        audit_failures: count(TrialStatus::AuditFailed),
        mean_leakage_dbm: mean_dbm,
        mean_leakage_watts: mean_w,
        ci95_dbm: ci,
        mean_solve_ms: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
    }
}

/// Runs every trial of a scenario on `jobs` worker threads (0: rayon default).
/// Output does not depend on `jobs`.
pub fn run_scenario(s: &Scenario, jobs: usize) -> Result<ScenarioResult> {
    s.validate()?;
    let n_max = s.nt.iter().copied().max().unwrap_or(0);
    let tasks: Vec<(usize, usize, usize)> = (0..s.nt.len())
        .flat_map(|n| (0..s.values.len()).flat_map(move |v| (0..s.trials).map(move |t| (n, v, t))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let results: Vec<Result<TrialResult>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(n, v, t)| {
                let cfg = s.config(s.nt[n], s.values[v]);
                let mut rng = trial_rng(s.seed, t as u64);
                run_trial_nested(&cfg, n_max, &mut rng, &s.schemes, &s.solver)
            })
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut points = Vec::new();
    for (si, scheme) in s.schemes.iter().enumerate() {
        for (n, nt) in s.nt.iter().enumerate() {
            for (v, value) in s.values.iter().enumerate() {
                let base = (n * s.values.len() + v) * s.trials;
                let outs: Vec<&SchemeOutcome> = results[base..base + s.trials].iter().map(|r| &r.outcomes[si]).collect();
                points.push(summarize(*scheme, *nt, *value, &outs, s.averaging));
            }
        }
    }
    let per_trial = results
        .iter()
        .map(|r| r.outcomes.iter().map(|o| (o.status == TrialStatus::Feasible).then_some(o.leakage).flatten()).collect())
        .collect();
    let resamples = results.iter().map(|r| r.resamples).sum();
    Ok(ScenarioResult { scenario: s.clone(), points, per_trial, resamples })
}

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::InvalidConfig(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// `v<version>` plus `git describe` output when run inside a checkout.
pub fn version_string() -> String {
    let base = format!("v{}", env!("CARGO_PKG_VERSION"));
    let git = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string());
    match git {
        Some(g) if !g.is_empty() => format!("{base}-{g}"),
        _ => base,
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: String,
    config_hash: String,
    seed: u64,
    scenario: &'a Scenario,
    jobs: usize,
    resamples: usize,
    points: &'a [PointResult],
}

pub fn manifest_json(res: &ScenarioResult, jobs: usize) -> String {
    let m = Manifest {
        version: version_string(),
        config_hash: res.scenario.hash(),
        seed: res.scenario.seed,
        scenario: &res.scenario,
        jobs,
        resamples: res.resamples,
        points: &res.points,
    };
    serde_json::to_string_pretty(&m).expect("manifest serializes")
}

/// CSV at `out` and the manifest next to it, both written atomically.
pub fn write_outputs(res: &ScenarioResult, out: &Path, jobs: usize) -> Result<()> {
    write_atomic(out, &res.to_csv())?;
    write_atomic(&manifest_path(out), &manifest_json(res, jobs))
}
