//! Monte Carlo sweep engine for power-versus-target experiments.
//!
//! A sweep fixes the antenna geometry, then walks a grid of noise levels
//! and QoS targets, solving every requested allocator on the same random
//! channels so that methods are compared in a paired fashion. Results
//! are aggregated per (method, noise, target) cell and emitted as CSV.
//!
//! Capabilities:
//!
//! * paired trials: each trial index maps to one channel realization
//!   shared by every method, target, and noise level ([`run_sweep`]);
//! * order-independent aggregation through pairwise summation, so thread
//!   count and scheduling never change the output bytes;
//! * per-trial sandwich enforcement (an allocator can never undercut its
//!   own lower bound) and dominance accounting between the linear and
//!   decision-feedback allocators;
//! * diagnostic rows: a cell whose solver fails on any trial reports NaN
//!   statistics instead of poisoning the rest of the sweep;
//! * canned configurations for the standard benchmark layouts
//!   ([`SweepConfig::preset`]) and a `key=value` config-file format
//!   ([`SweepConfig::apply_config_text`]);
//! * deterministic CSV emission with a fixed header ([`emit_csv`]).

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::channel::{decompose, generate_channel_for_trial, ChannelEigen};
use crate::error::{Error, Result};
use crate::linear::{allocation_from_lambda, lower_bound_linear, solve_hyperbola};
use crate::nonlinear::{allocation_from_theta, lower_bound_nonlinear, solve_exponential};
use crate::oracles::{alternating_ab, grid_search, GridProblem, SolverConfig};
use crate::qos::{QosVector, StreamProfile};

/// Exact header line of every emitted CSV file.
pub const CSV_HEADER: &str = "method,rho,eta,mean_power,mean_power_db,std_error,gap_to_lb,trials";

/// Slack before a nonlinear-vs-linear comparison counts as an exception.
const DOMINANCE_TOL: f64 = 1e-9;

/// Relative slack allowed when checking a power against its lower bound.
const SANDWICH_TOL: f64 = 1e-9;

/// One power-allocation method the sweep engine can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Closed-form linear-receiver allocator (hyperbola surrogate).
    LinearAlgorithm,
    /// Convex lower bound for the linear receiver.
    LinearLowerBound,
    /// Closed-form decision-feedback allocator (log-domain surrogate).
    NonlinearAlgorithm,
    /// Convex lower bound for the decision-feedback receiver.
    NonlinearLowerBound,
    /// Alternating refinement of the two hop loads.
    Alternating,
    /// Exhaustive lattice search on the exact linear objective.
    GridOracle,
}

impl Method {
    /// Every method in canonical output order.
    pub const ALL: [Method; 6] = [
        Method::LinearAlgorithm,
        Method::LinearLowerBound,
        Method::NonlinearAlgorithm,
        Method::NonlinearLowerBound,
        Method::Alternating,
        Method::GridOracle,
    ];

    /// Short tag used in CSV output and on the command line.
    pub fn tag(self) -> &'static str {
        match self {
            Method::LinearAlgorithm => "L-HA",
            Method::LinearLowerBound => "L-LB",
            Method::NonlinearAlgorithm => "NL-EA",
            Method::NonlinearLowerBound => "NL-LB",
            Method::Alternating => "ALT",
            Method::GridOracle => "GRID",
        }
    }

    /// Parses a tag, case-insensitively.
    pub fn parse(tag: &str) -> Result<Method> {
        let upper = tag.trim().to_ascii_uppercase();
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == upper)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown method '{tag}', expected one of L-HA, L-LB, NL-EA, NL-LB, ALT, GRID"
                ))
            })
    }

    /// True for the two rows that are themselves lower bounds.
    fn is_lower_bound(self) -> bool {
        matches!(self, Method::LinearLowerBound | Method::NonlinearLowerBound)
    }

    /// True for methods whose reference bound is the linear one.
    fn uses_linear_bound(self) -> bool {
        matches!(
            self,
            Method::LinearAlgorithm
                | Method::LinearLowerBound
                | Method::Alternating
                | Method::GridOracle
        )
    }
}

/// Full description of one Monte Carlo sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Antennas at the source, relay, and destination (square system).
    pub n_antennas: usize,
    /// Data streams, at most `n_antennas`.
    pub k_streams: usize,
    /// Noise variances to sweep, outer grid axis.
    pub rho_list: Vec<f64>,
    /// Target vectors to sweep, inner grid axis.
    pub eta_grid: Vec<QosVector>,
    /// Monte Carlo repetitions per cell.
    pub trials: usize,
    /// Base seed; trial `t` uses RNG stream `t` of this seed.
    pub seed: u64,
    /// Methods to run, deduplicated into canonical order.
    pub methods: Vec<Method>,
    /// Destination of the CSV report.
    pub out_path: PathBuf,
    /// Worker threads for the trial loop; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for SweepConfig {
    /// Three streams over three antennas at unit noise, one equal 0.5
    /// target, the four closed-form methods, a thousand trials.
    fn default() -> Self {
        SweepConfig {
            n_antennas: 3,
            k_streams: 3,
            rho_list: vec![1.0],
            eta_grid: vec![QosVector::equal(3, 0.5).expect("default target is valid")],
            trials: 1000,
            seed: 1,
            methods: vec![
                Method::LinearAlgorithm,
                Method::LinearLowerBound,
                Method::NonlinearAlgorithm,
                Method::NonlinearLowerBound,
            ],
            out_path: PathBuf::from("sweep.csv"),
            threads: None,
        }
    }
}

/// Equal-target grid used by the figure presets, loosest to tightest
/// sweep direction reversed so the plots read left to right.
const PRESET_ETA_GRID: [f64; 7] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 0.9];

/// Table layout: the five equal targets in column order.
const TABLE_ETA_GRID: [f64; 5] = [0.9, 0.5, 0.1, 0.05, 0.01];

impl SweepConfig {
    /// Canned configurations for the standard benchmark layouts.
    ///
    /// * `table1`: N=3, rho=1, equal targets (0.9, 0.5, 0.1, 0.05, 0.01);
    /// * `fig3`: N=3, rho in (1, 0.01), equal-target grid;
    /// * `fig4`: N=4, rho=1, equal-target grid;
    /// * `fig5`: N=4, rho=1, patterned targets (eta/4, eta/2, eta/2, eta).
    pub fn preset(name: &str) -> Result<SweepConfig> {
        let methods = vec![
            Method::LinearAlgorithm,
            Method::LinearLowerBound,
            Method::NonlinearAlgorithm,
            Method::NonlinearLowerBound,
        ];
        let equal_grid = |k: usize, values: &[f64]| -> Result<Vec<QosVector>> {
            values.iter().map(|&e| QosVector::equal(k, e)).collect()
        };
        let (n, rho_list, eta_grid) = match name {
            "table1" => (3, vec![1.0], equal_grid(3, &TABLE_ETA_GRID)?),
            "fig3" => (3, vec![1.0, 0.01], equal_grid(3, &PRESET_ETA_GRID)?),
            "fig4" => (4, vec![1.0], equal_grid(4, &PRESET_ETA_GRID)?),
            "fig5" => {
                let grid = PRESET_ETA_GRID
                    .iter()
                    .map(|&e| QosVector::new(vec![e / 4.0, e / 2.0, e / 2.0, e]))
                    .collect::<Result<Vec<_>>>()?;
                (4, vec![1.0], grid)
            }
            other => {
                return Err(Error::invalid(format!(
                    "unknown preset '{other}', expected table1, fig3, fig4, or fig5"
                )))
            }
        };
        Ok(SweepConfig {
            n_antennas: n,
            k_streams: n,
            rho_list,
            eta_grid,
            trials: 1000,
            seed: 1,
            methods,
            out_path: PathBuf::from(format!("{name}.csv")),
            threads: None,
        })
    }

    /// Applies `key=value` lines on top of the current configuration.
    ///
    /// Recognized keys: `n`, `k`, `rho` (comma-separated), `eta`
    /// (semicolon-separated target vectors, comma-separated entries),
    /// `equal_eta` (comma-separated scalars, each expanded to `k` equal
    /// targets), `trials`, `seed`, `methods` (comma-separated tags),
    /// `out`, `threads`. Blank lines and `#` comments are skipped.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        let mut equal_eta: Option<Vec<f64>> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {} is not key=value: '{line}'", ln + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "n" => self.n_antennas = parse_num(key, value)?,
                "k" => self.k_streams = parse_num(key, value)?,
                "trials" => self.trials = parse_num(key, value)?,
                "seed" => self.seed = parse_num(key, value)?,
                "threads" => self.threads = Some(parse_num(key, value)?),
                "rho" => self.rho_list = parse_float_list(key, value)?,
                "eta" => {
                    self.eta_grid = value
                        .split(';')
                        .map(|group| QosVector::new(parse_float_list("eta", group)?))
                        .collect::<Result<Vec<_>>>()?;
                }
                "equal_eta" => equal_eta = Some(parse_float_list(key, value)?),
                "methods" => {
                    self.methods = value
                        .split(',')
                        .map(Method::parse)
                        .collect::<Result<Vec<_>>>()?;
                }
                "out" => self.out_path = PathBuf::from(value),
                other => {
                    return Err(Error::invalid(format!("unknown config key '{other}'")));
                }
            }
        }
        if let Some(scalars) = equal_eta {
            self.eta_grid = scalars
                .iter()
                .map(|&e| QosVector::equal(self.k_streams, e))
                .collect::<Result<Vec<_>>>()?;
        }
        Ok(())
    }

    /// Structural checks run before any trial starts.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trial count must be at least 1"));
        }
        if self.k_streams == 0 || self.k_streams > self.n_antennas {
            return Err(Error::invalid(format!(
                "stream count must satisfy 1 <= k <= {}, got {}",
                self.n_antennas, self.k_streams
            )));
        }
        if self.rho_list.is_empty() {
            return Err(Error::invalid("noise-level list must not be empty"));
        }
        for &rho in &self.rho_list {
            if !(rho.is_finite() && rho > 0.0) {
                return Err(Error::invalid(format!(
                    "noise variance must be positive and finite, got {rho}"
                )));
            }
        }
        if self.eta_grid.is_empty() {
            return Err(Error::invalid("target grid must not be empty"));
        }
        for qos in &self.eta_grid {
            if qos.k() != self.k_streams {
                return Err(Error::invalid(format!(
                    "target vector {:?} has {} entries but the sweep runs {} streams",
                    qos.eta,
                    qos.k(),
                    self.k_streams
                )));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("method list must not be empty"));
        }
        Ok(())
    }

    /// Requested methods in canonical order without duplicates.
    fn ordered_methods(&self) -> Vec<Method> {
        Method::ALL
            .into_iter()
            .filter(|m| self.methods.contains(m))
            .collect()
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("could not parse {key}='{value}'")))
}

fn parse_float_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|piece| parse_num::<f64>(key, piece))
        .collect()
}

/// Aggregated statistics of one (method, noise, target) cell.
#[derive(Debug, Clone)]
pub struct SweepRow {
    /// Which allocator produced the cell.
    pub method: Method,
    /// Noise variance of the cell.
    pub rho: f64,
    /// Semicolon-joined target vector, e.g. `0.5;0.5;0.5`.
    pub eta_descriptor: String,
    /// Mean total power over the successful trials (NaN if any failed).
    pub mean_power: f64,
    /// Standard error of the mean power.
    pub std_error: f64,
    /// Mean relative gap to the method's reference lower bound.
    pub mean_gap_to_lb: f64,
    /// Trials that produced a value.
    pub trials_used: usize,
}

/// Per-trial outcome of one cell: total power and relative bound gap.
#[derive(Debug, Clone, Copy)]
struct TrialValue {
    power: f64,
    gap: f64,
}

type CellResult = std::result::Result<TrialValue, String>;

/// Runs every cell of the sweep and returns rows ordered by method,
/// then noise level, then target vector.
///
/// Solver failures inside a trial turn the affected cell into a
/// diagnostic row (NaN statistics) and are reported on stderr; they do
/// not abort the sweep. A method undercutting its own lower bound on
/// any trial is a bug and panics.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let methods = cfg.ordered_methods();
    let solver = SolverConfig::default();
    let run = || -> Vec<Vec<Vec<Vec<CellResult>>>> {
        cfg.rho_list
            .iter()
            .map(|&rho| {
                (0..cfg.trials as u64)
                    .into_par_iter()
                    .map(|trial| run_trial(cfg, &methods, rho, trial, &solver))
                    .collect()
            })
            .collect()
    };
    let per_rho = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid(format!("could not build a {t}-thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut rows = Vec::with_capacity(methods.len() * cfg.rho_list.len() * cfg.eta_grid.len());
    for (mi, &method) in methods.iter().enumerate() {
        for (ri, &rho) in cfg.rho_list.iter().enumerate() {
            for (ei, qos) in cfg.eta_grid.iter().enumerate() {
                let values: Vec<&CellResult> =
                    per_rho[ri].iter().map(|trial| &trial[ei][mi]).collect();
                rows.push(aggregate_cell(method, rho, qos, &values));
            }
        }
    }
    report_dominance(cfg, &methods, &per_rho);
    Ok(rows)
}

/// Solves every requested method on one channel realization.
///
/// The channel depends only on `(seed, trial, n)`, never on the noise
/// level or the targets, which is what makes comparisons paired and the
/// noise-scaling law exact.
fn run_trial(
    cfg: &SweepConfig,
    methods: &[Method],
    rho: f64,
    trial: u64,
    solver: &SolverConfig,
) -> Vec<Vec<CellResult>> {
    let prep = (|| {
        let ch = generate_channel_for_trial(cfg.n_antennas, cfg.n_antennas, rho, cfg.seed, trial)?;
        let eigen = decompose(&ch, cfg.k_streams)?;
        let profile = StreamProfile::from_eigen(&eigen, rho)?;
        Ok::<(ChannelEigen, StreamProfile), Error>((eigen, profile))
    })();
    let (eigen, profile) = match prep {
        Ok(pair) => pair,
        Err(err) => {
            let msg = err.to_string();
            return cfg
                .eta_grid
                .iter()
                .map(|_| vec![Err(msg.clone()); methods.len()])
                .collect();
        }
    };
    let need_linear_bound = methods.iter().any(|m| m.uses_linear_bound());
    let need_nonlinear_bound = methods
        .iter()
        .any(|m| matches!(m, Method::NonlinearAlgorithm | Method::NonlinearLowerBound));

    cfg.eta_grid
        .iter()
        .map(|qos| {
            let lb_linear: Option<std::result::Result<f64, String>> =
                need_linear_bound.then(|| {
                    lower_bound_linear(&profile, qos)
                        .map(|r| r.value)
                        .map_err(|e| e.to_string())
                });
            let lb_nonlinear: Option<std::result::Result<f64, String>> =
                need_nonlinear_bound.then(|| {
                    lower_bound_nonlinear(&profile, &qos.kappa)
                        .map(|r| r.value)
                        .map_err(|e| e.to_string())
                });
            methods
                .iter()
                .map(|&method| {
                    let bound = if method.uses_linear_bound() {
                        lb_linear.clone().expect("linear bound was precomputed")
                    } else {
                        lb_nonlinear
                            .clone()
                            .expect("nonlinear bound was precomputed")
                    };
                    let bound = bound?;
                    if method.is_lower_bound() {
                        return Ok(TrialValue {
                            power: bound,
                            gap: 0.0,
                        });
                    }
                    let power = solve_method(method, &eigen, &profile, qos, rho, solver)
                        .map_err(|e| e.to_string())?;
                    assert!(
                        power >= bound - bound.abs() * SANDWICH_TOL - 1e-12,
                        "{} produced {power} below its lower bound {bound} \
                         (rho={rho}, eta={:?}, trial={trial})",
                        method.tag(),
                        qos.eta
                    );
                    let gap = if bound > 0.0 {
                        (power - bound) / bound
                    } else {
                        power - bound
                    };
                    Ok(TrialValue { power, gap })
                })
                .collect()
        })
        .collect()
}

/// Dispatches one allocator on one prepared channel.
fn solve_method(
    method: Method,
    eigen: &ChannelEigen,
    profile: &StreamProfile,
    qos: &QosVector,
    rho: f64,
    solver: &SolverConfig,
) -> Result<f64> {
    match method {
        Method::LinearAlgorithm => {
            let lam = solve_hyperbola(&profile.w, qos)?;
            Ok(allocation_from_lambda(&lam, eigen, rho, qos)?.total_power)
        }
        Method::NonlinearAlgorithm => {
            let theta = solve_exponential(&profile.w, &qos.kappa)?;
            Ok(allocation_from_theta(&theta, eigen, rho, &qos.kappa)?.total_power)
        }
        Method::Alternating => Ok(alternating_ab(eigen, qos, rho, solver)?
            .allocation
            .total_power),
        Method::GridOracle => Ok(grid_search(GridProblem::Linear, eigen, qos, rho, solver)?.value),
        Method::LinearLowerBound | Method::NonlinearLowerBound => {
            unreachable!("lower-bound rows are filled from the precomputed bounds")
        }
    }
}

/// Condenses the per-trial outcomes of one cell into a row.
///
/// Any failed trial turns the cell into a diagnostic row: statistics
/// become NaN, `trials_used` reports how many trials did succeed, and a
/// warning goes to stderr.
fn aggregate_cell(method: Method, rho: f64, qos: &QosVector, values: &[&CellResult]) -> SweepRow {
    let eta_descriptor = describe_eta(qos);
    let mut powers = Vec::with_capacity(values.len());
    let mut gaps = Vec::with_capacity(values.len());
    let mut first_error: Option<&String> = None;
    for v in values {
        match v {
            Ok(t) => {
                powers.push(t.power);
                gaps.push(t.gap);
            }
            Err(msg) => first_error = first_error.or(Some(msg)),
        }
    }
    if let Some(msg) = first_error {
        let failures = values.len() - powers.len();
        eprintln!(
            "warning: {} cell at rho={rho}, eta={eta_descriptor} failed on {failures} of {} \
             trials; first error: {msg}",
            method.tag(),
            values.len()
        );
        return SweepRow {
            method,
            rho,
            eta_descriptor,
            mean_power: f64::NAN,
            std_error: f64::NAN,
            mean_gap_to_lb: f64::NAN,
            trials_used: powers.len(),
        };
    }
    let n = powers.len();
    let mean_power = pairwise_sum(&powers) / n as f64;
    let mean_gap_to_lb = pairwise_sum(&gaps) / n as f64;
    let std_error = if n >= 2 {
        let centered: Vec<f64> = powers.iter().map(|p| (p - mean_power).powi(2)).collect();
        (pairwise_sum(&centered) / ((n - 1) as f64 * n as f64)).sqrt()
    } else {
        0.0
    };
    SweepRow {
        method,
        rho,
        eta_descriptor,
        mean_power,
        std_error,
        mean_gap_to_lb,
        trials_used: n,
    }
}

/// Counts trials where the decision-feedback allocator needed more power
/// than the linear one on the same channel, which the equal-target
/// theory forbids, and reports any exceptions on stderr.
fn report_dominance(cfg: &SweepConfig, methods: &[Method], per_rho: &[Vec<Vec<Vec<CellResult>>>]) {
    let Some(li) = methods.iter().position(|m| *m == Method::LinearAlgorithm) else {
        return;
    };
    let Some(ni) = methods
        .iter()
        .position(|m| *m == Method::NonlinearAlgorithm)
    else {
        return;
    };
    for (ri, &rho) in cfg.rho_list.iter().enumerate() {
        for (ei, qos) in cfg.eta_grid.iter().enumerate() {
            if !qos.is_equal() {
                continue;
            }
            let mut exceptions = 0usize;
            let mut compared = 0usize;
            for trial in &per_rho[ri] {
                if let (Ok(lin), Ok(nl)) = (&trial[ei][li], &trial[ei][ni]) {
                    compared += 1;
                    if nl.power > lin.power + DOMINANCE_TOL {
                        exceptions += 1;
                    }
                }
            }
            if exceptions > 0 {
                eprintln!(
                    "warning: decision-feedback allocator exceeded the linear allocator on \
                     {exceptions} of {compared} trials (rho={rho}, eta={})",
                    describe_eta(qos)
                );
                if exceptions * 100 > compared {
                    eprintln!(
                        "warning: dominance exception rate is above 1% at rho={rho}, eta={}",
                        describe_eta(qos)
                    );
                }
            }
        }
    }
}

/// Semicolon-joined targets, used as the CSV eta field.
fn describe_eta(qos: &QosVector) -> String {
    qos.eta
        .iter()
        .map(|e| format!("{e}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Sums with pairwise splitting so the result is independent of how the
/// values were produced and accurate to a few ulps.
fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Writes rows to `path` under [`CSV_HEADER`].
///
/// Floats are printed in scientific notation with enough digits to
/// round-trip exactly; `mean_power_db` is `10 log10(mean_power)`.
pub fn emit_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let db = 10.0 * row.mean_power.log10();
        out.push_str(&format!(
            "{},{:e},{},{:e},{:e},{:e},{:e},{}\n",
            row.method.tag(),
            row.rho,
            row.eta_descriptor,
            row.mean_power,
            db,
            row.std_error,
            row.mean_gap_to_lb,
            row.trials_used
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-9;

    fn tiny_config() -> SweepConfig {
        SweepConfig {
            n_antennas: 2,
            k_streams: 2,
            rho_list: vec![1.0],
            eta_grid: vec![
                QosVector::equal(2, 0.3).unwrap(),
                QosVector::equal(2, 0.7).unwrap(),
            ],
            trials: 5,
            seed: 9,
            methods: Method::ALL.to_vec(),
            out_path: PathBuf::from("unused.csv"),
            threads: Some(2),
        }
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert!(
                Method::parse(m.tag()).unwrap() == m,
                "tag {} did not round-trip",
                m.tag()
            );
        }
        assert!(
            Method::parse("nl-ea").unwrap() == Method::NonlinearAlgorithm,
            "parsing should be case-insensitive"
        );
        assert!(Method::parse("bogus").is_err(), "bad tags must be rejected");
    }

    #[test]
    fn presets_have_the_documented_shapes() {
        let t1 = SweepConfig::preset("table1").unwrap();
        assert!(t1.n_antennas == 3 && t1.k_streams == 3);
        assert!(t1.rho_list == vec![1.0]);
        assert!(t1.eta_grid.len() == 5 && t1.trials == 1000);
        let f3 = SweepConfig::preset("fig3").unwrap();
        assert!(f3.rho_list == vec![1.0, 0.01]);
        let f5 = SweepConfig::preset("fig5").unwrap();
        assert!(f5.n_antennas == 4);
        let pattern = &f5.eta_grid[0].eta;
        let base = pattern[3];
        assert!(
            (pattern[0] - base / 4.0).abs() < 1e-15
                && (pattern[1] - base / 2.0).abs() < 1e-15
                && (pattern[2] - base / 2.0).abs() < 1e-15,
            "patterned preset should scale targets as (1/4, 1/2, 1/2, 1)"
        );
        assert!(SweepConfig::preset("fig9").is_err());
    }

    #[test]
    fn config_text_overrides_fields() {
        let mut cfg = SweepConfig::preset("table1").unwrap();
        cfg.apply_config_text(
            "# comment\n\
             trials = 7\n\
             rho = 0.5, 2.0\n\
             equal_eta = 0.4, 0.6\n\
             methods = L-HA, NL-EA\n\
             out = /tmp/x.csv\n",
        )
        .unwrap();
        assert!(cfg.trials == 7);
        assert!(cfg.rho_list == vec![0.5, 2.0]);
        assert!(cfg.eta_grid.len() == 2 && cfg.eta_grid[0].eta == vec![0.4; 3]);
        assert!(cfg.methods == vec![Method::LinearAlgorithm, Method::NonlinearAlgorithm]);
        assert!(cfg.out_path.as_os_str() == "/tmp/x.csv");
        assert!(
            cfg.apply_config_text("bogus_key = 1").is_err(),
            "unknown keys must be rejected"
        );
        assert!(
            cfg.apply_config_text("no equals sign").is_err(),
            "malformed lines must be rejected"
        );
    }

    #[test]
    fn sweep_rows_are_deterministic_and_ordered() {
        let cfg = tiny_config();
        let rows_a = run_sweep(&cfg).expect("sweep failed");
        let rows_b = run_sweep(&cfg).expect("sweep failed");
        assert!(rows_a.len() == 12, "expected 12 rows, got {}", rows_a.len());
        for (a, b) in rows_a.iter().zip(&rows_b) {
            assert!(
                a.mean_power.to_bits() == b.mean_power.to_bits()
                    && a.std_error.to_bits() == b.std_error.to_bits()
                    && a.mean_gap_to_lb.to_bits() == b.mean_gap_to_lb.to_bits(),
                "repeat run changed a cell: {a:?} vs {b:?}"
            );
        }
        let mut seen = Vec::new();
        for row in &rows_a {
            seen.push((row.method, row.eta_descriptor.clone()));
            assert!(row.trials_used == 5, "all trials should succeed");
            assert!(row.mean_power.is_finite() && row.mean_power > 0.0);
            assert!(row.std_error >= 0.0);
        }
        let want_first = (Method::LinearAlgorithm, "0.3;0.3".to_string());
        assert!(seen[0] == want_first, "row order starts at {:?}", seen[0]);
    }

    #[test]
    fn noise_scaling_is_exact_across_the_sweep() {
        let mut cfg = tiny_config();
        cfg.methods = vec![
            Method::LinearAlgorithm,
            Method::LinearLowerBound,
            Method::NonlinearAlgorithm,
            Method::NonlinearLowerBound,
            Method::Alternating,
            Method::GridOracle,
        ];
        cfg.rho_list = vec![0.02, 2.0];
        cfg.trials = 3;
        let rows = run_sweep(&cfg).expect("sweep failed");
        for pair in rows.chunks(4) {
            // chunks of (rho=0.02 etas..., rho=2.0 etas...) per method
            let (low, high) = pair.split_at(2);
            for (l, h) in low.iter().zip(high) {
                assert!(l.method == h.method && l.eta_descriptor == h.eta_descriptor);
                let ratio = h.mean_power / l.mean_power;
                assert!(
                    (ratio - 100.0).abs() < 100.0 * EPS,
                    "{} power should scale by exactly 100, got {ratio}",
                    l.method.tag()
                );
            }
        }
    }

    #[test]
    fn lower_bound_rows_sit_under_their_methods() {
        let cfg = tiny_config();
        let rows = run_sweep(&cfg).expect("sweep failed");
        let find = |m: Method, eta: &str| {
            rows.iter()
                .find(|r| r.method == m && r.eta_descriptor == eta)
                .expect("row missing")
        };
        for eta in ["0.3;0.3", "0.7;0.7"] {
            let lb = find(Method::LinearLowerBound, eta).mean_power;
            for m in [
                Method::LinearAlgorithm,
                Method::Alternating,
                Method::GridOracle,
            ] {
                let p = find(m, eta).mean_power;
                assert!(
                    p >= lb * (1.0 - EPS),
                    "{} mean {p} fell below the linear bound {lb}",
                    m.tag()
                );
            }
            let nl = find(Method::NonlinearAlgorithm, eta).mean_power;
            let nl_lb = find(Method::NonlinearLowerBound, eta).mean_power;
            assert!(nl >= nl_lb * (1.0 - EPS));
            let lin = find(Method::LinearAlgorithm, eta).mean_power;
            assert!(
                nl <= lin + DOMINANCE_TOL,
                "decision-feedback mean {nl} exceeded linear mean {lin}"
            );
        }
    }

    #[test]
    fn stricter_patterned_targets_cost_more_power() {
        let k = 4;
        let equal = SweepConfig {
            n_antennas: k,
            k_streams: k,
            rho_list: vec![1.0],
            eta_grid: vec![QosVector::equal(k, 0.4).unwrap()],
            trials: 10,
            seed: 3,
            methods: vec![Method::LinearAlgorithm],
            out_path: PathBuf::from("unused.csv"),
            threads: None,
        };
        let mut patterned = equal.clone();
        patterned.eta_grid = vec![QosVector::new(vec![0.1, 0.2, 0.2, 0.4]).unwrap()];
        let p_equal = run_sweep(&equal).expect("sweep failed")[0].mean_power;
        let p_pattern = run_sweep(&patterned).expect("sweep failed")[0].mean_power;
        assert!(
            p_pattern >= p_equal,
            "patterned targets {p_pattern} should cost at least the equal-target {p_equal}"
        );
    }

    #[test]
    fn failing_cells_become_diagnostic_rows() {
        let cfg = SweepConfig {
            n_antennas: 4,
            k_streams: 4,
            rho_list: vec![1.0],
            eta_grid: vec![QosVector::equal(4, 0.5).unwrap()],
            trials: 2,
            seed: 5,
            methods: vec![Method::LinearAlgorithm, Method::GridOracle],
            out_path: PathBuf::from("unused.csv"),
            threads: None,
        };
        let rows = run_sweep(&cfg).expect("sweep failed");
        assert!(rows.len() == 2);
        assert!(rows[0].method == Method::LinearAlgorithm && rows[0].mean_power.is_finite());
        assert!(
            rows[1].method == Method::GridOracle && rows[1].mean_power.is_nan(),
            "a four-stream grid request must yield a diagnostic row"
        );
        assert!(rows[1].trials_used == 0);
    }

    #[test]
    fn csv_layout_matches_the_contract() {
        let dir = std::env::temp_dir().join("relayqos_sweep_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.csv");

        emit_csv(&[], &path).expect("write failed");
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text == format!("{CSV_HEADER}\n"),
            "empty sweep should emit a header-only file, got {text:?}"
        );

        let row = SweepRow {
            method: Method::LinearAlgorithm,
            rho: 0.01,
            eta_descriptor: "0.5;0.5".into(),
            mean_power: 14.211,
            std_error: 0.125,
            mean_gap_to_lb: 0.0071,
            trials_used: 1000,
        };
        emit_csv(std::slice::from_ref(&row), &path).expect("write failed");
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert!(lines.next() == Some(CSV_HEADER));
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert!(fields.len() == 8, "expected 8 columns, got {fields:?}");
        assert!(fields[0] == "L-HA" && fields[2] == "0.5;0.5" && fields[7] == "1000");
        let mean: f64 = fields[3].parse().unwrap();
        let db: f64 = fields[4].parse().unwrap();
        let se: f64 = fields[5].parse().unwrap();
        let gap: f64 = fields[6].parse().unwrap();
        assert!(mean == 14.211, "mean power must round-trip, got {mean}");
        assert!(se == 0.125 && gap == 0.0071, "floats must round-trip");
        assert!(
            (db - 10.0 * 14.211f64.log10()).abs() < 1e-12,
            "dB column should be 10 log10 of the mean"
        );

        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn pairwise_sum_matches_exact_arithmetic() {
        let values: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert!(pairwise_sum(&values) == 500_500.0);
        assert!(pairwise_sum(&[]) == 0.0);
    }
}
