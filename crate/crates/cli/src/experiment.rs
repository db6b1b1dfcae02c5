//! The `run` and `smfe` commands.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use mfg_core::math::spread;
use mfg_core::route::logit_sue;
use mfg_core::stationary::{
    augmented_cost_profile, log_omega, omega_bound_check, sdsue_check, smfe_residuals, solve_smfe,
    value_gap_check, StationaryPair,
};
use mfg_core::{
    dist_distance, fictitious_play, CostModel, Distribution, FpConfig, Policy, PolicySeq,
    SolverReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{resolve_scenario, ConfigError, ExperimentConfig, InitialPolicy};
use crate::output::{matrix_csv, state_header, write_json};
use crate::scenario::Model;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Io(PathBuf, io::Error),
    /// The solver failed; the report was still written.
    Solver(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) | RunError::Io(..) => 1,
            RunError::Solver(_) => 2,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Io(path, e) => write!(f, "cannot write {}: {e}", path.display()),
            RunError::Solver(msg) => write!(f, "solver failure: {msg}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

/// A loaded config with its model and initial distribution.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub model: Model,
    pub mu0: Distribution,
}

impl Experiment {
    pub fn load(config_path: &Path) -> Result<Self, ConfigError> {
        let cfg = ExperimentConfig::load(config_path)?;
        let model = Model::build(&cfg, &resolve_scenario(&cfg, config_path))?;
        let mu0 = cfg.initial_distribution(model.cost().num_states())?;
        Ok(Self { cfg, model, mu0 })
    }

    fn fp_config(&self) -> FpConfig {
        let s = &self.cfg.solver;
        let mut fp = FpConfig::new(self.mu0.clone(), self.cfg.horizon);
        fp.max_iters = s.max_iters;
        fp.exploitability_tol = s.exploitability_tol;
        fp.record_trace = s.record_trace;
        if s.initial_policy == InitialPolicy::Identity {
            let m = self.mu0.len();
            fp.initial_policy = Some(
                PolicySeq::new(vec![Policy::identity(m); self.cfg.horizon])
                    .expect("non-empty horizon"),
            );
        }
        fp
    }

    fn fictitious_play(&self) -> mfg_core::Result<SolverReport> {
        fictitious_play(self.model.cost(), &self.fp_config())
    }
}

fn write(path: PathBuf, text: String) -> Result<(), RunError> {
    fs::write(&path, text).map_err(|e| RunError::Io(path, e))
}

fn json<T: Serialize>(path: PathBuf, value: &T) -> Result<(), RunError> {
    write_json(&path, value).map_err(|e| RunError::Io(path, e))
}

fn prepare_dir(out: &Path) -> Result<(), RunError> {
    fs::create_dir_all(out).map_err(|e| RunError::Io(out.to_path_buf(), e))
}

#[derive(Serialize)]
struct SmfeSummary {
    converged: bool,
    residuals: Option<[f64; 2]>,
    error: Option<String>,
}

/// Runs the stationary solver, keeping failures as data.
fn stationary(
    cm: &dyn CostModel,
    init: Option<&Distribution>,
) -> (Result<StationaryPair, String>, SmfeSummary) {
    match solve_smfe(cm, init) {
        Ok(pair) => {
            let r = smfe_residuals(&pair, cm).ok().map(|(a, b)| [a, b]);
            (
                Ok(pair),
                SmfeSummary {
                    converged: true,
                    residuals: r,
                    error: None,
                },
            )
        }
        Err(e) => {
            let residuals = match &e {
                mfg_core::Error::SolverFailure { residuals, .. } if residuals.len() == 2 => {
                    Some([residuals[0], residuals[1]])
                }
                _ => None,
            };
            let msg = e.to_string();
            (
                Err(msg.clone()),
                SmfeSummary {
                    converged: false,
                    residuals,
                    error: Some(msg),
                },
            )
        }
    }
}

#[derive(Serialize)]
struct OmegaSummary {
    holds: bool,
    log_omega: f64,
}

#[derive(Serialize)]
struct Diagnostics {
    /// `max - min` of `f(s, mu_n) + ln(mu_n(s)) / theta`; null where `mu_n`
    /// has an empty state.
    augmented_cost_flatness: Vec<Option<f64>>,
    smfe: SmfeSummary,
    omega_bound: OmegaSummary,
    link_flows: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize)]
struct Report<'a> {
    status: &'static str,
    error: Option<String>,
    converged: bool,
    iterations_run: usize,
    initial_exploitability: Option<f64>,
    final_exploitability: Option<f64>,
    num_states: usize,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Timing {
    fictitious_play_seconds: f64,
    smfe_seconds: f64,
}

/// Writes the trace files, diagnostics and report for one experiment.
pub fn run_experiment(exp: &Experiment, out: &Path, policy_days: &[usize]) -> Result<(), RunError> {
    let cfg = &exp.cfg;
    if let Some(d) = policy_days.iter().find(|d| **d >= cfg.horizon) {
        return Err(ConfigError::Field {
            field: "policy_days".into(),
            message: format!("day {d} is outside 0..{}", cfg.horizon),
        }
        .into());
    }
    prepare_dir(out)?;
    let cm = exp.model.cost();
    let m = cm.num_states();

    let start = Instant::now();
    let report = match exp.fictitious_play() {
        Ok(r) => r,
        Err(e) => {
            let failed = Report {
                status: "solver_failure",
                error: Some(e.to_string()),
                converged: false,
                iterations_run: 0,
                initial_exploitability: None,
                final_exploitability: None,
                num_states: m,
                config: cfg,
            };
            json(out.join("report.json"), &failed)?;
            return Err(RunError::Solver(e.to_string()));
        }
    };
    let fp_seconds = start.elapsed().as_secs_f64();
    info!("fictitious play took {fp_seconds:.2}s");

    let header = state_header("s", m);
    let days: Vec<&[f64]> = report.avg_mf.days().iter().map(|d| d.probs()).collect();
    write(out.join("mf_trace.csv"), matrix_csv(&header, &days))?;
    for &n in policy_days {
        let pi = report.avg_policy.day(n);
        let rows: Vec<&[f64]> = pi.rows().collect();
        write(
            out.join(format!("policy_day_{n}.csv")),
            matrix_csv(&header, &rows),
        )?;
    }
    write(
        out.join("values.csv"),
        matrix_csv(&header, report.value_seq.days()),
    )?;

    let mut trace = String::from("iteration,exploitability\n");
    trace.push_str(&format!(
        "0,{}\n",
        crate::output::fmt_f64(report.initial_exploitability)
    ));
    let first = report.iterations_run + 1 - report.exploitability_trace.len();
    for (k, e) in report.exploitability_trace.iter().enumerate() {
        trace.push_str(&format!("{},{}\n", first + k, crate::output::fmt_f64(*e)));
    }
    write(out.join("exploitability.csv"), trace)?;

    let start = Instant::now();
    let (_, smfe) = stationary(cm, None);
    let smfe_seconds = start.elapsed().as_secs_f64();

    let flatness = report
        .avg_mf
        .days()
        .iter()
        .map(|d| {
            augmented_cost_profile(d, &cm.travel_costs(d), cm.theta())
                .ok()
                .map(|g| spread(&g))
        })
        .collect();
    let link_flows = report
        .avg_mf
        .days()
        .iter()
        .map(|d| exp.model.link_flows(d))
        .collect::<Option<Vec<_>>>();
    let diagnostics = Diagnostics {
        augmented_cost_flatness: flatness,
        smfe,
        omega_bound: OmegaSummary {
            holds: omega_bound_check(&report.avg_mf, cm),
            log_omega: log_omega(m, cm.theta(), cm.bound_c()),
        },
        link_flows,
    };
    json(out.join("diagnostics.json"), &diagnostics)?;

    let summary = Report {
        status: "ok",
        error: None,
        converged: report.converged,
        iterations_run: report.iterations_run,
        initial_exploitability: Some(report.initial_exploitability),
        final_exploitability: Some(report.final_exploitability),
        num_states: m,
        config: cfg,
    };
    json(out.join("report.json"), &summary)?;
    json(
        out.join("timing.json"),
        &Timing {
            fictitious_play_seconds: fp_seconds,
            smfe_seconds,
        },
    )
}

#[derive(Serialize)]
struct Restarts {
    count: usize,
    seed: u64,
    converged: usize,
    /// Largest `d_f` between any two converged solutions.
    max_pairwise_distance: Option<f64>,
}

#[derive(Serialize, Default)]
struct SmfeFile {
    converged: bool,
    error: Option<String>,
    residuals: Option<[f64; 2]>,
    value: Option<Vec<f64>>,
    mu: Option<Vec<f64>>,
    lambda: Option<f64>,
    sdsue: Option<f64>,
    /// Value/cost gap inequalities; null unless inertia is of indicator form.
    value_gap: Option<bool>,
    /// `d_f` to the logit SUE, for route scenarios without inertia.
    logit_sue_distance: Option<f64>,
    /// `d_f(mu_n, mu_bar)` for each day of the matching equilibrium run.
    mfe_distance_by_day: Option<Vec<f64>>,
    restarts: Option<Restarts>,
}

fn random_dist(rng: &mut ChaCha8Rng, m: usize) -> Distribution {
    let w: Vec<f64> = (0..m)
        .map(|_| -rng.gen_range(f64::EPSILON..1.0).ln())
        .collect();
    Distribution::from_weights(w).expect("positive weights")
}

fn restarts(exp: &Experiment) -> Option<Restarts> {
    let count = exp.cfg.smfe_restarts;
    if count == 0 {
        return None;
    }
    let cm = exp.model.cost();
    let mut rng = ChaCha8Rng::seed_from_u64(exp.cfg.seed);
    let found: Vec<Distribution> = (0..count)
        .filter_map(|_| solve_smfe(cm, Some(&random_dist(&mut rng, cm.num_states()))).ok())
        .map(|p| p.mu)
        .collect();
    let mut worst = None::<f64>;
    for (i, a) in found.iter().enumerate() {
        for b in &found[i + 1..] {
            let d = dist_distance(a, b).expect("same dimension");
            worst = Some(worst.map_or(d, |w| w.max(d)));
        }
    }
    Some(Restarts {
        count,
        seed: exp.cfg.seed,
        converged: found.len(),
        max_pairwise_distance: worst,
    })
}

/// Solves for the stationary pair and compares it with the finite-horizon
/// equilibrium. Writes `smfe.json` even when the solver fails.
pub fn compare_smfe(exp: &Experiment, out: &Path) -> Result<(), RunError> {
    prepare_dir(out)?;
    let cm = exp.model.cost();
    let (pair, summary) = stationary(cm, None);
    let mut file = SmfeFile {
        converged: summary.converged,
        error: summary.error,
        residuals: summary.residuals,
        ..SmfeFile::default()
    };
    let pair = match pair {
        Ok(p) => p,
        Err(msg) => {
            json(out.join("smfe.json"), &file)?;
            return Err(RunError::Solver(msg));
        }
    };

    file.sdsue = sdsue_check(&pair.mu, &pair.policy).ok();
    file.value_gap = exp
        .model
        .indicator_epsilon(&exp.cfg)
        .and_then(|eps| value_gap_check(&pair, cm, eps).ok());
    if let (Model::Route(r), true) = (&exp.model, exp.cfg.epsilon == 0.0) {
        file.logit_sue_distance = logit_sue(r.network(), cm.theta())
            .ok()
            .and_then(|sue| dist_distance(&sue, &pair.mu).ok());
    }
    match exp.fictitious_play() {
        Ok(report) => {
            file.mfe_distance_by_day = Some(
                report
                    .avg_mf
                    .days()
                    .iter()
                    .map(|d| dist_distance(d, &pair.mu).expect("same dimension"))
                    .collect(),
            );
        }
        Err(e) => {
            file.error = Some(format!("equilibrium run failed: {e}"));
        }
    }
    file.restarts = restarts(exp);
    file.value = Some(pair.value);
    file.mu = Some(pair.mu.into_inner());
    file.lambda = Some(pair.lambda);
    json(out.join("smfe.json"), &file)
}
