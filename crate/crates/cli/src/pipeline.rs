//! transform -> augment -> synthesize -> verify -> simulate, with file output.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use ultralocal::analyze::{default_grid, verify_design, VerificationReport};
use ultralocal::augment::build_augmented;
use ultralocal::model::transform;
use ultralocal::sim::{run_metrics, simulate, RunMetrics};
use ultralocal::synth::{solve, ObserverDesign};
use ultralocal::Error;

use crate::artifact::write_design;
use crate::config::{ConfigError, ModeName, RunConfig};

pub const DESIGN_FILE: &str = "design.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
/// Observer state entries used when the config gives no `z0`.
pub const DEFAULT_Z0: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Transform,
    Augment,
    Synth,
    Verify,
    Simulate,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Transform => "transform",
            Stage::Augment => "augment",
            Stage::Synth => "synth",
            Stage::Verify => "verify",
            Stage::Simulate => "simulate",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{stage} stage failed: {source}")]
    Stage { stage: Stage, source: Error },
    #[error("verify stage failed: {0}")]
    Verification(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Config(_) => Stage::Config,
            PipelineError::Stage { stage, .. } => *stage,
            PipelineError::Verification(_) => Stage::Verify,
            PipelineError::Io { .. } => Stage::Output,
        }
    }

    /// 2 config, 3 infeasible, 4 numerical failure, 5 divergence, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { source, .. } => match source {
                Error::Infeasible(_) => 3,
                Error::NonFiniteState { .. } | Error::NonFiniteNonlinearity { .. } => 5,
                Error::InvalidArgument(_) => 2,
                _ => 4,
            },
            PipelineError::Verification(_) => 4,
            PipelineError::Io { .. } => 1,
        }
    }

    /// Short label for tables.
    pub fn status(&self) -> &'static str {
        match self.exit_code() {
            2 => "config-error",
            3 => "infeasible",
            4 => "numerical-failure",
            5 => "diverged",
            _ => "io-error",
        }
    }
}

fn at(stage: Stage) -> impl Fn(Error) -> PipelineError {
    move |source| PipelineError::Stage { stage, source }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One row of the summary and comparison tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mode: ModeName,
    pub config_hash: String,
    pub status: String,
    pub lambda_star: Option<f64>,
    pub gamma_star: Option<f64>,
    pub hinf_measured: Option<f64>,
    pub h2_measured: Option<f64>,
    pub iss_gain_bound: Option<f64>,
    pub rmse: Option<f64>,
    pub post_onset_rmse: Option<f64>,
    pub noise_sensitivity: Option<f64>,
}

impl Summary {
    fn empty(mode: ModeName, config_hash: String, status: &str) -> Self {
        Self {
            mode,
            config_hash,
            status: status.to_string(),
            lambda_star: None,
            gamma_star: None,
            hinf_measured: None,
            h2_measured: None,
            iss_gain_bound: None,
            rmse: None,
            post_onset_rmse: None,
            noise_sensitivity: None,
        }
    }

    /// Post-onset RMSE plus noise sensitivity, each over all fault channels;
    /// falls back to the full-window RMSE when the fault never starts.
    pub fn combined(&self) -> Option<f64> {
        Some(self.post_onset_rmse.or(self.rmse)? + self.noise_sensitivity.unwrap_or(0.0))
    }

    pub const HEADER: &'static str = "mode,status,lambda_star,gamma_star,hinf_measured,h2_measured,iss_gain_bound,rmse,post_onset_rmse,noise_sensitivity,combined,config_sha256";

    pub fn csv_row(&self) -> String {
        let f = |v: Option<f64>| v.filter(|x| x.is_finite()).map_or_else(String::new, |x| format!("{x:.9e}"));
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.mode.as_str(),
            self.status,
            f(self.lambda_star),
            f(self.gamma_star),
            f(self.hinf_measured),
            f(self.h2_measured),
            f(self.iss_gain_bound),
            f(self.rmse),
            f(self.post_onset_rmse),
            f(self.noise_sensitivity),
            f(self.combined()),
            self.config_hash
        )
    }
}

pub fn summary_csv(rows: &[Summary]) -> String {
    let mut out = String::from(Summary::HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Everything a successful run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub design: ObserverDesign,
    pub report: VerificationReport,
    pub metrics: RunMetrics,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

pub fn report_text(cfg: &RunConfig, design: &ObserverDesign, report: &VerificationReport) -> String {
    let c = &design.certificates;
    let f = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6e}"));
    let mut out = String::new();
    writeln!(out, "mode: {}", cfg.design.mode.as_str()).unwrap();
    writeln!(out, "config sha256: {}", cfg.hash()).unwrap();
    writeln!(out, "solver iterations: {}", c.solver_iterations).unwrap();
    writeln!(out, "solver residual: {:.3e}", c.solver_residual).unwrap();
    writeln!(out, "lambda* (certified Hinf bound): {}", f(c.lambda_star)).unwrap();
    writeln!(out, "measured Hinf norm: {}", f(report.hinf_measured)).unwrap();
    writeln!(out, "Hinf grid peak: {:.6e}", report.hinf_grid_peak).unwrap();
    writeln!(out, "gamma* (certified H2 bound): {}", f(c.gamma_star)).unwrap();
    writeln!(out, "measured H2 norm: {}", f(report.h2_measured)).unwrap();
    writeln!(out, "ISS gain bound: {}", f(c.iss_gain_bound)).unwrap();
    writeln!(
        out,
        "  (2 |P [M D_a, -K, E]| / epsilon; the Lyapunov decay argument divides this by a theta in (0, 1))"
    )
    .unwrap();
    writeln!(out, "Hurwitz margin: {:.6e}", report.hurwitz_margin).unwrap();
    writeln!(out).unwrap();
    writeln!(out, "checks:").unwrap();
    for ch in &report.checks {
        let mark = if ch.passed { "PASS" } else { "FAIL" };
        writeln!(out, "  {mark} {}: {}", ch.name, ch.detail).unwrap();
    }
    writeln!(out, "identity residuals:").unwrap();
    for (name, r) in &report.identity_residuals {
        writeln!(out, "  {name}: {r:.3e}").unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "frequency sweep (omega, sigma_max disturbance, sigma_max noise):").unwrap();
    for p in &report.grid {
        writeln!(out, "  {:.6e} {:.6e} {:.6e}", p.omega, p.sigma_disturbance, p.sigma_noise).unwrap();
    }
    out
}

/// Run the full pipeline and write the design, report, trace and summary
/// into `out_dir`.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    let (model, plant) = cfg.build_plant()?;
    let tp = transform(model, cfg.design.rank_tol).map_err(at(Stage::Transform))?;
    let orders = cfg.orders.orders()?;
    let aug = build_augmented(&tp, orders).map_err(at(Stage::Augment))?;
    let design = solve(&aug, cfg.mode(), &cfg.synth_options()).map_err(at(Stage::Synth))?;
    let report = verify_design(&design, &aug, &default_grid());

    fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    let mut emit = |name: &str, contents: &[u8]| -> Result<(), PipelineError> {
        let path = out_dir.join(name);
        write_file(&path, contents)?;
        files.push(path);
        Ok(())
    };
    emit(DESIGN_FILE, write_design(&design).as_bytes())?;
    emit(REPORT_FILE, report_text(cfg, &design, &report).as_bytes())?;
    if !report.passed() {
        let names: Vec<_> = report.failed_checks().iter().map(|c| c.name).collect();
        return Err(PipelineError::Verification(format!("failed checks: {}", names.join(", "))));
    }

    let x0 = cfg.initial_state("simulation.x0", &cfg.simulation.x0, plant.state_dim(), 0.0)?;
    let z0 = cfg.initial_state("simulation.z0", &cfg.simulation.z0, aug.n_z(), DEFAULT_Z0)?;
    let scenario = cfg.scenario(plant.fault_dim())?;
    let trace = simulate(
        plant.as_ref(),
        &design,
        &aug,
        &tp,
        &scenario,
        &cfg.noise(),
        &cfg.sim_options(),
        &x0,
        &z0,
    )
    .map_err(at(Stage::Simulate))?;
    let metrics = run_metrics(&trace, cfg.simulation.transient_cut).map_err(at(Stage::Simulate))?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv).map_err(|source| PipelineError::Io {
        path: out_dir.join(TRACE_FILE),
        source,
    })?;
    emit(TRACE_FILE, &csv)?;

    let c = &design.certificates;
    let nonempty = |v: f64| v.is_finite().then_some(v);
    let summary = Summary {
        mode: cfg.design.mode,
        config_hash: cfg.hash(),
        status: "ok".to_string(),
        lambda_star: c.lambda_star,
        gamma_star: c.gamma_star,
        hinf_measured: report.hinf_measured,
        h2_measured: report.h2_measured,
        iss_gain_bound: c.iss_gain_bound,
        rmse: nonempty(metrics.rmse_total()),
        post_onset_rmse: nonempty(metrics.post_onset_rmse_total()),
        noise_sensitivity: nonempty(metrics.noise_sensitivity_total()),
    };
    emit(SUMMARY_FILE, summary_csv(std::slice::from_ref(&summary)).as_bytes())?;
    Ok(RunOutcome {
        design,
        report,
        metrics,
        summary,
        files,
    })
}

/// Per-mode result of [`compare_modes`].
#[derive(Debug)]
pub struct ModeResult {
    pub mode: ModeName,
    pub outcome: Result<RunOutcome, PipelineError>,
    pub summary: Summary,
}

/// Run the four design modes concurrently, each into `out_dir/<mode>`, and
/// write the comparison table to `out_dir/comparison.csv`.
pub fn compare_modes(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<ModeResult>, PipelineError> {
    let results: Vec<ModeResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = ModeName::COMPARED
            .into_iter()
            .map(|mode| {
                let mut c = cfg.clone();
                c.design.mode = mode;
                let dir = out_dir.join(mode.as_str());
                scope.spawn(move || {
                    let outcome = run_pipeline(&c, &dir);
                    let summary = match &outcome {
                        Ok(o) => o.summary.clone(),
                        Err(e) => Summary::empty(mode, c.hash(), e.status()),
                    };
                    ModeResult { mode, outcome, summary }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("mode worker panicked")).collect()
    });
    fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let rows: Vec<Summary> = results.iter().map(|r| r.summary.clone()).collect();
    write_file(&out_dir.join(COMPARISON_FILE), summary_csv(&rows).as_bytes())?;
    Ok(results)
}
