//! Subcommand execution. Everything here is a pure function of the
//! resolved configuration; timing lives only in the manifest.

use qpwegner_core::dm::{dm_sweep, stollmann_suite, DmSweep, StollmannCase, DM_SLACK};
use qpwegner_core::torus::{fit_spacing_exponent, SpacingFit};
use qpwegner_core::wegner::{ids_curve, run_experiment, ExperimentReport, IdsCurve, Mode};
use qpwegner_core::{LatticeCube, TorusPoint};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{csv_bytes, json_bytes};
use crate::{CliError, Command, Result};

/// Acceptance window of the fitted Diophantine exponent of the golden mean.
pub const SPACING_EXPONENT_WINDOW: (f64, f64) = (0.9, 1.1);

/// Eigenvalue-shift tolerance of `dm-check`.
pub const DM_SHIFT_TOLERANCE: f64 = 1e-9;

/// Rendered result of one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub csv: Vec<u8>,
    pub json: Vec<u8>,
    /// Human-readable lines for the terminal.
    pub lines: Vec<String>,
}

#[derive(Serialize)]
struct Summary<'a, T> {
    command: &'static str,
    version: &'static str,
    pass: bool,
    config: &'a RunConfig,
    result: T,
}

#[derive(Serialize)]
struct ConcentrationRow {
    epsilon: f64,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    n_samples: u64,
    bound_diagnostic: f64,
}

#[derive(Serialize)]
struct SpacingRow {
    #[serde(rename = "L")]
    l: u32,
    #[serde(rename = "delta_L")]
    delta: f64,
}

#[derive(Serialize)]
struct StollmannRow<'a> {
    functional: &'a str,
    arity: usize,
    center: f64,
    epsilon: f64,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    n_samples: u64,
    bound: f64,
}

#[derive(Serialize)]
struct MetricRow {
    metric: &'static str,
    value: f64,
}

#[derive(Serialize)]
struct IdsRow {
    energy: f64,
    ids: f64,
}

fn finish<T: Serialize>(cmd: Command, cfg: &RunConfig, pass: bool, result: T, csv: Vec<u8>, lines: Vec<String>) -> Result<Outcome> {
    let json = json_bytes(&Summary {
        command: cmd.name(),
        version: env!("CARGO_PKG_VERSION"),
        pass,
        config: cfg,
        result,
    })?;
    Ok(Outcome { pass, csv, json, lines })
}

/// Runs `cmd` on the current rayon pool.
pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<Outcome> {
    match cmd {
        Command::Spacing => spacing(cmd, cfg),
        Command::WegnerClassical => wegner(cmd, cfg, Mode::Classical1p),
        Command::WegnerIid2p => {
            let mode = if cfg.center_b.is_some() { Mode::Iid2pTwoVolume } else { Mode::Iid2pOneVolume };
            wegner(cmd, cfg, mode)
        }
        Command::WegnerQp1 => wegner(cmd, cfg, Mode::QpOneVolume),
        Command::WegnerQp2 => wegner(cmd, cfg, Mode::QpTwoVolume),
        Command::Stollmann => stollmann(cmd, cfg),
        Command::DmCheck => dm_check(cmd, cfg),
        Command::Ids => ids(cmd, cfg),
    }
}

fn spacing(cmd: Command, cfg: &RunConfig) -> Result<Outcome> {
    let action = cfg.action()?;
    let radii = cfg.radii.clone().unwrap_or_default();
    let fit: SpacingFit = fit_spacing_exponent(&action, &TorusPoint::origin(action.nu()), &radii)?;
    let (lo, hi) = SPACING_EXPONENT_WINDOW;
    let pass = fit.min_delta_times_l > 0.0 && (lo..=hi).contains(&fit.exponent_b);
    let rows: Vec<SpacingRow> = fit.table.iter().map(|&(l, delta)| SpacingRow { l, delta }).collect();
    let lines = vec![format!(
        "fitted B = {:.4} (window [{lo}, {hi}]), C = {:.4}, min L*delta_L = {:.4}",
        fit.exponent_b, fit.constant_c, fit.min_delta_times_l
    )];
    finish(cmd, cfg, pass, &fit, csv_bytes(&rows)?, lines)
}

fn wegner(cmd: Command, cfg: &RunConfig, mode: Mode) -> Result<Outcome> {
    let exp = cfg.experiment(mode)?;
    let report: ExperimentReport = run_experiment(&exp)?;
    let rows: Vec<ConcentrationRow> = report
        .estimates
        .iter()
        .zip(&report.bounds)
        .map(|(e, &bound)| ConcentrationRow {
            epsilon: e.epsilon,
            p_hat: e.p_hat,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            n_samples: e.n_samples,
            bound_diagnostic: bound,
        })
        .collect();
    let mut lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "eps = {:<8} p_hat = {:.5}  ci = [{:.5}, {:.5}]  bound = {:.5}",
                r.epsilon, r.p_hat, r.ci_low, r.ci_high, r.bound_diagnostic
            )
        })
        .collect();
    if let Some(e) = report.energy {
        lines.push(format!("energy E = {e}"));
    }
    match &report.slope {
        Some(s) => lines.push(format!("log-log slope = {:.4} +/- {:.4} ({} points)", s.slope, s.slope_stderr, s.points_used)),
        None => lines.push("log-log slope: too few points with 0 < p_hat < 1".into()),
    }
    if let Some(qp) = &report.qp {
        lines.push(format!(
            "N = {}, delta = {:.3e}, n0 = {}, truncation = {}, 1/a_n0 = {}",
            qp.enclosing_radius, qp.spacing, qp.separation_level, qp.truncation, qp.conditional_density_bound
        ));
    }
    finish(cmd, cfg, report.pass, &report, csv_bytes(&rows)?, lines)
}

fn stollmann(cmd: Command, cfg: &RunConfig) -> Result<Outcome> {
    let cases: Vec<StollmannCase> = stollmann_suite(&cfg.epsilon_grid()?, cfg.samples()?, cfg.seed()?)?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for case in &cases {
        for r in &case.reports {
            rows.push(StollmannRow {
                functional: &case.label,
                arity: case.arity,
                center: case.center,
                epsilon: r.estimate.epsilon,
                p_hat: r.estimate.p_hat,
                ci_low: r.estimate.ci_low,
                ci_high: r.estimate.ci_high,
                n_samples: r.estimate.n_samples,
                bound: r.bound,
            });
            lines.push(format!(
                "{:<22} |J| = {}  eps = {:<5} p_hat = {:.5}  ci_low = {:.5}  bound = {:.3}  {}",
                case.label,
                case.arity,
                r.estimate.epsilon,
                r.estimate.p_hat,
                r.estimate.ci_low,
                r.bound,
                if r.pass { "ok" } else { "exceeds" }
            ));
        }
    }
    let pass = cases.iter().all(StollmannCase::pass);
    finish(cmd, cfg, pass, &cases, csv_bytes(&rows)?, lines)
}

fn dm_check(cmd: Command, cfg: &RunConfig) -> Result<Outcome> {
    let need = |v: Option<u64>, k: &str| v.ok_or_else(|| CliError::Config(format!("missing key `{k}`")));
    let sweep: DmSweep = dm_sweep(
        cfg.dimension.unwrap_or(1),
        cfg.radius.unwrap_or(1),
        &cfg.interaction()?,
        &cfg.shifts.clone().unwrap_or_default(),
        need(cfg.instances, "instances")?,
        cfg.seed()?,
        DM_SHIFT_TOLERANCE,
    )?;
    let rows = [
        MetricRow { metric: "max_shift_error", value: sweep.max_shift_error },
        MetricRow { metric: "min_diagonal_margin", value: sweep.min_diagonal_margin },
        MetricRow { metric: "min_bump_margin", value: sweep.min_bump_margin },
    ];
    let lines = vec![
        format!("max |shift - 2t| = {:.3e} (tolerance {DM_SHIFT_TOLERANCE:e})", sweep.max_shift_error),
        format!("min diagonal margin = {:.6}", sweep.min_diagonal_margin),
        format!("min single-site bump margin = {:.3e} (slack -{DM_SLACK:e})", sweep.min_bump_margin),
    ];
    finish(cmd, cfg, sweep.pass, &sweep, csv_bytes(&rows)?, lines)
}

fn ids(cmd: Command, cfg: &RunConfig) -> Result<Outcome> {
    let field = cfg.field()?;
    let action = cfg.action()?;
    let site = cfg.site.clone().ok_or_else(|| CliError::Config("missing key `site`".into()))?;
    if site.len() != action.d() {
        return Err(CliError::Config(format!(
            "site has dimension {} but the frequency matrix acts on Z^{}",
            site.len(),
            action.d()
        )));
    }
    let cube = LatticeCube::new(site, cfg.radius.unwrap_or(1));
    let energies = cfg.energies.clone().unwrap_or_default();
    let curve: IdsCurve = ids_curve(
        &cube,
        &field,
        &action,
        &energies,
        cfg.samples()?,
        cfg.seed()?,
        cfg.verify_eigen.unwrap_or(false),
    )?;
    let pass = curve.ids.iter().all(|v| (0.0..=1.0).contains(v)) && curve.ids.windows(2).all(|w| w[0] <= w[1]);
    let rows: Vec<IdsRow> = curve.energies.iter().zip(&curve.ids).map(|(&energy, &ids)| IdsRow { energy, ids }).collect();
    let lines = vec![format!("{} energies, {} samples, |Lambda| = {}", energies.len(), curve.samples, cube.len())];
    finish(cmd, cfg, pass, &curve, csv_bytes(&rows)?, lines)
}
