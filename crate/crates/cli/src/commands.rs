//! Subcommand implementations.
//!
//! Every command buffers its primary outputs in memory and hands them back;
//! nothing touches the output directory until the run has fully succeeded,
//! so a failed run leaves no partial files behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use orbit_core::continuation::{Branch, ContinuationError};
use orbit_core::control::{lyapunov_diagnostics, ControlError, LoopKind, LyapunovReport, Reference};
use orbit_core::plant::{scalar_true_forcing_g, true_forcing_g};
use orbit_core::signal::{pe_gram, steady_linear_response, synthesize_reference, PE_GRAM_SAMPLES};
use orbit_core::{
    assemble_closed_loop, continue_branch, open_loop_sweep, run_closed_loop, ClosedLoopRun,
    Controller, RealMatrix, RunSettings,
};
use serde::Serialize;

use crate::config::{ConfigError, RunConfig, SimulateConfig};
use crate::svg::{emit_svg, Series};

/// Failures sorted by exit code: 1 config, 2 numerical, 3 non-convergence.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    NoConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::NoConvergence(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::NoConvergence(m) => {
                f.write_str(m)
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn continuation_err(e: ContinuationError) -> CliError {
    match e {
        ContinuationError::NoConvergence { .. } | ContinuationError::NoSettle { .. } => {
            CliError::NoConvergence(e.to_string())
        }
        ContinuationError::BadProtocol(_) | ContinuationError::BadRange(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Numerical(other.to_string()),
    }
}

/// Assembly-time control errors come from bad configuration (mismatched
/// dimensions, wrong pairings); runtime ones are numerical.
fn assembly_err(e: ControlError) -> CliError {
    CliError::Config(e.to_string())
}

/// Key run metrics, flattened into summary.json. Absent fields do not apply
/// to the command or controller that produced the summary.
#[derive(Debug, Default, Clone, Serialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_u_abs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_x_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_e_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_theta_err_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_k_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_v_drift_per_period: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_u_plus_g_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_state_abs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_theta_hat_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unstable_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settled_points: Option<usize>,
}

impl Metrics {
    /// Reported metrics must be finite numbers.
    pub fn check_finite(&self) -> Result<(), CliError> {
        let named = [
            ("final_u_abs", self.final_u_abs),
            ("final_x_norm", self.final_x_norm),
            ("final_e_norm", self.final_e_norm),
            ("final_theta_err_norm", self.final_theta_err_norm),
            ("final_k_hat", self.final_k_hat),
            ("max_v_drift_per_period", self.max_v_drift_per_period),
            ("max_u_plus_g_final", self.max_u_plus_g_final),
            ("max_state_abs", self.max_state_abs),
            ("max_theta_hat_norm", self.max_theta_hat_norm),
            ("alpha", self.alpha),
            ("residual_max", self.residual_max),
        ];
        for (name, v) in named {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(CliError::Numerical(format!(
                        "metric {name} is not finite ({v})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Buffered output files, flushed atomically (temp + rename) at the end.
#[derive(Default)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn flush(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            write_atomic(&dir.join(name), bytes)?;
        }
        Ok(())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.to_path_buf();
    let file_name = tmp.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    tmp.set_file_name(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

pub struct CommandResult {
    pub status: String,
    pub metrics: Metrics,
    pub outputs: OutputSet,
}

/// Jacobian thread cap: `ORBIT_TRACER_THREADS`, default 1 for bit-stable runs.
pub fn threads_from_env() -> Result<usize, CliError> {
    match std::env::var("ORBIT_TRACER_THREADS") {
        Err(_) => Ok(1),
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "ORBIT_TRACER_THREADS must be a positive integer, got '{s}'"
                ))
            }),
    }
}

fn fseries(rows: &[(f64, f64)]) -> Vec<(f64, f64)> {
    rows.to_vec()
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn cmd_simulate(cfg: &RunConfig) -> Result<CommandResult, CliError> {
    let sim: SimulateConfig = cfg.simulate.clone().unwrap_or_default();
    let rc = cfg
        .reference
        .as_ref()
        .ok_or_else(|| CliError::Config("reference is required for simulate".into()))?;
    let v = rc.generator()?;
    let omega = v.omega;
    let controller = cfg.controller.to_controller()?;

    let mut outputs = OutputSet::default();
    let mut metrics = Metrics::default();

    if cfg.plant.is_structured() {
        let plant = cfg.plant.build_structured(omega)?;
        let view = plant.view();
        let r = synthesize_reference(&v, &plant.a, &plant.b).map_err(numerical)?;
        let reference = Reference::Vector(r);
        let lp = assemble_closed_loop(&view, &controller, &reference).map_err(assembly_err)?;

        let q0 = sim.q0.clone().unwrap_or_else(|| vec![0.0; lp.n]);
        let ctrl0 = match lp.kind {
            LoopKind::Mrac => sim.ctrl0.clone().unwrap_or_else(|| vec![0.0; lp.m]),
            _ => sim.ctrl0.clone().unwrap_or_default(),
        };
        let y0 = lp
            .initial_state(&q0, &ctrl0)
            .map_err(|e| CliError::Config(format!("simulate: {e}")))?;
        let settings = RunSettings {
            t_end: sim.t_end,
            samples_per_period: sim.samples_per_period,
            keep_dense: true,
            integrator: cfg.integrator.to_integrator(),
        };
        let run = run_closed_loop(&lp, &y0, &settings).map_err(numerical)?;

        let diag = if lp.kind == LoopKind::Mrac {
            let theta_true = plant.ground_truth().reveal();
            Some(lyapunov_diagnostics(&lp, &run, &theta_true).map_err(numerical)?)
        } else {
            None
        };
        fill_structured_metrics(&mut metrics, &lp, &run, diag.as_ref(), &sim);

        // Excitation level over the final period, along the actual response.
        if let Some(dense) = &run.dense {
            let t1 = *run.times.last().unwrap();
            let period = reference.period();
            let q_eval = plant.q_eval.clone();
            let n = lp.n;
            let q_fn = move |t: f64| {
                let y = dense.eval(t);
                q_eval(t, &y[..n])
            };
            let rep = pe_gram(&q_fn, t1 - period, period, PE_GRAM_SAMPLES).map_err(numerical)?;
            metrics.alpha = Some(rep.alpha);
        }

        outputs.add("trajectory.csv", run.to_csv(diag.as_ref()));
        add_structured_plots(&mut outputs, &run, diag.as_ref())?;
    } else {
        let plant = cfg.plant.build_scalar(omega)?;
        let view = plant.view();
        let a1 = RealMatrix::from_rows(&[vec![plant.a]]).map_err(numerical)?;
        let rv = synthesize_reference(&v, &a1, &[plant.b_s]).map_err(numerical)?;
        let r_scalar = rv.components.into_iter().next().unwrap();
        let reference = Reference::Scalar(r_scalar.clone());
        let lp = assemble_closed_loop(&view, &controller, &reference).map_err(assembly_err)?;

        let q0 = sim.q0.clone().unwrap_or_else(|| vec![0.0]);
        let default_k0 = match &controller {
            Controller::ScalarAdaptive { k_hat0, .. } => vec![*k_hat0],
            _ => Vec::new(),
        };
        let ctrl0 = sim.ctrl0.clone().unwrap_or(default_k0);
        let y0 = lp
            .initial_state(&q0, &ctrl0)
            .map_err(|e| CliError::Config(format!("simulate: {e}")))?;
        let settings = RunSettings {
            t_end: sim.t_end,
            samples_per_period: sim.samples_per_period,
            keep_dense: false,
            integrator: cfg.integrator.to_integrator(),
        };
        let run = run_closed_loop(&lp, &y0, &settings).map_err(numerical)?;

        let period = reference.period();
        let t1 = *run.times.last().unwrap();
        metrics.final_u_abs = Some(run.max_abs_u_after(t1 - period + 1e-9));
        metrics.final_x_norm = run.x_norm.last().copied();
        metrics.max_state_abs = Some(max_abs_state(&run));
        if lp.kind == LoopKind::ScalarAdaptive {
            metrics.final_k_hat = Some(run.terminal[1]);
            // The combination b·u + g(t, x(t)) vanishes as the gain grows;
            // g along the trajectory is the q=r forcing plus the f-difference.
            let g = scalar_true_forcing_g(&plant, &r_scalar).map_err(numerical)?;
            let mut worst = 0.0f64;
            for (i, t) in run.times.iter().enumerate() {
                if *t >= t1 - period - 1e-9 {
                    let q = run.states[i][0];
                    let rv = r_scalar.eval(*t);
                    let g_traj =
                        g.eval(*t) + plant.b_s * ((plant.f)(*t, q) - (plant.f)(*t, rv));
                    worst = worst.max((plant.b_s * run.u[i] + g_traj).abs());
                }
            }
            metrics.max_u_plus_g_final = Some(worst);
        }

        outputs.add("trajectory.csv", run.to_csv(None));
        add_scalar_plots(&mut outputs, &run)?;
    }

    Ok(CommandResult { status: "ok".into(), metrics, outputs })
}

fn max_abs_state(run: &ClosedLoopRun) -> f64 {
    run.states
        .iter()
        .flat_map(|y| y.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

fn fill_structured_metrics(
    metrics: &mut Metrics,
    lp: &orbit_core::ClosedLoop,
    run: &ClosedLoopRun,
    diag: Option<&LyapunovReport>,
    sim: &SimulateConfig,
) {
    let period = run.reference.period();
    let t1 = *run.times.last().unwrap();
    metrics.final_u_abs = Some(run.max_abs_u_after(t1 - period + 1e-9));
    metrics.final_x_norm = run.x_norm.last().copied();
    metrics.final_e_norm = run.e_norm.last().copied();
    metrics.max_state_abs = Some(max_abs_state(run));
    if let Some(d) = diag {
        metrics.final_theta_err_norm = d.theta_err_norm.last().copied();
        let spp = sim.samples_per_period;
        let drift = d
            .v
            .windows(spp + 1)
            .map(|w| w[spp] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        if drift.is_finite() {
            metrics.max_v_drift_per_period = Some(drift);
        }
        let mut worst = 0.0f64;
        for y in &run.states {
            let norm = y[2 * lp.n..2 * lp.n + lp.m]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            worst = worst.max(norm);
        }
        metrics.max_theta_hat_norm = Some(worst);
    }
}

fn add_structured_plots(
    outputs: &mut OutputSet,
    run: &ClosedLoopRun,
    diag: Option<&LyapunovReport>,
) -> Result<(), CliError> {
    let t = &run.times;
    let xs: Vec<(f64, f64)> = t.iter().zip(&run.x_norm).map(|(a, b)| (*a, *b)).collect();
    let us: Vec<(f64, f64)> = t.iter().zip(&run.u).map(|(a, b)| (*a, b.abs())).collect();
    outputs.add(
        "x_norm.svg",
        emit_svg(&[Series::curve("‖x‖", fseries(&xs))], "t", "‖x‖").map_err(numerical)?,
    );
    outputs.add(
        "u_abs.svg",
        emit_svg(&[Series::curve("|u|", fseries(&us))], "t", "|u|").map_err(numerical)?,
    );
    if !run.e_norm.is_empty() {
        let es: Vec<(f64, f64)> = t.iter().zip(&run.e_norm).map(|(a, b)| (*a, *b)).collect();
        outputs.add(
            "e_norm.svg",
            emit_svg(&[Series::curve("‖e‖", fseries(&es))], "t", "‖e‖").map_err(numerical)?,
        );
    }
    if let Some(d) = diag {
        let th: Vec<(f64, f64)> =
            t.iter().zip(&d.theta_err_norm).map(|(a, b)| (*a, *b)).collect();
        outputs.add(
            "theta_err.svg",
            emit_svg(&[Series::curve("‖θ̃‖", fseries(&th))], "t", "‖θ̃‖").map_err(numerical)?,
        );
    }
    Ok(())
}

fn add_scalar_plots(outputs: &mut OutputSet, run: &ClosedLoopRun) -> Result<(), CliError> {
    let t = &run.times;
    let xs: Vec<(f64, f64)> = t.iter().zip(&run.x_norm).map(|(a, b)| (*a, *b)).collect();
    let us: Vec<(f64, f64)> = t.iter().zip(&run.u).map(|(a, b)| (*a, b.abs())).collect();
    outputs.add(
        "x_norm.svg",
        emit_svg(&[Series::curve("|x|", fseries(&xs))], "t", "|x|").map_err(numerical)?,
    );
    outputs.add(
        "u_abs.svg",
        emit_svg(&[Series::curve("|u|", fseries(&us))], "t", "|u|").map_err(numerical)?,
    );
    if run.kind == LoopKind::ScalarAdaptive {
        let ks: Vec<(f64, f64)> =
            t.iter().zip(&run.states).map(|(a, y)| (*a, y[1])).collect();
        outputs.add(
            "k_hat.svg",
            emit_svg(&[Series::curve("k̂", fseries(&ks))], "t", "k̂").map_err(numerical)?,
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// continue
// ---------------------------------------------------------------------------

pub fn cmd_continue(cfg: &RunConfig, out_dir: &Path) -> Result<CommandResult, CliError> {
    let cc = cfg
        .continuation
        .as_ref()
        .ok_or_else(|| CliError::Config("continuation section is required for continue".into()))?;
    let ctx = orbit_core::CbcContext::new(
        cfg.plant.factory(),
        cfg.controller.to_controller()?,
        cfg.protocol.to_protocol(),
        cfg.integrator.to_integrator(),
    )
    .map_err(continuation_err)?;
    let chart = cc.to_chart(threads_from_env()?);
    let branch = continue_branch(&ctx, &chart, cc.omega0, (cc.omega_range[0], cc.omega_range[1]))
        .map_err(continuation_err)?;

    let mut outputs = OutputSet::default();
    outputs.add("branch.csv", branch.to_csv());
    outputs.add("branch.svg", branch_svg(&branch, out_dir)?);

    let metrics = Metrics {
        branch_points: Some(branch.points.len()),
        fold_count: Some(branch.folds.len()),
        unstable_points: Some(branch.points.iter().filter(|p| !p.stable).count()),
        residual_max: branch
            .points
            .iter()
            .map(|p| p.residual_norm)
            .fold(f64::NEG_INFINITY, f64::max)
            .into(),
        ..Metrics::default()
    };
    Ok(CommandResult { status: branch.status.to_string(), metrics, outputs })
}

fn branch_svg(branch: &Branch, out_dir: &Path) -> Result<String, CliError> {
    let curve: Vec<(f64, f64)> =
        branch.points.iter().map(|p| (p.omega, p.amplitude)).collect();
    let mut series = vec![Series::curve("branch", curve)];
    let unstable: Vec<(f64, f64)> = branch
        .points
        .iter()
        .filter(|p| !p.stable)
        .map(|p| (p.omega, p.amplitude))
        .collect();
    if !unstable.is_empty() {
        series.push(Series::marks("unstable", unstable));
    }
    let folds: Vec<(f64, f64)> = branch
        .folds
        .iter()
        .map(|&i| (branch.points[i].omega, branch.points[i].amplitude))
        .collect();
    if !folds.is_empty() {
        series.push(Series::marks("fold", folds));
    }
    for (file, label) in [
        ("sweep.csv", "sweep"),
        ("sweep_up.csv", "sweep up"),
        ("sweep_down.csv", "sweep down"),
    ] {
        if let Some(points) = read_sweep_csv(&out_dir.join(file)) {
            if !points.is_empty() {
                series.push(Series::marks(label, points));
            }
        }
    }
    emit_svg(&series, "ω", "max |q₁|").map_err(numerical)
}

/// Settled points of a previously written sweep file; None when absent.
fn read_sweep_csv(path: &Path) -> Option<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).ok()?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let mut it = line.split(',');
        let omega: f64 = it.next()?.parse().ok()?;
        let amplitude: f64 = it.next()?.parse().ok()?;
        let settled = it.next()? == "1";
        if settled {
            out.push((omega, amplitude));
        }
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

pub fn cmd_sweep(cfg: &RunConfig) -> Result<CommandResult, CliError> {
    let sc = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep section is required for sweep".into()))?;
    let factory = cfg.plant.factory();
    let integrator = cfg.integrator.to_integrator();
    let up = sc.omegas_up();

    let mut runs: Vec<(&str, Vec<orbit_core::continuation::SweepPoint>)> = Vec::new();
    match sc.direction.as_str() {
        "up" => {
            let pts = open_loop_sweep(&factory, &up, sc.settle_periods, sc.n_samples, &integrator)
                .map_err(continuation_err)?;
            runs.push(("sweep.csv", pts));
        }
        "down" => {
            let down: Vec<f64> = up.iter().rev().copied().collect();
            let pts =
                open_loop_sweep(&factory, &down, sc.settle_periods, sc.n_samples, &integrator)
                    .map_err(continuation_err)?;
            runs.push(("sweep.csv", pts));
        }
        _ => {
            let pts = open_loop_sweep(&factory, &up, sc.settle_periods, sc.n_samples, &integrator)
                .map_err(continuation_err)?;
            runs.push(("sweep_up.csv", pts));
            let down: Vec<f64> = up.iter().rev().copied().collect();
            let pts =
                open_loop_sweep(&factory, &down, sc.settle_periods, sc.n_samples, &integrator)
                    .map_err(continuation_err)?;
            runs.push(("sweep_down.csv", pts));
        }
    }

    let mut outputs = OutputSet::default();
    let mut series = Vec::new();
    let mut total = 0usize;
    let mut settled = 0usize;
    for (file, pts) in &runs {
        outputs.add(file, orbit_core::continuation::sweep_to_csv(pts));
        total += pts.len();
        settled += pts.iter().filter(|p| p.settled).count();
        let label = match *file {
            "sweep_up.csv" => "sweep up",
            "sweep_down.csv" => "sweep down",
            _ => "sweep",
        };
        series.push(Series::curve(label, pts.iter().map(|p| (p.omega, p.amplitude)).collect()));
        let loose: Vec<(f64, f64)> =
            pts.iter().filter(|p| !p.settled).map(|p| (p.omega, p.amplitude)).collect();
        if !loose.is_empty() {
            series.push(Series::marks(&format!("{label} (unsettled)"), loose));
        }
    }
    outputs.add("sweep.svg", emit_svg(&series, "ω", "max |q₁|").map_err(numerical)?);

    let metrics = Metrics {
        sweep_points: Some(total),
        settled_points: Some(settled),
        ..Metrics::default()
    };
    Ok(CommandResult { status: "ok".into(), metrics, outputs })
}

// ---------------------------------------------------------------------------
// pe-check
// ---------------------------------------------------------------------------

pub fn cmd_pe_check(cfg: &RunConfig) -> Result<CommandResult, CliError> {
    let rc = cfg
        .reference
        .as_ref()
        .ok_or_else(|| CliError::Config("reference is required for pe-check".into()))?;
    if !cfg.plant.is_structured() {
        return Err(CliError::Config(
            "pe-check needs a structured plant (the scalar design has no regressor)".into(),
        ));
    }
    let v = rc.generator()?;
    let plant = cfg.plant.build_structured(v.omega)?;
    let r = synthesize_reference(&v, &plant.a, &plant.b).map_err(numerical)?;

    // Steady response q = x_ss + r, with x_ss solving x' = A x + g for the
    // residual forcing g left by driving the plant along r.
    let g = true_forcing_g(&plant, &r).map_err(numerical)?;
    let k_resolve = 3 * cfg.protocol.k_harmonics;
    let x_ss = steady_linear_response(&plant.a, &|t| g.eval(t), v.omega, k_resolve)
        .map_err(numerical)?;
    let q_eval = plant.q_eval.clone();
    let q_fn = move |t: f64| {
        let xv = x_ss.eval(t);
        let rv = r.eval(t);
        let q: Vec<f64> = xv.iter().zip(&rv).map(|(x, r)| x + r).collect();
        q_eval(t, &q)
    };

    let period = plant.period();
    let mut rows = String::from("window_start,alpha\n");
    let mut alpha0 = None;
    for j in 0..=8 {
        let start = period * j as f64 / 8.0;
        let rep = pe_gram(&q_fn, start, period, PE_GRAM_SAMPLES).map_err(numerical)?;
        if j == 0 {
            alpha0 = Some(rep.alpha);
        }
        let _ = writeln!(rows, "{:.16e},{:.16e}", start, rep.alpha);
    }

    let mut outputs = OutputSet::default();
    outputs.add("pe.csv", rows);
    let metrics = Metrics { alpha: alpha0, ..Metrics::default() };
    Ok(CommandResult { status: "ok".into(), metrics, outputs })
}

// ---------------------------------------------------------------------------
// summary
// ---------------------------------------------------------------------------

#[derive(Serialize)]
pub struct RunSummary {
    pub schema: u32,
    pub command: String,
    pub status: String,
    /// Wall-clock seconds; the only field that varies between identical runs.
    pub wall_time_s: f64,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub outputs: Vec<String>,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Continue,
    Sweep,
    PeCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Continue => "continue",
            Command::Sweep => "sweep",
            Command::PeCheck => "pe-check",
        }
    }
}

/// Run one command end to end: execute, verify metrics, flush outputs, write
/// the summary last. Returns the summary for the status line.
pub fn execute(
    command: Command,
    cfg: &RunConfig,
    out_dir: &PathBuf,
) -> Result<RunSummary, CliError> {
    let started = std::time::Instant::now();
    let result = match command {
        Command::Simulate => cmd_simulate(cfg)?,
        Command::Continue => cmd_continue(cfg, out_dir)?,
        Command::Sweep => cmd_sweep(cfg)?,
        Command::PeCheck => cmd_pe_check(cfg)?,
    };
    result.metrics.check_finite()?;
    result
        .outputs
        .flush(out_dir)
        .map_err(|e| CliError::Numerical(format!("cannot write outputs: {e}")))?;

    let mut outputs = result.outputs.names();
    outputs.push("summary.json".into());
    let summary = RunSummary {
        schema: crate::config::SCHEMA_VERSION,
        command: command.name().into(),
        status: result.status,
        wall_time_s: started.elapsed().as_secs_f64(),
        metrics: result.metrics,
        outputs,
    };
    write_atomic(&out_dir.join("summary.json"), summary.to_json().as_bytes())
        .map_err(|e| CliError::Numerical(format!("cannot write summary: {e}")))?;
    Ok(summary)
}
