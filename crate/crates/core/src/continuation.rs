//! Control-based continuation of periodic responses.
//!
//! A reference signal is parameterized by the Fourier coefficients of its
//! generator plus the forcing frequency. Running the closed loop until it
//! settles and reading off the harmonics of the steady control input gives a
//! residual map: the input dies out exactly when the reference is a genuine
//! periodic orbit of the uncontrolled plant. Newton corrections on that
//! residual, chained along a pseudo-arclength predictor, trace out the
//! response branch — stable and unstable segments alike — without ever
//! touching the hidden plant parameters.

use crate::control::{assemble_closed_loop, Controller, LoopKind, Reference};
use crate::numkit::{eig_general, solve_real, NumError, RealMatrix};
use crate::ode::{sample_period, IntegratorConfig, OdeError};
use crate::plant::{PlantError, PlantView};
use crate::signal::{
    dft_truncate, extract_generator, synthesize_reference, FourierSeries, SignalError,
    VectorFourierSeries,
};
use num_complex::Complex64;
use std::sync::Arc;
use thiserror::Error;

/// Samples per period used while waiting for the open loop to settle.
const SETTLE_PROBE_SAMPLES: usize = 32;
/// Period-to-period relative tolerance that counts as settled.
const SETTLE_REL_TOL: f64 = 1e-8;
/// Hard cap on settling periods before seeding gives up.
const SETTLE_MAX_PERIODS: usize = 200;
/// Pre-normalization null-vector norms above this are treated as noise and
/// the previous tangent is kept instead.
const TANGENT_NOISE_NORM: f64 = 1e6;
/// Relative offset for the finite-difference monodromy columns.
const MONODROMY_FD: f64 = 1e-6;
/// Shooting-polish iteration cap and residual tolerance.
const SHOOT_CAP: usize = 5;
const SHOOT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ContinuationError {
    #[error("protocol invalid: {0}")]
    BadProtocol(String),
    #[error("continuation range invalid: {0}")]
    BadRange(String),
    #[error("correction did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("open loop failed to settle within {0} periods")]
    NoSettle(usize),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Control(#[from] crate::control::ControlError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Builds a plant view at a requested forcing frequency. The continuation
/// engine re-creates the plant whenever the frequency unknown moves, since
/// both the forcing and the period depend on it.
pub type PlantFactory = Arc<dyn Fn(f64) -> Result<PlantView, PlantError> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmStart {
    /// Every residual evaluation starts the plant from the origin.
    Cold,
    /// Runs chain from the previously accepted point's terminal state.
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptationReset {
    /// Controller estimates carry over between runs.
    CarryThetaHat,
    /// Controller state restarts at zero for every run.
    ResetKHatZero,
}

/// How each residual evaluation drives the physical experiment.
#[derive(Debug, Clone)]
pub struct ExperimentProtocol {
    pub n_transient_periods: usize,
    pub n_samples: usize,
    pub k_harmonics: usize,
    pub warm_start: WarmStart,
    pub conv_tol: f64,
    pub adaptation_reset: AdaptationReset,
}

impl Default for ExperimentProtocol {
    fn default() -> Self {
        Self {
            n_transient_periods: 10,
            n_samples: 1024,
            k_harmonics: 5,
            warm_start: WarmStart::Chain,
            conv_tol: 1e-6,
            adaptation_reset: AdaptationReset::CarryThetaHat,
        }
    }
}

impl ExperimentProtocol {
    pub fn validate(&self) -> Result<(), ContinuationError> {
        if self.n_transient_periods < 1 {
            return Err(ContinuationError::BadProtocol(
                "need at least one transient period".into(),
            ));
        }
        if self.k_harmonics == 0 {
            return Err(ContinuationError::BadProtocol("need at least one harmonic".into()));
        }
        if self.n_samples < 4 * self.k_harmonics + 4 {
            return Err(ContinuationError::BadProtocol(format!(
                "{} samples cannot resolve {} harmonics (need >= {})",
                self.n_samples,
                self.k_harmonics,
                4 * self.k_harmonics + 4
            )));
        }
        if !(self.conv_tol > 0.0) {
            return Err(ContinuationError::BadProtocol("conv_tol must be > 0".into()));
        }
        Ok(())
    }
}

/// Step-length policy and machinery sizes for the covering loop.
#[derive(Debug, Clone)]
pub struct ChartSettings {
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub grow: f64,
    pub shrink: f64,
    /// Corrections converging in at most this many iterations let the step grow.
    pub grow_threshold: usize,
    pub newton_cap: usize,
    pub fd_step: f64,
    /// Per-direction budget of accepted points.
    pub max_points: usize,
    /// Worker threads for Jacobian columns; 1 keeps everything serial.
    pub n_threads: usize,
}

impl Default for ChartSettings {
    fn default() -> Self {
        Self {
            h0: 0.05,
            h_min: 0.005,
            h_max: 0.5,
            grow: 1.5,
            shrink: 0.5,
            grow_threshold: 3,
            newton_cap: 10,
            fd_step: 1e-4,
            max_points: 500,
            n_threads: 1,
        }
    }
}

/// Continuation unknowns: generator coefficients plus forcing frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct UnknownVector {
    pub a0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub omega: f64,
}

impl UnknownVector {
    pub fn harmonics(&self) -> usize {
        self.a.len()
    }

    /// 2K+2: a0, a_1..a_K, b_1..b_K, ω.
    pub fn dim(&self) -> usize {
        2 * self.a.len() + 2
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.a0);
        v.extend_from_slice(&self.a);
        v.extend_from_slice(&self.b);
        v.push(self.omega);
        v
    }

    pub fn from_flat(k: usize, flat: &[f64]) -> Result<Self, ContinuationError> {
        if flat.len() != 2 * k + 2 {
            return Err(ContinuationError::BadProtocol(format!(
                "flat unknown vector has {} entries, expected {}",
                flat.len(),
                2 * k + 2
            )));
        }
        Ok(Self {
            a0: flat[0],
            a: flat[1..1 + k].to_vec(),
            b: flat[1 + k..1 + 2 * k].to_vec(),
            omega: flat[2 * k + 1],
        })
    }

    pub fn from_series(s: &FourierSeries) -> Self {
        Self { a0: s.a0, a: s.a.clone(), b: s.b.clone(), omega: s.omega }
    }

    pub fn generator(&self) -> Result<FourierSeries, SignalError> {
        FourierSeries::new(self.omega, self.a0, self.a.clone(), self.b.clone())
    }
}

/// Plant state handed from one experiment run to the next.
#[derive(Debug, Clone, Default)]
pub struct ChainState {
    pub q: Vec<f64>,
    pub ctrl: Vec<f64>,
}

/// One residual evaluation: steady-input harmonics and the terminal state.
#[derive(Debug, Clone)]
pub struct ResidualEval {
    /// 2K+1 harmonics of the steady control input: a0, a_k..., b_k...
    pub f: Vec<f64>,
    pub norm: f64,
    /// max |q₁| over the sampled steady period.
    pub amplitude: f64,
    pub chain: ChainState,
}

/// Everything a residual evaluation needs, bundled once.
pub struct CbcContext {
    pub factory: PlantFactory,
    pub controller: Controller,
    pub protocol: ExperimentProtocol,
    pub integrator: IntegratorConfig,
}

impl CbcContext {
    pub fn new(
        factory: PlantFactory,
        controller: Controller,
        protocol: ExperimentProtocol,
        integrator: IntegratorConfig,
    ) -> Result<Self, ContinuationError> {
        protocol.validate()?;
        Ok(Self { factory, controller, protocol, integrator })
    }

    /// Reference signal for the given unknowns against the given plant.
    pub fn reference_for(
        &self,
        view: &PlantView,
        xi: &UnknownVector,
    ) -> Result<Reference, ContinuationError> {
        let v = xi.generator()?;
        match view {
            PlantView::Structured(s) => {
                Ok(Reference::Vector(synthesize_reference(&v, &s.a, &s.b)?))
            }
            PlantView::Scalar(s) => {
                let a1 = RealMatrix::from_rows(&[vec![s.a]])?;
                let r = synthesize_reference(&v, &a1, &[s.b_s])?;
                Ok(Reference::Scalar(r.components.into_iter().next().unwrap()))
            }
        }
    }
}

fn ctrl_from_terminal(kind: LoopKind, n: usize, m: usize, terminal: &[f64]) -> Vec<f64> {
    match kind {
        LoopKind::Mrac => terminal[2 * n..2 * n + m].to_vec(),
        LoopKind::ScalarAdaptive => vec![terminal[1]],
        _ => Vec::new(),
    }
}

/// Runs the closed loop for the transient periods plus one sampled period and
/// returns the truncated harmonics of the control input over that last
/// period. `start` supplies the plant and controller state the run begins
/// from; pass an empty/origin state for a cold run.
pub fn steady_control_residual(
    ctx: &CbcContext,
    xi: &UnknownVector,
    start: &ChainState,
) -> Result<ResidualEval, ContinuationError> {
    let view = (ctx.factory)(xi.omega)?;
    let reference = ctx.reference_for(&view, xi)?;
    let lp = assemble_closed_loop(&view, &ctx.controller, &reference)?;
    let n = lp.n;

    let q0 = if start.q.len() == n { start.q.clone() } else { vec![0.0; n] };
    let ctrl_len = match lp.kind {
        LoopKind::Mrac => lp.m,
        LoopKind::ScalarAdaptive => 1,
        _ => 0,
    };
    let ctrl0 = match ctx.protocol.adaptation_reset {
        AdaptationReset::ResetKHatZero => vec![0.0; ctrl_len],
        AdaptationReset::CarryThetaHat => {
            if start.ctrl.len() == ctrl_len {
                start.ctrl.clone()
            } else {
                vec![0.0; ctrl_len]
            }
        }
    };
    let y0 = lp.initial_state(&q0, &ctrl0)?;

    let period = reference.period();
    let mut field = lp.field();
    let t_settle = ctx.protocol.n_transient_periods as f64 * period;
    let (_, _, after) = sample_period(&mut *field, 0.0, &y0, t_settle, 1, &ctx.integrator)?;
    let (times, states, terminal) = sample_period(
        &mut *field,
        t_settle,
        &after,
        period,
        ctx.protocol.n_samples,
        &ctx.integrator,
    )?;

    let mut u = Vec::with_capacity(times.len());
    let mut amplitude = 0.0f64;
    for (t, s) in times.iter().zip(&states) {
        u.push(lp.control_input(*t, s));
        amplitude = amplitude.max(s[0].abs());
    }
    let fs = dft_truncate(&u, ctx.protocol.k_harmonics, xi.omega, times[0])?;
    let mut f = Vec::with_capacity(2 * ctx.protocol.k_harmonics + 1);
    f.push(fs.a0);
    f.extend_from_slice(&fs.a);
    f.extend_from_slice(&fs.b);
    let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let chain = ChainState {
        q: terminal[..n].to_vec(),
        ctrl: ctrl_from_terminal(lp.kind, n, lp.m, &terminal),
    };
    Ok(ResidualEval { f, norm, amplitude, chain })
}

/// Forward-difference Jacobian of the residual, (2K+1) × (2K+2). Every
/// perturbed run warm-starts from the base evaluation's terminal state so the
/// columns measure the steady response, not transient bookkeeping.
pub fn fd_jacobian(
    ctx: &CbcContext,
    xi: &UnknownVector,
    base: &ResidualEval,
    chart: &ChartSettings,
) -> Result<RealMatrix, ContinuationError> {
    let k = ctx.protocol.k_harmonics;
    let rows = 2 * k + 1;
    let cols = 2 * k + 2;
    let flat = xi.to_flat();
    let fd = chart.fd_step;

    let column = |j: usize| -> Result<Vec<f64>, ContinuationError> {
        let mut pert = flat.clone();
        pert[j] += fd;
        let xi_j = UnknownVector::from_flat(k, &pert)?;
        let eval = steady_control_residual(ctx, &xi_j, &base.chain)?;
        Ok(eval.f.iter().zip(&base.f).map(|(fj, f0)| (fj - f0) / fd).collect())
    };

    let n_workers = chart.n_threads.max(1).min(cols);
    let mut columns: Vec<Option<Vec<f64>>> = vec![None; cols];
    if n_workers <= 1 {
        for (j, slot) in columns.iter_mut().enumerate() {
            *slot = Some(column(j)?);
        }
    } else {
        let results = std::thread::scope(|s| {
            let handles: Vec<_> = (0..n_workers)
                .map(|w| {
                    let column = &column;
                    s.spawn(move || {
                        let mut out = Vec::new();
                        let mut j = w;
                        while j < cols {
                            out.push((j, column(j)));
                            j += n_workers;
                        }
                        out
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("jacobian worker panicked")).collect::<Vec<_>>()
        });
        for (j, res) in results {
            columns[j] = Some(res?);
        }
    }

    let mut jac = RealMatrix::zeros(rows, cols);
    for (j, col) in columns.into_iter().enumerate() {
        let col = col.expect("all columns computed");
        for (i, v) in col.into_iter().enumerate() {
            jac[(i, j)] = v;
        }
    }
    Ok(jac)
}

/// Closing equation for the Newton corrector.
pub enum Constraint<'a> {
    /// Keep ω fixed; corrections move coefficients only.
    FixedOmega,
    /// Pseudo-arclength: stay on the hyperplane through the predicted point
    /// orthogonal to the tangent.
    Arclength { tangent: &'a [f64], predicted: &'a [f64] },
}

/// A converged continuation point.
pub struct Corrected {
    pub xi: UnknownVector,
    pub eval: ResidualEval,
    pub iters: usize,
    /// Jacobian from the final update, when one was computed.
    pub jacobian: Option<RealMatrix>,
}

/// Damping-free Newton on the square system [residual; constraint] = 0.
/// Accepts immediately (zero iterations) if the starting point already meets
/// the tolerance. Under an arclength constraint all failures — including
/// infeasible trial references — are reported as `NoConvergence` so the
/// covering loop can shrink its step; the fixed-ω seed polish propagates
/// errors as-is.
pub fn newton_correct(
    ctx: &CbcContext,
    chart: &ChartSettings,
    xi0: &UnknownVector,
    chain: &ChainState,
    constraint: &Constraint<'_>,
) -> Result<Corrected, ContinuationError> {
    let k = ctx.protocol.k_harmonics;
    let dim = 2 * k + 2;
    let lenient = matches!(constraint, Constraint::Arclength { .. });
    let soften = |e: ContinuationError, iters: usize, residual: f64| -> ContinuationError {
        if lenient {
            ContinuationError::NoConvergence { iters, residual }
        } else {
            e
        }
    };

    let mut xi = xi0.clone();
    let mut jacobian = None;
    let mut last_norm = f64::INFINITY;
    for iter in 0..=chart.newton_cap {
        let eval = match steady_control_residual(ctx, &xi, chain) {
            Ok(e) => e,
            Err(e) => return Err(soften(e, iter, last_norm)),
        };
        last_norm = eval.norm;
        if eval.norm <= ctx.protocol.conv_tol {
            return Ok(Corrected { xi, eval, iters: iter, jacobian });
        }
        if iter == chart.newton_cap {
            return Err(ContinuationError::NoConvergence { iters: iter, residual: eval.norm });
        }

        let jac = match fd_jacobian(ctx, &xi, &eval, chart) {
            Ok(j) => j,
            Err(e) => return Err(soften(e, iter, eval.norm)),
        };
        let mut aug = RealMatrix::zeros(dim, dim);
        let mut rhs = vec![0.0; dim];
        for i in 0..dim - 1 {
            for j in 0..dim {
                aug[(i, j)] = jac[(i, j)];
            }
            rhs[i] = -eval.f[i];
        }
        let flat = xi.to_flat();
        match constraint {
            Constraint::FixedOmega => {
                aug[(dim - 1, dim - 1)] = 1.0;
                rhs[dim - 1] = 0.0;
            }
            Constraint::Arclength { tangent, predicted } => {
                let mut gap = 0.0;
                for j in 0..dim {
                    aug[(dim - 1, j)] = tangent[j];
                    gap += tangent[j] * (flat[j] - predicted[j]);
                }
                rhs[dim - 1] = -gap;
            }
        }
        let delta = match solve_real(&aug, &rhs) {
            Ok(d) => d,
            Err(_) => {
                return Err(ContinuationError::NoConvergence { iters: iter, residual: eval.norm })
            }
        };
        let next: Vec<f64> = flat.iter().zip(&delta).map(|(x, d)| x + d).collect();
        xi = UnknownVector::from_flat(k, &next)?;
        jacobian = Some(jac);
    }
    unreachable!("loop returns from within");
}

/// Unit tangent of the branch at a point: the null direction of the residual
/// Jacobian, singled out by augmenting with the previous tangent. Solving
/// [J; t_prevᵀ] z = e_last forces t_prevᵀ z = 1, so the orientation stays
/// consistent by construction. Returns None when the null direction is lost
/// in noise (huge pre-normalization solution) so the caller can keep the
/// previous tangent.
pub fn branch_tangent(jac: &RealMatrix, prev: &[f64]) -> Option<Vec<f64>> {
    let dim = prev.len();
    let mut aug = RealMatrix::zeros(dim, dim);
    for i in 0..dim - 1 {
        for j in 0..dim {
            aug[(i, j)] = jac[(i, j)];
        }
    }
    for j in 0..dim {
        aug[(dim - 1, j)] = prev[j];
    }
    let mut rhs = vec![0.0; dim];
    rhs[dim - 1] = 1.0;
    let z = solve_real(&aug, &rhs).ok()?;
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm > TANGENT_NOISE_NORM {
        return None;
    }
    Some(z.iter().map(|v| v / norm).collect())
}

/// Floquet multipliers of the open-loop orbit near `r`: a short shooting
/// polish from r(0), then the eigenvalues of a finite-difference monodromy
/// matrix. Uses only the measurable plant response.
pub fn floquet_diagnostics(
    view: &PlantView,
    reference: &Reference,
    cfg: &IntegratorConfig,
) -> Result<Vec<Complex64>, ContinuationError> {
    let n = view.dim();
    let period = reference.period();
    let mut field = view.open_loop_field();
    let mut q0 = reference.eval(0.0);

    let flow = |field: &mut (dyn FnMut(f64, &[f64]) -> Vec<f64> + Send),
                from: &[f64]|
     -> Result<Vec<f64>, ContinuationError> {
        let (_, _, end) = sample_period(field, 0.0, from, period, 1, cfg)?;
        Ok(end)
    };
    let fd_monodromy = |field: &mut (dyn FnMut(f64, &[f64]) -> Vec<f64> + Send),
                        at: &[f64]|
     -> Result<RealMatrix, ContinuationError> {
        let mut m = RealMatrix::zeros(n, n);
        for j in 0..n {
            let delta = MONODROMY_FD * (1.0 + at[j].abs());
            let mut plus = at.to_vec();
            plus[j] += delta;
            let mut minus = at.to_vec();
            minus[j] -= delta;
            let fp = flow(field, &plus)?;
            let fm = flow(field, &minus)?;
            for i in 0..n {
                m[(i, j)] = (fp[i] - fm[i]) / (2.0 * delta);
            }
        }
        Ok(m)
    };

    for _ in 0..SHOOT_CAP {
        let q_t = flow(&mut *field, &q0)?;
        let res: Vec<f64> = q_t.iter().zip(&q0).map(|(a, b)| a - b).collect();
        let scale = 1.0 + q0.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if res.iter().map(|v| v * v).sum::<f64>().sqrt() <= SHOOT_TOL * scale {
            break;
        }
        let m = fd_monodromy(&mut *field, &q0)?;
        let mut m_minus_i = m;
        for i in 0..n {
            m_minus_i[(i, i)] -= 1.0;
        }
        match solve_real(&m_minus_i, &res) {
            Ok(step) => {
                for i in 0..n {
                    q0[i] -= step[i];
                }
            }
            // Multiplier pinned at 1 (fold): polish cannot improve, diagnose
            // where we are.
            Err(_) => break,
        }
    }

    let m = fd_monodromy(&mut *field, &q0)?;
    let mut mu = eig_general(&m)?;
    mu.sort_by(|x, y| {
        y.norm().total_cmp(&x.norm()).then(y.im.total_cmp(&x.im)).then(y.re.total_cmp(&x.re))
    });
    Ok(mu)
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub idx: usize,
    pub omega: f64,
    pub amplitude: f64,
    pub residual_norm: f64,
    pub newton_iters: usize,
    /// Arclength step used to reach this point (0 for the seed).
    pub step: f64,
    /// Floquet multipliers, largest magnitude first.
    pub floquet: Vec<Complex64>,
    pub stable: bool,
    pub xi: UnknownVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchStatus {
    /// Both directions left the frequency window.
    Completed,
    /// A direction ran out of step length.
    Stalled,
    /// A direction hit the point budget.
    Budget,
}

impl std::fmt::Display for BranchStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BranchStatus::Completed => "completed",
            BranchStatus::Stalled => "stalled",
            BranchStatus::Budget => "budget",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    /// Unit tangents aligned with `points`, oriented along the listing.
    pub tangents: Vec<Vec<f64>>,
    /// Indices of the points nearest a fold (tangent ω-component sign flip).
    pub folds: Vec<usize>,
    pub status: BranchStatus,
    pub warm_start: WarmStart,
    pub state_dim: usize,
}

struct Leg {
    points: Vec<BranchPoint>,
    tangents: Vec<Vec<f64>>,
    status: BranchStatus,
}

fn retryable(e: &ContinuationError) -> bool {
    matches!(e, ContinuationError::NoConvergence { .. })
}

fn accept_point(
    ctx: &CbcContext,
    c: &Corrected,
    step: f64,
) -> Result<BranchPoint, ContinuationError> {
    let view = (ctx.factory)(c.xi.omega)?;
    let reference = ctx.reference_for(&view, &c.xi)?;
    let floquet = floquet_diagnostics(&view, &reference, &ctx.integrator)?;
    let stable = floquet.first().map(|m| m.norm() < 1.0).unwrap_or(true);
    Ok(BranchPoint {
        idx: 0,
        omega: c.xi.omega,
        amplitude: c.eval.amplitude,
        residual_norm: c.eval.norm,
        newton_iters: c.iters,
        step,
        floquet,
        stable,
        xi: c.xi.clone(),
    })
}

fn trace_leg(
    ctx: &CbcContext,
    chart: &ChartSettings,
    range: (f64, f64),
    seed_xi: &UnknownVector,
    seed_tangent: &[f64],
    seed_chain: &ChainState,
) -> Result<Leg, ContinuationError> {
    let k = ctx.protocol.k_harmonics;
    let mut xi = seed_xi.clone();
    let mut tangent = seed_tangent.to_vec();
    let mut chain = seed_chain.clone();
    let mut h = chart.h0;
    let mut points = Vec::new();
    let mut tangents: Vec<Vec<f64>> = Vec::new();

    let status = loop {
        if points.len() >= chart.max_points {
            break BranchStatus::Budget;
        }
        let flat = xi.to_flat();
        let predicted: Vec<f64> =
            flat.iter().zip(&tangent).map(|(x, t)| x + h * t).collect();
        let pred_xi = UnknownVector::from_flat(k, &predicted)?;
        let start = match ctx.protocol.warm_start {
            WarmStart::Chain => chain.clone(),
            WarmStart::Cold => ChainState::default(),
        };
        match newton_correct(
            ctx,
            chart,
            &pred_xi,
            &start,
            &Constraint::Arclength { tangent: &tangent, predicted: &predicted },
        ) {
            Ok(c) => {
                let jac = match c.jacobian.clone() {
                    Some(j) => j,
                    None => fd_jacobian(ctx, &c.xi, &c.eval, chart)?,
                };
                let new_tangent =
                    branch_tangent(&jac, &tangent).unwrap_or_else(|| tangent.clone());
                points.push(accept_point(ctx, &c, h)?);
                tangents.push(new_tangent.clone());
                chain = c.eval.chain.clone();
                xi = c.xi;
                tangent = new_tangent;
                if xi.omega < range.0 || xi.omega > range.1 {
                    break BranchStatus::Completed;
                }
                if c.iters <= chart.grow_threshold {
                    h = (h * chart.grow).min(chart.h_max);
                }
            }
            Err(e) if retryable(&e) => {
                h *= chart.shrink;
                if h < chart.h_min {
                    break BranchStatus::Stalled;
                }
            }
            Err(e) => return Err(e),
        }
    };
    Ok(Leg { points, tangents, status })
}

/// Settles the open loop at the seed frequency, reads off the reference the
/// plant is already producing, and converts it into continuation unknowns.
pub fn settle_and_seed(
    ctx: &CbcContext,
    omega0: f64,
) -> Result<(UnknownVector, ChainState), ContinuationError> {
    let view = (ctx.factory)(omega0)?;
    let n = view.dim();
    let period = view.period();
    let mut field = view.open_loop_field();

    let mut state = vec![0.0; n];
    let mut t = 0.0;
    let mut prev: Option<Vec<Vec<f64>>> = None;
    let mut settled = false;
    for _ in 0..SETTLE_MAX_PERIODS {
        let (_, samples, end) =
            sample_period(&mut *field, t, &state, period, SETTLE_PROBE_SAMPLES, &ctx.integrator)?;
        t += period;
        state = end;
        if let Some(p) = &prev {
            let mut scale = 1.0f64;
            let mut dev = 0.0f64;
            for (a, b) in samples.iter().zip(p) {
                for (x, y) in a.iter().zip(b) {
                    scale = scale.max(x.abs());
                    dev = dev.max((x - y).abs());
                }
            }
            if dev <= SETTLE_REL_TOL * scale {
                settled = true;
                break;
            }
        }
        prev = Some(samples);
    }
    if !settled {
        return Err(ContinuationError::NoSettle(SETTLE_MAX_PERIODS));
    }

    let (times, states, terminal) = sample_period(
        &mut *field,
        t,
        &state,
        period,
        ctx.protocol.n_samples,
        &ctx.integrator,
    )?;
    let mut components = Vec::with_capacity(n);
    for i in 0..n {
        let samples: Vec<f64> = states.iter().map(|s| s[i]).collect();
        components.push(dft_truncate(&samples, ctx.protocol.k_harmonics, omega0, times[0])?);
    }
    let r = VectorFourierSeries { components };
    let v = match &view {
        PlantView::Structured(s) => extract_generator(&r, &s.a, &s.b)?,
        PlantView::Scalar(s) => {
            let a1 = RealMatrix::from_rows(&[vec![s.a]])?;
            extract_generator(&r, &a1, &[s.b_s])?
        }
    };
    let ctrl_len = match &ctx.controller {
        Controller::Mrac(_) => match &view {
            PlantView::Structured(s) => s.m,
            PlantView::Scalar(_) => 0,
        },
        Controller::ScalarAdaptive { .. } => 1,
        _ => 0,
    };
    Ok((
        UnknownVector::from_series(&v),
        ChainState { q: terminal, ctrl: vec![0.0; ctrl_len] },
    ))
}

/// Traces the response branch through `omega0` across `omega_range`, in both
/// directions, and stitches the legs into one ordered list.
pub fn continue_branch(
    ctx: &CbcContext,
    chart: &ChartSettings,
    omega0: f64,
    omega_range: (f64, f64),
) -> Result<Branch, ContinuationError> {
    let (lo, hi) = omega_range;
    if !(lo < hi) || !(omega0 > lo) || !(omega0 < hi) {
        return Err(ContinuationError::BadRange(format!(
            "need lo < omega0 < hi, got lo={lo}, omega0={omega0}, hi={hi}"
        )));
    }
    let dim = 2 * ctx.protocol.k_harmonics + 2;

    let (xi_raw, chain0) = settle_and_seed(ctx, omega0)?;
    let seed_start = match ctx.protocol.warm_start {
        WarmStart::Chain => chain0,
        WarmStart::Cold => ChainState::default(),
    };
    let seed = newton_correct(ctx, chart, &xi_raw, &seed_start, &Constraint::FixedOmega)?;
    let seed_jac = match seed.jacobian.clone() {
        Some(j) => j,
        None => fd_jacobian(ctx, &seed.xi, &seed.eval, chart)?,
    };
    let mut e_omega = vec![0.0; dim];
    e_omega[dim - 1] = 1.0;
    let t0 = branch_tangent(&seed_jac, &e_omega).unwrap_or(e_omega);

    let seed_point = accept_point(ctx, &seed, 0.0)?;
    let state_dim = seed_point.floquet.len();
    let seed_chain = seed.eval.chain.clone();

    let up = trace_leg(ctx, chart, omega_range, &seed.xi, &t0, &seed_chain)?;
    let t0_neg: Vec<f64> = t0.iter().map(|v| -v).collect();
    let down = trace_leg(ctx, chart, omega_range, &seed.xi, &t0_neg, &seed_chain)?;

    let mut points = Vec::with_capacity(down.points.len() + 1 + up.points.len());
    let mut tangents = Vec::with_capacity(points.capacity());
    for (p, t) in down.points.into_iter().zip(down.tangents).rev() {
        points.push(p);
        tangents.push(t.iter().map(|v| -v).collect());
    }
    points.push(seed_point);
    tangents.push(t0);
    for (p, t) in up.points.into_iter().zip(up.tangents) {
        points.push(p);
        tangents.push(t);
    }
    for (i, p) in points.iter_mut().enumerate() {
        p.idx = i;
    }

    let omega_idx = dim - 1;
    let mut folds = Vec::new();
    let mut last_sign = 0i8;
    let mut last_at = 0usize;
    for (i, t) in tangents.iter().enumerate() {
        let s = if t[omega_idx] > 0.0 {
            1
        } else if t[omega_idx] < 0.0 {
            -1
        } else {
            0
        };
        if s != 0 {
            if last_sign != 0 && s != last_sign {
                let here = t[omega_idx].abs();
                let there = tangents[last_at][omega_idx].abs();
                folds.push(if here < there { i } else { last_at });
            }
            last_sign = s;
            last_at = i;
        }
    }

    let status = match (down.status, up.status) {
        (BranchStatus::Stalled, _) | (_, BranchStatus::Stalled) => BranchStatus::Stalled,
        (BranchStatus::Budget, _) | (_, BranchStatus::Budget) => BranchStatus::Budget,
        _ => BranchStatus::Completed,
    };

    Ok(Branch {
        points,
        tangents,
        folds,
        status,
        warm_start: ctx.protocol.warm_start,
        state_dim,
    })
}

impl Branch {
    /// CSV with one row per point. Leads with a warm-start metadata comment.
    pub fn to_csv(&self) -> String {
        let k = self
            .points
            .first()
            .map(|p| p.xi.harmonics())
            .unwrap_or(0);
        let mut out = format!(
            "# warm_start={}\n",
            match self.warm_start {
                WarmStart::Cold => "cold",
                WarmStart::Chain => "chain",
            }
        );
        out.push_str("idx,omega,amplitude,residual_norm,newton_iters,step");
        for i in 1..=self.state_dim {
            out.push_str(&format!(",floq_re{i},floq_im{i}"));
        }
        out.push_str(",coeff_a0");
        for i in 1..=k {
            out.push_str(&format!(",coeff_a{i}"));
        }
        for i in 1..=k {
            out.push_str(&format!(",coeff_b{i}"));
        }
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{},{:.16e}",
                p.idx, p.omega, p.amplitude, p.residual_norm, p.newton_iters, p.step
            ));
            for i in 0..self.state_dim {
                let m = p.floquet.get(i).copied().unwrap_or(Complex64::new(0.0, 0.0));
                out.push_str(&format!(",{:.16e},{:.16e}", m.re, m.im));
            }
            out.push_str(&format!(",{:.16e}", p.xi.a0));
            for v in &p.xi.a {
                out.push_str(&format!(",{:.16e}", v));
            }
            for v in &p.xi.b {
                out.push_str(&format!(",{:.16e}", v));
            }
            out.push('\n');
        }
        out
    }
}

/// One point of a plain forced-response sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub omega: f64,
    pub amplitude: f64,
    pub settled: bool,
}

/// Open-loop amplitude sweep: at each frequency, run the bare plant for
/// `settle_periods`, then measure max |q₁| over one further period. The state
/// chains from one frequency to the next, so the sweep follows an attractor
/// through hysteresis the way a lab frequency sweep would.
pub fn open_loop_sweep(
    factory: &PlantFactory,
    omegas: &[f64],
    settle_periods: usize,
    n_samples: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<SweepPoint>, ContinuationError> {
    if settle_periods == 0 || n_samples < 2 {
        return Err(ContinuationError::BadProtocol(
            "sweep needs settle_periods >= 1 and n_samples >= 2".into(),
        ));
    }
    let mut out = Vec::with_capacity(omegas.len());
    let mut carry: Option<Vec<f64>> = None;
    for &omega in omegas {
        let view = factory(omega)?;
        let n = view.dim();
        let period = view.period();
        let mut field = view.open_loop_field();
        let q0 = match carry.take() {
            Some(q) if q.len() == n => q,
            _ => vec![0.0; n],
        };
        let t_settle = settle_periods as f64 * period;
        let (_, _, after) = sample_period(&mut *field, 0.0, &q0, t_settle, 1, cfg)?;
        let (_, first, mid) =
            sample_period(&mut *field, t_settle, &after, period, n_samples, cfg)?;
        let (_, second, end) =
            sample_period(&mut *field, t_settle + period, &mid, period, n_samples, cfg)?;
        let mut scale = 1.0f64;
        let mut dev = 0.0f64;
        let mut amplitude = 0.0f64;
        for (a, b) in first.iter().zip(&second) {
            for (x, y) in a.iter().zip(b) {
                scale = scale.max(x.abs());
                dev = dev.max((x - y).abs());
            }
            amplitude = amplitude.max(b[0].abs());
        }
        out.push(SweepPoint { omega, amplitude, settled: dev <= 1e-5 * scale });
        carry = Some(end);
    }
    Ok(out)
}

pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("omega,amplitude,settled\n");
    for p in points {
        out.push_str(&format!(
            "{:.16e},{:.16e},{}\n",
            p.omega,
            p.amplitude,
            if p.settled { 1 } else { 0 }
        ));
    }
    out
}
