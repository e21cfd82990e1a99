//! Controllers and closed-loop assembly.
//!
//! The structured controller is a model-reference adaptive design: the
//! control input cancels the estimated nonlinearity relative to the
//! reference, `u = -θ̂ᵀ(Q(t,q) - Q(t,r))`, while the estimate θ̂ adapts
//! against the prediction error e = x_m - (q - r). The reference model for
//! x_m is integrated in an implementable form that never touches the true
//! parameters. The scalar design uses a single growing gain, `u = -k̂ (q-r)`.

use crate::numkit::{eig_sym, solve_lyapunov, NumError, RealMatrix};
use crate::ode::{integrate, sample_period, IntegratorConfig, OdeError, Trajectory};
use crate::plant::{PlantView, ScalarPlant, ScalarView, StructuredView};
use crate::signal::{FourierSeries, VectorFourierSeries};
use thiserror::Error;

/// Grid size for the measured bound on the scalar residual forcing.
const G_BOUND_GRID: usize = 4096;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("controller/plant mismatch: {0}")]
    Mismatch(String),
    #[error("controller dimensions inconsistent: {0}")]
    Dimension(String),
    #[error("controller gain invalid: {0}")]
    BadGain(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Ball constraint for the projected adaptation law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionSettings {
    pub radius: f64,
    pub eps: f64,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self { radius: 10.0, eps: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct MracParams {
    pub gamma: f64,
    /// Lyapunov right-hand side; identity when absent.
    pub s: Option<RealMatrix>,
    pub projection: Option<ProjectionSettings>,
}

impl MracParams {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, s: None, projection: None }
    }

    pub fn with_projection(mut self, p: ProjectionSettings) -> Self {
        self.projection = Some(p);
        self
    }
}

#[derive(Debug, Clone)]
pub enum Controller {
    /// Open loop: u ≡ 0.
    None,
    /// Fixed-gain cancellation relative to the reference.
    Proportional { k: Vec<f64> },
    /// Model-reference adaptive design for structured plants.
    Mrac(MracParams),
    /// Growing scalar gain for first-order plants with unmodeled terms.
    ScalarAdaptive { gamma: f64, k_hat0: f64 },
}

/// Reference signal wrapper: structured plants track a vector series,
/// scalar plants a scalar one.
#[derive(Debug, Clone)]
pub enum Reference {
    Vector(VectorFourierSeries),
    Scalar(FourierSeries),
}

impl Reference {
    pub fn omega(&self) -> f64 {
        match self {
            Reference::Vector(r) => r.omega(),
            Reference::Scalar(r) => r.omega,
        }
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega()
    }

    pub fn dim(&self) -> usize {
        match self {
            Reference::Vector(r) => r.dim(),
            Reference::Scalar(_) => 1,
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        match self {
            Reference::Vector(r) => r.eval(t),
            Reference::Scalar(r) => vec![r.eval(t)],
        }
    }
}

/// `u = -kᵀ (Q(t,q) - Q(t,r))`.
pub fn proportional_u(k: &[f64], q_q: &[f64], q_r: &[f64]) -> f64 {
    let mut u = 0.0;
    for i in 0..k.len() {
        u -= k[i] * (q_q[i] - q_r[i]);
    }
    u
}

/// Projection of the raw adaptation rate `y` onto the tangent half-space of
/// the ball of radius `R√(1+eps)`. Uses the convex activation
/// `f(θ̂) = ((1+eps)‖θ̂‖² - R²)/(eps R²)`, clamped to 1, so the radial rate
/// component fades in across the boundary layer and vanishes at the rim.
pub fn proj(theta_hat: &[f64], y: &[f64], settings: &ProjectionSettings) -> Vec<f64> {
    let r2 = settings.radius * settings.radius;
    let norm2: f64 = theta_hat.iter().map(|v| v * v).sum();
    let f = ((1.0 + settings.eps) * norm2 - r2) / (settings.eps * r2);
    let radial: f64 = theta_hat.iter().zip(y).map(|(t, y)| t * y).sum();
    if f <= 0.0 || radial <= 0.0 {
        return y.to_vec();
    }
    let scale = f.min(1.0) * radial / norm2;
    y.iter().zip(theta_hat).map(|(y, t)| y - scale * t).collect()
}

/// State layout of an assembled closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopKind {
    /// Bare structured plant (u ≡ 0 or proportional): state = q.
    StructuredDirect,
    /// Structured MRAC: state = (q, x_m, θ̂).
    Mrac,
    /// Bare scalar plant: state = q.
    ScalarDirect,
    /// Scalar adaptive gain: state = (q, k̂).
    ScalarAdaptive,
}

/// A plant/controller/reference triple ready to integrate.
#[derive(Clone)]
pub struct ClosedLoop {
    pub kind: LoopKind,
    pub n: usize,
    pub m: usize,
    pub reference: Reference,
    pub controller: Controller,
    structured: Option<StructuredView>,
    scalar: Option<ScalarView>,
    /// Lyapunov solution for the MRAC design.
    pub p_matrix: Option<RealMatrix>,
    pub s_matrix: Option<RealMatrix>,
    /// Precomputed P·b.
    pb: Vec<f64>,
}

pub fn assemble_closed_loop(
    view: &PlantView,
    controller: &Controller,
    reference: &Reference,
) -> Result<ClosedLoop, ControlError> {
    let omega = view.omega();
    if (reference.omega() - omega).abs() > 1e-12 * omega {
        return Err(ControlError::Mismatch(format!(
            "reference frequency {} differs from plant frequency {}",
            reference.omega(),
            omega
        )));
    }
    if reference.dim() != view.dim() {
        return Err(ControlError::Dimension(format!(
            "reference has {} components for state dimension {}",
            reference.dim(),
            view.dim()
        )));
    }
    match (view, controller) {
        (PlantView::Structured(s), Controller::None) => Ok(ClosedLoop {
            kind: LoopKind::StructuredDirect,
            n: s.a.nrows(),
            m: s.m,
            reference: reference.clone(),
            controller: controller.clone(),
            structured: Some(s.clone()),
            scalar: None,
            p_matrix: None,
            s_matrix: None,
            pb: Vec::new(),
        }),
        (PlantView::Structured(s), Controller::Proportional { k }) => {
            if k.len() != s.m {
                return Err(ControlError::Dimension(format!(
                    "proportional gain has {} entries for {} regressor components",
                    k.len(),
                    s.m
                )));
            }
            Ok(ClosedLoop {
                kind: LoopKind::StructuredDirect,
                n: s.a.nrows(),
                m: s.m,
                reference: reference.clone(),
                controller: controller.clone(),
                structured: Some(s.clone()),
                scalar: None,
                p_matrix: None,
                s_matrix: None,
                pb: Vec::new(),
            })
        }
        (PlantView::Structured(s), Controller::Mrac(params)) => {
            if !(params.gamma > 0.0) {
                return Err(ControlError::BadGain(format!(
                    "Gamma must be > 0, got {}",
                    params.gamma
                )));
            }
            let n = s.a.nrows();
            let s_mat = match &params.s {
                Some(m) => {
                    if m.nrows() != n || m.ncols() != n {
                        return Err(ControlError::Dimension(format!(
                            "S is {}x{}, state dimension is {}",
                            m.nrows(),
                            m.ncols(),
                            n
                        )));
                    }
                    m.clone()
                }
                None => RealMatrix::identity(n),
            };
            let p = solve_lyapunov(&s.a, &s_mat)?;
            let pb = p.matvec(&s.b);
            Ok(ClosedLoop {
                kind: LoopKind::Mrac,
                n,
                m: s.m,
                reference: reference.clone(),
                controller: controller.clone(),
                structured: Some(s.clone()),
                scalar: None,
                p_matrix: Some(p),
                s_matrix: Some(s_mat),
                pb,
            })
        }
        (PlantView::Scalar(s), Controller::None) => Ok(ClosedLoop {
            kind: LoopKind::ScalarDirect,
            n: 1,
            m: 1,
            reference: reference.clone(),
            controller: controller.clone(),
            structured: None,
            scalar: Some(s.clone()),
            p_matrix: None,
            s_matrix: None,
            pb: Vec::new(),
        }),
        (PlantView::Scalar(s), Controller::ScalarAdaptive { gamma, .. }) => {
            if !(*gamma > 0.0) {
                return Err(ControlError::BadGain(format!("Gamma must be > 0, got {gamma}")));
            }
            Ok(ClosedLoop {
                kind: LoopKind::ScalarAdaptive,
                n: 1,
                m: 1,
                reference: reference.clone(),
                controller: controller.clone(),
                structured: None,
                scalar: Some(s.clone()),
                p_matrix: None,
                s_matrix: None,
                pb: Vec::new(),
            })
        }
        (PlantView::Structured(_), Controller::ScalarAdaptive { .. }) => Err(
            ControlError::Mismatch("scalar adaptive controller on a structured plant".into()),
        ),
        (PlantView::Scalar(_), _) => Err(ControlError::Mismatch(
            "structured controller on a scalar plant".into(),
        )),
    }
}

impl ClosedLoop {
    /// Augmented state dimension.
    pub fn dim(&self) -> usize {
        match self.kind {
            LoopKind::StructuredDirect => self.n,
            LoopKind::Mrac => 2 * self.n + self.m,
            LoopKind::ScalarDirect => 1,
            LoopKind::ScalarAdaptive => 2,
        }
    }

    /// Initial augmented state. `ctrl0` is θ̂(0) for MRAC (length m), k̂(0)
    /// for the scalar design (length 1) and empty otherwise; x_m(0) is pinned
    /// to q(0) − r(0) so the prediction error starts at zero.
    pub fn initial_state(&self, q0: &[f64], ctrl0: &[f64]) -> Result<Vec<f64>, ControlError> {
        if q0.len() != self.n {
            return Err(ControlError::Dimension(format!(
                "q0 has {} entries for state dimension {}",
                q0.len(),
                self.n
            )));
        }
        match self.kind {
            LoopKind::StructuredDirect | LoopKind::ScalarDirect => {
                if !ctrl0.is_empty() {
                    return Err(ControlError::Dimension(
                        "controller state supplied for a stateless controller".into(),
                    ));
                }
                Ok(q0.to_vec())
            }
            LoopKind::Mrac => {
                if ctrl0.len() != self.m {
                    return Err(ControlError::Dimension(format!(
                        "theta_hat(0) has {} entries, expected {}",
                        ctrl0.len(),
                        self.m
                    )));
                }
                let r0 = self.reference.eval(0.0);
                let mut y = Vec::with_capacity(self.dim());
                y.extend_from_slice(q0);
                for i in 0..self.n {
                    y.push(q0[i] - r0[i]);
                }
                y.extend_from_slice(ctrl0);
                Ok(y)
            }
            LoopKind::ScalarAdaptive => {
                if ctrl0.len() != 1 {
                    return Err(ControlError::Dimension(format!(
                        "k_hat(0) has {} entries, expected 1",
                        ctrl0.len()
                    )));
                }
                Ok(vec![q0[0], ctrl0[0]])
            }
        }
    }

    /// Control input as a function of time and augmented state.
    pub fn control_input(&self, t: f64, y: &[f64]) -> f64 {
        match (&self.kind, &self.controller) {
            (LoopKind::StructuredDirect, Controller::None) => 0.0,
            (LoopKind::StructuredDirect, Controller::Proportional { k }) => {
                let s = self.structured.as_ref().unwrap();
                let rv = self.reference.eval(t);
                let qq = (s.q_eval)(t, &y[..self.n]);
                let qr = (s.q_eval)(t, &rv);
                proportional_u(k, &qq, &qr)
            }
            (LoopKind::Mrac, Controller::Mrac(_)) => {
                let s = self.structured.as_ref().unwrap();
                let rv = self.reference.eval(t);
                let qq = (s.q_eval)(t, &y[..self.n]);
                let qr = (s.q_eval)(t, &rv);
                proportional_u(&y[2 * self.n..], &qq, &qr)
            }
            (LoopKind::ScalarDirect, _) => 0.0,
            (LoopKind::ScalarAdaptive, Controller::ScalarAdaptive { .. }) => {
                let r = match &self.reference {
                    Reference::Scalar(r) => r.eval(t),
                    Reference::Vector(_) => unreachable!(),
                };
                -y[1] * (y[0] - r)
            }
            _ => unreachable!("assemble_closed_loop enforces pairing"),
        }
    }

    /// Prediction error e = x_m − (q − r); empty for non-MRAC layouts.
    pub fn prediction_error(&self, t: f64, y: &[f64]) -> Vec<f64> {
        if self.kind != LoopKind::Mrac {
            return Vec::new();
        }
        let rv = self.reference.eval(t);
        (0..self.n).map(|i| y[self.n + i] - (y[i] - rv[i])).collect()
    }

    /// Tracking deviation x = q − r.
    pub fn tracking_deviation(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let rv = self.reference.eval(t);
        (0..self.n).map(|i| y[i] - rv[i]).collect()
    }

    /// The augmented vector field as an owning closure.
    pub fn field(&self) -> Box<dyn FnMut(f64, &[f64]) -> Vec<f64> + Send> {
        match self.kind {
            LoopKind::StructuredDirect => {
                let s = self.structured.clone().unwrap();
                let n = self.n;
                let reference = self.reference.clone();
                let k = match &self.controller {
                    Controller::Proportional { k } => Some(k.clone()),
                    _ => None,
                };
                Box::new(move |t, y| {
                    let u = match &k {
                        None => 0.0,
                        Some(k) => {
                            let rv = reference.eval(t);
                            let qq = (s.q_eval)(t, &y[..n]);
                            let qr = (s.q_eval)(t, &rv);
                            proportional_u(k, &qq, &qr)
                        }
                    };
                    (s.field)(t, &y[..n], u)
                })
            }
            LoopKind::Mrac => {
                let s = self.structured.clone().unwrap();
                let n = self.n;
                let m = self.m;
                let reference = match &self.reference {
                    Reference::Vector(r) => r.clone(),
                    Reference::Scalar(_) => unreachable!(),
                };
                let (gamma, projection) = match &self.controller {
                    Controller::Mrac(p) => (p.gamma, p.projection),
                    _ => unreachable!(),
                };
                let pb = self.pb.clone();
                Box::new(move |t, y| {
                    let q = &y[..n];
                    let xm = &y[n..2 * n];
                    let th = &y[2 * n..2 * n + m];
                    let rv = reference.eval(t);
                    let rdot = reference.eval_derivative(t);
                    let qq = (s.q_eval)(t, q);
                    let qr = (s.q_eval)(t, &rv);
                    let u = proportional_u(th, &qq, &qr);

                    let dq = (s.field)(t, q, u);

                    // x_m' = A(x_m + r) + b(θ̂ᵀQ(t,r) + σ) − r'
                    let mut xm_plus_r = vec![0.0; n];
                    for i in 0..n {
                        xm_plus_r[i] = xm[i] + rv[i];
                    }
                    let mut dxm = s.a.matvec(&xm_plus_r);
                    let mut drive_m = (s.sigma)(t);
                    for i in 0..m {
                        drive_m += th[i] * qr[i];
                    }
                    for i in 0..n {
                        dxm[i] += s.b[i] * drive_m - rdot[i];
                    }

                    // θ̂' = Γ Proj(θ̂, −(eᵀPb) Q(t,q)), Proj = identity when off
                    let mut e_pb = 0.0;
                    for i in 0..n {
                        e_pb += (xm[i] - (q[i] - rv[i])) * pb[i];
                    }
                    let raw: Vec<f64> = qq.iter().map(|v| -e_pb * v).collect();
                    let rate = match &projection {
                        Some(p) => proj(th, &raw, p),
                        None => raw,
                    };

                    let mut dy = Vec::with_capacity(2 * n + m);
                    dy.extend_from_slice(&dq);
                    dy.extend_from_slice(&dxm);
                    for v in rate {
                        dy.push(gamma * v);
                    }
                    dy
                })
            }
            LoopKind::ScalarDirect => {
                let s = self.scalar.clone().unwrap();
                Box::new(move |t, y| vec![(s.field)(t, y[0], 0.0)])
            }
            LoopKind::ScalarAdaptive => {
                let s = self.scalar.clone().unwrap();
                let reference = match &self.reference {
                    Reference::Scalar(r) => r.clone(),
                    Reference::Vector(_) => unreachable!(),
                };
                let gamma = match &self.controller {
                    Controller::ScalarAdaptive { gamma, .. } => *gamma,
                    _ => unreachable!(),
                };
                Box::new(move |t, y| {
                    let x = y[0] - reference.eval(t);
                    let u = -y[1] * x;
                    vec![(s.field)(t, y[0], u), gamma * s.b_s * x * x]
                })
            }
        }
    }
}

/// Settings for a diagnostic closed-loop run.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub t_end: f64,
    pub samples_per_period: usize,
    /// Retain the dense trajectory (needed for sliding-window diagnostics).
    pub keep_dense: bool,
    pub integrator: IntegratorConfig,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            t_end: 0.0,
            samples_per_period: 32,
            keep_dense: false,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Sampled closed-loop run.
#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub kind: LoopKind,
    pub n: usize,
    pub m: usize,
    pub times: Vec<f64>,
    /// Augmented state at each sample time.
    pub states: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    /// ‖e(t)‖₂ at each sample; empty for non-MRAC layouts.
    pub e_norm: Vec<f64>,
    /// ‖q(t) − r(t)‖₂ at each sample.
    pub x_norm: Vec<f64>,
    pub reference: Reference,
    pub terminal: Vec<f64>,
    pub dense: Option<Trajectory>,
}

pub fn run_closed_loop(
    lp: &ClosedLoop,
    y0: &[f64],
    settings: &RunSettings,
) -> Result<ClosedLoopRun, ControlError> {
    if y0.len() != lp.dim() {
        return Err(ControlError::Dimension(format!(
            "initial state has {} entries, expected {}",
            y0.len(),
            lp.dim()
        )));
    }
    let period = lp.reference.period();
    let n_per = settings.samples_per_period.max(2);
    let mut times = Vec::new();
    let mut states: Vec<Vec<f64>> = Vec::new();
    let mut field = lp.field();
    let mut terminal = y0.to_vec();
    let mut dense = None;

    if settings.keep_dense {
        let traj = integrate(&mut *field, 0.0, y0, settings.t_end, &settings.integrator)?;
        let mut t = 0.0;
        while t < settings.t_end - 1e-12 * period {
            times.push(t);
            states.push(traj.eval(t));
            t += period / n_per as f64;
        }
        times.push(settings.t_end);
        states.push(traj.final_state().to_vec());
        terminal = traj.final_state().to_vec();
        dense = Some(traj);
    } else {
        let mut t = 0.0;
        while t < settings.t_end - 1e-12 * period {
            let span = period.min(settings.t_end - t);
            let n_chunk = ((n_per as f64) * span / period).round().max(1.0) as usize;
            let (chunk_times, chunk_states, chunk_terminal) =
                sample_period(&mut *field, t, &terminal, span, n_chunk, &settings.integrator)?;
            times.extend_from_slice(&chunk_times);
            states.extend(chunk_states);
            terminal = chunk_terminal;
            t += span;
        }
        times.push(settings.t_end);
        states.push(terminal.clone());
    }

    let mut u = Vec::with_capacity(times.len());
    let mut e_norm = Vec::with_capacity(times.len());
    let mut x_norm = Vec::with_capacity(times.len());
    for (t, y) in times.iter().zip(&states) {
        u.push(lp.control_input(*t, y));
        let x = lp.tracking_deviation(*t, y);
        x_norm.push(x.iter().map(|v| v * v).sum::<f64>().sqrt());
        if lp.kind == LoopKind::Mrac {
            let e = lp.prediction_error(*t, y);
            e_norm.push(e.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }

    Ok(ClosedLoopRun {
        kind: lp.kind,
        n: lp.n,
        m: lp.m,
        times,
        states,
        u,
        e_norm,
        x_norm,
        reference: lp.reference.clone(),
        terminal,
        dense,
    })
}

impl ClosedLoopRun {
    /// Largest |u| over samples with t ≥ t_from.
    pub fn max_abs_u_after(&self, t_from: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.u)
            .filter(|(t, _)| **t >= t_from)
            .map(|(_, u)| u.abs())
            .fold(0.0, f64::max)
    }

    /// CSV export: `t,q...,xm...,theta_hat...,u,e_norm[,V]` for MRAC layouts,
    /// `t,q,k_hat,u` for the scalar design, `t,q...,u` otherwise.
    pub fn to_csv(&self, diag: Option<&LyapunovReport>) -> String {
        let mut header = String::from("t");
        match self.kind {
            LoopKind::Mrac => {
                for i in 0..self.n {
                    header.push_str(&format!(",q{}", i + 1));
                }
                for i in 0..self.n {
                    header.push_str(&format!(",xm{}", i + 1));
                }
                for i in 0..self.m {
                    header.push_str(&format!(",theta_hat{}", i + 1));
                }
                header.push_str(",u,e_norm");
                if diag.is_some() {
                    header.push_str(",V");
                }
            }
            LoopKind::ScalarAdaptive => header.push_str(",q1,k_hat,u"),
            _ => {
                for i in 0..self.n {
                    header.push_str(&format!(",q{}", i + 1));
                }
                header.push_str(",u");
            }
        }
        let mut out = header;
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            let mut row = format!("{:.16e}", t);
            match self.kind {
                LoopKind::Mrac => {
                    for v in &self.states[i] {
                        row.push_str(&format!(",{:.16e}", v));
                    }
                    row.push_str(&format!(",{:.16e},{:.16e}", self.u[i], self.e_norm[i]));
                    if let Some(d) = diag {
                        row.push_str(&format!(",{:.16e}", d.v[i]));
                    }
                }
                LoopKind::ScalarAdaptive => {
                    row.push_str(&format!(
                        ",{:.16e},{:.16e},{:.16e}",
                        self.states[i][0], self.states[i][1], self.u[i]
                    ));
                }
                _ => {
                    for v in &self.states[i] {
                        row.push_str(&format!(",{:.16e}", v));
                    }
                    row.push_str(&format!(",{:.16e}", self.u[i]));
                }
            }
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

/// Ground-truth Lyapunov diagnostics of a structured MRAC run.
#[derive(Debug, Clone)]
pub struct LyapunovReport {
    pub v: Vec<f64>,
    pub e_norm: Vec<f64>,
    pub theta_err_norm: Vec<f64>,
    /// Ball radius used in the bounds: max(‖θ̂(0)‖, ‖θ‖).
    pub radius: f64,
    pub e_bound: f64,
    pub theta_bound: f64,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
    pub lambda_min_s: f64,
    /// Largest V(t_{i+1}) − V(t_i) over consecutive samples.
    pub max_pairwise_increase: f64,
}

pub fn lyapunov_diagnostics(
    lp: &ClosedLoop,
    run: &ClosedLoopRun,
    theta_true: &[f64],
) -> Result<LyapunovReport, ControlError> {
    if lp.kind != LoopKind::Mrac || run.kind != LoopKind::Mrac {
        return Err(ControlError::Mismatch("Lyapunov diagnostics need an MRAC run".into()));
    }
    if theta_true.len() != lp.m {
        return Err(ControlError::Dimension(format!(
            "true parameter vector has {} entries, expected {}",
            theta_true.len(),
            lp.m
        )));
    }
    let gamma = match &lp.controller {
        Controller::Mrac(p) => p.gamma,
        _ => unreachable!(),
    };
    let p = lp.p_matrix.as_ref().unwrap();
    let s = lp.s_matrix.as_ref().unwrap();
    let p_eigs = eig_sym(p)?;
    let s_eigs = eig_sym(s)?;
    let theta0 = &run.states[0][2 * lp.n..2 * lp.n + lp.m];
    let norm0 = theta0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_true = theta_true.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = norm0.max(norm_true);

    let mut v = Vec::with_capacity(run.times.len());
    let mut e_norm = Vec::with_capacity(run.times.len());
    let mut theta_err_norm = Vec::with_capacity(run.times.len());
    for (t, y) in run.times.iter().zip(&run.states) {
        let e = lp.prediction_error(*t, y);
        let pe = p.matvec(&e);
        let mut val = e.iter().zip(&pe).map(|(a, b)| a * b).sum::<f64>();
        let mut tn = 0.0;
        for i in 0..lp.m {
            let d = y[2 * lp.n + i] - theta_true[i];
            val += d * d / gamma;
            tn += d * d;
        }
        v.push(val);
        e_norm.push(e.iter().map(|x| x * x).sum::<f64>().sqrt());
        theta_err_norm.push(tn.sqrt());
    }
    let max_pairwise_increase =
        v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    Ok(LyapunovReport {
        v,
        e_norm,
        theta_err_norm,
        radius,
        e_bound: 2.0 * radius / (p_eigs[0] * gamma).sqrt(),
        theta_bound: 2.0 * radius,
        lambda_min_p: p_eigs[0],
        lambda_max_p: *p_eigs.last().unwrap(),
        lambda_min_s: s_eigs[0],
        max_pairwise_increase,
    })
}

/// Measured uniform bound on the scalar residual forcing |g| along q = r.
pub fn scalar_g_bound(plant: &ScalarPlant, r: &FourierSeries) -> Result<f64, crate::plant::PlantError> {
    let g = crate::plant::scalar_true_forcing_g(plant, r)?;
    let t1 = plant.period();
    let mut max = 0.0f64;
    for j in 0..G_BOUND_GRID {
        max = max.max(g.eval(t1 * j as f64 / G_BOUND_GRID as f64).abs());
    }
    Ok(max)
}
