//! Plant abstractions and the example catalog.
//!
//! A plant owns its true parameters, but hands controllers a [`PlantView`]
//! that exposes only what a lab instrument could measure: the known linear
//! part, the regressor evaluator, the drive signal, and a black-box vector
//! field. The true parameter vector lives in a sealed [`GroundTruth`] cell
//! whose only public accessor counts reads and can be armed to panic, so
//! tests can prove that the tracking pipeline never peeks at it.

use crate::numkit::{hurwitz_check, NumError, RealMatrix};
use crate::signal::{FourierSeries, VectorFourierSeries};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use thiserror::Error;

pub type QEvalFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
pub type QJacFn = Arc<dyn Fn(f64, &[f64]) -> RealMatrix + Send + Sync>;
pub type SigmaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Open-loop field with an injected control input: `(t, q, u) -> dq/dt`.
pub type DrivenFieldFn = Arc<dyn Fn(f64, &[f64], f64) -> Vec<f64> + Send + Sync>;
pub type ScalarDrivenFieldFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type ScalarNonlinearityFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type DisturbanceFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

const PERIODICITY_TOL: f64 = 1e-12;
const PERIODICITY_PROBES: usize = 16;
/// Grid used to verify declared bounds on nonlinearities and disturbances.
const BOUND_PROBES: usize = 64;
/// Points checked when classifying a residual forcing as identically zero.
const FORCING_ZERO_POINTS: usize = 256;
const FORCING_ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("plant: {0}")]
    BadParam(String),
    #[error("plant dimensions inconsistent: {0}")]
    Dimension(String),
    #[error("{what} is not periodic in t with the declared period (|delta| = {delta:.3e})")]
    NotPeriodic { what: &'static str, delta: f64 },
    #[error("declared bound violated for {what}: |value| = {found:.4e} > {bound:.4e}")]
    BoundViolated { what: &'static str, found: f64, bound: f64 },
    #[error("reference frequency {got} does not match plant frequency {want}")]
    PeriodMismatch { got: f64, want: f64 },
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Deterministic probe points in [0, 1): a fixed linear congruential stream,
/// so construction-time spot checks are reproducible.
fn probe_stream(seed: u64, count: usize) -> Vec<f64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..count)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

/// Sealed container for parameters the tracking pipeline must never read.
///
/// The public accessor is for diagnostics only: it counts every read and
/// panics when the trap is armed. The owning plant reaches the values
/// through a module-private path when integrating its own dynamics — the
/// simulated physics is the stand-in for a real rig, not a model leak.
#[derive(Debug)]
pub struct GroundTruth {
    values: Vec<f64>,
    access_count: AtomicUsize,
    trap: AtomicBool,
}

impl GroundTruth {
    fn new(values: Vec<f64>) -> Arc<Self> {
        Arc::new(Self { values, access_count: AtomicUsize::new(0), trap: AtomicBool::new(false) })
    }

    /// Diagnostic read of the hidden parameters. Counted; panics if trapped.
    pub fn reveal(&self) -> Vec<f64> {
        if self.trap.load(Ordering::SeqCst) {
            panic!("sealed ground truth was read while the access trap was armed");
        }
        self.access_count.fetch_add(1, Ordering::SeqCst);
        self.values.clone()
    }

    /// Module-private, uncounted access: the plant's own dynamics.
    fn physics(&self) -> &[f64] {
        &self.values
    }

    pub fn arm_trap(&self) {
        self.trap.store(true, Ordering::SeqCst);
    }

    pub fn disarm_trap(&self) {
        self.trap.store(false, Ordering::SeqCst);
    }

    pub fn access_count(&self) -> usize {
        self.access_count.load(Ordering::SeqCst)
    }
}

/// Bounded additive disturbance entering the state equation directly.
#[derive(Clone)]
pub struct Disturbance {
    pub h: DisturbanceFn,
    pub h_b: f64,
    pub periodic: bool,
}

impl std::fmt::Debug for Disturbance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Disturbance")
            .field("h_b", &self.h_b)
            .field("periodic", &self.periodic)
            .finish()
    }
}

/// Forced system `q' = A q + b (θᵀ Q(t,q) + σ(t) + u)` with unknown θ.
#[derive(Clone)]
pub struct StructuredPlant {
    pub name: String,
    pub a: RealMatrix,
    pub b: Vec<f64>,
    /// Number of unknown parameters (the length of the regressor).
    pub m: usize,
    truth: Arc<GroundTruth>,
    pub q_eval: QEvalFn,
    /// Jacobian of the regressor with respect to q, shape m×n.
    pub q_jac: QJacFn,
    pub sigma: SigmaFn,
    pub omega: f64,
    pub disturbance: Option<Disturbance>,
}

impl std::fmt::Debug for StructuredPlant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StructuredPlant")
            .field("name", &self.name)
            .field("n", &self.a.nrows())
            .field("m", &self.m)
            .field("omega", &self.omega)
            .field("disturbance", &self.disturbance)
            .finish()
    }
}

impl StructuredPlant {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        a: RealMatrix,
        b: Vec<f64>,
        theta: Vec<f64>,
        q_eval: QEvalFn,
        q_jac: QJacFn,
        sigma: SigmaFn,
        omega: f64,
    ) -> Result<Self, PlantError> {
        let n = a.nrows();
        if !a.is_square() || b.len() != n {
            return Err(PlantError::Dimension(format!(
                "A is {}x{}, b has length {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(PlantError::BadParam(format!("omega must be > 0, got {omega}")));
        }
        if !hurwitz_check(&a)? {
            return Err(PlantError::BadParam(format!("A must be Hurwitz for plant '{name}'")));
        }
        let m = theta.len();
        let probe_state = vec![0.3; n];
        if q_eval(0.0, &probe_state).len() != m {
            return Err(PlantError::Dimension(format!(
                "regressor returns {} components for {} unknown parameters",
                q_eval(0.0, &probe_state).len(),
                m
            )));
        }
        let j = q_jac(0.0, &probe_state);
        if j.nrows() != m || j.ncols() != n {
            return Err(PlantError::Dimension(format!(
                "regressor Jacobian is {}x{}, expected {}x{}",
                j.nrows(),
                j.ncols(),
                m,
                n
            )));
        }
        let plant = Self {
            name: name.to_string(),
            a,
            b,
            m,
            truth: GroundTruth::new(theta),
            q_eval,
            q_jac,
            sigma,
            omega,
            disturbance: None,
        };
        plant.check_periodicity()?;
        Ok(plant)
    }

    fn check_periodicity(&self) -> Result<(), PlantError> {
        let t1 = self.period();
        let n = self.a.nrows();
        let times = probe_stream(0x7d5a_1c3f, PERIODICITY_PROBES);
        let comps = probe_stream(0x22b8_90ee, 3 * n);
        let states: Vec<Vec<f64>> =
            (0..3).map(|i| (0..n).map(|j| 3.0 * comps[i * n + j] - 1.5).collect()).collect();
        for frac in &times {
            let t = frac * t1;
            let ds = ((self.sigma)(t + t1) - (self.sigma)(t)).abs();
            if ds > PERIODICITY_TOL {
                return Err(PlantError::NotPeriodic { what: "sigma", delta: ds });
            }
            for q in &states {
                let q0 = (self.q_eval)(t, q);
                let q1 = (self.q_eval)(t + t1, q);
                for (u, v) in q0.iter().zip(&q1) {
                    let d = (u - v).abs();
                    if d > PERIODICITY_TOL {
                        return Err(PlantError::NotPeriodic { what: "Q", delta: d });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    /// Sealed true parameters, for diagnostics only (counted, trappable).
    pub fn ground_truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// The measurable interface a controller is allowed to see.
    pub fn view(&self) -> PlantView {
        let theta = self.truth.physics().to_vec();
        let a = self.a.clone();
        let b = self.b.clone();
        let q_eval = self.q_eval.clone();
        let sigma = self.sigma.clone();
        let disturbance = self.disturbance.clone();
        let field: DrivenFieldFn = Arc::new(move |t, q, u| {
            let qv = q_eval(t, q);
            let mut drive = u + sigma(t);
            for (th, qi) in theta.iter().zip(&qv) {
                drive += th * qi;
            }
            let mut dq = a.matvec(q);
            for i in 0..dq.len() {
                dq[i] += b[i] * drive;
            }
            if let Some(d) = &disturbance {
                let h = (d.h)(t, q);
                for i in 0..dq.len() {
                    dq[i] += h[i];
                }
            }
            dq
        });
        PlantView::Structured(StructuredView {
            a: self.a.clone(),
            b: self.b.clone(),
            m: self.m,
            q_eval: self.q_eval.clone(),
            sigma: self.sigma.clone(),
            omega: self.omega,
            field,
        })
    }
}

/// First-order system `q' = a q + b (k q + f(t,q) + σ(t) + u)` with unknown
/// constant k and unmodeled bounded nonlinearity f.
#[derive(Clone)]
pub struct ScalarPlant {
    pub name: String,
    pub a: f64,
    pub b_s: f64,
    truth: Arc<GroundTruth>,
    pub f: ScalarNonlinearityFn,
    /// Declared uniform bound on |f|.
    pub f_b: f64,
    pub sigma: SigmaFn,
    pub omega: f64,
}

impl std::fmt::Debug for ScalarPlant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarPlant")
            .field("name", &self.name)
            .field("a", &self.a)
            .field("b_s", &self.b_s)
            .field("f_b", &self.f_b)
            .field("omega", &self.omega)
            .finish()
    }
}

impl ScalarPlant {
    pub fn new(
        name: &str,
        a: f64,
        b_s: f64,
        k_true: f64,
        f: ScalarNonlinearityFn,
        f_b: f64,
        sigma: SigmaFn,
        omega: f64,
    ) -> Result<Self, PlantError> {
        if !(a < 0.0) {
            return Err(PlantError::BadParam(format!("scalar plant needs a < 0, got {a}")));
        }
        if b_s == 0.0 || !b_s.is_finite() {
            return Err(PlantError::BadParam(format!("scalar plant needs b != 0, got {b_s}")));
        }
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(PlantError::BadParam(format!("omega must be > 0, got {omega}")));
        }
        let plant =
            Self { name: name.to_string(), a, b_s, truth: GroundTruth::new(vec![k_true]), f, f_b, sigma, omega };
        let t1 = plant.period();
        for frac in probe_stream(0x11aa_09c2, PERIODICITY_PROBES) {
            let t = frac * t1;
            let ds = ((plant.sigma)(t + t1) - (plant.sigma)(t)).abs();
            if ds > PERIODICITY_TOL {
                return Err(PlantError::NotPeriodic { what: "sigma", delta: ds });
            }
        }
        for (i, frac) in probe_stream(0x5cd1_44b7, BOUND_PROBES).iter().enumerate() {
            let t = frac * t1;
            let q = 6.0 * probe_stream(0x903e_0f1d + i as u64, 1)[0] - 3.0;
            let val = (plant.f)(t, q).abs();
            if val > plant.f_b + 1e-12 {
                return Err(PlantError::BoundViolated { what: "f", found: val, bound: plant.f_b });
            }
        }
        Ok(plant)
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    pub fn ground_truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn view(&self) -> PlantView {
        let k_true = self.truth.physics()[0];
        let a = self.a;
        let b_s = self.b_s;
        let f = self.f.clone();
        let sigma = self.sigma.clone();
        let field: ScalarDrivenFieldFn =
            Arc::new(move |t, q, u| a * q + b_s * (k_true * q + f(t, q) + sigma(t) + u));
        PlantView::Scalar(ScalarView { a: self.a, b_s: self.b_s, sigma: self.sigma.clone(), omega: self.omega, field })
    }
}

/// Measurable interface of a structured plant.
#[derive(Clone)]
pub struct StructuredView {
    pub a: RealMatrix,
    pub b: Vec<f64>,
    pub m: usize,
    pub q_eval: QEvalFn,
    pub sigma: SigmaFn,
    pub omega: f64,
    /// Black-box dynamics: `(t, q, u) -> dq/dt`. Captures the hidden
    /// parameters internally; nothing can be extracted through it but the
    /// response itself.
    pub field: DrivenFieldFn,
}

/// Measurable interface of a scalar plant.
#[derive(Clone)]
pub struct ScalarView {
    pub a: f64,
    pub b_s: f64,
    pub sigma: SigmaFn,
    pub omega: f64,
    pub field: ScalarDrivenFieldFn,
}

/// What controllers and the continuation engine receive.
#[derive(Clone)]
pub enum PlantView {
    Structured(StructuredView),
    Scalar(ScalarView),
}

impl PlantView {
    pub fn dim(&self) -> usize {
        match self {
            PlantView::Structured(s) => s.a.nrows(),
            PlantView::Scalar(_) => 1,
        }
    }

    pub fn omega(&self) -> f64 {
        match self {
            PlantView::Structured(s) => s.omega,
            PlantView::Scalar(s) => s.omega,
        }
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega()
    }

    /// Open-loop field (u ≡ 0) over the bare plant state.
    pub fn open_loop_field(&self) -> Box<dyn FnMut(f64, &[f64]) -> Vec<f64> + Send> {
        match self {
            PlantView::Structured(s) => {
                let f = s.field.clone();
                Box::new(move |t, q| f(t, q, 0.0))
            }
            PlantView::Scalar(s) => {
                let f = s.field.clone();
                Box::new(move |t, q| vec![f(t, q[0], 0.0)])
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

fn companion_oscillator_parts() -> (RealMatrix, Vec<f64>, QEvalFn, QJacFn) {
    let a = RealMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.5, -0.5]]).unwrap();
    let b = vec![0.0, 1.0];
    let q_eval: QEvalFn = Arc::new(|_t, q| vec![q[0], q[1], q[0] * q[0] * q[0]]);
    let q_jac: QJacFn = Arc::new(|_t, q| {
        RealMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![3.0 * q[0] * q[0], 0.0],
        ])
        .unwrap()
    });
    (a, b, q_eval, q_jac)
}

/// Harmonically forced Duffing oscillator with unknown damping, stiffness
/// and cubic coefficients: `q1'' + 0.1 q1' + q1 + 0.04 q1³ = sin ωt`.
pub fn duffing(omega: f64) -> Result<StructuredPlant, PlantError> {
    let (a, b, q_eval, q_jac) = companion_oscillator_parts();
    let sigma: SigmaFn = Arc::new(move |t| (omega * t).sin());
    StructuredPlant::new("duffing", a, b, vec![0.5, 0.4, -0.04], q_eval, q_jac, sigma, omega)
}

/// The same oscillator with all unknown coefficients zero: a linear plant
/// whose periodic response has a closed resolvent form, used as an oracle.
pub fn linear_oscillator(omega: f64) -> Result<StructuredPlant, PlantError> {
    let (a, b, q_eval, q_jac) = companion_oscillator_parts();
    let sigma: SigmaFn = Arc::new(move |t| (omega * t).sin());
    StructuredPlant::new("linear_oscillator", a, b, vec![0.0, 0.0, 0.0], q_eval, q_jac, sigma, omega)
}

/// First-order benchmark `q' = −q + sin q + sin ωt + u`.
pub fn scalar_sine(omega: f64) -> Result<ScalarPlant, PlantError> {
    let f: ScalarNonlinearityFn = Arc::new(|_t, q| q.sin());
    let sigma: SigmaFn = Arc::new(move |t| (omega * t).sin());
    ScalarPlant::new("scalar_sine", -1.0, 1.0, 0.0, f, 1.0, sigma, omega)
}

/// Parameters of the two-mass cantilever model with a parametrically excited
/// nonlinear restoring force on the first mass.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BeamParams {
    pub m1: f64,
    pub m2: f64,
    /// Linear stiffness (k01_lin, k12, k02).
    pub k_lin: [f64; 3],
    /// Damping (c01, c12, c02).
    pub c: [f64; 3],
    /// Unknown coefficients (k01_nlin, k_pe1_lin, k_pe1_nlin).
    pub k_unknowns: [f64; 3],
}

/// Two-degree-of-freedom beam model: cubic and parametrically excited
/// stiffness terms on the first mass are the unknowns; σ ≡ 0.
pub fn beam_2dof(p: &BeamParams, omega_pe: f64) -> Result<StructuredPlant, PlantError> {
    if !(p.m1 > 0.0) || !(p.m2 > 0.0) {
        return Err(PlantError::BadParam(format!("masses must be > 0, got {}, {}", p.m1, p.m2)));
    }
    let [k01, k12, k02] = p.k_lin;
    let [c01, c12, c02] = p.c;
    let a = RealMatrix::from_rows(&[
        vec![0.0, 1.0, 0.0, 0.0],
        vec![-(k01 + k12) / p.m1, -(c01 + c12) / p.m1, k12 / p.m1, c12 / p.m1],
        vec![0.0, 0.0, 0.0, 1.0],
        vec![k12 / p.m2, c12 / p.m2, -(k02 + k12) / p.m2, -(c02 + c12) / p.m2],
    ])
    .map_err(PlantError::from)?;
    let b = vec![0.0, 1.0, 0.0, 0.0];
    let theta: Vec<f64> = p.k_unknowns.iter().map(|k| -k / p.m1).collect();
    let q_eval: QEvalFn = Arc::new(move |t, q| {
        let c = (omega_pe * t).cos();
        let q1c = q[0] * q[0] * q[0];
        vec![q1c, q[0] * c, q1c * c]
    });
    let q_jac: QJacFn = Arc::new(move |t, q| {
        let c = (omega_pe * t).cos();
        let dq1c = 3.0 * q[0] * q[0];
        RealMatrix::from_rows(&[
            vec![dq1c, 0.0, 0.0, 0.0],
            vec![c, 0.0, 0.0, 0.0],
            vec![dq1c * c, 0.0, 0.0, 0.0],
        ])
        .unwrap()
    });
    let sigma: SigmaFn = Arc::new(|_t| 0.0);
    StructuredPlant::new("beam_2dof", a, b, theta, q_eval, q_jac, sigma, omega_pe)
}

// ---------------------------------------------------------------------------
// Disturbances
// ---------------------------------------------------------------------------

fn unit_direction(b: &[f64]) -> Vec<f64> {
    let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    b.iter().map(|v| v / norm).collect()
}

/// `h(t) = h_b cos(2ωt) · b̂`: period-T disturbance along the input direction.
pub fn periodic_disturbance(h_b: f64, omega: f64, b: &[f64]) -> Disturbance {
    let dir = unit_direction(b);
    let h: DisturbanceFn = Arc::new(move |t, _q| {
        let s = h_b * (2.0 * omega * t).cos();
        dir.iter().map(|d| d * s).collect()
    });
    Disturbance { h, h_b, periodic: true }
}

/// `h(t) = h_b sin(√2 t) · b̂`: bounded but incommensurate with the forcing.
pub fn quasiperiodic_disturbance(h_b: f64, b: &[f64]) -> Disturbance {
    let dir = unit_direction(b);
    let h: DisturbanceFn = Arc::new(move |t, _q| {
        let s = h_b * (std::f64::consts::SQRT_2 * t).sin();
        dir.iter().map(|d| d * s).collect()
    });
    Disturbance { h, h_b, periodic: false }
}

/// Attach a bounded disturbance; the declared bound is spot-checked.
pub fn with_disturbance(
    plant: &StructuredPlant,
    d: Disturbance,
) -> Result<StructuredPlant, PlantError> {
    let n = plant.dim();
    let t1 = plant.period();
    let comps = probe_stream(0xbeef_0451, BOUND_PROBES * (n + 1));
    for i in 0..BOUND_PROBES {
        let t = comps[i * (n + 1)] * 4.0 * t1;
        let q: Vec<f64> = (0..n).map(|j| 4.0 * comps[i * (n + 1) + 1 + j] - 2.0).collect();
        let h = (d.h)(t, &q);
        if h.len() != n {
            return Err(PlantError::Dimension(format!(
                "disturbance returns {} components for state dimension {}",
                h.len(),
                n
            )));
        }
        let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > d.h_b + 1e-12 {
            return Err(PlantError::BoundViolated { what: "disturbance h", found: norm, bound: d.h_b });
        }
    }
    let mut out = plant.clone();
    out.disturbance = Some(d);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Ground-truth diagnostics
// ---------------------------------------------------------------------------

/// Residual forcing left when the plant is driven along `r` open-loop:
/// the periodic gap between `r` and a true periodic orbit.
pub struct TrueForcing {
    g: Box<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    pub max_norm: f64,
    pub is_zero: bool,
}

impl TrueForcing {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        (self.g)(t)
    }
}

/// `g(t) = −r'(t) + A r(t) + b (θᵀ Q(t,r) + σ(t))`, using the sealed θ
/// (counted access). `g ≡ 0` exactly when `r` is a periodic orbit.
pub fn true_forcing_g(
    plant: &StructuredPlant,
    r: &VectorFourierSeries,
) -> Result<TrueForcing, PlantError> {
    if (r.omega() - plant.omega).abs() > 1e-12 * plant.omega {
        return Err(PlantError::PeriodMismatch { got: r.omega(), want: plant.omega });
    }
    if r.dim() != plant.dim() {
        return Err(PlantError::Dimension(format!(
            "reference has {} components, plant state has {}",
            r.dim(),
            plant.dim()
        )));
    }
    let theta = plant.truth.reveal();
    let a = plant.a.clone();
    let b = plant.b.clone();
    let q_eval = plant.q_eval.clone();
    let sigma = plant.sigma.clone();
    let r = r.clone();
    let g = Box::new(move |t: f64| {
        let rv = r.eval(t);
        let rdot = r.eval_derivative(t);
        let qv = q_eval(t, &rv);
        let mut drive = sigma(t);
        for (th, qi) in theta.iter().zip(&qv) {
            drive += th * qi;
        }
        let mut out = a.matvec(&rv);
        for i in 0..out.len() {
            out[i] += b[i] * drive - rdot[i];
        }
        out
    });
    let t1 = 2.0 * std::f64::consts::PI / plant.omega;
    let mut max_norm = 0.0f64;
    for j in 0..FORCING_ZERO_POINTS {
        let gv = g(t1 * j as f64 / FORCING_ZERO_POINTS as f64);
        max_norm = max_norm.max(gv.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    Ok(TrueForcing { g, max_norm, is_zero: max_norm < FORCING_ZERO_TOL })
}

/// Scalar residual forcing along `q = r`:
/// `g(t) = (a + b k) r + b (f(t,r) + σ(t)) − r'(t)` with the sealed k.
pub struct ScalarTrueForcing {
    g: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub max_abs: f64,
    pub is_zero: bool,
}

impl ScalarTrueForcing {
    pub fn eval(&self, t: f64) -> f64 {
        (self.g)(t)
    }
}

pub fn scalar_true_forcing_g(
    plant: &ScalarPlant,
    r: &FourierSeries,
) -> Result<ScalarTrueForcing, PlantError> {
    if (r.omega - plant.omega).abs() > 1e-12 * plant.omega {
        return Err(PlantError::PeriodMismatch { got: r.omega, want: plant.omega });
    }
    let k = plant.truth.reveal()[0];
    let a = plant.a;
    let b_s = plant.b_s;
    let f = plant.f.clone();
    let sigma = plant.sigma.clone();
    let r = r.clone();
    let g = Box::new(move |t: f64| {
        let rv = r.eval(t);
        (a + b_s * k) * rv + b_s * (f(t, rv) + sigma(t)) - r.eval_derivative(t)
    });
    let t1 = plant.period();
    let mut max_abs = 0.0f64;
    for j in 0..FORCING_ZERO_POINTS {
        max_abs = max_abs.max(g(t1 * j as f64 / FORCING_ZERO_POINTS as f64).abs());
    }
    Ok(ScalarTrueForcing { g, max_abs, is_zero: max_abs < FORCING_ZERO_TOL })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate, sample_period, IntegratorConfig};
    use crate::signal::{dft_truncate, synthesize_reference, steady_linear_response};

    #[test]
    fn duffing_catalog_matches_advertised_parameters() {
        let p = duffing(1.0).unwrap();
        assert_eq!(p.a[(0, 0)], 0.0);
        assert_eq!(p.a[(0, 1)], 1.0);
        assert_eq!(p.a[(1, 0)], -1.5);
        assert_eq!(p.a[(1, 1)], -0.5);
        assert_eq!(p.b, vec![0.0, 1.0]);
        let theta = p.ground_truth().reveal();
        assert_eq!(theta, vec![0.5, 0.4, -0.04]);
        let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 0.64156).abs() < 1e-5);
        assert_eq!(p.ground_truth().access_count(), 1);
    }

    #[test]
    fn field_vanishes_at_origin_at_t0() {
        let p = duffing(1.0).unwrap();
        if let PlantView::Structured(v) = p.view() {
            let dq = (v.field)(0.0, &[0.0, 0.0], 0.0);
            assert_eq!(dq, vec![0.0, 0.0]);
        } else {
            panic!("expected structured view");
        }
        let s = scalar_sine(1.0).unwrap();
        if let PlantView::Scalar(v) = s.view() {
            assert_eq!((v.field)(0.0, 0.0, 0.0), 0.0);
        } else {
            panic!("expected scalar view");
        }
    }

    #[test]
    fn trap_fires_on_diagnostic_access_but_not_on_simulation() {
        let p = duffing(1.0).unwrap();
        p.ground_truth().arm_trap();
        let view = p.view();
        if let PlantView::Structured(v) = &view {
            let _ = (v.field)(0.3, &[0.5, -0.2], 0.1);
        }
        assert_eq!(p.ground_truth().access_count(), 0);
        let err =
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| p.ground_truth().reveal()));
        assert!(err.is_err());
        p.ground_truth().disarm_trap();
        assert_eq!(p.ground_truth().reveal().len(), 3);
    }

    #[test]
    fn nonperiodic_sigma_is_rejected() {
        let (a, b, q_eval, q_jac) = companion_oscillator_parts();
        let sigma: SigmaFn = Arc::new(|t| 0.01 * t);
        let err = StructuredPlant::new("drifting", a, b, vec![0.0; 3], q_eval, q_jac, sigma, 1.0);
        assert!(matches!(err, Err(PlantError::NotPeriodic { what: "sigma", .. })));
    }

    #[test]
    fn scalar_bound_violation_is_rejected() {
        let f: ScalarNonlinearityFn = Arc::new(|_t, q| 2.0 * q.sin());
        let sigma: SigmaFn = Arc::new(|t| t.sin());
        let err = ScalarPlant::new("loud", -1.0, 1.0, 0.0, f, 1.0, sigma, 1.0);
        assert!(matches!(err, Err(PlantError::BoundViolated { what: "f", .. })));
    }

    #[test]
    fn open_loop_duffing_settles_onto_cataloged_harmonics() {
        // Documented periodic response at unit forcing frequency:
        // q1: -0.9928 cos t + 2.9876 sin t + 0.0336 cos 3t - 0.0255 sin 3t
        //     - 0.0005 cos 5t + 0.00002 sin 5t, q2 its derivative.
        let p = duffing(1.0).unwrap();
        let view = p.view();
        let t1 = p.period();
        let cfg = IntegratorConfig::default();
        let mut field = view.open_loop_field();
        let mut state = vec![0.0, 0.0];
        let mut t = 0.0;
        let mut prev: Option<Vec<Vec<f64>>> = None;
        let mut settled = false;
        for _ in 0..200 {
            let (_times, samples, terminal) =
                sample_period(&mut *field, t, &state, t1, 32, &cfg).unwrap();
            if let Some(p) = &prev {
                let mut delta = 0.0f64;
                let mut scale = 0.0f64;
                for (row_new, row_old) in samples.iter().zip(p) {
                    for (a, b) in row_new.iter().zip(row_old) {
                        delta = delta.max((a - b).abs());
                        scale = scale.max(a.abs());
                    }
                }
                if delta < 1e-8 * scale.max(1.0) {
                    settled = true;
                }
            }
            prev = Some(samples);
            state = terminal;
            t += t1;
            if settled {
                break;
            }
        }
        assert!(settled, "open-loop duffing did not settle in 200 periods");

        let (_times, samples, _) = sample_period(&mut *field, t, &state, t1, 1024, &cfg).unwrap();
        let q1: Vec<f64> = samples.iter().map(|s| s[0]).collect();
        let q2: Vec<f64> = samples.iter().map(|s| s[1]).collect();
        let f1 = dft_truncate(&q1, 5, 1.0, t).unwrap();
        let f2 = dft_truncate(&q2, 5, 1.0, t).unwrap();
        let expect_a1 = [-0.9928, 0.0, 0.0336, 0.0, -0.0005];
        let expect_b1 = [2.9876, 0.0, -0.0255, 0.0, 0.00002];
        let expect_a2 = [2.9876, 0.0, -0.0765, 0.0, 0.0001];
        let expect_b2 = [0.9928, 0.0, -0.1008, 0.0, 0.0025];
        for k in 0..5 {
            assert!((f1.a[k] - expect_a1[k]).abs() < 2e-3, "q1 a{} = {}", k + 1, f1.a[k]);
            assert!((f1.b[k] - expect_b1[k]).abs() < 2e-3, "q1 b{} = {}", k + 1, f1.b[k]);
            assert!((f2.a[k] - expect_a2[k]).abs() < 2e-3, "q2 a{} = {}", k + 1, f2.a[k]);
            assert!((f2.b[k] - expect_b2[k]).abs() < 2e-3, "q2 b{} = {}", k + 1, f2.b[k]);
        }
        assert!(f1.a0.abs() < 1e-6);
    }

    #[test]
    fn open_loop_scalar_settles_onto_cataloged_harmonics() {
        // Documented response: -0.9849 cos t + 0.1160 sin t + 0.0053 cos 3t
        // + 0.0115 sin 3t + 0.0002 cos 5t - 0.0003 sin 5t.
        let p = scalar_sine(1.0).unwrap();
        let view = p.view();
        let t1 = p.period();
        let cfg = IntegratorConfig::default();
        let mut field = view.open_loop_field();
        let traj = integrate(&mut *field, 0.0, &[0.0], 40.0 * t1, &cfg).unwrap();
        let start = traj.t_end() - t1;
        let samples: Vec<f64> =
            (0..256).map(|j| traj.eval(start + t1 * j as f64 / 256.0)[0]).collect();
        let f = dft_truncate(&samples, 5, 1.0, start).unwrap();
        let expect_a = [-0.9849, 0.0, 0.0053, 0.0, 0.0002];
        let expect_b = [0.1160, 0.0, 0.0115, 0.0, -0.0003];
        for k in 0..5 {
            assert!((f.a[k] - expect_a[k]).abs() < 2e-3, "a{} = {}", k + 1, f.a[k]);
            assert!((f.b[k] - expect_b[k]).abs() < 2e-3, "b{} = {}", k + 1, f.b[k]);
        }
    }

    #[test]
    fn scalar_forcing_matches_closed_form() {
        let p = scalar_sine(1.0).unwrap();
        let r = FourierSeries::new(1.0, 0.0, vec![1.0], vec![1.0]).unwrap();
        let g = scalar_true_forcing_g(&p, &r).unwrap();
        for j in 0..64 {
            let t = 2.0 * std::f64::consts::PI * j as f64 / 64.0;
            let want = (t.cos() + t.sin()).sin() + t.sin() - 2.0 * t.cos();
            assert!((g.eval(t) - want).abs() < 1e-12);
        }
        assert!(!g.is_zero);
    }

    #[test]
    fn true_forcing_stays_parallel_to_input_direction() {
        let p = duffing(1.3).unwrap();
        let v = FourierSeries::new(1.3, 0.2, vec![0.8, -0.1, 0.3], vec![0.4, 0.0, -0.2]).unwrap();
        let r = synthesize_reference(&v, &p.a, &p.b).unwrap();
        let g = true_forcing_g(&p, &r).unwrap();
        for j in 0..64 {
            let t = p.period() * j as f64 / 64.0;
            let gv = g.eval(t);
            // b = (0,1): component 0 is orthogonal to the input direction.
            assert!(gv[0].abs() < 1e-10, "off-axis forcing {} at t={}", gv[0], t);
        }
    }

    #[test]
    fn exact_linear_orbit_gives_zero_forcing() {
        let p = linear_oscillator(1.2).unwrap();
        let sigma = p.sigma.clone();
        let forcing = move |t: f64| vec![0.0, sigma(t)];
        let r = steady_linear_response(&p.a, &forcing, 1.2, 5).unwrap();
        let g = true_forcing_g(&p, &r).unwrap();
        assert!(g.is_zero, "max |g| = {}", g.max_norm);
    }

    #[test]
    fn beam_catalog_assembles_expected_structure() {
        let params = BeamParams {
            m1: 1.0,
            m2: 0.8,
            k_lin: [2.0, 1.0, 1.5],
            c: [0.3, 0.1, 0.2],
            k_unknowns: [0.5, 0.2, 0.1],
        };
        let p = beam_2dof(&params, 2.0).unwrap();
        assert_eq!(p.dim(), 4);
        assert_eq!(p.m, 3);
        assert_eq!(p.a[(1, 0)], -3.0);
        assert_eq!(p.a[(1, 2)], 1.0);
        assert_eq!(p.a[(3, 0)], 1.25);
        let theta = p.ground_truth().reveal();
        assert_eq!(theta, vec![-0.5, -0.2, -0.1]);

        let zero = BeamParams { k_unknowns: [0.0; 3], ..params.clone() };
        let p0 = beam_2dof(&zero, 2.0).unwrap();
        assert_eq!(p0.ground_truth().reveal(), vec![0.0, 0.0, 0.0]);

        let undamped = BeamParams { c: [0.0; 3], ..params };
        assert!(beam_2dof(&undamped, 2.0).is_err());
    }

    #[test]
    fn disturbance_bound_and_identity_cases() {
        let p = duffing(1.0).unwrap();
        let zero = Disturbance { h: Arc::new(|_t, _q| vec![0.0, 0.0]), h_b: 0.0, periodic: true };
        let pz = with_disturbance(&p, zero).unwrap();
        let cfg = IntegratorConfig::default();
        let mut f0 = p.view().open_loop_field();
        let mut fz = pz.view().open_loop_field();
        let a = integrate(&mut *f0, 0.0, &[0.1, 0.0], 5.0, &cfg).unwrap();
        let b = integrate(&mut *fz, 0.0, &[0.1, 0.0], 5.0, &cfg).unwrap();
        let fa = a.final_state();
        let fb = b.final_state();
        assert_eq!(fa, fb);

        let claimed = Disturbance {
            h: Arc::new(|t: f64, _q: &[f64]| vec![0.0, 0.5 * (t * 1.4).cos()]),
            h_b: 0.1,
            periodic: false,
        };
        assert!(matches!(
            with_disturbance(&p, claimed),
            Err(PlantError::BoundViolated { what: "disturbance h", .. })
        ));

        let ok = periodic_disturbance(0.1, 1.0, &p.b);
        let pd = with_disturbance(&p, ok).unwrap();
        assert!(pd.disturbance.as_ref().unwrap().periodic);
        let quasi = quasiperiodic_disturbance(0.1, &p.b);
        assert!(!quasi.periodic);
        let h = (quasi.h)(0.7, &[0.0, 0.0]);
        assert!((h[0].powi(2) + h[1].powi(2)).sqrt() <= 0.1 + 1e-15);
    }
}
