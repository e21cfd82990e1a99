//! Adaptive Dormand-Prince 5(4) integration with dense output.
//!
//! One explicit embedded Runge-Kutta pair drives every simulation in this
//! crate. The stepper records a 4th-order interpolant per accepted step so
//! periodic sampling and monodromy integration can re-evaluate states at
//! arbitrary times without re-solving.

use crate::numkit::RealMatrix;
use thiserror::Error;

/// Safety factor applied to every step-size proposal.
const SAFETY: f64 = 0.9;
/// Step-size change clamp per accepted step.
const SCALE_MIN: f64 = 0.2;
const SCALE_MAX: f64 = 5.0;
/// PI controller exponents (order 5 error estimate).
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t:.6e}: stiffness/blowup suspected")]
    StepSizeUnderflow { t: f64 },
    #[error("state or derivative became non-finite at t = {t:.6e}: stiffness/blowup suspected")]
    NonFinite { t: f64 },
    #[error("exceeded max_steps = {max_steps} before reaching t = {t_end:.6e}")]
    MaxSteps { max_steps: usize, t_end: f64 },
    #[error("invalid integration setup: {0}")]
    BadSetup(String),
}

/// Tolerances and step bounds for the adaptive stepper.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: 1e-3,
            h_min: 1e-13,
            h_max: f64::INFINITY,
            max_steps: 5_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), OdeError> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(OdeError::BadSetup("tolerances must be positive".into()));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(OdeError::BadSetup(
                "require 0 < h_min <= h_init <= h_max".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(OdeError::BadSetup("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Dense-output coefficients for one accepted step.
#[derive(Debug, Clone)]
struct DenseSegment {
    t0: f64,
    h: f64,
    /// Five stacked length-n coefficient vectors of the quartic interpolant.
    rcont: Vec<f64>,
}

/// Integration result: states at accepted steps plus a piecewise interpolant.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    segments: Vec<DenseSegment>,
    dim: usize,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    pub fn n_steps(&self) -> usize {
        self.segments.len()
    }

    /// Evaluate the dense interpolant; `t` is clamped to the stored span.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.dim;
        if self.segments.is_empty() {
            return self.states[0].clone();
        }
        let t = t.clamp(self.t_start(), self.t_end());
        // Binary search for the segment containing t.
        let mut lo = 0usize;
        let mut hi = self.segments.len() - 1;
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.segments[mid].t0 <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let seg = &self.segments[lo];
        let theta = ((t - seg.t0) / seg.h).clamp(0.0, 1.0);
        let c = |k: usize, i: usize| seg.rcont[k * n + i];
        (0..n)
            .map(|i| {
                c(0, i)
                    + theta
                        * (c(1, i)
                            + (1.0 - theta)
                                * (c(2, i) + theta * (c(3, i) + (1.0 - theta) * c(4, i))))
            })
            .collect()
    }

    /// Write `t,y0,y1,...` rows at the accepted steps, full double precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 0..self.dim {
            out.push_str(&format!(",y{i}"));
        }
        out.push('\n');
        for (t, y) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t:.16e}"));
            for v in y {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Dormand-Prince coefficients.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// 5th-order weights (identical to the last tableau row, FSAL).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// Error weights b5 - b4.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Dense-output weights.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// One Dormand-Prince step of size `h` from `(t, y)`.
///
/// Returns the 5th-order solution, the embedded error estimate and the seven
/// stage derivatives (k7 doubles as the FSAL derivative at the step end).
pub fn rk_step(
    field: &mut dyn FnMut(f64, &[f64]) -> Vec<f64>,
    t: f64,
    y: &[f64],
    h: f64,
    k1: Option<&[f64]>,
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(match k1 {
        Some(v) => v.to_vec(),
        None => field(t, y),
    });
    for s in 1..7 {
        let mut ys = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = A[s][j];
            if a == 0.0 {
                continue;
            }
            for i in 0..n {
                ys[i] += h * a * kj[i];
            }
        }
        k.push(field(t + C[s] * h, &ys));
    }
    let mut y5 = y.to_vec();
    let mut err = vec![0.0; n];
    for (j, kj) in k.iter().enumerate() {
        for i in 0..n {
            y5[i] += h * B5[j] * kj[i];
            err[i] += h * E[j] * kj[i];
        }
    }
    (y5, err, k)
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = err.len();
    let mut acc = 0.0;
    for i in 0..n {
        let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / n as f64).sqrt()
}

fn dense_coefficients(y0: &[f64], y1: &[f64], h: f64, k: &[Vec<f64>]) -> Vec<f64> {
    let n = y0.len();
    let mut rcont = vec![0.0; 5 * n];
    for i in 0..n {
        let dy = y1[i] - y0[i];
        let bspl = h * k[0][i] - dy;
        rcont[i] = y0[i];
        rcont[n + i] = dy;
        rcont[2 * n + i] = bspl;
        rcont[3 * n + i] = dy - h * k[6][i] - bspl;
        let mut acc = 0.0;
        for (j, kj) in k.iter().enumerate() {
            acc += D[j] * kj[i];
        }
        rcont[4 * n + i] = h * acc;
    }
    rcont
}

/// Integrate `field` from `(t0, y0)` to `t1`, recording every accepted step.
pub fn integrate(
    field: &mut dyn FnMut(f64, &[f64]) -> Vec<f64>,
    t0: f64,
    y0: &[f64],
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, OdeError> {
    cfg.validate()?;
    if !(t1 > t0) {
        return Err(OdeError::BadSetup("require t1 > t0".into()));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t: t0 });
    }
    let n = y0.len();
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![y0.to_vec()],
        segments: Vec::new(),
        dim: n,
    };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = cfg.h_init.min(cfg.h_max).min(t1 - t0);
    let mut err_prev: Option<f64> = None;
    let mut k1: Option<Vec<f64>> = None;
    let mut steps = 0usize;
    while t < t1 {
        if steps >= cfg.max_steps {
            return Err(OdeError::MaxSteps { max_steps: cfg.max_steps, t_end: t1 });
        }
        steps += 1;
        let last = t + h >= t1 - 1e-14 * t1.abs().max(1.0);
        if last {
            h = t1 - t;
        }
        let (y5, err_vec, k) = rk_step(field, t, &y, h, k1.as_deref());
        if y5.iter().any(|v| !v.is_finite()) || err_vec.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite { t });
        }
        let err = error_norm(&err_vec, &y, &y5, cfg.rtol, cfg.atol);
        if err <= 1.0 {
            let rcont = dense_coefficients(&y, &y5, h, &k);
            traj.segments.push(DenseSegment { t0: t, h, rcont });
            t = if last { t1 } else { t + h };
            k1 = Some(k[6].clone());
            y = y5;
            traj.times.push(t);
            traj.states.push(y.clone());
            // PI controller: combine the current and previous error.
            let e = err.max(1e-16);
            let scale = match err_prev {
                Some(ep) => SAFETY * e.powf(-PI_ALPHA) * ep.max(1e-16).powf(PI_BETA),
                None => SAFETY * e.powf(-0.2),
            };
            err_prev = Some(e);
            h = (h * scale.clamp(SCALE_MIN, SCALE_MAX)).min(cfg.h_max);
            if !last {
                h = h.min(t1 - t);
            }
            h = h.max(cfg.h_min);
        } else {
            // Rejected: shrink without PI memory, retry from the same state.
            let scale = (SAFETY * err.powf(-0.2)).clamp(SCALE_MIN, 1.0);
            let h_new = h * scale;
            if h_new <= cfg.h_min * (1.0 + 1e-12) {
                return Err(OdeError::StepSizeUnderflow { t });
            }
            h = h_new;
            k1 = None;
        }
    }
    Ok(traj)
}

/// Integrate one period from `(t_start, y_start)` and sample the dense output
/// at `n_samples` uniform times `t_start + j T / n_samples`.
///
/// Returns the sample times, sampled states and the terminal state at
/// `t_start + T`.
pub fn sample_period(
    field: &mut dyn FnMut(f64, &[f64]) -> Vec<f64>,
    t_start: f64,
    y_start: &[f64],
    period: f64,
    n_samples: usize,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>), OdeError> {
    if n_samples == 0 || !(period > 0.0) {
        return Err(OdeError::BadSetup(
            "sample_period needs n_samples > 0 and period > 0".into(),
        ));
    }
    let traj = integrate(field, t_start, y_start, t_start + period, cfg)?;
    let mut times = Vec::with_capacity(n_samples);
    let mut states = Vec::with_capacity(n_samples);
    for j in 0..n_samples {
        let tj = t_start + period * j as f64 / n_samples as f64;
        times.push(tj);
        states.push(traj.eval(tj));
    }
    Ok((times, states, traj.final_state().to_vec()))
}

/// Fundamental matrix solution of the variational equation along an orbit.
///
/// Integrates `v' = J(t, orbit(t)) v` column-wise over `[t0, t0 + period]`
/// with the orbit supplied as a stored trajectory, and returns the matrix
/// whose columns are the propagated basis vectors.
pub fn monodromy(
    orbit: &Trajectory,
    jac: &dyn Fn(f64, &[f64]) -> RealMatrix,
    period: f64,
    cfg: &IntegratorConfig,
) -> Result<RealMatrix, OdeError> {
    let n = orbit.dim();
    let t0 = orbit.t_start();
    if orbit.t_end() < t0 + period - 1e-9 {
        return Err(OdeError::BadSetup(
            "orbit trajectory does not span the requested period".into(),
        ));
    }
    let mut phi = RealMatrix::zeros(n, n);
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let mut field = |t: f64, v: &[f64]| jac(t, &orbit.eval(t)).matvec(v);
        let traj = integrate(&mut field, t0, &e, t0 + period, cfg)?;
        let last = traj.final_state();
        for row in 0..n {
            phi[(row, col)] = last[row];
        }
    }
    Ok(phi)
}
