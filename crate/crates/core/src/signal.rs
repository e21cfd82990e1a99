//! Truncated Fourier series, periodic sampling and reference synthesis.
//!
//! A scalar generator signal `v` is turned into an admissible vector
//! reference `r` through the linear response `r' = A r + b v`, solved one
//! harmonic at a time with the complex resolvent `(i k w I - A)^{-1} b`.
//! The same per-harmonic solve powers steady-state response predictions and
//! the persistence-of-excitation diagnostics.

use crate::numkit::{self, eig_sym, NumError, RealMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Grid size used when checking a synthesized reference against its ODE.
const SYNTHESIS_CHECK_POINTS: usize = 64;
/// Allowed pointwise residual of `r' - A r - b v` after synthesis.
const SYNTHESIS_RESIDUAL_TOL: f64 = 1e-10;
/// Simpson sample count for one excitation Gram window.
pub const PE_GRAM_SAMPLES: usize = 1025;
/// Minimum admissible Simpson sample count.
const PE_GRAM_MIN_SAMPLES: usize = 129;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("fourier series needs omega > 0, got {0}")]
    BadOmega(f64),
    #[error("fourier coefficient arrays a and b must have equal length")]
    RaggedCoefficients,
    #[error("coefficient is not finite")]
    NonFinite,
    #[error("aliasing risk: {n} samples cannot resolve {k} harmonics (need >= {min})")]
    Aliasing { n: usize, k: usize, min: usize },
    #[error("resolvent: singular at harmonic {k}")]
    SingularResolvent { k: usize },
    #[error("synthesized reference violates its defining ODE (residual {residual:.3e})")]
    SynthesisResidual { residual: f64 },
    #[error("pe_gram needs an odd sample count >= {min}, got {n}")]
    BadGramSampling { n: usize, min: usize },
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Real truncated Fourier series
/// `f(t) = a0 + sum_k a_k cos(k w t) + b_k sin(k w t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    pub omega: f64,
    pub a0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl FourierSeries {
    pub fn new(omega: f64, a0: f64, a: Vec<f64>, b: Vec<f64>) -> Result<Self, SignalError> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(SignalError::BadOmega(omega));
        }
        if a.len() != b.len() {
            return Err(SignalError::RaggedCoefficients);
        }
        if !a0.is_finite() || a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite);
        }
        Ok(Self { omega, a0, a, b })
    }

    pub fn zero(omega: f64, k: usize) -> Self {
        Self { omega, a0: 0.0, a: vec![0.0; k], b: vec![0.0; k] }
    }

    pub fn harmonics(&self) -> usize {
        self.a.len()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut acc = self.a0;
        for k in 0..self.a.len() {
            let arg = (k + 1) as f64 * self.omega * t;
            acc += self.a[k] * arg.cos() + self.b[k] * arg.sin();
        }
        acc
    }

    pub fn eval_derivative(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.a.len() {
            let kw = (k + 1) as f64 * self.omega;
            let arg = kw * t;
            acc += kw * (-self.a[k] * arg.sin() + self.b[k] * arg.cos());
        }
        acc
    }

    /// Complex coefficient `a_k - i b_k` of harmonic `k >= 1`.
    pub fn complex_coefficient(&self, k: usize) -> Complex64 {
        Complex64::new(self.a[k - 1], -self.b[k - 1])
    }

    /// Euclidean norm of the full coefficient vector `(a0, a, b)`.
    pub fn coefficient_norm(&self) -> f64 {
        let mut acc = self.a0 * self.a0;
        for v in self.a.iter().chain(&self.b) {
            acc += v * v;
        }
        acc.sqrt()
    }

    /// Max |f(t)| over a uniform 1024-point grid of one period.
    pub fn amplitude_linf(&self) -> f64 {
        let n = 1024;
        let t1 = self.period();
        (0..n)
            .map(|j| self.eval(t1 * j as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// Component-wise truncated Fourier representation of a vector signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFourierSeries {
    pub components: Vec<FourierSeries>,
}

impl VectorFourierSeries {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn omega(&self) -> f64 {
        self.components[0].omega
    }

    pub fn period(&self) -> f64 {
        self.components[0].period()
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(t)).collect()
    }

    pub fn eval_derivative(&self, t: f64) -> Vec<f64> {
        self.components.iter().map(|c| c.eval_derivative(t)).collect()
    }
}

/// Project one period of uniform samples onto the first `k` harmonics.
///
/// `samples[j]` is the signal at `t_start + j T / N`; the returned series is
/// phased in absolute time, so sampling windows that start at a whole number
/// of periods agree with a window at the origin.
pub fn dft_truncate(
    samples: &[f64],
    k: usize,
    omega: f64,
    t_start: f64,
) -> Result<FourierSeries, SignalError> {
    let n = samples.len();
    if k == 0 || n < 4 * k + 4 {
        return Err(SignalError::Aliasing { n, k, min: 4 * k + 4 });
    }
    if !(omega > 0.0) {
        return Err(SignalError::BadOmega(omega));
    }
    let period = 2.0 * std::f64::consts::PI / omega;
    let a0 = samples.iter().sum::<f64>() / n as f64;
    let mut a = vec![0.0; k];
    let mut b = vec![0.0; k];
    for kk in 1..=k {
        let mut ca = 0.0;
        let mut cb = 0.0;
        for (j, u) in samples.iter().enumerate() {
            let t = t_start + period * j as f64 / n as f64;
            let arg = kk as f64 * omega * t;
            ca += u * arg.cos();
            cb += u * arg.sin();
        }
        a[kk - 1] = 2.0 * ca / n as f64;
        b[kk - 1] = 2.0 * cb / n as f64;
    }
    FourierSeries::new(omega, a0, a, b)
}

/// Build the admissible reference `r` generated by the scalar series `v`
/// through `r' = A r + b v`, one harmonic at a time.
pub fn synthesize_reference(
    v: &FourierSeries,
    a: &RealMatrix,
    b: &[f64],
) -> Result<VectorFourierSeries, SignalError> {
    let n = a.nrows();
    assert_eq!(n, b.len(), "b length must match A");
    let kmax = v.harmonics();
    let omega = v.omega;
    let mut comp_a = vec![vec![0.0; kmax]; n];
    let mut comp_b = vec![vec![0.0; kmax]; n];
    let mut comp_a0 = vec![0.0; n];
    for k in 0..=kmax {
        let vk = if k == 0 {
            Complex64::new(v.a0, 0.0)
        } else {
            v.complex_coefficient(k)
        };
        // Solve (i k w I - A) x = b even for vanishing coefficients: a
        // singular resolvent must surface regardless of the generator.
        let mut m = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut z = Complex64::new(-a[(i, j)], 0.0);
                if i == j {
                    z += Complex64::new(0.0, k as f64 * omega);
                }
                m.push(z);
            }
        }
        let rhs: Vec<Complex64> = b.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        let x = numkit::solve_complex(n, &m, &rhs)
            .map_err(|_| SignalError::SingularResolvent { k })?;
        for i in 0..n {
            let ri = x[i] * vk;
            if k == 0 {
                comp_a0[i] = ri.re;
            } else {
                comp_a[i][k - 1] = ri.re;
                comp_b[i][k - 1] = -ri.im;
            }
        }
    }
    let components = (0..n)
        .map(|i| FourierSeries::new(omega, comp_a0[i], comp_a[i].clone(), comp_b[i].clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let r = VectorFourierSeries { components };
    // The defining ODE must hold identically; spot-check a uniform grid.
    let period = r.period();
    let mut worst = 0.0f64;
    for j in 0..SYNTHESIS_CHECK_POINTS {
        let t = period * j as f64 / SYNTHESIS_CHECK_POINTS as f64;
        let rdot = r.eval_derivative(t);
        let rv = r.eval(t);
        let want = a.matvec(&rv);
        let vt = v.eval(t);
        for i in 0..n {
            worst = worst.max((rdot[i] - want[i] - b[i] * vt).abs());
        }
    }
    let scale = v.coefficient_norm().max(1.0);
    if worst > SYNTHESIS_RESIDUAL_TOL * scale {
        return Err(SignalError::SynthesisResidual { residual: worst });
    }
    Ok(r)
}

/// Recover the scalar generator of an admissible reference:
/// the least-squares projection `v_k = b^T (i k w I - A) r_k / (b^T b)`.
pub fn extract_generator(
    r: &VectorFourierSeries,
    a: &RealMatrix,
    b: &[f64],
) -> Result<FourierSeries, SignalError> {
    let n = a.nrows();
    assert_eq!(n, b.len(), "b length must match A");
    assert_eq!(n, r.dim(), "reference dimension must match A");
    let btb: f64 = b.iter().map(|v| v * v).sum();
    let omega = r.omega();
    let kmax = r.components[0].harmonics();
    let mut va = vec![0.0; kmax];
    let mut vb = vec![0.0; kmax];
    let mut v0 = 0.0;
    for k in 0..=kmax {
        let rk: Vec<Complex64> = (0..n)
            .map(|i| {
                if k == 0 {
                    Complex64::new(r.components[i].a0, 0.0)
                } else {
                    r.components[i].complex_coefficient(k)
                }
            })
            .collect();
        // (i k w I - A) r_k, then project onto b.
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let mut row = Complex64::new(0.0, k as f64 * omega) * rk[i];
            for j in 0..n {
                row -= a[(i, j)] * rk[j];
            }
            acc += b[i] * row;
        }
        let vk = acc / btb;
        if k == 0 {
            v0 = vk.re;
        } else {
            va[k - 1] = vk.re;
            vb[k - 1] = -vk.im;
        }
    }
    FourierSeries::new(omega, v0, va, vb)
}

/// Steady periodic response of `x' = A x + g(t)` for Hurwitz `A`,
/// computed by projecting `g` onto `k_max` harmonics and applying the
/// per-harmonic resolvent.
pub fn steady_linear_response(
    a: &RealMatrix,
    g: &dyn Fn(f64) -> Vec<f64>,
    omega: f64,
    k_max: usize,
) -> Result<VectorFourierSeries, SignalError> {
    let n = a.nrows();
    let n_samples = (4 * k_max + 4).max(1024);
    let period = 2.0 * std::f64::consts::PI / omega;
    let mut per_component: Vec<Vec<f64>> = vec![Vec::with_capacity(n_samples); n];
    for j in 0..n_samples {
        let t = period * j as f64 / n_samples as f64;
        let gv = g(t);
        assert_eq!(gv.len(), n, "forcing dimension must match A");
        for i in 0..n {
            per_component[i].push(gv[i]);
        }
    }
    let g_series: Vec<FourierSeries> = per_component
        .iter()
        .map(|s| dft_truncate(s, k_max, omega, 0.0))
        .collect::<Result<Vec<_>, _>>()?;
    let mut comp_a0 = vec![0.0; n];
    let mut comp_a = vec![vec![0.0; k_max]; n];
    let mut comp_b = vec![vec![0.0; k_max]; n];
    for k in 0..=k_max {
        let gk: Vec<Complex64> = (0..n)
            .map(|i| {
                if k == 0 {
                    Complex64::new(g_series[i].a0, 0.0)
                } else {
                    g_series[i].complex_coefficient(k)
                }
            })
            .collect();
        let mut m = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut z = Complex64::new(-a[(i, j)], 0.0);
                if i == j {
                    z += Complex64::new(0.0, k as f64 * omega);
                }
                m.push(z);
            }
        }
        let x = numkit::solve_complex(n, &m, &gk)
            .map_err(|_| SignalError::SingularResolvent { k })?;
        for i in 0..n {
            if k == 0 {
                comp_a0[i] = x[i].re;
            } else {
                comp_a[i][k - 1] = x[i].re;
                comp_b[i][k - 1] = -x[i].im;
            }
        }
    }
    let components = (0..n)
        .map(|i| FourierSeries::new(omega, comp_a0[i], comp_a[i].clone(), comp_b[i].clone()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VectorFourierSeries { components })
}

/// Excitation Gram matrix of a vector signal over one window.
#[derive(Debug, Clone)]
pub struct PeReport {
    pub gram: RealMatrix,
    /// Smallest eigenvalue of the Gram matrix: the excitation level.
    pub alpha: f64,
    pub window_start: f64,
}

/// Composite-Simpson Gram matrix `int_t^{t+T} Q Q^T` of the signal `q_fn`.
///
/// `n_samples` must be odd (Simpson) and large enough to resolve the signal;
/// [`PE_GRAM_SAMPLES`] is the default used throughout.
pub fn pe_gram(
    q_fn: &dyn Fn(f64) -> Vec<f64>,
    window_start: f64,
    period: f64,
    n_samples: usize,
) -> Result<PeReport, SignalError> {
    if n_samples < PE_GRAM_MIN_SAMPLES || n_samples % 2 == 0 {
        return Err(SignalError::BadGramSampling { n: n_samples, min: PE_GRAM_MIN_SAMPLES });
    }
    let m = q_fn(window_start).len();
    let h = period / (n_samples - 1) as f64;
    let mut gram = RealMatrix::zeros(m, m);
    for j in 0..n_samples {
        let w = if j == 0 || j == n_samples - 1 {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let q = q_fn(window_start + h * j as f64);
        for r in 0..m {
            for c in r..m {
                gram[(r, c)] += w * q[r] * q[c];
            }
        }
    }
    for r in 0..m {
        for c in r..m {
            let v = gram[(r, c)] * h / 3.0;
            gram[(r, c)] = v;
            gram[(c, r)] = v;
        }
    }
    let alpha = eig_sym(&gram)?[0];
    Ok(PeReport { gram, alpha, window_start })
}

/// Excitation level over sliding windows `[t0 + i stride, t0 + i stride + T]`.
pub fn pe_running(
    q_fn: &dyn Fn(f64) -> Vec<f64>,
    t0: f64,
    t_end: f64,
    period: f64,
    stride: f64,
) -> Result<Vec<(f64, f64)>, SignalError> {
    let mut out = Vec::new();
    let mut start = t0;
    while start + period <= t_end + 1e-9 {
        let rep = pe_gram(q_fn, start, period, PE_GRAM_SAMPLES)?;
        out.push((start, rep.alpha));
        start += stride;
    }
    Ok(out)
}
