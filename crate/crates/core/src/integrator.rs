//! Adaptive Dormand–Prince 5(4) integration of the nonlinear equations of
//! motion, sampled on a uniform time grid through the method's continuous
//! extension.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{self, Cavity, DissipationModel, FieldState, OperatingPoint, PhysicalParams};

/// Default number of uniform samples per trajectory.
pub const DEFAULT_SAMPLES: usize = 100_000;
/// Default integration span in units of 1/κ_c.
pub const DEFAULT_SPAN_KAPPA_C: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    /// Absolute tolerance in √photon units.
    pub abs_tol: f64,
    /// Upper bound on the step size, s. `None` means span / 1000.
    pub max_step: Option<f64>,
    pub initial_state: FieldState,
    pub n_samples: usize,
    /// Integration span in units of 1/κ_c.
    pub span_kappa_c: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-8,
            abs_tol: 1.0,
            max_step: None,
            initial_state: FieldState::new(Complex64::new(1e7, 0.0), Complex64::new(1e7, 0.0)),
            n_samples: DEFAULT_SAMPLES,
            span_kappa_c: DEFAULT_SPAN_KAPPA_C,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.n_samples < 2 {
            return Err(Error::Config("need at least 2 samples".into()));
        }
        if !(self.span_kappa_c > 0.0 && self.span_kappa_c.is_finite()) {
            return Err(Error::Config("span must be positive".into()));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::Config("max_step must be positive".into()));
            }
        }
        if !self.initial_state.is_finite() {
            return Err(Error::Config("initial state must be finite".into()));
        }
        Ok(())
    }
}

/// Uniformly sampled solution of the equations of motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<FieldState>,
    /// Sampling interval, s.
    pub dt: f64,
    /// Drive strength the trajectory was produced with (0 for undriven runs).
    pub epsilon: f64,
    /// ω_c − ω_d of the rotating frame, rad/s.
    pub detuning: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&FieldState> {
        self.states.last()
    }

    pub fn is_driven(&self) -> bool {
        self.epsilon != 0.0
    }

    /// Writes `t_s,re_a1,im_a1,re_a2,im_a2` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_s,re_a1,im_a1,re_a2,im_a2")?;
        for (t, s) in self.t.iter().zip(&self.states) {
            writeln!(w, "{:e},{:e},{:e},{:e},{:e}", t, s.a1.re, s.a1.im, s.a2.re, s.a2.im)?;
        }
        Ok(())
    }
}

/// Right-hand side A(|α₁|², |α₂|²) α + ε B of the equations of motion.
pub fn rhs(params: &PhysicalParams, op: &OperatingPoint, state: &FieldState) -> FieldState {
    let eps = model::drive_strength(params, op);
    let a = model::dynamical_matrix(params, op, state);
    let d = a.mul_vec(state.as_array());
    FieldState::new(d[0] + eps, d[1])
}

/// Precomputed constants of [`rhs`] on the real embedding, for the hot loop.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    detuning: f64,
    j0: f64,
    /// 2(κ_int,i + κ_port,i + κ_c) or κ_int,i + κ_port,i + κ_c
    base_loss: [f64; 2],
    gain_in_loss: bool,
    f: Complex64,
    back_phase: Complex64,
    n_sat: f64,
    e_sat: f64,
    b_g: f64,
    eps: f64,
}

impl Kernel {
    fn new(params: &PhysicalParams, op: &OperatingPoint) -> Self {
        let (base_loss, gain_in_loss) = match params.dissipation {
            DissipationModel::DeltaGDependent => (
                [
                    2.0 * params.kappa_total(Cavity::One),
                    2.0 * params.kappa_total(Cavity::Two),
                ],
                true,
            ),
            DissipationModel::Constant => (
                [params.kappa_total(Cavity::One), params.kappa_total(Cavity::Two)],
                false,
            ),
        };
        let e_sat = params.hbar * params.omega_c * params.kappa_c;
        Kernel {
            detuning: params.omega_c - op.omega_d,
            j0: params.j0(op.delta_g_db),
            base_loss,
            gain_in_loss,
            f: model::coherent_coupling_f(params, op.phi),
            back_phase: Complex64::from_polar(1.0, -op.phi),
            n_sat: params.n_sat(),
            e_sat,
            b_g: params.b_g,
            eps: model::drive_strength(params, op),
        }
    }

    #[inline]
    fn hopping(&self, n: f64) -> f64 {
        if n <= self.n_sat {
            self.j0
        } else {
            self.j0 * (self.b_g + self.e_sat * self.n_sat) / (self.b_g + self.e_sat * n)
        }
    }

    #[inline]
    fn eval(&self, y: &[f64; 4]) -> [f64; 4] {
        let a1 = Complex64::new(y[0], y[1]);
        let a2 = Complex64::new(y[2], y[3]);
        let j1 = self.hopping(a1.norm_sqr());
        let j2 = self.hopping(a2.norm_sqr());
        let (k1, k2) = if self.gain_in_loss {
            (self.base_loss[0] - j1, self.base_loss[1] - j2)
        } else {
            (self.base_loss[0], self.base_loss[1])
        };
        let i = Complex64::i();
        let d11 = Complex64::new(-k1, -self.detuning);
        let d22 = Complex64::new(-k2, -self.detuning);
        let a12 = (-i * j2 - self.f) * self.back_phase;
        let a21 = -i * j1 - self.f;
        let d1 = d11 * a1 + a12 * a2 + self.eps;
        let d2 = a21 * a1 + d22 * a2;
        [d1.re, d1.im, d2.re, d2.im]
    }
}

/// Integrates the equations of motion from `cfg.initial_state` over
/// [0, span/κ_c] and returns `cfg.n_samples` uniform samples.
pub fn integrate(
    params: &PhysicalParams,
    op: &OperatingPoint,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let kernel = Kernel::new(params, op);
    let t_end = cfg.span_kappa_c / params.kappa_c;
    let opts = SolverOptions {
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        max_step: cfg.max_step.unwrap_or(t_end / 1000.0),
    };
    let samples = dopri5(
        |_t, y: &[f64; 4]| kernel.eval(y),
        cfg.initial_state.to_real(),
        t_end,
        cfg.n_samples,
        &opts,
    )?;
    let dt = t_end / (cfg.n_samples - 1) as f64;
    Ok(Trajectory {
        t: (0..cfg.n_samples).map(|k| k as f64 * dt).collect(),
        states: samples.into_iter().map(FieldState::from_real).collect(),
        dt,
        epsilon: kernel.eps,
        detuning: kernel.detuning,
    })
}

/// The equations of motion on the real embedding, with all constants
/// precomputed. Suitable for [`dopri5`].
pub fn real_rhs(params: &PhysicalParams, op: &OperatingPoint) -> impl Fn(&[f64; 4]) -> [f64; 4] + Sync {
    let k = Kernel::new(params, op);
    move |y| k.eval(y)
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// 5th minus 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

fn error_norm<const N: usize>(err: &[f64; N], y: &[f64; N], y_new: &[f64; N], o: &SolverOptions) -> f64 {
    let sum: f64 = (0..N)
        .map(|i| {
            let sc = o.abs_tol + o.rel_tol * y[i].abs().max(y_new[i].abs());
            (err[i] / sc).powi(2)
        })
        .sum();
    (sum / N as f64).sqrt()
}

fn initial_step<const N: usize, F>(f: &F, y0: &[f64; N], f0: &[f64; N], o: &SolverOptions) -> f64
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let scaled = |v: &[f64; N]| {
        let s: f64 = (0..N)
            .map(|i| (v[i] / (o.abs_tol + o.rel_tol * y0[i].abs())).powi(2))
            .sum();
        (s / N as f64).sqrt()
    };
    let d0 = scaled(y0);
    let d1 = scaled(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(o.max_step);
    let y1 = axpy(y0, h0, &[(1.0, f0)]);
    let f1 = f(h0, &y1);
    let diff: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = scaled(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(o.max_step)
}

/// Generic Dormand–Prince 5(4) solver with dense output.
///
/// Integrates `y' = f(t, y)` from `t = 0` to `t_end` and returns the solution
/// at `n_samples` equally spaced times `k · t_end / (n_samples − 1)`.
pub fn dopri5<const N: usize, F>(
    f: F,
    y0: [f64; N],
    t_end: f64,
    n_samples: usize,
    o: &SolverOptions,
) -> Result<Vec<[f64; N]>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    if n_samples < 2 || !(t_end > 0.0) {
        return Err(Error::domain("need t_end > 0 and at least two samples"));
    }
    let dt = t_end / (n_samples - 1) as f64;
    let h_min = 1e-18 * t_end;
    let mut out = Vec::with_capacity(n_samples);
    out.push(y0);
    let mut next = 1usize;

    let mut t = 0.0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    if !k1.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { t });
    }
    let mut h = initial_step(&f, &y, &k1, o);
    let mut rejected_last = false;

    while next < n_samples {
        if t + h > t_end {
            h = t_end - t;
        }
        if h < h_min {
            return Err(Error::StepUnderflow { t, h });
        }
        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y_new);

        let err: [f64; N] = std::array::from_fn(|i| {
            h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        });
        let en = error_norm(&err, &y, &y_new, o);
        if !en.is_finite() {
            // blow-up inside the trial step; retry smaller before giving up
            if !y_new.iter().all(|v| v.is_finite()) && h * FAC_MIN < h_min {
                return Err(Error::NonFinite { t });
            }
            h *= FAC_MIN;
            rejected_last = true;
            continue;
        }

        if en <= 1.0 {
            let t_new = t + h;
            // dense output for every sample time in (t, t_new]
            if next < n_samples && (next as f64) * dt <= t_new {
                let ydiff: [f64; N] = std::array::from_fn(|i| y_new[i] - y[i]);
                let bspl: [f64; N] = std::array::from_fn(|i| h * k1[i] - ydiff[i]);
                let r4: [f64; N] = std::array::from_fn(|i| ydiff[i] - h * k7[i] - bspl[i]);
                let r5: [f64; N] = std::array::from_fn(|i| {
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
                });
                while next < n_samples {
                    let ts = if next == n_samples - 1 { t_end } else { next as f64 * dt };
                    if ts > t_new {
                        break;
                    }
                    let th = ((ts - t) / h).clamp(0.0, 1.0);
                    let th1 = 1.0 - th;
                    let ys: [f64; N] = std::array::from_fn(|i| {
                        y[i] + th * (ydiff[i] + th1 * (bspl[i] + th * (r4[i] + th1 * r5[i])))
                    });
                    out.push(ys);
                    next += 1;
                }
            }
            if !y_new.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { t: t_new });
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            let mut fac = SAFETY * en.max(1e-10).powf(-0.2);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if rejected_last {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(o.max_step);
            rejected_last = false;
        } else {
            let fac = (SAFETY * en.powf(-0.2)).max(FAC_MIN);
            h *= fac;
            rejected_last = true;
        }
    }
    Ok(out)
}
