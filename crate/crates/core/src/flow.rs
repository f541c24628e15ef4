//! Flow equations for the static and oscillating parts of a drive,
//!
//! ```text
//! dH0/dlambda = 2 [H1, H1^dagger]
//! dH1/dlambda = -Omega H1 - [H0, H1]
//! ```
//!
//! integrated by fixed-step classical RK4, together with the diagnostics
//! recorded along the way.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::charge_commutator_norm;
use crate::opkernel::{
    add_scaled_into, axpy, commutator, eigvalsh, frobenius_norm, reverse_commutator_into,
    self_commutator_adjoint_into, trace, Scalar,
};

/// Largest allowed `step * Omega`.
pub const MAX_STEP_OMEGA: f64 = 0.1;

/// Default flow time at which diagnostics are read off, in units of `1/J`.
pub const LAMBDA_C: f64 = 1.0;

/// Prominence a minimum of `||H1||` needs before it counts as the onset of
/// thermalization. Physical rebounds at `L = 8..10`, `Omega = 2` rise 6x to
/// 35x, while the decay into the minimum is monotone.
pub const MIN_PROMINENCE: f64 = 2.0;

/// `||H1||` below this fraction of its initial value is at the
/// floating-point floor.
pub const FLOOR_FRACTION: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct FlowState<T> {
    pub lambda: f64,
    pub h0: Mat<T>,
    pub h1: Mat<T>,
}

impl<T: Scalar> FlowState<T> {
    pub fn new(h0: Mat<T>, h1: Mat<T>) -> Result<Self> {
        check_pair(h0.as_ref(), h1.as_ref())?;
        Ok(Self { lambda: 0.0, h0, h1 })
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }
}

fn check_pair<T>(h0: MatRef<'_, T>, h1: MatRef<'_, T>) -> Result<usize> {
    let n = h0.nrows();
    for m in [h0, h1] {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
    }
    if h1.nrows() != n {
        return Err(Error::DimensionMismatch {
            left: n,
            right: h1.nrows(),
        });
    }
    Ok(n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub step: f64,
    pub lambda_max: f64,
    pub record_stride: usize,
    pub store_matrices: bool,
    /// Record the spectrum of `H0` at every sample.
    pub record_spectrum: bool,
    /// Stop once `||H1||` has risen by this factor above its running minimum.
    pub stop_on_rebound: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            lambda_max: LAMBDA_C,
            record_stride: 10,
            store_matrices: false,
            record_spectrum: false,
            stop_on_rebound: None,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self, omega: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.step > 0.0) || !self.step.is_finite() {
            return bad(format!("step must be positive, got {}", self.step));
        }
        if !(omega > 0.0) {
            return bad(format!("Omega must be positive, got {omega}"));
        }
        if self.step * omega > MAX_STEP_OMEGA * (1.0 + 1e-12) {
            return bad(format!(
                "step * Omega = {} exceeds {MAX_STEP_OMEGA}",
                self.step * omega
            ));
        }
        if !(self.lambda_max >= 0.0) || !self.lambda_max.is_finite() {
            return bad(format!("lambda_max must be non-negative, got {}", self.lambda_max));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        if let Some(f) = self.stop_on_rebound {
            if !(f > 1.0) {
                return bad(format!("rebound factor must exceed 1, got {f}"));
            }
        }
        Ok(())
    }

    /// Number of RK4 steps to reach `lambda_max`.
    pub fn n_steps(&self) -> usize {
        (self.lambda_max / self.step - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub lambda: f64,
    pub norm_h0: f64,
    pub norm_h1: f64,
    /// `||[H0, sum Sx]|| / ||H0||`.
    pub p: f64,
    /// `||H1|| / ||H0||`.
    pub q: f64,
    pub trace_h0: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spectrum: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LambdaMax,
    Rebound,
}

/// Recorded diagnostics of one flow run; `lambda` strictly increasing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub omega: f64,
    pub step: f64,
    pub samples: Vec<FlowSample>,
    pub stop: StopReason,
}

impl FlowTrajectory {
    pub fn lambdas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.lambda).collect()
    }

    pub fn norms_h1(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.norm_h1).collect()
    }

    pub fn norms_h0(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.norm_h0).collect()
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.p).collect()
    }

    pub fn last(&self) -> &FlowSample {
        self.samples.last().expect("trajectory always holds the initial sample")
    }

    /// Sample nearest to `lambda`.
    pub fn at(&self, lambda: f64) -> &FlowSample {
        self.samples
            .iter()
            .min_by(|a, b| (a.lambda - lambda).abs().total_cmp(&(b.lambda - lambda).abs()))
            .expect("trajectory always holds the initial sample")
    }
}

/// Trajectory plus the final matrices and, on request, the recorded ones.
#[derive(Clone, Debug)]
pub struct FlowRun<T> {
    pub trajectory: FlowTrajectory,
    pub final_state: FlowState<T>,
    pub stored: Vec<FlowState<T>>,
}

/// `(2 [h1, h1^dagger], -Omega h1 - [h0, h1])`.
pub fn flow_rhs<T: Scalar>(state: &FlowState<T>, omega: f64) -> Result<(Mat<T>, Mat<T>)> {
    let n = check_pair(state.h0.as_ref(), state.h1.as_ref())?;
    let mut d0 = Mat::<T>::zeros(n, n);
    let mut d1 = Mat::<T>::zeros(n, n);
    rhs_into(state.h0.as_ref(), state.h1.as_ref(), omega, &mut d0, &mut d1);
    Ok((d0, d1))
}

fn rhs_into<T: Scalar>(h0: MatRef<'_, T>, h1: MatRef<'_, T>, omega: f64, d0: &mut Mat<T>, d1: &mut Mat<T>) {
    self_commutator_adjoint_into(d0, h1, 2.0);
    // d1 = h1 h0 - h0 h1 - Omega h1
    reverse_commutator_into(d1, h0, h1);
    for j in 0..h1.ncols() {
        let dst = d1.col_as_slice_mut(j);
        for (i, d) in dst.iter_mut().enumerate() {
            *d = *d - h1[(i, j)].scaled(omega);
        }
    }
}

/// Reusable buffers for in-place RK4.
pub struct Rk4<T> {
    omega: f64,
    k0: Mat<T>,
    k1: Mat<T>,
    acc0: Mat<T>,
    acc1: Mat<T>,
    tmp0: Mat<T>,
    tmp1: Mat<T>,
}

impl<T: Scalar> Rk4<T> {
    pub fn new(dim: usize, omega: f64) -> Self {
        let z = || Mat::<T>::zeros(dim, dim);
        Self {
            omega,
            k0: z(),
            k1: z(),
            acc0: z(),
            acc1: z(),
            tmp0: z(),
            tmp1: z(),
        }
    }

    /// Advances `state` by `step` in place.
    pub fn step(&mut self, state: &mut FlowState<T>, step: f64) -> Result<()> {
        let w = self;
        let y0 = &state.h0;
        let y1 = &state.h1;

        rhs_into(y0.as_ref(), y1.as_ref(), w.omega, &mut w.k0, &mut w.k1);
        add_scaled_into(&mut w.acc0, y0, step / 6.0, &w.k0);
        add_scaled_into(&mut w.acc1, y1, step / 6.0, &w.k1);
        add_scaled_into(&mut w.tmp0, y0, step / 2.0, &w.k0);
        add_scaled_into(&mut w.tmp1, y1, step / 2.0, &w.k1);

        rhs_into(w.tmp0.as_ref(), w.tmp1.as_ref(), w.omega, &mut w.k0, &mut w.k1);
        axpy(&mut w.acc0, step / 3.0, &w.k0);
        axpy(&mut w.acc1, step / 3.0, &w.k1);
        add_scaled_into(&mut w.tmp0, y0, step / 2.0, &w.k0);
        add_scaled_into(&mut w.tmp1, y1, step / 2.0, &w.k1);

        rhs_into(w.tmp0.as_ref(), w.tmp1.as_ref(), w.omega, &mut w.k0, &mut w.k1);
        axpy(&mut w.acc0, step / 3.0, &w.k0);
        axpy(&mut w.acc1, step / 3.0, &w.k1);
        add_scaled_into(&mut w.tmp0, y0, step, &w.k0);
        add_scaled_into(&mut w.tmp1, y1, step, &w.k1);

        rhs_into(w.tmp0.as_ref(), w.tmp1.as_ref(), w.omega, &mut w.k0, &mut w.k1);
        axpy(&mut w.acc0, step / 6.0, &w.k0);
        axpy(&mut w.acc1, step / 6.0, &w.k1);

        let n0 = frobenius_norm(w.acc0.as_ref());
        let n1 = frobenius_norm(w.acc1.as_ref());
        if !n0.is_finite() || !n1.is_finite() {
            return Err(Error::IntegrationFailure {
                last_good_lambda: state.lambda,
            });
        }
        std::mem::swap(&mut state.h0, &mut w.acc0);
        std::mem::swap(&mut state.h1, &mut w.acc1);
        state.lambda += step;
        Ok(())
    }
}

/// One RK4 step, allocating its own buffers.
pub fn rk4_step<T: Scalar>(state: &FlowState<T>, omega: f64, step: f64) -> Result<FlowState<T>> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    let mut next = state.clone();
    Rk4::new(state.dim(), omega).step(&mut next, step)?;
    Ok(next)
}

fn sample<T: Scalar>(state: &FlowState<T>, spectrum: bool) -> Result<FlowSample> {
    let norm_h0 = frobenius_norm(state.h0.as_ref());
    let norm_h1 = frobenius_norm(state.h1.as_ref());
    let (p, q) = if norm_h0 > 0.0 {
        let p = if state.dim().is_power_of_two() {
            charge_commutator_norm(state.h0.as_ref())? / norm_h0
        } else {
            f64::NAN
        };
        (p, norm_h1 / norm_h0)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(FlowSample {
        lambda: state.lambda,
        norm_h0,
        norm_h1,
        p,
        q,
        trace_h0: trace(state.h0.as_ref()).re,
        spectrum: if spectrum {
            Some(eigvalsh(state.h0.as_ref())?)
        } else {
            None
        },
    })
}

/// Integrates from `(h0_init, h1_init)` to `cfg.lambda_max`.
///
/// `P` is measured against total `Sx` on `log2(dim)` sites and is `NaN` for
/// dimensions that are not a power of two.
pub fn run_flow<T: Scalar>(h0_init: Mat<T>, h1_init: Mat<T>, omega: f64, cfg: &FlowConfig) -> Result<FlowRun<T>> {
    run_flow_observed(h0_init, h1_init, omega, cfg, |_| {})
}

/// [`run_flow`] that also hands every recorded state to `observer`.
pub fn run_flow_observed<T: Scalar>(
    h0_init: Mat<T>,
    h1_init: Mat<T>,
    omega: f64,
    cfg: &FlowConfig,
    mut observer: impl FnMut(&FlowState<T>),
) -> Result<FlowRun<T>> {
    cfg.validate(omega)?;
    let mut state = FlowState::new(h0_init, h1_init)?;
    let n_steps = cfg.n_steps();
    let mut rk = Rk4::new(state.dim(), omega);
    let mut samples = vec![sample(&state, cfg.record_spectrum)?];
    let mut stored = Vec::new();
    observer(&state);
    if cfg.store_matrices {
        stored.push(state.clone());
    }

    let mut running_min = samples[0].norm_h1;
    let mut stop = StopReason::LambdaMax;
    for k in 1..=n_steps {
        // Index-based flow time avoids drift from repeated addition.
        let target = (k as f64 * cfg.step).min(cfg.lambda_max);
        let h = target - state.lambda;
        rk.step(&mut state, h)?;
        state.lambda = target;

        let n1 = frobenius_norm(state.h1.as_ref());
        let rebound = cfg
            .stop_on_rebound
            .is_some_and(|f| running_min > 0.0 && n1 >= f * running_min);
        running_min = running_min.min(n1);

        if k % cfg.record_stride == 0 || k == n_steps || rebound {
            samples.push(sample(&state, cfg.record_spectrum)?);
            observer(&state);
            if cfg.store_matrices {
                stored.push(state.clone());
            }
        }
        if rebound {
            stop = StopReason::Rebound;
            break;
        }
    }
    Ok(FlowRun {
        trajectory: FlowTrajectory {
            omega,
            step: cfg.step,
            samples,
            stop,
        },
        final_state: state,
        stored,
    })
}

/// `||[h0, charge]|| / ||h0||`.
pub fn diag_p<T: Scalar>(h0: MatRef<'_, T>, charge: MatRef<'_, T>) -> Result<f64> {
    let c = commutator(h0, charge)?;
    let norm = frobenius_norm(h0);
    if norm == 0.0 {
        return Err(Error::UndefinedDiagnostic("P with ||H0|| = 0"));
    }
    Ok(frobenius_norm(c.as_ref()) / norm)
}

/// `||h1|| / ||h0||`.
pub fn diag_q<T: Scalar>(h0: MatRef<'_, T>, h1: MatRef<'_, T>) -> Result<f64> {
    check_pair(h0, h1)?;
    let norm = frobenius_norm(h0);
    if norm == 0.0 {
        return Err(Error::UndefinedDiagnostic("Q with ||H0|| = 0"));
    }
    Ok(frobenius_norm(h1) / norm)
}

/// `||1|| / ||h1||`; infinite when `h1 = 0`.
pub fn t_eff<T: Scalar>(h1: MatRef<'_, T>) -> f64 {
    let n = frobenius_norm(h1);
    if n == 0.0 {
        f64::INFINITY
    } else {
        (h1.nrows() as f64).sqrt() / n
    }
}

/// First prominent minimum of `||H1(lambda)||`, as `(lambda_min, ||H1||_min)`.
///
/// A strict local minimum qualifies when `||H1||` later climbs at least
/// [`MIN_PROMINENCE`] times above it before dropping back below it.
pub fn detect_lambda_min(traj: &FlowTrajectory) -> Result<(f64, f64)> {
    let n1 = traj.norms_h1();
    let floor = FLOOR_FRACTION * n1.first().copied().unwrap_or(0.0);
    for i in 1..n1.len().saturating_sub(1) {
        if n1[i] < floor {
            return Err(Error::FloatingPointFloor {
                lambda: traj.samples[i].lambda,
            });
        }
        if !(n1[i - 1] > n1[i] && n1[i] < n1[i + 1]) {
            continue;
        }
        let mut peak = n1[i];
        for &v in &n1[i + 1..] {
            if v < n1[i] {
                break;
            }
            peak = peak.max(v);
        }
        if peak >= MIN_PROMINENCE * n1[i] {
            return Ok((traj.samples[i].lambda, n1[i]));
        }
    }
    Err(Error::NoMinimum)
}

/// Largest violation of `d/dlambda (||H0||^2 + 2||H1||^2) = -4 Omega ||H1||^2`,
/// relative to `Omega (||H0(0)||^2 + 2||H1(0)||^2)`.
///
/// Derivatives use the fourth-order five-point centered stencil when five or
/// more uniformly spaced samples are available, else the three-point one.
pub fn norm_balance_residual(traj: &FlowTrajectory) -> Result<f64> {
    let s = &traj.samples;
    if s.len() < 3 {
        return Err(Error::TooFewSamples { needed: 3, have: s.len() });
    }
    let g: Vec<f64> = s.iter().map(|x| x.norm_h0 * x.norm_h0 + 2.0 * x.norm_h1 * x.norm_h1).collect();
    let scale = traj.omega * g[0];
    if scale == 0.0 {
        return Ok(0.0);
    }
    let uniform = |a: usize, b: usize| {
        let h = s[a + 1].lambda - s[a].lambda;
        (a..b).all(|i| ((s[i + 1].lambda - s[i].lambda) - h).abs() <= 1e-9 * h.abs())
    };
    let mut worst: f64 = 0.0;
    let n = s.len();
    if n >= 5 {
        for i in 2..n - 2 {
            if !uniform(i - 2, i + 2) {
                continue;
            }
            let h = s[i + 1].lambda - s[i].lambda;
            let dg = (g[i - 2] - 8.0 * g[i - 1] + 8.0 * g[i + 1] - g[i + 2]) / (12.0 * h);
            let r = (dg + 4.0 * traj.omega * s[i].norm_h1 * s[i].norm_h1).abs();
            worst = worst.max(r);
        }
    } else {
        for i in 1..n - 1 {
            if !uniform(i - 1, i + 1) {
                continue;
            }
            let dg = (g[i + 1] - g[i - 1]) / (s[i + 1].lambda - s[i - 1].lambda);
            let r = (dg + 4.0 * traj.omega * s[i].norm_h1 * s[i].norm_h1).abs();
            worst = worst.max(r);
        }
    }
    Ok(worst / scale)
}

/// Step-halving check of the integrator order on the full state.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RichardsonReport {
    /// `||(H0, H1)_h - (H0, H1)_{h/2}||` at the end point.
    pub diff_coarse: f64,
    /// `||(H0, H1)_{h/2} - (H0, H1)_{h/4}||` at the end point.
    pub diff_fine: f64,
    /// `log2(diff_coarse / diff_fine)`; 4 for RK4 in the asymptotic regime.
    pub observed_order: f64,
}

/// Runs the flow to `lambda` with steps `h`, `h/2` and `h/4`. `h` is shrunk
/// to divide `lambda` so all three runs end at the same point.
pub fn richardson_check<T: Scalar>(h0: &Mat<T>, h1: &Mat<T>, omega: f64, lambda: f64, h: f64) -> Result<RichardsonReport> {
    let h = lambda / (lambda / h).ceil();
    let end = |step: f64| -> Result<FlowState<T>> {
        let cfg = FlowConfig {
            step,
            lambda_max: lambda,
            record_stride: usize::MAX,
            ..FlowConfig::default()
        };
        Ok(run_flow(h0.clone(), h1.clone(), omega, &cfg)?.final_state)
    };
    let a = end(h)?;
    let b = end(h / 2.0)?;
    let c = end(h / 4.0)?;
    let diff = |x: &FlowState<T>, y: &FlowState<T>| -> Result<f64> {
        let d0 = crate::opkernel::frobenius_distance(x.h0.as_ref(), y.h0.as_ref())?;
        let d1 = crate::opkernel::frobenius_distance(x.h1.as_ref(), y.h1.as_ref())?;
        Ok(d0.hypot(d1))
    };
    let diff_coarse = diff(&a, &b)?;
    let diff_fine = diff(&b, &c)?;
    Ok(RichardsonReport {
        diff_coarse,
        diff_fine,
        observed_order: (diff_coarse / diff_fine).log2(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_charge, build_drive, build_static, Boundary, SpinChainParams};
    use crate::opkernel::{c64, frobenius_distance, hermiticity_defect, identity, to_complex};

    fn chain(l: usize, j2: f64, omega: f64, ratio: f64) -> SpinChainParams {
        SpinChainParams {
            length: l,
            j: 1.0,
            j2,
            bx: 0.0,
            a: ratio * omega,
            omega,
            boundary: if l >= 5 { Boundary::Periodic } else { Boundary::Open },
        }
    }

    #[test]
    fn rhs_trivial_cases() {
        let p = chain(4, 0.2, 10.0, 0.6);
        let h0 = build_static(&p).unwrap();
        let h1 = build_drive(&p).unwrap();
        let (d0, _) = flow_rhs(&FlowState::new(h0.clone(), h1.clone()).unwrap(), 10.0).unwrap();
        assert_eq!(frobenius_norm(d0.as_ref()), 0.0);

        let (_, d1) = flow_rhs(&FlowState::new(Mat::zeros(16, 16), h1.clone()).unwrap(), 10.0).unwrap();
        let expected = Mat::from_fn(16, 16, |i, j| -10.0 * h1[(i, j)]);
        assert_eq!(frobenius_distance(d1.as_ref(), expected.as_ref()).unwrap(), 0.0);

        let (d0, d1) = flow_rhs(&FlowState::new(h0, Mat::zeros(16, 16)).unwrap(), 10.0).unwrap();
        assert_eq!(frobenius_norm(d0.as_ref()) + frobenius_norm(d1.as_ref()), 0.0);
    }

    #[test]
    fn rhs_matches_dense_definition_for_complex_input() {
        let n = 8;
        let h0 = Mat::<c64>::from_fn(n, n, |i, j| {
            let v = c64::new(((i + j) % 3) as f64, (i as f64 - j as f64) * 0.1);
            if i == j { c64::new(v.re, 0.0) } else { v }
        });
        let h1 = Mat::<c64>::from_fn(n, n, |i, j| c64::new((i * j % 5) as f64 * 0.3, ((i + 2 * j) % 4) as f64 * 0.2));
        let (d0, d1) = flow_rhs(&FlowState::new(h0.clone(), h1.clone()).unwrap(), 3.0).unwrap();
        let h1d = crate::opkernel::adjoint(h1.as_ref());
        let c = commutator(h1.as_ref(), h1d.as_ref()).unwrap();
        let e0 = Mat::from_fn(n, n, |i, j| c[(i, j)] * 2.0);
        let c = commutator(h0.as_ref(), h1.as_ref()).unwrap();
        let e1 = Mat::from_fn(n, n, |i, j| -h1[(i, j)] * 3.0 - c[(i, j)]);
        assert!(frobenius_distance(d0.as_ref(), e0.as_ref()).unwrap() < 1e-12);
        assert!(frobenius_distance(d1.as_ref(), e1.as_ref()).unwrap() < 1e-12);
        assert_eq!(hermiticity_defect(d0.as_ref()), 0.0);
    }

    #[test]
    fn fixed_point_is_stationary() {
        let p = chain(4, 0.2, 10.0, 0.6);
        let s = FlowState::new(build_static(&p).unwrap(), Mat::zeros(16, 16)).unwrap();
        let next = rk4_step(&s, 10.0, 1e-3).unwrap();
        assert_eq!(frobenius_distance(next.h0.as_ref(), s.h0.as_ref()).unwrap(), 0.0);
        assert_eq!(frobenius_norm(next.h1.as_ref()), 0.0);
        assert!((next.lambda - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn pure_decay_without_static_part() {
        let p = chain(4, 0.0, 10.0, 0.6);
        let h1 = build_drive(&p).unwrap();
        let n0 = frobenius_norm(h1.as_ref());
        let cfg = FlowConfig { step: 1e-3, lambda_max: 0.5, record_stride: 50, ..Default::default() };
        let run = run_flow(Mat::zeros(16, 16), h1, 10.0, &cfg).unwrap();
        for s in &run.trajectory.samples {
            let exact = n0 * (-10.0 * s.lambda).exp();
            // Global RK4 error of e^{-x}: x h^4 Omega^4 / 120 relative.
            assert!((s.norm_h1 - exact).abs() <= 1e-10 * n0, "{} {}", s.norm_h1, exact);
        }
    }

    #[test]
    fn stationary_flow_keeps_diagnostics() {
        let p = chain(6, 0.2, 10.0, 0.0);
        let h0 = build_static(&p).unwrap();
        let p0 = diag_p(h0.as_ref(), build_charge(6).unwrap().as_ref()).unwrap();
        let cfg = FlowConfig { lambda_max: 0.2, record_stride: 20, ..Default::default() };
        let run = run_flow(h0, build_drive(&p).unwrap(), 10.0, &cfg).unwrap();
        for s in &run.trajectory.samples {
            assert_eq!(s.q, 0.0);
            assert!((s.p - p0).abs() < 1e-14);
        }
        assert!(norm_balance_residual(&run.trajectory).unwrap() < 1e-14);
    }

    #[test]
    fn diagnostics_examples() {
        let p = SpinChainParams { boundary: Boundary::Open, ..chain(2, 0.0, 10.0, 0.0) };
        let h0 = build_static(&p).unwrap();
        let pv = diag_p(h0.as_ref(), build_charge(2).unwrap().as_ref()).unwrap();
        assert!((pv - 2f64.sqrt()).abs() < 1e-15);

        // XX + ZZ commutes with total Sx.
        use crate::hilbert::{spin_product, Pauli};
        let mut h = Mat::<c64>::zeros(16, 16);
        for i in 0..4 {
            let j = (i + 1) % 4;
            h = &h + &spin_product(4, &[(i, Pauli::Y), (j, Pauli::Y)]);
            h = &h + &spin_product(4, &[(i, Pauli::Z), (j, Pauli::Z)]);
        }
        let q = to_complex(build_charge(4).unwrap().as_ref());
        assert!(diag_p(h.as_ref(), q.as_ref()).unwrap() < 1e-12);

        assert_eq!(diag_q(h.as_ref(), Mat::<c64>::zeros(16, 16).as_ref()).unwrap(), 0.0);
        assert!(diag_q(Mat::<f64>::zeros(4, 4).as_ref(), identity::<f64>(4).as_ref()).is_err());

        assert_eq!(t_eff(identity::<f64>(16).as_ref()), 1.0);
        let small = Mat::<f64>::from_fn(16, 16, |i, j| if i == j { 1e-3 } else { 0.0 });
        assert!((t_eff(small.as_ref()) - 1e3).abs() < 1e-9);
        assert_eq!(t_eff(Mat::<f64>::zeros(4, 4).as_ref()), f64::INFINITY);
    }

    #[test]
    fn q_at_zero_flow_time() {
        let p = SpinChainParams { a: 3.0, ..chain(5, 0.2, 10.0, 0.0) };
        let q = diag_q(build_static(&p).unwrap().as_ref(), build_drive(&p).unwrap().as_ref()).unwrap();
        // ||H1|| = A sqrt(L 2^L)/2, ||H0||^2 = 2^L L (J^2 + J2^2)/16.
        let n1 = 3.0 * (5.0f64 * 32.0).sqrt() / 2.0;
        let n0 = (32.0 * 5.0 * (1.0 + 0.04) / 16.0f64).sqrt();
        assert!((q - n1 / n0).abs() < 1e-13 * q);
    }

    #[test]
    fn recorded_lambdas_increase_and_end_at_max() {
        let p = chain(4, 0.2, 10.0, 0.6);
        let cfg = FlowConfig { step: 3e-3, lambda_max: 0.1, record_stride: 7, ..Default::default() };
        let run = run_flow(build_static(&p).unwrap(), build_drive(&p).unwrap(), 10.0, &cfg).unwrap();
        let l = run.trajectory.lambdas();
        assert!(l.windows(2).all(|w| w[1] > w[0]));
        assert!((l.last().unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(run.final_state.lambda, *l.last().unwrap());
    }

    #[test]
    fn config_guard() {
        let cfg = FlowConfig { step: 0.02, ..Default::default() };
        assert!(cfg.validate(10.0).is_err());
        assert!(cfg.validate(5.0).is_ok());
        assert!(FlowConfig { record_stride: 0, ..Default::default() }.validate(1.0).is_err());
    }

    fn synthetic(norms: &[f64]) -> FlowTrajectory {
        FlowTrajectory {
            omega: 1.0,
            step: 0.1,
            samples: norms
                .iter()
                .enumerate()
                .map(|(i, &n)| FlowSample {
                    lambda: i as f64 * 0.1,
                    norm_h0: 1.0,
                    norm_h1: n,
                    p: 0.0,
                    q: n,
                    trace_h0: 0.0,
                    spectrum: None,
                })
                .collect(),
            stop: StopReason::LambdaMax,
        }
    }

    #[test]
    fn lambda_min_ignores_shallow_wiggles() {
        let t = synthetic(&[1.0, 1e-2, 1.5e-2, 1e-3, 1e-4, 1e-5, 1e-3, 1e-1, 1.0]);
        assert_eq!(detect_lambda_min(&t).unwrap(), (0.5, 1e-5));
        let t = synthetic(&[1.0, 1e-1, 1e-2, 1.5e-2, 1e-3, 2e-2, 1e-2]);
        assert_eq!(detect_lambda_min(&t).unwrap(), (0.4, 1e-3));
        let t = synthetic(&[1.0, 1e-1, 1e-2, 1e-3, 1e-4]);
        assert!(matches!(detect_lambda_min(&t), Err(Error::NoMinimum)));
        let t = synthetic(&[1.0, 1e-9, 1e-14, 1e-15, 1e-10, 1e-2]);
        assert!(matches!(detect_lambda_min(&t), Err(Error::FloatingPointFloor { .. })));
    }
}
