//! Driven harmonic oscillator `H(t) = w0 n + w1 (a + a^dag) + A n cos(Omega t)`.
//!
//! The flow closes on `H0 = A0 n + B0 a^dag + B0* a` and
//! `H1 = A1 n + B1 a^dag + C1* a`, leaving five coefficients.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::analytics::flow_kernel_f;
use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::opkernel::{c64, OperatorMatrix};
use crate::optimize::{golden_section, local_minima};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorParams {
    pub omega0: f64,
    pub omega1: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "Omega")]
    pub omega: f64,
}

impl OscillatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Omega must be positive and finite, got {}",
                self.omega
            )));
        }
        if !(self.omega0 >= 0.0) || !self.omega0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "omega0 must be non-negative, got {}",
                self.omega0
            )));
        }
        if !self.omega1.is_finite() || !self.a.is_finite() {
            return Err(Error::InvalidParameter("omega1 and A must be finite".into()));
        }
        Ok(())
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.a = ratio * self.omega;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorState {
    pub lambda: f64,
    pub a0: f64,
    pub a1: f64,
    pub b0: c64,
    pub b1: c64,
    pub c1: c64,
}

impl OscillatorState {
    pub fn initial(p: &OscillatorParams) -> Self {
        Self {
            lambda: 0.0,
            a0: p.omega0,
            a1: p.a / 2.0,
            b0: c64::new(p.omega1, 0.0),
            b1: c64::new(0.0, 0.0),
            c1: c64::new(0.0, 0.0),
        }
    }

    pub const CSV_HEADER: [&'static str; 9] =
        ["lambda", "A0", "A1", "ReB0", "ImB0", "ReB1", "ImB1", "ReC1", "ImC1"];

    pub fn csv_row(&self) -> [f64; 9] {
        [
            self.lambda,
            self.a0,
            self.a1,
            self.b0.re,
            self.b0.im,
            self.b1.re,
            self.b1.im,
            self.c1.re,
            self.c1.im,
        ]
    }
}

/// Flow-time derivatives of the five coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorRates {
    pub a0: f64,
    pub a1: f64,
    pub b0: c64,
    pub b1: c64,
    pub c1: c64,
}

pub fn oscillator_rhs(s: &OscillatorState, omega: f64) -> OscillatorRates {
    OscillatorRates {
        a0: 0.0,
        a1: -omega * s.a1,
        b0: (s.c1 - s.b1) * (2.0 * s.a1),
        b1: s.b1 * (-omega - s.a0) + s.b0 * s.a1,
        c1: s.c1 * (-omega + s.a0) - s.b0 * s.a1,
    }
}

fn advance(s: &OscillatorState, h: f64, k: &OscillatorRates) -> OscillatorState {
    OscillatorState {
        lambda: s.lambda + h,
        a0: s.a0 + h * k.a0,
        a1: s.a1 + h * k.a1,
        b0: s.b0 + k.b0 * h,
        b1: s.b1 + k.b1 * h,
        c1: s.c1 + k.c1 * h,
    }
}

fn rk4(s: &OscillatorState, omega: f64, h: f64) -> OscillatorState {
    let k1 = oscillator_rhs(s, omega);
    let k2 = oscillator_rhs(&advance(s, h / 2.0, &k1), omega);
    let k3 = oscillator_rhs(&advance(s, h / 2.0, &k2), omega);
    let k4 = oscillator_rhs(&advance(s, h, &k3), omega);
    let sum = OscillatorRates {
        a0: k1.a0 + 2.0 * k2.a0 + 2.0 * k3.a0 + k4.a0,
        a1: k1.a1 + 2.0 * k2.a1 + 2.0 * k3.a1 + k4.a1,
        b0: k1.b0 + k2.b0 * 2.0 + k3.b0 * 2.0 + k4.b0,
        b1: k1.b1 + k2.b1 * 2.0 + k3.b1 * 2.0 + k4.b1,
        c1: k1.c1 + k2.c1 * 2.0 + k3.c1 * 2.0 + k4.c1,
    };
    advance(s, h / 6.0, &sum)
}

fn finite(s: &OscillatorState) -> bool {
    [s.a0, s.a1, s.b0.re, s.b0.im, s.b1.re, s.b1.im, s.c1.re, s.c1.im]
        .iter()
        .all(|x| x.is_finite())
}

#[derive(Clone, Debug)]
pub struct OscillatorTrajectory {
    pub params: OscillatorParams,
    pub states: Vec<OscillatorState>,
}

impl OscillatorTrajectory {
    pub fn last(&self) -> &OscillatorState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        crate::io::write_real_csv(
            path,
            &OscillatorState::CSV_HEADER,
            self.states.iter().map(|s| s.csv_row()),
        )
    }
}

/// RK4 flow of the coefficients, recording every `cfg.record_stride` steps
/// and the final step.
pub fn run_oscillator(p: &OscillatorParams, cfg: &FlowConfig) -> Result<OscillatorTrajectory> {
    p.validate()?;
    cfg.validate(p.omega)?;
    let n = cfg.n_steps();
    let mut s = OscillatorState::initial(p);
    let mut states = vec![s];
    for k in 1..=n {
        let next = rk4(&s, p.omega, cfg.step);
        if !finite(&next) {
            return Err(Error::IntegrationFailure { last_good_lambda: s.lambda });
        }
        s = next;
        s.lambda = k as f64 * cfg.step;
        if k % cfg.record_stride == 0 || k == n {
            states.push(s);
        }
    }
    Ok(OscillatorTrajectory { params: *p, states })
}

/// Early-time solution `B0(lambda) = w1 f(A/Omega, lambda)`, exact for `w0 = 0`.
pub fn analytic_b0(p: &OscillatorParams, lambda: f64) -> c64 {
    c64::new(p.omega1 * flow_kernel_f(p.a / p.omega, lambda, p.omega), 0.0)
}

/// Sign changes of `Re B0` along the trajectory, ignoring samples with
/// `|B0| <= floor * |w1|`.
pub fn count_crossings(traj: &OscillatorTrajectory, floor: f64) -> usize {
    let cut = floor * traj.params.omega1.abs();
    let mut last_sign = 0.0;
    let mut count = 0;
    for s in &traj.states {
        if s.b0.norm() <= cut || s.b0.re == 0.0 {
            continue;
        }
        let sign = s.b0.re.signum();
        if last_sign != 0.0 && sign != last_sign {
            count += 1;
        }
        last_sign = sign;
    }
    count
}

/// Default relative floor for [`count_crossings`].
pub const CROSSING_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreezingOptions {
    /// RK4 step in units of `1/Omega`.
    pub step_omega: f64,
    /// End of the flow in units of `1/Omega`.
    pub lambda_end_omega: f64,
    /// Golden-section tolerance in `A/Omega`.
    pub refine_tol: f64,
}

impl Default for FreezingOptions {
    fn default() -> Self {
        Self {
            step_omega: 0.01,
            lambda_end_omega: 20.0,
            refine_tol: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub ratio: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreezingScan {
    pub grid: Vec<ScanPoint>,
    pub minima: Vec<ScanPoint>,
    /// Set when `w1 = 0`: the residual vanishes identically.
    pub degenerate: bool,
}

/// `|B0(lambda_end)|` for the template with `A = ratio * Omega`.
pub fn freezing_residual(p: &OscillatorParams, ratio: f64, opts: &FreezingOptions) -> Result<f64> {
    let cfg = FlowConfig {
        step: opts.step_omega / p.omega,
        lambda_max: opts.lambda_end_omega / p.omega,
        record_stride: usize::MAX,
        ..FlowConfig::default()
    };
    Ok(run_oscillator(&p.with_ratio(ratio), &cfg)?.last().b0.norm())
}

/// Local minima of `|B0(lambda_end)|` over `grid`, each refined by
/// golden-section search between its grid neighbors.
pub fn find_freezing_points(p: &OscillatorParams, grid: &[f64], opts: &FreezingOptions) -> Result<FreezingScan> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty ratio grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("ratio grid must be strictly increasing".into()));
    }
    if !(opts.step_omega > 0.0 && opts.lambda_end_omega > 0.0 && opts.refine_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("bad freezing options {opts:?}")));
    }
    p.validate()?;
    let residuals: Vec<f64> = par::map(grid, |&r| freezing_residual(p, r, opts))
        .into_iter()
        .collect::<Result<_>>()?;
    let points: Vec<ScanPoint> = grid
        .iter()
        .zip(&residuals)
        .map(|(&ratio, &residual)| ScanPoint { ratio, residual })
        .collect();
    if p.omega1 == 0.0 {
        return Ok(FreezingScan { grid: points, minima: Vec::new(), degenerate: true });
    }
    let idx = local_minima(&residuals);
    let minima = par::map(&idx, |&i| {
        let (ratio, residual) = golden_section(
            |r| freezing_residual(p, r, opts).unwrap_or(f64::INFINITY),
            grid[i - 1],
            grid[i + 1],
            opts.refine_tol,
        );
        ScanPoint { ratio, residual }
    });
    Ok(FreezingScan { grid: points, minima, degenerate: false })
}

fn ladder(n: usize) -> Mat<c64> {
    Mat::from_fn(n, n, |r, c| {
        if c == r + 1 {
            c64::new((c as f64).sqrt(), 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

/// `(H0, H1)` of the state in a Fock space truncated to `n` levels.
pub fn fock_embedding(s: &OscillatorState, n: usize) -> Result<(OperatorMatrix, OperatorMatrix)> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("Fock truncation must be >= 2, got {n}")));
    }
    let a = ladder(n);
    let h0 = Mat::from_fn(n, n, |r, c| {
        let num = if r == c { c64::new(s.a0 * r as f64, 0.0) } else { c64::new(0.0, 0.0) };
        // a^dag[r, c] = a[c, r]
        num + s.b0 * a[(c, r)] + s.b0.conj() * a[(r, c)]
    });
    let h1 = Mat::from_fn(n, n, |r, c| {
        let num = if r == c { c64::new(s.a1 * r as f64, 0.0) } else { c64::new(0.0, 0.0) };
        num + s.b1 * a[(c, r)] + s.c1.conj() * a[(r, c)]
    });
    Ok((h0, h1))
}

/// Reads the five coefficients back from the lowest two Fock levels.
pub fn extract_coefficients(h0: MatRef<'_, c64>, h1: MatRef<'_, c64>, lambda: f64) -> OscillatorState {
    OscillatorState {
        lambda,
        a0: (h0[(1, 1)] - h0[(0, 0)]).re,
        a1: (h1[(1, 1)] - h1[(0, 0)]).re,
        b0: h0[(1, 0)],
        b1: h1[(1, 0)],
        c1: h1[(0, 1)].conj(),
    }
}
