//! Parameter sweeps over spin-chain flows: freezing scans in `A/Omega`,
//! frequency scaling at a freezing point, dip counting and long flows for
//! thermalization and instanton analysis.
//!
//! Scan points are independent flows dispatched through [`crate::par::map`];
//! results come back in grid order, so output does not depend on scheduling.

use serde::{Deserialize, Serialize};

use crate::analytics::{fit_instanton, isolated_peaks, magnus_leading, InstantonFit};
use crate::error::{Error, Result};
use crate::flow::{detect_lambda_min, run_flow, run_flow_observed, FlowConfig, FlowTrajectory, LAMBDA_C};
use crate::hilbert::{build_drive, build_static, SpinChainParams};
use crate::opkernel::{frobenius_distance, frobenius_norm, to_complex};
use crate::optimize::{golden_section, linear_fit};
use crate::par;

/// Flow settings for a scan, with the step given in units of `1/Omega` so a
/// single value serves every frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanFlow {
    pub step_omega: f64,
    pub lambda_c: f64,
}

impl Default for ScanFlow {
    fn default() -> Self {
        Self { step_omega: 0.05, lambda_c: LAMBDA_C }
    }
}

impl ScanFlow {
    /// Flow configuration at frequency `omega`, recording every `stride` steps.
    pub fn config(&self, omega: f64, stride: usize) -> FlowConfig {
        FlowConfig {
            step: self.step_omega / omega,
            lambda_max: self.lambda_c,
            record_stride: stride.max(1),
            ..FlowConfig::default()
        }
    }

    fn final_only(&self, omega: f64) -> FlowConfig {
        self.config(omega, usize::MAX)
    }
}

/// Diagnostics at `lambda_c` for one drive ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PPoint {
    pub ratio: f64,
    pub p: f64,
    pub q: f64,
}

impl PPoint {
    pub const CSV_HEADER: [&'static str; 3] = ["ratio", "P", "Q"];

    pub fn csv_row(&self) -> [f64; 3] {
        [self.ratio, self.p, self.q]
    }
}

fn check_grid(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter(format!("empty {what} grid")));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(format!("{what} grid must be strictly increasing")));
    }
    Ok(())
}

/// Flow trajectory of the chain from its undressed start.
pub fn chain_flow(params: &SpinChainParams, cfg: &FlowConfig) -> Result<FlowTrajectory> {
    Ok(run_flow(build_static(params)?, build_drive(params)?, params.omega, cfg)?.trajectory)
}

/// `P` and `Q` at `lambda_c` for `A = ratio * Omega`.
pub fn p_at_lambda_c(template: &SpinChainParams, ratio: f64, flow: &ScanFlow) -> Result<PPoint> {
    let p = template.with_ratio(ratio);
    let traj = chain_flow(&p, &flow.final_only(p.omega))?;
    let last = traj.last();
    Ok(PPoint { ratio, p: last.p, q: last.q })
}

/// Indices of local minima standing at least `depth` times below the highest
/// point between them and the nearest lower sample on each side.
pub fn sharp_minima(values: &[f64], depth: f64) -> Vec<usize> {
    if values.iter().any(|&v| !(v > 0.0)) {
        return Vec::new();
    }
    let inv: Vec<f64> = values.iter().map(|v| 1.0 / v).collect();
    isolated_peaks(&inv, depth)
}

/// Default depth for [`sharp_minima`] in freezing scans.
pub const SHARP_DEPTH: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreezingScanReport {
    pub points: Vec<PPoint>,
    /// Sharp minima, refined when requested.
    pub minima: Vec<PPoint>,
}

/// `P(lambda_c)` over `grid`; sharp minima are refined by golden-section
/// search between grid neighbors when `refine_tol` is given.
pub fn scan_freezing(
    template: &SpinChainParams,
    grid: &[f64],
    flow: &ScanFlow,
    refine_tol: Option<f64>,
) -> Result<FreezingScanReport> {
    check_grid(grid, "ratio")?;
    template.validate()?;
    let points: Vec<PPoint> = par::map(grid, |&r| p_at_lambda_c(template, r, flow))
        .into_iter()
        .collect::<Result<_>>()?;
    let p: Vec<f64> = points.iter().map(|x| x.p).collect();
    let idx = sharp_minima(&p, SHARP_DEPTH);
    let minima = match refine_tol {
        None => idx.iter().map(|&i| points[i]).collect(),
        Some(tol) => par::map(&idx, |&i| refine_minimum(template, grid[i - 1], grid[i + 1], flow, tol))
            .into_iter()
            .collect::<Result<_>>()?,
    };
    Ok(FreezingScanReport { points, minima })
}

/// Golden-section minimum of `P(lambda_c)` over `[lo, hi]`.
pub fn refine_minimum(template: &SpinChainParams, lo: f64, hi: f64, flow: &ScanFlow, tol: f64) -> Result<PPoint> {
    let mut failure = None;
    let (ratio, _) = golden_section(
        |r| match p_at_lambda_c(template, r, flow) {
            Ok(pt) => pt.p,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        },
        lo,
        hi,
        tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    p_at_lambda_c(template, ratio, flow)
}

/// What counts as a pre-plateau dip of `P(lambda)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DipCriteria {
    /// Minimum rebound, relative to the dip value, that separates a dip from ripple.
    pub rise: f64,
    /// Minimum rebound height as a fraction of `P(0)`. Excludes the shallow
    /// overshoot with which some curves settle onto their plateau.
    pub recovery: f64,
}

impl Default for DipCriteria {
    fn default() -> Self {
        Self { rise: 1.2, recovery: 0.1 }
    }
}

/// Local minima of `P(lambda)` up to `lambda_c` whose rebound, before the
/// curve falls below the minimum again, satisfies `criteria`.
pub fn count_dips(traj: &FlowTrajectory, lambda_c: f64, criteria: &DipCriteria) -> usize {
    let p: Vec<f64> = traj
        .samples
        .iter()
        .take_while(|s| s.lambda <= lambda_c + 1e-12)
        .map(|s| s.p)
        .collect();
    let Some(&p0) = p.first() else { return 0 };
    let mut count = 0;
    for i in 1..p.len().saturating_sub(1) {
        if !(p[i] < p[i - 1] && p[i] <= p[i + 1]) {
            continue;
        }
        let mut peak = p[i];
        for &v in &p[i + 1..] {
            if v < p[i] {
                break;
            }
            peak = peak.max(v);
        }
        if peak >= criteria.rise * p[i] && peak >= criteria.recovery * p0 {
            count += 1;
        }
    }
    count
}

/// One frequency of a frequency-scaling sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub omega: f64,
    pub ratio: f64,
    pub p: f64,
    pub q: f64,
    /// `||H0(lambda_c) - h_0|| / ||H0(0)||` with `h_0` the leading co-moving
    /// Hamiltonian; `NaN` when `Bx != 0`.
    pub magnus_distance: f64,
}

impl ScalingPoint {
    pub const CSV_HEADER: [&'static str; 5] = ["Omega", "ratio", "P", "Q", "magnus_distance"];

    pub fn csv_row(&self) -> [f64; 5] {
        [self.omega, self.ratio, self.p, self.q, self.magnus_distance]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares `y = slope x + intercept` with the coefficient of determination.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let (slope, intercept) = linear_fit(x, y).ok_or(Error::TooFewSamples { needed: 2, have: x.len() })?;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LineFit { slope, intercept, r_squared })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyScalingReport {
    pub points: Vec<ScalingPoint>,
    /// `log P` against `log Omega`.
    pub p_loglog: LineFit,
    /// `ln Q` against `Omega`.
    pub q_semilog: LineFit,
    /// `log magnus_distance` against `log Omega`; absent when `Bx != 0`.
    pub magnus_loglog: Option<LineFit>,
}

/// Sweeps `Omega`, refining the freezing ratio inside `bracket` at each
/// frequency, and fits the scaling of `P`, `Q` and the Magnus distance.
pub fn frequency_scaling(
    template: &SpinChainParams,
    omegas: &[f64],
    bracket: (f64, f64),
    flow: &ScanFlow,
    refine_tol: f64,
) -> Result<FrequencyScalingReport> {
    check_grid(omegas, "frequency")?;
    if omegas.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, have: omegas.len() });
    }
    if !(bracket.0 < bracket.1) {
        return Err(Error::InvalidParameter(format!("empty ratio bracket {bracket:?}")));
    }
    let points: Vec<ScalingPoint> = par::map(omegas, |&omega| {
        let mut t = *template;
        t.omega = omega;
        let best = refine_minimum(&t, bracket.0, bracket.1, flow, refine_tol)?;
        let p = t.with_ratio(best.ratio);
        let run = run_flow(build_static(&p)?, build_drive(&p)?, omega, &flow.final_only(omega))?;
        let last = run.trajectory.last();
        let magnus_distance = if p.bx == 0.0 {
            let h0_init = build_static(&p)?;
            let fs = to_complex(run.final_state.h0.as_ref());
            let h = magnus_leading(&p)?;
            frobenius_distance(fs.as_ref(), h.as_ref())? / frobenius_norm(h0_init.as_ref())
        } else {
            f64::NAN
        };
        Ok(ScalingPoint { omega, ratio: best.ratio, p: last.p, q: last.q, magnus_distance })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let lw: Vec<f64> = points.iter().map(|x| x.omega.ln()).collect();
    let w: Vec<f64> = points.iter().map(|x| x.omega).collect();
    let p_loglog = fit_line(&lw, &points.iter().map(|x| x.p.ln()).collect::<Vec<_>>())?;
    let q_semilog = fit_line(&w, &points.iter().map(|x| x.q.ln()).collect::<Vec<_>>())?;
    let magnus_loglog = if template.bx == 0.0 {
        Some(fit_line(&lw, &points.iter().map(|x| x.magnus_distance.ln()).collect::<Vec<_>>())?)
    } else {
        None
    };
    Ok(FrequencyScalingReport { points, p_loglog, q_semilog, magnus_loglog })
}

/// Long flow with `lambda_min` and the instanton events that follow it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThermalizationReport {
    pub ratio: f64,
    pub j2: f64,
    /// `(lambda_min, ||H1(lambda_min)||)`, absent when the norm never turns up.
    pub lambda_min: Option<(f64, f64)>,
    /// Why `lambda_min` is absent.
    pub lambda_min_error: Option<String>,
    pub fits: Vec<InstantonFit>,
    /// Peaks that could not be fit, with the reason.
    pub fit_failures: Vec<(f64, String)>,
    #[serde(skip)]
    pub trajectory: Option<FlowTrajectory>,
}

/// Peak-to-background ratio for a `||H1||` peak to count as isolated.
pub const PEAK_ISOLATION: f64 = 10.0;

/// Sech fits of every isolated `||H1||` peak after `after`, each limited to
/// the span between its neighboring peaks.
pub fn fit_instanton_peaks(traj: &FlowTrajectory, after: f64) -> (Vec<InstantonFit>, Vec<(f64, String)>) {
    let lambdas = traj.lambdas();
    let n1 = traj.norms_h1();
    let start = lambdas.partition_point(|&x| x <= after);
    let peaks: Vec<usize> = isolated_peaks(&n1[start..], PEAK_ISOLATION)
        .into_iter()
        .map(|i| i + start)
        .collect();
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for (k, &i) in peaks.iter().enumerate() {
        let lo = if k == 0 { lambdas[start] } else { 0.5 * (lambdas[peaks[k - 1]] + lambdas[i]) };
        let hi = peaks
            .get(k + 1)
            .map_or(*lambdas.last().unwrap(), |&j| 0.5 * (lambdas[i] + lambdas[j]));
        match fit_instanton(traj, (lo, hi)) {
            Ok(f) => fits.push(f),
            Err(e) => failures.push((lambdas[i], e.to_string())),
        }
    }
    (fits, failures)
}

/// Runs a long flow, locates `lambda_min` and fits the instanton peaks.
///
/// The floating-point floor is reported through `lambda_min_error` rather
/// than aborting, so the trajectory is still available.
pub fn thermalize(params: &SpinChainParams, cfg: &FlowConfig, keep_trajectory: bool) -> Result<ThermalizationReport> {
    let traj = run_flow_observed(build_static(params)?, build_drive(params)?, params.omega, cfg, |_| {})?.trajectory;
    let (lambda_min, lambda_min_error) = match detect_lambda_min(&traj) {
        Ok(m) => (Some(m), None),
        Err(e @ (Error::NoMinimum | Error::FloatingPointFloor { .. })) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let (fits, fit_failures) = match lambda_min {
        Some((lm, _)) => fit_instanton_peaks(&traj, lm),
        None => (Vec::new(), Vec::new()),
    };
    Ok(ThermalizationReport {
        ratio: params.ratio(),
        j2: params.j2,
        lambda_min,
        lambda_min_error,
        fits,
        fit_failures,
        trajectory: keep_trajectory.then_some(traj),
    })
}

/// Trajectory rows `(lambda, ||H0||, ||H1||, P, Q)`.
pub const TRAJECTORY_HEADER: [&str; 5] = ["lambda", "normH0", "normH1", "P", "Q"];

pub fn trajectory_rows(traj: &FlowTrajectory) -> Vec<[f64; 5]> {
    traj.samples
        .iter()
        .map(|s| [s.lambda, s.norm_h0, s.norm_h1, s.p, s.q])
        .collect()
}
