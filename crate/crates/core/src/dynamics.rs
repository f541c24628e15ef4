//! Real-time evolution of the driven chain: one-period propagator,
//! quasienergies, evolution under a static effective Hamiltonian and
//! half-chain entanglement.
//!
//! The propagator splits `H(t) = D + g(t) sum_i Sx_i` with `D` the diagonal
//! ZZ part and `g(t) = Bx + 2A cos(Omega t)`. Both pieces are integrated
//! exactly (the field part through `int g dt`), composed symmetrically and
//! lifted to fourth order by a triple jump. Every factor is unitary.

use std::f64::consts::{LN_2, PI};

use faer::{Col, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{diag_q, run_flow, FlowConfig};
use crate::hilbert::{build_drive, build_static, polarized_state, zz_diagonal, SpinChainParams, StateVector};
use crate::opkernel::{
    c64, eigh, eigvals_general, eigvalsh, expm_hermitian, product, to_complex, unitarity_defect,
    EigenDecomposition, OperatorMatrix, Scalar,
};
use crate::par;

/// Substeps per period used by the drivers. At `L = 8`, `Omega = 10` and
/// `A/Omega <= 2.2`, doubling it changes `U` by less than `1e-9`.
pub const DEFAULT_SUBSTEPS: usize = 800;

/// Fewest substeps accepted per period.
pub const MIN_SUBSTEPS: usize = 100;

/// Unitarity tolerance for inputs to [`quasienergies`].
pub const UNITARITY_TOL: f64 = 1e-8;

/// Squared Schmidt values below this are dropped.
pub const SCHMIDT_FLOOR: f64 = 1e-14;

/// `|eps_exact| / Omega` below which the relative error is not formed.
pub const NEAR_ZERO_FRACTION: f64 = 1e-8;

/// `Q(lambda_c)` above which the flow is reported as not converged.
pub const Q_CONVERGED: f64 = 1e-2;

fn period(omega: f64) -> f64 {
    2.0 * PI / omega
}

// Triple-jump weights: w1 + w0 + w1 = 1.
const CBRT2: f64 = 1.259_921_049_894_873_2;
const W1: f64 = 1.0 / (2.0 - CBRT2);
const W0: f64 = -CBRT2 / (2.0 - CBRT2);

/// Precomputed pieces of the split propagator for one parameter set.
struct Splitting {
    l: usize,
    omega: f64,
    bx: f64,
    a: f64,
    h: f64,
    /// `exp(-i D w h)` for `w = W1` and `w = W0`.
    phase_outer: Vec<c64>,
    phase_inner: Vec<c64>,
}

impl Splitting {
    fn new(params: &SpinChainParams, substeps: usize) -> Result<Self> {
        params.validate()?;
        if substeps < MIN_SUBSTEPS {
            return Err(Error::InvalidParameter(format!(
                "substeps must be >= {MIN_SUBSTEPS}, got {substeps}"
            )));
        }
        let h = period(params.omega) / substeps as f64;
        let d = zz_diagonal(params)?;
        let phases = |w: f64| -> Vec<c64> { d.iter().map(|&e| c64::new(0.0, -e * w * h).exp()).collect() };
        Ok(Self {
            l: params.length,
            omega: params.omega,
            bx: params.bx,
            a: params.a,
            h,
            phase_outer: phases(W1),
            phase_inner: phases(W0),
        })
    }

    /// `int_t0^t1 g(t) dt`.
    fn field_integral(&self, t0: f64, t1: f64) -> f64 {
        self.bx * (t1 - t0) + 2.0 * self.a / self.omega * ((self.omega * t1).sin() - (self.omega * t0).sin())
    }

    /// `exp(-i phi sum_i Sx_i)` applied site by site.
    fn rotate(&self, v: &mut [c64], phi: f64) {
        if phi == 0.0 {
            return;
        }
        let (c, s) = ((phi / 2.0).cos(), (phi / 2.0).sin());
        let ms = c64::new(0.0, -s);
        for site in 0..self.l {
            let mask = 1usize << site;
            for i in 0..v.len() {
                if i & mask == 0 {
                    let (x, y) = (v[i], v[i | mask]);
                    v[i] = x * c + y * ms;
                    v[i | mask] = y * c + x * ms;
                }
            }
        }
    }

    fn diagonal(v: &mut [c64], phases: &[c64]) {
        for (x, p) in v.iter_mut().zip(phases) {
            *x *= *p;
        }
    }

    /// Propagates `v` from `t0` through `substeps` steps of length `h`.
    fn propagate(&self, v: &mut [c64], t0: f64, substeps: usize) {
        // Field-part boundaries inside one step, as fractions of h.
        let f1 = W1 / 2.0;
        let f2 = W1 + W0 / 2.0;
        let f3 = W1 + W0 + W1 / 2.0;
        for k in 0..substeps {
            let ts = t0 + k as f64 * self.h;
            let at = |f: f64| ts + f * self.h;
            self.rotate(v, self.field_integral(at(0.0), at(f1)));
            Self::diagonal(v, &self.phase_outer);
            self.rotate(v, self.field_integral(at(f1), at(f2)));
            Self::diagonal(v, &self.phase_inner);
            self.rotate(v, self.field_integral(at(f2), at(f3)));
            Self::diagonal(v, &self.phase_outer);
            self.rotate(v, self.field_integral(at(f3), at(1.0)));
        }
    }
}

/// One-period propagator `U(t0 + T, t0)` by fourth-order splitting, built
/// column by column.
pub fn floquet_unitary(params: &SpinChainParams, t0: f64, substeps: usize) -> Result<OperatorMatrix> {
    let sp = Splitting::new(params, substeps)?;
    let dim = params.dim();
    let mut data = vec![c64::new(0.0, 0.0); dim * dim];
    par::for_each_chunk_mut(&mut data, dim, |col, v| {
        v[col] = c64::new(1.0, 0.0);
        sp.propagate(v, t0, substeps);
    });
    Ok(Mat::from_fn(dim, dim, |r, c| data[c * dim + r]))
}

/// Advances `psi` by `periods` drive periods starting at `t0`.
pub fn propagate_periods(
    params: &SpinChainParams,
    psi: &StateVector,
    t0: f64,
    periods: usize,
    substeps: usize,
) -> Result<StateVector> {
    let sp = Splitting::new(params, substeps)?;
    if psi.nrows() != params.dim() {
        return Err(Error::DimensionMismatch { left: psi.nrows(), right: params.dim() });
    }
    let mut v: Vec<c64> = (0..psi.nrows()).map(|i| psi[i]).collect();
    for n in 0..periods {
        sp.propagate(&mut v, t0 + n as f64 * period(params.omega), substeps);
    }
    Ok(Col::from_fn(v.len(), |i| v[i]))
}

/// Reference propagator: product of dense midpoint exponentials
/// `exp(-i H(t_mid) dt)`. Second order; intended for small chains.
pub fn floquet_unitary_midpoint(params: &SpinChainParams, t0: f64, substeps: usize) -> Result<OperatorMatrix> {
    params.validate()?;
    if substeps < MIN_SUBSTEPS {
        return Err(Error::InvalidParameter(format!(
            "substeps must be >= {MIN_SUBSTEPS}, got {substeps}"
        )));
    }
    let h0 = build_static(params)?;
    let drive = build_drive(params)?;
    let dt = period(params.omega) / substeps as f64;
    let dim = params.dim();
    let mut u = crate::opkernel::identity::<c64>(dim);
    for k in 0..substeps {
        let tm = t0 + (k as f64 + 0.5) * dt;
        let c = 2.0 * (params.omega * tm).cos();
        let ht = Mat::<f64>::from_fn(dim, dim, |r, s| h0[(r, s)] + c * drive[(r, s)]);
        let step = expm_hermitian(ht.as_ref(), c64::new(0.0, -dt))?;
        u = product(step.as_ref(), u.as_ref())?;
    }
    Ok(u)
}

/// Folds into `(-Omega/2, Omega/2]`.
pub fn fold_quasienergy(e: f64, omega: f64) -> f64 {
    let r = e - omega * (e / omega).round();
    if r <= -omega / 2.0 {
        r + omega
    } else if r > omega / 2.0 {
        r - omega
    } else {
        r
    }
}

/// Quasienergies `-arg(mu)/T` of a one-period propagator, folded and ascending.
pub fn quasienergies(u: MatRef<'_, c64>, omega: f64) -> Result<Vec<f64>> {
    let defect = unitarity_defect(u)?;
    if !(defect <= UNITARITY_TOL) {
        return Err(Error::NotUnitary { defect });
    }
    let t = period(omega);
    let mut eps: Vec<f64> = eigvals_general(u)?
        .into_iter()
        .map(|mu| fold_quasienergy(-mu.arg() / t, omega))
        .collect();
    eps.sort_by(f64::total_cmp);
    Ok(eps)
}

/// Counts of `log10(delta)` over equal-width bins on `[lo, hi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
}

impl Histogram {
    pub fn log10(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0; bins];
        let (mut underflow, mut overflow) = (0, 0);
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let x = v.log10();
            if x < lo {
                underflow += 1;
            } else if x >= hi {
                overflow += 1;
            } else {
                counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
            }
        }
        Self { lo, hi, counts, underflow, overflow }
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    /// Lower edge of the fullest bin (first on ties).
    pub fn mode_lower_edge(&self) -> Option<f64> {
        let (i, &c) = self.counts.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        (c > 0).then(|| self.lo + i as f64 * self.bin_width())
    }

    pub fn csv_rows(&self) -> Vec<[f64; 2]> {
        let w = self.bin_width();
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| [self.lo + i as f64 * w, c as f64])
            .collect()
    }
}

pub const HISTOGRAM_BINS: usize = 40;
pub const HISTOGRAM_RANGE: (f64, f64) = (-12.0, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasienergyReport {
    pub omega: f64,
    pub eps_exact: Vec<f64>,
    pub eps_flow: Vec<f64>,
    /// Relative errors for all pairs except `excluded`.
    pub delta: Vec<f64>,
    /// Sorted indices whose exact quasienergy is too close to zero.
    pub excluded: Vec<usize>,
    /// Flow eigenvalues that had to be folded into the zone.
    pub fold_events: usize,
    pub fold_zone: (f64, f64),
    pub q_final: f64,
    pub flow_converged: bool,
    pub median_delta: f64,
    pub histogram: Histogram,
}

/// Pairs sorted exact quasienergies with the sorted, folded spectrum of
/// `H0(lambda_c)` and forms relative errors.
pub fn compare_quasienergies(eps_exact: Vec<f64>, h0_eigs: &[f64], omega: f64, q_final: f64) -> Result<QuasienergyReport> {
    if eps_exact.len() != h0_eigs.len() {
        return Err(Error::DimensionMismatch { left: eps_exact.len(), right: h0_eigs.len() });
    }
    let mut fold_events = 0;
    let mut eps_flow: Vec<f64> = h0_eigs
        .iter()
        .map(|&e| {
            let f = fold_quasienergy(e, omega);
            if f != e {
                fold_events += 1;
            }
            f
        })
        .collect();
    eps_flow.sort_by(f64::total_cmp);
    let mut delta = Vec::with_capacity(eps_exact.len());
    let mut excluded = Vec::new();
    for (i, (&ex, &fl)) in eps_exact.iter().zip(&eps_flow).enumerate() {
        if ex.abs() < NEAR_ZERO_FRACTION * omega {
            excluded.push(i);
        } else {
            delta.push(((ex - fl) / ex).abs());
        }
    }
    let mut sorted = delta.clone();
    sorted.sort_by(f64::total_cmp);
    let median_delta = match sorted.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    };
    let histogram = Histogram::log10(&delta, HISTOGRAM_RANGE.0, HISTOGRAM_RANGE.1, HISTOGRAM_BINS);
    Ok(QuasienergyReport {
        omega,
        eps_exact,
        eps_flow,
        delta,
        excluded,
        fold_events,
        fold_zone: (-omega / 2.0, omega / 2.0),
        q_final,
        flow_converged: q_final <= Q_CONVERGED,
        median_delta,
        histogram,
    })
}

/// Flowed static Hamiltonian `H0(lambda_c)` and `Q(lambda_c)`.
pub fn flowed_static(params: &SpinChainParams, cfg: &FlowConfig) -> Result<(Mat<f64>, f64)> {
    let run = run_flow(build_static(params)?, build_drive(params)?, params.omega, cfg)?;
    let q = diag_q(run.final_state.h0.as_ref(), run.final_state.h1.as_ref())?;
    Ok((run.final_state.h0, q))
}

/// Relative quasienergy errors of `H0(lambda_c)` against the exact propagator.
pub fn quasienergy_error(params: &SpinChainParams, cfg: &FlowConfig, substeps: usize) -> Result<QuasienergyReport> {
    let (h0, q) = flowed_static(params, cfg)?;
    quasienergy_error_from(params, h0.as_ref(), q, substeps)
}

/// As [`quasienergy_error`] with a flowed `H0` already at hand.
pub fn quasienergy_error_from(
    params: &SpinChainParams,
    h0_flow: MatRef<'_, f64>,
    q_final: f64,
    substeps: usize,
) -> Result<QuasienergyReport> {
    let u = floquet_unitary(params, 0.0, substeps)?;
    let exact = quasienergies(u.as_ref(), params.omega)?;
    compare_quasienergies(exact, &eigvalsh(h0_flow)?, params.omega, q_final)
}

/// `exp(-i H t)` applied through a cached eigendecomposition.
pub struct EffectiveEvolution<T> {
    evd: EigenDecomposition<T>,
}

impl<T: Scalar> EffectiveEvolution<T> {
    pub fn new(h: MatRef<'_, T>) -> Result<Self> {
        Ok(Self { evd: eigh(h)? })
    }

    pub fn apply(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        let n = self.evd.dim();
        if psi.nrows() != n {
            return Err(Error::DimensionMismatch { left: psi.nrows(), right: n });
        }
        let v = &self.evd.vectors;
        // c = V^dagger psi, scaled by exp(-i e t), then mapped back by V.
        let coeffs: Vec<c64> = (0..n)
            .map(|k| {
                let mut acc = c64::new(0.0, 0.0);
                for i in 0..n {
                    acc += v[(i, k)].to_c64().conj() * psi[i];
                }
                acc * c64::new(0.0, -self.evd.values[k] * t).exp()
            })
            .collect();
        Ok(Col::from_fn(n, |i| {
            let mut acc = c64::new(0.0, 0.0);
            for (k, c) in coeffs.iter().enumerate() {
                acc += v[(i, k)].to_c64() * *c;
            }
            acc
        }))
    }
}

/// `exp(-i h0 t) psi`.
pub fn evolve_effective<T: Scalar>(h0: MatRef<'_, T>, psi: &StateVector, t: f64) -> Result<StateVector> {
    EffectiveEvolution::new(h0)?.apply(psi, t)
}

/// Half-chain entanglement entropy per site of the cut half, in nats.
pub fn half_chain_entropy(psi: &StateVector, l: usize) -> Result<f64> {
    if l == 0 || l % 2 != 0 {
        return Err(Error::InvalidParameter(format!("half-chain cut needs even L, got {l}")));
    }
    if psi.nrows() != 1 << l {
        return Err(Error::DimensionMismatch { left: psi.nrows(), right: 1 << l });
    }
    let side = 1usize << (l / 2);
    // Row index: left half (most significant bits).
    let m = Mat::<c64>::from_fn(side, side, |a, b| psi[a * side + b]);
    let sv = m.singular_values().map_err(|_| Error::EigenSolver)?;
    let s: f64 = sv
        .iter()
        .map(|x| x * x)
        .filter(|&p| p >= SCHMIDT_FLOOR)
        .map(|p| -p * p.ln())
        .sum();
    Ok(s.max(0.0) / (l / 2) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StroboscopicSample {
    pub n: usize,
    pub t: f64,
    pub s_exact: f64,
    pub s_eff: f64,
}

impl StroboscopicSample {
    pub const CSV_HEADER: [&'static str; 4] = ["n", "t", "s_exact", "s_eff"];

    pub fn csv_row(&self) -> [f64; 4] {
        [self.n as f64, self.t, self.s_exact, self.s_eff]
    }
}

/// Entropy densities of the polarized state at `t = nT`, `n = 0..=n_periods`,
/// under the exact drive and under `h0_flow`.
pub fn stroboscopic_series_from(
    params: &SpinChainParams,
    h0_flow: MatRef<'_, f64>,
    n_periods: usize,
    substeps: usize,
) -> Result<Vec<StroboscopicSample>> {
    let l = params.length;
    let sp = Splitting::new(params, substeps)?;
    let eff = EffectiveEvolution::new(h0_flow)?;
    let psi0 = polarized_state(l)?;
    let t_period = period(params.omega);
    let mut exact: Vec<c64> = (0..psi0.nrows()).map(|i| psi0[i]).collect();
    let mut out = Vec::with_capacity(n_periods + 1);
    for n in 0..=n_periods {
        if n > 0 {
            sp.propagate(&mut exact, (n - 1) as f64 * t_period, substeps);
        }
        let t = n as f64 * t_period;
        let psi_exact = Col::from_fn(exact.len(), |i| exact[i]);
        let psi_eff = eff.apply(&psi0, t)?;
        let s_exact = half_chain_entropy(&psi_exact, l)?;
        let s_eff = half_chain_entropy(&psi_eff, l)?;
        debug_assert!((0.0..=LN_2 + 1e-12).contains(&s_exact) && (0.0..=LN_2 + 1e-12).contains(&s_eff));
        out.push(StroboscopicSample { n, t, s_exact, s_eff });
    }
    Ok(out)
}

/// Runs the flow to `cfg.lambda_max` and then [`stroboscopic_series_from`].
pub fn stroboscopic_series(
    params: &SpinChainParams,
    cfg: &FlowConfig,
    n_periods: usize,
    substeps: usize,
) -> Result<Vec<StroboscopicSample>> {
    let (h0, _) = flowed_static(params, cfg)?;
    stroboscopic_series_from(params, h0.as_ref(), n_periods, substeps)
}

/// `exp(-i H0(0) T)` for comparisons in the undriven limit.
pub fn static_propagator(params: &SpinChainParams) -> Result<OperatorMatrix> {
    let h = to_complex(build_static(params)?.as_ref());
    expm_hermitian(h.as_ref(), c64::new(0.0, -period(params.omega)))
}
