//! Closed-form references for the flow: the Bessel-kernel early-time
//! solution, Floquet-Magnus terms in the co-moving frame, the two-level
//! instanton and order-of-magnitude timescales.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowTrajectory;
use crate::hilbert::{spin_product, Pauli, SpinChainParams};
use crate::opkernel::{axpy, c64, commutator, eigh, EigenDecomposition, OperatorMatrix, Scalar};
use crate::optimize::nelder_mead_2d;

/// Below this `|z|` the kernel is replaced by its limit value 1.
pub const KERNEL_Z_CUT: f64 = 1e-6;

/// Below this contracted argument the kernel equals `J0(|z|)` to machine precision.
const KERNEL_U_FLOOR: f64 = 1e-100;

/// Default Fourier cutoff for co-moving frame reconstructions.
pub const DEFAULT_M_MAX: i32 = 12;

/// Bessel function of the first kind for any integer order.
pub fn bessel_j(m: i32, x: f64) -> f64 {
    let v = match m.unsigned_abs() {
        0 => libm::j0(x),
        1 => libm::j1(x),
        n => libm::jn(n as i32, x),
    };
    if m < 0 && m % 2 != 0 {
        -v
    } else {
        v
    }
}

/// Early-time flow kernel `f(z, lambda)`, even in `z`, with `f(z, 0) = 1`
/// and `f(z, inf) = J0(z)`.
pub fn flow_kernel_f(z: f64, lambda: f64, omega: f64) -> f64 {
    let z = z.abs();
    if z <= KERNEL_Z_CUT {
        return 1.0;
    }
    let u = z * (-omega * lambda).exp();
    if u < KERNEL_U_FLOOR {
        return libm::j0(z);
    }
    FRAC_PI_2 * u * (libm::j1(u) * libm::y0(z) - libm::y1(u) * libm::j0(z))
}

/// Eigenbasis of `H1(0)` with the scaled adjoint spectrum
/// `z_mn = 2 (e_m - e_n) / Omega`.
#[derive(Clone, Debug)]
pub struct AdjointSpectralBasis<T> {
    pub basis: EigenDecomposition<T>,
    pub zgrid: Mat<f64>,
    pub omega: f64,
}

impl<T: Scalar> AdjointSpectralBasis<T> {
    pub fn new(h1_init: MatRef<'_, T>, omega: f64) -> Result<Self> {
        let basis = eigh(h1_init)?;
        let e = &basis.values;
        let n = e.len();
        let zgrid = Mat::<f64>::from_fn(n, n, |m, k| 2.0 * (e[m] - e[k]) / omega);
        Ok(Self { basis, zgrid, omega })
    }

    /// Applies `f(z, lambda)` elementwise to `h0_eig`, an operator already in
    /// this eigenbasis, and returns the result in the original basis.
    pub fn evolve_in_basis(&self, h0_eig: MatRef<'_, T>, lambda: f64) -> Result<Mat<T>> {
        let n = self.zgrid.nrows();
        let weighted = Mat::<T>::from_fn(n, n, |m, k| {
            h0_eig[(m, k)].scaled(flow_kernel_f(self.zgrid[(m, k)], lambda, self.omega))
        });
        self.basis.from_eigenbasis(weighted.as_ref())
    }
}

/// Leading-order solution `H0(lambda) = f(z_hat, lambda) H0(0)` with `z_hat`
/// the scaled adjoint action of `H1(0)`, evaluated spectrally.
pub fn early_time_h0<T: Scalar>(
    h0_init: MatRef<'_, T>,
    h1_init: MatRef<'_, T>,
    omega: f64,
    lambda: f64,
) -> Result<Mat<T>> {
    let adj = AdjointSpectralBasis::new(h1_init, omega)?;
    let h0_eig = adj.basis.to_eigenbasis(h0_init)?;
    adj.evolve_in_basis(h0_eig.as_ref(), lambda)
}

fn require_zz_only(params: &SpinChainParams) -> Result<()> {
    params.validate()?;
    if params.bx != 0.0 {
        return Err(Error::Unsupported(format!(
            "co-moving frame expansion needs Bx = 0, got {}",
            params.bx
        )));
    }
    Ok(())
}

/// Bessel argument of the co-moving frame, `4 A / Omega`.
pub fn magnus_alpha(params: &SpinChainParams) -> f64 {
    4.0 * params.a / params.omega
}

fn fourier_h_unchecked(m: i32, params: &SpinChainParams) -> OperatorMatrix {
    let l = params.length;
    let dim = params.dim();
    let jm = bessel_j(m, magnus_alpha(params));
    let delta = if m == 0 { 1.0 } else { 0.0 };
    let even = if m % 2 == 0 { 1.0 } else { 0.0 };
    let c_yy = delta - even * jm;
    let c_zz = delta + even * jm;
    // (1 - (-1)^m) / (2i) J_m; the (YZ + ZY) / i product is real.
    let c_mixed = c64::new(0.0, -(1.0 - even) * jm);
    let mut out = Mat::<c64>::zeros(dim, dim);
    for (i, j, coupling) in params.bonds() {
        let pre = -coupling / 2.0;
        if c_yy != 0.0 {
            axpy(&mut out, pre * c_yy, &spin_product(l, &[(i, Pauli::Y), (j, Pauli::Y)]));
        }
        if c_zz != 0.0 {
            axpy(&mut out, pre * c_zz, &spin_product(l, &[(i, Pauli::Z), (j, Pauli::Z)]));
        }
        if c_mixed.im != 0.0 {
            let mut yz = spin_product(l, &[(i, Pauli::Y), (j, Pauli::Z)]);
            axpy(&mut yz, 1.0, &spin_product(l, &[(i, Pauli::Z), (j, Pauli::Y)]));
            let w = c_mixed * pre;
            for col in 0..dim {
                for row in 0..dim {
                    out[(row, col)] += w * yz[(row, col)];
                }
            }
        }
    }
    out
}

/// Fourier component `h_m` of the co-moving Hamiltonian.
pub fn magnus_fourier_h(m: i32, params: &SpinChainParams) -> Result<OperatorMatrix> {
    require_zz_only(params)?;
    Ok(fourier_h_unchecked(m, params))
}

/// Time-averaged co-moving Hamiltonian `h_0`, the leading Floquet-Magnus term.
pub fn magnus_leading(params: &SpinChainParams) -> Result<OperatorMatrix> {
    magnus_fourier_h(0, params)
}

/// Co-moving Hamiltonian at time `t` reconstructed from `|m| <= m_max`.
pub fn comoving_hamiltonian(params: &SpinChainParams, t: f64, m_max: i32) -> Result<OperatorMatrix> {
    require_zz_only(params)?;
    let dim = params.dim();
    let mut out = Mat::<c64>::zeros(dim, dim);
    for m in -m_max..=m_max {
        let phase = c64::new(0.0, m as f64 * params.omega * t).exp();
        let h = fourier_h_unchecked(m, params);
        for col in 0..dim {
            for row in 0..dim {
                out[(row, col)] += phase * h[(row, col)];
            }
        }
    }
    Ok(out)
}

/// First Magnus correction `-sum_{0<|m|<=m_max} [h_m, h_0] / (m Omega)`.
pub fn magnus_first_order(params: &SpinChainParams, m_max: i32) -> Result<OperatorMatrix> {
    if m_max < 1 {
        return Err(Error::InvalidParameter(format!("m_max must be >= 1, got {m_max}")));
    }
    require_zz_only(params)?;
    let h0 = fourier_h_unchecked(0, params);
    let dim = params.dim();
    let mut out = Mat::<c64>::zeros(dim, dim);
    for m in (-m_max..=m_max).filter(|&m| m != 0) {
        let hm = fourier_h_unchecked(m, params);
        let c = commutator(hm.as_ref(), h0.as_ref())?;
        axpy(&mut out, -1.0 / (m as f64 * params.omega), &c);
    }
    Ok(out)
}

/// Diagonal pair and coupling of the two-level reduction of the flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstantonState {
    pub em: f64,
    pub en: f64,
    pub t: c64,
}

fn instanton_rhs(s: &InstantonState, omega: f64) -> InstantonState {
    let w = 2.0 * s.t.norm_sqr();
    InstantonState {
        em: w,
        en: -w,
        t: s.t * (-omega - s.em + s.en),
    }
}

fn instanton_axpy(a: &InstantonState, h: f64, k: &InstantonState) -> InstantonState {
    InstantonState {
        em: a.em + h * k.em,
        en: a.en + h * k.en,
        t: a.t + k.t * h,
    }
}

/// One RK4 step of the two-level flow.
pub fn instanton_reduced_step(s: InstantonState, omega: f64, step: f64) -> Result<InstantonState> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {step}")));
    }
    let k1 = instanton_rhs(&s, omega);
    let k2 = instanton_rhs(&instanton_axpy(&s, step / 2.0, &k1), omega);
    let k3 = instanton_rhs(&instanton_axpy(&s, step / 2.0, &k2), omega);
    let k4 = instanton_rhs(&instanton_axpy(&s, step, &k3), omega);
    let comb = InstantonState {
        em: k1.em + 2.0 * k2.em + 2.0 * k3.em + k4.em,
        en: k1.en + 2.0 * k2.en + 2.0 * k3.en + k4.en,
        t: k1.t + k2.t * 2.0 + k3.t * 2.0 + k4.t,
    };
    Ok(instanton_axpy(&s, step / 6.0, &comb))
}

/// Gap `E_n - E_m` and coupling modulus of the exact two-level solution.
pub fn instanton_closed_form(omega: f64, omega_tilde: f64, lambda_tilde: f64, lambda: f64) -> (f64, f64) {
    let x = omega_tilde * (lambda - lambda_tilde);
    (omega - omega_tilde * x.tanh(), omega_tilde / (2.0 * x.cosh()))
}

/// Integration constants `(omega_tilde, lambda_tilde)` matching the state at
/// `lambda`.
pub fn instanton_constants(s: &InstantonState, omega: f64, lambda: f64) -> Result<(f64, f64)> {
    let detuning = s.en - s.em - omega;
    let omega_tilde = (detuning * detuning + 4.0 * s.t.norm_sqr()).sqrt();
    if !(omega_tilde > 0.0) {
        return Err(Error::InvalidParameter("degenerate two-level data".into()));
    }
    // sinh(omega_tilde (lambda - lambda_tilde)) = -detuning / (2 |t|)
    let amp = s.t.norm();
    if amp == 0.0 {
        return Err(Error::InvalidParameter("uncoupled two-level data".into()));
    }
    Ok((omega_tilde, lambda - (-detuning / (2.0 * amp)).asinh() / omega_tilde))
}

/// Sech fit of an isolated peak of `||H1||`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstantonFit {
    pub omega_tilde: f64,
    pub lambda_tilde: f64,
    pub rss: f64,
    /// `sqrt(rss / sum data^2)` over the window.
    pub relative_rms: f64,
    pub window: (f64, f64),
    /// `|Delta ||H0|||` across the window divided by the larger drift in the
    /// adjacent windows of equal length; `None` if a neighbor is missing.
    pub h0_step_ratio: Option<f64>,
    pub concurrent_h0_step: bool,
}

/// Ratio above which an `||H0||` jump counts as concurrent with a peak.
pub const CONCURRENT_STEP_RATIO: f64 = 10.0;

fn sech_model(a: f64, b: f64, x: f64) -> f64 {
    a / (2.0 * (a * (x - b)).cosh())
}

/// Indices of local maxima of `v` standing at least `ratio` times above the
/// deepest point between them and the nearest higher sample (or the end of
/// the data) on each side.
pub fn isolated_peaks(v: &[f64], ratio: f64) -> Vec<usize> {
    let n = v.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if !(v[i] > v[i - 1] && v[i] >= v[i + 1]) {
            continue;
        }
        let mut left = v[i];
        for k in (0..i).rev() {
            if v[k] > v[i] {
                break;
            }
            left = left.min(v[k]);
        }
        let mut right = v[i];
        for &x in &v[i + 1..] {
            if x > v[i] {
                break;
            }
            right = right.min(x);
        }
        if v[i] >= ratio * left.max(right) {
            out.push(i);
        }
    }
    out
}

fn window_indices(lambdas: &[f64], lo: f64, hi: f64) -> (usize, usize) {
    let start = lambdas.partition_point(|&x| x < lo);
    let end = lambdas.partition_point(|&x| x <= hi);
    (start, end)
}

fn h0_step_ratio(lambdas: &[f64], n0: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let interp = |x: f64| -> Option<f64> {
        if x < lambdas[0] || x > *lambdas.last()? {
            return None;
        }
        let k = lambdas.partition_point(|&y| y < x).min(lambdas.len() - 1);
        if k == 0 {
            return Some(n0[0]);
        }
        let (x0, x1) = (lambdas[k - 1], lambdas[k]);
        let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
        Some(n0[k - 1] + w * (n0[k] - n0[k - 1]))
    };
    let width = hi - lo;
    let step = (interp(hi)? - interp(lo)?).abs();
    let left = (interp(lo)? - interp(lo - width)?).abs();
    let right = (interp(hi + width)? - interp(hi)?).abs();
    Some(step / left.max(right))
}

/// Fits `(a/2) sech(a (lambda - b))` to `||H1||` on the single peak inside
/// `window`. The fit window is narrowed to `b0 +- 5/a0` around the raw peak.
pub fn fit_instanton(traj: &FlowTrajectory, window: (f64, f64)) -> Result<InstantonFit> {
    let lambdas = traj.lambdas();
    let n1 = traj.norms_h1();
    let (s, e) = window_indices(&lambdas, window.0, window.1);
    if e < s + 3 {
        return Err(Error::NoPeak { lo: window.0, hi: window.1 });
    }
    let (peak, &height) = n1[s..e]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty window");
    let peak = s + peak;
    if peak == s || peak == e - 1 || !(height > 0.0) {
        return Err(Error::NoPeak { lo: window.0, hi: window.1 });
    }
    fit_sech(&lambdas, &n1, &traj.norms_h0(), lambdas[peak], height, window)
}

/// Sech fit on raw samples given an initial peak location and height.
pub fn fit_sech(
    lambdas: &[f64],
    n1: &[f64],
    n0: &[f64],
    peak_at: f64,
    height: f64,
    bounds: (f64, f64),
) -> Result<InstantonFit> {
    let a0 = 2.0 * height;
    let lo = (peak_at - 5.0 / a0).max(bounds.0);
    let hi = (peak_at + 5.0 / a0).min(bounds.1);
    let (s, e) = window_indices(lambdas, lo, hi);
    if e < s + 3 {
        return Err(Error::FitDiverged(format!(
            "fewer than three samples in [{lo}, {hi}]"
        )));
    }
    let xs = &lambdas[s..e];
    let ys = &n1[s..e];
    let rss = |p: [f64; 2]| -> f64 {
        if !(p[0] > 0.0) {
            return f64::INFINITY;
        }
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| (sech_model(p[0], p[1], x) - y).powi(2))
            .sum()
    };
    let res = nelder_mead_2d(rss, [a0, peak_at], [0.1 * a0, 0.5 / a0], 1e-8, 20_000);
    let [a, b] = res.x;
    if !res.converged || !(a > 0.0) || !a.is_finite() || !(lo..=hi).contains(&b) {
        return Err(Error::FitDiverged(format!("a = {a}, b = {b}, window [{lo}, {hi}]")));
    }
    let norm: f64 = ys.iter().map(|y| y * y).sum();
    let h0_step_ratio = h0_step_ratio(lambdas, n0, lo, hi);
    Ok(InstantonFit {
        omega_tilde: a,
        lambda_tilde: b,
        rss: res.value,
        relative_rms: (res.value / norm).sqrt(),
        window: (lo, hi),
        h0_step_ratio,
        concurrent_h0_step: h0_step_ratio.is_some_and(|r| r > CONCURRENT_STEP_RATIO),
    })
}

/// Order-of-magnitude flow timescales for a local energy scale `jeff`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimescaleEstimate {
    pub lambda_min_est: f64,
    /// Only flip lengths with `l * jeff > Omega` appear.
    pub lambda_th: BTreeMap<usize, f64>,
    #[serde(rename = "Jeff")]
    pub jeff: f64,
}

/// `lambda_min ~ ln(Omega/J)/J` and
/// `lambda_th(l) ~ (l ln l + l ln(Omega/J)) / (l J - Omega)`.
pub fn estimate_timescales(
    omega: f64,
    jeff: f64,
    lrange: impl IntoIterator<Item = usize>,
) -> Result<TimescaleEstimate> {
    if !(jeff > 0.0 && omega > jeff) {
        return Err(Error::InvalidParameter(format!(
            "need Omega > Jeff > 0, got Omega = {omega}, Jeff = {jeff}"
        )));
    }
    let log_ratio = (omega / jeff).ln();
    let lambda_th = lrange
        .into_iter()
        .filter(|&l| l as f64 * jeff > omega)
        .map(|l| {
            let lf = l as f64;
            (l, (lf * lf.ln() + lf * log_ratio) / (lf * jeff - omega))
        })
        .collect();
    Ok(TimescaleEstimate {
        lambda_min_est: log_ratio / jeff,
        lambda_th,
        jeff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_charge, build_drive, build_static, charge_commutator_norm, Boundary};
    use crate::opkernel::{frobenius_distance, frobenius_norm, hermiticity_defect, to_complex};

    const J0_ZEROS: [f64; 3] = [2.404_825_557_695_773, 5.520_078_110_286_311, 8.653_727_912_911_013];

    fn chain(l: usize, j2: f64, a: f64, omega: f64) -> SpinChainParams {
        SpinChainParams {
            length: l,
            j: 1.0,
            j2,
            bx: 0.0,
            a,
            omega,
            // Periodic second-neighbor bonds need L >= 5.
            boundary: if l >= 5 { Boundary::Periodic } else { Boundary::Open },
        }
    }

    #[test]
    fn bessel_values_and_negative_orders() {
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_5).abs() < 1e-15);
        for z in J0_ZEROS {
            assert!(bessel_j(0, z).abs() < 1e-15);
        }
        for m in 1..6 {
            let x = 2.7;
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            assert!((bessel_j(-m, x) - sign * bessel_j(m, x)).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_is_one_at_zero_flow_time() {
        for z in [0.5, 2.0, 7.3, -2.0] {
            assert!((flow_kernel_f(z, 0.0, 3.0) - 1.0).abs() < 1e-10);
        }
        for lambda in [0.0, 0.3, 10.0] {
            assert_eq!(flow_kernel_f(0.0, lambda, 2.0), 1.0);
        }
    }

    #[test]
    fn kernel_tends_to_j0() {
        let z = 2.4048;
        let f = flow_kernel_f(z, 30.0, 1.0);
        assert!((f - libm::j0(z)).abs() <= 1e-8);
        assert_eq!(flow_kernel_f(z, 1e4, 1.0), libm::j0(z));
    }

    #[test]
    fn kernel_just_above_cutoff_is_near_one() {
        assert!((flow_kernel_f(1.01e-6, 0.5, 2.0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn early_time_trivial_limits() {
        let p = chain(4, 0.2, 2.4, 4.0);
        let h0 = build_static(&p).unwrap();
        let h1 = build_drive(&p).unwrap();
        let at0 = early_time_h0(h0.as_ref(), h1.as_ref(), p.omega, 0.0).unwrap();
        assert!(frobenius_distance(at0.as_ref(), h0.as_ref()).unwrap() < 1e-10);
        let zero = Mat::<f64>::zeros(16, 16);
        let flat = early_time_h0(h0.as_ref(), zero.as_ref(), p.omega, 0.7).unwrap();
        assert!(frobenius_distance(flat.as_ref(), h0.as_ref()).unwrap() < 1e-10);
        let late = early_time_h0(h0.as_ref(), h1.as_ref(), p.omega, 0.7).unwrap();
        assert!(hermiticity_defect(late.as_ref()) < 1e-10);
    }

    #[test]
    fn early_time_commuting_data_is_static() {
        let l = 4;
        let charge = build_charge(l).unwrap();
        // Heisenberg ring plus a uniform x field commutes with the total x spin.
        let mut h0c = Mat::<c64>::zeros(16, 16);
        for s in 0..l {
            for p in [Pauli::X, Pauli::Y, Pauli::Z] {
                axpy(&mut h0c, 1.0, &spin_product(l, &[(s, p), ((s + 1) % l, p)]));
            }
        }
        let mut h0 = crate::opkernel::to_real(h0c.as_ref(), 1e-15).unwrap();
        axpy(&mut h0, 0.7, &charge);
        let h1 = charge.clone();
        for lambda in [0.1, 1.0, 5.0] {
            let out = early_time_h0(h0.as_ref(), h1.as_ref(), 3.0, lambda).unwrap();
            assert!(frobenius_distance(out.as_ref(), h0.as_ref()).unwrap() < 1e-10);
        }
    }

    #[test]
    fn zgrid_is_antisymmetric() {
        let p = chain(3, 0.0, 1.3, 2.0);
        let adj = AdjointSpectralBasis::new(build_drive(&p).unwrap().as_ref(), 2.0).unwrap();
        let z = &adj.zgrid;
        for m in 0..8 {
            for n in 0..8 {
                assert_eq!(z[(m, n)], -z[(n, m)]);
            }
        }
    }

    #[test]
    fn magnus_leading_commutes_with_charge_at_bessel_zeros() {
        let omega = 10.0;
        for z in J0_ZEROS {
            let p = chain(6, 0.2, z * omega / 4.0, omega);
            let h0 = magnus_leading(&p).unwrap();
            assert!(charge_commutator_norm(h0.as_ref()).unwrap() < 1e-12, "alpha = {z}");
        }
    }

    #[test]
    fn magnus_leading_without_drive_is_static_part() {
        let p = chain(5, 0.3, 0.0, 5.0);
        let h0 = magnus_leading(&p).unwrap();
        let st = to_complex(build_static(&p).unwrap().as_ref());
        assert!(frobenius_distance(h0.as_ref(), st.as_ref()).unwrap() < 1e-14);
    }

    #[test]
    fn magnus_rejects_transverse_field() {
        let mut p = chain(4, 0.0, 1.0, 5.0);
        p.bx = 0.1;
        assert!(matches!(magnus_leading(&p), Err(Error::Unsupported(_))));
        assert!(matches!(magnus_first_order(&p, 4), Err(Error::Unsupported(_))));
    }

    #[test]
    fn fourier_components_pairwise_commute() {
        let p = chain(4, 0.2, 3.0, 5.0);
        for m in [1, 2] {
            let a = magnus_fourier_h(m, &p).unwrap();
            let b = magnus_fourier_h(-m, &p).unwrap();
            let c = commutator(a.as_ref(), b.as_ref()).unwrap();
            assert!(frobenius_norm(c.as_ref()) < 1e-12, "m = {m}");
        }
    }

    #[test]
    fn fourier_series_reproduces_static_part_at_t0() {
        let p = chain(4, 0.2, 0.601 * 5.0, 5.0);
        let h = comoving_hamiltonian(&p, 0.0, DEFAULT_M_MAX).unwrap();
        let st = to_complex(build_static(&p).unwrap().as_ref());
        let err = frobenius_distance(h.as_ref(), st.as_ref()).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn fourier_components_are_real() {
        let p = chain(4, 0.2, 3.0, 5.0);
        for m in -3..=3 {
            let h = magnus_fourier_h(m, &p).unwrap();
            assert!(crate::opkernel::to_real(h.as_ref(), 1e-15).is_some());
        }
    }

    #[test]
    fn first_order_term_hermitian_and_scaling() {
        let p = chain(4, 0.2, 0.601 * 5.0, 5.0);
        let h1 = magnus_first_order(&p, 8).unwrap();
        assert!(hermiticity_defect(h1.as_ref()) < 1e-10);
        let p2 = chain(4, 0.2, 0.601 * 10.0, 10.0);
        let h2 = magnus_first_order(&p2, 8).unwrap();
        let r = frobenius_norm(h1.as_ref()) / frobenius_norm(h2.as_ref());
        assert!((r - 2.0).abs() < 1e-10, "{r}");
        let p0 = chain(4, 0.2, 0.0, 5.0);
        assert!(frobenius_norm(magnus_first_order(&p0, 8).unwrap().as_ref()) < 1e-14);
        assert!(magnus_first_order(&p, 0).is_err());
    }

    #[test]
    fn instanton_trivial_and_conservation() {
        let s = InstantonState { em: 0.3, en: -0.2, t: c64::new(0.0, 0.0) };
        assert_eq!(instanton_reduced_step(s, 1.0, 0.01).unwrap(), s);
        assert!(instanton_reduced_step(s, 1.0, 0.0).is_err());
        let mut s = InstantonState { em: -0.4, en: 0.1, t: c64::new(0.3, 0.2) };
        let sum = s.em + s.en;
        for _ in 0..1000 {
            s = instanton_reduced_step(s, 1.0, 0.01).unwrap();
        }
        assert!((s.em + s.en - sum).abs() < 1e-10);
    }

    #[test]
    fn instanton_matches_closed_form() {
        let omega = 1.0;
        let (ot, lt) = (0.8, 6.0);
        let lambda0 = lt - 10.0 / ot;
        let (gap, amp) = instanton_closed_form(omega, ot, lt, lambda0);
        let mut s = InstantonState { em: -gap / 2.0, en: gap / 2.0, t: c64::new(amp, 0.0) };
        let (ot_fit, lt_fit) = instanton_constants(&s, omega, lambda0).unwrap();
        assert!((ot_fit - ot).abs() < 1e-12 && (lt_fit - lt).abs() < 1e-9);
        let h = 1e-3;
        let n = (20.0 / ot / h).round() as usize;
        let mut worst: f64 = 0.0;
        for k in 1..=n {
            s = instanton_reduced_step(s, omega, h).unwrap();
            let (g, a) = instanton_closed_form(omega, ot, lt, lambda0 + k as f64 * h);
            worst = worst.max((s.en - s.em - g).abs()).max((s.t.norm() - a).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn instanton_closed_form_limits() {
        let (g, a) = instanton_closed_form(2.0, 0.6, 4.0, 4.0);
        assert_eq!((g, a), (2.0, 0.3));
        let (g_lo, a_lo) = instanton_closed_form(2.0, 0.6, 4.0, -1e3);
        let (g_hi, a_hi) = instanton_closed_form(2.0, 0.6, 4.0, 1e3);
        assert!((g_lo - 2.6).abs() < 1e-12 && (g_hi - 1.4).abs() < 1e-12);
        assert!(a_lo < 1e-12 && a_hi < 1e-12);
        assert!(((g_hi - g_lo) + 2.0 * 0.6).abs() < 1e-12);
    }

    fn synthetic(a: f64, b: f64, scale: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..4000).map(|k| scale * (100.0 + 0.01 * k as f64)).collect();
        // Deterministic pseudo-noise at relative level 1e-4.
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let noise = 1e-4 * ((k as f64 * 12.9898).sin() * 43_758.545_3).fract();
                sech_model(a / scale, b * scale, x) * (1.0 + noise)
            })
            .collect();
        let n0: Vec<f64> = xs.iter().map(|&x| 1.0 - (a * (x / scale - b)).tanh()).collect();
        (xs, ys, n0)
    }

    #[test]
    fn sech_fit_recovers_parameters() {
        let (xs, ys, n0) = synthetic(1.7, 120.0, 1.0);
        let peak = isolated_peaks(&ys, 10.0);
        assert_eq!(peak.len(), 1);
        let k = peak[0];
        let fit = fit_sech(&xs, &ys, &n0, xs[k], ys[k], (xs[0], xs[xs.len() - 1])).unwrap();
        assert!((fit.omega_tilde / 1.7 - 1.0).abs() < 0.01);
        assert!((fit.lambda_tilde / 120.0 - 1.0).abs() < 0.01);
        assert!(fit.relative_rms < 0.05);
        assert!(fit.concurrent_h0_step, "{:?}", fit.h0_step_ratio);
    }

    #[test]
    fn sech_fit_is_covariant_under_rescaling() {
        let s = 2.5;
        let (xs, ys, n0) = synthetic(1.7, 120.0, s);
        let k = isolated_peaks(&ys, 10.0)[0];
        let fit = fit_sech(&xs, &ys, &n0, xs[k], ys[k], (xs[0], xs[xs.len() - 1])).unwrap();
        assert!((fit.omega_tilde * s / 1.7 - 1.0).abs() < 0.01);
        assert!((fit.lambda_tilde / (s * 120.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn isolated_peaks_ignore_shallow_wiggles() {
        let v = [1.0, 0.1, 0.12, 0.11, 0.2, 5.0, 0.3, 0.01];
        assert_eq!(isolated_peaks(&v, 10.0), vec![5]);
    }

    #[test]
    fn timescale_examples() {
        let e = std::f64::consts::E;
        let t = estimate_timescales(e * 0.5, 0.5, 1..=20).unwrap();
        assert!((t.lambda_min_est - 2.0).abs() < 1e-14);
        assert!(t.lambda_th.keys().all(|&l| l as f64 * 0.5 > e * 0.5));
        let t = estimate_timescales(2.0, 0.47, 1..=200).unwrap();
        assert!((t.lambda_min_est - 3.08).abs() < 0.01);
        let best = t.lambda_th.values().cloned().fold(f64::INFINITY, f64::min);
        assert!(best >= t.lambda_min_est && best <= 10.0 * t.lambda_min_est, "{best}");
        assert!(estimate_timescales(0.4, 0.47, 1..=4).is_err());
    }
}
