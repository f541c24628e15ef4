//! Spin-1/2 chain operators on the `2^L` computational basis.
//!
//! Conventions: `S = sigma / 2`; site 0 is the most significant bit of the
//! basis index; bit value 0 is `Sz = +1/2`.

use faer::{Col, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opkernel::{c64, OperatorMatrix, RealOperator, Scalar};

/// Largest chain handled by the dense builders.
pub const MAX_SITES: usize = 12;

/// Normalized many-body state in the computational basis.
pub type StateVector = Col<c64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
    Open,
}

/// Driven chain `H(t) = H0 + 2A cos(Omega t) sum_i Sx_i` with
/// `H0 = sum_i [-J Sz_i Sz_{i+1} - J2 Sz_i Sz_{i+2} + Bx Sx_i]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinChainParams {
    #[serde(rename = "L")]
    pub length: usize,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "J2", default)]
    pub j2: f64,
    #[serde(rename = "Bx", default)]
    pub bx: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "Omega")]
    pub omega: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl SpinChainParams {
    pub fn dim(&self) -> usize {
        1 << self.length
    }

    /// Drive amplitude over frequency.
    pub fn ratio(&self) -> f64 {
        self.a / self.omega
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.a = ratio * self.omega;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.length < 2 || self.length > MAX_SITES {
            return bad(format!("L = {} outside [2, {MAX_SITES}]", self.length));
        }
        if self.boundary == Boundary::Periodic {
            if self.j2 != 0.0 && self.length < 5 {
                return bad(format!("periodic chain with J2 != 0 needs L >= 5, got {}", self.length));
            }
            if self.j != 0.0 && self.length < 3 {
                return bad(format!("periodic chain with J != 0 needs L >= 3, got {}", self.length));
            }
        }
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return bad(format!("Omega must be positive and finite, got {}", self.omega));
        }
        for (name, v) in [("J", self.j), ("J2", self.j2), ("Bx", self.bx), ("A", self.a)] {
            if !v.is_finite() {
                return bad(format!("{name} is not finite"));
            }
        }
        Ok(())
    }

    /// Bonds `(i, j, coupling)` of the ZZ part, ordered by distance then site.
    pub fn bonds(&self) -> Vec<(usize, usize, f64)> {
        let l = self.length;
        let mut out = Vec::new();
        for (d, coupling) in [(1usize, self.j), (2usize, self.j2)] {
            if coupling == 0.0 {
                continue;
            }
            for i in 0..l {
                match self.boundary {
                    Boundary::Periodic => out.push((i, (i + d) % l, coupling)),
                    Boundary::Open if i + d < l => out.push((i, i + d, coupling)),
                    Boundary::Open => {}
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
}

#[inline]
fn site_mask(l: usize, site: usize) -> usize {
    1 << (l - 1 - site)
}

/// `+1/2` or `-1/2` for the z-spin of `site` in basis state `state`.
#[inline]
pub fn sz_value(l: usize, site: usize, state: usize) -> f64 {
    if state & site_mask(l, site) == 0 {
        0.5
    } else {
        -0.5
    }
}

/// Product of spin operators `prod_k S^{p_k}_{s_k}` on distinct sites.
pub fn spin_product(l: usize, ops: &[(usize, Pauli)]) -> OperatorMatrix {
    let dim = 1usize << l;
    let mut m = Mat::<c64>::zeros(dim, dim);
    for col in 0..dim {
        let mut row = col;
        let mut amp = c64::new(1.0, 0.0);
        // Rightmost factor acts first; single-site factors commute anyway.
        for &(site, p) in ops.iter().rev() {
            let mask = site_mask(l, site);
            let up = row & mask == 0;
            match p {
                Pauli::X => {
                    row ^= mask;
                    amp *= 0.5;
                }
                Pauli::Y => {
                    row ^= mask;
                    amp *= if up { c64::new(0.0, 0.5) } else { c64::new(0.0, -0.5) };
                }
                Pauli::Z => {
                    amp *= if up { 0.5 } else { -0.5 };
                }
            }
        }
        m[(row, col)] += amp;
    }
    m
}

/// `sum_i Sx_i` scaled by `coeff`, into a real matrix.
fn add_total_sx(m: &mut RealOperator, l: usize, coeff: f64) {
    if coeff == 0.0 {
        return;
    }
    let dim = 1usize << l;
    for col in 0..dim {
        for site in 0..l {
            m[(col ^ site_mask(l, site), col)] += 0.5 * coeff;
        }
    }
}

/// Diagonal ZZ energy of a basis state.
pub fn zz_energy(params: &SpinChainParams, bonds: &[(usize, usize, f64)], state: usize) -> f64 {
    let l = params.length;
    bonds
        .iter()
        .map(|&(i, j, c)| -c * sz_value(l, i, state) * sz_value(l, j, state))
        .sum()
}

/// Diagonal of the ZZ part of the static Hamiltonian.
pub fn zz_diagonal(params: &SpinChainParams) -> Result<Vec<f64>> {
    params.validate()?;
    let bonds = params.bonds();
    Ok((0..params.dim()).map(|s| zz_energy(params, &bonds, s)).collect())
}

/// Static part of the drive at zero flow time, including the transverse field.
/// Real in the computational basis; diagonal when `Bx = 0`.
pub fn build_static(params: &SpinChainParams) -> Result<RealOperator> {
    let diag = zz_diagonal(params)?;
    let dim = params.dim();
    let mut m = Mat::<f64>::zeros(dim, dim);
    for (s, e) in diag.into_iter().enumerate() {
        m[(s, s)] = e;
    }
    add_total_sx(&mut m, params.length, params.bx);
    Ok(m)
}

/// Oscillating part at zero flow time, `A sum_i Sx_i`.
pub fn build_drive(params: &SpinChainParams) -> Result<RealOperator> {
    params.validate()?;
    let dim = params.dim();
    let mut m = Mat::<f64>::zeros(dim, dim);
    add_total_sx(&mut m, params.length, params.a);
    Ok(m)
}

/// Total `Sx`, the charge conserved at freezing.
pub fn build_charge(l: usize) -> Result<RealOperator> {
    if l == 0 || l > MAX_SITES {
        return Err(Error::InvalidParameter(format!("L = {l} outside [1, {MAX_SITES}]")));
    }
    let dim = 1usize << l;
    let mut m = Mat::<f64>::zeros(dim, dim);
    add_total_sx(&mut m, l, 1.0);
    Ok(m)
}

/// `||[M, sum_i Sx_i]||_F` without forming the charge: each `Sx_i` is a
/// bit flip, so the commutator costs `O(L 4^L)`.
pub fn charge_commutator_norm<T: Scalar>(m: MatRef<'_, T>) -> Result<f64> {
    let dim = m.nrows();
    if dim != m.ncols() || !dim.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "expected a square matrix of power-of-two size, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let l = dim.trailing_zeros() as usize;
    let mut acc = 0.0;
    for j in 0..dim {
        for i in 0..dim {
            let mut c = T::from_real(0.0);
            for site in 0..l {
                let mask = site_mask(l, site);
                c = c + m[(i, j ^ mask)] - m[(i ^ mask, j)];
            }
            acc += c.modulus_sq();
        }
    }
    Ok(0.5 * acc.sqrt())
}

/// `|x;+>^{otimes L}`: every amplitude equals `2^{-L/2}`.
pub fn polarized_state(l: usize) -> Result<StateVector> {
    if l == 0 || l > MAX_SITES {
        return Err(Error::InvalidParameter(format!("L = {l} outside [1, {MAX_SITES}]")));
    }
    let dim = 1usize << l;
    let amp = (dim as f64).sqrt().recip();
    Ok(Col::from_fn(dim, |_| c64::new(amp, 0.0)))
}

/// Basis index after moving every site `s` to `s + 1 (mod L)`.
pub fn cyclic_shift(l: usize, state: usize) -> usize {
    // Site s sits at bit L-1-s, so s -> s+1 is a right rotation by one bit.
    let low = state & 1;
    (state >> 1) | (low << (l - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opkernel::{commutator, frobenius_distance, frobenius_norm, hermiticity_defect, to_complex, trace};

    fn chain(l: usize, j: f64, j2: f64, boundary: Boundary) -> SpinChainParams {
        SpinChainParams {
            length: l,
            j,
            j2,
            bx: 0.0,
            a: 0.0,
            omega: 10.0,
            boundary,
        }
    }

    #[test]
    fn spin_algebra_on_one_site() {
        let sx = spin_product(1, &[(0, Pauli::X)]);
        let sy = spin_product(1, &[(0, Pauli::Y)]);
        let sz = spin_product(1, &[(0, Pauli::Z)]);
        let i = c64::new(0.0, 1.0);
        for (a, b, c) in [(&sx, &sy, &sz), (&sy, &sz, &sx), (&sz, &sx, &sy)] {
            let comm = commutator(a.as_ref(), b.as_ref()).unwrap();
            let expected = Mat::from_fn(2, 2, |r, k| i * c[(r, k)]);
            assert!(frobenius_distance(comm.as_ref(), expected.as_ref()).unwrap() < 1e-15);
        }
        assert_eq!(sz[(0, 0)], c64::new(0.5, 0.0));
    }

    #[test]
    fn site_zero_is_most_significant() {
        // Sz on site 0 of a 2-site chain flips sign between indices 0b01 and 0b10.
        let sz0 = spin_product(2, &[(0, Pauli::Z)]);
        assert_eq!(sz0[(1, 1)].re, 0.5);
        assert_eq!(sz0[(2, 2)].re, -0.5);
    }

    #[test]
    fn static_two_site_open() {
        let h = build_static(&chain(2, 1.0, 0.0, Boundary::Open)).unwrap();
        let expected = [-0.25, 0.25, 0.25, -0.25];
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { expected[i] } else { 0.0 };
                assert_eq!(h[(i, j)], e);
            }
        }
    }

    #[test]
    fn static_zero_couplings_is_zero() {
        let h = build_static(&chain(4, 0.0, 0.0, Boundary::Periodic)).unwrap();
        assert_eq!(frobenius_norm(h.as_ref()), 0.0);
    }

    #[test]
    fn static_ten_sites_is_traceless_and_diagonal() {
        let h = build_static(&chain(10, 1.0, 0.2, Boundary::Periodic)).unwrap();
        assert!(trace(h.as_ref()).norm() < 1e-12);
        let off: f64 = (0..1024)
            .flat_map(|j| (0..1024).map(move |i| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| h[(i, j)].abs())
            .sum();
        assert_eq!(off, 0.0);
    }

    #[test]
    fn drive_norm() {
        let mut p = chain(2, 1.0, 0.0, Boundary::Open);
        p.a = 1.0;
        let h1 = build_drive(&p).unwrap();
        assert!((frobenius_norm(h1.as_ref()) - 2f64.sqrt()).abs() < 1e-15);
        p.a = 0.0;
        assert_eq!(frobenius_norm(build_drive(&p).unwrap().as_ref()), 0.0);

        let p = SpinChainParams { a: 6.01, ..chain(10, 1.0, 0.2, Boundary::Periodic) };
        let expected = 6.01 * ((10 * 1024) as f64).sqrt() / 2.0;
        assert!((frobenius_norm(build_drive(&p).unwrap().as_ref()) - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn charge_examples() {
        let q1 = build_charge(1).unwrap();
        assert_eq!(q1[(0, 1)], 0.5);
        assert_eq!(q1[(0, 0)], 0.0);
        let p = SpinChainParams { a: 2.5, ..chain(4, 1.0, 0.0, Boundary::Periodic) };
        let q = build_charge(4).unwrap();
        let c = commutator(q.as_ref(), build_drive(&p).unwrap().as_ref()).unwrap();
        assert_eq!(frobenius_norm(c.as_ref()), 0.0);
        let h0 = build_static(&chain(2, 1.0, 0.0, Boundary::Open)).unwrap();
        let c = commutator(h0.as_ref(), build_charge(2).unwrap().as_ref()).unwrap();
        assert!((frobenius_norm(c.as_ref()) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fast_charge_commutator_matches_dense() {
        let mut p = chain(6, 1.0, 0.3, Boundary::Periodic);
        p.bx = 0.4;
        let h = build_static(&p).unwrap();
        // Make the matrix generic so every entry matters.
        let m = Mat::from_fn(64, 64, |i, j| h[(i, j)] + ((i * 7 + j * 13) % 5) as f64 * 0.01);
        let dense = commutator(m.as_ref(), build_charge(6).unwrap().as_ref()).unwrap();
        let fast = charge_commutator_norm(m.as_ref()).unwrap();
        assert!((fast - frobenius_norm(dense.as_ref())).abs() < 1e-12 * fast);
        let mc = to_complex(m.as_ref());
        assert!((charge_commutator_norm(mc.as_ref()).unwrap() - fast).abs() < 1e-12 * fast);
    }

    #[test]
    fn polarized_state_properties() {
        let s = polarized_state(1).unwrap();
        assert!((s[0].re - 0.5f64.sqrt()).abs() < 1e-15);
        for l in 1..=8 {
            let s = polarized_state(l).unwrap();
            let norm: f64 = s.iter().map(|z| z.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-14);
            let q = build_charge(l).unwrap();
            let mut expval = 0.0;
            for j in 0..(1 << l) {
                for i in 0..(1 << l) {
                    expval += (s[i].conj() * s[j]).re * q[(i, j)];
                }
            }
            assert!((expval - l as f64 / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn static_and_drive_are_hermitian() {
        let p = SpinChainParams { bx: 0.3, a: 2.0, ..chain(6, 1.0, 0.2, Boundary::Periodic) };
        assert_eq!(hermiticity_defect(build_static(&p).unwrap().as_ref()), 0.0);
        assert_eq!(hermiticity_defect(build_drive(&p).unwrap().as_ref()), 0.0);
    }

    #[test]
    fn periodic_chain_is_translation_invariant() {
        let p = SpinChainParams { bx: 0.3, ..chain(7, 1.0, 0.2, Boundary::Periodic) };
        let h = build_static(&p).unwrap();
        let dim = p.dim();
        for j in 0..dim {
            for i in 0..dim {
                assert_eq!(h[(cyclic_shift(7, i), cyclic_shift(7, j))], h[(i, j)]);
            }
        }
        // The open chain is not.
        let h = build_static(&SpinChainParams { boundary: Boundary::Open, ..p }).unwrap();
        let moved = (0..dim).any(|i| h[(cyclic_shift(7, i), cyclic_shift(7, i))] != h[(i, i)]);
        assert!(moved);
    }

    #[test]
    fn cyclic_shift_moves_site_zero_to_one() {
        // Only site 0 down: index 0b1000 on L=4; after the shift only site 1 is down.
        assert_eq!(cyclic_shift(4, 0b1000), 0b0100);
        assert_eq!(cyclic_shift(4, 0b0001), 0b1000);
    }

    #[test]
    fn initial_symmetry_breaking_is_size_independent() {
        for j2 in [0.0, 0.2] {
            let sizes: &[usize] = if j2 == 0.0 { &[4, 6, 8] } else { &[6, 8, 10] };
            let ps: Vec<f64> = sizes
                .iter()
                .map(|&l| {
                    let h = build_static(&chain(l, 1.0, j2, Boundary::Periodic)).unwrap();
                    charge_commutator_norm(h.as_ref()).unwrap() / frobenius_norm(h.as_ref())
                })
                .collect();
            for p in &ps {
                assert!((p - ps[0]).abs() < 1e-10, "{ps:?}");
            }
        }
    }

    #[test]
    fn validation() {
        assert!(chain(1, 1.0, 0.0, Boundary::Open).validate().is_err());
        assert!(chain(4, 1.0, 0.2, Boundary::Periodic).validate().is_err());
        assert!(chain(4, 1.0, 0.2, Boundary::Open).validate().is_ok());
        assert!(chain(5, 1.0, 0.2, Boundary::Periodic).validate().is_ok());
        assert!(SpinChainParams { omega: 0.0, ..chain(4, 1.0, 0.0, Boundary::Open) }.validate().is_err());
    }
}
