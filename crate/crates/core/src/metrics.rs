//! Two-qubit quality measures: partial transpose, negativity, fidelity and the
//! nearest physical density matrix.

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::sim::PureState;

/// Hermiticity and trace tolerance of [`DensityMatrix`].
pub const DENSITY_TOLERANCE: f64 = 1e-9;

/// Hermitian, unit-trace 4×4 matrix of a two-qubit state (qubit 0 is the
/// low-order index bit). Positivity is not enforced here; pass raw
/// reconstructions through [`nearest_physical`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerance(m, DENSITY_TOLERANCE)
    }

    fn with_tolerance(m: CMatrix, tol: f64) -> Result<Self> {
        if m.dim() != 4 {
            return Err(Error::InvalidMatrix(format!(
                "expected a 4x4 density matrix, got {0}x{0}",
                m.dim()
            )));
        }
        let herm = m.hermiticity_error();
        if herm > tol {
            return Err(Error::InvalidMatrix(format!(
                "matrix is not Hermitian (error {herm:.3e})"
            )));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidMatrix(format!("trace {tr} is not 1")));
        }
        Ok(Self(m.hermitian_part()))
    }

    pub fn from_pure(state: &PureState) -> Result<Self> {
        if state.num_qubits() != 2 {
            return Err(Error::InvalidState(format!(
                "expected a two-qubit state, got {} qubits",
                state.num_qubits()
            )));
        }
        Self::new(CMatrix::projector(state.amplitudes()))
    }

    pub fn maximally_mixed() -> Self {
        Self(CMatrix::identity(4).scale_real(0.25))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.0.hermitian_eigen().values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// `U ρ U†`.
    pub fn conjugated(&self, u: &CMatrix) -> Self {
        Self(self.0.conjugate_by(u).hermitian_part())
    }
}

/// Which qubit's indices [`partial_transpose`] exchanges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    First,
    Second,
}

pub fn partial_transpose(rho: &CMatrix, subsystem: Subsystem) -> CMatrix {
    assert_eq!(rho.dim(), 4, "partial transpose is defined for two qubits");
    let bit = match subsystem {
        Subsystem::First => 1usize,
        Subsystem::Second => 2usize,
    };
    CMatrix::from_fn(4, |r, c| {
        // swap the chosen qubit's row and column bits
        let (rb, cb) = (r & bit, c & bit);
        let r2 = (r & !bit) | cb;
        let c2 = (c & !bit) | rb;
        rho[(r2, c2)]
    })
}

/// Absolute sum of the negative eigenvalues of the partial transpose over the
/// first qubit, clamped to [0, 0.5].
pub fn negativity(rho: &DensityMatrix) -> Result<f64> {
    let pt = partial_transpose(rho.matrix(), Subsystem::First);
    let neg: f64 = pt
        .hermitian_eigen()
        .values
        .iter()
        .filter(|v| **v < 0.0)
        .sum();
    Ok(neg.abs().clamp(0.0, 0.5))
}

/// `tr(ρ ρ_ideal)` for a pure-state projector `ideal`, clamped to [0, 1].
pub fn fidelity(rho: &DensityMatrix, ideal: &DensityMatrix) -> Result<f64> {
    let sq = ideal.matrix() * ideal.matrix();
    let err = sq.max_abs_diff(ideal.matrix());
    if err > 1e-6 {
        return Err(Error::InvalidMatrix(format!(
            "ideal state is not a pure projector (|P² − P| = {err:.3e})"
        )));
    }
    let f = (rho.matrix() * ideal.matrix()).trace();
    Ok(f.re.clamp(0.0, 1.0))
}

/// Fidelity of `rho` with the pure state `ideal`.
pub fn fidelity_with_state(rho: &DensityMatrix, ideal: &PureState) -> Result<f64> {
    fidelity(rho, &DensityMatrix::from_pure(ideal)?)
}

pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let diff = a.matrix() - b.matrix();
    0.5 * diff
        .hermitian_eigen()
        .values
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
}

/// Smolin eigenvalue correction for eigenvalues summing to 1: walks up from
/// the most negative value, zeroing entries and spreading the accumulated
/// deficit evenly over the rest. Output is in the input order.
pub fn smolin_eigenvalues(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mu: Vec<f64> = order.iter().map(|&i| values[i]).collect();

    let mut lambda = vec![0.0; mu.len()];
    let mut i = mu.len();
    let mut acc = 0.0;
    while i > 0 && mu[i - 1] + acc / (i as f64) < 0.0 {
        acc += mu[i - 1];
        i -= 1;
    }
    for j in 0..i {
        lambda[j] = mu[j] + acc / i as f64;
    }

    let mut out = vec![0.0; values.len()];
    for (k, &idx) in order.iter().enumerate() {
        out[idx] = lambda[k];
    }
    out
}

/// Closest positive semidefinite unit-trace matrix in Frobenius norm. The
/// eigenbasis is kept; only the spectrum is corrected.
pub fn nearest_physical(raw: &CMatrix) -> Result<DensityMatrix> {
    let herm = raw.hermiticity_error();
    if herm > 1e-6 {
        return Err(Error::InvalidMatrix(format!(
            "input is not Hermitian (error {herm:.3e})"
        )));
    }
    let tr = raw.trace();
    if (tr.re - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidMatrix(format!("input trace {tr} is not 1")));
    }
    let eig = raw.hermitian_eigen();
    if eig.values[0] >= 0.0 {
        return DensityMatrix::with_tolerance(raw.hermitian_part(), 1e-6);
    }
    let corrected = smolin_eigenvalues(&eig.values);
    DensityMatrix::with_tolerance(eig.recompose(&corrected), 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gates;
    use crate::sim::GateOp;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bell() -> PureState {
        let mut s = PureState::zero(2).unwrap();
        s.apply(&GateOp::h(0)).unwrap();
        s.apply(&GateOp::cnot(0, 1)).unwrap();
        s
    }

    fn werner(p: f64) -> DensityMatrix {
        let b = CMatrix::projector(bell().amplitudes());
        let m = &b.scale_real(p) + &CMatrix::identity(4).scale_real((1.0 - p) / 4.0);
        DensityMatrix::new(m).unwrap()
    }

    fn random_density(rng: &mut impl Rng) -> DensityMatrix {
        let g = CMatrix::from_fn(4, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let m = &g * &g.adjoint();
        let tr = m.trace().re;
        DensityMatrix::new(m.scale_real(1.0 / tr).hermitian_part()).unwrap()
    }

    fn random_unitary(rng: &mut impl Rng) -> CMatrix {
        // exp of a random Hermitian generator via its eigendecomposition
        let h = CMatrix::from_fn(2, |_, _| {
            Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
        })
        .hermitian_part();
        let eig = h.hermitian_eigen();
        let v = &eig.vectors;
        CMatrix::from_fn(2, |r, c| {
            (0..2)
                .map(|k| v[(r, k)] * Complex64::new(0.0, eig.values[k]).exp() * v[(c, k)].conj())
                .sum()
        })
    }

    #[test]
    fn negativity_examples() {
        let b = DensityMatrix::from_pure(&bell()).unwrap();
        assert!((negativity(&b).unwrap() - 0.5).abs() < 1e-12);
        assert!(negativity(&DensityMatrix::maximally_mixed()).unwrap().abs() < 1e-15);
        for p in [0.2, 1.0 / 3.0, 0.5, 0.8] {
            let want = ((3.0 * p - 1.0) / 4.0f64).max(0.0);
            assert!((negativity(&werner(p)).unwrap() - want).abs() < 1e-12);
        }
        assert!((negativity(&werner(0.5)).unwrap() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn negativity_rejects_non_hermitian() {
        let mut m = CMatrix::identity(4).scale_real(0.25);
        m[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(DensityMatrix::new(m).is_err());
    }

    #[test]
    fn partial_transpose_examples() {
        let id = CMatrix::identity(4).scale_real(0.25);
        assert_eq!(partial_transpose(&id, Subsystem::First), id);
        let b = CMatrix::projector(bell().amplitudes());
        let mut ev = partial_transpose(&b, Subsystem::First).hermitian_eigen().values;
        ev.sort_by(f64::total_cmp);
        for (a, w) in ev.iter().zip([-0.5, 0.5, 0.5, 0.5]) {
            assert!((a - w).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_density(&mut rng).into_matrix();
        for sub in [Subsystem::First, Subsystem::Second] {
            let back = partial_transpose(&partial_transpose(&r, sub), sub);
            assert!(back.max_abs_diff(&r) < 1e-15);
        }
        // transposing both qubits is the full transpose
        let both = partial_transpose(&partial_transpose(&r, Subsystem::First), Subsystem::Second);
        assert!(both.max_abs_diff(&r.transpose()) < 1e-15);
    }

    #[test]
    fn negativity_is_partition_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let r = random_density(&mut rng);
            let sum_neg = |sub| -> f64 {
                partial_transpose(r.matrix(), sub)
                    .hermitian_eigen()
                    .values
                    .iter()
                    .filter(|v| **v < 0.0)
                    .sum()
            };
            assert!((sum_neg(Subsystem::First) - sum_neg(Subsystem::Second)).abs() < 1e-12);
        }
    }

    #[test]
    fn negativity_invariant_under_local_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let r = random_density(&mut rng);
            let u = random_unitary(&mut rng).kron(&random_unitary(&mut rng));
            let moved = r.conjugated(&u);
            let d = negativity(&r).unwrap() - negativity(&moved).unwrap();
            assert!(d.abs() < 1e-9);
        }
    }

    #[test]
    fn product_states_have_zero_negativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a: Vec<Complex64> = (0..2)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let b: Vec<Complex64> = (0..2)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let s = PureState::from_amplitudes(a)
                .unwrap()
                .tensor(&PureState::from_amplitudes(b).unwrap())
                .unwrap();
            let n = negativity(&DensityMatrix::from_pure(&s).unwrap()).unwrap();
            assert!(n < 1e-12, "negativity {n}");
        }
    }

    #[test]
    fn fidelity_examples() {
        let ideal = DensityMatrix::from_pure(&bell()).unwrap();
        assert!((fidelity(&ideal, &ideal).unwrap() - 1.0).abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed();
        assert!((fidelity(&mixed, &ideal).unwrap() - 0.25).abs() < 1e-12);
        assert!((fidelity(&werner(0.9), &ideal).unwrap() - 0.925).abs() < 1e-12);
        assert!(fidelity(&ideal, &mixed).is_err());
    }

    #[test]
    fn smolin_examples() {
        let got = smolin_eigenvalues(&[0.6, 0.5, 0.0, -0.1]);
        for (a, b) in got.iter().zip([0.55, 0.45, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let got = smolin_eigenvalues(&[1.2, -0.1, -0.05, -0.05]);
        for (a, b) in got.iter().zip([1.0, 0.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        // input order is preserved
        let got = smolin_eigenvalues(&[-0.1, 0.0, 0.5, 0.6]);
        for (a, b) in got.iter().zip([0.0, 0.0, 0.45, 0.55]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_physical_fixed_point_and_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = random_density(&mut rng);
        let out = nearest_physical(r.matrix()).unwrap();
        assert!(out.matrix().max_abs_diff(r.matrix()) < 1e-12);

        let u = random_unitary(&mut rng).kron(&random_unitary(&mut rng));
        let raw = CMatrix::diagonal(&[0.6, 0.5, 0.0, -0.1]).conjugate_by(&u);
        let fixed = nearest_physical(&raw).unwrap();
        let mut ev = fixed.eigenvalues();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ev.iter().zip([0.55, 0.45, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let want = CMatrix::diagonal(&[0.55, 0.45, 0.0, 0.0]).conjugate_by(&u);
        assert!(fixed.matrix().max_abs_diff(&want) < 1e-12);
        assert!(fixed.min_eigenvalue() >= -1e-9);
    }

    #[test]
    fn nearest_physical_rejects_bad_input() {
        let m = CMatrix::identity(4).scale_real(0.5);
        assert!(nearest_physical(&m).is_err());
    }

    #[test]
    fn local_rotations_preserve_bell_negativity() {
        let b = DensityMatrix::from_pure(&bell()).unwrap();
        let u = gates::on_two_qubits(&gates::hadamard(), 1);
        let moved = b.conjugated(&u);
        assert!((negativity(&moved).unwrap() - 0.5).abs() < 1e-12);
    }
}
