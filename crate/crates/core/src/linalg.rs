//! Small dense complex matrices.
//!
//! Everything in this crate that needs a matrix works on one- or two-qubit
//! operators, so a row-major `Vec` with a runtime dimension is all we need.
//! The Hermitian eigensolver is a cyclic complex Jacobi iteration.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Convergence tolerance of the Jacobi sweeps, relative to the Frobenius norm.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from rows; panics if the rows are not square.
    pub fn from_rows<R: AsRef<[Complex64]>>(rows: &[R]) -> Self {
        let dim = rows.len();
        Self::from_fn(dim, |r, c| {
            let row = rows[r].as_ref();
            assert_eq!(row.len(), dim, "matrix rows must be square");
            row[c]
        })
    }

    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let dim = rows.len();
        Self::from_fn(dim, |r, c| Complex64::new(rows[r].as_ref()[c], 0.0))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(*v, 0.0);
        }
        m
    }

    /// Outer product |v><v|.
    pub fn projector(v: &[Complex64]) -> Self {
        Self::from_fn(v.len(), |r, c| v[r] * v[c].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |r, c| self[(c, r)])
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    /// Kronecker product `self ⊗ rhs`; `rhs` occupies the low-order index bits.
    pub fn kron(&self, rhs: &CMatrix) -> Self {
        let d = rhs.dim;
        Self::from_fn(self.dim * d, |r, c| self[(r / d, c / d)] * rhs[(r % d, c % d)])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn frobenius_distance(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest |A_ij - conj(A_ji)|.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            for c in r..self.dim {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// `(A + A†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |r, c| (self[(r, c)] + self[(c, r)].conj()) * 0.5)
    }

    /// Unitary conjugation `U A U†`.
    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        &(u * self) * &u.adjoint()
    }

    /// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
    /// rotations. Only the Hermitian part of `self` is used.
    pub fn hermitian_eigen(&self) -> HermitianEigen {
        let n = self.dim;
        let mut a = self.hermitian_part();
        let mut v = CMatrix::identity(n);
        let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);

        for _ in 0..JACOBI_MAX_SWEEPS {
            if a.off_diagonal_norm() <= JACOBI_TOLERANCE * 1e-3 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let b = a[(p, q)];
                    let babs = b.norm();
                    if babs <= f64::MIN_POSITIVE {
                        continue;
                    }
                    let phase = b / babs;
                    let app = a[(p, p)].re;
                    let aqq = a[(q, q)].re;
                    let theta = (aqq - app) / (2.0 * babs);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    // U restricted to the (p, q) block.
                    let upp = Complex64::new(c, 0.0);
                    let upq = Complex64::new(s, 0.0);
                    let uqp = -phase.conj() * s;
                    let uqq = phase.conj() * c;

                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = akp * upp + akq * uqp;
                        a[(k, q)] = akp * upq + akq * uqq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = upp.conj() * apk + uqp.conj() * aqk;
                        a[(q, k)] = upq.conj() * apk + uqq.conj() * aqk;
                    }
                    a[(p, q)] = ZERO;
                    a[(q, p)] = ZERO;
                    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = vkp * upp + vkq * uqp;
                        v[(k, q)] = vkp * upq + vkq * uqq;
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
        let values = order.iter().map(|&i| a[(i, i)].re).collect();
        let vectors = CMatrix::from_fn(n, |r, c| v[(r, order[c])]);
        HermitianEigen { values, vectors }
    }

    fn off_diagonal_norm(&self) -> f64 {
        let mut s = 0.0;
        for r in 0..self.dim {
            for c in 0..self.dim {
                if r != c {
                    s += self[(r, c)].norm_sqr();
                }
            }
        }
        s.sqrt()
    }
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    /// `V diag(values) V†`.
    pub fn recompose(&self, values: &[f64]) -> CMatrix {
        let v = &self.vectors;
        let n = v.dim();
        CMatrix::from_fn(n, |r, c| {
            (0..n)
                .map(|k| v[(r, k)] * values[k] * v[(c, k)].conj())
                .sum()
        })
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.dim + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let n = self.dim;
        CMatrix::from_fn(n, |r, c| (0..n).map(|k| self[(r, k)] * rhs[(k, c)]).sum())
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{}) [", self.dim, self.dim)?;
        for r in 0..self.dim {
            write!(f, "  ")?;
            for c in 0..self.dim {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Single-qubit gate and Pauli matrices.
pub mod gates {
    use super::*;

    pub fn pauli_i() -> CMatrix {
        CMatrix::identity(2)
    }

    pub fn pauli_x() -> CMatrix {
        CMatrix::from_real_rows(&[[0.0, 1.0], [1.0, 0.0]])
    }

    pub fn pauli_y() -> CMatrix {
        let i = Complex64::new(0.0, 1.0);
        CMatrix::from_rows(&[[ZERO, -i], [i, ZERO]])
    }

    pub fn pauli_z() -> CMatrix {
        CMatrix::from_real_rows(&[[1.0, 0.0], [0.0, -1.0]])
    }

    pub fn hadamard() -> CMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        CMatrix::from_real_rows(&[[h, h], [h, -h]])
    }

    pub fn phase_s() -> CMatrix {
        CMatrix::from_rows(&[[ONE, ZERO], [ZERO, Complex64::new(0.0, 1.0)]])
    }

    pub fn phase_sdg() -> CMatrix {
        CMatrix::from_rows(&[[ONE, ZERO], [ZERO, Complex64::new(0.0, -1.0)]])
    }

    /// Embeds a single-qubit operator on `qubit` of a two-qubit register.
    /// Qubit 0 is the low-order index bit.
    pub fn on_two_qubits(op: &CMatrix, qubit: usize) -> CMatrix {
        assert!(qubit < 2);
        if qubit == 0 {
            CMatrix::identity(2).kron(op)
        } else {
            op.kron(&CMatrix::identity(2))
        }
    }

    /// Equality up to a global phase, measured as the max entrywise error
    /// after aligning the phase on the largest entry.
    pub fn phase_insensitive_distance(a: &CMatrix, b: &CMatrix) -> f64 {
        let (idx, _) = a
            .as_slice()
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
            .expect("non-empty matrix");
        let (za, zb) = (a.as_slice()[idx], b.as_slice()[idx]);
        if zb.norm() < 1e-300 {
            return f64::INFINITY;
        }
        let phase = za / zb;
        let phase = phase / phase.norm();
        a.max_abs_diff(&b.scale(phase))
    }
}
