//! Small dense complex linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// Kronecker product with `a` as the most significant (left) factor.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_all(factors: &[CMatrix]) -> CMatrix {
    let mut out = CMatrix::identity(1, 1);
    for f in factors {
        out = kron(&out, f);
    }
    out
}

pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    a.kronecker(b)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.trace()
}

pub fn max_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    m.is_square() && max_abs_diff(m, &m.adjoint()) <= tol
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Eigendecomposition of a Hermitian matrix. Eigenvalues are returned in
/// ascending order with the eigenvectors as matching columns.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    // Symmetrize so tiny rounding asymmetries don't leak into the solver.
    let herm = (m + m.adjoint()).scale(0.5);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// `exp(-i t H)` for Hermitian `H`, given its eigendecomposition.
pub fn unitary_from_eigh(values: &[f64], vectors: &CMatrix, t: f64) -> CMatrix {
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &lam) in values.iter().enumerate() {
        let phase = C64::from_polar(1.0, -lam * t);
        for i in 0..n {
            scaled[(i, j)] *= phase;
        }
    }
    scaled * vectors.adjoint()
}

/// `exp(-i t H)` for Hermitian `H`.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    let (values, vectors) = eigh(h);
    unitary_from_eigh(&values, &vectors, t)
}

/// Column-major vectorization: `vec(A)[col * n + row] = A[row, col]`.
pub fn vec_colmajor(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_colmajor`] for a square `d x d` result.
pub fn unvec_colmajor(v: &CVector, d: usize) -> CMatrix {
    assert_eq!(v.len(), d * d);
    CMatrix::from_column_slice(d, d, v.as_slice())
}

/// Trace distance `½‖A − B‖₁` between Hermitian operators.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let (vals, _) = eigh(&(a - b));
    0.5 * vals.iter().map(|v| v.abs()).sum::<f64>()
}

/// Evenly spaced points including both endpoints.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// The single-qubit Pauli matrices in the order I, X, Y, Z.
pub fn pauli_1q() -> [CMatrix; 4] {
    [
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ONE]),
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    ]
}

/// Rotation `exp(-i θ P / 2)` for an involutory Hermitian `P` (`P² = I`).
pub fn pauli_rotation(p: &CMatrix, theta: f64) -> CMatrix {
    let n = p.nrows();
    identity(n).scale((theta / 2.0).cos()) - p * C64::new(0.0, (theta / 2.0).sin())
}
