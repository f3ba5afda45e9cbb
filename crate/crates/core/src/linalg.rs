//! Small dense helpers shared by the dynamical modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Standard symplectic matrix `J = [[0, I], [-I, 0]]` of size `2n`.
pub fn symplectic_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    *sym_eigenvalues(m).last().expect("non-empty matrix")
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Orthogonal projector onto the span of eigenvectors of `m` whose eigenvalue exceeds `tol`.
pub fn range_projector(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut p = DMatrix::zeros(n, n);
    for k in 0..n {
        if eig.eigenvalues[k] > tol {
            let v = eig.eigenvectors.column(k);
            p += v * v.transpose();
        }
    }
    p
}

/// Principal angle (radians) between a vector and a subspace spanned by the columns of `basis`.
pub fn angle_to_subspace(v: &DVector<f64>, basis: &DMatrix<f64>) -> f64 {
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let q = basis.clone().qr().q();
    let proj = &q * (q.transpose() * v);
    let c = (proj.norm() / norm).clamp(0.0, 1.0);
    let s = ((v - &proj).norm() / norm).clamp(0.0, 1.0);
    s.atan2(c)
}

/// Basis `[I; S]` of the graph of `S`.
pub fn graph_basis(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let mut b = DMatrix::zeros(2 * n, n);
    b.view_mut((0, 0), (n, n)).fill_with_identity();
    b.view_mut((n, 0), (n, n)).copy_from(s);
    b
}
