//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};

/// Threshold below which a singular value counts as zero.
pub fn rank_threshold(sv_max: f64, rows: usize, cols: usize, factor: f64) -> f64 {
    sv_max * rows.max(cols) as f64 * f64::EPSILON * factor
}

/// Numerical rank via singular values with the relative threshold above.
pub fn numerical_rank(m: &DMatrix<f64>, factor: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    let thr = rank_threshold(max, m.nrows(), m.ncols(), factor);
    sv.iter().filter(|&&s| s > thr).count()
}

/// Rank with an additional absolute floor, for matrices whose natural scale
/// is known from the inputs (e.g. B(y) relative to ‖y‖).
pub fn rank_with_floor(m: &DMatrix<f64>, factor: f64, floor: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    let thr = rank_threshold(max, m.nrows(), m.ncols(), factor).max(floor);
    sv.iter().filter(|&&s| s > thr).count()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// Symmetric square root through the eigendecomposition. Eigenvalues below
/// zero are clamped; the flag reports whether any was below `-1e-10` in
/// relative terms.
pub fn sym_sqrt(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut clamped = false;
    let roots = eig.eigenvalues.map(|l| {
        if l < -1e-10 * scale {
            clamped = true;
        }
        l.max(0.0).sqrt()
    });
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&roots) * v.transpose(), clamped)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> (f64, f64) {
    let mut s = m.clone();
    symmetrize(&mut s);
    let ev = s.symmetric_eigenvalues();
    (ev.min(), ev.max())
}

/// Evaluates d′Ω⁻¹d for symmetric Ω, or `None` when Ω is numerically
/// singular. `floor` is an absolute scale below which eigenvalues count as
/// zero even when Ω itself is tiny.
pub fn quad_form_inv(omega: &DMatrix<f64>, d: &DVector<f64>, factor: f64, floor: f64) -> Option<f64> {
    let q = omega.nrows();
    if q == 1 {
        let w = omega[(0, 0)];
        let thr = (f64::EPSILON * factor * w.abs()).max(floor);
        if w.abs() <= thr || !w.is_finite() {
            return None;
        }
        return Some(d[0] * d[0] / w);
    }
    let mut s = omega.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigen();
    let amax = eig.eigenvalues.amax();
    let thr = rank_threshold(amax, q, q, factor).max(floor);
    if eig.eigenvalues.iter().any(|l| l.abs() <= thr || !l.is_finite()) {
        return None;
    }
    let proj = eig.eigenvectors.transpose() * d;
    Some(proj.iter().zip(eig.eigenvalues.iter()).map(|(p, l)| p * p / l).sum())
}

/// Solves a square system through QR, failing on numerical singularity.
pub fn solve_square(a: &DMatrix<f64>, b: &DMatrix<f64>, factor: f64) -> Option<DMatrix<f64>> {
    if numerical_rank(a, factor) < a.nrows() {
        return None;
    }
    a.clone().qr().solve(b)
}

pub fn solve_square_vec(a: &DMatrix<f64>, b: &DVector<f64>, factor: f64) -> Option<DVector<f64>> {
    if numerical_rank(a, factor) < a.nrows() {
        return None;
    }
    a.clone().qr().solve(b)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Symmetric Toeplitz matrix from its first row.
pub fn toeplitz(first: &[f64]) -> DMatrix<f64> {
    let n = first.len();
    DMatrix::from_fn(n, n, |i, j| first[i.abs_diff(j)])
}

pub fn e_plus(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

/// (-1, 1, -1, ...): the first entry is negative.
pub fn e_minus(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |t, _| if t % 2 == 0 { -1.0 } else { 1.0 })
}

pub fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}
