//! The regression substrate `Y = Xβ + U` and the null hypothesis `Rβ = r`.
//!
//! A [`LinearModelSpec`] owns a full-column-rank design together with the
//! factors every estimator needs: the QR-based pseudo-inverse
//! `P = (X′X)⁻¹X′` and `(X′X)⁻¹` itself, both obtained through triangular
//! solves rather than inversion of `X′X`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Numerical tolerances shared by every rank and membership decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Multiplier on `σ_max · max(rows, cols) · ε` for rank decisions.
    pub rank_factor: f64,
    /// Relative tolerance for span membership and zero tests.
    pub membership: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rank_factor: 64.0, membership: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct LinearModelSpec {
    x: DMatrix<f64>,
    pinv: DMatrix<f64>,
    xtx_inv: DMatrix<f64>,
    tol: Tolerances,
}

impl LinearModelSpec {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerances(x, Tolerances::default())
    }

    pub fn with_tolerances(x: DMatrix<f64>, tol: Tolerances) -> Result<Self> {
        let (n, k) = x.shape();
        if k == 0 || k >= n {
            return Err(Error::Dimension(format!("need 1 <= k < n, got n={n}, k={k}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix".into()));
        }
        let rank = linalg::numerical_rank(&x, tol.rank_factor);
        if rank < k {
            return Err(Error::RankDeficient(format!("X has rank {rank} < k = {k}")));
        }
        let qr = x.clone().qr();
        let r = qr.r();
        let q = qr.q();
        let pinv = r
            .solve_upper_triangular(&q.transpose())
            .ok_or_else(|| Error::RankDeficient("triangular factor of X".into()))?;
        let xtx_inv = &pinv * pinv.transpose();
        Ok(LinearModelSpec { x, pinv, xtx_inv, tol })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
    pub fn k(&self) -> usize {
        self.x.ncols()
    }
    /// `(X′X)⁻¹X′`, a k×n matrix.
    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }
    pub fn xtx_inv(&self) -> &DMatrix<f64> {
        &self.xtx_inv
    }
    pub fn tolerances(&self) -> Tolerances {
        self.tol
    }

    pub fn ols_estimate(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.pinv * y
    }

    pub fn residuals(&self, y: &DVector<f64>) -> DVector<f64> {
        y - &self.x * (&self.pinv * y)
    }

    /// Diagonal of the hat matrix `X(X′X)⁻¹X′`.
    pub fn leverages(&self) -> DVector<f64> {
        DVector::from_fn(self.n(), |t, _| (0..self.k()).map(|j| self.x[(t, j)] * self.pinv[(j, t)]).sum())
    }

    /// `‖(I − P_X)v‖ ≤ tol·‖v‖`; the zero vector is a member.
    pub fn span_membership(&self, v: &DVector<f64>, tol: f64) -> bool {
        let norm = v.norm();
        if norm == 0.0 {
            return true;
        }
        self.residuals(v).norm() <= tol * norm
    }

    pub fn contains(&self, v: &DVector<f64>) -> bool {
        self.span_membership(v, self.tol.membership)
    }

    pub fn check_restriction(&self, restriction: &RestrictionSpec) -> Result<()> {
        if restriction.r_mat.ncols() != self.k() {
            return Err(Error::Dimension(format!(
                "R has {} columns but X has {}",
                restriction.r_mat.ncols(),
                self.k()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RestrictionSpec {
    r_mat: DMatrix<f64>,
    r_vec: DVector<f64>,
}

impl RestrictionSpec {
    pub fn new(r_mat: DMatrix<f64>, r_vec: DVector<f64>) -> Result<Self> {
        let (q, k) = r_mat.shape();
        if q == 0 || q > k {
            return Err(Error::Dimension(format!("need 1 <= q <= k, got q={q}, k={k}")));
        }
        if r_vec.len() != q {
            return Err(Error::Dimension(format!("r has length {} but R has {q} rows", r_vec.len())));
        }
        if r_mat.iter().chain(r_vec.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("restriction".into()));
        }
        let rank = linalg::numerical_rank(&r_mat, Tolerances::default().rank_factor);
        if rank < q {
            return Err(Error::RankDeficient(format!("R has rank {rank} < q = {q}")));
        }
        Ok(RestrictionSpec { r_mat, r_vec })
    }

    /// `Rβ = r` with R a single row selecting coefficient `index`.
    pub fn single(k: usize, index: usize, value: f64) -> Result<Self> {
        let mut r = DMatrix::zeros(1, k);
        r[(0, index)] = 1.0;
        Self::new(r, DVector::from_element(1, value))
    }

    pub fn r_mat(&self) -> &DMatrix<f64> {
        &self.r_mat
    }
    pub fn r_vec(&self) -> &DVector<f64> {
        &self.r_vec
    }
    pub fn q(&self) -> usize {
        self.r_mat.nrows()
    }

    /// `(R, 0)` padded with `extra` zero columns.
    pub fn padded(&self, extra: usize) -> RestrictionSpec {
        let (q, k) = self.r_mat.shape();
        let mut r = DMatrix::zeros(q, k + extra);
        r.view_mut((0, 0), (q, k)).copy_from(&self.r_mat);
        RestrictionSpec { r_mat: r, r_vec: self.r_vec.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct NullPoint {
    pub beta0: DVector<f64>,
    pub mu0: DVector<f64>,
}

pub fn ols_estimate(model: &LinearModelSpec, y: &DVector<f64>) -> DVector<f64> {
    model.ols_estimate(y)
}

pub fn residuals(model: &LinearModelSpec, y: &DVector<f64>) -> DVector<f64> {
    model.residuals(y)
}

/// `R(X′X)⁻¹R′`, nonsingular under the rank invariants.
pub fn restricted_gram(model: &LinearModelSpec, restriction: &RestrictionSpec) -> DMatrix<f64> {
    let r = restriction.r_mat();
    r * model.xtx_inv() * r.transpose()
}

/// Least squares under `Rβ = r`; returns the coefficients and `y − Xβ̂_rest`.
pub fn restricted_ols(
    model: &LinearModelSpec,
    restriction: &RestrictionSpec,
    y: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let beta = model.ols_estimate(y);
    let r = restriction.r_mat();
    let gap = r * &beta - restriction.r_vec();
    let g = restricted_gram(model, restriction);
    let lambda = g.clone().qr().solve(&gap).unwrap_or_else(|| DVector::zeros(gap.len()));
    let beta_rest = &beta - model.xtx_inv() * r.transpose() * lambda;
    let resid = y - model.x() * &beta_rest;
    (beta_rest, resid)
}

/// Minimum-norm `β₀ = R′(RR′)⁻¹r` and `μ₀* = Xβ₀`.
pub fn null_representative(model: &LinearModelSpec, restriction: &RestrictionSpec) -> NullPoint {
    let r = restriction.r_mat();
    let rrt = r * r.transpose();
    let coef = rrt.qr().solve(restriction.r_vec()).expect("R has full row rank");
    let beta0 = r.transpose() * coef;
    let mu0 = model.x() * &beta0;
    NullPoint { beta0, mu0 }
}

/// Flips the sign so that the first nonzero entry is positive.
pub fn sign_normalize(x: &DVector<f64>) -> DVector<f64> {
    match x.iter().find(|v| **v != 0.0) {
        Some(v) if *v < 0.0 => -x,
        _ => x.clone(),
    }
}

pub fn span_membership(model: &LinearModelSpec, v: &DVector<f64>, tol: f64) -> bool {
    model.span_membership(v, tol)
}

/// Normalized, sign-fixed residual from the restricted fit; zero when `y`
/// lies in the null mean space.
pub fn maximal_invariant(
    model: &LinearModelSpec,
    restriction: &RestrictionSpec,
    y: &DVector<f64>,
) -> DVector<f64> {
    let (_, resid) = restricted_ols(model, restriction, y);
    let norm = resid.norm();
    let scale = y.norm().max(f64::MIN_POSITIVE);
    if norm <= model.tolerances().membership * scale {
        return DVector::zeros(y.len());
    }
    sign_normalize(&(resid / norm))
}
