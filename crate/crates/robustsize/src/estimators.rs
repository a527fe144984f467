//! Variance estimators entering the robust test statistics.
//!
//! Notation follows the regression in [`crate::model`]: `û(y)` is the OLS
//! residual, `v̂_t = û_t x_t′` the t-th score and `P = (X′X)⁻¹X′`.
//!
//! * Weighted autocovariance estimator
//!   `Ψ̂_w = Σ_{|j|<n} w(j) Γ̂_j` with `Γ̂_j = n⁻¹ Σ_{t>j} v̂_t v̂′_{t−j}` and
//!   `Γ̂_{−j} = Γ̂_j′`. The restricted variance is
//!   `Ω̂_w = n R(X′X)⁻¹Ψ̂_w(X′X)⁻¹R′`, which equals `B(y)𝒲ₙB(y)′` with
//!   `B(y) = RP diag(û(y))` and `𝒲ₙ` the Toeplitz matrix of the weights.
//! * General quadratic estimator `n⁻¹ Σ_{t,s} w*(t,s) v̂_t v̂_s′` for an
//!   arbitrary symmetric weighting matrix.
//! * Eicker's estimator `n⁻¹X′K̂X` where `K̂` is the Toeplitz matrix of the
//!   residual autocovariances.
//! * The heteroskedasticity robust sandwich `P diag(dᵢûᵢ²) P′` with the
//!   HC0 to HC3 corrections.
//! * The AR(1) plug-in objects: `ρ̂`, the feasible GLS triple
//!   `(β̃, σ̃², Ω̃)` and the OLS variance under `Λ(ρ̂)`.
//!
//! Exceptional sets are detected by thresholds and surfaced through
//! [`ExceptionalFlags`]; none of the functions here fail on them except
//! [`rho_hat`], whose value is undefined there.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{ar1_inverse, ar1_matrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{LinearModelSpec, RestrictionSpec};

/// Lag-window shapes. `Custom` carries the weights for lags `0, 1, …`
/// directly and ignores the bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WindowKind {
    Bartlett,
    Parzen,
    QuadraticSpectral,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagWindow {
    pub kind: WindowKind,
    pub bandwidth: f64,
}

impl LagWindow {
    pub fn bartlett(bandwidth: f64) -> Self {
        LagWindow { kind: WindowKind::Bartlett, bandwidth }
    }
    pub fn parzen(bandwidth: f64) -> Self {
        LagWindow { kind: WindowKind::Parzen, bandwidth }
    }
    pub fn quadratic_spectral(bandwidth: f64) -> Self {
        LagWindow { kind: WindowKind::QuadraticSpectral, bandwidth }
    }
    pub fn custom(weights: Vec<f64>) -> Self {
        LagWindow { kind: WindowKind::Custom(weights), bandwidth: 1.0 }
    }
}

/// The lag window `w₀` evaluated at `x`.
pub fn kernel_value(kind: &WindowKind, x: f64) -> f64 {
    let a = x.abs();
    match kind {
        WindowKind::Bartlett => (1.0 - a).max(0.0),
        WindowKind::Parzen => {
            if a <= 0.5 {
                1.0 - 6.0 * a * a + 6.0 * a * a * a
            } else if a <= 1.0 {
                2.0 * (1.0 - a).powi(3)
            } else {
                0.0
            }
        }
        WindowKind::QuadraticSpectral => {
            if a == 0.0 {
                return 1.0;
            }
            let z = 6.0 * PI * a / 5.0;
            25.0 / (12.0 * PI * PI * a * a) * (z.sin() / z - z.cos())
        }
        WindowKind::Custom(_) => panic!("custom windows have no kernel function"),
    }
}

/// Weights `w(0), …, w(n−1)` of the Toeplitz matrix `𝒲ₙ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzWeights {
    w: Vec<f64>,
}

impl ToeplitzWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() || w[0] != 1.0 {
            return Err(Error::InvalidParameter("weights must start with w(0) = 1".into()));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lag weights".into()));
        }
        Ok(ToeplitzWeights { w })
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }
    pub fn len(&self) -> usize {
        self.w.len()
    }
    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
    pub fn matrix(&self) -> DMatrix<f64> {
        linalg::toeplitz(&self.w)
    }
    /// Row-sum bound on the spectral norm of `𝒲ₙ`.
    pub fn abs_sum(&self) -> f64 {
        self.w[0] + 2.0 * self.w[1..].iter().map(|v| v.abs()).sum::<f64>()
    }
}

pub fn lag_window_weights(window: &LagWindow, n: usize) -> Result<ToeplitzWeights> {
    let w = match &window.kind {
        WindowKind::Custom(seq) => {
            let mut w = seq.clone();
            w.resize(n, 0.0);
            w
        }
        kind => {
            if !(window.bandwidth > 0.0) {
                return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {}", window.bandwidth)));
            }
            (0..n).map(|j| kernel_value(kind, j as f64 / window.bandwidth)).collect()
        }
    };
    ToeplitzWeights::new(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum WeightClass {
    PositiveDefinite,
    NonnegativeOnly,
    Indefinite,
}

/// Classifies a symmetric weighting matrix by its smallest eigenvalue.
pub fn classify_weight_matrix(w: &DMatrix<f64>) -> WeightClass {
    let (lo, hi) = linalg::min_eigenvalue(w);
    let thr = linalg::rank_threshold(hi.abs().max(lo.abs()), w.nrows(), w.ncols(), 64.0);
    if lo > thr {
        WeightClass::PositiveDefinite
    } else if lo >= -thr {
        WeightClass::NonnegativeOnly
    } else {
        WeightClass::Indefinite
    }
}

pub fn check_weight_pd(weights: &ToeplitzWeights) -> WeightClass {
    classify_weight_matrix(&weights.matrix())
}

/// `B(y) = R(X′X)⁻¹X′ diag(û(y))`.
pub fn b_matrix(model: &LinearModelSpec, restriction: &RestrictionSpec, y: &DVector<f64>) -> DMatrix<f64> {
    let u = model.residuals(y);
    let mut b = restriction.r_mat() * model.pinv();
    for (t, ut) in u.iter().enumerate() {
        b.column_mut(t).scale_mut(*ut);
    }
    b
}

/// Absolute scale below which singular values of `B(y)` count as zero.
/// The tolerance part scales with `‖û(y)‖`, which keeps decisions unchanged
/// under `y ↦ α(y − μ₀) + μ₀′`; the second part absorbs the rounding error
/// of `û` itself.
pub fn b_floor(model: &LinearModelSpec, restriction: &RestrictionSpec, y: &DVector<f64>) -> f64 {
    let rp = restriction.r_mat() * model.pinv();
    let tol = model.tolerances();
    let rounding = tol.rank_factor * model.n() as f64 * f64::EPSILON * y.norm();
    rp.norm() * (tol.membership * model.residuals(y).norm() + rounding)
}

pub fn b_rank(model: &LinearModelSpec, restriction: &RestrictionSpec, y: &DVector<f64>) -> usize {
    let b = b_matrix(model, restriction, y);
    linalg::rank_with_floor(&b, model.tolerances().rank_factor, b_floor(model, restriction, y))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandXCheck {
    pub holds: bool,
    /// Zero-based indices i with eᵢ(n) ∈ span(X).
    pub deleted: Vec<usize>,
}

/// Deletes the columns of `R(X′X)⁻¹X′` belonging to unit vectors inside
/// `span(X)` and checks that the remainder has rank q.
pub fn check_rand_x(model: &LinearModelSpec, restriction: &RestrictionSpec, tol: f64) -> RandXCheck {
    let n = model.n();
    let deleted: Vec<usize> = (0..n).filter(|&i| model.span_membership(&linalg::unit(n, i), tol)).collect();
    let rp = restriction.r_mat() * model.pinv();
    let keep: Vec<usize> = (0..n).filter(|i| !deleted.contains(i)).collect();
    let reduced = rp.select_columns(keep.iter());
    let floor = tol * rp.norm();
    let holds = linalg::rank_with_floor(&reduced, model.tolerances().rank_factor, floor) == restriction.q();
    RandXCheck { holds, deleted }
}

/// Rows `v̂_t = û_t x_t′` stacked into an n×k matrix.
fn scores(model: &LinearModelSpec, y: &DVector<f64>) -> DMatrix<f64> {
    let u = model.residuals(y);
    let mut v = model.x().clone();
    for (t, ut) in u.iter().enumerate() {
        v.row_mut(t).scale_mut(*ut);
    }
    v
}

/// `Ψ̂_w(y)` accumulated lag by lag from the sample autocovariances.
pub fn psi_weighted(model: &LinearModelSpec, y: &DVector<f64>, weights: &ToeplitzWeights) -> DMatrix<f64> {
    let n = model.n();
    let v = scores(model, y);
    let mut psi = v.transpose() * &v;
    for (j, &wj) in weights.as_slice().iter().enumerate().take(n).skip(1) {
        if wj == 0.0 {
            continue;
        }
        let gamma = v.rows(j, n - j).transpose() * v.rows(0, n - j);
        psi += (&gamma + gamma.transpose()) * wj;
    }
    psi / n as f64
}

/// `n R(X′X)⁻¹ Ψ (X′X)⁻¹ R′`.
pub fn omega_from_psi(model: &LinearModelSpec, restriction: &RestrictionSpec, psi: &DMatrix<f64>) -> DMatrix<f64> {
    let a = restriction.r_mat() * model.xtx_inv();
    let mut o = &a * psi * a.transpose() * model.n() as f64;
    linalg::symmetrize(&mut o);
    o
}

pub fn omega_weighted(
    model: &LinearModelSpec,
    restriction: &RestrictionSpec,
    y: &DVector<f64>,
    weights: &ToeplitzWeights,
) -> DMatrix<f64> {
    omega_from_psi(model, restriction, &psi_weighted(model, y, weights))
}

/// `Ψ̂_GQ(y) = n⁻¹ V′𝒲*V` for a symmetric n×n weighting matrix.
pub fn psi_general_quadratic(model: &LinearModelSpec, y: &DVector<f64>, wstar: &DMatrix<f64>) -> DMatrix<f64> {
    let v = scores(model, y);
    let mut psi = v.transpose() * wstar * &v / model.n() as f64;
    linalg::symmetrize(&mut psi);
    psi
}

/// Rank of `B(y)𝒲*`, which decides singularity of the general quadratic
/// variance when `𝒲*` is only nonnegative definite.
pub fn gq_rank(model: &LinearModelSpec, restriction: &RestrictionSpec, y: &DVector<f64>, wstar: &DMatrix<f64>) -> usize {
    let bw = b_matrix(model, restriction, y) * wstar;
    let floor = b_floor(model, restriction, y) * wstar.norm();
    linalg::rank_with_floor(&bw, model.tolerances().rank_factor, floor)
}

/// `Ψ̂_E(y) = n⁻¹X′K̂(y)X`.
pub fn psi_eicker(model: &LinearModelSpec, y: &DVector<f64>) -> DMatrix<f64> {
    let n = model.n();
    let u = model.residuals(y);
    let acov: Vec<f64> = (0..n).map(|j| (j..n).map(|l| u[l] * u[l - j]).sum::<f64>() / n as f64).collect();
    let k_hat = linalg::toeplitz(&acov);
    let x = model.x();
    let mut psi = x.transpose() * k_hat * x / n as f64;
    linalg::symmetrize(&mut psi);
    psi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HetVariant {
    HC0,
    HC1,
    HC2,
    HC3,
}

/// The correction factors dᵢ; set to 1 where the leverage is one.
pub fn het_factors(model: &LinearModelSpec, variant: HetVariant) -> DVector<f64> {
    let n = model.n();
    let k = model.k();
    let h = model.leverages();
    let tol = model.tolerances().membership;
    DVector::from_fn(n, |i, _| {
        let one_minus = 1.0 - h[i];
        if one_minus.abs() <= tol {
            return 1.0;
        }
        match variant {
            HetVariant::HC0 => 1.0,
            HetVariant::HC1 => n as f64 / (n - k) as f64,
            HetVariant::HC2 => 1.0 / one_minus,
            HetVariant::HC3 => 1.0 / (one_minus * one_minus),
        }
    })
}

pub fn leverages(model: &LinearModelSpec) -> DVector<f64> {
    model.leverages()
}

/// `Ψ̂_Het = (X′X)⁻¹X′diag(dᵢûᵢ²)X(X′X)⁻¹`.
pub fn psi_het_with(model: &LinearModelSpec, y: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let u = model.residuals(y);
    let p = model.pinv();
    let mut scaled = p.clone();
    for t in 0..model.n() {
        scaled.column_mut(t).scale_mut(d[t] * u[t] * u[t]);
    }
    let mut psi = scaled * p.transpose();
    linalg::symmetrize(&mut psi);
    psi
}

pub fn psi_het(model: &LinearModelSpec, y: &DVector<f64>, variant: HetVariant) -> DMatrix<f64> {
    psi_het_with(model, y, &het_factors(model, variant))
}

pub fn omega_het(model: &LinearModelSpec, restriction: &RestrictionSpec, y: &DVector<f64>, variant: HetVariant) -> DMatrix<f64> {
    let r = restriction.r_mat();
    let mut o = r * psi_het(model, y, variant) * r.transpose();
    linalg::symmetrize(&mut o);
    o
}

/// Summation limits of the denominator of ρ̂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpperLimit {
    NMinusOne,
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RhoEstimatorSpec {
    pub a1: usize,
    pub a2: UpperLimit,
}

impl RhoEstimatorSpec {
    pub fn new(a1: usize, a2: UpperLimit) -> Result<Self> {
        if a1 != 1 && a1 != 2 {
            return Err(Error::InvalidParameter(format!("a1 must be 1 or 2, got {a1}")));
        }
        Ok(RhoEstimatorSpec { a1, a2 })
    }
    pub fn yule_walker() -> Self {
        RhoEstimatorSpec { a1: 1, a2: UpperLimit::N }
    }
    pub fn is_yule_walker(&self) -> bool {
        self.a1 == 1 && self.a2 == UpperLimit::N
    }
    /// One-based upper index for sample size n.
    pub fn upper(&self, n: usize) -> usize {
        match self.a2 {
            UpperLimit::NMinusOne => n - 1,
            UpperLimit::N => n,
        }
    }
    /// The hypothesis `k ≤ a₂ − a₁` under which the exceptional sets are null.
    pub fn check(&self, n: usize, k: usize) -> Result<()> {
        let span = self.upper(n) as i64 - self.a1 as i64;
        if (k as i64) > span {
            return Err(Error::InvalidParameter(format!("need k <= a2 - a1, got k={k}, a2-a1={span}")));
        }
        Ok(())
    }
}

fn rho_parts(u: &DVector<f64>, spec: &RhoEstimatorSpec) -> (f64, f64) {
    let n = u.len();
    let num: f64 = (1..n).map(|t| u[t] * u[t - 1]).sum();
    let den: f64 = ((spec.a1 - 1)..spec.upper(n)).map(|t| u[t] * u[t]).sum();
    (num, den)
}

fn in_n0(model: &LinearModelSpec, y: &DVector<f64>, u: &DVector<f64>, den: f64) -> bool {
    let tol = model.tolerances().membership;
    let uu = u.norm_squared();
    u.norm() <= tol * y.norm() || den <= tol * uu
}

/// `ρ̂ = Σ_{t≥2} û_t û_{t−1} / Σ_{t=a₁}^{a₂} û_t²`.
pub fn rho_hat(model: &LinearModelSpec, y: &DVector<f64>, spec: &RhoEstimatorSpec) -> Result<f64> {
    let u = model.residuals(y);
    let (num, den) = rho_parts(&u, spec);
    if in_n0(model, y, &u, den) {
        return Err(Error::Exceptional("N0"));
    }
    Ok(num / den)
}

/// Membership flags for the nested exceptional sets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExceptionalFlags {
    pub n0: bool,
    pub n1: bool,
    pub n2: bool,
    pub n2_star: bool,
    pub n0_star: bool,
}

impl ExceptionalFlags {
    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        for (set, name) in [(self.n0, "N0"), (self.n1, "N1"), (self.n2, "N2"), (self.n2_star, "N2*"), (self.n0_star, "N0*")] {
            if set {
                v.push(name);
            }
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct FglsComponents {
    pub rho: Option<f64>,
    pub beta_tilde: Option<DVector<f64>>,
    pub sigma2_tilde: Option<f64>,
    pub omega_tilde: Option<DMatrix<f64>>,
    pub flags: ExceptionalFlags,
}

/// `β̃`, `σ̃²` and `Ω̃ = σ̃²R(X′Λ⁻¹(ρ̂)X)⁻¹R′`. Fields are `None` once the
/// point falls into a set where they are undefined.
pub fn fgls_components(
    model: &LinearModelSpec,
    restriction: &RestrictionSpec,
    y: &DVector<f64>,
    spec: &RhoEstimatorSpec,
) -> FglsComponents {
    let tol = model.tolerances();
    let (n, k) = (model.n(), model.k());
    let u = model.residuals(y);
    let (num, den) = rho_parts(&u, spec);
    let mut out = FglsComponents { rho: None, beta_tilde: None, sigma2_tilde: None, omega_tilde: None, flags: ExceptionalFlags::default() };
    let all = ExceptionalFlags { n0: true, n1: true, n2: true, n2_star: true, n0_star: true };
    if in_n0(model, y, &u, den) {
        out.flags = all;
        return out;
    }
    let rho = num / den;
    out.rho = Some(rho);
    if (rho.abs() - 1.0).abs() <= tol.membership {
        out.flags = ExceptionalFlags { n0: false, ..all };
        return out;
    }
    let lam_inv = ar1_inverse(n, rho).expect("|rho| != 1");
    let x = model.x();
    let li_x = &lam_inv * x;
    let a = x.transpose() * &li_x;
    let Some(a_inv_xt) = linalg::solve_square(&a, &li_x.transpose(), tol.rank_factor) else {
        out.flags = ExceptionalFlags { n0: false, n1: false, ..all };
        return out;
    };
    let beta = &a_inv_xt * y;
    let e = y - x * &beta;
    let quad = e.dot(&(&lam_inv * &e));
    let sigma2 = quad / (n - k) as f64;
    let r = restriction.r_mat();
    let a_inv_rt = linalg::solve_square(&a, &r.transpose(), tol.rank_factor).expect("checked above");
    let mut g = r * a_inv_rt;
    linalg::symmetrize(&mut g);
    let li_norm = (1.0 + rho.abs()).powi(2) / (1.0 - rho * rho).abs();
    let sigma_zero = quad.abs() <= tol.membership * e.norm_squared() * li_norm || e.norm() <= tol.membership * y.norm();
    let g_singular = linalg::numerical_rank(&g, tol.rank_factor) < restriction.q();
    out.flags.n2_star = sigma_zero || g_singular;
    out.beta_tilde = Some(beta);
    out.sigma2_tilde = Some(sigma2);
    out.omega_tilde = Some(g * sigma2);
    out
}

#[derive(Debug, Clone)]
pub struct OlsAr1Components {
    pub rho: Option<f64>,
    pub sigma2_hat: f64,
    pub omega_hat: Option<DMatrix<f64>>,
    pub flags: ExceptionalFlags,
}

/// `Ω̂ = σ̂²R(X′X)⁻¹X′Λ(ρ̂)X(X′X)⁻¹R′` with `σ̂² = û′û/(n−k)`.
pub fn ols_ar1_omega(
    model: &LinearModelSpec,
    restriction: &RestrictionSpec,
    y: &DVector<f64>,
    spec: &RhoEstimatorSpec,
) -> OlsAr1Components {
    let tol = model.tolerances();
    let (n, k) = (model.n(), model.k());
    let u = model.residuals(y);
    let sigma2 = u.norm_squared() / (n - k) as f64;
    let (num, den) = rho_parts(&u, spec);
    if in_n0(model, y, &u, den) {
        let flags = ExceptionalFlags { n0: true, n0_star: true, ..Default::default() };
        return OlsAr1Components { rho: None, sigma2_hat: sigma2, omega_hat: None, flags };
    }
    let rho = num / den;
    let rp = restriction.r_mat() * model.pinv();
    let lam = ar1_matrix(n, rho);
    let mut core = &rp * &lam * rp.transpose();
    linalg::symmetrize(&mut core);
    let lam_norm: f64 = (0..n).map(|j| rho.abs().powi(j as i32)).sum::<f64>() * 2.0;
    let floor = f64::EPSILON * tol.rank_factor * n as f64 * rp.norm_squared() * lam_norm;
    let singular = if restriction.q() == 1 {
        core[(0, 0)].abs() <= floor
    } else {
        linalg::rank_with_floor(&core, tol.rank_factor, floor) < restriction.q()
    };
    let flags = ExceptionalFlags { n1: (rho.abs() - 1.0).abs() <= tol.membership, n0_star: singular, ..Default::default() };
    OlsAr1Components { rho: Some(rho), sigma2_hat: sigma2, omega_hat: Some(core * sigma2), flags }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{e_minus, e_plus, max_abs, unit};

    fn location(n: usize) -> LinearModelSpec {
        LinearModelSpec::new(DMatrix::from_element(n, 1, 1.0)).unwrap()
    }

    fn loc_r() -> RestrictionSpec {
        RestrictionSpec::single(1, 0, 0.0).unwrap()
    }

    #[test]
    fn window_examples() {
        let w = lag_window_weights(&LagWindow::bartlett(1.0), 5).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        let w = lag_window_weights(&LagWindow::bartlett(4.0), 6).unwrap();
        assert_eq!(&w.as_slice()[..4], &[1.0, 0.75, 0.5, 0.25]);
        let w = lag_window_weights(&LagWindow::parzen(2.0), 4).unwrap();
        assert!((w.as_slice()[1] - 0.25).abs() < 1e-15);
        let w = lag_window_weights(&LagWindow::quadratic_spectral(3.0), 4).unwrap();
        assert_eq!(w.as_slice()[0], 1.0);
        assert!(w.as_slice()[1] < 1.0 && w.as_slice()[1] > 0.0);
        assert!(lag_window_weights(&LagWindow::bartlett(0.0), 4).is_err());
        assert!(lag_window_weights(&LagWindow::custom(vec![0.5]), 4).is_err());
    }

    #[test]
    fn weight_classification() {
        for m in [0.5, 1.0, 3.0, 7.5, 10.0] {
            let w = lag_window_weights(&LagWindow::bartlett(m), 10).unwrap();
            assert_eq!(check_weight_pd(&w), WeightClass::PositiveDefinite);
        }
        let rect = lag_window_weights(&LagWindow::custom(vec![1.0, 1.0, 1.0, 1.0]), 6).unwrap();
        assert_ne!(check_weight_pd(&rect), WeightClass::PositiveDefinite);
        let id = lag_window_weights(&LagWindow::custom(vec![1.0]), 6).unwrap();
        assert_eq!(check_weight_pd(&id), WeightClass::PositiveDefinite);
    }

    #[test]
    fn b_examples() {
        let m = location(2);
        let b = b_matrix(&m, &loc_r(), &e_minus(2));
        assert!((b[(0, 0)] + 0.5).abs() < 1e-15 && (b[(0, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(b_rank(&location(5), &loc_r(), &e_plus(5)), 0);
        let y = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.1, 0.0]);
        let b = b_matrix(&location(5), &loc_r(), &y);
        let u = location(5).residuals(&y);
        assert!((b.transpose() - u / 5.0).amax() < 1e-15);
    }

    #[test]
    fn rand_x_examples() {
        let c = check_rand_x(&location(4), &loc_r(), 1e-8);
        assert!(c.holds && c.deleted.is_empty());
        let m = LinearModelSpec::new(DMatrix::from_column_slice(4, 1, unit(4, 0).as_slice())).unwrap();
        let c = check_rand_x(&m, &loc_r(), 1e-8);
        assert!(!c.holds);
        assert_eq!(c.deleted, vec![0]);
        let m = LinearModelSpec::new(DMatrix::from_columns(&[e_plus(4), unit(4, 0)])).unwrap();
        let r = RestrictionSpec::single(2, 1, 0.0).unwrap();
        let c = check_rand_x(&m, &r, 1e-8);
        // surviving row is (-1/3, -1/3, -1/3)
        assert!(c.holds);
        assert_eq!(c.deleted, vec![0]);
    }

    #[test]
    fn psi_examples() {
        let w1 = lag_window_weights(&LagWindow::bartlett(1.0), 2).unwrap();
        let m = location(2);
        assert!((psi_weighted(&m, &e_minus(2), &w1)[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((omega_weighted(&m, &loc_r(), &e_minus(2), &w1)[(0, 0)] - 0.5).abs() < 1e-15);
        let w = lag_window_weights(&LagWindow::bartlett(3.0), 6).unwrap();
        assert!(max_abs(&psi_weighted(&location(6), &(e_plus(6) * 3.0), &w)) < 1e-14);
    }

    #[test]
    fn general_quadratic_reduces_to_weighted() {
        let x = DMatrix::from_fn(7, 2, |i, j| if j == 0 { 1.0 } else { (i as f64).sin() });
        let m = LinearModelSpec::new(x).unwrap();
        let y = DVector::from_fn(7, |i, _| (i as f64 * 1.3).cos() + 0.1 * i as f64);
        let w = lag_window_weights(&LagWindow::bartlett(3.0), 7).unwrap();
        let a = psi_general_quadratic(&m, &y, &w.matrix());
        assert!(max_abs(&(a - psi_weighted(&m, &y, &w))) < 1e-12);
        let id = lag_window_weights(&LagWindow::custom(vec![1.0]), 7).unwrap();
        let a = psi_general_quadratic(&m, &y, &DMatrix::identity(7, 7));
        assert!(max_abs(&(a - psi_weighted(&m, &y, &id))) < 1e-12);
        assert_eq!(max_abs(&psi_general_quadratic(&m, &y, &DMatrix::zeros(7, 7))), 0.0);
    }

    #[test]
    fn eicker_examples() {
        let m = location(2);
        // K̂ has unit diagonal and off-diagonal −1/2, so n⁻¹e₊′K̂e₊ = 1/2
        assert!((psi_eicker(&m, &e_minus(2))[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(max_abs(&psi_eicker(&location(4), &e_plus(4))) < 1e-14);
    }

    #[test]
    fn het_examples() {
        for n in 2..8 {
            let m = location(n);
            let o = omega_het(&m, &loc_r(), &unit(n, 0), HetVariant::HC0)[(0, 0)];
            let nf = n as f64;
            assert!((o - (1.0 - 1.0 / nf) / (nf * nf)).abs() < 1e-15);
        }
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 * i as f64 });
        let m = LinearModelSpec::new(x).unwrap();
        let y = DVector::from_vec(vec![1.0, -0.5, 0.2, 2.0, -1.0, 0.3]);
        let h0 = psi_het(&m, &y, HetVariant::HC0);
        let h1 = psi_het(&m, &y, HetVariant::HC1);
        assert!(max_abs(&(h0 * 1.5 - h1)) < 1e-14);
    }

    #[test]
    fn leverage_one_gets_unit_factor() {
        let x = DMatrix::from_columns(&[e_plus(5), unit(5, 2)]);
        let m = LinearModelSpec::new(x).unwrap();
        let d = het_factors(&m, HetVariant::HC3);
        assert_eq!(d[2], 1.0);
        assert!(d[0] > 1.0);
    }

    #[test]
    fn rho_examples() {
        let m = location(4);
        let rho = rho_hat(&m, &e_minus(4), &RhoEstimatorSpec::yule_walker()).unwrap();
        assert!((rho + 0.75).abs() < 1e-15);
        let spec = RhoEstimatorSpec::new(1, UpperLimit::NMinusOne).unwrap();
        let x = DMatrix::from_fn(5, 4, |i, j| if i == j { 1.0 } else { 0.0 });
        let m = LinearModelSpec::new(x).unwrap();
        assert!(matches!(rho_hat(&m, &unit(5, 4), &spec), Err(Error::Exceptional("N0"))));
        assert!(RhoEstimatorSpec::new(3, UpperLimit::N).is_err());
        assert!(spec.check(5, 4).is_err());
    }

    #[test]
    fn fgls_examples() {
        let m = location(6);
        let r = loc_r();
        // û = (1, 0, 0, -1, 0, 0) has zero first-order autocovariance
        let y = DVector::from_vec(vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        let c = fgls_components(&m, &r, &y, &RhoEstimatorSpec::yule_walker());
        assert!(c.rho.unwrap().abs() < 1e-15);
        assert!((c.beta_tilde.unwrap() - m.ols_estimate(&y)).amax() < 1e-10);
        let y = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.5, 0.7, -0.1]);
        let c = fgls_components(&m, &r, &y, &RhoEstimatorSpec::yule_walker());
        assert_eq!(c.flags, ExceptionalFlags::default());
        assert!(c.omega_tilde.unwrap()[(0, 0)] > 0.0);
        let c = fgls_components(&m, &r, &(e_plus(6) * 2.0), &RhoEstimatorSpec::yule_walker());
        assert!(c.flags.n0 && c.flags.n2_star);
    }

    #[test]
    fn ols_ar1_examples() {
        let m = location(6);
        let r = loc_r();
        let y = DVector::from_vec(vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        let c = ols_ar1_omega(&m, &r, &y, &RhoEstimatorSpec::yule_walker());
        assert!((c.omega_hat.unwrap()[(0, 0)] - c.sigma2_hat / 6.0).abs() < 1e-15);
        let y = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.5, 0.7, -0.1]);
        let c = ols_ar1_omega(&m, &r, &y, &RhoEstimatorSpec::yule_walker());
        let rho = c.rho.unwrap();
        let want = c.sigma2_hat / 36.0 * e_plus(6).dot(&(ar1_matrix(6, rho) * e_plus(6)));
        assert!((c.omega_hat.unwrap()[(0, 0)] - want).abs() < 1e-14);
        let c = ols_ar1_omega(&m, &r, &e_plus(6), &RhoEstimatorSpec::yule_walker());
        assert!(c.flags.n0 && c.flags.n0_star);
    }
}
