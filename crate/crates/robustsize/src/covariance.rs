//! Covariance models and their singular limits.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, e_minus, e_plus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Param {
    rho: f64,
}

impl Ar1Param {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("AR(1) coefficient must lie in (-1, 1), got {rho}")));
        }
        Ok(Ar1Param { rho })
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// AR(2) with complex roots `r·e^{±iν}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar2Param {
    r: f64,
    nu: f64,
}

impl Ar2Param {
    pub fn new(r: f64, nu: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidParameter(format!("root modulus must lie in (0, 1), got {r}")));
        }
        if !(nu > 0.0 && nu < PI) {
            return Err(Error::InvalidParameter(format!("frequency must lie in (0, pi), got {nu}")));
        }
        Ok(Ar2Param { r, nu })
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    /// `(φ₁, φ₂) = (2r cos ν, −r²)`.
    pub fn coefficients(&self) -> (f64, f64) {
        (2.0 * self.r * self.nu.cos(), -self.r * self.r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HetWeights {
    tau2: DVector<f64>,
}

impl HetWeights {
    pub fn new(tau2: DVector<f64>) -> Result<Self> {
        if tau2.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidParameter("variances must be positive".into()));
        }
        if (tau2.sum() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(format!("variances must sum to 1, got {}", tau2.sum())));
        }
        Ok(HetWeights { tau2 })
    }
    pub fn tau2(&self) -> &DVector<f64> {
        &self.tau2
    }
}

#[derive(Debug, Clone)]
pub struct HarmonicSpace {
    pub nu: f64,
    pub basis: DMatrix<f64>,
}

/// `Λ(ρ)` with entries `ρ^|i−j|`. Any real ρ is accepted because plug-in
/// estimates may leave the unit interval; `|ρ| = 1` gives a singular matrix
/// (see [`ar1_is_singular`]).
pub fn ar1_matrix(n: usize, rho: f64) -> DMatrix<f64> {
    let mut powers = vec![1.0; n];
    for j in 1..n {
        powers[j] = powers[j - 1] * rho;
    }
    linalg::toeplitz(&powers)
}

pub fn ar1_is_singular(rho: f64) -> bool {
    rho.abs() == 1.0
}

/// Tridiagonal closed form of `Λ(ρ)⁻¹`.
pub fn ar1_inverse(n: usize, rho: f64) -> Result<DMatrix<f64>> {
    if ar1_is_singular(rho) {
        return Err(Error::SingularParameter);
    }
    if n == 1 {
        return Ok(DMatrix::identity(1, 1));
    }
    let c = 1.0 / (1.0 - rho * rho);
    let mut m = DMatrix::zeros(n, n);
    for t in 0..n {
        m[(t, t)] = if t == 0 || t == n - 1 { c } else { (1.0 + rho * rho) * c };
        if t + 1 < n {
            m[(t, t + 1)] = -rho * c;
            m[(t + 1, t)] = -rho * c;
        }
    }
    Ok(m)
}

/// Correlation matrix of the stationary AR(2) process via the Yule-Walker
/// recursion.
pub fn ar2_matrix(n: usize, param: Ar2Param) -> DMatrix<f64> {
    let (p1, p2) = param.coefficients();
    let mut c = vec![0.0; n];
    c[0] = 1.0;
    if n > 1 {
        c[1] = p1 / (1.0 - p2);
    }
    for j in 2..n {
        c[j] = p1 * c[j - 1] + p2 * c[j - 2];
    }
    linalg::toeplitz(&c)
}

/// `E(ν)` with rows `(cos tν, sin tν)`, collapsing to `e₊` at 0 and `e₋` at π.
pub fn harmonic_basis(n: usize, nu: f64) -> Result<HarmonicSpace> {
    if !(0.0..=PI).contains(&nu) {
        return Err(Error::InvalidParameter(format!("frequency must lie in [0, pi], got {nu}")));
    }
    let basis = if nu == 0.0 {
        DMatrix::from_column_slice(n, 1, e_plus(n).as_slice())
    } else if nu == PI {
        DMatrix::from_column_slice(n, 1, e_minus(n).as_slice())
    } else {
        DMatrix::from_fn(n, 2, |t, j| {
            let a = (t + 1) as f64 * nu;
            if j == 0 { a.cos() } else { a.sin() }
        })
    };
    Ok(HarmonicSpace { nu, basis })
}

pub fn het_matrix(w: &HetWeights) -> DMatrix<f64> {
    DMatrix::from_diagonal(w.tau2())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Plus,
    Minus,
}

impl Endpoint {
    pub fn direction(self, n: usize) -> DVector<f64> {
        match self {
            Endpoint::Plus => e_plus(n),
            Endpoint::Minus => e_minus(n),
        }
    }
    pub fn rho_sign(self) -> f64 {
        match self {
            Endpoint::Plus => 1.0,
            Endpoint::Minus => -1.0,
        }
    }
}

/// Limit of the normalized, projected AR(1) matrix as ρ → ±1.
pub fn ar1_limit_d(n: usize, endpoint: Endpoint) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter("n must be at least 2".into()));
    }
    let total: f64 = (0..n).flat_map(|i| (0..n).map(move |j| i.abs_diff(j) as f64)).sum();
    let nf = n as f64;
    let m = DMatrix::from_fn(n, n, |i, j| {
        let d = i.abs_diff(j);
        match endpoint {
            Endpoint::Plus => -nf * d as f64 / total,
            Endpoint::Minus => {
                let sign = if (d + 1) % 2 == 0 { 1.0 } else { -1.0 };
                nf * sign * d as f64 / total
            }
        }
    });
    let e = endpoint.direction(n);
    let pi = DMatrix::identity(n, n) - &e * e.transpose() / nf;
    Ok(&pi * m * &pi)
}

#[derive(Debug, Clone)]
pub struct ProbeStep {
    pub rho: f64,
    pub s: f64,
    pub d_m: DMatrix<f64>,
    pub cross: DMatrix<f64>,
}

/// For each ρ, `s = tr(ΠΣΠ)`, `D_m = ΠΣΠ/s` and `ΠΣP_Z/√s`, with Π the
/// projector onto `span(Z)⊥`.
pub fn singular_approach_probe<F>(sigma_at: F, z_basis: &DMatrix<f64>, rho_seq: &[f64]) -> Result<Vec<ProbeStep>>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let (n, l) = z_basis.shape();
    if l >= n || linalg::numerical_rank(z_basis, 64.0) < l {
        return Err(Error::InvalidParameter("Z must have full column rank l < n".into()));
    }
    let gram = z_basis.transpose() * z_basis;
    let pz = z_basis * gram.qr().solve(&z_basis.transpose()).expect("full column rank");
    let pi = DMatrix::identity(n, n) - &pz;
    rho_seq
        .iter()
        .map(|&rho| {
            let sigma = sigma_at(rho);
            let inner = &pi * &sigma * &pi;
            let s = inner.trace();
            if !(s > 0.0) {
                return Err(Error::DegenerateProbe { rho });
            }
            Ok(ProbeStep { rho, s, d_m: inner / s, cross: &pi * &sigma * &pz / s.sqrt() })
        })
        .collect()
}
