//! Simulation of null rejection probabilities, size and power curves,
//! critical-value calibration and the elliptical null check.
//!
//! Every replication draws from its own ChaCha20 stream keyed by
//! `(seed, lane)` and positioned at the replication index, so results do
//! not depend on how replications are spread over worker threads. The pool
//! size comes from `ROBUSTSIZE_THREADS`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::ar1_matrix;
use crate::diagnostics::{self, Verdict};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{null_representative, restricted_ols, LinearModelSpec, RestrictionSpec};
use crate::statistics::{Evaluator, TestDefinition, TestKind};

pub const THREADS_ENV: &str = "ROBUSTSIZE_THREADS";

pub const LANE_NULL: u64 = 0;
pub const LANE_CERTIFY: u64 = 1;
pub const LANE_ELLIPTICAL: u64 = 2;
pub const LANE_RADIAL: u64 = 3;
pub const LANE_DIRECTIONS: u64 = 4;
pub const LANE_DESIGNS: u64 = 5;
pub const LANE_KBOUNDS: u64 = 6;

pub const DEFAULT_RHO_GRID: [f64; 15] =
    [-0.999, -0.99, -0.95, -0.9, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 0.999];

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&t| t > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1));
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
    })
}

pub fn worker_count() -> usize {
    pool().current_num_threads()
}

/// The generator for replication `index` of lane `lane`.
pub fn substream(seed: u64, lane: u64, index: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&lane.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Maps `f` over `0..count` on the pool, preserving index order.
pub fn par_map<T, F>(count: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    pool().install(|| (0..count).into_par_iter().with_min_len(chunk.max(1)).map(|i| f(i as u64)).collect())
}

pub fn standard_normal<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McConfig {
    pub reps: usize,
    pub seed: u64,
    pub chunk: usize,
}

impl McConfig {
    pub fn new(reps: usize, seed: u64) -> Result<Self> {
        if reps < 100 {
            return Err(Error::InvalidParameter(format!("reps must be at least 100, got {reps}")));
        }
        Ok(McConfig { reps, seed, chunk: 256 })
    }
    pub fn with_chunk(mut self, chunk: usize) -> Self {
        self.chunk = chunk.max(1);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RejectionEstimate {
    pub p: f64,
    pub se: f64,
    pub reps: usize,
    pub seed: u64,
}

impl RejectionEstimate {
    pub fn from_count(count: usize, reps: usize, seed: u64) -> Self {
        let p = count as f64 / reps as f64;
        RejectionEstimate { p, se: (p * (1.0 - p) / reps as f64).sqrt(), reps, seed }
    }
}

pub fn pooled_se(a: &RejectionEstimate, b: &RejectionEstimate) -> f64 {
    (a.se * a.se + b.se * b.se).sqrt()
}

/// Draws `μ + scale·G` with `scale` the symmetric square root of `σ²Σ`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    pub mean: DVector<f64>,
    pub scale: DMatrix<f64>,
    pub clamped: bool,
}

impl GaussianSampler {
    pub fn new(mean: DVector<f64>, sigma2: f64, sigma: &DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if sigma.shape() != (n, n) {
            return Err(Error::Dimension(format!("covariance must be {n}x{n}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
        }
        if linalg::max_abs(&(sigma - sigma.transpose())) > 1e-12 * linalg::max_abs(sigma).max(1.0) {
            return Err(Error::NotPositiveDefinite("covariance is not symmetric".into()));
        }
        let cov = sigma * sigma2;
        let (lo, hi) = linalg::min_eigenvalue(&cov);
        if !(lo > linalg::rank_threshold(hi, n, n, 64.0)) {
            return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {lo:.3e}")));
        }
        let (scale, clamped) = linalg::sym_sqrt(&cov);
        Ok(GaussianSampler { mean, scale, clamped })
    }

    pub fn draw(&self, g: &DVector<f64>) -> DVector<f64> {
        &self.mean + &self.scale * g
    }
}

/// Simulates the statistic `reps` times on lane `lane`.
pub fn simulate_statistics(ev: &Evaluator, sampler: &GaussianSampler, mc: &McConfig, lane: u64, reps: usize) -> Vec<f64> {
    let n = sampler.mean.len();
    par_map(reps, mc.chunk, |i| {
        let mut rng = substream(mc.seed, lane, i);
        ev.evaluate(&sampler.draw(&standard_normal(&mut rng, n))).value
    })
}

fn count_at_least(sorted: &[f64], c: f64) -> usize {
    sorted.len() - sorted.partition_point(|t| *t < c)
}

/// `Pr(T(μ + σΣ^{1/2}G) ≥ C)`.
pub fn rejection_probability(
    def: &TestDefinition,
    model: &LinearModelSpec,
    restriction: &RestrictionSpec,
    mu: &DVector<f64>,
    sigma2: f64,
    sigma: &DMatrix<f64>,
    mc: &McConfig,
) -> Result<RejectionEstimate> {
    if mu.len() != model.n() {
        return Err(Error::Dimension("mean vector length differs from n".into()));
    }
    let ev = Evaluator::new(&def.kind, model, restriction)?;
    let sampler = GaussianSampler::new(mu.clone(), sigma2, sigma)?;
    let stats = simulate_statistics(&ev, &sampler, mc, LANE_NULL, mc.reps);
    let count = stats.iter().filter(|t| **t >= def.critical_value).count();
    Ok(RejectionEstimate::from_count(count, mc.reps, mc.seed))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurvePoint {
    pub rho: f64,
    pub estimate: RejectionEstimate,
}

fn check_grid(rho_grid: &[f64]) -> Result<()> {
    if rho_grid.is_empty() {
        return Err(Error::InvalidParameter("empty rho grid".into()));
    }
    if let Some(r) = rho_grid.iter().find(|r| !(r.abs() < 1.0)) {
        return Err(Error::InvalidParameter(format!("rho must lie in (-1, 1), got {r}")));
    }
    Ok(())
}

/// Null rejection probabilities under `Λ(ρ)` at the minimum-norm null mean.
/// All grid points share the same standard normal draws.
pub fn size_curve_ar1(
    def: &TestDefinition,
    model: &LinearModelSpec,
    restriction: &RestrictionSpec,
    rho_grid: &[f64],
    mc: &McConfig,
) -> Result<Vec<CurvePoint>> {
    check_grid(rho_grid)?;
    let mu0 = null_representative(model, restriction).mu0;
    rho_grid
        .iter()
        .map(|&rho| {
            let est = rejection_probability(def, model, restriction, &mu0, 1.0, &ar1_matrix(model.n(), rho), mc)?;
            Ok(CurvePoint { rho, estimate: est })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CalibrationConfig {
    pub delta: f64,
    pub rho_grid: Vec<f64>,
    pub search: McConfig,
    pub certify_reps: usize,
    pub tol_c: f64,
    pub max_iter: usize,
}

impl CalibrationConfig {
    pub fn new(delta: f64, search: McConfig) -> Self {
        CalibrationConfig {
            delta,
            rho_grid: DEFAULT_RHO_GRID.to_vec(),
            search,
            certify_reps: 1_000_000,
            tol_c: 1e-4,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub critical_value: f64,
    pub sup_size: f64,
    pub argsup_rho: f64,
    pub certified: RejectionEstimate,
    /// True when the certification run pushed C above the search value.
    pub raised_on_certification: bool,
    pub bracket: (f64, f64),
    pub iterations: usize,
    pub search_curve: Vec<CurvePoint>,
}

/// Design and restriction the audit of `kind` runs on.
fn audit_target(kind: &TestKind, model: &LinearModelSpec, restriction: &RestrictionSpec) -> (TestKind, LinearModelSpec, RestrictionSpec) {
    match kind {
        TestKind::Adjusted(base, adj) => ((**base).clone(), adj.model.clone(), adj.restriction_for(restriction)),
        other => (other.clone(), model.clone(), restriction.clone()),
    }
}

/// Smallest C whose simulated supremum of null rejection probabilities
/// over `Λ(ρ)`, ρ in the grid, is at most δ, then certified at the maximizing
/// ρ on an independent stream.
pub fn calibrate_critical(
    kind: &TestKind,
    model: &LinearModelSpec,
    restriction: &RestrictionSpec,
    cfg: &CalibrationConfig,
) -> Result<Calibration> {
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", cfg.delta)));
    }
    check_grid(&cfg.rho_grid)?;
    let (akind, amodel, arestr) = audit_target(kind, model, restriction);
    let report = diagnostics::audit_for_kind(&akind, &amodel, &arestr, 1.0)?;
    if report.verdict != Verdict::PositiveCase {
        return Err(Error::AuditRefusal(format!(
            "audit verdict is {:?} ({}) but only a PositiveCase design admits a size-controlling \
             critical value with nontrivial power; see the `audit` command or try `--adjust`",
            report.verdict, report.theorem
        )));
    }

    let n = model.n();
    let ev = Evaluator::new(kind, model, restriction)?;
    let mu0 = null_representative(model, restriction).mu0;
    let samples: Vec<Vec<f64>> = cfg
        .rho_grid
        .iter()
        .map(|&rho| {
            let sampler = GaussianSampler::new(mu0.clone(), 1.0, &ar1_matrix(n, rho))?;
            let mut s = simulate_statistics(&ev, &sampler, &cfg.search, LANE_NULL, cfg.search.reps);
            s.sort_by(f64::total_cmp);
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let reps = cfg.search.reps;
    let sup = |c: f64| -> (f64, usize) {
        samples
            .iter()
            .enumerate()
            .map(|(i, s)| (count_at_least(s, c) as f64 / reps as f64, i))
            .fold((-1.0, 0), |acc, x| if x.0 > acc.0 { x } else { acc })
    };

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut iterations = 0;
    while sup(hi).0 > cfg.delta {
        lo = hi;
        hi *= 2.0;
        iterations += 1;
        if iterations > cfg.max_iter || !hi.is_finite() {
            return Err(Error::NonConvergence { lo, hi });
        }
    }
    while hi - lo > cfg.tol_c * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if sup(mid).0 > cfg.delta {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
        if iterations > cfg.max_iter {
            return Err(Error::NonConvergence { lo, hi });
        }
    }
    let (sup_size, arg) = sup(hi);
    let argsup_rho = cfg.rho_grid[arg];
    let search_curve = cfg
        .rho_grid
        .iter()
        .zip(&samples)
        .map(|(&rho, s)| CurvePoint { rho, estimate: RejectionEstimate::from_count(count_at_least(s, hi), reps, cfg.search.seed) })
        .collect();

    let cert_mc = McConfig { reps: cfg.certify_reps, ..cfg.search };
    let sampler = GaussianSampler::new(mu0, 1.0, &ar1_matrix(n, argsup_rho))?;
    let mut cert = simulate_statistics(&ev, &sampler, &cert_mc, LANE_CERTIFY, cfg.certify_reps);
    cert.sort_by(f64::total_cmp);
    let mut critical_value = hi;
    let mut certified = RejectionEstimate::from_count(count_at_least(&cert, hi), cfg.certify_reps, cfg.search.seed);
    let mut raised = false;
    if certified.p > cfg.delta + 2.0 * certified.se {
        // smallest sample threshold whose certified estimate meets the bound
        let m = cfg.certify_reps as f64;
        let idx = cert.iter().enumerate().position(|(i, &t)| {
            t > critical_value && {
                let p = (cert.len() - i) as f64 / m;
                p <= cfg.delta + 2.0 * (p * (1.0 - p) / m).sqrt()
            }
        });
        if let Some(i) = idx {
            critical_value = cert[i];
            certified = RejectionEstimate::from_count(count_at_least(&cert, critical_value), cfg.certify_reps, cfg.search.seed);
            raised = true;
        }
    }
    Ok(Calibration {
        critical_value,
        sup_size,
        argsup_rho,
        certified,
        raised_on_certification: raised,
        bracket: (lo, hi),
        iterations,
        search_curve,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PowerPoint {
    /// `d(μ₁, 𝔐₀)/σ`.
    pub distance: f64,
    pub estimate: RejectionEstimate,
}

/// Alternatives `μ₀* + d·σ·u` with `u` the unit vector along
/// `X(X′X)⁻¹R′a`, which lie at distance `d·σ` from the null mean space.
pub fn alternatives_along(
    model: &LinearModelSpec,
    restriction: &RestrictionSpec,
    a: &DVector<f64>,
    distances: &[f64],
    sigma: f64,
) -> Result<Vec<DVector<f64>>> {
    if a.len() != restriction.q() {
        return Err(Error::Dimension(format!("direction must have length q = {}", restriction.q())));
    }
    let v = model.x() * (model.xtx_inv() * (restriction.r_mat().transpose() * a));
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::InvalidParameter("direction must be nonzero".into()));
    }
    let mu0 = null_representative(model, restriction).mu0;
    Ok(distances.iter().map(|d| &mu0 + &v * (d * sigma / norm)).collect())
}

pub fn power_probe(
    def: &TestDefinition,
    model: &LinearModelSpec,
    restriction: &RestrictionSpec,
    mu1_grid: &[DVector<f64>],
    sigma2: f64,
    sigma: &DMatrix<f64>,
    mc: &McConfig,
) -> Result<Vec<PowerPoint>> {
    mu1_grid
        .iter()
        .map(|mu1| {
            let (_, gap) = restricted_ols(model, restriction, mu1);
            let distance = gap.norm() / sigma2.sqrt();
            let estimate = rejection_probability(def, model, restriction, mu1, sigma2, sigma, mc)?;
            Ok(PowerPoint { distance, estimate })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadialLaw {
    /// `ϱ = χ_n`, recovering the Gaussian case on the same draws.
    Gaussian,
    /// `ϱ = s·χ_n` with `s ∈ {1, 3}` equally likely.
    ChiMixture,
    /// `ϱ ≡ 1`.
    UniformSphereScale,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EllipticalCheck {
    pub radial: RadialLaw,
    pub gaussian: RejectionEstimate,
    pub elliptical: RejectionEstimate,
    pub z_score: f64,
}

pub fn elliptical_null_check(
    def: &TestDefinition,
    model: &LinearModelSpec,
    restriction: &RestrictionSpec,
    sigma: &DMatrix<f64>,
    radial: RadialLaw,
    mc: &McConfig,
) -> Result<EllipticalCheck> {
    let n = model.n();
    let ev = Evaluator::new(&def.kind, model, restriction)?;
    let mu0 = null_representative(model, restriction).mu0;
    let sampler = GaussianSampler::new(mu0, 1.0, sigma)?;
    let c = def.critical_value;
    let chi = ChiSquared::new(n as f64).expect("positive degrees of freedom");
    let hits: Vec<(bool, bool)> = par_map(mc.reps, mc.chunk, |i| {
        let mut rng = substream(mc.seed, LANE_NULL, i);
        let g = standard_normal(&mut rng, n);
        let tg = ev.evaluate(&sampler.draw(&g)).value;
        let te = match radial {
            // ‖G‖·G/‖G‖ is G itself
            RadialLaw::Gaussian => tg,
            RadialLaw::ChiMixture | RadialLaw::UniformSphereScale => {
                let mut rng = substream(mc.seed, LANE_ELLIPTICAL, i);
                let h = standard_normal(&mut rng, n);
                let e = &h / h.norm();
                let rho = if radial == RadialLaw::UniformSphereScale {
                    1.0
                } else {
                    let mut rr = substream(mc.seed, LANE_RADIAL, i);
                    let s = if rr.random_bool(0.5) { 1.0 } else { 3.0 };
                    s * chi.sample(&mut rr).sqrt()
                };
                ev.evaluate(&sampler.draw(&(e * rho))).value
            }
        };
        (tg >= c, te >= c)
    });
    let gaussian = RejectionEstimate::from_count(hits.iter().filter(|h| h.0).count(), mc.reps, mc.seed);
    let elliptical = RejectionEstimate::from_count(hits.iter().filter(|h| h.1).count(), mc.reps, mc.seed);
    let pooled = pooled_se(&gaussian, &elliptical);
    let z_score = if pooled > 0.0 { (gaussian.p - elliptical.p) / pooled } else { 0.0 };
    Ok(EllipticalCheck { radial, gaussian, elliptical, z_score })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::LagWindow;
    use crate::linalg::e_plus;

    fn location(n: usize) -> LinearModelSpec {
        LinearModelSpec::new(DMatrix::from_element(n, 1, 1.0)).unwrap()
    }

    #[test]
    fn substreams_differ_and_repeat() {
        let a: f64 = substream(7, 0, 3).random();
        let b: f64 = substream(7, 0, 3).random();
        let c: f64 = substream(7, 0, 4).random();
        let d: f64 = substream(7, 1, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn sampler_square_root() {
        let sigma = ar1_matrix(6, 0.9);
        let s = GaussianSampler::new(DVector::zeros(6), 2.5, &sigma).unwrap();
        assert!(linalg::max_abs(&(&s.scale * s.scale.transpose() - sigma * 2.5)) < 1e-8);
        assert!(GaussianSampler::new(DVector::zeros(2), 1.0, &DMatrix::from_element(2, 2, 1.0)).is_err());
    }

    #[test]
    fn reps_floor() {
        assert!(McConfig::new(99, 1).is_err());
    }

    #[test]
    fn huge_critical_value_never_rejects() {
        let m = location(10);
        let r = RestrictionSpec::single(1, 0, 0.0).unwrap();
        let def = TestDefinition::new(TestKind::WeightedAutocov(LagWindow::bartlett(4.0)), 1e12).unwrap();
        let est = rejection_probability(&def, &m, &r, &DVector::zeros(10), 1.0, &DMatrix::identity(10, 10), &McConfig::new(500, 3).unwrap()).unwrap();
        assert_eq!(est.p, 0.0);
    }

    #[test]
    fn rho_zero_matches_identity() {
        let m = location(10);
        let r = RestrictionSpec::single(1, 0, 0.0).unwrap();
        let def = TestDefinition::new(TestKind::WeightedAutocov(LagWindow::bartlett(4.0)), 2.0).unwrap();
        let mc = McConfig::new(2000, 11).unwrap();
        let curve = size_curve_ar1(&def, &m, &r, &[0.0], &mc).unwrap();
        let direct = rejection_probability(&def, &m, &r, &DVector::zeros(10), 1.0, &DMatrix::identity(10, 10), &mc).unwrap();
        assert_eq!(curve[0].estimate, direct);
    }

    #[test]
    fn alternatives_sit_at_requested_distance() {
        let m = location(8);
        let r = RestrictionSpec::single(1, 0, 0.5).unwrap();
        let mus = alternatives_along(&m, &r, &DVector::from_element(1, 1.0), &[0.0, 2.0], 1.5).unwrap();
        assert!((&mus[0] - e_plus(8) * 0.5).norm() < 1e-12);
        let (_, gap) = restricted_ols(&m, &r, &mus[1]);
        assert!((gap.norm() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_radial_is_the_same_experiment() {
        let m = location(6);
        let r = RestrictionSpec::single(1, 0, 0.0).unwrap();
        let def = TestDefinition::new(TestKind::WeightedAutocov(LagWindow::bartlett(2.0)), 1.5).unwrap();
        let chk = elliptical_null_check(&def, &m, &r, &ar1_matrix(6, 0.3), RadialLaw::Gaussian, &McConfig::new(1000, 5).unwrap()).unwrap();
        assert_eq!(chk.gaussian.p, chk.elliptical.p);
        assert_eq!(chk.z_score, 0.0);
    }
}
