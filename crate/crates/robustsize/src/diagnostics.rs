//! Audits of the size-one, power-zero and positive conditions for a concrete
//! design, restriction, test family and critical value.
//!
//! Each audit evaluates, at the relevant directions z, the rank of `B(z)`,
//! the statistic `T(z + μ₀*)` against C, and whether `Rβ̂(z)` vanishes. The
//! patterns found are listed in the report and folded into one verdict with
//! the precedence TrivialBreakdown, BoundaryTie, SizeOne, PowerZeroAndBiased,
//! PositiveCase, Inconclusive.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::covariance::{ar1_limit_d, harmonic_basis, Endpoint};
use crate::error::{Error, Result};
use crate::estimators::{self, check_rand_x, check_weight_pd, classify_weight_matrix, lag_window_weights, RhoEstimatorSpec, WeightClass};
use crate::linalg::{self, e_minus, e_plus, unit};
use crate::model::{null_representative, LinearModelSpec, RestrictionSpec, Tolerances};
use crate::montecarlo::{self, par_map, standard_normal, substream, McConfig};
use crate::statistics::{Evaluator, TestKind, TestOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    SizeOne,
    PowerZeroAndBiased,
    TrivialBreakdown,
    PositiveCase,
    BoundaryTie,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    /// Full rank and `T(z + μ₀*) > C`.
    SizeOneFullRank,
    /// Full rank and `T(z + μ₀*) < C`.
    PowerZero,
    /// `B(z) = 0` while `Rβ̂(z) ≠ 0`.
    SizeOneDegenerate,
    /// `z ∈ span(X)` with `Rβ̂(z) ≠ 0` for the GLS-type tests; the size is
    /// bounded below by the K constants of [`estimate_k_bounds`].
    KBoundApplies,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    Above,
    Below,
    Tie,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Evidence {
    pub direction: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<String>,
    pub rank_b: Option<usize>,
    pub in_span: bool,
    pub restricted_coef_zero: bool,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub comparison: Comparison,
    pub flags: Vec<String>,
    pub pattern: Option<Pattern>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Assumptions {
    /// Positive definiteness of the weighting matrix, where applicable.
    #[serde(rename = "AW")]
    pub aw: Option<bool>,
    #[serde(rename = "RandX")]
    pub rand_x: bool,
    /// Zero-based i with eᵢ(n) in span(X).
    pub deleted: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyResult {
    pub nu: f64,
    pub unanimous: bool,
    pub pattern: Option<Pattern>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticReport {
    pub schema: u32,
    pub verdict: Verdict,
    pub theorem: String,
    pub test: serde_json::Value,
    pub critical_value: f64,
    pub evidence: Vec<Evidence>,
    pub patterns: Vec<Pattern>,
    pub assumptions: Assumptions,
    pub tolerances: Tolerances,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<FrequencyResult>>,
}

#[derive(Debug, Clone)]
enum RankMode {
    B,
    Gq(DMatrix<f64>),
    Span,
}

fn rank_mode(kind: &TestKind) -> Result<RankMode> {
    match kind {
        TestKind::WeightedAutocov(_) | TestKind::Het(_) => Ok(RankMode::B),
        TestKind::GeneralQuadratic(w) => Ok(RankMode::Gq(w.clone())),
        TestKind::Eicker | TestKind::UncorrectedF => Ok(RankMode::Span),
        other => Err(Error::Inapplicable(format!("the {} test is audited by audit_gls", other.name()))),
    }
}

fn coef_zero(model: &LinearModelSpec, restriction: &RestrictionSpec, z: &DVector<f64>) -> bool {
    let rp = restriction.r_mat() * model.pinv();
    (&rp * z).norm() <= model.tolerances().membership * rp.norm() * z.norm()
}

fn compare(t: f64, c: f64, tol: f64) -> Comparison {
    if (t - c).abs() <= tol * (1.0 + c) {
        Comparison::Tie
    } else if t > c {
        Comparison::Above
    } else {
        Comparison::Below
    }
}

fn outcome_flags(o: &TestOutcome, in_span: bool) -> Vec<String> {
    let mut flags = Vec::new();
    if in_span {
        flags.push("in-span-X".to_string());
    }
    if let Some(set) = o.exceptional_set {
        flags.push(format!("exceptional:{}", set.name()));
    }
    flags
}

/// The three-pattern check at one direction.
fn check_direction(
    ev: &Evaluator,
    mode: &RankMode,
    mu0: &DVector<f64>,
    z: &DVector<f64>,
    label: String,
    c: f64,
) -> Evidence {
    let model = ev.model();
    let restr = ev.restriction();
    let tol = model.tolerances().membership;
    let q = restr.q();
    let in_span = model.contains(z);
    let zero_coef = coef_zero(model, restr, z);
    let rank_b = match mode {
        RankMode::B => Some(estimators::b_rank(model, restr, z)),
        RankMode::Gq(w) => Some(estimators::gq_rank(model, restr, z, w)),
        RankMode::Span => None,
    };
    let (full, degenerate) = match rank_b {
        Some(r) => (r == q, r == 0),
        None => (!in_span, in_span),
    };
    let outcome = ev.evaluate(&(z + mu0));
    let comparison = compare(outcome.value, c, tol);
    let pattern = if comparison == Comparison::Tie {
        Some(Pattern::Tie)
    } else if full && comparison == Comparison::Above {
        Some(Pattern::SizeOneFullRank)
    } else if full {
        Some(Pattern::PowerZero)
    } else if degenerate && !zero_coef {
        Some(Pattern::SizeOneDegenerate)
    } else {
        None
    };
    Evidence {
        direction: label,
        test: None,
        rank_b,
        in_span,
        restricted_coef_zero: zero_coef,
        t: outcome.value,
        c,
        comparison,
        flags: outcome_flags(&outcome, in_span),
        pattern,
    }
}

fn fold_verdict(patterns: &[Pattern], trivial: bool, positive: bool) -> Verdict {
    if trivial {
        Verdict::TrivialBreakdown
    } else if patterns.contains(&Pattern::Tie) {
        Verdict::BoundaryTie
    } else if patterns.contains(&Pattern::SizeOneFullRank) || patterns.contains(&Pattern::SizeOneDegenerate) {
        Verdict::SizeOne
    } else if patterns.contains(&Pattern::PowerZero) {
        Verdict::PowerZeroAndBiased
    } else if positive {
        Verdict::PositiveCase
    } else {
        Verdict::Inconclusive
    }
}

fn collect_patterns<'a>(it: impl Iterator<Item = &'a Option<Pattern>>) -> Vec<Pattern> {
    let mut v: Vec<Pattern> = it.flatten().copied().collect();
    v.sort();
    v.dedup();
    v
}

/// Whether e₊ and e₋ both lie in span(X) with vanishing `Rβ̂`.
pub fn positive_preconditions(model: &LinearModelSpec, restriction: &RestrictionSpec) -> bool {
    let n = model.n();
    [e_plus(n), e_minus(n)].iter().all(|z| model.contains(z) && coef_zero(model, restriction, z))
}

fn weight_assumption(kind: &TestKind, n: usize) -> Result<Option<bool>> {
    Ok(match kind {
        TestKind::WeightedAutocov(w) => Some(check_weight_pd(&lag_window_weights(w, n)?) == WeightClass::PositiveDefinite),
        TestKind::GeneralQuadratic(w) => Some(classify_weight_matrix(w) != WeightClass::Indefinite),
        _ => None,
    })
}

fn family_tag(kind: &TestKind) -> &'static str {
    match kind {
        TestKind::WeightedAutocov(_) => "ar1-weighted",
        TestKind::GeneralQuadratic(_) => "ar1-general-quadratic",
        TestKind::Eicker => "ar1-eicker",
        TestKind::Het(_) => "ar1-het-weights",
        TestKind::UncorrectedF => "ar1-uncorrected-f",
        TestKind::Fgls(_) | TestKind::OlsAr1(_) => "ar1-gls",
        TestKind::Adjusted(..) => "ar1-adjusted",
    }
}

struct Context {
    ev: Evaluator,
    mode: RankMode,
    mu0: DVector<f64>,
    assumptions: Assumptions,
    trivial: bool,
    notes: Vec<String>,
}

fn prepare(kind: &TestKind, model: &LinearModelSpec, restriction: &RestrictionSpec) -> Result<Context> {
    let mode = rank_mode(kind)?;
    let ev = Evaluator::new(kind, model, restriction)?;
    let rx = check_rand_x(model, restriction, model.tolerances().membership);
    let aw = weight_assumption(kind, model.n())?;
    let mut notes = Vec::new();
    let trivial = matches!(mode, RankMode::B | RankMode::Gq(_)) && !rx.holds;
    if trivial {
        notes.push("R(X'X)^-1 X' loses rank q after deleting the unit vectors in span(X): the variance estimator is singular everywhere".into());
    }
    if aw == Some(false) {
        notes.push("weighting matrix is not positive definite; the patterns are reported but no verdict is drawn from them".into());
    }
    let mu0 = null_representative(model, restriction).mu0;
    Ok(Context { ev, mode, mu0, assumptions: Assumptions { aw, rand_x: rx.holds, deleted: rx.deleted }, trivial, notes })
}

fn finish(
    ctx: Context,
    kind: &TestKind,
    c: f64,
    evidence: Vec<Evidence>,
    patterns: Vec<Pattern>,
    positive: bool,
    tag: &str,
) -> DiagnosticReport {
    let mut verdict = fold_verdict(&patterns, ctx.trivial, positive);
    let mut notes = ctx.notes;
    if ctx.assumptions.aw == Some(false) && verdict != Verdict::TrivialBreakdown {
        verdict = Verdict::Inconclusive;
    }
    if verdict == Verdict::Inconclusive {
        notes.push("the checked conditions are sufficient, not exhaustive; no conclusion is drawn".into());
    }
    let theorem = if verdict == Verdict::PositiveCase { format!("{tag}-positive") } else { tag.to_string() };
    DiagnosticReport {
        schema: 1,
        verdict,
        theorem,
        test: kind.describe(),
        critical_value: c,
        evidence,
        patterns,
        assumptions: ctx.assumptions,
        tolerances: ctx.ev.model().tolerances(),
        notes,
        seed: None,
        frequencies: None,
    }
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("critical value must be positive and finite, got {c}")));
    }
    Ok(())
}

/// Audit under the AR(1) covariance model at `z ∈ {e₊, e₋}`. Eicker and
/// uncorrected F replace the rank of `B(z)` by `z ∉ span(X)`.
pub fn audit_ar1_weighted(kind: &TestKind, model: &LinearModelSpec, restriction: &RestrictionSpec, c: f64) -> Result<DiagnosticReport> {
    check_c(c)?;
    if let TestKind::Adjusted(base, adj) = kind {
        let mut report = audit_ar1_weighted(base, &adj.model, &adj.restriction_for(restriction), c)?;
        report.test = kind.describe();
        report.notes.push(format!("audited on the enlarged design of scenario {}", adj.scenario));
        return Ok(report);
    }
    let ctx = prepare(kind, model, restriction)?;
    let n = model.n();
    let evidence: Vec<Evidence> = [("e+", e_plus(n)), ("e-", e_minus(n))]
        .into_iter()
        .map(|(label, z)| check_direction(&ctx.ev, &ctx.mode, &ctx.mu0, &z, label.into(), c))
        .collect();
    let patterns = collect_patterns(evidence.iter().map(|e| &e.pattern));
    let positive = positive_preconditions(model, restriction);
    Ok(finish(ctx, kind, c, evidence, patterns, positive, family_tag(kind)))
}

/// Runs the AR(1) audit that matches the family.
pub fn audit_for_kind(kind: &TestKind, model: &LinearModelSpec, restriction: &RestrictionSpec, c: f64) -> Result<DiagnosticReport> {
    match kind {
        TestKind::Fgls(spec) | TestKind::OlsAr1(spec) => audit_gls(model, restriction, spec, c),
        other => audit_ar1_weighted(other, model, restriction, c),
    }
}

/// `ν = jπ/64`, `j = 0, …, 64`.
pub fn default_nu_grid() -> Vec<f64> {
    (0..=64).map(|j| if j == 64 { PI } else { j as f64 * PI / 64.0 }).collect()
}

/// Audit under the AR(2) covariance model: for each ν the patterns are
/// evaluated at `samples` random unit vectors of span(E(ν)) and asserted
/// only when all samples agree.
pub fn audit_ar2(
    kind: &TestKind,
    model: &LinearModelSpec,
    restriction: &RestrictionSpec,
    c: f64,
    nu_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<DiagnosticReport> {
    check_c(c)?;
    let n = model.n();
    if n < 3 {
        return Err(Error::InvalidParameter("the AR(2) audit needs n >= 3".into()));
    }
    if samples == 0 || nu_grid.is_empty() {
        return Err(Error::InvalidParameter("need at least one frequency and one direction sample".into()));
    }
    let ctx = prepare(kind, model, restriction)?;
    let mut evidence = Vec::new();
    let mut freqs = Vec::new();
    let mut notes = Vec::new();
    let mut positive = true;
    for (j, &nu) in nu_grid.iter().enumerate() {
        let basis = harmonic_basis(n, nu)?.basis;
        let l = basis.ncols();
        let checks: Vec<Evidence> = (0..samples)
            .map(|s| {
                let mut rng = substream(seed, montecarlo::LANE_DIRECTIONS, (j * samples + s) as u64);
                let g = standard_normal(&mut rng, l);
                let z = &basis * g;
                let z = &z / z.norm();
                check_direction(&ctx.ev, &ctx.mode, &ctx.mu0, &z, format!("nu={nu:.6}"), c)
            })
            .collect();
        let first = checks[0].pattern;
        let unanimous = checks.iter().all(|e| e.pattern == first);
        let mut row = checks[0].clone();
        if !unanimous {
            row.pattern = None;
            row.flags.push("non-unanimous".into());
            notes.push(format!("patterns disagree across sampled directions at nu = {nu:.6}; inconclusive there"));
        }
        positive &= (0..l).all(|i| {
            let col = basis.column(i).into_owned();
            model.contains(&col) && coef_zero(model, restriction, &col)
        });
        freqs.push(FrequencyResult { nu, unanimous, pattern: row.pattern });
        evidence.push(row);
    }
    let patterns = collect_patterns(freqs.iter().map(|f| &f.pattern));
    let mut report = finish(ctx, kind, c, evidence, patterns, positive, "ar2-harmonic");
    report.notes.extend(notes);
    report.seed = Some(seed);
    report.frequencies = Some(freqs);
    Ok(report)
}

/// Audit of the FGLS and OLS-AR(1) tests at `z ∈ {e₊, e₋}`. A direction in
/// span(X) with nonzero `Rβ̂(z)` bounds the size below by a K constant, which
/// equals one for the Yule-Walker estimator.
pub fn audit_gls(model: &LinearModelSpec, restriction: &RestrictionSpec, spec: &RhoEstimatorSpec, c: f64) -> Result<DiagnosticReport> {
    check_c(c)?;
    let (n, k) = (model.n(), model.k());
    spec.check(n, k)?;
    let tol = model.tolerances().membership;
    let mu0 = null_representative(model, restriction).mu0;
    let mut evidence = Vec::new();
    for kind in [TestKind::Fgls(*spec), TestKind::OlsAr1(*spec)] {
        let ev = Evaluator::new(&kind, model, restriction)?;
        for (label, z) in [("e+", e_plus(n)), ("e-", e_minus(n))] {
            let in_span = model.contains(&z);
            let zero_coef = coef_zero(model, restriction, &z);
            let outcome = ev.evaluate(&(&z + &mu0));
            let comparison = compare(outcome.value, c, tol);
            let pattern = if in_span {
                match (zero_coef, spec.is_yule_walker()) {
                    (true, _) => None,
                    (false, true) => Some(Pattern::SizeOneDegenerate),
                    (false, false) => Some(Pattern::KBoundApplies),
                }
            } else if outcome.is_exceptional() {
                None
            } else {
                match comparison {
                    Comparison::Tie => Some(Pattern::Tie),
                    Comparison::Above => Some(Pattern::SizeOneFullRank),
                    Comparison::Below => Some(Pattern::PowerZero),
                }
            };
            let mut flags = outcome_flags(&outcome, in_span);
            if !in_span && outcome.is_exceptional() {
                flags.push("inapplicable".into());
            }
            evidence.push(Evidence {
                direction: label.into(),
                test: Some(kind.name().into()),
                rank_b: None,
                in_span,
                restricted_coef_zero: zero_coef,
                t: outcome.value,
                c,
                comparison,
                flags,
                pattern,
            });
        }
    }
    let patterns = collect_patterns(evidence.iter().map(|e| &e.pattern));
    let positive = positive_preconditions(model, restriction);
    let mut verdict = fold_verdict(&patterns, false, positive);
    let mut notes = Vec::new();
    if patterns.contains(&Pattern::KBoundApplies) {
        notes.push("a direction in span(X) has nonzero restricted coefficients: the size is at least K, see estimate_k_bounds".into());
    }
    if verdict == Verdict::Inconclusive {
        notes.push("the checked conditions are sufficient, not exhaustive; no conclusion is drawn".into());
    }
    if verdict == Verdict::PositiveCase && !patterns.is_empty() {
        verdict = Verdict::Inconclusive;
    }
    let kind = TestKind::Fgls(*spec);
    Ok(DiagnosticReport {
        schema: 1,
        verdict,
        theorem: if verdict == Verdict::PositiveCase { "ar1-gls-positive".into() } else { "ar1-gls".into() },
        test: kind.describe(),
        critical_value: c,
        evidence,
        patterns,
        assumptions: Assumptions { aw: None, rand_x: true, deleted: Vec::new() },
        tolerances: model.tolerances(),
        notes,
        seed: None,
        frequencies: None,
    })
}

/// Audit under heteroskedasticity at the unit vectors `eᵢ(n)`. Accepts the
/// Het family and the uncorrected F test.
pub fn audit_het(kind: &TestKind, model: &LinearModelSpec, restriction: &RestrictionSpec, c: f64) -> Result<DiagnosticReport> {
    check_c(c)?;
    if !matches!(kind, TestKind::Het(_) | TestKind::UncorrectedF) {
        return Err(Error::Inapplicable(format!("audit_het takes the het or f test, got {}", kind.name())));
    }
    let ctx = prepare(kind, model, restriction)?;
    let n = model.n();
    let evidence: Vec<Evidence> = (0..n)
        .map(|i| check_direction(&ctx.ev, &ctx.mode, &ctx.mu0, &unit(n, i), format!("e{}", i + 1), c))
        .collect();
    let patterns = collect_patterns(evidence.iter().map(|e| &e.pattern));
    Ok(finish(ctx, kind, c, evidence, patterns, false, "het"))
}

#[derive(Debug, Clone, Serialize)]
pub struct GenericityResult {
    pub fraction: f64,
    pub samples: usize,
    pub seed: u64,
    pub intercept: bool,
    pub verdicts: BTreeMap<String, usize>,
}

/// Fraction of random standard normal designs for which the matching audit
/// reaches a verdict other than Inconclusive or BoundaryTie. In intercept
/// mode the first column is e₊.
#[allow(clippy::too_many_arguments)]
pub fn genericity_probe(
    n: usize,
    k: usize,
    restriction: &RestrictionSpec,
    kind: &TestKind,
    c: f64,
    samples: usize,
    seed: u64,
    intercept: bool,
) -> Result<GenericityResult> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be at least 1".into()));
    }
    if matches!(kind, TestKind::Adjusted(..)) {
        return Err(Error::Inapplicable("the genericity probe draws its own designs; adjusted tests are tied to one design".into()));
    }
    if restriction.r_mat().ncols() != k {
        return Err(Error::Dimension(format!("R has {} columns but k = {k}", restriction.r_mat().ncols())));
    }
    let verdicts: Vec<Option<Verdict>> = par_map(samples, 8, |i| {
        let mut rng = substream(seed, montecarlo::LANE_DESIGNS, i);
        let mut x = DMatrix::from_fn(n, k, |_, _| 0.0);
        for v in x.iter_mut() {
            *v = standard_normal(&mut rng, 1)[0];
        }
        if intercept {
            x.column_mut(0).fill(1.0);
        }
        let model = LinearModelSpec::new(x).ok()?;
        let report = match kind {
            TestKind::Het(_) => audit_het(kind, &model, restriction, c),
            other => audit_for_kind(other, &model, restriction, c),
        };
        report.ok().map(|r| r.verdict)
    });
    let mut counts = BTreeMap::new();
    let mut applies = 0;
    for v in &verdicts {
        let name = v.map(|v| format!("{v:?}")).unwrap_or_else(|| "Error".into());
        *counts.entry(name).or_insert(0) += 1;
        if matches!(v, Some(v) if *v != Verdict::Inconclusive && *v != Verdict::BoundaryTie) {
            applies += 1;
        }
    }
    Ok(GenericityResult { fraction: applies as f64 / samples as f64, samples, seed, intercept, verdicts: counts })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KBounds {
    pub k1: f64,
    pub k2: f64,
    pub se_k1: f64,
    pub se_k2: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Monte Carlo estimates of the lower bounds K₁ and K₂ on the size of the
/// FGLS or OLS-AR(1) test along the endpoint `z = e±`, using
/// `ξ̄(γ) = (Rβ̂(zγ))′Ω̌⁻¹((Σ̄^{1/2} + D^{1/2})G)Rβ̂(zγ)` with `Σ̄ = zz′`.
/// Points where `Ω̌` is undefined or singular count as `ξ̄ ≥ 0`.
pub fn estimate_k_bounds(
    model: &LinearModelSpec,
    restriction: &RestrictionSpec,
    kind: &TestKind,
    endpoint: Endpoint,
    mc: &McConfig,
) -> Result<KBounds> {
    if !matches!(kind, TestKind::Fgls(_) | TestKind::OlsAr1(_)) {
        return Err(Error::Inapplicable("K bounds are defined for the fgls and ols-ar1 tests".into()));
    }
    let n = model.n();
    let z = endpoint.direction(n);
    if coef_zero(model, restriction, &z) {
        return Err(Error::Inapplicable("R beta_hat vanishes along the chosen direction".into()));
    }
    let d = restriction.r_mat() * model.pinv() * &z;
    let sbar = &z * z.transpose() / (n as f64).sqrt();
    let (dh, _) = linalg::sym_sqrt(&ar1_limit_d(n, endpoint)?);
    let m = sbar + dh;
    let ev = Evaluator::new(kind, model, restriction)?;
    let factor = model.tolerances().rank_factor;
    let draws: Vec<(bool, bool, bool)> = par_map(mc.reps, mc.chunk, |i| {
        let mut rng = substream(mc.seed, montecarlo::LANE_KBOUNDS, i);
        let g = standard_normal(&mut rng, n);
        let gamma = standard_normal(&mut rng, 1)[0];
        let v = ev.variance(&(&m * g));
        let base = match (&v.set, &v.omega) {
            (None, Some(omega)) => linalg::quad_form_inv(omega, &d, factor, 0.0).unwrap_or(0.0),
            _ => 0.0,
        };
        // ξ̄(γ) = γ² ξ̄(1) for a single direction
        (base >= 0.0, base >= 0.0, gamma * gamma * base >= 0.0)
    });
    let reps = mc.reps as f64;
    let mean = |f: &dyn Fn(&(bool, bool, bool)) -> bool| draws.iter().filter(|x| f(x)).count() as f64 / reps;
    let plus = mean(&|x| x.0);
    let minus = mean(&|x| x.1);
    let k1 = plus.min(minus);
    let k2 = mean(&|x| x.2);
    let se = |p: f64| (p * (1.0 - p) / reps).sqrt();
    Ok(KBounds { k1, k2, se_k1: se(k1), se_k2: se(k2), reps: mc.reps, seed: mc.seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{HetVariant, LagWindow, UpperLimit};

    fn location(n: usize) -> LinearModelSpec {
        LinearModelSpec::new(DMatrix::from_element(n, 1, 1.0)).unwrap()
    }

    fn one(k: usize, i: usize) -> RestrictionSpec {
        RestrictionSpec::single(k, i, 0.0).unwrap()
    }

    #[test]
    fn location_model_is_size_one() {
        for n in [5, 8] {
            let kind = TestKind::WeightedAutocov(LagWindow::bartlett(n as f64 / 2.0));
            let rep = audit_ar1_weighted(&kind, &location(n), &one(1, 0), 2.0).unwrap();
            assert_eq!(rep.verdict, Verdict::SizeOne);
            assert!(rep.patterns.contains(&Pattern::SizeOneDegenerate));
            assert_eq!(rep.evidence[0].rank_b, Some(0));
        }
    }

    #[test]
    fn location_even_also_reports_power_zero() {
        let kind = TestKind::WeightedAutocov(LagWindow::bartlett(3.0));
        let rep = audit_ar1_weighted(&kind, &location(6), &one(1, 0), 2.0).unwrap();
        assert_eq!(rep.verdict, Verdict::SizeOne);
        assert!(rep.patterns.contains(&Pattern::PowerZero));
        assert!(rep.evidence[1].t.abs() < 1e-12);
    }

    #[test]
    fn both_directions_in_span_is_positive() {
        let x = DMatrix::from_columns(&[e_plus(10), e_minus(10), DVector::from_fn(10, |t, _| ((t * 3) % 7) as f64)]);
        let rep = audit_ar1_weighted(&TestKind::WeightedAutocov(LagWindow::bartlett(3.0)), &LinearModelSpec::new(x).unwrap(), &one(3, 2), 2.0).unwrap();
        assert_eq!(rep.verdict, Verdict::PositiveCase);
        assert!(rep.patterns.is_empty());
    }

    #[test]
    fn indefinite_weights_do_not_yield_a_verdict() {
        let kind = TestKind::WeightedAutocov(LagWindow::custom(vec![1.0, 1.0, 1.0, 1.0]));
        let rep = audit_ar1_weighted(&kind, &location(6), &one(1, 0), 2.0).unwrap();
        assert_eq!(rep.assumptions.aw, Some(false));
        assert_eq!(rep.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn trivial_breakdown_when_rand_x_fails() {
        // the tested coefficient is read off observation 3 alone
        let v = DVector::from_vec(vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
        let x = DMatrix::from_columns(&[unit(6, 2), v]);
        let rep = audit_ar1_weighted(&TestKind::WeightedAutocov(LagWindow::bartlett(2.0)), &LinearModelSpec::new(x).unwrap(), &one(2, 0), 1.0).unwrap();
        assert_eq!(rep.verdict, Verdict::TrivialBreakdown);
        assert!(!rep.assumptions.rand_x);
    }

    #[test]
    fn tie_is_reported() {
        let kind = TestKind::UncorrectedF;
        let rep = audit_het(&kind, &location(5), &one(1, 0), 1.0).unwrap();
        assert_eq!(rep.verdict, Verdict::BoundaryTie);
    }

    #[test]
    fn het_location_model() {
        let n = 6;
        let t = n as f64 / (n as f64 - 1.0);
        let kind = TestKind::Het(HetVariant::HC0);
        let below = audit_het(&kind, &location(n), &one(1, 0), t - 0.1).unwrap();
        assert_eq!(below.verdict, Verdict::SizeOne);
        assert!(below.evidence.iter().all(|e| e.pattern == Some(Pattern::SizeOneFullRank)));
        let above = audit_het(&kind, &location(n), &one(1, 0), t + 0.1).unwrap();
        assert_eq!(above.verdict, Verdict::PowerZeroAndBiased);
        let f = audit_het(&TestKind::UncorrectedF, &location(n), &one(1, 0), 1.5).unwrap();
        assert_eq!(f.verdict, Verdict::PowerZeroAndBiased);
    }

    #[test]
    fn gls_yule_walker_location_is_size_one() {
        let rep = audit_gls(&location(10), &one(1, 0), &RhoEstimatorSpec::yule_walker(), 2.0).unwrap();
        assert_eq!(rep.verdict, Verdict::SizeOne);
        let other = RhoEstimatorSpec::new(2, UpperLimit::NMinusOne).unwrap();
        let rep = audit_gls(&location(10), &one(1, 0), &other, 2.0).unwrap();
        assert!(rep.patterns.contains(&Pattern::KBoundApplies));
    }

    #[test]
    fn ar2_endpoints_match_ar1_audit() {
        let kind = TestKind::WeightedAutocov(LagWindow::bartlett(3.0));
        let m = location(6);
        let a = audit_ar1_weighted(&kind, &m, &one(1, 0), 2.0).unwrap();
        let b = audit_ar2(&kind, &m, &one(1, 0), 2.0, &[0.0, PI], 8, 1).unwrap();
        assert_eq!(a.verdict, b.verdict);
        assert_eq!(a.patterns, b.patterns);
    }

    #[test]
    fn ar2_seasonal_design_is_size_one() {
        let n = 12;
        let nu0 = PI / 3.0;
        let e = harmonic_basis(n, nu0).unwrap().basis;
        let x = DMatrix::from_columns(&[e.column(0).into_owned(), e.column(1).into_owned(), e_plus(n)]);
        let model = LinearModelSpec::new(x).unwrap();
        let mut r = DMatrix::zeros(2, 3);
        r[(0, 0)] = 1.0;
        r[(1, 1)] = 1.0;
        let restr = RestrictionSpec::new(r, DVector::zeros(2)).unwrap();
        let kind = TestKind::WeightedAutocov(LagWindow::bartlett(3.0));
        let rep = audit_ar2(&kind, &model, &restr, 5.0, &[nu0], 16, 3).unwrap();
        assert!(rep.assumptions.rand_x);
        assert_eq!(rep.verdict, Verdict::SizeOne);
        assert_eq!(rep.patterns, vec![Pattern::SizeOneDegenerate]);
    }

    #[test]
    fn genericity_is_deterministic() {
        let kind = TestKind::WeightedAutocov(LagWindow::bartlett(3.0));
        let a = genericity_probe(8, 2, &one(2, 1), &kind, 2.0, 1, 42, false).unwrap();
        let b = genericity_probe(8, 2, &one(2, 1), &kind, 2.0, 1, 42, false).unwrap();
        assert_eq!(a.verdicts, b.verdicts);
        let c = genericity_probe(8, 2, &one(2, 0), &kind, 2.0, 50, 7, true).unwrap();
        assert_eq!(c.fraction, 1.0);
    }

    #[test]
    fn k_bounds_yule_walker_equal_one() {
        let mc = McConfig::new(2000, 9).unwrap();
        let kb = estimate_k_bounds(&location(8), &one(1, 0), &TestKind::Fgls(RhoEstimatorSpec::yule_walker()), Endpoint::Plus, &mc).unwrap();
        assert_eq!(kb.k1, 1.0);
        assert_eq!(kb.k2, 1.0);
        let x = DMatrix::from_columns(&[e_plus(8), DVector::from_fn(8, |t, _| t as f64)]);
        let err = estimate_k_bounds(&LinearModelSpec::new(x).unwrap(), &one(2, 1), &TestKind::Fgls(RhoEstimatorSpec::yule_walker()), Endpoint::Plus, &mc);
        assert!(matches!(err, Err(Error::Inapplicable(_))));
    }
}
