//! Test statistics and the adjusted designs that purge `e₊`/`e₋`.
//!
//! Every family evaluates `(Rβ̌ − r)′Ω̌⁻¹(Rβ̌ − r)` for its own pair
//! `(β̌, Ω̌)` and returns zero, flagged, wherever `Ω̌` is undefined or
//! singular. The uncorrected F statistic is the only one divided by q.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimators::{
    self, b_floor, check_rand_x, fgls_components, het_factors, lag_window_weights, ols_ar1_omega, HetVariant,
    LagWindow, RhoEstimatorSpec, ToeplitzWeights,
};
use crate::linalg::{self, e_minus, e_plus};
use crate::model::{restricted_gram, LinearModelSpec, RestrictionSpec};

#[derive(Debug, Clone)]
pub enum TestKind {
    WeightedAutocov(LagWindow),
    GeneralQuadratic(DMatrix<f64>),
    Eicker,
    Het(HetVariant),
    Fgls(RhoEstimatorSpec),
    OlsAr1(RhoEstimatorSpec),
    UncorrectedF,
    Adjusted(Box<TestKind>, AdjustedDesign),
}

impl TestKind {
    pub fn name(&self) -> &'static str {
        match self {
            TestKind::WeightedAutocov(_) => "weighted",
            TestKind::GeneralQuadratic(_) => "gq",
            TestKind::Eicker => "eicker",
            TestKind::Het(_) => "het",
            TestKind::Fgls(_) => "fgls",
            TestKind::OlsAr1(_) => "ols-ar1",
            TestKind::UncorrectedF => "f",
            TestKind::Adjusted(..) => "adjusted",
        }
    }

    /// Parameters of the family as JSON, for reports.
    pub fn describe(&self) -> serde_json::Value {
        match self {
            TestKind::WeightedAutocov(w) => json!({"family": "weighted", "window": w}),
            TestKind::GeneralQuadratic(m) => json!({"family": "gq", "n": m.nrows()}),
            TestKind::Eicker => json!({"family": "eicker"}),
            TestKind::Het(v) => json!({"family": "het", "variant": v}),
            TestKind::Fgls(s) => json!({"family": "fgls", "rho": s}),
            TestKind::OlsAr1(s) => json!({"family": "ols-ar1", "rho": s}),
            TestKind::UncorrectedF => json!({"family": "f"}),
            TestKind::Adjusted(base, adj) => json!({
                "family": "adjusted",
                "base": base.describe(),
                "scenario": adj.scenario,
                "added": adj.added,
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestDefinition {
    pub kind: TestKind,
    pub critical_value: f64,
}

impl TestDefinition {
    pub fn new(kind: TestKind, critical_value: f64) -> Result<Self> {
        if !(critical_value > 0.0 && critical_value.is_finite()) {
            return Err(Error::InvalidParameter(format!("critical value must be positive and finite, got {critical_value}")));
        }
        Ok(TestDefinition { kind, critical_value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExceptionalSet {
    SingularOmega,
    InSpan,
    N0,
    N1,
    N2,
    N2Star,
    N0Star,
}

impl ExceptionalSet {
    pub fn name(self) -> &'static str {
        match self {
            ExceptionalSet::SingularOmega => "singular-omega",
            ExceptionalSet::InSpan => "in-span-X",
            ExceptionalSet::N0 => "N0",
            ExceptionalSet::N1 => "N1",
            ExceptionalSet::N2 => "N2",
            ExceptionalSet::N2Star => "N2*",
            ExceptionalSet::N0Star => "N0*",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestOutcome {
    pub value: f64,
    pub exceptional_set: Option<ExceptionalSet>,
}

impl TestOutcome {
    pub fn is_exceptional(&self) -> bool {
        self.exceptional_set.is_some()
    }
    fn zero(set: ExceptionalSet) -> Self {
        TestOutcome { value: 0.0, exceptional_set: Some(set) }
    }
}

/// The pair entering the quadratic form. `omega` is `None` on the family's
/// exceptional set, named by `set`.
#[derive(Debug, Clone)]
pub struct VarianceEval {
    pub diff: DVector<f64>,
    pub omega: Option<DMatrix<f64>>,
    pub set: Option<ExceptionalSet>,
    pub floor: f64,
}

#[derive(Debug, Clone)]
enum Prepared {
    Weighted(ToeplitzWeights),
    Gq(DMatrix<f64>),
    Eicker,
    Het(DVector<f64>),
    Fgls(RhoEstimatorSpec),
    OlsAr1(RhoEstimatorSpec),
    F(DMatrix<f64>),
    Adjusted(Box<Evaluator>),
}

/// A test family bound to a design and restriction, with everything that
/// does not depend on `y` computed once.
#[derive(Debug, Clone)]
pub struct Evaluator {
    model: LinearModelSpec,
    restriction: RestrictionSpec,
    prepared: Prepared,
}

impl Evaluator {
    pub fn new(kind: &TestKind, model: &LinearModelSpec, restriction: &RestrictionSpec) -> Result<Self> {
        model.check_restriction(restriction)?;
        let n = model.n();
        let prepared = match kind {
            TestKind::WeightedAutocov(w) => Prepared::Weighted(lag_window_weights(w, n)?),
            TestKind::GeneralQuadratic(m) => {
                if m.shape() != (n, n) {
                    return Err(Error::Dimension(format!("weighting matrix must be {n}x{n}")));
                }
                if linalg::max_abs(&(m - m.transpose())) > 1e-12 * linalg::max_abs(m).max(1.0) {
                    return Err(Error::InvalidParameter("weighting matrix must be symmetric".into()));
                }
                Prepared::Gq(m.clone())
            }
            TestKind::Eicker => Prepared::Eicker,
            TestKind::Het(v) => Prepared::Het(het_factors(model, *v)),
            TestKind::Fgls(s) => Prepared::Fgls(*s),
            TestKind::OlsAr1(s) => Prepared::OlsAr1(*s),
            TestKind::UncorrectedF => Prepared::F(restricted_gram(model, restriction)),
            TestKind::Adjusted(base, adj) => {
                if adj.model.n() != n {
                    return Err(Error::Dimension("adjusted design has a different sample size".into()));
                }
                let restr = adj.restriction_for(restriction);
                Prepared::Adjusted(Box::new(Evaluator::new(base, &adj.model, &restr)?))
            }
        };
        Ok(Evaluator { model: model.clone(), restriction: restriction.clone(), prepared })
    }

    pub fn model(&self) -> &LinearModelSpec {
        &self.model
    }
    pub fn restriction(&self) -> &RestrictionSpec {
        &self.restriction
    }

    pub fn variance(&self, y: &DVector<f64>) -> VarianceEval {
        let model = &self.model;
        let restr = &self.restriction;
        let ols_diff = || restr.r_mat() * model.ols_estimate(y) - restr.r_vec();
        let bf = b_floor(model, restr, y);
        let plain = |omega: DMatrix<f64>| VarianceEval { diff: ols_diff(), omega: Some(omega), set: None, floor: bf * bf };
        match &self.prepared {
            Prepared::Weighted(w) => plain(estimators::omega_weighted(model, restr, y, w)),
            Prepared::Gq(m) => {
                if estimators::gq_rank(model, restr, y, m) < restr.q() {
                    return VarianceEval { diff: ols_diff(), omega: None, set: Some(ExceptionalSet::SingularOmega), floor: 0.0 };
                }
                let psi = estimators::psi_general_quadratic(model, y, m);
                plain(estimators::omega_from_psi(model, restr, &psi))
            }
            Prepared::Eicker => {
                let psi = estimators::psi_eicker(model, y);
                plain(estimators::omega_from_psi(model, restr, &psi))
            }
            Prepared::Het(d) => {
                let r = restr.r_mat();
                let mut o = r * estimators::psi_het_with(model, y, d) * r.transpose();
                linalg::symmetrize(&mut o);
                plain(o)
            }
            Prepared::F(gram) => {
                let u = model.residuals(y);
                if u.norm() <= model.tolerances().membership * y.norm() {
                    return VarianceEval { diff: ols_diff(), omega: None, set: Some(ExceptionalSet::InSpan), floor: 0.0 };
                }
                let s2 = u.norm_squared() / (model.n() - model.k()) as f64;
                plain(gram * (s2 * restr.q() as f64))
            }
            Prepared::Fgls(spec) => {
                let c = fgls_components(model, restr, y, spec);
                let f = c.flags;
                let set = if f.n0 {
                    Some(ExceptionalSet::N0)
                } else if f.n1 {
                    Some(ExceptionalSet::N1)
                } else if f.n2 {
                    Some(ExceptionalSet::N2)
                } else if f.n2_star {
                    Some(ExceptionalSet::N2Star)
                } else {
                    None
                };
                let diff = match &c.beta_tilde {
                    Some(b) => restr.r_mat() * b - restr.r_vec(),
                    None => ols_diff(),
                };
                VarianceEval { diff, omega: if set.is_none() { c.omega_tilde } else { None }, set, floor: 0.0 }
            }
            Prepared::OlsAr1(spec) => {
                let c = ols_ar1_omega(model, restr, y, spec);
                let set = if c.flags.n0 {
                    Some(ExceptionalSet::N0)
                } else if c.flags.n0_star {
                    Some(ExceptionalSet::N0Star)
                } else {
                    None
                };
                VarianceEval { diff: ols_diff(), omega: if set.is_none() { c.omega_hat } else { None }, set, floor: 0.0 }
            }
            Prepared::Adjusted(inner) => inner.variance(y),
        }
    }

    pub fn evaluate(&self, y: &DVector<f64>) -> TestOutcome {
        let v = self.variance(y);
        if let Some(set) = v.set {
            return TestOutcome::zero(set);
        }
        let omega = v.omega.expect("non-exceptional variance");
        match linalg::quad_form_inv(&omega, &v.diff, self.model.tolerances().rank_factor, v.floor) {
            Some(t) => TestOutcome { value: t, exceptional_set: None },
            None => TestOutcome::zero(ExceptionalSet::SingularOmega),
        }
    }
}

pub fn evaluate(def: &TestDefinition, model: &LinearModelSpec, restriction: &RestrictionSpec, y: &DVector<f64>) -> Result<TestOutcome> {
    Ok(Evaluator::new(&def.kind, model, restriction)?.evaluate(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AddedColumn {
    EPlus,
    EMinus,
}

/// The enlarged working model `(X̄, R̄ = (R, 0))` of one of the five
/// adjustment scenarios.
#[derive(Debug, Clone)]
pub struct AdjustedDesign {
    pub model: LinearModelSpec,
    pub rbar: DMatrix<f64>,
    pub scenario: u8,
    pub added: Vec<AddedColumn>,
    /// Membership or zero decisions that came within two orders of magnitude
    /// of the tolerance.
    pub notes: Vec<String>,
}

impl AdjustedDesign {
    pub fn xbar(&self) -> &DMatrix<f64> {
        self.model.x()
    }
    /// `(R̄, r)` for the original restriction.
    pub fn restriction_for(&self, restriction: &RestrictionSpec) -> RestrictionSpec {
        restriction.padded(self.rbar.ncols() - restriction.r_mat().ncols())
    }
    pub fn added_vectors(&self) -> Vec<DVector<f64>> {
        let n = self.model.n();
        self.added
            .iter()
            .map(|c| match c {
                AddedColumn::EPlus => e_plus(n),
                AddedColumn::EMinus => e_minus(n),
            })
            .collect()
    }
}

struct Probe<'a> {
    tol: f64,
    notes: &'a mut Vec<String>,
}

impl Probe<'_> {
    fn small(&mut self, label: &str, value: f64, scale: f64) -> bool {
        let ratio = if scale == 0.0 { 0.0 } else { value / scale };
        if ratio > self.tol / 100.0 && ratio < self.tol * 100.0 {
            self.notes.push(format!("{label}: relative size {ratio:.3e} is close to the tolerance {:.1e}", self.tol));
        }
        ratio <= self.tol
    }
}

fn contains(model: &LinearModelSpec, v: &DVector<f64>, label: &str, probe: &mut Probe) -> bool {
    probe.small(label, model.residuals(v).norm(), v.norm())
}

fn restricted_coef_zero(model: &LinearModelSpec, rmat: &DMatrix<f64>, v: &DVector<f64>, label: &str, probe: &mut Probe) -> bool {
    let rp = rmat * model.pinv();
    probe.small(label, (&rp * v).norm(), rp.norm() * v.norm())
}

/// Selects the adjustment scenario and builds `(X̄, R̄)`.
pub fn build_adjusted(model: &LinearModelSpec, restriction: &RestrictionSpec, tol: f64) -> Result<AdjustedDesign> {
    model.check_restriction(restriction)?;
    let n = model.n();
    let k = model.k();
    let (ep, em) = (e_plus(n), e_minus(n));
    let mut notes = Vec::new();
    let mut probe = Probe { tol, notes: &mut notes };
    let r = restriction.r_mat();
    let p_in = contains(model, &ep, "e+ in span(X)", &mut probe);
    let m_in = contains(model, &em, "e- in span(X)", &mut probe);
    let p_zero = p_in && restricted_coef_zero(model, r, &ep, "R beta(e+) = 0", &mut probe);
    let m_zero = m_in && restricted_coef_zero(model, r, &em, "R beta(e-) = 0", &mut probe);

    let with = |cols: &[AddedColumn]| -> DMatrix<f64> {
        let mut all: Vec<DVector<f64>> = (0..k).map(|j| model.x().column(j).into_owned()).collect();
        for c in cols {
            all.push(if *c == AddedColumn::EPlus { ep.clone() } else { em.clone() });
        }
        DMatrix::from_columns(&all)
    };

    let (scenario, added, side): (u8, Vec<AddedColumn>, Option<DVector<f64>>) = match (p_in, m_in) {
        (true, true) if p_zero && m_zero => return Err(Error::NoAdjustmentNeeded),
        (true, false) if p_zero => (1, vec![AddedColumn::EMinus], None),
        (false, true) if m_zero => (2, vec![AddedColumn::EPlus], None),
        (false, false) => {
            let full = with(&[AddedColumn::EPlus, AddedColumn::EMinus]);
            let rank = linalg::numerical_rank(&full, model.tolerances().rank_factor);
            if rank == k + 2 {
                (3, vec![AddedColumn::EPlus, AddedColumn::EMinus], None)
            } else {
                (4, vec![AddedColumn::EPlus], Some(em.clone()))
            }
        }
        _ => {
            return Err(Error::NoScenario(
                "a harmonic direction lies in span(X) with a nonzero restricted coefficient".into(),
            ))
        }
    };

    let build = |cols: &[AddedColumn]| -> Result<(LinearModelSpec, DMatrix<f64>)> {
        let xbar = with(cols);
        if xbar.ncols() >= n {
            return Err(Error::AdjustmentImpossible(format!("enlarged design has {} columns for n = {n}", xbar.ncols())));
        }
        let m = LinearModelSpec::with_tolerances(xbar, model.tolerances())?;
        let rbar = restriction.padded(cols.len());
        if !check_rand_x(&m, &rbar, tol).holds {
            return Err(Error::AdjustmentImpossible("the enlarged design violates the rank condition on R and X".into()));
        }
        Ok((m, rbar.r_mat().clone()))
    };

    let (scenario, added, m, rbar) = match side {
        None => {
            let (m, rbar) = build(&added)?;
            (scenario, added, m, rbar)
        }
        Some(_) => {
            // rank(X, e+, e-) = k + 1: try (X, e+) then (X, e-)
            let first = build(&[AddedColumn::EPlus]);
            let mut chosen = None;
            if let Ok((m, rbar)) = &first {
                if restricted_coef_zero(m, rbar, &em, "Rbar theta(e-) = 0", &mut probe) {
                    chosen = Some((4, vec![AddedColumn::EPlus], m.clone(), rbar.clone()));
                }
            }
            if chosen.is_none() {
                let second = build(&[AddedColumn::EMinus]);
                if let Ok((m, rbar)) = &second {
                    if restricted_coef_zero(m, rbar, &ep, "Rbar theta(e+) = 0", &mut probe) {
                        chosen = Some((5, vec![AddedColumn::EMinus], m.clone(), rbar.clone()));
                    }
                }
                if chosen.is_none() {
                    if let (Err(e), Err(_)) = (&first, &second) {
                        return Err(Error::AdjustmentImpossible(e.to_string()));
                    }
                    return Err(Error::AdjustedSizeOne(
                        "neither (X, e+) nor (X, e-) leaves the restricted coefficients of the other direction at zero".into(),
                    ));
                }
            }
            chosen.expect("set above")
        }
    };
    Ok(AdjustedDesign { model: m, rbar, scenario, added, notes })
}

/// The adjusted statistic: the base family recomputed on `(X̄, R̄)`.
pub fn evaluate_adjusted(adj: &AdjustedDesign, base: &TestKind, restriction: &RestrictionSpec, y: &DVector<f64>) -> Result<TestOutcome> {
    let restr = adj.restriction_for(restriction);
    Ok(Evaluator::new(base, &adj.model, &restr)?.evaluate(y))
}
