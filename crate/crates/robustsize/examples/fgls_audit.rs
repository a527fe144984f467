//! FGLS and OLS-AR(1) tests: audit verdicts and Monte Carlo lower bounds on
//! the size along e+.

use nalgebra::DMatrix;
use robustsize::covariance::Endpoint;
use robustsize::diagnostics::{audit_gls, estimate_k_bounds};
use robustsize::estimators::{RhoEstimatorSpec, UpperLimit};
use robustsize::model::{LinearModelSpec, RestrictionSpec};
use robustsize::montecarlo::McConfig;
use robustsize::statistics::TestKind;

fn main() -> robustsize::Result<()> {
    let x = DMatrix::from_fn(12, 2, |t, j| if j == 0 { 1.0 } else { (t as f64).sqrt() });
    let model = LinearModelSpec::new(x)?;
    let r = RestrictionSpec::single(2, 0, 0.0)?;
    let mc = McConfig::new(20_000, 3)?;
    for spec in [RhoEstimatorSpec::yule_walker(), RhoEstimatorSpec::new(2, UpperLimit::NMinusOne)?] {
        let report = audit_gls(&model, &r, &spec, 2.0)?;
        println!("a1 = {}, a2 = {:?}: {:?}", spec.a1, spec.a2, report.verdict);
        for kind in [TestKind::Fgls(spec), TestKind::OlsAr1(spec)] {
            let kb = estimate_k_bounds(&model, &r, &kind, Endpoint::Plus, &mc)?;
            println!("  {:<8} K1 = {:.4} K2 = {:.4} (se {:.4})", kind.name(), kb.k1, kb.k2, kb.se_k2);
        }
    }
    Ok(())
}
