//! Audits the location model under AR(1) errors for several HAC tests.
//!
//! Run with `cargo run --example location_audit`.

use nalgebra::DMatrix;
use robustsize::diagnostics::audit_for_kind;
use robustsize::estimators::{LagWindow, RhoEstimatorSpec};
use robustsize::model::{LinearModelSpec, RestrictionSpec};
use robustsize::statistics::TestKind;

fn main() -> robustsize::Result<()> {
    let r = RestrictionSpec::single(1, 0, 0.0)?;
    for n in [9, 10] {
        let model = LinearModelSpec::new(DMatrix::from_element(n, 1, 1.0))?;
        println!("n = {n}");
        for kind in [
            TestKind::WeightedAutocov(LagWindow::bartlett(n as f64 / 4.0)),
            TestKind::WeightedAutocov(LagWindow::quadratic_spectral(2.0)),
            TestKind::Eicker,
            TestKind::Fgls(RhoEstimatorSpec::yule_walker()),
        ] {
            let report = audit_for_kind(&kind, &model, &r, 2.0)?;
            println!("  {:<8} {:?} ({})", kind.name(), report.verdict, report.theorem);
            for ev in &report.evidence {
                let test = ev.test.as_deref().unwrap_or("");
                println!("      {:<4} {:<7} T = {:>10.4e}  {:?}", ev.direction, test, ev.t, ev.pattern);
            }
        }
    }
    Ok(())
}
