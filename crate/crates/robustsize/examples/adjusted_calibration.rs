//! A change-in-mean test that cannot control size as it stands, repaired by
//! adding e- to the working design and calibrating the critical value.

use nalgebra::DMatrix;
use robustsize::diagnostics::audit_for_kind;
use robustsize::estimators::LagWindow;
use robustsize::model::{LinearModelSpec, RestrictionSpec};
use robustsize::montecarlo::{calibrate_critical, CalibrationConfig, McConfig};
use robustsize::statistics::{build_adjusted, TestKind};

fn main() -> robustsize::Result<()> {
    let x = DMatrix::from_fn(12, 2, |t, j| if j == 0 || t >= 6 { 1.0 } else { 0.0 });
    let model = LinearModelSpec::new(x)?;
    let r = RestrictionSpec::single(2, 1, 0.0)?;
    let base = TestKind::WeightedAutocov(LagWindow::bartlett(3.0));

    let plain = audit_for_kind(&base, &model, &r, 2.0)?;
    println!("unadjusted: {:?}", plain.verdict);
    match calibrate_critical(&base, &model, &r, &CalibrationConfig::new(0.05, McConfig::new(1000, 1)?)) {
        Err(e) => println!("{e}"),
        Ok(c) => println!("unexpected: C = {}", c.critical_value),
    }

    let adj = build_adjusted(&model, &r, 1e-8)?;
    println!("scenario {} adds {:?}", adj.scenario, adj.added);
    let kind = TestKind::Adjusted(Box::new(base), adj);
    let mut cfg = CalibrationConfig::new(0.05, McConfig::new(20_000, 1)?);
    cfg.certify_reps = 200_000;
    let cal = calibrate_critical(&kind, &model, &r, &cfg)?;
    println!(
        "C = {:.3}, sup size {:.4} at rho = {}, certified {:.4} +- {:.4}",
        cal.critical_value, cal.sup_size, cal.argsup_rho, cal.certified.p, cal.certified.se
    );
    Ok(())
}
