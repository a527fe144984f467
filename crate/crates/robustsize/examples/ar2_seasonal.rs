//! AR(2) errors concentrate on the harmonic space E(nu) as the root modulus
//! grows; a design containing one frequency but not another is audited over
//! a grid of frequencies.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use robustsize::covariance::{ar2_matrix, harmonic_basis, Ar2Param};
use robustsize::diagnostics::audit_ar2;
use robustsize::estimators::LagWindow;
use robustsize::model::{LinearModelSpec, RestrictionSpec};
use robustsize::statistics::TestKind;

fn main() -> robustsize::Result<()> {
    let (n, nu) = (8, PI / 3.0);
    let e = harmonic_basis(n, nu)?.basis;
    for r in [0.9, 0.99, 0.999, 0.9999] {
        let dist = (ar2_matrix(n, Ar2Param::new(r, nu)?) - &e * e.transpose()).norm();
        println!("r = {r:<7} |Sigma - EE'| = {dist:.3e}");
    }

    let x = DMatrix::from_fn(24, 3, |t, j| match j {
        0 => 1.0,
        1 => (PI * (t + 1) as f64 / 2.0).cos(),
        _ => (PI * (t + 1) as f64 / 2.0).sin(),
    });
    let model = LinearModelSpec::new(x)?;
    let r = RestrictionSpec::single(3, 1, 0.0)?;
    let grid: Vec<f64> = (0..=8).map(|j| j as f64 * PI / 8.0).collect();
    let report = audit_ar2(&TestKind::WeightedAutocov(LagWindow::bartlett(6.0)), &model, &r, 2.0, &grid, 16, 7)?;
    println!("verdict {:?}", report.verdict);
    for f in report.frequencies.unwrap_or_default() {
        println!("  nu = {:.4} unanimous = {:<5} {:?}", f.nu, f.unanimous, f.pattern);
    }
    Ok(())
}
