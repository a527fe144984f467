//! Power of a QS-kernel HAC test along alternatives for a trend slope, under
//! moderate and strong positive autocorrelation.

use nalgebra::{DMatrix, DVector};
use robustsize::covariance::ar1_matrix;
use robustsize::estimators::LagWindow;
use robustsize::model::{LinearModelSpec, RestrictionSpec};
use robustsize::montecarlo::{alternatives_along, power_probe, McConfig};
use robustsize::statistics::{TestDefinition, TestKind};

fn main() -> robustsize::Result<()> {
    let n = 20;
    let model = LinearModelSpec::new(DMatrix::from_fn(n, 2, |t, j| if j == 0 { 1.0 } else { t as f64 }))?;
    let r = RestrictionSpec::single(2, 1, 0.0)?;
    let def = TestDefinition::new(TestKind::WeightedAutocov(LagWindow::quadratic_spectral(4.0)), 4.0)?;
    let mus = alternatives_along(&model, &r, &DVector::from_element(1, 1.0), &[0.0, 1.0, 2.0, 4.0, 8.0, 16.0], 1.0)?;
    let mc = McConfig::new(20_000, 4)?;
    for rho in [0.5, 0.95] {
        let curve = power_probe(&def, &model, &r, &mus, 1.0, &ar1_matrix(n, rho), &mc)?;
        let ps: Vec<String> = curve.iter().map(|p| format!("{:.0}:{:.3}", p.distance, p.estimate.p)).collect();
        println!("rho = {rho}: {}", ps.join("  "));
    }
    Ok(())
}
