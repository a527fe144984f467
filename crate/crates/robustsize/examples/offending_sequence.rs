//! Null rejection probabilities of a Bartlett HAC test in the location model
//! as the AR(1) coefficient approaches one and minus one.

use nalgebra::DMatrix;
use robustsize::estimators::LagWindow;
use robustsize::model::{LinearModelSpec, RestrictionSpec};
use robustsize::montecarlo::{size_curve_ar1, McConfig, DEFAULT_RHO_GRID};
use robustsize::statistics::{TestDefinition, TestKind};

fn main() -> robustsize::Result<()> {
    let model = LinearModelSpec::new(DMatrix::from_element(10, 1, 1.0))?;
    let r = RestrictionSpec::single(1, 0, 0.0)?;
    let def = TestDefinition::new(TestKind::WeightedAutocov(LagWindow::bartlett(4.0)), 2.0)?;
    let curve = size_curve_ar1(&def, &model, &r, &DEFAULT_RHO_GRID, &McConfig::new(50_000, 1)?)?;
    println!("{:>8} {:>8} {:>8}", "rho", "p", "se");
    for pt in curve {
        println!("{:>8.3} {:>8.4} {:>8.4}", pt.rho, pt.estimate.p, pt.estimate.se);
    }
    Ok(())
}
