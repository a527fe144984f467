//! How often do the audits reach a verdict on random designs?

use nalgebra::{DMatrix, DVector};
use robustsize::diagnostics::genericity_probe;
use robustsize::estimators::LagWindow;
use robustsize::model::RestrictionSpec;
use robustsize::statistics::TestKind;

fn main() -> robustsize::Result<()> {
    let kind = TestKind::WeightedAutocov(LagWindow::bartlett(3.0));
    let slope = RestrictionSpec::new(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), DVector::zeros(1))?;
    let intercept = RestrictionSpec::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DVector::zeros(1))?;
    for (label, r, with_intercept) in [("slope", &slope, false), ("slope, e+ column", &slope, true), ("intercept, e+ column", &intercept, true)] {
        let g = genericity_probe(8, 2, r, &kind, 2.0, 1000, 2, with_intercept)?;
        println!("{label:<22} fraction {:.3}  {:?}", g.fraction, g.verdicts);
    }
    Ok(())
}
