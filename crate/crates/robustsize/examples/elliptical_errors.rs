//! Null rejection probabilities under Gaussian and elliptically symmetric
//! errors coincide for the invariant tests.

use nalgebra::DMatrix;
use robustsize::covariance::ar1_matrix;
use robustsize::estimators::{LagWindow, RhoEstimatorSpec};
use robustsize::model::{LinearModelSpec, RestrictionSpec};
use robustsize::montecarlo::{elliptical_null_check, McConfig, RadialLaw};
use robustsize::statistics::{TestDefinition, TestKind};

fn main() -> robustsize::Result<()> {
    let x = DMatrix::from_fn(15, 2, |t, j| if j == 0 { 1.0 } else { t as f64 });
    let model = LinearModelSpec::new(x)?;
    let r = RestrictionSpec::single(2, 1, 0.0)?;
    let sigma = ar1_matrix(15, 0.6);
    let mc = McConfig::new(40_000, 11)?;
    for kind in [TestKind::WeightedAutocov(LagWindow::parzen(5.0)), TestKind::Fgls(RhoEstimatorSpec::yule_walker())] {
        let def = TestDefinition::new(kind, 3.0)?;
        for law in [RadialLaw::Gaussian, RadialLaw::ChiMixture, RadialLaw::UniformSphereScale] {
            let c = elliptical_null_check(&def, &model, &r, &sigma, law, &mc)?;
            println!(
                "{:<8} {:<20} gaussian {:.4} elliptical {:.4} z = {:+.2}",
                def.kind.name(),
                format!("{law:?}"),
                c.gaussian.p,
                c.elliptical.p,
                c.z_score
            );
        }
    }
    Ok(())
}
