//! Heteroskedasticity-robust tests and the uncorrected F test, audited at the
//! unit vectors.

use nalgebra::DMatrix;
use robustsize::diagnostics::audit_het;
use robustsize::estimators::HetVariant;
use robustsize::model::{LinearModelSpec, RestrictionSpec};
use robustsize::statistics::TestKind;

fn main() -> robustsize::Result<()> {
    let designs = [
        ("location", DMatrix::from_element(8, 1, 1.0)),
        ("dummy", DMatrix::from_fn(8, 1, |t, _| if t == 3 { 1.0 } else { 0.0 })),
    ];
    for (name, x) in designs {
        let model = LinearModelSpec::new(x)?;
        let r = RestrictionSpec::single(1, 0, 0.0)?;
        for (label, kind) in [
            ("HC0", TestKind::Het(HetVariant::HC0)),
            ("HC3", TestKind::Het(HetVariant::HC3)),
            ("F", TestKind::UncorrectedF),
        ] {
            let rep = audit_het(&kind, &model, &r, 3.0)?;
            let ts: Vec<String> = rep.evidence.iter().map(|e| format!("{:.3}", e.t)).collect();
            println!("{name:<9} {label:<4} {:?}: T(e_i) = [{}]", rep.verdict, ts.join(", "));
        }
    }
    Ok(())
}
