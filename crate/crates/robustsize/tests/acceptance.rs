//! Acceptance suite. Runs every criterion, prints one line each and exits
//! nonzero when any of them fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use robustsize::covariance::{ar1_inverse, ar1_limit_d, ar1_matrix, ar2_matrix, harmonic_basis, singular_approach_probe, Ar2Param, Endpoint};
use robustsize::diagnostics::{audit_gls, genericity_probe, Verdict};
use robustsize::estimators::{lag_window_weights, omega_weighted, psi_weighted, rho_hat, HetVariant, LagWindow, RhoEstimatorSpec};
use robustsize::io::write_matrix;
use robustsize::linalg::{e_minus, e_plus, max_abs, unit};
use robustsize::model::{LinearModelSpec, RestrictionSpec};
use robustsize::montecarlo::{
    calibrate_critical, elliptical_null_check, pooled_se, rejection_probability, size_curve_ar1, CalibrationConfig, McConfig, RadialLaw,
};
use robustsize::statistics::{build_adjusted, Evaluator, TestDefinition, TestKind};

// One million draws per point from an independent numpy run.
const ORACLE_LOC_999: (f64, f64) = (0.974388, 1.579747620855938e-4);
const ORACLE_LOC_0: (f64, f64) = (0.317769, 4.656091307513202e-4);
const ORACLE_LOC_M999: (f64, f64) = (0.010274, 1.0083870746890799e-4);
const ORACLE_AR2_DIST_9999: f64 = 0.001873146360596212;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn normal(g: &mut ChaCha20Rng) -> f64 {
    g.sample(rand_distr::StandardNormal)
}

fn random_matrix(g: &mut ChaCha20Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(g))
}

fn random_vector(g: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(g))
}

fn location(n: usize) -> LinearModelSpec {
    LinearModelSpec::new(DMatrix::from_element(n, 1, 1.0)).unwrap()
}

fn change_in_mean(n: usize, t0: usize) -> LinearModelSpec {
    LinearModelSpec::new(DMatrix::from_fn(n, 2, |t, j| if j == 0 || t >= t0 { 1.0 } else { 0.0 })).unwrap()
}

fn random_window(g: &mut ChaCha20Rng, n: usize) -> LagWindow {
    let m = g.random_range(0.5..=n as f64);
    match g.random_range(0..3) {
        0 => LagWindow::bartlett(m),
        1 => LagWindow::parzen(m),
        _ => LagWindow::quadratic_spectral(m),
    }
}

fn c01_identity() -> Outcome {
    let mut g = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = g.random_range(3..=30);
        let k = g.random_range(1..n.min(6));
        let q = g.random_range(1..=k);
        let model = LinearModelSpec::new(random_matrix(&mut g, n, k)).unwrap();
        let restr = RestrictionSpec::new(random_matrix(&mut g, q, k), random_vector(&mut g, q)).unwrap();
        let y = random_vector(&mut g, n);
        let weights = lag_window_weights(&random_window(&mut g, n), n).unwrap();
        let omega = omega_weighted(&model, &restr, &y, &weights);
        let x = model.x();
        let xtx_inv = (x.transpose() * x).try_inverse().unwrap();
        let u = &y - x * (&xtx_inv * (x.transpose() * &y));
        let b = restr.r_mat() * &xtx_inv * x.transpose() * DMatrix::from_diagonal(&u);
        let w = DMatrix::from_fn(n, n, |i, j| weights.as_slice()[i.abs_diff(j)]);
        let direct = &b * w * b.transpose();
        worst = worst.max((&omega - &direct).norm() / direct.norm());
    }
    outcome(worst <= 1e-10, format!("max relative Frobenius error {worst:.3e}"))
}

fn c02_bartlett_constant() -> Outcome {
    let mut worst = (0.0, 0, 0);
    let mut failures = Vec::new();
    for n in (3..=199).step_by(2) {
        let model = location(n);
        for f in 1..=10 {
            let m = f as f64 * n as f64 / 10.0;
            let w = lag_window_weights(&LagWindow::bartlett(m), n).unwrap();
            let psi = psi_weighted(&model, &e_minus(n), &w)[(0, 0)];
            let v = 1.0 / (n as f64 * psi);
            if v > worst.0 {
                worst = (v, n, f);
            }
            if !(v < 1.563) {
                failures.push(format!("n={n} M/n={:.1}: {v:.6}", f as f64 / 10.0));
            }
        }
    }
    let detail = format!(
        "max {:.6} at n={} M/n={:.1}; {} violations{}",
        worst.0,
        worst.1,
        worst.2 as f64 / 10.0,
        failures.len(),
        if failures.is_empty() { String::new() } else { format!(" ({})", failures.join(", ")) }
    );
    outcome(failures.is_empty(), detail)
}

fn c03_exact_zeros() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in (2..=20).step_by(2) {
        for m in [1.0, n as f64 / 4.0 + 0.5, n as f64 / 2.0, n as f64] {
            for beta0 in [-1.5, 0.0, 0.7] {
                let r = RestrictionSpec::single(1, 0, beta0).unwrap();
                let ev = Evaluator::new(&TestKind::WeightedAutocov(LagWindow::bartlett(m)), &location(n), &r).unwrap();
                worst = worst.max(ev.evaluate(&(e_minus(n) + e_plus(n) * beta0)).value.abs());
            }
        }
    }
    let mut worst_cim: f64 = 0.0;
    for n in [6, 8, 12, 16, 20] {
        for t0 in (2..n - 1).step_by(2) {
            let r = RestrictionSpec::single(2, 1, 0.0).unwrap();
            for m in [2.0, 3.0, n as f64 / 2.0] {
                let ev = Evaluator::new(&TestKind::WeightedAutocov(LagWindow::bartlett(m)), &change_in_mean(n, t0), &r).unwrap();
                worst_cim = worst_cim.max(ev.evaluate(&e_minus(n)).value.abs());
            }
        }
    }
    outcome(
        worst <= 1e-12 && worst_cim <= 1e-12,
        format!("location max |T| {worst:.3e}, change-in-mean max |T| {worst_cim:.3e}"),
    )
}

fn c04_uncorrected_f() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 2..=20 {
        let r = RestrictionSpec::single(1, 0, 0.0).unwrap();
        let ev = Evaluator::new(&TestKind::UncorrectedF, &location(n), &r).unwrap();
        for i in 0..n {
            worst = worst.max((ev.evaluate(&unit(n, i)).value - 1.0).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |T - 1| {worst:.3e}"))
}

fn agrees(p: f64, se: f64, oracle: (f64, f64)) -> bool {
    (p - oracle.0).abs() <= 4.0 * (se * se + oracle.1 * oracle.1).sqrt()
}

fn c05_offending_sequence() -> Outcome {
    let def = TestDefinition::new(TestKind::WeightedAutocov(LagWindow::bartlett(4.0)), 2.0).unwrap();
    let r = RestrictionSpec::single(1, 0, 0.0).unwrap();
    let mc = McConfig::new(100_000, 20_240_501).unwrap();
    let curve = size_curve_ar1(&def, &location(10), &r, &[0.999, 0.0, -0.999], &mc).unwrap();
    let (hi, mid, lo) = (curve[0].estimate, curve[1].estimate, curve[2].estimate);
    let pass = hi.p >= 0.8 && hi.p - mid.p >= 0.5 && lo.p <= 0.05;
    let oracle = agrees(hi.p, hi.se, ORACLE_LOC_999) && agrees(mid.p, mid.se, ORACLE_LOC_0) && agrees(lo.p, lo.se, ORACLE_LOC_M999);
    outcome(
        pass && oracle,
        format!(
            "p(0.999)={:.4} p(0)={:.4} p(-0.999)={:.4}; oracle {:.4}/{:.4}/{:.4} {}",
            hi.p,
            mid.p,
            lo.p,
            ORACLE_LOC_999.0,
            ORACLE_LOC_0.0,
            ORACLE_LOC_M999.0,
            if oracle { "agree" } else { "DISAGREE" }
        ),
    )
}

fn c06_adjusted_calibration() -> Outcome {
    let model = change_in_mean(12, 6);
    let r = RestrictionSpec::single(2, 1, 0.0).unwrap();
    let adj = build_adjusted(&model, &r, model.tolerances().membership).unwrap();
    let scenario = adj.scenario;
    let kind = TestKind::Adjusted(Box::new(TestKind::WeightedAutocov(LagWindow::bartlett(3.0))), adj);
    let cfg = CalibrationConfig::new(0.05, McConfig::new(100_000, 6).unwrap());
    match calibrate_critical(&kind, &model, &r, &cfg) {
        Ok(cal) => {
            let cert = cal.certified;
            let pass = scenario == 1 && cert.p <= 0.05 + 3.0 * cert.se;
            outcome(
                pass,
                format!(
                    "scenario {scenario}, C={:.4}, search sup {:.4} at rho={}, certified {:.5} (se {:.1e}, reps {})",
                    cal.critical_value, cal.sup_size, cal.argsup_rho, cert.p, cert.se, cert.reps
                ),
            )
        }
        Err(e) => outcome(false, format!("calibration failed: {e}")),
    }
}

fn c07_fgls_size_one() -> Outcome {
    let model = location(10);
    let r = RestrictionSpec::single(1, 0, 0.0).unwrap();
    let spec = RhoEstimatorSpec::yule_walker();
    let verdict = audit_gls(&model, &r, &spec, 2.0).unwrap().verdict;
    let def = TestDefinition::new(TestKind::Fgls(spec), 2.0).unwrap();
    let mc = McConfig::new(100_000, 7).unwrap();
    let est = rejection_probability(&def, &model, &r, &DVector::zeros(10), 1.0, &ar1_matrix(10, 0.999), &mc).unwrap();
    outcome(verdict == Verdict::SizeOne && est.p > 0.8, format!("verdict {verdict:?}, p(0.999)={:.4} (oracle 0.9710)", est.p))
}

fn c08_ar1_inverse() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 2..=100 {
        for j in -99..=99 {
            let rho = j as f64 / 100.0;
            let prod = ar1_matrix(n, rho) * ar1_inverse(n, rho).unwrap();
            worst = worst.max(max_abs(&(prod - DMatrix::identity(n, n))));
        }
    }
    outcome(worst <= 1e-10, format!("max entry error {worst:.3e}"))
}

fn c09_limit_matrices() -> Outcome {
    let mut worst_d: f64 = 0.0;
    let mut worst_cross: f64 = 0.0;
    for n in [4, 8, 16] {
        for ep in [Endpoint::Plus, Endpoint::Minus] {
            let z = DMatrix::from_columns(&[ep.direction(n)]);
            let rho = ep.rho_sign() * (1.0 - 1e-4);
            let step = &singular_approach_probe(|r| ar1_matrix(n, r), &z, &[rho]).unwrap()[0];
            worst_d = worst_d.max(max_abs(&(&step.d_m - ar1_limit_d(n, ep).unwrap())));
            worst_cross = worst_cross.max(max_abs(&step.cross));
        }
    }
    outcome(worst_d <= 1e-2 && worst_cross <= 1e-2, format!("max |D_m - D| {worst_d:.3e}, max cross {worst_cross:.3e}"))
}

fn c10_ar2_concentration() -> Outcome {
    let (n, nu) = (8, PI / 3.0);
    let e = harmonic_basis(n, nu).unwrap().basis;
    let limit = &e * e.transpose();
    let dist: Vec<f64> = [0.9, 0.99, 0.999, 0.9999]
        .iter()
        .map(|&r| (ar2_matrix(n, Ar2Param::new(r, nu).unwrap()) - &limit).norm())
        .collect();
    let bound = ORACLE_AR2_DIST_9999 * 1.01;
    let pass = dist[0] > dist[1] && dist[1] > dist[2] && dist[3] <= bound;
    outcome(pass, format!("distances {:.4e} {:.4e} {:.4e} {:.4e}, bound {bound:.4e}", dist[0], dist[1], dist[2], dist[3]))
}

fn families(n: usize, g: &mut ChaCha20Rng) -> Vec<TestKind> {
    let a = random_matrix(g, n, n);
    vec![
        TestKind::WeightedAutocov(LagWindow::bartlett(3.0)),
        TestKind::WeightedAutocov(LagWindow::quadratic_spectral(2.5)),
        TestKind::GeneralQuadratic(&a * a.transpose()),
        TestKind::Eicker,
        TestKind::Het(HetVariant::HC0),
        TestKind::Het(HetVariant::HC3),
        TestKind::Fgls(RhoEstimatorSpec::yule_walker()),
        TestKind::OlsAr1(RhoEstimatorSpec::yule_walker()),
        TestKind::UncorrectedF,
    ]
}

/// A point `Xβ` with `Rβ = r`.
fn null_point(g: &mut ChaCha20Rng, model: &LinearModelSpec, restr: &RestrictionSpec) -> DVector<f64> {
    let rm = restr.r_mat();
    let rp = rm.transpose() * (rm * rm.transpose()).try_inverse().unwrap();
    let k = model.k();
    let free = DMatrix::identity(k, k) - &rp * rm;
    let beta = &rp * restr.r_vec() + free * random_vector(g, k);
    model.x() * beta
}

fn c11_invariance() -> Outcome {
    let mut g = rng(111);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = g.random_range(6..=20);
        let k = g.random_range(1..=3);
        let q = g.random_range(1..=k);
        let model = LinearModelSpec::new(random_matrix(&mut g, n, k)).unwrap();
        let restr = RestrictionSpec::new(random_matrix(&mut g, q, k), random_vector(&mut g, q)).unwrap();
        let y = random_vector(&mut g, n);
        let mu0 = null_point(&mut g, &model, &restr);
        let mu1 = null_point(&mut g, &model, &restr);
        let alpha = normal(&mut g) * 3.0;
        let moved = (&y - &mu0) * alpha + &mu1;
        for kind in families(n, &mut g) {
            let ev = Evaluator::new(&kind, &model, &restr).unwrap();
            let (t0, t1) = (ev.evaluate(&y).value, ev.evaluate(&moved).value);
            worst = worst.max((t1 - t0).abs() / (1.0 + t0.abs()));
        }
    }
    let model = change_in_mean(12, 6);
    let r = RestrictionSpec::single(2, 1, 0.0).unwrap();
    let adj = build_adjusted(&model, &r, 1e-8).unwrap();
    let kind = TestKind::Adjusted(Box::new(TestKind::WeightedAutocov(LagWindow::bartlett(3.0))), adj);
    let ev = Evaluator::new(&kind, &model, &r).unwrap();
    let mut worst_adj: f64 = 0.0;
    for _ in 0..200 {
        let y = random_vector(&mut g, 12);
        let shift = e_minus(12) * (5.0 * normal(&mut g));
        let (t0, t1) = (ev.evaluate(&y).value, ev.evaluate(&(&y + shift)).value);
        worst_adj = worst_adj.max((t1 - t0).abs() / (1.0 + t0.abs()));
    }
    let mut max_rho: f64 = 0.0;
    for _ in 0..10_000 {
        let n = g.random_range(3..=30);
        let k = g.random_range(1..=(n - 2).min(4));
        let model = LinearModelSpec::new(random_matrix(&mut g, n, k)).unwrap();
        let y = random_vector(&mut g, n);
        max_rho = max_rho.max(rho_hat(&model, &y, &RhoEstimatorSpec::yule_walker()).unwrap().abs());
    }
    outcome(
        worst <= 1e-9 && worst_adj <= 1e-9 && max_rho < 1.0,
        format!("G(M0) max rel diff {worst:.3e}, e- shift max rel diff {worst_adj:.3e}, max |rho_YW| {max_rho:.6}"),
    )
}

fn c12_null_invariance() -> Outcome {
    let model = change_in_mean(12, 6);
    let r = RestrictionSpec::single(2, 1, 0.0).unwrap();
    let def = TestDefinition::new(TestKind::WeightedAutocov(LagWindow::bartlett(3.0)), 2.0).unwrap();
    let sigma = ar1_matrix(12, 0.5);
    let points = [(vec![0.0, 0.0], 1.0), (vec![3.0, 0.0], 4.0), (vec![-1.0, 0.0], 0.25)];
    let ests: Vec<_> = points
        .iter()
        .enumerate()
        .map(|(i, (beta, s2))| {
            let mu = model.x() * DVector::from_vec(beta.clone());
            rejection_probability(&def, &model, &r, &mu, *s2, &sigma, &McConfig::new(100_000, 1200 + i as u64).unwrap()).unwrap()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in i + 1..3 {
            worst = worst.max((ests[i].p - ests[j].p).abs() / pooled_se(&ests[i], &ests[j]));
        }
    }
    outcome(
        worst <= 3.0,
        format!("p = {:.4} {:.4} {:.4}, max |diff|/pooled-se {worst:.2}", ests[0].p, ests[1].p, ests[2].p),
    )
}

fn c13_elliptical() -> Outcome {
    let model = change_in_mean(12, 6);
    let r = RestrictionSpec::single(2, 1, 0.0).unwrap();
    let sigma = ar1_matrix(12, 0.5);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, kind) in [
        ("weighted", TestKind::WeightedAutocov(LagWindow::bartlett(3.0))),
        ("fgls", TestKind::Fgls(RhoEstimatorSpec::yule_walker())),
    ] {
        let def = TestDefinition::new(kind, 2.0).unwrap();
        for radial in [RadialLaw::UniformSphereScale, RadialLaw::ChiMixture] {
            let chk = elliptical_null_check(&def, &model, &r, &sigma, radial, &McConfig::new(100_000, 13).unwrap()).unwrap();
            let ratio = (chk.gaussian.p - chk.elliptical.p).abs() / pooled_se(&chk.gaussian, &chk.elliptical);
            worst = worst.max(ratio);
            parts.push(format!("{name}/{radial:?} {ratio:.2}"));
        }
    }
    outcome(worst <= 4.0, format!("|diff|/pooled-se: {}", parts.join(", ")))
}

fn c14_genericity() -> Outcome {
    let r = RestrictionSpec::new(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), DVector::zeros(1)).unwrap();
    let kind = TestKind::WeightedAutocov(LagWindow::bartlett(3.0));
    let res = genericity_probe(8, 2, &r, &kind, 2.0, 1000, 14, false).unwrap();
    outcome(res.fraction == 1.0, format!("fraction {} over {} designs, verdicts {:?}", res.fraction, res.samples, res.verdicts))
}

fn run_bin(dir: &Path, threads: &str, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_robustsize"))
        .args(args)
        .current_dir(dir)
        .env("ROBUSTSIZE_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn c15_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_matrix(&d.join("x.csv"), change_in_mean(12, 6).x()).unwrap();
    write_matrix(&d.join("r.csv"), &DMatrix::from_row_slice(1, 2, &[0.0, 1.0])).unwrap();
    let design = ["--x", "x.csv", "--r", "r.csv", "--bandwidth", "3"];
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("size-curve", vec!["--critical", "2", "--reps", "20000", "--seed", "5", "--out", "OUT.csv", "--summary", "OUT.json"]),
        ("power-curve", vec!["--critical", "2", "--reps", "20000", "--seed", "5", "--rho", "0.5", "--out", "OUT.csv", "--summary", "OUT.json"]),
        ("elliptical-check", vec!["--critical", "2", "--reps", "20000", "--seed", "5", "--rho", "0.5", "--radial", "chi-mixture", "--out", "OUT.json"]),
        ("calibrate", vec!["--adjust", "--reps", "5000", "--cert-reps", "20000", "--seed", "5", "--out", "OUT.json"]),
    ];
    let mut mismatched = Vec::new();
    for (cmd, extra) in &commands {
        let mut files = Vec::new();
        for threads in ["1", "4"] {
            let tag = format!("{cmd}-{threads}");
            let extra: Vec<String> = extra.iter().map(|a| a.replace("OUT", &tag)).collect();
            let mut args = vec![*cmd];
            args.extend(design);
            args.extend(extra.iter().map(String::as_str));
            if let Err(e) = run_bin(d, threads, &args) {
                return outcome(false, format!("{cmd} failed: {e}"));
            }
            let mut bytes = Vec::new();
            for ext in ["csv", "json"] {
                if let Ok(b) = std::fs::read(d.join(format!("{tag}.{ext}"))) {
                    bytes.extend(b);
                }
            }
            files.push(bytes);
        }
        if files[0].is_empty() || files[0] != files[1] {
            mismatched.push(*cmd);
        }
    }
    outcome(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{} commands bit-identical with 1 and 4 threads", commands.len())
        } else {
            format!("reports differ for {mismatched:?}")
        },
    )
}

fn main() {
    let criteria: [Criterion; 15] = [
        ("weighted variance equals B W B'", c01_identity),
        ("Bartlett location constant below 1.563", c02_bartlett_constant),
        ("exact zeros at e-", c03_exact_zeros),
        ("uncorrected F equals one at unit vectors", c04_uncorrected_f),
        ("offending sequence collapse", c05_offending_sequence),
        ("adjusted test size control", c06_adjusted_calibration),
        ("FGLS Yule-Walker size one", c07_fgls_size_one),
        ("closed-form AR(1) inverse", c08_ar1_inverse),
        ("AR(1) limit matrices", c09_limit_matrices),
        ("AR(2) concentration", c10_ar2_concentration),
        ("invariance suites", c11_invariance),
        ("null rejection invariance", c12_null_invariance),
        ("elliptical null equivalence", c13_elliptical),
        ("genericity of the conditions", c14_genericity),
        ("determinism across thread counts", c15_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("{:02}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|s| s == &id || name.contains(s.as_str())) {
            continue;
        }
        let start = Instant::now();
        let res = f();
        let status = if res.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} {status} [{:.1}s] {name}: {}", start.elapsed().as_secs_f64(), res.detail);
        if !res.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
