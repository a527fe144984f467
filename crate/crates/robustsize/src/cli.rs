//! Batch front-end behind the `robustsize` binary.
//!
//! Matrices are read from headerless CSV files. Any flag may also be given in
//! a TOML file passed with `--config`, using the flag name as key; a flag on
//! the command line wins over the file, which wins over the built-in default.
//! Exit codes: 0 on success, 2 when calibration is refused by the audit, 1
//! for every other failure including usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::covariance::{ar1_matrix, ar2_matrix, harmonic_basis, Ar2Param};
use crate::diagnostics::{self, default_nu_grid};
use crate::error::{Error, Result};
use crate::estimators::{HetVariant, LagWindow, RhoEstimatorSpec, UpperLimit};
use crate::io;
use crate::model::{LinearModelSpec, RestrictionSpec, Tolerances};
use crate::montecarlo::{self, CalibrationConfig, McConfig, RadialLaw, DEFAULT_RHO_GRID};
use crate::statistics::{build_adjusted, TestDefinition, TestKind};

#[derive(Debug, Parser)]
#[command(name = "robustsize", version, about = "Size and power audits for robust tests in regression")]
pub struct Cli {
    /// TOML file supplying defaults for any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Conditions under the AR(1) covariance model at e+ and e-
    Audit(AuditArgs),
    /// Conditions under the AR(2) covariance model over a frequency grid
    AuditAr2(Ar2Args),
    /// Conditions for the FGLS and OLS-AR(1) tests
    AuditGls(GlsArgs),
    /// Conditions under heteroskedasticity at the unit vectors
    AuditHet(AuditArgs),
    /// Fraction of random designs for which the conditions decide
    Genericity(GenericityArgs),
    /// Critical value controlling the size over an AR(1) grid
    Calibrate(CalibrateArgs),
    /// Null rejection probabilities over an AR(1) grid (CSV: rho,p,se)
    SizeCurve(SizeCurveArgs),
    /// Rejection probabilities along alternatives (CSV: distance,p,se)
    PowerCurve(PowerCurveArgs),
    /// Gaussian against elliptical null rejection probabilities
    EllipticalCheck(EllipticalArgs),
    /// AR(2) correlation matrix near its harmonic limit (CSV matrix)
    Concentration(ConcentrationArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct DesignArgs {
    /// Design matrix X (n x k)
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Restriction matrix R (q x k)
    #[arg(long = "r")]
    pub r: Option<PathBuf>,
    /// Restriction vector r (length q, default zero)
    #[arg(long)]
    pub rvec: Option<PathBuf>,
    #[arg(long)]
    pub rank_factor: Option<f64>,
    #[arg(long)]
    pub membership_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestFlag {
    Weighted,
    Gq,
    Eicker,
    Het,
    Fgls,
    OlsAr1,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelFlag {
    Bartlett,
    Parzen,
    Qs,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantFlag {
    Hc0,
    Hc1,
    Hc2,
    Hc3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RadialFlag {
    Gaussian,
    ChiMixture,
    UniformSphere,
}

#[derive(Debug, Args, Default, Clone)]
pub struct TestArgs {
    #[arg(long, value_enum)]
    pub test: Option<TestFlag>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelFlag>,
    /// Lag-window bandwidth M (default n/4)
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Lag weights (custom kernel) or the n x n weighting matrix (gq)
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantFlag>,
    /// First index of the denominator of rho-hat (1 or 2)
    #[arg(long)]
    pub a1: Option<usize>,
    /// Last index of the denominator of rho-hat (n-1 or n)
    #[arg(long)]
    pub a2: Option<String>,
    /// Route the test through the enlarged design that purges e+ and e-
    #[arg(long)]
    pub adjust: bool,
    /// Also report statistics divided by q
    #[arg(long)]
    pub normalize_q: bool,
}

#[derive(Debug, Args, Default, Clone)]
pub struct McArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub chunk: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct AuditArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub test: TestArgs,
    #[arg(long)]
    pub critical: Option<f64>,
    /// Output file (default stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct Ar2Args {
    #[command(flatten)]
    pub audit: AuditArgs,
    #[arg(long, value_delimiter = ',')]
    pub nu_grid: Option<Vec<f64>>,
    /// Random directions per frequency
    #[arg(long)]
    pub directions: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Clone)]
pub struct GlsArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub a1: Option<usize>,
    #[arg(long)]
    pub a2: Option<String>,
    #[arg(long)]
    pub critical: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct GenericityArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Restriction matrix R (default: the last coefficient)
    #[arg(long = "r")]
    pub r: Option<PathBuf>,
    #[arg(long)]
    pub rvec: Option<PathBuf>,
    #[command(flatten)]
    pub test: TestArgs,
    #[arg(long)]
    pub critical: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace the first column by e+
    #[arg(long)]
    pub intercept: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub rho_grid: Option<Vec<f64>>,
    /// Replications of the certification run
    #[arg(long)]
    pub cert_reps: Option<usize>,
    #[arg(long)]
    pub tol_c: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct SizeCurveArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long)]
    pub critical: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub rho_grid: Option<Vec<f64>>,
    /// CSV output (default stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON summary file
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct PowerCurveArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long)]
    pub critical: Option<f64>,
    /// AR(1) coefficient of the error correlation
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Distances d(mu1, null space)/sigma
    #[arg(long, value_delimiter = ',')]
    pub distances: Option<Vec<f64>>,
    /// Direction a in R^q of the alternatives (default all ones)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub direction: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct EllipticalArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long)]
    pub critical: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub radial: Option<RadialFlag>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct ConcentrationArgs {
    #[arg(long)]
    pub nu: Option<f64>,
    /// Root modulus of the AR(2) process
    #[arg(long = "r")]
    pub r: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

/// Integer settings in the config file may be written as `1e5`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum Count {
    Int(i64),
    Float(f64),
}

impl Count {
    fn get(self, key: &str) -> Result<usize> {
        let v = match self {
            Count::Int(i) => i as f64,
            Count::Float(f) => f,
        };
        if v < 0.0 || v.fract() != 0.0 || v > 1e15 {
            return Err(Error::Usage(format!("config key {key} must be a nonnegative integer, got {v}")));
        }
        Ok(v as usize)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ConfigFile {
    x: Option<PathBuf>,
    r: Option<PathBuf>,
    rvec: Option<PathBuf>,
    rank_factor: Option<f64>,
    membership_tol: Option<f64>,
    test: Option<String>,
    kernel: Option<String>,
    bandwidth: Option<f64>,
    weights: Option<PathBuf>,
    variant: Option<String>,
    a1: Option<Count>,
    a2: Option<String>,
    adjust: Option<bool>,
    normalize_q: Option<bool>,
    critical: Option<f64>,
    seed: Option<u64>,
    reps: Option<Count>,
    chunk: Option<Count>,
    cert_reps: Option<Count>,
    delta: Option<f64>,
    rho_grid: Option<Vec<f64>>,
    tol_c: Option<f64>,
    nu_grid: Option<Vec<f64>>,
    directions: Option<Count>,
    samples: Option<Count>,
    n: Option<Count>,
    k: Option<Count>,
    intercept: Option<bool>,
    rho: Option<f64>,
    sigma2: Option<f64>,
    distances: Option<Vec<f64>>,
    direction: Option<Vec<f64>>,
    radial: Option<String>,
    nu: Option<f64>,
    /// AR(2) root modulus of `concentration`; `r` names the restriction file
    modulus: Option<f64>,
}

impl ConfigFile {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg: ConfigFile = toml::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        for p in [&mut cfg.x, &mut cfg.r, &mut cfg.rvec, &mut cfg.weights].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

fn count(flag: Option<usize>, cfg: Option<Count>, key: &str) -> Result<Option<usize>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.map(|c| c.get(key)).transpose(),
    }
}

fn parse_enum<T: ValueEnum>(flag: Option<T>, cfg: &Option<String>, key: &str) -> Result<Option<T>> {
    if flag.is_some() {
        return Ok(flag);
    }
    cfg.as_deref()
        .map(|s| T::from_str(s, true).map_err(|_| Error::Usage(format!("config key {key}: unknown value {s:?}"))))
        .transpose()
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Usage(format!("missing --{flag}")))
}

fn tolerances(d: &DesignArgs, cfg: &ConfigFile) -> Tolerances {
    let def = Tolerances::default();
    Tolerances {
        rank_factor: d.rank_factor.or(cfg.rank_factor).unwrap_or(def.rank_factor),
        membership: d.membership_tol.or(cfg.membership_tol).unwrap_or(def.membership),
    }
}

fn load_restriction(r: Option<&PathBuf>, rvec: Option<&PathBuf>, k: usize) -> Result<RestrictionSpec> {
    let rmat = io::read_matrix(require(r, "r")?)?;
    if rmat.ncols() != k {
        return Err(Error::Dimension(format!("R has {} columns but X has {k}", rmat.ncols())));
    }
    let rv = match rvec {
        Some(p) => io::read_vector(p)?,
        None => DVector::zeros(rmat.nrows()),
    };
    RestrictionSpec::new(rmat, rv)
}

fn load_design(d: &DesignArgs, cfg: &ConfigFile) -> Result<(LinearModelSpec, RestrictionSpec)> {
    let x = io::read_matrix(require(d.x.as_ref().or(cfg.x.as_ref()), "x")?)?;
    let model = LinearModelSpec::with_tolerances(x, tolerances(d, cfg))?;
    let restr = load_restriction(d.r.as_ref().or(cfg.r.as_ref()), d.rvec.as_ref().or(cfg.rvec.as_ref()), model.k())?;
    Ok((model, restr))
}

fn parse_upper(s: &str) -> Result<UpperLimit> {
    match s.trim() {
        "n-1" => Ok(UpperLimit::NMinusOne),
        "n" => Ok(UpperLimit::N),
        other => Err(Error::Usage(format!("--a2 must be n-1 or n, got {other:?}"))),
    }
}

fn rho_spec(a1: Option<usize>, a2: Option<&str>) -> Result<RhoEstimatorSpec> {
    RhoEstimatorSpec::new(a1.unwrap_or(1), parse_upper(a2.unwrap_or("n"))?)
}

struct Family {
    kind: TestKind,
    normalize_q: bool,
}

fn build_kind(t: &TestArgs, cfg: &ConfigFile, model: &LinearModelSpec, restr: &RestrictionSpec, default: TestFlag) -> Result<Family> {
    let n = model.n();
    let test = parse_enum(t.test, &cfg.test, "test")?.unwrap_or(default);
    let weights = t.weights.as_ref().or(cfg.weights.as_ref());
    let base = match test {
        TestFlag::Weighted => {
            let kernel = parse_enum(t.kernel, &cfg.kernel, "kernel")?.unwrap_or(KernelFlag::Bartlett);
            let m = t.bandwidth.or(cfg.bandwidth).unwrap_or(n as f64 / 4.0);
            TestKind::WeightedAutocov(match kernel {
                KernelFlag::Bartlett => LagWindow::bartlett(m),
                KernelFlag::Parzen => LagWindow::parzen(m),
                KernelFlag::Qs => LagWindow::quadratic_spectral(m),
                KernelFlag::Custom => {
                    let w = io::read_vector(require(weights, "weights")?)?;
                    LagWindow::custom(w.iter().copied().collect())
                }
            })
        }
        TestFlag::Gq => TestKind::GeneralQuadratic(io::read_matrix(require(weights, "weights")?)?),
        TestFlag::Eicker => TestKind::Eicker,
        TestFlag::Het => TestKind::Het(match parse_enum(t.variant, &cfg.variant, "variant")?.unwrap_or(VariantFlag::Hc0) {
            VariantFlag::Hc0 => HetVariant::HC0,
            VariantFlag::Hc1 => HetVariant::HC1,
            VariantFlag::Hc2 => HetVariant::HC2,
            VariantFlag::Hc3 => HetVariant::HC3,
        }),
        TestFlag::Fgls | TestFlag::OlsAr1 => {
            let a1 = count(t.a1, cfg.a1, "a1")?;
            let spec = rho_spec(a1, t.a2.as_deref().or(cfg.a2.as_deref()))?;
            spec.check(n, model.k())?;
            if test == TestFlag::Fgls {
                TestKind::Fgls(spec)
            } else {
                TestKind::OlsAr1(spec)
            }
        }
        TestFlag::F => TestKind::UncorrectedF,
    };
    let kind = if t.adjust || cfg.adjust.unwrap_or(false) {
        let adj = build_adjusted(model, restr, model.tolerances().membership)?;
        TestKind::Adjusted(Box::new(base), adj)
    } else {
        base
    };
    Ok(Family { kind, normalize_q: t.normalize_q || cfg.normalize_q.unwrap_or(false) })
}

fn mc_config(m: &McArgs, cfg: &ConfigFile, default_reps: usize) -> Result<McConfig> {
    let reps = count(m.reps, cfg.reps, "reps")?.unwrap_or(default_reps);
    let seed = m.seed.or(cfg.seed).unwrap_or(1);
    let mut mc = McConfig::new(reps, seed)?;
    if let Some(c) = count(m.chunk, cfg.chunk, "chunk")? {
        mc = mc.with_chunk(c);
    }
    Ok(mc)
}

fn critical(flag: Option<f64>, cfg: &ConfigFile) -> Result<f64> {
    require(flag.or(cfg.critical), "critical")
}

fn rho_grid(flag: &Option<Vec<f64>>, cfg: &ConfigFile) -> Vec<f64> {
    flag.clone().or_else(|| cfg.rho_grid.clone()).unwrap_or_else(|| DEFAULT_RHO_GRID.to_vec())
}

/// What a command produced: a JSON document and optionally CSV data.
#[derive(Debug, Default)]
struct Output {
    json: Option<(Value, Option<PathBuf>)>,
    csv: Option<(String, Option<PathBuf>)>,
}

fn add_normalized(report: &mut Value, q: usize) {
    if let Some(rows) = report.get_mut("evidence").and_then(Value::as_array_mut) {
        for row in rows {
            if let Some(t) = row.get("T").and_then(Value::as_f64) {
                row["T_over_q"] = json!(t / q as f64);
            }
        }
    }
}

fn with_header(mut v: Value, command: &str) -> Value {
    if let Value::Object(map) = &mut v {
        map.insert("schema".into(), json!(1));
        map.insert("command".into(), json!(command));
    }
    v
}

fn mc_fields(mc: &McConfig) -> Value {
    json!({"seed": mc.seed, "reps": mc.reps})
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Value::Object(m), Value::Object(n)) = (&mut a, b) {
        m.extend(n);
    }
    a
}

fn run_audit(args: &AuditArgs, cfg: &ConfigFile, het: bool) -> Result<Output> {
    let (model, restr) = load_design(&args.design, cfg)?;
    let default = if het { TestFlag::Het } else { TestFlag::Weighted };
    let fam = build_kind(&args.test, cfg, &model, &restr, default)?;
    let c = critical(args.critical, cfg)?;
    let report = if het {
        diagnostics::audit_het(&fam.kind, &model, &restr, c)?
    } else {
        diagnostics::audit_for_kind(&fam.kind, &model, &restr, c)?
    };
    let mut v = serde_json::to_value(&report).expect("serializable report");
    if fam.normalize_q {
        add_normalized(&mut v, restr.q());
    }
    let name = if het { "audit-het" } else { "audit" };
    Ok(Output { json: Some((with_header(v, name), args.out.clone())), csv: None })
}

fn run_ar2(args: &Ar2Args, cfg: &ConfigFile) -> Result<Output> {
    let a = &args.audit;
    let (model, restr) = load_design(&a.design, cfg)?;
    let fam = build_kind(&a.test, cfg, &model, &restr, TestFlag::Weighted)?;
    let c = critical(a.critical, cfg)?;
    let grid = args.nu_grid.clone().or_else(|| cfg.nu_grid.clone()).unwrap_or_else(default_nu_grid);
    let dirs = count(args.directions, cfg.directions, "directions")?.unwrap_or(32);
    let seed = args.seed.or(cfg.seed).unwrap_or(1);
    let report = diagnostics::audit_ar2(&fam.kind, &model, &restr, c, &grid, dirs, seed)?;
    let mut v = serde_json::to_value(&report).expect("serializable report");
    if fam.normalize_q {
        add_normalized(&mut v, restr.q());
    }
    Ok(Output { json: Some((with_header(v, "audit-ar2"), a.out.clone())), csv: None })
}

fn run_gls(args: &GlsArgs, cfg: &ConfigFile) -> Result<Output> {
    let (model, restr) = load_design(&args.design, cfg)?;
    let spec = rho_spec(count(args.a1, cfg.a1, "a1")?, args.a2.as_deref().or(cfg.a2.as_deref()))?;
    let report = diagnostics::audit_gls(&model, &restr, &spec, critical(args.critical, cfg)?)?;
    let v = serde_json::to_value(&report).expect("serializable report");
    Ok(Output { json: Some((with_header(v, "audit-gls"), args.out.clone())), csv: None })
}

fn run_genericity(args: &GenericityArgs, cfg: &ConfigFile) -> Result<Output> {
    let n = require(count(args.n, cfg.n, "n")?, "n")?;
    let k = require(count(args.k, cfg.k, "k")?, "k")?;
    if k == 0 || k >= n {
        return Err(Error::Dimension(format!("need 1 <= k < n, got n={n}, k={k}")));
    }
    let rpath = args.r.as_ref().or(cfg.r.as_ref());
    let restr = match rpath {
        Some(_) => load_restriction(rpath, args.rvec.as_ref().or(cfg.rvec.as_ref()), k)?,
        None => RestrictionSpec::single(k, k - 1, 0.0)?,
    };
    // placeholder design fixing n for family parameters that depend on it
    let probe = LinearModelSpec::new(DMatrix::from_fn(n, k, |i, j| if i == j { 1.0 } else { 0.0 }))?;
    let t = TestArgs { adjust: false, ..args.test.clone() };
    let fam = build_kind(&t, cfg, &probe, &restr, TestFlag::Weighted)?;
    let c = critical(args.critical, cfg)?;
    let samples = count(args.samples, cfg.samples, "samples")?.unwrap_or(1000);
    let seed = args.seed.or(cfg.seed).unwrap_or(1);
    let intercept = args.intercept || cfg.intercept.unwrap_or(false);
    let res = diagnostics::genericity_probe(n, k, &restr, &fam.kind, c, samples, seed, intercept)?;
    let v = merge(
        serde_json::to_value(&res).expect("serializable"),
        json!({
            "theorem": "genericity",
            "test": fam.kind.describe(),
            "critical_value": c,
            "n": n,
            "k": k,
            "reps": samples,
            "tolerances": Tolerances::default(),
        }),
    );
    Ok(Output { json: Some((with_header(v, "genericity"), args.out.clone())), csv: None })
}

fn run_calibrate(args: &CalibrateArgs, cfg: &ConfigFile) -> Result<Output> {
    let (model, restr) = load_design(&args.design, cfg)?;
    let fam = build_kind(&args.test, cfg, &model, &restr, TestFlag::Weighted)?;
    let search = mc_config(&args.mc, cfg, 100_000)?;
    let mut cc = CalibrationConfig::new(args.delta.or(cfg.delta).unwrap_or(0.05), search);
    cc.rho_grid = rho_grid(&args.rho_grid, cfg);
    if let Some(r) = count(args.cert_reps, cfg.cert_reps, "cert-reps")? {
        cc.certify_reps = r;
    }
    if let Some(t) = args.tol_c.or(cfg.tol_c) {
        cc.tol_c = t;
    }
    let cal = montecarlo::calibrate_critical(&fam.kind, &model, &restr, &cc)?;
    let v = merge(
        serde_json::to_value(&cal).expect("serializable"),
        json!({
            "theorem": "ar1-calibration",
            "test": fam.kind.describe(),
            "delta": cc.delta,
            "rho_grid": cc.rho_grid,
            "certify_reps": cc.certify_reps,
            "tol_c": cc.tol_c,
            "tolerances": model.tolerances(),
        }),
    );
    Ok(Output { json: Some((with_header(merge(v, mc_fields(&search)), "calibrate"), args.out.clone())), csv: None })
}

fn run_size_curve(args: &SizeCurveArgs, cfg: &ConfigFile) -> Result<Output> {
    let (model, restr) = load_design(&args.design, cfg)?;
    let fam = build_kind(&args.test, cfg, &model, &restr, TestFlag::Weighted)?;
    let def = TestDefinition::new(fam.kind, critical(args.critical, cfg)?)?;
    let mc = mc_config(&args.mc, cfg, 100_000)?;
    let grid = rho_grid(&args.rho_grid, cfg);
    let curve = montecarlo::size_curve_ar1(&def, &model, &restr, &grid, &mc)?;
    let csv = io::format_rows(curve.iter().map(|p| [p.rho, p.estimate.p, p.estimate.se]));
    let summary = json!({
        "theorem": "ar1-offending-sequence",
        "test": def.kind.describe(),
        "critical_value": def.critical_value,
        "curve": curve,
        "sup_size": curve.iter().map(|p| p.estimate.p).fold(0.0, f64::max),
        "tolerances": model.tolerances(),
    });
    Ok(Output {
        json: args.summary.clone().map(|p| (with_header(merge(summary, mc_fields(&mc)), "size-curve"), Some(p))),
        csv: Some((csv, args.out.clone())),
    })
}

fn run_power_curve(args: &PowerCurveArgs, cfg: &ConfigFile) -> Result<Output> {
    let (model, restr) = load_design(&args.design, cfg)?;
    let fam = build_kind(&args.test, cfg, &model, &restr, TestFlag::Weighted)?;
    let def = TestDefinition::new(fam.kind, critical(args.critical, cfg)?)?;
    let mc = mc_config(&args.mc, cfg, 100_000)?;
    let rho = args.rho.or(cfg.rho).unwrap_or(0.0);
    let sigma2 = args.sigma2.or(cfg.sigma2).unwrap_or(1.0);
    let distances = args.distances.clone().or_else(|| cfg.distances.clone()).unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0, 3.0, 5.0]);
    let a = match args.direction.clone().or_else(|| cfg.direction.clone()) {
        Some(v) => DVector::from_vec(v),
        None => DVector::from_element(restr.q(), 1.0),
    };
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("rho must lie in (-1, 1), got {rho}")));
    }
    let mus = montecarlo::alternatives_along(&model, &restr, &a, &distances, sigma2.sqrt())?;
    let curve = montecarlo::power_probe(&def, &model, &restr, &mus, sigma2, &ar1_matrix(model.n(), rho), &mc)?;
    let csv = io::format_rows(curve.iter().map(|p| [p.distance, p.estimate.p, p.estimate.se]));
    let summary = json!({
        "theorem": "ar1-power",
        "test": def.kind.describe(),
        "critical_value": def.critical_value,
        "rho": rho,
        "sigma2": sigma2,
        "direction": a.as_slice(),
        "curve": curve,
        "tolerances": model.tolerances(),
    });
    Ok(Output {
        json: args.summary.clone().map(|p| (with_header(merge(summary, mc_fields(&mc)), "power-curve"), Some(p))),
        csv: Some((csv, args.out.clone())),
    })
}

fn run_elliptical(args: &EllipticalArgs, cfg: &ConfigFile) -> Result<Output> {
    let (model, restr) = load_design(&args.design, cfg)?;
    let fam = build_kind(&args.test, cfg, &model, &restr, TestFlag::Weighted)?;
    let def = TestDefinition::new(fam.kind, critical(args.critical, cfg)?)?;
    let mc = mc_config(&args.mc, cfg, 100_000)?;
    let rho = args.rho.or(cfg.rho).unwrap_or(0.0);
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("rho must lie in (-1, 1), got {rho}")));
    }
    let radial = match parse_enum(args.radial, &cfg.radial, "radial")?.unwrap_or(RadialFlag::UniformSphere) {
        RadialFlag::Gaussian => RadialLaw::Gaussian,
        RadialFlag::ChiMixture => RadialLaw::ChiMixture,
        RadialFlag::UniformSphere => RadialLaw::UniformSphereScale,
    };
    let chk = montecarlo::elliptical_null_check(&def, &model, &restr, &ar1_matrix(model.n(), rho), radial, &mc)?;
    let pooled = montecarlo::pooled_se(&chk.gaussian, &chk.elliptical);
    let v = merge(
        serde_json::to_value(chk).expect("serializable"),
        json!({
            "theorem": "elliptical-null",
            "test": def.kind.describe(),
            "critical_value": def.critical_value,
            "rho": rho,
            "pooled_se": pooled,
            "tolerances": model.tolerances(),
        }),
    );
    Ok(Output { json: Some((with_header(merge(v, mc_fields(&mc)), "elliptical-check"), args.out.clone())), csv: None })
}

fn run_concentration(args: &ConcentrationArgs, cfg: &ConfigFile) -> Result<Output> {
    let nu = require(args.nu.or(cfg.nu), "nu")?;
    let r = require(args.r.or(cfg.modulus), "r")?;
    let n = require(count(args.n, cfg.n, "n")?, "n")?;
    let sigma = ar2_matrix(n, Ar2Param::new(r, nu)?);
    let e = harmonic_basis(n, nu)?.basis;
    let distance = (&sigma - &e * e.transpose()).norm();
    let summary = json!({
        "theorem": "ar2-concentration",
        "nu": nu,
        "r": r,
        "n": n,
        "frobenius_distance": distance,
        "tolerances": Tolerances::default(),
    });
    Ok(Output {
        json: args.summary.clone().map(|p| (with_header(summary, "concentration"), Some(p))),
        csv: Some((io::format_matrix(&sigma), args.out.clone())),
    })
}

fn dispatch(cli: &Cli) -> Result<Output> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match &cli.command {
        Command::Audit(a) => run_audit(a, &cfg, false),
        Command::AuditHet(a) => run_audit(a, &cfg, true),
        Command::AuditAr2(a) => run_ar2(a, &cfg),
        Command::AuditGls(a) => run_gls(a, &cfg),
        Command::Genericity(a) => run_genericity(a, &cfg),
        Command::Calibrate(a) => run_calibrate(a, &cfg),
        Command::SizeCurve(a) => run_size_curve(a, &cfg),
        Command::PowerCurve(a) => run_power_curve(a, &cfg),
        Command::EllipticalCheck(a) => run_elliptical(a, &cfg),
        Command::Concentration(a) => run_concentration(a, &cfg),
    }
}

fn emit(text: &str, path: Option<&PathBuf>, stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn write_output(out: Output, stdout: &mut dyn Write) -> Result<()> {
    if let Some((csv, path)) = &out.csv {
        emit(csv, path.as_ref(), stdout)?;
    }
    if let Some((json, path)) = &out.json {
        let text = serde_json::to_string_pretty(json).expect("serializable") + "\n";
        emit(&text, path.as_ref(), stdout)?;
    }
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::AuditRefusal(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are written to `stderr` as a JSON object.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 0 {
                let _ = write!(stdout, "{e}");
            } else {
                let err = json!({"schema": 1, "error": {"kind": "usage", "message": e.to_string().trim_end()}});
                let _ = writeln!(stderr, "{err}");
            }
            return code;
        }
    };
    match dispatch(&cli).and_then(|out| write_output(out, stdout)) {
        Ok(()) => 0,
        Err(e) => {
            let err = json!({"schema": 1, "error": {"kind": e.kind(), "message": e.to_string()}});
            let _ = writeln!(stderr, "{err}");
            exit_code(&e)
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
