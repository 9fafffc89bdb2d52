//! `siegel`: command-line front end.
//!
//! Every command prints one report: a JSON envelope carrying the tool
//! version, the resolved configuration and the result, or CSV rows with the
//! same information in comment lines. Exit codes: 0 success, 1 input error,
//! 2 enumeration budget exhausted.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;
use serde_json::{json, Value};

use siegel::enumeration::{rep_matrices, vectors_of_norm_with, EnumOptions, BUDGET_ENV, DEFAULT_BUDGET};
use siegel::forms::{load_form_ref, load_forms, load_genus, GenusClass, GenusData};
use siegel::harmonics::{
    basis_sums, harmonic_basis, harmonic_theta, hecke_eigen_check, nonzero_plane_harmonic, Harmonic, Poly,
};
use siegel::isometry::{automorphism_group, orbit_decompose, orbit_mass};
use siegel::mass::{cutoff_thresholds, mass_probability, siegel_average, AverageMethod};
use siegel::report::{envelope, to_csv, to_json, to_map};
use siegel::roots::{root_vectors, verify_root_bounds};
use siegel::variance::{
    cap_miss_fraction, diophantine_stats, diophantine_witness, equidist_variance, variance_report, with_tasks,
    GeometricMode, KMax, Profile, VarianceConfig,
};
use siegel::{Error, Result};

#[derive(Parser, Serialize)]
#[command(name = "siegel", version, about = "Classical side of the Siegel variance formula")]
struct Cli {
    /// Seed for every Monte Carlo stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads. Reports do not depend on it, so it is left out of them.
    #[arg(long, global = true)]
    #[serde(skip)]
    tasks: Option<usize>,
    /// Cap on enumeration tree nodes.
    #[arg(long, global = true, env = BUDGET_ENV, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Cap on Monte Carlo samples per run.
    #[arg(long, global = true, default_value_t = 100_000_000)]
    max_samples: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Count (and optionally list) representations of N, or of a Gram matrix.
    Enumerate(EnumerateArgs),
    /// Automorphism group order of a form.
    Aut(AutArgs),
    /// Orbits of the automorphism group on the vectors of norm N.
    Orbits(OrbitsArgs),
    /// Norm-1 and norm-2 vectors, split index and root bounds.
    Roots(RootsArgs),
    /// Genus average of R(N): enumeration and local densities.
    Mass(MassArgs),
    /// Cutoff thresholds for unimodular forms of dimension m.
    Cutoff(CutoffArgs),
    /// Harmonic theta series and Hecke eigenform checks.
    Theta(ThetaArgs),
    /// Weyl sums of every basis harmonic of a degree.
    Weyl(WeylArgs),
    /// Smoothed counting variance: geometric and spectral sides.
    Variance(VarianceArgs),
    /// Equidistribution statistic of the points of norm N.
    Equidist(EquidistArgs),
    /// Fraction of the sphere missed by caps around the points of norm N.
    Caps(CapsArgs),
    /// Rational points on the unit sphere with denominators p^k.
    Diophantine(DiophantineArgs),
}

#[derive(Args, Serialize)]
struct EnumerateArgs {
    /// Lattice reference `file.json#name`.
    #[arg(long)]
    form: String,
    /// Norm to represent.
    #[arg(long, required_unless_present = "target")]
    norm: Option<i64>,
    /// Gram matrix to represent, as a form reference.
    #[arg(long, conflicts_with = "norm")]
    target: Option<String>,
    /// Include the solutions.
    #[arg(long)]
    list: bool,
    /// LLL-reduce before enumerating.
    #[arg(long)]
    lll: bool,
}

#[derive(Args, Serialize)]
struct AutArgs {
    #[arg(long)]
    form: String,
    /// Compare with the order stored in the database.
    #[arg(long)]
    verify: bool,
    /// Include generator matrices.
    #[arg(long)]
    generators: bool,
}

#[derive(Args, Serialize)]
struct OrbitsArgs {
    #[arg(long)]
    form: String,
    #[arg(long)]
    norm: i64,
}

#[derive(Args, Serialize)]
struct RootsArgs {
    /// A single form `file.json#name`, or every form of `file.json`.
    #[arg(long, required_unless_present = "corpus")]
    form: Option<String>,
    /// Directory whose `.json` files are all analysed.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Enumerate,
    Local,
    Both,
}

#[derive(Args, Serialize)]
struct MassArgs {
    /// Genus file, or `file.json#name` for a one-class genus.
    #[arg(long)]
    genus: String,
    #[arg(long)]
    norm: i64,
    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    method: MethodArg,
}

#[derive(Args, Serialize)]
struct CutoffArgs {
    #[arg(long)]
    dim: u64,
    /// Threshold parameter.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
}

#[derive(Args, Serialize)]
struct ThetaArgs {
    #[arg(long)]
    form: String,
    #[arg(long)]
    degree: u32,
    /// Coefficients up to q^P.
    #[arg(long)]
    prec: i64,
    /// `auto`, or a JSON file `{"terms": [[[exponents], "p/q"], ...]}` in lattice coordinates.
    #[arg(long, default_value = "auto")]
    harmonic: String,
}

#[derive(Args, Serialize)]
struct WeylArgs {
    #[arg(long)]
    genus: String,
    #[arg(long)]
    degree: u32,
    #[arg(long)]
    norm: i64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Quad,
    Mc,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ProfileArg {
    Bump,
    Constant,
}

#[derive(Args, Serialize)]
struct VarianceArgs {
    #[arg(long)]
    genus: String,
    #[arg(long)]
    norm: i64,
    /// Kernel scale r on the sphere of radius sqrt(N).
    #[arg(long)]
    scale: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Quad)]
    mode: ModeArg,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    /// Spectral truncation: a number or `auto`.
    #[arg(long, default_value = "auto")]
    kmax: String,
    #[arg(long, value_enum, default_value_t = ProfileArg::Bump)]
    profile: ProfileArg,
}

#[derive(Args, Serialize)]
struct EquidistArgs {
    #[arg(long)]
    form: String,
    #[arg(long)]
    norm: i64,
    /// One or more cap radii on the unit sphere.
    #[arg(long, value_delimiter = ',', required = true)]
    eta: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
}

#[derive(Args, Serialize)]
struct CapsArgs {
    #[arg(long)]
    form: String,
    #[arg(long)]
    norm: i64,
    #[arg(long, value_delimiter = ',', required = true)]
    eta: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    /// Covering-radius sample size as a multiple of `samples`.
    #[arg(long, default_value_t = 1)]
    covering_factor: u64,
}

#[derive(Args, Serialize)]
struct DiophantineArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    prime: u64,
    #[arg(long)]
    k: u32,
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    /// Single target point `x1,x2,...` on the unit sphere instead of sampling.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    point: Option<Vec<f64>>,
}

/// Result payload plus the rows written in CSV mode.
struct Output {
    result: Value,
    records: Vec<Value>,
}

impl Output {
    fn single(result: impl Serialize) -> Self {
        let result = to_value(&result);
        Self { records: vec![result.clone()], result }
    }

    fn rows(result: impl Serialize, records: Vec<Value>) -> Self {
        Self { result: to_value(&result), records }
    }
}

fn to_value(x: &impl Serialize) -> Value {
    // Round-trips through the report formatter so floats keep 17 digits.
    serde_json::from_str(&to_json(x).expect("serializable")).expect("valid JSON")
}

fn check_file(reference: &str) -> Result<()> {
    let path = reference.rsplit_once('#').map_or(reference, |(p, _)| p);
    if Path::new(path).is_file() {
        Ok(())
    } else {
        Err(Error::Parse(format!("no such file: {path}")))
    }
}

fn form(reference: &str) -> Result<GenusClass> {
    check_file(reference)?;
    load_form_ref(reference)
}

/// `file.json` is a genus; `file.json#name` is the one-class genus of that form.
fn genus(reference: &str, budget: u64) -> Result<GenusData> {
    check_file(reference)?;
    let mut g =
        if reference.contains('#') { GenusData::new(vec![load_form_ref(reference)?])? } else { load_genus(reference)? };
    g.resolve_aut_orders(budget)?;
    Ok(g)
}

fn samples(requested: u64, cap: u64) -> Result<u64> {
    if requested > cap {
        Err(Error::InvalidArgument(format!("{requested} samples exceed the cap of {cap}")))
    } else {
        Ok(requested)
    }
}

fn enumerate(a: &EnumerateArgs, cli: &Cli) -> Result<Output> {
    let class = form(&a.form)?;
    let opts = EnumOptions { lll: a.lll, budget: cli.budget, tasks: 1 };
    let solutions: Vec<Value> = match &a.target {
        Some(t) => {
            let target = form(t)?;
            rep_matrices(&class.form, &target.form.rows())?.into_iter().map(|x| json!(x)).collect()
        }
        None => vectors_of_norm_with(&class.form, a.norm.unwrap(), opts)?.into_iter().map(|x| json!(x)).collect(),
    };
    let count = solutions.len();
    if a.list {
        let records = solutions.iter().map(|s| json!({ "solution": s })).collect();
        Ok(Output::rows(json!({ "form": class.name, "count": count, "solutions": solutions }), records))
    } else {
        Ok(Output::single(json!({ "form": class.name, "count": count })))
    }
}

fn aut(a: &AutArgs, cli: &Cli) -> Result<Output> {
    let class = form(&a.form)?;
    let group = automorphism_group(&class.form, cli.budget)?;
    let stored = class.aut_order.as_ref().map(|o| o.to_string());
    let matches = a.verify.then(|| class.aut_order.as_ref().map(|o| *o == group.order));
    let mut result = json!({
        "form": class.name,
        "order": group.order.to_string(),
        "stored": stored,
        "matches": matches.flatten(),
        "orbit_lengths": group.orbit_lengths,
        "generator_count": group.generators.len(),
    });
    if a.generators {
        result["generators"] = json!(group.generators);
    }
    if a.verify && matches.flatten() == Some(false) {
        return Err(Error::InvalidArgument(format!(
            "stored order {} of {} disagrees with computed {}",
            stored.unwrap(),
            class.name,
            group.order
        )));
    }
    Ok(Output::single(result))
}

fn orbits(a: &OrbitsArgs, cli: &Cli) -> Result<Output> {
    let class = form(&a.form)?;
    let pts = vectors_of_norm_with(&class.form, a.norm, EnumOptions { budget: cli.budget, ..Default::default() })?;
    let orbits = orbit_decompose(&class.form, &pts, cli.budget)?;
    let mass = orbit_mass(&orbits);
    let records: Vec<Value> = orbits
        .iter()
        .map(|o| {
            json!({
                "representative": o.representative,
                "size": o.size,
                "stabilizer_order": o.stabilizer_order.to_string(),
            })
        })
        .collect();
    let result = json!({
        "form": class.name,
        "norm": a.norm,
        "vectors": pts.len(),
        "orbit_count": orbits.len(),
        "orbit_mass": mass.to_string(),
        "orbits": records,
    });
    Ok(Output::rows(result, records))
}

fn roots(a: &RootsArgs) -> Result<Output> {
    let mut classes = Vec::new();
    if let Some(f) = &a.form {
        if f.contains('#') {
            classes.push(form(f)?);
        } else {
            check_file(f)?;
            classes.extend(load_forms(f)?);
        }
    }
    if let Some(dir) = &a.corpus {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for f in files {
            classes.extend(load_forms(&f)?);
        }
    }
    let records = classes
        .iter()
        .map(|c| {
            let data = root_vectors(&c.form)?;
            let bounds = verify_root_bounds(&c.form)?;
            let mut rec = to_map(&data);
            rec.remove("unit_basis");
            rec.remove("complement_basis");
            let mut out = serde_json::Map::new();
            out.insert("name".into(), json!(c.name));
            out.insert("dim".into(), json!(c.form.dim()));
            out.extend(rec);
            out.insert("bounds".into(), to_value(&bounds));
            out.insert("bounds_ok".into(), json!(bounds.all_ok()));
            Ok(Value::Object(out))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Output::rows(&records, records.clone()))
}

fn mass(a: &MassArgs, cli: &Cli) -> Result<Output> {
    let g = genus(&a.genus, cli.budget)?;
    let method = match a.method {
        MethodArg::Enumerate => AverageMethod::Enumerate,
        MethodArg::Local => AverageMethod::Local,
        MethodArg::Both => AverageMethod::Both,
    };
    let avg = siegel_average(&g, a.norm, method)?;
    let weights: Vec<String> = g.weights()?.iter().map(|w| w.to_string()).collect();
    let represented = match method {
        AverageMethod::Local => None,
        _ => Some(mass_probability(&g, a.norm)?.to_string()),
    };
    let mut result = to_map(&avg);
    result.insert("classes".into(), json!(g.classes.iter().map(|c| c.name.clone()).collect::<Vec<_>>()));
    result.insert("weights".into(), json!(weights));
    result.insert("mass".into(), json!(g.mass().map(|m| m.to_string())));
    result.insert("represented_probability".into(), json!(represented));
    Ok(Output::single(Value::Object(result)))
}

fn parse_poly(path: &str, m: usize) -> Result<Poly> {
    check_file(path)?;
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Parse(e.to_string()))?;
    let bad = || Error::Parse(format!("{path}: expected {{\"terms\": [[[exponents], \"p/q\"], ...]}}"));
    let terms = v.get("terms").and_then(Value::as_array).ok_or_else(bad)?;
    let mut out = Vec::new();
    for t in terms {
        let pair = t.as_array().filter(|p| p.len() == 2).ok_or_else(bad)?;
        let exps: Vec<u32> = pair[0]
            .as_array()
            .ok_or_else(bad)?
            .iter()
            .map(|e| e.as_u64().map(|e| e as u32).ok_or_else(bad))
            .collect::<Result<_>>()?;
        if exps.len() != m {
            return Err(Error::Parse(format!("{path}: monomial with {} exponents, form has dim {m}", exps.len())));
        }
        let c: BigRational = match &pair[1] {
            Value::String(s) => s.parse().map_err(|_| bad())?,
            Value::Number(n) => BigRational::from_integer(BigInt::from(n.as_i64().ok_or_else(bad)?)),
            _ => return Err(bad()),
        };
        out.push((exps, c));
    }
    Ok(Poly::from_terms(m, out))
}

fn theta(a: &ThetaArgs, cli: &Cli) -> Result<Output> {
    let class = form(&a.form)?;
    if a.prec < 1 {
        return Err(Error::InvalidArgument("--prec must be at least 1".into()));
    }
    let _ = cli;
    let phi = if a.harmonic == "auto" {
        let mut found = None;
        for n in 1..=a.prec {
            match nonzero_plane_harmonic(&class.form, a.degree, n) {
                Ok(h) => {
                    found = Some(h);
                    break;
                }
                Err(Error::AllZeroSeries) => continue,
                Err(e) => return Err(e),
            }
        }
        found.ok_or(Error::AllZeroSeries)?
    } else {
        let p = parse_poly(&a.harmonic, class.form.dim())?;
        let h = Harmonic::from_x(&class.form, &p);
        if !h.is_harmonic() {
            return Err(Error::InvalidArgument(format!("{} is not harmonic for {}", a.harmonic, class.name)));
        }
        h
    };
    let series = harmonic_theta(&class.form, &phi, a.prec)?;
    let hecke = if a.degree > 0 { hecke_eigen_check(&series).ok() } else { None };
    let records: Vec<Value> =
        series.coeffs.iter().map(|(n, c)| json!({ "n": n, "coefficient": c.to_string() })).collect();
    let poly = phi.frame.to_x(&phi.poly);
    let harmonic: Vec<Value> = poly.terms.iter().map(|(e, c)| json!([e, c.to_string()])).collect();
    let result = json!({
        "form": class.name,
        "degree": a.degree,
        "harmonic": harmonic,
        "series": to_value(&series),
        "hecke": hecke.map(|h| to_value(&h)),
    });
    Ok(Output::rows(result, records))
}

fn weyl(a: &WeylArgs, cli: &Cli) -> Result<Output> {
    let g = genus(&a.genus, cli.budget)?;
    let weights = g.weights()?;
    let opts = EnumOptions { budget: cli.budget, ..Default::default() };
    let mut per_class: Vec<Vec<BigRational>> = Vec::new();
    let mut dim = 0;
    for c in &g.classes {
        let basis = harmonic_basis(&c.form, a.degree);
        dim = basis.dim;
        let pts = vectors_of_norm_with(&c.form, a.norm, opts)?;
        per_class.push(basis_sums(&basis, &pts));
    }
    let records: Vec<Value> = (0..dim)
        .map(|j| {
            let full: BigRational = weights.iter().zip(&per_class).map(|(w, s)| w * &s[j]).sum();
            json!({
                "index": j,
                "per_class": per_class.iter().map(|s| s[j].to_string()).collect::<Vec<_>>(),
                "full": full.to_string(),
            })
        })
        .collect();
    let all_zero = per_class.iter().all(|s| s.iter().all(Zero::is_zero));
    let result = json!({
        "norm": a.norm,
        "degree": a.degree,
        "basis_dim": dim,
        "all_zero": all_zero,
        "sums": records,
    });
    Ok(Output::rows(result, records))
}

fn variance(a: &VarianceArgs, cli: &Cli) -> Result<Output> {
    let g = genus(&a.genus, cli.budget)?;
    let kmax = if a.kmax == "auto" {
        KMax::Auto
    } else {
        KMax::Fixed(a.kmax.parse().map_err(|_| Error::InvalidArgument(format!("--kmax {:?}", a.kmax)))?)
    };
    let config = VarianceConfig {
        profile: match a.profile {
            ProfileArg::Bump => Profile::Bump,
            ProfileArg::Constant => Profile::Constant,
        },
        mode: match a.mode {
            ModeArg::Quad => GeometricMode::Quadrature,
            ModeArg::Mc => GeometricMode::MonteCarlo,
        },
        samples: samples(a.samples, cli.max_samples)?,
        seed: cli.seed,
        tasks: cli.tasks,
        kmax,
    };
    Ok(Output::single(variance_report(&g, a.norm, a.scale, &config)?))
}

fn equidist(a: &EquidistArgs, cli: &Cli) -> Result<Output> {
    let class = form(&a.form)?;
    let n = samples(a.samples, cli.max_samples)?;
    let reports = a
        .eta
        .iter()
        .map(|&eta| equidist_variance(&class.form, a.norm, eta, n, cli.seed).map(|r| to_value(&r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Output::rows(&reports, reports.clone()))
}

fn caps(a: &CapsArgs, cli: &Cli) -> Result<Output> {
    let class = form(&a.form)?;
    let n = samples(a.samples, cli.max_samples)?;
    samples(n.saturating_mul(a.covering_factor), cli.max_samples)?;
    let report = cap_miss_fraction(&class.form, a.norm, &a.eta, n, cli.seed, a.covering_factor)?;
    let records = report.etas.iter().zip(&report.miss).map(|(e, m)| json!({ "eta": e, "miss": m })).collect();
    Ok(Output::rows(report, records))
}

fn diophantine(a: &DiophantineArgs, cli: &Cli) -> Result<Output> {
    match &a.point {
        Some(x) => Ok(Output::single(diophantine_witness(a.dim, a.prime, a.k, x)?)),
        None => {
            let n = samples(a.samples, cli.max_samples)?;
            Ok(Output::single(diophantine_stats(a.dim, a.prime, a.k, n, cli.seed)?))
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(&'static str, Output)> {
    Ok(match &cli.command {
        Command::Enumerate(a) => ("enumerate", enumerate(a, cli)?),
        Command::Aut(a) => ("aut", aut(a, cli)?),
        Command::Orbits(a) => ("orbits", orbits(a, cli)?),
        Command::Roots(a) => ("roots", roots(a)?),
        Command::Mass(a) => ("mass", mass(a, cli)?),
        Command::Cutoff(a) => ("cutoff", Output::single(cutoff_thresholds(a.dim, a.t)?)),
        Command::Theta(a) => ("theta", theta(a, cli)?),
        Command::Weyl(a) => ("weyl", weyl(a, cli)?),
        Command::Variance(a) => ("variance", variance(a, cli)?),
        Command::Equidist(a) => ("equidist", equidist(a, cli)?),
        Command::Caps(a) => ("caps", caps(a, cli)?),
        Command::Diophantine(a) => ("diophantine", diophantine(a, cli)?),
    })
}

fn render(cli: &Cli, command: &str, out: &Output) -> String {
    match cli.format {
        Format::Json => to_json(&envelope(command, cli, &out.result)).expect("serializable"),
        Format::Csv => {
            let config = to_json(cli).expect("serializable");
            let body = to_csv(&out.records).expect("serializable");
            let (version, rows) = body.split_once('\n').unwrap_or((&body, ""));
            format!("{version}\n# command {command}\n# config {}\n{rows}", config.trim_end())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match with_tasks(cli.tasks, || dispatch(&cli)) {
        Ok((command, out)) => {
            print!("{}", render(&cli, command, &out));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::BudgetExceeded { .. } => 2,
                _ => 1,
            })
        }
    }
}
