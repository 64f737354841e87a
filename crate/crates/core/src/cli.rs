//! `convred` command line: every check as a CSV or JSON table.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use serde::Serialize;
use serde_json::{json, Value};

use crate::alpha1d::monotonicity_suite;
use crate::ballbodies::{
    ballbody_volume, equality_case_fingerprint, inclusion_alpha_check, inclusion_logconcave_check,
};
use crate::bodies::{
    isotropic_normalize, isotropy_data, BodySpec, ConvexBody, IsotropyMethod, DEFAULT_MC_SAMPLES,
};
use crate::combinatorics::{catalan, dn, lemma41_holds, lemma42_holds};
use crate::covariogram::{
    check_one_over_n_concavity, check_probability_density, second_moment_identity,
    simplex_levelset_check, CheckOptions, Covariogram,
};
use crate::error::{Error, Result};
use crate::report::VerificationReport;
use crate::verifier::{
    directions_for, radial_rows, symmetric_reduction_report, theorem1_verify, volume_bound_check,
    Theorem1Config, Theorem1Report,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunConfig {
    /// builtin:cube | builtin:ball | builtin:simplex | vpolytope:<path to body JSON>
    #[arg(long, global = true, default_value = "builtin:simplex")]
    pub body: String,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub q: Option<f64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Monte Carlo sample budget
    #[arg(long, global = true, default_value_t = DEFAULT_MC_SAMPLES)]
    pub samples: usize,
    /// Direction count (default 256 in the plane, 4096 above)
    #[arg(long, global = true)]
    pub dirs: Option<usize>,
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// Numerical tolerance override
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long, global = true)]
    pub max: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Table of D_n with the exact certificate D_n <= sqrt 2
    Dn,
    /// Catalan numbers and their recurrence
    Catalan,
    /// The exact rational inequality used for the limit claim
    Lemma41,
    /// (16n/(n+2))^n >= (n+1)^2 C_n^2
    Lemma42,
    /// Covariogram property suite
    Covariogram,
    /// Radial table and volume of K_p(g_K)
    Ballbody,
    /// Sharp inclusion for alpha-concave functions and the log-concave chain
    Inclusion,
    /// Monotonicity of G_g(p) on random alpha-concave functions
    Gmono,
    /// L_K <= D_n L_{K_{n+2}(g_K)}
    Theorem1,
    /// |K_{n+2}(g_K)| against its binomial bound
    Volbound,
    /// The volume-one symmetric body of the reduction
    Reduce,
}

#[derive(Debug, Parser)]
#[command(
    name = "convred",
    version,
    about = "Covariograms, Ball bodies and the constant D_n"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub config: RunConfig,
}

/// A finished command: one table plus the full JSON payload.
struct Output {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
    detail: Value,
    passed: bool,
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn report_table(reports: &[VerificationReport]) -> (Vec<String>, Vec<Vec<String>>) {
    let columns = [
        "check",
        "subject",
        "quantity",
        "value",
        "error_estimate",
        "tolerance",
        "worst_margin",
        "pass",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    for r in reports {
        for (k, v) in &r.values {
            rows.push(vec![
                r.check.clone(),
                r.subject.clone(),
                k.clone(),
                f(*v),
                f(r.error_estimate),
                f(r.tolerance),
                r.worst_margin.map(f).unwrap_or_default(),
                r.passed.to_string(),
            ]);
        }
    }
    (columns, rows)
}

fn from_reports(reports: Vec<VerificationReport>, passed: bool) -> Result<Output> {
    let (columns, rows) = report_table(&reports);
    Ok(Output {
        columns,
        rows,
        detail: serde_json::to_value(&reports)?,
        passed,
    })
}

pub fn parse_body(spec: &str, dim: Option<usize>) -> Result<ConvexBody> {
    let body = if let Some(name) = spec.strip_prefix("builtin:") {
        let n = dim.unwrap_or(2);
        match name {
            "cube" => ConvexBody::cube(n, 1.0)?,
            "ball" => ConvexBody::ball_with_volume(n, 1.0)?,
            "simplex" => ConvexBody::regular_simplex(n)?,
            other => return Err(Error::Config(format!("unknown builtin body '{other}'"))),
        }
    } else if let Some(path) = spec.strip_prefix("vpolytope:") {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read body file '{path}': {e}")))?;
        BodySpec::from_json(&text)?.build()?
    } else {
        return Err(Error::Config(format!(
            "body must be builtin:cube|ball|simplex or vpolytope:<path>, got '{spec}'"
        )));
    };
    if let Some(n) = dim {
        if n != body.dim() {
            return Err(Error::Config(format!(
                "--dim {n} does not match body dimension {}",
                body.dim()
            )));
        }
    }
    Ok(body)
}

fn theorem1_config(cfg: &RunConfig) -> Theorem1Config {
    let mut t = Theorem1Config {
        seed: cfg.seed,
        mc_samples: cfg.samples,
        ..Default::default()
    };
    if let Some(d) = cfg.dirs {
        t.dirs_2d = d;
        t.dirs_nd = d;
    }
    if let Some(tol) = cfg.tol {
        t.quad_tol = tol;
    }
    t
}

fn normalized(body: &ConvexBody, cfg: &RunConfig) -> Result<ConvexBody> {
    let method = if body.exact_moments().is_some() {
        IsotropyMethod::Exact
    } else {
        IsotropyMethod::MonteCarlo {
            samples: cfg.samples,
            seed: cfg.seed,
        }
    };
    isotropic_normalize(body, &isotropy_data(body, method)?)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("--{name} must be positive, got {v}")))
    }
}

fn execute(cmd: Command, cfg: &RunConfig) -> Result<Output> {
    match cmd {
        Command::Dn => {
            let max = cfg.max.unwrap_or(10);
            if max == 0 {
                return Err(Error::Config("--max must be >= 1".into()));
            }
            let mut rows = Vec::new();
            let mut detail = Vec::new();
            let mut ok = true;
            for n in 1..=max {
                let d = dn(n)?;
                ok &= d.certificate;
                rows.push(vec![
                    n.to_string(),
                    f(d.value()),
                    d.to_decimal(30),
                    f(std::f64::consts::SQRT_2 - d.value()),
                    d.certificate.to_string(),
                ]);
                detail.push(json!({"n": n, "value": d.value(), "decimal": d.to_decimal(30), "certificate": d.certificate}));
            }
            Ok(Output {
                columns: ["n", "value", "decimal", "sqrt2_gap", "certificate"]
                    .map(String::from)
                    .to_vec(),
                rows,
                detail: Value::Array(detail),
                passed: ok,
            })
        }
        Command::Catalan => {
            let max = cfg.max.unwrap_or(20);
            let mut rows = Vec::new();
            let mut ok = true;
            for n in 0..=max {
                let c = catalan(n);
                // C_{n+1} (n+2) = 2 (2n+1) C_n
                let rec = catalan(n + 1) * BigInt::from(n + 2)
                    == c.clone() * BigInt::from(2 * (2 * n + 1));
                ok &= rec;
                rows.push(vec![n.to_string(), c.to_string(), rec.to_string()]);
            }
            Ok(Output {
                columns: ["n", "catalan", "recurrence"].map(String::from).to_vec(),
                detail: json!(rows),
                rows,
                passed: ok,
            })
        }
        Command::Lemma41 | Command::Lemma42 => {
            let max = cfg.max.unwrap_or(500);
            if max == 0 {
                return Err(Error::Config("--max must be >= 1".into()));
            }
            let check = if cmd == Command::Lemma41 {
                lemma41_holds
            } else {
                lemma42_holds
            };
            let mut rows = Vec::new();
            let mut ok = true;
            for n in 1..=max {
                let h = check(n)?;
                ok &= h;
                rows.push(vec![n.to_string(), h.to_string()]);
            }
            Ok(Output {
                columns: ["n", "holds"].map(String::from).to_vec(),
                detail: json!(rows),
                rows,
                passed: ok,
            })
        }
        Command::Covariogram => {
            let body = normalized(&parse_body(&cfg.body, cfg.dim)?, cfg)?;
            let g = Covariogram::auto(body.clone(), cfg.samples, cfg.seed)?;
            let opts = CheckOptions {
                samples: cfg.samples,
                seed: cfg.seed,
                quad_tol: cfg.tol.unwrap_or(1e-10),
                ..Default::default()
            };
            let n = body.dim();
            let mut theta = vec![0.0; n];
            theta[0] = 1.0;
            let mut reports = vec![
                check_probability_density(&g, &opts)?,
                check_one_over_n_concavity(&g, cfg.trials.unwrap_or(1000), cfg.seed, &opts)?,
                second_moment_identity(&g, &theta, &opts)?,
            ];
            let dirs = if n == 1 {
                vec![vec![1.0], vec![-1.0]]
            } else {
                crate::numerics::sphere_directions(n, cfg.dirs.unwrap_or(64), cfg.seed)?.dirs
            };
            let mut level = simplex_levelset_check(&g, &[0.25, 0.5], &dirs, 1e-9)?;
            // the level sets are scaled copies of K - K exactly for simplices
            let simplex = body.simplex_vertices().is_some();
            level.note(format!("simplex: {simplex}"));
            let level_ok = level.passed == simplex;
            reports.push(level);
            let ok = reports[..3].iter().all(|r| r.passed) && level_ok;
            from_reports(reports, ok)
        }
        Command::Ballbody => {
            let body = normalized(&parse_body(&cfg.body, cfg.dim)?, cfg)?;
            let n = body.dim();
            let p = positive("p", cfg.p.unwrap_or(n as f64 + 2.0))?;
            let g = Covariogram::auto(body, cfg.samples, cfg.seed)?;
            let t = theorem1_config(cfg);
            let dirs = directions_for(n, &t)?;
            let vol = ballbody_volume(&g, p, &dirs, t.quad_tol)?;
            let table = radial_rows(&g, p, &dirs, t.quad_tol)?;
            let mut columns: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
            columns.extend(["radial", "error"].map(String::from));
            let mut rows: Vec<Vec<String>> = table
                .iter()
                .map(|r| {
                    let mut row: Vec<String> = r.direction.iter().map(|c| f(*c)).collect();
                    row.push(f(r.radial));
                    row.push(f(r.error));
                    row
                })
                .collect();
            let mut vrow = vec![String::new(); n];
            vrow[0] = "volume".into();
            vrow.push(f(vol.value));
            vrow.push(f(vol.error));
            rows.push(vrow);
            Ok(Output {
                columns,
                rows,
                detail: json!({"p": p, "volume": vol, "radial": table}),
                passed: true,
            })
        }
        Command::Inclusion => {
            let body = normalized(&parse_body(&cfg.body, cfg.dim)?, cfg)?;
            let n = body.dim();
            let p = positive("p", cfg.p.unwrap_or(1.0))?;
            let q = positive("q", cfg.q.unwrap_or(2.0))?;
            if q < p {
                return Err(Error::Config(format!("need p <= q, got p = {p}, q = {q}")));
            }
            let alpha = positive("alpha", cfg.alpha.unwrap_or(1.0 / n as f64))?;
            let g = Covariogram::auto(body, cfg.samples, cfg.seed)?;
            let tol = cfg.tol.unwrap_or(1e-9);
            let dirs = if n == 1 {
                vec![vec![1.0], vec![-1.0]]
            } else {
                crate::numerics::sphere_directions(n, cfg.dirs.unwrap_or(64), cfg.seed)?.dirs
            };
            let a = inclusion_alpha_check(&g, alpha, p, q, &dirs, tol)?;
            let l = inclusion_logconcave_check(&g, p, q, &dirs, tol)?;
            let fp = equality_case_fingerprint(&g, alpha, &dirs, 64, 1e-8)?;
            let ok = a.passed && l.passed;
            from_reports(vec![a, l, fp], ok)
        }
        Command::Gmono => {
            let alpha = positive("alpha", cfg.alpha.unwrap_or(0.5))?;
            let r = monotonicity_suite(
                cfg.trials.unwrap_or(1000),
                alpha,
                &[0.5, 1.0, 2.0, 4.0, 8.0],
                cfg.seed,
                cfg.tol.unwrap_or(1e-7),
            )?;
            let ok = r.passed;
            from_reports(vec![r], ok)
        }
        Command::Theorem1 => {
            let body = parse_body(&cfg.body, cfg.dim)?;
            let r: Theorem1Report = theorem1_verify(&body, &theorem1_config(cfg))?;
            Ok(Output {
                columns: Theorem1Report::CSV_HEADER.map(String::from).to_vec(),
                rows: vec![r.csv_row()],
                passed: r.pass,
                detail: serde_json::to_value(&r)?,
            })
        }
        Command::Volbound => {
            let body = parse_body(&cfg.body, cfg.dim)?;
            let r = volume_bound_check(&body, &theorem1_config(cfg))?;
            let ok = r.passed;
            from_reports(vec![r], ok)
        }
        Command::Reduce => {
            let body = parse_body(&cfg.body, cfg.dim)?;
            let red = symmetric_reduction_report(&body, &theorem1_config(cfg))?;
            let n = body.dim();
            let mut columns: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
            columns.extend(["radial_T", "error"].map(String::from));
            let rows = red
                .table
                .iter()
                .map(|r| {
                    let mut row: Vec<String> = r.direction.iter().map(|c| f(*c)).collect();
                    row.push(f(r.radial));
                    row.push(f(r.error));
                    row
                })
                .collect();
            Ok(Output {
                columns,
                rows,
                passed: red.report.passed,
                detail: serde_json::to_value(&red)?,
            })
        }
    }
}

fn command_name(cmd: Command) -> String {
    serde_json::to_value(cmd)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

fn render(cmd: Command, cfg: &RunConfig, out: &Output) -> Result<Vec<u8>> {
    let meta = json!({
        "program": "convred",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command_name(cmd),
        "seed": cfg.seed,
        "config": cfg,
        "passed": out.passed,
    });
    match cfg.format {
        Format::Json => {
            let doc = json!({"meta": meta, "columns": out.columns, "rows": out.rows, "detail": out.detail});
            let mut s = serde_json::to_vec_pretty(&doc)?;
            s.push(b'\n');
            Ok(s)
        }
        Format::Csv => {
            let mut buf = Vec::new();
            writeln!(buf, "# convred {}", env!("CARGO_PKG_VERSION"))?;
            writeln!(buf, "# command: {}", command_name(cmd))?;
            writeln!(buf, "# seed: {}", cfg.seed)?;
            writeln!(buf, "# config: {}", serde_json::to_string(cfg)?)?;
            writeln!(buf, "# passed: {}", out.passed)?;
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(&out.columns)?;
                for row in &out.rows {
                    w.write_record(row)?;
                }
                w.flush()?;
            }
            Ok(buf)
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Stage { source, .. } => exit_code_for(source),
        Error::Quadrature(_) => 1,
        _ => 2,
    }
}

/// Runs the CLI; returns the process exit code (0 pass, 1 check failure,
/// 2 configuration error).
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = execute(cli.command, &cli.config).and_then(|out| {
        let bytes = render(cli.command, &cli.config, &out)?;
        match &cli.config.out {
            Some(path) => fs::write(path, &bytes)?,
            None => std::io::stdout().write_all(&bytes)?,
        }
        Ok(out.passed)
    });
    match result {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("convred: check failed");
            1
        }
        Err(e) => {
            eprintln!("convred: {e}");
            exit_code_for(&e)
        }
    }
}
