use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use hhl_core::heis::{GroupPoint, HeisDim};
use hhl_core::norms::{cmo_norm, morrey_norm};
use hhl_core::ops::{eval_commutator, eval_commutator_piece, eval_hausdorff};
use hhl_core::sharpness::{self, ConstantId, Theorem, Tolerances};
use hhl_core::{McConfig, NormParams, Piece, RadiusGrid};

mod catalog;
mod report;

#[derive(Parser)]
#[command(name = "hhl", version, about = "Hausdorff operators on the Heisenberg group: constants, norms and bound checks")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "HHL_THREADS", global = true)]
    threads: Option<NonZeroUsize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a boundedness or sharpness statement numerically.
    Verify(VerifyArgs),
    /// Evaluate one constant (C1..C5, sharp, log-i, log-ii).
    Constant(ConstantArgs),
    /// Weighted central Morrey or CMO norm of a catalog function.
    Norm(NormArgs),
    /// Apply an operator to a catalog function at one point.
    Eval(EvalArgs),
    /// Run the built-in closed-form checks.
    Report(ReportArgs),
}

#[derive(Args, Serialize, Clone)]
struct Common {
    /// ℍⁿ dimension parameter.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Power-weight exponent α.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value = "ball-indicator", help = catalog::PHI_IDS)]
    phi: String,
    #[arg(long = "A", default_value = "dilation", help = catalog::MAP_IDS)]
    a: String,
    /// power, clipped-power or none.
    #[arg(long, default_value = "power")]
    weight: String,
    #[arg(long, default_value_t = 0x5EED)]
    seed: u64,
    #[arg(long, default_value_t = 1 << 16)]
    samples: usize,
    /// Radius grid 2^k for k in grid_min..=grid_max.
    #[arg(long, default_value_t = -10, allow_negative_numbers = true)]
    grid_min: i32,
    #[arg(long, default_value_t = 10, allow_negative_numbers = true)]
    grid_max: i32,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    /// 1.1, 1.2, 1.3, 1.4, 1.5, 1.6i or 1.6ii.
    #[arg(long)]
    theorem: String,
    #[arg(long, default_value = "ball-indicator", help = catalog::FIELD_IDS)]
    f: String,
    #[arg(long, default_value = "log-norm")]
    b: String,
    #[arg(long, default_value_t = 10.0)]
    kappa: f64,
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct ConstantArgs {
    #[arg(long)]
    id: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum NormKind {
    Morrey,
    Cmo,
}

#[derive(Args, Serialize)]
struct NormArgs {
    #[arg(long, value_enum)]
    kind: NormKind,
    #[arg(long, default_value = "ball-indicator", help = catalog::FIELD_IDS)]
    f: String,
    #[arg(long, default_value = "log-norm")]
    b: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum OperatorKind {
    Hausdorff,
    Commutator,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long, value_enum, default_value_t = OperatorKind::Hausdorff)]
    operator: OperatorKind,
    #[arg(long, default_value = "ball-indicator", help = catalog::FIELD_IDS)]
    f: String,
    #[arg(long, default_value = "log-norm")]
    b: String,
    /// Comma-separated coordinates of the evaluation point.
    #[arg(long, allow_negative_numbers = true)]
    x: String,
    /// Restrict a commutator to piece 1 (‖A‖ ≤ 1) or 2 (‖A‖ > 1).
    #[arg(long)]
    piece: Option<u8>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
}

/// Failure classes, mapped onto exit codes 2 and 1.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<hhl_core::Error> for Failure {
    fn from(e: hhl_core::Error) -> Self {
        match e {
            hhl_core::Error::Divergent { .. } | hhl_core::Error::Singular(_) => Failure::Runtime(e.into()),
            _ => Failure::Config(e.into()),
        }
    }
}

fn config<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Config)
}

struct Outcome {
    result: Value,
    csv: String,
    failed: bool,
    summary: String,
}

impl Common {
    fn dim(&self) -> Result<HeisDim, Failure> {
        Ok(HeisDim::new(self.n)?)
    }

    fn mc(&self) -> Result<McConfig, Failure> {
        let cfg = McConfig { seed: self.seed, samples: self.samples, ..McConfig::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    fn grid(&self) -> Result<RadiusGrid, Failure> {
        if self.grid_min > self.grid_max {
            return Err(Failure::Config(anyhow!("grid-min must not exceed grid-max")));
        }
        Ok(RadiusGrid::dyadic(self.grid_min, self.grid_max))
    }

    /// Fills `p` from the Hölder split when it was not given.
    fn params(&self) -> Result<NormParams, Failure> {
        let lambda = self.lambda.ok_or_else(|| Failure::Config(anyhow!("--lambda is required")))?;
        let p = match (self.p, self.p1, self.p2) {
            (Some(p), _, _) => p,
            (None, Some(p1), Some(p2)) => 1.0 / (1.0 / p1 + 1.0 / p2),
            _ => return Err(Failure::Config(anyhow!("--p is required (or both --p1 and --p2)"))),
        };
        let mut prm = NormParams::morrey(p, lambda, self.alpha);
        prm.p1 = self.p1;
        prm.p2 = self.p2;
        prm.q = self.q;
        prm.delta = self.delta;
        prm.validate(self.dim()?)?;
        Ok(prm)
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn table_csv(rows: &[hhl_core::norms::NormRow]) -> String {
    let mut s = String::from("r,value,err\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.r, r.value, r.err));
    }
    s
}

fn verify(args: &VerifyArgs) -> Result<Outcome, Failure> {
    let c = &args.common;
    let theorem: Theorem = args.theorem.parse()?;
    let prm = c.params()?;
    let dim = c.dim()?;
    let phi = config(catalog::phi(&c.phi))?;
    let a = config(catalog::matrix(&c.a, c.n))?;
    let (cfg, grid) = (c.mc()?, c.grid()?);
    let tol = Tolerances { kappa: args.kappa, rel: args.rel_tol, ..Tolerances::default() };
    let rep = if theorem.is_upper_bound() {
        let w = config(catalog::weight(&c.weight, dim, c.alpha))?;
        sharpness::check_hypotheses(theorem, &prm, &w)?;
        let f = config(catalog::field(&args.f))?;
        let b = if theorem.is_commutator() { Some(config(catalog::field(&args.b))?) } else { None };
        sharpness::verify_upper_bound(theorem, &phi, &a, &w, &prm, &f, b.as_ref(), &grid, &cfg, &tol)?
    } else {
        sharpness::verify_sharpness(theorem, &phi, &a, &prm, &grid, &cfg, &tol)?
    };
    let csv = rep.tables.get("target").map(|t| table_csv(t)).unwrap_or_else(|| {
        let mut s = String::from("level,ratio,integral\n");
        for r in &rep.truncation {
            s.push_str(&format!("{},{},{}\n", r.level, r.ratio, r.integral));
        }
        s
    });
    Ok(Outcome {
        summary: format!("theorem {}: ratio {:.9e}, verdict {:?}", args.theorem, rep.operator_ratio, rep.verdict),
        failed: rep.verdict.is_failure(),
        result: to_value(&rep),
        csv,
    })
}

fn constant(args: &ConstantArgs) -> Result<Outcome, Failure> {
    let c = &args.common;
    let id: ConstantId = args.id.parse()?;
    let prm = c.params()?;
    let phi = config(catalog::phi(&c.phi))?;
    let a = config(catalog::matrix(&c.a, c.n))?;
    let k = sharpness::constant(id, &phi, &a, &prm, &c.mc()?)?;
    let mut csv = String::from("piece,value,err\n");
    for (name, p) in &k.pieces {
        csv.push_str(&format!("{name},{},{}\n", p.value, p.error));
    }
    Ok(Outcome { summary: format!("{id} = {:.12e}", k.value), failed: false, result: to_value(&k), csv })
}

fn norm(args: &NormArgs) -> Result<Outcome, Failure> {
    let c = &args.common;
    let dim = c.dim()?;
    let w = config(catalog::weight(&c.weight, dim, c.alpha))?;
    let (cfg, grid) = (c.mc()?, c.grid()?);
    let r = match args.kind {
        NormKind::Morrey => {
            let prm = c.params()?;
            NormParams::check_morrey_range(prm.p, prm.lambda)?;
            morrey_norm(&config(catalog::field(&args.f))?, prm.p, prm.lambda, &w, &grid, &cfg)?
        }
        NormKind::Cmo => {
            let p2 = c.p2.ok_or_else(|| Failure::Config(anyhow!("--p2 is required for the CMO norm")))?;
            if !(p2 >= 1.0 && p2.is_finite()) {
                return Err(Failure::Config(anyhow!("CMO exponent requires 1 ≤ p₂ < ∞, got {p2}")));
            }
            cmo_norm(&config(catalog::field(&args.b))?, p2, &w, &grid, &cfg)?
        }
    };
    Ok(Outcome { summary: format!("norm = {:.12e}", r.value), failed: false, csv: r.to_csv(), result: to_value(&r) })
}

fn eval(args: &EvalArgs) -> Result<Outcome, Failure> {
    let c = &args.common;
    let coords: Vec<f64> = config(
        args.x
            .split(',')
            .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad coordinate '{s}'")))
            .collect(),
    )?;
    let x = GroupPoint::new(coords)?;
    let phi = config(catalog::phi(&c.phi))?;
    let a = config(catalog::matrix(&c.a, c.n))?;
    let f = config(catalog::field(&args.f))?;
    let cfg = c.mc()?;
    let e = match args.operator {
        OperatorKind::Hausdorff => {
            if args.piece.is_some() {
                return Err(Failure::Config(anyhow!("--piece applies to the commutator only")));
            }
            eval_hausdorff(&phi, &a, &f, &x, &cfg)?
        }
        OperatorKind::Commutator => {
            let b = config(catalog::field(&args.b))?;
            match args.piece {
                None => eval_commutator(&phi, &a, &b, &f, &x, &cfg)?,
                Some(1) => eval_commutator_piece(Piece::One, &phi, &a, &b, &f, &x, &cfg)?,
                Some(2) => eval_commutator_piece(Piece::Two, &phi, &a, &b, &f, &x, &cfg)?,
                Some(k) => return Err(Failure::Config(anyhow!("--piece must be 1 or 2, got {k}"))),
            }
        }
    };
    Ok(Outcome {
        summary: format!("value = {:.12e} ± {:.3e}", e.value, e.std_error),
        failed: false,
        csv: format!("x,value,err\n\"{}\",{},{}\n", args.x, e.value, e.std_error),
        result: to_value(&e),
    })
}

/// Writes via a sibling temporary file and a rename.
fn write_atomic(path: &Path, body: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, body)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

fn run(cli: &Cli) -> Result<(Outcome, &'static str, &Common, Value), Failure> {
    let (name, common, cfg_value) = match &cli.cmd {
        Cmd::Verify(a) => ("verify", &a.common, to_value(a)),
        Cmd::Constant(a) => ("constant", &a.common, to_value(a)),
        Cmd::Norm(a) => ("norm", &a.common, to_value(a)),
        Cmd::Eval(a) => ("eval", &a.common, to_value(a)),
        Cmd::Report(a) => ("report", &a.common, to_value(a)),
    };
    let outcome = hhl_core::par::with_threads(cli.threads.map(NonZeroUsize::get), || match &cli.cmd {
        Cmd::Verify(a) => verify(a),
        Cmd::Constant(a) => constant(a),
        Cmd::Norm(a) => norm(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Report(a) => report::run(&a.common),
    })?;
    Ok((outcome, name, common, cfg_value))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (outcome, name, common, cfg_value) = match run(&cli) {
        Ok(v) => v,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let body = match common.format {
        Format::Json => {
            let doc = json!({
                "schema": 1,
                "command": name,
                "config": cfg_value,
                "timestamp": timestamp,
                "result": outcome.result,
            });
            serde_json::to_string_pretty(&doc).expect("json") + "\n"
        }
        Format::Csv => outcome.csv,
    };
    match &common.out {
        Some(path) => {
            if let Err(e) = write_atomic(path, body.as_bytes()) {
                eprintln!("error: writing {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{body}"),
    }
    eprintln!("{}", outcome.summary);
    if outcome.failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
