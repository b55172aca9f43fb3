use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use fbsde::backward::march;
use fbsde::harness::{self, EmitOptions, ErrorNorm, Format};
use fbsde::interp::SplineInterpolant;
use fbsde::model::{BoxDomain, FbsdeProblem, ForwardScheme, Point, Scheme, SchemeConfig, SpaceTimeGrid, MAX_DIM};
use fbsde::problems::{self, HestonParams};
use fbsde::Error;

#[derive(Parser)]
#[command(name = "fbsde", version, about = "Backward solvers and convergence benchmarks for decoupled FBSDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once and print Y, Z at x0 with error and Picard statistics.
    Solve(Opts),
    /// Solve for each N and print the error table with fitted rates.
    Convergence(Opts),
}

#[derive(Args)]
struct Opts {
    /// heston | sine2d | linear
    #[arg(long)]
    problem: Option<String>,
    /// s1 | s2 | cn
    #[arg(long)]
    scheme: Option<String>,
    /// euler | milstein | wt2
    #[arg(long)]
    forward: Option<String>,
    /// Number of time steps for `solve`.
    #[arg(long)]
    n: Option<usize>,
    /// Comma separated step counts for `convergence`.
    #[arg(long)]
    ns: Option<String>,
    #[arg(long)]
    gh_order: Option<usize>,
    /// Truncation box as lo,hi per axis: `0.1,2.5` or `-0.5,1.5,-0.5,1.5`.
    #[arg(long, allow_hyphen_values = true)]
    r#box: Option<String>,
    /// Comma separated initial point.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long)]
    picard_tol: Option<f64>,
    #[arg(long)]
    picard_max: Option<usize>,
    #[arg(long)]
    s2_verbatim_weights: bool,
    /// Iterate even when the implicit generator part is affine in y.
    #[arg(long)]
    picard_always: bool,
    /// point | l2
    #[arg(long)]
    error_norm: Option<String>,
    /// csv | markdown
    #[arg(long)]
    format: Option<String>,
    /// Omit the runtime column so output is reproducible.
    #[arg(long)]
    no_runtime: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Flags first, then the config file.
struct Settings {
    flags: BTreeMap<&'static str, String>,
    file: BTreeMap<String, String>,
}

impl Settings {
    fn new(o: &Opts) -> Result<Self, Error> {
        let file = match &o.config {
            Some(p) => harness::parse_config(&std::fs::read_to_string(p)?)?,
            None => BTreeMap::new(),
        };
        let mut flags = BTreeMap::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                flags.insert(k, v);
            }
        };
        put("problem", o.problem.clone());
        put("scheme", o.scheme.clone());
        put("forward", o.forward.clone());
        put("n", o.n.map(|v| v.to_string()));
        put("ns", o.ns.clone());
        put("gh-order", o.gh_order.map(|v| v.to_string()));
        put("box", o.r#box.clone());
        put("x0", o.x0.clone());
        put("picard-tol", o.picard_tol.map(|v| v.to_string()));
        put("picard-max", o.picard_max.map(|v| v.to_string()));
        put("error-norm", o.error_norm.clone());
        put("format", o.format.clone());
        put("out", o.out.as_ref().map(|p| p.display().to_string()));
        if o.s2_verbatim_weights {
            put("s2-verbatim-weights", Some("true".into()));
        }
        if o.picard_always {
            put("picard-always", Some("true".into()));
        }
        if o.no_runtime {
            put("no-runtime", Some("true".into()));
        }
        let known = [
            "problem", "scheme", "forward", "n", "ns", "gh-order", "box", "x0", "picard-tol", "picard-max",
            "s2-verbatim-weights", "picard-always", "error-norm", "format", "out", "no-runtime",
        ];
        if let Some(k) = file.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::InvalidConfig(format!("unknown config key {k}")));
        }
        Ok(Self { flags, file })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.flags.get(key).or_else(|| self.file.get(key)).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        self.raw(key)
            .map(|s| s.parse().map_err(|_| Error::InvalidConfig(format!("bad value for {key}: {s}"))))
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool, Error> {
        Ok(self.get::<bool>(key)?.unwrap_or(false))
    }
}

fn floats(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| Error::InvalidConfig(format!("not a number: {v}"))))
        .collect()
}

fn parse_box(s: &str) -> Result<BoxDomain, Error> {
    let v = floats(s)?;
    if v.is_empty() || v.len() % 2 != 0 {
        return Err(Error::InvalidConfig(format!("box needs lo,hi pairs: {s}")));
    }
    BoxDomain::new(v.iter().step_by(2).copied().collect(), v.iter().skip(1).step_by(2).copied().collect())
}

fn build_problem(s: &Settings) -> Result<FbsdeProblem, Error> {
    let bx = s.raw("box").map(parse_box).transpose()?;
    let x0 = s.raw("x0").map(floats).transpose()?;
    let mut p = match s.raw("problem").unwrap_or("heston") {
        "heston" => {
            let mut params = HestonParams::default();
            if let Some(x) = &x0 {
                params.x0 = x[0];
            }
            problems::heston_problem(params, bx.clone().unwrap_or_else(problems::heston_default_box))?
        }
        "sine2d" => {
            let mut at = problems::SINE2D_X0;
            if let Some(x) = &x0 {
                if x.len() != 2 {
                    return Err(Error::InvalidConfig("sine2d needs a 2-d x0".into()));
                }
                at.copy_from_slice(x);
            }
            problems::sine2d_problem(problems::SINE2D_SIGMA, at, bx.clone())?
        }
        "linear" => problems::linear_problem(),
        other => return Err(Error::InvalidConfig(format!("unknown problem {other}"))),
    };
    if let Some(b) = bx {
        if b.dim() != p.dim {
            return Err(Error::InvalidConfig(format!("box has {} axes, problem has {}", b.dim(), p.dim)));
        }
        p.default_box = b;
    }
    if let Some(x) = x0 {
        if x.len() != p.dim {
            return Err(Error::InvalidConfig(format!("x0 has {} entries, problem has {}", x.len(), p.dim)));
        }
        let mut pt = [0.0; MAX_DIM];
        pt[..p.dim].copy_from_slice(&x);
        p.default_x0 = pt;
    }
    Ok(p)
}

fn build_config(s: &Settings) -> Result<SchemeConfig, Error> {
    let scheme = match s.raw("scheme").unwrap_or("s1") {
        "s1" => Scheme::S1,
        "s2" => Scheme::S2,
        "cn" => Scheme::Cn,
        o => return Err(Error::InvalidConfig(format!("unknown scheme {o}"))),
    };
    let forward = match s.raw("forward").unwrap_or("euler") {
        "euler" => ForwardScheme::Euler,
        "milstein" => ForwardScheme::Milstein,
        "wt2" => ForwardScheme::WeakTaylor2,
        o => return Err(Error::InvalidConfig(format!("unknown forward scheme {o}"))),
    };
    let mut cfg = SchemeConfig::new(scheme, forward);
    if let Some(v) = s.get("gh-order")? {
        cfg.gh_order = v;
    }
    if let Some(v) = s.get("picard-tol")? {
        cfg.picard_tol = v;
    }
    if let Some(v) = s.get("picard-max")? {
        cfg.picard_max = v;
    }
    cfg.s2_verbatim_weights = s.flag("s2-verbatim-weights")?;
    cfg.affine_direct = !s.flag("picard-always")?;
    Ok(cfg)
}

fn sink(s: &Settings) -> Result<Box<dyn Write>, Error> {
    Ok(match s.raw("out") {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn norm(s: &Settings) -> Result<ErrorNorm, Error> {
    match s.raw("error-norm").unwrap_or("point") {
        "point" => Ok(ErrorNorm::Point),
        "l2" => Ok(ErrorNorm::L2),
        o => Err(Error::InvalidConfig(format!("unknown error norm {o}"))),
    }
}

fn solve(s: &Settings) -> Result<(), Error> {
    let p = build_problem(s)?;
    let cfg = build_config(s)?;
    let n: usize = s.get("n")?.unwrap_or(64);
    let grid = SpaceTimeGrid::new(p.horizon, n, &p.default_box, harness::GRID_TIME_ORDER)?;
    let out = march(&p, &grid, &cfg)?;
    let x0: Point = p.default_x0;
    let mut w = sink(s)?;
    writeln!(w, "problem={} scheme={} forward={} N={n}", p.name, cfg.scheme.label(), cfg.forward.label())?;
    let d = p.dim;
    let mut z = [0.0; MAX_DIM];
    SplineInterpolant::fit(&grid, &out.solution.z, cfg.extrapolation)?.eval_into(&x0, &mut z[..d]);
    let y = SplineInterpolant::fit(&grid, &out.solution.y, cfg.extrapolation)?.eval(&x0);
    let zs: Vec<String> = z[..d].iter().map(|v| format!("{v:.10e}")).collect();
    writeln!(w, "x0={:?} Y={y:.10e} Z={}", &x0[..d], zs.join(","))?;
    writeln!(w, "{}", harness::stats_line(&out.stats))?;
    if p.analytic.is_some() {
        let (ey, ez) = harness::level0_errors(&p, &grid, &out.solution, &cfg, &x0, norm(s)?)?;
        let ez: Vec<String> = ez.iter().map(|e| format!("{e:.6e}")).collect();
        writeln!(w, "errY={ey:.6e} errZ={}", ez.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn convergence(s: &Settings) -> Result<(), Error> {
    let p = build_problem(s)?;
    let cfg = build_config(s)?;
    let default_ns = if p.dim == 1 { "16,32,64,128" } else { "8,16,32,64,128" };
    let ns: Vec<usize> = s
        .raw("ns")
        .unwrap_or(default_ns)
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| Error::InvalidConfig(format!("bad N: {v}"))))
        .collect::<Result<_, _>>()?;
    let report = harness::run_convergence(&p, &cfg, &ns, &p.default_x0, norm(s)?)?;
    let format = match s.raw("format").unwrap_or("csv") {
        "csv" => Format::Csv,
        "markdown" | "md" => Format::Markdown,
        o => return Err(Error::InvalidConfig(format!("unknown format {o}"))),
    };
    let mut w = sink(s)?;
    harness::emit(&report, EmitOptions { format, runtime: !s.flag("no-runtime")? }, &mut w)?;
    w.flush()?;
    Ok(())
}

fn init_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("FBSDE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("FBSDE_THREADS must be an integer, got {v}")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| match &cli.command {
        Command::Solve(o) => Settings::new(o).and_then(|s| solve(&s)),
        Command::Convergence(o) => Settings::new(o).and_then(|s| convergence(&s)),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
