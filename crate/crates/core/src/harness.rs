//! Convergence runs, rate fitting and table output.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use crate::backward::{march, SolveStats};
use crate::error::{Error, Result};
use crate::interp::SplineInterpolant;
use crate::model::{FbsdeProblem, LevelSolution, Point, SchemeConfig, SpaceTimeGrid, MAX_DIM};

/// Time order used for the spatial step law of every run.
pub const GRID_TIME_ORDER: u32 = 2;

/// OLS slope of `ln(error)` against `ln(dt)`.
pub fn fit_rate(errors: &[f64], dts: &[f64]) -> Result<f64> {
    if errors.len() != dts.len() {
        return Err(Error::InvalidConfig(format!(
            "{} errors but {} steps",
            errors.len(),
            dts.len()
        )));
    }
    if errors.len() < 2 {
        return Err(Error::InsufficientPoints(errors.len()));
    }
    if let Some(&bad) = errors.iter().chain(dts).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::NonPositiveError(bad));
    }
    let n = errors.len() as f64;
    let lx: Vec<f64> = dts.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints(1));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    /// `|Y_0(x0) - Y^0(x0)|` with `Y^0` interpolated at `x0`.
    Point,
    /// Root-mean-square over the level-0 grid.
    L2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub dt: f64,
    pub err_y: f64,
    pub err_z: Vec<f64>,
    pub picard_total: usize,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub problem: String,
    pub scheme: String,
    pub forward: String,
    pub dim: usize,
    pub rows: Vec<ConvergenceRow>,
    pub cr_y: Option<f64>,
    pub cr_z: Vec<Option<f64>>,
}

impl ConvergenceReport {
    /// Rates are left empty when an error column is not strictly positive
    /// (exactly solved problems).
    fn fit(&mut self) {
        let dts: Vec<f64> = self.rows.iter().map(|r| r.dt).collect();
        let ys: Vec<f64> = self.rows.iter().map(|r| r.err_y).collect();
        self.cr_y = fit_rate(&ys, &dts).ok();
        self.cr_z = (0..self.dim)
            .map(|c| {
                let zs: Vec<f64> = self.rows.iter().map(|r| r.err_z[c]).collect();
                fit_rate(&zs, &dts).ok()
            })
            .collect();
    }

    pub fn picard_totals(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.picard_total).collect()
    }
}

/// Errors of a level-0 solution against the analytic pair.
pub fn level0_errors(
    problem: &FbsdeProblem,
    grid: &SpaceTimeGrid,
    sol: &LevelSolution,
    cfg: &SchemeConfig,
    x0: &Point,
    norm: ErrorNorm,
) -> Result<(f64, Vec<f64>)> {
    let exact = problem
        .analytic
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig(format!("problem {} has no analytic solution", problem.name)))?;
    let d = problem.dim;
    match norm {
        ErrorNorm::Point => {
            let ys = SplineInterpolant::fit(grid, &sol.y, cfg.extrapolation)?;
            let zs = SplineInterpolant::fit(grid, &sol.z, cfg.extrapolation)?;
            let mut z = [0.0; MAX_DIM];
            zs.eval_into(x0, &mut z[..d]);
            let ze = (exact.z)(0.0, x0);
            Ok((
                (ys.eval(x0) - (exact.y)(0.0, x0)).abs(),
                (0..d).map(|c| (z[c] - ze[c]).abs()).collect(),
            ))
        }
        ErrorNorm::L2 => {
            let count = grid.node_count();
            let mut sy = 0.0;
            let mut sz = vec![0.0; d];
            for n in 0..count {
                let x = grid.node(n);
                sy += (sol.y.values[n] - (exact.y)(0.0, &x)).powi(2);
                let ze = (exact.z)(0.0, &x);
                for (c, acc) in sz.iter_mut().enumerate() {
                    *acc += (sol.z.values[n * d + c] - ze[c]).powi(2);
                }
            }
            let k = count as f64;
            Ok(((sy / k).sqrt(), sz.into_iter().map(|v| (v / k).sqrt()).collect()))
        }
    }
}

/// Solves once per `N` and fits the rates.
pub fn run_convergence(
    problem: &FbsdeProblem,
    cfg: &SchemeConfig,
    ns: &[usize],
    x0: &Point,
    norm: ErrorNorm,
) -> Result<ConvergenceReport> {
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    let mut report = ConvergenceReport {
        problem: problem.name.clone(),
        scheme: cfg.scheme.label().into(),
        forward: cfg.forward.label().into(),
        dim: problem.dim,
        rows: Vec::with_capacity(ns.len()),
        cr_y: None,
        cr_z: vec![None; problem.dim],
    };
    for &n in &ns {
        let tag = |e: Error| Error::AtResolution { n, source: Box::new(e) };
        let start = Instant::now();
        let grid = SpaceTimeGrid::new(problem.horizon, n, &problem.default_box, GRID_TIME_ORDER).map_err(tag)?;
        let out = march(problem, &grid, cfg).map_err(tag)?;
        let (err_y, err_z) = level0_errors(problem, &grid, &out.solution, cfg, x0, norm).map_err(tag)?;
        let runtime_s = start.elapsed().as_secs_f64();
        if let Some(prev) = report.rows.last() {
            if runtime_s < prev.runtime_s {
                log::warn!("runtime dropped from N={} to N={}", prev.n, n);
            }
        }
        log::info!("{} {} {} N={n}: errY={err_y:e} picard={}", report.problem, report.scheme, report.forward, out.stats.picard_total);
        report.rows.push(ConvergenceRow {
            n,
            dt: grid.dt(),
            err_y,
            err_z,
            picard_total: out.stats.picard_total,
            runtime_s,
        });
    }
    report.fit();
    Ok(report)
}

/// Convenience for reporting [`SolveStats`] of a single run.
pub fn stats_line(stats: &SolveStats) -> String {
    format!(
        "levels={} picard_total={} wallclock_s={:.3}",
        stats.levels.len(),
        stats.picard_total,
        stats.wallclock
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

#[derive(Debug, Clone, Copy)]
pub struct EmitOptions {
    pub format: Format,
    /// Runtime is the only wall-clock dependent column; dropping it makes the
    /// output reproducible byte for byte.
    pub runtime: bool,
}

impl Default for EmitOptions {
    fn default() -> Self {
        Self {
            format: Format::Csv,
            runtime: true,
        }
    }
}

fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

fn rate(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |r| format!("{r:.3}"))
}

pub fn emit(report: &ConvergenceReport, opts: EmitOptions, sink: &mut dyn Write) -> Result<()> {
    match opts.format {
        Format::Csv => emit_csv(report, opts, sink),
        Format::Markdown => emit_markdown(report, opts, sink),
    }
}

fn header(report: &ConvergenceReport, opts: EmitOptions) -> Vec<String> {
    let mut h = vec!["N".to_string(), "dt".into(), "errY".into()];
    h.extend((1..=report.dim).map(|c| format!("errZ_{c}")));
    h.push("picard_total".into());
    if opts.runtime {
        h.push("runtime_s".into());
    }
    h
}

fn emit_csv(report: &ConvergenceReport, opts: EmitOptions, sink: &mut dyn Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(sink);
    w.write_record(header(report, opts))?;
    for r in &report.rows {
        let mut rec = vec![r.n.to_string(), sci(r.dt), sci(r.err_y)];
        rec.extend(r.err_z.iter().map(|&e| sci(e)));
        rec.push(r.picard_total.to_string());
        if opts.runtime {
            rec.push(format!("{:.6e}", r.runtime_s));
        }
        w.write_record(&rec)?;
    }
    if !report.rows.is_empty() {
        let mut rec = vec!["CR".to_string(), String::new(), rate(report.cr_y)];
        rec.extend(report.cr_z.iter().map(|&c| rate(c)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn emit_markdown(report: &ConvergenceReport, opts: EmitOptions, sink: &mut dyn Write) -> Result<()> {
    writeln!(
        sink,
        "**{}**, scheme {}, forward {}\n",
        report.problem, report.scheme, report.forward
    )?;
    let mut h = vec!["N".to_string(), "|Y0 - Y^0|".into()];
    h.extend((1..=report.dim).map(|c| {
        if report.dim == 1 {
            "|Z0 - Z^0|".to_string()
        } else {
            format!("|Z0_{c} - Z^0_{c}|")
        }
    }));
    h.push("Picard".into());
    if opts.runtime {
        h.push("RT (s)".into());
    }
    writeln!(sink, "| {} |", h.join(" | "))?;
    writeln!(sink, "|{}", "---|".repeat(h.len()))?;
    for r in &report.rows {
        let mut c = vec![r.n.to_string(), format!("{:.2e}", r.err_y)];
        c.extend(r.err_z.iter().map(|e| format!("{e:.2e}")));
        c.push(r.picard_total.to_string());
        if opts.runtime {
            c.push(format!("{:.3}", r.runtime_s));
        }
        writeln!(sink, "| {} |", c.join(" | "))?;
    }
    if !report.rows.is_empty() {
        let mut c = vec!["**CR**".to_string(), format!("**{}**", rate(report.cr_y))];
        c.extend(report.cr_z.iter().map(|&v| format!("**{}**", rate(v))));
        c.push(String::new());
        if opts.runtime {
            c.push(String::new());
        }
        writeln!(sink, "| {} |", c.join(" | "))?;
    }
    Ok(())
}

/// Parses flat `key = value` text. Blank lines and `#` comments are skipped;
/// keys may be written with dashes or underscores.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key=value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::InvalidConfig(format!("line {}: empty key", i + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(rows: usize) -> ConvergenceReport {
        let mut r = ConvergenceReport {
            problem: "p".into(),
            scheme: "S1".into(),
            forward: "Euler".into(),
            dim: 1,
            rows: (0..rows)
                .map(|k| ConvergenceRow {
                    n: 16 << k,
                    dt: 1.0 / (16 << k) as f64,
                    err_y: 1e-3 / 2f64.powi(k as i32),
                    err_z: vec![2e-3 / 4f64.powi(k as i32)],
                    picard_total: 16 << k,
                    runtime_s: 0.0,
                })
                .collect(),
            cr_y: None,
            cr_z: vec![None],
        };
        r.fit();
        r
    }

    #[test]
    fn rates_from_exact_halving_and_quartering() {
        let dts = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
        assert!((fit_rate(&[4e-3, 2e-3, 1e-3], &dts).unwrap() - 1.0).abs() < 1e-12);
        assert!((fit_rate(&[1.6e-2, 4e-3, 1e-3], &dts).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rate_errors() {
        assert!(matches!(fit_rate(&[1.0], &[0.1]), Err(Error::InsufficientPoints(1))));
        assert!(matches!(fit_rate(&[1.0, 0.0], &[0.1, 0.05]), Err(Error::NonPositiveError(_))));
        assert!(matches!(fit_rate(&[1.0, -1.0], &[0.1, 0.05]), Err(Error::NonPositiveError(_))));
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut buf = Vec::new();
        emit(&report(0), EmitOptions::default(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "N,dt,errY,errZ_1,picard_total,runtime_s\n");
    }

    #[test]
    fn two_rows_plus_footer() {
        let r = report(2);
        assert!((r.cr_y.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.cr_z[0].unwrap() - 2.0).abs() < 1e-12);
        let mut buf = Vec::new();
        emit(&r, EmitOptions { format: Format::Csv, runtime: false }, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "16,6.250000e-2,1.000000e-3,2.000000e-3,16");
        assert_eq!(lines[3], "CR,,1.000,2.000");
    }

    #[test]
    fn markdown_has_cr_footer() {
        let mut buf = Vec::new();
        emit(&report(3), EmitOptions { format: Format::Markdown, runtime: true }, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.lines().last().unwrap().starts_with("| **CR** | **1.000** | **2.000** |"));
    }

    #[test]
    fn config_lines() {
        let m = parse_config("# c\nproblem = heston\n gh_order=12 # trailing\n\n").unwrap();
        assert_eq!(m["problem"], "heston");
        assert_eq!(m["gh-order"], "12");
        assert!(parse_config("oops").is_err());
    }
}
