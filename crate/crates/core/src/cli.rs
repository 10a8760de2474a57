//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 assumption unverifiable,
//! 4 budget exceeded (including non-convergence within the iteration limit),
//! 1 any other failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::invariance::{cmax_p_co, max_invariant_set, max_rcis_preview, pre_k, InvariantOptions, InvariantResult};
use crate::io::{read_system, read_versioned, write_versioned, LoadedSystem};
use crate::models::build_1d;
use crate::mpc::{feasible_domain, sample_disturbances, simulate_batch, theorem9_certificate, MpcConfig, Rfc};
use crate::polytope::{hausdorff_nested, HPolytope};
use crate::regret::{
    algorithm1, algorithm2, algorithm3, true_dp, ConvergenceReport, RegretCertificate, RegretInputs, DEFAULT_K_MAX,
    DEFAULT_LADDER_TAU, TRUE_DP_BUDGET,
};
use crate::systems::{collaborative, Dynamics, LinearSystem};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

pub const THREADS_ENV: &str = "PREVIEW_REGRET_THREADS";
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Parser)]
#[command(name = "preview-regret", version, about = "Invariant sets with disturbance preview and safety-regret bounds")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgChoice {
    #[value(name = "1")]
    One,
    #[value(name = "1r")]
    OneRefined,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RfcChoice {
    Terminal,
    None,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Maximal robust controlled invariant set, with or without preview.
    Rcis {
        system: PathBuf,
        #[arg(long, default_value_t = 0)]
        preview: usize,
        /// Compute the set of the disturbance-collaborative system instead.
        #[arg(long)]
        collaborative: bool,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Safety-regret bounds from the three estimation algorithms.
    Regret {
        system: PathBuf,
        #[arg(long, default_value_t = 1)]
        p0: usize,
        #[arg(long, default_value_t = 8)]
        p_max: usize,
        #[arg(long, value_enum, default_value = "all")]
        alg: AlgChoice,
        /// Step sizes for the controllable-case certificate; several values
        /// give a sweep whose pointwise minimum is reported.
        #[arg(long = "N", value_delimiter = ',')]
        n_steps: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_K_MAX)]
        kmax: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Largest `n + p·l` for which the true regret is computed.
        #[arg(long, default_value_t = TRUE_DP_BUDGET)]
        budget: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Preview-MPC feasible domains, their convergence bound and closed-loop
    /// simulation.
    Mpc {
        system: PathBuf,
        /// Terminal set file, or `auto` for the maximal RCIS without preview.
        #[arg(long, default_value = "auto")]
        terminal: String,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, default_value_t = 10)]
        p_max: usize,
        /// Closed-loop steps per run; 0 skips simulation.
        #[arg(long, default_value_t = 0)]
        simulate: usize,
        #[arg(long, default_value_t = 1)]
        streams: usize,
        #[arg(long, value_delimiter = ',')]
        x0: Vec<f64>,
        #[arg(long, value_enum, default_value = "terminal")]
        rfc: RfcChoice,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// The scalar example against its closed forms.
    #[command(name = "demo-1d")]
    Demo1d {
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        #[arg(long, default_value_t = 10.0)]
        x_bar: f64,
        #[arg(long, default_value_t = 1.0)]
        u_bar: f64,
        #[arg(long, default_value_t = 0.5)]
        d_bar: f64,
        #[arg(long, default_value_t = 1)]
        p0: usize,
        #[arg(long, default_value_t = 6)]
        p_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Maps an error onto the documented exit codes.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_)
        | Error::DimensionMismatch(_)
        | Error::NormalForm { .. }
        | Error::NotInvariant { .. }
        | Error::EmptySet => EXIT_INPUT,
        Error::AssumptionUnverifiable(_) | Error::NotControllable(_) | Error::NotStabilizable => EXIT_ASSUMPTION,
        Error::BudgetExceeded { .. } | Error::RowLimit { .. } | Error::DimensionLimit { .. } => EXIT_BUDGET,
        _ => EXIT_FAILURE,
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    configure_threads();
    let result = match cli.cmd {
        Command::Rcis { system, preview, collaborative, max_iter, tol, seed, out } => {
            cmd_rcis(&system, preview, collaborative, max_iter, tol, seed, &out)
        }
        Command::Regret { system, p0, p_max, alg, n_steps, kmax, seed, budget, out } => {
            cmd_regret(&system, p0, p_max, alg, &n_steps, kmax, seed, budget, &out)
        }
        Command::Mpc { system, terminal, p, p_max, simulate, streams, x0, rfc, seed, out } => {
            cmd_mpc(&system, &terminal, p, p_max, simulate, streams, &x0, rfc, seed, &out)
        }
        Command::Demo1d { a, x_bar, u_bar, d_bar, p0, p_max, out } => cmd_demo_1d(a, x_bar, u_bar, d_bar, p0, p_max, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("{}: {e}", path.display()))
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))
}

fn load(system: &Path, seed: Option<u64>) -> Result<LoadedSystem> {
    read_system(system, seed)
}

fn opts(max_iter: usize, tol: f64) -> InvariantOptions {
    InvariantOptions { max_iter, tol, ..InvariantOptions::default() }
}

fn cmax_co(sys: &LinearSystem, o: &InvariantOptions) -> Result<InvariantResult> {
    let co = collaborative(sys);
    max_invariant_set(&co, &co.s, o)
}

#[derive(Serialize)]
struct RcisSummary {
    preview: usize,
    collaborative: bool,
    dim: usize,
    converged: bool,
    iterations: usize,
    empty: bool,
    rows: usize,
}

fn cmd_rcis(system: &Path, preview: usize, collab: bool, max_iter: usize, tol: f64, seed: Option<u64>, out: &Path) -> Result<i32> {
    let loaded = load(system, seed)?;
    let sys = &loaded.system;
    let o = opts(max_iter, tol);
    let res = if collab {
        let base = cmax_co(sys, &o)?;
        let set = cmax_p_co(sys, preview, &base.set)?;
        InvariantResult { set, converged: base.converged, iterations: base.iterations }
    } else if preview == 0 {
        max_invariant_set(sys, &sys.s_xu, &o)?
    } else {
        let base = cmax_co(sys, &o)?;
        let warm = base.converged.then_some(&base.set);
        max_rcis_preview(sys, preview, warm, &o)?
    };
    let empty = res.set.is_empty()?;
    prepare_out(out)?;
    write_versioned(&out.join("rcis.json"), &res.set)?;
    let summary = RcisSummary {
        preview,
        collaborative: collab,
        dim: res.set.dim(),
        converged: res.converged,
        iterations: res.iterations,
        empty,
        rows: res.set.num_rows(),
    };
    write_versioned(&out.join("summary.json"), &summary)?;
    println!(
        "rcis: dim {} rows {} iterations {} converged {}{}",
        summary.dim,
        summary.rows,
        summary.iterations,
        summary.converged,
        if empty { " (empty)" } else { "" }
    );
    Ok(if res.converged { EXIT_OK } else { EXIT_BUDGET })
}

#[derive(Serialize)]
struct CertificateFile<'a> {
    c_max_co_converged: bool,
    certificates: &'a [RegretCertificate],
    failures: &'a [(String, String)],
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

fn p_bar_str(r: Option<&ConvergenceReport>) -> String {
    match r {
        Some(r) => r.p_bar.map(|p| p.to_string()).unwrap_or_else(|| "inf".into()),
        None => String::new(),
    }
}

/// Upper bound on `d_p` read off the ladder of algorithm 3.
fn ladder_bound(r: &ConvergenceReport, p: usize) -> Option<f64> {
    let k = p.checked_sub(r.p0)?;
    match r.distances.get(k) {
        Some(&d) => Some(d),
        None => r.p_bar.map(|_| 0.0),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_regret(
    system: &Path,
    p0: usize,
    p_max: usize,
    alg: AlgChoice,
    n_steps: &[usize],
    kmax: usize,
    seed: Option<u64>,
    budget: usize,
    out: &Path,
) -> Result<i32> {
    if p_max < p0 {
        return Err(Error::InvalidInput(format!("--p-max {p_max} is below --p0 {p0}")));
    }
    let loaded = load(system, seed)?;
    let sys = &loaded.system;
    let n = sys.n();
    let o = InvariantOptions::default();
    let cco = cmax_co(sys, &o)?;
    if cco.set.is_empty()? {
        return Err(Error::AssumptionUnverifiable("C_max,co is empty".into()));
    }
    let c_p0 = max_rcis_preview(sys, p0, Some(&cco.set), &o)?;
    if c_p0.set.is_empty()? {
        return Err(Error::AssumptionUnverifiable(format!("C_max,{p0} is empty")));
    }
    let proj = match c_p0.set.project_auto(n) {
        Ok(p) => Some(p),
        Err(Error::RowLimit { .. }) => None,
        Err(e) => return Err(e),
    };
    let inp = RegretInputs { sys, c_max_co: &cco.set, c_max_p0: &c_p0.set, p0, projection: proj.as_ref() };
    let want = |a: AlgChoice| alg == a || alg == AlgChoice::All;
    let ns: Vec<usize> = if n_steps.is_empty() { vec![n] } else { n_steps.to_vec() };

    let mut certs: Vec<RegretCertificate> = Vec::new();
    let mut failures: Vec<(String, String)> = Vec::new();
    let mut record = |label: String, r: Result<RegretCertificate>| match r {
        Ok(mut c) => {
            if !cco.converged || !c_p0.converged {
                c.mark_outer_approximate();
            }
            certs.push(c);
        }
        Err(e) => {
            eprintln!("{label}: {e}");
            failures.push((label, e.to_string()));
        }
    };
    if want(AlgChoice::One) {
        record("alg1".into(), algorithm1(&inp, false));
    }
    if want(AlgChoice::OneRefined) {
        record("alg1_refined".into(), algorithm1(&inp, true));
    }
    if want(AlgChoice::Two) {
        for &k in &ns {
            record(format!("alg2_N{k}"), algorithm2(&inp, k));
        }
    }
    let report = if want(AlgChoice::Three) {
        match &proj {
            Some(p) => match algorithm3(sys, &cco.set, p, p0, kmax, DEFAULT_LADDER_TAU) {
                Ok(r) => Some(r),
                Err(e) => {
                    eprintln!("alg3: {e}");
                    failures.push(("alg3".into(), e.to_string()));
                    None
                }
            },
            None => {
                failures.push(("alg3".into(), "projection of C_max,p0 unavailable".into()));
                None
            }
        }
    } else {
        None
    };

    let ps: Vec<usize> = (p0..=p_max).collect();
    let truths: Vec<Option<f64>> = ps
        .par_iter()
        .map(|&p| match true_dp(sys, p, &cco.set, budget) {
            Ok(v) => Some(v),
            Err(Error::BudgetExceeded { .. }) => None,
            Err(e) => {
                eprintln!("true d_p at p = {p}: {e}");
                None
            }
        })
        .collect();

    prepare_out(out)?;
    let path = out.join("bounds.csv");
    let mut wr = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    wr.write_record(["p", "true_dp", "bound_alg1", "bound_alg1_refined", "bound_alg2", "bound_alg3", "bound_envelope", "p_bar"])
        .map_err(|e| io_err(&path, e))?;
    let pick = |m: crate::regret::CertificateMethod, p: usize| -> Option<f64> {
        certs.iter().filter(|c| c.method == m).filter_map(|c| c.bound_dp(p).ok()).reduce(f64::min)
    };
    use crate::regret::CertificateMethod as M;
    for (i, &p) in ps.iter().enumerate() {
        let b1 = pick(M::Alg1, p);
        let b1r = pick(M::Alg1Refined, p);
        let b2 = pick(M::Alg2, p);
        let b3 = report.as_ref().and_then(|r| ladder_bound(r, p));
        let env = [b1, b1r, b2, b3].into_iter().flatten().reduce(f64::min);
        wr.write_record([
            p.to_string(),
            fmt_opt(truths[i]),
            fmt_opt(b1),
            fmt_opt(b1r),
            fmt_opt(b2),
            fmt_opt(b3),
            fmt_opt(env),
            p_bar_str(report.as_ref()),
        ])
        .map_err(|e| io_err(&path, e))?;
    }
    wr.flush().map_err(|e| io_err(&path, e))?;
    write_versioned(
        &out.join("certificates.json"),
        &CertificateFile { c_max_co_converged: cco.converged, certificates: &certs, failures: &failures },
    )?;
    write_versioned(&out.join("c_max_co.json"), &cco.set)?;
    if let Some(r) = &report {
        write_versioned(&out.join("algorithm3.json"), r)?;
    }
    println!(
        "regret: {} certificate(s), {} failure(s), p_bar {}",
        certs.len(),
        failures.len(),
        p_bar_str(report.as_ref())
    );
    Ok(if certs.is_empty() && report.is_none() { EXIT_ASSUMPTION } else { EXIT_OK })
}

#[derive(Serialize)]
struct SimSummary {
    runs: usize,
    steps: usize,
    infeasible_steps: usize,
    rejected_starts: usize,
}

#[derive(Serialize)]
struct DomainFile<'a> {
    p: usize,
    projection: &'a HPolytope,
    full: Option<&'a HPolytope>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_mpc(
    system: &Path,
    terminal: &str,
    p: usize,
    p_max: usize,
    simulate: usize,
    streams: usize,
    x0: &[f64],
    rfc: RfcChoice,
    seed: Option<u64>,
    out: &Path,
) -> Result<i32> {
    let loaded = load(system, seed)?;
    let sys = &loaded.system;
    let n = sys.n();
    let c = if terminal == "auto" {
        max_invariant_set(sys, &sys.s_xu, &InvariantOptions::default())?.set
    } else {
        read_versioned::<HPolytope>(Path::new(terminal))?
    };
    let x0 = if x0.is_empty() { DVector::zeros(n) } else { DVector::from_vec(x0.to_vec()) };
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!("--x0 needs {n} entries")));
    }
    let fd = feasible_domain(sys, &c, p, true)?;
    let cco = cmax_co(sys, &InvariantOptions::default())?;
    let cert = theorem9_certificate(sys, &c, &cco.set);

    prepare_out(out)?;
    write_versioned(&out.join("terminal.json"), &c)?;
    write_versioned(&out.join("feasible_domain.json"), &DomainFile { p, projection: &fd.projection, full: fd.full.as_ref() })?;
    let co = collaborative(sys);
    let path = out.join("convergence.csv");
    let mut wr = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    wr.write_record(["p", "gap", "bound"]).map_err(|e| io_err(&path, e))?;
    let mut proj = c.clone();
    for q in 0..=p_max {
        if q > 0 {
            proj = pre_k(&co, &proj, &co.s, 1)?.remove_redundancy()?;
        }
        let gap = hausdorff_nested(&proj, &cco.set).ok();
        let bound = cert.as_ref().ok().and_then(|ct| ct.bound_dp(q).ok());
        wr.write_record([q.to_string(), fmt_opt(gap), fmt_opt(bound)]).map_err(|e| io_err(&path, e))?;
    }
    wr.flush().map_err(|e| io_err(&path, e))?;
    match &cert {
        Ok(ct) => write_versioned(&out.join("convergence.json"), ct)?,
        Err(e) => eprintln!("convergence certificate: {e}"),
    }

    if simulate > 0 {
        let mut cfg = MpcConfig::new(sys, p, c.clone());
        if rfc == RfcChoice::None {
            cfg.rfc = Rfc::None;
        }
        let base = seed.unwrap_or(DEFAULT_SEED);
        let ds: Vec<Vec<DVector<f64>>> = (0..streams)
            .map(|k| sample_disturbances(&sys.d, simulate + p, base.wrapping_add(k as u64)))
            .collect::<Result<_>>()?;
        let runs = simulate_batch(sys, &cfg, &x0, &ds, simulate);
        let mut summary = SimSummary { runs: streams, steps: simulate, infeasible_steps: 0, rejected_starts: 0 };
        for (k, r) in runs.iter().enumerate() {
            match r {
                Ok(tr) => {
                    summary.infeasible_steps += tr.infeasible_steps();
                    let path = out.join(format!("trajectory_{k:03}.csv"));
                    let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
                    tr.write_csv(f)?;
                }
                Err(Error::InvalidInput(_)) => summary.rejected_starts += 1,
                Err(e) => return Err(e.clone()),
            }
        }
        write_versioned(&out.join("simulation.json"), &summary)?;
        println!(
            "mpc: {} run(s) of {} steps, {} infeasible step(s), {} rejected start(s)",
            summary.runs, summary.steps, summary.infeasible_steps, summary.rejected_starts
        );
    }
    println!("mpc: feasible-domain projection with {} rows written", fd.projection.num_rows());
    Ok(EXIT_OK)
}

fn cmd_demo_1d(a: f64, x_bar: f64, u_bar: f64, d_bar: f64, p0: usize, p_max: usize, out: Option<&Path>) -> Result<i32> {
    let (sys, oracle) = build_1d(a, x_bar, u_bar, d_bar)?;
    let o = InvariantOptions::default();
    let cco = cmax_co(&sys, &o)?.set;
    let c_p0 = max_rcis_preview(&sys, p0, Some(&cco), &o)?.set;
    let proj = c_p0.project_auto(1)?;
    let inp = RegretInputs { sys: &sys, c_max_co: &cco, c_max_p0: &c_p0, p0, projection: Some(&proj) };
    let cert = algorithm2(&inp, 1)?;
    let ladder = algorithm3(&sys, &cco, &proj, p0, DEFAULT_K_MAX, DEFAULT_LADDER_TAU)?;
    let bb = cco.bounding_box()?;
    println!("C_max,co = [{:.12}, {:.12}]  (closed form ±{})", bb.lower[0], bb.upper[0], oracle.cmax_co());
    println!("lambda0 = {:.12} (closed form {:.12}), gamma_max = {:.12} (closed form {})", cert.lambda0, oracle.lambda0(p0)?, cert.gamma, oracle.gamma_max());
    println!("p_bar = {}", p_bar_str(Some(&ladder)));
    println!("{:>3} {:>16} {:>16} {:>16} {:>16} {:>16}", "p", "closed-form d_p", "computed d_p", "alg2 bound", "alg3 distance", "projection");
    let rows: Vec<(usize, f64, f64, f64, Option<f64>, f64)> = (p0..=p_max)
        .into_par_iter()
        .map(|p| {
            let t = true_dp(&sys, p, &cco, usize::MAX)?;
            let pb = max_rcis_preview(&sys, p, Some(&cco), &o)?.set.project_auto(1)?.bounding_box()?;
            Ok((p, oracle.dp(p)?, t, cert.bound_dp(p)?, ladder_bound(&ladder, p), pb.upper[0]))
        })
        .collect::<Result<_>>()?;
    for (p, exact, t, b, l, hi) in &rows {
        println!("{p:>3} {exact:>16.12} {t:>16.12} {b:>16.12} {:>16} {hi:>16.12}", l.map(|v| format!("{v:.12}")).unwrap_or_default());
    }
    if let Some(out) = out {
        prepare_out(out)?;
        let path = out.join("demo_1d.csv");
        let mut wr = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        wr.write_record(["p", "closed_form_dp", "true_dp", "bound_alg2", "bound_alg3", "proj_upper"]).map_err(|e| io_err(&path, e))?;
        for (p, exact, t, b, l, hi) in &rows {
            wr.write_record([p.to_string(), fmt_opt(Some(*exact)), fmt_opt(Some(*t)), fmt_opt(Some(*b)), fmt_opt(*l), fmt_opt(Some(*hi))])
                .map_err(|e| io_err(&path, e))?;
        }
        wr.flush().map_err(|e| io_err(&path, e))?;
    }
    Ok(EXIT_OK)
}
