use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use normqp::activeset::kkt_error;
use normqp::feasibility::{initial_point, FeasStatus};
use normqp::sparsepca::io::{parse_docword, parse_vocab};
use normqp::sparsepca::{principal_components, DataMatrix, SpcaOptions};
use normqp::trs::solve_trs_with;
use normqp::{qpmode, ActiveSetOptions, Error, KktStatus, NormQP, TrsOptions, TrsProblem};
use serde_json::{json, Value};

use crate::generate::{generate, GenSpec};
use crate::problem_file::{parse_numbers, ProblemFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "normqp", version, about = "Nonconvex QPs with a norm bound and linear inequalities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Trust-region subproblem: min ½xᵀPx + qᵀx on ‖x‖ = r (rows of A are equalities).
    Trs {
        file: PathBuf,
        /// Solve over the ball ‖x‖ ≤ r_max instead of the sphere.
        #[arg(long)]
        ball: bool,
        /// Eigenpair residual tolerance for the Krylov solver.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Retry with the dense eigensolver when the Krylov solver stalls.
        #[arg(long)]
        dense_fallback: bool,
    },
    /// Active-set solve of min ½xᵀPx + qᵀx s.t. r_min ≤ ‖x‖ ≤ r_max, Ax ≤ b.
    Solve {
        file: PathBuf,
        /// Starting point as comma- or space-separated numbers.
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Print one CSV row per iteration before the report.
        #[arg(long)]
        trace: bool,
    },
    /// Random instance with normal entries, written to stdout.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.5)]
        m_factor: f64,
        #[arg(long, default_value_t = 100.0)]
        r: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sparse principal components of a bag-of-words corpus.
    Pca {
        docword: PathBuf,
        vocab: PathBuf,
        /// Number of components.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Target number of nonzeros per component.
        #[arg(long, default_value_t = 5)]
        cardinality: usize,
        /// Restrict components to nonnegative weights.
        #[arg(long)]
        nonneg: bool,
        /// Treat words as samples and documents as variables.
        #[arg(long)]
        transpose: bool,
    },
    /// Generate, solve and report a grid of random instances as CSV.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = vec![10usize, 20, 30])]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0u64, 1, 2])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1.5)]
        m_factor: f64,
        #[arg(long, default_value_t = 100.0)]
        r: f64,
        /// Print `-` instead of timings, for reproducible output.
        #[arg(long)]
        no_time: bool,
    },
}

/// Captured result of one invocation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Output {
    fn fail(code: i32, message: impl Into<String>) -> Output {
        let mut stderr = message.into();
        stderr.push('\n');
        Output {
            code,
            stdout: String::new(),
            stderr,
        }
    }
}

pub fn run<I, T>(args: I) -> Output
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Output::fail(EXIT_USAGE, text.trim_end())
            } else {
                Output {
                    code: EXIT_OK,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    match cli.command {
        Command::Trs {
            file,
            ball,
            tol,
            dense_fallback,
        } => cmd_trs(&file, ball, tol, dense_fallback),
        Command::Solve {
            file,
            x0,
            max_iter,
            trace,
        } => cmd_solve(&file, x0.as_deref(), max_iter, trace),
        Command::Gen {
            n,
            m_factor,
            r,
            seed,
        } => cmd_gen(n, m_factor, r, seed),
        Command::Pca {
            docword,
            vocab,
            k,
            cardinality,
            nonneg,
            transpose,
        } => cmd_pca(&docword, &vocab, k, cardinality, nonneg, transpose),
        Command::Bench {
            sizes,
            seeds,
            m_factor,
            r,
            no_time,
        } => cmd_bench(&sizes, &seeds, m_factor, r, no_time),
    }
}

fn read_problem(path: &Path) -> Result<ProblemFile, Output> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Output::fail(EXIT_USAGE, format!("{}: {e}", path.display())))?;
    ProblemFile::parse(&text).map_err(|e| Output::fail(EXIT_USAGE, format!("{}:{e}", path.display())))
}

fn vec_json(x: &DVector<f64>) -> Value {
    json!(x.iter().copied().collect::<Vec<f64>>())
}

fn report(value: Value) -> String {
    let mut s = value.to_string();
    s.push('\n');
    s
}

pub fn cmd_trs(path: &Path, ball: bool, tol: f64, dense_fallback: bool) -> Output {
    let pf = match read_problem(path) {
        Ok(p) => p,
        Err(o) => return o,
    };
    if !ball && pf.r_min != pf.r_max {
        return Output::fail(EXIT_USAGE, "trs needs r_min = r_max (or --ball)");
    }
    let mut prob = TrsProblem::sphere(pf.p.clone(), pf.q.clone(), pf.r_max);
    if pf.m() > 0 {
        prob = prob.with_equalities(pf.a.clone(), pf.b.clone());
    }
    if ball {
        prob = prob.ball();
    }
    let mut opts = TrsOptions {
        arnoldi_tol: tol,
        ..Default::default()
    };
    let mut outcome = solve_trs_with(&prob, &opts);
    if dense_fallback && matches!(outcome, Err(Error::NeedsDenseFallback { .. })) {
        opts.force_dense = true;
        outcome = solve_trs_with(&prob, &opts);
    }
    let out = match outcome {
        Ok(o) => o,
        Err(e @ Error::SphereIncompatible { .. }) => {
            return Output {
                code: EXIT_INFEASIBLE,
                stdout: report(json!({"status": "infeasible", "message": e.to_string()})),
                stderr: String::new(),
            }
        }
        Err(e @ (Error::Dimension(_) | Error::NotSymmetric(_) | Error::InvalidInput(_))) => {
            return Output::fail(EXIT_USAGE, format!("{}: {e}", path.display()))
        }
        Err(e) => return Output::fail(EXIT_SOLVER, e.to_string()),
    };
    let points: Vec<Value> = out.global_points.iter().map(vec_json).collect();
    let objectives: Vec<f64> = out.global_points.iter().map(|x| prob.objective(x)).collect();
    let value = json!({
        "kind": out.kind.as_str(),
        "points": points,
        "objectives": objectives,
        "multiplier": out.global_multiplier,
        "local_point": out.local_point.as_ref().map(vec_json),
        "local_multiplier": out.local_multiplier,
        "stationarity_residual": out.diagnostics.stationarity_residual,
        "norm_errors": out.global_points.iter().map(|x| (x.norm() - pf.r_max).abs()).collect::<Vec<_>>(),
        "dense": out.diagnostics.used_dense,
    });
    Output {
        code: EXIT_OK,
        stdout: report(value),
        stderr: String::new(),
    }
}

pub fn cmd_solve(path: &Path, x0_arg: Option<&str>, max_iter: Option<usize>, trace: bool) -> Output {
    let pf = match read_problem(path) {
        Ok(p) => p,
        Err(o) => return o,
    };
    let prob = match pf.to_problem() {
        Ok(p) => p,
        Err(e) => return Output::fail(EXIT_USAGE, format!("{}: {e}", path.display())),
    };
    let mut feasibility = Value::Null;
    let (x0, start) = if let Some(s) = x0_arg {
        match parse_numbers(s, 1) {
            Ok(v) if v.len() == prob.n() => (DVector::from_vec(v), "flag"),
            Ok(v) => {
                return Output::fail(
                    EXIT_USAGE,
                    format!("--x0 has {} entries, expected {}", v.len(), prob.n()),
                )
            }
            Err(e) => return Output::fail(EXIT_USAGE, format!("--x0: {}", e.message)),
        }
    } else if let Some(x) = &pf.x0 {
        (x.clone(), "file")
    } else {
        let res = match initial_point(&prob.a, &prob.b, prob.r_min, prob.r_max) {
            Ok(r) => r,
            Err(e) => return Output::fail(EXIT_SOLVER, e.to_string()),
        };
        feasibility = json!(res.status.as_str());
        match res.status {
            FeasStatus::Feasible(x) => (x, "feasibility"),
            status => {
                return Output {
                    code: EXIT_INFEASIBLE,
                    stdout: report(json!({"status": status.as_str(), "feasibility": status.as_str()})),
                    stderr: String::new(),
                }
            }
        }
    };

    let opts = ActiveSetOptions {
        max_iter,
        ..Default::default()
    };
    let mut rows = String::new();
    if trace {
        rows.push_str("iter,ws_size,f,step_type,kkt_err\n");
    }
    let result = qpmode::solve_traced(&prob, &x0, &[], &opts, &mut |e| {
        if trace {
            let _ = writeln!(
                rows,
                "{},{},{:?},{},{:?}",
                e.iter,
                e.working_set.len() + usize::from(e.norm_active),
                e.objective,
                e.step.as_str(),
                e.kkt_err
            );
        }
    });
    let sol = match result {
        Ok((p, _)) => p,
        Err(e @ Error::InfeasibleStart(_)) => {
            return Output {
                code: EXIT_INFEASIBLE,
                stdout: report(json!({"status": "infeasible_start", "message": e.to_string()})),
                stderr: String::new(),
            }
        }
        Err(e) => return Output::fail(EXIT_SOLVER, e.to_string()),
    };
    let err = kkt_error(&prob, &sol.x, &sol.kappa, sol.mu).total();
    let value = json!({
        "status": sol.status.as_str(),
        "objective": sol.objective,
        "kkt_error": err,
        "max_violation": prob.max_violation(&sol.x),
        "mu": sol.mu,
        "iterations": sol.iterations,
        "working_set": sol.working_set,
        "x": vec_json(&sol.x),
        "start": start,
        "feasibility": feasibility,
    });
    rows.push_str(&report(value));
    Output {
        code: if sol.status == KktStatus::Optimal { EXIT_OK } else { EXIT_SOLVER },
        stdout: rows,
        stderr: String::new(),
    }
}

pub fn cmd_gen(n: usize, m_factor: f64, r: f64, seed: u64) -> Output {
    if n < 2 {
        return Output::fail(EXIT_USAGE, "--n must be at least 2");
    }
    if !(m_factor >= 0.0 && m_factor.is_finite()) || !(r > 0.0 && r.is_finite()) {
        return Output::fail(EXIT_USAGE, "--m-factor must be ≥ 0 and --r positive");
    }
    let spec = GenSpec {
        n,
        m_factor,
        r,
        seed,
    };
    Output {
        code: EXIT_OK,
        stdout: generate(&spec).print(),
        stderr: String::new(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Output> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Output::fail(EXIT_USAGE, format!("{}: {e}", path.display())))
}

pub fn cmd_pca(
    docword: &Path,
    vocab: &Path,
    k: usize,
    cardinality: usize,
    nonneg: bool,
    transpose: bool,
) -> Output {
    let parsed = open(docword).and_then(|r| {
        parse_docword(r).map_err(|e| Output::fail(EXIT_USAGE, format!("{}: {e}", docword.display())))
    });
    let dw = match parsed {
        Ok(d) => d,
        Err(o) => return o,
    };
    let tokens = match open(vocab).and_then(|r| {
        parse_vocab(r, dw.words).map_err(|e| Output::fail(EXIT_USAGE, format!("{}: {e}", vocab.display())))
    }) {
        Ok(t) => t,
        Err(o) => return o,
    };
    let data = DataMatrix::from_triplets(dw.docs, dw.words, &dw.entries, true)
        .and_then(|d| if transpose { d.transposed() } else { Ok(d) });
    let data = match data {
        Ok(d) => d,
        Err(e) => return Output::fail(EXIT_USAGE, e.to_string()),
    };
    let names: Vec<String> = if transpose {
        (1..=dw.docs).map(|i| format!("doc{i}")).collect()
    } else {
        tokens
    };
    if k == 0 {
        return Output::fail(EXIT_USAGE, "--k must be positive");
    }
    if cardinality == 0 || cardinality > data.variables() {
        return Output::fail(
            EXIT_USAGE,
            format!("--cardinality must be in 1..={}", data.variables()),
        );
    }
    let opts = SpcaOptions {
        nonneg,
        ..Default::default()
    };
    let comps = match principal_components(&data, k, cardinality, &opts) {
        Ok(c) => c,
        Err(e) => return Output::fail(EXIT_SOLVER, e.to_string()),
    };
    let mut out = String::from("component,rank,token,weight,variance\n");
    let mut notes = String::new();
    for (c, comp) in comps.iter().enumerate() {
        let mut idx = normqp::sparsepca::support(&comp.x);
        idx.sort_by(|&i, &j| comp.x[j].abs().total_cmp(&comp.x[i].abs()).then(i.cmp(&j)));
        for (rank, &j) in idx.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6}",
                c + 1,
                rank + 1,
                names[j],
                comp.x[j],
                comp.variance
            );
        }
        if !comp.attained {
            let _ = writeln!(
                notes,
                "component {}: cardinality {cardinality} not attained (got {})",
                c + 1,
                idx.len()
            );
        }
    }
    Output {
        code: EXIT_OK,
        stdout: out,
        stderr: notes,
    }
}

/// One benchmark instance: `(feasibility seconds, solve seconds, row fields)`.
struct BenchRow {
    feas_time: f64,
    time: Option<f64>,
    objective: Option<f64>,
    kkt: Option<f64>,
    violation: Option<f64>,
    status: String,
}

fn bench_one(prob: &NormQP) -> BenchRow {
    let t0 = Instant::now();
    let feas = initial_point(&prob.a, &prob.b, prob.r_min, prob.r_max);
    let feas_time = t0.elapsed().as_secs_f64();
    let x0 = match feas {
        Ok(r) => match r.status {
            FeasStatus::Feasible(x) => x,
            s => {
                return BenchRow {
                    feas_time,
                    time: None,
                    objective: None,
                    kkt: None,
                    violation: None,
                    status: s.as_str().to_string(),
                }
            }
        },
        Err(e) => {
            return BenchRow {
                feas_time,
                time: None,
                objective: None,
                kkt: None,
                violation: None,
                status: format!("error: {e}"),
            }
        }
    };
    let t1 = Instant::now();
    let res = qpmode::solve(prob, &x0, &ActiveSetOptions::default());
    let time = t1.elapsed().as_secs_f64();
    match res {
        Ok(sol) => BenchRow {
            feas_time,
            time: Some(time),
            objective: Some(sol.objective),
            kkt: Some(kkt_error(prob, &sol.x, &sol.kappa, sol.mu).total()),
            violation: Some(prob.max_violation(&sol.x)),
            status: sol.status.as_str().to_string(),
        },
        Err(e) => BenchRow {
            feas_time,
            time: Some(time),
            objective: None,
            kkt: None,
            violation: None,
            status: format!("error: {e}"),
        },
    }
}

pub fn cmd_bench(sizes: &[usize], seeds: &[u64], m_factor: f64, r: f64, no_time: bool) -> Output {
    if sizes.iter().any(|&n| n < 2) {
        return Output::fail(EXIT_USAGE, "--sizes entries must be at least 2");
    }
    let mut grid: Vec<(usize, u64)> = sizes
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    grid.sort_unstable();
    grid.dedup();
    let fmt_opt = |v: Option<f64>, f: &dyn Fn(f64) -> String| v.map_or(String::new(), f);
    let mut out = String::from("n,seed,time,feas_time,f,kkt_err,max_feas_violation,status\n");
    let mut feasible = 0;
    for &(n, seed) in &grid {
        let spec = GenSpec {
            n,
            m_factor,
            r,
            seed,
        };
        let row = match generate(&spec).to_problem() {
            Ok(p) => bench_one(&p),
            Err(e) => return Output::fail(EXIT_USAGE, e.to_string()),
        };
        if row.time.is_some() {
            feasible += 1;
        }
        let time = |t: Option<f64>| {
            if no_time {
                "-".to_string()
            } else {
                fmt_opt(t, &|v| format!("{v:.6}"))
            }
        };
        let _ = writeln!(
            out,
            "{n},{seed},{},{},{},{},{},{}",
            time(row.time),
            time(Some(row.feas_time)),
            fmt_opt(row.objective, &|v| format!("{v:.12e}")),
            fmt_opt(row.kkt, &|v| format!("{v:.3e}")),
            fmt_opt(row.violation, &|v| format!("{v:.3e}")),
            row.status
        );
    }
    let _ = writeln!(out, "# feasible {feasible}/{}", grid.len());
    Output {
        code: EXIT_OK,
        stdout: out,
        stderr: String::new(),
    }
}
