//! The `reachck` command-line driver.
//!
//! Exit codes: 0 on success, 1 when any diagnostic or audit violation is
//! reported, 2 on usage errors (bad flags, unreadable files).

use crate::eval::{dynamic_check, AuditOutcome, RunnableProgram};
use crate::front::parser::parse_program;
use crate::front::pretty::{pretty_qual, pretty_type};
use crate::infer::{typecheck_program, DeclKind, Diagnostic, ProgramReport};
use crate::stats;
use crate::syntax::{display_name, Obs};
use clap::Parser as ClapParser;
use serde_json::{json, Value as Json};
use std::path::PathBuf;
use std::time::Instant;

#[derive(ClapParser, Debug)]
#[command(name = "reachck", version, about = "Reachability type checker for .rt files")]
struct Args {
    /// Source files to check.
    #[arg(value_name = "FILE")]
    files: Vec<PathBuf>,

    /// Emit one JSON object per declaration instead of text.
    #[arg(long)]
    emit_json: bool,

    /// Evaluate accepted programs and audit dynamic reachability.
    #[arg(long)]
    eval: bool,

    /// Print per-declaration results and inference statistics.
    #[arg(long)]
    trace: bool,

    /// Evaluation fuel.
    #[arg(long, default_value_t = 1_000_000)]
    fuel: u64,

    /// Prelude path; defaults to $REACHCK_PRELUDE, then the bundled one.
    #[arg(long)]
    prelude: Option<PathBuf>,

    /// Check files without any prelude.
    #[arg(long)]
    no_prelude: bool,

    /// Run the scaling benchmark family and print size/time pairs.
    #[arg(long)]
    bench: bool,

    /// Check independent files concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            // clap prints --help/--version on stdout with success.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };

    if args.bench {
        run_bench();
        if args.files.is_empty() {
            return 0;
        }
    }

    if args.files.is_empty() && !args.bench {
        eprintln!("error: no input files (see --help)");
        return 2;
    }

    let prelude_src = if args.no_prelude {
        None
    } else if let Some(path) = &args.prelude {
        match std::fs::read_to_string(path) {
            Ok(s) => Some(s),
            Err(e) => {
                eprintln!("error: cannot read prelude {}: {e}", path.display());
                return 2;
            }
        }
    } else if let Ok(path) = std::env::var("REACHCK_PRELUDE") {
        match std::fs::read_to_string(&path) {
            Ok(s) => Some(s),
            Err(e) => {
                eprintln!("error: cannot read prelude {path}: {e}");
                return 2;
            }
        }
    } else {
        Some(crate::front::BUNDLED_PRELUDE.to_string())
    };

    let mut sources = Vec::new();
    for path in &args.files {
        match std::fs::read_to_string(path) {
            Ok(s) => sources.push((path.clone(), s)),
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return 2;
            }
        }
    }

    let prelude_ref = prelude_src.as_deref();
    let args_ref = &args;
    let outputs: Vec<(String, bool)> = if args.jobs > 1 && sources.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = sources
                .iter()
                .map(|(p, s)| scope.spawn(move || check_one(p, s, prelude_ref, args_ref)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    } else {
        sources.iter().map(|(p, s)| check_one(p, s, prelude_ref, args_ref)).collect()
    };

    let mut ok = true;
    for (text, success) in outputs {
        print!("{text}");
        ok &= success;
    }
    if ok {
        0
    } else {
        1
    }
}

fn obs_text(obs: &Obs) -> String {
    let mut parts: Vec<String> = obs.iter().map(|v| display_name(v).to_string()).collect();
    parts.sort();
    format!("{{{}}}", parts.join(","))
}

fn check_one(path: &PathBuf, src: &str, prelude: Option<&str>, args: &Args) -> (String, bool) {
    use std::fmt::Write;
    let mut out = String::new();
    stats::reset();

    let start = Instant::now();
    let parsed = parse_program(prelude, src);
    let (decls, report) = match parsed {
        Ok(decls) => {
            let report = typecheck_program(&decls);
            (decls, report)
        }
        Err(d) => (
            Vec::new(),
            ProgramReport { rows: Vec::new(), diagnostic: Some(d), final_qt: None },
        ),
    };
    let elapsed = start.elapsed();

    let mut ok = report.ok();
    if args.emit_json {
        for row in report.rows.iter().filter(|r| !r.prelude) {
            let o = json!({
                "schema": 1,
                "name": display_name(&row.name),
                "type": pretty_type(&row.qt.ty),
                "qualifier": pretty_qual(&row.qt.qual),
                "filter": obs_text(&row.filter),
                "status": "ok",
                "diagnostics": [],
            });
            let _ = writeln!(out, "{o}");
        }
        if let Some(d) = &report.diagnostic {
            let o = json!({
                "schema": 1,
                "name": Json::Null,
                "type": Json::Null,
                "qualifier": Json::Null,
                "filter": Json::Null,
                "status": "error",
                "diagnostics": [diag_json(d)],
            });
            let _ = writeln!(out, "{o}");
        }
    } else {
        let _ = writeln!(out, "{}:", path.display());
        for row in report.rows.iter().filter(|r| !r.prelude) {
            let _ = writeln!(
                out,
                "  {} : {}",
                display_name(&row.name),
                crate::front::pretty::pretty_qualtype(&row.qt)
            );
            if args.trace {
                let _ = writeln!(out, "    filter {}", obs_text(&row.filter));
            }
        }
        match &report.diagnostic {
            None => {
                let _ = writeln!(out, "  ok");
            }
            Some(d) => {
                let _ = writeln!(out, "  error at {}..{}: {d}", d.span.start, d.span.end);
            }
        }
        if args.trace {
            let _ = writeln!(
                out,
                "  checked in {:.2?}; unifications {}, inferences {}",
                elapsed,
                stats::unifications(),
                stats::inferences()
            );
        }
    }

    if args.eval && report.ok() {
        let decls_for_eval: Vec<(String, Option<&crate::syntax::Term>)> = report
            .rows
            .iter()
            .zip(decls.iter())
            .map(|(row, d)| {
                (row.name.clone(), if d.kind == DeclKind::Assume { None } else { d.term.as_ref() })
            })
            .collect();
        let outcome = dynamic_check(
            &RunnableProgram { decls: decls_for_eval },
            &report,
            args.fuel,
        );
        match outcome {
            AuditOutcome::Passed(audits) => {
                let _ = writeln!(out, "  eval: ok ({} declarations audited)", audits.len());
            }
            AuditOutcome::OutOfFuel => {
                let _ = writeln!(out, "  eval: inconclusive (out of fuel)");
            }
            AuditOutcome::NotChecked => {}
            AuditOutcome::Violations(audits) => {
                ok = false;
                for a in audits.iter().filter(|a| !a.ok()) {
                    let _ = writeln!(
                        out,
                        "  eval: AUDIT VIOLATION at `{}`: {}",
                        display_name(&a.name),
                        a.detail.clone().unwrap_or_default()
                    );
                }
            }
        }
    }

    (out, ok)
}

fn diag_json(d: &Diagnostic) -> Json {
    json!({
        "code": d.code.as_str(),
        "message": d.message,
        "rule": d.rule,
        "span": { "start": d.span.start, "end": d.span.end },
        "expected": d.expected,
        "actual": d.actual,
    })
}

/// The scaling family: `n` chained allocations followed by `n` identity
/// applications over Church-style polymorphic functions. Both the term
/// size and the context depth grow with `n`, so each later declaration
/// pays for lookups and saturation over a longer context.
pub fn bench_program(n: usize) -> String {
    let mut src = String::new();
    src.push_str("def id(x: Ref[Unit]^{*}) = x;\n");
    src.push_str("val r0 = ref unit;\n");
    for i in 1..=n {
        src.push_str(&format!("val r{i} = id r{};\n", i - 1));
    }
    for i in 1..=n {
        src.push_str(&format!("val u{i} = id r{i};\n"));
    }
    src.push_str("unit\n");
    src
}

fn run_bench() {
    println!("size\tms");
    for &n in &[8usize, 16, 32, 64, 128] {
        let src = bench_program(n);
        // Warm-up plus timed runs.
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let start = Instant::now();
            let decls = parse_program(None, &src).expect("bench parses");
            let report = typecheck_program(&decls);
            assert!(report.ok(), "bench program must check");
            best = best.min(start.elapsed().as_secs_f64() * 1e3);
        }
        println!("{}\t{:.3}", src.len(), best);
    }
}
