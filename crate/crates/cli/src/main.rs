use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use nullit::infer::{
    analyze, check_solution, classify_dereferences, derive_annotations, AnalysisConfig,
};
use nullit::ir::{load_program, print_program, LoadError, Program};
use nullit::oracle::{
    check_correctness, check_dereference_safety, describe_status, fuzz_program, gen_program_sized,
    gen_program_text, run, Fault, FuzzOutcome, GenParams, Trace, DEFAULT_BUDGET,
};
use nullit::stats::RunStats;

/// Bad input: unreadable file, syntax or verification error, bad flag.
const EXIT_INPUT: u8 = 1;
/// A solution failed its own constraints, or a run contradicted it.
const EXIT_VIOLATION: u8 = 2;

#[derive(Parser)]
#[command(
    name = "nullit",
    version,
    about = "Nullness and rawness inference for a small object bytecode"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Infer annotations and classify dereferences.
    Infer(InferArgs),
    /// Generate random programs and check the analysis against concrete runs.
    Fuzz(FuzzArgs),
    /// Check one program's analysis against concrete runs.
    Check(CheckArgs),
    /// Execute a program in the instrumented interpreter.
    Run(RunArgs),
    /// Print a generated program.
    Gen(GenArgs),
}

#[derive(Args, Clone)]
struct ConfigFlags {
    /// No precision improvements.
    #[arg(long, conflicts_with = "opt")]
    basic: bool,
    /// All precision improvements (the default).
    #[arg(long)]
    opt: bool,
    #[arg(long)]
    no_nullable_init: bool,
    #[arg(long)]
    no_test_recovery: bool,
    #[arg(long)]
    no_instanceof: bool,
    #[arg(long)]
    no_deref_edges: bool,
}

impl ConfigFlags {
    fn config(&self) -> AnalysisConfig {
        let mut c = if self.basic {
            AnalysisConfig::BASIC
        } else {
            AnalysisConfig::OPT
        };
        c.nullable_init &= !self.no_nullable_init;
        c.test_recovery &= !self.no_test_recovery;
        c.instanceof_recovery &= !self.no_instanceof;
        c.deref_edge_refinement &= !self.no_deref_edges;
        c
    }

    fn explicit(&self) -> bool {
        self.basic
            || self.opt
            || self.no_nullable_init
            || self.no_test_recovery
            || self.no_instanceof
            || self.no_deref_edges
    }

    /// Both presets unless the command line picks one configuration.
    fn configs(&self) -> Vec<AnalysisConfig> {
        if self.explicit() {
            vec![self.config()]
        } else {
            vec![AnalysisConfig::BASIC, AnalysisConfig::OPT]
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct InferArgs {
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    #[command(flatten)]
    flags: ConfigFlags,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Annotation and dereference tables.
    #[arg(long)]
    stats: bool,
    /// Include wall time and peak memory in JSON statistics.
    #[arg(long)]
    timing: bool,
    /// Include the full abstract state in JSON output.
    #[arg(long)]
    state: bool,
    /// Also print the stack/local must-alias facts.
    #[arg(long)]
    dump_alias: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Size {
    Micro,
    Tiny,
    Small,
}

impl Size {
    fn params(self) -> GenParams {
        match self {
            Size::Micro => GenParams::micro(),
            Size::Tiny => GenParams::tiny(),
            Size::Small => GenParams::small(),
        }
    }
}

#[derive(Args)]
struct FuzzArgs {
    /// Program seeds, `start..end`.
    #[arg(long, value_parser = parse_range, default_value = "0..100")]
    seeds: Range<u64>,
    /// Input seeds per program.
    #[arg(long, default_value_t = 10)]
    inputs: u64,
    #[arg(long, value_enum, default_value_t = Size::Small)]
    size: Size,
    #[command(flatten)]
    flags: ConfigFlags,
    /// Corrupt the analysis result to confirm violations are caught.
    #[arg(long)]
    inject_fault: Option<Fault>,
    #[arg(long, env = "NULLIT_BUDGET", default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Where to write reproduction files for violations.
    #[arg(long, default_value = "fuzz-failures")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    path: PathBuf,
    #[arg(long, default_value_t = 10)]
    inputs: u64,
    #[command(flatten)]
    flags: ConfigFlags,
    #[arg(long, env = "NULLIT_BUDGET", default_value_t = DEFAULT_BUDGET)]
    budget: u64,
}

#[derive(Args)]
struct RunArgs {
    path: PathBuf,
    /// Seed for the entry method's inputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print every step.
    #[arg(long)]
    trace: bool,
    #[arg(long, env = "NULLIT_BUDGET", default_value_t = DEFAULT_BUDGET)]
    budget: u64,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Size::Small)]
    size: Size,
    /// Target instruction count; overrides --size.
    #[arg(long)]
    instructions: Option<usize>,
    /// Class count for --instructions.
    #[arg(long, default_value_t = 200)]
    classes: usize,
}

fn parse_range(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected start..end, got `{s}`"))?;
    let a: u64 = a
        .trim()
        .parse()
        .map_err(|e| format!("bad range start: {e}"))?;
    let b: u64 = b
        .trim()
        .parse()
        .map_err(|e| format!("bad range end: {e}"))?;
    if b < a {
        return Err(format!("empty range `{s}` runs backwards"));
    }
    Ok(a..b)
}

/// Input problems become exit code 1; everything else comes back as a code.
struct InputError(anyhow::Error);

fn load(path: &Path) -> Result<Program, InputError> {
    let bytes = fs::read(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(InputError)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| InputError(anyhow::anyhow!("{}: not valid UTF-8", path.display())))?;
    load_program(&text).map_err(|e| {
        let sep = if matches!(&e, LoadError::Parse(p) if p.line().is_some()) {
            ":"
        } else {
            ": "
        };
        InputError(anyhow::anyhow!("{}{sep}{e}", path.display()))
    })
}

fn program_name(path: &Path) -> String {
    path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

fn cmd_infer(args: &InferArgs) -> Result<u8, InputError> {
    let config = args.flags.config();
    let mut programs = Vec::new();
    for path in &args.paths {
        programs.push((path, load(path)?));
    }
    // One solver per program in parallel; the report is assembled in order.
    let analyzed: Vec<_> = programs
        .par_iter()
        .map(|(_, program)| {
            let start = Instant::now();
            let solution = analyze(program, config);
            let annotations = derive_annotations(program, &solution);
            let report = classify_dereferences(program, &solution);
            let stats =
                RunStats::collect(program, &solution, &annotations, &report, start.elapsed());
            let broken = check_solution(program, &solution);
            (solution, annotations, report, stats, broken)
        })
        .collect();
    let mut status = 0;
    let mut runs = Vec::new();
    let mut json_programs = Vec::new();
    let mut text = String::new();
    for ((path, program), (solution, annotations, report, stats, broken)) in
        programs.iter().zip(analyzed)
    {
        if !broken.is_empty() {
            eprintln!(
                "internal error: {} constraints unmet for {}",
                broken.len(),
                path.display()
            );
            for v in broken.iter().take(5) {
                eprintln!("  {v}");
            }
            status = EXIT_VIOLATION;
        }
        match args.format {
            Format::Json => {
                let mut o = json!({
                    "file": path.display().to_string(),
                    "annotations": annotations.to_json(program),
                    "dereferences": report.to_json(program),
                });
                if args.stats {
                    o["stats"] = stats.to_json(!args.timing);
                }
                if args.state {
                    o["state"] = solution.state.to_json(program);
                }
                if args.dump_alias {
                    o["aliases"] = json!(solution.aliases.dump(program));
                }
                json_programs.push(o);
            }
            Format::Text => {
                let _ = writeln!(text, "== {} ({}) ==", path.display(), config.name());
                text.push_str(&annotation_text(program, &annotations.to_json(program)));
                let t = report.total();
                let _ = writeln!(text, "dereferences: {} of {} safe", t.good, t.total);
                for site in report.sites.iter().filter(|s| !s.safe) {
                    let _ = writeln!(
                        text,
                        "  unsafe {} {} on {}",
                        program.point_name(site.point),
                        site.category.label(),
                        site.receiver.annotation(program)
                    );
                }
                if args.stats {
                    text.push('\n');
                    text.push_str(&stats.to_text());
                }
                if args.dump_alias {
                    text.push_str("\nstack/local must-aliases:\n");
                    for line in solution.aliases.dump(program) {
                        let _ = writeln!(text, "  {line}");
                    }
                }
                text.push('\n');
            }
        }
        runs.push((program_name(path), stats));
    }
    let total = (runs.len() > 1 && args.stats).then(|| RunStats::combine(&runs));
    match args.format {
        Format::Json => {
            let mut out = json!({ "config": config, "programs": json_programs });
            if let Some(t) = &total {
                out["total"] = t.to_json(!args.timing);
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&out).expect("serializable")
            );
        }
        Format::Text => {
            print!("{text}");
            if let Some(t) = &total {
                println!(
                    "== total over {} programs ({}) ==",
                    runs.len(),
                    config.name()
                );
                print!("{}", t.to_text());
            }
        }
    }
    Ok(status)
}

fn annotation_text(_program: &Program, ann: &Value) -> String {
    let mut s = String::new();
    if let Some(fields) = ann["fields"].as_object() {
        for (name, v) in fields {
            let _ = writeln!(s, "  field  {name:<32} {}", v.as_str().unwrap_or(""));
        }
    }
    if let Some(methods) = ann["methods"].as_object() {
        for (name, m) in methods {
            let mut parts = Vec::new();
            if let Some(t) = m.get("this").and_then(Value::as_str) {
                parts.push(format!("this {t}"));
            }
            if let Some(ps) = m["params"].as_object() {
                for (i, v) in ps {
                    parts.push(format!("param {i} {}", v.as_str().unwrap_or("")));
                }
            }
            if let Some(r) = m.get("return").and_then(Value::as_str) {
                parts.push(format!("return {r}"));
            }
            if !parts.is_empty() {
                let _ = writeln!(s, "  method {name:<32} {}", parts.join(", "));
            }
        }
    }
    s
}

fn excerpt(program: &Program, trace: &Trace, step: Option<usize>) -> String {
    let end = step
        .map_or(trace.steps.len(), |s| s + 1)
        .min(trace.steps.len());
    let start = end.saturating_sub(40);
    let cut = Trace {
        seed: trace.seed,
        inputs: trace.inputs.clone(),
        setup: if start == 0 {
            trace.setup.clone()
        } else {
            Vec::new()
        },
        steps: trace.steps[start..end].to_vec(),
        status: trace.status.clone(),
    };
    let mut s = format!(
        "inputs: {:?}\nsteps {start}..{end} of {}\n",
        trace.inputs,
        trace.steps.len()
    );
    s.push_str(&cut.dump(program));
    s
}

fn cmd_fuzz(args: &FuzzArgs) -> Result<u8, InputError> {
    let configs = args.flags.configs();
    let params = args.size.params();
    let results: Vec<(u64, FuzzOutcome)> = args
        .seeds
        .clone()
        .into_par_iter()
        .map(|seed| {
            let program = nullit::oracle::gen_program(seed, &params);
            (
                seed,
                fuzz_program(
                    &program,
                    &configs,
                    args.inputs,
                    args.budget,
                    args.inject_fault,
                ),
            )
        })
        .collect();
    let mut total = FuzzOutcome::default();
    let mut failing = Vec::new();
    for (seed, outcome) in results {
        if outcome.violations > 0 {
            failing.push((seed, outcome.failures.clone()));
        }
        total.merge(outcome);
    }
    let configs_desc: Vec<&str> = configs.iter().map(|c| c.name()).collect();
    println!(
        "{} programs, {} runs [{}] (returned {}, null dereference {}, budget exhausted {}, stuck {})",
        args.seeds.end - args.seeds.start,
        total.runs,
        configs_desc.join(", "),
        total.returned,
        total.omega,
        total.exhausted,
        total.stuck
    );
    println!("{} violations", total.violations);
    if failing.is_empty() {
        return Ok(0);
    }
    if let Err(e) = fs::create_dir_all(&args.out) {
        eprintln!("cannot create {}: {e}", args.out.display());
    }
    for (seed, failures) in failing.iter().take(20) {
        let text = gen_program_text(*seed, &params);
        let program = nullit::oracle::gen_program(*seed, &params);
        for f in failures {
            println!(
                "seed {seed} input {} {}: [{}] {}",
                f.trace.seed,
                f.config.name(),
                f.violation.rule,
                f.violation.detail
            );
        }
        let mut report = String::new();
        for f in failures {
            let _ = writeln!(
                report,
                "program seed {seed}, input seed {}, config {}\n{}\n\n{}",
                f.trace.seed,
                f.config.name(),
                f.violation,
                excerpt(&program, &f.trace, f.violation.step)
            );
        }
        let base = args.out.join(format!("seed-{seed}"));
        let written = fs::write(base.with_extension("nir"), &text)
            .and_then(|_| fs::write(base.with_extension("txt"), report));
        if let Err(e) = written {
            eprintln!("cannot write reproduction for seed {seed}: {e}");
        }
    }
    println!("reproductions in {}", args.out.display());
    Ok(EXIT_VIOLATION)
}

fn cmd_check(args: &CheckArgs) -> Result<u8, InputError> {
    let program = load(&args.path)?;
    let mut status = 0;
    for config in args.flags.configs() {
        let solution = analyze(&program, config);
        let broken = check_solution(&program, &solution);
        let report = classify_dereferences(&program, &solution);
        let mut violations = 0;
        for v in &broken {
            println!("{}: unmet constraint {v}", config.name());
        }
        for seed in 0..args.inputs {
            let trace = run(&program, args.budget, seed);
            let mut vs = check_correctness(&program, &trace, &solution);
            vs.extend(check_dereference_safety(&program, &trace, &report));
            for v in &vs {
                println!("{} input {seed}: {v}", config.name());
            }
            violations += vs.len();
        }
        println!(
            "{}: {} inputs, {} violations, {} unmet constraints",
            config.name(),
            args.inputs,
            violations,
            broken.len()
        );
        if violations > 0 || !broken.is_empty() {
            status = EXIT_VIOLATION;
        }
    }
    Ok(status)
}

fn cmd_run(args: &RunArgs) -> Result<u8, InputError> {
    let program = load(&args.path)?;
    let trace = run(&program, args.budget, args.seed);
    if args.trace {
        print!("{}", trace.dump(&program));
    } else {
        let inputs: Vec<String> = trace.inputs.iter().map(|v| v.to_string()).collect();
        println!("inputs: [{}]", inputs.join(", "));
        println!("steps: {}", trace.steps.len());
        println!("status: {}", describe_status(&program, &trace.status));
    }
    Ok(0)
}

fn cmd_gen(args: &GenArgs) -> Result<u8, InputError> {
    match args.instructions {
        Some(n) => print!(
            "{}",
            print_program(&gen_program_sized(args.seed, n, args.classes).1)
        ),
        None => print!("{}", gen_program_text(args.seed, &args.size.params())),
    }
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<u8, InputError> {
    match &cli.cmd {
        Cmd::Infer(a) => cmd_infer(a),
        Cmd::Fuzz(a) => cmd_fuzz(a),
        Cmd::Check(a) => cmd_check(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Gen(a) => cmd_gen(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| dispatch(&cli)) {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(InputError(e))) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(_) => {
            eprintln!("internal error: analysis panicked");
            ExitCode::from(EXIT_VIOLATION)
        }
    }
}
