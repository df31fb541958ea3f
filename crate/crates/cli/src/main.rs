//! Command-line front end: run a program, check it, or replay the corpus.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use muspec::compose::Selector;
use muspec::corpus::{self, Cell, Manifest};
use muspec::lang::{parse_program, Assignment, Configuration, Policy, Program, Width};
use muspec::nonspec::{display_trace, ns_project, SymConfig, SymParams};
use muspec::sni::{check_sni, CheckConfig, Mode, Verdict, VerdictStatus};
use muspec::specsem::{am_run, sym_am_run};

const EXIT_OK: u8 = 0;
const EXIT_INSECURE: u8 = 1;
const EXIT_ERROR: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(name = "muspec", version, about = "Speculative non-interference checker for a small assembly language")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the trace of one execution from the policy's initial state.
    Run {
        program: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Check speculative non-interference.
    Check {
        program: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Check a bundled benchmark suite against its expectations.
    Corpus {
        /// stl, rsb, comb or all
        suite: String,
        /// Corpus directory holding manifest.json.
        #[arg(long, value_name = "DIR")]
        corpus_dir: Option<PathBuf>,
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Args, Clone)]
struct Opts {
    /// Speculation sources, e.g. b, s+r, b+s+r.
    #[arg(long, value_name = "SEL")]
    sem: Option<Selector>,
    /// Speculation window.
    #[arg(long, value_name = "N")]
    window: Option<u32>,
    #[arg(long, value_name = "N")]
    rsb_size: Option<usize>,
    /// Value width in bits.
    #[arg(long, value_name = "W")]
    bits: Option<u32>,
    /// Secrets range over 0..2^K.
    #[arg(long, value_name = "K")]
    domain_bits: Option<u32>,
    #[arg(long, value_name = "N")]
    fuel: Option<u64>,
    /// concrete or symbolic
    #[arg(long, default_value_t = Mode::Concrete)]
    mode: Mode,
    /// Policy JSON; without one every location is secret.
    #[arg(long, value_name = "FILE")]
    policy: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
}

impl Opts {
    fn selector(&self) -> Selector {
        self.sem.unwrap_or_else(|| "b+s+r".parse().expect("valid selector"))
    }

    /// `base` with the command-line overrides applied.
    fn config(&self, base: CheckConfig) -> Result<CheckConfig> {
        let mut cfg = base;
        if let Some(w) = self.window {
            cfg.params.window = w;
        }
        if let Some(n) = self.rsb_size {
            cfg.params.rsb_size = n;
        }
        if let Some(b) = self.bits {
            cfg.width = Width::new(b).with_context(|| format!("unsupported width {b} (expected 1..=64)"))?;
        }
        if let Some(k) = self.domain_bits {
            cfg.domain_bits = k;
        }
        if let Some(f) = self.fuel {
            cfg.fuel = f;
        }
        if cfg.domain_bits > cfg.width.bits() {
            bail!("domain bits {} exceed width {}", cfg.domain_bits, cfg.width.bits());
        }
        Ok(cfg)
    }

    fn load_policy(&self) -> Result<Arc<Policy>> {
        Ok(Arc::new(match &self.policy {
            Some(path) => corpus::load_policy(path)?,
            None => Policy::default(),
        }))
    }
}

fn config_echo(sel: Selector, mode: Mode, cfg: &CheckConfig) -> Value {
    json!({
        "sem": sel,
        "mode": mode,
        "window": cfg.params.window,
        "rsb_size": cfg.params.rsb_size,
        "bits": cfg.width.bits(),
        "domain_bits": cfg.domain_bits,
        "fuel": cfg.fuel,
    })
}

fn load_program(path: &Path) -> Result<Program> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_program(&text).map_err(|e| anyhow::anyhow!("{}:\n{e}", path.display()))
}

/// Copies the fields of object `extra` into object `into`.
fn merge(into: &mut Value, extra: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, extra) {
        a.extend(b);
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn cmd_run(path: &Path, opts: &Opts) -> Result<u8> {
    let p = load_program(path)?;
    let policy = opts.load_policy()?;
    let cfg = opts.config(CheckConfig::default())?;
    let sel = opts.selector();
    let desc = sel.descriptor();
    let echo = config_echo(sel, opts.mode, &cfg);
    match opts.mode {
        Mode::Concrete => {
            let c0 = Configuration::initial(&p, policy, Assignment::new());
            let run = am_run(&desc, &p, &c0, cfg.params, cfg.width, cfg.fuel);
            let projection = ns_project(&run.trace).context("speculative trace is not well bracketed")?;
            let terminated = run.status == muspec::nonspec::Status::Terminated;
            if opts.json {
                let mut report = json!({
                    "config": echo,
                    "trace": run.trace,
                    "projection": projection,
                    "steps": run.steps,
                });
                merge(&mut report, serde_json::to_value(&run.status)?);
                print_json(&report);
            } else {
                println!("trace:      {}", display_trace(&run.trace));
                println!("projection: {}", display_trace(&projection));
                println!("status:     {}", serde_json::to_value(&run.status)?["status"].as_str().unwrap_or("?"));
                println!("steps:      {}", run.steps);
            }
            Ok(if terminated { EXIT_OK } else { EXIT_INCONCLUSIVE })
        }
        Mode::Symbolic => {
            let solver = cfg.solver();
            let sym = SymParams { width: cfg.width, max_split_symbols: cfg.max_split_symbols, solver: &solver };
            let c0 = SymConfig::initial(&p, policy, 1);
            let runs = match sym_am_run(&desc, &p, &c0, cfg.params, sym, cfg.fuel, cfg.max_paths) {
                Ok(r) => r,
                Err(_) => bail!("more than {} symbolic paths", cfg.max_paths),
            };
            let all_terminated = runs.iter().all(|r| r.status == muspec::nonspec::Status::Terminated);
            if opts.json {
                print_json(&json!({ "config": echo, "paths": runs }));
            } else {
                for (i, r) in runs.iter().enumerate() {
                    let status = serde_json::to_value(&r.status)?;
                    println!("path {i} [{}]: {}", status["status"].as_str().unwrap_or("?"), display_trace(&r.trace));
                }
            }
            Ok(if all_terminated { EXIT_OK } else { EXIT_INCONCLUSIVE })
        }
    }
}

fn verdict_exit(v: &Verdict) -> u8 {
    match v.status {
        VerdictStatus::Secure => EXIT_OK,
        VerdictStatus::Insecure => EXIT_INSECURE,
        VerdictStatus::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn cmd_check(path: &Path, opts: &Opts) -> Result<u8> {
    let p = load_program(path)?;
    let policy = opts.load_policy()?;
    let cfg = opts.config(CheckConfig::default())?;
    let sel = opts.selector();
    let v = check_sni(&p, &policy, &sel.descriptor(), &cfg, opts.mode);
    if opts.json {
        let mut report = serde_json::to_value(&v)?;
        report["config"] = config_echo(sel, opts.mode, &cfg);
        print_json(&report);
    } else {
        let status = serde_json::to_value(v.status)?;
        println!("{}: {} under {sel} ({})", path.display(), status.as_str().unwrap_or("?"), opts.mode);
        if let Some(r) = &v.reason {
            println!("  reason: {r}");
        }
        if let Some(w) = &v.witness {
            let show = |s: &[muspec::sni::SecretValue]| {
                s.iter().map(|x| format!("{}={}", x.loc, x.value)).collect::<Vec<_>>().join(", ")
            };
            println!("  secrets 1: {}", show(&w.secrets1));
            println!("  secrets 2: {}", show(&w.secrets2));
            println!("  trace 1:   {}", display_trace(&w.trace1));
            println!("  trace 2:   {}", display_trace(&w.trace2));
            println!("  first difference at event {}", w.index);
        }
        println!("  runs {}, steps {}, solver queries {}", v.stats.runs, v.stats.steps, v.stats.solver_queries);
    }
    Ok(verdict_exit(&v))
}

fn cmd_corpus(suite: &str, dir: Option<&Path>, opts: &Opts) -> Result<u8> {
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(corpus::BUNDLED_DIR));
    let manifest = Manifest::load(&dir)?;
    let suites: Vec<_> = if suite == "all" {
        manifest.suites.iter().collect()
    } else {
        vec![manifest.suite(suite)?]
    };
    let mut all_match = true;
    let mut reports = Vec::new();
    for s in suites {
        let selectors: Vec<Selector> = match opts.sem {
            Some(sel) => s.selectors.iter().copied().filter(|&x| x == sel).collect(),
            None => s.selectors.clone(),
        };
        if selectors.is_empty() {
            if !opts.json {
                println!("{}: no expectations under {}, skipped\n", s.name, opts.selector());
            }
            continue;
        }
        let cfg = opts.config(s.check_config()?)?;
        let cases = s.load_cases(&dir)?;
        let cells = corpus::run_cells(&cases, &selectors, &cfg, opts.mode);
        let matched = cells.iter().filter(|c| c.matches()).count();
        all_match &= matched == cells.len();
        if opts.json {
            let rows: Vec<Value> = cells
                .iter()
                .map(|c| {
                    json!({
                        "case": c.case,
                        "sem": c.selector,
                        "expected": c.expected,
                        "verdict": c.verdict.status,
                        "match": c.matches(),
                    })
                })
                .collect();
            reports.push(json!({
                "suite": s.name,
                "mode": opts.mode,
                "config": config_echo(selectors[0], opts.mode, &cfg),
                "cells": rows,
                "matched": matched,
                "total": cells.len(),
            }));
        } else {
            print_table(&s.name, &selectors, &cells);
            println!("{}: {matched}/{} cells match\n", s.name, cells.len());
        }
    }
    if opts.json {
        print_json(&json!({ "suites": reports, "ok": all_match }));
    }
    Ok(if all_match { EXIT_OK } else { EXIT_INSECURE })
}

fn print_table(name: &str, selectors: &[Selector], cells: &[Cell]) {
    let width = cells.iter().map(|c| c.case.len()).max().unwrap_or(4).max(name.len());
    let mut header = format!("{name:width$}");
    for s in selectors {
        header.push_str(&format!(" {:>7}", s.to_string()));
    }
    println!("{header}");
    for row in cells.chunks(selectors.len()) {
        let mut line = format!("{:width$}", row[0].case);
        for c in row {
            let mark = if c.matches() { "" } else { "!" };
            line.push_str(&format!(" {:>7}", format!("{}{mark}", c.verdict.status.symbol())));
        }
        println!("{line}");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.cmd {
        Cmd::Run { program, opts } => cmd_run(program, opts),
        Cmd::Check { program, opts } => cmd_check(program, opts),
        Cmd::Corpus { suite, corpus_dir, opts } => cmd_corpus(suite, corpus_dir.as_deref(), opts),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
