//! `leakward`: find, explain and repair resource leaks in MiniJ programs.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use leakward::cfg::lower_program;
use leakward::checker::{check_program, filter_constructor_first_writes, Warning};
use leakward::escape::EscapeAnalysis;
use leakward::frontend::{default_library_spec, load_library_spec, parse, pretty_print, LibrarySpec, Program, SiteId};
use leakward::inference::{infer_specs, SpecSet};
use leakward::oracle::{run, DEFAULT_STEP_LIMIT};
use leakward::pipeline::{run_pipeline, PipelineConfig};
use leakward::repair::{materialize, plan_fix, unified_diff, Planned, PreCloseStyle, RepairConfig};
use leakward::transforms::transform_all;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "leakward", version, about = "Resource-leak checker and repairer for MiniJ")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Lib {
    /// Library specification; the bundled one when omitted.
    #[arg(long)]
    libspec: Option<PathBuf>,
}

impl Lib {
    fn load(&self) -> Result<LibrarySpec> {
        match &self.libspec {
            None => Ok(default_library_spec()),
            Some(p) => Ok(load_library_spec(&read(p)?).with_context(|| format!("loading {}", p.display()))?),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    /// Catch the exception of the early close and print its stack trace.
    PrintStackTrace,
    /// Let the exception of the early close propagate.
    Propagate,
}

impl From<Style> for PreCloseStyle {
    fn from(s: Style) -> Self {
        match s {
            Style::PrintStackTrace => PreCloseStyle::PrintStackTrace,
            Style::Propagate => PreCloseStyle::Propagate,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Report leak warnings.
    Check {
        files: Vec<PathBuf>,
        #[command(flatten)]
        lib: Lib,
        /// Specifications to check against, in addition to the declared ones.
        #[arg(long)]
        specs: Option<PathBuf>,
        /// Infer specifications before checking.
        #[arg(long, conflicts_with = "specs")]
        infer: bool,
        #[arg(long)]
        json: bool,
        /// Write one Graphviz file per method into this directory.
        #[arg(long, value_name = "DIR")]
        dump_cfg: Option<PathBuf>,
    },
    /// Infer ownership specifications.
    Infer {
        files: Vec<PathBuf>,
        #[command(flatten)]
        lib: Lib,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Apply the leak-enabling source transformations.
    Transform {
        files: Vec<PathBuf>,
        #[command(flatten)]
        lib: Lib,
        /// Warnings from `check --json`; only their ids are used.
        #[arg(long)]
        warnings: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Plan and apply repairs.
    Fix {
        files: Vec<PathBuf>,
        #[command(flatten)]
        lib: Lib,
        /// Warnings from `check --json`; only their ids are used.
        #[arg(long)]
        warnings: Option<PathBuf>,
        /// Specifications to repair under; inferred when omitted.
        #[arg(long)]
        specs: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "print-stack-trace")]
        preclose_style: Style,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Interpret `main` and report leaked allocation sites.
    Run {
        file: PathBuf,
        #[command(flatten)]
        lib: Lib,
        /// Include the output and close events.
        #[arg(long)]
        trace: bool,
        #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
        step_limit: u64,
    },
    /// Show how the value of an allocation site may escape its method.
    ExplainEscape {
        file: PathBuf,
        #[command(flatten)]
        lib: Lib,
        #[arg(long)]
        site: u32,
    },
    /// Run the whole repair pipeline over every `.mj` file of a directory.
    Pipeline {
        dir: PathBuf,
        #[command(flatten)]
        lib: Lib,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        no_transforms: bool,
        #[arg(long)]
        no_enhancements: bool,
        #[arg(long)]
        no_overwrite_handling: bool,
        #[arg(long, default_value_t = 3)]
        max_iterations: usize,
        /// Map an ambiguous warning to its first candidate root instead of failing.
        #[arg(long)]
        lenient_mapping: bool,
        #[arg(long, value_enum, default_value = "print-stack-trace")]
        preclose_style: Style,
        /// Files, by name, that use the propagating pre-close style.
        #[arg(long, value_name = "FILE")]
        propagate: Vec<String>,
    },
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn read_json(p: &Path) -> Result<Value> {
    serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))
}

fn load(p: &Path) -> Result<(String, String, Program)> {
    let name = p.display().to_string();
    let text = read(p)?;
    let program = parse(&name, &text).map_err(|e| anyhow::anyhow!("{name}: {e}"))?;
    Ok((name, text, program))
}

fn file_name(p: &Path) -> Result<String> {
    Ok(p.file_name().with_context(|| format!("{} names no file", p.display()))?.to_string_lossy().into_owned())
}

/// The ids listed in a `check --json` output.
fn selected_ids(p: &Option<PathBuf>) -> Result<Option<BTreeSet<String>>> {
    let Some(p) = p else { return Ok(None) };
    let v = read_json(p)?;
    let items = v.as_array().with_context(|| format!("{} is not a JSON array", p.display()))?;
    let ids = items.iter().map(|w| w["id"].as_str().map(str::to_string).with_context(|| format!("{}: a warning has no id", p.display())));
    Ok(Some(ids.collect::<Result<_>>()?))
}

fn keep(ws: Vec<Warning>, ids: &Option<BTreeSet<String>>) -> Vec<Warning> {
    match ids {
        None => ws,
        Some(ids) => ws.into_iter().filter(|w| ids.contains(&w.id)).collect(),
    }
}

/// Declared specifications, completed from `extra`.
fn specs_for(program: &Program, extra: Option<&SpecSet>) -> SpecSet {
    let mut s = SpecSet::declared(program);
    if let Some(e) = extra {
        s.merge_missing(e);
    }
    s
}

fn specs_file(p: &Option<PathBuf>) -> Result<Option<SpecSet>> {
    p.as_ref().map(|p| SpecSet::from_json(&read_json(p)?).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))).transpose()
}

fn write(p: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = p.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(p, contents).with_context(|| format!("writing {}", p.display()))
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values serialize") + "\n"
}

fn check(files: &[PathBuf], lib: &LibrarySpec, specs: Option<SpecSet>, infer: bool, as_json: bool, dump: Option<&Path>) -> Result<ExitCode> {
    let mut all = Vec::new();
    for f in files {
        let (_, _, program) = load(f)?;
        let specs = if infer { infer_specs(&program, lib) } else { specs_for(&program, specs.as_ref()) };
        all.extend(filter_constructor_first_writes(check_program(&program, &specs, lib), &program));
        if let Some(dir) = dump {
            for cfg in lower_program(&program, lib) {
                let name = cfg.key.to_string().replace(['<', '>'], "").replace('/', "_");
                write(&dir.join(format!("{name}.dot")), &cfg.to_dot())?;
            }
        }
    }
    if as_json {
        print!("{}", pretty(&Value::Array(all.iter().map(Warning::to_json).collect())));
    } else {
        for w in &all {
            println!("{w}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn infer(files: &[PathBuf], lib: &LibrarySpec, output: Option<&Path>) -> Result<ExitCode> {
    let mut specs = SpecSet::default();
    for f in files {
        let (_, _, program) = load(f)?;
        specs.merge_missing(&infer_specs(&program, lib));
    }
    let text = pretty(&specs.to_json());
    match output {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn transform(files: &[PathBuf], lib: &LibrarySpec, warnings: &Option<PathBuf>, out: &Path) -> Result<ExitCode> {
    let ids = selected_ids(warnings)?;
    for f in files {
        let (_, _, program) = load(f)?;
        let ws = keep(check_program(&program, &SpecSet::declared(&program), lib), &ids);
        let (transformed, log) = transform_all(&program, &ws, lib);
        let name = file_name(f)?;
        write(&out.join(&name), &pretty_print(&transformed))?;
        write(&out.join(format!("{name}.edits.json")), &pretty(&log.to_json()))?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Repairs the selected warnings of one file in turn, re-checking after
/// every applied patch so later plans see the patched program.
fn fix_file(
    path: &Path,
    lib: &LibrarySpec,
    extra: Option<&SpecSet>,
    ids: &Option<BTreeSet<String>>,
    config: RepairConfig,
) -> Result<(String, String, Vec<Value>)> {
    let (name, text, original) = load(path)?;
    let specs_of = |p: &Program| match extra {
        Some(e) => specs_for(p, Some(e)),
        None => infer_specs(p, lib),
    };
    let specs = specs_of(&original);
    let todo = keep(filter_constructor_first_writes(check_program(&original, &specs, lib), &original), ids);
    let mut current = original.clone();
    let mut current_text = pretty_print(&original);
    let mut report = Vec::new();
    for w in &todo {
        let specs = specs_of(&current);
        let live = check_program(&current, &specs, lib);
        let Some(w) = live.iter().find(|l| l.id == w.id) else {
            report.push(json!({ "warningId": w.id, "resolved": true }));
            continue;
        };
        let ea = EscapeAnalysis::new(&current, &specs, lib);
        let planned = match plan_fix(w, &current, &specs, lib, &ea) {
            Ok(p) => p,
            Err(e) => {
                report.push(json!({ "warningId": w.id, "error": e.to_string() }));
                continue;
            }
        };
        report.push(planned.to_json(&w.id));
        if let Planned::Plan(plan) = &planned {
            match materialize(&current, &current_text, plan, &config) {
                Ok((_, patch)) => {
                    current = parse(&name, &patch.new_text).map_err(|e| anyhow::anyhow!("{name}: patched text: {e}"))?;
                    current_text = patch.new_text;
                }
                Err(e) => {
                    let last = report.last_mut().expect("just pushed");
                    last["error"] = json!(e.to_string());
                }
            }
        }
    }
    let diff = if current_text == pretty_print(&original) { String::new() } else { unified_diff(&name, &text, &current_text) };
    Ok((file_name(path)?, diff, report))
}

fn fix(files: &[PathBuf], lib: &LibrarySpec, warnings: &Option<PathBuf>, specs: &Option<PathBuf>, style: Style, out: &Path) -> Result<ExitCode> {
    let ids = selected_ids(warnings)?;
    let extra = specs_file(specs)?;
    let config = RepairConfig { preclose_style: style.into() };
    let mut report = Vec::new();
    for f in files {
        let (name, diff, entries) = fix_file(f, lib, extra.as_ref(), &ids, config)?;
        if !diff.is_empty() {
            write(&out.join(format!("{name}.patch")), &diff)?;
        }
        report.extend(entries);
    }
    write(&out.join("fixreport.json"), &pretty(&Value::Array(report)))?;
    Ok(ExitCode::SUCCESS)
}

fn run_file(file: &Path, lib: &LibrarySpec, trace: bool, step_limit: u64) -> Result<ExitCode> {
    let (_, _, program) = load(file)?;
    let report = run(&program, lib, step_limit)?;
    let mut j = report.to_json();
    if trace {
        j["trace"] = json!(report.stdout);
    }
    print!("{}", pretty(&j));
    Ok(ExitCode::SUCCESS)
}

fn explain_escape(file: &Path, lib: &LibrarySpec, site: u32) -> Result<ExitCode> {
    let (_, _, program) = load(file)?;
    let specs = infer_specs(&program, lib);
    let ea = EscapeAnalysis::new(&program, &specs, lib);
    let site = SiteId(site);
    let Some(key) = ea.method_of_site(site) else { bail!("no allocation site {} in {}", site.0, file.display()) };
    let result = ea.escapes_site(key, site).expect("the site is in its own method");
    let mut j = result.to_json();
    j["method"] = json!(key.to_string());
    print!("{}", pretty(&j));
    Ok(ExitCode::SUCCESS)
}

fn sources_in(dir: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "mj") {
            out.push((file_name(&p)?, read(&p)?));
        }
    }
    out.sort();
    Ok(out)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("leakward: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Check { files, lib, specs, infer, json, dump_cfg } => check(&files, &lib.load()?, specs_file(&specs)?, infer, json, dump_cfg.as_deref()),
        Command::Infer { files, lib, output } => infer(&files, &lib.load()?, output.as_deref()),
        Command::Transform { files, lib, warnings, output } => transform(&files, &lib.load()?, &warnings, &output),
        Command::Fix { files, lib, warnings, specs, preclose_style, output } => fix(&files, &lib.load()?, &warnings, &specs, preclose_style, &output),
        Command::Run { file, lib, trace, step_limit } => run_file(&file, &lib.load()?, trace, step_limit),
        Command::ExplainEscape { file, lib, site } => explain_escape(&file, &lib.load()?, site),
        Command::Pipeline {
            dir,
            lib,
            output,
            no_transforms,
            no_enhancements,
            no_overwrite_handling,
            max_iterations,
            lenient_mapping,
            preclose_style,
            propagate,
        } => {
            let mut config = PipelineConfig {
                transforms: !no_transforms,
                enhancements: !no_enhancements,
                overwrite_handling: !no_overwrite_handling,
                max_iterations,
                strict_mapping: !lenient_mapping,
                repair: RepairConfig { preclose_style: preclose_style.into() },
                ..PipelineConfig::default()
            };
            for f in propagate {
                config.repair_overrides.insert(f, RepairConfig { preclose_style: PreCloseStyle::Propagate });
            }
            let report = run_pipeline(&sources_in(&dir)?, &lib.load()?, &config)?;
            report.write_to(&output).with_context(|| format!("writing {}", output.display()))?;
            print!("{}", report.summary());
            Ok(ExitCode::from(report.exit_code() as u8))
        }
    }
}
