//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a verification check fails, 2 for usage
//! or spec errors.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::analysis::{
    self, baseline_counts, baseline_load, hypercube_counts, jensen_gap, load_coded,
    lower_bound_best, lower_bound_permutation, optimality_ceiling, ratio_homogeneous, to_decimal,
    SweepFamily,
};
use crate::design::{build_design, NetworkSpec, NodeClass, NodeId};
use crate::simulation::{simulate, SimulationOptions, Tamper};

#[derive(Debug, Parser)]
#[command(
    name = "hypercdc",
    version,
    about = "Hypercuboid coded distributed computing toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a design and print its summary or JSON document.
    Design(DesignArgs),
    /// Run Map, Shuffle and Reduce and verify loads and outputs.
    Simulate(SimulateArgs),
    /// Tabulate a family of networks as CSV.
    Sweep(SweepArgs),
    /// Compare a network against the homogeneous baseline.
    Compare(CompareArgs),
    /// Print the shuffle lower bound and optimality ratio.
    Bound(BoundArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    /// Node class as `r_p,m_p`; repeat once per class, in order.
    #[arg(long = "class", value_name = "R,M", value_parser = parse_class, required = true)]
    pub classes: Vec<NodeClass>,
    #[arg(long, default_value_t = 1)]
    pub eta1: usize,
    #[arg(long, default_value_t = 1)]
    pub eta2: usize,
    /// Bytes per intermediate value.
    #[arg(long, default_value_t = 32)]
    pub iv_bytes: usize,
    /// Bytes per input file.
    #[arg(long, default_value_t = 64)]
    pub file_bytes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SpecArgs {
    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec {
            classes: self.classes.clone(),
            eta1: self.eta1,
            eta2: self.eta2,
            iv_bytes: self.iv_bytes,
            file_bytes: self.file_bytes,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Write the design JSON document here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the coded transcript JSON here.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Flip one coded payload byte before decoding (`MESSAGE:OFFSET`).
    #[arg(long, hide = true, value_parser = parse_tamper)]
    pub tamper: Option<Tamper>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Fig4,
    Case1,
    Case2,
    Custom,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// Node count for fig4.
    #[arg(long = "K", default_value_t = 20)]
    pub k: usize,
    /// Computation-load range for fig4, `MIN..MAX` inclusive.
    #[arg(long = "r", value_parser = parse_range, default_value = "2..9")]
    pub r: (usize, usize),
    /// Ladder length for case1/case2.
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    /// Base classes for case1/case2 as `r_p,m_p`.
    #[arg(long = "class", value_name = "R,M", value_parser = parse_class)]
    pub classes: Vec<NodeClass>,
    /// Custom spec as `r,m+r,m+...`; repeatable.
    #[arg(long = "spec", value_parser = parse_spec)]
    pub specs: Vec<Vec<NodeClass>>,
    #[arg(long, default_value_t = 1)]
    pub eta1: usize,
    #[arg(long, default_value_t = 1)]
    pub eta2: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Node permutation, comma separated, to evaluate the permutation bound.
    #[arg(long, value_delimiter = ',')]
    pub perm: Option<Vec<NodeId>>,
}

fn parse_class(text: &str) -> Result<NodeClass, String> {
    let (r, m) = text
        .split_once([',', ':'])
        .ok_or_else(|| format!("expected r_p,m_p but got {text:?}"))?;
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|e| format!("{s:?} in {text:?}: {e}"))
    };
    Ok(NodeClass::new(num(r)?, num(m)?))
}

fn parse_spec(text: &str) -> Result<Vec<NodeClass>, String> {
    text.split('+').map(parse_class).collect()
}

fn parse_range(text: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = text
        .split_once("..")
        .ok_or_else(|| format!("expected MIN..MAX but got {text:?}"))?;
    let num = |s: &str| s.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((num(lo)?, num(hi)?))
}

fn parse_tamper(text: &str) -> Result<Tamper, String> {
    let (message, offset) = text
        .split_once(':')
        .ok_or_else(|| format!("expected MESSAGE:OFFSET but got {text:?}"))?;
    let num = |s: &str| s.parse::<usize>().map_err(|e| e.to_string());
    Ok(Tamper {
        message: num(message)?,
        offset: num(offset)?,
    })
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Verification,
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Verification => 1,
            Failure::Usage(_) => 2,
        }
    }
}

fn usage(err: impl ToString) -> Failure {
    Failure::Usage(err.to_string())
}

fn emit(out: &mut dyn Write, path: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
        }
        None => out.write_all(text.as_bytes()).map_err(usage),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Design(args) => cmd_design(&args, out),
        Command::Simulate(args) => cmd_simulate(&args, out),
        Command::Sweep(args) => cmd_sweep(&args, out),
        Command::Compare(args) => cmd_compare(&args, out),
        Command::Bound(args) => cmd_bound(&args, out),
    };
    match result {
        Ok(()) => 0,
        Err(failure) => {
            if let Failure::Usage(msg) = &failure {
                let _ = writeln!(err, "error: {msg}");
            }
            failure.code()
        }
    }
}

fn cmd_design(args: &DesignArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let spec = args.spec.spec();
    if args.format == Format::Csv {
        return Err(usage("design output is text or json"));
    }
    let design = build_design(&spec).map_err(usage)?;
    let doc = design.to_json();
    if let Some(path) = &args.out {
        emit(out, Some(path), &doc)?;
    }
    if args.format == Format::Json {
        return emit(out, None, &(doc + "\n"));
    }

    let mut text = format!(
        "K={} N={} Q={} X={} Y={} r={}\n",
        design.k(),
        design.n(),
        design.q(),
        design.x(),
        design.y(),
        design.r()
    );
    let mut first = 1;
    for (p, class) in spec.classes.iter().enumerate() {
        let _ = writeln!(
            text,
            "class {} (r_p={}, m_p={}): nodes {}..={}, |M_k|={}, |W_k|={}",
            p + 1,
            class.r,
            class.m,
            first,
            first + class.r * class.m - 1,
            design.files_of_node(first).len(),
            design.functions_of_node(first).len()
        );
        first += class.r * class.m;
    }
    emit(out, None, &text)
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let design = build_design(&args.spec.spec()).map_err(usage)?;
    let sim = simulate(
        &design,
        SimulationOptions {
            tamper: args.tamper,
        },
    );
    if let (Some(path), Some(t)) = (&args.transcript, &sim.coded) {
        emit(out, Some(path), &t.to_json())?;
    }

    let text = if args.format == Format::Json {
        serde_json::to_string_pretty(&sim.to_json()).expect("json") + "\n"
    } else if args.format == Format::Csv {
        csv_text(&sim.report)?
    } else {
        let mut text = format!(
            "design: K={} N={} Q={} X={} r={} Y={}\n",
            design.k(),
            design.n(),
            design.q(),
            design.x(),
            design.r(),
            design.y()
        );
        let _ = writeln!(
            text,
            "messages: {} unicast, {} coded",
            sim.uncoded_messages, sim.coded_messages
        );
        for check in &sim.checks {
            let verdict = if check.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(text, "{}: {}, {verdict}", check.name, check.detail);
        }
        let _ = writeln!(
            text,
            "RESULT: {}",
            if sim.passed() { "PASS" } else { "FAIL" }
        );
        text
    };
    emit(out, args.out.as_ref(), &text)?;
    if sim.passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let family = match args.family {
        Family::Fig4 => SweepFamily::Fig4 {
            k: args.k,
            r_min: args.r.0,
            r_max: args.r.1,
        },
        Family::Case1 | Family::Case2 => {
            let base = if args.classes.is_empty() {
                match args.family {
                    Family::Case1 => vec![NodeClass::new(2, 2), NodeClass::new(1, 4)],
                    _ => vec![NodeClass::new(4, 2), NodeClass::new(4, 8)],
                }
            } else {
                args.classes.clone()
            };
            if args.family == Family::Case1 {
                SweepFamily::Case1 {
                    base,
                    steps: args.steps,
                }
            } else {
                SweepFamily::Case2 {
                    base,
                    steps: args.steps,
                }
            }
        }
        Family::Custom => {
            if args.specs.is_empty() {
                return Err(usage("custom family needs at least one --spec"));
            }
            SweepFamily::Custom(
                args.specs
                    .iter()
                    .map(|classes| NetworkSpec::new(classes.iter().map(|c| (c.r, c.m))))
                    .collect(),
            )
        }
    };
    let specs: Vec<NetworkSpec> = family
        .specs()
        .map_err(usage)?
        .into_iter()
        .map(|s| s.with_eta(args.eta1, args.eta2))
        .collect();
    let reports = analysis::sweep(&SweepFamily::Custom(specs)).map_err(usage)?;
    let mut buf = Vec::new();
    analysis::write_csv(&reports, &mut buf).map_err(usage)?;
    emit(
        out,
        args.out.as_ref(),
        &String::from_utf8(buf).expect("csv is utf-8"),
    )
}

fn csv_text(report: &analysis::LoadReport) -> Result<String, Failure> {
    let mut buf = Vec::new();
    analysis::write_csv(std::slice::from_ref(report), &mut buf).map_err(usage)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

fn fmt(value: &analysis::Rational) -> String {
    format!("{value} ({})", to_decimal(value, 12))
}

fn cmd_compare(args: &CompareArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let spec = args.spec.spec();
    spec.validate().map_err(usage)?;
    let k = spec.node_count();
    let r = spec.load();
    let gap = jensen_gap(&spec);
    let l_c = load_coded(&spec);
    let l_1 = baseline_load(k, r).map_err(usage)?;
    let ratio = &l_c / &l_1;
    let counts = hypercube_counts(&spec);
    let (n1, u1) = baseline_counts(k, r, spec.eta1).map_err(usage)?;

    let text = if args.format == Format::Csv {
        csv_text(&analysis::load_report(&spec).map_err(usage)?)?
    } else if args.format == Format::Json {
        let value = json!({
            "classes": spec.classes_label(),
            "K": k,
            "r": r,
            "L_u": gap.local_gain.to_string(),
            "one_minus_r_over_K": gap.homogeneous_gain.to_string(),
            "jensen_strict": gap.strict,
            "L_c": l_c.to_string(),
            "L_1": l_1.to_string(),
            "ratio_c_over_1": ratio.to_string(),
            "coded_beats_baseline": l_c < l_1,
            "N_c": counts.files.to_string(),
            "U_c": counts.multicast_groups.to_string(),
            "N_1": n1.to_string(),
            "U_1": u1.to_string(),
        });
        serde_json::to_string_pretty(&value).expect("json") + "\n"
    } else {
        let mut text = format!("network {} K={k} r={r}\n", spec.classes_label());
        let _ = writeln!(text, "L_u: {}", fmt(&gap.local_gain));
        let _ = writeln!(
            text,
            "1 - r/K: {} ({})",
            fmt(&gap.homogeneous_gain),
            if gap.strict { "strict" } else { "equality" }
        );
        let _ = writeln!(text, "L_c: {}", fmt(&l_c));
        let _ = writeln!(text, "L_1: {}", fmt(&l_1));
        let _ = writeln!(text, "L_c/L_1: {}", fmt(&ratio));
        if !gap.strict {
            let _ = writeln!(text, "r/(r-1): {}", fmt(&ratio_homogeneous(r)));
        }
        let _ = writeln!(text, "L_c < L_1: {}", if l_c < l_1 { "yes" } else { "no" });
        let _ = writeln!(text, "files: N_c={} N_1={n1}", counts.files);
        let _ = writeln!(
            text,
            "multicast groups: U_c={} U_1={u1}",
            counts.multicast_groups
        );
        text
    };
    emit(out, None, &text)
}

fn cmd_bound(args: &BoundArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let spec = args.spec.spec();
    spec.validate().map_err(usage)?;
    let bound = lower_bound_best(&spec);
    let l_c = load_coded(&spec);
    let mut text = format!("lower bound: {bound}\n");
    let _ = writeln!(text, "L_c: {l_c}");
    let _ = writeln!(text, "ratio: {}", &l_c / &bound);
    let _ = writeln!(
        text,
        "ceiling 2r/(r-1): {}",
        optimality_ceiling(spec.load())
    );
    if let Some(perm) = &args.perm {
        let design = build_design(&spec).map_err(usage)?;
        let value = lower_bound_permutation(&design, perm).map_err(usage)?;
        let _ = writeln!(text, "permutation bound: {value}");
    }
    emit(out, None, &text)
}
