//! Command-line front end: circuit generation, garbling, scheduling,
//! speculation, simulation, protocol runs, and the benchmark driver.

use clap::{Args, Parser, Subcommand};
use gc::accelsim::{self, prepare_job, Mode, ReportFormat, ScheduleMode, SimConfig, Work};
use gc::circuitgen::{self, census};
use gc::fixed::FixedPointFormat;
use gc::garble::{self, fold_inv, fold_order};
use gc::netlist::{emit_bristol, parse_bristol, Netlist};
use gc::protocol::{self, audit, layernorm_offload, FixedMatrix, Transcript};
use gc::scheduler::{order_depth_first, order_fr, schedule_cpfe_netlist, schedule_sr};
use gc::speculator::{encode_stream, speculate, verify_speculation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gc", about = "Garbled-circuit compiler and accelerator toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a circuit and write it in Bristol format.
    Gen(GenArgs),
    /// Gate census of a netlist.
    Census {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Garble a netlist to a table file.
    Garble {
        netlist: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Evaluate a garbled netlist on hex-packed inputs.
    Eval {
        netlist: PathBuf,
        gc_file: PathBuf,
        #[arg(long)]
        inputs: String,
    },
    /// Emit an execution order for a netlist.
    Schedule {
        netlist: PathBuf,
        #[arg(long)]
        mode: String,
        #[arg(long, default_value_t = 8192)]
        wire_mem: usize,
        #[arg(long, default_value_t = 16)]
        cores: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Speculate an instruction stream (binary + DRAM manifest sidecar).
    Speculate {
        netlist: PathBuf,
        #[arg(long)]
        sched: Option<PathBuf>,
        #[arg(long, default_value_t = 8192)]
        wire_mem: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Cycle-accurate simulation of a speculated stream.
    Sim(SimArgs),
    /// Two-party protocol runs.
    Protocol {
        #[command(subcommand)]
        cmd: ProtocolCmd,
    },
    /// Benchmark corpus driver.
    Bench {
        #[command(subcommand)]
        cmd: BenchCmd,
    },
}

#[derive(Args)]
struct GenArgs {
    /// adder | sub | comparator | mul | gelu | exp | layernorm
    func: String,
    #[arg(long, default_value_t = 16)]
    width: usize,
    /// Fraction bits; defaults to width/2.
    #[arg(long)]
    frac: Option<usize>,
    /// Vector length for layernorm.
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Multiplier style: conv | xfbq.
    #[arg(long, default_value = "conv")]
    style: String,
    /// Q-error correction for xfbq multipliers: on | off.
    #[arg(long, default_value = "on")]
    qerror: String,
    /// Emit the reduced (offload) LayerNorm variant.
    #[arg(long)]
    reduced: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    netlist: PathBuf,
    #[arg(long)]
    sched: Option<PathBuf>,
    /// Pre-speculated stream to check against the internal speculation.
    #[arg(long)]
    instr: Option<PathBuf>,
    /// evaluate | garble | functional
    #[arg(long, default_value = "functional")]
    mode: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hex-packed circuit inputs (defaults to all zeros).
    #[arg(long)]
    inputs: Option<String>,
    /// Run the no-reuse reference memory system instead.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    csv: bool,
}

#[derive(Subcommand)]
enum ProtocolCmd {
    /// LayerNorm offload on a random vector, with optional audit.
    Layernorm {
        #[arg(long, default_value_t = 16)]
        width: usize,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        audit: bool,
        /// Degenerate-mask test mode (the audit should fail).
        #[arg(long)]
        zero_masks: bool,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the transcript as JSON lines.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Run an experiment spec and emit JSON + CSV reports.
    Run {
        spec: PathBuf,
        #[arg(short, long, default_value = "report")]
        output: PathBuf,
    },
    /// Compare two reports metric-by-metric.
    Diff { a: PathBuf, b: PathBuf },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Tool(String),
    #[error("{0}")]
    Spec(String),
}

impl CliError {
    fn tool(e: impl std::fmt::Display) -> Self {
        CliError::Tool(e.to_string())
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Tool(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Spec(m)) => {
            eprintln!("spec error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Census { file, json } => cmd_census(&file, json),
        Cmd::Garble { netlist, seed, output } => cmd_garble(&netlist, seed, &output),
        Cmd::Eval { netlist, gc_file, inputs } => cmd_eval(&netlist, &gc_file, &inputs),
        Cmd::Schedule { netlist, mode, wire_mem, cores, output } => {
            cmd_schedule(&netlist, &mode, wire_mem, cores, &output)
        }
        Cmd::Speculate { netlist, sched, wire_mem, output } => {
            cmd_speculate(&netlist, sched.as_deref(), wire_mem, &output)
        }
        Cmd::Sim(args) => cmd_sim(args),
        Cmd::Protocol { cmd } => match cmd {
            ProtocolCmd::Layernorm {
                width,
                n,
                seed,
                audit,
                zero_masks,
                report,
                transcript,
            } => cmd_protocol_layernorm(
                width,
                n,
                seed,
                audit,
                zero_masks,
                report.as_deref(),
                transcript.as_deref(),
            ),
        },
        Cmd::Bench { cmd } => match cmd {
            BenchCmd::Run { spec, output } => cmd_bench_run(&spec, &output),
            BenchCmd::Diff { a, b } => cmd_bench_diff(&a, &b),
        },
    }
}

// ---------------------------------------------------------------------------
// Generators

fn generate(args: &GenArgs) -> Result<Netlist, CliError> {
    let frac = args.frac.unwrap_or(args.width / 2);
    let fmt = FixedPointFormat::new(args.width, frac).map_err(CliError::tool)?;
    let n = match args.func.as_str() {
        "adder" => circuitgen::gen_adder(fmt),
        "sub" => circuitgen::gen_sub(fmt),
        "comparator" => circuitgen::gen_comparator(fmt),
        "mul" => match args.style.as_str() {
            "conv" => circuitgen::gen_mul_conventional(fmt),
            "xfbq" => circuitgen::gen_mul_xfbq(fmt, args.qerror == "on"),
            s => return Err(CliError::Tool(format!("unknown multiplier style {s:?}"))),
        },
        "gelu" => circuitgen::gen_gelu(fmt),
        "exp" => circuitgen::gen_softmax_exp(fmt),
        "layernorm" => circuitgen::gen_layernorm(fmt, args.n, args.reduced),
        f => return Err(CliError::Tool(format!("unknown function {f:?}"))),
    }
    .map_err(CliError::tool)?;
    Ok(n)
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let n = generate(&args)?;
    fs::write(&args.output, emit_bristol(&n)).map_err(CliError::tool)?;
    Ok(())
}

fn load_netlist(path: &Path) -> Result<Netlist, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::tool)?;
    parse_bristol(&text).map_err(CliError::tool)
}

fn cmd_census(file: &Path, json: bool) -> Result<(), CliError> {
    let n = load_netlist(file)?;
    let c = census(&n);
    if json {
        println!("{}", serde_json::to_string(&c).map_err(CliError::tool)?);
    } else {
        println!("and={} xor={} inv={} total={}", c.and, c.xor, c.inv, c.total);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Garble / eval

fn cmd_garble(netlist: &Path, seed: u64, output: &Path) -> Result<(), CliError> {
    let n = load_netlist(netlist)?;
    let folded = fold_inv(&n);
    let gc = garble::garble(&folded, seed).circuit;
    fs::write(output, garble::serialize(&gc)).map_err(CliError::tool)?;
    println!(
        "garbled {} AND gates, {} table bytes",
        folded.and_count(),
        gc.table_bytes()
    );
    Ok(())
}

fn parse_hex_bits(hex: &str, n_bits: usize) -> Result<Vec<bool>, CliError> {
    let bytes = hex::decode(hex).map_err(CliError::tool)?;
    if bytes.len() * 8 < n_bits {
        return Err(CliError::Tool(format!(
            "need {} input bits, got {}",
            n_bits,
            bytes.len() * 8
        )));
    }
    Ok((0..n_bits).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
}

fn bits_to_hex(bits: &[bool]) -> String {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    hex::encode(bytes)
}

fn cmd_eval(netlist: &Path, gc_file: &Path, inputs: &str) -> Result<(), CliError> {
    let n = load_netlist(netlist)?;
    let folded = fold_inv(&n);
    let bytes = fs::read(gc_file).map_err(CliError::tool)?;
    let gc = garble::deserialize(&bytes).map_err(CliError::tool)?;
    let bits = parse_hex_bits(inputs, folded.n_inputs())?;
    let labels = gc.encode(&bits).map_err(CliError::tool)?;
    let res = garble::evaluate(&folded, &gc.tables, &labels).map_err(CliError::tool)?;
    let out = gc.decode(&res.outputs).map_err(CliError::tool)?;
    println!("{}", bits_to_hex(&out));
    Ok(())
}

// ---------------------------------------------------------------------------
// Schedule / speculate

#[derive(Serialize, Deserialize)]
struct ScheduleFile {
    mode: String,
    per_core: Vec<Vec<usize>>,
}

fn order_for(n: &Netlist, mode: ScheduleMode, wire_mem: usize) -> Result<Vec<usize>, CliError> {
    Ok(match mode {
        ScheduleMode::Df => order_depth_first(n),
        ScheduleMode::Fr => order_fr(n),
        ScheduleMode::Sr => schedule_sr(n, wire_mem).map_err(CliError::tool)?,
        ScheduleMode::Cpfe => {
            let lm = cpfe_latency_map(&SimConfig::default());
            schedule_cpfe_netlist(n, wire_mem, &lm).map_err(CliError::tool)?
        }
    })
}

fn cpfe_latency_map(cfg: &SimConfig) -> gc::netlist::LatencyMap {
    gc::netlist::LatencyMap {
        and: u64::from(cfg.latencies.halfgate_eval + cfg.latencies.read_stage),
        xor: u64::from(cfg.latencies.freexor + cfg.latencies.read_stage),
        inv: u64::from(cfg.latencies.freexor + cfg.latencies.read_stage),
    }
}

fn cmd_schedule(
    netlist: &Path,
    mode: &str,
    wire_mem: usize,
    cores: usize,
    output: &Path,
) -> Result<(), CliError> {
    let n = load_netlist(netlist)?;
    let m = ScheduleMode::parse(mode).map_err(CliError::tool)?;
    let order = order_for(&n, m, wire_mem)?;
    let mut per_core = vec![Vec::new(); cores.max(1)];
    per_core[0] = order;
    let file = ScheduleFile { mode: m.as_str().to_string(), per_core };
    fs::write(
        output,
        serde_json::to_string_pretty(&file).map_err(CliError::tool)? + "\n",
    )
    .map_err(CliError::tool)?;
    Ok(())
}

fn load_order(n: &Netlist, sched: Option<&Path>) -> Result<Vec<usize>, CliError> {
    match sched {
        None => Ok((0..n.gates.len()).collect()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(CliError::tool)?;
            let file: ScheduleFile = serde_json::from_str(&text).map_err(CliError::tool)?;
            file.per_core
                .into_iter()
                .find(|c| !c.is_empty())
                .ok_or_else(|| CliError::Tool("schedule file has no gate order".into()))
        }
    }
}

fn cmd_speculate(
    netlist: &Path,
    sched: Option<&Path>,
    wire_mem: usize,
    output: &Path,
) -> Result<(), CliError> {
    let n = load_netlist(netlist)?;
    let order = load_order(&n, sched)?;
    let folded = fold_inv(&n);
    let forder = fold_order(&n, &order);
    let program = speculate(&folded, &forder, wire_mem).map_err(CliError::tool)?;
    verify_speculation(&program, &folded, &forder).map_err(CliError::tool)?;
    let bytes = encode_stream(&program.instructions).map_err(CliError::tool)?;
    fs::write(output, &bytes).map_err(CliError::tool)?;
    let manifest = serde_json::to_string_pretty(&program.manifest()).map_err(CliError::tool)?;
    let mut mpath = output.as_os_str().to_owned();
    mpath.push(".manifest.json");
    fs::write(PathBuf::from(mpath), manifest + "\n").map_err(CliError::tool)?;
    println!(
        "{} instructions, {} OoRW records, {} forced stalls",
        program.instructions.len(),
        program.oorw.len(),
        program.forced_stalls
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Simulation

fn load_config(path: Option<&Path>) -> Result<SimConfig, CliError> {
    match path {
        None => Ok(SimConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(CliError::tool)?;
            SimConfig::from_toml(&text).map_err(CliError::tool)
        }
    }
}

fn cmd_sim(args: SimArgs) -> Result<(), CliError> {
    let n = load_netlist(&args.netlist)?;
    let mut cfg = load_config(args.config.as_deref())?;
    cfg.mode = Mode::parse(&args.mode).map_err(CliError::tool)?;
    cfg.validate().map_err(CliError::tool)?;
    let order = load_order(&n, args.sched.as_deref())?;

    let folded = fold_inv(&n);
    let inputs = match &args.inputs {
        Some(h) => parse_hex_bits(h, folded.n_inputs())?,
        None => vec![false; folded.n_inputs()],
    };
    let (work, gc_ref) = match cfg.mode {
        Mode::Functional => (Work::Functional { inputs: inputs.clone() }, None),
        Mode::Garble => (Work::Garble { seed: args.seed }, None),
        Mode::Evaluate => {
            let gc = garble::garble(&folded, args.seed).circuit;
            let labels = gc.encode(&inputs).map_err(CliError::tool)?;
            (
                Work::Evaluate { tables: gc.tables.clone(), input_labels: labels },
                Some(gc),
            )
        }
    };
    let job = prepare_job(&n, &order, &cfg, 0, work).map_err(CliError::tool)?;

    if let Some(instr) = &args.instr {
        let supplied = fs::read(instr).map_err(CliError::tool)?;
        let internal = encode_stream(&job.program.instructions).map_err(CliError::tool)?;
        if supplied != internal {
            return Err(CliError::Tool(format!(
                "instruction stream {} does not match the speculated stream for this schedule",
                instr.display()
            )));
        }
    }

    let runner = if args.baseline { accelsim::run_baseline_refetch } else { accelsim::run };
    let (outputs, stats) = runner(vec![job], &cfg).map_err(CliError::tool)?;
    match &outputs[0] {
        accelsim::CoreOutput::Bits(bits) => println!("outputs {}", bits_to_hex(bits)),
        accelsim::CoreOutput::Garbled(g) => {
            println!("garbled {} table bytes", g.table_bytes())
        }
        accelsim::CoreOutput::Labels(labels) => {
            let gc = gc_ref.expect("evaluate mode keeps the garbler reference");
            let bits = gc.decode(labels).map_err(CliError::tool)?;
            println!("outputs {}", bits_to_hex(&bits));
        }
    }
    let format = if args.csv { ReportFormat::Csv } else { ReportFormat::Json };
    let rendered = accelsim::report(&stats, format);
    match &args.report {
        Some(p) => fs::write(p, rendered).map_err(CliError::tool)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Protocol

#[derive(Serialize)]
struct ProtocolReport {
    width: usize,
    n: usize,
    seed: u64,
    inputs: Vec<f64>,
    beta: f64,
    gamma: f64,
    recombined: Vec<f64>,
    float_oracle: Vec<f64>,
    max_err_ulp: f64,
    gc_and_count: usize,
    full_gc_and_count: usize,
    audit: Option<protocol::AuditReport>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_protocol_layernorm(
    width: usize,
    n: usize,
    seed: u64,
    do_audit: bool,
    zero_masks: bool,
    report: Option<&Path>,
    transcript_out: Option<&Path>,
) -> Result<(), CliError> {
    let fmt = FixedPointFormat::new(width, width / 2).map_err(CliError::tool)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let xs_f: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let beta_f: f64 = rng.gen_range(0.5..1.5);
    let gamma_f: f64 = rng.gen_range(-1.0..1.0);
    let xs: Vec<i128> = xs_f.iter().map(|&v| fmt.to_raw(v)).collect();
    let x = FixedMatrix::new(1, n, fmt, xs).map_err(CliError::tool)?;
    let mut t = Transcript::new();
    let out = layernorm_offload(
        &x,
        fmt.to_raw(beta_f),
        fmt.to_raw(gamma_f),
        zero_masks,
        seed,
        &mut t,
    )
    .map_err(CliError::tool)?;
    let rec = out
        .server_share
        .add(&out.client_share)
        .map_err(CliError::tool)?;
    let xs_q: Vec<f64> = x.data.iter().map(|&v| fmt.to_f64(v)).collect();
    let oracle = protocol::layernorm_float_oracle(
        &xs_q,
        fmt.to_f64(fmt.to_raw(beta_f)),
        fmt.to_f64(fmt.to_raw(gamma_f)),
    );
    let recombined: Vec<f64> = rec.data.iter().map(|&v| fmt.to_f64(v)).collect();
    let max_err_ulp = recombined
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs() / fmt.ulp())
        .fold(0.0, f64::max);
    let rep = ProtocolReport {
        width,
        n,
        seed,
        inputs: xs_q,
        beta: fmt.to_f64(fmt.to_raw(beta_f)),
        gamma: fmt.to_f64(fmt.to_raw(gamma_f)),
        recombined,
        float_oracle: oracle,
        max_err_ulp,
        gc_and_count: out.gc_and_count,
        full_gc_and_count: protocol::full_layernorm_census(fmt, n)
            .map_err(CliError::tool)?
            .and,
        audit: do_audit.then(|| audit(&t)),
    };
    let text = serde_json::to_string_pretty(&rep).map_err(CliError::tool)? + "\n";
    match report {
        Some(p) => fs::write(p, text).map_err(CliError::tool)?,
        None => print!("{text}"),
    }
    if let Some(p) = transcript_out {
        fs::write(p, t.to_json_lines()).map_err(CliError::tool)?;
    }
    if let Some(a) = &rep.audit {
        if !a.pass {
            eprintln!("audit failed: {:?}", a.violations);
            return Err(CliError::Tool("transcript audit failed".into()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Benchmark driver

#[derive(Debug, Deserialize)]
struct ExperimentSpec {
    #[serde(default)]
    benchmark: Vec<BenchmarkEntry>,
    experiment: ExperimentSection,
}

#[derive(Debug, Deserialize)]
struct BenchmarkEntry {
    name: String,
    func: String,
    #[serde(default = "default_width")]
    width: usize,
    frac: Option<usize>,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_style")]
    style: String,
    #[serde(default = "default_qerror")]
    qerror: String,
    #[serde(default)]
    reduced: bool,
    /// Expected content hash; verified on regeneration when present.
    hash: Option<String>,
}

fn default_width() -> usize {
    16
}
fn default_n() -> usize {
    8
}
fn default_style() -> String {
    "conv".into()
}
fn default_qerror() -> String {
    "on".into()
}

#[derive(Debug, Deserialize)]
struct ExperimentSection {
    schedules: Vec<String>,
    #[serde(default = "default_sim_modes")]
    sim_modes: Vec<String>,
    #[serde(default = "default_engines")]
    engines: Vec<String>,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default)]
    wire_mem: Option<usize>,
    config: Option<String>,
}

fn default_sim_modes() -> Vec<String> {
    vec!["functional".into()]
}
fn default_engines() -> Vec<String> {
    vec!["reuse".into()]
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct ReportRow {
    benchmark: String,
    netlist_hash: String,
    schedule: String,
    sim_mode: String,
    engine: String,
    seed: u64,
    total_cycles: u64,
    busy_cycles: u64,
    pipeline_stall_cycles: u64,
    memory_stall_cycles: u64,
    oorw_count: u64,
    dram_reads: u64,
    dram_read_bytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportBundle {
    schema_version: u32,
    rows: Vec<ReportRow>,
}

const REPORT_SCHEMA_VERSION: u32 = 1;
const CSV_HEADER: &str = "benchmark,netlist_hash,schedule,sim_mode,engine,seed,total_cycles,\
busy_cycles,pipeline_stall_cycles,memory_stall_cycles,oorw_count,dram_reads,dram_read_bytes";

fn fnv1a64(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

fn gen_benchmark(b: &BenchmarkEntry) -> Result<(Netlist, String), CliError> {
    let args = GenArgs {
        func: b.func.clone(),
        width: b.width,
        frac: b.frac,
        n: b.n,
        style: b.style.clone(),
        qerror: b.qerror.clone(),
        reduced: b.reduced,
        output: PathBuf::new(),
    };
    let n = generate(&args)?;
    let hash = fnv1a64(emit_bristol(&n).as_bytes());
    if let Some(expect) = &b.hash {
        if expect != &hash {
            return Err(CliError::Spec(format!(
                "benchmark {}: netlist hash {hash} does not match pinned {expect}",
                b.name
            )));
        }
    }
    Ok((n, hash))
}

fn run_experiment(spec: &ExperimentSpec) -> Result<ReportBundle, CliError> {
    let mut cfg = match &spec.experiment.config {
        Some(text) => SimConfig::from_toml(text).map_err(|e| CliError::Spec(e.to_string()))?,
        None => SimConfig::default(),
    };
    if let Some(wm) = spec.experiment.wire_mem {
        cfg.wire_mem_entries = wm;
    }
    let mut rows = Vec::new();
    for b in &spec.benchmark {
        let (n, hash) = gen_benchmark(b)?;
        for sched in &spec.experiment.schedules {
            let mode = ScheduleMode::parse(sched).map_err(|e| CliError::Spec(e.to_string()))?;
            let order = order_for(&n, mode, cfg.wire_mem_entries)?;
            for sim_mode in &spec.experiment.sim_modes {
                let m = Mode::parse(sim_mode).map_err(|e| CliError::Spec(e.to_string()))?;
                for engine in &spec.experiment.engines {
                    for &seed in &spec.experiment.seeds {
                        let mut cfg = cfg;
                        cfg.mode = m;
                        let folded = fold_inv(&n);
                        let work = match m {
                            Mode::Functional => {
                                Work::Functional { inputs: vec![false; n.n_inputs()] }
                            }
                            Mode::Garble => Work::Garble { seed },
                            Mode::Evaluate => {
                                let gc = garble::garble(&folded, seed).circuit;
                                let labels = gc
                                    .encode(&vec![false; folded.n_inputs()])
                                    .map_err(CliError::tool)?;
                                Work::Evaluate { tables: gc.tables, input_labels: labels }
                            }
                        };
                        let job =
                            prepare_job(&n, &order, &cfg, 0, work).map_err(CliError::tool)?;
                        let runner = match engine.as_str() {
                            "reuse" => accelsim::run,
                            "refetch" => accelsim::run_baseline_refetch,
                            e => {
                                return Err(CliError::Spec(format!("unknown engine {e:?}")))
                            }
                        };
                        let (_, stats) = runner(vec![job], &cfg).map_err(CliError::tool)?;
                        let c = stats.cores[0];
                        rows.push(ReportRow {
                            benchmark: b.name.clone(),
                            netlist_hash: hash.clone(),
                            schedule: sched.clone(),
                            sim_mode: sim_mode.clone(),
                            engine: engine.clone(),
                            seed,
                            total_cycles: c.total_cycles,
                            busy_cycles: c.busy_cycles,
                            pipeline_stall_cycles: c.pipeline_stall_cycles,
                            memory_stall_cycles: c.memory_stall_cycles,
                            oorw_count: c.oorw_count,
                            dram_reads: stats.dram.total_reads(),
                            dram_read_bytes: stats.dram.instructions.read_bytes
                                + stats.dram.tables.read_bytes
                                + stats.dram.oorw.read_bytes
                                + stats.dram.live_writeback.read_bytes,
                        });
                    }
                }
            }
        }
    }
    Ok(ReportBundle { schema_version: REPORT_SCHEMA_VERSION, rows })
}

fn render_csv(bundle: &ReportBundle) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &bundle.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.benchmark,
            r.netlist_hash,
            r.schedule,
            r.sim_mode,
            r.engine,
            r.seed,
            r.total_cycles,
            r.busy_cycles,
            r.pipeline_stall_cycles,
            r.memory_stall_cycles,
            r.oorw_count,
            r.dram_reads,
            r.dram_read_bytes
        ));
    }
    out
}

fn cmd_bench_run(spec_path: &Path, output: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| CliError::Spec(format!("{}: {e}", spec_path.display())))?;
    let spec: ExperimentSpec =
        toml::from_str(&text).map_err(|e| CliError::Spec(e.to_string()))?;
    let bundle = run_experiment(&spec)?;
    let json = serde_json::to_string_pretty(&bundle).map_err(CliError::tool)? + "\n";
    fs::write(output.with_extension("json"), json).map_err(CliError::tool)?;
    fs::write(output.with_extension("csv"), render_csv(&bundle)).map_err(CliError::tool)?;
    println!("{} rows", bundle.rows.len());
    Ok(())
}

#[derive(Serialize)]
struct DiffRow {
    key: String,
    metric: String,
    a: u64,
    b: u64,
    ratio: Option<f64>,
    direction: &'static str,
}

fn cmd_bench_diff(a_path: &Path, b_path: &Path) -> Result<(), CliError> {
    let load = |p: &Path| -> Result<ReportBundle, CliError> {
        let text = fs::read_to_string(p).map_err(CliError::tool)?;
        serde_json::from_str(&text).map_err(|e| CliError::Spec(e.to_string()))
    };
    let a = load(a_path)?;
    let b = load(b_path)?;
    if a.schema_version != b.schema_version {
        return Err(CliError::Spec(format!(
            "schema mismatch: {} vs {}",
            a.schema_version, b.schema_version
        )));
    }
    let key = |r: &ReportRow| {
        format!(
            "{}/{}/{}/{}/{}",
            r.benchmark, r.schedule, r.sim_mode, r.engine, r.seed
        )
    };
    let a_map: BTreeMap<String, &ReportRow> = a.rows.iter().map(|r| (key(r), r)).collect();
    let b_map: BTreeMap<String, &ReportRow> = b.rows.iter().map(|r| (key(r), r)).collect();
    let mut out: Vec<DiffRow> = Vec::new();
    let mut gaps: Vec<String> = Vec::new();
    for (k, ra) in &a_map {
        let Some(rb) = b_map.get(k) else {
            gaps.push(format!("{k} (only in {})", a_path.display()));
            continue;
        };
        let metrics: [(&str, u64, u64); 6] = [
            ("total_cycles", ra.total_cycles, rb.total_cycles),
            ("busy_cycles", ra.busy_cycles, rb.busy_cycles),
            ("pipeline_stall_cycles", ra.pipeline_stall_cycles, rb.pipeline_stall_cycles),
            ("memory_stall_cycles", ra.memory_stall_cycles, rb.memory_stall_cycles),
            ("oorw_count", ra.oorw_count, rb.oorw_count),
            ("dram_reads", ra.dram_reads, rb.dram_reads),
        ];
        for (m, va, vb) in metrics {
            let ratio = if va == 0 { None } else { Some(vb as f64 / va as f64) };
            let direction = match vb.cmp(&va) {
                std::cmp::Ordering::Less => "improved",
                std::cmp::Ordering::Equal => "equal",
                std::cmp::Ordering::Greater => "regressed",
            };
            out.push(DiffRow { key: k.clone(), metric: m.into(), a: va, b: vb, ratio, direction });
        }
    }
    for k in b_map.keys() {
        if !a_map.contains_key(k) {
            gaps.push(format!("{k} (only in {})", b_path.display()));
        }
    }
    #[derive(Serialize)]
    struct DiffReport {
        rows: Vec<DiffRow>,
        gaps: Vec<String>,
    }
    let rep = DiffReport { rows: out, gaps };
    use std::io::Write;
    let _ = writeln!(
        std::io::stdout(),
        "{}",
        serde_json::to_string_pretty(&rep).map_err(CliError::tool)?
    );
    Ok(())
}
