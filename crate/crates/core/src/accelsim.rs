//! Cycle-level accelerator model.
//!
//! Each core runs a four-stage in-order pipeline (Write Address Preemption,
//! Read, Execute, Write) over a speculated instruction stream, backed by a
//! Wire Memory with OoR bits, a FIFO Table Memory, and a prefetch engine for
//! Out-of-Range Wires. All cores share one DRAM channel with fixed latency,
//! bounded bandwidth, and request coalescing. Functional results ride on the
//! garbling/evaluation sessions so garble-mode output is bit-identical to the
//! software reference.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::garble::{
    fold_inv, fold_order, EvalSession, FoldedNetlist, GarbleError, GarbleSession, GarbledCircuit,
    GarbledGate, Label,
};
use crate::netlist::{GateKind, LatencyMap, Netlist, WireId};
use crate::scheduler::{
    order_depth_first, order_fr, schedule_cpfe_netlist, schedule_sr, ScheduleError,
};
use crate::speculator::{speculate, verify_speculation, SpecError, SpeculationProgram};

pub const DEADLOCK_LIMIT: u64 = 1_000_000;
const INSTR_WORD_BYTES: u64 = 8;
const LABEL_BYTES_DRAM: u64 = 16;
const TABLE_BYTES_DRAM: u64 = 32;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("bad job: {0}")]
    Job(String),
    #[error("deadlock at cycle {cycle}\n{dump}")]
    Deadlock { cycle: u64, dump: String },
    #[error("model violation at cycle {cycle} core {core}: {msg}")]
    Model { cycle: u64, core: usize, msg: String },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Sched(#[from] ScheduleError),
    #[error(transparent)]
    Garble(#[from] GarbleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Garble,
    Evaluate,
    Functional,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode, SimError> {
        match s {
            "garble" => Ok(Mode::Garble),
            "evaluate" => Ok(Mode::Evaluate),
            "functional" => Ok(Mode::Functional),
            _ => Err(SimError::Config(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Latencies {
    pub read_stage: u32,
    pub write_stage: u32,
    pub halfgate_eval: u32,
    pub halfgate_garble: u32,
    pub freexor: u32,
    pub preempt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DramConfig {
    pub latency_cycles: u64,
    pub bytes_per_cycle: u64,
    pub coalesce_window_cycles: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimConfig {
    pub n_cores: usize,
    pub wire_mem_entries: usize,
    pub table_mem_bytes: usize,
    pub prefetch_buf_entries: usize,
    pub instr_mem_bytes: usize,
    pub latencies: Latencies,
    pub dram: DramConfig,
    pub mode: Mode,
    /// Model memories at twice the compute clock by halving the Read and
    /// Write stage occupancies (rounded up).
    pub double_clock_memories: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_cores: 16,
            wire_mem_entries: 8192,
            table_mem_bytes: 2048,
            prefetch_buf_entries: 64,
            instr_mem_bytes: 16384,
            latencies: Latencies {
                read_stage: 3,
                write_stage: 2,
                halfgate_eval: 18,
                halfgate_garble: 21,
                freexor: 1,
                preempt: 1,
            },
            dram: DramConfig {
                latency_cycles: 100,
                bytes_per_cycle: 32,
                coalesce_window_cycles: 4,
            },
            mode: Mode::Functional,
            double_clock_memories: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let l = &self.latencies;
        let positives = [
            self.n_cores as u64,
            self.wire_mem_entries as u64,
            self.table_mem_bytes as u64,
            self.prefetch_buf_entries as u64,
            self.instr_mem_bytes as u64,
            l.read_stage as u64,
            l.write_stage as u64,
            l.halfgate_eval as u64,
            l.halfgate_garble as u64,
            l.freexor as u64,
            l.preempt as u64,
            self.dram.latency_cycles,
            self.dram.bytes_per_cycle,
            self.dram.coalesce_window_cycles,
        ];
        if positives.iter().any(|&v| v == 0) {
            return Err(SimError::Config("all sizes and latencies must be positive".into()));
        }
        Ok(())
    }

    /// Flat key/value TOML mirroring the config fields.
    pub fn from_toml(text: &str) -> Result<SimConfig, SimError> {
        let table: toml::Table =
            text.parse().map_err(|e| SimError::Config(format!("toml: {e}")))?;
        let mut c = SimConfig::default();
        let as_u64 = |v: &toml::Value, k: &str| {
            v.as_integer()
                .filter(|&i| i >= 0)
                .map(|i| i as u64)
                .ok_or_else(|| SimError::Config(format!("{k} must be a non-negative integer")))
        };
        for (k, v) in &table {
            match k.as_str() {
                "n_cores" => c.n_cores = as_u64(v, k)? as usize,
                "wire_mem_entries" => c.wire_mem_entries = as_u64(v, k)? as usize,
                "table_mem_bytes" => c.table_mem_bytes = as_u64(v, k)? as usize,
                "prefetch_buf_entries" => c.prefetch_buf_entries = as_u64(v, k)? as usize,
                "instr_mem_bytes" => c.instr_mem_bytes = as_u64(v, k)? as usize,
                "read_stage" => c.latencies.read_stage = as_u64(v, k)? as u32,
                "write_stage" => c.latencies.write_stage = as_u64(v, k)? as u32,
                "halfgate_eval" => c.latencies.halfgate_eval = as_u64(v, k)? as u32,
                "halfgate_garble" => c.latencies.halfgate_garble = as_u64(v, k)? as u32,
                "freexor" => c.latencies.freexor = as_u64(v, k)? as u32,
                "preempt" => c.latencies.preempt = as_u64(v, k)? as u32,
                "dram_latency_cycles" => c.dram.latency_cycles = as_u64(v, k)?,
                "dram_bytes_per_cycle" => c.dram.bytes_per_cycle = as_u64(v, k)?,
                "dram_coalesce_window_cycles" => c.dram.coalesce_window_cycles = as_u64(v, k)?,
                "double_clock_memories" => {
                    c.double_clock_memories = v
                        .as_bool()
                        .ok_or_else(|| SimError::Config(format!("{k} must be a bool")))?
                }
                "mode" => {
                    c.mode = Mode::parse(
                        v.as_str()
                            .ok_or_else(|| SimError::Config(format!("{k} must be a string")))?,
                    )?
                }
                other => return Err(SimError::Config(format!("unknown key {other:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }
}

/// Functional payload a core carries; must match the configured mode.
pub enum Work {
    Functional { inputs: Vec<bool> },
    Garble { seed: u64 },
    Evaluate { tables: Vec<GarbledGate>, input_labels: Vec<Label> },
}

pub struct CoreJob {
    pub folded: FoldedNetlist,
    pub order: Vec<usize>,
    pub program: SpeculationProgram,
    /// Cores with equal stream ids fetch the same DRAM offsets and coalesce.
    pub stream_id: usize,
    pub work: Work,
}

/// Fold, order-map, speculate, and verify a netlist into a runnable job.
pub fn prepare_job(
    n: &Netlist,
    order: &[usize],
    cfg: &SimConfig,
    stream_id: usize,
    work: Work,
) -> Result<CoreJob, SimError> {
    let folded = fold_inv(n);
    let forder = fold_order(n, order);
    let program = speculate(&folded, &forder, cfg.wire_mem_entries)?;
    verify_speculation(&program, &folded, &forder)?;
    Ok(CoreJob { folded, order: forder, program, stream_id, work })
}

pub enum CoreOutput {
    Bits(Vec<bool>),
    Garbled(GarbledCircuit),
    Labels(Vec<Label>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StreamTraffic {
    pub reads: u64,
    pub read_bytes: u64,
    pub writes: u64,
    pub write_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DramStats {
    pub instructions: StreamTraffic,
    pub tables: StreamTraffic,
    pub oorw: StreamTraffic,
    pub live_writeback: StreamTraffic,
    pub coalesced: u64,
}

impl DramStats {
    pub fn total_reads(&self) -> u64 {
        self.instructions.reads + self.tables.reads + self.oorw.reads + self.live_writeback.reads
    }

    pub fn total_accesses(&self) -> u64 {
        self.total_reads()
            + self.instructions.writes
            + self.tables.writes
            + self.oorw.writes
            + self.live_writeback.writes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoreStats {
    pub total_cycles: u64,
    pub busy_cycles: u64,
    pub pipeline_stall_cycles: u64,
    pub memory_stall_cycles: u64,
    pub oorw_count: u64,
    pub instructions: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimStats {
    pub schema_version: u32,
    pub mode: Mode,
    pub total_cycles: u64,
    pub cores: Vec<CoreStats>,
    pub dram: DramStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Stream {
    Instructions,
    Tables,
    Oorw,
    LiveWriteback,
}

struct DramChannel {
    latency: u64,
    bpc: u64,
    window: u64,
    bus_free: u64,
    inflight: HashMap<(Stream, usize, u64), (u64, u64)>,
    preloaded: HashSet<(Stream, usize, u64)>,
    stats: DramStats,
}

impl DramChannel {
    fn new(cfg: &SimConfig) -> Self {
        DramChannel {
            latency: cfg.dram.latency_cycles,
            bpc: cfg.dram.bytes_per_cycle,
            window: cfg.dram.coalesce_window_cycles,
            bus_free: 0,
            inflight: HashMap::new(),
            preloaded: HashSet::new(),
            stats: DramStats::default(),
        }
    }

    fn traffic(&mut self, s: Stream) -> &mut StreamTraffic {
        match s {
            Stream::Instructions => &mut self.stats.instructions,
            Stream::Tables => &mut self.stats.tables,
            Stream::Oorw => &mut self.stats.oorw,
            Stream::LiveWriteback => &mut self.stats.live_writeback,
        }
    }

    /// Initial burst before cycle 1: accounted, shared across cores with the
    /// same stream id, no latency.
    fn preload(&mut self, s: Stream, stream_id: usize, offset: u64, bytes: u64) {
        if !self.preloaded.insert((s, stream_id, offset)) {
            self.stats.coalesced += 1;
            return;
        }
        let t = self.traffic(s);
        t.reads += 1;
        t.read_bytes += bytes;
    }

    fn read(&mut self, s: Stream, stream_id: usize, offset: u64, bytes: u64, now: u64) -> u64 {
        let key = (s, stream_id, offset);
        if let Some(&(first, done)) = self.inflight.get(&key) {
            if now.saturating_sub(first) <= self.window {
                self.stats.coalesced += 1;
                return done;
            }
        }
        let start = self.bus_free.max(now);
        self.bus_free = start + bytes.div_ceil(self.bpc);
        let done = self.bus_free + self.latency;
        let t = self.traffic(s);
        t.reads += 1;
        t.read_bytes += bytes;
        self.inflight.insert(key, (now, done));
        done
    }

    fn write(&mut self, s: Stream, bytes: u64, now: u64) {
        self.bus_free = self.bus_free.max(now) + bytes.div_ceil(self.bpc);
        let t = self.traffic(s);
        t.writes += 1;
        t.write_bytes += bytes;
    }
}

enum Engine {
    Functional { values: Vec<Option<bool>> },
    Garble { session: GarbleSession, tables: Vec<Option<GarbledGate>> },
    Evaluate { session: EvalSession, tables_exec: Vec<GarbledGate> },
}

impl Engine {
    fn exec(&mut self, f: &FoldedNetlist, idx: usize, and_seq: usize) {
        match self {
            Engine::Functional { values } => {
                let g = f.gates[idx];
                let a = values[g.in0].expect("operand value") ^ g.flip0;
                let b = values[g.in1].expect("operand value") ^ g.flip1;
                values[g.out] = Some(match g.kind {
                    GateKind::And => a & b,
                    GateKind::Xor => a ^ b,
                    GateKind::Inv => unreachable!(),
                });
            }
            Engine::Garble { session, tables } => {
                tables[idx] = session.garble_gate(f, idx);
            }
            Engine::Evaluate { session, tables_exec } => {
                let table = match f.gates[idx].kind {
                    GateKind::And => Some(&tables_exec[and_seq]),
                    _ => None,
                };
                session.eval_gate(f, idx, table);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RecRt {
    triggered_at: Option<u64>,
    baseline_arrival: Option<u64>,
    landed: bool,
    /// Retired-count the transfer must wait for: all earlier non-WEN writers
    /// of the target address (write priority over transfer).
    min_retire: usize,
}

enum Ready {
    Yes,
    Mem,
    Pipe,
}

/// In-order core. Every stage accepts one instruction per cycle; Execute is
/// a pipelined unit whose result appears after the full gate latency, with
/// results completing in program order. An operand is readable once its
/// producer leaves Execute (memory or forwarding path).
struct Core {
    id: usize,
    folded: FoldedNetlist,
    order: Vec<usize>,
    prog: SpeculationProgram,
    stream: usize,
    engine: Engine,

    occupant: Vec<Option<WireId>>,
    oor: Vec<bool>,

    issued: usize,
    last_issue: u64,
    rq: VecDeque<(usize, u64)>,
    last_r_start: u64,
    r_inflight: VecDeque<(usize, u64)>,
    xq: VecDeque<usize>,
    last_x_entry: u64,
    last_retire_at: u64,
    x_end_of: Vec<u64>,
    w_retire: VecDeque<(usize, u64)>,
    retired: usize,
    total: usize,

    window: usize,
    instr_issued: usize,
    instr_done: usize,
    instr_q: VecDeque<u64>,

    tbl_cap: usize,
    tbl_total: usize,
    tbl_issued: usize,
    tbl_ready: usize,
    tbl_q: VecDeque<u64>,
    and_consumed: usize,

    recs: Vec<RecRt>,
    consumer_map: HashMap<(usize, u8), usize>,
    trigger_map: HashMap<(usize, u8), Vec<usize>>,
    slot_arrival: HashMap<usize, u64>,
    slot_buffered: HashSet<usize>,
    buffer_used: usize,
    next_prefetch: usize,

    busy: u64,
    ps: u64,
    ms: u64,
    completion: u64,
    finished: bool,
    wrote_now: Vec<usize>,
    mem_wait: bool,
    busy_now: bool,
}

impl Core {
    fn new(id: usize, job: CoreJob, cfg: &SimConfig, n_jobs: usize) -> Result<Core, SimError> {
        let CoreJob { folded, order, program, stream_id, work } = job;
        if program.wire_mem_entries != cfg.wire_mem_entries {
            return Err(SimError::Job(format!(
                "program speculated for {} wire memory entries, config has {}",
                program.wire_mem_entries, cfg.wire_mem_entries
            )));
        }
        if order.len() != folded.gates.len() || program.instructions.len() != order.len() {
            return Err(SimError::Job("order/program/netlist length mismatch".into()));
        }
        let engine = match (cfg.mode, work) {
            (Mode::Functional, Work::Functional { inputs }) => {
                if inputs.len() != folded.n_inputs() {
                    return Err(SimError::Job("input count mismatch".into()));
                }
                let mut values = vec![None; folded.n_wires];
                for (v, b) in values.iter_mut().zip(&inputs) {
                    *v = Some(*b);
                }
                Engine::Functional { values }
            }
            (Mode::Garble, Work::Garble { seed }) => Engine::Garble {
                session: GarbleSession::new(&folded, seed),
                tables: vec![None; folded.gates.len()],
            },
            (Mode::Evaluate, Work::Evaluate { tables, input_labels }) => {
                if tables.len() != folded.and_count() {
                    return Err(SimError::Job("table count mismatch".into()));
                }
                // DRAM lays tables out in this core's execution order.
                let mut and_rank = HashMap::new();
                let mut k = 0usize;
                for (i, g) in folded.gates.iter().enumerate() {
                    if g.kind == GateKind::And {
                        and_rank.insert(i, k);
                        k += 1;
                    }
                }
                let tables_exec: Vec<GarbledGate> = order
                    .iter()
                    .filter(|&&g| folded.gates[g].kind == GateKind::And)
                    .map(|g| tables[and_rank[g]])
                    .collect();
                Engine::Evaluate {
                    session: EvalSession::new(&folded, &input_labels)?,
                    tables_exec,
                }
            }
            _ => return Err(SimError::Job("work payload does not match configured mode".into())),
        };

        let mut occupant = vec![None; cfg.wire_mem_entries];
        for &(wire, addr) in &program.preload {
            occupant[addr] = Some(wire);
        }

        let mut consumer_map = HashMap::new();
        let mut trigger_map: HashMap<(usize, u8), Vec<usize>> = HashMap::new();
        let mut recs = Vec::with_capacity(program.oorw.len());
        for (ri, rec) in program.oorw.iter().enumerate() {
            consumer_map.insert((rec.consumer_instr, rec.consumer_operand), ri);
            if !rec.forced_stall {
                if let Some(t) = rec.trigger {
                    trigger_map.entry(t).or_default().push(ri);
                }
            }
            let min_retire = (0..rec.consumer_instr)
                .rev()
                .find(|&i| {
                    program.instructions[i].write_addr == rec.target_addr
                        && !program.instructions[i].wen
                })
                .map(|i| i + 1)
                .unwrap_or(0);
            recs.push(RecRt { min_retire, ..RecRt::default() });
        }

        let total = order.len();
        let tbl_total = if cfg.mode == Mode::Evaluate { folded.and_count() } else { 0 };
        Ok(Core {
            id,
            stream: stream_id,
            engine,
            occupant,
            oor: vec![false; cfg.wire_mem_entries],
            issued: 0,
            last_issue: 0,
            rq: VecDeque::new(),
            last_r_start: 0,
            r_inflight: VecDeque::new(),
            xq: VecDeque::new(),
            last_x_entry: 0,
            last_retire_at: 0,
            x_end_of: vec![u64::MAX; total],
            w_retire: VecDeque::new(),
            retired: 0,
            total,
            window: (cfg.instr_mem_bytes / INSTR_WORD_BYTES as usize / n_jobs).max(1),
            instr_issued: 0,
            instr_done: 0,
            instr_q: VecDeque::new(),
            tbl_cap: (cfg.table_mem_bytes / TABLE_BYTES_DRAM as usize).max(1),
            tbl_total,
            tbl_issued: 0,
            tbl_ready: 0,
            tbl_q: VecDeque::new(),
            and_consumed: 0,
            recs,
            consumer_map,
            trigger_map,
            slot_arrival: HashMap::new(),
            slot_buffered: HashSet::new(),
            buffer_used: 0,
            next_prefetch: 0,
            busy: 0,
            ps: 0,
            ms: 0,
            completion: 0,
            finished: total == 0,
            wrote_now: Vec::new(),
            mem_wait: false,
            busy_now: false,
            folded,
            order,
            prog: program,
        })
    }

    fn preload_streams(&mut self, dram: &mut DramChannel) {
        let instrs = self.window.min(self.total);
        for i in 0..instrs {
            dram.preload(Stream::Instructions, self.stream, i as u64, INSTR_WORD_BYTES);
        }
        self.instr_issued = instrs;
        self.instr_done = instrs;
        let tbls = self.tbl_cap.min(self.tbl_total);
        for i in 0..tbls {
            dram.preload(Stream::Tables, self.stream, i as u64, TABLE_BYTES_DRAM);
        }
        self.tbl_issued = tbls;
        self.tbl_ready = tbls;
    }

    fn gate_at(&self, pos: usize) -> crate::garble::FoldedGate {
        self.folded.gates[self.order[pos]]
    }

    fn exec_occupancy(&self, pos: usize, cfg: &SimConfig) -> u32 {
        match (self.gate_at(pos).kind, cfg.mode) {
            (GateKind::And, Mode::Garble) => cfg.latencies.halfgate_garble,
            (GateKind::And, _) => cfg.latencies.halfgate_eval,
            _ => cfg.latencies.freexor,
        }
    }

    fn mem_occupancy(base: u32, cfg: &SimConfig) -> u32 {
        if cfg.double_clock_memories {
            base.div_ceil(2)
        } else {
            base
        }
    }

    fn prefetch(&mut self, cycle: u64, dram: &mut DramChannel, cfg: &SimConfig) {
        while self.next_prefetch < self.prog.oorw.len() {
            let rec = &self.prog.oorw[self.next_prefetch];
            if self.slot_arrival.contains_key(&rec.dram_slot) {
                self.next_prefetch += 1;
                continue;
            }
            let available = match rec.producer_instr {
                None => true,
                Some(p) => p < self.retired,
            };
            if !available || self.buffer_used >= cfg.prefetch_buf_entries {
                break;
            }
            let done = dram.read(
                Stream::Oorw,
                self.stream,
                rec.dram_slot as u64,
                LABEL_BYTES_DRAM,
                cycle,
            );
            self.slot_arrival.insert(rec.dram_slot, done);
            self.slot_buffered.insert(rec.dram_slot);
            self.buffer_used += 1;
            self.next_prefetch += 1;
        }
    }

    fn fetch_engines(&mut self, cycle: u64, dram: &mut DramChannel) {
        while self.instr_issued < self.total && self.instr_issued - self.issued < self.window {
            let done = dram.read(
                Stream::Instructions,
                self.stream,
                self.instr_issued as u64,
                INSTR_WORD_BYTES,
                cycle,
            );
            self.instr_q.push_back(done);
            self.instr_issued += 1;
        }
        while self.instr_q.front().is_some_and(|&d| d <= cycle) {
            self.instr_q.pop_front();
            self.instr_done += 1;
        }
        while self.tbl_issued < self.tbl_total && self.tbl_issued - self.and_consumed < self.tbl_cap
        {
            let done = dram.read(
                Stream::Tables,
                self.stream,
                self.tbl_issued as u64,
                TABLE_BYTES_DRAM,
                cycle,
            );
            self.tbl_q.push_back(done);
            self.tbl_issued += 1;
        }
        while self.tbl_q.front().is_some_and(|&d| d <= cycle) {
            self.tbl_q.pop_front();
            self.tbl_ready += 1;
        }
    }

    fn operand_ready(
        &mut self,
        pos: usize,
        op: u8,
        addr: usize,
        wire: WireId,
        cycle: u64,
        dram: &mut DramChannel,
        baseline: bool,
    ) -> Result<Ready, String> {
        // A duplicated operand (in0 == in1) shares one transfer record.
        let ri = self.consumer_map.get(&(pos, op)).copied().or_else(|| {
            self.consumer_map.get(&(pos, 1 - op)).copied().filter(|&ri| {
                let r = &self.prog.oorw[ri];
                r.wire == wire && r.target_addr == addr
            })
        });
        if let Some(ri) = ri {
            let rec = &self.prog.oorw[ri];
            if !self.recs[ri].landed {
                if self.recs[ri].triggered_at.is_none() && (baseline || rec.forced_stall) {
                    self.recs[ri].triggered_at = Some(cycle);
                    self.oor[rec.target_addr] = true;
                    if baseline {
                        self.recs[ri].baseline_arrival = Some(dram.read(
                            Stream::Oorw,
                            self.stream,
                            ri as u64,
                            LABEL_BYTES_DRAM,
                            cycle,
                        ));
                    }
                }
                return Ok(Ready::Mem);
            }
            if self.occupant[addr] != Some(wire) {
                return Err(format!("OoRW landed wrong: wire {wire} not at address {addr}"));
            }
            return Ok(Ready::Yes);
        }
        if self.oor[addr] {
            return Ok(Ready::Mem);
        }
        match self.prog.producer_of[wire] {
            Some(p) if p >= self.retired => {
                // Producer still in flight: the value becomes readable via
                // memory or the forwarding path once its Execute finishes.
                if self.x_end_of[p] <= cycle {
                    Ok(Ready::Yes)
                } else {
                    Ok(Ready::Pipe)
                }
            }
            _ => {
                if self.occupant[addr] != Some(wire) {
                    return Err(format!(
                        "read of wire {wire} at address {addr} finds {:?}",
                        self.occupant[addr]
                    ));
                }
                Ok(Ready::Yes)
            }
        }
    }

    fn retire(&mut self, pos: usize, cycle: u64, dram: &mut DramChannel, cfg: &SimConfig) {
        let instr = self.prog.instructions[pos];
        let gate = self.gate_at(pos);
        if !instr.wen {
            self.occupant[instr.write_addr] = Some(gate.out);
            self.wrote_now.push(instr.write_addr);
        }
        if instr.live || instr.wen {
            dram.write(Stream::LiveWriteback, LABEL_BYTES_DRAM, cycle);
        }
        if cfg.mode == Mode::Garble && gate.kind == GateKind::And {
            dram.write(Stream::Tables, TABLE_BYTES_DRAM, cycle);
        }
        self.retired += 1;
    }

    fn land_transfers(&mut self, cycle: u64, baseline: bool) {
        for ri in 0..self.recs.len() {
            let rt = self.recs[ri];
            if rt.landed {
                continue;
            }
            let trig = match rt.triggered_at {
                Some(t) => t,
                None => continue,
            };
            let rec = &self.prog.oorw[ri];
            let arrival = if baseline {
                rt.baseline_arrival
            } else {
                self.slot_arrival.get(&rec.dram_slot).copied()
            };
            let arrival = match arrival {
                Some(a) => a,
                None => continue,
            };
            let earliest = arrival.max(trig + u64::from(!baseline));
            if cycle < earliest
                || self.retired < rt.min_retire
                || self.wrote_now.contains(&rec.target_addr)
            {
                continue;
            }
            self.occupant[rec.target_addr] = Some(rec.wire);
            self.oor[rec.target_addr] = false;
            self.recs[ri].landed = true;
            // The staging entry frees on first landing; later records of the
            // same slot reuse the already-fetched data.
            if !baseline && self.slot_buffered.remove(&rec.dram_slot) {
                self.buffer_used -= 1;
            }
        }
    }

    /// One cycle; returns whether an instruction retired.
    fn tick(
        &mut self,
        cycle: u64,
        dram: &mut DramChannel,
        cfg: &SimConfig,
        baseline: bool,
    ) -> Result<bool, SimError> {
        self.wrote_now.clear();
        self.mem_wait = false;
        let retired_before = self.retired;

        if !baseline {
            self.prefetch(cycle, dram, cfg);
        }
        self.fetch_engines(cycle, dram);

        // Writes drain in order; retirement publishes the result to memory.
        while self.w_retire.front().is_some_and(|&(_, t)| t <= cycle) {
            let (pos, _) = self.w_retire.pop_front().unwrap();
            self.retire(pos, cycle, dram, cfg);
        }

        // Read completions fire fetch triggers and feed Execute.
        while self.r_inflight.front().is_some_and(|&(_, d)| d <= cycle) {
            let (pos, _) = self.r_inflight.pop_front().unwrap();
            if !baseline {
                for op in 0..2u8 {
                    if let Some(ris) = self.trigger_map.get(&(pos, op)) {
                        for &ri in ris.clone().iter() {
                            self.recs[ri].triggered_at = Some(cycle);
                            self.oor[self.prog.oorw[ri].target_addr] = true;
                        }
                    }
                }
            }
            self.xq.push_back(pos);
        }

        // Execute accepts one instruction per cycle; results complete in
        // program order after the gate latency.
        self.busy_now = false;
        if self.last_x_entry < cycle {
            if let Some(&pos) = self.xq.front() {
                let needs_table =
                    cfg.mode == Mode::Evaluate && self.gate_at(pos).kind == GateKind::And;
                if needs_table && self.and_consumed >= self.tbl_ready {
                    self.mem_wait = true;
                } else {
                    self.xq.pop_front();
                    let seq = self.and_consumed;
                    if needs_table {
                        self.and_consumed += 1;
                    }
                    self.engine.exec(&self.folded, self.order[pos], seq);
                    let end = cycle + u64::from(self.exec_occupancy(pos, cfg));
                    self.x_end_of[pos] = end;
                    self.last_x_entry = cycle;
                    let write_occ = u64::from(Self::mem_occupancy(cfg.latencies.write_stage, cfg));
                    let retire_at = (end + write_occ - 1).max(self.last_retire_at + 1);
                    self.last_retire_at = retire_at;
                    self.w_retire.push_back((pos, retire_at));
                    self.busy_now = true;
                }
            }
        }

        // Reads start in order, at most one per cycle; the head blocks until
        // both operands are readable.
        if self.last_r_start < cycle {
            if let Some(&(pos, min_start)) = self.rq.front() {
                if min_start <= cycle {
                    let gate = self.gate_at(pos);
                    let instr = self.prog.instructions[pos];
                    let checks =
                        [(0u8, instr.read_addr0, gate.in0), (1u8, instr.read_addr1, gate.in1)];
                    let mut ready = true;
                    for (op, addr, wire) in checks {
                        match self
                            .operand_ready(pos, op, addr, wire, cycle, dram, baseline)
                            .map_err(|msg| SimError::Model { cycle, core: self.id, msg })?
                        {
                            Ready::Yes => {}
                            Ready::Mem => {
                                ready = false;
                                self.mem_wait = true;
                            }
                            Ready::Pipe => ready = false,
                        }
                    }
                    if ready {
                        self.rq.pop_front();
                        let read_occ =
                            u64::from(Self::mem_occupancy(cfg.latencies.read_stage, cfg));
                        self.r_inflight.push_back((pos, cycle + read_occ));
                        self.last_r_start = cycle;
                    }
                }
            }
        }

        if self.issued < self.total && self.issued < self.instr_done && self.last_issue < cycle {
            self.rq
                .push_back((self.issued, cycle + u64::from(cfg.latencies.preempt)));
            self.issued += 1;
            self.last_issue = cycle;
        } else if self.issued < self.total
            && self.issued >= self.instr_done
            && self.rq.is_empty()
            && self.r_inflight.is_empty()
            && self.xq.is_empty()
            && self.w_retire.is_empty()
        {
            // Only instruction fetch holds the core back.
            self.mem_wait = true;
        }

        self.land_transfers(cycle, baseline);

        if self.busy_now {
            self.busy += 1;
        } else if self.mem_wait {
            self.ms += 1;
        } else {
            self.ps += 1;
        }
        if self.retired == self.total {
            self.finished = true;
            self.completion = cycle;
        }
        Ok(self.retired > retired_before)
    }

    fn stats(&self) -> CoreStats {
        CoreStats {
            total_cycles: self.completion,
            busy_cycles: self.busy,
            pipeline_stall_cycles: self.ps,
            memory_stall_cycles: self.ms,
            oorw_count: self.prog.oorw.len() as u64,
            instructions: self.total as u64,
        }
    }

    fn dump(&self) -> String {
        format!(
            "core {}: retired {}/{} issued={} rq={:?} r={:?} xq={:?} w={:?} instr_done={} tbl_ready={} buffer_used={}",
            self.id,
            self.retired,
            self.total,
            self.issued,
            self.rq.front(),
            self.r_inflight.front(),
            self.xq.front(),
            self.w_retire.front(),
            self.instr_done,
            self.tbl_ready,
            self.buffer_used,
        )
    }

    fn into_output(self) -> CoreOutput {
        match self.engine {
            Engine::Functional { values } => CoreOutput::Bits(
                self.folded
                    .outputs
                    .iter()
                    .map(|&(w, flip)| values[w].expect("output value") ^ flip)
                    .collect(),
            ),
            Engine::Garble { session, tables } => {
                let compact: Vec<GarbledGate> = tables.into_iter().flatten().collect();
                CoreOutput::Garbled(session.finish(&self.folded, compact))
            }
            Engine::Evaluate { session, .. } => CoreOutput::Labels(session.outputs(&self.folded)),
        }
    }
}

fn run_inner(
    jobs: Vec<CoreJob>,
    cfg: &SimConfig,
    baseline: bool,
) -> Result<(Vec<CoreOutput>, SimStats), SimError> {
    cfg.validate()?;
    if jobs.is_empty() {
        return Err(SimError::Job("no jobs".into()));
    }
    if jobs.len() > cfg.n_cores {
        return Err(SimError::Job(format!(
            "{} jobs exceed {} cores",
            jobs.len(),
            cfg.n_cores
        )));
    }
    let n_jobs = jobs.len();
    let mut dram = DramChannel::new(cfg);
    let mut cores = jobs
        .into_iter()
        .enumerate()
        .map(|(i, j)| Core::new(i, j, cfg, n_jobs))
        .collect::<Result<Vec<_>, _>>()?;
    for c in &mut cores {
        c.preload_streams(&mut dram);
    }

    let mut cycle = 0u64;
    let mut last_retire = 0u64;
    while cores.iter().any(|c| !c.finished) {
        cycle += 1;
        let mut any = false;
        for c in &mut cores {
            if !c.finished {
                any |= c.tick(cycle, &mut dram, cfg, baseline)?;
            }
        }
        if any {
            last_retire = cycle;
        }
        if cycle - last_retire > DEADLOCK_LIMIT {
            let dump = cores.iter().map(Core::dump).collect::<Vec<_>>().join("\n");
            return Err(SimError::Deadlock { cycle, dump });
        }
    }

    let core_stats: Vec<CoreStats> = cores.iter().map(Core::stats).collect();
    for (i, s) in core_stats.iter().enumerate() {
        debug_assert_eq!(
            s.busy_cycles + s.pipeline_stall_cycles + s.memory_stall_cycles,
            s.total_cycles,
            "cycle ledger broken on core {i}"
        );
    }
    let stats = SimStats {
        schema_version: 1,
        mode: cfg.mode,
        total_cycles: core_stats.iter().map(|s| s.total_cycles).max().unwrap_or(0),
        cores: core_stats,
        dram: dram.stats,
    };
    let outputs = cores.into_iter().map(Core::into_output).collect();
    Ok((outputs, stats))
}

/// Simulate the speculated streams with OoRW prefetch and reuse.
pub fn run(jobs: Vec<CoreJob>, cfg: &SimConfig) -> Result<(Vec<CoreOutput>, SimStats), SimError> {
    run_inner(jobs, cfg, false)
}

/// Reference point without speculation benefits: every out-of-range read
/// stalls on a fresh DRAM fetch at its consumer, nothing is prefetched, and
/// fetched wires are used once.
pub fn run_baseline_refetch(
    jobs: Vec<CoreJob>,
    cfg: &SimConfig,
) -> Result<(Vec<CoreOutput>, SimStats), SimError> {
    run_inner(jobs, cfg, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub fn report(stats: &SimStats, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(stats).expect("stats serialize") + "\n"
        }
        ReportFormat::Csv => {
            let mut out = String::from(
                "core,total_cycles,busy_cycles,pipeline_stall_cycles,memory_stall_cycles,oorw_count,instructions\n",
            );
            for (i, c) in stats.cores.iter().enumerate() {
                out.push_str(&format!(
                    "{i},{},{},{},{},{},{}\n",
                    c.total_cycles,
                    c.busy_cycles,
                    c.pipeline_stall_cycles,
                    c.memory_stall_cycles,
                    c.oorw_count,
                    c.instructions
                ));
            }
            let streams = [
                ("instructions", &stats.dram.instructions),
                ("tables", &stats.dram.tables),
                ("oorw", &stats.dram.oorw),
                ("live_writeback", &stats.dram.live_writeback),
            ];
            out.push_str("stream,reads,read_bytes,writes,write_bytes\n");
            for (name, t) in streams {
                out.push_str(&format!(
                    "{name},{},{},{},{}\n",
                    t.reads, t.read_bytes, t.writes, t.write_bytes
                ));
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    Df,
    Fr,
    Sr,
    Cpfe,
}

impl ScheduleMode {
    pub fn parse(s: &str) -> Result<Self, SimError> {
        match s {
            "df" => Ok(ScheduleMode::Df),
            "fr" => Ok(ScheduleMode::Fr),
            "sr" => Ok(ScheduleMode::Sr),
            "cpfe" => Ok(ScheduleMode::Cpfe),
            _ => Err(SimError::Config(format!("unknown schedule mode {s:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ScheduleMode::Df => "df",
            ScheduleMode::Fr => "fr",
            ScheduleMode::Sr => "sr",
            ScheduleMode::Cpfe => "cpfe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompareRow {
    pub mode: String,
    pub total_cycles: u64,
    pub busy_cycles: u64,
    pub pipeline_stall_cycles: u64,
    pub memory_stall_cycles: u64,
    pub oorw_count: u64,
    pub dram_reads: u64,
}

/// Run the same netlist under each schedule mode on one core and tabulate
/// stalls and traffic.
pub fn compare_schedules(
    n: &Netlist,
    modes: &[ScheduleMode],
    cfg: &SimConfig,
) -> Result<Vec<CompareRow>, SimError> {
    let mut cfg = *cfg;
    cfg.mode = Mode::Functional;
    let mut rows = Vec::with_capacity(modes.len());
    for &m in modes {
        let order = match m {
            ScheduleMode::Df => order_depth_first(n),
            ScheduleMode::Fr => order_fr(n),
            ScheduleMode::Sr => schedule_sr(n, cfg.wire_mem_entries)?,
            ScheduleMode::Cpfe => {
                // A dependent's Execute can start one Read stage after its
                // producer's Execute ends, so that is the latency a schedule
                // actually has to cover per edge.
                let lm = LatencyMap {
                    and: u64::from(cfg.latencies.halfgate_eval + cfg.latencies.read_stage),
                    xor: u64::from(cfg.latencies.freexor + cfg.latencies.read_stage),
                    inv: u64::from(cfg.latencies.freexor + cfg.latencies.read_stage),
                };
                schedule_cpfe_netlist(n, cfg.wire_mem_entries, &lm)?
            }
        };
        let work = Work::Functional { inputs: vec![false; n.n_inputs()] };
        let job = prepare_job(n, &order, &cfg, 0, work)?;
        let (_, stats) = run(vec![job], &cfg)?;
        let c = stats.cores[0];
        rows.push(CompareRow {
            mode: m.as_str().to_string(),
            total_cycles: c.total_cycles,
            busy_cycles: c.busy_cycles,
            pipeline_stall_cycles: c.pipeline_stall_cycles,
            memory_stall_cycles: c.memory_stall_cycles,
            oorw_count: c.oorw_count,
            dram_reads: stats.dram.total_reads(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::garble::garble;
    use crate::netlist::{parse_bristol, random_netlist};
    use rand::{Rng, SeedableRng};

    fn identity_order(n: &Netlist) -> Vec<usize> {
        (0..n.gates.len()).collect()
    }

    fn check_ledger(stats: &SimStats) {
        for c in &stats.cores {
            assert_eq!(
                c.busy_cycles + c.pipeline_stall_cycles + c.memory_stall_cycles,
                c.total_cycles
            );
        }
    }

    fn relaxed_config() -> SimConfig {
        SimConfig {
            n_cores: 16,
            wire_mem_entries: 8192,
            dram: DramConfig {
                latency_cycles: 1,
                bytes_per_cycle: 4096,
                coalesce_window_cycles: 4,
            },
            ..SimConfig::default()
        }
    }

    #[test]
    fn single_freexor_takes_seven_cycles() {
        let n = parse_bristol("1 3\n2 1 1\n1 1\n2 1 0 1 2 XOR\n").unwrap();
        let cfg = relaxed_config();
        let job = prepare_job(
            &n,
            &identity_order(&n),
            &cfg,
            0,
            Work::Functional { inputs: vec![true, false] },
        )
        .unwrap();
        let (outs, stats) = run(vec![job], &cfg).unwrap();
        assert_eq!(stats.total_cycles, 7);
        assert_eq!(stats.cores[0].busy_cycles, 1);
        check_ledger(&stats);
        match &outs[0] {
            CoreOutput::Bits(b) => assert_eq!(b, &vec![true]),
            _ => panic!("expected bits"),
        }
    }

    #[test]
    fn functional_matches_plain_eval() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(80);
        let cfg = relaxed_config();
        for _ in 0..5 {
            let n = random_netlist(&mut rng, 5, 3, 300, 5);
            let inputs: Vec<bool> = (0..8).map(|_| rng.gen()).collect();
            let want = n.eval_plain(&inputs).unwrap();
            let job = prepare_job(
                &n,
                &identity_order(&n),
                &cfg,
                0,
                Work::Functional { inputs: inputs.clone() },
            )
            .unwrap();
            let (outs, stats) = run(vec![job], &cfg).unwrap();
            check_ledger(&stats);
            match &outs[0] {
                CoreOutput::Bits(b) => assert_eq!(b, &want),
                _ => panic!("expected bits"),
            }
        }
    }

    #[test]
    fn functional_matches_under_memory_pressure() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(81);
        let mut cfg = relaxed_config();
        cfg.wire_mem_entries = 6;
        for _ in 0..4 {
            let n = random_netlist(&mut rng, 4, 2, 250, 4);
            let inputs: Vec<bool> = (0..6).map(|_| rng.gen()).collect();
            let want = n.eval_plain(&inputs).unwrap();
            let job = prepare_job(
                &n,
                &identity_order(&n),
                &cfg,
                0,
                Work::Functional { inputs: inputs.clone() },
            )
            .unwrap();
            let (outs, stats) = run(vec![job], &cfg).unwrap();
            check_ledger(&stats);
            assert!(stats.cores[0].oorw_count > 0, "want eviction pressure");
            match &outs[0] {
                CoreOutput::Bits(b) => assert_eq!(b, &want),
                _ => panic!("expected bits"),
            }
        }
    }

    #[test]
    fn garble_mode_bit_identical_and_evaluate_decodes() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(82);
        let n = random_netlist(&mut rng, 4, 4, 200, 6);
        let f = fold_inv(&n);
        let reference = garble(&f, 1234).circuit;

        let mut cfg = relaxed_config();
        cfg.mode = Mode::Garble;
        let job =
            prepare_job(&n, &identity_order(&n), &cfg, 0, Work::Garble { seed: 1234 }).unwrap();
        let (outs, stats) = run(vec![job], &cfg).unwrap();
        check_ledger(&stats);
        let circuit = match outs.into_iter().next().unwrap() {
            CoreOutput::Garbled(c) => c,
            _ => panic!("expected garbled circuit"),
        };
        assert_eq!(circuit, reference);

        let inputs: Vec<bool> = (0..8).map(|_| rng.gen()).collect();
        let active = circuit.encode(&inputs).unwrap();
        cfg.mode = Mode::Evaluate;
        let job = prepare_job(
            &n,
            &identity_order(&n),
            &cfg,
            0,
            Work::Evaluate { tables: circuit.tables.clone(), input_labels: active },
        )
        .unwrap();
        let (outs, stats) = run(vec![job], &cfg).unwrap();
        check_ledger(&stats);
        let labels = match outs.into_iter().next().unwrap() {
            CoreOutput::Labels(l) => l,
            _ => panic!("expected labels"),
        };
        assert_eq!(circuit.decode(&labels).unwrap(), n.eval_plain(&inputs).unwrap());
    }

    #[test]
    fn garble_evaluate_delta_is_three_per_and_on_chain() {
        // A pure AND chain keeps Execute on the critical path for every gate.
        let k = 25usize;
        let mut text = format!("{k} {}\n2 1 1\n1 1\n", k + 2);
        for i in 0..k {
            text.push_str(&format!("2 1 {} 1 {} AND\n", i + 1, i + 2));
        }
        let n = parse_bristol(&text).unwrap();
        let f = fold_inv(&n);
        let circuit = garble(&f, 7).circuit;

        let mut cfg = relaxed_config();
        cfg.mode = Mode::Garble;
        let job = prepare_job(&n, &identity_order(&n), &cfg, 0, Work::Garble { seed: 7 }).unwrap();
        let (_, gstats) = run(vec![job], &cfg).unwrap();

        cfg.mode = Mode::Evaluate;
        let active = circuit.encode(&vec![true; 2]).unwrap();
        let job = prepare_job(
            &n,
            &identity_order(&n),
            &cfg,
            0,
            Work::Evaluate { tables: circuit.tables.clone(), input_labels: active },
        )
        .unwrap();
        let (_, estats) = run(vec![job], &cfg).unwrap();

        assert!(gstats.total_cycles >= estats.total_cycles);
        assert_eq!(gstats.total_cycles - estats.total_cycles, 3 * k as u64);
        assert_eq!(estats.cores[0].memory_stall_cycles, 0);
        assert_eq!(gstats.cores[0].memory_stall_cycles, 0);
    }

    #[test]
    fn synchrony_and_determinism() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(83);
        let n = random_netlist(&mut rng, 4, 4, 150, 4);
        let cfg = relaxed_config();
        let mk = || {
            vec![
                prepare_job(&n, &identity_order(&n), &cfg, 0, Work::Functional {
                    inputs: vec![false; 8],
                })
                .unwrap(),
                prepare_job(&n, &identity_order(&n), &cfg, 0, Work::Functional {
                    inputs: vec![false; 8],
                })
                .unwrap(),
            ]
        };
        let (_, s1) = run(mk(), &cfg).unwrap();
        let (_, s2) = run(mk(), &cfg).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.cores[0], s1.cores[1]);
        check_ledger(&s1);
    }

    #[test]
    fn baseline_fetches_more_and_stalls_more() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(84);
        let mut cfg = relaxed_config();
        cfg.wire_mem_entries = 6;
        cfg.dram.latency_cycles = 60;
        let mut saw_reuse = false;
        for _ in 0..6 {
            let n = random_netlist(&mut rng, 4, 2, 300, 4);
            let inputs: Vec<bool> = (0..6).map(|_| rng.gen()).collect();
            let want = n.eval_plain(&inputs).unwrap();
            let mk = || {
                prepare_job(&n, &identity_order(&n), &cfg, 0, Work::Functional {
                    inputs: inputs.clone(),
                })
                .unwrap()
            };
            let job = mk();
            let records = job.program.oorw.len() as u64;
            let distinct_slots = job
                .program
                .oorw
                .iter()
                .map(|r| r.dram_slot)
                .collect::<std::collections::HashSet<_>>()
                .len() as u64;
            if distinct_slots < records {
                saw_reuse = true;
            }
            let (outs_a, sa) = run(vec![job], &cfg).unwrap();
            let (outs_b, sb) = run_baseline_refetch(vec![mk()], &cfg).unwrap();
            assert_eq!(sa.dram.oorw.reads, distinct_slots);
            assert_eq!(sb.dram.oorw.reads, records);
            assert!(
                sa.cores[0].memory_stall_cycles <= sb.cores[0].memory_stall_cycles,
                "reuse {} vs baseline {}",
                sa.cores[0].memory_stall_cycles,
                sb.cores[0].memory_stall_cycles
            );
            match (&outs_a[0], &outs_b[0]) {
                (CoreOutput::Bits(a), CoreOutput::Bits(b)) => {
                    assert_eq!(a, &want);
                    assert_eq!(b, &want);
                }
                _ => panic!("expected bits"),
            }
            check_ledger(&sa);
            check_ledger(&sb);
        }
        assert!(saw_reuse, "corpus should include a wire fetched twice");
    }

    #[test]
    fn shared_streams_coalesce() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(85);
        let n = random_netlist(&mut rng, 4, 2, 400, 4);
        let mut cfg = relaxed_config();
        cfg.wire_mem_entries = 8;
        cfg.instr_mem_bytes = 256;
        let mk = |stream| {
            prepare_job(&n, &identity_order(&n), &cfg, stream, Work::Functional {
                inputs: vec![false; 6],
            })
            .unwrap()
        };
        let (_, shared) = run(vec![mk(0), mk(0)], &cfg).unwrap();
        let (_, distinct) = run(vec![mk(0), mk(1)], &cfg).unwrap();
        assert!(shared.dram.coalesced > 0);
        assert!(shared.dram.total_accesses() < distinct.dram.total_accesses());
    }

    #[test]
    fn dram_byte_accounting() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(86);
        let n = random_netlist(&mut rng, 4, 2, 300, 4);
        let mut cfg = relaxed_config();
        cfg.wire_mem_entries = 8;
        cfg.instr_mem_bytes = 128;
        let job = prepare_job(&n, &identity_order(&n), &cfg, 0, Work::Functional {
            inputs: vec![false; 6],
        })
        .unwrap();
        let n_instr = job.program.instructions.len() as u64;
        let (_, stats) = run(vec![job], &cfg).unwrap();
        assert_eq!(stats.dram.instructions.reads, n_instr);
        assert_eq!(stats.dram.instructions.read_bytes, 8 * n_instr);
        assert_eq!(stats.dram.oorw.read_bytes, 16 * stats.dram.oorw.reads);
        assert_eq!(
            stats.dram.live_writeback.write_bytes,
            16 * stats.dram.live_writeback.writes
        );
    }

    #[test]
    fn report_formats_are_stable() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(87);
        let n = random_netlist(&mut rng, 4, 2, 100, 3);
        let cfg = relaxed_config();
        let mk = || {
            prepare_job(&n, &identity_order(&n), &cfg, 0, Work::Functional {
                inputs: vec![false; 6],
            })
            .unwrap()
        };
        let (_, s1) = run(vec![mk()], &cfg).unwrap();
        let (_, s2) = run(vec![mk()], &cfg).unwrap();
        let j1 = report(&s1, ReportFormat::Json);
        assert_eq!(j1, report(&s2, ReportFormat::Json));
        let parsed: serde_json::Value = serde_json::from_str(&j1).unwrap();
        let c = &parsed["cores"][0];
        assert_eq!(
            c["busy_cycles"].as_u64().unwrap()
                + c["pipeline_stall_cycles"].as_u64().unwrap()
                + c["memory_stall_cycles"].as_u64().unwrap(),
            c["total_cycles"].as_u64().unwrap()
        );
        let csv = report(&s1, ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 1 + s1.cores.len() + 1 + 4);
    }

    #[test]
    fn config_toml_round_trip_and_errors() {
        let c = SimConfig::from_toml(
            "n_cores = 4\nwire_mem_entries = 64\nmode = \"garble\"\ndram_latency_cycles = 7\n",
        )
        .unwrap();
        assert_eq!(c.n_cores, 4);
        assert_eq!(c.wire_mem_entries, 64);
        assert_eq!(c.mode, Mode::Garble);
        assert_eq!(c.dram.latency_cycles, 7);
        assert_eq!(c.latencies.read_stage, 3);
        assert!(SimConfig::from_toml("bogus_key = 1\n").is_err());
        assert!(SimConfig::from_toml("n_cores = 0\n").is_err());
        assert!(SimConfig::from_toml("mode = \"warp\"\n").is_err());
    }

    #[test]
    fn missing_fetch_trigger_deadlocks() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(88);
        let mut cfg = relaxed_config();
        cfg.wire_mem_entries = 6;
        let n = random_netlist(&mut rng, 4, 2, 120, 3);
        let mut job = prepare_job(&n, &identity_order(&n), &cfg, 0, Work::Functional {
            inputs: vec![false; 6],
        })
        .unwrap();
        let ri = job
            .program
            .oorw
            .iter()
            .position(|r| !r.forced_stall)
            .expect("needs a prefetched record");
        let (t, op) = job.program.oorw[ri].trigger.unwrap();
        job.program.oorw[ri].forced_stall = false;
        job.program.oorw[ri].trigger = Some((usize::MAX - 1, 0));
        if op == 0 {
            job.program.instructions[t].fetch0 = false;
        } else {
            job.program.instructions[t].fetch1 = false;
        }
        match run(vec![job], &cfg) {
            Err(SimError::Deadlock { dump, .. }) => assert!(dump.contains("core 0")),
            other => panic!("expected deadlock, got {:?}", other.map(|(_, s)| s)),
        }
    }

    #[test]
    fn compare_schedules_rows() {
        let fmt = crate::fixed::FixedPointFormat::new(8, 4).unwrap();
        let n = crate::circuitgen::gen_mul_conventional(fmt).unwrap();
        let mut cfg = relaxed_config();
        cfg.wire_mem_entries = 64;
        let modes = [ScheduleMode::Df, ScheduleMode::Fr, ScheduleMode::Sr, ScheduleMode::Cpfe];
        let rows = compare_schedules(&n, &modes, &cfg).unwrap();
        let rows2 = compare_schedules(&n, &modes, &cfg).unwrap();
        assert_eq!(rows, rows2);
        assert_eq!(rows.len(), 4);
        let sr = rows.iter().find(|r| r.mode == "sr").unwrap();
        let cpfe = rows.iter().find(|r| r.mode == "cpfe").unwrap();
        assert!(
            cpfe.pipeline_stall_cycles <= sr.pipeline_stall_cycles,
            "cpfe {} vs sr {}",
            cpfe.pipeline_stall_cycles,
            sr.pipeline_stall_cycles
        );
    }
}

