//! Compile-time instruction generation for the accelerator.
//!
//! Phase 1 walks the scheduled gate stream through a Wire Memory model,
//! assigning read/write addresses with Last-to-Be-Used-Wire (LBUW) eviction
//! and collecting Out-of-Range Wires (OoRWs: reads whose wire is no longer
//! resident). Phase 2 assigns the Live, OoRW-fetch, and WEN bits by
//! inter-instruction analysis. A symbolic replay checker proves every read
//! returns the intended wire.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::garble::FoldedNetlist;
use crate::netlist::{GateKind, WireId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("wire memory needs at least 3 entries, got {0}")]
    MemoryTooSmall(usize),
    #[error("address {0} exceeds the 13-bit instruction encoding")]
    AddressTooWide(usize),
    #[error("instruction {instr}: {msg}")]
    Violation { instr: usize, msg: String },
    #[error("malformed instruction stream: {0}")]
    Format(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpBit {
    FreeXor,
    HalfGate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccelInstruction {
    pub gate_index: usize,
    pub op: OpBit,
    pub write_addr: usize,
    pub read_addr0: usize,
    pub read_addr1: usize,
    pub live: bool,
    pub wen: bool,
    pub fetch0: bool,
    pub fetch1: bool,
}

impl AccelInstruction {
    /// Bit-exact 64-bit encoding: [0..13) write_addr, [13..26) read_addr0,
    /// [26..39) read_addr1, [39] op, [40] live, [41] wen, [42] fetch0,
    /// [43] fetch1, rest zero.
    pub fn encode(&self) -> Result<u64, SpecError> {
        for &a in [self.write_addr, self.read_addr0, self.read_addr1].iter() {
            if a >= 1 << 13 {
                return Err(SpecError::AddressTooWide(a));
            }
        }
        let mut w = self.write_addr as u64
            | (self.read_addr0 as u64) << 13
            | (self.read_addr1 as u64) << 26;
        w |= (matches!(self.op, OpBit::HalfGate) as u64) << 39;
        w |= (self.live as u64) << 40;
        w |= (self.wen as u64) << 41;
        w |= (self.fetch0 as u64) << 42;
        w |= (self.fetch1 as u64) << 43;
        Ok(w)
    }

    /// Inverse of `encode`; the gate index is positional in the stream and
    /// supplied by the caller.
    pub fn decode(word: u64, gate_index: usize) -> Result<Self, SpecError> {
        if word >> 44 != 0 {
            return Err(SpecError::Format("reserved bits must be zero"));
        }
        let mask = (1u64 << 13) - 1;
        Ok(AccelInstruction {
            gate_index,
            op: if word >> 39 & 1 == 1 { OpBit::HalfGate } else { OpBit::FreeXor },
            write_addr: (word & mask) as usize,
            read_addr0: (word >> 13 & mask) as usize,
            read_addr1: (word >> 26 & mask) as usize,
            live: word >> 40 & 1 == 1,
            wen: word >> 41 & 1 == 1,
            fetch0: word >> 42 & 1 == 1,
            fetch1: word >> 43 & 1 == 1,
        })
    }
}

pub fn encode_stream(instrs: &[AccelInstruction]) -> Result<Vec<u8>, SpecError> {
    let mut out = Vec::with_capacity(instrs.len() * 8);
    for i in instrs {
        out.extend_from_slice(&i.encode()?.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_stream(bytes: &[u8], order: &[usize]) -> Result<Vec<AccelInstruction>, SpecError> {
    if bytes.len() % 8 != 0 || bytes.len() / 8 != order.len() {
        return Err(SpecError::Format("stream length does not match gate order"));
    }
    bytes
        .chunks_exact(8)
        .zip(order)
        .map(|(c, &g)| AccelInstruction::decode(u64::from_le_bytes(c.try_into().unwrap()), g))
        .collect()
}

/// One read-miss: a wire that must round-trip through DRAM.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OoRwRecord {
    pub wire: WireId,
    pub dram_slot: usize,
    /// Instruction that produced the wire; None for circuit inputs.
    pub producer_instr: Option<usize>,
    pub consumer_instr: usize,
    pub consumer_operand: u8,
    pub target_addr: usize,
    /// Where the fetch bit landed (instruction, operand); set in phase 2.
    pub trigger: Option<(usize, u8)>,
    /// Fetch had to be placed on the consumer itself; the transfer cannot
    /// hide behind earlier work.
    pub forced_stall: bool,
}

/// Phase-1 output: addressed instructions without flag bits, plus the miss
/// list and the initial memory image.
#[derive(Debug, Clone)]
pub struct Phase1Draft {
    pub instructions: Vec<AccelInstruction>,
    pub oorw: Vec<OoRwRecord>,
    pub preload: Vec<(WireId, usize)>,
    pub producer_of: Vec<Option<usize>>,
    pub wire_mem_entries: usize,
}

/// Final program: phase-2 flags applied, DRAM slots assigned.
#[derive(Debug, Clone)]
pub struct SpeculationProgram {
    pub instructions: Vec<AccelInstruction>,
    pub oorw: Vec<OoRwRecord>,
    pub preload: Vec<(WireId, usize)>,
    pub producer_of: Vec<Option<usize>>,
    pub wire_mem_entries: usize,
    pub forced_stalls: usize,
}

impl SpeculationProgram {
    pub fn manifest(&self) -> DramManifest {
        let mut slots: Vec<(WireId, usize)> = Vec::new();
        let mut seen = HashMap::new();
        for r in &self.oorw {
            if !seen.contains_key(&r.wire) {
                seen.insert(r.wire, r.dram_slot);
                slots.push((r.wire, r.dram_slot));
            }
        }
        DramManifest { wire_mem_entries: self.wire_mem_entries, oorw_slots: slots }
    }
}

/// Sidecar describing the predetermined DRAM layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DramManifest {
    pub wire_mem_entries: usize,
    pub oorw_slots: Vec<(WireId, usize)>,
}

/// For every wire, the sorted instruction indices that read it.
pub fn precompute_use_lists(f: &FoldedNetlist, order: &[usize]) -> Vec<Vec<usize>> {
    let mut uses = vec![Vec::new(); f.n_wires];
    for (t, &g) in order.iter().enumerate() {
        let gate = f.gates[g];
        uses[gate.in0].push(t);
        if gate.in1 != gate.in0 {
            uses[gate.in1].push(t);
        } else {
            uses[gate.in0].push(t);
        }
    }
    uses
}

fn next_use_after(uses: &[usize], t: usize) -> usize {
    let i = uses.partition_point(|&u| u <= t);
    uses.get(i).copied().unwrap_or(usize::MAX)
}

struct WireMem {
    occupant: Vec<Option<WireId>>,
    pos: HashMap<WireId, usize>,
}

impl WireMem {
    fn new(entries: usize) -> Self {
        WireMem { occupant: vec![None; entries], pos: HashMap::new() }
    }

    fn place(&mut self, wire: WireId, addr: usize) {
        if let Some(old) = self.occupant[addr] {
            self.pos.remove(&old);
        }
        self.occupant[addr] = Some(wire);
        self.pos.insert(wire, addr);
    }

    /// Blank slot if any, else the unexcluded occupant used furthest in the
    /// future (LBUW); ties fall to the lowest address.
    fn victim(&self, uses: &[Vec<usize>], t: usize, exclude: &[usize]) -> usize {
        if let Some(a) = (0..self.occupant.len())
            .find(|a| self.occupant[*a].is_none() && !exclude.contains(a))
        {
            return a;
        }
        (0..self.occupant.len())
            .filter(|a| !exclude.contains(a))
            .max_by_key(|&a| {
                let w = self.occupant[a].unwrap();
                (next_use_after(&uses[w], t), std::cmp::Reverse(a))
            })
            .expect("memory larger than the exclusion set")
    }
}

/// Assign read/write addresses and OP bits by simulating the stream against
/// the Wire Memory model. Read addresses are fixed before the write victim
/// is chosen so an instruction never preempts a slot it is about to read.
pub fn speculate_phase1(
    f: &FoldedNetlist,
    order: &[usize],
    wire_mem_entries: usize,
) -> Result<Phase1Draft, SpecError> {
    if wire_mem_entries < 3 {
        return Err(SpecError::MemoryTooSmall(wire_mem_entries));
    }
    let uses = precompute_use_lists(f, order);
    let mut mem = WireMem::new(wire_mem_entries);

    // Preload circuit inputs in first-use order until full.
    let mut inputs: Vec<WireId> = (0..f.n_inputs()).filter(|&w| !uses[w].is_empty()).collect();
    inputs.sort_by_key(|&w| (uses[w][0], w));
    let mut preload = Vec::new();
    for (addr, &w) in inputs.iter().take(wire_mem_entries).enumerate() {
        mem.place(w, addr);
        preload.push((w, addr));
    }

    let mut producer_of: Vec<Option<usize>> = vec![None; f.n_wires];
    let mut instructions = Vec::with_capacity(order.len());
    let mut oorw: Vec<OoRwRecord> = Vec::new();

    for (t, &g) in order.iter().enumerate() {
        let gate = f.gates[g];
        let mut read_addrs = [0usize; 2];
        // Slots holding either operand are never eviction victims here.
        let mut taken: Vec<usize> = [gate.in0, gate.in1]
            .iter()
            .filter_map(|w| mem.pos.get(w).copied())
            .collect();
        taken.dedup();
        for (operand, &wire) in [gate.in0, gate.in1].iter().enumerate() {
            let addr = match mem.pos.get(&wire) {
                Some(&a) => a,
                None => {
                    let a = mem.victim(&uses, t, &taken);
                    oorw.push(OoRwRecord {
                        wire,
                        dram_slot: 0,
                        producer_instr: producer_of[wire],
                        consumer_instr: t,
                        consumer_operand: operand as u8,
                        target_addr: a,
                        trigger: None,
                        forced_stall: false,
                    });
                    mem.place(wire, a);
                    a
                }
            };
            read_addrs[operand] = addr;
            if !taken.contains(&addr) {
                taken.push(addr);
            }
        }
        let write_addr = mem.victim(&uses, t, &taken);
        mem.place(gate.out, write_addr);
        producer_of[gate.out] = Some(t);
        instructions.push(AccelInstruction {
            gate_index: g,
            op: match gate.kind {
                GateKind::And => OpBit::HalfGate,
                GateKind::Xor => OpBit::FreeXor,
                GateKind::Inv => unreachable!("folded netlists contain no INV"),
            },
            write_addr,
            read_addr0: read_addrs[0],
            read_addr1: read_addrs[1],
            live: false,
            wen: false,
            fetch0: false,
            fetch1: false,
        });
    }

    Ok(Phase1Draft { instructions, oorw, preload, producer_of, wire_mem_entries })
}

/// Assign Live, fetch, and WEN bits.
///
/// Each OoRW's fetch trigger goes on the last instruction reading its target
/// address before the consumer (and after the producer), so the transfer
/// starts as soon as the slot's old occupant is done; with no such read the
/// fetch lands on the consumer itself and is marked a forced stall. Any
/// write to the target between trigger and consumer gets WEN (Wire Memory
/// write suppressed) plus Live (the value survives in DRAM).
pub fn speculate_phase2(mut draft: Phase1Draft, outputs: &[(WireId, bool)]) -> SpeculationProgram {
    let n = draft.instructions.len();
    let mut reads_of_addr: HashMap<usize, Vec<(usize, u8)>> = HashMap::new();
    for (t, i) in draft.instructions.iter().enumerate() {
        reads_of_addr.entry(i.read_addr0).or_default().push((t, 0));
        if i.read_addr1 != i.read_addr0 {
            reads_of_addr.entry(i.read_addr1).or_default().push((t, 1));
        }
    }
    let empty = Vec::new();
    let mut fetch_taken: HashMap<(usize, u8), ()> = HashMap::new();
    let mut slot_of: HashMap<WireId, usize> = HashMap::new();
    let mut forced = 0usize;

    let set_fetch = |instrs: &mut [AccelInstruction], (t, op): (usize, u8)| {
        if op == 0 {
            instrs[t].fetch0 = true;
        } else {
            instrs[t].fetch1 = true;
        }
    };

    for ri in 0..draft.oorw.len() {
        let (wire, producer, consumer, operand, target) = {
            let r = &draft.oorw[ri];
            (r.wire, r.producer_instr, r.consumer_instr, r.consumer_operand, r.target_addr)
        };
        let next_slot = slot_of.len();
        let slot = *slot_of.entry(wire).or_insert(next_slot);
        let lower = producer.map(|p| p + 1).unwrap_or(0);
        let trigger = reads_of_addr
            .get(&target)
            .unwrap_or(&empty)
            .iter()
            .copied()
            .filter(|&(t, _)| t >= lower && t < consumer)
            .next_back()
            .filter(|k| !fetch_taken.contains_key(k));
        let (trig, stall) = match trigger {
            Some(k) => (k, false),
            None => ((consumer, operand), true),
        };
        fetch_taken.insert(trig, ());
        set_fetch(&mut draft.instructions, trig);
        if stall {
            forced += 1;
        }
        // Writers hitting the target after the transfer may have begun must
        // not clobber it.
        for t in trig.0..consumer {
            if draft.instructions[t].write_addr == target {
                draft.instructions[t].wen = true;
                draft.instructions[t].live = true;
            }
        }
        if let Some(p) = producer {
            draft.instructions[p].live = true;
        }
        let r = &mut draft.oorw[ri];
        r.dram_slot = slot;
        r.trigger = Some(trig);
        r.forced_stall = stall;
    }

    // Circuit outputs must reach DRAM.
    for &(w, _) in outputs {
        if let Some(p) = draft.producer_of[w] {
            if p < n {
                draft.instructions[p].live = true;
            }
        }
    }

    SpeculationProgram {
        instructions: draft.instructions,
        oorw: draft.oorw,
        preload: draft.preload,
        producer_of: draft.producer_of,
        wire_mem_entries: draft.wire_mem_entries,
        forced_stalls: forced,
    }
}

/// Both phases.
pub fn speculate(
    f: &FoldedNetlist,
    order: &[usize],
    wire_mem_entries: usize,
) -> Result<SpeculationProgram, SpecError> {
    let draft = speculate_phase1(f, order, wire_mem_entries)?;
    Ok(speculate_phase2(draft, &f.outputs))
}

/// Symbolic replay over an abstract Wire Memory: every read must return the
/// wire the gate expects, every OoRW transfer must find its wire in DRAM,
/// and every circuit output must survive to the end.
pub fn verify_speculation(
    p: &SpeculationProgram,
    f: &FoldedNetlist,
    order: &[usize],
) -> Result<(), SpecError> {
    let fail = |instr: usize, msg: String| Err(SpecError::Violation { instr, msg });
    let mut mem: Vec<Option<WireId>> = vec![None; p.wire_mem_entries];
    for &(w, a) in &p.preload {
        mem[a] = Some(w);
    }
    let mut dram: std::collections::HashSet<WireId> = (0..f.n_inputs()).collect();

    let mut transfers: HashMap<(usize, u8), Vec<&OoRwRecord>> = HashMap::new();
    for r in &p.oorw {
        let trig = match r.trigger {
            Some(t) => t,
            None => return fail(r.consumer_instr, format!("OoRW {} has no fetch trigger", r.wire)),
        };
        transfers.entry(trig).or_default().push(r);
    }

    for (t, i) in p.instructions.iter().enumerate() {
        let gate = f.gates[order[t]];
        if i.gate_index != order[t] {
            return fail(t, "instruction/gate order mismatch".into());
        }
        // Forced-stall transfers complete before the read stage; triggered
        // transfers start only after the whole read stage, so both operand
        // reads see the pre-transfer state.
        for op in 0..2u8 {
            if let Some(rs) = transfers.get(&(t, op)) {
                for r in rs.iter().filter(|r| r.forced_stall) {
                    if !dram.contains(&r.wire) {
                        return fail(t, format!("transfer of wire {} before DRAM copy", r.wire));
                    }
                    mem[r.target_addr] = Some(r.wire);
                }
            }
        }
        for (operand, (wire, addr)) in
            [(gate.in0, i.read_addr0), (gate.in1, i.read_addr1)].into_iter().enumerate()
        {
            if mem[addr] != Some(wire) {
                return fail(
                    t,
                    format!(
                        "operand {operand} expects wire {wire} at address {addr}, found {:?}",
                        mem[addr]
                    ),
                );
            }
        }
        for op in 0..2u8 {
            if let Some(rs) = transfers.get(&(t, op)) {
                for r in rs.iter().filter(|r| !r.forced_stall) {
                    if !dram.contains(&r.wire) {
                        return fail(t, format!("transfer of wire {} before DRAM copy", r.wire));
                    }
                    mem[r.target_addr] = Some(r.wire);
                }
            }
        }
        if i.live {
            dram.insert(gate.out);
        }
        if !i.wen {
            mem[i.write_addr] = Some(gate.out);
        }
    }

    for (k, &(w, _)) in f.outputs.iter().enumerate() {
        if !dram.contains(&w) && !mem.contains(&Some(w)) {
            return fail(
                p.instructions.len().saturating_sub(1),
                format!("output {k} (wire {w}) reaches neither DRAM nor Wire Memory"),
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::garble::{fold_inv, FoldedGate, FoldedNetlist};
    use crate::netlist::{random_netlist, GateKind};
    use rand::SeedableRng;

    fn xg(in0: usize, in1: usize, out: usize) -> FoldedGate {
        FoldedGate { kind: GateKind::Xor, in0, flip0: false, in1, flip1: false, out }
    }

    /// Three inputs, six XORs, one output; forces eviction with a 3-entry
    /// memory.
    fn golden_netlist() -> FoldedNetlist {
        FoldedNetlist {
            gates: vec![
                xg(0, 1, 3),
                xg(2, 3, 4),
                xg(0, 2, 5),
                xg(4, 5, 6),
                xg(1, 6, 7),
                xg(7, 5, 8),
            ],
            n_inputs_a: 2,
            n_inputs_b: 1,
            n_wires: 9,
            outputs: vec![(8, false)],
        }
    }

    #[test]
    fn use_lists_count_reads() {
        let f = golden_netlist();
        let order: Vec<usize> = (0..6).collect();
        let uses = precompute_use_lists(&f, &order);
        assert_eq!(uses[0], vec![0, 2]);
        assert_eq!(uses[1], vec![0, 4]);
        assert_eq!(uses[8], Vec::<usize>::new());
        let total: usize = uses.iter().map(|u| u.len()).sum();
        assert_eq!(total, 2 * f.gates.len());
    }

    #[test]
    fn everything_fits_means_no_oorw() {
        let f = golden_netlist();
        let order: Vec<usize> = (0..6).collect();
        let p = speculate(&f, &order, 64).unwrap();
        assert!(p.oorw.is_empty());
        assert_eq!(p.forced_stalls, 0);
        verify_speculation(&p, &f, &order).unwrap();
    }

    #[test]
    fn golden_eviction_trace_three_entries() {
        // Hand-simulated: preload w0@0, w1@1, w2@2 (first-use order). Each
        // step reads first, then preempts the LBUW for the write.
        let f = golden_netlist();
        let order: Vec<usize> = (0..6).collect();
        let p = speculate(&f, &order, 3).unwrap();

        let rws: Vec<(usize, usize, usize)> = p
            .instructions
            .iter()
            .map(|i| (i.read_addr0, i.read_addr1, i.write_addr))
            .collect();
        assert_eq!(
            rws,
            vec![(0, 1, 2), (1, 2, 0), (2, 1, 0), (1, 0, 2), (1, 2, 0), (0, 1, 2)]
        );

        let misses: Vec<(WireId, Option<usize>, usize, usize)> = p
            .oorw
            .iter()
            .map(|r| (r.wire, r.producer_instr, r.consumer_instr, r.target_addr))
            .collect();
        assert_eq!(
            misses,
            vec![
                (2, None, 1, 1),
                (0, None, 2, 2),
                (4, Some(1), 3, 1),
                (1, None, 4, 1),
                (5, Some(2), 5, 1),
            ]
        );

        let triggers: Vec<Option<(usize, u8)>> = p.oorw.iter().map(|r| r.trigger).collect();
        assert_eq!(
            triggers,
            vec![Some((0, 1)), Some((1, 1)), Some((2, 1)), Some((3, 0)), Some((4, 0))]
        );
        assert!(p.oorw.iter().all(|r| !r.forced_stall));

        let live: Vec<bool> = p.instructions.iter().map(|i| i.live).collect();
        assert_eq!(live, vec![false, true, true, false, false, true]);
        assert!(p.instructions.iter().all(|i| !i.wen));

        verify_speculation(&p, &f, &order).unwrap();
    }

    #[test]
    fn wen_assigned_to_writer_inside_fetch_window() {
        // Synthetic draft: instruction 0 reads address 5 (the trigger),
        // instruction 1 writes address 5, instruction 2 consumes an OoRW at
        // address 5. The writer must get WEN + Live.
        let mk = |r0: usize, r1: usize, w: usize, g: usize| AccelInstruction {
            gate_index: g,
            op: OpBit::FreeXor,
            write_addr: w,
            read_addr0: r0,
            read_addr1: r1,
            live: false,
            wen: false,
            fetch0: false,
            fetch1: false,
        };
        let draft = Phase1Draft {
            instructions: vec![mk(5, 1, 2, 0), mk(2, 1, 5, 1), mk(5, 2, 3, 2)],
            oorw: vec![OoRwRecord {
                wire: 0,
                dram_slot: 0,
                producer_instr: None,
                consumer_instr: 2,
                consumer_operand: 0,
                target_addr: 5,
                trigger: None,
                forced_stall: false,
            }],
            preload: vec![],
            producer_of: vec![None; 8],
            wire_mem_entries: 8,
        };
        let p = speculate_phase2(draft, &[]);
        assert!(p.instructions[0].fetch0);
        assert!(p.instructions[1].wen && p.instructions[1].live);
        assert_eq!(p.oorw[0].trigger, Some((0, 0)));
    }

    #[test]
    fn replay_matches_plain_eval_wire_flow() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(70);
        for entries in [3usize, 4, 8, 16] {
            for _ in 0..5 {
                let n = random_netlist(&mut rng, 4, 4, 200, 6);
                let f = fold_inv(&n);
                let order: Vec<usize> = (0..f.gates.len()).collect();
                let p = speculate(&f, &order, entries).unwrap();
                verify_speculation(&p, &f, &order).unwrap();
            }
        }
    }

    #[test]
    fn more_memory_never_more_misses() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(71);
        for _ in 0..5 {
            let n = random_netlist(&mut rng, 6, 2, 300, 4);
            let f = fold_inv(&n);
            let order: Vec<usize> = (0..f.gates.len()).collect();
            let mut last = usize::MAX;
            for entries in [3usize, 6, 12, 24, 48, 96] {
                let p = speculate(&f, &order, entries).unwrap();
                assert!(p.oorw.len() <= last, "entries={entries}");
                last = p.oorw.len();
            }
        }
    }

    #[test]
    fn corrupted_flags_are_detected() {
        let f = golden_netlist();
        let order: Vec<usize> = (0..6).collect();
        let p = speculate(&f, &order, 3).unwrap();

        // A WEN bit forced onto a normal writer loses that wire.
        let mut bad = p.clone();
        bad.instructions[3].wen = true;
        assert!(verify_speculation(&bad, &f, &order).is_err());

        // A removed fetch trigger leaves the consumer reading a stale wire.
        let mut bad = p.clone();
        bad.instructions[4].fetch0 = false;
        bad.oorw[3].trigger = None;
        assert!(verify_speculation(&bad, &f, &order).is_err());
    }

    #[test]
    fn oorw_slots_reused_per_wire() {
        let f = golden_netlist();
        let order: Vec<usize> = (0..6).collect();
        let p = speculate(&f, &order, 3).unwrap();
        let m = p.manifest();
        let mut slots: Vec<usize> = m.oorw_slots.iter().map(|&(_, s)| s).collect();
        slots.sort_unstable();
        slots.dedup();
        assert_eq!(slots.len(), m.oorw_slots.len());
        assert_eq!(m.oorw_slots.len(), 5);
    }

    #[test]
    fn encoding_round_trip() {
        let i = AccelInstruction {
            gate_index: 17,
            op: OpBit::HalfGate,
            write_addr: 8191,
            read_addr0: 5,
            read_addr1: 4097,
            live: true,
            wen: false,
            fetch0: true,
            fetch1: false,
        };
        let w = i.encode().unwrap();
        assert_eq!(w >> 44, 0);
        assert_eq!(AccelInstruction::decode(w, 17).unwrap(), i);
        let bytes = encode_stream(&[i]).unwrap();
        assert_eq!(decode_stream(&bytes, &[17]).unwrap(), vec![i]);
        assert!(AccelInstruction::decode(1u64 << 45, 0).is_err());
        let too_wide = AccelInstruction { write_addr: 8192, ..i };
        assert!(too_wide.encode().is_err());
    }

    #[test]
    fn tiny_memory_rejected() {
        let f = golden_netlist();
        let order: Vec<usize> = (0..6).collect();
        assert!(matches!(
            speculate_phase1(&f, &order, 2),
            Err(SpecError::MemoryTooSmall(2))
        ));
    }
}
