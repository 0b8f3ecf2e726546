//! Functional garbled-circuit engine.
//!
//! Half-Gate garbling of AND gates (two 128-bit rows, four hash calls to
//! garble, two to evaluate), FreeXOR for XOR gates, and INV absorbed into
//! wire polarity before garbling. Hashing is the fixed-key block-cipher
//! construction H(x, j) = E_k(2x xor j) xor 2x xor j with the gate index as
//! tweak.

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::netlist::{GateKind, Netlist, WireId};

pub const LABEL_BYTES: usize = 16;
pub const GARBLED_GATE_BYTES: usize = 2 * LABEL_BYTES;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GarbleError {
    #[error("expected {expected} garbled tables, got {got}")]
    TableCount { expected: usize, got: usize },
    #[error("expected {expected} input labels, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("output {0}: active label matches neither candidate")]
    Integrity(usize),
    #[error("malformed garbled circuit bytes: {0}")]
    Format(&'static str),
}

/// A 128-bit wire label. The least significant bit is the point-and-permute
/// color bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Label(pub u128);

impl Label {
    pub fn color(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn to_bytes(self) -> [u8; LABEL_BYTES] {
        self.0.to_le_bytes()
    }

    pub fn from_bytes(b: [u8; LABEL_BYTES]) -> Self {
        Label(u128::from_le_bytes(b))
    }
}

impl std::ops::BitXor for Label {
    type Output = Label;
    fn bitxor(self, rhs: Label) -> Label {
        Label(self.0 ^ rhs.0)
    }
}

/// The global label offset. Its low bit is forced to 1 so the color bits of
/// every label pair differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlobalDelta(Label);

impl GlobalDelta {
    pub fn random(rng: &mut impl Rng) -> Self {
        GlobalDelta(Label(rng.gen::<u128>() | 1))
    }

    pub fn label(self) -> Label {
        self.0
    }

    /// 0 or Δ depending on the bit; the workhorse of label selection.
    pub fn select(self, bit: bool) -> Label {
        if bit {
            self.0
        } else {
            Label(0)
        }
    }
}

/// Fixed-key hash key; any constant works, pinned for reproducibility.
const HASH_KEY: [u8; 16] = *b"half-gates-hash0";

fn gf_double(x: u128) -> u128 {
    let carry = x >> 127;
    (x << 1) ^ (carry * 0x87)
}

/// Circular-correlation-robust hash: E_k(2x xor j) xor 2x xor j.
fn hash(aes: &Aes128, x: Label, tweak: u128, calls: &mut u64) -> Label {
    *calls += 1;
    let v = gf_double(x.0) ^ tweak;
    let mut block = GenericArray::clone_from_slice(&v.to_le_bytes());
    aes.encrypt_block(&mut block);
    let mut out = [0u8; 16];
    out.copy_from_slice(&block);
    Label(u128::from_le_bytes(out) ^ v)
}

fn fixed_key_aes() -> Aes128 {
    Aes128::new(GenericArray::from_slice(&HASH_KEY))
}

/// A gate in the INV-free form: XOR, or AND with per-input polarity flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldedGate {
    pub kind: GateKind,
    pub in0: WireId,
    pub flip0: bool,
    pub in1: WireId,
    pub flip1: bool,
    pub out: WireId,
}

/// A netlist with every INV absorbed into wire polarity. Wires carry raw
/// values; the flip annotations say how a gate or output reads them. XOR
/// gates never carry flips (polarity rides through for free); AND gates
/// apply `flip0`/`flip1` to their inputs; each circuit output pairs a wire
/// with the flip to apply on read-out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldedNetlist {
    pub gates: Vec<FoldedGate>,
    pub n_inputs_a: usize,
    pub n_inputs_b: usize,
    pub n_wires: usize,
    pub outputs: Vec<(WireId, bool)>,
}

impl FoldedNetlist {
    pub fn n_inputs(&self) -> usize {
        self.n_inputs_a + self.n_inputs_b
    }

    pub fn and_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind == GateKind::And).count()
    }

    /// Plaintext simulation of the folded form; the oracle for fold
    /// equivalence.
    pub fn eval_plain(&self, inputs: &[bool]) -> Result<Vec<bool>, GarbleError> {
        if inputs.len() != self.n_inputs() {
            return Err(GarbleError::InputCount {
                expected: self.n_inputs(),
                got: inputs.len(),
            });
        }
        let mut vals = vec![false; self.n_wires];
        vals[..inputs.len()].copy_from_slice(inputs);
        for g in &self.gates {
            let a = vals[g.in0] ^ g.flip0;
            let b = vals[g.in1] ^ g.flip1;
            vals[g.out] = match g.kind {
                GateKind::And => a & b,
                GateKind::Xor => a ^ b,
                GateKind::Inv => unreachable!("folded netlists contain no INV"),
            };
        }
        Ok(self.outputs.iter().map(|&(w, f)| vals[w] ^ f).collect())
    }
}

/// Remove every INV gate by tracking each original wire as a (representative
/// wire, polarity) pair. XOR absorbs polarity into its output's pair; AND
/// keeps the polarities as gate annotations.
pub fn fold_inv(n: &Netlist) -> FoldedNetlist {
    let n_inputs = n.n_inputs();
    let mut map: Vec<(WireId, bool)> = (0..n_inputs).map(|w| (w, false)).collect();
    map.resize(n.n_wires, (0, false));
    let mut gates = Vec::new();
    let mut next = n_inputs;
    for g in &n.gates {
        let (ra, pa) = map[g.in0];
        match g.kind {
            GateKind::Inv => {
                map[g.out] = (ra, !pa);
            }
            GateKind::Xor => {
                let (rb, pb) = map[g.in1.unwrap()];
                gates.push(FoldedGate {
                    kind: GateKind::Xor,
                    in0: ra,
                    flip0: false,
                    in1: rb,
                    flip1: false,
                    out: next,
                });
                map[g.out] = (next, pa ^ pb);
                next += 1;
            }
            GateKind::And => {
                let (rb, pb) = map[g.in1.unwrap()];
                gates.push(FoldedGate {
                    kind: GateKind::And,
                    in0: ra,
                    flip0: pa,
                    in1: rb,
                    flip1: pb,
                    out: next,
                });
                map[g.out] = (next, false);
                next += 1;
            }
        }
    }
    let outputs = n.output_wires().map(|w| map[w]).collect();
    FoldedNetlist {
        gates,
        n_inputs_a: n.n_inputs_a,
        n_inputs_b: n.n_inputs_b,
        n_wires: next,
        outputs,
    }
}

/// Maps a gate execution order over `n` onto folded-gate indices: INV gates
/// vanish, the rest keep their relative positions.
pub fn fold_order(n: &Netlist, order: &[usize]) -> Vec<usize> {
    let mut rank = vec![usize::MAX; n.gates.len()];
    let mut next = 0usize;
    for (i, g) in n.gates.iter().enumerate() {
        if g.kind != GateKind::Inv {
            rank[i] = next;
            next += 1;
        }
    }
    order.iter().map(|&i| rank[i]).filter(|&r| r != usize::MAX).collect()
}

/// The two Half-Gate rows of one garbled AND gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GarbledGate {
    pub row_g: Label,
    pub row_e: Label,
}

/// The garbler's full view of one garbled circuit: rows for every AND gate
/// in netlist order, zero-labels for both parties' inputs, and decode data
/// for the outputs. Output zero-labels have the output polarity folded in,
/// so they always encode semantic zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GarbledCircuit {
    pub tables: Vec<GarbledGate>,
    pub delta: GlobalDelta,
    pub input_zeros: Vec<Label>,
    pub output_zeros: Vec<Label>,
    pub n_inputs_a: usize,
    pub n_inputs_b: usize,
}

impl GarbledCircuit {
    pub fn table_bytes(&self) -> usize {
        self.tables.len() * GARBLED_GATE_BYTES
    }

    /// Color bit of each output's semantic-zero label.
    pub fn decode_bits(&self) -> Vec<bool> {
        self.output_zeros.iter().map(|l| l.color()).collect()
    }

    /// Active labels for a concrete input assignment (A bits then B bits).
    pub fn encode(&self, inputs: &[bool]) -> Result<Vec<Label>, GarbleError> {
        if inputs.len() != self.input_zeros.len() {
            return Err(GarbleError::InputCount {
                expected: self.input_zeros.len(),
                got: inputs.len(),
            });
        }
        Ok(self
            .input_zeros
            .iter()
            .zip(inputs)
            .map(|(&z, &b)| z ^ self.delta.select(b))
            .collect())
    }

    /// Map active output labels back to bits, rejecting any label that is
    /// neither candidate of its pair.
    pub fn decode(&self, active: &[Label]) -> Result<Vec<bool>, GarbleError> {
        if active.len() != self.output_zeros.len() {
            return Err(GarbleError::InputCount {
                expected: self.output_zeros.len(),
                got: active.len(),
            });
        }
        active
            .iter()
            .zip(&self.output_zeros)
            .enumerate()
            .map(|(i, (&a, &z))| {
                if a == z {
                    Ok(false)
                } else if a == z ^ self.delta.label() {
                    Ok(true)
                } else {
                    Err(GarbleError::Integrity(i))
                }
            })
            .collect()
    }
}

/// Incremental garbler. Gates may be garbled in any data-dependency-respecting
/// order; rows depend only on the gate index (the hash tweak) and the input
/// labels, so out-of-order garbling is bit-identical to sequential.
pub struct GarbleSession {
    aes: Aes128,
    delta: GlobalDelta,
    zeros: Vec<Option<Label>>,
    pub hash_calls: u64,
}

impl GarbleSession {
    pub fn new(f: &FoldedNetlist, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let delta = GlobalDelta::random(&mut rng);
        let mut zeros = vec![None; f.n_wires];
        for z in zeros.iter_mut().take(f.n_inputs()) {
            *z = Some(Label(rng.gen::<u128>()));
        }
        GarbleSession { aes: fixed_key_aes(), delta, zeros, hash_calls: 0 }
    }

    pub fn delta(&self) -> GlobalDelta {
        self.delta
    }

    pub fn zero_label(&self, w: WireId) -> Label {
        self.zeros[w].expect("wire not yet garbled")
    }

    /// Garble one gate by index. Returns the rows for AND gates, None for
    /// XOR. Inputs must already have labels.
    pub fn garble_gate(&mut self, f: &FoldedNetlist, idx: usize) -> Option<GarbledGate> {
        let g = f.gates[idx];
        let a0 = self.zero_label(g.in0) ^ self.delta.select(g.flip0);
        match g.kind {
            GateKind::Xor => {
                let b0 = self.zero_label(g.in1);
                self.zeros[g.out] = Some(a0 ^ b0);
                None
            }
            GateKind::And => {
                let b0 = self.zero_label(g.in1) ^ self.delta.select(g.flip1);
                let a1 = a0 ^ self.delta.label();
                let b1 = b0 ^ self.delta.label();
                let pa = a0.color();
                let pb = b0.color();
                let (j0, j1) = (2 * idx as u128, 2 * idx as u128 + 1);
                let ha0 = hash(&self.aes, a0, j0, &mut self.hash_calls);
                let ha1 = hash(&self.aes, a1, j0, &mut self.hash_calls);
                let hb0 = hash(&self.aes, b0, j1, &mut self.hash_calls);
                let hb1 = hash(&self.aes, b1, j1, &mut self.hash_calls);
                let row_g = ha0 ^ ha1 ^ self.delta.select(pb);
                let w_g = ha0 ^ if pa { row_g } else { Label(0) };
                let row_e = hb0 ^ hb1 ^ a0;
                let w_e = hb0 ^ if pb { row_e ^ a0 } else { Label(0) };
                self.zeros[g.out] = Some(w_g ^ w_e);
                Some(GarbledGate { row_g, row_e })
            }
            GateKind::Inv => unreachable!("folded netlists contain no INV"),
        }
    }

    /// Collect the finished circuit (all gates must have been garbled).
    pub fn finish(self, f: &FoldedNetlist, tables: Vec<GarbledGate>) -> GarbledCircuit {
        let input_zeros = (0..f.n_inputs()).map(|w| self.zero_label(w)).collect();
        let output_zeros = f
            .outputs
            .iter()
            .map(|&(w, flip)| self.zero_label(w) ^ self.delta.select(flip))
            .collect();
        GarbledCircuit {
            tables,
            delta: self.delta,
            input_zeros,
            output_zeros,
            n_inputs_a: f.n_inputs_a,
            n_inputs_b: f.n_inputs_b,
        }
    }
}

pub struct GarbleResult {
    pub circuit: GarbledCircuit,
    pub hash_calls: u64,
}

/// Garble a folded netlist in gate order.
pub fn garble(f: &FoldedNetlist, seed: u64) -> GarbleResult {
    let mut sess = GarbleSession::new(f, seed);
    let mut tables = Vec::with_capacity(f.and_count());
    for idx in 0..f.gates.len() {
        if let Some(t) = sess.garble_gate(f, idx) {
            tables.push(t);
        }
    }
    let hash_calls = sess.hash_calls;
    GarbleResult { circuit: sess.finish(f, tables), hash_calls }
}

/// Incremental evaluator, mirroring [`GarbleSession`].
pub struct EvalSession {
    aes: Aes128,
    active: Vec<Option<Label>>,
    next_table: usize,
    pub hash_calls: u64,
}

impl EvalSession {
    pub fn new(f: &FoldedNetlist, inputs: &[Label]) -> Result<Self, GarbleError> {
        if inputs.len() != f.n_inputs() {
            return Err(GarbleError::InputCount {
                expected: f.n_inputs(),
                got: inputs.len(),
            });
        }
        let mut active = vec![None; f.n_wires];
        for (slot, &l) in active.iter_mut().zip(inputs) {
            *slot = Some(l);
        }
        Ok(EvalSession { aes: fixed_key_aes(), active, next_table: 0, hash_calls: 0 })
    }

    pub fn active_label(&self, w: WireId) -> Label {
        self.active[w].expect("wire not yet evaluated")
    }

    /// Evaluate one gate by index, consuming `table` for AND gates. Polarity
    /// flips are invisible here: the active label string is the same either
    /// way.
    pub fn eval_gate(&mut self, f: &FoldedNetlist, idx: usize, table: Option<&GarbledGate>) {
        let g = f.gates[idx];
        let a = self.active_label(g.in0);
        match g.kind {
            GateKind::Xor => {
                let b = self.active_label(g.in1);
                self.active[g.out] = Some(a ^ b);
            }
            GateKind::And => {
                let t = table.expect("AND gate needs a garbled table");
                let b = self.active_label(g.in1);
                let (j0, j1) = (2 * idx as u128, 2 * idx as u128 + 1);
                let ha = hash(&self.aes, a, j0, &mut self.hash_calls);
                let hb = hash(&self.aes, b, j1, &mut self.hash_calls);
                let w_g = ha ^ if a.color() { t.row_g } else { Label(0) };
                let w_e = hb ^ if b.color() { t.row_e ^ a } else { Label(0) };
                self.active[g.out] = Some(w_g ^ w_e);
            }
            GateKind::Inv => unreachable!("folded netlists contain no INV"),
        }
    }

    pub fn outputs(&self, f: &FoldedNetlist) -> Vec<Label> {
        f.outputs.iter().map(|&(w, _)| self.active_label(w)).collect()
    }
}

pub struct EvalResult {
    pub outputs: Vec<Label>,
    pub hash_calls: u64,
}

/// Evaluate a folded netlist against its tables in gate order.
pub fn evaluate(
    f: &FoldedNetlist,
    tables: &[GarbledGate],
    inputs: &[Label],
) -> Result<EvalResult, GarbleError> {
    let expected = f.and_count();
    if tables.len() != expected {
        return Err(GarbleError::TableCount { expected, got: tables.len() });
    }
    let mut sess = EvalSession::new(f, inputs)?;
    for idx in 0..f.gates.len() {
        let table = if f.gates[idx].kind == GateKind::And {
            let t = &tables[sess.next_table];
            sess.next_table += 1;
            Some(t)
        } else {
            None
        };
        sess.eval_gate(f, idx, table);
    }
    let outputs = sess.outputs(f);
    Ok(EvalResult { outputs, hash_calls: sess.hash_calls })
}

const MAGIC: &[u8; 8] = b"GCTBL\x00\x01\x00";
const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 32;

/// Serialize: 32-byte header (magic, version, counts), then the table rows
/// little-endian in AND-gate order, then delta, input zero-labels, output
/// zero-labels.
pub fn serialize(gc: &GarbledCircuit) -> Vec<u8> {
    let mut out = Vec::with_capacity(
        HEADER_BYTES
            + gc.table_bytes()
            + LABEL_BYTES * (1 + gc.input_zeros.len() + gc.output_zeros.len()),
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(gc.tables.len() as u32).to_le_bytes());
    out.extend_from_slice(&(gc.n_inputs_a as u32).to_le_bytes());
    out.extend_from_slice(&(gc.n_inputs_b as u32).to_le_bytes());
    out.extend_from_slice(&(gc.output_zeros.len() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    assert_eq!(out.len(), HEADER_BYTES);
    for t in &gc.tables {
        out.extend_from_slice(&t.row_g.to_bytes());
        out.extend_from_slice(&t.row_e.to_bytes());
    }
    out.extend_from_slice(&gc.delta.label().to_bytes());
    for l in gc.input_zeros.iter().chain(&gc.output_zeros) {
        out.extend_from_slice(&l.to_bytes());
    }
    out
}

pub fn deserialize(bytes: &[u8]) -> Result<GarbledCircuit, GarbleError> {
    if bytes.len() < HEADER_BYTES || &bytes[..8] != MAGIC {
        return Err(GarbleError::Format("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    if u32_at(8) != VERSION as usize {
        return Err(GarbleError::Format("unsupported version"));
    }
    let n_and = u32_at(12);
    let n_inputs_a = u32_at(16);
    let n_inputs_b = u32_at(20);
    let n_outputs = u32_at(24);
    let need = HEADER_BYTES
        + n_and * GARBLED_GATE_BYTES
        + LABEL_BYTES * (1 + n_inputs_a + n_inputs_b + n_outputs);
    if bytes.len() != need {
        return Err(GarbleError::Format("length mismatch"));
    }
    let label_at = |o: usize| Label::from_bytes(bytes[o..o + LABEL_BYTES].try_into().unwrap());
    let mut off = HEADER_BYTES;
    let mut tables = Vec::with_capacity(n_and);
    for _ in 0..n_and {
        tables.push(GarbledGate {
            row_g: label_at(off),
            row_e: label_at(off + LABEL_BYTES),
        });
        off += GARBLED_GATE_BYTES;
    }
    let delta_label = label_at(off);
    if !delta_label.color() {
        return Err(GarbleError::Format("delta low bit must be 1"));
    }
    off += LABEL_BYTES;
    let mut read_labels = |n: usize| -> Vec<Label> {
        let v = (0..n).map(|i| label_at(off + i * LABEL_BYTES)).collect();
        off += n * LABEL_BYTES;
        v
    };
    let input_zeros = read_labels(n_inputs_a + n_inputs_b);
    let output_zeros = read_labels(n_outputs);
    Ok(GarbledCircuit {
        tables,
        delta: GlobalDelta(delta_label),
        input_zeros,
        output_zeros,
        n_inputs_a,
        n_inputs_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{parse_bristol, random_netlist, Gate};
    use rand::SeedableRng;

    fn bits(n: usize, v: u64) -> Vec<bool> {
        (0..n).map(|i| (v >> i) & 1 == 1).collect()
    }

    fn gc_eval(n: &Netlist, inputs: &[bool], seed: u64) -> Vec<bool> {
        let f = fold_inv(n);
        let r = garble(&f, seed);
        let labels = r.circuit.encode(inputs).unwrap();
        let ev = evaluate(&f, &r.circuit.tables, &labels).unwrap();
        r.circuit.decode(&ev.outputs).unwrap()
    }

    #[test]
    fn single_inv_folds_to_flipped_output() {
        let n = parse_bristol("1 2\n2 1 0\n1 1\n1 1 0 1 INV\n").unwrap();
        let f = fold_inv(&n);
        assert!(f.gates.is_empty());
        assert_eq!(f.outputs, vec![(0, true)]);
        assert_eq!(f.eval_plain(&[false]).unwrap(), vec![true]);
    }

    #[test]
    fn inv_into_xor_keeps_function() {
        let n = parse_bristol("2 4\n2 1 1\n1 1\n1 1 0 2 INV\n2 1 2 1 3 XOR\n").unwrap();
        let f = fold_inv(&n);
        assert_eq!(f.gates.len(), 1);
        assert_eq!(f.gates[0].kind, GateKind::Xor);
        for v in 0..4u64 {
            let input = bits(2, v);
            assert_eq!(
                f.eval_plain(&input).unwrap(),
                n.eval_plain(&input).unwrap()
            );
        }
    }

    #[test]
    fn fold_equivalence_random_netlists() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = random_netlist(&mut rng, 4, 4, 500, 6);
            let f = fold_inv(&n);
            assert!(f.gates.iter().all(|g| g.kind != GateKind::Inv));
            for _ in 0..50 {
                let input: Vec<bool> = (0..8).map(|_| rng.gen()).collect();
                assert_eq!(
                    f.eval_plain(&input).unwrap(),
                    n.eval_plain(&input).unwrap()
                );
            }
        }
    }

    #[test]
    fn and_gate_truth_table_through_gc() {
        let n = parse_bristol("1 3\n2 1 1\n1 1\n2 1 0 1 2 AND\n").unwrap();
        for v in 0..4u64 {
            let input = bits(2, v);
            assert_eq!(gc_eval(&n, &input, 99), n.eval_plain(&input).unwrap());
        }
    }

    #[test]
    fn random_netlists_end_to_end() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        for trial in 0..10 {
            let n = random_netlist(&mut rng, 5, 3, 800, 8);
            for _ in 0..10 {
                let input: Vec<bool> = (0..8).map(|_| rng.gen()).collect();
                assert_eq!(
                    gc_eval(&n, &input, trial),
                    n.eval_plain(&input).unwrap(),
                    "trial {trial}"
                );
            }
        }
    }

    #[test]
    fn xor_only_has_no_tables_and_free_structure() {
        let n = parse_bristol("2 5\n2 2 1\n1 1\n2 1 0 1 3 XOR\n2 1 3 2 4 XOR\n").unwrap();
        let f = fold_inv(&n);
        let r = garble(&f, 1);
        assert!(r.circuit.tables.is_empty());
        assert_eq!(r.hash_calls, 0);
        let sess = {
            let mut s = GarbleSession::new(&f, 1);
            for i in 0..f.gates.len() {
                s.garble_gate(&f, i);
            }
            s
        };
        for g in &f.gates {
            assert_eq!(
                sess.zero_label(g.out),
                sess.zero_label(g.in0) ^ sess.zero_label(g.in1)
            );
        }
    }

    #[test]
    fn hash_call_budget() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let n = random_netlist(&mut rng, 4, 4, 300, 4);
        let f = fold_inv(&n);
        let r = garble(&f, 5);
        let k = f.and_count() as u64;
        assert_eq!(r.hash_calls, 4 * k);
        let labels = r.circuit.encode(&bits(8, 0b10110101)).unwrap();
        let ev = evaluate(&f, &r.circuit.tables, &labels).unwrap();
        assert_eq!(ev.hash_calls, 2 * k);
        assert_eq!(r.circuit.table_bytes(), 32 * k as usize);
    }

    #[test]
    fn label_pair_law_and_delta_lsb() {
        let n = parse_bristol("1 3\n2 1 1\n1 1\n2 1 0 1 2 AND\n").unwrap();
        let f = fold_inv(&n);
        let r = garble(&f, 42);
        assert!(r.circuit.delta.label().color());
        for (&z, b) in r.circuit.input_zeros.iter().zip([true, false]) {
            let one = z ^ r.circuit.delta.label();
            assert_ne!(z.color(), one.color());
            let enc = r.circuit.encode(&[b, b]).unwrap();
            let _ = enc;
        }
    }

    #[test]
    fn decode_rejects_corrupt_label() {
        let n = parse_bristol("1 3\n2 1 1\n1 1\n2 1 0 1 2 AND\n").unwrap();
        let f = fold_inv(&n);
        let r = garble(&f, 8);
        let labels = r.circuit.encode(&[true, true]).unwrap();
        let ev = evaluate(&f, &r.circuit.tables, &labels).unwrap();
        assert_eq!(r.circuit.decode(&ev.outputs).unwrap(), vec![true]);
        let bad = vec![ev.outputs[0] ^ Label(2)];
        assert_eq!(r.circuit.decode(&bad), Err(GarbleError::Integrity(0)));
    }

    #[test]
    fn table_count_mismatch_rejected() {
        let n = parse_bristol("1 3\n2 1 1\n1 1\n2 1 0 1 2 AND\n").unwrap();
        let f = fold_inv(&n);
        let r = garble(&f, 8);
        let labels = r.circuit.encode(&[true, false]).unwrap();
        assert!(matches!(
            evaluate(&f, &[], &labels),
            Err(GarbleError::TableCount { expected: 1, got: 0 })
        ));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(13);
        let n = random_netlist(&mut rng, 4, 4, 200, 4);
        let f = fold_inv(&n);
        let a = serialize(&garble(&f, 123).circuit);
        let b = serialize(&garble(&f, 123).circuit);
        let c = serialize(&garble(&f, 124).circuit);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn serialization_round_trip() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(17);
        let n = random_netlist(&mut rng, 3, 3, 150, 5);
        let f = fold_inv(&n);
        let gc = garble(&f, 77).circuit;
        let bytes = serialize(&gc);
        assert_eq!(
            bytes.len(),
            HEADER_BYTES + gc.table_bytes() + 16 * (1 + 6 + 5)
        );
        assert_eq!(deserialize(&bytes).unwrap(), gc);
        assert!(deserialize(&bytes[..HEADER_BYTES - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert!(deserialize(&bad).is_err());
    }

    #[test]
    fn out_of_order_garbling_matches_sequential() {
        // A diamond: two independent ANDs feeding a final AND. Garbling the
        // independent gates in swapped order must produce identical tables.
        let gates = vec![
            Gate::and(0, 1, 4),
            Gate::and(2, 3, 5),
            Gate::and(4, 5, 6),
        ];
        let n = Netlist { gates, n_inputs_a: 2, n_inputs_b: 2, n_outputs: 1, n_wires: 7 };
        n.validate().unwrap();
        let f = fold_inv(&n);
        let seq = garble(&f, 9);
        let mut s = GarbleSession::new(&f, 9);
        let t1 = s.garble_gate(&f, 1).unwrap();
        let t0 = s.garble_gate(&f, 0).unwrap();
        let t2 = s.garble_gate(&f, 2).unwrap();
        assert_eq!(vec![t0, t1, t2], seq.circuit.tables);
    }
}
