//! Boolean netlist representation: Bristol-fashion parsing/emission, plaintext
//! evaluation, and DAG construction.
//!
//! Netlists contain only AND, XOR, and INV gates over densely numbered wires.
//! The gate list is always a valid topological order: every gate input is
//! either a circuit input or the output of an earlier gate.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

/// Index of a wire within a netlist. Dense, starting at 0.
pub type WireId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    And,
    Xor,
    Inv,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Inv => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Xor => "XOR",
            GateKind::Inv => "INV",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub in0: WireId,
    /// Absent for INV gates.
    pub in1: Option<WireId>,
    pub out: WireId,
}

impl Gate {
    pub fn and(in0: WireId, in1: WireId, out: WireId) -> Self {
        Gate { kind: GateKind::And, in0, in1: Some(in1), out }
    }

    pub fn xor(in0: WireId, in1: WireId, out: WireId) -> Self {
        Gate { kind: GateKind::Xor, in0, in1: Some(in1), out }
    }

    pub fn inv(in0: WireId, out: WireId) -> Self {
        Gate { kind: GateKind::Inv, in0, in1: None, out }
    }

    pub fn inputs(&self) -> impl Iterator<Item = WireId> + '_ {
        std::iter::once(self.in0).chain(self.in1)
    }
}

/// A boolean circuit over AND/XOR/INV gates with two input blocks (party A
/// and party B) and `n_outputs` output wires occupying the last wire indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    pub gates: Vec<Gate>,
    pub n_inputs_a: usize,
    pub n_inputs_b: usize,
    pub n_outputs: usize,
    pub n_wires: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetlistError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: dangling wire reference {wire} (circuit has {n_wires} wires)")]
    DanglingWire { line: usize, wire: WireId, n_wires: usize },
    #[error("line {line}: gate reads wire {wire} before it is defined")]
    NonTopological { line: usize, wire: WireId },
    #[error("line {line}: wire {wire} driven more than once")]
    MultipleDrivers { line: usize, wire: WireId },
    #[error("line {line}: unknown gate kind `{kind}`")]
    UnknownGateKind { line: usize, kind: String },
    #[error("input length mismatch: expected {expected} bits, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("invalid structure: {0}")]
    Invalid(String),
}

impl Netlist {
    pub fn n_inputs(&self) -> usize {
        self.n_inputs_a + self.n_inputs_b
    }

    /// Wire ids of the circuit outputs (the last `n_outputs` indices).
    pub fn output_wires(&self) -> impl Iterator<Item = WireId> + '_ {
        (self.n_wires - self.n_outputs)..self.n_wires
    }

    pub fn and_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind == GateKind::And).count()
    }

    /// Checks all structural invariants; used by the parser and by generators.
    pub fn validate(&self) -> Result<(), NetlistError> {
        if self.n_outputs > self.n_wires {
            return Err(NetlistError::Invalid("more outputs than wires".into()));
        }
        let mut defined = vec![false; self.n_wires];
        for w in defined.iter_mut().take(self.n_inputs()) {
            *w = true;
        }
        for (i, g) in self.gates.iter().enumerate() {
            for w in g.inputs() {
                if w >= self.n_wires {
                    return Err(NetlistError::DanglingWire {
                        line: i,
                        wire: w,
                        n_wires: self.n_wires,
                    });
                }
                if !defined[w] {
                    return Err(NetlistError::NonTopological { line: i, wire: w });
                }
            }
            if g.out >= self.n_wires {
                return Err(NetlistError::DanglingWire {
                    line: i,
                    wire: g.out,
                    n_wires: self.n_wires,
                });
            }
            if defined[g.out] {
                return Err(NetlistError::MultipleDrivers { line: i, wire: g.out });
            }
            defined[g.out] = true;
        }
        if let Some(w) = defined.iter().position(|d| !d) {
            return Err(NetlistError::Invalid(format!("wire {w} is never driven")));
        }
        Ok(())
    }

    /// Plaintext boolean simulation. Inputs are party A bits followed by
    /// party B bits; outputs come from the last `n_outputs` wires.
    pub fn eval_plain(&self, inputs: &[bool]) -> Result<Vec<bool>, NetlistError> {
        if inputs.len() != self.n_inputs() {
            return Err(NetlistError::InputLength {
                expected: self.n_inputs(),
                got: inputs.len(),
            });
        }
        let mut vals = vec![false; self.n_wires];
        vals[..inputs.len()].copy_from_slice(inputs);
        for g in &self.gates {
            let a = vals[g.in0];
            vals[g.out] = match g.kind {
                GateKind::And => a & vals[g.in1.unwrap()],
                GateKind::Xor => a ^ vals[g.in1.unwrap()],
                GateKind::Inv => !a,
            };
        }
        Ok(self.output_wires().map(|w| vals[w]).collect())
    }

    /// Builds the gate-level dependency DAG with per-node cycle weights.
    pub fn build_dag(&self, latency: &LatencyMap) -> CircuitDag {
        let mut producer: HashMap<WireId, usize> = HashMap::new();
        for (i, g) in self.gates.iter().enumerate() {
            producer.insert(g.out, i);
        }
        let n = self.gates.len();
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        let mut weights = Vec::with_capacity(n);
        for (i, g) in self.gates.iter().enumerate() {
            weights.push(latency.of(g.kind));
            for w in g.inputs() {
                if let Some(&p) = producer.get(&w) {
                    succs[p].push(i);
                    preds[i].push(p);
                }
            }
        }
        CircuitDag { succs, preds, weights }
    }
}

/// Per-gate-kind cycle latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencyMap {
    pub and: u64,
    pub xor: u64,
    pub inv: u64,
}

impl LatencyMap {
    /// Half-Gate evaluation takes 18 cycles, FreeXOR one.
    pub const EVAL: LatencyMap = LatencyMap { and: 18, xor: 1, inv: 1 };
    /// Half-Gate garbling takes 21 cycles.
    pub const GARBLE: LatencyMap = LatencyMap { and: 21, xor: 1, inv: 1 };

    pub fn of(&self, kind: GateKind) -> u64 {
        match kind {
            GateKind::And => self.and,
            GateKind::Xor => self.xor,
            GateKind::Inv => self.inv,
        }
    }
}

/// Producer→consumer dependency graph over gate indices.
#[derive(Debug, Clone)]
pub struct CircuitDag {
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    pub weights: Vec<u64>,
}

impl CircuitDag {
    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn edge_count(&self) -> usize {
        self.succs.iter().map(|s| s.len()).sum()
    }
}

/// Parses the pinned Bristol-fashion dialect.
///
/// Line 1: `<n_gates> <n_wires>`; line 2: `2 <n_inputs_A> <n_inputs_B>`;
/// line 3: `1 <n_outputs>`; then one gate per line:
/// `2 1 <in0> <in1> <out> AND|XOR` or `1 1 <in> <out> INV`.
pub fn parse_bristol(text: &str) -> Result<Netlist, NetlistError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let syntax = |line: usize, msg: &str| NetlistError::Syntax { line, msg: msg.into() };

    let (l1, header) = lines.next().ok_or_else(|| syntax(1, "missing header line"))?;
    let nums = parse_usizes(header).map_err(|m| syntax(l1, &m))?;
    let [n_gates, n_wires] = nums[..] else {
        return Err(syntax(l1, "expected `<n_gates> <n_wires>`"));
    };

    let (l2, inputs) = lines.next().ok_or_else(|| syntax(2, "missing input header"))?;
    let nums = parse_usizes(inputs).map_err(|m| syntax(l2, &m))?;
    let [2, n_inputs_a, n_inputs_b] = nums[..] else {
        return Err(syntax(l2, "expected `2 <n_inputs_A> <n_inputs_B>`"));
    };

    let (l3, outputs) = lines.next().ok_or_else(|| syntax(3, "missing output header"))?;
    let nums = parse_usizes(outputs).map_err(|m| syntax(l3, &m))?;
    let [1, n_outputs] = nums[..] else {
        return Err(syntax(l3, "expected `1 <n_outputs>`"));
    };

    let mut gates = Vec::with_capacity(n_gates);
    for (lineno, line) in lines {
        let mut parts = line.split_ascii_whitespace();
        let n_in: usize = parts
            .next()
            .ok_or_else(|| syntax(lineno, "empty gate line"))?
            .parse()
            .map_err(|_| syntax(lineno, "bad input-arity field"))?;
        let n_out: usize = parts
            .next()
            .ok_or_else(|| syntax(lineno, "missing output-arity field"))?
            .parse()
            .map_err(|_| syntax(lineno, "bad output-arity field"))?;
        if n_out != 1 {
            return Err(syntax(lineno, "only single-output gates are supported"));
        }
        let mut wires = Vec::with_capacity(n_in + 1);
        for _ in 0..n_in + 1 {
            let w: usize = parts
                .next()
                .ok_or_else(|| syntax(lineno, "missing wire field"))?
                .parse()
                .map_err(|_| syntax(lineno, "bad wire index"))?;
            wires.push(w);
        }
        let kind = parts
            .next()
            .ok_or_else(|| syntax(lineno, "missing gate kind"))?;
        if parts.next().is_some() {
            return Err(syntax(lineno, "trailing tokens on gate line"));
        }
        let gate = match (kind, n_in) {
            ("AND", 2) => Gate::and(wires[0], wires[1], wires[2]),
            ("XOR", 2) => Gate::xor(wires[0], wires[1], wires[2]),
            ("INV", 1) => Gate::inv(wires[0], wires[1]),
            ("AND" | "XOR" | "INV", _) => {
                return Err(syntax(lineno, "gate arity does not match kind"))
            }
            (other, _) => {
                return Err(NetlistError::UnknownGateKind { line: lineno, kind: other.into() })
            }
        };
        gates.push((lineno, gate));
    }
    if gates.len() != n_gates {
        return Err(NetlistError::Invalid(format!(
            "header declares {n_gates} gates but {} were given",
            gates.len()
        )));
    }

    // Validate against declared sizes with real line numbers before handing
    // back the structural object.
    let n_inputs = n_inputs_a + n_inputs_b;
    let mut defined = vec![false; n_wires];
    for w in defined.iter_mut().take(n_inputs.min(n_wires)) {
        *w = true;
    }
    for (lineno, g) in &gates {
        for w in g.inputs() {
            if w >= n_wires {
                return Err(NetlistError::DanglingWire { line: *lineno, wire: w, n_wires });
            }
            if !defined[w] {
                return Err(NetlistError::NonTopological { line: *lineno, wire: w });
            }
        }
        if g.out >= n_wires {
            return Err(NetlistError::DanglingWire { line: *lineno, wire: g.out, n_wires });
        }
        if defined[g.out] {
            return Err(NetlistError::MultipleDrivers { line: *lineno, wire: g.out });
        }
        defined[g.out] = true;
    }

    let n = Netlist {
        gates: gates.into_iter().map(|(_, g)| g).collect(),
        n_inputs_a,
        n_inputs_b,
        n_outputs,
        n_wires,
    };
    n.validate()?;
    Ok(n)
}

fn parse_usizes(s: &str) -> Result<Vec<usize>, String> {
    s.split_ascii_whitespace()
        .map(|t| t.parse().map_err(|_| format!("bad integer `{t}`")))
        .collect()
}

/// Emits the pinned Bristol dialect. Byte-stable: the same netlist always
/// produces identical output.
pub fn emit_bristol(n: &Netlist) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", n.gates.len(), n.n_wires);
    let _ = writeln!(out, "2 {} {}", n.n_inputs_a, n.n_inputs_b);
    let _ = writeln!(out, "1 {}", n.n_outputs);
    for g in &n.gates {
        match g.kind {
            GateKind::Inv => {
                let _ = writeln!(out, "1 1 {} {} INV", g.in0, g.out);
            }
            k => {
                let _ = writeln!(out, "2 1 {} {} {} {}", g.in0, g.in1.unwrap(), g.out, k.name());
            }
        }
    }
    out
}

/// Splices `inner` into a larger gate list: returns `inner`'s gates rewritten
/// so that its input wires are `input_wires` and all internal wires start at
/// `next_wire`. Returns the rewritten gates, the output wire ids, and the
/// next free wire index. This is the wire-renumbering rule used when
/// composing generated netlists.
pub fn splice(
    inner: &Netlist,
    input_wires: &[WireId],
    mut next_wire: WireId,
) -> (Vec<Gate>, Vec<WireId>, WireId) {
    assert_eq!(input_wires.len(), inner.n_inputs(), "splice input arity mismatch");
    let mut map: HashMap<WireId, WireId> = HashMap::new();
    for (i, &w) in input_wires.iter().enumerate() {
        map.insert(i, w);
    }
    let mut gates = Vec::with_capacity(inner.gates.len());
    for g in &inner.gates {
        let in0 = map[&g.in0];
        let in1 = g.in1.map(|w| map[&w]);
        let out = next_wire;
        next_wire += 1;
        map.insert(g.out, out);
        gates.push(Gate { kind: g.kind, in0, in1, out });
    }
    let outputs = inner.output_wires().map(|w| map[&w]).collect();
    (gates, outputs, next_wire)
}

/// Random valid netlist for fuzz-style corpus tests. Gate kinds are drawn
/// roughly 40% AND / 40% XOR / 20% INV; inputs of each gate come from any
/// earlier wire. Outputs are the last `n_outputs` gate outputs.
pub fn random_netlist(
    rng: &mut impl rand::Rng,
    n_inputs_a: usize,
    n_inputs_b: usize,
    n_gates: usize,
    n_outputs: usize,
) -> Netlist {
    assert!(n_inputs_a + n_inputs_b >= 1);
    assert!(n_gates >= n_outputs && n_outputs >= 1);
    let n_inputs = n_inputs_a + n_inputs_b;
    let mut gates = Vec::with_capacity(n_gates);
    for i in 0..n_gates {
        let out = n_inputs + i;
        let kind = rng.gen_range(0..10);
        gates.push(if kind < 4 {
            Gate::and(rng.gen_range(0..out), rng.gen_range(0..out), out)
        } else if kind < 8 {
            Gate::xor(rng.gen_range(0..out), rng.gen_range(0..out), out)
        } else {
            Gate::inv(rng.gen_range(0..out), out)
        });
    }
    let n = Netlist {
        gates,
        n_inputs_a,
        n_inputs_b,
        n_outputs,
        n_wires: n_inputs + n_gates,
    };
    n.validate().expect("random netlist construction is valid");
    n
}
