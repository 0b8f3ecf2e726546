//! Gate-level circuit builder with word-oriented helpers.
//!
//! Words are little-endian wire vectors (index 0 = LSB). The builder tracks
//! lazily created constant wires; `finish` renumbers wires so the requested
//! outputs occupy the last indices, as the Bristol emitter expects.

use std::collections::HashMap;

use crate::netlist::{Gate, Netlist, WireId};

pub struct Builder {
    gates: Vec<Gate>,
    n_inputs_a: usize,
    n_inputs_b: usize,
    next: WireId,
    zero: Option<WireId>,
    one: Option<WireId>,
}

impl Builder {
    pub fn new(n_inputs_a: usize, n_inputs_b: usize) -> Self {
        assert!(n_inputs_a + n_inputs_b > 0, "circuit needs at least one input");
        Builder {
            gates: Vec::new(),
            n_inputs_a,
            n_inputs_b,
            next: n_inputs_a + n_inputs_b,
            zero: None,
            one: None,
        }
    }

    pub fn input_a(&self, i: usize) -> WireId {
        assert!(i < self.n_inputs_a);
        i
    }

    pub fn input_b(&self, i: usize) -> WireId {
        assert!(i < self.n_inputs_b);
        self.n_inputs_a + i
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    fn alloc(&mut self) -> WireId {
        let w = self.next;
        self.next += 1;
        w
    }

    pub fn and(&mut self, a: WireId, b: WireId) -> WireId {
        let out = self.alloc();
        self.gates.push(Gate::and(a, b, out));
        out
    }

    pub fn xor(&mut self, a: WireId, b: WireId) -> WireId {
        let out = self.alloc();
        self.gates.push(Gate::xor(a, b, out));
        out
    }

    pub fn inv(&mut self, a: WireId) -> WireId {
        let out = self.alloc();
        self.gates.push(Gate::inv(a, out));
        out
    }

    pub fn zero(&mut self) -> WireId {
        if let Some(z) = self.zero {
            return z;
        }
        let z = self.xor(0, 0);
        self.zero = Some(z);
        z
    }

    pub fn one(&mut self) -> WireId {
        if let Some(o) = self.one {
            return o;
        }
        let z = self.zero();
        let o = self.inv(z);
        self.one = Some(o);
        o
    }

    pub fn or(&mut self, a: WireId, b: WireId) -> WireId {
        let na = self.inv(a);
        let nb = self.inv(b);
        let n = self.and(na, nb);
        self.inv(n)
    }

    pub fn xnor(&mut self, a: WireId, b: WireId) -> WireId {
        let x = self.xor(a, b);
        self.inv(x)
    }

    /// s ? b : a, one AND.
    pub fn mux(&mut self, s: WireId, a: WireId, b: WireId) -> WireId {
        let d = self.xor(a, b);
        let m = self.and(s, d);
        self.xor(a, m)
    }

    pub fn mux_word(&mut self, s: WireId, a: &[WireId], b: &[WireId]) -> Vec<WireId> {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(&x, &y)| self.mux(s, x, y)).collect()
    }

    /// Word of constant bits.
    pub fn const_word(&mut self, value: u128, width: usize) -> Vec<WireId> {
        (0..width)
            .map(|i| {
                if (value >> i) & 1 == 1 {
                    self.one()
                } else {
                    self.zero()
                }
            })
            .collect()
    }

    /// a + b (mod 2^w), one AND per carry. Carry recurrence:
    /// c' = c ^ ((a^c) & (b^c)).
    pub fn add(&mut self, a: &[WireId], b: &[WireId]) -> Vec<WireId> {
        self.add_with_carry(a, b, None)
    }

    fn add_with_carry(&mut self, a: &[WireId], b: &[WireId], cin: Option<WireId>) -> Vec<WireId> {
        assert_eq!(a.len(), b.len());
        let w = a.len();
        let mut out = Vec::with_capacity(w);
        let mut carry = cin;
        for i in 0..w {
            let axb = self.xor(a[i], b[i]);
            let sum = match carry {
                Some(c) => self.xor(axb, c),
                None => axb,
            };
            out.push(sum);
            if i + 1 < w {
                carry = Some(match carry {
                    Some(c) => {
                        let ac = self.xor(a[i], c);
                        let bc = self.xor(b[i], c);
                        let t = self.and(ac, bc);
                        self.xor(c, t)
                    }
                    None => self.and(a[i], b[i]),
                });
            }
        }
        out
    }

    /// a - b (mod 2^w) via a + ~b + 1.
    pub fn sub(&mut self, a: &[WireId], b: &[WireId]) -> Vec<WireId> {
        let nb: Vec<WireId> = b.iter().map(|&x| self.inv(x)).collect();
        let one = self.one();
        self.add_with_carry(a, &nb, Some(one))
    }

    /// Two's-complement negation.
    pub fn neg(&mut self, a: &[WireId]) -> Vec<WireId> {
        let zero = self.zero();
        let zw: Vec<WireId> = vec![zero; a.len()];
        self.sub(&zw, a)
    }

    /// Conditional negation: s == 1 ? -a : a, computed as (a ^ s) + s.
    pub fn cneg(&mut self, a: &[WireId], s: WireId) -> Vec<WireId> {
        let t: Vec<WireId> = a.iter().map(|&x| self.xor(x, s)).collect();
        let w = t.len();
        let mut out = Vec::with_capacity(w);
        let mut carry = s;
        for i in 0..w {
            if i == 0 {
                out.push(self.xor(t[0], carry));
                carry = self.and(t[0], carry);
            } else {
                out.push(self.xor(t[i], carry));
                if i + 1 < w {
                    carry = self.and(t[i], carry);
                }
            }
        }
        out
    }

    /// Decrement: a - 1 (mod 2^w) with a borrow chain, one AND per bit.
    pub fn dec(&mut self, a: &[WireId]) -> Vec<WireId> {
        let mut out = Vec::with_capacity(a.len());
        let mut borrow: Option<WireId> = None; // None means borrow = 1
        for (i, &x) in a.iter().enumerate() {
            match borrow {
                None => {
                    out.push(self.inv(x));
                    if i + 1 < a.len() {
                        borrow = Some(self.inv(x)); // borrow' = !x
                    }
                }
                Some(b) => {
                    out.push(self.xor(x, b));
                    if i + 1 < a.len() {
                        let nx = self.inv(x);
                        borrow = Some(self.and(b, nx));
                    }
                }
            }
        }
        out
    }

    /// Unsigned a >= c for a constant c. Returns the carry-out of a + ~c + 1.
    pub fn ge_const_unsigned(&mut self, a: &[WireId], c: u128) -> WireId {
        let mut carry: Option<WireId> = None; // None = 1 (the +1 of two's complement)
        for (i, &x) in a.iter().enumerate() {
            let nc = (c >> i) & 1 == 0; // bit of ~c
            carry = Some(match (carry, nc) {
                // carry=1 entering
                (None, true) => {
                    // maj(x, 1, 1) = 1
                    self.one()
                }
                (None, false) => x, // maj(x, 0, 1) = x
                (Some(cy), true) => self.or(x, cy),
                (Some(cy), false) => self.and(x, cy),
            });
        }
        carry.expect("non-empty word")
    }

    /// Signed a >= c via offset-binary (flip sign bits, compare unsigned).
    pub fn ge_const_signed(&mut self, a: &[WireId], c: i128) -> WireId {
        let w = a.len();
        let msb = self.inv(a[w - 1]);
        let mut flipped = a.to_vec();
        flipped[w - 1] = msb;
        let offset = (c + (1 << (w - 1))) as u128;
        self.ge_const_unsigned(&flipped, offset)
    }

    /// Unsigned a >= b between two words (carry-out of a - b).
    pub fn ge_unsigned(&mut self, a: &[WireId], b: &[WireId]) -> WireId {
        assert_eq!(a.len(), b.len());
        let mut carry: Option<WireId> = None;
        for i in 0..a.len() {
            let nb = self.inv(b[i]);
            carry = Some(match carry {
                None => {
                    // maj(a, !b, 1) = a | !b
                    self.or(a[i], nb)
                }
                Some(cy) => {
                    let ac = self.xor(a[i], cy);
                    let bc = self.xor(nb, cy);
                    let t = self.and(ac, bc);
                    self.xor(cy, t)
                }
            });
        }
        carry.expect("non-empty word")
    }

    /// Equality flag across a word pair (AND-tree of XNORs).
    pub fn eq_word(&mut self, a: &[WireId], b: &[WireId]) -> WireId {
        assert_eq!(a.len(), b.len());
        let mut bits: Vec<WireId> = a.iter().zip(b).map(|(&x, &y)| self.xnor(x, y)).collect();
        while bits.len() > 1 {
            let mut next = Vec::with_capacity(bits.len().div_ceil(2));
            for pair in bits.chunks(2) {
                if pair.len() == 2 {
                    next.push(self.and(pair[0], pair[1]));
                } else {
                    next.push(pair[0]);
                }
            }
            bits = next;
        }
        bits[0]
    }

    /// Sign-extend or zero-pad to `width`, optionally shifting left by `shift`
    /// (pure wiring plus constant-zero fill).
    pub fn extend(&mut self, a: &[WireId], width: usize, shift: usize, signed: bool) -> Vec<WireId> {
        assert!(a.len() + shift <= width);
        let zero = self.zero();
        let mut out = vec![zero; shift];
        out.extend_from_slice(a);
        let fill = if signed { *a.last().unwrap() } else { zero };
        while out.len() < width {
            out.push(fill);
        }
        out
    }

    /// Arithmetic right shift (wiring only).
    pub fn shr_signed(&mut self, a: &[WireId], shift: usize) -> Vec<WireId> {
        let w = a.len();
        let sign = a[w - 1];
        (0..w)
            .map(|i| if i + shift < w { a[i + shift] } else { sign })
            .collect()
    }

    /// Unsigned low-word schoolbook multiplier: AND partial products
    /// accumulated with ripple adders. Result is a*b mod 2^w.
    pub fn mul_conventional(&mut self, a: &[WireId], b: &[WireId]) -> Vec<WireId> {
        assert_eq!(a.len(), b.len());
        let w = a.len();
        let mut acc: Vec<WireId> = (0..w).map(|i| self.and(a[i], b[0])).collect();
        for j in 1..w {
            let row: Vec<WireId> = (0..w - j).map(|i| self.and(a[i], b[j])).collect();
            let upper = self.add(&acc[j..].to_vec(), &row);
            acc.splice(j.., upper);
        }
        acc
    }

    /// Low-word product using the sign-flip binary recoding: partial products
    /// become XNORs of the recoded digits and only the accumulation carries
    /// (and, optionally, the correction terms) spend AND gates.
    ///
    /// With `correction` the result equals a*b mod 2^w exactly; without it,
    /// the result is the recoded product whose deviation from a*b is exactly
    /// eps_a*bh + eps_b*ah - eps_a*eps_b (eps = INV of the operand's LSB,
    /// ah/bh the recoded values).
    pub fn mul_xfbq(&mut self, a: &[WireId], b: &[WireId], correction: bool) -> Vec<WireId> {
        assert_eq!(a.len(), b.len());
        let approx = self.xfbq_core(a, b);
        if !correction {
            return approx;
        }
        self.xfbq_correction(a, b, &approx)
    }

    /// The recoded product ah*bh mod 2^w, where ah = a|1 in value.
    fn xfbq_core(&mut self, a: &[WireId], b: &[WireId]) -> Vec<WireId> {
        let w = a.len();
        let one = self.one();
        // Recode: right shift, force the top digit to 1.
        let rec = |x: &[WireId]| -> Vec<WireId> {
            let mut r: Vec<WireId> = x[1..].to_vec();
            r.push(one);
            r
        };
        let ar = rec(a);
        let br = rec(b);
        // P = sum over i+j<w of xnor(ar_i, br_j) * 2^(i+j); ah*bh = 2P - 1 mod 2^w.
        let mut acc: Vec<WireId> = (0..w).map(|i| self.xnor(ar[i], br[0])).collect();
        for j in 1..w {
            let row: Vec<WireId> = (0..w - j).map(|i| self.xnor(ar[i], br[j])).collect();
            let upper = self.add(&acc[j..].to_vec(), &row);
            acc.splice(j.., upper);
        }
        // 2P - 1 = (P-1) << 1 | 1.
        let dec = self.dec(&acc[..w - 1].to_vec());
        let mut out = Vec::with_capacity(w);
        out.push(one);
        out.extend(dec);
        out
    }

    /// Applies the quantization-error correction to the recoded product:
    /// a*b = approx - eps_a*bh - eps_b*ah + eps_a*eps_b, folded to
    /// approx - eps_a*b - eps_b*ah since bh - eps_b equals b.
    pub(crate) fn xfbq_correction(
        &mut self,
        a: &[WireId],
        b: &[WireId],
        approx: &[WireId],
    ) -> Vec<WireId> {
        let w = a.len();
        let one = self.one();
        let eps_a = self.inv(a[0]);
        let eps_b = self.inv(b[0]);
        let mut ah = a.to_vec();
        ah[0] = one;
        let ta: Vec<WireId> = b.iter().map(|&x| self.and(eps_a, x)).collect();
        // eps_b * ah: LSB of ah is 1 so the low bit is eps_b itself.
        let mut tb: Vec<WireId> = Vec::with_capacity(w);
        tb.push(eps_b);
        for &x in &ah[1..] {
            tb.push(self.and(eps_b, x));
        }
        let t = self.add(&ta, &tb);
        self.sub(approx, &t)
    }

    /// Signed fixed-point multiply: (a*b) >> frac with truncation toward
    /// zero, computed on magnitudes at width w+frac. Operands and result
    /// share the same width and fraction.
    pub fn mul_fixed(&mut self, a: &[WireId], b: &[WireId], frac: usize) -> Vec<WireId> {
        assert_eq!(a.len(), b.len());
        let w = a.len();
        let wm = w + frac;
        let sa = a[w - 1];
        let sb = b[w - 1];
        let ma = self.cneg(a, sa);
        let mb = self.cneg(b, sb);
        let ma_ext = self.extend(&ma, wm, 0, false);
        let mb_ext = self.extend(&mb, wm, 0, false);
        let p = self.mul_xfbq(&ma_ext, &mb_ext, true);
        let shifted: Vec<WireId> = p[frac..frac + w].to_vec();
        let sign = self.xor(sa, sb);
        self.cneg(&shifted, sign)
    }

    /// Fixed-point multiply by a signed constant, same truncation semantics
    /// as `mul_fixed`. Partial products against constant bits are wiring, so
    /// only accumulation adders cost gates.
    pub fn mul_const_fixed(&mut self, a: &[WireId], c: i128, frac: usize) -> Vec<WireId> {
        let w = a.len();
        let wm = w + frac;
        let sa = a[w - 1];
        let ma = self.cneg(a, sa);
        let ma_ext = self.extend(&ma, wm, 0, false);
        let mc = c.unsigned_abs();
        let zero = self.zero();
        let mut acc: Vec<WireId> = vec![zero; wm];
        for j in 0..wm {
            if (mc >> j) & 1 == 1 {
                let row: Vec<WireId> = ma_ext[..wm - j].to_vec();
                let upper = self.add(&acc[j..].to_vec(), &row);
                acc.splice(j.., upper);
            }
        }
        let shifted: Vec<WireId> = acc[frac..frac + w].to_vec();
        if c < 0 {
            let nsign = self.inv(sa);
            self.cneg(&shifted, nsign)
        } else {
            self.cneg(&shifted, sa)
        }
    }

    /// Renumber wires so the given outputs occupy the last indices and
    /// produce a validated netlist. Outputs that alias inputs or repeat are
    /// routed through a fresh XOR-with-zero copy first.
    pub fn finish(mut self, outputs: &[WireId]) -> Netlist {
        let n_inputs = self.n_inputs_a + self.n_inputs_b;
        let mut outs = Vec::with_capacity(outputs.len());
        let mut seen = std::collections::HashSet::new();
        for &o in outputs {
            if o < n_inputs || !seen.insert(o) {
                let z = self.zero();
                let copy = self.xor(o, z);
                seen.insert(copy);
                outs.push(copy);
            } else {
                outs.push(o);
            }
        }

        let n_wires = n_inputs + self.gates.len();
        let out_set: HashMap<WireId, usize> =
            outs.iter().enumerate().map(|(i, &w)| (w, i)).collect();
        let out_base = n_wires - outs.len();
        let mut map: HashMap<WireId, WireId> = HashMap::new();
        for i in 0..n_inputs {
            map.insert(i, i);
        }
        let mut next = n_inputs;
        for g in &self.gates {
            let new = if let Some(&i) = out_set.get(&g.out) {
                out_base + i
            } else {
                let w = next;
                next += 1;
                w
            };
            map.insert(g.out, new);
        }
        let gates = self
            .gates
            .iter()
            .map(|g| Gate {
                kind: g.kind,
                in0: map[&g.in0],
                in1: g.in1.map(|w| map[&w]),
                out: map[&g.out],
            })
            .collect();
        let n = Netlist {
            gates,
            n_inputs_a: self.n_inputs_a,
            n_inputs_b: self.n_inputs_b,
            n_outputs: outs.len(),
            n_wires,
        };
        n.validate().expect("builder produced an invalid netlist");
        n
    }

    /// Inline another netlist's gates, wiring its inputs to `inputs`.
    /// Returns the wires carrying the inner netlist's outputs.
    pub fn splice(&mut self, inner: &Netlist, inputs: &[WireId]) -> Vec<WireId> {
        let (gates, outs, next) = crate::netlist::splice(inner, inputs, self.next);
        self.next = next;
        self.gates.extend(gates);
        outs
    }
}

/// Little-endian bit decomposition.
pub fn bits_from_uint(v: u128, width: usize) -> Vec<bool> {
    (0..width).map(|i| (v >> i) & 1 == 1).collect()
}

pub fn uint_from_bits(bits: &[bool]) -> u128 {
    bits.iter()
        .enumerate()
        .fold(0u128, |acc, (i, &b)| acc | ((b as u128) << i))
}

/// Interpret little-endian bits as a two's-complement signed value.
pub fn int_from_bits(bits: &[bool]) -> i128 {
    let u = uint_from_bits(bits) as i128;
    let w = bits.len();
    if bits[w - 1] {
        u - (1i128 << w)
    } else {
        u
    }
}
