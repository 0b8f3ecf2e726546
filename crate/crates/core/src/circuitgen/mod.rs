//! GC-friendly circuit generation.
//!
//! Arithmetic building blocks, a conventional AND-based multiplier and its
//! XOR-recoded counterpart, LUT-interpolation nonlinear blocks, and full /
//! reduced LayerNorm assemblies. Every generator has a software twin in
//! [`crate::fixed`] (or locally) that the circuit matches bit-for-bit.

pub mod builder;

pub use builder::{bits_from_uint, int_from_bits, uint_from_bits, Builder};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::{
    self, clamp, geometric_breakpoints, mul_fixed, uniform_breakpoints, wrap, FixedPointFormat,
    FormatError, LutError, LutTable,
};
use crate::netlist::{GateKind, Netlist, WireId};

/// Internal word width and fraction used inside LayerNorm circuits.
pub const LN_WIDTH: usize = 32;
pub const LN_FRAC: usize = 16;

/// Variance clamp bounds for the inverse-sqrt table, as powers of two.
const VAR_LO_EXP: i32 = -4;
const VAR_HI_EXP: i32 = 8;
const INVSQRT_SEGS_PER_OCTAVE: usize = 8;

#[derive(Debug, Error)]
pub enum CircuitGenError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Lut(#[from] LutError),
    #[error("width {width} too small: need at least {min} bits for {what}")]
    WidthTooSmall { width: usize, min: usize, what: &'static str },
    #[error("value {0} out of range for width {1}")]
    OutOfRange(u128, usize),
    #[error("vector length {0} must be a power of two and >= 2")]
    BadVectorLength(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCensus {
    pub and: usize,
    pub xor: usize,
    pub inv: usize,
    pub total: usize,
}

pub fn census(n: &Netlist) -> GateCensus {
    let mut c = GateCensus { and: 0, xor: 0, inv: 0, total: 0 };
    for g in &n.gates {
        match g.kind {
            GateKind::And => c.and += 1,
            GateKind::Xor => c.xor += 1,
            GateKind::Inv => c.inv += 1,
        }
    }
    c.total = c.and + c.xor + c.inv;
    c
}

fn check_width(fmt: FixedPointFormat) -> Result<usize, CircuitGenError> {
    FixedPointFormat::new(fmt.total_bits, fmt.frac_bits)?;
    Ok(fmt.total_bits)
}

fn two_operand_builder(w: usize) -> (Builder, Vec<WireId>, Vec<WireId>) {
    let b = Builder::new(w, w);
    let a: Vec<WireId> = (0..w).map(|i| b.input_a(i)).collect();
    let bw: Vec<WireId> = (0..w).map(|i| b.input_b(i)).collect();
    (b, a, bw)
}

/// Ripple-carry adder over two operands of the format's width (mod 2^w).
pub fn gen_adder(fmt: FixedPointFormat) -> Result<Netlist, CircuitGenError> {
    let w = check_width(fmt)?;
    let (mut b, a, bw) = two_operand_builder(w);
    let s = b.add(&a, &bw);
    Ok(b.finish(&s))
}

/// Subtractor: a - b mod 2^w.
pub fn gen_sub(fmt: FixedPointFormat) -> Result<Netlist, CircuitGenError> {
    let w = check_width(fmt)?;
    let (mut b, a, bw) = two_operand_builder(w);
    let d = b.sub(&a, &bw);
    Ok(b.finish(&d))
}

/// Unsigned comparator; outputs are [eq, lt].
pub fn gen_comparator(fmt: FixedPointFormat) -> Result<Netlist, CircuitGenError> {
    let w = check_width(fmt)?;
    let (mut b, a, bw) = two_operand_builder(w);
    let eq = b.eq_word(&a, &bw);
    let ge = b.ge_unsigned(&a, &bw);
    let lt = b.inv(ge);
    Ok(b.finish(&[eq, lt]))
}

/// Conventional schoolbook multiplier, low word.
pub fn gen_mul_conventional(fmt: FixedPointFormat) -> Result<Netlist, CircuitGenError> {
    let w = check_width(fmt)?;
    let (mut b, a, bw) = two_operand_builder(w);
    let p = b.mul_conventional(&a, &bw);
    Ok(b.finish(&p))
}

/// XOR-recoded multiplier, low word. With `with_qerror_correction` the
/// output equals a*b mod 2^w exactly; without, it is the recoded product.
pub fn gen_mul_xfbq(
    fmt: FixedPointFormat,
    with_qerror_correction: bool,
) -> Result<Netlist, CircuitGenError> {
    let w = check_width(fmt)?;
    let (mut b, a, bw) = two_operand_builder(w);
    let p = b.mul_xfbq(&a, &bw, with_qerror_correction);
    Ok(b.finish(&p))
}

/// The correction term subcircuit as a standalone netlist: inputs are the
/// two operands followed by the approximate product, output is the exact
/// product. Aside from the two gates materializing the constant wires
/// (which a host multiplier already owns), its census equals the census
/// delta between the corrected and uncorrected multiplier variants.
pub fn gen_xfbq_correction_block(fmt: FixedPointFormat) -> Result<Netlist, CircuitGenError> {
    let w = check_width(fmt)?;
    let mut b = Builder::new(3 * w, 0);
    let a: Vec<WireId> = (0..w).collect();
    let bw: Vec<WireId> = (w..2 * w).collect();
    let approx: Vec<WireId> = (2 * w..3 * w).collect();
    let exact = b.xfbq_correction(&a, &bw, &approx);
    Ok(b.finish(&exact))
}

/// A number in the sign-flip digit encoding: bit 1 contributes +2^i and
/// bit 0 contributes -2^i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XfbqNumber {
    pub bits: Vec<bool>,
}

impl XfbqNumber {
    pub fn value(&self) -> i128 {
        self.bits
            .iter()
            .enumerate()
            .map(|(i, &b)| (2 * (b as i128) - 1) << i)
            .sum()
    }
}

/// Encode an unsigned value: right shift and force the top digit to 1.
/// The encoded value equals a + INV(LSB(a)).
pub fn xfbq_convert_value(a: u128, n: usize) -> Result<XfbqNumber, CircuitGenError> {
    if n == 0 || n > 64 || (n < 128 && a >> n != 0) {
        return Err(CircuitGenError::OutOfRange(a, n));
    }
    let enc = (a >> 1) | (1 << (n - 1));
    Ok(XfbqNumber { bits: bits_from_uint(enc, n) })
}

/// Append a piecewise-linear interpolation network: comparator-driven
/// one-hot segment select, free constant-coefficient muxing, one shared
/// multiply, one add.
fn lut_interp(b: &mut Builder, x: &[WireId], t: &LutTable) -> Vec<WireId> {
    let w = t.width;
    assert_eq!(x.len(), w);
    let s = t.segments();
    let ges: Vec<WireId> = (1..s).map(|k| b.ge_const_signed(x, t.lo[k])).collect();
    let mut sels: Vec<WireId> = Vec::with_capacity(s);
    for k in 0..s {
        let sel = if s == 1 {
            b.one()
        } else if k == 0 {
            b.inv(ges[0])
        } else if k == s - 1 {
            ges[s - 2]
        } else {
            let nge = b.inv(ges[k]);
            b.and(ges[k - 1], nge)
        };
        sels.push(sel);
    }
    // Coefficient bits are constants, so muxing is an XOR accumulation of
    // the one-hot selectors.
    let mux_const = |b: &mut Builder, coeffs: &[i128]| -> Vec<WireId> {
        (0..w)
            .map(|j| {
                let mut acc: Option<WireId> = None;
                for (k, &c) in coeffs.iter().enumerate() {
                    if (fixed::to_unsigned(c, w) >> j) & 1 == 1 {
                        acc = Some(match acc {
                            None => sels[k],
                            Some(p) => b.xor(p, sels[k]),
                        });
                    }
                }
                acc.unwrap_or_else(|| b.zero())
            })
            .collect()
    };
    let a_word = mux_const(b, &t.a);
    let b_word = mux_const(b, &t.b);
    let p = b.mul_fixed(&a_word, x, t.frac);
    b.add(&p, &b_word)
}

/// Append a clamp to [lo, hi] (raw, inclusive-at-hi selection matching
/// [`fixed::clamp`]).
fn clamp_circuit(b: &mut Builder, x: &[WireId], lo: i128, hi: i128) -> Vec<WireId> {
    let w = x.len();
    let ge_lo = b.ge_const_signed(x, lo);
    let lo_word = b.const_word(fixed::to_unsigned(lo, w), w);
    let x1 = b.mux_word(ge_lo, &lo_word, x);
    let ge_hi = b.ge_const_signed(&x1, hi);
    let hi_word = b.const_word(fixed::to_unsigned(hi, w), w);
    b.mux_word(ge_hi, &x1, &hi_word)
}

/// Standalone interpolation netlist for a caller-supplied table.
pub fn gen_lut_interp(
    fmt: FixedPointFormat,
    table: &LutTable,
) -> Result<Netlist, CircuitGenError> {
    let w = check_width(fmt)?;
    if table.width != w {
        return Err(CircuitGenError::WidthTooSmall {
            width: w,
            min: table.width,
            what: "LUT table width",
        });
    }
    let mut b = Builder::new(w, 0);
    let x: Vec<WireId> = (0..w).collect();
    let y = lut_interp(&mut b, &x, table);
    Ok(b.finish(&y))
}

fn gelu_f(x: f64) -> f64 {
    // tanh form of GeLU.
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_table(fmt: FixedPointFormat) -> Result<LutTable, CircuitGenError> {
    Ok(LutTable::from_fn(
        gelu_f,
        &uniform_breakpoints(-4.0, 4.0, 16),
        fmt.total_bits,
        fmt.frac_bits,
    )?)
}

fn require_int_bits(fmt: FixedPointFormat, int_bits: usize) -> Result<(), CircuitGenError> {
    let min = fmt.frac_bits + int_bits + 1;
    if fmt.total_bits < min {
        return Err(CircuitGenError::WidthTooSmall {
            width: fmt.total_bits,
            min,
            what: "integer range",
        });
    }
    Ok(())
}

/// GeLU: clip the input to [-4, 4], then interpolate.
pub fn gen_gelu(fmt: FixedPointFormat) -> Result<Netlist, CircuitGenError> {
    let w = check_width(fmt)?;
    require_int_bits(fmt, 3)?;
    let table = gelu_table(fmt)?;
    let hi = 4i128 << fmt.frac_bits;
    let mut b = Builder::new(w, 0);
    let x: Vec<WireId> = (0..w).collect();
    let xc = clamp_circuit(&mut b, &x, -hi, hi);
    let y = lut_interp(&mut b, &xc, &table);
    Ok(b.finish(&y))
}

/// Software twin of `gen_gelu`.
pub fn gelu_model(x_raw: i128, fmt: FixedPointFormat) -> Result<i128, CircuitGenError> {
    let table = gelu_table(fmt)?;
    let hi = 4i128 << fmt.frac_bits;
    let xc = clamp(x_raw, -hi, hi);
    Ok(table.eval_model(xc))
}

/// Scale factor applied before the power-of-two table: log2(e), i.e. the
/// inverse of ln 2.
fn exp_scale_raw(fmt: FixedPointFormat) -> i128 {
    (std::f64::consts::LOG2_E * (1u128 << fmt.frac_bits) as f64).round() as i128
}

pub fn exp2_table(fmt: FixedPointFormat) -> Result<LutTable, CircuitGenError> {
    Ok(LutTable::from_fn(
        |z| 2f64.powf(z),
        &uniform_breakpoints(-12.0, 0.0, 48),
        fmt.total_bits,
        fmt.frac_bits,
    )?)
}

/// Exponential block for Softmax: clip to [-8, 0], scale by 1/ln2, then
/// interpolate 2^z.
pub fn gen_softmax_exp(fmt: FixedPointFormat) -> Result<Netlist, CircuitGenError> {
    let w = check_width(fmt)?;
    require_int_bits(fmt, 4)?;
    let table = exp2_table(fmt)?;
    let lo = -(8i128 << fmt.frac_bits);
    let mut b = Builder::new(w, 0);
    let x: Vec<WireId> = (0..w).collect();
    let xc = clamp_circuit(&mut b, &x, lo, 0);
    let z = b.mul_const_fixed(&xc, exp_scale_raw(fmt), fmt.frac_bits);
    let y = lut_interp(&mut b, &z, &table);
    Ok(b.finish(&y))
}

/// Software twin of `gen_softmax_exp`.
pub fn softmax_exp_model(x_raw: i128, fmt: FixedPointFormat) -> Result<i128, CircuitGenError> {
    let table = exp2_table(fmt)?;
    let lo = -(8i128 << fmt.frac_bits);
    let xc = clamp(x_raw, lo, 0);
    let z = mul_fixed(xc, exp_scale_raw(fmt), fmt.total_bits, fmt.frac_bits);
    Ok(table.eval_model(z))
}

pub fn invsqrt_table() -> Result<LutTable, CircuitGenError> {
    Ok(LutTable::from_fn(
        |v| 1.0 / v.sqrt(),
        &geometric_breakpoints(VAR_LO_EXP, VAR_HI_EXP, INVSQRT_SEGS_PER_OCTAVE),
        LN_WIDTH,
        LN_FRAC,
    )?)
}

pub fn var_clamp_bounds() -> (i128, i128) {
    let lo = 1i128 << (LN_FRAC as i32 + VAR_LO_EXP);
    let hi = 1i128 << (LN_FRAC as i32 + VAR_HI_EXP);
    (lo, hi)
}

fn check_vector_len(n: usize) -> Result<u32, CircuitGenError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(CircuitGenError::BadVectorLength(n));
    }
    Ok(n.trailing_zeros())
}

fn check_ln_fmt(fmt: FixedPointFormat) -> Result<(), CircuitGenError> {
    check_width(fmt)?;
    if fmt.frac_bits > LN_FRAC || fmt.total_bits + (LN_FRAC - fmt.frac_bits) > LN_WIDTH {
        return Err(CircuitGenError::WidthTooSmall {
            width: fmt.total_bits,
            min: LN_WIDTH,
            what: "LayerNorm internal extension",
        });
    }
    Ok(())
}

/// LayerNorm over a length-N vector.
///
/// Full variant inputs: N values, then the scale parameter (multiplied) and
/// the bias parameter (added), all in the external format. Reduced variant
/// inputs: a precomputed variance word followed by N precomputed
/// scale-times-centered words, all at the internal width; it performs only
/// the inverse-sqrt and the per-element normalization multiply.
pub fn gen_layernorm(
    fmt: FixedPointFormat,
    n: usize,
    reduced: bool,
) -> Result<Netlist, CircuitGenError> {
    if reduced {
        gen_layernorm_reduced(fmt, n)
    } else {
        gen_layernorm_full(fmt, n)
    }
}

fn gen_layernorm_full(fmt: FixedPointFormat, n: usize) -> Result<Netlist, CircuitGenError> {
    let log_n = check_vector_len(n)?;
    check_ln_fmt(fmt)?;
    let w = fmt.total_bits;
    let shift = LN_FRAC - fmt.frac_bits;
    let table = invsqrt_table()?;
    let (vlo, vhi) = var_clamp_bounds();

    let mut b = Builder::new(n * w + 2 * w, 0);
    let xs: Vec<Vec<WireId>> = (0..n).map(|i| (i * w..(i + 1) * w).collect()).collect();
    let beta: Vec<WireId> = (n * w..(n + 1) * w).collect();
    let gamma: Vec<WireId> = ((n + 1) * w..(n + 2) * w).collect();

    let xe: Vec<Vec<WireId>> = xs
        .iter()
        .map(|x| b.extend(x, LN_WIDTH, shift, true))
        .collect();
    let mut sum = xe[0].clone();
    for x in &xe[1..] {
        sum = b.add(&sum, x);
    }
    let mu = b.shr_signed(&sum, log_n as usize);
    let d: Vec<Vec<WireId>> = xe.iter().map(|x| b.sub(x, &mu)).collect();
    let mut var_sum: Option<Vec<WireId>> = None;
    for di in &d {
        let sq = b.mul_fixed(di, di, LN_FRAC);
        var_sum = Some(match var_sum {
            None => sq,
            Some(acc) => b.add(&acc, &sq),
        });
    }
    let var = b.shr_signed(&var_sum.unwrap(), log_n as usize);
    let var_c = clamp_circuit(&mut b, &var, vlo, vhi);
    let inv = lut_interp(&mut b, &var_c, &table);

    let beta_e = b.extend(&beta, LN_WIDTH, shift, true);
    let gamma_e = b.extend(&gamma, LN_WIDTH, shift, true);
    let mut outs = Vec::with_capacity(n * w);
    for di in &d {
        let norm = b.mul_fixed(di, &inv, LN_FRAC);
        let bn = b.mul_fixed(&norm, &beta_e, LN_FRAC);
        let y = b.add(&bn, &gamma_e);
        let yr = b.shr_signed(&y, shift);
        outs.extend_from_slice(&yr[..w]);
    }
    Ok(b.finish(&outs))
}

fn gen_layernorm_reduced(fmt: FixedPointFormat, n: usize) -> Result<Netlist, CircuitGenError> {
    let log_n = check_vector_len(n)?;
    check_ln_fmt(fmt)?;
    let w = fmt.total_bits;
    let shift = LN_FRAC - fmt.frac_bits;
    let table = invsqrt_table()?;
    let (vlo, vhi) = var_clamp_bounds();

    let mut b = Builder::new(LN_WIDTH + n * LN_WIDTH, 0);
    let v: Vec<WireId> = (0..LN_WIDTH).collect();
    let bus: Vec<Vec<WireId>> = (0..n)
        .map(|i| (LN_WIDTH + i * LN_WIDTH..LN_WIDTH + (i + 1) * LN_WIDTH).collect())
        .collect();

    let var_c = clamp_circuit(&mut b, &v, vlo, vhi);
    let inv = lut_interp(&mut b, &var_c, &table);
    let mut outs = Vec::with_capacity(n * w);
    for bu in &bus {
        let p = b.mul_fixed(bu, &inv, LN_FRAC);
        let scaled = b.shr_signed(&p, log_n as usize);
        let yr = b.shr_signed(&scaled, shift);
        outs.extend_from_slice(&yr[..w]);
    }
    Ok(b.finish(&outs))
}

/// Software twin of the full LayerNorm circuit.
pub fn layernorm_model_full(
    xs: &[i128],
    beta: i128,
    gamma: i128,
    fmt: FixedPointFormat,
) -> Result<Vec<i128>, CircuitGenError> {
    let log_n = check_vector_len(xs.len())?;
    check_ln_fmt(fmt)?;
    let shift = LN_FRAC - fmt.frac_bits;
    let table = invsqrt_table()?;
    let (vlo, vhi) = var_clamp_bounds();

    let xe: Vec<i128> = xs.iter().map(|&x| wrap(x << shift, LN_WIDTH)).collect();
    let mut sum = 0i128;
    for &x in &xe {
        sum = wrap(sum + x, LN_WIDTH);
    }
    let mu = sum >> log_n;
    let d: Vec<i128> = xe.iter().map(|&x| wrap(x - mu, LN_WIDTH)).collect();
    let mut var_sum = 0i128;
    for &di in &d {
        var_sum = wrap(var_sum + mul_fixed(di, di, LN_WIDTH, LN_FRAC), LN_WIDTH);
    }
    let var = var_sum >> log_n;
    let var_c = clamp(var, vlo, vhi);
    let inv = table.eval_model(var_c);
    let beta_e = wrap(beta << shift, LN_WIDTH);
    let gamma_e = wrap(gamma << shift, LN_WIDTH);
    Ok(d.iter()
        .map(|&di| {
            let norm = mul_fixed(di, inv, LN_WIDTH, LN_FRAC);
            let bn = mul_fixed(norm, beta_e, LN_WIDTH, LN_FRAC);
            let y = wrap(bn + gamma_e, LN_WIDTH);
            wrap(y >> shift, fmt.total_bits)
        })
        .collect())
}

/// Software twin of the reduced LayerNorm circuit.
pub fn layernorm_model_reduced(
    v: i128,
    bus: &[i128],
    fmt: FixedPointFormat,
) -> Result<Vec<i128>, CircuitGenError> {
    let log_n = check_vector_len(bus.len())?;
    check_ln_fmt(fmt)?;
    let shift = LN_FRAC - fmt.frac_bits;
    let table = invsqrt_table()?;
    let (vlo, vhi) = var_clamp_bounds();
    let var_c = clamp(wrap(v, LN_WIDTH), vlo, vhi);
    let inv = table.eval_model(var_c);
    Ok(bus
        .iter()
        .map(|&bu| {
            let p = mul_fixed(wrap(bu, LN_WIDTH), inv, LN_WIDTH, LN_FRAC);
            wrap((p >> log_n) >> shift, fmt.total_bits)
        })
        .collect())
}
