//! Two-party inference protocol simulation: masked linear layers, garbled
//! nonlinear layers, and a LayerNorm offload that moves mean, variance, and
//! the beta product out of the garbled circuit onto a homomorphic side
//! channel.
//!
//! The homomorphic layer is a mock: ciphertexts hold their plaintext under a
//! key-checked seal and the homomorphic laws are exact integer arithmetic.
//! It exercises the protocol dataflow and the access rules (who may decrypt
//! what), not cryptographic hardness. Likewise, oblivious transfer is
//! replaced by a label-exchange oracle that hands the evaluator its active
//! input labels and logs the exchange; choice bits never appear in the
//! transcript. Every message between the parties is recorded in an
//! append-only [`Transcript`] that an auditor can check post-hoc.

use crate::circuitgen::builder::{bits_from_uint, Builder};
use crate::circuitgen::{
    census, gen_layernorm, CircuitGenError, GateCensus, LN_FRAC, LN_WIDTH,
};
use crate::fixed::{to_unsigned, wrap, FixedPointFormat, FormatError};
use crate::garble::{self, fold_inv, GarbleError, GarbledCircuit, Label, LABEL_BYTES};
use crate::netlist::Netlist;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

/// Plaintext modulus of the mock homomorphic layer is 2^64. The LayerNorm
/// offload also uses 2^64 as its masking group so homomorphic results reduce
/// to share arithmetic without a modulus switch.
pub const HE_PLAINTEXT_BITS: usize = 64;

/// Chi-square critical value for 255 degrees of freedom at p = 0.01.
pub const CHI_SQUARE_CRIT: f64 = 310.457;

/// Minimum masked-byte count for the chi-square uniformity test; below this
/// the auditor falls back to a concentration heuristic.
pub const CHI_SQUARE_MIN_SAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("ciphertext under key {0} used with key {1}")]
    KeyMismatch(u32, u32),
    #[error("function netlist must map one {0}-bit word to one {0}-bit word")]
    BadFunctionShape(usize),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    CircuitGen(#[from] CircuitGenError),
    #[error(transparent)]
    Garble(#[from] GarbleError),
}

// ---------------------------------------------------------------------------
// Domain types

/// Fixed-point matrix; entries are kept wrapped to the format's width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub fmt: FixedPointFormat,
    pub data: Vec<i128>,
}

impl FixedMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        fmt: FixedPointFormat,
        data: Vec<i128>,
    ) -> Result<Self, ProtocolError> {
        if data.len() != rows * cols {
            return Err(ProtocolError::Shape {
                expected: format!("{rows}x{cols}"),
                got: format!("{} entries", data.len()),
            });
        }
        let data = data.into_iter().map(|v| wrap(v, fmt.total_bits)).collect();
        Ok(FixedMatrix { rows, cols, fmt, data })
    }

    pub fn zeros(rows: usize, cols: usize, fmt: FixedPointFormat) -> Self {
        FixedMatrix { rows, cols, fmt, data: vec![0; rows * cols] }
    }

    /// Entries uniform over the full 2^w range (the masking distribution).
    pub fn random(rows: usize, cols: usize, fmt: FixedPointFormat, rng: &mut impl Rng) -> Self {
        let w = fmt.total_bits;
        let data = (0..rows * cols).map(|_| random_word(rng, w)).collect();
        FixedMatrix { rows, cols, fmt, data }
    }

    pub fn get(&self, r: usize, c: usize) -> i128 {
        self.data[r * self.cols + c]
    }

    fn same_shape(&self, other: &Self) -> Result<(), ProtocolError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(ProtocolError::Shape {
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, ProtocolError> {
        self.same_shape(other)?;
        let w = self.fmt.total_bits;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| wrap(a + b, w))
            .collect();
        Ok(FixedMatrix { data, ..*self })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, ProtocolError> {
        self.same_shape(other)?;
        let w = self.fmt.total_bits;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| wrap(a - b, w))
            .collect();
        Ok(FixedMatrix { data, ..*self })
    }

    /// Matrix product with raw modular products (entries act as integer
    /// multipliers mod 2^w). Keeping the layer linear over the masking group
    /// is what makes shares recombine exactly; any fixed-point rescale
    /// belongs to the following nonlinear stage.
    pub fn matmul(&self, x: &Self) -> Result<Self, ProtocolError> {
        if self.cols != x.rows {
            return Err(ProtocolError::Shape {
                expected: format!("{} rows", self.cols),
                got: format!("{} rows", x.rows),
            });
        }
        let w = self.fmt.total_bits;
        let mut data = vec![0i128; self.rows * x.cols];
        for i in 0..self.rows {
            for j in 0..x.cols {
                let mut acc = 0i128;
                for k in 0..self.cols {
                    acc = wrap(acc + self.get(i, k).wrapping_mul(x.get(k, j)), w);
                }
                data[i * x.cols + j] = acc;
            }
        }
        Ok(FixedMatrix { rows: self.rows, cols: x.cols, fmt: self.fmt, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        le_bytes(&self.data, self.fmt.total_bits)
    }
}

fn random_word(rng: &mut impl Rng, w: usize) -> i128 {
    let mask = if w >= 64 { u64::MAX } else { (1u64 << w) - 1 };
    wrap((rng.gen::<u64>() & mask) as i128, w)
}

fn le_bytes(vals: &[i128], bits: usize) -> Vec<u8> {
    let nb = bits.div_ceil(8);
    let mut out = Vec::with_capacity(vals.len() * nb);
    for &v in vals {
        let u = to_unsigned(v, bits);
        out.extend_from_slice(&u.to_le_bytes()[..nb]);
    }
    out
}

// ---------------------------------------------------------------------------
// Mock homomorphic layer

pub struct MockHeKey {
    key_id: u32,
}

impl MockHeKey {
    pub fn new(key_id: u32) -> Self {
        MockHeKey { key_id }
    }

    pub fn encrypt(&self, data: &[i128]) -> MockCiphertext {
        let data = data.iter().map(|&v| wrap(v, HE_PLAINTEXT_BITS)).collect();
        MockCiphertext { data, key_id: self.key_id }
    }
}

/// Plaintext-under-seal ciphertext: the payload is private to the module and
/// only a matching [`MockHeKey`] releases it. Homomorphic laws are exact
/// arithmetic mod 2^64.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockCiphertext {
    data: Vec<i128>,
    key_id: u32,
}

impl MockCiphertext {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn key_id(&self) -> u32 {
        self.key_id
    }

    fn check_len(&self, n: usize) -> Result<(), ProtocolError> {
        if self.data.len() != n {
            return Err(ProtocolError::Shape {
                expected: format!("{} entries", self.data.len()),
                got: format!("{n} entries"),
            });
        }
        Ok(())
    }

    /// Enc(X) + Y = Enc(X + Y).
    pub fn add_plain(&self, y: &[i128]) -> Result<Self, ProtocolError> {
        self.check_len(y.len())?;
        let data = self
            .data
            .iter()
            .zip(y)
            .map(|(&a, &b)| wrap(a + b, HE_PLAINTEXT_BITS))
            .collect();
        Ok(MockCiphertext { data, key_id: self.key_id })
    }

    /// Enc(X) × Y = Enc(X · Y), elementwise.
    pub fn mul_plain(&self, y: &[i128]) -> Result<Self, ProtocolError> {
        self.check_len(y.len())?;
        let data = self
            .data
            .iter()
            .zip(y)
            .map(|(&a, &b)| wrap(a.wrapping_mul(b), HE_PLAINTEXT_BITS))
            .collect();
        Ok(MockCiphertext { data, key_id: self.key_id })
    }

    pub fn mul_scalar(&self, k: i128) -> Self {
        let data = self
            .data
            .iter()
            .map(|&a| wrap(a.wrapping_mul(k), HE_PLAINTEXT_BITS))
            .collect();
        MockCiphertext { data, key_id: self.key_id }
    }

    /// Enc(X) + Enc(Y) = Enc(X + Y).
    pub fn add_ct(&self, other: &Self) -> Result<Self, ProtocolError> {
        self.check_key(other)?;
        self.check_len(other.data.len())?;
        self.add_plain(&other.data)
    }

    /// Enc(X) × Enc(Y) = Enc(X · Y), elementwise.
    pub fn mul_ct(&self, other: &Self) -> Result<Self, ProtocolError> {
        self.check_key(other)?;
        self.check_len(other.data.len())?;
        self.mul_plain(&other.data)
    }

    /// Apply a plaintext linear map: out[i] = sum_j coeffs[i][j] · X[j].
    /// Composed from the scalar-multiply and addition laws.
    pub fn linear_combine(&self, coeffs: &[Vec<i128>]) -> Result<Self, ProtocolError> {
        let mut data = Vec::with_capacity(coeffs.len());
        for row in coeffs {
            self.check_len(row.len())?;
            let mut acc = 0i128;
            for (&c, &x) in row.iter().zip(&self.data) {
                acc = wrap(acc + c.wrapping_mul(x), HE_PLAINTEXT_BITS);
            }
            data.push(acc);
        }
        Ok(MockCiphertext { data, key_id: self.key_id })
    }

    /// Enc of the sum of all entries, as a single-entry ciphertext.
    pub fn sum_entries(&self) -> Self {
        let mut acc = 0i128;
        for &x in &self.data {
            acc = wrap(acc + x, HE_PLAINTEXT_BITS);
        }
        MockCiphertext { data: vec![acc], key_id: self.key_id }
    }

    fn check_key(&self, other: &Self) -> Result<(), ProtocolError> {
        if self.key_id != other.key_id {
            return Err(ProtocolError::KeyMismatch(self.key_id, other.key_id));
        }
        Ok(())
    }

    pub fn decrypt(&self, key: &MockHeKey) -> Result<Vec<i128>, ProtocolError> {
        if self.key_id != key.key_id {
            return Err(ProtocolError::KeyMismatch(self.key_id, key.key_id));
        }
        Ok(self.data.clone())
    }

    fn sealed_bytes(&self) -> Vec<u8> {
        le_bytes(&self.data, HE_PLAINTEXT_BITS)
    }
}

// ---------------------------------------------------------------------------
// Transcript

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Party {
    Client,
    Server,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Offline,
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    Plain,
    Masked { mask_id: u32 },
    MockEnc { key_id: u32 },
    GcLabels,
}

#[derive(Debug, Clone, Serialize)]
pub struct Message {
    pub seq: usize,
    pub layer: u32,
    pub sender: Party,
    pub receiver: Party,
    pub phase: Phase,
    pub kind: String,
    pub provenance: Provenance,
    pub len: usize,
    #[serde(skip)]
    pub payload: Vec<u8>,
}

/// Append-only record of every message that crossed between the parties.
#[derive(Debug, Default)]
pub struct Transcript {
    pub messages: Vec<Message>,
    layer: u32,
    next_mask: u32,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mark the start of a new protocol layer; the auditor checks phase
    /// ordering within each layer.
    pub fn begin_layer(&mut self) -> u32 {
        self.layer += 1;
        self.layer
    }

    pub fn fresh_mask_id(&mut self) -> u32 {
        self.next_mask += 1;
        self.next_mask
    }

    #[allow(clippy::too_many_arguments)]
    pub fn send(
        &mut self,
        sender: Party,
        receiver: Party,
        phase: Phase,
        kind: &str,
        provenance: Provenance,
        payload: Vec<u8>,
    ) {
        self.messages.push(Message {
            seq: self.messages.len(),
            layer: self.layer,
            sender,
            receiver,
            phase,
            kind: kind.to_string(),
            provenance,
            len: payload.len(),
            payload,
        });
    }

    /// One JSON object per line, payload omitted (length retained).
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&serde_json::to_string(m).expect("message serializes"));
            out.push('\n');
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Linear layer

#[derive(Debug, Clone)]
pub struct LinearOutcome {
    /// Server-held share: Linear(X1) − R2.
    pub server_share: FixedMatrix,
    /// Client-held share: R2.
    pub client_share: FixedMatrix,
}

/// Masked linear layer. Offline, the server evaluates the linear map on the
/// client's encrypted mask and blinds the result with its own mask; online,
/// the client sends only the masked input and the server works on that.
///
/// Weight entries act as raw integer multipliers mod 2^w (see
/// [`FixedMatrix::matmul`]); recombined shares equal Linear(X1) exactly.
pub fn linear_layer(
    x1: &FixedMatrix,
    weights: &FixedMatrix,
    zero_masks: bool,
    seed: u64,
    t: &mut Transcript,
) -> Result<LinearOutcome, ProtocolError> {
    if weights.cols != x1.rows {
        return Err(ProtocolError::Shape {
            expected: format!("{} input rows", weights.cols),
            got: format!("{}", x1.rows),
        });
    }
    t.begin_layer();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let key = MockHeKey::new(1);
    let w = x1.fmt.total_bits;

    // Offline: client encrypts its input mask R1.
    let r1 = if zero_masks {
        FixedMatrix::zeros(x1.rows, x1.cols, x1.fmt)
    } else {
        FixedMatrix::random(x1.rows, x1.cols, x1.fmt, &mut rng)
    };
    let ct_r1 = key.encrypt(&r1.data);
    t.send(
        Party::Client,
        Party::Server,
        Phase::Offline,
        "enc-input-mask",
        Provenance::MockEnc { key_id: 1 },
        ct_r1.sealed_bytes(),
    );

    // Offline: server returns Enc(W·R1 − S1); the client's decryption is R2.
    let s1 = if zero_masks {
        FixedMatrix::zeros(weights.rows, x1.cols, x1.fmt)
    } else {
        FixedMatrix::random(weights.rows, x1.cols, x1.fmt, &mut rng)
    };
    let coeffs = matmul_coeffs(weights, x1.rows, x1.cols);
    let neg_s1: Vec<i128> = s1.data.iter().map(|&v| -v).collect();
    let ct_wr1 = ct_r1.linear_combine(&coeffs)?.add_plain(&neg_s1)?;
    t.send(
        Party::Server,
        Party::Client,
        Phase::Offline,
        "enc-masked-linear",
        Provenance::MockEnc { key_id: 1 },
        ct_wr1.sealed_bytes(),
    );
    let r2_raw = ct_wr1.decrypt(&key)?;
    let r2 = FixedMatrix::new(
        weights.rows,
        x1.cols,
        x1.fmt,
        r2_raw.iter().map(|&v| wrap(v, w)).collect(),
    )?;

    // Online: the client reveals only X1 − R1.
    let mask_id = t.fresh_mask_id();
    let masked = x1.sub(&r1)?;
    t.send(
        Party::Client,
        Party::Server,
        Phase::Online,
        "masked-input",
        Provenance::Masked { mask_id },
        masked.to_bytes(),
    );

    // Server: W·(X1 − R1) + S1 = Linear(X1) − R2.
    let server_share = weights.matmul(&masked)?.add(&s1)?;
    Ok(LinearOutcome { server_share, client_share: r2 })
}

/// Flatten W·X over a rows×cols X into one linear map on X's entries, so the
/// whole product is a single homomorphic linear_combine.
fn matmul_coeffs(weights: &FixedMatrix, x_rows: usize, x_cols: usize) -> Vec<Vec<i128>> {
    let mut coeffs = Vec::with_capacity(weights.rows * x_cols);
    for i in 0..weights.rows {
        for j in 0..x_cols {
            let mut row = vec![0i128; x_rows * x_cols];
            for k in 0..x_rows {
                row[k * x_cols + j] = weights.get(i, k);
            }
            coeffs.push(row);
        }
    }
    coeffs
}

// ---------------------------------------------------------------------------
// Nonlinear layer under garbled circuits

#[derive(Debug, Clone)]
pub struct GcLayerOutcome {
    /// Server-held share: f(X) − R3.
    pub server_share: FixedMatrix,
    /// Client-held share: R3.
    pub client_share: FixedMatrix,
    /// AND gates the server evaluated.
    pub and_count: usize,
}

/// Nonlinear layer on shares. The client garbles a wrapper circuit that adds
/// the two shares, applies `f` to each element, and subtracts a fresh output
/// mask R3; the server evaluates and keeps f(X) − R3.
///
/// `f` must map one w-bit word to one w-bit word in the shares' format.
pub fn nonlinear_layer_gc(
    shares: &LinearOutcome,
    f: &Netlist,
    seed: u64,
    t: &mut Transcript,
) -> Result<GcLayerOutcome, ProtocolError> {
    let fmt = shares.server_share.fmt;
    let w = fmt.total_bits;
    if f.n_inputs() != w || f.n_outputs != w {
        return Err(ProtocolError::BadFunctionShape(w));
    }
    shares.server_share.same_shape(&shares.client_share)?;
    t.begin_layer();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = shares.server_share.data.len();

    // Wrapper: per element, (a + r2) -> f -> (y - r3).
    let mut b = Builder::new(n * w, 2 * n * w);
    let mut outs = Vec::with_capacity(n * w);
    for i in 0..n {
        let a: Vec<_> = (i * w..(i + 1) * w).map(|j| b.input_a(j)).collect();
        let r2: Vec<_> = (i * w..(i + 1) * w).map(|j| b.input_b(j)).collect();
        let r3: Vec<_> = (n * w + i * w..n * w + (i + 1) * w).map(|j| b.input_b(j)).collect();
        let x = b.add(&a, &r2);
        let y = b.splice(f, &x);
        outs.extend(b.sub(&y, &r3));
    }
    let wrapper = b.finish(&outs);
    let folded = fold_inv(&wrapper);
    let and_count = folded.and_count();

    // Offline: client garbles and ships tables, decode colors, and the
    // labels of its own mask inputs (R2 and R3 are data-independent).
    let r3 = FixedMatrix::random(
        shares.server_share.rows,
        shares.server_share.cols,
        fmt,
        &mut rng,
    );
    let gc = garble::garble(&folded, rng.gen()).circuit;
    t.send(
        Party::Client,
        Party::Server,
        Phase::Offline,
        "garbled-tables",
        Provenance::GcLabels,
        table_bytes(&gc),
    );
    t.send(
        Party::Client,
        Party::Server,
        Phase::Offline,
        "decode-colors",
        Provenance::GcLabels,
        pack_bits(&gc.decode_bits()),
    );
    let mut mask_bits = matrix_bits(&shares.client_share);
    mask_bits.extend(matrix_bits(&r3));
    let mask_labels = labels_for(&gc, n * w, &mask_bits);
    t.send(
        Party::Client,
        Party::Server,
        Phase::Offline,
        "mask-input-labels",
        Provenance::GcLabels,
        label_bytes(&mask_labels),
    );

    // Online: label-exchange oracle gives the server its share's labels.
    let server_bits = matrix_bits(&shares.server_share);
    let server_labels = labels_for(&gc, 0, &server_bits);
    t.send(
        Party::Client,
        Party::Server,
        Phase::Online,
        "share-input-labels",
        Provenance::GcLabels,
        label_bytes(&server_labels),
    );

    // Server evaluates and decodes with the colors.
    let mut inputs = server_labels;
    inputs.extend(mask_labels);
    let res = garble::evaluate(&folded, &gc.tables, &inputs)?;
    let bits = decode_by_color(&res.outputs, &gc.decode_bits());
    let server_share = matrix_from_bits(
        &bits,
        shares.server_share.rows,
        shares.server_share.cols,
        fmt,
    )?;
    Ok(GcLayerOutcome { server_share, client_share: r3, and_count })
}

fn matrix_bits(m: &FixedMatrix) -> Vec<bool> {
    let w = m.fmt.total_bits;
    let mut bits = Vec::with_capacity(m.data.len() * w);
    for &v in &m.data {
        bits.extend(bits_from_uint(to_unsigned(v, w), w));
    }
    bits
}

fn matrix_from_bits(
    bits: &[bool],
    rows: usize,
    cols: usize,
    fmt: FixedPointFormat,
) -> Result<FixedMatrix, ProtocolError> {
    let w = fmt.total_bits;
    let data = bits
        .chunks(w)
        .map(|c| {
            let mut v = 0u128;
            for (i, &bit) in c.iter().enumerate() {
                v |= (bit as u128) << i;
            }
            wrap(v as i128, w)
        })
        .collect();
    FixedMatrix::new(rows, cols, fmt, data)
}

fn labels_for(gc: &GarbledCircuit, start: usize, bits: &[bool]) -> Vec<Label> {
    bits.iter()
        .enumerate()
        .map(|(i, &bit)| gc.input_zeros[start + i] ^ gc.delta.select(bit))
        .collect()
}

fn label_bytes(labels: &[Label]) -> Vec<u8> {
    let mut out = Vec::with_capacity(labels.len() * LABEL_BYTES);
    for l in labels {
        out.extend_from_slice(&l.to_bytes());
    }
    out
}

fn table_bytes(gc: &GarbledCircuit) -> Vec<u8> {
    let mut out = Vec::with_capacity(gc.table_bytes());
    for t in &gc.tables {
        out.extend_from_slice(&t.row_g.to_bytes());
        out.extend_from_slice(&t.row_e.to_bytes());
    }
    out
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn decode_by_color(active: &[Label], colors: &[bool]) -> Vec<bool> {
    active
        .iter()
        .zip(colors)
        .map(|(l, &c)| l.color() ^ c)
        .collect()
}

// ---------------------------------------------------------------------------
// LayerNorm offload

#[derive(Debug, Clone)]
pub struct LayerNormOutcome {
    /// Server-held share of the output row, gamma already added.
    pub server_share: FixedMatrix,
    /// Client-held share (the output mask R6).
    pub client_share: FixedMatrix,
    /// AND gates evaluated under GC in offload mode. Compare against
    /// [`full_layernorm_census`] for the same config.
    pub gc_and_count: usize,
}

/// LayerNorm with mean, variance, and the beta product moved off the garbled
/// circuit. Shares for this stage live in the 2^64 masking group (equal to
/// the mock-HE plaintext modulus), because the lift from external width to
/// the internal fixed-point width does not commute with a narrower wrap.
///
/// Flow: the client establishes internal-width shares of the extended input
/// with one masked send; both parties locally apply the linear centering map
/// u_i = N·x_i − Σx to their shares. The variance accumulator
/// Σu² = Σ(u_s)² + 2Σu_r·u_s + Σ(u_r)² is assembled homomorphically (the
/// cross term via scalar-2 multiplication, the mask-square term from offline
/// material), and the beta product per element as (Enc(u_r) + u_s) × beta.
/// The client decrypts both (it holds the key and owns the data), rescales,
/// and feeds the reduced circuit under GC, masked with R5 (variance), R4
/// (bus), and R6 (output); the server evaluates and adds gamma to its share.
pub fn layernorm_offload(
    x: &FixedMatrix,
    beta: i128,
    gamma: i128,
    zero_masks: bool,
    seed: u64,
    t: &mut Transcript,
) -> Result<LayerNormOutcome, ProtocolError> {
    let fmt = x.fmt;
    let w = fmt.total_bits;
    let n = x.data.len();
    let reduced = gen_layernorm(fmt, n, true)?;
    let log_n = n.trailing_zeros();
    let shift = LN_FRAC - fmt.frac_bits;
    t.begin_layer();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let key = MockHeKey::new(1);
    let lw = LN_WIDTH;

    // Wrapper around the reduced circuit: unmask the variance word and the
    // bus words, normalize, then mask each output element with R6.
    let mut b = Builder::new(0, 2 * (1 + n) * lw + n * w);
    let mut pos = 0;
    let mut take = |b: &Builder, k: usize| -> Vec<usize> {
        let v = (pos..pos + k).map(|i| b.input_b(i)).collect();
        pos += k;
        v
    };
    let vm = take(&b, lw);
    let busm: Vec<Vec<_>> = (0..n).map(|_| take(&b, lw)).collect();
    let r5_in = take(&b, lw);
    let r4_in: Vec<Vec<_>> = (0..n).map(|_| take(&b, lw)).collect();
    let r6_in: Vec<Vec<_>> = (0..n).map(|_| take(&b, w)).collect();
    let v_w = b.sub(&vm, &r5_in);
    let mut inner_inputs = v_w;
    for (bm, r4) in busm.iter().zip(&r4_in) {
        inner_inputs.extend(b.sub(bm, r4));
    }
    let ys = b.splice(&reduced, &inner_inputs);
    let mut outs = Vec::with_capacity(n * w);
    for (y, r6) in ys.chunks(w).zip(&r6_in) {
        outs.extend(b.sub(y, r6));
    }
    let wrapper = b.finish(&outs);
    let folded = fold_inv(&wrapper);
    let gc_and_count = folded.and_count();
    let online_inputs = (1 + n) * lw;

    // Offline masks.
    let rand64 = |rng: &mut ChaCha20Rng| {
        if zero_masks {
            0i128
        } else {
            wrap(rng.gen::<u64>() as i128, 64)
        }
    };
    let r2p: Vec<i128> = (0..n).map(|_| rand64(&mut rng)).collect();
    let r5 = if zero_masks { 0 } else { random_word(&mut rng, lw) };
    let r4: Vec<i128> = (0..n)
        .map(|_| if zero_masks { 0 } else { random_word(&mut rng, lw) })
        .collect();
    let r6: Vec<i128> = (0..n)
        .map(|_| if zero_masks { 0 } else { random_word(&mut rng, w) })
        .collect();

    // Offline: the client's centered mask image u_r, encrypted, plus the
    // mask-square accumulator for the variance identity.
    let u_r = center_shares(&r2p, log_n);
    let ct_ur = key.encrypt(&u_r);
    t.send(
        Party::Client,
        Party::Server,
        Phase::Offline,
        "enc-centered-mask",
        Provenance::MockEnc { key_id: 1 },
        ct_ur.sealed_bytes(),
    );
    let ur_sq: i128 = u_r
        .iter()
        .fold(0i128, |acc, &v| wrap(acc + v.wrapping_mul(v), 64));
    let ct_ur_sq = key.encrypt(&[ur_sq]);
    t.send(
        Party::Client,
        Party::Server,
        Phase::Offline,
        "enc-mask-square-sum",
        Provenance::MockEnc { key_id: 1 },
        ct_ur_sq.sealed_bytes(),
    );

    // Offline: garble the wrapper, ship tables, decode colors, and the
    // labels of the mask inputs R5, R4, R6.
    let gc = garble::garble(&folded, rng.gen()).circuit;
    t.send(
        Party::Client,
        Party::Server,
        Phase::Offline,
        "garbled-tables",
        Provenance::GcLabels,
        table_bytes(&gc),
    );
    t.send(
        Party::Client,
        Party::Server,
        Phase::Offline,
        "decode-colors",
        Provenance::GcLabels,
        pack_bits(&gc.decode_bits()),
    );
    let mut mask_bits = word_bits(r5, lw);
    for &v in &r4 {
        mask_bits.extend(word_bits(v, lw));
    }
    for &v in &r6 {
        mask_bits.extend(word_bits(v, w));
    }
    let mask_labels = labels_for(&gc, online_inputs, &mask_bits);
    t.send(
        Party::Client,
        Party::Server,
        Phase::Offline,
        "mask-input-labels",
        Provenance::GcLabels,
        label_bytes(&mask_labels),
    );

    // Online: client shares the extended input.
    let xe: Vec<i128> = x.data.iter().map(|&v| v << shift).collect();
    let se: Vec<i128> = xe
        .iter()
        .zip(&r2p)
        .map(|(&a, &m)| wrap(a - m, 64))
        .collect();
    let mask_id = t.fresh_mask_id();
    t.send(
        Party::Client,
        Party::Server,
        Phase::Online,
        "masked-activation",
        Provenance::Masked { mask_id },
        le_bytes(&se, 64),
    );

    // Server: centering on the masked share (standard operations), then the
    // homomorphic variance accumulator and beta products.
    let u_s = center_shares(&se, log_n);
    let us_sq: i128 = u_s
        .iter()
        .fold(0i128, |acc, &v| wrap(acc + v.wrapping_mul(v), 64));
    let ct_cross = ct_ur.mul_scalar(2).mul_plain(&u_s)?;
    let ct_var = ct_cross
        .sum_entries()
        .add_ct(&ct_ur_sq)?
        .add_plain(&[us_sq])?;
    t.send(
        Party::Server,
        Party::Client,
        Phase::Online,
        "enc-variance-acc",
        Provenance::MockEnc { key_id: 1 },
        ct_var.sealed_bytes(),
    );
    let beta_e = wrap(beta << shift, lw);
    let ct_beta = ct_ur.add_plain(&u_s)?.mul_scalar(beta_e);
    t.send(
        Party::Server,
        Party::Client,
        Phase::Online,
        "enc-beta-product",
        Provenance::MockEnc { key_id: 1 },
        ct_beta.sealed_bytes(),
    );

    // Client: decrypt, rescale, and feed the GC. The wide sums are exact in
    // the 2^64 group (|Σu²| < 2^63 at desk scale), so the truncations here
    // match plain fixed-point arithmetic.
    let p = ct_var.decrypt(&key)?[0];
    let v = wrap((p >> LN_FRAC) >> (3 * log_n), lw);
    let bus: Vec<i128> = ct_beta
        .decrypt(&key)?
        .iter()
        .map(|&wide| wrap(wide >> LN_FRAC, lw))
        .collect();
    let mut online_bits = word_bits(wrap(v + r5, lw), lw);
    for (&bu, &m) in bus.iter().zip(&r4) {
        online_bits.extend(word_bits(wrap(bu + m, lw), lw));
    }
    let online_labels = labels_for(&gc, 0, &online_bits);
    t.send(
        Party::Client,
        Party::Server,
        Phase::Online,
        "activation-input-labels",
        Provenance::GcLabels,
        label_bytes(&online_labels),
    );

    // Server: evaluate, decode, add gamma to its share.
    let mut inputs = online_labels;
    inputs.extend(mask_labels);
    let res = garble::evaluate(&folded, &gc.tables, &inputs)?;
    let bits = decode_by_color(&res.outputs, &gc.decode_bits());
    let masked_y = matrix_from_bits(&bits, x.rows, x.cols, fmt)?;
    let server_data: Vec<i128> = masked_y.data.iter().map(|&y| wrap(y + gamma, w)).collect();
    let server_share = FixedMatrix::new(x.rows, x.cols, fmt, server_data)?;
    let client_share = FixedMatrix::new(x.rows, x.cols, fmt, r6)?;
    Ok(LayerNormOutcome { server_share, client_share, gc_and_count })
}

/// The linear centering map u_i = N·x_i − Σx, applied per share mod 2^64.
fn center_shares(xs: &[i128], log_n: u32) -> Vec<i128> {
    let sum = xs.iter().fold(0i128, |acc, &v| wrap(acc + v, 64));
    xs.iter()
        .map(|&v| wrap((v << log_n) - sum, 64))
        .collect()
}

fn word_bits(v: i128, w: usize) -> Vec<bool> {
    bits_from_uint(to_unsigned(v, w), w)
}

/// Reference LayerNorm in f64, with the pipeline's variance clamp applied.
pub fn layernorm_float_oracle(xs: &[f64], beta: f64, gamma: f64) -> Vec<f64> {
    let n = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    let (lo, hi) = crate::circuitgen::var_clamp_bounds();
    let scale = (1u128 << LN_FRAC) as f64;
    let inv = 1.0 / var.clamp(lo as f64 / scale, hi as f64 / scale).sqrt();
    xs.iter().map(|&x| beta * (x - mu) * inv + gamma).collect()
}

/// Census of the full-GC LayerNorm for a config, for reporting.
pub fn full_layernorm_census(fmt: FixedPointFormat, n: usize) -> Result<GateCensus, ProtocolError> {
    Ok(census(&gen_layernorm(fmt, n, false)?))
}

// ---------------------------------------------------------------------------
// Audit

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub pass: bool,
    pub violations: Vec<String>,
    pub masked_bytes: usize,
    pub chi_square: Option<f64>,
    pub chi_square_threshold: f64,
}

/// Post-hoc transcript audit: no plain payload may cross the parties, phases
/// must not interleave within a layer, and masked payload bytes must look
/// uniform (chi-square over 256 bins at or above the sample floor, a
/// concentration heuristic below it).
pub fn audit(t: &Transcript) -> AuditReport {
    let mut violations = Vec::new();
    let mut online_seen: std::collections::HashMap<u32, usize> = Default::default();
    let mut masked = Vec::new();
    for m in &t.messages {
        if m.sender != m.receiver && m.provenance == Provenance::Plain {
            violations.push(format!(
                "message {} ({}) crossed parties with plain payload",
                m.seq, m.kind
            ));
        }
        match m.phase {
            Phase::Online => {
                online_seen.entry(m.layer).or_insert(m.seq);
            }
            Phase::Offline => {
                if let Some(&first) = online_seen.get(&m.layer) {
                    violations.push(format!(
                        "offline message {} ({}) after online message {} in layer {}",
                        m.seq, m.kind, first, m.layer
                    ));
                }
            }
        }
        if matches!(m.provenance, Provenance::Masked { .. }) {
            masked.extend_from_slice(&m.payload);
        }
    }

    let mut counts = [0usize; 256];
    for &b in &masked {
        counts[b as usize] += 1;
    }
    let total = masked.len();
    let chi_square = if total >= CHI_SQUARE_MIN_SAMPLES {
        let expected = total as f64 / 256.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        if stat > CHI_SQUARE_CRIT {
            violations.push(format!(
                "masked payload bytes fail uniformity: chi-square {stat:.1} > {CHI_SQUARE_CRIT}"
            ));
        }
        Some(stat)
    } else {
        if total > 0 {
            let limit = 8.max(total / 8);
            if let Some((byte, &c)) = counts.iter().enumerate().max_by_key(|&(_, c)| c) {
                if c > limit {
                    violations.push(format!(
                        "masked payload bytes concentrated: value {byte:#04x} appears {c} of {total} times"
                    ));
                }
            }
        }
        None
    };

    AuditReport {
        pass: violations.is_empty(),
        violations,
        masked_bytes: total,
        chi_square,
        chi_square_threshold: CHI_SQUARE_CRIT,
    }
}
