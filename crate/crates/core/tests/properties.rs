//! Randomized property checks over the core algebra and pipelines.

use gc::circuitgen::{bits_from_uint, gen_adder, gen_mul_xfbq, uint_from_bits};
use gc::fixed::{mul_fixed, to_unsigned, wrap, FixedPointFormat};
use gc::garble::{deserialize, evaluate, fold_inv, fold_order, garble, serialize};
use gc::netlist::{random_netlist, LatencyMap};
use gc::protocol::{linear_layer, FixedMatrix, Transcript};
use gc::scheduler::{
    is_topological, order_depth_first, order_fr, schedule_cpfe_netlist, schedule_sr,
};
use gc::speculator::{speculate, verify_speculation};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn arb_netlist() -> impl Strategy<Value = gc::netlist::Netlist> {
    (any::<u64>(), 1usize..5, 1usize..5, 10usize..200, 1usize..4).prop_map(
        |(seed, na, nb, gates, outs)| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            random_netlist(&mut rng, na, nb, gates, outs)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn garbled_eval_matches_plain(
        (n, seed, bits) in arb_netlist().prop_flat_map(|n| {
            let ni = n.n_inputs();
            (Just(n), any::<u64>(), proptest::collection::vec(any::<bool>(), ni))
        })
    ) {
        let want = n.eval_plain(&bits).unwrap();
        let folded = fold_inv(&n);
        let res = garble(&folded, seed);
        let active = res.circuit.encode(&bits).unwrap();
        let ev = evaluate(&folded, &res.circuit.tables, &active).unwrap();
        prop_assert_eq!(res.circuit.decode(&ev.outputs).unwrap(), want);
    }

    #[test]
    fn folding_preserves_semantics(
        (n, bits) in arb_netlist().prop_flat_map(|n| {
            let ni = n.n_inputs();
            (Just(n), proptest::collection::vec(any::<bool>(), ni))
        })
    ) {
        let folded = fold_inv(&n);
        prop_assert_eq!(folded.eval_plain(&bits).unwrap(), n.eval_plain(&bits).unwrap());
    }

    #[test]
    fn garbled_tables_roundtrip_serialization(n in arb_netlist(), seed in any::<u64>()) {
        let folded = fold_inv(&n);
        let gc = garble(&folded, seed).circuit;
        let back = deserialize(&serialize(&gc)).unwrap();
        prop_assert_eq!(serialize(&back), serialize(&gc));
    }

    #[test]
    fn schedules_are_topological(n in arb_netlist(), wire_mem in 8usize..128) {
        for order in [
            order_depth_first(&n),
            order_fr(&n),
            schedule_sr(&n, wire_mem).unwrap(),
            schedule_cpfe_netlist(&n, wire_mem, &LatencyMap::EVAL).unwrap(),
        ] {
            prop_assert!(is_topological(&n, &order));
        }
    }

    #[test]
    fn speculation_always_verifies(n in arb_netlist(), wire_mem in 4usize..64) {
        let order = order_depth_first(&n);
        let folded = fold_inv(&n);
        let forder = fold_order(&n, &order);
        let program = speculate(&folded, &forder, wire_mem).unwrap();
        prop_assert!(verify_speculation(&program, &folded, &forder).is_ok());
    }

    #[test]
    fn wrap_is_canonical(v in any::<i64>(), w in 2usize..64) {
        let r = wrap(v as i128, w);
        prop_assert!(r >= -(1i128 << (w - 1)) && r < (1i128 << (w - 1)));
        prop_assert_eq!(wrap(r, w), r);
        // Same residue mod 2^w.
        prop_assert_eq!(to_unsigned(r, w), (v as i128 as u128) & ((1u128 << w) - 1));
    }

    #[test]
    fn fixed_mul_identity_and_sign(v in -30000i128..30000, w in (10usize..32), frac in 1usize..8) {
        prop_assume!(frac < w);
        let a = wrap(v, w);
        let one = 1i128 << frac;
        prop_assert_eq!(mul_fixed(a, one, w, frac), a);
        prop_assert_eq!(mul_fixed(a, -one, w, frac), wrap(-a, w));
        prop_assert_eq!(mul_fixed(a, 0, w, frac), 0);
    }

    #[test]
    fn word_bit_codec_roundtrips(v in any::<u64>(), w in 1usize..64) {
        let v = u128::from(v) & ((1u128 << w) - 1);
        prop_assert_eq!(uint_from_bits(&bits_from_uint(v, w)), v);
    }

    #[test]
    fn adder_circuit_adds(a in any::<u16>(), b in any::<u16>()) {
        let fmt = FixedPointFormat::new(16, 8).unwrap();
        let n = gen_adder(fmt).unwrap();
        let mut inputs = bits_from_uint(u128::from(a), 16);
        inputs.extend(bits_from_uint(u128::from(b), 16));
        let out = n.eval_plain(&inputs).unwrap();
        prop_assert_eq!(uint_from_bits(&out) as u16, a.wrapping_add(b));
    }

    #[test]
    fn xfbq_multiplier_exact_with_correction(a in any::<u8>(), b in any::<u8>()) {
        let fmt = FixedPointFormat::new(8, 4).unwrap();
        let n = gen_mul_xfbq(fmt, true).unwrap();
        let mut inputs = bits_from_uint(u128::from(a), 8);
        inputs.extend(bits_from_uint(u128::from(b), 8));
        let out = n.eval_plain(&inputs).unwrap();
        prop_assert_eq!(uint_from_bits(&out) as u8, a.wrapping_mul(b));
    }

    #[test]
    fn linear_layer_shares_recombine(seed in any::<u64>(), rows in 1usize..4, cols in 1usize..4) {
        let fmt = FixedPointFormat::new(16, 8).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = FixedMatrix::random(cols, 1, fmt, &mut rng);
        let w = FixedMatrix::random(rows, cols, fmt, &mut rng);
        let mut t = Transcript::new();
        let out = linear_layer(&x, &w, false, seed ^ 0x1234, &mut t).unwrap();
        let rec = out.server_share.add(&out.client_share).unwrap();
        prop_assert_eq!(rec.data, w.matmul(&x).unwrap().data);
    }
}
