//! Structural invariants of the inner-product space and the adjustment
//! machinery, checked over seeded random specifications.

use blin_core::adjustment::{adjust, adjust_elementwise_oracle, build_collections, whole_matrix};
use blin_core::exchangeable::{sample_beliefs, sample_covariance, DataBatch};
use blin_core::matrix::{
    distance_sq, equivalent, inner_product, slot_pairs, AffineForm, RandomMatrix,
};
use blin_core::quantity::QuantityId;
use blin_core::specfile::{parse_spec, to_file, write_spec};
use blin_core::store::BeliefStore;
use blin_core::synth;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A store over a handful of quantities with a PSD covariance, plus random
/// affine matrices over those quantities.
fn random_store(seed: u64, quantities: usize) -> BeliefStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut registry = blin_core::quantity::Registry::new();
    for k in 0..quantities {
        registry.insert(&format!("q{k}")).unwrap();
    }
    let factor = DMatrix::from_fn(quantities, quantities, |_, _| rng.random_range(-1.0..1.0));
    let mut cov = &factor * factor.transpose();
    for k in 0..quantities {
        cov[(k, k)] += 0.2;
    }
    let cov = (&cov + cov.transpose()) * 0.5;
    let expectation = (0..quantities)
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    BeliefStore::new(registry, expectation, cov).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, dim: usize, ids: &[QuantityId]) -> RandomMatrix {
    let mut out = RandomMatrix::zeros(dim);
    for (i, j) in slot_pairs(dim) {
        if rng.random_range(0.0..1.0) < 0.7 {
            let terms = (0..rng.random_range(0..3usize))
                .map(|_| {
                    let id = ids[rng.random_range(0..ids.len())];
                    let coeff = rng.random_range(-2.0..2.0);
                    (id, coeff)
                })
                .collect();
            let constant = rng.random_range(-2.0..2.0);
            out.set_slot(i, j, AffineForm::with_terms(constant, terms));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inner_product_is_symmetric_and_bilinear(seed in any::<u64>()) {
        let store = random_store(seed, 5);
        let ids: Vec<QuantityId> = store.registry().ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let dim = rng.random_range(1..4usize);
        let p = random_matrix(&mut rng, dim, &ids);
        let q = random_matrix(&mut rng, dim, &ids);
        let r = random_matrix(&mut rng, dim, &ids);
        let a = rng.random_range(-2.0..2.0);
        let b = rng.random_range(-2.0..2.0);

        let pq = inner_product(&p, &q, &store).unwrap();
        let qp = inner_product(&q, &p, &store).unwrap();
        prop_assert_eq!(pq, qp);

        let combo = p.scale(a).add(&r.scale(b)).unwrap();
        let lhs = inner_product(&combo, &q, &store).unwrap();
        let rhs = a * pq + b * inner_product(&r, &q, &store).unwrap();
        let scale = 1.0f64.max(lhs.abs()).max(rhs.abs());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale, "lhs={lhs} rhs={rhs}");
    }

    #[test]
    fn squared_norms_are_nonnegative_under_psd_stores(seed in any::<u64>()) {
        let store = random_store(seed, 6);
        let ids: Vec<QuantityId> = store.registry().ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
        let dim = rng.random_range(1..4usize);
        let p = random_matrix(&mut rng, dim, &ids);
        let norm_sq = inner_product(&p, &p, &store).unwrap();
        prop_assert!(norm_sq >= -1e-10 * norm_sq.abs().max(1.0), "norm_sq={norm_sq}");
    }

    #[test]
    fn distance_expands_via_the_inner_product(seed in any::<u64>()) {
        let store = random_store(seed, 5);
        let ids: Vec<QuantityId> = store.registry().ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
        let dim = rng.random_range(1..4usize);
        let p = random_matrix(&mut rng, dim, &ids);
        let q = random_matrix(&mut rng, dim, &ids);
        let d2 = distance_sq(&p, &q, &store).unwrap();
        let expanded = inner_product(&p, &p, &store).unwrap()
            - 2.0 * inner_product(&p, &q, &store).unwrap()
            + inner_product(&q, &q, &store).unwrap();
        let scale = 1.0f64.max(d2.abs()).max(expanded.abs());
        prop_assert!((d2 - expanded).abs() <= 1e-12 * scale, "d2={d2} expanded={expanded}");
    }

    #[test]
    fn centering_is_idempotent_and_detected_by_equivalence(seed in any::<u64>()) {
        let store = random_store(seed, 5);
        let ids: Vec<QuantityId> = store.registry().ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(4));
        let dim = rng.random_range(1..4usize);
        let p = random_matrix(&mut rng, dim, &ids);
        let centered = p.center(&store).unwrap();
        let twice = centered.center(&store).unwrap();
        prop_assert!(twice.same_form(&centered));
        // A matrix and its centered copy plus its expectation are the same
        // element of the space.
        let back = centered
            .clone()
            .with_expectation(&p.expectation(&store).unwrap(), &store)
            .unwrap();
        prop_assert!(equivalent(&p, &back, &store).unwrap());
    }

    #[test]
    fn sample_covariance_is_permutation_and_shift_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..12usize);
        let r = rng.random_range(1..4usize);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..r).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let batch = DataBatch::new(rows.clone()).unwrap();
        let s = sample_covariance(&batch).unwrap();

        let mut permuted = rows.clone();
        permuted.rotate_left(n / 2);
        permuted.reverse();
        let s_perm = sample_covariance(&DataBatch::new(permuted).unwrap()).unwrap();
        prop_assert_eq!(&s, &s_perm);

        let shift: Vec<f64> = (0..r).map(|_| rng.random_range(-10.0..10.0)).collect();
        let shifted: Vec<Vec<f64>> = rows
            .iter()
            .map(|row| row.iter().zip(&shift).map(|(v, d)| v + d).collect())
            .collect();
        let s_shift = sample_covariance(&DataBatch::new(shifted).unwrap()).unwrap();
        for i in 0..r {
            for j in 0..r {
                prop_assert!((s[(i, j)] - s_shift[(i, j)]).abs() <= 1e-10,
                    "slot ({i},{j}): {} vs {}", s[(i, j)], s_shift[(i, j)]);
            }
        }
    }

    #[test]
    fn sampling_only_adds_uncertainty(seed in any::<u64>()) {
        let r = (seed % 3 + 1) as usize;
        let spec = synth::random_spec(r, seed);
        let n = synth::random_sample_size(seed);
        let beliefs = sample_beliefs(&spec, n).unwrap();
        for k in 0..beliefs.v_ids.len() {
            let var_v = beliefs.store.variance(beliefs.v_ids[k]);
            let var_s = beliefs.store.variance(beliefs.s_ids[k]);
            prop_assert!(var_s >= var_v - 1e-12 * var_v.abs().max(1.0));
        }
    }

    #[test]
    fn spec_files_round_trip_exactly(seed in any::<u64>()) {
        let r = (seed % 3 + 1) as usize;
        let spec = synth::random_spec(r, seed);
        let s_obs = synth::random_observation(r, seed);
        let text = write_spec(&to_file(&spec, Some(17), Some(&s_obs)));
        let loaded = parse_spec(&text).unwrap();
        prop_assert_eq!(&spec, &loaded.spec);
        prop_assert_eq!(loaded.n, Some(17));
        prop_assert_eq!(loaded.s_obs.as_ref(), Some(&s_obs));
    }
}

/// The projection route and the scalar elementwise route agree, resolution
/// is monotone over the nested collections, the realized matrices are
/// exactly symmetric, and the projection satisfies the Pythagorean split.
#[test]
fn adjustment_invariants_over_random_specs() {
    for seed in 0..40u64 {
        let r = (seed % 2 + 2) as usize;
        let spec = synth::random_spec(r, seed);
        let n = synth::random_sample_size(seed);
        let beliefs = sample_beliefs(&spec, n).unwrap();
        let s_obs = synth::random_observation(r, seed);
        let (d_s, d_i, d_c) = build_collections(&beliefs.s_ids, r).unwrap();
        let mut values = vec![None; beliefs.store.len()];
        for (k, &(i, j)) in slot_pairs(r).iter().enumerate() {
            values[beliefs.s_ids[k].index()] = Some(s_obs[(i, j)]);
        }
        let d_s = d_s.realize(&|q| values[q.index()]).unwrap();
        let d_i = d_i.realize(&|q| values[q.index()]).unwrap();
        let d_c = d_c.realize(&|q| values[q.index()]).unwrap();
        let target = whole_matrix(&beliefs.v_ids, r).unwrap();

        let by_s = adjust(&target, &d_s, &beliefs.store).unwrap();
        let by_i = adjust(&target, &d_i, &beliefs.store).unwrap();
        let by_c = adjust(&target, &d_c, &beliefs.store).unwrap();

        // Monotone resolution over nested spans.
        assert!(by_s.resolution <= by_i.resolution + 1e-12, "seed {seed}");
        assert!(by_i.resolution <= by_c.resolution + 1e-12, "seed {seed}");

        for result in [&by_s, &by_i, &by_c] {
            // Pythagoras with an independently recomputed residual.
            let lhs = result.prior_norm_sq;
            let rhs = result.resolved_norm_sq + result.residual_norm_sq;
            assert!(
                (lhs - rhs).abs() <= 1e-8 * lhs.max(1.0),
                "seed {seed}: prior {lhs} vs split {rhs}"
            );
            // Realized matrices are exactly symmetric.
            for (i, j) in slot_pairs(r) {
                assert_eq!(result.realized[(i, j)], result.realized[(j, i)]);
            }
            // Resolution stays in [0, 1] up to rounding.
            assert!(result.resolution >= 0.0 && result.resolution <= 1.0 + 1e-12);
            // The adjusted object keeps the prior expectation exactly.
            assert_eq!(
                result.adjusted.expectation(&beliefs.store).unwrap(),
                target.expectation(&beliefs.store).unwrap(),
                "seed {seed}"
            );
        }

        // The complete-collection projection agrees with the scalar
        // elementwise oracle slot by slot.
        let oracle =
            adjust_elementwise_oracle(&beliefs.v_ids, &beliefs.s_ids, &beliefs.store, &s_obs)
                .unwrap();
        for (k, &(i, j)) in slot_pairs(r).iter().enumerate() {
            let got = by_c.realized[(i, j)];
            let want = oracle[k];
            assert!(
                (got - want).abs() <= 1e-8 * want.abs().max(1.0),
                "seed {seed} slot ({i},{j}): projection {got} vs oracle {want}"
            );
        }
    }
}
