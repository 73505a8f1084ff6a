use moralframe_core::agreement::{krippendorff_alpha, AlphaError};
use moralframe_testkit::oracles::oracle_alpha;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix() -> impl Strategy<Value = Vec<Vec<Option<u8>>>> {
    (2usize..7, 0usize..25, 1u8..5).prop_flat_map(|(coders, units, values)| {
        prop::collection::vec(
            prop::collection::vec(prop::option::weighted(0.7, 0..values), coders),
            units,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn alpha_matches_pair_enumeration(units in matrix()) {
        match (krippendorff_alpha(&units), oracle_alpha(&units)) {
            (Ok(est), Some(want)) => prop_assert!((est.alpha - want).abs() <= 1e-9, "{} vs {}", est.alpha, want),
            (Err(AlphaError::InsufficientData(_)), None) => {}
            (got, want) => prop_assert!(false, "alpha {:?} but oracle {:?}", got, want),
        }
    }

    #[test]
    fn alpha_ignores_unit_and_coder_order(units in matrix(), rotate in 0usize..7) {
        let Ok(base) = krippendorff_alpha(&units) else { return Ok(()) };
        let mut shuffled: Vec<Vec<Option<u8>>> = units.iter().rev().cloned().collect();
        for unit in &mut shuffled {
            let r = rotate % unit.len();
            unit.rotate_left(r);
        }
        let again = krippendorff_alpha(&shuffled).unwrap();
        prop_assert!((base.alpha - again.alpha).abs() <= 1e-12);
    }

    #[test]
    fn unanimous_units_give_exactly_one(values in prop::collection::vec((0u8..4, 2usize..6), 2..30)) {
        let units: Vec<Vec<Option<u8>>> = values.iter().map(|&(v, m)| vec![Some(v); m]).collect();
        prop_assert_eq!(krippendorff_alpha(&units).unwrap().alpha, 1.0);
    }
}

#[test]
fn independent_coin_flips_hover_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let units: Vec<Vec<Option<bool>>> = (0..10_000)
        .map(|_| vec![Some(rng.random_bool(0.5)), Some(rng.random_bool(0.5))])
        .collect();
    let alpha = krippendorff_alpha(&units).unwrap().alpha;
    assert!(alpha.abs() <= 0.02, "alpha {alpha}");
}

#[test]
fn too_little_overlap_is_reported() {
    let single: Vec<Vec<Option<u8>>> = vec![vec![Some(1), Some(1)], vec![Some(0), None]];
    assert_eq!(krippendorff_alpha(&single), Err(AlphaError::InsufficientData(1)));
    assert_eq!(oracle_alpha(&single), None);
}
