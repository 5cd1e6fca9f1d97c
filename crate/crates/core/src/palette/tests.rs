use super::*;
use crate::schedule::LevelSchedule;
use proptest::prelude::*;

fn c2_engine() -> Engine {
    let s = LevelSchedule::new(2, vec![0, 5, 10, 15], vec![2, 2, 2], PaletteMode::Plain).unwrap();
    Engine::new(s, DensityFn::constant(2, 1.5).unwrap(), EngineOptions::default()).unwrap()
}

fn c3_engine(rho: DensityFn) -> Engine {
    let s = LevelSchedule::new(2, vec![0, 8, 16, 24], vec![3, 3, 3], PaletteMode::Palette).unwrap();
    Engine::new(s, rho, EngineOptions::default()).unwrap()
}

#[test]
fn base_palette_values() {
    assert_eq!(base_palette(3).unwrap(), vec![1, 2, 1]);
    assert_eq!(base_palette(2).unwrap(), vec![1, 2]);
    assert!(base_palette(4).is_err());
}

#[test]
fn tuple_examples() {
    assert_eq!(a_tuple(2, 4, 1).unwrap(), vec![1, 1, 1, 1]);
    assert_eq!(a_tuple(2, 4, 16).unwrap(), vec![2, 2, 2, 2]);
    assert_eq!(a_tuple(3, 4, 5).unwrap(), vec![1, 1, 2, 2]);
    assert!(a_tuple(3, 4, 82).is_err());
    // smallest index whose first component is 3
    assert_eq!(a_tuple(3, 4, 2 * 27 + 1).unwrap()[0], 3);
    assert_eq!(a_tuple(3, 4, 2 * 27).unwrap()[0], 2);
}

#[test]
fn strip_sum_counts_each_colour_equally() {
    // Brute force over all 16 tuples of [2]^4.
    let mut counts = [0u32; 2];
    for i in 1..=16u128 {
        for a in a_tuple(2, 4, i).unwrap() {
            counts[a as usize - 1] += 1;
        }
    }
    assert_eq!(counts, [32, 32]);
    let e = c2_engine();
    // D·c^{D−1}·(N(1,1) + N(1,2)) = 4·8·3
    assert_eq!(e.strip_sum(2).unwrap(), BigInt::from(96));
}

#[test]
fn origin_descends_to_one() {
    let e = c3_engine(DensityFn::constant(2, 1.5).unwrap());
    for n in 2..=3 {
        for j in 1..=3 {
            assert_eq!(e.eval_colour(&ColourRef::new(n, j), &[0, 0]).unwrap(), 1);
        }
    }
    let e = c2_engine();
    for n in 2..=3 {
        for j in 1..=2 {
            assert_eq!(e.eval_colour(&ColourRef::new(n, j), &[0, 0]).unwrap(), 1);
        }
    }
}

#[test]
fn last_strip_block_and_first_kept_tile() {
    let e = c3_engine(DensityFn::constant(2, 1.5).unwrap());
    // block 81 = (3,3,3,3), sub-cube 1 → φ_3^{(1)} = 1
    assert_eq!(e.eval_colour(&ColourRef::new(2, 2), &[160, 0]).unwrap(), 1);
    // block 55 = (3,1,1,1) puts colour 3 first, colour 1 in sub-cube 2
    assert_eq!(e.eval_colour(&ColourRef::new(2, 1), &[108, 0]).unwrap(), 1);
    // block 28 = (2,1,1,1)
    assert_eq!(e.eval_colour(&ColourRef::new(2, 1), &[54, 0]).unwrap(), 2);
    let first_kept = e.tile_address(2, &[0, 2]).unwrap();
    assert_eq!(first_kept.ordinal, Some(1));
    assert_eq!(e.eval_colour(&ColourRef::new(2, 1), &[0, 2]).unwrap(), 1);
    assert!(e.tile_address(2, &[161, 1]).unwrap().strip);
    assert_eq!(e.tile_address(2, &[162, 0]).unwrap().ordinal, Some(162 * 256 - 2 * 162 + 1));
}

#[test]
fn out_of_domain_is_range_error() {
    let e = c2_engine();
    assert!(matches!(e.eval_colour(&ColourRef::new(2, 1), &[32, 0]), Err(Error::OutOfRange(_))));
    assert!(matches!(e.eval_colour(&ColourRef::new(2, 3), &[0, 0]), Err(Error::OutOfRange(_))));
    assert!(matches!(e.eval_colour(&ColourRef::new(4, 1), &[0, 0]), Err(Error::OutOfRange(_))));
}

#[test]
fn base_shades() {
    let e = c3_engine(DensityFn::constant(2, 1.5).unwrap());
    assert_eq!(e.shade(&ColourRef::new(1, 1)).unwrap(), rat_int(1));
    assert_eq!(e.shade(&ColourRef::new(1, 2)).unwrap(), rat_int(2));
    assert_eq!(e.shade(&ColourRef::new(1, 3)).unwrap(), rat_int(1));
}

#[test]
fn level2_shades_of_c3_schedule() {
    let e = c3_engine(DensityFn::constant(2, 1.5).unwrap());
    // strip: 4·27·(1+2+1) = 432; M^{(2,1)} all ones, M^{(2,2)} all twos
    assert_eq!(e.shade_numerator(2, 1).unwrap(), BigInt::from(432 + 65212));
    assert_eq!(e.shade_numerator(2, 2).unwrap(), BigInt::from(432 + 2 * 65212));
}

#[test]
fn alpha_selection_examples() {
    let lo = c3_engine(DensityFn::constant(2, 4.0 / 3.0).unwrap());
    let hi = c3_engine(DensityFn::constant(2, 5.0 / 3.0).unwrap());
    // b^{(2)} ≈ (1.0017, 1.9967)
    assert_eq!(lo.alpha_for_tile(3, &[0, 5]).unwrap(), 1);
    assert_eq!(hi.alpha_for_tile(3, &[0, 5]).unwrap(), 2);
    // exactly halfway between the two shades: smaller index wins
    let mid = (65644.0 + 130856.0) / 2.0 / 65536.0;
    let tie = c3_engine(DensityFn::constant(2, mid).unwrap());
    assert_eq!(tie.alpha_for_tile(3, &[0, 5]).unwrap(), 1);
    // at level 2 the shades are 1 and 2; 3/2 ties
    let half = c3_engine(DensityFn::constant(2, 1.5).unwrap());
    assert_eq!(half.alpha_for_tile(2, &[0, 5]).unwrap(), 1);
    assert!(matches!(lo.alpha_for_tile(3, &[0, 0]), Err(Error::Usage(_))));
}

#[test]
fn materialized_plain_level2_matches_descent() {
    let e = c2_engine();
    let grids = e.materialize_level(2).unwrap();
    assert_eq!(grids[0].side, 32);
    for j in 1..=2u64 {
        for x in 0..32 {
            for y in 0..32 {
                let v = e.eval_colour(&ColourRef::new(2, j), &[x, y]).unwrap();
                assert_eq!(v, grids[j as usize - 1].get(&[x, y]), "colour {j} at ({x},{y})");
            }
        }
    }
}

#[test]
fn grid_mean_equals_shade() {
    let e = c3_engine(DensityFn::checkerboard(2, 3, 4.0 / 3.0, 5.0 / 3.0).unwrap());
    let grids = e.materialize_level(2).unwrap();
    for j in 1..=3u64 {
        assert_eq!(grids[j as usize - 1].sum(), e.shade_numerator(2, j).unwrap());
    }
    let e = c2_engine();
    for n in 2..=3 {
        let grids = e.materialize_level(n).unwrap();
        for j in 1..=2u64 {
            assert_eq!(grids[j as usize - 1].sum(), e.shade_numerator(n, j).unwrap());
        }
    }
}

#[test]
fn materialize_cap_is_enforced() {
    let s = LevelSchedule::new(2, vec![0, 5, 10], vec![2, 2], PaletteMode::Plain).unwrap();
    let opts = EngineOptions { materialize_cap: 1023, ..EngineOptions::default() };
    let e = Engine::new(s, DensityFn::constant(2, 1.5).unwrap(), opts).unwrap();
    assert!(e.materialize_level(1).is_ok());
    assert!(matches!(e.materialize_level(2), Err(Error::Capacity(_))));
}

#[test]
fn alpha_budget_is_enforced() {
    let s = LevelSchedule::new(2, vec![0, 8, 16], vec![3, 3], PaletteMode::Palette).unwrap();
    let opts = EngineOptions { alpha_budget: 1000, ..EngineOptions::default() };
    let e = Engine::new(s, DensityFn::constant(2, 1.5).unwrap(), opts).unwrap();
    assert!(matches!(e.shade_numerator(2, 3), Err(Error::Capacity(_))));
    // single points need only their own tile
    assert!(e.eval_colour(&ColourRef::new(2, 3), &[100, 100]).is_ok());
}

#[test]
fn engine_rejects_invalid_schedule() {
    let s = LevelSchedule::new(2, vec![0, 3], vec![3], PaletteMode::Plain).unwrap();
    assert!(matches!(
        Engine::new(s, DensityFn::constant(2, 1.5).unwrap(), EngineOptions::default()),
        Err(Error::InvalidSchedule(_))
    ));
}

/// Brute-force kept-tile ordinals by scanning tiles in lexicographic order.
fn brute_ordinals(per_axis: u128, blocks: u128, d: usize) -> Vec<Option<u128>> {
    let total = per_axis.pow(d as u32);
    let mut out = Vec::new();
    let mut kept = 0;
    for lex in 0..total {
        let mut m = vec![0u128; d];
        let mut r = lex;
        for q in (0..d).rev() {
            m[q] = r % per_axis;
            r /= per_axis;
        }
        let strip = m[0] < 2 * blocks && m[1..].iter().all(|&v| v < 2);
        if strip {
            out.push(None);
        } else {
            kept += 1;
            out.push(Some(kept));
        }
    }
    out
}

proptest! {
    #[test]
    fn kept_ordinal_matches_scan(g in 2u32..5, d in 2usize..4, blocks in 1u128..4) {
        let per_axis = 1u128 << g;
        prop_assume!(2 * blocks <= per_axis);
        let geo = LevelGeom { tile: 1, side: per_axis as i128, g, per_axis, c_prev: 2, c: 2, blocks, t: 0, mix: None };
        let brute = brute_ordinals(per_axis, blocks, d);
        for (lex, want) in brute.iter().enumerate() {
            let mut m = vec![0u128; d];
            let mut r = lex as u128;
            for q in (0..d).rev() {
                m[q] = r % per_axis;
                r /= per_axis;
            }
            prop_assert_eq!(kept_ordinal(&geo, &m), *want);
        }
    }

    #[test]
    fn strip_points_agree_across_colours(x in 0i128..162, y in 0i128..2, lx in 0i128..256, ly in 0i128..256) {
        let e = c3_engine(DensityFn::constant(2, 1.5).unwrap());
        let p = [x * 256 + lx, y * 256 + ly];
        let vals: Vec<u8> = (1..=3).map(|j| e.eval_colour(&ColourRef::new(3, j), &p).unwrap()).collect();
        prop_assert!(vals.windows(2).all(|w| w[0] == w[1]));
    }
}
