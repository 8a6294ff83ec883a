mod common;

use crystalnet::elementdata::{default_table, FEATURE_NAMES};
use crystalnet::{
    build_graph, decode_features, featurize, parse_xyz, Block, Decoded, ElementFeatureDescriptor, FeatureValue,
    FeaturizedAtoms, GraphNodeFeaturization, GraphOptions, OneHotOneCold, Scale,
};
use proptest::prelude::*;

fn arb_continuous() -> impl Strategy<Value = OneHotOneCold> {
    (2usize..40, 0.01f64..500.0, 0.5f64..500.0, any::<bool>()).prop_map(|(nbins, lo, width, log)| {
        let scale = if log { Scale::Log } else { Scale::Linear };
        OneHotOneCold::continuous(nbins, lo, lo + width, scale).unwrap()
    })
}

fn arb_categorical() -> impl Strategy<Value = OneHotOneCold> {
    prop_oneof![
        prop::sample::subsequence(Block::ALL.to_vec(), 1..=4)
            .prop_map(|b| b.into_iter().map(FeatureValue::Block).collect::<Vec<_>>()),
        prop::collection::btree_set(0u32..120, 1..30)
            .prop_map(|s| s.into_iter().map(FeatureValue::Integer).collect::<Vec<_>>()),
    ]
    .prop_shuffle()
    .prop_map(|cats| OneHotOneCold::categorical(cats).unwrap())
}

fn range_of(codec: &OneHotOneCold) -> (f64, f64, usize) {
    match *codec {
        OneHotOneCold::Continuous { lo, hi, nbins, .. } => (lo, hi, nbins),
        _ => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn continuous_roundtrip_contains_value(codec in arb_continuous(), t in 0.0f64..=1.0) {
        let (lo, hi, _) = range_of(&codec);
        let v = (lo + (hi - lo) * t).clamp(lo, hi);
        let bits = codec.encode(&FeatureValue::Real(v)).unwrap();
        prop_assert_eq!(bits.iter().filter(|&&b| b).count(), 1);
        match codec.decode(&bits).unwrap() {
            Decoded::Interval(iv) => prop_assert!(iv.contains(v), "{} not in {}", v, iv),
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }

    #[test]
    fn categorical_roundtrip_is_exact(codec in arb_categorical(), pick in any::<prop::sample::Index>()) {
        let OneHotOneCold::Categorical { categories } = &codec else { unreachable!() };
        let v = categories[pick.index(categories.len())];
        let bits = codec.encode(&v).unwrap();
        prop_assert_eq!(bits.iter().filter(|&&b| b).count(), 1);
        prop_assert_eq!(codec.decode(&bits).unwrap(), Decoded::Category(v));
    }

    #[test]
    fn bin_edges_are_half_open(codec in arb_continuous()) {
        let (lo, hi, nbins) = range_of(&codec);
        prop_assert_eq!(codec.bin_interval(0).lo, lo);
        prop_assert_eq!(codec.bin_interval(nbins - 1).hi, hi);
        prop_assert_eq!(codec.bin_index(hi).unwrap(), nbins - 1);
        prop_assert!(codec.bin_interval(nbins - 1).closed_upper);
        for k in 0..nbins {
            let iv = codec.bin_interval(k);
            prop_assert_eq!(codec.bin_index(iv.lo).unwrap(), k);
            if k + 1 < nbins {
                prop_assert!(!iv.closed_upper);
                prop_assert_eq!(iv.hi, codec.bin_interval(k + 1).lo);
                prop_assert!(!iv.contains(iv.hi));
            }
        }
        prop_assert!(codec.bin_index(lo - (hi - lo) * 1e-3).is_err());
        prop_assert!(codec.bin_index(hi + (hi - lo) * 1e-3).is_err());
    }

    /// Swapping one feature's codec changes only that feature's block.
    #[test]
    fn reconfiguring_one_block_leaves_others(nbins in 2usize..30, z in 1usize..=86) {
        let table = default_table();
        let scheme = GraphNodeFeaturization::with_defaults(&["block", "mass", "row"], table).unwrap();
        let (lo, hi, _) = range_of(&scheme.features()[1].1);
        let changed = scheme.with_codec(1, OneHotOneCold::continuous(nbins, lo, hi, Scale::Log).unwrap()).unwrap();
        let symbol = &table.records()[z - 1].symbol;
        let a = scheme.encode_element(symbol, table).unwrap();
        let b = changed.encode_element(symbol, table).unwrap();
        let (ra, rb) = (scheme.block_ranges(), changed.block_ranges());
        prop_assert_eq!(&a[ra[0].clone()], &b[rb[0].clone()]);
        prop_assert_eq!(&a[ra[2].clone()], &b[rb[2].clone()]);
        prop_assert_eq!(b.len(), a.len() - 10 + nbins);
    }

    /// A featurized column depends only on the atom's element, not on the
    /// graph it sits in.
    #[test]
    fn columns_depend_only_on_species(cutoff in 0.5f64..3.0) {
        let table = default_table();
        let scheme = GraphNodeFeaturization::with_defaults(&["block", "group", "mass"], table).unwrap();
        let s = parse_xyz("4\n\nO 0 0 0\nH 0.96 0 0\nGa 0 2 0\nH 0 0 1.5\n").unwrap();
        let g = build_graph(&s, &GraphOptions::with_cutoff(cutoff)).unwrap();
        let fa = featurize(&g, &scheme, table).unwrap();
        for (col, sym) in s.species().iter().enumerate() {
            let want: Vec<f64> = scheme.encode_element(sym, table).unwrap().iter().map(|&b| f64::from(u8::from(b))).collect();
            prop_assert_eq!(fa.matrix().column(col).iter().copied().collect::<Vec<_>>(), want);
        }
    }
}

#[test]
fn every_element_decodes_to_its_own_values() {
    let table = default_table();
    let names: Vec<&str> = FEATURE_NAMES.to_vec();
    for r in table.records() {
        let present: Vec<&str> = names.iter().copied().filter(|n| r.feature(n).unwrap().is_some()).collect();
        let scheme = GraphNodeFeaturization::with_defaults(&present, table).unwrap();
        let bits = scheme.encode_element(&r.symbol, table).unwrap();
        assert_eq!(bits.iter().filter(|&&b| b).count(), present.len());
        for ((d, codec), range) in scheme.features().iter().zip(scheme.block_ranges()) {
            let value = d.value(table, &r.symbol).unwrap();
            match codec.decode(&bits[range]).unwrap() {
                Decoded::Category(c) => assert_eq!(c, value, "{} {}", r.symbol, d.name()),
                Decoded::Interval(iv) => assert!(iv.contains(value.as_f64().unwrap()), "{} {}", r.symbol, d.name()),
            }
        }
    }
}

#[test]
fn gallium_column() {
    let table = default_table();
    let scheme = GraphNodeFeaturization::with_defaults(&["block", "mass"], table).unwrap();
    let g = build_graph(&parse_xyz("1\n\nGa 0 0 0\n").unwrap(), &GraphOptions::with_cutoff(1.0)).unwrap();
    let fa = featurize(&g, &scheme, table).unwrap();
    assert_eq!(fa.matrix().shape(), (14, 1));
    assert_eq!(fa.matrix().iter().filter(|&&v| v == 1.0).count(), 2);
    let decoded = decode_features(&fa).unwrap();
    assert_eq!(decoded[0][0].1, Decoded::Category(FeatureValue::Block(Block::P)));
    let Decoded::Interval(iv) = decoded[0][1].1 else { panic!() };
    assert!(iv.contains(table.lookup("Ga").unwrap().mass));
}

#[test]
fn featurized_json_roundtrip() {
    let table = default_table();
    let scheme = GraphNodeFeaturization::with_defaults(&["block", "electronegativity"], table).unwrap();
    let g = build_graph(&parse_xyz("2\n\nNa 0 0 0\nO 0 0 2\n").unwrap(), &GraphOptions::with_cutoff(3.0))
        .unwrap()
        .with_source_id("nao");
    let fa = featurize(&g, &scheme, table).unwrap();
    let back = FeaturizedAtoms::from_json(&fa.to_json()).unwrap();
    assert_eq!(back, fa);
    assert_eq!(back.source_id(), Some("nao"));
}

#[test]
fn missing_value_is_reported() {
    let table = default_table();
    let scheme = GraphNodeFeaturization::with_defaults(&["electronegativity"], table).unwrap();
    let g = build_graph(&parse_xyz("1\n\nHe 0 0 0\n").unwrap(), &GraphOptions::with_cutoff(1.0)).unwrap();
    assert!(featurize(&g, &scheme, table).is_err());
    assert!(ElementFeatureDescriptor::new("colour").is_err());
}
