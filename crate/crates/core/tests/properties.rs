use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use clio_core::calculus::{decode_ground, encode_ground, GroundValue};
use clio_core::crypto::TestVecProvider;
use clio_core::label::{format_label, parse_label, Category, Formula, Label, Principal};
use clio_core::store::{deserialize_any, entry_from_wire, entry_to_wire, serialize, Keystore, RealStore};

const NAMES: [&str; 4] = ["A", "B", "C", "D"];

fn principal() -> impl Strategy<Value = Principal> {
    prop::sample::select(NAMES.to_vec()).prop_map(|n| Principal::new(n).unwrap())
}

fn formula() -> impl Strategy<Value = Formula> {
    prop_oneof![
        1 => Just(Formula::False),
        2 => Just(Formula::truth()),
        8 => prop::collection::vec(prop::collection::btree_set(principal(), 1..=3), 1..=3).prop_map(|cs| {
            Formula::from_clauses(cs.into_iter().map(|c| Category::new(c).unwrap()))
        }),
    ]
}

fn label() -> impl Strategy<Value = Label> {
    (formula(), formula(), formula()).prop_map(|(c, i, a)| Label::new(c, i, a))
}

fn usable_label() -> impl Strategy<Value = Label> {
    label().prop_filter("no False component", |l| {
        !l.conf.is_false() && !l.integ.is_false() && !l.avail.is_false()
    })
}

fn ground() -> impl Strategy<Value = GroundValue> {
    let leaf = prop_oneof![
        Just(GroundValue::Unit),
        any::<bool>().prop_map(GroundValue::Bool),
        any::<i64>().prop_map(GroundValue::Int),
        ".{0,16}".prop_map(GroundValue::Text),
        label().prop_map(GroundValue::Label),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| (inner.clone(), inner).prop_map(|(a, b)| GroundValue::pair(a, b)))
}

fn holds(f: &Formula, on: &BTreeMap<Principal, bool>) -> bool {
    match f {
        Formula::False => false,
        Formula::Clauses(cs) => cs.iter().all(|c| c.members().iter().any(|m| on[m])),
    }
}

fn implies_by_table(f: &Formula, g: &Formula) -> bool {
    (0u32..1 << NAMES.len()).all(|bits| {
        let on: BTreeMap<Principal, bool> = NAMES
            .iter()
            .enumerate()
            .map(|(i, n)| (Principal::new(*n).unwrap(), bits >> i & 1 == 1))
            .collect();
        !holds(f, &on) || holds(g, &on)
    })
}

fn keystore() -> Keystore {
    let ps: Vec<Principal> = NAMES.iter().map(|n| Principal::new(*n).unwrap()).collect();
    Keystore::generate(&ps, &TestVecProvider, &mut ChaCha20Rng::seed_from_u64(77))
}

proptest! {
    #[test]
    fn entails_matches_truth_table(f in formula(), g in formula()) {
        prop_assert_eq!(f.entails(&g), implies_by_table(&f, &g));
    }

    #[test]
    fn flow_is_a_preorder(a in label(), b in label(), c in label()) {
        prop_assert!(a.can_flow_to(&a));
        if a.can_flow_to(&b) && b.can_flow_to(&c) {
            prop_assert!(a.can_flow_to(&c));
        }
        if a.can_flow_to(&b) && b.can_flow_to(&a) {
            prop_assert!(a.equivalent(&b));
        }
    }

    #[test]
    fn join_and_meet_are_bounds(a in label(), b in label(), c in label()) {
        let j = a.join(&b);
        let m = a.meet(&b);
        prop_assert!(a.can_flow_to(&j) && b.can_flow_to(&j));
        prop_assert!(m.can_flow_to(&a) && m.can_flow_to(&b));
        if a.can_flow_to(&c) && b.can_flow_to(&c) {
            prop_assert!(j.can_flow_to(&c));
        }
        if c.can_flow_to(&a) && c.can_flow_to(&b) {
            prop_assert!(c.can_flow_to(&m));
        }
        prop_assert!(j.equivalent(&b.join(&a)));
        prop_assert!(Label::bottom().can_flow_to(&a) && a.can_flow_to(&Label::top()));
    }

    #[test]
    fn label_text_roundtrip(a in label()) {
        let back = parse_label(&format_label(&a)).unwrap();
        prop_assert!(back.equivalent(&a), "{} -> {}", a, back);
    }

    #[test]
    fn ground_encoding_roundtrip(v in ground()) {
        prop_assert_eq!(decode_ground(&encode_ground(&v)).unwrap(), v);
    }

    #[test]
    fn ground_decoding_rejects_trailing_bytes(v in ground(), extra in any::<u8>()) {
        let mut bytes = encode_ground(&v);
        bytes.push(extra);
        prop_assert!(decode_ground(&bytes).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialize_roundtrip_testvec(l in usable_label(), v in ground(), k in ground(), version in 1u64.., seed in any::<u64>()) {
        let ks = keystore();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut store = RealStore::new();
        let (cks, bytes) = serialize(&store, &l, &v, &k, version, &ks, &TestVecProvider, &mut rng).unwrap();
        for c in &cks {
            store.apply(c);
        }
        let d = deserialize_any(&store, &l, &bytes, &ks, &TestVecProvider).unwrap();
        prop_assert_eq!(d.value, v);
        prop_assert_eq!(d.key, k);
        prop_assert_eq!(d.version, version);
    }

    #[test]
    fn store_wire_roundtrip(l in usable_label(), v in ground(), k in ground(), seed in any::<u64>()) {
        let ks = keystore();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut store = RealStore::new();
        let (cks, bytes) = serialize(&store, &l, &v, &k, 1, &ks, &TestVecProvider, &mut rng).unwrap();
        for c in &cks {
            store.apply(c);
        }
        let line = entry_to_wire(&k, &l, &bytes);
        let (k2, l2, b2) = entry_from_wire(&line).unwrap();
        prop_assert_eq!(&k2, &k);
        prop_assert!(l2.equivalent(&l));
        prop_assert_eq!(&b2, &bytes);
        let back = RealStore::from_wire(&store.to_wire()).unwrap();
        prop_assert_eq!(&back, &store);
    }

    #[test]
    fn keystore_wire_roundtrip(seed in any::<u64>(), n in 1usize..=NAMES.len()) {
        let ps: Vec<Principal> = NAMES[..n].iter().map(|x| Principal::new(*x).unwrap()).collect();
        let ks = Keystore::generate(&ps, &TestVecProvider, &mut ChaCha20Rng::seed_from_u64(seed));
        let back = Keystore::from_wire(&ks.to_wire()).unwrap();
        prop_assert_eq!(back.to_wire(), ks.to_wire());
        let public = Keystore::from_wire(&ks.public_only().to_wire()).unwrap();
        prop_assert_eq!(public.owned().count(), 0);
    }
}
