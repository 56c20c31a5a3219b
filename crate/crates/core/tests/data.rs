use std::collections::{HashMap, HashSet};

use dmtl_core::data::{
    assign_folds, cooccurrence, load_dataset, parse_labels, phi, serialize_labels, split_subject_exclusive,
    synth_generate, write_dataset, Manifest, SynthLayout, SyntheticSpec,
};
use dmtl_core::dmtl::{AttributeCatalog, AttributeDef, CategoryKind, CategorySpec, LabelValue, Scope};
use dmtl_core::{Dataset, LabelRecord};
use proptest::prelude::*;

fn catalog() -> AttributeCatalog {
    AttributeCatalog::new(
        vec![
            AttributeDef::ordinal("age", 0.0, 90.0, 0),
            AttributeDef::nominal("gender", 2, 1),
            AttributeDef::nominal("race", 4, 1),
        ],
        vec![
            CategorySpec::new(0, CategoryKind::Ordinal, Scope::Holistic),
            CategorySpec::new(1, CategoryKind::Nominal, Scope::Holistic),
        ],
    )
    .unwrap()
}

fn record_strategy() -> impl Strategy<Value = LabelRecord> {
    (
        "[a-z][a-z0-9_]{0,8}",
        "[A-Z][A-Za-z0-9]{0,6}",
        0.0f64..=90.0,
        0usize..2,
        0usize..4,
        prop::option::of((0.0f64..90.0, 0.01f64..20.0)),
    )
        .prop_map(|(id, subj, age, g, r, extra)| {
            let mut rec = LabelRecord::new(
                id,
                subj,
                vec![LabelValue::Ordinal(age), LabelValue::Nominal(g), LabelValue::Nominal(r)],
            );
            if let Some((mu, sigma)) = extra {
                rec.extras.insert("age.mu".into(), mu);
                rec.extras.insert("age.sigma".into(), sigma);
            }
            rec
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn labels_round_trip(records in prop::collection::vec(record_strategy(), 0..30)) {
        let mut seen = HashSet::new();
        let records: Vec<LabelRecord> = records.into_iter().filter(|r| seen.insert(r.sample_id.clone())).collect();
        let c = catalog();
        let text = serialize_labels(&records, &c);
        let back = parse_labels(&text, &c).unwrap();
        prop_assert_eq!(&back, &records);
        prop_assert_eq!(serialize_labels(&back, &c), text);
    }

    #[test]
    fn folds_are_subject_exclusive_and_balanced(
        subjects in prop::collection::vec(0u16..60, 1..300),
        k in 2usize..8,
        seed in any::<u64>()
    ) {
        let names: Vec<String> = subjects.iter().map(|s| format!("p{s}")).collect();
        let distinct: HashSet<&String> = names.iter().collect();
        match assign_folds(&names, k, seed) {
            Err(_) => prop_assert!(distinct.len() < k),
            Ok(folds) => {
                let mut fold_of: HashMap<&str, usize> = HashMap::new();
                for (n, f) in names.iter().zip(&folds) {
                    prop_assert!(*f < k);
                    let prev = fold_of.insert(n.as_str(), *f);
                    prop_assert!(prev.is_none() || prev == Some(*f));
                }
                let mut counts = vec![0usize; k];
                for f in fold_of.values() {
                    counts[*f] += 1;
                }
                let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
                prop_assert!(hi - lo <= 1, "{:?}", counts);
                prop_assert_eq!(assign_folds(&names, k, seed).unwrap(), folds);
            }
        }
    }

    #[test]
    fn phi_matches_contingency_table(bits in prop::collection::vec((any::<bool>(), any::<bool>()), 1..400)) {
        let (a, b): (Vec<bool>, Vec<bool>) = bits.iter().copied().unzip();
        let (mut n11, mut n10, mut n01, mut n00) = (0i64, 0i64, 0i64, 0i64);
        for (x, y) in &bits {
            match (x, y) {
                (true, true) => n11 += 1,
                (true, false) => n10 += 1,
                (false, true) => n01 += 1,
                (false, false) => n00 += 1,
            }
        }
        let num = (n11 * n00 - n10 * n01) as f64;
        let den = ((n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00)) as f64;
        let expected = if den == 0.0 { 0.0 } else { (num / den.sqrt()).clamp(-1.0, 1.0) };
        let got = phi(&a, &b);
        prop_assert_eq!(got, expected);
        prop_assert_eq!(phi(&a, &b), phi(&b, &a));
    }

    #[test]
    fn manifest_parser_never_panics(text in "[a-z_=:/.,0-9 \n#-]{0,200}") {
        let _ = Manifest::parse(&text, std::path::Path::new("."));
    }

    #[test]
    fn label_parser_never_panics(body in "[a-z0-9_,=:.ON \n-]{0,300}") {
        let _ = parse_labels(&format!("labels v1\n{body}"), &catalog());
    }
}

#[test]
fn phi_extremes() {
    let a = [true, false, true, true, false];
    let not_a: Vec<bool> = a.iter().map(|v| !v).collect();
    assert_eq!(phi(&a, &a), 1.0);
    assert_eq!(phi(&a, &not_a), -1.0);
    // The 4-sample independent pair.
    assert_eq!(phi(&[true, true, false, false], &[true, false, true, false]), 0.0);
}

#[test]
fn dataset_directory_round_trip() {
    for layout in [SynthLayout::Vector { dim: 5 }, SynthLayout::Image { channels: 1, height: 4, width: 3 }] {
        let mut spec = SyntheticSpec::shared_latent(25, 3, 2, 9);
        spec.layout = layout;
        spec.samples_per_subject = 3;
        let d = synth_generate(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(&d, dir.path()).unwrap();
        let back: Dataset = load_dataset(&manifest).unwrap();
        assert_eq!(back.records(), d.records());
        assert_eq!(back.sample_shape(), d.sample_shape());
        if matches!(layout, SynthLayout::Vector { .. }) {
            assert_eq!(back.features(), d.features());
        } else {
            // Images are stored as 8-bit pixels.
            for (x, y) in back.features().iter().zip(d.features()) {
                assert!((x - y.clamp(0.0, 1.0)).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
        let folds = split_subject_exclusive(&back, 3, 1).unwrap();
        assert_eq!(folds.iter().map(Vec::len).sum::<usize>(), 25);
        let c = cooccurrence(&back, &[0, 1, 2]).unwrap();
        for i in 0..3 {
            assert_eq!(c.values[i][i], 1.0);
        }
    }
}
