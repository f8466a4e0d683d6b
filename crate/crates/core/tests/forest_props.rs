use proptest::prelude::*;
use selqa_core::features::{FeatureMode, FeatureVector, LabeledExample};
use selqa_core::forest::{load_forest, read_forest, save_forest, train_forest, write_forest, ForestConfig};

fn data() -> impl Strategy<Value = Vec<LabeledExample>> {
    prop::collection::vec((prop::collection::vec(-5.0f64..5.0, 14), any::<bool>()), 4..60).prop_map(|rows| {
        rows.into_iter()
            .map(|(v, label)| LabeledExample {
                features: FeatureVector::new(v, FeatureMode::QuestionOnly).unwrap(),
                label,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn save_load_preserves_every_prediction(rows in data(), seed in any::<u64>(), depth in 1usize..8) {
        let cfg = ForestConfig { n_trees: 8, max_depth: depth, ..ForestConfig::with_seed(seed) };
        let f = train_forest(&rows, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_forest(&f, &path).unwrap();
        let g = load_forest(&path).unwrap();
        prop_assert_eq!(&f, &g);
        for ex in &rows {
            let a = f.predict_score(&ex.features).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert_eq!(a.to_bits(), g.predict_score(&ex.features).unwrap().to_bits());
        }
        prop_assert_eq!(write_forest(&g).unwrap(), std::fs::read(&path).unwrap());
    }

    #[test]
    fn training_is_a_function_of_data_and_seed(rows in data(), seed in any::<u64>()) {
        let cfg = ForestConfig { n_trees: 5, ..ForestConfig::with_seed(seed) };
        let a = write_forest(&train_forest(&rows, &cfg).unwrap()).unwrap();
        let b = write_forest(&train_forest(&rows, &cfg).unwrap()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(read_forest(&a[..a.len() - 2]).is_err());
    }
}
