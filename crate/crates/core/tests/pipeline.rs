use std::io::Cursor;

use ndarray::Array2;
use proptest::prelude::*;

use ciae_core::autoencoder::encoding_dim;
use ciae_core::complexity::{f3_max_efficiency, n3_loo_1nn, Distance};
use ciae_core::dataset::read_csv;
use ciae_core::eval::cv::{cross_validate, CvSettings, Method};
use ciae_core::eval::report::{aggregate_rankings, fold_records, read_records_csv, write_records_csv};
use ciae_core::synth::Shape;
use ciae_core::{train, AeConfig, ClassifierSpec, Dataset, MethodOptions, MethodSpec, TrainedModel};

fn csv_text(data: &Dataset) -> String {
    let mut s = String::from("a,b,c,class\n");
    for (row, label) in data.features().rows().into_iter().zip(data.labels()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&format!("{},{}\n", cells.join(","), if label.is_positive() { "yes" } else { "no" }));
    }
    s
}

#[test]
fn csv_to_rankings() {
    let original = Shape::Informative.generate(60, 1, 2).unwrap();
    let data = read_csv(Cursor::new(csv_text(&original)), "inf", "yes", true).unwrap();
    assert_eq!(data.features(), original.features());
    assert_eq!(data.labels(), original.labels());

    let mut records = Vec::new();
    for spec in ["identity", "pca"] {
        let method = Method::new(spec.parse::<MethodSpec>().unwrap()).unwrap();
        let folds = cross_validate(
            &data,
            &method,
            &MethodOptions::default(),
            &[ClassifierSpec::knn(), ClassifierSpec::lssvm()],
            &CvSettings::default(),
        )
        .unwrap();
        for f in &folds {
            records.extend(fold_records("inf", spec, f));
        }
    }
    // 5 folds × (9 complexity + 2 classifiers × 3 metrics) per method
    assert_eq!(records.len(), 2 * 5 * 15);

    let mut buf = Vec::new();
    write_records_csv(&mut buf, &records).unwrap();
    let back = read_records_csv(buf.as_slice()).unwrap();
    assert_eq!(back, records);

    let rankings = aggregate_rankings(&back).unwrap();
    assert_eq!(rankings.methods, vec!["identity".to_string(), "pca".to_string()]);
    assert_eq!(rankings.rows_ranked, 9 + 2 * 3);
}

#[test]
fn checkpoint_round_trip_preserves_encoding() {
    let data = Shape::Ellipses.generate(80, 4, 5).unwrap();
    let model = train(&data, &AeConfig::new(ciae_core::PenaltySpec::slicer(1.0, 1.0)).with_seed(9).with_epochs(5)).unwrap();
    let restored = TrainedModel::read_checkpoint(model.checkpoint_bytes().as_slice()).unwrap();
    let x = data.features().view();
    assert_eq!(model.encode(x).unwrap(), restored.encode(x).unwrap());
    assert_eq!(restored.checkpoint_bytes(), model.checkpoint_bytes());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn encoding_dim_bounds(d in 1usize..500, n in 1usize..5000) {
        let e = encoding_dim(d, n);
        prop_assert!(e >= 2);
        prop_assert!(e <= ((d as f64).sqrt().round() as usize).max(2));
    }

    #[test]
    fn complexity_ignores_uniform_rescaling(seed in 0u64..1000, exponent in -4i32..5) {
        // powers of two scale exactly, so neighbour ties cannot flip through rounding
        let scale = 2f64.powi(exponent);
        let data = Shape::SmallDisjuncts.generate(40, 1, seed).unwrap();
        let scaled: Array2<f64> = data.features() * scale;
        let other = data.with_features(scaled).unwrap();
        prop_assert_eq!(n3_loo_1nn(&data, Distance::Euclidean), n3_loo_1nn(&other, Distance::Euclidean));
        prop_assert_eq!(f3_max_efficiency(&data), f3_max_efficiency(&other));
    }
}
