use isomer::codec::reference;
use isomer::codec::CodecId;
use isomer::evaluation::{evaluate, Method};
use isomer::features::FeatureTensor;
use isomer::frame::Plane;
use isomer::geometry::make_grid;
use isomer::oracle::{normalized_sizes, reduction, relative_sizes, ClipId, SizeTable};
use isomer::predictor::checkpoint::{model_from_bytes, model_to_bytes};
use isomer::predictor::{select_orientation, ModelConfig, PredictorModel, TargetScale};
use proptest::prelude::*;

fn planes() -> impl Strategy<Value = Vec<Plane>> {
    (1usize..4, 1usize..5, 1usize..4).prop_flat_map(|(w8, h8, n)| {
        let (w, h) = (w8 * 8 + 3, h8 * 8 + 1);
        prop::collection::vec(prop::collection::vec(any::<u8>(), w * h), n).prop_map(
            move |frames| {
                frames
                    .into_iter()
                    .map(|d| Plane::new(w, h, d).unwrap())
                    .collect()
            },
        )
    })
}

fn table(sizes: Vec<u64>) -> SizeTable {
    SizeTable::new(
        make_grid(45.0, 45.0, 45.0).unwrap(),
        sizes,
        CodecId::Reference,
        ClipId::new("v", 0),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn codec_round_trips(p in planes()) {
        let enc = reference::encode(&p).unwrap();
        prop_assert_eq!(reference::decode(&enc.bitstream).unwrap(), p);
    }

    #[test]
    fn metric_invariants(sizes in prop::collection::vec(1u64..1_000_000, 9), shift in 0u64..1000) {
        let t = table(sizes.clone());
        let r = reduction(&t);
        prop_assert!((0.0..100.0).contains(&r));
        let n = normalized_sizes(&t);
        prop_assert!(n.values.iter().all(|v| (0.0..=100.0).contains(v)));
        if !n.degenerate {
            prop_assert_eq!(n.values[t.argmin()], 0.0);
            prop_assert_eq!(n.values[t.argmax()], 100.0);
        }
        let rel = relative_sizes(&t).unwrap();
        prop_assert_eq!(rel[t.grid.center_index()], 0);
        let shifted = table(sizes.iter().map(|s| s + shift).collect());
        prop_assert_eq!(relative_sizes(&shifted).unwrap(), rel);
    }

    #[test]
    fn scores_are_bounded(tables in prop::collection::vec(prop::collection::vec(1u64..5000, 9), 1..5), seed in any::<u64>()) {
        let tables: Vec<SizeTable> = tables
            .into_iter()
            .enumerate()
            .map(|(i, s)| SizeTable::new(make_grid(45.0, 45.0, 45.0).unwrap(), s, CodecId::Reference, ClipId::new(format!("v{i}"), 0)).unwrap())
            .collect();
        let (oracle, _) = evaluate(Method::Oracle, &tables, None, seed, 1).unwrap();
        prop_assert!((oracle.r_tilde - 100.0).abs() < 1e-12);
        for m in [Method::Center, Method::Random] {
            let (s, _) = evaluate(m, &tables, None, seed, 20).unwrap();
            prop_assert!((0.0..=100.0 + 1e-9).contains(&s.r_tilde));
        }
    }

    #[test]
    fn selection_is_the_first_minimum(values in prop::collection::vec(0i32..4, 9)) {
        let grid = make_grid(45.0, 45.0, 45.0).unwrap();
        let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        let o = select_orientation(&v, &grid).unwrap();
        let first = v.iter().position(|&x| x == v.iter().cloned().fold(f64::INFINITY, f64::min)).unwrap();
        prop_assert_eq!(o, grid.get(first));
    }
}

#[test]
fn checkpoint_round_trip_keeps_outputs_bit_identical() {
    let cfg = ModelConfig {
        channels: vec![4, 8],
        ..ModelConfig::for_input(8, 12)
    };
    let m = PredictorModel::new(
        cfg,
        TargetScale {
            min: -3.0,
            max: 9.0,
        },
        21,
    )
    .unwrap();
    let back = model_from_bytes(&model_to_bytes(&m).unwrap()).unwrap();
    let mut x = FeatureTensor::zeros(8, 12);
    x.data
        .iter_mut()
        .enumerate()
        .for_each(|(i, v)| *v = (i % 13) as f32 / 13.0);
    let a: Vec<u64> = m.predict(&x).unwrap().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = back
        .predict(&x)
        .unwrap()
        .iter()
        .map(|v| v.to_bits())
        .collect();
    assert_eq!(a, b);
}
