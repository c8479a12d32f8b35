use regaze::audit::check_gram_equivalence;
use regaze::eyegen::Dataset;
use regaze::protocol::LabelVector;
use regaze::ring::FixedPointCodec;
use regaze::transport::RandomnessSource;

fn signed_grid(n: usize, n_f: usize, magnitude: f64) -> Dataset {
    let features = (0..n)
        .map(|i| {
            (0..n_f)
                .map(|k| {
                    if (i * 31 + k * 7) % 3 == 0 {
                        -magnitude
                    } else {
                        magnitude
                    }
                })
                .collect()
        })
        .collect();
    Dataset::new(features, LabelVector::new(vec![[0.0, 0.0]; n])).unwrap()
}

#[test]
fn landmark_range_edge_is_exact() {
    let data = signed_grid(40, 36, 3.999);
    for source in [RandomnessSource::Seeded(1), RandomnessSource::Os] {
        let diff = check_gram_equivalence(&data, 3, source, FixedPointCodec::default()).unwrap();
        assert_eq!(diff, 0.0);
    }
}

#[test]
fn near_dot_bound_stays_close() {
    let codec = FixedPointCodec::default();
    let m = codec.dot_feature_bound(36) * 0.99;
    let data = signed_grid(10, 36, m);
    let diff = check_gram_equivalence(&data, 4, RandomnessSource::Seeded(2), codec).unwrap();
    // products carry more bits than an f64 mantissa here
    assert!(diff <= 36.0 * m * m * 1e-15, "{diff}");
}
