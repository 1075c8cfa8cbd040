use hmer_core::nnet::gradcheck::layer_suite;

#[test]
fn every_layer_matches_finite_differences() {
    for seed in 0..10 {
        for (layer, err) in layer_suite(seed, 1e-4).unwrap() {
            assert!(err < 1e-3, "seed {seed} {layer}: {err:e}");
        }
    }
}
