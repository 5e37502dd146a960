mod common;

use oui_core::network::{forward, Activation, Network, NetworkSpec};
use oui_core::oui::{hamming_normalized, oui_network, PairSamplePolicy};
use oui_core::tensor::{RngStream, Tensor};
use proptest::prelude::*;

#[test]
fn toy_network_patterns() {
    let fwd = forward(&common::toy_network(), &common::toy_input(), true).unwrap();
    assert_eq!(fwd.record.layers[0].row(0), vec![1, 0, 1, 1]);
    assert_eq!(fwd.record.layers[1].row(0), vec![1, 1, 0, 1, 0]);
}

#[test]
fn worked_hamming_example() {
    assert_eq!(hamming_normalized(&[0, 1, 0, 0], &[1, 1, 0, 0]).unwrap(), 0.25);
}

#[test]
fn backprop_matches_finite_differences() {
    for k in 0..20 {
        let (net, batch, labels) = common::random_small_net(k);
        let err = common::max_grad_rel_error(&net, &batch, &labels, 1e-3);
        assert!(err <= 1e-4, "net {k}: relative error {err}");
    }
}

fn bias_free(spec: NetworkSpec, seed: u64) -> Network {
    let mut net = Network::init(spec, &mut RngStream::new(seed)).unwrap();
    for (i, p) in net.params_mut().iter_mut().enumerate() {
        if !Network::is_weight(i) {
            p.data_mut().fill(0.0);
        }
    }
    net
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bias_free_relu_patterns_are_scale_invariant(
        seed in 0u64..1000,
        x in proptest::collection::vec(-2.0f64..2.0, 12),
        scale in 0.01f64..100.0,
    ) {
        let net = bias_free(NetworkSpec::mlp(4, &[6, 5], 3, Activation::Relu), seed);
        let a = Tensor::new(vec![3, 4], x.clone()).unwrap();
        let b = Tensor::new(vec![3, 4], x.iter().map(|v| v * scale).collect()).unwrap();
        let pa = forward(&net, &a, true).unwrap().record;
        let pb = forward(&net, &b, true).unwrap().record;
        prop_assert_eq!(pa, pb);
    }

    #[test]
    fn network_oui_in_unit_interval(seed in 0u64..1000, m in 2usize..12) {
        let net = Network::init(NetworkSpec::mlp(5, &[7, 6], 2, Activation::Relu), &mut RngStream::new(seed)).unwrap();
        let mut rng = RngStream::new(seed + 1);
        let batch = Tensor::new(vec![m, 5], (0..5 * m).map(|_| rng.normal()).collect()).unwrap();
        let rec = forward(&net, &batch, true).unwrap().record;
        let v = oui_network(&rec, &PairSamplePolicy::exhaustive(1), &mut rng).unwrap().network;
        prop_assert!((0.0..=1.0).contains(&v));
    }
}
