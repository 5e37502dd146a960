#![allow(dead_code)]

use oui_core::network::{loss, loss_and_grad, Activation, LayerSpec, Network, NetworkSpec, Padding};
use oui_core::tensor::{RngStream, Tensor};

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-6;

/// 3→4→5→2 network whose hidden pre-activations at [`toy_input`] have signs
/// (+,−,+,+) and (+,+,−,+,−).
pub fn toy_network() -> Network {
    let spec = NetworkSpec::mlp(3, &[4, 5], 2, Activation::Relu);
    let w1 = Tensor::from_rows(&[
        vec![1.0, 0.0, 0.0],
        vec![-1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ])
    .unwrap();
    let w2 = Tensor::from_rows(&[
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![-1.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
        vec![0.0, 0.0, -1.0, -1.0],
    ])
    .unwrap();
    let w3 = Tensor::from_rows(&[vec![1.0, 0.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0, 0.0]]).unwrap();
    let params = vec![
        w1,
        Tensor::zeros(&[4]),
        w2,
        Tensor::zeros(&[5]),
        w3,
        Tensor::zeros(&[2]),
    ];
    Network::from_params(spec, params).unwrap()
}

pub fn toy_input() -> Tensor {
    Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap()
}

pub const ACTIVATIONS: [Activation; 4] = [
    Activation::Relu,
    Activation::LeakyRelu { alpha: 0.1 },
    Activation::Gelu,
    Activation::Silu,
];

/// Small random network `k` of a fixed family: even `k` dense, odd `k`
/// convolutional, activations cycling through [`ACTIVATIONS`].
pub fn random_small_net(k: usize) -> (Network, Tensor, Vec<usize>) {
    let act = ACTIVATIONS[k % 4];
    let classes = 3;
    let m = 3;
    let mut rng = RngStream::new(1000 + k as u64);
    let (spec, input_shape) = if k % 2 == 0 {
        let d = 3 + k % 3;
        let spec = NetworkSpec::mlp(d, &[5, 4], classes, act);
        (spec, vec![d])
    } else {
        let padding = if k % 4 == 1 { Padding::Valid } else { Padding::Same };
        let (c, h, w) = (2, 5, 4);
        let (oh, ow) = match padding {
            Padding::Valid => (h - 2, w - 2),
            Padding::Same => (h, w),
        };
        let spec = NetworkSpec {
            input_shape: vec![c, h, w],
            layers: vec![
                LayerSpec::conv3x3(c, 3, padding, act),
                LayerSpec::dense(3 * oh * ow, 4, act),
                LayerSpec::dense(4, classes, Activation::None),
            ],
        };
        (spec, vec![c, h, w])
    };
    let mut net = Network::init(spec, &mut rng).unwrap();
    // non-zero biases so every parameter has a generic gradient
    for (i, p) in net.params_mut().iter_mut().enumerate() {
        if !Network::is_weight(i) {
            for b in p.data_mut() {
                *b = 0.1 * rng.normal();
            }
        }
    }
    let n: usize = input_shape.iter().product();
    let mut shape = vec![m];
    shape.extend(&input_shape);
    let batch = Tensor::new(shape, (0..m * n).map(|_| rng.normal()).collect()).unwrap();
    let labels = (0..m).map(|i| (i + k) % classes).collect();
    (net, batch, labels)
}

/// Largest relative disagreement between backprop and central differences
/// over every parameter entry.
pub fn max_grad_rel_error(net: &Network, batch: &Tensor, labels: &[usize], lambda: f64) -> f64 {
    let (_, grads) = loss_and_grad(net, batch, labels, lambda).unwrap();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (p, g) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let orig = probe.params()[p].data()[i];
            probe.params_mut()[p].data_mut()[i] = orig + FD_STEP;
            let up = loss(&probe, batch, labels, lambda).unwrap();
            probe.params_mut()[p].data_mut()[i] = orig - FD_STEP;
            let down = loss(&probe, batch, labels, lambda).unwrap();
            probe.params_mut()[p].data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * FD_STEP);
            let an = g.data()[i];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(FD_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}
