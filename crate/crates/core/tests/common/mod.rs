//! Shared helpers for the integration tests: a straight-line reference
//! forward pass and random small networks.
#![allow(dead_code)]

use linksight::nn::{Activation, LayerSpec, Network, NetworkConfig, NetworkState, Tensor};
use linksight::seed;
use rand::Rng;

fn act(v: f64, a: Activation) -> f64 {
    match a {
        Activation::Relu => {
            if v > 0.0 {
                v
            } else {
                0.0
            }
        }
        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
    }
}

/// Reference forward pass written with plain nested loops, independent of the
/// library's im2col and spectral paths. Returns the output scores.
pub fn naive_forward(cfg: &NetworkConfig, state: &NetworkState, image: &[f64]) -> Vec<f64> {
    let (mut c, mut h, mut w) = (cfg.input_channels, cfg.input_size, cfg.input_size);
    let mut x = image.to_vec();
    for (layer, p) in cfg.layers.iter().zip(&state.layers) {
        match *layer {
            LayerSpec::Conv {
                filters,
                kernel: (kr, kc),
                stride: (sr, sc),
                padding: (pr, pc),
                activation,
            } => {
                let ho = (h + 2 * pr - kr) / sr + 1;
                let wo = (w + 2 * pc - kc) / sc + 1;
                let mut y = vec![0.0; filters * ho * wo];
                for f in 0..filters {
                    for i in 0..ho {
                        for j in 0..wo {
                            let mut z = p.bias[f];
                            for ch in 0..c {
                                for a in 0..kr {
                                    for b in 0..kc {
                                        let r = (i * sr + a) as isize - pr as isize;
                                        let q = (j * sc + b) as isize - pc as isize;
                                        if r < 0 || q < 0 || r >= h as isize || q >= w as isize {
                                            continue;
                                        }
                                        let xv = x[(ch * h + r as usize) * w + q as usize];
                                        z += p.weights[((f * c + ch) * kr + a) * kc + b] * xv;
                                    }
                                }
                            }
                            y[(f * ho + i) * wo + j] = act(z, activation);
                        }
                    }
                }
                x = y;
                (c, h, w) = (filters, ho, wo);
            }
            LayerSpec::MaxPool {
                size: (kr, kc),
                stride: (sr, sc),
            } => {
                let ho = (h - kr) / sr + 1;
                let wo = (w - kc) / sc + 1;
                let mut y = vec![f64::NEG_INFINITY; c * ho * wo];
                for ch in 0..c {
                    for i in 0..ho {
                        for j in 0..wo {
                            for a in 0..kr {
                                for b in 0..kc {
                                    let v = x[(ch * h + i * sr + a) * w + j * sc + b];
                                    let o = &mut y[(ch * ho + i) * wo + j];
                                    if v > *o {
                                        *o = v;
                                    }
                                }
                            }
                        }
                    }
                }
                x = y;
                (h, w) = (ho, wo);
            }
            LayerSpec::Flatten => {
                (c, h, w) = (1, 1, c * h * w);
            }
            LayerSpec::Dense { units, activation } => {
                let n = x.len();
                let y = (0..units)
                    .map(|u| {
                        let z = p.bias[u] + (0..n).map(|k| p.weights[u * n + k] * x[k]).sum::<f64>();
                        act(z, activation)
                    })
                    .collect();
                x = y;
                (c, h, w) = (1, 1, units);
            }
        }
    }
    x
}

fn conv(filters: usize, kernel: (usize, usize), stride: (usize, usize), padding: (usize, usize), activation: Activation) -> LayerSpec {
    LayerSpec::Conv {
        filters,
        kernel,
        stride,
        padding,
        activation,
    }
}

/// Small 8×8 topologies that together use every layer kind: 3×3 and strided
/// convolutions, spectral convolutions (kernels of 5×5 and larger, with and
/// without padding), sigmoid hidden units, overlapping and plain pooling, and
/// dense layers with one or five outputs.
pub fn small_configs() -> Vec<NetworkConfig> {
    use Activation::{Relu, Sigmoid};
    let net = |layers: Vec<LayerSpec>, num_classes| NetworkConfig {
        input_size: 8,
        input_channels: 1,
        layers,
        num_classes,
    };
    vec![
        net(
            vec![
                conv(2, (3, 3), (1, 1), (0, 0), Relu),
                LayerSpec::maxpool(2),
                LayerSpec::Flatten,
                LayerSpec::dense(4, Relu),
                LayerSpec::dense(5, Sigmoid),
            ],
            5,
        ),
        net(
            vec![
                conv(3, (5, 5), (1, 1), (0, 0), Relu),
                LayerSpec::Flatten,
                LayerSpec::dense(1, Sigmoid),
            ],
            1,
        ),
        net(
            vec![
                conv(2, (3, 3), (1, 1), (1, 1), Relu),
                conv(2, (5, 5), (1, 1), (2, 2), Sigmoid),
                LayerSpec::MaxPool {
                    size: (2, 2),
                    stride: (1, 1),
                },
                LayerSpec::Flatten,
                LayerSpec::dense(3, Sigmoid),
                LayerSpec::dense(5, Sigmoid),
            ],
            5,
        ),
        net(
            vec![
                conv(2, (7, 5), (1, 1), (1, 0), Relu),
                conv(2, (2, 2), (2, 2), (0, 0), Relu),
                LayerSpec::Flatten,
                LayerSpec::dense(5, Sigmoid),
            ],
            5,
        ),
        net(
            vec![LayerSpec::Flatten, LayerSpec::dense(6, Relu), LayerSpec::dense(5, Sigmoid)],
            5,
        ),
    ]
}

/// Network with seeded random weights and biases, and a random image.
pub fn random_instance(cfg: &NetworkConfig, seed_value: u64) -> (Network, Tensor) {
    let mut net = Network::initialized(cfg.clone(), seed_value).expect("valid config");
    let mut rng = seed::rng_for(seed_value, "test-instance");
    for layer in &mut net.state.layers {
        for b in &mut layer.bias {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    let n = cfg.input_size;
    let image = Tensor::from_image(n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("square image");
    (net, image)
}

/// Largest relative error between analytic parameter and input gradients of
/// the weighted loss and central differences with step `h`. Each error is
/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps gradients that are zero
/// up to rounding from dividing by rounding noise.
pub fn max_gradient_error(net: &Network, image: &Tensor, class: usize, h: f64, floor: f64) -> f64 {
    let classes = net.config.label_classes();
    let weights = vec![1.0; classes];
    let grads = net.gradients(image, class, &weights).expect("gradients");
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(floor);
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for (li, layer) in grads.layers.iter().enumerate() {
        for (wi, &a) in layer.weights.iter().enumerate() {
            let orig = probe.state.layers[li].weights[wi];
            probe.state.layers[li].weights[wi] = orig + h;
            let up = probe.loss(image, class, &weights).expect("loss");
            probe.state.layers[li].weights[wi] = orig - h;
            let down = probe.loss(image, class, &weights).expect("loss");
            probe.state.layers[li].weights[wi] = orig;
            worst = worst.max(rel(a, (up - down) / (2.0 * h)));
        }
        for (bi, &a) in layer.bias.iter().enumerate() {
            let orig = probe.state.layers[li].bias[bi];
            probe.state.layers[li].bias[bi] = orig + h;
            let up = probe.loss(image, class, &weights).expect("loss");
            probe.state.layers[li].bias[bi] = orig - h;
            let down = probe.loss(image, class, &weights).expect("loss");
            probe.state.layers[li].bias[bi] = orig;
            worst = worst.max(rel(a, (up - down) / (2.0 * h)));
        }
    }
    let dx = net.input_gradient(image, class, &weights).expect("input gradient");
    let mut x = image.clone();
    for (i, &a) in dx.iter().enumerate() {
        let orig = x.data[i];
        x.data[i] = orig + h;
        let up = net.loss(&x, class, &weights).expect("loss");
        x.data[i] = orig - h;
        let down = net.loss(&x, class, &weights).expect("loss");
        x.data[i] = orig;
        worst = worst.max(rel(a, (up - down) / (2.0 * h)));
    }
    worst
}
