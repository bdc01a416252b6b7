use otfs_nn::layer::{BatchNorm2d, Conv2d, Dense, Dropout, Flatten, LeakyRelu, MaxPool2d, Relu, Sigmoid, Tanh};
use otfs_nn::{bce_loss, grad_check, mse_loss, GradCheckConfig, Layer, Mode, Network, Result, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Widen weights from the 0.02 init scale so gradients are well away from zero.
fn rescale_params(net: &mut Network<f64>, rng: &mut ChaCha8Rng) {
    for p in net.params() {
        *p.value = Tensor::randn(p.value.shape(), 0.5, rng).map(|v| v + 0.1);
    }
}

fn mse_against(target: Tensor<f64>) -> impl Fn(&Tensor<f64>) -> Result<(f64, Tensor<f64>)> {
    move |out| mse_loss(out, &target)
}

fn check(mut net: Network<f64>, input_shape: &[usize], seed: u64) -> f64 {
    let mut r = rng(seed);
    rescale_params(&mut net, &mut r);
    let x = Tensor::randn(input_shape, 1.0, &mut r);
    let out_shape = net.shape_trace(input_shape).unwrap().pop().unwrap();
    let target = Tensor::randn(&out_shape, 1.0, &mut r);
    let report = grad_check(&mut net, &x, mse_against(target), GradCheckConfig::default()).unwrap();
    assert!(report.checked > 0);
    report.max_relative_error
}

#[test]
fn every_layer_kind_passes_gradient_check() {
    let mut r = rng(1);
    let cases: Vec<(&str, Vec<Layer<f64>>, Vec<usize>)> = vec![
        (
            "conv2d",
            vec![Layer::Conv2d(Conv2d::new(2, 3, 3, 1, 1, &mut r))],
            vec![2, 2, 5, 5],
        ),
        (
            "conv2d_strided",
            vec![Layer::Conv2d(Conv2d::new(2, 3, 4, 2, 1, &mut r))],
            vec![2, 2, 6, 6],
        ),
        (
            "batchnorm2d",
            vec![Layer::BatchNorm2d(BatchNorm2d::new(2))],
            vec![3, 2, 3, 3],
        ),
        ("dense", vec![Layer::Dense(Dense::new(6, 4, &mut r))], vec![3, 6]),
        ("relu", vec![Layer::Relu(Relu::new())], vec![2, 7]),
        ("leaky_relu", vec![Layer::LeakyRelu(LeakyRelu::new(0.2))], vec![2, 7]),
        ("tanh", vec![Layer::Tanh(Tanh::new())], vec![2, 7]),
        ("sigmoid", vec![Layer::Sigmoid(Sigmoid::new())], vec![2, 7]),
        (
            "maxpool2d",
            vec![Layer::MaxPool2d(MaxPool2d::new(2, 2))],
            vec![2, 2, 5, 5],
        ),
        (
            "dropout",
            vec![Layer::Dropout(Dropout::new(0.3, 9).unwrap())],
            vec![2, 11],
        ),
        ("flatten", vec![Layer::Flatten(Flatten::new())], vec![2, 2, 3, 3]),
    ];
    for (i, (name, layers, shape)) in cases.into_iter().enumerate() {
        let err = check(Network::new(layers), &shape, 100 + i as u64);
        println!("{name}: {err:.3e}");
        assert!(err < TOL, "{name}: {err}");
    }
}

#[test]
fn inference_mode_batchnorm_gradient() {
    let mut net = Network::new(vec![Layer::BatchNorm2d(BatchNorm2d::<f64>::new(2))]);
    net.set_mode(Mode::Infer);
    assert!(check(net, &[2, 2, 3, 3], 7) < TOL);
}

#[test]
fn two_layer_dense_network() {
    let mut r = rng(2);
    let net = Network::new(vec![
        Layer::Dense(Dense::new(5, 8, &mut r)),
        Layer::Tanh(Tanh::new()),
        Layer::Dense(Dense::new(8, 3, &mut r)),
    ]);
    assert!(check(net, &[4, 5], 21) < TOL);
}

#[test]
fn conv_bn_pool_stack() {
    let mut r = rng(3);
    let net = Network::new(vec![
        Layer::Conv2d(Conv2d::new(1, 3, 3, 1, 1, &mut r)),
        Layer::BatchNorm2d(BatchNorm2d::new(3)),
        Layer::Relu(Relu::new()),
        Layer::MaxPool2d(MaxPool2d::new(2, 2)),
        Layer::Flatten(Flatten::new()),
        Layer::Dense(Dense::new(3 * 3 * 3, 2, &mut r)),
    ]);
    assert!(check(net, &[3, 1, 6, 6], 31) < TOL);
}

#[test]
fn linear_network_with_mse_is_exact() {
    let mut r = rng(4);
    let mut net = Network::new(vec![Layer::Dense(Dense::<f64>::new(4, 3, &mut r))]);
    rescale_params(&mut net, &mut r);
    let x = Tensor::randn(&[5, 4], 1.0, &mut r);
    let target = Tensor::randn(&[5, 3], 1.0, &mut r);
    // central differences are exact on a quadratic for any step, so a wide
    // step keeps cancellation error out of the comparison
    let cfg = GradCheckConfig {
        step: 1e-2,
        ..GradCheckConfig::default()
    };
    let report = grad_check(&mut net, &x, mse_against(target), cfg).unwrap();
    assert!(report.max_relative_error < 1e-10, "{report:?}");
}

#[test]
fn sigmoid_head_with_bce() {
    let mut r = rng(5);
    let mut net = Network::new(vec![
        Layer::Dense(Dense::<f64>::new(6, 1, &mut r)),
        Layer::Sigmoid(Sigmoid::new()),
    ]);
    rescale_params(&mut net, &mut r);
    let x = Tensor::randn(&[4, 6], 1.0, &mut r);
    let labels = Tensor::new(vec![4, 1], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    let report = grad_check(&mut net, &x, |out| bce_loss(out, &labels), GradCheckConfig::default()).unwrap();
    assert!(report.max_relative_error < TOL, "{report:?}");
}

#[test]
fn identical_seeds_give_bit_identical_training() {
    let run = || {
        let mut r = rng(6);
        let mut net = Network::new(vec![
            Layer::Conv2d(Conv2d::<f32>::new(1, 2, 3, 1, 1, &mut r)),
            Layer::BatchNorm2d(BatchNorm2d::new(2)),
            Layer::Relu(Relu::new()),
            Layer::Dropout(Dropout::new(0.3, 17).unwrap()),
            Layer::Flatten(Flatten::new()),
            Layer::Dense(Dense::new(2 * 16, 1, &mut r)),
        ]);
        let mut adam = otfs_nn::Adam::new(otfs_nn::AdamConfig::default());
        let x = Tensor::randn(&[3, 1, 4, 4], 1.0, &mut r);
        let y = Tensor::randn(&[3, 1], 1.0, &mut r);
        let mut losses = Vec::new();
        for _ in 0..5 {
            net.zero_grad();
            let out = net.forward(&x).unwrap();
            let (l, g) = mse_loss(&out, &y).unwrap();
            net.backward(&g).unwrap();
            adam.step(&mut net.params());
            losses.push(l.to_bits());
        }
        (losses, net.params().iter().map(|p| p.value.clone()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}
