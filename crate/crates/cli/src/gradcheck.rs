//! Finite-difference checks of every layer kind and of the three
//! architectures at reduced width, all in f64.

use otfs_nn::layer::{BatchNorm2d, Conv2d, Dense, Dropout, Flatten, LeakyRelu, MaxPool2d, Relu, Sigmoid, Tanh};
use otfs_nn::{bce_loss, grad_check, mse_loss, GradCheckConfig, Layer, Mode, Network, Tensor};
use otfs_radar::models::{discriminator_layers, generator_layers, predictor_layers};
use otfs_radar::rng::seeded;
use otfs_radar::Widths;

/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradRow {
    pub name: &'static str,
    pub max_relative_error: f64,
    pub worst: String,
    pub checked: usize,
}

impl GradRow {
    pub fn passed(&self) -> bool {
        self.max_relative_error < TOLERANCE
    }
}

enum Loss {
    Mse,
    Bce,
}

/// Widens the weights away from the 0.02 init so that gradients are well
/// above rounding noise and few ReLU inputs sit near their kink.
fn run(name: &'static str, layers: Vec<Layer<f64>>, shape: &[usize], loss: Loss, floor: f64, seed: u64) -> GradRow {
    let mut net = Network::new(layers);
    let mut rng = seeded(seed);
    for p in net.params() {
        *p.value = Tensor::randn(p.value.shape(), 0.5, &mut rng).map(|v| v + 0.1);
    }
    net.set_mode(Mode::Train);
    let x = Tensor::randn(shape, 0.5, &mut rng);
    let out = net
        .shape_trace(shape)
        .expect("valid input shape")
        .pop()
        .unwrap_or_default();
    let target = match loss {
        Loss::Mse => Tensor::randn(&out, 0.5, &mut rng),
        Loss::Bce => Tensor::from_fn(&out, |i| (i % 2) as f64),
    };
    let cfg = GradCheckConfig {
        floor,
        ..GradCheckConfig::default()
    };
    let report = grad_check(
        &mut net,
        &x,
        |o| match loss {
            Loss::Mse => mse_loss(o, &target),
            Loss::Bce => bce_loss(o, &target),
        },
        cfg,
    )
    .expect("gradient check runs");
    GradRow {
        name,
        max_relative_error: report.max_relative_error,
        worst: report.worst,
        checked: report.checked,
    }
}

/// Every layer kind on small inputs, then the generator, discriminator and
/// predictor on 28×28 maps.
pub fn suite() -> Vec<GradRow> {
    let mut r = seeded(1);
    let small: Vec<(&'static str, Layer<f64>, Vec<usize>)> = vec![
        (
            "conv2d",
            Layer::Conv2d(Conv2d::new(2, 3, 3, 1, 1, &mut r)),
            vec![2, 2, 5, 5],
        ),
        (
            "conv2d_stride2",
            Layer::Conv2d(Conv2d::new(2, 3, 4, 2, 1, &mut r)),
            vec![2, 2, 6, 6],
        ),
        ("batchnorm2d", Layer::BatchNorm2d(BatchNorm2d::new(2)), vec![3, 2, 3, 3]),
        ("dense", Layer::Dense(Dense::new(6, 4, &mut r)), vec![3, 6]),
        ("relu", Layer::Relu(Relu::new()), vec![2, 7]),
        ("leaky_relu", Layer::LeakyRelu(LeakyRelu::new(0.2)), vec![2, 7]),
        ("tanh", Layer::Tanh(Tanh::new()), vec![2, 7]),
        ("sigmoid", Layer::Sigmoid(Sigmoid::new()), vec![2, 7]),
        ("maxpool2d", Layer::MaxPool2d(MaxPool2d::new(2, 2)), vec![2, 2, 5, 5]),
        (
            "dropout",
            Layer::Dropout(Dropout::new(0.3, 9).expect("valid rate")),
            vec![2, 11],
        ),
        ("flatten", Layer::Flatten(Flatten::new()), vec![2, 2, 3, 3]),
    ];
    let mut rows: Vec<GradRow> = small
        .into_iter()
        .enumerate()
        .map(|(i, (name, layer, shape))| run(name, vec![layer], &shape, Loss::Mse, 1e-6, 100 + i as u64))
        .collect();

    // The loss averages over ~1.5k outputs here, so central differences
    // carry ~1e-10 absolute noise; the floor keeps such entries out of the ratio.
    let w = Widths::reduced();
    let floor = 1e-5;
    rows.push(run(
        "generator",
        generator_layers(&w, 1),
        &[2, 1, 28, 28],
        Loss::Mse,
        floor,
        200,
    ));
    rows.push(run(
        "discriminator",
        discriminator_layers(&w, 28, 28, 2),
        &[3, 1, 28, 28],
        Loss::Bce,
        floor,
        201,
    ));
    rows.push(run(
        "predictor",
        predictor_layers(&w, 28, 28, 2, 3).expect("valid predictor"),
        &[2, 1, 28, 28],
        Loss::Mse,
        floor,
        202,
    ));
    rows
}
