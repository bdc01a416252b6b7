//! Generator, discriminator and predictor networks with their training loops.
//!
//! Maps enter the networks as `[batch, 1, N, M]` tensors of normalized
//! magnitudes (height = Doppler, width = delay).

use otfs_nn::layer::{BatchNorm2d, Conv2d, Dense, Dropout, Flatten, LeakyRelu, MaxPool2d, Relu, Sigmoid, Tanh};
use otfs_nn::{bce_loss, mse_loss, Adam, AdamConfig, Layer, Mode, Network, Scalar, Tensor};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{seeded, sub_seed};

/// Channel counts of every stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Widths {
    pub generator: [usize; 2],
    pub discriminator: [usize; 3],
    pub predictor_conv: [usize; 3],
    pub predictor_dense: [usize; 2],
}

impl Widths {
    pub const fn full() -> Self {
        Self {
            generator: [64, 128],
            discriminator: [64, 128, 256],
            predictor_conv: [32, 64, 128],
            predictor_dense: [512, 256],
        }
    }

    /// Same topology with a handful of channels, small enough for
    /// finite-difference checks.
    pub const fn reduced() -> Self {
        Self {
            generator: [3, 4],
            discriminator: [3, 4, 4],
            predictor_conv: [2, 3, 4],
            predictor_dense: [6, 5],
        }
    }
}

impl Default for Widths {
    fn default() -> Self {
        Self::full()
    }
}

pub const LEAKY_SLOPE: f64 = 0.2;
pub const DROPOUT_RATE: f64 = 0.3;

/// conv(3×3)+bn+relu ×2, conv(3×3 → 1)+tanh; spatial size preserved.
pub fn generator_layers<T: Scalar>(w: &Widths, seed: u64) -> Vec<Layer<T>> {
    let mut rng = seeded(seed);
    let [c1, c2] = w.generator;
    vec![
        Layer::Conv2d(Conv2d::new(1, c1, 3, 1, 1, &mut rng)),
        Layer::BatchNorm2d(BatchNorm2d::new(c1)),
        Layer::Relu(Relu::new()),
        Layer::Conv2d(Conv2d::new(c1, c2, 3, 1, 1, &mut rng)),
        Layer::BatchNorm2d(BatchNorm2d::new(c2)),
        Layer::Relu(Relu::new()),
        Layer::Conv2d(Conv2d::new(c2, 1, 3, 1, 1, &mut rng)),
        Layer::Tanh(Tanh::new()),
    ]
}

/// Three stride-2 convs (4×4, 4×4, 3×3; all pad 1) with leaky ReLU, batch
/// norm on the last two, then a sigmoid dense head.
pub fn discriminator_layers<T: Scalar>(w: &Widths, h: usize, wd: usize, seed: u64) -> Vec<Layer<T>> {
    let mut rng = seeded(seed);
    let [c1, c2, c3] = w.discriminator;
    let down = |x: usize, k: usize| (x + 2 - k) / 2 + 1;
    let (fh, fw) = (down(down(down(h, 4), 4), 3), down(down(down(wd, 4), 4), 3));
    vec![
        Layer::Conv2d(Conv2d::new(1, c1, 4, 2, 1, &mut rng)),
        Layer::LeakyRelu(LeakyRelu::new(LEAKY_SLOPE)),
        Layer::Conv2d(Conv2d::new(c1, c2, 4, 2, 1, &mut rng)),
        Layer::BatchNorm2d(BatchNorm2d::new(c2)),
        Layer::LeakyRelu(LeakyRelu::new(LEAKY_SLOPE)),
        Layer::Conv2d(Conv2d::new(c2, c3, 3, 2, 1, &mut rng)),
        Layer::BatchNorm2d(BatchNorm2d::new(c3)),
        Layer::LeakyRelu(LeakyRelu::new(LEAKY_SLOPE)),
        Layer::Flatten(Flatten::new()),
        Layer::Dense(Dense::new(c3 * fh * fw, 1, &mut rng)),
        Layer::Sigmoid(Sigmoid::new()),
    ]
}

/// Three [conv(3×3, same)+bn+relu+maxpool(2)+dropout] blocks, then
/// dense+relu ×2 and a linear `2P` head.
pub fn predictor_layers<T: Scalar>(
    w: &Widths,
    h: usize,
    wd: usize,
    targets: usize,
    seed: u64,
) -> Result<Vec<Layer<T>>> {
    let mut rng = seeded(seed);
    let mut layers = Vec::new();
    let (mut fh, mut fw, mut cin) = (h, wd, 1);
    for (i, &c) in w.predictor_conv.iter().enumerate() {
        layers.push(Layer::Conv2d(Conv2d::new(cin, c, 3, 1, 1, &mut rng)));
        layers.push(Layer::BatchNorm2d(BatchNorm2d::new(c)));
        layers.push(Layer::Relu(Relu::new()));
        layers.push(Layer::MaxPool2d(MaxPool2d::new(2, 2)));
        layers.push(Layer::Dropout(Dropout::new(
            DROPOUT_RATE,
            sub_seed(seed, 100 + i as u64),
        )?));
        fh /= 2;
        fw /= 2;
        cin = c;
    }
    let [d1, d2] = w.predictor_dense;
    layers.push(Layer::Flatten(Flatten::new()));
    layers.push(Layer::Dense(Dense::new(cin * fh * fw, d1, &mut rng)));
    layers.push(Layer::Relu(Relu::new()));
    layers.push(Layer::Dense(Dense::new(d1, d2, &mut rng)));
    layers.push(Layer::Relu(Relu::new()));
    layers.push(Layer::Dense(Dense::new(d2, 2 * targets, &mut rng)));
    Ok(layers)
}

/// Heights of the successive 4D activations, with repeats collapsed.
pub fn spatial_trace<T: Scalar>(net: &Network<T>, input: &[usize]) -> Result<Vec<usize>> {
    let mut trace: Vec<usize> = Vec::new();
    for shape in net.shape_trace(input)? {
        if shape.len() == 4 && trace.last() != Some(&shape[2]) {
            trace.push(shape[2]);
        }
    }
    Ok(trace)
}

fn expect_trace<T: Scalar>(net: &Network<T>, input: &[usize], want: &[usize], what: &str) -> Result<()> {
    let got = spatial_trace(net, input)?;
    if got != want {
        return Err(Error::InvalidParams(format!(
            "{what} spatial trace {got:?}, expected {want:?}"
        )));
    }
    Ok(())
}

fn pool_trace(h: usize, blocks: usize) -> Vec<usize> {
    let mut t = vec![h];
    for _ in 0..blocks {
        t.push(t[t.len() - 1] / 2);
    }
    t
}

fn stride_trace(h: usize) -> Vec<usize> {
    let down = |x: usize, k: usize| (x + 2 - k) / 2 + 1;
    let (a, b) = (down(h, 4), down(down(h, 4), 4));
    vec![h, a, b, down(b, 3)]
}

/// Stacks row-major maps into a `[batch, 1, h, w]` tensor.
pub fn maps_to_tensor(maps: &[&[f32]], h: usize, w: usize) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(maps.len() * h * w);
    for m in maps {
        if m.len() != h * w {
            return Err(Error::DimensionMismatch {
                context: "map size (N·M)",
                expected: h * w,
                actual: m.len(),
            });
        }
        data.extend_from_slice(m);
    }
    Ok(Tensor::new(vec![maps.len(), 1, h, w], data)?)
}

fn split_rows(t: &Tensor<f32>) -> Vec<Vec<f32>> {
    let per = t.len() / t.shape()[0].max(1);
    t.data().chunks(per.max(1)).map(|c| c.to_vec()).collect()
}

/// Stage-one denoiser.
#[derive(Clone, Debug)]
pub struct GeneratorNet<T: Scalar = f32> {
    pub net: Network<T>,
    pub height: usize,
    pub width: usize,
}

impl<T: Scalar> GeneratorNet<T> {
    pub fn new(h: usize, w: usize, widths: &Widths, seed: u64) -> Result<Self> {
        Self::from_network(Network::new(generator_layers(widths, seed)), h, w)
    }

    /// Wraps a loaded network after checking that it keeps the map size.
    pub fn from_network(net: Network<T>, h: usize, w: usize) -> Result<Self> {
        expect_trace(&net, &[1, 1, h, w], &[h], "generator")?;
        let out = net.shape_trace(&[1, 1, h, w])?.pop().unwrap_or_default();
        if out != [1, 1, h, w] {
            return Err(Error::InvalidParams(format!("generator output {out:?}")));
        }
        Ok(Self {
            net,
            height: h,
            width: w,
        })
    }

    /// Inference-mode forward pass.
    pub fn denoise(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let s = input.shape();
        if s.len() != 4 || s[1] != 1 || s[2] != self.height || s[3] != self.width {
            return Err(Error::InvalidParams(format!(
                "denoise expects [B, 1, {}, {}], got {s:?}",
                self.height, self.width
            )));
        }
        let mode = self.net.mode();
        self.net.set_mode(Mode::Infer);
        let out = self.net.forward(input);
        self.net.set_mode(mode);
        self.net.clear_cache();
        Ok(out?)
    }
}

impl GeneratorNet<f32> {
    /// Denoises many maps in chunks of `batch`.
    pub fn denoise_maps(&mut self, maps: &[&[f32]], batch: usize) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::with_capacity(maps.len());
        for chunk in maps.chunks(batch.max(1)) {
            let x = maps_to_tensor(chunk, self.height, self.width)?;
            out.extend(split_rows(&self.denoise(&x)?));
        }
        Ok(out)
    }
}

/// Real/fake critic.
#[derive(Clone, Debug)]
pub struct DiscriminatorNet<T: Scalar = f32> {
    pub net: Network<T>,
}

impl<T: Scalar> DiscriminatorNet<T> {
    pub fn new(h: usize, w: usize, widths: &Widths, seed: u64) -> Result<Self> {
        Self::from_network(Network::new(discriminator_layers(widths, h, w, seed)), h, w)
    }

    pub fn from_network(net: Network<T>, h: usize, w: usize) -> Result<Self> {
        expect_trace(&net, &[1, 1, h, w], &stride_trace(h), "discriminator")?;
        let out = net.shape_trace(&[1, 1, h, w])?.pop().unwrap_or_default();
        if out != [1, 1] {
            return Err(Error::InvalidParams(format!("discriminator output {out:?}")));
        }
        Ok(Self { net })
    }
}

/// Stage-two delay/Doppler regressor for a fixed target count.
#[derive(Clone, Debug)]
pub struct PredictorNet<T: Scalar = f32> {
    pub net: Network<T>,
    pub targets: usize,
    /// Delay bins (map width).
    pub m: usize,
    /// Doppler bins (map height).
    pub n: usize,
}

impl<T: Scalar> PredictorNet<T> {
    pub fn new(m: usize, n: usize, targets: usize, widths: &Widths, seed: u64) -> Result<Self> {
        if targets == 0 {
            return Err(Error::InvalidParams("predictor needs at least one target".into()));
        }
        Self::from_network(Network::new(predictor_layers(widths, n, m, targets, seed)?), m, n)
    }

    /// Wraps a loaded network; the target count is read off the head.
    pub fn from_network(net: Network<T>, m: usize, n: usize) -> Result<Self> {
        expect_trace(&net, &[1, 1, n, m], &pool_trace(n, 3), "predictor")?;
        let out = net.shape_trace(&[1, 1, n, m])?.pop().unwrap_or_default();
        if out.len() != 2 || out[1] == 0 || out[1] % 2 != 0 {
            return Err(Error::InvalidParams(format!("predictor output {out:?}")));
        }
        Ok(Self {
            targets: out[1] / 2,
            net,
            m,
            n,
        })
    }

    fn scales(&self) -> (f64, f64) {
        ((self.m.max(2) - 1) as f64, (self.n.max(2) - 1) as f64)
    }

    /// Index label → `[0, 1]` regression target.
    pub fn scale_label(&self, label: &[f32]) -> Vec<f32> {
        let (sd, sk) = self.scales();
        label
            .chunks(2)
            .flat_map(|p| [(p[0] as f64 / sd) as f32, (p[1] as f64 / sk) as f32])
            .collect()
    }

    /// Inference-mode prediction of fractional `(delay, doppler)` pairs,
    /// rescaled to index units and clamped to the grid.
    pub fn predict(&mut self, input: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
        let s = input.shape();
        if s.len() != 4 || s[1] != 1 || s[2] != self.n || s[3] != self.m {
            return Err(Error::InvalidParams(format!(
                "predict expects [B, 1, {}, {}], got {s:?}",
                self.n, self.m
            )));
        }
        let mode = self.net.mode();
        self.net.set_mode(Mode::Infer);
        let out = self.net.forward(input);
        self.net.set_mode(mode);
        self.net.clear_cache();
        let out = out?;
        let (sd, sk) = self.scales();
        let (max_d, max_k) = ((self.m - 1) as f64, (self.n - 1) as f64);
        Ok(out
            .data()
            .chunks(2 * self.targets)
            .map(|row| {
                row.chunks(2)
                    .flat_map(|p| {
                        [
                            (p[0].as_f64() * sd).clamp(0.0, max_d),
                            (p[1].as_f64() * sk).clamp(0.0, max_k),
                        ]
                    })
                    .collect()
            })
            .collect())
    }
}

impl PredictorNet<f32> {
    pub fn predict_maps(&mut self, maps: &[&[f32]], batch: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(maps.len());
        for chunk in maps.chunks(batch.max(1)) {
            out.extend(self.predict(&maps_to_tensor(chunk, self.n, self.m)?)?);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// λ on the reconstruction MSE.
    pub reconstruction_weight: f64,
    /// Weight on the adversarial term; zero skips the discriminator.
    pub adversarial_weight: f64,
    pub seed: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 2e-4,
            reconstruction_weight: 100.0,
            adversarial_weight: 1.0,
            seed: 0,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size >= 1
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.reconstruction_weight >= 0.0
            && self.reconstruction_weight.is_finite()
            && self.adversarial_weight >= 0.0
            && self.adversarial_weight.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("bad GAN config {self:?}")))
        }
    }
}

/// Mean losses over one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanEpochLog {
    pub epoch: u32,
    /// BCE on real plus BCE on generated maps.
    pub d_loss: f64,
    pub g_adv_loss: f64,
    pub g_rec_loss: f64,
}

/// Paired map views for training; `inputs[i]` pairs with `targets[i]`.
#[derive(Clone, Copy, Debug)]
pub struct PairedMaps<'a> {
    pub inputs: &'a [&'a [f32]],
    pub targets: &'a [&'a [f32]],
}

impl<'a> PairedMaps<'a> {
    pub fn new(inputs: &'a [&'a [f32]], targets: &'a [&'a [f32]]) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::InvalidTrainingData(format!(
                "{} corrupted maps but {} clean maps",
                inputs.len(),
                targets.len()
            )));
        }
        if inputs.is_empty() {
            return Err(Error::InvalidTrainingData("no training maps".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// GAN state across epochs. Optimizer moments live only in memory, so a
/// resumed run restarts them.
pub struct GanTrainer {
    pub generator: GeneratorNet,
    pub discriminator: DiscriminatorNet,
    pub config: GanTrainConfig,
    /// Completed epochs.
    pub epoch: u32,
    g_opt: Adam<f32>,
    d_opt: Adam<f32>,
}

impl GanTrainer {
    pub fn new(h: usize, w: usize, widths: &Widths, config: GanTrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = GeneratorNet::new(h, w, widths, sub_seed(config.seed, 10))?;
        let discriminator = DiscriminatorNet::new(h, w, widths, sub_seed(config.seed, 11))?;
        Ok(Self::resume(generator, discriminator, config, 0))
    }

    pub fn resume(
        generator: GeneratorNet,
        discriminator: DiscriminatorNet,
        config: GanTrainConfig,
        epoch: u32,
    ) -> Self {
        let opt = AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        };
        Self {
            generator,
            discriminator,
            config,
            epoch,
            g_opt: Adam::new(opt),
            d_opt: Adam::new(opt),
        }
    }

    /// One pass over `data` in a seeded order.
    pub fn train_epoch(&mut self, data: PairedMaps<'_>) -> Result<GanEpochLog> {
        let (h, w) = (self.generator.height, self.generator.width);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut seeded(sub_seed(self.config.seed, 1000 + self.epoch as u64)));
        self.generator.net.set_mode(Mode::Train);
        self.discriminator.net.set_mode(Mode::Train);
        let (mut d_sum, mut adv_sum, mut rec_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for idx in order.chunks(self.config.batch_size) {
            let x: Vec<&[f32]> = idx.iter().map(|&i| data.inputs[i]).collect();
            let y: Vec<&[f32]> = idx.iter().map(|&i| data.targets[i]).collect();
            let (d, adv, rec) = self.step(&maps_to_tensor(&x, h, w)?, &maps_to_tensor(&y, h, w)?)?;
            d_sum += d;
            adv_sum += adv;
            rec_sum += rec;
            batches += 1;
        }
        self.epoch += 1;
        let log = GanEpochLog {
            epoch: self.epoch,
            d_loss: d_sum / batches as f64,
            g_adv_loss: adv_sum / batches as f64,
            g_rec_loss: rec_sum / batches as f64,
        };
        if !(log.d_loss.is_finite() && log.g_adv_loss.is_finite() && log.g_rec_loss.is_finite()) {
            return Err(Error::InvalidTrainingData(format!("non-finite losses {log:?}")));
        }
        Ok(log)
    }

    /// Discriminator update on (clean → 1, generated → 0), then generator
    /// update on `w_adv·BCE(D(G(x)), 1) + λ·MSE(G(x), clean)`.
    pub fn step(&mut self, x: &Tensor<f32>, clean: &Tensor<f32>) -> Result<(f64, f64, f64)> {
        let batch = x.shape()[0];
        let ones = Tensor::full(&[batch, 1], 1.0f32);
        let zeros = Tensor::zeros(&[batch, 1]);
        let g = &mut self.generator.net;
        let d = &mut self.discriminator.net;
        let fake = g.forward(x)?;

        let adversarial = self.config.adversarial_weight > 0.0;
        let mut d_loss = 0.0;
        if adversarial {
            d.zero_grad();
            let (l_real, grad) = bce_loss(&d.forward(clean)?, &ones)?;
            d.backward(&grad)?;
            let (l_fake, grad) = bce_loss(&d.forward(&fake)?, &zeros)?;
            d.backward(&grad)?;
            self.d_opt.step(&mut d.params());
            d_loss = (l_real + l_fake) as f64;
        }

        let (rec, rec_grad) = mse_loss(&fake, clean)?;
        let mut grad = rec_grad;
        grad.scale(self.config.reconstruction_weight as f32);
        let mut adv = 0.0;
        if adversarial {
            let (l_adv, g_out) = bce_loss(&d.forward(&fake)?, &ones)?;
            let mut g_in = d.backward(&g_out)?;
            g_in.scale(self.config.adversarial_weight as f32);
            grad.add_assign(&g_in)?;
            d.zero_grad();
            adv = l_adv as f64;
        }
        g.zero_grad();
        g.backward(&grad)?;
        self.g_opt.step(&mut g.params());
        Ok((d_loss, adv, rec as f64))
    }
}

/// Trains a fresh GAN for `config.epochs` epochs.
pub fn train_gan(
    data: PairedMaps<'_>,
    h: usize,
    w: usize,
    widths: &Widths,
    config: GanTrainConfig,
) -> Result<(GeneratorNet, Vec<GanEpochLog>)> {
    let mut trainer = GanTrainer::new(h, w, widths, config)?;
    let mut log = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        log.push(trainer.train_epoch(data)?);
    }
    Ok((trainer.generator, log))
}

/// Mean per-pixel squared error between two equally sized map lists.
pub fn mean_map_mse(a: &[&[f32]], b: &[&[f32]]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidTrainingData(
            "map lists differ in length or are empty".into(),
        ));
    }
    let mut total = 0.0f64;
    let mut count = 0usize;
    for (x, y) in a.iter().zip(b) {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "map size",
                expected: x.len(),
                actual: y.len(),
            });
        }
        total += x.iter().zip(*y).map(|(p, q)| ((p - q) as f64).powi(2)).sum::<f64>();
        count += x.len();
    }
    Ok(total / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictorTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for PredictorTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl PredictorTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size >= 1
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.validation_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("bad predictor config {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictorEpochLog {
    pub epoch: u32,
    /// Mean scaled-label MSE over training batches.
    pub train_loss: f64,
    /// Scaled-label MSE on the held-out split; NaN when there is none.
    pub val_loss: f64,
    /// RMS index error on the held-out split; NaN when there is none.
    pub val_index_rmse: f64,
}

/// Predictor state across epochs.
pub struct PredictorTrainer {
    pub predictor: PredictorNet,
    pub config: PredictorTrainConfig,
    pub epoch: u32,
    opt: Adam<f32>,
}

impl PredictorTrainer {
    pub fn new(m: usize, n: usize, targets: usize, widths: &Widths, config: PredictorTrainConfig) -> Result<Self> {
        config.validate()?;
        let predictor = PredictorNet::new(m, n, targets, widths, sub_seed(config.seed, 20))?;
        Ok(Self::resume(predictor, config, 0))
    }

    pub fn resume(predictor: PredictorNet, config: PredictorTrainConfig, epoch: u32) -> Self {
        let opt = AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        };
        Self {
            predictor,
            config,
            epoch,
            opt: Adam::new(opt),
        }
    }

    /// Seeded train/validation split of `0..len`.
    pub fn split(&self, len: usize) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(&mut seeded(sub_seed(self.config.seed, 21)));
        let val = ((len as f64) * self.config.validation_fraction).round() as usize;
        let val = val.min(len.saturating_sub(1));
        let train = idx.split_off(val);
        (train, idx)
    }

    fn check_labels(&self, maps: &[&[f32]], labels: &[&[f32]]) -> Result<()> {
        if maps.len() != labels.len() || maps.is_empty() {
            return Err(Error::InvalidTrainingData(format!(
                "{} maps but {} labels",
                maps.len(),
                labels.len()
            )));
        }
        let want = 2 * self.predictor.targets;
        if let Some(bad) = labels.iter().find(|l| l.len() != want) {
            return Err(Error::InvalidTrainingData(format!(
                "label of length {} for a {}-target predictor",
                bad.len(),
                self.predictor.targets
            )));
        }
        Ok(())
    }

    pub fn train_epoch(&mut self, maps: &[&[f32]], labels: &[&[f32]]) -> Result<PredictorEpochLog> {
        self.check_labels(maps, labels)?;
        let (mut train, val) = self.split(maps.len());
        train.shuffle(&mut seeded(sub_seed(self.config.seed, 2000 + self.epoch as u64)));
        let (n, m) = (self.predictor.n, self.predictor.m);
        let out_len = 2 * self.predictor.targets;
        self.predictor.net.set_mode(Mode::Train);
        let (mut sum, mut batches) = (0.0, 0usize);
        for idx in train.chunks(self.config.batch_size) {
            let x: Vec<&[f32]> = idx.iter().map(|&i| maps[i]).collect();
            let y: Vec<f32> = idx
                .iter()
                .flat_map(|&i| self.predictor.scale_label(labels[i]))
                .collect();
            let y = Tensor::new(vec![idx.len(), out_len], y)?;
            let net = &mut self.predictor.net;
            net.zero_grad();
            let (loss, grad) = mse_loss(&net.forward(&maps_to_tensor(&x, n, m)?)?, &y)?;
            net.backward(&grad)?;
            self.opt.step(&mut net.params());
            sum += loss as f64;
            batches += 1;
        }
        self.epoch += 1;
        let (val_loss, val_index_rmse) = if val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            self.evaluate(&val, maps, labels)?
        };
        let train_loss = sum / batches.max(1) as f64;
        if !train_loss.is_finite() {
            return Err(Error::InvalidTrainingData("non-finite predictor loss".into()));
        }
        Ok(PredictorEpochLog {
            epoch: self.epoch,
            train_loss,
            val_loss,
            val_index_rmse,
        })
    }

    fn evaluate(&mut self, idx: &[usize], maps: &[&[f32]], labels: &[&[f32]]) -> Result<(f64, f64)> {
        let x: Vec<&[f32]> = idx.iter().map(|&i| maps[i]).collect();
        let pred = self.predictor.predict_maps(&x, self.config.batch_size)?;
        let (sd, sk) = self.predictor.scales();
        let (mut scaled, mut raw, mut count) = (0.0, 0.0, 0usize);
        for (p, &i) in pred.iter().zip(idx) {
            let p = crate::eval::canonical_pairs(p);
            for (j, (a, b)) in p.iter().zip(labels[i].iter()).enumerate() {
                let e = a - *b as f64;
                let s = if j % 2 == 0 { sd } else { sk };
                scaled += (e / s).powi(2);
                raw += e * e;
                count += 1;
            }
        }
        Ok((scaled / count as f64, (raw / count as f64).sqrt()))
    }
}

/// Trains a fresh predictor for `config.epochs` epochs.
pub fn train_predictor(
    maps: &[&[f32]],
    labels: &[&[f32]],
    m: usize,
    n: usize,
    targets: usize,
    widths: &Widths,
    config: PredictorTrainConfig,
) -> Result<(PredictorNet, Vec<PredictorEpochLog>)> {
    let mut trainer = PredictorTrainer::new(m, n, targets, widths, config)?;
    let mut log = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        log.push(trainer.train_epoch(maps, labels)?);
    }
    Ok((trainer.predictor, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_width_traces() {
        let g = GeneratorNet::<f32>::new(28, 28, &Widths::full(), 1).unwrap();
        assert_eq!(spatial_trace(&g.net, &[1, 1, 28, 28]).unwrap(), vec![28]);
        let d = DiscriminatorNet::<f32>::new(28, 28, &Widths::full(), 1).unwrap();
        assert_eq!(spatial_trace(&d.net, &[1, 1, 28, 28]).unwrap(), vec![28, 14, 7, 4]);
        let p = PredictorNet::<f32>::new(28, 28, 2, &Widths::full(), 1).unwrap();
        assert_eq!(spatial_trace(&p.net, &[1, 1, 28, 28]).unwrap(), vec![28, 14, 7, 3]);
    }

    #[test]
    fn predictor_output_length_follows_target_count() {
        for targets in 1..=4 {
            let mut p = PredictorNet::<f32>::new(28, 28, targets, &Widths::reduced(), 3).unwrap();
            assert_eq!(p.targets, targets);
            let out = p.predict(&Tensor::zeros(&[2, 1, 28, 28])).unwrap();
            assert_eq!(out.len(), 2);
            assert!(out.iter().all(|row| row.len() == 2 * targets));
        }
    }

    #[test]
    fn wrong_input_shapes_are_rejected() {
        let mut g = GeneratorNet::<f32>::new(28, 28, &Widths::reduced(), 1).unwrap();
        assert!(g.denoise(&Tensor::zeros(&[1, 1, 27, 28])).is_err());
        let mut p = PredictorNet::<f32>::new(28, 28, 2, &Widths::reduced(), 1).unwrap();
        assert!(p.predict(&Tensor::zeros(&[1, 2, 28, 28])).is_err());
    }

    #[test]
    fn mismatched_pairs_are_rejected() {
        let a = [0.0f32; 4];
        let x: Vec<&[f32]> = vec![&a, &a];
        let y: Vec<&[f32]> = vec![&a];
        assert!(PairedMaps::new(&x, &y).is_err());
    }

    #[test]
    fn label_scaling_round_trip() {
        let p = PredictorNet::<f32>::new(28, 28, 2, &Widths::reduced(), 1).unwrap();
        assert_eq!(p.scale_label(&[27.0, 0.0, 9.0, 27.0]), vec![1.0, 0.0, 9.0 / 27.0, 1.0]);
    }
}
