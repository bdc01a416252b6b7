use crate::error::Result;
use crate::network::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Lower bound on the relative-error denominator, so gradients that are
    /// zero up to rounding do not produce spurious large ratios.
    pub floor: f64,
    /// Also compare the gradient with respect to the network input.
    pub check_input: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
            check_input: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, floor)`
    pub max_relative_error: f64,
    /// Location of the worst entry: `param <i>[<j>]` or `input[<j>]`.
    pub worst: String,
    pub checked: usize,
}

/// Compares backpropagated gradients against central differences, one
/// scalar at a time, for every parameter (and optionally the input).
///
/// Layers keep their current mode. Dropout masks are frozen for the
/// duration of the check so every perturbed forward sees the same mask.
pub fn grad_check<T, F>(
    net: &mut Network<T>,
    input: &Tensor<T>,
    loss: F,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<(T, Tensor<T>)>,
{
    net.freeze_dropout(true);
    let result = run(net, input, &loss, cfg);
    net.freeze_dropout(false);
    result
}

fn run<T, F>(net: &mut Network<T>, input: &Tensor<T>, loss: &F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<(T, Tensor<T>)>,
{
    net.zero_grad();
    let out = net.forward(input)?;
    let (_, g) = loss(&out)?;
    let input_grad = net.backward(&g)?;
    let analytic: Vec<Tensor<T>> = net.params().iter().map(|p| p.grad.clone()).collect();

    let eval = |net: &mut Network<T>, x: &Tensor<T>| -> Result<f64> {
        let out = net.forward(x)?;
        Ok(loss(&out)?.0.as_f64())
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let mut record = |a: f64, n: f64, location: &dyn Fn() -> String| {
        let err = (a - n).abs() / a.abs().max(n.abs()).max(cfg.floor);
        report.checked += 1;
        if err > report.max_relative_error || report.checked == 1 {
            report.max_relative_error = err;
            report.worst = location();
        }
    };

    let h = T::of(cfg.step);
    for (pi, grad) in analytic.iter().enumerate() {
        for e in 0..grad.len() {
            let original = net.params()[pi].value.data()[e];
            net.params()[pi].value.data_mut()[e] = original + h;
            let plus = eval(net, input)?;
            net.params()[pi].value.data_mut()[e] = original - h;
            let minus = eval(net, input)?;
            net.params()[pi].value.data_mut()[e] = original;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            record(grad.data()[e].as_f64(), numeric, &|| format!("param {pi}[{e}]"));
        }
    }
    if cfg.check_input {
        let mut x = input.clone();
        for e in 0..x.len() {
            let original = x.data()[e];
            x.data_mut()[e] = original + h;
            let plus = eval(net, &x)?;
            x.data_mut()[e] = original - h;
            let minus = eval(net, &x)?;
            x.data_mut()[e] = original;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            record(input_grad.data()[e].as_f64(), numeric, &|| format!("input[{e}]"));
        }
    }
    Ok(report)
}
