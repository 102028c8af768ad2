//! Sequential dense networks with hand-written reverse mode, the logistic
//! angle map, softmax cross-entropy and Adam.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative in terms of the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// `y = act(x Wᵀ + b)` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::dimension("layer bias", weights.rows(), bias.len()));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    /// Weights uniform in `±1/√fan_in`, zero bias.
    pub fn init(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        DenseLayer {
            weights: Matrix::from_vec(outputs, inputs, data).expect("shape by construction"),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_params(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    fn pre_activation(&self, input: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(input.rows(), self.outputs());
        for b in 0..input.rows() {
            let x = input.row(b);
            for (o, zo) in z.row_mut(b).iter_mut().enumerate() {
                *zo = dot(self.weights.row(o), x) + self.bias[o];
            }
        }
        z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

/// Everything `backward` needs from one forward call.
#[derive(Clone, Debug)]
pub struct ForwardTape {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    outputs: Vec<Matrix>,
}

impl ForwardTape {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetGradients {
    pub layers: Vec<LayerGradient>,
}

impl NetGradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
            .collect()
    }
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::dimension(
                    "adjacent network layers",
                    pair[0].outputs(),
                    pair[1].inputs(),
                ));
            }
        }
        if layers.is_empty() {
            return Err(Error::Argument("network needs at least one layer".into()));
        }
        Ok(Network { layers })
    }

    /// Randomly initialized chain `widths[0] → widths[1] → …`.
    pub fn init(widths: &[usize], activations: &[Activation], rng: &mut impl Rng) -> Result<Self> {
        if widths.len() != activations.len() + 1 {
            return Err(Error::Argument(format!(
                "{} widths need {} activations, got {}",
                widths.len(),
                widths.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers = widths
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| DenseLayer::init(w[0], w[1], act, rng))
            .collect();
        Network::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_width() {
            return Err(Error::dimension(
                "network input width",
                self.input_width(),
                batch.cols(),
            ));
        }
        Ok(())
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers {
            let act = layer.activation;
            x = layer.pre_activation(&x).map(|z| act.apply(z));
        }
        Ok(x)
    }

    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, ForwardTape)> {
        self.check_input(batch)?;
        let mut tape = ForwardTape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut x = batch.clone();
        for layer in &self.layers {
            let z = layer.pre_activation(&x);
            let act = layer.activation;
            let a = z.map(|v| act.apply(v));
            tape.inputs.push(x);
            tape.pre.push(z);
            tape.outputs.push(a.clone());
            x = a;
        }
        Ok((x, tape))
    }

    /// Gradients of `Σ ⟨upstream, output⟩` with respect to every parameter and the input.
    pub fn backward(
        &self,
        tape: &ForwardTape,
        upstream: &Matrix,
    ) -> Result<(NetGradients, Matrix)> {
        let (grads, input) = self.backward_impl(tape, upstream, true)?;
        Ok((grads, input.expect("input gradient requested")))
    }

    /// As [`Network::backward`] but skips the gradient with respect to the input.
    pub fn backward_params(&self, tape: &ForwardTape, upstream: &Matrix) -> Result<NetGradients> {
        Ok(self.backward_impl(tape, upstream, false)?.0)
    }

    fn backward_impl(
        &self,
        tape: &ForwardTape,
        upstream: &Matrix,
        want_input: bool,
    ) -> Result<(NetGradients, Option<Matrix>)> {
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::StaleTape(format!(
                "tape has {} layers, network has {}",
                tape.inputs.len(),
                self.layers.len()
            )));
        }
        let batch = tape.batch_size();
        if upstream.shape() != (batch, self.output_width()) {
            return Err(Error::StaleTape(format!(
                "upstream gradient is {}x{}, forward output was {}x{}",
                upstream.rows(),
                upstream.cols(),
                batch,
                self.output_width()
            )));
        }
        for (layer, x) in self.layers.iter().zip(&tape.inputs) {
            if x.cols() != layer.inputs() {
                return Err(Error::StaleTape(
                    "layer widths changed since forward".into(),
                ));
            }
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta_out = upstream.clone();
        let mut input_grad = None;
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let (z, a, x) = (&tape.pre[idx], &tape.outputs[idx], &tape.inputs[idx]);
            let mut delta = delta_out;
            for (d, (&zv, &av)) in delta
                .as_mut_slice()
                .iter_mut()
                .zip(z.as_slice().iter().zip(a.as_slice()))
            {
                *d *= layer.activation.derivative(zv, av);
            }

            let mut dw = Matrix::zeros(layer.outputs(), layer.inputs());
            let mut db = vec![0.0; layer.outputs()];
            for b in 0..batch {
                let xb = x.row(b);
                for (o, &d) in delta.row(b).iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    db[o] += d;
                    for (w, &xi) in dw.row_mut(o).iter_mut().zip(xb) {
                        *w += d * xi;
                    }
                }
            }
            grads.push(LayerGradient {
                weights: dw,
                bias: db,
            });

            if idx > 0 || want_input {
                let mut dx = Matrix::zeros(batch, layer.inputs());
                for b in 0..batch {
                    let row = dx.row_mut(b);
                    for (o, &d) in delta.row(b).iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        for (g, &w) in row.iter_mut().zip(layer.weights.row(o)) {
                            *g += d * w;
                        }
                    }
                }
                if idx == 0 {
                    input_grad = Some(dx.clone());
                }
                delta_out = dx;
            } else {
                delta_out = Matrix::zeros(0, 0);
            }
        }
        grads.reverse();
        Ok((NetGradients { layers: grads }, input_grad))
    }

    /// Parameters in the order used by [`NetGradients::flatten`].
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn adam_step(
        &mut self,
        grads: &NetGradients,
        state: &mut AdamState,
        lr: f64,
    ) -> Result<()> {
        let flat = grads.flatten();
        state.step(self.params_mut(), &flat, lr)
    }
}

/// `θ = π·σ(x)` elementwise, with `dθ/dx = π·σ(x)(1 − σ(x))`.
pub fn angle_map(raw: &Matrix) -> (Matrix, Matrix) {
    let s = raw.map(sigmoid);
    let angles = s.scale(PI);
    let deriv = s.map(|v| PI * v * (1.0 - v));
    (angles, deriv)
}

/// Mean softmax cross-entropy over the batch and its gradient `(softmax − onehot)/B`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::dimension(
            "cross-entropy labels",
            logits.rows(),
            labels.len(),
        ));
    }
    if logits.rows() == 0 {
        return Err(Error::Argument("cross-entropy over an empty batch".into()));
    }
    let classes = logits.cols();
    let batch = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), classes);
    let mut loss = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::Index {
                what: "class label",
                index: label,
                len: classes,
            });
        }
        let row = logits.row(b);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_norm = max + sum_exp.ln();
        loss += log_norm - row[label];
        for (c, g) in grad.row_mut(b).iter_mut().enumerate() {
            let p = (row[c] - log_norm).exp();
            *g = (p - if c == label { 1.0 } else { 0.0 }) / batch;
        }
    }
    Ok((loss / batch, grad))
}

/// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8 and bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(num_params: usize) -> Self {
        AdamState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn for_network(net: &Network) -> Self {
        Self::new(net.num_params())
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step<'a>(
        &mut self,
        params: impl Iterator<Item = &'a mut f64>,
        grads: &[f64],
        lr: f64,
    ) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::dimension("Adam gradient", self.m.len(), grads.len()));
        }
        if let Some(idx) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient entry {idx} is {}",
                grads[idx]
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - Self::BETA1.powi(t);
        let c2 = 1.0 - Self::BETA2.powi(t);
        let mut count = 0;
        for (((p, &g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + Self::EPSILON);
            count += 1;
        }
        debug_assert_eq!(count, grads.len());
        Ok(())
    }
}
