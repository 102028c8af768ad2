//! Three-stage model: dense encoder, quantum or classical middle, dense decoder.
//!
//! With a quantum middle the encoder output is squashed into circuit angles and
//! each sample defines its own circuit. Backward contracts the decoder gradient
//! at the middle output with the per-sample circuit Jacobian and the angle-map
//! derivative, which yields exactly the gradient at the encoder output. Feeding
//! that into the encoder's reverse pass is the same as differentiating the
//! surrogate `Σ o₁₂ ⊙ g₁₂` through the encoder.

use rand::Rng;

use crate::circuit::{CircuitLayout, OutputSelection};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{
    angle_map, cross_entropy, Activation, AdamState, ForwardTape, NetGradients, Network,
};

#[derive(Clone, Debug, PartialEq)]
pub enum Middle {
    Quantum {
        layout: CircuitLayout,
        selection: OutputSelection,
    },
    Classical(Network),
}

impl Middle {
    pub fn input_width(&self) -> usize {
        match self {
            Middle::Quantum { layout, .. } => layout.num_params(),
            Middle::Classical(net) => net.input_width(),
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            Middle::Quantum { layout, selection } => selection.num_outputs(layout.num_qubits()),
            Middle::Classical(net) => net.output_width(),
        }
    }

    /// Circuit angles come from the encoder, so a quantum middle has none of its own.
    pub fn num_params(&self) -> usize {
        match self {
            Middle::Quantum { .. } => 0,
            Middle::Classical(net) => net.num_params(),
        }
    }

    pub fn is_quantum(&self) -> bool {
        matches!(self, Middle::Quantum { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MiddleSpec {
    Classical {
        units: usize,
    },
    Quantum {
        layout: CircuitLayout,
        selection: OutputSelection,
    },
}

/// Architecture: `input → encoder_units → middle → classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input_width: usize,
    pub encoder_units: usize,
    pub middle: MiddleSpec,
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MainModel {
    pub encoder: Network,
    pub middle: Middle,
    pub decoder: Network,
}

#[derive(Clone, Debug)]
pub struct HybridTape {
    encoder: ForwardTape,
    /// Encoder output, i.e. the middle input.
    o12: Matrix,
    /// Circuit angles and `dθ/dx` (quantum middle only).
    angles: Option<(Matrix, Matrix)>,
    middle: Option<ForwardTape>,
    /// Middle output, i.e. the decoder input.
    o23: Matrix,
    decoder: ForwardTape,
}

impl HybridTape {
    pub fn encoder_output(&self) -> &Matrix {
        &self.o12
    }

    pub fn middle_output(&self) -> &Matrix {
        &self.o23
    }

    pub fn angles(&self) -> Option<&Matrix> {
        self.angles.as_ref().map(|(a, _)| a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridGradients {
    pub encoder: NetGradients,
    pub middle: Option<NetGradients>,
    pub decoder: NetGradients,
}

/// One Adam state per trainable stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizers {
    pub encoder: AdamState,
    pub middle: Option<AdamState>,
    pub decoder: AdamState,
}

impl Optimizers {
    pub fn for_model(model: &MainModel) -> Self {
        Optimizers {
            encoder: AdamState::for_network(&model.encoder),
            middle: match &model.middle {
                Middle::Classical(net) => Some(AdamState::for_network(net)),
                Middle::Quantum { .. } => None,
            },
            decoder: AdamState::for_network(&model.decoder),
        }
    }
}

/// `g₁₂ = (g₂₃ · ∂p/∂θ) ⊙ dθ/dx` for one sample.
pub fn quantum_boundary_gradient(
    layout: &CircuitLayout,
    selection: OutputSelection,
    angles: &[f64],
    angle_derivative: &[f64],
    upstream: &[f64],
) -> Result<Vec<f64>> {
    let jacobian = layout.gradient_exact(angles, selection)?;
    if upstream.len() != jacobian.rows() {
        return Err(Error::dimension(
            "gradient at middle output",
            jacobian.rows(),
            upstream.len(),
        ));
    }
    let mut g = jacobian.contract(upstream);
    for (gi, d) in g.iter_mut().zip(angle_derivative) {
        *gi *= d;
    }
    Ok(g)
}

impl MainModel {
    pub fn new(encoder: Network, middle: Middle, decoder: Network) -> Self {
        MainModel {
            encoder,
            middle,
            decoder,
        }
    }

    /// Fresh model: the encoder is linear into a quantum middle and ReLU into a
    /// classical one, the classical middle uses ReLU, and the decoder emits raw logits.
    pub fn init(spec: &ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        let encoder_act = match spec.middle {
            MiddleSpec::Quantum { .. } => Activation::Identity,
            MiddleSpec::Classical { .. } => Activation::Relu,
        };
        let encoder = Network::init(&[spec.input_width, spec.encoder_units], &[encoder_act], rng)?;
        let middle = match &spec.middle {
            MiddleSpec::Quantum { layout, selection } => Middle::Quantum {
                layout: layout.clone(),
                selection: *selection,
            },
            MiddleSpec::Classical { units } => Middle::Classical(Network::init(
                &[spec.encoder_units, *units],
                &[Activation::Relu],
                rng,
            )?),
        };
        let decoder = Network::init(
            &[middle.output_width(), spec.classes],
            &[Activation::Identity],
            rng,
        )?;
        Ok(MainModel::new(encoder, middle, decoder))
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.middle.num_params() + self.decoder.num_params()
    }

    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, HybridTape)> {
        self.check_widths()?;
        let (o12, encoder_tape) = self.encoder.forward(batch)?;
        let (o23, angles, middle_tape) = match &self.middle {
            Middle::Quantum { layout, selection } => {
                let (theta, dtheta) = angle_map(&o12);
                let o23 = quantum_outputs(layout, *selection, &theta)?;
                (o23, Some((theta, dtheta)), None)
            }
            Middle::Classical(net) => {
                let (out, tape) = net.forward(&o12)?;
                (out, None, Some(tape))
            }
        };
        let (logits, decoder_tape) = self.decoder.forward(&o23)?;
        Ok((
            logits,
            HybridTape {
                encoder: encoder_tape,
                o12,
                angles,
                middle: middle_tape,
                o23,
                decoder: decoder_tape,
            },
        ))
    }

    /// Logits only; skips tapes and circuit gradients.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_widths()?;
        let o12 = self.encoder.predict(batch)?;
        let o23 = match &self.middle {
            Middle::Quantum { layout, selection } => {
                quantum_outputs(layout, *selection, &angle_map(&o12).0)?
            }
            Middle::Classical(net) => net.predict(&o12)?,
        };
        self.decoder.predict(&o23)
    }

    pub fn backward(&self, tape: &HybridTape, loss_grad: &Matrix) -> Result<HybridGradients> {
        let (decoder, g23) = self.decoder.backward(&tape.decoder, loss_grad)?;
        if g23.shape() != tape.o23.shape() {
            return Err(Error::StaleTape("middle output shape changed".into()));
        }
        let (g12, middle) = match (&self.middle, &tape.angles, &tape.middle) {
            (Middle::Quantum { layout, selection }, Some((theta, dtheta)), None) => {
                if theta.cols() != layout.num_params() {
                    return Err(Error::StaleTape("circuit parameter count changed".into()));
                }
                let mut g12 = Matrix::zeros(theta.rows(), theta.cols());
                for b in 0..theta.rows() {
                    let g = quantum_boundary_gradient(
                        layout,
                        *selection,
                        theta.row(b),
                        dtheta.row(b),
                        g23.row(b),
                    )?;
                    g12.row_mut(b).copy_from_slice(&g);
                }
                (g12, None)
            }
            (Middle::Classical(net), None, Some(mid_tape)) => {
                let (grads, g12) = net.backward(mid_tape, &g23)?;
                (g12, Some(grads))
            }
            _ => {
                return Err(Error::StaleTape(
                    "tape was recorded with a different middle kind".into(),
                ))
            }
        };
        let encoder = self.encoder.backward_params(&tape.encoder, &g12)?;
        Ok(HybridGradients {
            encoder,
            middle,
            decoder,
        })
    }

    fn check_widths(&self) -> Result<()> {
        if self.encoder.output_width() != self.middle.input_width() {
            return Err(Error::dimension(
                "encoder→middle boundary",
                self.middle.input_width(),
                self.encoder.output_width(),
            ));
        }
        if self.middle.output_width() != self.decoder.input_width() {
            return Err(Error::dimension(
                "middle→decoder boundary",
                self.decoder.input_width(),
                self.middle.output_width(),
            ));
        }
        Ok(())
    }

    /// Single-sample forward pass reporting the first boundary whose widths disagree.
    pub fn dimension_check(&self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.encoder.input_width() {
            return Err(Error::dimension(
                "input→encoder boundary",
                self.encoder.input_width(),
                sample.len(),
            ));
        }
        self.check_widths()?;
        let logits = self.predict(&Matrix::from_vec(1, sample.len(), sample.to_vec())?)?;
        if logits.shape() != (1, self.decoder.output_width()) {
            return Err(Error::dimension(
                "decoder output",
                self.decoder.output_width(),
                logits.cols(),
            ));
        }
        Ok(())
    }

    pub fn apply_gradients(
        &mut self,
        grads: &HybridGradients,
        opt: &mut Optimizers,
        lr: f64,
    ) -> Result<()> {
        self.encoder
            .adam_step(&grads.encoder, &mut opt.encoder, lr)?;
        if let (Middle::Classical(net), Some(g), Some(state)) =
            (&mut self.middle, &grads.middle, &mut opt.middle)
        {
            net.adam_step(g, state, lr)?;
        }
        self.decoder.adam_step(&grads.decoder, &mut opt.decoder, lr)
    }

    /// Forward, cross-entropy, backward and one Adam update. Returns the batch
    /// loss and accuracy measured before the update.
    pub fn train_step(
        &mut self,
        batch: &Matrix,
        labels: &[usize],
        opt: &mut Optimizers,
        lr: f64,
    ) -> Result<(f64, f64)> {
        let (logits, tape) = self.forward(batch)?;
        let (loss, grad) = cross_entropy(&logits, labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("batch loss is {loss}")));
        }
        let accuracy = batch_accuracy(&logits, labels);
        let grads = self.backward(&tape, &grad)?;
        self.apply_gradients(&grads, opt, lr)?;
        Ok((loss, accuracy))
    }

    /// Fraction of rows whose arg-max logit equals the label; ties go to the lower class.
    pub fn evaluate(&self, images: &Matrix, labels: &[usize]) -> Result<f64> {
        if images.rows() == 0 {
            return Err(Error::Argument(
                "cannot evaluate on an empty dataset".into(),
            ));
        }
        if images.rows() != labels.len() {
            return Err(Error::dimension(
                "evaluation labels",
                images.rows(),
                labels.len(),
            ));
        }
        const CHUNK: usize = 512;
        let mut correct = 0usize;
        for start in (0..images.rows()).step_by(CHUNK) {
            let end = (start + CHUNK).min(images.rows());
            let chunk = Matrix::from_vec(
                end - start,
                images.cols(),
                images.as_slice()[start * images.cols()..end * images.cols()].to_vec(),
            )?;
            let logits = self.predict(&chunk)?;
            correct += (0..logits.rows())
                .filter(|&r| argmax(logits.row(r)) == labels[start + r])
                .count();
        }
        Ok(correct as f64 / images.rows() as f64)
    }
}

fn quantum_outputs(
    layout: &CircuitLayout,
    selection: OutputSelection,
    angles: &Matrix,
) -> Result<Matrix> {
    let mut out = Matrix::zeros(angles.rows(), selection.num_outputs(layout.num_qubits()));
    for b in 0..angles.rows() {
        let p = layout.forward(angles.row(b), selection)?;
        out.row_mut(b).copy_from_slice(&p);
    }
    Ok(out)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn batch_accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    let correct = (0..logits.rows())
        .filter(|&r| argmax(logits.row(r)) == labels[r])
        .count();
    correct as f64 / logits.rows().max(1) as f64
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn quantum_spec(
        input: usize,
        layout: &str,
        qubits: usize,
        selection: OutputSelection,
    ) -> ModelSpec {
        let layout = CircuitLayout::parse(qubits, layout).unwrap();
        ModelSpec {
            input_width: input,
            encoder_units: layout.num_params(),
            middle: MiddleSpec::Quantum { layout, selection },
            classes: 2,
        }
    }

    pub(crate) fn random_batch(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| rng.random_range(0.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    fn loss(model: &MainModel, x: &Matrix, labels: &[usize]) -> f64 {
        cross_entropy(&model.predict(x).unwrap(), labels).unwrap().0
    }

    /// Central differences of the full pipeline loss over every encoder and decoder parameter.
    pub(crate) fn max_fd_violation(
        model: &MainModel,
        x: &Matrix,
        labels: &[usize],
        h: f64,
        rel: f64,
        abs: f64,
    ) -> f64 {
        let (logits, tape) = model.forward(x).unwrap();
        let (_, g) = cross_entropy(&logits, labels).unwrap();
        let grads = model.backward(&tape, &g).unwrap();
        let mut worst: f64 = 0.0;
        for stage in 0..2 {
            let analytic = if stage == 0 {
                grads.encoder.flatten()
            } else {
                grads.decoder.flatten()
            };
            for (idx, &a) in analytic.iter().enumerate() {
                let eval = |delta: f64| {
                    let mut m = model.clone();
                    let net = if stage == 0 {
                        &mut m.encoder
                    } else {
                        &mut m.decoder
                    };
                    *net.params_mut().nth(idx).unwrap() += delta;
                    loss(&m, x, labels)
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let allowed = rel * fd.abs() + abs;
                worst = worst.max((a - fd).abs() / allowed);
            }
        }
        worst
    }

    #[test]
    fn classical_middle_matches_sequential_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = ModelSpec {
            input_width: 8,
            encoder_units: 3,
            middle: MiddleSpec::Classical { units: 2 },
            classes: 2,
        };
        let model = MainModel::init(&spec, &mut rng).unwrap();
        let x = random_batch(5, 8, &mut rng);
        let labels = [0, 1, 1, 0, 1];

        let Middle::Classical(mid) = &model.middle else {
            unreachable!()
        };
        let mut layers = model.encoder.layers().to_vec();
        layers.extend_from_slice(mid.layers());
        layers.extend_from_slice(model.decoder.layers());
        let sequential = Network::new(layers).unwrap();

        let (logits, tape) = model.forward(&x).unwrap();
        let (seq_logits, seq_tape) = sequential.forward(&x).unwrap();
        assert_eq!(logits, seq_logits);

        let (_, g) = cross_entropy(&logits, &labels).unwrap();
        let grads = model.backward(&tape, &g).unwrap();
        let seq_grads = sequential.backward_params(&seq_tape, &g).unwrap();
        let mut combined = grads.encoder.flatten();
        combined.extend(grads.middle.unwrap().flatten());
        combined.extend(grads.decoder.flatten());
        assert_eq!(combined, seq_grads.flatten());
    }

    #[test]
    fn zero_encoder_gives_constant_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = MainModel::init(
            &quantum_spec(6, "u1-all,u2-even,u1-all", 2, OutputSelection::Full),
            &mut rng,
        )
        .unwrap();
        for p in model.encoder.params_mut() {
            *p = 0.0;
        }
        let (logits, tape) = model.forward(&random_batch(4, 6, &mut rng)).unwrap();
        for r in 1..4 {
            assert_eq!(logits.row(r), logits.row(0));
        }
        let angles = tape.angles().unwrap();
        assert!(angles
            .as_slice()
            .iter()
            .all(|&a| (a - std::f64::consts::FRAC_PI_2).abs() < 1e-15));
    }

    #[test]
    fn quantum_middle_outputs_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = MainModel::init(
            &quantum_spec(6, "u1-all,u2-even,u1-all", 2, OutputSelection::Full),
            &mut rng,
        )
        .unwrap();
        let (logits, tape) = model.forward(&random_batch(4, 6, &mut rng)).unwrap();
        assert!(logits.as_slice().iter().all(|v| v.is_finite()));
        for r in 0..4 {
            let row = tape.middle_output().row(r);
            assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(model.middle.num_params(), 0);
    }

    #[test]
    fn zero_upstream_gives_zero_encoder_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = MainModel::init(
            &quantum_spec(5, "u1-all,u2-even,u1-all", 2, OutputSelection::Min),
            &mut rng,
        )
        .unwrap();
        let (_, tape) = model.forward(&random_batch(3, 5, &mut rng)).unwrap();
        let grads = model.backward(&tape, &Matrix::zeros(3, 2)).unwrap();
        assert!(grads.encoder.flatten().iter().all(|&g| g == 0.0));
        assert!(grads.middle.is_none());
    }

    #[test]
    fn boundary_gradient_is_linear() {
        let layout = CircuitLayout::parse(2, "u1-all,u2-even,u1-all").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let angles: Vec<f64> = (0..15).map(|_| rng.random_range(0.0..3.0)).collect();
        let deriv: Vec<f64> = (0..15).map(|_| rng.random_range(0.1..0.7)).collect();
        let up: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up2: Vec<f64> = up.iter().map(|u| 2.0 * u).collect();
        let g1 = quantum_boundary_gradient(&layout, OutputSelection::Full, &angles, &deriv, &up)
            .unwrap();
        let g2 = quantum_boundary_gradient(&layout, OutputSelection::Full, &angles, &deriv, &up2)
            .unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn hybrid_gradients_match_finite_differences() {
        for (seed, (qubits, layout)) in [(1usize, "u1-all"), (2, "u1-all,u2-even,u1-all")]
            .iter()
            .enumerate()
        {
            for selection in [OutputSelection::Full, OutputSelection::Min] {
                let mut rng = ChaCha8Rng::seed_from_u64(10 + seed as u64);
                let model = MainModel::init(&quantum_spec(6, layout, *qubits, selection), &mut rng)
                    .unwrap();
                let x = random_batch(4, 6, &mut rng);
                let worst = max_fd_violation(&model, &x, &[0, 1, 0, 1], 1e-4, 1e-4, 1e-9);
                assert!(worst <= 1.0, "{layout} {selection:?}: {worst}");
            }
        }
    }

    #[test]
    fn dimension_check_names_the_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = MainModel::init(
            &quantum_spec(784, "u1-all,u2-even,u1-all", 2, OutputSelection::Full),
            &mut rng,
        )
        .unwrap();
        assert!(model.dimension_check(&[0.0; 784]).is_ok());
        assert!(matches!(
            model.dimension_check(&[0.0; 10]),
            Err(Error::Dimension {
                expected: 784,
                actual: 10,
                ..
            })
        ));

        let mut bad = model.clone();
        bad.encoder = Network::init(&[784, 5], &[Activation::Identity], &mut rng).unwrap();
        match bad.dimension_check(&[0.0; 784]) {
            Err(Error::Dimension {
                context,
                expected,
                actual,
            }) => {
                assert!(context.contains("encoder→middle"));
                assert_eq!((expected, actual), (15, 5));
            }
            other => panic!("unexpected {other:?}"),
        }

        let mut bad = model;
        bad.decoder = Network::init(&[2, 2], &[Activation::Identity], &mut rng).unwrap();
        match bad.dimension_check(&[0.0; 784]) {
            Err(Error::Dimension {
                context,
                expected,
                actual,
            }) => {
                assert!(context.contains("middle→decoder"));
                assert_eq!((expected, actual), (2, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn training_decreases_loss_and_is_deterministic() {
        let run = |lr: f64| {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let mut model = MainModel::init(
                &quantum_spec(4, "u1-all", 1, OutputSelection::Full),
                &mut rng,
            )
            .unwrap();
            let x = Matrix::from_rows(&[
                [1.0, 0.0, 0.9, 0.1],
                [0.9, 0.1, 1.0, 0.0],
                [0.0, 1.0, 0.1, 0.9],
                [0.1, 0.9, 0.0, 1.0],
            ])
            .unwrap();
            let labels = [0, 0, 1, 1];
            let before = model.clone();
            let mut opt = Optimizers::for_model(&model);
            let history: Vec<(f64, f64)> = (0..5)
                .map(|_| model.train_step(&x, &labels, &mut opt, lr).unwrap())
                .collect();
            (history, model, before)
        };
        let (history, _, _) = run(0.05);
        for w in history.windows(2) {
            assert!(w[1].0 < w[0].0, "{history:?}");
        }
        assert_eq!(run(0.05).0, history);

        let (flat, after, before) = run(0.0);
        assert_eq!(after, before);
        assert!(flat.windows(2).all(|w| w[0].0 == w[1].0));
    }

    #[test]
    fn evaluate_examples() {
        // decoder always prefers class 0
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut model = MainModel::init(
            &quantum_spec(3, "u1-all", 1, OutputSelection::Full),
            &mut rng,
        )
        .unwrap();
        let dec = &mut model.decoder.layers_mut()[0];
        dec.weights = Matrix::zeros(2, 2);
        dec.bias = vec![1.0, -1.0];
        let x = random_batch(6, 3, &mut rng);
        assert_eq!(model.evaluate(&x, &[0; 6]).unwrap(), 1.0);
        assert_eq!(model.evaluate(&x, &[1; 6]).unwrap(), 0.0);
        // ties resolve to class 0
        model.decoder.layers_mut()[0].bias = vec![0.0, 0.0];
        assert_eq!(model.evaluate(&x, &[0; 6]).unwrap(), 1.0);
        assert!(model.evaluate(&Matrix::zeros(0, 3), &[]).is_err());

        let fresh = MainModel::init(
            &quantum_spec(3, "u1-all", 1, OutputSelection::Full),
            &mut rng,
        )
        .unwrap();
        let labels = [0, 1, 0, 1, 0, 1];
        let a = fresh.evaluate(&x, &labels).unwrap();
        assert!((0.0..=1.0).contains(&a));
        assert_eq!(a, fresh.evaluate(&x, &labels).unwrap());
    }
}
