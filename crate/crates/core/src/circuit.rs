//! Variational circuits built from U1/U2 slots: forward probabilities, exact
//! gradients by generator insertion, the sampled Hadamard-test estimator and
//! the resource counts for gradient evaluation.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::statevector::{y_rotation, z_rotation, GateU1, GateU2, PauliGenerator, StateVector};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// One gate position in a layout. Each slot consumes three consecutive parameters:
/// `(α, β, γ)` for U1 and `(θ, φ, η)` for U2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    U1 { qubit: usize },
    U2 { qubit_j: usize, qubit_k: usize },
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::U1 { qubit } => write!(f, "u1@{qubit}"),
            Slot::U2 { qubit_j, qubit_k } => write!(f, "u2@{qubit_j}:{qubit_k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CircuitLayout {
    num_qubits: usize,
    slots: Vec<Slot>,
}

fn parse_index(token: &str, text: &str) -> Result<usize> {
    text.parse()
        .map_err(|_| Error::LayoutToken(token.to_string()))
}

impl CircuitLayout {
    /// Expands layout tokens in order:
    ///
    /// * `u1-all`  – U1 on every qubit, ascending
    /// * `u2-even` – U2 on pairs (0,1), (2,3), …
    /// * `u2-odd`  – U2 on pairs (1,2), (3,4), …
    /// * `u1@k`, `u2@j:k` – single explicit slots
    pub fn build<S: AsRef<str>>(num_qubits: usize, tokens: &[S]) -> Result<Self> {
        if num_qubits == 0 || num_qubits > crate::statevector::MAX_QUBITS {
            return Err(Error::QubitCount(num_qubits));
        }
        let mut slots = Vec::new();
        for raw in tokens {
            let token = raw.as_ref().trim();
            let start = slots.len();
            match token {
                "u1-all" => slots.extend((0..num_qubits).map(|qubit| Slot::U1 { qubit })),
                "u2-even" | "u2-odd" => {
                    let first = usize::from(token == "u2-odd");
                    slots.extend((first..num_qubits.saturating_sub(1)).step_by(2).map(|j| {
                        Slot::U2 {
                            qubit_j: j,
                            qubit_k: j + 1,
                        }
                    }));
                }
                _ => {
                    if let Some(rest) = token.strip_prefix("u1@") {
                        slots.push(Slot::U1 {
                            qubit: parse_index(token, rest)?,
                        });
                    } else if let Some(rest) = token.strip_prefix("u2@") {
                        let (j, k) = rest
                            .split_once(':')
                            .ok_or_else(|| Error::LayoutToken(token.to_string()))?;
                        slots.push(Slot::U2 {
                            qubit_j: parse_index(token, j)?,
                            qubit_k: parse_index(token, k)?,
                        });
                    } else {
                        return Err(Error::LayoutToken(token.to_string()));
                    }
                }
            }
            if slots.len() == start {
                return Err(Error::EmptyLayer {
                    token: token.to_string(),
                    qubits: num_qubits,
                });
            }
        }
        Self::from_slots(num_qubits, slots)
    }

    /// Parses a comma-separated token list such as `u1-all,u2-even,u1-all`.
    pub fn parse(num_qubits: usize, spec: &str) -> Result<Self> {
        let tokens: Vec<&str> = spec.split(',').map(str::trim).collect();
        Self::build(num_qubits, &tokens)
    }

    pub fn from_slots(num_qubits: usize, slots: Vec<Slot>) -> Result<Self> {
        if num_qubits == 0 || num_qubits > crate::statevector::MAX_QUBITS {
            return Err(Error::QubitCount(num_qubits));
        }
        for slot in &slots {
            let check = |q: usize| {
                if q >= num_qubits {
                    Err(Error::Index {
                        what: "qubit",
                        index: q,
                        len: num_qubits,
                    })
                } else {
                    Ok(())
                }
            };
            match *slot {
                Slot::U1 { qubit } => check(qubit)?,
                Slot::U2 { qubit_j, qubit_k } => {
                    check(qubit_j)?;
                    check(qubit_k)?;
                    if qubit_j == qubit_k {
                        return Err(Error::Argument(format!(
                            "two-qubit slot needs distinct qubits, got {qubit_j} twice"
                        )));
                    }
                }
            }
        }
        Ok(CircuitLayout { num_qubits, slots })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// M, always three per slot.
    pub fn num_params(&self) -> usize {
        3 * self.slots.len()
    }

    /// Token string that rebuilds this layout slot by slot.
    pub fn to_tokens(&self) -> String {
        self.slots
            .iter()
            .map(Slot::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }

    fn check_angles(&self, angles: &[f64]) -> Result<()> {
        if angles.len() != self.num_params() {
            return Err(Error::dimension(
                "circuit angle vector",
                self.num_params(),
                angles.len(),
            ));
        }
        Ok(())
    }

    fn apply_slot(&self, state: &mut StateVector, slot: usize, angles: &[f64]) {
        let p = &angles[3 * slot..3 * slot + 3];
        // Slot qubits were validated at construction and the state has the layout's width.
        let applied = match self.slots[slot] {
            Slot::U1 { qubit } => state.apply_u1(&GateU1::new(qubit, p[0], p[1], p[2])),
            Slot::U2 { qubit_j, qubit_k } => {
                state.apply_u2(&GateU2::new(qubit_j, qubit_k, p[0], p[1], p[2]))
            }
        };
        debug_assert!(applied.is_ok());
    }

    fn apply_slot_adjoint(&self, state: &mut StateVector, slot: usize, angles: &[f64]) {
        let p = &angles[3 * slot..3 * slot + 3];
        let applied = match self.slots[slot] {
            Slot::U1 { qubit } => state.apply_u1(&GateU1::new(qubit, -p[2], -p[1], -p[0])),
            Slot::U2 { qubit_j, qubit_k } => {
                state.apply_u2(&GateU2::new(qubit_j, qubit_k, -p[0], -p[1], -p[2]))
            }
        };
        debug_assert!(applied.is_ok());
    }

    /// `W(angles)|0…0⟩`.
    pub fn state(&self, angles: &[f64]) -> Result<StateVector> {
        self.check_angles(angles)?;
        let mut state = StateVector::init_zero(self.num_qubits)?;
        for slot in 0..self.slots.len() {
            self.apply_slot(&mut state, slot, angles);
        }
        Ok(state)
    }

    /// Selected output probabilities.
    pub fn forward(&self, angles: &[f64], selection: OutputSelection) -> Result<Vec<f64>> {
        let state = self.state(angles)?;
        Ok(selection
            .basis_states(self.num_qubits)
            .map(|k| state.amplitudes()[k].norm_sqr())
            .collect())
    }

    /// States entering each slot: `prefix[s]` is the state before slot `s`,
    /// `prefix[S]` the final state.
    fn prefix_states(&self, angles: &[f64]) -> Result<Vec<StateVector>> {
        let mut state = StateVector::init_zero(self.num_qubits)?;
        let mut prefix = Vec::with_capacity(self.slots.len() + 1);
        prefix.push(state.clone());
        for slot in 0..self.slots.len() {
            self.apply_slot(&mut state, slot, angles);
            prefix.push(state.clone());
        }
        Ok(prefix)
    }

    /// `∂(slot)/∂w_m` applied to the state entering the slot, given both the
    /// incoming state and the state after the slot.
    fn slot_derivative(
        &self,
        slot: usize,
        offset: usize,
        angles: &[f64],
        before: &StateVector,
        after: &StateVector,
    ) -> StateVector {
        let p = &angles[3 * slot..3 * slot + 3];
        let mut v;
        match self.slots[slot] {
            Slot::U1 { qubit } => match offset {
                // ∂/∂α: iY after the slot
                0 => {
                    v = after.clone();
                    v.apply_mat2(qubit, &pauli_y());
                }
                // ∂/∂β: iZ between the γ and α rotations
                1 => {
                    v = before.clone();
                    v.apply_mat2(qubit, &y_rotation(p[2]));
                    v.apply_mat2(qubit, &z_rotation(p[1]));
                    v.apply_mat2(qubit, &pauli_z());
                    v.apply_mat2(qubit, &y_rotation(p[0]));
                }
                // ∂/∂γ: iY before the slot
                _ => {
                    v = before.clone();
                    v.apply_mat2(qubit, &pauli_y());
                    v.apply_mat2(qubit, &GateU1::new(qubit, p[0], p[1], p[2]).matrix());
                }
            },
            Slot::U2 { qubit_j, qubit_k } => {
                v = after.clone();
                let generator = match offset {
                    0 => PauliGenerator::XX(qubit_j, qubit_k),
                    1 => PauliGenerator::YY(qubit_j, qubit_k),
                    _ => PauliGenerator::ZZ(qubit_j, qubit_k),
                };
                let applied = v.apply_generator(&generator);
                debug_assert!(applied.is_ok());
            }
        }
        v.scale(I);
        v
    }

    /// `W'_m|0…0⟩`: the circuit with `iG` inserted at parameter `m`.
    pub fn derivative_state(&self, angles: &[f64], param: usize) -> Result<StateVector> {
        self.check_angles(angles)?;
        if param >= self.num_params() {
            return Err(Error::Index {
                what: "parameter",
                index: param,
                len: self.num_params(),
            });
        }
        let prefix = self.prefix_states(angles)?;
        Ok(self.derivative_state_from(&prefix, angles, param))
    }

    fn derivative_state_from(
        &self,
        prefix: &[StateVector],
        angles: &[f64],
        param: usize,
    ) -> StateVector {
        let (slot, offset) = (param / 3, param % 3);
        let mut v = self.slot_derivative(slot, offset, angles, &prefix[slot], &prefix[slot + 1]);
        for later in slot + 1..self.slots.len() {
            self.apply_slot(&mut v, later, angles);
        }
        v
    }

    /// Angles with entry `param` moved by +π/2. Only U1 parameters have this
    /// property: the resulting circuit state equals `derivative_state(param)`.
    pub fn shifted_angles(&self, angles: &[f64], param: usize) -> Result<Vec<f64>> {
        self.check_angles(angles)?;
        match self.slots.get(param / 3) {
            None => Err(Error::Index {
                what: "parameter",
                index: param,
                len: self.num_params(),
            }),
            Some(Slot::U2 { .. }) => Err(Error::UnsupportedShift(param)),
            Some(Slot::U1 { .. }) => {
                let mut shifted = angles.to_vec();
                shifted[param] += FRAC_PI_2;
                Ok(shifted)
            }
        }
    }

    /// Exact `∂p_k/∂w_m`, choosing the cheaper sweep direction.
    pub fn gradient_exact(
        &self,
        angles: &[f64],
        selection: OutputSelection,
    ) -> Result<GradientMatrix> {
        let q1 = selection.num_outputs(self.num_qubits);
        let s = self.slots.len();
        // forward mode: each parameter's derivative vector is pushed through the rest of the circuit;
        // adjoint mode: one backward sweep per selected output.
        let forward_cost: usize = (0..s).map(|slot| 3 * (s - slot - 1)).sum();
        let adjoint_cost = q1 * s;
        let method = if adjoint_cost < forward_cost {
            GradientMethod::Adjoint
        } else {
            GradientMethod::Forward
        };
        self.gradient_exact_with(angles, selection, method)
    }

    pub fn gradient_exact_with(
        &self,
        angles: &[f64],
        selection: OutputSelection,
        method: GradientMethod,
    ) -> Result<GradientMatrix> {
        self.check_angles(angles)?;
        let prefix = self.prefix_states(angles)?;
        let final_state = &prefix[self.slots.len()];
        let outputs: Vec<usize> = selection.basis_states(self.num_qubits).collect();
        let m_total = self.num_params();
        let mut grad = GradientMatrix::zeros(outputs.len(), m_total);

        match method {
            GradientMethod::Forward => {
                for m in 0..m_total {
                    let b = self.derivative_state_from(&prefix, angles, m);
                    for (row, &k) in outputs.iter().enumerate() {
                        let a = final_state.amplitudes()[k];
                        grad.set(row, m, 2.0 * (a.conj() * b.amplitudes()[k]).re);
                    }
                }
            }
            GradientMethod::Adjoint => {
                let dim = final_state.dim();
                for (row, &k) in outputs.iter().enumerate() {
                    let a = final_state.amplitudes()[k];
                    // λ = (slots after s)† |k⟩
                    let mut basis = vec![Complex64::new(0.0, 0.0); dim];
                    basis[k] = Complex64::new(1.0, 0.0);
                    let mut lambda = StateVector::from_amplitudes(basis)?;
                    for slot in (0..self.slots.len()).rev() {
                        for offset in 0..3 {
                            let d = self.slot_derivative(
                                slot,
                                offset,
                                angles,
                                &prefix[slot],
                                &prefix[slot + 1],
                            );
                            let b = lambda.inner(&d)?;
                            grad.set(row, 3 * slot + offset, 2.0 * (a.conj() * b).re);
                        }
                        self.apply_slot_adjoint(&mut lambda, slot, angles);
                    }
                }
            }
        }
        Ok(grad)
    }

    /// Exact overlaps `r_k, i_k` of `⟨0|W†|k⟩` and `r̃_km, ĩ_km` of `⟨k|W'_m|0⟩`.
    pub fn overlaps(
        &self,
        angles: &[f64],
        selection: OutputSelection,
    ) -> Result<HadamardEstimates> {
        self.check_angles(angles)?;
        let prefix = self.prefix_states(angles)?;
        let final_state = &prefix[self.slots.len()];
        let outputs: Vec<usize> = selection.basis_states(self.num_qubits).collect();
        let m_total = self.num_params();
        let q1 = outputs.len();

        let mut est = HadamardEstimates {
            r: outputs
                .iter()
                .map(|&k| final_state.amplitudes()[k].re)
                .collect(),
            // ⟨0|W†|k⟩ is the conjugate of ⟨k|W|0⟩
            i: outputs
                .iter()
                .map(|&k| -final_state.amplitudes()[k].im)
                .collect(),
            r_shift: vec![0.0; q1 * m_total],
            i_shift: vec![0.0; q1 * m_total],
            num_params: m_total,
            shots: None,
        };
        for m in 0..m_total {
            let b = self.derivative_state_from(&prefix, angles, m);
            for (row, &k) in outputs.iter().enumerate() {
                est.r_shift[row * m_total + m] = b.amplitudes()[k].re;
                est.i_shift[row * m_total + m] = b.amplitudes()[k].im;
            }
        }
        Ok(est)
    }

    /// Hadamard-test estimates: each of the `2·Q₁·(M+1)` overlaps is replaced by
    /// `2f − 1`, with `f` the success frequency of `shots` Bernoulli draws at
    /// probability `(1 + value)/2`.
    pub fn hadamard_estimates(
        &self,
        angles: &[f64],
        selection: OutputSelection,
        shots: u64,
        seed: u64,
    ) -> Result<HadamardEstimates> {
        if shots == 0 {
            return Err(Error::Argument("shots must be at least 1".into()));
        }
        let mut est = self.overlaps(angles, selection)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sample = |value: &mut f64| -> Result<()> {
            let p = ((1.0 + *value) / 2.0).clamp(0.0, 1.0);
            let successes = Binomial::new(shots, p)
                .map_err(|e| Error::Argument(format!("binomial({shots}, {p}): {e}")))?
                .sample(&mut rng);
            *value = 2.0 * successes as f64 / shots as f64 - 1.0;
            Ok(())
        };
        for v in est
            .r
            .iter_mut()
            .chain(est.i.iter_mut())
            .chain(est.r_shift.iter_mut())
            .chain(est.i_shift.iter_mut())
        {
            sample(v)?;
        }
        est.shots = Some(shots);
        Ok(est)
    }

    /// Shot-sampled gradient; deterministic per seed.
    pub fn gradient_sampled(
        &self,
        angles: &[f64],
        selection: OutputSelection,
        shots: u64,
        seed: u64,
    ) -> Result<GradientMatrix> {
        Ok(self
            .hadamard_estimates(angles, selection, shots, seed)?
            .gradient())
    }
}

fn pauli_y() -> [[Complex64; 2]; 2] {
    let z = Complex64::new(0.0, 0.0);
    [[z, -I], [I, z]]
}

fn pauli_z() -> [[Complex64; 2]; 2] {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    [[o, z], [z, -o]]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMethod {
    Forward,
    Adjoint,
}

/// Which output probabilities the quantum model reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OutputSelection {
    /// All `2^N` basis-state probabilities.
    Full,
    /// Only `p(|0…0⟩)`.
    Min,
}

impl OutputSelection {
    pub fn num_outputs(self, num_qubits: usize) -> usize {
        match self {
            OutputSelection::Full => 1 << num_qubits,
            OutputSelection::Min => 1,
        }
    }

    pub fn basis_states(self, num_qubits: usize) -> impl Iterator<Item = usize> {
        0..self.num_outputs(num_qubits)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutputSelection::Full => "full",
            OutputSelection::Min => "min",
        }
    }
}

impl std::str::FromStr for OutputSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(OutputSelection::Full),
            "min" => Ok(OutputSelection::Min),
            other => Err(Error::Argument(format!(
                "output selection must be `full` or `min`, got `{other}`"
            ))),
        }
    }
}

/// `Q₁ × M` matrix of `∂p_k/∂w_m`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GradientMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        GradientMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `upstream · G`: maps a gradient over the outputs to one over the parameters.
    pub fn contract(&self, upstream: &[f64]) -> Vec<f64> {
        debug_assert_eq!(upstream.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &u) in upstream.iter().enumerate() {
            for (o, g) in out.iter_mut().zip(self.row(row)) {
                *o += u * g;
            }
        }
        out
    }
}

/// Overlap values feeding the Hadamard-test gradient formula.
/// `shots` is `None` for exact values.
#[derive(Clone, Debug, PartialEq)]
pub struct HadamardEstimates {
    pub r: Vec<f64>,
    pub i: Vec<f64>,
    /// `Q₁ × M`, row-major.
    pub r_shift: Vec<f64>,
    pub i_shift: Vec<f64>,
    pub num_params: usize,
    pub shots: Option<u64>,
}

impl HadamardEstimates {
    /// `∂p_k/∂w_m = 2(r_k r̃_km − i_k ĩ_km)`.
    pub fn gradient(&self) -> GradientMatrix {
        let m_total = self.num_params;
        let mut g = GradientMatrix::zeros(self.r.len(), m_total);
        for k in 0..self.r.len() {
            for m in 0..m_total {
                let idx = k * m_total + m;
                g.set(
                    k,
                    m,
                    2.0 * (self.r[k] * self.r_shift[idx] - self.i[k] * self.i_shift[idx]),
                );
            }
        }
        g
    }
}

/// Circuits needed for one gradient evaluation: `min(2^N·M, 2·Q₁·(M+1))`.
pub fn circuit_count(layout: &CircuitLayout, selection: OutputSelection) -> u64 {
    let q1 = selection.num_outputs(layout.num_qubits()) as u64;
    circuit_count_for(layout.num_qubits(), layout.num_params() as u64, q1)
}

pub fn circuit_count_for(num_qubits: usize, num_params: u64, num_outputs: u64) -> u64 {
    ((1u64 << num_qubits) * num_params).min(2 * num_outputs * (num_params + 1))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexityQuery {
    pub num_outputs: usize,
    pub num_params: usize,
    pub epsilon: f64,
    pub max_variance: f64,
}

/// Shots per overlap so the mean-squared gradient error is at most ε²:
/// `⌈Q₁·M·max_k V[g_k] / ε²⌉`.
pub fn sample_bound(query: &ComplexityQuery) -> Result<u64> {
    if query.epsilon.is_nan() || query.epsilon <= 0.0 || !query.epsilon.is_finite() {
        return Err(Error::Argument(format!(
            "epsilon must be positive, got {}",
            query.epsilon
        )));
    }
    if query.max_variance.is_nan() || query.max_variance < 0.0 {
        return Err(Error::Argument(format!(
            "variance bound must be non-negative, got {}",
            query.max_variance
        )));
    }
    let raw = query.num_outputs as f64 * query.num_params as f64 * query.max_variance
        / (query.epsilon * query.epsilon);
    // absorb rounding in ε² so exact ratios do not round up by one
    Ok((raw * (1.0 - 1e-12)).ceil().max(1.0) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn su4() -> CircuitLayout {
        CircuitLayout::build(2, &["u1-all", "u2-even", "u1-all"]).unwrap()
    }

    fn random_angles(layout: &CircuitLayout, rng: &mut impl Rng) -> Vec<f64> {
        (0..layout.num_params())
            .map(|_| rng.random_range(0.0..PI))
            .collect()
    }

    /// Central finite differences on `forward`, independent of the gradient code.
    fn finite_difference(
        layout: &CircuitLayout,
        angles: &[f64],
        selection: OutputSelection,
        h: f64,
    ) -> Vec<Vec<f64>> {
        let q1 = selection.num_outputs(layout.num_qubits());
        let mut out = vec![vec![0.0; angles.len()]; q1];
        for m in 0..angles.len() {
            let mut plus = angles.to_vec();
            let mut minus = angles.to_vec();
            plus[m] += h;
            minus[m] -= h;
            let pp = layout.forward(&plus, selection).unwrap();
            let pm = layout.forward(&minus, selection).unwrap();
            for k in 0..q1 {
                out[k][m] = (pp[k] - pm[k]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn layout_examples() {
        let l = su4();
        assert_eq!(l.slots().len(), 5);
        assert_eq!(l.num_params(), 15);

        let l = CircuitLayout::build(1, &["u1-all"]).unwrap();
        assert_eq!((l.slots().len(), l.num_params()), (1, 3));

        let l = CircuitLayout::build(
            4,
            &["u1-all", "u2-even", "u1-all", "u2-odd", "u2-even", "u1-all"],
        )
        .unwrap();
        // 4 + 2 + 4 + 1 + 2 + 4 slots
        assert_eq!(l.slots().len(), 17);
        assert_eq!(l.num_params(), 51);

        // the four-qubit brick wall with the outer U1s of the third layer removed
        let l = CircuitLayout::parse(4, "u1-all,u2-even,u1-all,u2-odd,u1@1,u1@2,u2-even,u1-all")
            .unwrap();
        assert_eq!(l.num_params(), 57);
    }

    #[test]
    fn layout_expansion_order() {
        let l = CircuitLayout::build(5, &["u2-even", "u2-odd", "u1@3", "u2@4:0"]).unwrap();
        let expected = vec![
            Slot::U2 {
                qubit_j: 0,
                qubit_k: 1,
            },
            Slot::U2 {
                qubit_j: 2,
                qubit_k: 3,
            },
            Slot::U2 {
                qubit_j: 1,
                qubit_k: 2,
            },
            Slot::U2 {
                qubit_j: 3,
                qubit_k: 4,
            },
            Slot::U1 { qubit: 3 },
            Slot::U2 {
                qubit_j: 4,
                qubit_k: 0,
            },
        ];
        assert_eq!(l.slots(), expected.as_slice());
        let rebuilt = CircuitLayout::parse(5, &l.to_tokens()).unwrap();
        assert_eq!(rebuilt, l);
    }

    #[test]
    fn layout_errors() {
        assert!(matches!(
            CircuitLayout::build(2, &["u3-all"]),
            Err(Error::LayoutToken(_))
        ));
        assert!(matches!(
            CircuitLayout::build(2, &["u2@0-1"]),
            Err(Error::LayoutToken(_))
        ));
        assert!(matches!(
            CircuitLayout::build(2, &["u1@x"]),
            Err(Error::LayoutToken(_))
        ));
        assert!(matches!(
            CircuitLayout::build(2, &["u1@2"]),
            Err(Error::Index { .. })
        ));
        assert!(matches!(
            CircuitLayout::build(2, &["u2-odd"]),
            Err(Error::EmptyLayer { .. })
        ));
        assert!(matches!(
            CircuitLayout::build(1, &["u2-even"]),
            Err(Error::EmptyLayer { .. })
        ));
        assert!(matches!(
            CircuitLayout::build(3, &["u2@1:1"]),
            Err(Error::Argument(_))
        ));
        assert!(CircuitLayout::build(3, &["u2-odd"]).is_ok());
    }

    #[test]
    fn forward_examples() {
        let p = su4().forward(&[0.0; 15], OutputSelection::Full).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0]);

        let l = CircuitLayout::build(1, &["u1-all"]).unwrap();
        let p = l
            .forward(&[FRAC_PI_4, 0.0, 0.0], OutputSelection::Full)
            .unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        let p = l
            .forward(&[FRAC_PI_4, 0.0, 0.0], OutputSelection::Min)
            .unwrap();
        assert_eq!(p.len(), 1);
        assert!((p[0] - 0.5).abs() < 1e-15);

        assert!(matches!(
            l.forward(&[0.0; 4], OutputSelection::Min),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn single_qubit_gradient_example() {
        let l = CircuitLayout::build(1, &["u1-all"]).unwrap();
        let angles = [FRAC_PI_4, 0.0, 0.0];
        for method in [GradientMethod::Forward, GradientMethod::Adjoint] {
            let g = l
                .gradient_exact_with(&angles, OutputSelection::Min, method)
                .unwrap();
            // p0 = cos²α, so ∂p0/∂α = −sin 2α
            assert!((g.get(0, 0) + 1.0).abs() < 1e-14);
        }
        let fd = finite_difference(&l, &angles, OutputSelection::Min, 1e-5);
        assert!((fd[0][0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn beta_columns_vanish_at_zero_angles() {
        let l = CircuitLayout::parse(3, "u1-all,u2-even,u1-all,u2-odd,u1-all").unwrap();
        let g = l
            .gradient_exact(&vec![0.0; l.num_params()], OutputSelection::Full)
            .unwrap();
        for (s, slot) in l.slots().iter().enumerate() {
            if let Slot::U1 { .. } = slot {
                for k in 0..g.rows() {
                    assert!(g.get(k, 3 * s + 1).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layouts = [
            CircuitLayout::build(1, &["u1-all"]).unwrap(),
            su4(),
            CircuitLayout::parse(3, "u1-all,u2-even,u1-all,u2-odd,u1-all").unwrap(),
            CircuitLayout::parse(4, "u1-all,u2-even,u1-all,u2-odd,u1@1,u1@2,u2-even,u1-all")
                .unwrap(),
        ];
        for layout in &layouts {
            for _ in 0..5 {
                let angles = random_angles(layout, &mut rng);
                for selection in [OutputSelection::Full, OutputSelection::Min] {
                    let fd = finite_difference(layout, &angles, selection, 1e-5);
                    for method in [GradientMethod::Forward, GradientMethod::Adjoint] {
                        let g = layout
                            .gradient_exact_with(&angles, selection, method)
                            .unwrap();
                        for (k, fd_row) in fd.iter().enumerate() {
                            for (m, &expected) in fd_row.iter().enumerate() {
                                let got = g.get(k, m);
                                let err = (got - expected).abs();
                                assert!(
                                    err <= 1e-9 || err / expected.abs() < 1e-6,
                                    "{method:?} k={k} m={m}: {got} vs {expected}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn full_gradient_columns_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layout = CircuitLayout::parse(3, "u1-all,u2-even,u2-odd,u1-all").unwrap();
        let g = layout
            .gradient_exact(&random_angles(&layout, &mut rng), OutputSelection::Full)
            .unwrap();
        for m in 0..g.cols() {
            let sum: f64 = (0..g.rows()).map(|k| g.get(k, m)).sum();
            assert!(sum.abs() < 1e-10);
        }
    }

    #[test]
    fn shifted_angles_examples() {
        let l = CircuitLayout::build(1, &["u1-all"]).unwrap();
        assert_eq!(
            l.shifted_angles(&[0.0; 3], 0).unwrap(),
            vec![FRAC_PI_2, 0.0, 0.0]
        );

        let shifted = l.state(&[FRAC_PI_2, 0.0, 0.0]).unwrap();
        let inserted = l.derivative_state(&[0.0; 3], 0).unwrap();
        for (a, b) in shifted.amplitudes().iter().zip(inserted.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }

        assert!(matches!(
            su4().shifted_angles(&[0.0; 15], 6),
            Err(Error::UnsupportedShift(6))
        ));
        assert!(matches!(
            su4().shifted_angles(&[0.0; 15], 15),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn shifted_circuits_reproduce_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layout = CircuitLayout::parse(3, "u1-all,u2-even,u1-all,u2-odd,u1-all").unwrap();
        let angles = random_angles(&layout, &mut rng);
        let a = layout.state(&angles).unwrap();
        let g = layout
            .gradient_exact(&angles, OutputSelection::Full)
            .unwrap();
        for (s, slot) in layout.slots().iter().enumerate() {
            if !matches!(slot, Slot::U1 { .. }) {
                continue;
            }
            for m in 3 * s..3 * s + 3 {
                let shifted = layout
                    .state(&layout.shifted_angles(&angles, m).unwrap())
                    .unwrap();
                let direct = layout.derivative_state(&angles, m).unwrap();
                for k in 0..a.dim() {
                    assert!((shifted.amplitudes()[k] - direct.amplitudes()[k]).norm() < 1e-12);
                    let via_shift = 2.0 * (a.amplitudes()[k].conj() * shifted.amplitudes()[k]).re;
                    assert!((via_shift - g.get(k, m)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn exact_overlaps_reproduce_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = su4();
        let angles = random_angles(&layout, &mut rng);
        for selection in [OutputSelection::Full, OutputSelection::Min] {
            let est = layout.overlaps(&angles, selection).unwrap();
            let g = layout.gradient_exact(&angles, selection).unwrap();
            let via = est.gradient();
            for (x, y) in via.as_slice().iter().zip(g.as_slice()) {
                assert!((x - y).abs() < 1e-13);
            }
            for v in est
                .r
                .iter()
                .chain(&est.i)
                .chain(&est.r_shift)
                .chain(&est.i_shift)
            {
                assert!(v.abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn sampled_gradient_degenerate_and_deterministic() {
        let l = su4();
        let est = l
            .hadamard_estimates(&[0.0; 15], OutputSelection::Full, 17, 1)
            .unwrap();
        assert_eq!(est.r[0], 1.0);
        assert_eq!(est.shots, Some(17));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let angles = random_angles(&l, &mut rng);
        let a = l
            .gradient_sampled(&angles, OutputSelection::Full, 1000, 42)
            .unwrap();
        let b = l
            .gradient_sampled(&angles, OutputSelection::Full, 1000, 42)
            .unwrap();
        assert_eq!(a, b);
        let c = l
            .gradient_sampled(&angles, OutputSelection::Full, 1000, 43)
            .unwrap();
        assert_ne!(a, c);
        assert!(l
            .gradient_sampled(&angles, OutputSelection::Full, 0, 1)
            .is_err());
    }

    #[test]
    fn sampled_overlaps_are_mean_consistent() {
        let l = CircuitLayout::build(1, &["u1-all"]).unwrap();
        let angles = [0.7, 1.9, 0.4];
        let exact = l.overlaps(&angles, OutputSelection::Full).unwrap();
        let flatten = |e: &HadamardEstimates| -> Vec<f64> {
            e.r.iter()
                .chain(&e.i)
                .chain(&e.r_shift)
                .chain(&e.i_shift)
                .copied()
                .collect()
        };
        let truth = flatten(&exact);
        let shots = 8;
        let seeds = 10_000u64;
        let mut sums = vec![0.0; truth.len()];
        for seed in 0..seeds {
            let est = l
                .hadamard_estimates(&angles, OutputSelection::Full, shots, seed)
                .unwrap();
            for (s, v) in sums.iter_mut().zip(flatten(&est)) {
                *s += v;
            }
        }
        for (sum, t) in sums.iter().zip(&truth) {
            let mean = sum / seeds as f64;
            // per-shot variance of a ±1 outcome with mean t is 1 − t²
            let se = ((1.0 - t * t) / (shots as f64 * seeds as f64)).sqrt();
            assert!(
                (mean - t).abs() <= 3.0 * se + 1e-12,
                "mean {mean} vs {t} (se {se})"
            );
        }
    }

    #[test]
    fn sampled_error_shrinks_with_shots() {
        let l = su4();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let angles = random_angles(&l, &mut rng);
        let exact = l.gradient_exact(&angles, OutputSelection::Min).unwrap();
        let mse = |shots: u64| -> f64 {
            (0..400u64)
                .map(|seed| {
                    let g = l
                        .gradient_sampled(&angles, OutputSelection::Min, shots, seed)
                        .unwrap();
                    g.as_slice()
                        .iter()
                        .zip(exact.as_slice())
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / 400.0
        };
        let mut previous = f64::INFINITY;
        for shots in [16, 32, 64, 128, 256] {
            let current = mse(shots);
            assert!(current < previous, "shots {shots}: {current} >= {previous}");
            previous = current;
        }
    }

    #[test]
    fn circuit_count_examples() {
        assert_eq!(circuit_count(&su4(), OutputSelection::Full), 60);
        assert_eq!(circuit_count(&su4(), OutputSelection::Min), 32);
        let l = CircuitLayout::build(1, &["u1-all"]).unwrap();
        assert_eq!(circuit_count(&l, OutputSelection::Min), 6);
    }

    #[test]
    fn sample_bound_examples() {
        let q = |q1, m, eps, var| ComplexityQuery {
            num_outputs: q1,
            num_params: m,
            epsilon: eps,
            max_variance: var,
        };
        assert_eq!(sample_bound(&q(1, 3, 0.1, 0.25)).unwrap(), 75);
        assert_eq!(sample_bound(&q(4, 15, 0.1, 1.0)).unwrap(), 6000);
        assert_eq!(sample_bound(&q(1, 3, 0.3, 0.25)).unwrap(), 9);
        assert!(sample_bound(&q(1, 3, 0.0, 1.0)).is_err());
    }
}
