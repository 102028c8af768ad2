//! Dense statevector register and the in-place gate kernels.
//!
//! Qubit `k` is bit `k` of the basis index, so qubit 0 is the least
//! significant bit. For two qubits the basis order is `|q1 q0⟩ = 00, 01, 10, 11`
//! and basis index 1 means qubit 0 is set.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest register this simulator will allocate.
pub const MAX_QUBITS: usize = 12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Single-qubit unitary `exp(iαY) exp(iβZ) exp(iγY)` on `qubit`; the γ rotation acts first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateU1 {
    pub qubit: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Two-qubit unitary `exp(iθ XX + iφ YY + iη ZZ)` on the pair `(qubit_j, qubit_k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateU2 {
    pub qubit_j: usize,
    pub qubit_k: usize,
    pub theta: f64,
    pub phi: f64,
    pub eta: f64,
}

/// Hermitian Pauli strings generating the U1/U2 rotations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliGenerator {
    Y(usize),
    Z(usize),
    XX(usize, usize),
    YY(usize, usize),
    ZZ(usize, usize),
}

type Mat2 = [[Complex64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

/// `exp(i t Y) = cos t I + i sin t Y`, which is real.
pub(crate) fn y_rotation(t: f64) -> Mat2 {
    let (s, c) = t.sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
        [Complex64::new(-s, 0.0), Complex64::new(c, 0.0)],
    ]
}

/// `exp(i t Z) = diag(e^{it}, e^{-it})`.
pub(crate) fn z_rotation(t: f64) -> Mat2 {
    [
        [Complex64::from_polar(1.0, t), ZERO],
        [ZERO, Complex64::from_polar(1.0, -t)],
    ]
}

impl GateU1 {
    pub fn new(qubit: usize, alpha: f64, beta: f64, gamma: f64) -> Self {
        GateU1 {
            qubit,
            alpha,
            beta,
            gamma,
        }
    }

    pub(crate) fn matrix(&self) -> Mat2 {
        mat_mul(
            &y_rotation(self.alpha),
            &mat_mul(&z_rotation(self.beta), &y_rotation(self.gamma)),
        )
    }
}

impl GateU2 {
    pub fn new(qubit_j: usize, qubit_k: usize, theta: f64, phi: f64, eta: f64) -> Self {
        GateU2 {
            qubit_j,
            qubit_k,
            theta,
            phi,
            eta,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// The reference state `|0…0⟩`.
    pub fn init_zero(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::QubitCount(num_qubits));
        }
        let mut amplitudes = vec![ZERO; 1 << num_qubits];
        amplitudes[0] = ONE;
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes. The length must be a power of two within the size cap;
    /// normalization is not checked.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Argument(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(Error::QubitCount(num_qubits));
        }
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn amplitude(&self, basis_index: usize) -> Result<Complex64> {
        self.amplitudes
            .get(basis_index)
            .copied()
            .ok_or(Error::Index {
                what: "basis state",
                index: basis_index,
                len: self.amplitudes.len(),
            })
    }

    /// `|amplitude_k|²` for every basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::dimension("inner product", self.dim(), other.dim()));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub(crate) fn scale(&mut self, factor: Complex64) {
        for a in &mut self.amplitudes {
            *a *= factor;
        }
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::Index {
                what: "qubit",
                index: qubit,
                len: self.num_qubits,
            });
        }
        Ok(())
    }

    fn check_pair(&self, j: usize, k: usize) -> Result<()> {
        self.check_qubit(j)?;
        self.check_qubit(k)?;
        if j == k {
            return Err(Error::Argument(format!(
                "two-qubit operation needs distinct qubits, got {j} twice"
            )));
        }
        Ok(())
    }

    /// Applies a 2×2 matrix to `qubit`. Indices are not checked.
    pub(crate) fn apply_mat2(&mut self, qubit: usize, m: &Mat2) {
        let stride = 1usize << qubit;
        let dim = self.amplitudes.len();
        for block in (0..dim).step_by(stride << 1) {
            for i0 in block..block + stride {
                let i1 = i0 + stride;
                let a0 = self.amplitudes[i0];
                let a1 = self.amplitudes[i1];
                self.amplitudes[i0] = m[0][0] * a0 + m[0][1] * a1;
                self.amplitudes[i1] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    pub fn apply_u1(&mut self, gate: &GateU1) -> Result<()> {
        self.check_qubit(gate.qubit)?;
        self.apply_mat2(gate.qubit, &gate.matrix());
        Ok(())
    }

    /// The XX, YY and ZZ terms commute, so the exponential splits into two
    /// invariant 2×2 blocks: `{|00⟩,|11⟩}` rotated by θ−φ with phase e^{iη},
    /// and `{|01⟩,|10⟩}` rotated by θ+φ with phase e^{−iη}.
    pub fn apply_u2(&mut self, gate: &GateU2) -> Result<()> {
        self.check_pair(gate.qubit_j, gate.qubit_k)?;
        let bj = 1usize << gate.qubit_j;
        let bk = 1usize << gate.qubit_k;
        let mask = bj | bk;

        let (sa, ca) = (gate.theta - gate.phi).sin_cos();
        let (sb, cb) = (gate.theta + gate.phi).sin_cos();
        let pa = Complex64::from_polar(1.0, gate.eta);
        let pb = pa.conj();
        let (diag_a, off_a) = (pa * ca, pa * I * sa);
        let (diag_b, off_b) = (pb * cb, pb * I * sb);

        for i00 in (0..self.amplitudes.len()).filter(|i| i & mask == 0) {
            let i11 = i00 | mask;
            let (i01, i10) = (i00 | bk, i00 | bj);

            let (a, d) = (self.amplitudes[i00], self.amplitudes[i11]);
            self.amplitudes[i00] = diag_a * a + off_a * d;
            self.amplitudes[i11] = off_a * a + diag_a * d;

            let (b, c) = (self.amplitudes[i01], self.amplitudes[i10]);
            self.amplitudes[i01] = diag_b * b + off_b * c;
            self.amplitudes[i10] = off_b * b + diag_b * c;
        }
        Ok(())
    }

    /// Multiplies by the Pauli string. The result is a derivative direction,
    /// not a physical state; the `i` factor of the derivative is up to the caller.
    pub fn apply_generator(&mut self, generator: &PauliGenerator) -> Result<()> {
        match *generator {
            PauliGenerator::Y(k) => {
                self.check_qubit(k)?;
                // Y|0⟩ = i|1⟩, Y|1⟩ = −i|0⟩
                self.apply_mat2(k, &[[ZERO, -I], [I, ZERO]]);
            }
            PauliGenerator::Z(k) => {
                self.check_qubit(k)?;
                let bit = 1usize << k;
                for (idx, a) in self.amplitudes.iter_mut().enumerate() {
                    if idx & bit != 0 {
                        *a = -*a;
                    }
                }
            }
            PauliGenerator::XX(j, k) => {
                self.check_pair(j, k)?;
                self.swap_pairs(j, k, |_| 1.0);
            }
            PauliGenerator::YY(j, k) => {
                self.check_pair(j, k)?;
                // Y⊗Y picks up −1 when the two bits agree.
                self.swap_pairs(j, k, |bits_equal| if bits_equal { -1.0 } else { 1.0 });
            }
            PauliGenerator::ZZ(j, k) => {
                self.check_pair(j, k)?;
                let (bj, bk) = (1usize << j, 1usize << k);
                for (idx, a) in self.amplitudes.iter_mut().enumerate() {
                    if ((idx & bj) != 0) != ((idx & bk) != 0) {
                        *a = -*a;
                    }
                }
            }
        }
        Ok(())
    }

    /// Exchanges `|..b_j..b_k..⟩ ↔ |..¬b_j..¬b_k..⟩` with a sign chosen by whether
    /// the original bits were equal.
    fn swap_pairs(&mut self, j: usize, k: usize, sign: impl Fn(bool) -> f64) {
        let (bj, bk) = (1usize << j, 1usize << k);
        let mask = bj | bk;
        for lo in (0..self.amplitudes.len()).filter(|i| i & bj == 0) {
            let hi = lo ^ mask;
            let bits_equal = (lo & bk) == 0;
            let s = sign(bits_equal);
            self.amplitudes.swap(lo, hi);
            self.amplitudes[lo] *= s;
            self.amplitudes[hi] *= s;
        }
    }
}
