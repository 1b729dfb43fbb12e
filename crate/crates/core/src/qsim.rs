//! Exact statevector simulation for the gate set {RX, RY, RZ, CNOT}.
//!
//! Qubit 0 is the most significant bit of the amplitude index: on three
//! qubits, `|q0 q1 q2⟩ = |1 0 0⟩` is amplitude 4. Rotations follow the
//! `exp(−iθP/2)` convention. Every gate touches each amplitude once, so a
//! gate costs O(2ⁿ) and no dense operator is ever formed.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rotation { axis: Axis, wire: usize, angle: f64 },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn inverse(self) -> Gate {
        match self {
            Gate::Rotation { axis, wire, angle } => Gate::Rotation { axis, wire, angle: -angle },
            cnot @ Gate::Cnot { .. } => cnot,
        }
    }
}

/// Pauli-Z on a single wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observable {
    pub wire: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n` qubits.
    pub fn zero(n: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n) {
            return Err(Error::QubitCount(n));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n_qubits: n, amplitudes })
    }

    /// Wraps raw amplitudes; the length must be a power of two. The caller is
    /// responsible for normalisation.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if !len.is_power_of_two() || len < 2 {
            return Err(Error::DimensionMismatch { expected: len.next_power_of_two().max(2), found: len });
        }
        let n = len.trailing_zeros() as usize;
        if n > MAX_QUBITS {
            return Err(Error::QubitCount(n));
        }
        Ok(StateVector { n_qubits: n, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn mask(&self, wire: usize) -> Result<usize> {
        if wire >= self.n_qubits {
            return Err(Error::WireOutOfRange { wire, n_qubits: self.n_qubits });
        }
        Ok(1 << (self.n_qubits - 1 - wire))
    }

    /// Applies `exp(−i·angle·P/2)` on `wire`.
    pub fn apply_rotation(&mut self, axis: Axis, wire: usize, angle: f64) -> Result<()> {
        let mask = self.mask(wire)?;
        let (s, c) = (angle / 2.0).sin_cos();
        // [[m00, m01], [m10, m11]] acting on (amp with bit 0, amp with bit 1).
        let zero = Complex64::new(0.0, 0.0);
        let (m00, m01, m10, m11) = match axis {
            Axis::X => (Complex64::new(c, 0.0), Complex64::new(0.0, -s), Complex64::new(0.0, -s), Complex64::new(c, 0.0)),
            Axis::Y => (Complex64::new(c, 0.0), Complex64::new(-s, 0.0), Complex64::new(s, 0.0), Complex64::new(c, 0.0)),
            Axis::Z => (Complex64::new(c, -s), zero, zero, Complex64::new(c, s)),
        };
        for i in 0..self.amplitudes.len() {
            if i & mask == 0 {
                let j = i | mask;
                let (a0, a1) = (self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = m00 * a0 + m01 * a1;
                self.amplitudes[j] = m10 * a0 + m11 * a1;
            }
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        if control == target {
            return Err(Error::SameWires(control));
        }
        let cmask = self.mask(control)?;
        let tmask = self.mask(target)?;
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        match *gate {
            Gate::Rotation { axis, wire, angle } => self.apply_rotation(axis, wire, angle),
            Gate::Cnot { control, target } => self.apply_cnot(control, target),
        }
    }

    /// ⟨ψ|Z_wire|ψ⟩.
    pub fn expectation_z(&self, wire: usize) -> Result<f64> {
        let mask = self.mask(wire)?;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }

    pub fn expectation(&self, observable: Observable) -> Result<f64> {
        self.expectation_z(observable.wire)
    }

    /// ⟨Z⟩ on every wire in one pass over the amplitudes.
    pub fn expectation_z_all(&self) -> Vec<f64> {
        let n = self.n_qubits;
        let mut z = vec![0.0; n];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            for (w, zw) in z.iter_mut().enumerate() {
                if i & (1 << (n - 1 - w)) == 0 {
                    *zw += p;
                } else {
                    *zw -= p;
                }
            }
        }
        z
    }
}
