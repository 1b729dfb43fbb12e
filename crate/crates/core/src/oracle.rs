//! Reference implementations for tests. Nothing here is used by the library.

/// Dense 2ⁿ×2ⁿ operators built from Kronecker products, for checking the
/// statevector kernels.
pub mod dense {
    use num_complex::Complex64;
    use rand::Rng;

    use crate::qsim::{Axis, Gate};

    pub type Matrix = Vec<Vec<Complex64>>;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub fn identity(dim: usize) -> Matrix {
        (0..dim).map(|i| (0..dim).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect()).collect()
    }

    pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
        let (ra, rb) = (a.len(), b.len());
        let mut out = vec![vec![c(0.0, 0.0); ra * rb]; ra * rb];
        for i in 0..ra {
            for j in 0..ra {
                for k in 0..rb {
                    for l in 0..rb {
                        out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                    }
                }
            }
        }
        out
    }

    pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let n = a.len();
        let mut out = vec![vec![c(0.0, 0.0); n]; n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    pub fn add(a: &Matrix, b: &Matrix) -> Matrix {
        a.iter().zip(b).map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect()).collect()
    }

    pub fn matvec(m: &Matrix, v: &[Complex64]) -> Vec<Complex64> {
        m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn rotation(axis: Axis, angle: f64) -> Matrix {
        let (s, co) = (angle / 2.0).sin_cos();
        match axis {
            Axis::X => vec![vec![c(co, 0.0), c(0.0, -s)], vec![c(0.0, -s), c(co, 0.0)]],
            Axis::Y => vec![vec![c(co, 0.0), c(-s, 0.0)], vec![c(s, 0.0), c(co, 0.0)]],
            Axis::Z => vec![vec![c(co, -s), c(0.0, 0.0)], vec![c(0.0, 0.0), c(co, s)]],
        }
    }

    pub fn pauli_x() -> Matrix {
        vec![vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]
    }

    pub fn pauli_z() -> Matrix {
        vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(-1.0, 0.0)]]
    }

    fn projector(bit: usize) -> Matrix {
        let mut p = vec![vec![c(0.0, 0.0); 2]; 2];
        p[bit][bit] = c(1.0, 0.0);
        p
    }

    /// `⊗_w factors[w]` with wire 0 leftmost (most significant).
    pub fn kron_all(factors: &[Matrix]) -> Matrix {
        factors.iter().skip(1).fold(factors[0].clone(), |acc, f| kron(&acc, f))
    }

    /// Embeds a single-qubit operator on `wire` of an `n`-qubit register.
    pub fn on_wire(op: &Matrix, wire: usize, n: usize) -> Matrix {
        let factors: Vec<Matrix> = (0..n).map(|w| if w == wire { op.clone() } else { identity(2) }).collect();
        kron_all(&factors)
    }

    pub fn cnot(control: usize, target: usize, n: usize) -> Matrix {
        let term = |bit: usize, target_op: Matrix| {
            let factors: Vec<Matrix> = (0..n)
                .map(|w| {
                    if w == control {
                        projector(bit)
                    } else if w == target {
                        target_op.clone()
                    } else {
                        identity(2)
                    }
                })
                .collect();
            kron_all(&factors)
        };
        add(&term(0, identity(2)), &term(1, pauli_x()))
    }

    pub fn gate_matrix(gate: &Gate, n: usize) -> Matrix {
        match *gate {
            Gate::Rotation { axis, wire, angle } => on_wire(&rotation(axis, angle), wire, n),
            Gate::Cnot { control, target } => cnot(control, target, n),
        }
    }

    /// Product of gate matrices, first gate applied first.
    pub fn circuit_matrix(gates: &[Gate], n: usize) -> Matrix {
        gates.iter().fold(identity(1 << n), |acc, g| matmul(&gate_matrix(g, n), &acc))
    }

    pub fn z_on(wire: usize, n: usize) -> Matrix {
        on_wire(&pauli_z(), wire, n)
    }

    /// ⟨ψ|O|ψ⟩ for Hermitian `O`.
    pub fn expectation(op: &Matrix, psi: &[Complex64]) -> f64 {
        let o_psi = matvec(op, psi);
        psi.iter().zip(&o_psi).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn zero_state(n: usize) -> Vec<Complex64> {
        let mut v = vec![c(0.0, 0.0); 1 << n];
        v[0] = c(1.0, 0.0);
        v
    }

    /// Random normalised state on `n` qubits.
    pub fn random_state<R: Rng>(rng: &mut R, n: usize) -> Vec<Complex64> {
        let v: Vec<Complex64> =
            (0..1 << n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|a| a / norm).collect()
    }
}
