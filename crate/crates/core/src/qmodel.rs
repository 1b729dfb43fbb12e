//! Re-uploading variational circuit regressor.
//!
//! Each of the `L` blocks applies `RY(x̃ᵢ)` on every wire, then per-wire
//! `RX·RY·RZ` trainable rotations, then a CNOT entangler (chain or ring).
//! The prediction is an affine function of ⟨Z⟩ on the first `m` wires.
//! Circuit-angle gradients use the two-term parameter-shift rule, which is
//! exact for `exp(−iθP/2)` rotations.

use std::f64::consts::FRAC_PI_2;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{Axis, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Chain,
    Ring,
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Topology::Chain),
            "ring" => Ok(Topology::Ring),
            other => Err(Error::Config(format!("unknown topology `{other}` (expected chain or ring)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QsmConfig {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub topology: Topology,
    /// Number of wires read out, starting from wire 0.
    pub n_observables: usize,
    /// Clamp embedding angles to [−π, π].
    pub clip_embedding: bool,
}

impl QsmConfig {
    pub fn new(n_qubits: usize, n_layers: usize) -> Self {
        QsmConfig { n_qubits, n_layers, topology: Topology::Chain, n_observables: n_qubits, clip_embedding: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=crate::qsim::MAX_QUBITS).contains(&self.n_qubits) {
            return Err(Error::QubitCount(self.n_qubits));
        }
        if self.n_layers == 0 {
            return Err(Error::Config("the circuit needs at least one layer".into()));
        }
        if !(1..=self.n_qubits).contains(&self.n_observables) {
            return Err(Error::Config(format!(
                "{} observables requested on {} qubits",
                self.n_observables, self.n_qubits
            )));
        }
        Ok(())
    }

    pub fn n_angles(&self) -> usize {
        self.n_layers * self.n_qubits * 3
    }
}

/// Trainable parameters. `angles` is the row-major `L × n_qubits × 3` tensor
/// of (RX, RY, RZ) angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsmParams {
    pub angles: Vec<f64>,
    pub readout_weights: Vec<f64>,
    pub readout_bias: f64,
}

impl QsmParams {
    pub fn zeros(cfg: &QsmConfig) -> Self {
        QsmParams { angles: vec![0.0; cfg.n_angles()], readout_weights: vec![0.0; cfg.n_observables], readout_bias: 0.0 }
    }

    pub fn angle_index(cfg: &QsmConfig, layer: usize, wire: usize, rotation: usize) -> usize {
        (layer * cfg.n_qubits + wire) * 3 + rotation
    }

    pub fn check(&self, cfg: &QsmConfig) -> Result<()> {
        if self.angles.len() != cfg.n_angles() {
            return Err(Error::DimensionMismatch { expected: cfg.n_angles(), found: self.angles.len() });
        }
        if self.readout_weights.len() != cfg.n_observables {
            return Err(Error::DimensionMismatch { expected: cfg.n_observables, found: self.readout_weights.len() });
        }
        if self.flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite model parameter".into()));
        }
        Ok(())
    }

    /// Angles, then readout weights, then the bias.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.angles.clone();
        v.extend(&self.readout_weights);
        v.push(self.readout_bias);
        v
    }

    /// Inverse of [`Self::flat`]; `v` must have the same length.
    pub fn set_flat(&mut self, v: &[f64]) {
        let (a, rest) = v.split_at(self.angles.len());
        let (w, b) = rest.split_at(self.readout_weights.len());
        self.angles.copy_from_slice(a);
        self.readout_weights.copy_from_slice(w);
        self.readout_bias = b[0];
    }
}

fn check_input(cfg: &QsmConfig, x: &[f64]) -> Result<()> {
    if x.len() != cfg.n_qubits {
        return Err(Error::DimensionMismatch { expected: cfg.n_qubits, found: x.len() });
    }
    Ok(())
}

fn embed_angle(cfg: &QsmConfig, v: f64) -> f64 {
    if cfg.clip_embedding {
        v.clamp(-PI, PI)
    } else {
        v
    }
}

/// `RY(x̃ᵢ)` on wire `i` for every wire.
pub fn angle_embed(state: &mut StateVector, x: &[f64]) -> Result<()> {
    if x.len() != state.n_qubits() {
        return Err(Error::DimensionMismatch { expected: state.n_qubits(), found: x.len() });
    }
    for (wire, &angle) in x.iter().enumerate() {
        state.apply_rotation(Axis::Y, wire, angle)?;
    }
    Ok(())
}

fn entangler_pairs(n: usize, topology: Topology) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    if topology == Topology::Ring && n > 1 {
        pairs.push((n - 1, 0));
    }
    pairs
}

/// Per-wire `RX, RY, RZ` (in that order) followed by the CNOT entangler.
/// `layer_angles` holds `n_qubits × 3` angles, wire-major.
pub fn variational_block(state: &mut StateVector, layer_angles: &[f64], topology: Topology) -> Result<()> {
    let n = state.n_qubits();
    if layer_angles.len() != 3 * n {
        return Err(Error::DimensionMismatch { expected: 3 * n, found: layer_angles.len() });
    }
    for wire in 0..n {
        for (k, axis) in [Axis::X, Axis::Y, Axis::Z].into_iter().enumerate() {
            state.apply_rotation(axis, wire, layer_angles[3 * wire + k])?;
        }
    }
    for (c, t) in entangler_pairs(n, topology) {
        state.apply_cnot(c, t)?;
    }
    Ok(())
}

/// Final state `∏ (V(θ⁽ˡ⁾) U_enc(x̃)) |0…0⟩`.
pub fn circuit_state(cfg: &QsmConfig, params: &QsmParams, x: &[f64]) -> Result<StateVector> {
    check_input(cfg, x)?;
    let embed: Vec<f64> = x.iter().map(|&v| embed_angle(cfg, v)).collect();
    let mut state = StateVector::zero(cfg.n_qubits)?;
    let per_layer = 3 * cfg.n_qubits;
    for layer in params.angles.chunks(per_layer).take(cfg.n_layers) {
        angle_embed(&mut state, &embed)?;
        variational_block(&mut state, layer, cfg.topology)?;
    }
    Ok(state)
}

fn readout(params: &QsmParams, z: &[f64]) -> f64 {
    params.readout_bias + params.readout_weights.iter().zip(z).map(|(w, z)| w * z).sum::<f64>()
}

/// ⟨Z⟩ on wires `0..n_observables`.
pub fn expectations(cfg: &QsmConfig, params: &QsmParams, x: &[f64]) -> Result<Vec<f64>> {
    let mut z = circuit_state(cfg, params, x)?.expectation_z_all();
    z.truncate(cfg.n_observables);
    Ok(z)
}

pub fn forward(cfg: &QsmConfig, params: &QsmParams, x: &[f64]) -> Result<f64> {
    cfg.validate()?;
    params.check(cfg)?;
    Ok(readout(params, &expectations(cfg, params, x)?))
}

pub fn predict(cfg: &QsmConfig, params: &QsmParams, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    xs.iter().map(|x| forward(cfg, params, x)).collect()
}

fn check_batch(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Empty("batch".into()));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    Ok(())
}

pub fn loss_mse(cfg: &QsmConfig, params: &QsmParams, x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    check_batch(x, y)?;
    let mut sum = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let r = forward(cfg, params, xi)? - yi;
        sum += r * r;
    }
    Ok(sum / x.len() as f64)
}

/// Gate sequence of the circuit with the slot each trainable angle occupies.
enum Op {
    Embed { wire: usize, feature: usize },
    Trainable { axis: Axis, wire: usize, index: usize },
    Cnot { control: usize, target: usize },
}

fn compile(cfg: &QsmConfig) -> Vec<Op> {
    let n = cfg.n_qubits;
    let mut ops = Vec::new();
    for layer in 0..cfg.n_layers {
        ops.extend((0..n).map(|wire| Op::Embed { wire, feature: wire }));
        for wire in 0..n {
            for (k, axis) in [Axis::X, Axis::Y, Axis::Z].into_iter().enumerate() {
                ops.push(Op::Trainable { axis, wire, index: QsmParams::angle_index(cfg, layer, wire, k) });
            }
        }
        ops.extend(entangler_pairs(n, cfg.topology).into_iter().map(|(control, target)| Op::Cnot { control, target }));
    }
    ops
}

fn run_ops(state: &mut StateVector, ops: &[Op], angles: &[f64], embed: &[f64]) -> Result<()> {
    for op in ops {
        match *op {
            Op::Embed { wire, feature } => state.apply_rotation(Axis::Y, wire, embed[feature])?,
            Op::Trainable { axis, wire, index } => state.apply_rotation(axis, wire, angles[index])?,
            Op::Cnot { control, target } => state.apply_cnot(control, target)?,
        }
    }
    Ok(())
}

/// Prediction and its gradient with respect to every parameter for one input.
///
/// For circuit angle θₚ the shift rule gives
/// `∂ŷ/∂θₚ = [ŷ(θₚ + π/2) − ŷ(θₚ − π/2)] / 2`; since ŷ is affine in the
/// expectations this equals the chain rule through each ⟨Zⱼ⟩. Shifted runs
/// restart from a cached copy of the state just before the shifted gate.
pub fn prediction_gradient(cfg: &QsmConfig, params: &QsmParams, x: &[f64]) -> Result<(f64, QsmParams)> {
    cfg.validate()?;
    params.check(cfg)?;
    check_input(cfg, x)?;
    let embed: Vec<f64> = x.iter().map(|&v| embed_angle(cfg, v)).collect();
    let ops = compile(cfg);
    let mut grad = QsmParams::zeros(cfg);

    let mut state = StateVector::zero(cfg.n_qubits)?;
    let mut checkpoints: Vec<(usize, StateVector)> = Vec::with_capacity(cfg.n_angles());
    for (pos, op) in ops.iter().enumerate() {
        if matches!(op, Op::Trainable { .. }) {
            checkpoints.push((pos, state.clone()));
        }
        run_ops(&mut state, std::slice::from_ref(op), &params.angles, &embed)?;
    }
    let mut z = state.expectation_z_all();
    z.truncate(cfg.n_observables);
    let y_hat = readout(params, &z);
    grad.readout_weights.copy_from_slice(&z);
    grad.readout_bias = 1.0;

    if params.readout_weights.iter().all(|&w| w == 0.0) {
        return Ok((y_hat, grad));
    }
    let mut scratch = StateVector::zero(cfg.n_qubits)?;
    for (pos, before) in checkpoints {
        let Op::Trainable { axis, wire, index } = ops[pos] else { unreachable!() };
        let mut shifted = [0.0; 2];
        for (slot, shift) in [FRAC_PI_2, -FRAC_PI_2].into_iter().enumerate() {
            scratch.clone_from(&before);
            scratch.apply_rotation(axis, wire, params.angles[index] + shift)?;
            run_ops(&mut scratch, &ops[pos + 1..], &params.angles, &embed)?;
            let mut zs = scratch.expectation_z_all();
            zs.truncate(cfg.n_observables);
            shifted[slot] = readout(params, &zs);
        }
        grad.angles[index] = (shifted[0] - shifted[1]) / 2.0;
    }
    Ok((y_hat, grad))
}

/// Batch MSE and its gradient, accumulated row by row in input order.
pub fn loss_and_gradient(cfg: &QsmConfig, params: &QsmParams, x: &[Vec<f64>], y: &[f64]) -> Result<(f64, QsmParams)> {
    check_batch(x, y)?;
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut total = vec![0.0; cfg.n_angles() + cfg.n_observables + 1];
    for (xi, &yi) in x.iter().zip(y) {
        let (y_hat, g) = prediction_gradient(cfg, params, xi)?;
        let r = y_hat - yi;
        loss += r * r;
        for (t, gi) in total.iter_mut().zip(g.flat()) {
            *t += 2.0 * r * gi / n;
        }
    }
    let mut grad = QsmParams::zeros(cfg);
    grad.set_flat(&total);
    Ok((loss / n, grad))
}

pub fn grad_parameter_shift(cfg: &QsmConfig, params: &QsmParams, x: &[Vec<f64>], y: &[f64]) -> Result<QsmParams> {
    loss_and_gradient(cfg, params, x, y).map(|(_, g)| g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 200, batch_size: 64, learning_rate: 0.05, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, rng_seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid training settings {self:?}")));
        }
        Ok(())
    }
}

/// Initial parameters: angles uniform in (−0.1, 0.1), zero readout weights,
/// bias at the target mean.
pub fn initial_params(cfg: &QsmConfig, train_cfg: &TrainConfig, y: &[f64]) -> QsmParams {
    let mut rng = ChaCha20Rng::seed_from_u64(train_cfg.rng_seed);
    let mut params = QsmParams::zeros(cfg);
    for a in params.angles.iter_mut() {
        *a = rng.random_range(-0.1..0.1);
    }
    params.readout_bias = y.iter().sum::<f64>() / y.len().max(1) as f64;
    params
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: QsmParams,
    /// Full training-set MSE before training (entry 0) and after each epoch.
    pub loss_trace: Vec<f64>,
}

/// Minibatch Adam on the MSE. The shuffling stream is seeded from
/// `rng_seed`, independent of the initialization stream.
pub fn train(cfg: &QsmConfig, train_cfg: &TrainConfig, x: &[Vec<f64>], y: &[f64]) -> Result<TrainOutcome> {
    cfg.validate()?;
    train_cfg.validate()?;
    check_batch(x, y)?;
    let mut params = initial_params(cfg, train_cfg, y);
    let mut trace = vec![finite_loss(cfg, &params, x, y, 0)?];

    let mut rng = ChaCha20Rng::seed_from_u64(train_cfg.rng_seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let dim = cfg.n_angles() + cfg.n_observables + 1;
    let (mut m, mut v) = (vec![0.0; dim], vec![0.0; dim]);
    let mut step = 0i32;
    for epoch in 1..=train_cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(train_cfg.batch_size) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| x[i].clone()).collect();
            let by: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            let (_, grad) = loss_and_gradient(cfg, &params, &bx, &by)?;
            step += 1;
            let mut flat = params.flat();
            let b1t = 1.0 - train_cfg.beta1.powi(step);
            let b2t = 1.0 - train_cfg.beta2.powi(step);
            for (((p, g), mi), vi) in flat.iter_mut().zip(grad.flat()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = train_cfg.beta1 * *mi + (1.0 - train_cfg.beta1) * g;
                *vi = train_cfg.beta2 * *vi + (1.0 - train_cfg.beta2) * g * g;
                *p -= train_cfg.learning_rate * (*mi / b1t) / ((*vi / b2t).sqrt() + train_cfg.epsilon);
            }
            params.set_flat(&flat);
        }
        trace.push(finite_loss(cfg, &params, x, y, epoch)?);
    }
    Ok(TrainOutcome { params, loss_trace: trace })
}

fn finite_loss(cfg: &QsmConfig, params: &QsmParams, x: &[Vec<f64>], y: &[f64], epoch: usize) -> Result<f64> {
    let loss = loss_mse(cfg, params, x, y)?;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("training loss became {loss} at epoch {epoch}")));
    }
    Ok(loss)
}

/// Configuration and parameters saved together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsmCheckpoint {
    pub config: QsmConfig,
    pub params: QsmParams,
}
