//! Residual dilated LSTM stack with a linear output unit.
//!
//! Layer 1 is a standard LSTM block fed with a 12-value input window.
//! Layers 2-4 take the hidden state of the layer below, read their
//! recurrent state from `d` steps back (dilations 3, 6 and 12) and add the
//! lower hidden state inside the output gate product:
//!
//! ```text
//! f = sigmoid(W_f u + V_f h[t-d] + b_f)     i, o likewise
//! g = tanh(W_g u + V_g h[t-d] + b_g)
//! c = f * c[t-d] + i * g
//! h = o * tanh(c)                 (standard)
//! h = o * (tanh(c) + u)           (residual, u = lower hidden state)
//! ```
//!
//! The last hidden state is mapped to a 12-value output by `W_x h + b_x`.

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Gradients, Param, Tape, Var};
use crate::dataset::MONTHS_PER_YEAR;

pub const WINDOW: usize = MONTHS_PER_YEAR;
pub const LAYER_COUNT: usize = 4;
pub const DILATIONS: [usize; LAYER_COUNT] = [1, 3, 6, 12];
pub const RESIDUAL: [bool; LAYER_COUNT] = [false, true, true, true];
pub const CHECKPOINT_FORMAT: &str = "mtlf-rdlstm/1";

/// Gate order used for every per-gate array: forget, input, cell, output.
pub const GATES: [&str; 4] = ["f", "i", "g", "o"];
const FORGET: usize = 0;
const INPUT: usize = 1;
const CELL: usize = 2;
const OUTPUT: usize = 3;

#[derive(Debug, Error)]
pub enum RdLstmError {
    #[error("state size must be at least 1, got {0}")]
    InvalidStateSize(usize),
    #[error("dilation must be at least 1 (layer {layer})")]
    InvalidDilation { layer: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

type Result<T> = std::result::Result<T, RdLstmError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams {
    /// Input weights per gate, `m x input_dim`.
    pub w: [Param; 4],
    /// Recurrent weights per gate, `m x m`.
    pub v: [Param; 4],
    pub b: [Param; 4],
    pub dilation: usize,
    pub residual: bool,
}

impl LstmLayerParams {
    pub fn input_dim(&self) -> usize {
        self.w[0].cols
    }

    pub fn state_size(&self) -> usize {
        self.w[0].rows
    }

    fn params(&self) -> impl Iterator<Item = &Param> {
        self.w.iter().chain(&self.v).chain(&self.b)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.w
            .iter_mut()
            .chain(self.v.iter_mut())
            .chain(self.b.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdLstmNetwork {
    pub layers: Vec<LstmLayerParams>,
    /// `12 x m`.
    pub lu_weights: Param,
    pub lu_bias: Param,
    pub state_size: usize,
}

/// Network with dilations `[1, 3, 6, 12]` and residual shortcuts on layers
/// 2-4, initialized uniformly in `[-1/sqrt(m), 1/sqrt(m)]` with forget-gate
/// biases at one.
pub fn init_network(m: usize, seed: u64) -> Result<RdLstmNetwork> {
    RdLstmNetwork::with_structure(m, seed, DILATIONS, RESIDUAL)
}

impl RdLstmNetwork {
    /// Like [`init_network`] but with arbitrary dilations and residual flags.
    pub fn with_structure(
        m: usize,
        seed: u64,
        dilations: [usize; LAYER_COUNT],
        residual: [bool; LAYER_COUNT],
    ) -> Result<Self> {
        if m < 1 {
            return Err(RdLstmError::InvalidStateSize(m));
        }
        if let Some(layer) = dilations.iter().position(|d| *d < 1) {
            return Err(RdLstmError::InvalidDilation { layer: layer + 1 });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (m as f64).sqrt();
        let mut uniform = |tag: String, rows: usize, cols: usize| {
            let value = (0..rows * cols)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect();
            Param::new(tag, rows, cols, value)
        };
        let mut layers = Vec::with_capacity(LAYER_COUNT);
        for l in 0..LAYER_COUNT {
            let input_dim = if l == 0 { WINDOW } else { m };
            let w = GATES.map(|g| uniform(format!("l{}.W_{g}", l + 1), m, input_dim));
            let v = GATES.map(|g| uniform(format!("l{}.V_{g}", l + 1), m, m));
            let b = GATES.map(|g| {
                let fill = if g == "f" { 1.0 } else { 0.0 };
                Param::new(format!("l{}.b_{g}", l + 1), m, 1, vec![fill; m])
            });
            layers.push(LstmLayerParams {
                w,
                v,
                b,
                dilation: dilations[l],
                residual: residual[l],
            });
        }
        let lu_weights = uniform("lu.W_x".into(), WINDOW, m);
        let lu_bias = Param::zeros("lu.b_x", WINDOW, 1);
        Ok(Self {
            layers,
            lu_weights,
            lu_bias,
            state_size: m,
        })
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out: Vec<&Param> = self.layers.iter().flat_map(|l| l.params()).collect();
        out.push(&self.lu_weights);
        out.push(&self.lu_bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect();
        out.push(&mut self.lu_weights);
        out.push(&mut self.lu_bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Records every parameter on `tape` as a leaf.
    pub fn register(&self, tape: &mut Tape) -> NetworkVars {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerVars {
                w: l.w.each_ref().map(|p| tape.param(p)),
                v: l.v.each_ref().map(|p| tape.param(p)),
                b: l.b.each_ref().map(|p| tape.param(p)),
                dilation: l.dilation,
                residual: l.residual,
                state_size: l.state_size(),
            })
            .collect();
        NetworkVars {
            layers,
            lu_weights: tape.param(&self.lu_weights),
            lu_bias: tape.param(&self.lu_bias),
            state_size: self.state_size,
        }
    }

    /// Runs the network over a sequence of input windows from zero state and
    /// returns one output per window.
    pub fn run(&self, inputs: &[[f64; WINDOW]]) -> Result<Vec<[f64; WINDOW]>> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let mut states = RecurrentState::zeros(&mut tape, &vars);
        inputs
            .iter()
            .map(|x| {
                let xv = tape.constant(x.to_vec());
                let out = network_step(&mut tape, &vars, xv, &mut states)?;
                Ok(tape.value(out).try_into().expect("output has 12 values"))
            })
            .collect()
    }

    pub fn to_checkpoint(&self, seed: u64, hyperparameters: Vec<(String, String)>) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            seed,
            state_size: self.state_size,
            dilations: self.layers.iter().map(|l| l.dilation).collect(),
            residual: self.layers.iter().map(|l| l.residual).collect(),
            hyperparameters,
            params: self
                .params()
                .into_iter()
                .map(|p| CheckpointParam {
                    tag: p.tag.clone(),
                    shape: [p.rows, p.cols],
                    values: p.value.clone(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(RdLstmError::Checkpoint(format!(
                "unknown format '{}'",
                ck.format
            )));
        }
        let dilations: [usize; LAYER_COUNT] = ck
            .dilations
            .clone()
            .try_into()
            .map_err(|_| RdLstmError::Checkpoint("expected 4 dilations".into()))?;
        let residual: [bool; LAYER_COUNT] = ck
            .residual
            .clone()
            .try_into()
            .map_err(|_| RdLstmError::Checkpoint("expected 4 residual flags".into()))?;
        let mut net = Self::with_structure(ck.state_size, ck.seed, dilations, residual)?;
        let mut slots = net.params_mut();
        if slots.len() != ck.params.len() {
            return Err(RdLstmError::Checkpoint(format!(
                "expected {} parameters, found {}",
                slots.len(),
                ck.params.len()
            )));
        }
        for (slot, stored) in slots.iter_mut().zip(&ck.params) {
            if slot.tag != stored.tag
                || [slot.rows, slot.cols] != stored.shape
                || slot.value.len() != stored.values.len()
            {
                return Err(RdLstmError::Checkpoint(format!(
                    "parameter '{}' {:?} does not match '{}' {:?}",
                    stored.tag,
                    stored.shape,
                    slot.tag,
                    [slot.rows, slot.cols]
                )));
            }
            slot.value.copy_from_slice(&stored.values);
        }
        Ok(net)
    }
}

/// Flat, tagged parameter dump of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub seed: u64,
    pub state_size: usize,
    pub dilations: Vec<usize>,
    pub residual: Vec<bool>,
    pub hyperparameters: Vec<(String, String)>,
    pub params: Vec<CheckpointParam>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointParam {
    pub tag: String,
    /// `[rows, cols]`, row-major values.
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let text = serde_json::to_string(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn read(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

/// Tape handles for one layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerVars {
    pub w: [Var; 4],
    pub v: [Var; 4],
    pub b: [Var; 4],
    pub dilation: usize,
    pub residual: bool,
    pub state_size: usize,
}

#[derive(Debug, Clone)]
pub struct NetworkVars {
    pub layers: Vec<LayerVars>,
    pub lu_weights: Var,
    pub lu_bias: Var,
    pub state_size: usize,
}

impl NetworkVars {
    /// Adds the gradient of every network parameter into `net`, in the order
    /// of [`RdLstmNetwork::params_mut`].
    pub fn accumulate_into(&self, grads: &Gradients, net: &mut RdLstmNetwork) {
        let vars = self
            .layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.v).chain(&l.b))
            .chain([&self.lu_weights, &self.lu_bias]);
        for (var, param) in vars.zip(net.params_mut()) {
            grads.accumulate_into(*var, param);
        }
    }
}

/// The last `d` (h, c) pairs of one layer, oldest first.
#[derive(Debug, Clone)]
pub struct LayerState {
    buffer: VecDeque<(Var, Var)>,
}

impl LayerState {
    pub fn zeros(tape: &mut Tape, dilation: usize, m: usize) -> Self {
        let buffer = (0..dilation)
            .map(|_| (tape.zeros(m), tape.zeros(m)))
            .collect();
        Self { buffer }
    }

    /// State from `d` steps back.
    pub fn lagged(&self) -> (Var, Var) {
        *self.buffer.front().expect("buffer holds d >= 1 entries")
    }

    pub fn push(&mut self, h: Var, c: Var) {
        self.buffer.pop_front();
        self.buffer.push_back((h, c));
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RecurrentState {
    pub layers: Vec<LayerState>,
}

impl RecurrentState {
    pub fn zeros(tape: &mut Tape, net: &NetworkVars) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerState::zeros(tape, l.dilation, l.state_size))
                .collect(),
        }
    }
}

/// Activations of one block step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    pub h: Var,
    pub c: Var,
    /// Forget, input, cell-candidate and output activations.
    pub gates: [Var; 4],
}

/// One step of a (possibly residual, possibly dilated) LSTM block. The new
/// state is pushed into `state`.
pub fn lstm_step(
    tape: &mut Tape,
    layer: &LayerVars,
    input: Var,
    state: &mut LayerState,
) -> Result<(Var, Var)> {
    let out = lstm_step_detailed(tape, layer, input, state)?;
    Ok((out.h, out.c))
}

pub fn lstm_step_detailed(
    tape: &mut Tape,
    layer: &LayerVars,
    input: Var,
    state: &mut LayerState,
) -> Result<StepOutput> {
    let expected = tape.shape(layer.w[0]).1;
    let got = tape.value(input).len();
    if got != expected {
        return Err(RdLstmError::Dimension { expected, got });
    }
    let (h_lag, c_lag) = state.lagged();
    let mut pre = [input; 4];
    for (gate, slot) in pre.iter_mut().enumerate() {
        let wx = tape.matvec(layer.w[gate], input)?;
        let vh = tape.matvec(layer.v[gate], h_lag)?;
        let sum = tape.add(wx, vh)?;
        *slot = tape.add(sum, layer.b[gate])?;
    }
    let f = tape.sigmoid(pre[FORGET]);
    let i = tape.sigmoid(pre[INPUT]);
    let g = tape.tanh(pre[CELL]);
    let o = tape.sigmoid(pre[OUTPUT]);
    let keep = tape.mul(f, c_lag)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c);
    let inner = if layer.residual {
        if tape.value(input).len() != layer.state_size {
            return Err(RdLstmError::Dimension {
                expected: layer.state_size,
                got: tape.value(input).len(),
            });
        }
        tape.add(squashed, input)?
    } else {
        squashed
    };
    let h = tape.mul(o, inner)?;
    state.push(h, c);
    Ok(StepOutput {
        h,
        c,
        gates: [f, i, g, o],
    })
}

/// One forward step through all layers and the linear unit.
pub fn network_step(
    tape: &mut Tape,
    net: &NetworkVars,
    x_in: Var,
    states: &mut RecurrentState,
) -> Result<Var> {
    let got = tape.value(x_in).len();
    if got != WINDOW {
        return Err(RdLstmError::Dimension {
            expected: WINDOW,
            got,
        });
    }
    let mut u = x_in;
    for (layer, state) in net.layers.iter().zip(states.layers.iter_mut()) {
        u = lstm_step(tape, layer, u, state)?.0;
    }
    let lin = tape.matvec(net.lu_weights, u)?;
    Ok(tape.add(lin, net.lu_bias)?)
}
