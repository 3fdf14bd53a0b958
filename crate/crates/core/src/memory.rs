//! External neural memory: an `l x k` slot matrix read by softmax attention
//! and written by a per-slot convex blend.
//!
//! One full interaction per time step: an LSTM read controller turns the
//! stream hidden state into a query, attention over the slots produces a
//! score vector, the weighted read vector and the hidden state pass through
//! an MLP to give the memory output, and an LSTM write controller turns that
//! output into the write vector blended into every slot. Reads see the slot
//! matrix from the previous step; the write lands in the current one.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::recurrent::{
    lstm_step, mlp_forward, BoundLstm, BoundMlp, LstmParams, LstmState, MlpParams,
};
use crate::tensor::{Tape, Tensor, TensorId};

/// Slot count `l` and per-slot embedding width `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    pub slots: usize,
    pub slot_dim: usize,
}

impl MemoryConfig {
    pub fn new(slots: usize, slot_dim: usize) -> Result<Self> {
        if slots == 0 || slot_dim == 0 {
            return Err(Error::Config(format!(
                "memory needs at least one slot and one dimension, got {slots}x{slot_dim}"
            )));
        }
        Ok(MemoryConfig { slots, slot_dim })
    }
}

/// Learnable parameters of one memory module. The read and write controllers
/// are LSTM cells over the slot width; the output MLP fuses the stream hidden
/// state with the read vector (`2k -> k -> k`).
#[derive(Clone, Debug)]
pub struct MemoryParams {
    pub config: MemoryConfig,
    pub read_cell: LstmParams,
    pub write_cell: LstmParams,
    pub output_mlp: MlpParams,
}

impl MemoryParams {
    pub fn init(config: MemoryConfig, rng: &mut ChaCha8Rng) -> Self {
        let k = config.slot_dim;
        MemoryParams {
            config,
            read_cell: LstmParams::init(k, k, rng),
            write_cell: LstmParams::init(k, k, rng),
            output_mlp: MlpParams::init(2 * k, k, k, rng),
        }
    }

    pub fn zeros(config: MemoryConfig) -> Self {
        let k = config.slot_dim;
        MemoryParams {
            config,
            read_cell: LstmParams::zeros(k, k),
            write_cell: LstmParams::zeros(k, k),
            output_mlp: MlpParams::zeros(2 * k, k, k),
        }
    }

    /// (name, tensor) pairs in canonical order.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(20);
        for (n, t) in self.read_cell.tensors() {
            out.push((format!("read_cell.{n}"), t));
        }
        for (n, t) in self.write_cell.tensors() {
            out.push((format!("write_cell.{n}"), t));
        }
        for (n, t) in self.output_mlp.tensors() {
            out.push((format!("output_mlp.{n}"), t));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::with_capacity(20);
        for (n, t) in self.read_cell.tensors_mut() {
            out.push((format!("read_cell.{n}"), t));
        }
        for (n, t) in self.write_cell.tensors_mut() {
            out.push((format!("write_cell.{n}"), t));
        }
        for (n, t) in self.output_mlp.tensors_mut() {
            out.push((format!("output_mlp.{n}"), t));
        }
        out
    }

    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> BoundMemory {
        let ids: Vec<TensorId> = self
            .tensors()
            .into_iter()
            .map(|(_, t)| {
                let mut t = t.clone();
                t.requires_grad = requires_grad;
                t.grad = None;
                tape.leaf(t)
            })
            .collect();
        self.wire(&mut ids.into_iter())
    }

    pub fn wire(&self, ids: &mut impl Iterator<Item = TensorId>) -> BoundMemory {
        BoundMemory {
            config: self.config,
            read_cell: self.read_cell.wire(ids),
            write_cell: self.write_cell.wire(ids),
            output_mlp: self.output_mlp.wire(ids),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundMemory {
    pub config: MemoryConfig,
    read_cell: BoundLstm,
    write_cell: BoundLstm,
    output_mlp: BoundMlp,
}

/// Memory state bound to a tape: the slot matrix plus both controller states.
#[derive(Clone, Copy, Debug)]
pub struct MemoryState {
    /// `l x k` slot matrix.
    pub slots: TensorId,
    pub read_controller: LstmState,
    pub write_controller: LstmState,
}

impl MemoryState {
    /// Fresh state: all-zero slots (the first attention is therefore uniform)
    /// and zero controller states.
    pub fn zeros(tape: &mut Tape, config: MemoryConfig) -> Result<Self> {
        let slots = tape.leaf(Tensor::zeros(&[config.slots, config.slot_dim])?);
        Ok(MemoryState {
            slots,
            read_controller: LstmState::zeros(tape, config.slot_dim)?,
            write_controller: LstmState::zeros(tape, config.slot_dim)?,
        })
    }

    /// Fresh controller states but slots carried over from a previous
    /// sequence (the `persist_memory` path). The carried matrix enters as a
    /// constant: gradients do not flow across sequence boundaries.
    pub fn with_slots(tape: &mut Tape, config: MemoryConfig, slots: &Tensor) -> Result<Self> {
        if slots.shape != [config.slots, config.slot_dim] {
            return Err(Error::dims(
                "memory_state",
                &slots.shape,
                &[config.slots, config.slot_dim],
            ));
        }
        let mut t = slots.clone();
        t.requires_grad = false;
        t.grad = None;
        let slots = tape.leaf(t);
        Ok(MemoryState {
            slots,
            read_controller: LstmState::zeros(tape, config.slot_dim)?,
            write_controller: LstmState::zeros(tape, config.slot_dim)?,
        })
    }
}

/// Everything the read operation produces for one step.
#[derive(Clone, Copy, Debug)]
pub struct ReadResult {
    /// Memory output `c` (MLP fusion of hidden state and read vector).
    pub output: TensorId,
    /// Attention scores `z` over the slots (a probability vector).
    pub scores: TensorId,
    /// Raw weighted read vector `m`.
    pub read_vec: TensorId,
    /// Query `q` produced by the read controller.
    pub query: TensorId,
}

/// Softmax over the dot products of the query with every slot row.
pub fn attend(tape: &mut Tape, query: TensorId, slots: TensorId) -> Result<TensorId> {
    let sq = tape.shape(query);
    let sm = tape.shape(slots);
    if sq.len() != 1 || sm.len() != 2 || sm[1] != sq[0] {
        return Err(Error::dims("attend", sq, sm));
    }
    let scores = tape.matmul(slots, query)?;
    tape.softmax_row(scores)
}

/// One read: advance the read controller on `hidden`, attend, form the
/// weighted read vector, and fuse through the output MLP. The slot matrix is
/// not modified. Returns the read result and the advanced controller state.
pub fn read_step(
    tape: &mut Tape,
    mem: &BoundMemory,
    hidden: TensorId,
    state: &MemoryState,
) -> Result<(ReadResult, LstmState)> {
    let read_state = lstm_step(tape, &mem.read_cell, hidden, &state.read_controller)?;
    let query = read_state.h;
    let scores = attend(tape, query, state.slots)?;
    let read_vec = tape.matmul(scores, state.slots)?;
    let fused_in = tape.concat(hidden, read_vec)?;
    let output = mlp_forward(tape, &mem.output_mlp, fused_in)?;
    Ok((ReadResult { output, scores, read_vec, query }, read_state))
}

/// One write: advance the write controller on the memory output `c` and blend
/// the resulting write vector into every slot with its attention score:
/// `M'[i,:] = (1 - z[i]) * M[i,:] + z[i] * o`.
pub fn write_step(
    tape: &mut Tape,
    mem: &BoundMemory,
    output: TensorId,
    scores: TensorId,
    state: &MemoryState,
) -> Result<MemoryState> {
    let z = tape.data(scores);
    let total: f64 = z.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!(
            "write_step scores must be normalized, sum = {total}"
        )));
    }
    let write_state = lstm_step(tape, &mem.write_cell, output, &state.write_controller)?;
    let slots = tape.slot_blend(state.slots, scores, write_state.h)?;
    Ok(MemoryState {
        slots,
        read_controller: state.read_controller,
        write_controller: write_state,
    })
}

/// One full memory interaction: read against the previous slot matrix, then
/// write the produced output back. Returns the memory output and the fully
/// advanced state.
pub fn memory_step(
    tape: &mut Tape,
    mem: &BoundMemory,
    hidden: TensorId,
    state: &MemoryState,
) -> Result<(TensorId, MemoryState)> {
    let (read, read_state) = read_step(tape, mem, hidden, state)?;
    let mid = MemoryState {
        slots: state.slots,
        read_controller: read_state,
        write_controller: state.write_controller,
    };
    let next = write_step(tape, mem, read.output, read.scores, &mid)?;
    Ok((read.output, next))
}
