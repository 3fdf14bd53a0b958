//! The dual-stream forecaster: per-stream encoder LSTMs, per-stream external
//! memories, concatenation fusion, a decoder LSTM and a softmax head, plus
//! the autoregressive rollout that feeds each predicted class back into the
//! label stream.
//!
//! Ablation variants keep the same step skeleton but swap which streams and
//! memories exist:
//!
//! - `a` visual stream, encoder + decoder only
//! - `b` label stream, encoder + decoder only
//! - `c` visual stream with its memory
//! - `d` label stream with its memory
//! - `e` both streams concatenated into one shared memory
//! - `full` the proposed model with two memories

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grammar::{one_hot_row, Sample};
use crate::harness::windows;
use crate::memory::{memory_step, BoundMemory, MemoryConfig, MemoryParams, MemoryState};
use crate::recurrent::{
    dense_softmax, lstm_step, uniform_tensor, BoundDense, BoundLstm, DenseSoftmaxParams,
    LstmParams, LstmState,
};
use crate::tensor::{Tape, Tensor, TensorId};

/// What the visual encoder receives on future steps, where no frames exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FutureInput {
    Zeros,
    LearnedToken,
}

/// Model dimensions. The memory slot widths must equal the corresponding
/// stream hidden sizes so queries can be dotted against slots.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecasterConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub hidden_visual: usize,
    pub hidden_label: usize,
    pub mem_visual: MemoryConfig,
    pub mem_label: MemoryConfig,
    pub decoder_hidden: usize,
    pub persist_memory: bool,
    pub future_visual_input: FutureInput,
}

impl ForecasterConfig {
    /// The dimensions reported by the reference experiments: stream hiddens
    /// 300/30, memories 24x300 and 20x30, decoder hidden 300.
    pub fn paper_defaults(num_classes: usize, feature_dim: usize) -> Self {
        ForecasterConfig {
            num_classes,
            feature_dim,
            hidden_visual: 300,
            hidden_label: 30,
            mem_visual: MemoryConfig { slots: 24, slot_dim: 300 },
            mem_label: MemoryConfig { slots: 20, slot_dim: 30 },
            decoder_hidden: 300,
            persist_memory: false,
            future_visual_input: FutureInput::Zeros,
        }
    }

    /// A small configuration for desk-scale experiments, preserving the
    /// architecture and the visual/label proportions.
    pub fn compact(num_classes: usize, feature_dim: usize) -> Self {
        ForecasterConfig {
            num_classes,
            feature_dim,
            hidden_visual: 32,
            hidden_label: 16,
            mem_visual: MemoryConfig { slots: 10, slot_dim: 32 },
            mem_label: MemoryConfig { slots: 8, slot_dim: 16 },
            decoder_hidden: 32,
            persist_memory: false,
            future_visual_input: FutureInput::Zeros,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.num_classes,
            self.feature_dim,
            self.hidden_visual,
            self.hidden_label,
            self.decoder_hidden,
            self.mem_visual.slots,
            self.mem_visual.slot_dim,
            self.mem_label.slots,
            self.mem_label.slot_dim,
        ];
        if dims.contains(&0) {
            return Err(Error::Config("all dimensions must be at least 1".into()));
        }
        if self.mem_visual.slot_dim != self.hidden_visual {
            return Err(Error::Config(format!(
                "visual memory slot_dim {} must equal hidden_visual {}",
                self.mem_visual.slot_dim, self.hidden_visual
            )));
        }
        if self.mem_label.slot_dim != self.hidden_label {
            return Err(Error::Config(format!(
                "label memory slot_dim {} must equal hidden_label {}",
                self.mem_label.slot_dim, self.hidden_label
            )));
        }
        Ok(())
    }
}

/// Ablation variant. The letters follow the reference experiment list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// `a`: visual stream, encoder and decoder only.
    VisualOnly,
    /// `b`: label stream, encoder and decoder only.
    LabelOnly,
    /// `c`: visual stream with its memory.
    VisualMemory,
    /// `d`: label stream with its memory.
    LabelMemory,
    /// `e`: both streams concatenated before a single shared memory.
    SharedMemory,
    /// The proposed model: both streams, two memories.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::VisualOnly,
        Variant::LabelOnly,
        Variant::VisualMemory,
        Variant::LabelMemory,
        Variant::SharedMemory,
        Variant::Full,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            Variant::VisualOnly => "a",
            Variant::LabelOnly => "b",
            Variant::VisualMemory => "c",
            Variant::LabelMemory => "d",
            Variant::SharedMemory => "e",
            Variant::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "a" => Ok(Variant::VisualOnly),
            "b" => Ok(Variant::LabelOnly),
            "c" => Ok(Variant::VisualMemory),
            "d" => Ok(Variant::LabelMemory),
            "e" => Ok(Variant::SharedMemory),
            "full" => Ok(Variant::Full),
            other => Err(Error::Config(format!(
                "unknown variant {other:?}, expected one of a, b, c, d, e, full"
            ))),
        }
    }

    pub fn uses_visual(&self) -> bool {
        !matches!(self, Variant::LabelOnly | Variant::LabelMemory)
    }

    pub fn uses_label(&self) -> bool {
        !matches!(self, Variant::VisualOnly | Variant::VisualMemory)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// How the rollout turns a step distribution into a class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RolloutPolicy {
    /// Argmax; ties break to the lowest class index.
    Greedy,
    /// Draw from the step distribution with a seeded generator.
    Sampled { seed: u64 },
}

impl RolloutPolicy {
    pub fn start(&self) -> PolicyRun {
        match self {
            RolloutPolicy::Greedy => PolicyRun { rng: None },
            RolloutPolicy::Sampled { seed } => {
                PolicyRun { rng: Some(ChaCha8Rng::seed_from_u64(*seed)) }
            }
        }
    }
}

/// Per-rollout choice state.
pub struct PolicyRun {
    rng: Option<ChaCha8Rng>,
}

impl PolicyRun {
    pub fn choose(&mut self, probs: &[f64]) -> usize {
        match &mut self.rng {
            None => argmax(probs),
            Some(rng) => {
                let r: f64 = rng.random_range(0.0..1.0);
                let mut acc = 0.0;
                for (i, &p) in probs.iter().enumerate() {
                    acc += p;
                    if r < acc {
                        return i;
                    }
                }
                probs.len() - 1
            }
        }
    }
}

/// Lowest-index argmax.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// All learnable tensors of one model instance.
#[derive(Clone, Debug)]
pub struct ForecasterParams {
    pub variant: Variant,
    pub config: ForecasterConfig,
    pub encoder_visual: Option<LstmParams>,
    pub encoder_label: Option<LstmParams>,
    pub memory_visual: Option<MemoryParams>,
    pub memory_label: Option<MemoryParams>,
    pub memory_shared: Option<MemoryParams>,
    pub decoder: LstmParams,
    pub head: DenseSoftmaxParams,
    pub future_token: Option<Tensor>,
}

/// Decoder input width for a variant under a config.
fn decoder_input_dim(variant: Variant, config: &ForecasterConfig) -> usize {
    match variant {
        Variant::VisualOnly | Variant::VisualMemory => config.hidden_visual,
        Variant::LabelOnly | Variant::LabelMemory => config.hidden_label,
        Variant::SharedMemory => config.hidden_visual + config.hidden_label,
        Variant::Full => config.mem_visual.slot_dim + config.mem_label.slot_dim,
    }
}

/// Shared-memory geometry for variant `e`: slot width is the concatenated
/// stream width; the slot count follows the visual memory.
fn shared_memory_config(config: &ForecasterConfig) -> MemoryConfig {
    MemoryConfig {
        slots: config.mem_visual.slots,
        slot_dim: config.hidden_visual + config.hidden_label,
    }
}

/// Builds the full model.
pub fn build(config: &ForecasterConfig, seed: u64) -> Result<ForecasterParams> {
    build_ablation(Variant::Full, config, seed)
}

/// Builds one ablation variant. Deterministic given the seed.
pub fn build_ablation(
    variant: Variant,
    config: &ForecasterConfig,
    seed: u64,
) -> Result<ForecasterParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder_visual = variant
        .uses_visual()
        .then(|| LstmParams::init(config.feature_dim, config.hidden_visual, &mut rng));
    let encoder_label = variant
        .uses_label()
        .then(|| LstmParams::init(config.num_classes, config.hidden_label, &mut rng));
    let memory_visual = matches!(variant, Variant::VisualMemory | Variant::Full)
        .then(|| MemoryParams::init(config.mem_visual, &mut rng));
    let memory_label = matches!(variant, Variant::LabelMemory | Variant::Full)
        .then(|| MemoryParams::init(config.mem_label, &mut rng));
    let memory_shared = matches!(variant, Variant::SharedMemory)
        .then(|| MemoryParams::init(shared_memory_config(config), &mut rng));
    let decoder = LstmParams::init(decoder_input_dim(variant, config), config.decoder_hidden, &mut rng);
    let head = DenseSoftmaxParams::init(config.decoder_hidden, config.num_classes, &mut rng);
    let future_token = (variant.uses_visual()
        && config.future_visual_input == FutureInput::LearnedToken)
        .then(|| {
            uniform_tensor(
                &[config.feature_dim],
                1.0 / (config.feature_dim as f64).sqrt(),
                &mut rng,
            )
        });
    Ok(ForecasterParams {
        variant,
        config: *config,
        encoder_visual,
        encoder_label,
        memory_visual,
        memory_label,
        memory_shared,
        decoder,
        head,
        future_token,
    })
}

impl ForecasterParams {
    /// All-zero parameters with the same structure (checkpoint skeletons and
    /// tests).
    pub fn skeleton(variant: Variant, config: &ForecasterConfig) -> Result<Self> {
        config.validate()?;
        Ok(ForecasterParams {
            variant,
            config: *config,
            encoder_visual: variant
                .uses_visual()
                .then(|| LstmParams::zeros(config.feature_dim, config.hidden_visual)),
            encoder_label: variant
                .uses_label()
                .then(|| LstmParams::zeros(config.num_classes, config.hidden_label)),
            memory_visual: matches!(variant, Variant::VisualMemory | Variant::Full)
                .then(|| MemoryParams::zeros(config.mem_visual)),
            memory_label: matches!(variant, Variant::LabelMemory | Variant::Full)
                .then(|| MemoryParams::zeros(config.mem_label)),
            memory_shared: matches!(variant, Variant::SharedMemory)
                .then(|| MemoryParams::zeros(shared_memory_config(config))),
            decoder: LstmParams::zeros(decoder_input_dim(variant, config), config.decoder_hidden),
            head: DenseSoftmaxParams::zeros(config.decoder_hidden, config.num_classes),
            future_token: (variant.uses_visual()
                && config.future_visual_input == FutureInput::LearnedToken)
                .then(|| Tensor::zeros(&[config.feature_dim]).expect("static shape")),
        })
    }

    /// (name, tensor) pairs in canonical order. Binding, checkpointing and
    /// the optimizer all iterate in this order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        if let Some(p) = &self.encoder_visual {
            for (n, t) in p.tensors() {
                out.push((format!("encoder_visual.{n}"), t));
            }
        }
        if let Some(p) = &self.encoder_label {
            for (n, t) in p.tensors() {
                out.push((format!("encoder_label.{n}"), t));
            }
        }
        if let Some(p) = &self.memory_visual {
            for (n, t) in p.tensors() {
                out.push((format!("memory_visual.{n}"), t));
            }
        }
        if let Some(p) = &self.memory_label {
            for (n, t) in p.tensors() {
                out.push((format!("memory_label.{n}"), t));
            }
        }
        if let Some(p) = &self.memory_shared {
            for (n, t) in p.tensors() {
                out.push((format!("memory_shared.{n}"), t));
            }
        }
        for (n, t) in self.decoder.tensors() {
            out.push((format!("decoder.{n}"), t));
        }
        for (n, t) in self.head.tensors() {
            out.push((format!("head.{n}"), t));
        }
        if let Some(t) = &self.future_token {
            out.push(("future_token".to_string(), t));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        if let Some(p) = &mut self.encoder_visual {
            for (n, t) in p.tensors_mut() {
                out.push((format!("encoder_visual.{n}"), t));
            }
        }
        if let Some(p) = &mut self.encoder_label {
            for (n, t) in p.tensors_mut() {
                out.push((format!("encoder_label.{n}"), t));
            }
        }
        if let Some(p) = &mut self.memory_visual {
            for (n, t) in p.tensors_mut() {
                out.push((format!("memory_visual.{n}"), t));
            }
        }
        if let Some(p) = &mut self.memory_label {
            for (n, t) in p.tensors_mut() {
                out.push((format!("memory_label.{n}"), t));
            }
        }
        if let Some(p) = &mut self.memory_shared {
            for (n, t) in p.tensors_mut() {
                out.push((format!("memory_shared.{n}"), t));
            }
        }
        for (n, t) in self.decoder.tensors_mut() {
            out.push((format!("decoder.{n}"), t));
        }
        for (n, t) in self.head.tensors_mut() {
            out.push((format!("head.{n}"), t));
        }
        if let Some(t) = &mut self.future_token {
            out.push(("future_token".to_string(), t));
        }
        out
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Inserts every parameter as a tape leaf and returns the bound handles.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> BoundForecaster {
        let ids: Vec<TensorId> = self
            .named()
            .into_iter()
            .map(|(_, t)| {
                let mut t = t.clone();
                t.requires_grad = requires_grad;
                t.grad = None;
                tape.leaf(t)
            })
            .collect();
        self.wire(&ids)
    }

    /// Rebuilds bound handles from leaf ids laid out in canonical order
    /// (the gradient checker inserts the leaves itself).
    pub fn wire(&self, ids: &[TensorId]) -> BoundForecaster {
        let mut it = ids.iter().copied();
        let encoder_visual = self.encoder_visual.as_ref().map(|p| p.wire(&mut it));
        let encoder_label = self.encoder_label.as_ref().map(|p| p.wire(&mut it));
        let memory_visual = self.memory_visual.as_ref().map(|p| p.wire(&mut it));
        let memory_label = self.memory_label.as_ref().map(|p| p.wire(&mut it));
        let memory_shared = self.memory_shared.as_ref().map(|p| p.wire(&mut it));
        let decoder = self.decoder.wire(&mut it);
        let head = self.head.wire(&mut it);
        let future_token = self.future_token.as_ref().map(|_| it.next().expect("future token id"));
        BoundForecaster {
            variant: self.variant,
            config: self.config,
            leaves: ids.to_vec(),
            encoder_visual,
            encoder_label,
            memory_visual,
            memory_label,
            memory_shared,
            decoder,
            head,
            future_token,
        }
    }
}

/// Tape-bound parameter handles for one forward pass.
pub struct BoundForecaster {
    pub variant: Variant,
    pub config: ForecasterConfig,
    /// Leaf ids in the same order as [`ForecasterParams::named`]; the
    /// optimizer collects gradients through these.
    pub leaves: Vec<TensorId>,
    encoder_visual: Option<BoundLstm>,
    encoder_label: Option<BoundLstm>,
    memory_visual: Option<BoundMemory>,
    memory_label: Option<BoundMemory>,
    memory_shared: Option<BoundMemory>,
    decoder: BoundLstm,
    head: BoundDense,
    future_token: Option<TensorId>,
}

/// Recurrent state of one model instance, bound to a tape.
pub struct ModelState {
    pub encoder_visual: Option<LstmState>,
    pub encoder_label: Option<LstmState>,
    pub memory_visual: Option<MemoryState>,
    pub memory_label: Option<MemoryState>,
    pub memory_shared: Option<MemoryState>,
    pub decoder: LstmState,
}

/// Detached slot matrices carried across sequences when `persist_memory` is
/// enabled. Controller states are never carried.
#[derive(Clone, Debug, Default)]
pub struct CarriedMemory {
    pub visual: Option<Tensor>,
    pub label: Option<Tensor>,
    pub shared: Option<Tensor>,
}

/// Clones the slot matrices out of a state (detached from the tape).
pub fn extract_memory(tape: &Tape, state: &ModelState) -> CarriedMemory {
    let take = |ms: &Option<MemoryState>| {
        ms.as_ref().map(|m| {
            let mut t = tape.value(m.slots).clone();
            t.requires_grad = false;
            t.grad = None;
            t
        })
    };
    CarriedMemory {
        visual: take(&state.memory_visual),
        label: take(&state.memory_label),
        shared: take(&state.memory_shared),
    }
}

impl BoundForecaster {
    /// Fresh state: zero encoder/decoder states, zero (or carried) memories.
    pub fn initial_state(
        &self,
        tape: &mut Tape,
        carry: Option<&CarriedMemory>,
    ) -> Result<ModelState> {
        let mem_state = |tape: &mut Tape,
                         bound: &Option<BoundMemory>,
                         carried: Option<&Tensor>|
         -> Result<Option<MemoryState>> {
            match bound {
                None => Ok(None),
                Some(m) => Ok(Some(match carried {
                    Some(slots) => MemoryState::with_slots(tape, m.config, slots)?,
                    None => MemoryState::zeros(tape, m.config)?,
                })),
            }
        };
        Ok(ModelState {
            encoder_visual: match &self.encoder_visual {
                Some(_) => Some(LstmState::zeros(tape, self.config.hidden_visual)?),
                None => None,
            },
            encoder_label: match &self.encoder_label {
                Some(_) => Some(LstmState::zeros(tape, self.config.hidden_label)?),
                None => None,
            },
            memory_visual: mem_state(tape, &self.memory_visual, carry.and_then(|c| c.visual.as_ref()))?,
            memory_label: mem_state(tape, &self.memory_label, carry.and_then(|c| c.label.as_ref()))?,
            memory_shared: mem_state(tape, &self.memory_shared, carry.and_then(|c| c.shared.as_ref()))?,
            decoder: LstmState::zeros(tape, self.config.decoder_hidden)?,
        })
    }

    /// One fused time step: encode the available streams, run their
    /// memories, concatenate, and advance the decoder. Returns the decoder
    /// hidden state.
    fn fused_step(
        &self,
        tape: &mut Tape,
        state: &mut ModelState,
        visual_in: Option<TensorId>,
        label_in: Option<TensorId>,
    ) -> Result<TensorId> {
        let hv = match (&self.encoder_visual, visual_in) {
            (Some(enc), Some(x)) => {
                let next = lstm_step(tape, enc, x, state.encoder_visual.as_ref().unwrap())?;
                state.encoder_visual = Some(next);
                Some(next.h)
            }
            (Some(_), None) => {
                return Err(Error::Contract("variant expects a visual input".into()))
            }
            (None, _) => None,
        };
        let hl = match (&self.encoder_label, label_in) {
            (Some(enc), Some(x)) => {
                let next = lstm_step(tape, enc, x, state.encoder_label.as_ref().unwrap())?;
                state.encoder_label = Some(next);
                Some(next.h)
            }
            (Some(_), None) => {
                return Err(Error::Contract("variant expects a label input".into()))
            }
            (None, _) => None,
        };

        let decoder_in = match self.variant {
            Variant::VisualOnly => hv.unwrap(),
            Variant::LabelOnly => hl.unwrap(),
            Variant::VisualMemory => {
                let (c, next) = memory_step(
                    tape,
                    self.memory_visual.as_ref().unwrap(),
                    hv.unwrap(),
                    state.memory_visual.as_ref().unwrap(),
                )?;
                state.memory_visual = Some(next);
                c
            }
            Variant::LabelMemory => {
                let (c, next) = memory_step(
                    tape,
                    self.memory_label.as_ref().unwrap(),
                    hl.unwrap(),
                    state.memory_label.as_ref().unwrap(),
                )?;
                state.memory_label = Some(next);
                c
            }
            Variant::SharedMemory => {
                let h = tape.concat(hv.unwrap(), hl.unwrap())?;
                let (c, next) = memory_step(
                    tape,
                    self.memory_shared.as_ref().unwrap(),
                    h,
                    state.memory_shared.as_ref().unwrap(),
                )?;
                state.memory_shared = Some(next);
                c
            }
            Variant::Full => {
                let (cv, nv) = memory_step(
                    tape,
                    self.memory_visual.as_ref().unwrap(),
                    hv.unwrap(),
                    state.memory_visual.as_ref().unwrap(),
                )?;
                state.memory_visual = Some(nv);
                let (cl, nl) = memory_step(
                    tape,
                    self.memory_label.as_ref().unwrap(),
                    hl.unwrap(),
                    state.memory_label.as_ref().unwrap(),
                )?;
                state.memory_label = Some(nl);
                tape.concat(cv, cl)?
            }
        };
        let next = lstm_step(tape, &self.decoder, decoder_in, &state.decoder)?;
        state.decoder = next;
        Ok(next.h)
    }

    /// Advances the state over an observed window. Both streams must cover
    /// the same frames; labels enter as exact one-hot vectors.
    pub fn observe(
        &self,
        tape: &mut Tape,
        features: &Tensor,
        labels: &[usize],
        state: &mut ModelState,
    ) -> Result<()> {
        if features.rows() != labels.len() {
            return Err(Error::Contract(format!(
                "stream length mismatch: {} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Contract("observe needs at least one frame".into()));
        }
        for (t, &label) in labels.iter().enumerate() {
            let visual_in = if self.encoder_visual.is_some() {
                Some(tape.constant(features.row(t).to_vec())?)
            } else {
                None
            };
            let label_in = if self.encoder_label.is_some() {
                Some(tape.constant(one_hot_row(label, self.config.num_classes)?)?)
            } else {
                None
            };
            self.fused_step(tape, state, visual_in, label_in)?;
        }
        Ok(())
    }

    /// The visual-stream surrogate used on future steps.
    fn future_visual(&self, tape: &mut Tape) -> Result<Option<TensorId>> {
        if self.encoder_visual.is_none() {
            return Ok(None);
        }
        Ok(Some(match (self.config.future_visual_input, self.future_token) {
            (FutureInput::LearnedToken, Some(id)) => id,
            _ => tape.zeros(self.config.feature_dim)?,
        }))
    }

    /// One prediction step: the label stream receives the previous class as
    /// a one-hot, the visual stream its future surrogate. Returns the step
    /// distribution and the chosen class.
    pub fn predict_step(
        &self,
        tape: &mut Tape,
        state: &mut ModelState,
        prev_label: usize,
        policy: &mut PolicyRun,
    ) -> Result<(TensorId, usize)> {
        let visual_in = self.future_visual(tape)?;
        let label_in = if self.encoder_label.is_some() {
            Some(tape.constant(one_hot_row(prev_label, self.config.num_classes)?)?)
        } else {
            None
        };
        let h = self.fused_step(tape, state, visual_in, label_in)?;
        let gamma = dense_softmax(tape, &self.head, h)?;
        let class = policy.choose(tape.data(gamma));
        Ok((gamma, class))
    }

    /// Autoregressive rollout: iterates `predict_step`, feeding each chosen
    /// class back as the next previous label. Deterministic under the greedy
    /// policy.
    pub fn rollout(
        &self,
        tape: &mut Tape,
        state: &mut ModelState,
        first_prev_label: usize,
        horizon: usize,
        policy: &RolloutPolicy,
    ) -> Result<Vec<(TensorId, usize)>> {
        if horizon < 1 {
            return Err(Error::Contract("rollout horizon must be at least 1".into()));
        }
        let mut run = policy.start();
        let mut prev = first_prev_label;
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let (gamma, class) = self.predict_step(tape, state, prev, &mut run)?;
            out.push((gamma, class));
            prev = class;
        }
        Ok(out)
    }

    /// Mean cross-entropy over the prediction window. The observed window is
    /// consumed first; then each future step scores its distribution against
    /// the true class. With teacher forcing the label stream sees ground
    /// truth; otherwise it sees the model's own greedy predictions.
    pub fn forward_loss(
        &self,
        tape: &mut Tape,
        sample: &Sample,
        obs_frac: f64,
        pred_frac: f64,
        teacher_forcing: bool,
        carry: Option<&CarriedMemory>,
    ) -> Result<(TensorId, ModelState)> {
        let (obs, pred) = windows(sample.len(), obs_frac, pred_frac)?;
        let mut state = self.initial_state(tape, carry)?;
        self.observe(
            tape,
            &sample.features.window_rows(obs.clone())?,
            &sample.labels[obs.clone()],
            &mut state,
        )?;
        let mut prev = sample.labels[obs.end - 1];
        let mut total: Option<TensorId> = None;
        for t in pred.clone() {
            let visual_in = self.future_visual(tape)?;
            let label_in = if self.encoder_label.is_some() {
                Some(tape.constant(one_hot_row(prev, self.config.num_classes)?)?)
            } else {
                None
            };
            let h = self.fused_step(tape, &mut state, visual_in, label_in)?;
            let gamma = dense_softmax(tape, &self.head, h)?;
            let truth = sample.labels[t];
            if truth >= self.config.num_classes {
                return Err(Error::Contract(format!(
                    "label {truth} out of range at frame {t}"
                )));
            }
            let picked = tape.slice(gamma, truth, 1)?;
            let lp = tape.ln(picked);
            total = Some(match total {
                None => lp,
                Some(acc) => tape.add(acc, lp)?,
            });
            prev = if teacher_forcing { truth } else { argmax(tape.data(gamma)) };
        }
        let total = total.expect("prediction window is never empty");
        let loss = tape.scale(total, -1.0 / pred.len() as f64);
        Ok((loss, state))
    }
}

/// Gradient-integrity fixture: a tiny full model (3 classes, 8-dim features,
/// stream hiddens 8/6, memories 4x8 and 4x6) driven through four observed
/// frames and a three-step teacher-forced prediction window, checked against
/// central differences with `h = 1e-5` at tolerance 1e-4.
pub fn tiny_gradcheck(seed: u64) -> Result<crate::gradcheck::GradCheckReport> {
    let cfg = ForecasterConfig {
        num_classes: 3,
        feature_dim: 8,
        hidden_visual: 8,
        hidden_label: 6,
        mem_visual: MemoryConfig { slots: 4, slot_dim: 8 },
        mem_label: MemoryConfig { slots: 4, slot_dim: 6 },
        decoder_hidden: 8,
        persist_memory: false,
        future_visual_input: FutureInput::Zeros,
    };
    let model = build(&cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let total = 8; // observe 4 frames, predict 3
    let labels: Vec<usize> = (0..total).map(|_| rng.random_range(0..3)).collect();
    let data: Vec<f64> = (0..total * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sample = Sample { labels, features: Tensor::matrix(total, 8, data)? };
    let named: Vec<(String, Tensor)> =
        model.named().into_iter().map(|(n, t)| (n, t.clone())).collect();
    crate::gradcheck::grad_check(
        &named,
        move |tape, ids| {
            let bound = model.wire(ids);
            let (loss, _) = bound.forward_loss(tape, &sample, 0.5, 0.375, true, None)?;
            Ok(loss)
        },
        1e-5,
        1e-4,
    )
}

/// Observation plus greedy (or sampled) rollout on a fresh tape, without
/// gradients: the evaluation path. `observe_labels` supplies the label
/// stream for the observed window (ground truth, or corrupted labels in the
/// sensitivity analysis) and must cover exactly the observed range.
pub fn predict_sequence(
    params: &ForecasterParams,
    sample: &Sample,
    observe_labels: &[usize],
    obs: Range<usize>,
    horizon: usize,
    policy: &RolloutPolicy,
    carry: Option<&CarriedMemory>,
) -> Result<(Vec<usize>, CarriedMemory)> {
    if observe_labels.len() != obs.len() {
        return Err(Error::Contract(format!(
            "observe_labels covers {} frames, window wants {}",
            observe_labels.len(),
            obs.len()
        )));
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let mut state = bound.initial_state(&mut tape, carry)?;
    bound.observe(
        &mut tape,
        &sample.features.window_rows(obs.clone())?,
        observe_labels,
        &mut state,
    )?;
    let first_prev = observe_labels[observe_labels.len() - 1];
    let steps = bound.rollout(&mut tape, &mut state, first_prev, horizon, policy)?;
    let classes = steps.iter().map(|(_, c)| *c).collect();
    let memory = extract_memory(&tape, &state);
    Ok((classes, memory))
}
