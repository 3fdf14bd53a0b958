//! Recurrent building blocks: LSTM cell, two-layer perceptron, and the dense
//! softmax classification head.
//!
//! Parameters live outside any tape as plain [`Tensor`]s. Before a forward
//! pass they are bound onto a [`Tape`] (see `bind`), which returns a handle
//! struct of [`TensorId`]s; all step functions operate on bound handles so
//! gradients flow back to the leaves.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, TensorId};

/// Uniform init in `[-s, s]`.
pub(crate) fn uniform_tensor(shape: &[usize], s: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.random_range(-s..=s)).collect();
    Tensor::new(shape.to_vec(), data).expect("static shape")
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

/// Parameters of one LSTM cell. Each gate has a `hidden x (input + hidden)`
/// weight applied to `[x; h]` plus a bias.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_input: Tensor,
    pub b_input: Tensor,
    pub w_forget: Tensor,
    pub b_forget: Tensor,
    pub w_output: Tensor,
    pub b_output: Tensor,
    pub w_cand: Tensor,
    pub b_cand: Tensor,
}

impl LstmParams {
    /// Weights uniform in `[-1/sqrt(hidden), 1/sqrt(hidden)]`, forget-gate
    /// bias 1.0, all other biases 0.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = 1.0 / (hidden_dim as f64).sqrt();
        let wshape = [hidden_dim, input_dim + hidden_dim];
        LstmParams {
            input_dim,
            hidden_dim,
            w_input: uniform_tensor(&wshape, s, rng),
            b_input: Tensor::zeros(&[hidden_dim]).expect("static shape"),
            w_forget: uniform_tensor(&wshape, s, rng),
            b_forget: Tensor::new(vec![hidden_dim], vec![1.0; hidden_dim]).expect("static shape"),
            w_output: uniform_tensor(&wshape, s, rng),
            b_output: Tensor::zeros(&[hidden_dim]).expect("static shape"),
            w_cand: uniform_tensor(&wshape, s, rng),
            b_cand: Tensor::zeros(&[hidden_dim]).expect("static shape"),
        }
    }

    /// All-zero parameters (used by tests and checkpoint skeletons).
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Tensor::zeros(&[hidden_dim, input_dim + hidden_dim]).expect("static shape");
        let b = || Tensor::zeros(&[hidden_dim]).expect("static shape");
        LstmParams {
            input_dim,
            hidden_dim,
            w_input: w(),
            b_input: b(),
            w_forget: w(),
            b_forget: b(),
            w_output: w(),
            b_output: b(),
            w_cand: w(),
            b_cand: b(),
        }
    }

    /// Tensors in canonical order; `bind`, `wire`, checkpoints and the
    /// optimizer all rely on this order.
    pub fn tensors(&self) -> [(&'static str, &Tensor); 8] {
        [
            ("input.weight", &self.w_input),
            ("input.bias", &self.b_input),
            ("forget.weight", &self.w_forget),
            ("forget.bias", &self.b_forget),
            ("output.weight", &self.w_output),
            ("output.bias", &self.b_output),
            ("cand.weight", &self.w_cand),
            ("cand.bias", &self.b_cand),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 8] {
        [
            ("input.weight", &mut self.w_input),
            ("input.bias", &mut self.b_input),
            ("forget.weight", &mut self.w_forget),
            ("forget.bias", &mut self.b_forget),
            ("output.weight", &mut self.w_output),
            ("output.bias", &mut self.b_output),
            ("cand.weight", &mut self.w_cand),
            ("cand.bias", &mut self.b_cand),
        ]
    }

    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> BoundLstm {
        let ids = self.tensors().map(|(_, t)| {
            let mut t = t.clone();
            t.requires_grad = requires_grad;
            t.grad = None;
            tape.leaf(t)
        });
        BoundLstm::from_ids(self.input_dim, self.hidden_dim, &mut ids.into_iter())
    }

    /// Reconstructs a bound handle from leaf ids in canonical order.
    pub fn wire(
        &self,
        ids: &mut impl Iterator<Item = TensorId>,
    ) -> BoundLstm {
        BoundLstm::from_ids(self.input_dim, self.hidden_dim, ids)
    }
}

/// Tape handles for one LSTM cell.
#[derive(Clone, Copy, Debug)]
pub struct BoundLstm {
    pub input_dim: usize,
    pub hidden_dim: usize,
    w_input: TensorId,
    b_input: TensorId,
    w_forget: TensorId,
    b_forget: TensorId,
    w_output: TensorId,
    b_output: TensorId,
    w_cand: TensorId,
    b_cand: TensorId,
}

impl BoundLstm {
    fn from_ids(
        input_dim: usize,
        hidden_dim: usize,
        ids: &mut impl Iterator<Item = TensorId>,
    ) -> Self {
        let mut next = || ids.next().expect("eight leaf ids per LSTM cell");
        BoundLstm {
            input_dim,
            hidden_dim,
            w_input: next(),
            b_input: next(),
            w_forget: next(),
            b_forget: next(),
            w_output: next(),
            b_output: next(),
            w_cand: next(),
            b_cand: next(),
        }
    }
}

/// Hidden and cell state of an LSTM, bound to a tape.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: TensorId,
    pub c: TensorId,
}

impl LstmState {
    /// Zero state at sequence start.
    pub fn zeros(tape: &mut Tape, hidden_dim: usize) -> Result<Self> {
        Ok(LstmState { h: tape.zeros(hidden_dim)?, c: tape.zeros(hidden_dim)? })
    }
}

/// One LSTM update: `i,f,o = sigmoid(W [x;h] + b)`, `g = tanh(W [x;h] + b)`,
/// `c' = f*c + i*g`, `h' = o * tanh(c')`.
pub fn lstm_step(
    tape: &mut Tape,
    cell: &BoundLstm,
    x: TensorId,
    state: &LstmState,
) -> Result<LstmState> {
    if tape.shape(x) != [cell.input_dim] {
        return Err(Error::dims("lstm_step", tape.shape(x), &[cell.input_dim]));
    }
    if tape.shape(state.h) != [cell.hidden_dim] {
        return Err(Error::dims("lstm_step", tape.shape(state.h), &[cell.hidden_dim]));
    }
    let xh = tape.concat(x, state.h)?;
    let gate = |tape: &mut Tape, w: TensorId, b: TensorId| -> Result<TensorId> {
        let a = tape.matmul(w, xh)?;
        tape.add(a, b)
    };
    let ai = gate(tape, cell.w_input, cell.b_input)?;
    let af = gate(tape, cell.w_forget, cell.b_forget)?;
    let ao = gate(tape, cell.w_output, cell.b_output)?;
    let ag = gate(tape, cell.w_cand, cell.b_cand)?;
    let i = tape.sigmoid(ai);
    let f = tape.sigmoid(af);
    let o = tape.sigmoid(ao);
    let g = tape.tanh(ag);
    let fc = tape.mul(f, state.c)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok(LstmState { h, c })
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

/// Two affine layers with a tanh in between.
#[derive(Clone, Debug)]
pub struct MlpParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl MlpParams {
    pub fn init(input_dim: usize, hidden_dim: usize, output_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let s1 = 1.0 / (input_dim as f64).sqrt();
        let s2 = 1.0 / (hidden_dim as f64).sqrt();
        MlpParams {
            input_dim,
            hidden_dim,
            output_dim,
            w1: uniform_tensor(&[hidden_dim, input_dim], s1, rng),
            b1: Tensor::zeros(&[hidden_dim]).expect("static shape"),
            w2: uniform_tensor(&[output_dim, hidden_dim], s2, rng),
            b2: Tensor::zeros(&[output_dim]).expect("static shape"),
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        MlpParams {
            input_dim,
            hidden_dim,
            output_dim,
            w1: Tensor::zeros(&[hidden_dim, input_dim]).expect("static shape"),
            b1: Tensor::zeros(&[hidden_dim]).expect("static shape"),
            w2: Tensor::zeros(&[output_dim, hidden_dim]).expect("static shape"),
            b2: Tensor::zeros(&[output_dim]).expect("static shape"),
        }
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 4] {
        [
            ("layer1.weight", &self.w1),
            ("layer1.bias", &self.b1),
            ("layer2.weight", &self.w2),
            ("layer2.bias", &self.b2),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 4] {
        [
            ("layer1.weight", &mut self.w1),
            ("layer1.bias", &mut self.b1),
            ("layer2.weight", &mut self.w2),
            ("layer2.bias", &mut self.b2),
        ]
    }

    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> BoundMlp {
        let ids = self.tensors().map(|(_, t)| {
            let mut t = t.clone();
            t.requires_grad = requires_grad;
            t.grad = None;
            tape.leaf(t)
        });
        self.wire(&mut ids.into_iter())
    }

    pub fn wire(&self, ids: &mut impl Iterator<Item = TensorId>) -> BoundMlp {
        let mut next = || ids.next().expect("four leaf ids per MLP");
        BoundMlp {
            input_dim: self.input_dim,
            w1: next(),
            b1: next(),
            w2: next(),
            b2: next(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundMlp {
    pub input_dim: usize,
    w1: TensorId,
    b1: TensorId,
    w2: TensorId,
    b2: TensorId,
}

/// Affine, tanh, affine.
pub fn mlp_forward(tape: &mut Tape, mlp: &BoundMlp, x: TensorId) -> Result<TensorId> {
    if tape.shape(x) != [mlp.input_dim] {
        return Err(Error::dims("mlp_forward", tape.shape(x), &[mlp.input_dim]));
    }
    let a1 = tape.matmul(mlp.w1, x)?;
    let a1 = tape.add(a1, mlp.b1)?;
    let h = tape.tanh(a1);
    let a2 = tape.matmul(mlp.w2, h)?;
    tape.add(a2, mlp.b2)
}

// ---------------------------------------------------------------------------
// Dense softmax head
// ---------------------------------------------------------------------------

/// Fully-connected layer with softmax activation over the classes.
#[derive(Clone, Debug)]
pub struct DenseSoftmaxParams {
    pub input_dim: usize,
    pub num_classes: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl DenseSoftmaxParams {
    pub fn init(input_dim: usize, num_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = 1.0 / (input_dim as f64).sqrt();
        DenseSoftmaxParams {
            input_dim,
            num_classes,
            weight: uniform_tensor(&[num_classes, input_dim], s, rng),
            bias: Tensor::zeros(&[num_classes]).expect("static shape"),
        }
    }

    pub fn zeros(input_dim: usize, num_classes: usize) -> Self {
        DenseSoftmaxParams {
            input_dim,
            num_classes,
            weight: Tensor::zeros(&[num_classes, input_dim]).expect("static shape"),
            bias: Tensor::zeros(&[num_classes]).expect("static shape"),
        }
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 2] {
        [("weight", &self.weight), ("bias", &self.bias)]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 2] {
        [("weight", &mut self.weight), ("bias", &mut self.bias)]
    }

    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> BoundDense {
        let ids = self.tensors().map(|(_, t)| {
            let mut t = t.clone();
            t.requires_grad = requires_grad;
            t.grad = None;
            tape.leaf(t)
        });
        self.wire(&mut ids.into_iter())
    }

    pub fn wire(&self, ids: &mut impl Iterator<Item = TensorId>) -> BoundDense {
        let mut next = || ids.next().expect("two leaf ids per head");
        BoundDense { input_dim: self.input_dim, weight: next(), bias: next() }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundDense {
    pub input_dim: usize,
    weight: TensorId,
    bias: TensorId,
}

/// Probability vector over the classes.
pub fn dense_softmax(tape: &mut Tape, head: &BoundDense, x: TensorId) -> Result<TensorId> {
    if tape.shape(x) != [head.input_dim] {
        return Err(Error::dims("dense_softmax", tape.shape(x), &[head.input_dim]));
    }
    let a = tape.matmul(head.weight, x)?;
    let logits = tape.add(a, head.bias)?;
    tape.softmax_row(logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Straight-line scalar LSTM oracle for a single-unit cell with zero
    /// weights: only the biases act.
    fn scalar_lstm_oracle(bi: f64, bf: f64, bo: f64, bg: f64, c0: f64) -> (f64, f64) {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let i = sig(bi);
        let f = sig(bf);
        let o = sig(bo);
        let g = bg.tanh();
        let c = f * c0 + i * g;
        let h = o * c.tanh();
        (h, c)
    }

    fn run_scalar_cell(params: &LstmParams, x: f64) -> (f64, f64) {
        let mut tape = Tape::new();
        let cell = params.bind(&mut tape, false);
        let x = tape.constant(vec![x]).unwrap();
        let state = LstmState::zeros(&mut tape, 1).unwrap();
        let next = lstm_step(&mut tape, &cell, x, &state).unwrap();
        (tape.data(next.h)[0], tape.data(next.c)[0])
    }

    #[test]
    fn lstm_all_zero_stays_zero() {
        let params = LstmParams::zeros(1, 1);
        let (h, c) = run_scalar_cell(&params, 0.0);
        assert_eq!(h, 0.0);
        assert_eq!(c, 0.0);
    }

    #[test]
    fn lstm_scalar_cell_matches_gate_oracle() {
        let mut params = LstmParams::zeros(1, 1);
        params.b_input.data[0] = 20.0;
        params.b_forget.data[0] = 20.0;
        params.b_output.data[0] = 20.0;
        params.b_cand.data[0] = 0.5f64.atanh();
        let (h, c) = run_scalar_cell(&params, 0.0);
        let (eh, ec) = scalar_lstm_oracle(20.0, 20.0, 20.0, 0.5f64.atanh(), 0.0);
        assert!((h - eh).abs() < 1e-12);
        assert!((c - ec).abs() < 1e-12);
        // Saturated gates pin the values at 0.5 and tanh(0.5).
        assert!((c - 0.5).abs() < 1e-8);
        assert!((h - 0.4621).abs() < 1e-4);
    }

    #[test]
    fn lstm_shape_contract() {
        let mut r = rng(3);
        let params = LstmParams::init(7, 3, &mut r);
        let mut tape = Tape::new();
        let cell = params.bind(&mut tape, false);
        let x = tape.constant((0..7).map(|v| v as f64 * 0.1).collect()).unwrap();
        let state = LstmState::zeros(&mut tape, 3).unwrap();
        let next = lstm_step(&mut tape, &cell, x, &state).unwrap();
        assert_eq!(tape.shape(next.h), &[3]);
        assert_eq!(tape.shape(next.c), &[3]);
    }

    #[test]
    fn lstm_dimension_error() {
        let mut r = rng(3);
        let params = LstmParams::init(4, 3, &mut r);
        let mut tape = Tape::new();
        let cell = params.bind(&mut tape, false);
        let x = tape.constant(vec![1.0, 2.0]).unwrap();
        let state = LstmState::zeros(&mut tape, 3).unwrap();
        assert!(matches!(
            lstm_step(&mut tape, &cell, x, &state),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn lstm_hidden_is_bounded() {
        // |h| < 1 because the output gate is in (0,1) and tanh in (-1,1).
        let mut r = rng(11);
        for trial in 0..50 {
            let params = LstmParams::init(5, 4, &mut r);
            let mut tape = Tape::new();
            let cell = params.bind(&mut tape, false);
            let mut state = LstmState::zeros(&mut tape, 4).unwrap();
            for _ in 0..6 {
                let x = tape
                    .constant((0..5).map(|_| r.random_range(-10.0..10.0)).collect())
                    .unwrap();
                state = lstm_step(&mut tape, &cell, x, &state).unwrap();
            }
            for &v in tape.data(state.h) {
                assert!(v.abs() < 1.0, "trial {trial}: |h|={v}");
            }
        }
    }

    #[test]
    fn lstm_gradients_pass_grad_check() {
        let mut r = rng(17);
        let params = LstmParams::init(3, 2, &mut r);
        let named: Vec<(String, Tensor)> = params
            .tensors()
            .iter()
            .map(|(n, t)| (n.to_string(), (*t).clone()))
            .collect();
        let x_vals = vec![0.4, -0.7, 1.1];
        let p = params.clone();
        let report = grad_check(
            &named,
            move |tape, ids| {
                let cell = p.wire(&mut ids.iter().copied());
                let x = tape.constant(x_vals.clone())?;
                let state = LstmState::zeros(tape, 2)?;
                let next = lstm_step(tape, &cell, x, &state)?;
                let hc = tape.concat(next.h, next.c)?;
                let sq = tape.mul(hc, hc)?;
                Ok(tape.sum(sq))
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.pass, "{}", report.summary());
    }

    #[test]
    fn lstm_unrolled_gradients_pass_grad_check() {
        // Gradient flow through time: unroll 4 steps and check every
        // parameter against central differences.
        let mut r = rng(23);
        let params = LstmParams::init(2, 2, &mut r);
        let named: Vec<(String, Tensor)> = params
            .tensors()
            .iter()
            .map(|(n, t)| (n.to_string(), (*t).clone()))
            .collect();
        let inputs: Vec<Vec<f64>> =
            (0..4).map(|_| (0..2).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let p = params.clone();
        let report = grad_check(
            &named,
            move |tape, ids| {
                let cell = p.wire(&mut ids.iter().copied());
                let mut state = LstmState::zeros(tape, 2)?;
                for x in &inputs {
                    let xi = tape.constant(x.clone())?;
                    state = lstm_step(tape, &cell, xi, &state)?;
                }
                let sq = tape.mul(state.h, state.h)?;
                Ok(tape.sum(sq))
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.pass, "{}", report.summary());
    }

    /// Independent loop oracle for the MLP.
    fn naive_mlp(p: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; p.hidden_dim];
        for i in 0..p.hidden_dim {
            let mut a = p.b1.data[i];
            for j in 0..p.input_dim {
                a += p.w1.data[i * p.input_dim + j] * x[j];
            }
            h[i] = a.tanh();
        }
        let mut out = vec![0.0; p.output_dim];
        for i in 0..p.output_dim {
            let mut a = p.b2.data[i];
            for j in 0..p.hidden_dim {
                a += p.w2.data[i * p.hidden_dim + j] * h[j];
            }
            out[i] = a;
        }
        out
    }

    fn run_mlp(params: &MlpParams, x: Vec<f64>) -> Vec<f64> {
        let mut tape = Tape::new();
        let mlp = params.bind(&mut tape, false);
        let xi = tape.constant(x).unwrap();
        let out = mlp_forward(&mut tape, &mlp, xi).unwrap();
        tape.data(out).to_vec()
    }

    #[test]
    fn mlp_zero_params_output_zero() {
        let params = MlpParams::zeros(3, 2, 2);
        assert_eq!(run_mlp(&params, vec![1.0, -2.0, 0.5]), vec![0.0, 0.0]);
    }

    #[test]
    fn mlp_zero_output_layer_yields_bias() {
        let mut r = rng(5);
        let mut params = MlpParams::init(3, 4, 2, &mut r);
        params.w2 = Tensor::zeros(&[2, 4]).unwrap();
        params.b2 = Tensor::vector(vec![0.7, -0.2]).unwrap();
        assert_eq!(run_mlp(&params, vec![1.0, 2.0, 3.0]), vec![0.7, -0.2]);
    }

    #[test]
    fn mlp_matches_naive_oracle() {
        let mut r = rng(9);
        let params = MlpParams::init(4, 3, 2, &mut r);
        let x: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
        let expect = naive_mlp(&params, &x);
        let got = run_mlp(&params, x);
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    fn run_head(params: &DenseSoftmaxParams, x: Vec<f64>) -> Vec<f64> {
        let mut tape = Tape::new();
        let head = params.bind(&mut tape, false);
        let xi = tape.constant(x).unwrap();
        let out = dense_softmax(&mut tape, &head, xi).unwrap();
        tape.data(out).to_vec()
    }

    #[test]
    fn head_zero_params_is_uniform() {
        let params = DenseSoftmaxParams::zeros(3, 4);
        let out = run_head(&params, vec![0.3, -0.1, 2.0]);
        for &v in &out {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn head_is_probability_vector() {
        let mut r = rng(13);
        let params = DenseSoftmaxParams::init(5, 7, &mut r);
        let x: Vec<f64> = (0..5).map(|_| r.random_range(-3.0..3.0)).collect();
        let out = run_head(&params, x);
        let sum: f64 = out.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(out.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn head_forced_logits() {
        let mut params = DenseSoftmaxParams::zeros(2, 2);
        params.bias = Tensor::vector(vec![0.0, 3f64.ln()]).unwrap();
        let out = run_head(&params, vec![0.4, 0.6]);
        assert!((out[0] - 0.25).abs() < 1e-12);
        assert!((out[1] - 0.75).abs() < 1e-12);
    }
}
