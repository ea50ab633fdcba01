//! Desk-scale networks whose weight blocks live on [`WeightBackend`]s.
//!
//! Two topologies are supported: a feed-forward stack of dense layers and a
//! single LSTM cell, each closed by a softmax head trained on cross-entropy.
//! Every block multiplies `[input; 1]`, so biases are the last weight column.
//! All nonlinearities, the softmax and the loss stay in floating point; only
//! the products `W·x`, `Wᵀ·δ` and the rank-one updates touch the backend.
//!
//! Training is per sample (batch size 1). A recurrent sequence is processed
//! by truncated backpropagation through time: the forward and backward passes
//! over one window use the weights as they were at its start, and the
//! resulting `(x, δ)` pairs are then applied as one rank-one update per block
//! per timestep, in time order.

mod corpus;

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use corpus::Corpus;

use crate::crossbar::ZeroShiftMode;
use crate::device::{DeviceState, NoiseModel};
use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream, SimRng};
use crate::trainers::{BackendRegistry, BackendSpec, Management, WeightBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Dense,
    LstmCell,
    SoftmaxHead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Self::Tanh => z.tanh(),
            Self::Sigmoid => sigmoid(z),
            Self::Identity => z,
        }
    }

    /// Derivative expressed through the output `a = apply(z)`.
    pub fn slope(self, a: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - a * a,
            Self::Sigmoid => a * (1.0 - a),
            Self::Identity => 1.0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Used by dense layers; LSTM gates and the head have fixed nonlinearities.
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self { kind: LayerKind::Dense, in_dim, out_dim, activation }
    }

    pub fn lstm_cell(in_dim: usize, hidden: usize) -> Self {
        Self { kind: LayerKind::LstmCell, in_dim, out_dim: hidden, activation: Activation::Tanh }
    }

    pub fn softmax_head(in_dim: usize, classes: usize) -> Self {
        Self { kind: LayerKind::SoftmaxHead, in_dim, out_dim: classes, activation: Activation::Identity }
    }

    /// Shapes of the weight blocks this layer expands to.
    pub fn block_shapes(&self) -> Vec<(usize, usize)> {
        match self.kind {
            LayerKind::Dense | LayerKind::SoftmaxHead => vec![(self.out_dim, self.in_dim + 1)],
            LayerKind::LstmCell => vec![(self.out_dim, self.in_dim + self.out_dim + 1); 4],
        }
    }
}

/// One LSTM cell over a one-hot character vocabulary plus its softmax head.
pub fn char_lstm(vocab: usize, hidden: usize) -> Vec<LayerSpec> {
    vec![LayerSpec::lstm_cell(vocab, hidden), LayerSpec::softmax_head(hidden, vocab)]
}

#[derive(Debug, Clone, PartialEq)]
enum Topology {
    Dense(Vec<(usize, usize, Activation)>),
    Lstm { input: usize, hidden: usize },
}

fn topology(specs: &[LayerSpec]) -> Result<Topology> {
    let bad = |m: String| Err(Error::Shape(m));
    let Some((head, body)) = specs.split_last() else {
        return bad("a network needs at least a softmax head".into());
    };
    if head.kind != LayerKind::SoftmaxHead {
        return bad("the last layer must be a softmax head".into());
    }
    if specs.iter().any(|s| s.in_dim == 0 || s.out_dim == 0) {
        return bad("layer dimensions must be >= 1".into());
    }
    for pair in specs.windows(2) {
        if pair[0].out_dim != pair[1].in_dim {
            return bad(format!("layer output {} does not feed layer input {}", pair[0].out_dim, pair[1].in_dim));
        }
    }
    match body {
        [cell] if cell.kind == LayerKind::LstmCell => Ok(Topology::Lstm { input: cell.in_dim, hidden: cell.out_dim }),
        _ if body.iter().all(|s| s.kind == LayerKind::Dense) => {
            Ok(Topology::Dense(body.iter().map(|s| (s.in_dim, s.out_dim, s.activation)).collect()))
        }
        _ => bad("supported topologies: dense* + head, or one lstm-cell + head".into()),
    }
}

/// One training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Vector {
        x: Vec<f64>,
        target: usize,
    },
    /// One-hot token inputs and next-token targets of equal length.
    Sequence {
        inputs: Vec<usize>,
        targets: Vec<usize>,
    },
}

/// Recurrent state carried between truncation windows.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Per block, the `(x, δ)` pairs of one sample in time order.
type Trace = Vec<Vec<(Vec<f64>, Vec<f64>)>>;

pub struct Network {
    specs: Vec<LayerSpec>,
    topology: Topology,
    backend: String,
    /// Body blocks in layer order (LSTM gates i, f, g, o), head last.
    blocks: Vec<Box<dyn WeightBackend>>,
}

/// Builds one backend per weight block and programs a uniform random
/// initialization of scale `1/√fan_in` (LSTM forget-gate biases start at 1).
pub fn build_network(
    specs: &[LayerSpec],
    backend: &str,
    spec: &BackendSpec,
    registry: &BackendRegistry,
    rng: &mut SimRng,
) -> Result<Network> {
    let topology = topology(specs)?;
    let mut blocks = Vec::new();
    for s in specs {
        for (gate, (rows, cols)) in s.block_shapes().into_iter().enumerate() {
            let mut b = registry.build(backend, rows, cols, spec, rng)?;
            let scale = 1.0 / (cols as f64).sqrt();
            let mut w = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale));
            for i in 0..rows {
                let bias = if s.kind == LayerKind::LstmCell && gate == 1 { 1.0 } else { 0.0 };
                w.set(i, cols - 1, bias);
            }
            b.program_weights(&w)?;
            blocks.push(b);
        }
    }
    Ok(Network { specs: specs.to_vec(), topology, backend: backend.to_string(), blocks })
}

fn with_bias(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    out.extend_from_slice(v);
    out.push(1.0);
    out
}

/// Softmax probabilities and `−ln p[target]`.
fn softmax_xent(logits: &[f64], target: usize) -> (Vec<f64>, f64) {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut p: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    (p, s.ln() + m - logits[target])
}

fn clip(v: &mut [f64], limit: Option<f64>) {
    if let Some(c) = limit {
        v.iter_mut().for_each(|x| *x = x.clamp(-c, c));
    }
}

fn check_target(target: usize, classes: usize) -> Result<()> {
    if target < classes {
        Ok(())
    } else {
        Err(Error::Shape(format!("target class {target} out of range 0..{classes}")))
    }
}

struct LstmCache {
    z: Vec<f64>,
    /// Input, forget, candidate and output gate activations.
    gates: [Vec<f64>; 4],
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    u: Vec<f64>,
    p: Vec<f64>,
}

impl Network {
    pub fn backend(&self) -> &str {
        &self.backend
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.topology, Topology::Lstm { .. })
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].in_dim
    }

    pub fn classes(&self) -> usize {
        self.specs.last().map_or(0, |s| s.out_dim)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &dyn WeightBackend> {
        self.blocks.iter().map(|b| b.as_ref())
    }

    /// Physical arrays across all blocks (0 for the digital backend).
    pub fn array_count(&self) -> usize {
        self.blocks.iter().map(|b| b.array_count()).sum()
    }

    pub fn read_weights(&self) -> Vec<Matrix> {
        self.blocks.iter().map(|b| b.read_weights()).collect()
    }

    pub fn program_weights(&mut self, weights: &[Matrix]) -> Result<()> {
        check_len("weight blocks", self.blocks.len(), weights.len())?;
        for (b, w) in self.blocks.iter_mut().zip(weights) {
            b.program_weights(w)?;
        }
        Ok(())
    }

    pub fn initial_state(&self) -> LstmState {
        let h = match self.topology {
            Topology::Lstm { hidden, .. } => hidden,
            Topology::Dense(_) => 0,
        };
        LstmState { h: vec![0.0; h], c: vec![0.0; h] }
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "backend": self.backend,
            "layers": self.specs,
            "blocks": self.blocks.iter().map(|b| b.snapshot()).collect::<Vec<_>>(),
        })
    }

    /// Summed cross-entropy of a sample from a zero state, without updating.
    pub fn loss(&self, sample: &Sample, rng: &mut SimRng) -> Result<f64> {
        let mut state = self.initial_state();
        Ok(self.backprop(sample, &mut state, None, rng)?.0)
    }

    /// Summed cross-entropy and its exact gradient per block, `Σ_t δ_t·x_tᵀ`.
    pub fn gradients(&self, sample: &Sample, rng: &mut SimRng) -> Result<(f64, Vec<Matrix>)> {
        let mut state = self.initial_state();
        let (loss, trace) = self.backprop(sample, &mut state, None, rng)?;
        let grads = self
            .blocks
            .iter()
            .zip(&trace)
            .map(|(b, records)| {
                let mut g = Matrix::zeros(b.rows(), b.cols());
                for (x, d) in records {
                    for (i, di) in d.iter().enumerate() {
                        for (j, xj) in x.iter().enumerate() {
                            g.data[i * g.cols + j] += di * xj;
                        }
                    }
                }
                g
            })
            .collect();
        Ok((loss, grads))
    }

    /// One backpropagation step; returns the summed cross-entropy before the
    /// update. `state` is advanced to the end of the sequence.
    pub fn train_sample(
        &mut self,
        sample: &Sample,
        state: &mut LstmState,
        grad_clip: Option<f64>,
        rng: &mut SimRng,
    ) -> Result<f64> {
        let (loss, trace) = self.backprop(sample, state, grad_clip, rng)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("cross-entropy {loss} on {} network", self.backend)));
        }
        let steps = trace.first().map_or(0, Vec::len);
        for t in 0..steps {
            for (b, records) in self.blocks.iter_mut().zip(&trace) {
                let (x, d) = &records[t];
                b.update(x, d, rng)?;
            }
        }
        Ok(loss)
    }

    fn backprop(
        &self,
        sample: &Sample,
        state: &mut LstmState,
        grad_clip: Option<f64>,
        rng: &mut SimRng,
    ) -> Result<(f64, Trace)> {
        match (&self.topology, sample) {
            (Topology::Dense(layers), Sample::Vector { x, target }) => {
                self.backprop_dense(layers, x, *target, grad_clip, rng)
            }
            (Topology::Lstm { input, hidden }, Sample::Sequence { inputs, targets }) => {
                self.backprop_lstm(*input, *hidden, inputs, targets, state, grad_clip, rng)
            }
            _ => Err(Error::Shape("sample kind does not match the network topology".into())),
        }
    }

    fn backprop_dense(
        &self,
        layers: &[(usize, usize, Activation)],
        x: &[f64],
        target: usize,
        grad_clip: Option<f64>,
        rng: &mut SimRng,
    ) -> Result<(f64, Trace)> {
        check_len("network input", self.input_dim(), x.len())?;
        check_len("hidden layers", layers.len() + 1, self.blocks.len())?;
        let head = &self.blocks[layers.len()];
        check_target(target, head.rows())?;
        // inputs[l] = [a_{l}; 1] feeding block l
        let mut inputs = vec![with_bias(x)];
        let mut outs = Vec::with_capacity(layers.len());
        for (b, &(_, _, act)) in self.blocks.iter().zip(layers) {
            let a: Vec<f64> = b.forward(inputs.last().unwrap(), rng)?.into_iter().map(|z| act.apply(z)).collect();
            inputs.push(with_bias(&a));
            outs.push(a);
        }
        let logits = head.forward(inputs.last().unwrap(), rng)?;
        let (mut delta, loss) = softmax_xent(&logits, target);
        delta[target] -= 1.0;
        clip(&mut delta, grad_clip);

        let mut trace: Trace = vec![Vec::new(); self.blocks.len()];
        let mut back = head.backward(&delta, rng)?;
        trace[layers.len()].push((inputs[layers.len()].clone(), delta));
        for l in (0..layers.len()).rev() {
            let act = layers[l].2;
            let mut d: Vec<f64> = outs[l].iter().zip(&back).map(|(a, g)| g * act.slope(*a)).collect();
            clip(&mut d, grad_clip);
            back = self.blocks[l].backward(&d, rng)?;
            trace[l].push((inputs[l].clone(), d));
        }
        Ok((loss, trace))
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_lstm(
        &self,
        input: usize,
        hidden: usize,
        inputs: &[usize],
        targets: &[usize],
        state: &mut LstmState,
        grad_clip: Option<f64>,
        rng: &mut SimRng,
    ) -> Result<(f64, Trace)> {
        check_len("sequence targets", inputs.len(), targets.len())?;
        check_len("recurrent state", hidden, state.h.len())?;
        let (gates, head) = (&self.blocks[..4], &self.blocks[4]);
        let mut loss = 0.0;
        let mut caches = Vec::with_capacity(inputs.len());
        for (&tok, &target) in inputs.iter().zip(targets) {
            check_target(tok, input)?;
            check_target(target, head.rows())?;
            let mut z = vec![0.0; input + hidden + 1];
            z[tok] = 1.0;
            z[input..input + hidden].copy_from_slice(&state.h);
            z[input + hidden] = 1.0;
            let mut act = |k: usize, f: fn(f64) -> f64| -> Result<Vec<f64>> {
                Ok(gates[k].forward(&z, rng)?.into_iter().map(f).collect())
            };
            let g = [act(0, sigmoid)?, act(1, sigmoid)?, act(2, f64::tanh)?, act(3, sigmoid)?];
            let c_prev = std::mem::take(&mut state.c);
            state.c = (0..hidden).map(|k| g[1][k] * c_prev[k] + g[0][k] * g[2][k]).collect();
            let tanh_c: Vec<f64> = state.c.iter().map(|c| c.tanh()).collect();
            state.h = (0..hidden).map(|k| g[3][k] * tanh_c[k]).collect();
            let u = with_bias(&state.h);
            let (p, l) = softmax_xent(&head.forward(&u, rng)?, target);
            loss += l;
            caches.push(LstmCache { z, gates: g, c_prev, tanh_c, u, p });
        }

        let steps = caches.len();
        let mut trace: Trace = (0..5).map(|_| Vec::with_capacity(steps)).collect();
        let mut dh_next = vec![0.0; hidden];
        let mut dc_next = vec![0.0; hidden];
        for (cache, &target) in caches.into_iter().zip(targets).rev() {
            let LstmCache { z, gates: g, c_prev, tanh_c, u, mut p } = cache;
            p[target] -= 1.0;
            clip(&mut p, grad_clip);
            let dh = head.backward(&p, rng)?;
            trace[4].push((u, p));
            let mut deltas = [vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden]];
            for k in 0..hidden {
                let (i, f, gg, o) = (g[0][k], g[1][k], g[2][k], g[3][k]);
                let dhk = dh[k] + dh_next[k];
                let dc = dhk * o * (1.0 - tanh_c[k] * tanh_c[k]) + dc_next[k];
                deltas[0][k] = dc * gg * i * (1.0 - i);
                deltas[1][k] = dc * c_prev[k] * f * (1.0 - f);
                deltas[2][k] = dc * i * (1.0 - gg * gg);
                deltas[3][k] = dhk * tanh_c[k] * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (k, mut d) in deltas.into_iter().enumerate() {
                clip(&mut d, grad_clip);
                let dz = gates[k].backward(&d, rng)?;
                for (acc, v) in dh_next.iter_mut().zip(&dz[input..input + hidden]) {
                    *acc += v;
                }
                trace[k].push((z.clone(), d));
            }
        }
        trace.iter_mut().for_each(|records| records.reverse());
        Ok((loss, trace))
    }
}

/// Training schedule for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRun {
    pub epochs: usize,
    pub bptt_len: usize,
    /// Elementwise clip applied to every δ before it is back-propagated.
    pub grad_clip: Option<f64>,
    /// Report the epoch cross-entropy every `eval_every` epochs (and the last).
    pub eval_every: usize,
    pub corpus: PathBuf,
    pub lowercase: bool,
    pub seed: u64,
}

impl Default for TrainRun {
    fn default() -> Self {
        Self {
            epochs: 10,
            bptt_len: 32,
            grad_clip: Some(1.0),
            eval_every: 1,
            corpus: PathBuf::new(),
            lowercase: true,
            seed: 0,
        }
    }
}

impl TrainRun {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.bptt_len == 0 || self.eval_every == 0 {
            return Err(Error::InvalidParam("epochs, bptt_len and eval_every must be >= 1".into()));
        }
        match self.grad_clip {
            Some(c) if c.is_nan() || c <= 0.0 => Err(Error::InvalidParam("grad_clip must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// One pass over the corpus in consecutive windows of `bptt_len` characters,
/// carrying the recurrent state across windows. Returns the mean per-character
/// cross-entropy of the epoch.
pub fn train_epoch(net: &mut Network, corpus: &Corpus, run: &TrainRun, rng: &mut SimRng) -> Result<f64> {
    run.validate()?;
    if !net.is_recurrent() || net.input_dim() != corpus.vocab_size() {
        return Err(Error::Shape(format!(
            "corpus vocabulary {} needs an LSTM with input {}",
            corpus.vocab_size(),
            corpus.vocab_size()
        )));
    }
    let tokens = corpus.tokens();
    let n = tokens.len() - 1;
    let mut state = net.initial_state();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + run.bptt_len).min(n);
        let sample =
            Sample::Sequence { inputs: tokens[start..end].to_vec(), targets: tokens[start + 1..end + 1].to_vec() };
        let loss = net.train_sample(&sample, &mut state, run.grad_clip, rng).map_err(|e| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("{m} at character {start}")),
            e => e,
        })?;
        total += loss;
        start = end;
    }
    Ok(total / n as f64)
}

/// Network shape and backend for a character-level LSTM run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmConfig {
    pub hidden: usize,
    pub backend: String,
    pub spec: BackendSpec,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self::calibrated("digital-fp", 0.0)
    }
}

impl LstmConfig {
    /// Hidden-64 character LSTM with per-backend learning rates tuned on the
    /// bundled corpus. Devices have about 500 states across `[−1, 1]`, a 10%
    /// device-to-device spread of the step size and read noise of 1% of the
    /// range; cycle-to-cycle noise is off. Coupled arrays transfer one column
    /// per update with a slower, finer-grained pulse train.
    pub fn calibrated(backend: &str, kappa: f64) -> Self {
        let lr = match backend {
            "digital-fp" => 0.1,
            "analog-shd" | "analog-shd4" => SHD_LR,
            _ => 0.05,
        };
        let spec = BackendSpec {
            device: DeviceState { dw0: 0.004, kappa, ..DeviceState::default() },
            device_c: None,
            noise: NoiseModel { sigma_d2d_dw0: 0.1, sigma_read: 0.02, ..NoiseModel::ideal() },
            lr,
            lr_c_ratio: SHD_LR_C_RATIO,
            bl: 64,
            bl_c: 128,
            tau: Some(1),
            n_init_pulses: 0,
            zero_shift: ZeroShiftMode::Alternating,
            management: Management::both(),
        };
        Self { hidden: 64, backend: backend.into(), spec }
    }
}

const SHD_LR: f64 = 0.07;
const SHD_LR_C_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub cross_entropy: f64,
}

/// Builds and trains one network. Initialization, device sampling and
/// training noise draw from separate streams of `run.seed`.
pub fn train_lstm(
    cfg: &LstmConfig,
    corpus: &Corpus,
    run: &TrainRun,
    registry: &BackendRegistry,
) -> Result<Vec<CurvePoint>> {
    run.validate()?;
    cfg.spec.validate()?;
    let specs = char_lstm(corpus.vocab_size(), cfg.hidden);
    let mut net = build_network(&specs, &cfg.backend, &cfg.spec, registry, &mut stream(run.seed, 0))?;
    let mut rng = stream(run.seed, 1);
    let mut curve = Vec::new();
    for epoch in 1..=run.epochs {
        let ce = train_epoch(&mut net, corpus, run, &mut rng)?;
        if epoch % run.eval_every == 0 || epoch == run.epochs {
            curve.push(CurvePoint { epoch, cross_entropy: ce });
        }
    }
    Ok(curve)
}

/// Largest relative deviation between back-propagated gradients and central
/// finite differences (step 1e−5) over every weight. Each entry compares as
/// `|a − n| / max(|a|, |n|, floor)`; the floor keeps entries whose gradient
/// vanishes from dividing rounding noise by zero.
pub fn gradcheck(net: &mut Network, sample: &Sample) -> Result<f64> {
    const STEP: f64 = 1e-5;
    const FLOOR: f64 = 1e-6;
    if net.backend() != "digital-fp" {
        return Err(Error::InvalidParam("gradcheck needs the digital-fp backend".into()));
    }
    let mut rng = stream(0, 0);
    let (_, grads) = net.gradients(sample, &mut rng)?;
    let base = net.read_weights();
    let mut worst: f64 = 0.0;
    for (b, g) in grads.iter().enumerate() {
        for k in 0..g.data.len() {
            let mut probe = |delta: f64| -> Result<f64> {
                let mut w = base.clone();
                w[b].data[k] += delta;
                net.program_weights(&w)?;
                net.loss(sample, &mut rng)
            };
            let numeric = (probe(STEP)? - probe(-STEP)?) / (2.0 * STEP);
            let analytic = g.data[k];
            let denom = analytic.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    net.program_weights(&base)?;
    Ok(worst)
}
