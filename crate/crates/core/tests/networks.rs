use crosspoint::matrix::Matrix;
use crosspoint::networks::{
    build_network, char_lstm, gradcheck, train_lstm, Activation, Corpus, LayerSpec, LstmConfig, Network, Sample,
    TrainRun,
};
use crosspoint::rng::seeded;
use crosspoint::trainers::{BackendRegistry, BackendSpec};

const LR: f64 = 0.05;

fn network(specs: &[LayerSpec], backend: &str, seed: u64) -> Network {
    let spec = BackendSpec { lr: LR, ..Default::default() };
    build_network(specs, backend, &spec, &BackendRegistry::with_defaults(), &mut seeded(seed)).unwrap()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Straight-line LSTM forward over blocks `[W_i, W_f, W_g, W_o, W_head]`,
/// input vector `[onehot, h, 1]`, summed cross-entropy from a zero state.
fn reference_loss(w: &[Matrix], vocab: usize, hidden: usize, inputs: &[usize], targets: &[usize]) -> f64 {
    let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
    let mut loss = 0.0;
    for (&x, &y) in inputs.iter().zip(targets) {
        let pre = |b: &Matrix, k: usize| {
            b.get(k, x) + (0..hidden).map(|j| b.get(k, vocab + j) * h[j]).sum::<f64>() + b.get(k, vocab + hidden)
        };
        let mut h_new = vec![0.0; hidden];
        for k in 0..hidden {
            let (i, f, g, o) =
                (sigmoid(pre(&w[0], k)), sigmoid(pre(&w[1], k)), pre(&w[2], k).tanh(), sigmoid(pre(&w[3], k)));
            c[k] = f * c[k] + i * g;
            h_new[k] = o * c[k].tanh();
        }
        h = h_new;
        let logits: Vec<f64> =
            (0..vocab).map(|k| (0..hidden).map(|j| w[4].get(k, j) * h[j]).sum::<f64>() + w[4].get(k, hidden)).collect();
        let norm: f64 = logits.iter().map(|z| z.exp()).sum::<f64>().ln();
        loss += norm - logits[y];
    }
    loss
}

#[test]
fn lstm_matches_reference_before_and_after_one_step() {
    let (vocab, hidden) = (4, 3);
    let mut net = network(&char_lstm(vocab, hidden), "digital-fp", 11);
    let (inputs, targets) = (vec![0, 2, 1, 3, 3], vec![2, 1, 3, 3, 0]);
    let sample = Sample::Sequence { inputs: inputs.clone(), targets: targets.clone() };
    let mut rng = seeded(0);
    let w0 = net.read_weights();
    let l0 = reference_loss(&w0, vocab, hidden, &inputs, &targets);
    assert!((net.loss(&sample, &mut rng).unwrap() - l0).abs() < 1e-12);

    // one unclipped step must equal w − lr·∇L with ∇L by central differences
    let mut state = net.initial_state();
    let reported = net.train_sample(&sample, &mut state, None, &mut rng).unwrap();
    assert!((reported - l0).abs() < 1e-12);
    let w1 = net.read_weights();
    for b in 0..w0.len() {
        for k in 0..w0[b].data.len() {
            let probe = |d: f64| {
                let mut w = w0.clone();
                w[b].data[k] += d;
                reference_loss(&w, vocab, hidden, &inputs, &targets)
            };
            let grad = (probe(1e-6) - probe(-1e-6)) / 2e-6;
            let expect = w0[b].data[k] - LR * grad;
            assert!((w1[b].data[k] - expect).abs() < 1e-6, "block {b} entry {k}");
        }
    }
    let l1 = reference_loss(&w1, vocab, hidden, &inputs, &targets);
    assert!((net.loss(&sample, &mut rng).unwrap() - l1).abs() < 1e-9);
    assert!(l1 < l0);
}

#[test]
fn noise_free_analog_forward_matches_digital() {
    let specs = char_lstm(6, 8);
    let digital = network(&specs, "digital-fp", 3);
    let sample = Sample::Sequence { inputs: vec![0, 5, 2, 2, 4, 1], targets: vec![5, 2, 2, 4, 1, 0] };
    let reference = digital.loss(&sample, &mut seeded(0)).unwrap();
    for backend in ["analog-sgd", "analog-shd", "analog-shd4"] {
        let mut net = network(&specs, backend, 4);
        net.program_weights(&digital.read_weights()).unwrap();
        let loss = net.loss(&sample, &mut seeded(0)).unwrap();
        assert!((loss - reference).abs() < 1e-3, "{backend}: {loss} vs {reference}");
        for (a, d) in net.read_weights().iter().zip(digital.read_weights()) {
            assert_eq!((a.rows, a.cols), (d.rows, d.cols));
        }
    }
}

#[test]
fn array_counts_per_backend() {
    let specs = char_lstm(5, 4);
    let blocks = 5;
    assert_eq!(network(&specs, "digital-fp", 0).array_count(), 0);
    assert_eq!(network(&specs, "analog-sgd", 0).array_count(), 2 * blocks);
    assert_eq!(network(&specs, "analog-shd", 0).array_count(), 3 * blocks);
    assert_eq!(network(&specs, "analog-shd4", 0).array_count(), 4 * blocks);
}

#[test]
fn gradcheck_dense_and_lstm() {
    let dense = [LayerSpec::dense(8, 8, Activation::Tanh), LayerSpec::softmax_head(8, 8)];
    let mut net = network(&dense, "digital-fp", 5);
    let x: Vec<f64> = (0..8).map(|k| (k as f64 * 0.7).sin()).collect();
    assert!(gradcheck(&mut net, &Sample::Vector { x, target: 3 }).unwrap() < 1e-5);
    assert!(gradcheck(&mut net, &Sample::Vector { x: vec![0.0; 8], target: 0 }).unwrap() < 1e-5);

    let mut lstm = network(&char_lstm(6, 8), "digital-fp", 6);
    let s = Sample::Sequence { inputs: vec![0, 3, 5, 1], targets: vec![3, 5, 1, 2] };
    assert!(gradcheck(&mut lstm, &s).unwrap() < 1e-4);
}

#[test]
fn digital_cross_entropy_falls_over_first_epochs() {
    let text = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/data/alice29.txt")).unwrap();
    let corpus = Corpus::from_bytes(&text, true).unwrap().truncated(3000);
    let cfg = LstmConfig { hidden: 16, spec: BackendSpec { lr: 0.1, ..Default::default() }, ..Default::default() };
    let run = TrainRun { epochs: 5, seed: 2, ..Default::default() };
    let curve = train_lstm(&cfg, &corpus, &run, &BackendRegistry::with_defaults()).unwrap();
    assert_eq!(curve.len(), 5);
    for pair in curve.windows(2) {
        assert!(pair[1].cross_entropy < pair[0].cross_entropy, "{curve:?}");
    }
    assert!(curve[0].cross_entropy < (corpus.vocab_size() as f64).ln());
}
