#![allow(dead_code)]

use boolnet::config::RunConfig;
use boolnet::layers::BooleanLinear;
use boolnet::logic::Connective;
use boolnet::model::Model;
use boolnet::optimizer::{flip_decision, FlipAction, OptimizerState};
use boolnet::tensor::{BitTensor, MixedTensor};
use boolnet::train::{train, TrainReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const XOR_SEEDS: u64 = 20;
pub const PARITY_SEEDS: u64 = 20;

pub fn xor_config(seed: u64) -> RunConfig {
    RunConfig::from_json(&format!(
        r#"{{
            "seed": {seed},
            "model": {{"layers": [{{"width": 8, "window": 0}}]}},
            "data": {{"task": "xor2"}},
            "optimizer": {{"head_lr": 0.5}},
            "train": {{"batch_size": 1, "iterations": 500, "target_train_accuracy": 1.0}}
        }}"#
    ))
    .unwrap()
    .effective()
}

pub fn parity4_config(seed: u64) -> RunConfig {
    RunConfig::from_json(&format!(
        r#"{{
            "seed": {seed},
            "model": {{"layers": [{{"width": 32, "window": 0}}]}},
            "data": {{"task": "parity", "n": 4}},
            "optimizer": {{"head_lr": 4.0}},
            "train": {{"batch_size": 2, "iterations": 5000, "target_train_accuracy": 1.0}}
        }}"#
    ))
    .unwrap()
    .effective()
}

pub fn run(cfg: &RunConfig) -> (TrainReport, Model, OptimizerState) {
    cfg.validate().unwrap();
    let data = cfg.load_data().unwrap();
    let mut model = cfg.build_model(&data).unwrap();
    let mut opt = cfg.build_optimizer().unwrap();
    let report = train(&mut model, &mut opt, &data, &cfg.train, cfg.optimizer.head_lr).unwrap();
    (report, model, opt)
}

/// `L = Σ c[k][j] · s[k][j]` over the layer's pre-activation counts.
fn linear_loss(layer: &BooleanLinear, x: &BitTensor, c: &[f64]) -> f64 {
    let s = layer.forward(x).unwrap();
    s.data().iter().zip(c).map(|(&s, &c)| f64::from(s) * c).sum()
}

fn with_param_flipped(layer: &BooleanLinear, row: usize, j: usize) -> BooleanLinear {
    let mut w = layer.weights_by_output().clone();
    let mut b = layer.bias().clone();
    if row == 0 {
        b.toggle(0, j);
    } else {
        w.toggle(j, row - 1);
    }
    BooleanLinear::new(layer.kind(), w, b).unwrap()
}

#[derive(Debug, Default)]
pub struct FlipOracleTally {
    pub instances: usize,
    pub decisions: usize,
    pub disagreements: Vec<String>,
}

/// For random single layers under a linear loss, compares the flip rule with
/// the sign of the loss change from actually flipping each parameter. A flip
/// is correct exactly when it strictly lowers the loss.
pub fn flip_oracle(instances: usize, seed: u64) -> FlipOracleTally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = FlipOracleTally::default();
    for t in 0..instances {
        let kind = if t % 2 == 0 { Connective::Xnor } else { Connective::Xor };
        let m = rng.gen_range(1..=6);
        let n = rng.gen_range(1..=6);
        let k = rng.gen_range(1..=4);
        let layer = BooleanLinear::random(kind, m, n, &mut rng).unwrap();
        let x = BitTensor::random(&[k, m], &mut rng).unwrap();
        // Small integers make exact ties, where both sides must keep.
        let c: Vec<f64> = (0..k * n).map(|_| f64::from(rng.gen_range(-3i32..=3))).collect();
        let u = MixedTensor::from_reals(k, n, &c).unwrap();
        let q = layer.weight_signal(&x, &u).unwrap();
        let base = linear_loss(&layer, &x, &c);
        for row in 0..=m {
            for j in 0..n {
                let decided = flip_decision(q.get(row, j), layer.param(row, j));
                let delta = linear_loss(&with_param_flipped(&layer, row, j), &x, &c) - base;
                let expected = if delta < 0.0 { FlipAction::Invert } else { FlipAction::Keep };
                tally.decisions += 1;
                if decided != expected {
                    tally.disagreements.push(format!(
                        "instance {t} {kind:?} m={m} n={n} k={k} param ({row},{j}): rule {decided:?}, loss change {delta}"
                    ));
                }
            }
        }
        tally.instances += 1;
    }
    tally
}

/// Compares the packed forward pass with a scalar loop; returns the number of
/// mismatching counts.
pub fn kernel_mismatches(instances: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for t in 0..instances {
        let kind = if t % 2 == 0 { Connective::Xnor } else { Connective::Xor };
        // Widths straddle the 64-bit word boundary.
        let m = rng.gen_range(1..=200);
        let n = rng.gen_range(1..=8);
        let k = rng.gen_range(1..=4);
        let layer = BooleanLinear::random(kind, m, n, &mut rng).unwrap();
        let x = BitTensor::random(&[k, m], &mut rng).unwrap();
        let s = layer.forward(&x).unwrap();
        for r in 0..k {
            for j in 0..n {
                let naive = i32::from(layer.bias().get(0, j))
                    + (0..m)
                        .filter(|&i| kind.apply_bool(x.get(r, i), layer.weight(i, j)))
                        .count() as i32;
                if naive != s.get(r, j) {
                    bad += 1;
                }
            }
        }
    }
    bad
}

/// Largest absolute gap between analytic head gradients (weights, bias and
/// input) and central finite differences over random small instances.
pub fn head_gradient_error(instances: usize, seed: u64) -> f64 {
    use boolnet::layers::OutputHead;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (d, c, batch) = (rng.gen_range(1..=8), rng.gen_range(2..=5), rng.gen_range(1..=5));
        let weights: Vec<f64> = (0..d * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let input: Vec<f64> = (0..batch * d).map(|_| if rng.gen() { 1.0 } else { -1.0 }).collect();
        let labels: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..c)).collect();
        let head = OutputHead::new(d, c, weights.clone(), bias.clone()).unwrap();
        let g = head.gradients_real(&input, &labels).unwrap();

        let central = |plus: &OutputHead, minus: &OutputHead, x_plus: &[f64], x_minus: &[f64]| {
            (plus.loss_real(x_plus, &labels).unwrap() - minus.loss_real(x_minus, &labels).unwrap()) / (2.0 * h)
        };
        for i in 0..weights.len() {
            let (mut p, mut m) = (weights.clone(), weights.clone());
            p[i] += h;
            m[i] -= h;
            let fd = central(
                &OutputHead::new(d, c, p, bias.clone()).unwrap(),
                &OutputHead::new(d, c, m, bias.clone()).unwrap(),
                &input,
                &input,
            );
            worst = worst.max((fd - g.weights[i]).abs());
        }
        for i in 0..bias.len() {
            let (mut p, mut m) = (bias.clone(), bias.clone());
            p[i] += h;
            m[i] -= h;
            let fd = central(
                &OutputHead::new(d, c, weights.clone(), p).unwrap(),
                &OutputHead::new(d, c, weights.clone(), m).unwrap(),
                &input,
                &input,
            );
            worst = worst.max((fd - g.bias[i]).abs());
        }
        for i in 0..input.len() {
            let (mut p, mut m) = (input.clone(), input.clone());
            p[i] += h;
            m[i] -= h;
            let fd = central(&head, &head, &p, &m);
            worst = worst.max((fd - g.input[i]).abs());
        }
    }
    worst
}
