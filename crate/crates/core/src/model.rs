//! Layer stack, one training step, evaluation and checkpoints.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::{BooleanLinear, OutputHead, ThresholdActivation};
use crate::logic::Connective;
use crate::optimizer::{accumulate_step_with_threshold, update_beta, EtaSchedule, OptimizerState};
use crate::tensor::{take_u32, take_u64, BitTensor};

/// One hidden layer of the model description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub width: usize,
    #[serde(default = "default_kind")]
    pub kind: Connective,
    /// Defaults to `⌈(fan_in + 1) / 2⌉`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<i32>,
    /// Defaults to `⌈√fan_in⌉`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u32>,
}

fn default_kind() -> Connective {
    Connective::Xnor
}

impl LayerSpec {
    pub fn new(width: usize, kind: Connective) -> Self {
        LayerSpec {
            width,
            kind,
            tau: None,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub linear: BooleanLinear,
    pub act: ThresholdActivation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub blocks: Vec<Block>,
    pub head: OutputHead,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub loss: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub flips: Vec<usize>,
    pub beta: Vec<f64>,
}

/// Rows evaluated per chunk, bounding the size of intermediate counts.
const EVAL_CHUNK: usize = 2048;

impl Model {
    /// Fair-Bernoulli Boolean layers and a uniform head, all drawn from one
    /// generator seeded with `seed`.
    pub fn new(inputs: usize, classes: usize, layers: &[LayerSpec], seed: u64) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Config("model needs at least one class".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(layers.len());
        let mut fan_in = inputs;
        for spec in layers {
            if spec.width == 0 {
                return Err(Error::Config("layer width must be positive".into()));
            }
            let linear = BooleanLinear::random(spec.kind, fan_in, spec.width, &mut rng)?;
            let default = ThresholdActivation::for_fan_in(fan_in);
            let act = ThresholdActivation::new(spec.tau.unwrap_or(default.tau), spec.window.unwrap_or(default.window));
            blocks.push(Block { linear, act });
            fan_in = spec.width;
        }
        let head = OutputHead::random(fan_in, classes, &mut rng)?;
        Ok(Model { blocks, head, seed })
    }

    pub fn inputs(&self) -> usize {
        self.blocks.first().map_or(self.head.inputs(), |b| b.linear.inputs())
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.features() != self.inputs() {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} input features, dataset has {}",
                self.inputs(),
                data.features()
            )));
        }
        if data.classes > self.classes() {
            return Err(Error::ShapeMismatch(format!(
                "model has {} classes, dataset has {}",
                self.classes(),
                data.classes
            )));
        }
        Ok(())
    }

    /// Boolean features fed to the head.
    pub fn features(&self, x: &BitTensor) -> Result<BitTensor> {
        let mut a = x.clone();
        for b in &self.blocks {
            a = b.act.forward(&b.linear.forward(&a)?);
        }
        Ok(a)
    }

    pub fn predict(&self, x: &BitTensor) -> Result<Vec<usize>> {
        let f = self.features(x)?;
        let labels = vec![0; f.rows()];
        Ok(self.head.predict(&f, &labels)?.0)
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<Metrics> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.check_dataset(data)?;
        let (mut correct, mut loss) = (0usize, 0.0);
        let idx: Vec<usize> = (0..data.len()).collect();
        for chunk in idx.chunks(EVAL_CHUNK) {
            let part = data.subset(chunk);
            let f = self.features(&part.inputs)?;
            let (pred, l) = self.head.predict(&f, &part.labels)?;
            correct += pred.iter().zip(&part.labels).filter(|(p, y)| p == y).count();
            loss += l;
        }
        Ok(Metrics {
            accuracy: correct as f64 / data.len() as f64,
            loss: loss / data.len() as f64,
            samples: data.len(),
        })
    }

    /// One iteration on a batch: forward, head loss and gradient, then the
    /// Boolean layers from the top down. Each layer's backprop signal is
    /// computed from its weights before they are updated. The head takes its
    /// SGD step last.
    pub fn train_step(
        &mut self,
        x: &BitTensor,
        labels: &[usize],
        opt: &OptimizerState,
        head_lr: f64,
    ) -> Result<StepStats> {
        let mut inputs = Vec::with_capacity(self.blocks.len());
        let mut counts = Vec::with_capacity(self.blocks.len());
        let mut a = x.clone();
        for b in &self.blocks {
            let s = b.linear.forward(&a)?;
            let next = b.act.forward(&s);
            inputs.push(a);
            counts.push(s);
            a = next;
        }
        let (grads, mut upstream) = match self.head.forward_backward(&a, labels) {
            Err(Error::InvalidValue(detail)) => {
                return Err(Error::NonFiniteLoss {
                    iteration: opt.iteration,
                    detail,
                })
            }
            other => other?,
        };

        let mut flips = vec![0; self.blocks.len()];
        let mut beta = vec![1.0; self.blocks.len()];
        for l in (0..self.blocks.len()).rev() {
            let b = &mut self.blocks[l];
            let u = b.act.backward(&counts[l], &upstream)?;
            let q = b.linear.weight_signal(&inputs[l], &u)?;
            if l > 0 {
                upstream = b.linear.backprop_signal(&u)?;
            }
            let mask = accumulate_step_with_threshold(&mut b.linear, &q, opt.eta, opt.flip_threshold)?;
            beta[l] = update_beta(&mut b.linear, &mask);
            flips[l] = mask.flips;
        }
        self.head.sgd_step(&grads, head_lr);
        if !self.head.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: opt.iteration,
                detail: "head parameters diverged".into(),
            });
        }
        Ok(StepStats {
            loss: grads.loss,
            flips,
            beta,
        })
    }

    /// Total number of Boolean parameters whose value differs from `other`.
    pub fn boolean_distance(&self, other: &Model) -> Result<Vec<usize>> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::ShapeMismatch("models differ in depth".into()));
        }
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| {
                Ok(a.linear.weights_by_output().hamming(b.linear.weights_by_output())?
                    + a.linear.bias().hamming(b.linear.bias())?)
            })
            .collect()
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BLNB";
pub const CHECKPOINT_VERSION: u16 = 1;
/// Magic, version and checksum.
const HEADER_LEN: usize = 4 + 2 + 4;

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.extend((values.len() as u64).to_le_bytes());
    for v in values {
        out.extend(v.to_le_bytes());
    }
}

fn take_f64s(input: &mut &[u8]) -> Result<Vec<f64>> {
    let n = take_u64(input)? as usize;
    if input.len() / 8 < n {
        return Err(Error::Format("truncated real array".into()));
    }
    (0..n).map(|_| take_u64(input).map(f64::from_bits)).collect()
}

fn section(out: &mut Vec<u8>, tag: &[u8; 4], body: Vec<u8>) {
    out.extend(tag);
    out.extend((body.len() as u64).to_le_bytes());
    out.extend(body);
}

fn take_section<'a>(input: &mut &'a [u8], tag: &[u8; 4]) -> Result<&'a [u8]> {
    let (found, rest) = input
        .split_first_chunk::<4>()
        .ok_or_else(|| Error::Format("missing section".into()))?;
    if found != tag {
        return Err(Error::Format(format!(
            "expected section {}, found {}",
            String::from_utf8_lossy(tag),
            String::from_utf8_lossy(found)
        )));
    }
    *input = rest;
    let len = take_u64(input)? as usize;
    if input.len() < len {
        return Err(Error::Format("truncated section".into()));
    }
    let (body, rest) = input.split_at(len);
    *input = rest;
    Ok(body)
}

fn take_u8(input: &mut &[u8]) -> Result<u8> {
    let (&b, rest) = input
        .split_first()
        .ok_or_else(|| Error::Format("unexpected end of data".into()))?;
    *input = rest;
    Ok(b)
}

fn ensure_consumed(body: &[u8], tag: &str) -> Result<()> {
    if body.is_empty() {
        Ok(())
    } else {
        Err(Error::Format(format!("{} trailing bytes in section {tag}", body.len())))
    }
}

/// Serializes the model and optimizer state. Layout: `BLNB`, version (u16
/// LE), CRC32 of the payload (u32 LE), then the payload of tagged sections
/// `MODL`, one `BLIN` per Boolean layer, `HEAD` and `OPTM`.
pub fn encode_checkpoint(model: &Model, opt: &OptimizerState) -> Vec<u8> {
    let mut payload = Vec::new();

    let mut body = Vec::new();
    body.extend(model.seed.to_le_bytes());
    body.extend((model.blocks.len() as u32).to_le_bytes());
    section(&mut payload, b"MODL", body);

    for b in &model.blocks {
        let mut body = vec![b.linear.kind().to_u8()];
        body.extend(b.act.tau.to_le_bytes());
        body.extend(b.act.window.to_le_bytes());
        b.linear.weights_by_output().write_le(&mut body);
        b.linear.bias().write_le(&mut body);
        body.extend(b.linear.beta().to_le_bytes());
        put_f64s(&mut body, b.linear.accumulator());
        section(&mut payload, b"BLIN", body);
    }

    let mut body = Vec::new();
    body.extend((model.head.inputs() as u64).to_le_bytes());
    body.extend((model.head.classes() as u64).to_le_bytes());
    put_f64s(&mut body, model.head.weights());
    put_f64s(&mut body, model.head.bias());
    section(&mut payload, b"HEAD", body);

    let mut body = Vec::new();
    body.extend(opt.eta0.to_le_bytes());
    body.extend(opt.eta.to_le_bytes());
    match opt.schedule {
        EtaSchedule::Constant => {
            body.push(0);
            body.extend(1.0f64.to_le_bytes());
            body.extend(1u32.to_le_bytes());
        }
        EtaSchedule::Step { gamma, every } => {
            body.push(1);
            body.extend(gamma.to_le_bytes());
            body.extend(every.to_le_bytes());
        }
    }
    body.extend(opt.iteration.to_le_bytes());
    body.extend(opt.epoch.to_le_bytes());
    body.extend(opt.flip_threshold.to_le_bytes());
    section(&mut payload, b"OPTM", body);

    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend(CHECKPOINT_MAGIC);
    out.extend(CHECKPOINT_VERSION.to_le_bytes());
    out.extend(crc32fast::hash(&payload).to_le_bytes());
    out.extend(payload);
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Model, OptimizerState)> {
    if bytes.len() < 6 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checksum { stored: 0, computed: crc32fast::hash(&[]) });
    }
    let stored = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes"));
    let payload = &bytes[HEADER_LEN..];
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut input = payload;
    let mut body = take_section(&mut input, b"MODL")?;
    let seed = take_u64(&mut body)?;
    let depth = take_u32(&mut body)? as usize;
    ensure_consumed(body, "MODL")?;

    let mut blocks = Vec::with_capacity(depth.min(1024));
    for _ in 0..depth {
        let mut body = take_section(&mut input, b"BLIN")?;
        let kind = Connective::from_u8(take_u8(&mut body)?).ok_or_else(|| Error::Format("bad connective".into()))?;
        let tau = take_u32(&mut body)? as i32;
        let window = take_u32(&mut body)?;
        let weights = BitTensor::read_le(&mut body)?;
        let bias = BitTensor::read_le(&mut body)?;
        let beta = f64::from_bits(take_u64(&mut body)?);
        let acc = take_f64s(&mut body)?;
        ensure_consumed(body, "BLIN")?;
        let linear = BooleanLinear::restore(kind, weights, bias, acc, beta)?;
        if let Some(prev) = blocks.last().map(|b: &Block| b.linear.outputs()) {
            if prev != linear.inputs() {
                return Err(Error::Format("adjacent layer shapes disagree".into()));
            }
        }
        blocks.push(Block {
            linear,
            act: ThresholdActivation::new(tau, window),
        });
    }

    let mut body = take_section(&mut input, b"HEAD")?;
    let inputs = take_u64(&mut body)? as usize;
    let classes = take_u64(&mut body)? as usize;
    let weights = take_f64s(&mut body)?;
    let bias = take_f64s(&mut body)?;
    ensure_consumed(body, "HEAD")?;
    let head = OutputHead::new(inputs, classes, weights, bias).map_err(|e| Error::Format(format!("head: {e}")))?;
    if let Some(last) = blocks.last() {
        if last.linear.outputs() != inputs {
            return Err(Error::Format("head does not match the last layer".into()));
        }
    }

    let mut body = take_section(&mut input, b"OPTM")?;
    let eta0 = f64::from_bits(take_u64(&mut body)?);
    let eta = f64::from_bits(take_u64(&mut body)?);
    let tag = take_u8(&mut body)?;
    let gamma = f64::from_bits(take_u64(&mut body)?);
    let every = take_u32(&mut body)?;
    let schedule = match tag {
        0 => EtaSchedule::Constant,
        1 => EtaSchedule::Step { gamma, every },
        _ => return Err(Error::Format(format!("bad schedule tag {tag}"))),
    };
    let iteration = take_u64(&mut body)?;
    let epoch = take_u64(&mut body)?;
    let threshold = f64::from_bits(take_u64(&mut body)?);
    ensure_consumed(body, "OPTM")?;
    ensure_consumed(input, "payload")?;
    let mut opt = OptimizerState::new(eta0, schedule)
        .and_then(|o| o.with_flip_threshold(threshold))
        .map_err(|e| Error::Format(e.to_string()))?;
    opt.eta = eta;
    opt.iteration = iteration;
    opt.epoch = epoch;

    Ok((Model { blocks, head, seed }, opt))
}

pub fn save_checkpoint(model: &Model, opt: &OptimizerState, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model, opt))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, OptimizerState)> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticTask};

    fn small() -> (Model, OptimizerState) {
        let layers = [LayerSpec::new(8, Connective::Xnor), LayerSpec::new(5, Connective::Xor)];
        let model = Model::new(4, 3, &layers, 11).unwrap();
        let opt = OptimizerState::new(0.25, EtaSchedule::Step { gamma: 0.5, every: 3 })
            .unwrap()
            .with_flip_threshold(0.125)
            .unwrap();
        (model, opt)
    }

    #[test]
    fn checkpoint_round_trip() {
        let (mut model, mut opt) = small();
        let data = gen_synthetic(SyntheticTask::Parity { n: 4 }, 0, 0).unwrap().train;
        let labels: Vec<usize> = data.labels.clone();
        for _ in 0..3 {
            model.train_step(&data.inputs, &labels, &opt, 0.1).unwrap();
            opt.iteration += 1;
        }
        let bytes = encode_checkpoint(&model, &opt);
        let (m2, o2) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(m2, model);
        assert_eq!(o2, opt);
        assert_eq!(encode_checkpoint(&m2, &o2), bytes);
    }

    #[test]
    fn checkpoint_errors() {
        let (model, opt) = small();
        let bytes = encode_checkpoint(&model, &opt);
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(Error::Checksum { .. })
        ));
        let mut v0 = bytes.clone();
        v0[4] = 0;
        v0[5] = 0;
        assert!(matches!(
            decode_checkpoint(&v0),
            Err(Error::Version { found: 0, supported: 1 })
        ));
        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 1;
        assert!(matches!(decode_checkpoint(&flipped), Err(Error::Checksum { .. })));
        assert!(matches!(decode_checkpoint(b"NOPE"), Err(Error::Format(_))));
    }

    #[test]
    fn evaluate_errors() {
        let (model, _) = small();
        let data = gen_synthetic(SyntheticTask::Parity { n: 4 }, 0, 0).unwrap().train;
        assert!(matches!(model.evaluate(&data.subset(&[])), Err(Error::EmptyDataset)));
        let wrong = gen_synthetic(SyntheticTask::Parity { n: 3 }, 0, 0).unwrap().train;
        assert!(matches!(model.evaluate(&wrong), Err(Error::ShapeMismatch(_))));
        let m = model.evaluate(&data).unwrap();
        assert_eq!(m.samples, 16);
    }

    #[test]
    fn zero_eta_keeps_boolean_weights() {
        let (mut model, _) = small();
        let before = model.clone();
        let opt = OptimizerState::new(0.0, EtaSchedule::Constant).unwrap();
        let data = gen_synthetic(SyntheticTask::Parity { n: 4 }, 0, 0).unwrap().train;
        for _ in 0..5 {
            model.train_step(&data.inputs, &data.labels, &opt, 0.1).unwrap();
        }
        assert_eq!(model.boolean_distance(&before).unwrap(), vec![0, 0]);
        assert_ne!(model.head, before.head);
    }

    #[test]
    fn flips_match_weight_changes_in_one_step() {
        let (mut model, opt) = small();
        let before = model.clone();
        let data = gen_synthetic(SyntheticTask::Parity { n: 4 }, 0, 0).unwrap().train;
        let stats = model.train_step(&data.inputs, &data.labels, &opt, 0.1).unwrap();
        assert_eq!(model.boolean_distance(&before).unwrap(), stats.flips);
    }

    #[test]
    fn diverging_head_is_reported() {
        let (mut model, opt) = small();
        let data = gen_synthetic(SyntheticTask::Parity { n: 4 }, 0, 0).unwrap().train;
        let mut err = None;
        for _ in 0..10 {
            if let Err(e) = model.train_step(&data.inputs, &data.labels, &opt, 1e308) {
                err = Some(e);
                break;
            }
        }
        assert!(matches!(err, Some(Error::NonFiniteLoss { .. })));
    }
}
