//! Synthetic Boolean tasks and IDX image ingestion.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::BooleanLinear;
use crate::logic::Connective;
use crate::tensor::BitTensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const DEFAULT_THRESHOLD: u8 = 127;
pub const MAX_PARITY_BITS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: BitTensor,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(inputs: BitTensor, labels: Vec<usize>, classes: usize, split: Split) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "dataset inputs must be [N, d], got {:?}",
                inputs.shape()
            )));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: inputs.rows(),
                actual: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(Dataset {
            inputs,
            labels,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            split: self.split,
        }
    }
}

/// Train and test parts of a task. Tasks that enumerate a whole truth table
/// use the same points for both.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase", deny_unknown_fields)]
pub enum SyntheticTask {
    Xor2,
    Parity {
        n: usize,
    },
    /// Labels from a frozen random XNOR layer: argmax of its counts, first
    /// maximum on ties.
    Teacher {
        inputs: usize,
        classes: usize,
        seed: u64,
    },
}

impl std::str::FromStr for SyntheticTask {
    type Err = Error;

    /// `xor2`, `parityN` / `parity:N`, `teacher:M:C:SEED`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown task {s:?}"));
        if s == "xor2" {
            return Ok(SyntheticTask::Xor2);
        }
        if let Some(rest) = s.strip_prefix("parity") {
            let n = rest.strip_prefix(':').unwrap_or(rest).parse().map_err(|_| bad())?;
            return Ok(SyntheticTask::Parity { n });
        }
        if let Some(rest) = s.strip_prefix("teacher:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if let [m, c, seed] = parts[..] {
                return Ok(SyntheticTask::Teacher {
                    inputs: m.parse().map_err(|_| bad())?,
                    classes: c.parse().map_err(|_| bad())?,
                    seed: seed.parse().map_err(|_| bad())?,
                });
            }
        }
        Err(bad())
    }
}

fn truth_table(n: usize, label: impl Fn(usize) -> usize, classes: usize) -> Result<TaskData> {
    let rows = 1usize << n;
    // Row r lists the bits of r, most significant first.
    let bits: Vec<bool> = (0..rows)
        .flat_map(|r| (0..n).map(move |i| (r >> (n - 1 - i)) & 1 == 1))
        .collect();
    let inputs = BitTensor::pack(&bits, &[rows, n])?;
    let labels = (0..rows).map(label).collect();
    let train = Dataset::new(inputs, labels, classes, Split::Train)?;
    let mut test = train.clone();
    test.split = Split::Test;
    Ok(TaskData { train, test })
}

/// Generates a synthetic task. `train_size` and `test_size` apply to the
/// teacher task only; the others enumerate all points.
pub fn gen_synthetic(task: SyntheticTask, train_size: usize, test_size: usize) -> Result<TaskData> {
    match task {
        SyntheticTask::Xor2 => truth_table(2, |r| (r.count_ones() % 2) as usize, 2),
        SyntheticTask::Parity { n } => {
            if n == 0 || n > MAX_PARITY_BITS {
                return Err(Error::Config(format!(
                    "parity needs 1..={MAX_PARITY_BITS} bits, got {n}"
                )));
            }
            truth_table(n, |r| (r.count_ones() % 2) as usize, 2)
        }
        SyntheticTask::Teacher { inputs, classes, seed } => teacher(inputs, classes, train_size, test_size, seed),
    }
}

fn teacher(m: usize, classes: usize, train: usize, test: usize, seed: u64) -> Result<TaskData> {
    if m == 0 || classes < 2 {
        return Err(Error::Config("teacher needs at least one input and two classes".into()));
    }
    let total = train + test;
    if train == 0 || (m < 64 && (total as u64) > (1u64 << m)) {
        return Err(Error::Config(format!(
            "cannot draw {total} distinct points from {m} bits (train must be non-empty)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = BooleanLinear::random(Connective::Xnor, m, classes, &mut rng)?;
    let mut seen = HashSet::with_capacity(total);
    let mut bits = Vec::with_capacity(total * m);
    while seen.len() < total {
        let point: Vec<bool> = (0..m).map(|_| rng.gen()).collect();
        if seen.insert(point.clone()) {
            bits.extend(point);
        }
    }
    let inputs = BitTensor::pack(&bits, &[total, m])?;
    let counts = net.forward(&inputs)?;
    let labels: Vec<usize> = counts
        .data()
        .chunks(classes)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    let train_idx: Vec<usize> = (0..train).collect();
    let test_idx: Vec<usize> = (train..total).collect();
    let all = Dataset::new(inputs, labels, classes, Split::All)?;
    let mut tr = all.subset(&train_idx);
    tr.split = Split::Train;
    let mut te = all.subset(&test_idx);
    te.split = Split::Test;
    Ok(TaskData { train: tr, test: te })
}

struct Reader<'a> {
    what: &'a str,
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn u32(&mut self) -> Result<u32> {
        if self.bytes.len() < 4 {
            return Err(Error::Format(format!("{}: truncated header", self.what)));
        }
        let (head, rest) = self.bytes.split_at(4);
        self.bytes = rest;
        Ok(u32::from_be_bytes(head.try_into().expect("4 bytes")))
    }
}

fn read_header(what: &str, bytes: &[u8], magic: u32) -> Result<(Vec<usize>, usize)> {
    let mut r = Reader { what, bytes };
    let found = r.u32()?;
    if found != magic {
        return Err(Error::Format(format!(
            "{what}: bad magic {found:#010x}, expected {magic:#010x}"
        )));
    }
    let rank = (magic & 0xff) as usize;
    let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    Ok((dims, 4 + 4 * rank))
}

/// Parses IDX image and label buffers; a pixel becomes T iff it exceeds
/// `threshold`.
pub fn parse_idx(images: &[u8], labels: &[u8], threshold: u8) -> Result<Dataset> {
    let (idims, ioff) = read_header("images", images, IDX_IMAGES_MAGIC)?;
    let (ldims, loff) = read_header("labels", labels, IDX_LABELS_MAGIC)?;
    let (n, d) = (idims[0], idims[1] * idims[2]);
    if ldims[0] != n {
        return Err(Error::Format(format!("{n} images but {} labels", ldims[0])));
    }
    let pixels = &images[ioff..];
    let label_bytes = &labels[loff..];
    if pixels.len() < n * d {
        return Err(Error::Format(format!(
            "images: truncated, need {} pixel bytes, found {}",
            n * d,
            pixels.len()
        )));
    }
    if label_bytes.len() < n {
        return Err(Error::Format(format!("labels: truncated, need {n} bytes, found {}", label_bytes.len())));
    }
    let bits: Vec<bool> = pixels[..n * d].iter().map(|&p| p > threshold).collect();
    let labels: Vec<usize> = label_bytes[..n].iter().map(|&l| usize::from(l)).collect();
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(BitTensor::pack(&bits, &[n, d])?, labels, classes, Split::All)
}

pub fn load_idx(images: &Path, labels: &Path, threshold: u8) -> Result<Dataset> {
    let read = |p: &Path| {
        fs::read(p).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))
    };
    parse_idx(&read(images)?, &read(labels)?, threshold)
}

/// Serializes a dataset as an IDX pair: images `N × 1 × d` with pixels 0 or
/// 255, labels one byte each.
pub fn encode_idx(data: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    if data.classes > 256 {
        return Err(Error::Config("IDX labels hold at most 256 classes".into()));
    }
    let (n, d) = (data.len(), data.features());
    let to_u32 = |v: usize| u32::try_from(v).map_err(|_| Error::Config(format!("{v} exceeds IDX limits")));
    let mut images = Vec::with_capacity(16 + n * d);
    images.extend(IDX_IMAGES_MAGIC.to_be_bytes());
    for dim in [n, 1, d] {
        images.extend(to_u32(dim)?.to_be_bytes());
    }
    images.extend(data.inputs.unpack().into_iter().map(|b| if b { 255u8 } else { 0 }));
    let mut labels = Vec::with_capacity(8 + n);
    labels.extend(IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend(to_u32(n)?.to_be_bytes());
    labels.extend(data.labels.iter().map(|&l| l as u8));
    Ok((images, labels))
}

pub fn write_idx(data: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    let (img, lbl) = encode_idx(data)?;
    fs::write(images, img)?;
    fs::write(labels, lbl)?;
    Ok(())
}

/// Shuffled mini-batch index lists covering `0..n` once.
pub fn batches(n: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
