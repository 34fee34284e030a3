use rand::Rng;

use super::BackSignal;
use crate::error::{Error, Result};
use crate::logic::MixedVal;
use crate::tensor::{BitTensor, MixedTensor};

/// Real-valued linear classifier on ±1-embedded Boolean features, trained
/// with softmax cross-entropy and plain SGD. Its input gradient is the first
/// signal handed to the Boolean layers below it.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputHead {
    inputs: usize,
    classes: usize,
    /// `inputs × classes`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub loss: f64,
    /// Gradient of the mean loss w.r.t. the embedded input, batch × inputs.
    pub input: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl OutputHead {
    pub fn new(inputs: usize, classes: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::ShapeMismatch("head needs at least one class".into()));
        }
        if weights.len() != inputs * classes || bias.len() != classes {
            return Err(Error::ShapeMismatch(format!(
                "head parameters do not match {inputs} x {classes}"
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("head parameters must be finite".into()));
        }
        Ok(OutputHead {
            inputs,
            classes,
            weights,
            bias,
        })
    }

    /// Uniform weights in `±1/√inputs`, zero bias.
    pub fn random(inputs: usize, classes: usize, rng: &mut impl Rng) -> Result<Self> {
        let scale = 1.0 / (inputs.max(1) as f64).sqrt();
        let weights = (0..inputs * classes)
            .map(|_| rng.gen_range(-scale..=scale))
            .collect();
        Self::new(inputs, classes, weights, vec![0.0; classes])
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// ±1 embedding of a Boolean batch.
    pub fn embed_input(x: &BitTensor) -> Vec<f64> {
        x.unpack().into_iter().map(|b| if b { 1.0 } else { -1.0 }).collect()
    }

    fn check_batch(&self, values: usize, labels: &[usize]) -> Result<usize> {
        if self.inputs == 0 {
            if values != 0 {
                return Err(Error::ShapeMismatch("head has no inputs".into()));
            }
        } else if !values.is_multiple_of(self.inputs) || values / self.inputs != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "head expects {} inputs per sample, got {values} values for {} labels",
                self.inputs,
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.classes,
            });
        }
        Ok(labels.len())
    }

    /// Logits for real inputs, batch × classes.
    pub fn logits(&self, input: &[f64], batch: usize) -> Vec<f64> {
        let c = self.classes;
        let mut z = Vec::with_capacity(batch * c);
        for k in 0..batch {
            let x = &input[k * self.inputs..(k + 1) * self.inputs];
            let mut row = self.bias.clone();
            for (d, &xv) in x.iter().enumerate() {
                let w = &self.weights[d * c..(d + 1) * c];
                row.iter_mut().zip(w).for_each(|(a, &b)| *a += xv * b);
            }
            z.extend(row);
        }
        z
    }

    /// Mean softmax cross-entropy on real inputs.
    pub fn loss_real(&self, input: &[f64], labels: &[usize]) -> Result<f64> {
        let batch = self.check_batch(input.len(), labels)?;
        if batch == 0 {
            return Err(Error::EmptyDataset);
        }
        let z = self.logits(input, batch);
        let total: f64 = z
            .chunks(self.classes)
            .zip(labels)
            .map(|(row, &y)| log_sum_exp(row) - row[y])
            .sum();
        Ok(total / batch as f64)
    }

    /// Mean loss and its analytic gradients on real inputs.
    pub fn gradients_real(&self, input: &[f64], labels: &[usize]) -> Result<HeadGradients> {
        let batch = self.check_batch(input.len(), labels)?;
        if batch == 0 {
            return Err(Error::EmptyDataset);
        }
        let (d, c) = (self.inputs, self.classes);
        let z = self.logits(input, batch);
        let mut loss = 0.0;
        let mut dz = vec![0.0; batch * c];
        for (k, (row, &y)) in z.chunks(c).zip(labels).enumerate() {
            let lse = log_sum_exp(row);
            loss += lse - row[y];
            for (j, &v) in row.iter().enumerate() {
                let p = (v - lse).exp();
                dz[k * c + j] = (p - f64::from(j == y)) / batch as f64;
            }
        }
        let mut g_in = vec![0.0; batch * d];
        let mut g_w = vec![0.0; d * c];
        let mut g_b = vec![0.0; c];
        for k in 0..batch {
            let dzk = &dz[k * c..(k + 1) * c];
            g_b.iter_mut().zip(dzk).for_each(|(a, &b)| *a += b);
            for i in 0..d {
                let w = &self.weights[i * c..(i + 1) * c];
                g_in[k * d + i] = w.iter().zip(dzk).map(|(a, b)| a * b).sum();
                let xv = input[k * d + i];
                g_w[i * c..(i + 1) * c]
                    .iter_mut()
                    .zip(dzk)
                    .for_each(|(a, &b)| *a += xv * b);
            }
        }
        Ok(HeadGradients {
            loss: loss / batch as f64,
            input: g_in,
            weights: g_w,
            bias: g_b,
        })
    }

    /// Loss, parameter gradients, and the downstream signal for a Boolean
    /// batch. Each input-gradient entry `g` becomes `(p(g), |g|)`.
    pub fn forward_backward(&self, x: &BitTensor, labels: &[usize]) -> Result<(HeadGradients, BackSignal)> {
        if x.shape().len() != 2 || x.cols() != self.inputs {
            return Err(Error::ShapeMismatch(format!(
                "head expects [batch, {}] input, got {:?}",
                self.inputs,
                x.shape()
            )));
        }
        let grads = self.gradients_real(&Self::embed_input(x), labels)?;
        if !grads.loss.is_finite() || grads.input.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite head output (loss {})", grads.loss)));
        }
        let signal = MixedTensor::from_vals(
            x.rows(),
            self.inputs,
            &grads.input.iter().map(|&g| MixedVal::from_real_finite(g)).collect::<Vec<_>>(),
        )?;
        Ok((grads, signal))
    }

    /// Class predictions and mean loss for a Boolean batch.
    pub fn predict(&self, x: &BitTensor, labels: &[usize]) -> Result<(Vec<usize>, f64)> {
        let input = Self::embed_input(x);
        let batch = self.check_batch(input.len(), labels)?;
        let z = self.logits(&input, batch);
        let mut loss = 0.0;
        let preds = z
            .chunks(self.classes)
            .zip(labels)
            .map(|(row, &y)| {
                loss += log_sum_exp(row) - row[y];
                argmax(row)
            })
            .collect();
        Ok((preds, loss))
    }

    pub fn sgd_step(&mut self, grads: &HeadGradients, lr: f64) {
        self.weights
            .iter_mut()
            .zip(&grads.weights)
            .for_each(|(w, g)| *w -= lr * g);
        self.bias.iter_mut().zip(&grads.bias).for_each(|(b, g)| *b -= lr * g);
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Index of the first maximum.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_log_classes() {
        let head = OutputHead::new(3, 4, vec![0.0; 12], vec![0.5; 4]).unwrap();
        let x = BitTensor::pack(&[true, false, true], &[1, 3]).unwrap();
        let (g, _) = head.forward_backward(&x, &[2]).unwrap();
        assert!((g.loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_margin_drives_loss_to_zero() {
        let head = OutputHead::new(1, 2, vec![0.0, 0.0], vec![0.0, 50.0]).unwrap();
        let x = BitTensor::pack(&[true], &[1, 1]).unwrap();
        let (g, _) = head.forward_backward(&x, &[1]).unwrap();
        assert!(g.loss < 1e-20);
    }

    #[test]
    fn label_out_of_range() {
        let head = OutputHead::new(1, 2, vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let x = BitTensor::pack(&[true], &[1, 1]).unwrap();
        assert!(matches!(
            head.forward_backward(&x, &[2]),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let head = OutputHead::random(8, 3, &mut rng).unwrap();
        let input: Vec<f64> = (0..32).map(|_| if rng.gen() { 1.0 } else { -1.0 }).collect();
        let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..3)).collect();
        let g = head.gradients_real(&input, &labels).unwrap();
        let h = 1e-5;
        for i in 0..input.len() {
            let mut p = input.clone();
            let mut m = input.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (head.loss_real(&p, &labels).unwrap() - head.loss_real(&m, &labels).unwrap()) / (2.0 * h);
            assert!((fd - g.input[i]).abs() < 1e-6, "{i}: {fd} vs {}", g.input[i]);
        }
    }

    #[test]
    fn sgd_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut head = OutputHead::random(4, 2, &mut rng).unwrap();
        let x = BitTensor::pack(&[true, false, true, true, false, false, true, false], &[2, 4]).unwrap();
        let labels = [0, 1];
        let (g0, _) = head.forward_backward(&x, &labels).unwrap();
        for _ in 0..50 {
            let (g, _) = head.forward_backward(&x, &labels).unwrap();
            head.sgd_step(&g, 0.5);
        }
        let (g1, _) = head.forward_backward(&x, &labels).unwrap();
        assert!(g1.loss < g0.loss);
    }
}
