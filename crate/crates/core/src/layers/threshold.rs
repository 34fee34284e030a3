use serde::{Deserialize, Serialize};

use super::BackSignal;
use crate::error::{Error, Result};
use crate::logic::MixedVal;
use crate::tensor::{BitTensor, IntTensor, MixedTensor};

/// Step activation `y = T iff s >= tau`.
///
/// There is no variation through a step away from its threshold, so the
/// backward pass lets the upstream signal through only for counts within
/// `window` of `tau` and emits `Zero` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdActivation {
    pub tau: i32,
    pub window: u32,
}

impl ThresholdActivation {
    pub fn new(tau: i32, window: u32) -> Self {
        ThresholdActivation { tau, window }
    }

    /// Defaults for a neuron with `fan_in` Boolean inputs plus a bias:
    /// `tau = ⌈(fan_in + 1) / 2⌉`, `window = ⌈√fan_in⌉`.
    pub fn for_fan_in(fan_in: usize) -> Self {
        let tau = (fan_in + 1).div_ceil(2) as i32;
        let n = fan_in as u64;
        let mut window = n.isqrt();
        if window * window < n {
            window += 1;
        }
        ThresholdActivation {
            tau,
            window: window as u32,
        }
    }

    #[inline]
    pub fn fires(&self, s: i32) -> bool {
        s >= self.tau
    }

    #[inline]
    pub fn passes(&self, s: i32) -> bool {
        (i64::from(s) - i64::from(self.tau)).unsigned_abs() <= u64::from(self.window)
    }

    pub fn forward(&self, s: &IntTensor) -> BitTensor {
        let bits: Vec<bool> = s.data().iter().map(|&v| self.fires(v)).collect();
        BitTensor::pack(&bits, &[s.rows(), s.cols()]).expect("shape matches data")
    }

    pub fn backward(&self, s: &IntTensor, upstream: &BackSignal) -> Result<BackSignal> {
        if upstream.shape() != s.shape() {
            return Err(Error::ShapeMismatch(format!(
                "upstream {:?} vs pre-activation {:?}",
                upstream.shape(),
                s.shape()
            )));
        }
        let mut out = MixedTensor::zeros(s.rows(), s.cols());
        for r in 0..s.rows() {
            for c in 0..s.cols() {
                if self.passes(s.get(r, c)) {
                    out.set(r, c, upstream.get(r, c));
                } else {
                    out.set(r, c, MixedVal::ZERO);
                }
            }
        }
        Ok(out)
    }
}
