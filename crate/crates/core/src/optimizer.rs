//! Flip rule and the accumulate optimizer for Boolean weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::BooleanLinear;
use crate::logic::{project_finite, xnor, MixedVal, TriVal};
use crate::tensor::{BitTensor, MixedTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlipAction {
    Invert,
    Keep,
}

/// Invert `w` iff `xnor(q, w) = T`. A zero signal always keeps.
pub fn flip_decision(q: MixedVal, w: bool) -> FlipAction {
    if xnor(q.logic(), w.into()) == TriVal::T {
        FlipAction::Invert
    } else {
        FlipAction::Keep
    }
}

/// Which parameters flipped in one step, in the `(m + 1) × n` layout of the
/// weight signal (row 0 is the bias).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlipMask {
    pub mask: BitTensor,
    pub flips: usize,
}

/// One accumulate step on `layer`: `m ← β·m + η·q`; every parameter whose
/// accumulator now points in the direction of a loss decrease is flipped and
/// its accumulator reset to zero.
pub fn accumulate_step(layer: &mut BooleanLinear, q: &MixedTensor, eta: f64) -> Result<FlipMask> {
    accumulate_step_with_threshold(layer, q, eta, 0.0)
}

/// [`accumulate_step`] that additionally requires `|m| >= threshold` before
/// flipping. A zero threshold is the plain sign rule.
pub fn accumulate_step_with_threshold(
    layer: &mut BooleanLinear,
    q: &MixedTensor,
    eta: f64,
    threshold: f64,
) -> Result<FlipMask> {
    let (rows, n) = (layer.inputs() + 1, layer.outputs());
    if q.shape() != [rows, n] {
        return Err(Error::ShapeMismatch(format!(
            "weight signal {:?}, accumulator [{rows}, {n}]",
            q.shape()
        )));
    }
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::InvalidValue(format!("eta must be finite and non-negative, got {eta}")));
    }
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(Error::InvalidValue(format!("flip threshold must be finite and non-negative, got {threshold}")));
    }
    let beta = layer.beta;
    let q = q.to_reals();
    let mut mask = BitTensor::zeros(&[rows, n])?;
    let mut flips = 0;
    for row in 0..rows {
        for j in 0..n {
            let idx = row * n + j;
            let m = beta * layer.accumulator[idx] + eta * q[idx];
            if m.abs() >= threshold && xnor(project_finite(m), layer.param(row, j).into()) == TriVal::T {
                layer.toggle_param(row, j);
                layer.accumulator[idx] = 0.0;
                mask.set(row, j, true);
                flips += 1;
            } else {
                layer.accumulator[idx] = m;
            }
        }
    }
    Ok(FlipMask { mask, flips })
}

/// `β = 1 − flips / params` for this iteration; stored on the layer.
pub fn update_beta(layer: &mut BooleanLinear, mask: &FlipMask) -> f64 {
    let total = layer.param_count();
    layer.beta = if total == 0 {
        1.0
    } else {
        1.0 - mask.flips as f64 / total as f64
    };
    layer.beta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EtaSchedule {
    #[default]
    Constant,
    /// `η = η0 · gamma^⌊epoch / every⌋`.
    Step { gamma: f64, every: u32 },
}

impl EtaSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EtaSchedule::Constant => Ok(()),
            EtaSchedule::Step { gamma, every } => {
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return Err(Error::InvalidSchedule(format!("gamma must be in (0, 1], got {gamma}")));
                }
                if every == 0 {
                    return Err(Error::InvalidSchedule("step interval must be at least 1".into()));
                }
                Ok(())
            }
        }
    }

    pub fn eta_at(&self, eta0: f64, epoch: u64) -> f64 {
        match *self {
            EtaSchedule::Constant => eta0,
            EtaSchedule::Step { gamma, every } => {
                let steps = (epoch / u64::from(every)).min(i32::MAX as u64) as i32;
                eta0 * gamma.powi(steps)
            }
        }
    }
}

/// Shared step-size state; per-weight accumulators and `β` live on the layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerState {
    pub eta0: f64,
    pub eta: f64,
    pub schedule: EtaSchedule,
    pub iteration: u64,
    pub epoch: u64,
    /// See [`accumulate_step_with_threshold`]; 0 unless configured.
    pub flip_threshold: f64,
}

impl OptimizerState {
    pub fn new(eta0: f64, schedule: EtaSchedule) -> Result<Self> {
        if !eta0.is_finite() || eta0 < 0.0 {
            return Err(Error::InvalidSchedule(format!("eta must be finite and non-negative, got {eta0}")));
        }
        schedule.validate()?;
        Ok(OptimizerState {
            eta0,
            eta: eta0,
            schedule,
            iteration: 0,
            epoch: 0,
            flip_threshold: 0.0,
        })
    }

    pub fn with_flip_threshold(mut self, threshold: f64) -> Result<Self> {
        if !threshold.is_finite() || threshold < 0.0 {
            return Err(Error::InvalidSchedule(format!(
                "flip threshold must be finite and non-negative, got {threshold}"
            )));
        }
        self.flip_threshold = threshold;
        Ok(self)
    }

    pub fn default_eta(batch_size: usize) -> f64 {
        2.0 / batch_size.max(1) as f64
    }

    /// Recomputes `η` for the current epoch.
    pub fn update_eta(&mut self) -> f64 {
        self.eta = self.schedule.eta_at(self.eta0, self.epoch);
        self.eta
    }

    pub fn start_epoch(&mut self, epoch: u64) -> f64 {
        self.epoch = epoch;
        self.update_eta()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::Connective;
    use proptest::prelude::*;
    use TriVal::{Zero, F, T};

    fn mixed(l: TriVal, m: f64) -> MixedVal {
        MixedVal::new(l, m).unwrap()
    }

    fn single(w: bool) -> BooleanLinear {
        // One output, zero inputs: the bias is the only parameter.
        BooleanLinear::from_weights(Connective::Xnor, 0, 1, &[], &[w]).unwrap()
    }

    fn q1(v: f64) -> MixedTensor {
        MixedTensor::from_reals(1, 1, &[v]).unwrap()
    }

    #[test]
    fn flip_table() {
        assert_eq!(flip_decision(mixed(T, 1.0), true), FlipAction::Invert);
        assert_eq!(flip_decision(mixed(T, 1.0), false), FlipAction::Keep);
        assert_eq!(flip_decision(mixed(F, 1.0), true), FlipAction::Keep);
        assert_eq!(flip_decision(mixed(F, 1.0), false), FlipAction::Invert);
        for w in [false, true] {
            assert_eq!(flip_decision(mixed(Zero, 0.0), w), FlipAction::Keep);
        }
    }

    #[test]
    fn accumulate_examples() {
        let mut layer = single(true);
        let mask = accumulate_step(&mut layer, &q1(2.0), 1.0).unwrap();
        assert_eq!(mask.flips, 1);
        assert!(!layer.param(0, 0));
        assert_eq!(layer.accumulator(), &[0.0]);

        let mut layer = single(true);
        layer.accumulator[0] = -3.0;
        let mask = accumulate_step(&mut layer, &q1(1.0), 1.0).unwrap();
        assert_eq!(mask.flips, 0);
        assert!(layer.param(0, 0));
        assert_eq!(layer.accumulator(), &[-2.0]);

        let mut layer = single(false);
        layer.accumulator[0] = 0.5;
        let before = layer.clone();
        let mask = accumulate_step(&mut layer, &q1(0.0), 1.0).unwrap();
        assert_eq!(mask.flips, 0);
        assert_eq!(layer, before);
    }

    #[test]
    fn shape_and_eta_errors() {
        let mut layer = single(true);
        assert!(accumulate_step(&mut layer, &MixedTensor::zeros(2, 1), 1.0).is_err());
        assert!(accumulate_step(&mut layer, &q1(1.0), -1.0).is_err());
    }

    #[test]
    fn beta_examples() {
        let mut layer = BooleanLinear::from_weights(Connective::Xor, 9, 10, &[false; 90], &[false; 10]).unwrap();
        let mut mask = FlipMask {
            mask: BitTensor::zeros(&[10, 10]).unwrap(),
            flips: 0,
        };
        assert_eq!(update_beta(&mut layer, &mask), 1.0);
        mask.flips = 25;
        assert_eq!(update_beta(&mut layer, &mask), 0.75);
        mask.flips = 100;
        assert_eq!(update_beta(&mut layer, &mask), 0.0);
    }

    #[test]
    fn eta_schedules() {
        let mut s = OptimizerState::new(0.01, EtaSchedule::Constant).unwrap();
        assert_eq!(s.start_epoch(7), 0.01);
        let mut s = OptimizerState::new(0.01, EtaSchedule::Step { gamma: 0.5, every: 2 }).unwrap();
        assert_eq!(s.start_epoch(1), 0.01);
        assert_eq!(s.start_epoch(2), 0.005);
        let mut s = OptimizerState::new(0.01, EtaSchedule::Step { gamma: 1.0, every: 1 }).unwrap();
        assert_eq!(s.start_epoch(9), 0.01);
        assert!(OptimizerState::new(0.01, EtaSchedule::Step { gamma: 0.0, every: 1 }).is_err());
        assert!(OptimizerState::new(0.01, EtaSchedule::Step { gamma: 1.5, every: 1 }).is_err());
        assert!(OptimizerState::new(0.01, EtaSchedule::Step { gamma: 0.5, every: 0 }).is_err());
        assert!(OptimizerState::new(-1.0, EtaSchedule::Constant).is_err());
        assert!(OptimizerState::new(0.0, EtaSchedule::Constant).is_ok());
    }

    #[test]
    fn threshold_delays_flips() {
        let mut layer = single(true);
        let mask = accumulate_step_with_threshold(&mut layer, &q1(0.4), 1.0, 1.0).unwrap();
        assert_eq!(mask.flips, 0);
        assert_eq!(layer.accumulator(), &[0.4]);
        let mask = accumulate_step_with_threshold(&mut layer, &q1(0.7), 1.0, 1.0).unwrap();
        assert_eq!(mask.flips, 1);
        assert!(!layer.param(0, 0));
        assert!(accumulate_step_with_threshold(&mut layer, &q1(0.7), 1.0, -1.0).is_err());
    }

    #[test]
    fn constant_signal_flips_immediately() {
        let mut layer = single(true);
        let mask = accumulate_step(&mut layer, &q1(1.0), 1.0).unwrap();
        assert_eq!(mask.flips, 1);
    }

    proptest! {
        #[test]
        fn alternating_signal_never_flips(mag in 0.001f64..100.0, steps in 1usize..64, w: bool) {
            // Start against w so the first push is away from a flip.
            let mut layer = single(w);
            let first = if w { -mag } else { mag };
            for t in 0..steps {
                let q = if t % 2 == 0 { first } else { -first };
                let mask = accumulate_step(&mut layer, &q1(q), 1.0).unwrap();
                update_beta(&mut layer, &mask);
                prop_assert_eq!(mask.flips, 0);
                prop_assert!(layer.accumulator()[0].abs() <= mag);
            }
            prop_assert_eq!(layer.param(0, 0), w);
        }

        #[test]
        fn step_is_deterministic(bits in proptest::collection::vec(any::<bool>(), 12),
                                 q in proptest::collection::vec(-4.0f64..4.0, 12)) {
            let layer = BooleanLinear::from_weights(Connective::Xnor, 2, 4, &bits[..8], &bits[8..]).unwrap();
            let q = MixedTensor::from_reals(3, 4, &q).unwrap();
            let (mut a, mut b) = (layer.clone(), layer);
            let ma = accumulate_step(&mut a, &q, 0.5).unwrap();
            let mb = accumulate_step(&mut b, &q, 0.5).unwrap();
            prop_assert_eq!(ma, mb);
            prop_assert_eq!(a, b);
        }
    }
}
