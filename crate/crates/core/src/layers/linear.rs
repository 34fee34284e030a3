use rand::Rng;
use rayon::prelude::*;

use super::{input_variation, weight_variation, BackSignal};
use crate::error::{Error, Result};
use crate::logic::{self, embed, Connective, MixedVal, TriVal};
use crate::tensor::{popcount_matrix, BitTensor, IntTensor, MixedTensor};

/// Boolean fully connected layer with `m` inputs and `n` outputs.
///
/// Output `j` for sample `k` is the integer count
/// `s[k][j] = bias[j] + Σ_i kind(x[k][i], w[i][j])`.
///
/// Weights are stored transposed, one packed row of `m` bits per output, so
/// the forward pass is a row-by-row popcount. Per-weight accumulators use the
/// `(m + 1) × n` layout of the weight signal: row 0 is the bias, row `i + 1`
/// is input `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BooleanLinear {
    kind: Connective,
    inputs: usize,
    outputs: usize,
    weights: BitTensor,
    bias: BitTensor,
    pub(crate) accumulator: Vec<f64>,
    pub(crate) beta: f64,
}

impl BooleanLinear {
    pub fn new(kind: Connective, weights_by_output: BitTensor, bias: BitTensor) -> Result<Self> {
        if weights_by_output.shape().len() != 2 {
            return Err(Error::ShapeMismatch("weights must be rank 2".into()));
        }
        let outputs = weights_by_output.rows();
        let inputs = weights_by_output.cols();
        if bias.shape() != [outputs] {
            return Err(Error::ShapeMismatch(format!(
                "bias shape {:?} does not match {outputs} outputs",
                bias.shape()
            )));
        }
        Ok(BooleanLinear {
            kind,
            inputs,
            outputs,
            weights: weights_by_output,
            bias,
            accumulator: vec![0.0; (inputs + 1) * outputs],
            beta: 1.0,
        })
    }

    /// Builds a layer from an `m × n` weight list (row-major, `w[i][j]`).
    pub fn from_weights(
        kind: Connective,
        inputs: usize,
        outputs: usize,
        weights: &[bool],
        bias: &[bool],
    ) -> Result<Self> {
        let w = BitTensor::pack(weights, &[inputs, outputs])?.transpose()?;
        Self::new(kind, w, BitTensor::pack(bias, &[outputs])?)
    }

    /// Fair Bernoulli weights and bias.
    pub fn random(kind: Connective, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Result<Self> {
        let w = BitTensor::random(&[outputs, inputs], rng)?;
        let b = BitTensor::random(&[outputs], rng)?;
        Self::new(kind, w, b)
    }

    pub(crate) fn restore(
        kind: Connective,
        weights: BitTensor,
        bias: BitTensor,
        accumulator: Vec<f64>,
        beta: f64,
    ) -> Result<Self> {
        let mut layer = Self::new(kind, weights, bias)?;
        if accumulator.len() != layer.accumulator.len() {
            return Err(Error::LengthMismatch {
                expected: layer.accumulator.len(),
                actual: accumulator.len(),
            });
        }
        if !(0.0..=1.0).contains(&beta) || accumulator.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("layer optimizer state out of range".into()));
        }
        layer.accumulator = accumulator;
        layer.beta = beta;
        Ok(layer)
    }

    #[inline]
    pub fn kind(&self) -> Connective {
        self.kind
    }

    #[inline]
    pub fn inputs(&self) -> usize {
        self.inputs
    }

    #[inline]
    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Packed weights, row `j` holding the incoming weights of output `j`.
    pub fn weights_by_output(&self) -> &BitTensor {
        &self.weights
    }

    pub fn bias(&self) -> &BitTensor {
        &self.bias
    }

    /// Weight `w[i][j]` from input `i` to output `j`.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> bool {
        self.weights.get(j, i)
    }

    /// Entry `(row, j)` of the `(m + 1) × n` layout (row 0 is the bias).
    #[inline]
    pub fn param(&self, row: usize, j: usize) -> bool {
        if row == 0 {
            self.bias.get(0, j)
        } else {
            self.weights.get(j, row - 1)
        }
    }

    #[inline]
    pub(crate) fn toggle_param(&mut self, row: usize, j: usize) {
        if row == 0 {
            self.bias.toggle(0, j);
        } else {
            self.weights.toggle(j, row - 1);
        }
    }

    pub fn param_count(&self) -> usize {
        (self.inputs + 1) * self.outputs
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.accumulator
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn check_input(&self, x: &BitTensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.inputs {
            return Err(Error::ShapeMismatch(format!(
                "layer expects [batch, {}] input, got {:?}",
                self.inputs,
                x.shape()
            )));
        }
        Ok(())
    }

    fn check_upstream(&self, rows: usize, upstream: &BackSignal) -> Result<()> {
        if upstream.shape() != [rows, self.outputs] {
            return Err(Error::ShapeMismatch(format!(
                "upstream signal {:?}, expected [{rows}, {}]",
                upstream.shape(),
                self.outputs
            )));
        }
        Ok(())
    }

    /// Pre-activation counts, batch × n, each in `[0, m + 1]`.
    pub fn forward(&self, x: &BitTensor) -> Result<IntTensor> {
        self.check_input(x)?;
        let mut s = popcount_matrix(self.kind, x, &self.weights);
        if self.outputs > 0 {
            for row in s.chunks_mut(self.outputs) {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += i32::from(self.bias.get(0, j));
                }
            }
        }
        IntTensor::new(x.rows(), self.outputs, s)
    }

    /// Aggregated loss variation w.r.t. every weight, `(m + 1) × n`.
    ///
    /// Per sample, `q = xnor(upstream[k][j], δs/δw)`, with the bias varying
    /// like a weight on a constant-T input. The batch aggregate is the sum of
    /// signed magnitudes, summed in sample order.
    pub fn weight_signal(&self, x: &BitTensor, upstream: &BackSignal) -> Result<MixedTensor> {
        self.check_input(x)?;
        self.check_upstream(x.rows(), upstream)?;
        let (m, n, batch) = (self.inputs, self.outputs, x.rows());
        let u = upstream.to_reals();
        // Coefficient of upstream[k][j] in q[i][j] is e(δs/δw) for input x[k][i].
        let coef = [
            f64::from(embed(weight_variation(self.kind, false))),
            f64::from(embed(weight_variation(self.kind, true))),
        ];
        let bias_coef = f64::from(embed(TriVal::T));

        let mut q = vec![0.0f64; (m + 1) * n];
        if n > 0 {
            q.par_chunks_mut(n).enumerate().for_each(|(row, qrow)| {
                for k in 0..batch {
                    let c = if row == 0 { bias_coef } else { coef[x.get(k, row - 1) as usize] };
                    let urow = &u[k * n..(k + 1) * n];
                    if c > 0.0 {
                        qrow.iter_mut().zip(urow).for_each(|(a, &b)| *a += b);
                    } else if c < 0.0 {
                        qrow.iter_mut().zip(urow).for_each(|(a, &b)| *a -= b);
                    }
                }
            });
        }
        let vals: Vec<MixedVal> = q.into_iter().map(MixedVal::from_real_finite).collect();
        MixedTensor::from_vals(m + 1, n, &vals)
    }

    /// Loss variation w.r.t. the layer input, batch × m.
    ///
    /// Per output, `g = xnor(upstream[k][j], δs/δx)`; the aggregate over
    /// outputs is the sum of signed magnitudes in output order.
    pub fn backprop_signal(&self, upstream: &BackSignal) -> Result<BackSignal> {
        let batch = upstream.rows();
        self.check_upstream(batch, upstream)?;
        let (m, n) = (self.inputs, self.outputs);
        let u = upstream.to_reals();
        let coef = [
            f64::from(embed(input_variation(self.kind, false))),
            f64::from(embed(input_variation(self.kind, true))),
        ];
        // sign[j][i] = e(δs_j/δx_i) for the current weight w[i][j].
        let sign: Vec<f64> = (0..n)
            .flat_map(|j| (0..m).map(move |i| (j, i)))
            .map(|(j, i)| coef[self.weights.get(j, i) as usize])
            .collect();

        let mut g = vec![0.0f64; batch * m];
        if m > 0 {
            g.par_chunks_mut(m).enumerate().for_each(|(k, grow)| {
                for j in 0..n {
                    let uj = u[k * n + j];
                    let srow = &sign[j * m..(j + 1) * m];
                    grow.iter_mut().zip(srow).for_each(|(a, &s)| {
                        if s > 0.0 {
                            *a += uj;
                        } else if s < 0.0 {
                            *a -= uj;
                        }
                    });
                }
            });
        }
        let vals: Vec<MixedVal> = g.into_iter().map(MixedVal::from_real_finite).collect();
        MixedTensor::from_vals(batch, m, &vals)
    }

    /// [`Self::weight_signal`] computed literally: one mixed XNOR per
    /// (weight, sample) followed by the signed-magnitude aggregation.
    pub fn weight_signal_elementwise(&self, x: &BitTensor, upstream: &BackSignal) -> Result<MixedTensor> {
        self.check_input(x)?;
        self.check_upstream(x.rows(), upstream)?;
        let (m, n) = (self.inputs, self.outputs);
        let mut out = MixedTensor::zeros(m + 1, n);
        for row in 0..=m {
            for j in 0..n {
                let per_sample = (0..x.rows()).map(|k| {
                    let v = if row == 0 {
                        TriVal::T
                    } else {
                        weight_variation(self.kind, x.get(k, row - 1))
                    };
                    logic::mixed_connective(Connective::Xnor, upstream.get(k, j), v.into())
                });
                out.set(row, j, aggregate(per_sample));
            }
        }
        Ok(out)
    }

    /// [`Self::backprop_signal`] computed literally.
    pub fn backprop_signal_elementwise(&self, upstream: &BackSignal) -> Result<BackSignal> {
        let batch = upstream.rows();
        self.check_upstream(batch, upstream)?;
        let mut out = MixedTensor::zeros(batch, self.inputs);
        for k in 0..batch {
            for i in 0..self.inputs {
                let per_output = (0..self.outputs).map(|j| {
                    let v = input_variation(self.kind, self.weight(i, j));
                    logic::mixed_connective(Connective::Xnor, upstream.get(k, j), v.into())
                });
                out.set(k, i, aggregate(per_output));
            }
        }
        Ok(out)
    }
}

/// `Σ 1[v = T]·|v| − Σ 1[v = F]·|v|`, as a mixed value.
pub(crate) fn aggregate(vals: impl Iterator<Item = MixedVal>) -> MixedVal {
    let total = vals.fold(0.0, |acc, v| match v.logic() {
        TriVal::T => acc + v.magnitude(),
        TriVal::F => acc - v.magnitude(),
        TriVal::Zero => acc,
    });
    MixedVal::from_real_finite(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use TriVal::{Zero, F, T};

    fn mixed(l: TriVal, m: f64) -> MixedVal {
        MixedVal::new(l, m).unwrap()
    }

    #[test]
    fn forward_examples() {
        // Column 0 of W is (T, T, F); the other column is irrelevant.
        let layer = BooleanLinear::from_weights(
            Connective::Xnor,
            3,
            2,
            &[true, false, true, false, false, true],
            &[true, false],
        )
        .unwrap();
        // Matches at input 0 only, plus the T bias.
        let x = BitTensor::pack(&[true, false, true], &[1, 3]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().get(0, 0), 2);

        let xs = [true, false, true, true];
        let layer = BooleanLinear::from_weights(Connective::Xor, 4, 1, &xs, &[false]).unwrap();
        let x = BitTensor::pack(&xs, &[1, 4]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().get(0, 0), 0);

        let layer = BooleanLinear::from_weights(Connective::And, 5, 1, &[true; 5], &[false]).unwrap();
        let x = BitTensor::pack(&[true; 5], &[1, 5]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().get(0, 0), 5);

        assert!(layer.forward(&BitTensor::zeros(&[1, 4]).unwrap()).is_err());
    }

    #[test]
    fn weight_signal_examples() {
        let layer = BooleanLinear::from_weights(Connective::Xnor, 1, 1, &[false], &[false]).unwrap();
        let x = BitTensor::pack(&[true], &[1, 1]).unwrap();
        let up = MixedTensor::from_vals(1, 1, &[mixed(T, 1.0)]).unwrap();
        let q = layer.weight_signal(&x, &up).unwrap();
        assert_eq!(q.get(1, 0), mixed(T, 1.0));
        assert_eq!(q.get(0, 0), mixed(T, 1.0));

        // XNOR with x = T passes the upstream through; the batch sum is 2 - 1.
        let x = BitTensor::pack(&[true, true, true], &[3, 1]).unwrap();
        let up =
            MixedTensor::from_vals(3, 1, &[mixed(T, 1.0), mixed(F, 1.0), mixed(T, 1.0)]).unwrap();
        assert_eq!(layer.weight_signal(&x, &up).unwrap().get(1, 0), mixed(T, 1.0));

        let up = MixedTensor::zeros(3, 1);
        let q = layer.weight_signal(&x, &up).unwrap();
        assert!(q.iter().all(|v| v == MixedVal::ZERO));
    }

    #[test]
    fn backprop_signal_examples() {
        let layer = BooleanLinear::from_weights(Connective::Xnor, 1, 1, &[true], &[false]).unwrap();
        let up = MixedTensor::from_vals(1, 1, &[mixed(F, 2.0)]).unwrap();
        assert_eq!(layer.backprop_signal(&up).unwrap().get(0, 0), mixed(F, 2.0));

        assert_eq!(aggregate([mixed(T, 0.5), mixed(F, 0.5)].into_iter()), MixedVal::ZERO);
        let layer = BooleanLinear::from_weights(Connective::Xnor, 1, 2, &[true, false], &[false, false]).unwrap();
        let up = MixedTensor::from_vals(1, 2, &[mixed(T, 0.5), mixed(T, 0.5)]).unwrap();
        assert_eq!(layer.backprop_signal(&up).unwrap().get(0, 0), MixedVal::ZERO);

        let layer = BooleanLinear::from_weights(Connective::Xor, 1, 1, &[false], &[false]).unwrap();
        let up = MixedTensor::from_reals(1, 1, &[0.3]).unwrap();
        assert_eq!(layer.backprop_signal(&up).unwrap().get(0, 0), mixed(T, 0.3));
    }

    #[test]
    fn identity_like_weights_pass_signals_through() {
        let layer = BooleanLinear::from_weights(Connective::Xnor, 3, 1, &[true; 3], &[true]).unwrap();
        let up = MixedTensor::from_reals(2, 1, &[-1.25, 0.5]).unwrap();
        let g = layer.backprop_signal(&up).unwrap();
        for k in 0..2 {
            for i in 0..3 {
                assert_eq!(g.get(k, i), up.get(k, 0));
            }
        }
    }

    #[test]
    fn fast_signals_equal_elementwise_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in Connective::ALL {
            for _ in 0..20 {
                let (m, n, k) = (rng.gen_range(1..70), rng.gen_range(1..9), rng.gen_range(1..7));
                let layer = BooleanLinear::random(kind, m, n, &mut rng).unwrap();
                let x = BitTensor::random(&[k, m], &mut rng).unwrap();
                let reals: Vec<f64> = (0..k * n)
                    .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(-2.0..2.0) })
                    .collect();
                let up = MixedTensor::from_reals(k, n, &reals).unwrap();
                assert_eq!(
                    layer.weight_signal(&x, &up).unwrap(),
                    layer.weight_signal_elementwise(&x, &up).unwrap()
                );
                assert_eq!(
                    layer.backprop_signal(&up).unwrap(),
                    layer.backprop_signal_elementwise(&up).unwrap()
                );
            }
        }
    }

    #[test]
    fn and_or_absorbed_inputs_give_zero_signal() {
        let layer = BooleanLinear::from_weights(Connective::And, 1, 1, &[true], &[false]).unwrap();
        let x = BitTensor::pack(&[false], &[1, 1]).unwrap();
        let up = MixedTensor::from_reals(1, 1, &[1.0]).unwrap();
        assert_eq!(layer.weight_signal(&x, &up).unwrap().get(1, 0).logic(), Zero);
    }

    #[test]
    fn aggregation_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = BooleanLinear::random(Connective::Xnor, 10, 4, &mut rng).unwrap();
        let x = BitTensor::random(&[6, 10], &mut rng).unwrap();
        // Dyadic values keep every partial sum exact.
        let reals: Vec<f64> = (0..24).map(|_| f64::from(rng.gen_range(-16..16)) / 4.0).collect();
        let up = MixedTensor::from_reals(6, 4, &reals).unwrap();
        let q = layer.weight_signal(&x, &up).unwrap();

        let perm = [3usize, 0, 5, 1, 4, 2];
        let xb = x.unpack();
        let xp: Vec<bool> = perm.iter().flat_map(|&k| xb[k * 10..(k + 1) * 10].to_vec()).collect();
        let up_p: Vec<f64> = perm.iter().flat_map(|&k| reals[k * 4..(k + 1) * 4].to_vec()).collect();
        let qp = layer
            .weight_signal(
                &BitTensor::pack(&xp, &[6, 10]).unwrap(),
                &MixedTensor::from_reals(6, 4, &up_p).unwrap(),
            )
            .unwrap();
        assert_eq!(q, qp);
    }
}
