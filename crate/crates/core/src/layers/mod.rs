//! Boolean fully connected layer, threshold activation and the real-valued
//! output head.

mod head;
mod linear;
mod threshold;

use std::sync::OnceLock;

pub use head::{HeadGradients, OutputHead};
pub use linear::BooleanLinear;
pub use threshold::ThresholdActivation;

use crate::logic::{Connective, TriVal};
use crate::tensor::MixedTensor;
use crate::variation::{partial_variation, BoolFunc};

/// Loss variation w.r.t. a layer's Boolean output, batch × width.
pub type BackSignal = MixedTensor;

/// `[kind][other operand]` → variation of the neuron summand `kind(x, w)`
/// w.r.t. one operand when the other is fixed. Connectives are symmetric, so
/// the same table serves weights (other = x) and inputs (other = w).
fn operand_variation_table() -> &'static [[TriVal; 2]; 4] {
    static TABLE: OnceLock<[[TriVal; 2]; 4]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [[TriVal::Zero; 2]; 4];
        for kind in Connective::ALL {
            let f = BoolFunc::connective(kind);
            for other in [false, true] {
                // The variation w.r.t. the free operand must not depend on
                // its current value; derive at both and check.
                let at_f = partial_variation(&f, &[other, false], 1).expect("arity 2");
                let at_t = partial_variation(&f, &[other, true], 1).expect("arity 2");
                assert_eq!(at_f, at_t, "{kind} variation depends on the free operand");
                table[kind.to_u8() as usize][other as usize] = at_f;
            }
        }
        table
    })
}

/// Variation of the summand `kind(x, w)` w.r.t. `w`, given input `x`.
#[inline]
pub fn weight_variation(kind: Connective, x: bool) -> TriVal {
    operand_variation_table()[kind.to_u8() as usize][x as usize]
}

/// Variation of the summand `kind(x, w)` w.r.t. `x`, given weight `w`.
#[inline]
pub fn input_variation(kind: Connective, w: bool) -> TriVal {
    operand_variation_table()[kind.to_u8() as usize][w as usize]
}
