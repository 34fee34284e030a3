//! Three-valued logic, numeric/logic type conversion and mixed-type connectives.
//!
//! Boolean values are plain `bool` (`true` is T, `false` is F, ordered F < T).
//! [`TriVal`] adds an absorbing `Zero` meaning "ignored". [`MixedVal`] pairs a
//! logic value with a non-negative magnitude so that numbers, Boolean values
//! and variations can be combined by the same connectives.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A value of the three-valued logic {T, 0, F}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(i8)]
pub enum TriVal {
    F = -1,
    Zero = 0,
    T = 1,
}

impl TriVal {
    pub const ALL: [TriVal; 3] = [TriVal::T, TriVal::Zero, TriVal::F];

    #[inline]
    pub fn is_zero(self) -> bool {
        self == TriVal::Zero
    }

    /// The Boolean value, if this is not `Zero`.
    #[inline]
    pub fn to_bool(self) -> Option<bool> {
        match self {
            TriVal::T => Some(true),
            TriVal::F => Some(false),
            TriVal::Zero => None,
        }
    }

    #[inline]
    pub fn from_i8(v: i8) -> Option<TriVal> {
        match v {
            1 => Some(TriVal::T),
            0 => Some(TriVal::Zero),
            -1 => Some(TriVal::F),
            _ => None,
        }
    }
}

impl From<bool> for TriVal {
    #[inline]
    fn from(b: bool) -> Self {
        if b {
            TriVal::T
        } else {
            TriVal::F
        }
    }
}

impl std::ops::Not for TriVal {
    type Output = TriVal;

    #[inline]
    fn not(self) -> TriVal {
        neg(self)
    }
}

impl fmt::Display for TriVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TriVal::T => "T",
            TriVal::Zero => "0",
            TriVal::F => "F",
        })
    }
}

/// Binary logic connective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connective {
    And,
    Or,
    Xor,
    Xnor,
}

impl Connective {
    pub const ALL: [Connective; 4] = [
        Connective::And,
        Connective::Or,
        Connective::Xor,
        Connective::Xnor,
    ];

    #[inline]
    pub fn apply_bool(self, a: bool, b: bool) -> bool {
        match self {
            Connective::And => a & b,
            Connective::Or => a | b,
            Connective::Xor => a ^ b,
            Connective::Xnor => !(a ^ b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Connective::And => "and",
            Connective::Or => "or",
            Connective::Xor => "xor",
            Connective::Xnor => "xnor",
        }
    }

    pub(crate) fn to_u8(self) -> u8 {
        match self {
            Connective::And => 0,
            Connective::Or => 1,
            Connective::Xor => 2,
            Connective::Xnor => 3,
        }
    }

    pub(crate) fn from_u8(v: u8) -> Option<Connective> {
        Connective::ALL.get(v as usize).copied()
    }
}

impl fmt::Display for Connective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Connective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "and" => Ok(Connective::And),
            "or" => Ok(Connective::Or),
            "xor" => Ok(Connective::Xor),
            "xnor" => Ok(Connective::Xnor),
            other => Err(Error::InvalidValue(format!("unknown connective {other:?}"))),
        }
    }
}

#[inline]
pub fn neg(a: TriVal) -> TriVal {
    match a {
        TriVal::T => TriVal::F,
        TriVal::Zero => TriVal::Zero,
        TriVal::F => TriVal::T,
    }
}

/// Connective over {T, 0, F}: `Zero` if either operand is `Zero`, the Boolean
/// connective otherwise.
#[inline]
pub fn tri_connective(kind: Connective, a: TriVal, b: TriVal) -> TriVal {
    match (a.to_bool(), b.to_bool()) {
        (Some(a), Some(b)) => kind.apply_bool(a, b).into(),
        _ => TriVal::Zero,
    }
}

#[inline]
pub fn xnor(a: TriVal, b: TriVal) -> TriVal {
    TriVal::from_i8((a as i8) * (b as i8)).unwrap_or(TriVal::Zero)
}

/// Logic projection of a real number: its sign as a [`TriVal`].
pub fn project(x: f64) -> Result<TriVal> {
    if !x.is_finite() {
        return Err(Error::InvalidValue(format!("cannot project non-finite {x}")));
    }
    Ok(project_finite(x))
}

#[inline]
pub(crate) fn project_finite(x: f64) -> TriVal {
    if x > 0.0 {
        TriVal::T
    } else if x < 0.0 {
        TriVal::F
    } else {
        TriVal::Zero
    }
}

/// Numeric embedding: T ↦ +1, 0 ↦ 0, F ↦ −1.
#[inline]
pub fn embed(a: TriVal) -> i8 {
    a as i8
}

/// A logic value with a non-negative magnitude.
///
/// Always canonical: `logic == Zero` exactly when `magnitude == 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedVal {
    logic: TriVal,
    magnitude: f64,
}

impl MixedVal {
    pub const ZERO: MixedVal = MixedVal {
        logic: TriVal::Zero,
        magnitude: 0.0,
    };

    /// Builds a canonical value. A zero magnitude or a `Zero` logic part both
    /// collapse to [`MixedVal::ZERO`].
    pub fn new(logic: TriVal, magnitude: f64) -> Result<Self> {
        if !magnitude.is_finite() || magnitude < 0.0 {
            return Err(Error::InvalidValue(format!(
                "magnitude must be finite and non-negative, got {magnitude}"
            )));
        }
        Ok(Self::canonical(logic, magnitude))
    }

    #[inline]
    pub(crate) fn canonical(logic: TriVal, magnitude: f64) -> Self {
        if logic.is_zero() || magnitude == 0.0 {
            MixedVal::ZERO
        } else {
            MixedVal { logic, magnitude }
        }
    }

    /// Unit-magnitude value for a logic operand (|T| = |F| = 1, |0| = 0).
    #[inline]
    pub fn from_tri(logic: TriVal) -> Self {
        Self::canonical(logic, 1.0)
    }

    #[inline]
    pub fn from_bool(b: bool) -> Self {
        Self::from_tri(b.into())
    }

    /// The numeric value `x` as `(p(x), |x|)`.
    pub fn from_real(x: f64) -> Result<Self> {
        let logic = project(x)?;
        Ok(Self::canonical(logic, x.abs()))
    }

    #[inline]
    pub(crate) fn from_real_finite(x: f64) -> Self {
        Self::canonical(project_finite(x), x.abs())
    }

    #[inline]
    pub fn logic(self) -> TriVal {
        self.logic
    }

    #[inline]
    pub fn magnitude(self) -> f64 {
        self.magnitude
    }

    /// Embedded numeric value `e(logic) · magnitude`.
    #[inline]
    pub fn to_real(self) -> f64 {
        f64::from(embed(self.logic)) * self.magnitude
    }

    #[inline]
    pub fn connective(self, kind: Connective, other: MixedVal) -> MixedVal {
        mixed_connective(kind, self, other)
    }

    #[inline]
    pub fn xnor(self, other: MixedVal) -> MixedVal {
        mixed_connective(Connective::Xnor, self, other)
    }
}

impl Default for MixedVal {
    fn default() -> Self {
        MixedVal::ZERO
    }
}

impl From<TriVal> for MixedVal {
    fn from(t: TriVal) -> Self {
        MixedVal::from_tri(t)
    }
}

impl fmt::Display for MixedVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.logic, self.magnitude)
    }
}

/// Mixed-type connective: `|c| = |a||b|`, `c_L = kind(a_L, b_L)`.
#[inline]
pub fn mixed_connective(kind: Connective, a: MixedVal, b: MixedVal) -> MixedVal {
    MixedVal::canonical(
        tri_connective(kind, a.logic, b.logic),
        a.magnitude * b.magnitude,
    )
}

/// XNOR of two numeric values, returned in numeric form. Equal to `x * y`.
#[inline]
pub fn xnor_numeric(x: MixedVal, y: MixedVal) -> f64 {
    mixed_connective(Connective::Xnor, x, y).to_real()
}
