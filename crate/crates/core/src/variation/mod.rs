//! Boolean variation of variables and functions.
//!
//! Functions are explicit tables so that every rule can be checked by
//! enumeration (see [`oracle`]). All operations go through a [`Calculus`],
//! which carries the XNOR table used to combine variations; the free
//! functions in this module use [`Calculus::standard`].

pub mod oracle;

use crate::error::{Error, Result};
use crate::logic::{self, MixedVal, TriVal};

/// Variation of a Boolean value moving from `x` to `y`: T if it increases,
/// `Zero` if unchanged, F if it decreases.
#[inline]
pub fn variation(x: bool, y: bool) -> TriVal {
    match (x, y) {
        (false, true) => TriVal::T,
        (true, false) => TriVal::F,
        _ => TriVal::Zero,
    }
}

/// A Boolean function of `arity` Boolean arguments, stored as its truth table.
///
/// Row index is the argument vector read as a binary number with the first
/// argument as the most significant bit (so arity 2 rows are FF, FT, TF, TT).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BoolFunc {
    arity: usize,
    table: Vec<bool>,
}

impl BoolFunc {
    pub const MAX_ARITY: usize = 16;

    pub fn new(arity: usize, table: Vec<bool>) -> Result<Self> {
        if arity == 0 || arity > Self::MAX_ARITY {
            return Err(Error::InvalidValue(format!(
                "arity must be in 1..={}, got {arity}",
                Self::MAX_ARITY
            )));
        }
        if table.len() != 1 << arity {
            return Err(Error::LengthMismatch {
                expected: 1 << arity,
                actual: table.len(),
            });
        }
        Ok(BoolFunc { arity, table })
    }

    pub fn from_fn(arity: usize, f: impl Fn(&[bool]) -> bool) -> Result<Self> {
        if arity == 0 || arity > Self::MAX_ARITY {
            return Self::new(arity, Vec::new());
        }
        let table = (0..1usize << arity)
            .map(|row| f(&row_to_args(row, arity)))
            .collect();
        Self::new(arity, table)
    }

    pub fn identity() -> Self {
        BoolFunc {
            arity: 1,
            table: vec![false, true],
        }
    }

    pub fn negation() -> Self {
        BoolFunc {
            arity: 1,
            table: vec![true, false],
        }
    }

    pub fn constant(value: bool) -> Self {
        BoolFunc {
            arity: 1,
            table: vec![value, value],
        }
    }

    /// The binary function computed by `kind`.
    pub fn connective(kind: logic::Connective) -> Self {
        BoolFunc {
            arity: 2,
            table: (0..4).map(|r| kind.apply_bool(r & 2 != 0, r & 1 != 0)).collect(),
        }
    }

    /// Every Boolean function of the given arity, in table order.
    pub fn all(arity: usize) -> impl Iterator<Item = BoolFunc> {
        assert!((1..=4).contains(&arity), "enumeration limited to arity <= 4");
        let rows = 1usize << arity;
        (0u64..1 << rows).map(move |bits| BoolFunc {
            arity,
            table: (0..rows).map(|r| bits >> r & 1 == 1).collect(),
        })
    }

    #[inline]
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn table(&self) -> &[bool] {
        &self.table
    }

    pub fn eval(&self, args: &[bool]) -> Result<bool> {
        if args.len() != self.arity {
            return Err(Error::LengthMismatch {
                expected: self.arity,
                actual: args.len(),
            });
        }
        Ok(self.table[args_to_row(args)])
    }

    #[inline]
    pub fn eval1(&self, x: bool) -> bool {
        debug_assert_eq!(self.arity, 1);
        self.table[x as usize]
    }

    /// `outer ∘ self` for a unary `outer`.
    pub fn then(&self, outer: &BoolFunc) -> Result<BoolFunc> {
        require_unary(outer)?;
        Ok(BoolFunc {
            arity: self.arity,
            table: self.table.iter().map(|&v| outer.eval1(v)).collect(),
        })
    }

    pub fn not(&self) -> BoolFunc {
        BoolFunc {
            arity: self.arity,
            table: self.table.iter().map(|v| !v).collect(),
        }
    }

    /// Unary function obtained by freezing every argument except `i` at `x`.
    pub fn restrict(&self, x: &[bool], i: usize) -> Result<BoolFunc> {
        self.check_index(x, i)?;
        let mut args = x.to_vec();
        let mut table = Vec::with_capacity(2);
        for v in [false, true] {
            args[i] = v;
            table.push(self.table[args_to_row(&args)]);
        }
        Ok(BoolFunc { arity: 1, table })
    }

    fn check_index(&self, x: &[bool], i: usize) -> Result<()> {
        if x.len() != self.arity {
            return Err(Error::LengthMismatch {
                expected: self.arity,
                actual: x.len(),
            });
        }
        if i >= self.arity {
            return Err(Error::IndexOutOfRange {
                index: i,
                arity: self.arity,
            });
        }
        Ok(())
    }
}

fn require_unary(f: &BoolFunc) -> Result<()> {
    if f.arity != 1 {
        return Err(Error::InvalidValue(format!(
            "expected a unary function, got arity {}",
            f.arity
        )));
    }
    Ok(())
}

pub(crate) fn row_to_args(row: usize, arity: usize) -> Vec<bool> {
    (0..arity).map(|i| row >> (arity - 1 - i) & 1 == 1).collect()
}

fn args_to_row(args: &[bool]) -> usize {
    args.iter().fold(0, |acc, &b| acc << 1 | b as usize)
}

/// A real-valued function of one Boolean argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumFunc {
    on_false: f64,
    on_true: f64,
}

impl NumFunc {
    pub fn new(on_false: f64, on_true: f64) -> Result<Self> {
        if !on_false.is_finite() || !on_true.is_finite() {
            return Err(Error::InvalidValue("function values must be finite".into()));
        }
        Ok(NumFunc { on_false, on_true })
    }

    #[inline]
    pub fn eval(&self, x: bool) -> f64 {
        if x {
            self.on_true
        } else {
            self.on_false
        }
    }

    pub fn scale(&self, alpha: f64) -> Result<NumFunc> {
        NumFunc::new(alpha * self.on_false, alpha * self.on_true)
    }

    pub fn add(&self, other: &NumFunc) -> Result<NumFunc> {
        NumFunc::new(self.on_false + other.on_false, self.on_true + other.on_true)
    }

    /// `outer ∘ inner` for a Boolean `inner`.
    pub fn compose(outer: &NumFunc, inner: &BoolFunc) -> Result<NumFunc> {
        require_unary(inner)?;
        NumFunc::new(outer.eval(inner.eval1(false)), outer.eval(inner.eval1(true)))
    }
}

/// A codomain whose values have a variation.
pub trait Codomain: Copy {
    /// Variation of the value moving from `from` to `to`.
    fn variation(from: Self, to: Self) -> MixedVal;
}

impl Codomain for bool {
    fn variation(from: bool, to: bool) -> MixedVal {
        MixedVal::from_tri(variation(from, to))
    }
}

impl Codomain for f64 {
    fn variation(from: f64, to: f64) -> MixedVal {
        MixedVal::from_real_finite(to - from)
    }
}

/// A function on the integer interval `[lo, lo + values.len() - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntFunc<S> {
    lo: i64,
    values: Vec<S>,
}

impl<S: Codomain> IntFunc<S> {
    pub fn new(lo: i64, values: Vec<S>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidValue("empty domain".into()));
        }
        Ok(IntFunc { lo, values })
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn eval(&self, n: i64) -> Result<S> {
        if n < self.lo || n > self.hi() {
            return Err(Error::DomainBoundary {
                point: n,
                lo: self.lo,
                hi: self.hi(),
            });
        }
        Ok(self.values[(n - self.lo) as usize])
    }
}

impl IntFunc<f64> {
    pub fn from_fn(lo: i64, hi: i64, f: impl Fn(i64) -> f64) -> Result<Self> {
        Self::new(lo, (lo..=hi).map(f).collect())
    }
}

/// Variation calculus parameterised by the XNOR table used to combine
/// variations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Calculus {
    xnor: [[TriVal; 3]; 3],
}

#[inline]
fn slot(a: TriVal) -> usize {
    (1 - a as i8) as usize
}

impl Default for Calculus {
    fn default() -> Self {
        Self::standard()
    }
}

impl Calculus {
    pub fn standard() -> Self {
        let mut xnor = [[TriVal::Zero; 3]; 3];
        for a in TriVal::ALL {
            for b in TriVal::ALL {
                xnor[slot(a)][slot(b)] = logic::tri_connective(logic::Connective::Xnor, a, b);
            }
        }
        Calculus { xnor }
    }

    /// A calculus whose XNOR has been overridden at one entry. Used to check
    /// that the certification oracles detect a faulty connective.
    pub fn with_xnor_entry(mut self, a: TriVal, b: TriVal, value: TriVal) -> Self {
        self.xnor[slot(a)][slot(b)] = value;
        self
    }

    #[inline]
    pub fn xnor(&self, a: TriVal, b: TriVal) -> TriVal {
        self.xnor[slot(a)][slot(b)]
    }

    #[inline]
    pub fn xnor_mixed(&self, a: MixedVal, b: MixedVal) -> MixedVal {
        MixedVal::canonical(self.xnor(a.logic(), b.logic()), a.magnitude() * b.magnitude())
    }

    /// Variation of a unary Boolean function: T when `f` moves in the same
    /// direction as its argument.
    pub fn func_variation_bool(&self, f: &BoolFunc, x: bool) -> Result<TriVal> {
        require_unary(f)?;
        Ok(self.xnor(variation(x, !x), variation(f.eval1(x), f.eval1(!x))))
    }

    /// Partial variation of `f` w.r.t. argument `i` (0-based) at `x`.
    pub fn partial_variation(&self, f: &BoolFunc, x: &[bool], i: usize) -> Result<TriVal> {
        f.check_index(x, i)?;
        let mut flipped = x.to_vec();
        flipped[i] = !flipped[i];
        let before = f.table[args_to_row(x)];
        let after = f.table[args_to_row(&flipped)];
        Ok(self.xnor(variation(x[i], !x[i]), variation(before, after)))
    }

    pub fn func_variation_numeric(&self, f: &NumFunc, x: bool) -> MixedVal {
        self.xnor_mixed(
            MixedVal::from_tri(variation(x, !x)),
            f64::variation(f.eval(x), f.eval(!x)),
        )
    }

    /// Variation `δf(x → x+1)` in the codomain's sense.
    pub fn discrete_variation<S: Codomain>(&self, f: &IntFunc<S>, x: i64) -> Result<MixedVal> {
        let here = f.eval(x)?;
        let next = f.eval(x.checked_add(1).ok_or(Error::DomainBoundary {
            point: x,
            lo: f.lo(),
            hi: f.hi(),
        })?)?;
        Ok(S::variation(here, next))
    }

    /// Chain rule: `xnor(g'(f(x)), f'(x))`.
    #[inline]
    pub fn compose_variation(&self, outer: MixedVal, inner: TriVal) -> MixedVal {
        self.xnor_mixed(outer, MixedVal::from_tri(inner))
    }
}

pub fn func_variation_bool(f: &BoolFunc, x: bool) -> Result<TriVal> {
    Calculus::standard().func_variation_bool(f, x)
}

pub fn partial_variation(f: &BoolFunc, x: &[bool], i: usize) -> Result<TriVal> {
    Calculus::standard().partial_variation(f, x, i)
}

pub fn func_variation_numeric(f: &NumFunc, x: bool) -> MixedVal {
    Calculus::standard().func_variation_numeric(f, x)
}

pub fn discrete_variation<S: Codomain>(f: &IntFunc<S>, x: i64) -> Result<MixedVal> {
    Calculus::standard().discrete_variation(f, x)
}

pub fn compose_variation(outer: MixedVal, inner: TriVal) -> MixedVal {
    Calculus::standard().compose_variation(outer, inner)
}
