//! Published truth tables, transcribed literally, and checks of the
//! implementation against them.

use serde::Serialize;

use crate::layers::weight_variation;
use crate::logic::{neg, tri_connective, Connective, TriVal};
use crate::optimizer::{flip_decision, FlipAction};
use crate::variation::{partial_variation, variation, BoolFunc};

use TriVal::{Zero as O, F, T};

/// Operand order of the connective tables: rows `a`, columns `b`.
pub const OPERANDS: [TriVal; 3] = [T, O, F];

pub const NEGATION: [(TriVal, TriVal); 3] = [(T, F), (O, O), (F, T)];

pub const AND: [[TriVal; 3]; 3] = [[T, O, F], [O, O, O], [F, O, F]];
pub const OR: [[TriVal; 3]; 3] = [[T, O, T], [O, O, O], [T, O, F]];
pub const XOR: [[TriVal; 3]; 3] = [[F, O, T], [O, O, O], [T, O, F]];
pub const XNOR: [[TriVal; 3]; 3] = [[T, O, F], [O, O, O], [F, O, T]];

/// Variation table of `f = xor(a, b)` w.r.t. `b`:
/// `a, b, ¬b, δ(b→¬b), f(a,b), f(a,¬b), δf, f'_a(b)`.
pub const XOR_VARIATION: [[bool; 8]; 4] = [
    [true, true, false, false, false, true, true, false],
    [true, false, true, true, true, false, false, false],
    [false, true, false, false, true, false, false, true],
    [false, false, true, true, false, true, true, true],
];

/// XOR neuron: `x, w, ¬w, δw, δx', δx'/δw`.
pub const XOR_NEURON: [[bool; 6]; 4] = [
    [true, true, false, false, true, false],
    [true, false, true, true, false, false],
    [false, true, false, false, false, true],
    [false, false, true, true, true, true],
];

/// Optimization logic: `q, w, action`.
pub const OPTIMIZATION: [(bool, bool, FlipAction); 4] = [
    (true, true, FlipAction::Invert),
    (true, false, FlipAction::Keep),
    (false, true, FlipAction::Keep),
    (false, false, FlipAction::Invert),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub table: &'static str,
    pub entry: String,
    pub expected: String,
    pub actual: String,
}

fn t(b: bool) -> TriVal {
    TriVal::from(b)
}

fn record<V: PartialEq + std::fmt::Debug>(
    out: &mut Vec<Mismatch>,
    table: &'static str,
    entry: String,
    expected: V,
    actual: V,
) {
    if expected != actual {
        out.push(Mismatch {
            table,
            entry,
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        });
    }
}

pub fn check_connectives() -> Vec<Mismatch> {
    let mut out = Vec::new();
    for (a, want) in NEGATION {
        record(&mut out, "negation", format!("{a}"), want, neg(a));
    }
    let tables = [
        ("and", Connective::And, &AND),
        ("or", Connective::Or, &OR),
        ("xor", Connective::Xor, &XOR),
        ("xnor", Connective::Xnor, &XNOR),
    ];
    for (name, kind, table) in tables {
        for (r, &a) in OPERANDS.iter().enumerate() {
            for (c, &b) in OPERANDS.iter().enumerate() {
                record(&mut out, name, format!("{a},{b}"), table[r][c], tri_connective(kind, a, b));
            }
        }
    }
    out
}

pub fn check_xor_variation() -> Vec<Mismatch> {
    let mut out = Vec::new();
    let f = BoolFunc::connective(Connective::Xor);
    for row in XOR_VARIATION {
        let (a, b) = (row[0], row[1]);
        let key = format!("a={},b={}", t(a), t(b));
        let fab = f.eval(&[a, b]).expect("arity 2");
        let fanb = f.eval(&[a, !b]).expect("arity 2");
        let derived = partial_variation(&f, &[a, b], 1).expect("arity 2");
        let actual = [
            t(a),
            t(b),
            t(!b),
            variation(b, !b),
            t(fab),
            t(fanb),
            variation(fab, fanb),
            derived,
        ];
        let expected = row.map(t);
        record(&mut out, "xor_variation", key, expected, actual);
    }
    out
}

pub fn check_xor_neuron() -> Vec<Mismatch> {
    let mut out = Vec::new();
    for row in XOR_NEURON {
        let (x, w) = (row[0], row[1]);
        let key = format!("x={},w={}", t(x), t(w));
        let before = Connective::Xor.apply_bool(x, w);
        let after = Connective::Xor.apply_bool(x, !w);
        let actual = [
            t(x),
            t(w),
            t(!w),
            variation(w, !w),
            variation(before, after),
            weight_variation(Connective::Xor, x),
        ];
        record(&mut out, "xor_neuron", key, row.map(t), actual);
    }
    out
}

pub fn check_optimization() -> Vec<Mismatch> {
    let mut out = Vec::new();
    for (q, w, want) in OPTIMIZATION {
        let key = format!("q={},w={}", t(q), t(w));
        record(&mut out, "optimization", key, want, flip_decision(t(q).into(), w));
    }
    out
}

/// Every table, in order; empty when the implementation reproduces them all.
pub fn check_all() -> Vec<Mismatch> {
    let mut out = check_connectives();
    out.extend(check_xor_variation());
    out.extend(check_xor_neuron());
    out.extend(check_optimization());
    out
}

/// Number of entries compared by [`check_all`].
pub fn entry_count() -> usize {
    NEGATION.len() + 4 * 9 + XOR_VARIATION.len() + XOR_NEURON.len() + OPTIMIZATION.len()
}
