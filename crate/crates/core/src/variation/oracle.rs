//! Brute-force certification of the variation calculus.
//!
//! Each rule is checked at every point of an exhaustive enumeration (Boolean
//! functions of small arity, integer tables with values in [-8, 8]) plus a
//! seeded random sample of dyadic-valued tables. Dyadic values keep every sum
//! and product exact, so all comparisons are exact equality.

use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{row_to_args, variation, BoolFunc, Calculus, Codomain, IntFunc, NumFunc};
use crate::logic::{self, Connective, MixedVal, TriVal};

pub const DEFAULT_SEED: u64 = 0x5EED_B001;

/// Counterexamples kept verbatim per rule; the total is always counted.
const MAX_LISTED: usize = 16;
const TABLE_RANGE: i32 = 8;
const RANDOM_TABLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// XNOR algebra on mixed values: identity/absorb/negate by a logic
    /// operand, product law, distributivity, homogeneity, xor = -xnor.
    Prop1,
    /// `δf(x → y) = xnor(δ(x → y), f'(x))` for Boolean `f`.
    Prop2_1,
    /// `(¬f)' = ¬f'`.
    Prop2_2,
    /// `(g ∘ f)' = xnor(g'(f(x)), f'(x))` for Boolean `f`, `g`.
    Prop2_3,
    /// `δf(x → y) = xnor(δ(x → y), f'(x))` for numeric `f`.
    Prop3_1,
    /// `(αf)' = αf'`.
    Prop3_2,
    /// `(f + g)' = f' + g'`.
    Prop3_3,
    /// Chain rule through a Boolean intermediate, Boolean or numeric outer.
    Prop4_1,
    /// Chain rule through an integer intermediate, under its precondition.
    Prop4_2,
    /// `(g ∘ f)'_i = xnor(g'(f(x)), f'_i(x))` for `f` of arity <= 3.
    MultivariateComposition,
}

impl Rule {
    pub const ALL: [Rule; 10] = [
        Rule::Prop1,
        Rule::Prop2_1,
        Rule::Prop2_2,
        Rule::Prop2_3,
        Rule::Prop3_1,
        Rule::Prop3_2,
        Rule::Prop3_3,
        Rule::Prop4_1,
        Rule::Prop4_2,
        Rule::MultivariateComposition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Prop1 => "prop1",
            Rule::Prop2_1 => "prop2_1",
            Rule::Prop2_2 => "prop2_2",
            Rule::Prop2_3 => "prop2_3",
            Rule::Prop3_1 => "prop3_1",
            Rule::Prop3_2 => "prop3_2",
            Rule::Prop3_3 => "prop3_3",
            Rule::Prop4_1 => "prop4_1",
            Rule::Prop4_2 => "prop4_2",
            Rule::MultivariateComposition => "multivariate_composition",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    pub rule: String,
    pub cases_checked: u64,
    pub cases_skipped: u64,
    pub counterexample_count: u64,
    pub counterexamples: Vec<String>,
    pub seed: u64,
}

impl RuleReport {
    pub fn passed(&self) -> bool {
        self.counterexample_count == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub seed: u64,
    pub rules: Vec<RuleReport>,
}

impl CertificationReport {
    pub fn passed(&self) -> bool {
        self.rules.iter().all(RuleReport::passed)
    }

    pub fn failed_rules(&self) -> impl Iterator<Item = &RuleReport> {
        self.rules.iter().filter(|r| !r.passed())
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            let _ = writeln!(
                out,
                "{:<26} {:<4} checked={:<8} skipped={:<8} counterexamples={}",
                r.rule,
                if r.passed() { "ok" } else { "FAIL" },
                r.cases_checked,
                r.cases_skipped,
                r.counterexample_count
            );
            for c in &r.counterexamples {
                let _ = writeln!(out, "    {c}");
            }
        }
        out
    }
}

struct Tally {
    report: RuleReport,
}

impl Tally {
    fn new(rule: Rule, seed: u64) -> Self {
        Tally {
            report: RuleReport {
                rule: rule.name().to_string(),
                cases_checked: 0,
                cases_skipped: 0,
                counterexample_count: 0,
                counterexamples: Vec::new(),
                seed,
            },
        }
    }

    fn check<T: PartialEq + fmt::Display>(&mut self, lhs: T, rhs: T, ctx: impl FnOnce() -> String) {
        self.report.cases_checked += 1;
        if lhs != rhs {
            self.report.counterexample_count += 1;
            if self.report.counterexamples.len() < MAX_LISTED {
                self.report
                    .counterexamples
                    .push(format!("{}: lhs={lhs} rhs={rhs}", ctx()));
            }
        }
    }

    fn skip(&mut self) {
        self.report.cases_skipped += 1;
    }
}

/// Certifies one rule against the standard calculus with the default seed.
pub fn oracle_certify(rule: Rule) -> RuleReport {
    certify(&Calculus::standard(), rule, DEFAULT_SEED)
}

pub fn certify_all(calc: &Calculus, seed: u64) -> CertificationReport {
    CertificationReport {
        seed,
        rules: Rule::ALL.iter().map(|&r| certify(calc, r, seed)).collect(),
    }
}

pub fn certify(calc: &Calculus, rule: Rule, seed: u64) -> RuleReport {
    let mut t = Tally::new(rule, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ rule as u64);
    match rule {
        Rule::Prop1 => prop1(calc, &mut t, &mut rng),
        Rule::Prop2_1 => prop2_1(calc, &mut t),
        Rule::Prop2_2 => prop2_2(calc, &mut t),
        Rule::Prop2_3 => prop2_3(calc, &mut t),
        Rule::Prop3_1 => prop3_1(calc, &mut t, &mut rng),
        Rule::Prop3_2 => prop3_2(calc, &mut t, &mut rng),
        Rule::Prop3_3 => prop3_3(calc, &mut t, &mut rng),
        Rule::Prop4_1 => prop4_1(calc, &mut t, &mut rng),
        Rule::Prop4_2 => prop4_2(calc, &mut t, &mut rng),
        Rule::MultivariateComposition => multivariate(calc, &mut t),
    }
    t.report
}

fn tv(b: bool) -> TriVal {
    b.into()
}

fn show_table(f: &BoolFunc) -> String {
    f.table().iter().map(|&b| if b { 'T' } else { 'F' }).collect()
}

fn mv(x: f64) -> MixedVal {
    MixedVal::from_real_finite(x)
}

fn dyadic(rng: &mut ChaCha8Rng) -> f64 {
    f64::from(rng.gen_range(-64..=64)) / 8.0
}

fn integer_tables() -> impl Iterator<Item = NumFunc> {
    let r = -TABLE_RANGE..=TABLE_RANGE;
    r.clone().flat_map(move |a| {
        r.clone()
            .map(move |b| NumFunc::new(f64::from(a), f64::from(b)).expect("finite"))
    })
}

fn numeric_tables(rng: &mut ChaCha8Rng) -> Vec<NumFunc> {
    let mut tables: Vec<NumFunc> = integer_tables().collect();
    for _ in 0..RANDOM_TABLES {
        tables.push(NumFunc::new(dyadic(rng), dyadic(rng)).expect("finite"));
    }
    tables
}

fn prop1(calc: &Calculus, t: &mut Tally, rng: &mut ChaCha8Rng) {
    let mut grid: Vec<f64> = vec![-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0];
    grid.extend((0..24).map(|_| dyadic(rng)));

    for a in TriVal::ALL {
        let am = MixedVal::from_tri(a);
        for &x in &grid {
            let expected = f64::from(logic::embed(a)) * x;
            t.check(calc.xnor_mixed(am, mv(x)).to_real(), expected, || {
                format!("(1) a={a} x={x}")
            });
        }
    }
    // Operands of (3)-(5) range over logic values and numbers alike.
    let operands: Vec<MixedVal> = TriVal::ALL
        .iter()
        .map(|&a| MixedVal::from_tri(a))
        .chain(grid.iter().map(|&x| mv(x)))
        .collect();
    for &x in &grid {
        for &y in &grid {
            t.check(calc.xnor_mixed(mv(x), mv(y)).to_real(), x * y, || {
                format!("(2) x={x} y={y}")
            });
        }
    }
    for &a in &operands {
        for &y in &grid {
            for &z in &grid {
                let lhs = calc.xnor_mixed(a, mv(y + z)).to_real();
                let rhs = calc.xnor_mixed(a, mv(y)).to_real() + calc.xnor_mixed(a, mv(z)).to_real();
                t.check(lhs, rhs, || format!("(3) x={a} y={y} z={z}"));
                let lhs = calc.xnor_mixed(a, mv(z * y)).to_real();
                let rhs = z * calc.xnor_mixed(a, mv(y)).to_real();
                t.check(lhs, rhs, || format!("(4) x={a} y={y} lambda={z}"));
            }
            let lhs = logic::mixed_connective(Connective::Xor, a, mv(y)).to_real();
            let rhs = -calc.xnor_mixed(a, mv(y)).to_real();
            t.check(lhs, rhs, || format!("(5) x={a} y={y}"));
        }
    }
}

fn prop2_1(calc: &Calculus, t: &mut Tally) {
    for f in BoolFunc::all(1) {
        for x in [false, true] {
            let fp = calc.func_variation_bool(&f, x).expect("unary");
            for y in [false, true] {
                let lhs = variation(f.eval1(x), f.eval1(y));
                let rhs = calc.xnor(variation(x, y), fp);
                t.check(lhs, rhs, || format!("f={} x={} y={}", show_table(&f), tv(x), tv(y)));
            }
        }
    }
}

fn prop2_2(calc: &Calculus, t: &mut Tally) {
    for f in BoolFunc::all(1) {
        for x in [false, true] {
            let lhs = calc.func_variation_bool(&f.not(), x).expect("unary");
            let rhs = logic::neg(calc.func_variation_bool(&f, x).expect("unary"));
            t.check(lhs, rhs, || format!("f={} x={}", show_table(&f), tv(x)));
        }
    }
}

fn prop2_3(calc: &Calculus, t: &mut Tally) {
    for f in BoolFunc::all(1) {
        for g in BoolFunc::all(1) {
            let gf = f.then(&g).expect("unary");
            for x in [false, true] {
                let lhs = calc.func_variation_bool(&gf, x).expect("unary");
                let gp = calc.func_variation_bool(&g, f.eval1(x)).expect("unary");
                let fp = calc.func_variation_bool(&f, x).expect("unary");
                let rhs = calc.xnor(gp, fp);
                t.check(lhs, rhs, || {
                    format!("f={} g={} x={}", show_table(&f), show_table(&g), tv(x))
                });
            }
        }
    }
}

fn prop3_1(calc: &Calculus, t: &mut Tally, rng: &mut ChaCha8Rng) {
    for f in numeric_tables(rng) {
        for x in [false, true] {
            let fp = calc.func_variation_numeric(&f, x);
            for y in [false, true] {
                let lhs = f64::variation(f.eval(x), f.eval(y));
                let rhs = calc.xnor_mixed(MixedVal::from_tri(variation(x, y)), fp);
                t.check(lhs, rhs, || format!("f={f:?} x={} y={}", tv(x), tv(y)));
            }
        }
    }
}

fn prop3_2(calc: &Calculus, t: &mut Tally, rng: &mut ChaCha8Rng) {
    let mut alphas: Vec<f64> = (-TABLE_RANGE..=TABLE_RANGE).map(f64::from).collect();
    alphas.extend((0..8).map(|_| dyadic(rng)));
    for f in numeric_tables(rng) {
        for &alpha in &alphas {
            let scaled = f.scale(alpha).expect("finite");
            for x in [false, true] {
                let lhs = calc.func_variation_numeric(&scaled, x);
                let rhs = mv(alpha * calc.func_variation_numeric(&f, x).to_real());
                t.check(lhs, rhs, || format!("f={f:?} alpha={alpha} x={}", tv(x)));
            }
        }
    }
}

fn prop3_3(calc: &Calculus, t: &mut Tally, rng: &mut ChaCha8Rng) {
    let ints: Vec<NumFunc> = integer_tables().collect();
    let mut pairs: Vec<(NumFunc, NumFunc)> = ints
        .iter()
        .flat_map(|f| ints.iter().map(move |g| (*f, *g)))
        .collect();
    for _ in 0..RANDOM_TABLES {
        let f = NumFunc::new(dyadic(rng), dyadic(rng)).expect("finite");
        let g = NumFunc::new(dyadic(rng), dyadic(rng)).expect("finite");
        pairs.push((f, g));
    }
    for (f, g) in pairs {
        let sum = f.add(&g).expect("finite");
        for x in [false, true] {
            let lhs = calc.func_variation_numeric(&sum, x);
            let rhs = mv(
                calc.func_variation_numeric(&f, x).to_real()
                    + calc.func_variation_numeric(&g, x).to_real(),
            );
            t.check(lhs, rhs, || format!("f={f:?} g={g:?} x={}", tv(x)));
        }
    }
}

fn prop4_1(calc: &Calculus, t: &mut Tally, rng: &mut ChaCha8Rng) {
    let outers = numeric_tables(rng);
    for f in BoolFunc::all(1) {
        for x in [false, true] {
            let fp = calc.func_variation_bool(&f, x).expect("unary");
            for g in BoolFunc::all(1) {
                let lhs = MixedVal::from_tri(
                    calc.func_variation_bool(&f.then(&g).expect("unary"), x)
                        .expect("unary"),
                );
                let gp = MixedVal::from_tri(calc.func_variation_bool(&g, f.eval1(x)).expect("unary"));
                let rhs = calc.compose_variation(gp, fp);
                t.check(lhs, rhs, || {
                    format!("B->B->B f={} g={} x={}", show_table(&f), show_table(&g), tv(x))
                });
            }
            for g in &outers {
                let gf = NumFunc::compose(g, &f).expect("unary");
                let lhs = calc.func_variation_numeric(&gf, x);
                let gp = calc.func_variation_numeric(g, f.eval1(x));
                let rhs = calc.compose_variation(gp, fp);
                t.check(lhs, rhs, || {
                    format!("B->B->N f={} g={g:?} x={}", show_table(&f), tv(x))
                });
            }
        }
    }
}

// Outer tables are random walks with steps in {-1, 0, 1} (numeric) or sparse
// toggles (Boolean) so that the equal-consecutive-variation precondition holds
// in a useful fraction of cases.
fn prop4_2(calc: &Calculus, t: &mut Tally, rng: &mut ChaCha8Rng) {
    const LO: i64 = -4;
    const LEN: usize = 9;
    let inners: Vec<NumFunc> = (-3..=3)
        .flat_map(|a| (-3..=3).map(move |b| NumFunc::new(f64::from(a), f64::from(b)).expect("finite")))
        .collect();

    let mut numeric_outers = Vec::with_capacity(RANDOM_TABLES);
    for _ in 0..RANDOM_TABLES / 4 {
        let mut v = f64::from(rng.gen_range(-TABLE_RANGE..=TABLE_RANGE));
        let mut step = f64::from(rng.gen_range(-1..=1));
        let mut values = Vec::with_capacity(LEN);
        for _ in 0..LEN {
            values.push(v);
            if rng.gen_bool(0.3) {
                step = f64::from(rng.gen_range(-2..=2));
            }
            v += step;
        }
        numeric_outers.push(IntFunc::new(LO, values).expect("non-empty"));
    }
    let mut bool_outers = Vec::new();
    for _ in 0..RANDOM_TABLES / 4 {
        let mut b = rng.gen_bool(0.5);
        let mut values = Vec::with_capacity(LEN);
        for _ in 0..LEN {
            values.push(b);
            if rng.gen_bool(0.25) {
                b = !b;
            }
        }
        bool_outers.push(IntFunc::new(LO, values).expect("non-empty"));
    }

    for f in &inners {
        for x in [false, true] {
            let fp = calc.func_variation_numeric(f, x);
            for g in &numeric_outers {
                check_prop4_2(calc, t, f, g, x, fp);
            }
            for g in &bool_outers {
                check_prop4_2(calc, t, f, g, x, fp);
            }
        }
    }
}

fn check_prop4_2<S: Codomain + fmt::Debug>(
    calc: &Calculus,
    t: &mut Tally,
    f: &NumFunc,
    g: &IntFunc<S>,
    x: bool,
    fp: MixedVal,
) {
    let at = f.eval(x) as i64;
    let gp_here = calc.discrete_variation(g, at).expect("inside domain");
    let gp_below = calc.discrete_variation(g, at - 1).expect("inside domain");
    if fp.magnitude() > 1.0 || gp_here != gp_below {
        t.skip();
        return;
    }
    let composed = S::variation(
        g.eval(at).expect("inside domain"),
        g.eval(f.eval(!x) as i64).expect("inside domain"),
    );
    let lhs = calc.xnor_mixed(MixedVal::from_tri(variation(x, !x)), composed);
    let rhs = calc.xnor_mixed(gp_here, fp);
    t.check(lhs, rhs, || format!("f={f:?} g={g:?} x={}", tv(x)));
}

fn multivariate(calc: &Calculus, t: &mut Tally) {
    let outers: Vec<BoolFunc> = BoolFunc::all(1).collect();
    for n in 1..=3 {
        for f in BoolFunc::all(n) {
            for g in &outers {
                let gf = f.then(g).expect("unary");
                for row in 0..1usize << n {
                    let x = row_to_args(row, n);
                    let fx = f.eval(&x).expect("arity");
                    let gp = calc.func_variation_bool(g, fx).expect("unary");
                    for i in 0..n {
                        let lhs = calc.partial_variation(&gf, &x, i).expect("index");
                        let rhs = calc.xnor(gp, calc.partial_variation(&f, &x, i).expect("index"));
                        t.check(lhs, rhs, || {
                            format!(
                                "f={} g={} x={:?} i={i}",
                                show_table(&f),
                                show_table(g),
                                x.iter().map(|&b| tv(b)).collect::<Vec<_>>()
                            )
                        });
                    }
                }
            }
        }
    }
}
