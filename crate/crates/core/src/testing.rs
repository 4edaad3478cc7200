//! Generators shared by unit, integration and acceptance tests.

use proptest::collection::vec;
use proptest::prelude::*;

use crate::rng::SplitMix64;
use crate::space::{SpaceError, TupleSpace};
use crate::tuple::{PatternField, Template, Tuple, Value, ValueKind};

pub fn arb_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<i64>().prop_map(Value::Int64),
        any::<u64>().prop_map(|b| Value::Float64(f64::from_bits(b))),
        ".{0,12}".prop_map(Value::Str),
        vec(any::<u8>(), 0..16).prop_map(Value::Bytes),
        vec(any::<i64>(), 0..8).prop_map(Value::IntArray),
        vec(any::<u64>(), 0..8).prop_map(|v| Value::FloatArray(v.into_iter().map(f64::from_bits).collect())),
    ]
}

pub fn arb_tuple() -> impl Strategy<Value = Tuple> {
    vec(arb_value(), 1..6).prop_map(|v| Tuple::new(v).unwrap())
}

pub fn arb_pattern_field() -> impl Strategy<Value = PatternField> {
    prop_oneof![
        3 => arb_value().prop_map(PatternField::Literal),
        1 => proptest::sample::select(ValueKind::ALL.to_vec()).prop_map(PatternField::Type),
        1 => Just(PatternField::Any),
    ]
}

pub fn arb_template() -> impl Strategy<Value = Template> {
    vec(arb_pattern_field(), 1..6).prop_map(|v| Template::new(v).unwrap())
}

/// Random value of the given kind drawn from a small domain, so that
/// generated tuples and templates collide often.
pub fn small_value(rng: &mut SplitMix64, kind: ValueKind) -> Value {
    match kind {
        ValueKind::Int64 => Value::Int64(rng.below(4) as i64),
        ValueKind::Float64 => Value::Float64([0.0, -0.0, 1.5, f64::NAN][rng.below(4) as usize]),
        ValueKind::Str => Value::Str(["a", "b", "hashSet", ""][rng.below(4) as usize].to_owned()),
        ValueKind::Bytes => Value::Bytes(vec![0; rng.below(3) as usize]),
        ValueKind::IntArray => Value::IntArray((0..rng.below(3) as i64).collect()),
        ValueKind::FloatArray => Value::FloatArray(vec![0.5; rng.below(3) as usize]),
    }
}

fn small_kind(rng: &mut SplitMix64) -> ValueKind {
    // Weighted towards Str and Int64, which drive the bucket index.
    match rng.below(8) {
        0..=2 => ValueKind::Str,
        3..=5 => ValueKind::Int64,
        k => ValueKind::ALL[k as usize - 4],
    }
}

pub fn small_tuple(rng: &mut SplitMix64) -> Tuple {
    let arity = 1 + rng.below(3) as usize;
    Tuple::new((0..arity).map(|_| {
        let k = small_kind(rng);
        small_value(rng, k)
    }).collect())
    .unwrap()
}

pub fn small_template(rng: &mut SplitMix64) -> Template {
    let arity = 1 + rng.below(3) as usize;
    Template::new(
        (0..arity)
            .map(|_| match rng.below(4) {
                0 | 1 => {
                    let k = small_kind(rng);
                    PatternField::Literal(small_value(rng, k))
                }
                2 => PatternField::Type(small_kind(rng)),
                _ => PatternField::Any,
            })
            .collect(),
    )
    .unwrap()
}

/// One step of a random single-threaded operation script.
#[derive(Debug, Clone)]
pub enum ScriptOp {
    Out(Tuple),
    Rdp(Template),
    Inp(Template),
    Count(Template),
}

pub fn random_script(rng: &mut SplitMix64, len: usize) -> Vec<ScriptOp> {
    (0..len)
        .map(|_| match rng.below(10) {
            0..=3 => ScriptOp::Out(small_tuple(rng)),
            4 | 5 => ScriptOp::Rdp(small_template(rng)),
            6 | 7 => ScriptOp::Inp(small_template(rng)),
            _ => ScriptOp::Count(small_template(rng)),
        })
        .collect()
}

/// Result of one [`ScriptOp`], comparable across implementations.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptResult {
    Written,
    Found(Option<Tuple>),
    Counted(usize),
}

/// Runs a script against any tuple space, stopping at the first error.
pub fn run_script(space: &dyn TupleSpace, ops: &[ScriptOp]) -> Result<Vec<ScriptResult>, SpaceError> {
    ops.iter()
        .map(|op| {
            Ok(match op {
                ScriptOp::Out(t) => {
                    space.out(t.clone())?;
                    ScriptResult::Written
                }
                ScriptOp::Rdp(t) => ScriptResult::Found(space.rdp(t)?),
                ScriptOp::Inp(t) => ScriptResult::Found(space.inp(t)?),
                ScriptOp::Count(t) => ScriptResult::Counted(space.count(t)?),
            })
        })
        .collect()
}

/// Unindexed reference multiset: a flat list in insertion order, searched by
/// linear scan.
#[derive(Debug, Default, Clone)]
pub struct ShadowSpace {
    tuples: Vec<Tuple>,
}

impl ShadowSpace {
    pub fn new() -> ShadowSpace {
        ShadowSpace::default()
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn apply(&mut self, op: &ScriptOp) -> ScriptResult {
        match op {
            ScriptOp::Out(t) => {
                self.tuples.push(t.clone());
                ScriptResult::Written
            }
            ScriptOp::Rdp(t) => ScriptResult::Found(self.tuples.iter().find(|x| t.matches(x)).cloned()),
            ScriptOp::Inp(t) => {
                ScriptResult::Found(self.tuples.iter().position(|x| t.matches(x)).map(|i| self.tuples.remove(i)))
            }
            ScriptOp::Count(t) => ScriptResult::Counted(self.tuples.iter().filter(|x| t.matches(x)).count()),
        }
    }

    pub fn run(&mut self, ops: &[ScriptOp]) -> Vec<ScriptResult> {
        ops.iter().map(|op| self.apply(op)).collect()
    }
}
