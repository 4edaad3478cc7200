//! Tuple values, tuples, templates and the matching relation.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

/// Type tag of a [`Value`]. The discriminants are the wire tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ValueKind {
    Int64 = 1,
    Float64 = 2,
    Str = 3,
    Bytes = 4,
    IntArray = 5,
    FloatArray = 6,
}

impl ValueKind {
    pub const ALL: [ValueKind; 6] = [
        ValueKind::Int64,
        ValueKind::Float64,
        ValueKind::Str,
        ValueKind::Bytes,
        ValueKind::IntArray,
        ValueKind::FloatArray,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<ValueKind> {
        ValueKind::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

/// A single tuple field.
///
/// Equality is tag equality plus payload equality. Floats compare by bit
/// pattern, so `NaN == NaN` holds iff the bits are identical and `0.0 != -0.0`.
#[derive(Clone)]
pub enum Value {
    Int64(i64),
    Float64(f64),
    Str(String),
    Bytes(Vec<u8>),
    IntArray(Vec<i64>),
    FloatArray(Vec<f64>),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Int64(_) => ValueKind::Int64,
            Value::Float64(_) => ValueKind::Float64,
            Value::Str(_) => ValueKind::Str,
            Value::Bytes(_) => ValueKind::Bytes,
            Value::IntArray(_) => ValueKind::IntArray,
            Value::FloatArray(_) => ValueKind::FloatArray,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int64(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float64(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_int_array(&self) -> Option<&[i64]> {
        match self {
            Value::IntArray(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_float_array(&self) -> Option<&[f64]> {
        match self {
            Value::FloatArray(v) => Some(v),
            _ => None,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Int64(a), Value::Int64(b)) => a == b,
            (Value::Float64(a), Value::Float64(b)) => a.to_bits() == b.to_bits(),
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Bytes(a), Value::Bytes(b)) => a == b,
            (Value::IntArray(a), Value::IntArray(b)) => a == b,
            (Value::FloatArray(a), Value::FloatArray(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.kind().hash(state);
        match self {
            Value::Int64(v) => v.hash(state),
            Value::Float64(v) => v.to_bits().hash(state),
            Value::Str(v) => v.hash(state),
            Value::Bytes(v) => v.hash(state),
            Value::IntArray(v) => v.hash(state),
            Value::FloatArray(v) => {
                v.len().hash(state);
                for x in v {
                    x.to_bits().hash(state);
                }
            }
        }
    }
}

fn fmt_seq<T: fmt::Debug>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    const SHOWN: usize = 8;
    write!(f, "[")?;
    for (i, x) in items.iter().take(SHOWN).enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{x:?}")?;
    }
    if items.len() > SHOWN {
        write!(f, ", … ({} total)", items.len())?;
    }
    write!(f, "]")
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int64(v) => write!(f, "{v}"),
            Value::Float64(v) => write!(f, "{v:?}"),
            Value::Str(v) => write!(f, "{v:?}"),
            Value::Bytes(v) => {
                write!(f, "b")?;
                fmt_seq(f, v)
            }
            Value::IntArray(v) => fmt_seq(f, v),
            Value::FloatArray(v) => fmt_seq(f, v),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int64(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float64(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

impl From<Vec<u8>> for Value {
    fn from(v: Vec<u8>) -> Self {
        Value::Bytes(v)
    }
}

impl From<Vec<i64>> for Value {
    fn from(v: Vec<i64>) -> Self {
        Value::IntArray(v)
    }
}

impl From<Vec<f64>> for Value {
    fn from(v: Vec<f64>) -> Self {
        Value::FloatArray(v)
    }
}

/// Returned when a tuple or template would have no fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("tuples and templates must have at least one field")]
pub struct EmptyArity;

/// An immutable, non-empty ordered sequence of values.
///
/// Cloning is cheap: the fields are shared.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Tuple {
    fields: Arc<[Value]>,
}

impl Tuple {
    pub fn new(fields: Vec<Value>) -> Result<Tuple, EmptyArity> {
        if fields.is_empty() {
            return Err(EmptyArity);
        }
        Ok(Tuple { fields: fields.into() })
    }

    pub fn arity(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[Value] {
        &self.fields
    }

    pub fn get(&self, i: usize) -> Option<&Value> {
        self.fields.get(i)
    }
}

impl std::ops::Index<usize> for Tuple {
    type Output = Value;

    fn index(&self, i: usize) -> &Value {
        &self.fields[i]
    }
}

impl fmt::Debug for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨")?;
        for (i, v) in self.fields.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:?}")?;
        }
        write!(f, "⟩")
    }
}

/// One position of a [`Template`].
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum PatternField {
    Literal(Value),
    /// Matches any value carrying this tag.
    Type(ValueKind),
    /// Matches anything.
    Any,
}

impl PatternField {
    pub fn matches(&self, value: &Value) -> bool {
        match self {
            PatternField::Literal(v) => v == value,
            PatternField::Type(kind) => value.kind() == *kind,
            PatternField::Any => true,
        }
    }
}

impl fmt::Debug for PatternField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternField::Literal(v) => write!(f, "{v:?}"),
            PatternField::Type(k) => write!(f, "?{k:?}"),
            PatternField::Any => write!(f, "_"),
        }
    }
}

impl<T: Into<Value>> From<T> for PatternField {
    fn from(v: T) -> Self {
        PatternField::Literal(v.into())
    }
}

impl From<ValueKind> for PatternField {
    fn from(kind: ValueKind) -> Self {
        PatternField::Type(kind)
    }
}

/// An immutable, non-empty sequence of pattern fields.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Template {
    fields: Arc<[PatternField]>,
}

impl Template {
    pub fn new(fields: Vec<PatternField>) -> Result<Template, EmptyArity> {
        if fields.is_empty() {
            return Err(EmptyArity);
        }
        Ok(Template { fields: fields.into() })
    }

    /// The template matching exactly `tuple`: every field a literal.
    pub fn of(tuple: &Tuple) -> Template {
        Template {
            fields: tuple.fields().iter().cloned().map(PatternField::Literal).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[PatternField] {
        &self.fields
    }

    /// The string literal in first position, if any. Used for bucket lookup.
    pub fn head_str(&self) -> Option<&str> {
        match &self.fields[0] {
            PatternField::Literal(Value::Str(s)) => Some(s),
            _ => None,
        }
    }

    pub fn matches(&self, tuple: &Tuple) -> bool {
        matches(self, tuple)
    }
}

impl fmt::Debug for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨")?;
        for (i, p) in self.fields.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{p:?}")?;
        }
        write!(f, "⟩")
    }
}

/// The Linda matching relation: equal arity and every position matches.
pub fn matches(template: &Template, tuple: &Tuple) -> bool {
    template.arity() == tuple.arity()
        && template.fields().iter().zip(tuple.fields()).all(|(p, v)| p.matches(v))
}

/// Shorthand for [`Template::of`].
pub fn template_of(tuple: &Tuple) -> Template {
    Template::of(tuple)
}

/// Builds a [`Tuple`] from one or more values convertible into [`Value`].
#[macro_export]
macro_rules! tuple {
    ($($v:expr),+ $(,)?) => {
        $crate::Tuple::new(vec![$($crate::Value::from($v)),+]).expect("non-empty by construction")
    };
}

/// Builds a [`Template`] from one or more items convertible into
/// [`PatternField`]; plain values become literals.
#[macro_export]
macro_rules! template {
    ($($v:expr),+ $(,)?) => {
        $crate::Template::new(vec![$($crate::PatternField::from($v)),+]).expect("non-empty by construction")
    };
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::arb_tuple;
    use proptest::prelude::*;

    fn goofy() -> Tuple {
        tuple!["goofy", 4i64, 10.4]
    }

    #[test]
    fn literal_head_with_wildcards() {
        let t = template!["goofy", PatternField::Any, PatternField::Any];
        assert!(matches(&t, &goofy()));
    }

    #[test]
    fn arity_mismatch_never_matches() {
        let t = template![PatternField::Any, PatternField::Any];
        assert!(!matches(&t, &goofy()));
    }

    #[test]
    fn literal_int_head() {
        let t = template![10i64, PatternField::Any];
        assert!(matches(&t, &tuple![10i64, vec![1i64, 2]]));
        assert!(!matches(&t, &tuple![11i64, vec![1i64, 2]]));
    }

    #[test]
    fn type_wildcard_checks_tag() {
        let t = template![ValueKind::Int64];
        assert!(!matches(&t, &tuple!["x"]));
        assert!(matches(&t, &tuple![3i64]));
    }

    #[test]
    fn template_of_examples() {
        let t = tuple!["a", 1i64];
        let tpl = template_of(&t);
        assert_eq!(tpl, template!["a", 1i64]);
        assert!(matches(&tpl, &t));
        assert_eq!(template_of(&tuple![10.5]), template![10.5]);
    }

    #[test]
    fn floats_compare_by_bits() {
        assert_eq!(Value::Float64(f64::NAN), Value::Float64(f64::NAN));
        assert_ne!(Value::Float64(0.0), Value::Float64(-0.0));
        assert!(!matches(&template![0.0], &tuple![-0.0]));
        assert!(matches(&template![f64::NAN], &tuple![f64::NAN]));
    }

    #[test]
    fn int_and_float_literals_do_not_cross_match() {
        assert!(!matches(&template![1i64], &tuple![1.0]));
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(Tuple::new(vec![]), Err(EmptyArity));
        assert!(Template::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn reflexive(t in arb_tuple()) {
            prop_assert!(matches(&template_of(&t), &t));
        }

        #[test]
        fn weakening_is_monotone(t in arb_tuple(), mask in proptest::collection::vec(0u8..3, 1..8)) {
            let fields = t.fields().iter().enumerate().map(|(i, v)| match mask.get(i).copied().unwrap_or(0) {
                0 => PatternField::Literal(v.clone()),
                1 => PatternField::Type(v.kind()),
                _ => PatternField::Any,
            }).collect();
            let weakened = Template::new(fields).unwrap();
            prop_assert!(matches(&weakened, &t));
            prop_assert_eq!(matches(&weakened, &t), matches(&weakened, &t));
        }

        #[test]
        fn arity_gate(t in arb_tuple(), extra in 1usize..3) {
            let mut fields: Vec<_> = template_of(&t).fields().to_vec();
            fields.extend(std::iter::repeat_n(PatternField::Any, extra));
            prop_assert!(!matches(&Template::new(fields).unwrap(), &t));
        }
    }
}
