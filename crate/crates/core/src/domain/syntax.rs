//! Textual forms for atoms, literals, action terms and causal edges.
//!
//! ```text
//! atom    := name | name "(" arg ("," arg)* ")"
//! literal := atom "=" value | atom          (bare atom means "=true")
//! action  := name | name "(" arg ("," arg)* ")"
//! edge    := event "->" event
//! ```
//!
//! Arguments starting with `?` are variables and only appear in domain rules.

use std::fmt;
use std::str::FromStr;

use schemars::gen::SchemaGenerator;
use schemars::schema::Schema;
use schemars::JsonSchema;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, ScoopError};

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.' || c == '?'
}

fn check_name(what: &'static str, input: &str, name: &str) -> Result<()> {
    if name.is_empty() {
        return Err(ScoopError::syntax(what, input, "empty name"));
    }
    if let Some(c) = name.chars().find(|c| !is_name_char(*c)) {
        return Err(ScoopError::syntax(
            what,
            input,
            format!("unexpected character {c:?}"),
        ));
    }
    Ok(())
}

/// Splits `name(a, b)` into `("name", ["a", "b"])`.
fn parse_application(what: &'static str, input: &str) -> Result<(String, Vec<String>)> {
    let s = input.trim();
    match s.find('(') {
        None => {
            check_name(what, input, s)?;
            Ok((s.to_string(), Vec::new()))
        }
        Some(open) => {
            if !s.ends_with(')') {
                return Err(ScoopError::syntax(what, input, "missing closing parenthesis"));
            }
            let name = s[..open].trim();
            check_name(what, input, name)?;
            let inner = &s[open + 1..s.len() - 1];
            if inner.contains('(') || inner.contains(')') {
                return Err(ScoopError::syntax(what, input, "nested parentheses"));
            }
            if inner.trim().is_empty() {
                return Ok((name.to_string(), Vec::new()));
            }
            let mut args = Vec::new();
            for part in inner.split(',') {
                let arg = part.trim();
                check_name(what, input, arg)?;
                args.push(arg.to_string());
            }
            Ok((name.to_string(), args))
        }
    }
}

fn write_application(f: &mut fmt::Formatter<'_>, name: &str, args: &[String]) -> fmt::Result {
    if args.is_empty() {
        write!(f, "{name}")
    } else {
        write!(f, "{name}({})", args.join(","))
    }
}

pub fn is_variable(arg: &str) -> bool {
    arg.starts_with('?')
}

/// A ground or lifted feature application, e.g. `open(box_a)` or `detector`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub feature: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new(feature: impl Into<String>, args: &[&str]) -> Self {
        Atom {
            feature: feature.into(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }

    pub fn is_ground(&self) -> bool {
        !self.args.iter().any(|a| is_variable(a))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_application(f, &self.feature, &self.args)
    }
}

impl FromStr for Atom {
    type Err = ScoopError;
    fn from_str(s: &str) -> Result<Self> {
        let (feature, args) = parse_application("atom", s)?;
        Ok(Atom { feature, args })
    }
}

/// `atom = value`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub atom: Atom,
    pub value: String,
}

impl Literal {
    pub fn new(atom: Atom, value: impl Into<String>) -> Self {
        Literal {
            atom,
            value: value.into(),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.atom, self.value)
    }
}

impl FromStr for Literal {
    type Err = ScoopError;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('=') {
            Some((lhs, rhs)) => {
                let atom = parse_application("literal", lhs).map(|(feature, args)| Atom { feature, args })?;
                let value = rhs.trim();
                check_name("literal", s, value)?;
                Ok(Literal::new(atom, value))
            }
            None => {
                let (feature, args) = parse_application("literal", s)?;
                Ok(Literal::new(Atom { feature, args }, "true"))
            }
        }
    }
}

/// An action application, e.g. `place(o1)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionTerm {
    pub name: String,
    pub args: Vec<String>,
}

impl ActionTerm {
    pub fn new(name: impl Into<String>, args: &[&str]) -> Self {
        ActionTerm {
            name: name.into(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl fmt::Display for ActionTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_application(f, &self.name, &self.args)
    }
}

impl FromStr for ActionTerm {
    type Err = ScoopError;
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = parse_application("action", s)?;
        Ok(ActionTerm { name, args })
    }
}

/// What makes a rule fire: an agent/user action, or a feature condition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Trigger {
    Action(ActionTerm),
    Condition(Literal),
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::Action(a) => a.fmt(f),
            Trigger::Condition(l) => l.fmt(f),
        }
    }
}

impl FromStr for Trigger {
    type Err = ScoopError;
    fn from_str(s: &str) -> Result<Self> {
        if s.contains('=') {
            Ok(Trigger::Condition(s.parse()?))
        } else {
            Ok(Trigger::Action(s.parse()?))
        }
    }
}

/// A directed cause→effect pair between ground events.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub cause: String,
    pub effect: String,
}

impl Edge {
    pub fn new(cause: impl Into<String>, effect: impl Into<String>) -> Self {
        Edge {
            cause: cause.into(),
            effect: effect.into(),
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.cause, self.effect)
    }
}

impl FromStr for Edge {
    type Err = ScoopError;
    fn from_str(s: &str) -> Result<Self> {
        let (cause, effect) = s
            .split_once("->")
            .ok_or_else(|| ScoopError::syntax("edge", s, "expected `cause -> effect`"))?;
        // events are atoms or action terms; both share the application syntax
        let cause: Atom = cause.parse()?;
        let effect: Atom = effect.parse()?;
        Ok(Edge::new(cause.to_string(), effect.to_string()))
    }
}

macro_rules! string_serde {
    ($ty:ty, $name:literal) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }

        impl JsonSchema for $ty {
            fn schema_name() -> String {
                $name.to_string()
            }
            fn json_schema(gen: &mut SchemaGenerator) -> Schema {
                String::json_schema(gen)
            }
        }
    };
}

string_serde!(Atom, "Atom");
string_serde!(Literal, "Literal");
string_serde!(ActionTerm, "ActionTerm");
string_serde!(Trigger, "Trigger");
string_serde!(Edge, "Edge");
