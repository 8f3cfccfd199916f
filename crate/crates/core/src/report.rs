//! Structured check outcomes shared by every estimator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Outcome of a bound or oracle comparison: a statistic against a target with tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    #[serde(with = "json_float")]
    pub statistic: f64,
    #[serde(with = "json_float")]
    pub target: f64,
    #[serde(with = "json_float")]
    pub tolerance: f64,
    pub pass: bool,
    /// Named auxiliary numbers (norms, fitted constants, ladder entries).
    #[serde(with = "json_float::map")]
    pub values: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl BoundReport {
    pub fn new(name: impl Into<String>, statistic: f64, target: f64, tolerance: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            statistic,
            target,
            tolerance,
            pass,
            values: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    /// Passes iff `|statistic - target| <= tolerance`.
    pub fn within(name: impl Into<String>, statistic: f64, target: f64, tolerance: f64) -> Self {
        let pass = (statistic - target).abs() <= tolerance;
        Self::new(name, statistic, target, tolerance, pass)
    }

    /// Passes iff `statistic <= bound`.
    pub fn at_most(name: impl Into<String>, statistic: f64, bound: f64) -> Self {
        Self::new(name, statistic, bound, 0.0, statistic <= bound)
    }

    pub fn with(mut self, key: impl Into<String>, value: f64) -> Self {
        self.values.insert(key.into(), value);
        self
    }

    pub fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    pub fn fail_with(mut self, text: impl Into<String>) -> Self {
        self.pass = false;
        self.notes.push(text.into());
        self
    }

    /// Combines sub-reports: passes iff all of them pass.
    pub fn all(name: impl Into<String>, parts: &[BoundReport]) -> Self {
        let mut out = Self::new(
            name,
            parts.iter().filter(|p| p.pass).count() as f64,
            parts.len() as f64,
            0.0,
            true,
        );
        for p in parts {
            out.pass &= p.pass;
            out.values.insert(format!("{}.statistic", p.name), p.statistic);
            out.values.insert(format!("{}.target", p.name), p.target);
            for (k, v) in &p.values {
                out.values.insert(format!("{}.{}", p.name, k), *v);
            }
            for n in &p.notes {
                out.notes.push(format!("{}: {}", p.name, n));
            }
            if !p.pass {
                out.notes.push(format!("{} failed", p.name));
            }
        }
        out
    }
}

/// Serde adapter writing non-finite floats as `"NaN"`, `"inf"` and `"-inf"`, since JSON has no
/// literal for them and `null` would not read back.
pub mod json_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Tag(String),
    }

    fn encode(v: f64) -> Repr {
        match v {
            v if v.is_finite() => Repr::Number(v),
            v if v.is_nan() => Repr::Tag("NaN".into()),
            v if v > 0.0 => Repr::Tag("inf".into()),
            _ => Repr::Tag("-inf".into()),
        }
    }

    fn decode<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Number(v) => Ok(v),
            Repr::Tag(tag) => match tag.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("'{other}' is not a number"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        encode(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        decode(Repr::deserialize(d)?)
    }

    /// Same encoding for the values of a string-keyed map.
    pub mod map {
        use std::collections::BTreeMap;

        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
            s.collect_map(m.iter().map(|(k, v)| (k, super::encode(*v))))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
            BTreeMap::<String, super::Repr>::deserialize(d)?
                .into_iter()
                .map(|(k, v)| super::decode(v).map(|v| (k, v)))
                .collect()
        }
    }
}
