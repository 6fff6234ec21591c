//! Config loading with JSON-pointer diagnostics, plus serde helpers for
//! exponents that may be infinite.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

/// Parses `text` as `T`, reporting the JSON pointer of the first
/// offending field on failure.
pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        Error::Config {
            pointer,
            message: e.into_inner().to_string(),
        }
    })
}

/// Parses a document holding either one `T` or an array of them.
pub fn parse_one_or_many<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config {
        pointer: "/".into(),
        message: e.to_string(),
    })?;
    match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                from_value(v).map_err(|e| match e {
                    Error::Config { pointer, message } => Error::Config {
                        pointer: format!("/{i}{}", pointer.trim_end_matches('/')),
                        message,
                    },
                    other => other,
                })
            })
            .collect(),
        v => Ok(vec![from_value(v)?]),
    }
}

fn from_value<T: DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| Error::Config {
        pointer: pointer_of(e.path()),
        message: e.into_inner().to_string(),
    })
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse(&text)
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Lebesgue exponent: a number, or `"inf"` for the sup norm.
pub mod exponent {
    use serde::{de, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    fn convert<E: de::Error>(raw: Raw) -> Result<f64, E> {
        match raw {
            Raw::Num(v) => Ok(v),
            Raw::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
            Raw::Text(s) => Err(E::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        convert(Raw::deserialize(d)?)
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                if x.is_infinite() {
                    seq.serialize_element("inf")?;
                } else {
                    seq.serialize_element(x)?;
                }
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Raw>::deserialize(d)?.into_iter().map(convert).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        #[serde(with = "exponent")]
        p: f64,
    }

    #[derive(Debug, Deserialize)]
    struct Outer {
        rows: Vec<Inner>,
        #[serde(with = "exponent::vec", default)]
        ps: Vec<f64>,
    }

    #[test]
    fn pointer_to_bad_field() {
        let err = parse::<Outer>(r#"{"rows": [{"p": 2}, {"p": "two"}]}"#).unwrap_err();
        match err {
            Error::Config { pointer, .. } => assert_eq!(pointer, "/rows/1/p"),
            e => panic!("{e}"),
        }
        let err = parse::<Outer>(r#"{"rows": [{"q": 2}]}"#).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn infinite_exponents() {
        let o: Outer = parse(r#"{"rows": [{"p": "inf"}], "ps": [2, "inf"]}"#).unwrap();
        assert!(o.rows[0].p.is_infinite());
        assert_eq!(o.ps[0], 2.0);
        assert!(o.ps[1].is_infinite());
    }
}
