use std::collections::BTreeMap;
use std::fmt;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LanguageTag;

/// One backend entry of a service configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    #[serde(default)]
    pub configuration: PathBuf,
    pub host: String,
    #[serde(deserialize_with = "port")]
    pub port: u16,
}

impl Route {
    pub fn address(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }
}

fn port<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u16, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Str(String),
    }
    let n = match Raw::deserialize(d)? {
        Raw::Int(n) => n,
        Raw::Str(s) => s
            .trim()
            .parse()
            .map_err(|_| de::Error::custom(format!("port `{s}` is not a number")))?,
    };
    match u16::try_from(n) {
        Ok(p) if p > 0 => Ok(p),
        _ => Err(de::Error::custom(format!("port {n} outside 1..65535"))),
    }
}

/// A map that refuses repeated keys.
struct Unique<K, V>(BTreeMap<K, V>);

impl<'de, K, V> Deserialize<'de> for Unique<K, V>
where
    K: Deserialize<'de> + Ord + fmt::Display,
    V: Deserialize<'de>,
{
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V2<K, V>(PhantomData<(K, V)>);
        impl<'de, K, V> Visitor<'de> for V2<K, V>
        where
            K: Deserialize<'de> + Ord + fmt::Display,
            V: Deserialize<'de>,
        {
            type Value = Unique<K, V>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object")
            }
            fn visit_map<A: MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut out = BTreeMap::new();
                while let Some((k, v)) = map.next_entry::<K, V>()? {
                    if out.contains_key(&k) {
                        return Err(de::Error::custom(format!("duplicate key `{k}`")));
                    }
                    out.insert(k, v);
                }
                Ok(Unique(out))
            }
        }
        d.deserialize_map(V2(PhantomData))
    }
}

/// Routes keyed by source, then target language.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ServiceConfig {
    pub routes: BTreeMap<LanguageTag, BTreeMap<LanguageTag, Route>>,
}

impl<'de> Deserialize<'de> for ServiceConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Unique::<LanguageTag, Unique<LanguageTag, Route>>::deserialize(d)?;
        Ok(ServiceConfig {
            routes: raw.0.into_iter().map(|(k, v)| (k, v.0)).collect(),
        })
    }
}

impl ServiceConfig {
    /// Parses JSON, tolerating trailing commas and string-valued ports.
    pub fn from_json(text: &str) -> Result<Self> {
        json5::from_str(text).map_err(|e| Error::Config(format!("service config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn pairs(&self) -> Vec<(LanguageTag, LanguageTag)> {
        self.routes
            .iter()
            .flat_map(|(s, ts)| ts.keys().map(move |t| (s.clone(), t.clone())))
            .collect()
    }

    /// Exact `(source, target)` lookup.
    pub fn route(&self, source: &LanguageTag, target: &LanguageTag) -> Result<&Route> {
        self.routes
            .get(source)
            .and_then(|ts| ts.get(target))
            .ok_or_else(|| Error::UnsupportedPair {
                source_lang: source.to_string(),
                target: target.to_string(),
                supported: self.describe_pairs(),
            })
    }

    fn describe_pairs(&self) -> String {
        let pairs = self.pairs();
        if pairs.is_empty() {
            return "none".into();
        }
        pairs
            .iter()
            .map(|(s, t)| format!("{s}-{t}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}
