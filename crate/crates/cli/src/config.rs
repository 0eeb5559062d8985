//! TOML config loading with command-line overrides.
//!
//! Precedence: built-in defaults < config file < flags. A flag sets one
//! (possibly dotted, e.g. `hyper.epochs`) key of the parsed table before
//! the typed schema is applied.

use std::path::Path;

use flashcards_core::{Error, Result};
use serde::de::DeserializeOwned;
use toml::{Table, Value};

/// Key/value pairs collected from flags that were actually given.
#[derive(Debug, Clone, Default)]
pub struct Overrides(Vec<(String, Value)>);

impl Overrides {
    pub fn set(&mut self, key: &str, value: Option<impl Into<Value>>) -> &mut Self {
        if let Some(v) = value {
            self.0.push((key.to_string(), v.into()));
        }
        self
    }

    pub fn set_usize(&mut self, key: &str, value: Option<usize>) -> &mut Self {
        self.set(key, value.map(|v| v as i64))
    }

    pub fn set_u64(&mut self, key: &str, value: Option<u64>) -> &mut Self {
        // TOML integers are i64; seeds above i64::MAX wrap to their bit pattern
        self.set(key, value.map(|v| v as i64))
    }

    fn apply(&self, table: &mut Table) -> Result<()> {
        for (key, value) in &self.0 {
            let mut parts: Vec<&str> = key.split('.').collect();
            let last = parts.pop().expect("non-empty key");
            let mut cur = &mut *table;
            for p in parts {
                let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
                cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("`{p}` is not a table, cannot set `{key}`")))?;
            }
            cur.insert(last.to_string(), value.clone());
        }
        Ok(())
    }
}

/// Reads `path` (if any), applies `overrides` and deserializes `T`.
///
/// Schema violations in the file itself (unknown fields, wrong types) are
/// reported with the file's line and column; a field missing from the file
/// is only an error if no flag supplies it either.
pub fn load<T: DeserializeOwned>(path: Option<&Path>, overrides: &Overrides) -> Result<T> {
    let (text, origin) = match path {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
            p.display().to_string(),
        ),
        None => (String::new(), "<flags>".to_string()),
    };
    if path.is_some() {
        if let Err(e) = toml::from_str::<T>(&text) {
            if !e.message().starts_with("missing field") {
                return Err(Error::Config(format!("{origin}: {e}")));
            }
        }
    }
    let mut table: Table = toml::from_str(&text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
    overrides.apply(&mut table)?;
    T::deserialize(Value::Table(table)).map_err(|e| Error::Config(format!("{origin} (with flag overrides): {}", e.message())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        epochs: usize,
    }

    #[derive(Debug, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Outer {
        name: String,
        inner: Inner,
    }

    #[test]
    fn flags_override_file_and_fill_missing_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "name = \"a\"\n").unwrap();
        let mut o = Overrides::default();
        o.set_usize("inner.epochs", Some(3)).set("name", Some("b"));
        let cfg: Outer = load(Some(&p), &o).unwrap();
        assert_eq!(cfg, Outer { name: "b".into(), inner: Inner { epochs: 3 } });
    }

    #[test]
    fn unknown_field_error_names_field_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "name = \"a\"\n\n[inner]\nepochs = 2\nepohcs = 3\n").unwrap();
        let err = load::<Outer>(Some(&p), &Overrides::default()).unwrap_err().to_string();
        assert!(err.contains("epohcs"), "{err}");
        assert!(err.contains("line 5"), "{err}");
    }
}
