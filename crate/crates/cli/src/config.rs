//! Configuration resolution: preset or file, then `--set` overrides.

use std::path::Path;

use purcellkit::params::{device_from_table, preset_text};
use purcellkit::units::{ghz_to_rad_ns, mhz_to_rad_ns, us_to_ns};
use purcellkit::{DeviceParams, Error, Result};

pub const DEFAULT_PRESET: &str = "paper-sec3b";

/// Unit tags recognised when two keys name the same quantity. Longer tags
/// come first so that `_rad_ns` is not mistaken for `_ns`.
const UNIT_TAGS: &[&str] = &["_rad_ns", "_ghz", "_mhz", "_ns", "_us"];

#[derive(Debug, Clone)]
pub struct Resolved {
    pub table: toml::Table,
    pub source: String,
}

impl Resolved {
    pub fn params(&self) -> Result<DeviceParams> {
        device_from_table(&self.table)
    }

    pub fn section(&self, name: &str) -> Result<Option<&toml::Table>> {
        match self.table.get(name) {
            None => Ok(None),
            Some(v) => v
                .as_table()
                .map(Some)
                .ok_or_else(|| Error::Parse(format!("`{name}` must be a table"))),
        }
    }
}

pub fn resolve(
    config: Option<&Path>,
    preset: Option<&str>,
    overrides: &[String],
) -> Result<Resolved> {
    let (text, source) = match (config, preset) {
        (Some(_), Some(_)) => {
            return Err(Error::Conflict(
                "give either --config or --preset, not both".into(),
            ))
        }
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::InvalidInput(format!("cannot read config `{}`: {e}", path.display()))
            })?;
            (text, path.display().to_string())
        }
        (None, name) => {
            let name = name.unwrap_or(DEFAULT_PRESET);
            (preset_text(name)?.to_string(), format!("preset:{name}"))
        }
    };
    let mut table: toml::Table = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    for item in overrides {
        let (key, value) = item.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!("override `{item}` is not of the form key=value"))
        })?;
        set_key(&mut table, key.trim(), parse_value(value.trim())?)?;
    }
    Ok(Resolved { table, source })
}

pub fn parse_value(text: &str) -> Result<toml::Value> {
    let doc: toml::Table = toml::from_str(&format!("v = {text}"))
        .or_else(|_| toml::from_str(&format!("v = {:?}", text)))
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    Ok(doc["v"].clone())
}

fn unit_stem(key: &str) -> &str {
    UNIT_TAGS
        .iter()
        .find_map(|t| key.strip_suffix(t))
        .unwrap_or(key)
}

/// Sets a possibly dotted key. Keys naming the same quantity in another unit
/// are dropped so the override wins instead of conflicting.
pub fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts
        .pop()
        .filter(|l| !l.is_empty())
        .ok_or_else(|| Error::InvalidInput(format!("empty key `{key}`")))?;
    let mut t = table;
    for p in parts {
        t = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| Error::Conflict(format!("`{p}` is not a table")))?;
    }
    let stem = unit_stem(leaf);
    t.retain(|k, v| v.is_table() || k == leaf || unit_stem(k) != stem);
    t.insert(leaf.to_string(), value);
    Ok(())
}

pub fn get_key<'a>(table: &'a toml::Table, key: &str) -> Option<&'a toml::Value> {
    let mut parts = key.split('.').peekable();
    let mut t = table;
    while let Some(p) = parts.next() {
        let v = t.get(p)?;
        if parts.peek().is_none() {
            return Some(v);
        }
        t = v.as_table()?;
    }
    None
}

pub fn number(v: &toml::Value, key: &str) -> Result<f64> {
    v.as_float()
        .or_else(|| v.as_integer().map(|i| i as f64))
        .ok_or_else(|| Error::Parse(format!("`{key}` must be a number")))
}

/// Reads `<stem>_ghz`, `<stem>_mhz` or `<stem>_rad_ns` as rad/ns.
pub fn frequency(t: &toml::Table, section: &str, stem: &str) -> Result<Option<f64>> {
    let mut found = None;
    for (tag, conv) in [
        ("ghz", ghz_to_rad_ns as fn(f64) -> f64),
        ("mhz", mhz_to_rad_ns),
        ("rad_ns", |x| x),
    ] {
        let key = format!("{stem}_{tag}");
        if let Some(v) = t.get(&key) {
            if found.is_some() {
                return Err(Error::Conflict(format!(
                    "`{section}.{stem}` given more than once"
                )));
            }
            found = Some(conv(number(v, &key)?));
        }
    }
    Ok(found)
}

/// Reads `<stem>_ns` or `<stem>_us` as ns.
pub fn time(t: &toml::Table, section: &str, stem: &str) -> Result<Option<f64>> {
    let ns = t
        .get(&format!("{stem}_ns"))
        .map(|v| number(v, stem))
        .transpose()?;
    let us = t
        .get(&format!("{stem}_us"))
        .map(|v| number(v, stem).map(us_to_ns))
        .transpose()?;
    match (ns, us) {
        (Some(_), Some(_)) => Err(Error::Conflict(format!(
            "`{section}.{stem}` given more than once"
        ))),
        (a, b) => Ok(a.or(b)),
    }
}

/// Rejects keys of a section that the caller does not understand.
pub fn check_keys(t: &toml::Table, section: &str, allowed: &[&str]) -> Result<()> {
    for k in t.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::UnknownKey(format!("{section}.{k}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_replaces_other_units() {
        let mut r = resolve(None, Some("paper-sec3b"), &["omega_q_mhz=5500".into()]).unwrap();
        assert!(!r.table.contains_key("omega_q_ghz"));
        let p = r.params().unwrap();
        assert!((p.omega_q_bare - ghz_to_rad_ns(5.5)).abs() < 1e-12);
        set_key(&mut r.table, "sweep.key", parse_value("g_mhz").unwrap()).unwrap();
        assert_eq!(
            get_key(&r.table, "sweep.key").unwrap().as_str(),
            Some("g_mhz")
        );
    }

    #[test]
    fn stems() {
        assert_eq!(unit_stem("kappa_f_inv_ns"), "kappa_f_inv");
        assert_eq!(unit_stem("omega_q_rad_ns"), "omega_q");
        assert_eq!(unit_stem("eta"), "eta");
    }

    #[test]
    fn config_and_preset_conflict() {
        let e = resolve(Some(Path::new("x.toml")), Some("paper-fig4"), &[]).unwrap_err();
        assert!(e.is_validation());
        let e = resolve(Some(Path::new("/nonexistent/x.toml")), None, &[]).unwrap_err();
        assert!(e.is_validation());
    }
}
