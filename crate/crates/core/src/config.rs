//! Content digests for configurations.
//!
//! A digest is the SHA-256 of the canonical JSON form of a value: object
//! keys sorted, no insignificant whitespace. Field order in the source file
//! therefore does not change it.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Value keeps object keys in a BTreeMap.
    let v = serde_json::to_value(value).map_err(|e| Error::Numeric(e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| Error::Numeric(e.to_string()))
}

pub fn digest<T: Serialize>(value: &T) -> Result<String> {
    let json = canonical_json(value)?;
    Ok(hex::encode(Sha256::digest(json.as_bytes())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_key_order() {
        let a: toml::Table = toml::from_str("x = 1\ny = [1.5, 2.0]\n[t]\na = \"s\"\nb = true\n").unwrap();
        let b: toml::Table = toml::from_str("[t]\nb = true\na = \"s\"\n").unwrap();
        let mut b = b;
        b.insert("y".into(), toml::Value::Array(vec![1.5.into(), 2.0.into()]));
        b.insert("x".into(), 1.into());
        assert_eq!(digest(&a).unwrap(), digest(&b).unwrap());
        assert_eq!(digest(&a).unwrap().len(), 64);
        let c: toml::Table = toml::from_str("x = 2\n").unwrap();
        assert_ne!(digest(&a).unwrap(), digest(&c).unwrap());
    }
}
