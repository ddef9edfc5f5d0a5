//! Flat `key = value` reports.

use std::fmt::Display;
use std::io::Write;
use std::path::Path;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatReport {
    entries: Vec<(String, String)>,
}

impl FlatReport {
    /// Every report starts with the digest of the config that produced it.
    pub fn new(digest: &str) -> Self {
        let mut r = FlatReport::default();
        r.put("config_digest", digest);
        r
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn put_vec(&mut self, key: impl Into<String>, v: &[f64]) {
        let items: Vec<String> = v.iter().map(f64::to_string).collect();
        self.put(key, format!("[{}]", items.join(", ")));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(self.render().as_bytes()).map_err(|e| CliError::io(path, e))
    }

    /// Parses the output of [`FlatReport::render`].
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut r = FlatReport::default();
        for (n, line) in text.lines().enumerate() {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| CliError::Parse(format!("report line {}: expected `key = value`", n + 1)))?;
            r.put(k, v);
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_parse_agree() {
        let mut r = FlatReport::new("abc");
        r.put("objective", 0.1 + 0.2);
        r.put_vec("x", &[1.0, -0.5]);
        let back = FlatReport::parse(&r.render()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.get("objective").unwrap().parse::<f64>().unwrap(), 0.1 + 0.2);
        assert_eq!(r.render().lines().next(), Some("config_digest = abc"));
    }
}
