//! Plain-text key=value reports and `# key=value` file headers.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Round-trip float formatting: plain notation for ordinary magnitudes,
/// exponent notation otherwise. Parsing the output gives back the same bits.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Ordered list of key=value pairs; nested keys use dots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn num(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.entries.push((key.into(), fmt_f64(value)));
        self
    }

    pub fn extend(&mut self, prefix: &str, other: &Report) -> &mut Self {
        for (k, v) in &other.entries {
            self.entries.push((format!("{prefix}.{k}"), v.clone()));
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let v = self.get(key).ok_or_else(|| Error::Parse(format!("missing key {key}")))?;
        v.parse().map_err(|_| Error::Parse(format!("{key}={v} is not a number")))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let v = self.get(key).ok_or_else(|| Error::Parse(format!("missing key {key}")))?;
        v.parse().map_err(|_| Error::Parse(format!("{key}={v} is not an integer")))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        self.render("")
    }

    /// `# key=value` lines, for CSV headers.
    pub fn to_comment(&self) -> String {
        self.render("# ")
    }

    fn render(&self, prefix: &str) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{prefix}{k}={v}");
        }
        s
    }

    /// Parse `key=value` lines, skipping blanks and lines without `=`.
    /// A leading `#` is stripped first, so CSV headers parse too.
    pub fn parse(text: &str) -> Self {
        let mut r = Report::new();
        for line in text.lines() {
            let line = line.trim();
            let line = line.strip_prefix('#').map(str::trim).unwrap_or(line);
            if let Some((k, v)) = line.split_once('=') {
                // `lo=..,hi=..,M=..` style lines hold several pairs.
                if v.contains(',') && v.contains('=') {
                    for part in line.split(',') {
                        if let Some((k, v)) = part.split_once('=') {
                            r.push(k.trim(), v.trim());
                        }
                    }
                } else {
                    r.push(k.trim(), v.trim());
                }
            }
        }
        r
    }
}
