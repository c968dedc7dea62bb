//! Ordered key/value report rendered as readable text or as a stable
//! machine-readable listing.

use std::fmt::Write as _;

use clap::ValueEnum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Structured,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Document {
    entries: Vec<(String, Value)>,
}

impl Document {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl Into<Value>) {
        self.entries.push((key.into(), value.into()));
    }

    pub fn entries(&self) -> &[(String, Value)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Structured => self.render_structured(),
            Format::Text => self.render_text(),
        }
    }

    /// `key = value`, floats with 17 significant digits, strings JSON-quoted.
    fn render_structured(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let v = match v {
                Value::Str(s) => serde_json::to_string(s).expect("string serializes"),
                Value::Int(i) => i.to_string(),
                Value::Float(f) => format_float(*f),
                Value::Bool(b) => b.to_string(),
            };
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    fn render_text(&self) -> String {
        let mut out = String::new();
        let mut current = None;
        for (k, v) in &self.entries {
            let (section, rest) = k.split_once('.').unwrap_or(("", k.as_str()));
            if current != Some(section) {
                if current.is_some() {
                    out.push('\n');
                }
                if !section.is_empty() {
                    let _ = writeln!(out, "{section}");
                }
                current = Some(section);
            }
            let v = match v {
                Value::Str(s) => s.clone(),
                Value::Int(i) => i.to_string(),
                Value::Float(f) => format!("{f:.4e}"),
                Value::Bool(b) => if *b { "yes" } else { "no" }.to_string(),
            };
            let _ = writeln!(out, "  {rest}: {v}");
        }
        out
    }
}

fn format_float(f: f64) -> String {
    if f.is_finite() {
        format!("{f:.16e}")
    } else {
        f.to_string()
    }
}
