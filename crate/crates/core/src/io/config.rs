//! Structured text configuration: named `[section]` headers over
//! `key = value` lines, `#` comments. Sections may repeat (phantom specs
//! list one `[ellipse]` section per ellipse). Values are kept raw and
//! parsed on access so errors can point at the offending line.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Config {
    sections: Vec<Section>,
}

#[derive(Clone, Debug)]
pub struct Section {
    pub name: String,
    pub line: usize,
    entries: Vec<Entry>,
}

#[derive(Clone, Debug)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '+')
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(header) = trimmed.strip_prefix('[') {
                let Some(name) = header.strip_suffix(']') else {
                    return Err(Error::Parse { line, msg: "unterminated section header".into() });
                };
                let name = name.trim();
                if !valid_name(name) {
                    return Err(Error::Parse { line, msg: format!("invalid section name {:?}", name) });
                }
                sections.push(Section { name: name.to_string(), line, entries: Vec::new() });
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(Error::Parse { line, msg: format!("expected `key = value`, got {:?}", trimmed) });
            };
            let key = key.trim();
            if !valid_name(key) {
                return Err(Error::Parse { line, msg: format!("invalid key {:?}", key) });
            }
            let Some(section) = sections.last_mut() else {
                return Err(Error::Parse { line, msg: "key outside of any [section]".into() });
            };
            if section.entries.iter().any(|e| e.key == key) {
                return Err(Error::Parse { line, msg: format!("duplicate key {:?} in [{}]", key, section.name) });
            }
            section.entries.push(Entry { key: key.to_string(), value: value.trim().to_string(), line });
        }
        Ok(Config { sections })
    }

    pub fn load(path: &std::path::Path) -> Result<Config> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    pub fn sections(&self) -> impl Iterator<Item = &Section> {
        self.sections.iter()
    }

    pub fn sections_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> {
        self.sections.iter().filter(move |s| s.name == name)
    }

    /// The unique section with this name, if present. Duplicates are a
    /// config error for singleton sections.
    pub fn section<'a>(&'a self, name: &str) -> Result<Option<&'a Section>> {
        let mut found = self.sections.iter().filter(|s| s.name == name);
        let first = found.next();
        if let Some(dup) = found.next() {
            return Err(Error::config(format!("section [{}] appears again at line {}", name, dup.line)));
        }
        Ok(first)
    }
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.value.as_str())
    }

    fn entry(&self, key: &str) -> Result<&Entry> {
        self.entries
            .iter()
            .find(|e| e.key == key)
            .ok_or_else(|| Error::config(format!("[{}] is missing key {:?}", self.name, key)))
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        Ok(&self.entry(key)?.value)
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let e = self.entry(key)?;
        e.value
            .parse::<f64>()
            .map_err(|_| Error::Parse { line: e.line, msg: format!("{:?} is not a number for key {}", e.value, key) })
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let e = self.entry(key)?;
        e.value
            .parse::<usize>()
            .map_err(|_| Error::Parse { line: e.line, msg: format!("{:?} is not a count for key {}", e.value, key) })
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        let e = self.entry(key)?;
        e.value
            .parse::<u64>()
            .map_err(|_| Error::Parse { line: e.line, msg: format!("{:?} is not an integer for key {}", e.value, key) })
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        let e = self.entry(key)?;
        match e.value.as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(Error::Parse { line: e.line, msg: format!("{:?} is not a boolean for key {}", other, key) }),
        }
    }

    /// Comma-separated list of numbers.
    pub fn get_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let e = self.entry(key)?;
        e.value
            .split(',')
            .map(|part| {
                part.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: e.line,
                    msg: format!("{:?} is not a number in list {}", part.trim(), key),
                })
            })
            .collect()
    }

    pub fn get_usize_list(&self, key: &str) -> Result<Vec<usize>> {
        let e = self.entry(key)?;
        e.value
            .split(',')
            .map(|part| {
                part.trim().parse::<usize>().map_err(|_| Error::Parse {
                    line: e.line,
                    msg: format!("{:?} is not a count in list {}", part.trim(), key),
                })
            })
            .collect()
    }

    pub fn get_str_list(&self, key: &str) -> Result<Vec<String>> {
        let e = self.entry(key)?;
        Ok(e.value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    }

    /// Reject keys that are not in the allowed set; catches typos early.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for e in &self.entries {
            if !allowed.contains(&e.key.as_str()) {
                return Err(Error::Parse {
                    line: e.line,
                    msg: format!("unknown key {:?} in [{}] (allowed: {})", e.key, self.name, allowed.join(", ")),
                });
            }
        }
        Ok(())
    }
}
