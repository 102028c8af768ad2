//! Line-oriented `section:` / `  key: value` documents (a YAML subset).

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Document {
    pub sections: Vec<Section>,
}

fn strip_comment(line: &str) -> &str {
    let mut quote = None;
    for (i, c) in line.char_indices() {
        match (quote, c) {
            (None, '"' | '\'') => quote = Some(c),
            (Some(q), c) if c == q => quote = None,
            (None, '#') if i == 0 || line[..i].ends_with([' ', '\t']) => return &line[..i],
            _ => {}
        }
    }
    line
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

fn unquote(value: &str, line: usize) -> Result<String> {
    let v = value.trim();
    for q in ['"', '\''] {
        if let Some(rest) = v.strip_prefix(q) {
            return rest
                .strip_suffix(q)
                .map(str::to_owned)
                .ok_or_else(|| Error::Config {
                    line,
                    message: format!("unterminated quote in `{v}`"),
                });
        }
    }
    Ok(v.to_owned())
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = Document::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = strip_comment(raw).trim_end();
            if content.trim().is_empty() || content == "---" {
                continue;
            }
            if content.starts_with('\t') {
                return Err(Error::Config {
                    line,
                    message: "tabs are not allowed for indentation".into(),
                });
            }
            let indented = content.starts_with(' ');
            let (key, value) = content
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::Config {
                    line,
                    message: format!("expected `key: value`, found `{}`", content.trim()),
                })?;
            let key = key.trim();
            if !is_identifier(key) {
                return Err(Error::Config {
                    line,
                    message: format!("invalid key `{key}`"),
                });
            }
            if !indented {
                if !value.trim().is_empty() {
                    return Err(Error::Config {
                        line,
                        message: format!("top-level `{key}` must be a section header"),
                    });
                }
                if doc.section(key).is_some() {
                    return Err(Error::Config {
                        line,
                        message: format!("duplicate section `{key}`"),
                    });
                }
                doc.sections.push(Section {
                    name: key.to_owned(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let section = doc.sections.last_mut().ok_or_else(|| Error::Config {
                line,
                message: format!("key `{key}` appears before any section header"),
            })?;
            if section.entries.iter().any(|e| e.key == key) {
                return Err(Error::ConfigKey {
                    key: format!("{}.{key}", section.name),
                    message: format!("duplicate key on line {line}"),
                });
            }
            section.entries.push(Entry {
                key: key.to_owned(),
                value: unquote(value, line)?,
                line,
            });
        }
        Ok(doc)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn push(&mut self, name: &str, entries: &[(&str, String)]) {
        self.sections.push(Section {
            name: name.to_owned(),
            line: 0,
            entries: entries
                .iter()
                .map(|(k, v)| Entry {
                    key: (*k).to_owned(),
                    value: v.clone(),
                    line: 0,
                })
                .collect(),
        });
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "{}:", s.name);
            for e in &s.entries {
                let needs_quotes = e.value.is_empty()
                    || e.value.contains(" #")
                    || e.value.starts_with(['"', '\'', '#', ' '])
                    || e.value.ends_with(' ');
                if needs_quotes {
                    let _ = writeln!(out, "  {}: \"{}\"", e.key, e.value);
                } else {
                    let _ = writeln!(out, "  {}: {}", e.key, e.value);
                }
            }
        }
        out
    }
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn key_path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    /// Parses `key` with `FromStr`, reporting failures with the key path.
    pub fn parse_value<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|e| {
                e.value.parse::<T>().map_err(|err| Error::ConfigKey {
                    key: self.key_path(key),
                    message: format!("cannot parse `{}` on line {}: {err}", e.value, e.line),
                })
            })
            .transpose()
    }

    pub fn require<T>(&self, key: &str) -> Result<T>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        self.parse_value(key)?.ok_or_else(|| Error::ConfigKey {
            key: self.key_path(key),
            message: "required key is missing".into(),
        })
    }

    /// Fails on the first key not in `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self
            .entries
            .iter()
            .find(|e| !allowed.contains(&e.key.as_str()))
        {
            Some(e) => Err(Error::ConfigKey {
                key: self.key_path(&e.key),
                message: format!("unknown key on line {}", e.line),
            }),
            None => Ok(()),
        }
    }
}
