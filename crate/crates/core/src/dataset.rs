//! Entailment examples stored as JSON lines:
//! `{"premise": "...", "hypothesis": "...", "gold_label": "entails"}`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{KesError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entails,
    Neutral,
    Contradicts,
}

impl Label {
    /// Labels in class-index order for a `num_classes`-way task.
    pub fn all(num_classes: usize) -> &'static [Label] {
        const ALL: [Label; 3] = [Label::Entails, Label::Neutral, Label::Contradicts];
        &ALL[..num_classes.min(3)]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::all(3).get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entails => "entails",
            Label::Neutral => "neutral",
            Label::Contradicts => "contradicts",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = KesError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entails" => Ok(Label::Entails),
            "neutral" => Ok(Label::Neutral),
            "contradicts" => Ok(Label::Contradicts),
            other => Err(KesError::Data(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub premise: String,
    pub hypothesis: String,
    #[serde(rename = "gold_label")]
    pub label: Label,
}

impl Example {
    pub fn new(premise: impl Into<String>, hypothesis: impl Into<String>, label: Label) -> Self {
        Example {
            premise: premise.into(),
            hypothesis: hypothesis.into(),
            label,
        }
    }
}

#[derive(Deserialize)]
struct RawExample {
    premise: String,
    hypothesis: String,
    gold_label: String,
}

/// Parses JSON lines; every label must belong to the `num_classes`-way task.
pub fn parse_dataset(text: &str, origin: &Path, num_classes: usize) -> Result<Vec<Example>> {
    if !(2..=3).contains(&num_classes) {
        return Err(KesError::Config(format!(
            "num_classes must be 2 or 3, got {num_classes}"
        )));
    }
    let allowed = Label::all(num_classes);
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawExample =
            serde_json::from_str(line).map_err(|e| KesError::parse(origin, lineno + 1, e.to_string()))?;
        let label: Label = raw.gold_label.parse().map_err(|_| {
            KesError::Data(format!(
                "{}:{}: example has unknown label {:?}",
                origin.display(),
                lineno + 1,
                raw.gold_label
            ))
        })?;
        if !allowed.contains(&label) {
            return Err(KesError::Data(format!(
                "{}:{}: label {label} is not valid for a {num_classes}-class task",
                origin.display(),
                lineno + 1
            )));
        }
        out.push(Example::new(raw.premise, raw.hypothesis, label));
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>, num_classes: usize) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| KesError::io(path, e))?;
    parse_dataset(&text, path, num_classes)
}

pub fn write_dataset(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for ex in examples {
        serde_json::to_writer(&mut buf, ex).map_err(|e| KesError::Internal(e.to_string()))?;
        buf.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| KesError::io(path, e))
}
