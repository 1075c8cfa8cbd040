use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The default 101-class inventory, one label per line.
pub const DEFAULT_INVENTORY: &str = include_str!("../../data/crohme2023_symbols.txt");

/// Coarse symbol categories used by the structural prior mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolCategory {
    Digit,
    Latin,
    Greek,
    BinaryOperator,
    Relation,
    Bracket,
    BigOperator,
    Function,
    Other,
}

impl SymbolCategory {
    pub const COUNT: usize = 9;

    pub const ALL: [SymbolCategory; 9] = [
        SymbolCategory::Digit,
        SymbolCategory::Latin,
        SymbolCategory::Greek,
        SymbolCategory::BinaryOperator,
        SymbolCategory::Relation,
        SymbolCategory::Bracket,
        SymbolCategory::BigOperator,
        SymbolCategory::Function,
        SymbolCategory::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Rule-based category of a LaTeX symbol label.
    pub fn of_label(label: &str) -> SymbolCategory {
        const GREEK: &[&str] = &[
            "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa",
            "lambda", "mu", "nu", "xi", "pi", "rho", "sigma", "tau", "upsilon", "phi", "chi",
            "psi", "omega",
        ];
        if let Some(cmd) = label.strip_prefix('\\') {
            return match cmd {
                "sum" | "int" | "lim" | "prod" => SymbolCategory::BigOperator,
                "sin" | "cos" | "tan" | "log" | "ln" | "exp" => SymbolCategory::Function,
                "pm" | "times" | "div" | "cdot" => SymbolCategory::BinaryOperator,
                "neq" | "leq" | "geq" | "lt" | "gt" | "in" | "rightarrow" => {
                    SymbolCategory::Relation
                }
                "{" | "}" | "langle" | "rangle" => SymbolCategory::Bracket,
                c if GREEK.contains(&c.to_ascii_lowercase().as_str()) => SymbolCategory::Greek,
                _ => SymbolCategory::Other,
            };
        }
        let mut chars = label.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_digit() => SymbolCategory::Digit,
            (Some(c), None) if c.is_ascii_alphabetic() => SymbolCategory::Latin,
            (Some('+' | '-' | '/' | '*'), None) => SymbolCategory::BinaryOperator,
            (Some('=' | '<' | '>'), None) => SymbolCategory::Relation,
            (Some('(' | ')' | '[' | ']' | '|'), None) => SymbolCategory::Bracket,
            _ => SymbolCategory::Other,
        }
    }
}

impl fmt::Display for SymbolCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum serializes");
        f.write_str(s.as_str().unwrap_or("other"))
    }
}

impl FromStr for SymbolCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown symbol category '{s}'"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InventoryError {
    #[error("reading inventory: {0}")]
    Io(#[from] std::io::Error),
    #[error("inventory line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("inventory is empty")]
    Empty,
}

/// Ordered list of symbol classes; the position of a label is its class index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(
    from = "Vec<(String, SymbolCategory)>",
    into = "Vec<(String, SymbolCategory)>"
)]
pub struct SymbolInventory {
    labels: Vec<String>,
    categories: Vec<SymbolCategory>,
    index: HashMap<String, usize>,
}

impl From<Vec<(String, SymbolCategory)>> for SymbolInventory {
    fn from(entries: Vec<(String, SymbolCategory)>) -> Self {
        let mut inv = SymbolInventory {
            labels: Vec::new(),
            categories: Vec::new(),
            index: HashMap::new(),
        };
        for (l, c) in entries {
            inv.push(l, c);
        }
        inv
    }
}

impl From<SymbolInventory> for Vec<(String, SymbolCategory)> {
    fn from(inv: SymbolInventory) -> Self {
        inv.labels.into_iter().zip(inv.categories).collect()
    }
}

impl Default for SymbolInventory {
    fn default() -> Self {
        SymbolInventory::parse(DEFAULT_INVENTORY).expect("bundled inventory parses")
    }
}

impl SymbolInventory {
    pub fn from_labels<S: AsRef<str>>(labels: impl IntoIterator<Item = S>) -> Self {
        labels
            .into_iter()
            .map(|l| {
                let l = l.as_ref().to_string();
                let c = SymbolCategory::of_label(&l);
                (l, c)
            })
            .collect::<Vec<_>>()
            .into()
    }

    pub fn parse(text: &str) -> Result<Self, InventoryError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split_whitespace();
            let label = cols.next().expect("non-empty line").to_string();
            let category = match cols.next() {
                Some(c) => c
                    .parse()
                    .map_err(|msg| InventoryError::Parse { line: i + 1, msg })?,
                None => SymbolCategory::of_label(&label),
            };
            entries.push((label, category));
        }
        if entries.is_empty() {
            return Err(InventoryError::Empty);
        }
        Ok(entries.into())
    }

    pub fn load(path: &Path) -> Result<Self, InventoryError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (l, c) in self.labels.iter().zip(&self.categories) {
            out.push_str(&format!("{l} {c}\n"));
        }
        out
    }

    fn push(&mut self, label: String, category: SymbolCategory) {
        if self.index.contains_key(&label) {
            return;
        }
        self.index.insert(label.clone(), self.labels.len());
        self.labels.push(label);
        self.categories.push(category);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn category(&self, index: usize) -> SymbolCategory {
        self.categories[index]
    }

    pub fn category_of(&self, label: &str) -> SymbolCategory {
        self.index_of(label)
            .map(|i| self.categories[i])
            .unwrap_or_else(|| SymbolCategory::of_label(label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_inventory_has_101_classes() {
        let inv = SymbolInventory::default();
        assert_eq!(inv.len(), 101);
        assert_eq!(inv.index_of("0"), Some(0));
        assert_eq!(inv.category_of("\\sum"), SymbolCategory::BigOperator);
        assert_eq!(inv.category_of("\\alpha"), SymbolCategory::Greek);
        assert_eq!(inv.category_of("\\Delta"), SymbolCategory::Greek);
        assert_eq!(inv.category_of(">"), SymbolCategory::Relation);
        assert_eq!(inv.category_of("\\{"), SymbolCategory::Bracket);
    }

    #[test]
    fn text_round_trip_keeps_indices() {
        let inv = SymbolInventory::default();
        let back = SymbolInventory::parse(&inv.to_text()).unwrap();
        assert_eq!(inv, back);
        let json = serde_json::to_string(&inv).unwrap();
        assert_eq!(serde_json::from_str::<SymbolInventory>(&json).unwrap(), inv);
    }

    #[test]
    fn category_override_column() {
        let inv = SymbolInventory::parse("x\n- other\n").unwrap();
        assert_eq!(inv.category(1), SymbolCategory::Other);
        assert!(SymbolInventory::parse("x bogus").is_err());
        assert!(matches!(
            SymbolInventory::parse("# only"),
            Err(InventoryError::Empty)
        ));
    }
}
