use super::layout::{is_big_operator, LayoutTree, FRACTION_BAR};
use super::{RelationLabel, StrokeLabelGraph, SymbolId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConversionError {
    #[error("symbol {node} has more than one '{relation}' child")]
    DuplicateRelation {
        node: SymbolId,
        relation: RelationLabel,
    },
    #[error("symbol {node} ('{label}') has both over and under children but is neither a fraction bar nor a big operator")]
    OverAndUnder { node: SymbolId, label: String },
    #[error("symbol {node} ('{label}') mixes sub/sup with under/over limits")]
    ConflictingScripts { node: SymbolId, label: String },
}

/// Appends `s`, separating a trailing control word from a following letter.
pub(crate) fn append(out: &mut String, s: &str) {
    if s.starts_with(|c: char| c.is_ascii_alphabetic()) && ends_with_control_word(out) {
        out.push(' ');
    }
    out.push_str(s);
}

fn ends_with_control_word(s: &str) -> bool {
    let trimmed = s.trim_end_matches(|c: char| c.is_ascii_alphabetic());
    trimmed.len() < s.len() && trimmed.ends_with('\\') && !trimmed.ends_with("\\\\")
}

/// Converts a stroke label graph to LaTeX.
///
/// Scripts and fraction parts are always braced, right neighbours are
/// concatenated on the baseline and limits of big operators use `_`/`^`.
pub fn slg_to_latex(slg: &StrokeLabelGraph) -> Result<String, ConversionError> {
    LayoutTree::from_slg(slg)?.to_latex()
}

impl LayoutTree {
    pub fn to_latex(&self) -> Result<String, ConversionError> {
        let mut out = String::new();
        self.emit_chain(self.root(), &mut out)?;
        Ok(out)
    }

    fn emit_chain(&self, n: usize, out: &mut String) -> Result<(), ConversionError> {
        for item in self.chain(n) {
            self.emit_item(item, out)?;
        }
        Ok(())
    }

    fn emit_group(&self, prefix: &str, n: usize, out: &mut String) -> Result<(), ConversionError> {
        out.push_str(prefix);
        out.push('{');
        self.emit_chain(n, out)?;
        out.push('}');
        Ok(())
    }

    fn emit_item(&self, n: usize, out: &mut String) -> Result<(), ConversionError> {
        use RelationLabel::{Over, Sub, Sup, Under};
        let label = self.label(n);
        let (over, under) = (self.child(n, Over), self.child(n, Under));
        let (sub, sup) = (self.child(n, Sub), self.child(n, Sup));

        if is_big_operator(label) {
            if (sub.is_some() && under.is_some()) || (sup.is_some() && over.is_some()) {
                return Err(ConversionError::ConflictingScripts {
                    node: self.id(n),
                    label: label.to_string(),
                });
            }
            append(out, label);
            if let Some(c) = under.or(sub) {
                self.emit_group("_", c, out)?;
            }
            if let Some(c) = over.or(sup) {
                self.emit_group("^", c, out)?;
            }
            return Ok(());
        }

        match (over, under) {
            (Some(o), Some(u)) if label == FRACTION_BAR => {
                append(out, "\\frac");
                self.emit_group("", o, out)?;
                self.emit_group("", u, out)?;
            }
            (Some(_), Some(_)) => {
                return Err(ConversionError::OverAndUnder {
                    node: self.id(n),
                    label: label.to_string(),
                })
            }
            (Some(o), None) => {
                append(out, "\\overset");
                self.emit_group("", o, out)?;
                out.push('{');
                out.push_str(label);
                out.push('}');
            }
            (None, Some(u)) => {
                append(out, "\\underset");
                self.emit_group("", u, out)?;
                out.push('{');
                out.push_str(label);
                out.push('}');
            }
            (None, None) => append(out, label),
        }
        if let Some(c) = sub {
            self.emit_group("_", c, out)?;
        }
        if let Some(c) = sup {
            self.emit_group("^", c, out)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Token {
    Command(String),
    Char(char),
}

impl Token {
    pub(crate) fn text(&self) -> String {
        match self {
            Token::Command(c) => c.clone(),
            Token::Char(c) => c.to_string(),
        }
    }
}

/// Splits LaTeX into control sequences and single characters, dropping whitespace.
pub(crate) fn tokenize(src: &str) -> Vec<Token> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '\\' {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_ascii_alphabetic() {
                j += 1;
            }
            if j == i + 1 && j < chars.len() {
                j += 1;
            }
            out.push(Token::Command(chars[i..j].iter().collect()));
            i = j;
        } else {
            out.push(Token::Char(c));
            i += 1;
        }
    }
    out
}

/// Canonical form used to compare LaTeX strings: whitespace removed except
/// after control words, `\lt`/`\gt` spelled `<`/`>`, and braces around a
/// single-token script dropped (`A_{2}` becomes `A_2`).
pub fn normalize_latex(src: &str) -> String {
    let tokens: Vec<Token> = tokenize(src)
        .into_iter()
        .map(|t| match t {
            Token::Command(c) if c == "\\lt" => Token::Char('<'),
            Token::Command(c) if c == "\\gt" => Token::Char('>'),
            t => t,
        })
        .collect();
    let mut out = String::new();
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        let is_script = matches!(t, Token::Char('_' | '^'));
        if is_script
            && tokens.get(i + 1) == Some(&Token::Char('{'))
            && tokens.get(i + 3) == Some(&Token::Char('}'))
            && !matches!(tokens.get(i + 2), Some(Token::Char('{' | '}')))
        {
            append(&mut out, &t.text());
            append(&mut out, &tokens[i + 2].text());
            i += 4;
            continue;
        }
        append(&mut out, &t.text());
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ink::{Edge, SymbolNode};

    fn slg(labels: &[&str], edges: Vec<Edge>) -> StrokeLabelGraph {
        let nodes = labels
            .iter()
            .enumerate()
            .map(|(i, l)| SymbolNode::new(i as u32, [i as u32], *l))
            .collect();
        StrokeLabelGraph::new(nodes, edges).unwrap()
    }

    #[test]
    fn single_symbol() {
        assert_eq!(
            slg_to_latex(&slg(&["x"], vec![Edge::root(0)])).unwrap(),
            "x"
        );
    }

    #[test]
    fn subscripted_comparison() {
        use RelationLabel::{Right, Sub};
        let g = slg(
            &["A", "2", ">", "B", "2"],
            vec![
                Edge::root(0),
                Edge::new(0, 1, Sub),
                Edge::new(0, 2, Right),
                Edge::new(2, 3, Right),
                Edge::new(3, 4, Sub),
            ],
        );
        let latex = slg_to_latex(&g).unwrap();
        assert_eq!(latex, "A_{2}>B_{2}");
        assert_eq!(normalize_latex(&latex), "A_2>B_2");
    }

    #[test]
    fn fraction_and_limits() {
        use RelationLabel::{Over, Right, Under};
        let frac = slg(
            &["-", "1", "2"],
            vec![Edge::root(0), Edge::new(0, 1, Over), Edge::new(0, 2, Under)],
        );
        assert_eq!(slg_to_latex(&frac).unwrap(), "\\frac{1}{2}");
        let sum = slg(
            &["\\sum", "i", "n", "x"],
            vec![
                Edge::root(0),
                Edge::new(0, 1, Under),
                Edge::new(0, 2, Over),
                Edge::new(0, 3, Right),
            ],
        );
        assert_eq!(slg_to_latex(&sum).unwrap(), "\\sum_{i}^{n}x");
    }

    #[test]
    fn over_under_on_plain_symbol_is_an_error() {
        use RelationLabel::{Over, Under};
        let g = slg(
            &["x", "1", "2"],
            vec![Edge::root(0), Edge::new(0, 1, Over), Edge::new(0, 2, Under)],
        );
        assert_eq!(
            slg_to_latex(&g).unwrap_err(),
            ConversionError::OverAndUnder {
                node: 0,
                label: "x".into()
            }
        );
    }

    #[test]
    fn control_words_are_separated_from_letters() {
        use RelationLabel::Right;
        let g = slg(
            &["\\alpha", "x", "\\sin", "("],
            vec![
                Edge::root(0),
                Edge::new(0, 1, Right),
                Edge::new(1, 2, Right),
                Edge::new(2, 3, Right),
            ],
        );
        assert_eq!(slg_to_latex(&g).unwrap(), "\\alpha x\\sin(");
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_latex(" x ^ { 2 } + y_{ab}"), "x^2+y_{ab}");
        assert_eq!(normalize_latex("a \\lt b"), "a<b");
        assert_eq!(normalize_latex("\\alpha  x"), "\\alpha x");
        assert_eq!(normalize_latex("\\frac{1}{2}"), "\\frac{1}{2}");
    }
}
