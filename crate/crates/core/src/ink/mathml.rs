use super::latex::ConversionError;
use super::layout::{is_big_operator, LayoutTree, FRACTION_BAR};
use super::{RelationLabel, StrokeLabelGraph};

pub(crate) const MATHML_NS: &str = "http://www.w3.org/1998/Math/MathML";

/// LaTeX command labels and their MathML character.
const UNICODE: &[(&str, &str)] = &[
    ("\\alpha", "α"),
    ("\\beta", "β"),
    ("\\gamma", "γ"),
    ("\\Delta", "Δ"),
    ("\\theta", "θ"),
    ("\\lambda", "λ"),
    ("\\mu", "μ"),
    ("\\phi", "φ"),
    ("\\pi", "π"),
    ("\\sigma", "σ"),
    ("\\pm", "±"),
    ("\\times", "×"),
    ("\\div", "÷"),
    ("\\cdot", "⋅"),
    ("\\neq", "≠"),
    ("\\leq", "≤"),
    ("\\geq", "≥"),
    ("\\exists", "∃"),
    ("\\forall", "∀"),
    ("\\in", "∈"),
    ("\\infty", "∞"),
    ("\\int", "∫"),
    ("\\sum", "∑"),
    ("\\prod", "∏"),
    ("\\ldots", "…"),
    ("\\sqrt", "√"),
    ("\\rightarrow", "→"),
    ("\\prime", "′"),
    ("\\{", "{"),
    ("\\}", "}"),
];

const FUNCTIONS: &[&str] = &["\\sin", "\\cos", "\\tan", "\\log", "\\lim", "\\ln", "\\exp"];

/// Token element and text for a symbol label.
pub(crate) fn token_for(label: &str) -> (&'static str, String) {
    if let Some((_, u)) = UNICODE.iter().find(|(l, _)| *l == label) {
        let greek = u.chars().next().is_some_and(|c| ('Α'..='ω').contains(&c));
        return (if greek { "mi" } else { "mo" }, u.to_string());
    }
    if FUNCTIONS.contains(&label) {
        return ("mi", label[1..].to_string());
    }
    let mut chars = label.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_digit() => ("mn", label.to_string()),
        (Some(c), None) if c.is_alphabetic() => ("mi", label.to_string()),
        _ => ("mo", label.to_string()),
    }
}

/// Inverse of [`token_for`] on token text.
pub(crate) fn label_for(text: &str) -> String {
    let text = text.trim();
    if let Some((l, _)) = UNICODE.iter().find(|(_, u)| *u == text) {
        return l.to_string();
    }
    if let Some(f) = FUNCTIONS.iter().find(|f| &f[1..] == text) {
        return f.to_string();
    }
    match text {
        "−" => "-".to_string(),
        "∣" => "|".to_string(),
        _ => text.to_string(),
    }
}

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

/// Presentation MathML for an SLG, without whitespace between elements.
pub fn slg_to_mathml(slg: &StrokeLabelGraph) -> Result<String, ConversionError> {
    emit(slg, false)
}

/// Like [`slg_to_mathml`] but tags each symbol's element with `xml:id="s<id>"`,
/// which InkML trace groups reference.
pub fn slg_to_mathml_with_ids(slg: &StrokeLabelGraph) -> Result<String, ConversionError> {
    emit(slg, true)
}

fn emit(slg: &StrokeLabelGraph, ids: bool) -> Result<String, ConversionError> {
    let tree = LayoutTree::from_slg(slg)?;
    let mut out = format!("<math xmlns=\"{MATHML_NS}\">");
    Emitter { tree: &tree, ids }.chain(tree.root(), &mut out)?;
    out.push_str("</math>");
    Ok(out)
}

struct Emitter<'a> {
    tree: &'a LayoutTree,
    ids: bool,
}

impl Emitter<'_> {
    fn open(&self, tag: &str, n: usize, out: &mut String) {
        if self.ids {
            out.push_str(&format!("<{tag} xml:id=\"s{}\">", self.tree.id(n)));
        } else {
            out.push_str(&format!("<{tag}>"));
        }
    }

    fn chain(&self, n: usize, out: &mut String) -> Result<(), ConversionError> {
        let items = self.tree.chain(n);
        if items.len() > 1 {
            out.push_str("<mrow>");
        }
        for &i in &items {
            self.item(i, out)?;
        }
        if items.len() > 1 {
            out.push_str("</mrow>");
        }
        Ok(())
    }

    fn item(&self, n: usize, out: &mut String) -> Result<(), ConversionError> {
        use RelationLabel::{Over, Sub, Sup, Under};
        let t = self.tree;
        let label = t.label(n);
        let (over, under) = (t.child(n, Over), t.child(n, Under));
        let (sub, sup) = (t.child(n, Sub), t.child(n, Sup));
        let big = is_big_operator(label);
        if big && ((sub.is_some() && under.is_some()) || (sup.is_some() && over.is_some())) {
            return Err(ConversionError::ConflictingScripts {
                node: t.id(n),
                label: label.to_string(),
            });
        }
        let fraction = label == FRACTION_BAR && over.is_some() && under.is_some();
        if over.is_some() && under.is_some() && !big && !fraction {
            return Err(ConversionError::OverAndUnder {
                node: t.id(n),
                label: label.to_string(),
            });
        }

        let script = match (sub, sup) {
            (Some(_), Some(_)) => Some("msubsup"),
            (Some(_), None) => Some("msub"),
            (None, Some(_)) => Some("msup"),
            (None, None) => None,
        };
        if let Some(tag) = script {
            out.push_str(&format!("<{tag}>"));
        }
        if fraction {
            self.open("mfrac", n, out);
            self.chain(over.unwrap(), out)?;
            self.chain(under.unwrap(), out)?;
            out.push_str("</mfrac>");
        } else {
            let limits = match (under, over) {
                (Some(_), Some(_)) => Some("munderover"),
                (Some(_), None) => Some("munder"),
                (None, Some(_)) => Some("mover"),
                (None, None) => None,
            };
            if let Some(tag) = limits {
                out.push_str(&format!("<{tag}>"));
            }
            let (tag, text) = token_for(label);
            self.open(tag, n, out);
            out.push_str(&escape(&text));
            out.push_str(&format!("</{tag}>"));
            if let Some(tag) = limits {
                for c in [under, over].into_iter().flatten() {
                    self.chain(c, out)?;
                }
                out.push_str(&format!("</{tag}>"));
            }
        }
        if let Some(tag) = script {
            for c in [sub, sup].into_iter().flatten() {
                self.chain(c, out)?;
            }
            out.push_str(&format!("</{tag}>"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ink::{Edge, SymbolNode};
    use RelationLabel::{Over, Right, Sub, Sup, Under};

    fn slg(labels: &[&str], edges: Vec<Edge>) -> StrokeLabelGraph {
        let nodes = labels
            .iter()
            .enumerate()
            .map(|(i, l)| SymbolNode::new(i as u32, [i as u32], *l))
            .collect();
        StrokeLabelGraph::new(nodes, edges).unwrap()
    }

    fn body(s: &str) -> &str {
        s.strip_prefix(&format!("<math xmlns=\"{MATHML_NS}\">"))
            .and_then(|s| s.strip_suffix("</math>"))
            .unwrap()
    }

    #[test]
    fn single_identifier() {
        let g = slg(&["x"], vec![Edge::root(0)]);
        assert_eq!(body(&slg_to_mathml(&g).unwrap()), "<mi>x</mi>");
        assert_eq!(
            body(&slg_to_mathml_with_ids(&g).unwrap()),
            "<mi xml:id=\"s0\">x</mi>"
        );
    }

    #[test]
    fn subscripted_comparison() {
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
        assert_eq!(
            body(&slg_to_mathml(&g).unwrap()),
            "<mrow><msub><mi>A</mi><mn>2</mn></msub><mo>&gt;</mo>\
             <msub><mi>B</mi><mn>2</mn></msub></mrow>"
        );
    }

    #[test]
    fn fractions_and_limits() {
        let frac = slg(
            &["-", "1", "2"],
            vec![Edge::root(0), Edge::new(0, 1, Over), Edge::new(0, 2, Under)],
        );
        assert_eq!(
            body(&slg_to_mathml(&frac).unwrap()),
            "<mfrac><mn>1</mn><mn>2</mn></mfrac>"
        );
        let sum = slg(
            &["\\sum", "i", "n", "x", "2"],
            vec![
                Edge::root(0),
                Edge::new(0, 1, Under),
                Edge::new(0, 2, Over),
                Edge::new(0, 3, Right),
                Edge::new(3, 4, Sup),
            ],
        );
        assert_eq!(
            body(&slg_to_mathml(&sum).unwrap()),
            "<mrow><munderover><mo>∑</mo><mi>i</mi><mi>n</mi></munderover>\
             <msup><mi>x</mi><mn>2</mn></msup></mrow>"
        );
    }

    #[test]
    fn token_mapping_round_trips() {
        for label in [
            "x", "7", "+", "\\alpha", "\\sin", "\\sum", "\\leq", "(", "\\{",
        ] {
            assert_eq!(label_for(&token_for(label).1), label);
        }
        assert_eq!(token_for("\\alpha").0, "mi");
        assert_eq!(token_for("\\times").0, "mo");
    }
}
