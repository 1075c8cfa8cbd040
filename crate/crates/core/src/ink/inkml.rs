use std::collections::HashMap;
use std::fmt::Write;

use roxmltree::{Document, Node, ParsingOptions};

use super::latex::ConversionError;
use super::mathml::{escape, label_for, slg_to_mathml_with_ids};
use super::{
    Edge, Expression, InkError, Point, RelationLabel, StrokeLabelGraph, SymbolId, SymbolNode,
    Trace, TraceId,
};

const INKML_NS: &str = "http://www.w3.org/2003/InkML";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InkmlError {
    #[error("malformed XML at {line}:{column}: {msg}")]
    Xml { line: u32, column: u32, msg: String },
    #[error("not an InkML document: {0}")]
    Format(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error(transparent)]
    Ink(#[from] InkError),
}

/// A leaf trace group: the traces of one symbol and its truth label.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceGroupAnnotation {
    pub label: String,
    pub trace_ids: Vec<TraceId>,
    /// `xml:id` of the MathML element this group annotates.
    pub href: Option<String>,
}

/// Result of reading an InkML file.
#[derive(Clone, Debug, PartialEq)]
pub struct InkDocument {
    pub expression: Expression,
    pub groups: Vec<TraceGroupAnnotation>,
    /// Ground truth rebuilt from the trace groups and the MathML annotation.
    pub slg: Option<StrokeLabelGraph>,
    /// Why the ground truth could not be rebuilt, when groups were present.
    pub slg_error: Option<String>,
}

fn xml_id<'a>(n: &Node<'a, '_>) -> Option<&'a str> {
    n.attributes().find(|a| a.name() == "id").map(|a| a.value())
}

fn children<'a, 'i>(n: Node<'a, 'i>, tag: &'static str) -> impl Iterator<Item = Node<'a, 'i>> {
    n.children()
        .filter(move |c| c.is_element() && c.tag_name().name() == tag)
}

fn truth_annotation(n: Node) -> Option<String> {
    children(n, "annotation")
        .find(|a| a.attribute("type") == Some("truth"))
        .map(|a| a.text().unwrap_or("").trim().to_string())
}

fn parse_points(id: &str, text: &str) -> Result<Vec<Point>, InkmlError> {
    let mut points = Vec::new();
    for sample in text.split(',') {
        let vals: Vec<&str> = sample.split_whitespace().collect();
        if vals.is_empty() {
            continue;
        }
        if vals.len() < 2 {
            return Err(InkmlError::Format(format!(
                "trace {id}: sample '{}' lacks a coordinate",
                sample.trim()
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| InkmlError::Format(format!("trace {id}: bad number '{s}'")))
        };
        points.push(Point::new(num(vals[0])?, num(vals[1])?));
    }
    Ok(points)
}

/// Parses an InkML document.
///
/// Only the first two channels of each sample are kept. When leaf trace
/// groups and a MathML `annotationXML` are both present, the ground-truth
/// SLG is rebuilt; symbol ids follow trace group document order.
pub fn parse_inkml(input: &[u8]) -> Result<InkDocument, InkmlError> {
    let text = std::str::from_utf8(input).map_err(|e| InkmlError::Xml {
        line: 1,
        column: 1,
        msg: e.to_string(),
    })?;
    let opts = ParsingOptions {
        allow_dtd: true,
        ..ParsingOptions::default()
    };
    let doc = Document::parse_with_options(text, opts).map_err(|e| {
        let pos = e.pos();
        InkmlError::Xml {
            line: pos.row,
            column: pos.col,
            msg: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "ink" {
        return Err(InkmlError::Format(format!(
            "root element is <{}>",
            root.tag_name().name()
        )));
    }

    let mut ids: HashMap<String, TraceId> = HashMap::new();
    let mut traces = Vec::new();
    for (i, t) in root
        .descendants()
        .filter(|n| n.is_element() && n.tag_name().name() == "trace")
        .enumerate()
    {
        let raw_id = xml_id(&t)
            .map(str::to_string)
            .unwrap_or_else(|| i.to_string());
        let id = raw_id.parse::<TraceId>().unwrap_or(i as TraceId);
        if ids.insert(raw_id.clone(), id).is_some() {
            return Err(InkError::DuplicateTrace(id).into());
        }
        traces.push(Trace::new(
            id,
            parse_points(&raw_id, t.text().unwrap_or(""))?,
        )?);
    }

    let latex = truth_annotation(root).map(|s| s.trim_matches('$').trim().to_string());
    let source = children(root, "annotation")
        .find(|a| a.attribute("type") == Some("UI"))
        .and_then(|a| a.text())
        .unwrap_or("")
        .trim()
        .to_string();
    let expression = Expression::new(traces, source, latex)?;

    let mut groups = Vec::new();
    for g in root
        .descendants()
        .filter(|n| n.is_element() && n.tag_name().name() == "traceGroup")
    {
        let views: Vec<Node> = children(g, "traceView").collect();
        if views.is_empty() {
            continue;
        }
        let mut trace_ids = Vec::new();
        for v in views {
            let r = v.attribute("traceDataRef").unwrap_or("");
            let id = ids.get(r).ok_or_else(|| {
                InkmlError::Integrity(format!("traceGroup references unknown trace '{r}'"))
            })?;
            trace_ids.push(*id);
        }
        let href = children(g, "annotationXML")
            .find_map(|a| a.attribute("href"))
            .map(str::to_string);
        groups.push(TraceGroupAnnotation {
            label: truth_annotation(g).unwrap_or_default(),
            trace_ids,
            href,
        });
    }

    let math = root
        .descendants()
        .find(|n| n.is_element() && n.tag_name().name() == "math");
    let (slg, slg_error) = match (groups.is_empty(), math) {
        (false, Some(m)) => match rebuild_slg(&groups, m) {
            Ok(g) => (Some(g), None),
            Err(e) => (None, Some(e)),
        },
        (false, None) => (None, Some("no MathML annotation".to_string())),
        (true, _) => (None, None),
    };
    Ok(InkDocument {
        expression,
        groups,
        slg,
        slg_error,
    })
}

struct Rebuild<'g> {
    by_href: HashMap<&'g str, usize>,
    parent: Vec<Option<(usize, RelationLabel)>>,
    token_text: HashMap<usize, String>,
}

type Span = (usize, usize);

impl Rebuild<'_> {
    fn link(&mut self, child: usize, parent: usize, rel: RelationLabel) -> Result<(), String> {
        if self.parent[child].is_some() {
            return Err(format!("symbol {child} is attached twice"));
        }
        self.parent[child] = Some((parent, rel));
        Ok(())
    }

    fn symbol(&self, n: Node) -> Result<usize, String> {
        let id = xml_id(&n).ok_or_else(|| {
            format!(
                "<{}> '{}' has no xml:id",
                n.tag_name().name(),
                n.text().unwrap_or("")
            )
        })?;
        self.by_href
            .get(id)
            .copied()
            .ok_or_else(|| format!("no trace group annotates '{id}'"))
    }

    fn args<'a, 'i>(n: Node<'a, 'i>, count: usize) -> Result<Vec<Node<'a, 'i>>, String> {
        let args: Vec<Node> = n.children().filter(|c| c.is_element()).collect();
        if args.len() != count {
            return Err(format!(
                "<{}> has {} arguments, expected {count}",
                n.tag_name().name(),
                args.len()
            ));
        }
        Ok(args)
    }

    fn sequence<'a, 'i: 'a>(
        &mut self,
        nodes: impl Iterator<Item = Node<'a, 'i>>,
    ) -> Result<Option<Span>, String> {
        let mut span: Option<Span> = None;
        for c in nodes.filter(|c| c.is_element()) {
            if let Some((h, t)) = self.walk(c)? {
                span = match span {
                    None => Some((h, t)),
                    Some((head, tail)) => {
                        self.link(h, tail, RelationLabel::Right)?;
                        Some((head, t))
                    }
                };
            }
        }
        Ok(span)
    }

    fn required(&mut self, n: Node) -> Result<Span, String> {
        self.walk(n)?
            .ok_or_else(|| format!("empty <{}> argument", n.tag_name().name()))
    }

    fn walk(&mut self, n: Node) -> Result<Option<Span>, String> {
        use RelationLabel::{Over, Sub, Sup, Under};
        let tag = n.tag_name().name();
        match tag {
            "mi" | "mn" | "mo" | "mtext" => {
                let s = self.symbol(n)?;
                self.token_text
                    .insert(s, n.text().unwrap_or("").to_string());
                Ok(Some((s, s)))
            }
            "math" | "mrow" | "mstyle" | "mpadded" | "semantics" => self.sequence(n.children()),
            "msub" | "msup" | "munder" | "mover" | "msubsup" | "munderover" => {
                let rels: &[RelationLabel] = match tag {
                    "msub" => &[Sub],
                    "msup" => &[Sup],
                    "munder" => &[Under],
                    "mover" => &[Over],
                    "msubsup" => &[Sub, Sup],
                    _ => &[Under, Over],
                };
                let args = Self::args(n, rels.len() + 1)?;
                let (head, tail) = self.required(args[0])?;
                for (a, &rel) in args[1..].iter().zip(rels) {
                    let (h, _) = self.required(*a)?;
                    self.link(h, tail, rel)?;
                }
                Ok(Some((head, tail)))
            }
            "mfrac" => {
                let bar = self.symbol(n)?;
                let args = Self::args(n, 2)?;
                let (num, _) = self.required(args[0])?;
                let (den, _) = self.required(args[1])?;
                self.link(num, bar, Over)?;
                self.link(den, bar, Under)?;
                Ok(Some((bar, bar)))
            }
            "annotation" | "annotation-xml" | "mspace" => Ok(None),
            other => Err(format!("unsupported MathML element <{other}>")),
        }
    }
}

fn rebuild_slg(groups: &[TraceGroupAnnotation], math: Node) -> Result<StrokeLabelGraph, String> {
    let mut by_href = HashMap::new();
    for (i, g) in groups.iter().enumerate() {
        let href = g
            .href
            .as_deref()
            .ok_or_else(|| format!("trace group {i} ('{}') has no MathML reference", g.label))?;
        if by_href.insert(href, i).is_some() {
            return Err(format!("two trace groups reference '{href}'"));
        }
    }
    let mut r = Rebuild {
        by_href,
        parent: vec![None; groups.len()],
        token_text: HashMap::new(),
    };
    let (root, _) = r
        .sequence(math.children())?
        .ok_or_else(|| "empty MathML annotation".to_string())?;
    let mut edges = vec![Edge::root(root as SymbolId)];
    for (i, p) in r.parent.iter().enumerate() {
        match p {
            Some((src, rel)) => edges.push(Edge::new(*src as SymbolId, i as SymbolId, *rel)),
            None if i == root => {}
            None => {
                return Err(format!(
                    "trace group {i} ('{}') is not in the MathML tree",
                    groups[i].label
                ))
            }
        }
    }
    let nodes = groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let label = match (&g.label, r.token_text.get(&i)) {
                (l, Some(text)) if l.is_empty() => label_for(text),
                (l, _) => l.clone(),
            };
            SymbolNode::new(i as SymbolId, g.trace_ids.iter().copied(), label)
        })
        .collect();
    StrokeLabelGraph::new(nodes, edges).map_err(|e| e.to_string())
}

/// Writes InkML with traces and, when `slg` is given, a LaTeX truth
/// annotation, a MathML `annotationXML` block and one trace group per symbol.
pub fn write_inkml(
    expr: &Expression,
    slg: Option<&StrokeLabelGraph>,
) -> Result<String, ConversionError> {
    let mut out = String::new();
    writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>").unwrap();
    writeln!(out, "<ink xmlns=\"{INKML_NS}\">").unwrap();
    out.push_str("  <traceFormat>\n    <channel name=\"X\" type=\"decimal\"/>\n    <channel name=\"Y\" type=\"decimal\"/>\n  </traceFormat>\n");
    let latex = match slg {
        Some(g) => Some(super::slg_to_latex(g)?),
        None => expr.latex_label().map(str::to_string),
    };
    if let Some(l) = latex {
        writeln!(
            out,
            "  <annotation type=\"truth\">${}$</annotation>",
            escape(&l)
        )
        .unwrap();
    }
    if !expr.source_id().is_empty() {
        writeln!(
            out,
            "  <annotation type=\"UI\">{}</annotation>",
            escape(expr.source_id())
        )
        .unwrap();
    }
    if let Some(g) = slg {
        writeln!(
            out,
            "  <annotationXML type=\"truth\" encoding=\"Presentation-MathML\">\n    {}\n  </annotationXML>",
            slg_to_mathml_with_ids(g)?
        )
        .unwrap();
    }
    for t in expr.traces() {
        let pts: Vec<String> = t
            .points()
            .iter()
            .map(|p| format!("{} {}", p.x, p.y))
            .collect();
        writeln!(out, "  <trace id=\"{}\">{}</trace>", t.id(), pts.join(", ")).unwrap();
    }
    if let Some(g) = slg {
        out.push_str("  <traceGroup xml:id=\"segmentation\">\n    <annotation type=\"truth\">Segmentation</annotation>\n");
        for n in g.nodes() {
            writeln!(out, "    <traceGroup xml:id=\"g{}\">", n.id).unwrap();
            writeln!(
                out,
                "      <annotation type=\"truth\">{}</annotation>",
                escape(&n.label)
            )
            .unwrap();
            for t in &n.trace_ids {
                writeln!(out, "      <traceView traceDataRef=\"{t}\"/>").unwrap();
            }
            writeln!(out, "      <annotationXML href=\"s{}\"/>", n.id).unwrap();
            out.push_str("    </traceGroup>\n");
        }
        out.push_str("  </traceGroup>\n");
    }
    out.push_str("</ink>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use RelationLabel::Sub;

    const TWO_TRACES: &str = r#"<ink xmlns="http://www.w3.org/2003/InkML">
  <trace id="0">0 0, 1 1</trace>
  <trace id="1">2 0 15, 3 1 16</trace>
</ink>"#;

    const GROUPED: &str = r#"<ink xmlns="http://www.w3.org/2003/InkML">
  <annotation type="truth">$A_{2}$</annotation>
  <annotationXML type="truth" encoding="Content-MathML">
    <math xmlns="http://www.w3.org/1998/Math/MathML">
      <msub>
        <mi xml:id="A_1">A</mi>
        <mn xml:id="2_1">2</mn>
      </msub>
    </math>
  </annotationXML>
  <trace id="0">10 10, 12 0</trace>
  <trace id="1">12 0, 14 10</trace>
  <trace id="2">15 12, 16 14</trace>
  <traceGroup xml:id="7">
    <annotation type="truth">Segmentation</annotation>
    <traceGroup xml:id="8">
      <annotation type="truth">A</annotation>
      <traceView traceDataRef="0"/>
      <traceView traceDataRef="1"/>
      <annotationXML href="A_1"/>
    </traceGroup>
    <traceGroup xml:id="9">
      <annotation type="truth">2</annotation>
      <traceView traceDataRef="2"/>
      <annotationXML href="2_1"/>
    </traceGroup>
  </traceGroup>
</ink>"#;

    #[test]
    fn plain_traces() {
        let doc = parse_inkml(TWO_TRACES.as_bytes()).unwrap();
        let t = doc.expression.traces();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].points(), &[Point::new(2.0, 0.0), Point::new(3.0, 1.0)]);
        assert!(doc.slg.is_none());
    }

    #[test]
    fn trace_groups_rebuild_the_graph() {
        let doc = parse_inkml(GROUPED.as_bytes()).unwrap();
        let slg = doc.slg.expect("ground truth");
        assert_eq!(slg.len(), 2);
        assert_eq!(slg.node(0).unwrap().trace_ids.len(), 2);
        assert_eq!(slg.incoming(1).unwrap().label, Sub);
        assert_eq!(doc.expression.latex_label(), Some("A_{2}"));
    }

    #[test]
    fn unknown_trace_reference() {
        let bad = GROUPED.replace("traceDataRef=\"2\"", "traceDataRef=\"99\"");
        assert!(matches!(
            parse_inkml(bad.as_bytes()),
            Err(InkmlError::Integrity(_))
        ));
    }

    #[test]
    fn malformed_xml_reports_position() {
        let err = parse_inkml(b"<ink>\n  <trace>0 0</ink>").unwrap_err();
        assert!(matches!(err, InkmlError::Xml { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn write_then_parse() {
        let doc = parse_inkml(GROUPED.as_bytes()).unwrap();
        let slg = doc.slg.unwrap();
        let text = write_inkml(&doc.expression, Some(&slg)).unwrap();
        let back = parse_inkml(text.as_bytes()).unwrap();
        assert_eq!(back.slg.unwrap(), slg);
        assert_eq!(back.expression.traces(), doc.expression.traces());
        assert_eq!(back.expression.latex_label(), Some("A_{2}"));
    }
}
