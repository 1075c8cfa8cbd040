use std::collections::BTreeSet;
use std::fmt::Write;

use super::{Edge, EdgeSource, RelationLabel, SlgError, StrokeLabelGraph, SymbolId, SymbolNode};

const COMMA: &str = "COMMA";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LgError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid graph: {0}")]
    Structure(#[from] SlgError),
}

/// Serializes an SLG as label-graph text.
///
/// One `O` line per symbol sorted by id, then one `R` line per non-root
/// edge sorted by `(src, dst)`. The ROOT edge is implicit: the only symbol
/// without an `R` line pointing at it is the `line_start` target.
pub fn write_lg(slg: &StrokeLabelGraph) -> String {
    let mut out = String::new();
    for n in slg.nodes() {
        let label = if n.label == "," {
            COMMA
        } else {
            n.label.as_str()
        };
        let traces: Vec<String> = n.trace_ids.iter().map(|t| t.to_string()).collect();
        writeln!(out, "O, {}, {}, 1.0, {}", n.id, label, traces.join(", ")).unwrap();
    }
    for e in slg.edges() {
        if let EdgeSource::Node(src) = e.src {
            writeln!(out, "R, {}, {}, {}, 1.0", src, e.dst, e.label).unwrap();
        }
    }
    out
}

fn syntax(line: usize, msg: impl Into<String>) -> LgError {
    LgError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T, LgError> {
    field
        .parse()
        .map_err(|_| syntax(line, format!("bad {what} '{field}'")))
}

/// Parses label-graph text. Blank lines and `#` comments are ignored.
pub fn parse_lg(text: &str) -> Result<StrokeLabelGraph, LgError> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        match fields[0] {
            "O" => {
                if fields.len() < 5 {
                    return Err(syntax(
                        line,
                        "object line needs id, label, weight and traces",
                    ));
                }
                let id: SymbolId = parse_num(line, fields[1], "symbol id")?;
                let label = if fields[2] == COMMA { "," } else { fields[2] };
                if label.is_empty() {
                    return Err(syntax(line, "empty label"));
                }
                parse_num::<f64>(line, fields[3], "weight")?;
                let traces = fields[4..]
                    .iter()
                    .map(|f| parse_num(line, f, "trace id"))
                    .collect::<Result<BTreeSet<_>, _>>()?;
                nodes.push(SymbolNode::new(id, traces, label));
            }
            "R" => {
                if fields.len() != 5 {
                    return Err(syntax(
                        line,
                        "relation line needs src, dst, label and weight",
                    ));
                }
                let src = parse_num(line, fields[1], "source id")?;
                let dst = parse_num(line, fields[2], "target id")?;
                let label: RelationLabel =
                    fields[3].parse().map_err(|m: String| syntax(line, m))?;
                parse_num::<f64>(line, fields[4], "weight")?;
                edges.push(Edge::new(src, dst, label));
            }
            other => return Err(syntax(line, format!("unknown record type '{other}'"))),
        }
    }
    let targets: BTreeSet<SymbolId> = edges.iter().map(|e| e.dst).collect();
    edges.extend(
        nodes
            .iter()
            .filter(|n| !targets.contains(&n.id))
            .map(|n| Edge::root(n.id)),
    );
    Ok(StrokeLabelGraph::new(nodes, edges)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use RelationLabel::{Over, Right, Sub, Under};

    fn subscripted() -> StrokeLabelGraph {
        let labels = ["A", "2", ">", "B", "2"];
        let nodes = labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let traces = if i == 0 {
                    vec![0, 1]
                } else {
                    vec![i as u32 + 1]
                };
                SymbolNode::new(i as u32, traces, *l)
            })
            .collect();
        StrokeLabelGraph::new(
            nodes,
            vec![
                Edge::root(0),
                Edge::new(0, 1, Sub),
                Edge::new(0, 2, Right),
                Edge::new(2, 3, Right),
                Edge::new(3, 4, Sub),
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_node() {
        let g =
            StrokeLabelGraph::new(vec![SymbolNode::new(0, [0], "x")], vec![Edge::root(0)]).unwrap();
        let text = write_lg(&g);
        assert_eq!(text, "O, 0, x, 1.0, 0\n");
        assert_eq!(parse_lg(&text).unwrap(), g);
    }

    #[test]
    fn five_symbol_graph() {
        let g = subscripted();
        let text = write_lg(&g);
        assert_eq!(text.lines().filter(|l| l.starts_with("O,")).count(), 5);
        assert_eq!(text.lines().filter(|l| l.starts_with("R,")).count(), 4);
        assert!(text.starts_with("O, 0, A, 1.0, 0, 1\n"));
        let back = parse_lg(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(write_lg(&back), text);
    }

    #[test]
    fn comma_label_is_escaped() {
        let g =
            StrokeLabelGraph::new(vec![SymbolNode::new(0, [4], ",")], vec![Edge::root(0)]).unwrap();
        assert_eq!(write_lg(&g), "O, 0, COMMA, 1.0, 4\n");
        assert_eq!(parse_lg(&write_lg(&g)).unwrap(), g);
    }

    #[test]
    fn structure_errors() {
        let double = "O, 0, a, 1.0, 0\nO, 1, b, 1.0, 1\nO, 2, c, 1.0, 2\n\
                      R, 0, 2, right, 1.0\nR, 1, 2, sub, 1.0\nR, 0, 1, right, 1.0\n";
        assert!(matches!(
            parse_lg(double),
            Err(LgError::Structure(SlgError::InDegree { node: 2, count: 2 }))
        ));
        let cycle = "O, 0, a, 1.0, 0\nO, 1, b, 1.0, 1\nR, 0, 1, right, 1.0\nR, 1, 0, sub, 1.0\n";
        assert!(matches!(
            parse_lg(cycle),
            Err(LgError::Structure(SlgError::MissingLineStart))
        ));
        assert!(matches!(
            parse_lg("O, 0, a, 1.0, 0\nO, 1, b, 1.0, 1\n"),
            Err(LgError::Structure(SlgError::MultipleLineStart(2)))
        ));
        assert!(matches!(
            parse_lg("X, 1"),
            Err(LgError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_lg("O, 0, a, 1.0, 0\nR, 0, 0, Bogus, 1.0"),
            Err(LgError::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn accepts_crohme_relation_names() {
        let text = "O, 0, -, 1.0, 0\nO, 1, 1, 1.0, 1\nO, 2, 2, 1.0, 2\n\
                    R, 0, 1, Above, 1.0\nR, 0, 2, Below, 1.0\n";
        let g = parse_lg(text).unwrap();
        assert_eq!(
            g.children(0).map(|e| e.label).collect::<Vec<_>>(),
            vec![Over, Under]
        );
    }
}
