use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Expression, RelationLabel, SymbolId, TraceId};

/// A symbol: a group of traces carrying a class label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolNode {
    pub id: SymbolId,
    pub trace_ids: BTreeSet<TraceId>,
    pub label: String,
    pub score: f64,
}

impl SymbolNode {
    pub fn new(
        id: SymbolId,
        trace_ids: impl IntoIterator<Item = TraceId>,
        label: impl Into<String>,
    ) -> Self {
        SymbolNode {
            id,
            trace_ids: trace_ids.into_iter().collect(),
            label: label.into(),
            score: 1.0,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }
}

/// Edge origin. `Root` is the virtual node that owns the `line_start` edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeSource {
    Root,
    Node(SymbolId),
}

impl fmt::Display for EdgeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeSource::Root => f.write_str("ROOT"),
            EdgeSource::Node(id) => write!(f, "{id}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: EdgeSource,
    pub dst: SymbolId,
    pub label: RelationLabel,
}

impl Edge {
    pub fn root(dst: SymbolId) -> Self {
        Edge {
            src: EdgeSource::Root,
            dst,
            label: RelationLabel::LineStart,
        }
    }

    pub fn new(src: SymbolId, dst: SymbolId, label: RelationLabel) -> Self {
        Edge {
            src: EdgeSource::Node(src),
            dst,
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SlgError {
    #[error("graph has no symbols")]
    Empty,
    #[error("duplicate symbol id {0}")]
    DuplicateNode(SymbolId),
    #[error("symbol {0} owns no traces")]
    EmptyTraceSet(SymbolId),
    #[error("trace {trace} is shared by symbols {first} and {second}")]
    SharedTrace {
        trace: TraceId,
        first: SymbolId,
        second: SymbolId,
    },
    #[error("edge references unknown symbol {0}")]
    UnknownNode(SymbolId),
    #[error("edge {src} -> {dst} carries the 'none' sentinel")]
    NoneLabel { src: EdgeSource, dst: SymbolId },
    #[error("line_start edge must leave ROOT (found {src} -> {dst})")]
    LineStartNotFromRoot { src: EdgeSource, dst: SymbolId },
    #[error("ROOT edge to {dst} is labelled {label}, expected line_start")]
    RootEdgeNotLineStart { dst: SymbolId, label: RelationLabel },
    #[error("no line_start edge")]
    MissingLineStart,
    #[error("{0} line_start edges, expected exactly one")]
    MultipleLineStart(usize),
    #[error("symbol {node} has {count} incoming edges, expected exactly one")]
    InDegree { node: SymbolId, count: usize },
    #[error("symbols unreachable from ROOT (cycle): {0:?}")]
    Cycle(Vec<SymbolId>),
    #[error("trace {0} is not part of the expression")]
    ForeignTrace(TraceId),
}

/// Rooted tree of symbols with spatial-relation edges.
///
/// Construction validates the tree invariants; instances are immutable and
/// kept in canonical order (nodes by id, edges with the ROOT edge first and
/// then by `(src, dst)`), so derived equality is structural.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSlg", into = "RawSlg")]
pub struct StrokeLabelGraph {
    nodes: Vec<SymbolNode>,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct RawSlg {
    nodes: Vec<SymbolNode>,
    edges: Vec<Edge>,
}

impl TryFrom<RawSlg> for StrokeLabelGraph {
    type Error = SlgError;

    fn try_from(raw: RawSlg) -> Result<Self, Self::Error> {
        StrokeLabelGraph::new(raw.nodes, raw.edges)
    }
}

impl From<StrokeLabelGraph> for RawSlg {
    fn from(g: StrokeLabelGraph) -> Self {
        RawSlg {
            nodes: g.nodes,
            edges: g.edges,
        }
    }
}

impl StrokeLabelGraph {
    pub fn new(mut nodes: Vec<SymbolNode>, mut edges: Vec<Edge>) -> Result<Self, SlgError> {
        validate(&nodes, &edges)?;
        nodes.sort_by_key(|n| n.id);
        edges.sort();
        Ok(StrokeLabelGraph { nodes, edges })
    }

    pub fn nodes(&self) -> &[SymbolNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: SymbolId) -> Option<&SymbolNode> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The symbol reached by the `line_start` edge.
    pub fn root(&self) -> SymbolId {
        self.edges
            .iter()
            .find(|e| e.src == EdgeSource::Root)
            .map(|e| e.dst)
            .expect("validated graph has a root edge")
    }

    pub fn incoming(&self, id: SymbolId) -> Option<&Edge> {
        self.edges.iter().find(|e| e.dst == id)
    }

    pub fn children(&self, id: SymbolId) -> impl Iterator<Item = &Edge> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.src == EdgeSource::Node(id))
    }

    /// Equality ignoring symbol scores.
    pub fn same_structure(&self, other: &StrokeLabelGraph) -> bool {
        self.edges == other.edges
            && self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| a.id == b.id && a.trace_ids == b.trace_ids && a.label == b.label)
    }

    pub fn trace_ids(&self) -> BTreeSet<TraceId> {
        self.nodes
            .iter()
            .flat_map(|n| n.trace_ids.iter().copied())
            .collect()
    }

    /// Checks that every referenced trace exists in `expr`.
    pub fn check_traces(&self, expr: &Expression) -> Result<(), SlgError> {
        for t in self.trace_ids() {
            if expr.trace(t).is_none() {
                return Err(SlgError::ForeignTrace(t));
            }
        }
        Ok(())
    }

    /// Returns a copy with relabelled symbols; structure is unchanged.
    pub fn with_labels(&self, labels: &BTreeMap<SymbolId, (String, f64)>) -> StrokeLabelGraph {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match labels.get(&n.id) {
                Some((label, score)) => SymbolNode {
                    label: label.clone(),
                    score: *score,
                    ..n.clone()
                },
                None => n.clone(),
            })
            .collect();
        StrokeLabelGraph {
            nodes,
            edges: self.edges.clone(),
        }
    }
}

/// Checks the tree invariants on raw parts: one `line_start` edge from ROOT,
/// in-degree exactly one everywhere, no `none` labels, disjoint non-empty
/// trace groups and every node reachable from ROOT.
pub fn validate(nodes: &[SymbolNode], edges: &[Edge]) -> Result<(), SlgError> {
    if nodes.is_empty() {
        return Err(SlgError::Empty);
    }
    let mut owner: BTreeMap<TraceId, SymbolId> = BTreeMap::new();
    let mut ids = BTreeSet::new();
    for n in nodes {
        if !ids.insert(n.id) {
            return Err(SlgError::DuplicateNode(n.id));
        }
        if n.trace_ids.is_empty() {
            return Err(SlgError::EmptyTraceSet(n.id));
        }
        for &t in &n.trace_ids {
            if let Some(&first) = owner.get(&t) {
                return Err(SlgError::SharedTrace {
                    trace: t,
                    first,
                    second: n.id,
                });
            }
            owner.insert(t, n.id);
        }
    }

    let mut indegree: BTreeMap<SymbolId, usize> = ids.iter().map(|&i| (i, 0)).collect();
    let mut roots = 0;
    for e in edges {
        if e.label == RelationLabel::None {
            return Err(SlgError::NoneLabel {
                src: e.src,
                dst: e.dst,
            });
        }
        match e.src {
            EdgeSource::Root => {
                if e.label != RelationLabel::LineStart {
                    return Err(SlgError::RootEdgeNotLineStart {
                        dst: e.dst,
                        label: e.label,
                    });
                }
                roots += 1;
            }
            EdgeSource::Node(s) => {
                if !ids.contains(&s) {
                    return Err(SlgError::UnknownNode(s));
                }
                if e.label == RelationLabel::LineStart {
                    return Err(SlgError::LineStartNotFromRoot {
                        src: e.src,
                        dst: e.dst,
                    });
                }
            }
        }
        match indegree.get_mut(&e.dst) {
            Some(d) => *d += 1,
            None => return Err(SlgError::UnknownNode(e.dst)),
        }
    }
    match roots {
        0 => return Err(SlgError::MissingLineStart),
        1 => {}
        n => return Err(SlgError::MultipleLineStart(n)),
    }
    if let Some((&node, &count)) = indegree.iter().find(|(_, &d)| d != 1) {
        return Err(SlgError::InDegree { node, count });
    }

    // In-degree one plus a single root: acyclic iff everything is reachable.
    let mut reached = BTreeSet::new();
    let mut stack: Vec<SymbolId> = edges
        .iter()
        .filter(|e| e.src == EdgeSource::Root)
        .map(|e| e.dst)
        .collect();
    while let Some(n) = stack.pop() {
        if reached.insert(n) {
            stack.extend(
                edges
                    .iter()
                    .filter(|e| e.src == EdgeSource::Node(n))
                    .map(|e| e.dst),
            );
        }
    }
    if reached.len() != ids.len() {
        return Err(SlgError::Cycle(ids.difference(&reached).copied().collect()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: SymbolId, traces: &[TraceId], label: &str) -> SymbolNode {
        SymbolNode::new(id, traces.iter().copied(), label)
    }

    #[test]
    fn single_node_graph_is_valid() {
        let g = StrokeLabelGraph::new(vec![node(0, &[0], "x")], vec![Edge::root(0)]).unwrap();
        assert_eq!(g.root(), 0);
    }

    #[test]
    fn rejects_missing_and_double_roots() {
        let nodes = vec![node(0, &[0], "x"), node(1, &[1], "y")];
        assert_eq!(
            StrokeLabelGraph::new(nodes.clone(), vec![Edge::new(0, 1, RelationLabel::Right)])
                .unwrap_err(),
            SlgError::MissingLineStart
        );
        assert_eq!(
            StrokeLabelGraph::new(nodes, vec![Edge::root(0), Edge::root(1)]).unwrap_err(),
            SlgError::MultipleLineStart(2)
        );
    }

    #[test]
    fn rejects_cycles_and_double_parents() {
        let nodes = vec![node(0, &[0], "a"), node(1, &[1], "b"), node(2, &[2], "c")];
        let cyc = vec![
            Edge::root(0),
            Edge::new(1, 2, RelationLabel::Right),
            Edge::new(2, 1, RelationLabel::Sup),
        ];
        assert!(matches!(
            StrokeLabelGraph::new(nodes.clone(), cyc),
            Err(SlgError::Cycle(_))
        ));
        let two = vec![
            Edge::root(0),
            Edge::new(0, 1, RelationLabel::Right),
            Edge::new(0, 2, RelationLabel::Right),
            Edge::new(1, 2, RelationLabel::Sub),
        ];
        assert_eq!(
            StrokeLabelGraph::new(nodes, two).unwrap_err(),
            SlgError::InDegree { node: 2, count: 2 }
        );
    }

    #[test]
    fn rejects_shared_traces_and_none_edges() {
        let err = StrokeLabelGraph::new(
            vec![node(0, &[0, 1], "a"), node(1, &[1], "b")],
            vec![Edge::root(0), Edge::new(0, 1, RelationLabel::Right)],
        )
        .unwrap_err();
        assert!(matches!(err, SlgError::SharedTrace { trace: 1, .. }));
        let err = StrokeLabelGraph::new(
            vec![node(0, &[0], "a"), node(1, &[1], "b")],
            vec![Edge::root(0), Edge::new(0, 1, RelationLabel::None)],
        )
        .unwrap_err();
        assert!(matches!(err, SlgError::NoneLabel { .. }));
    }

    #[test]
    fn serde_round_trip_validates() {
        let g = StrokeLabelGraph::new(
            vec![node(1, &[1], "2"), node(0, &[0], "x")],
            vec![Edge::new(0, 1, RelationLabel::Sup), Edge::root(0)],
        )
        .unwrap();
        let json = serde_json::to_string(&g).unwrap();
        let back: StrokeLabelGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(g, back);
        let broken = json.replace("\"Root\"", "{\"Node\":1}");
        assert!(serde_json::from_str::<StrokeLabelGraph>(&broken).is_err());
    }
}
