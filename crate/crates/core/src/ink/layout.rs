use super::latex::ConversionError;
use super::{EdgeSource, RelationLabel, StrokeLabelGraph, SymbolId};

/// Label used for fraction bars (CROHME convention: the minus glyph).
pub(crate) const FRACTION_BAR: &str = "-";

/// Operators whose over/under children are typeset as limits.
pub(crate) const BIG_OPERATORS: &[&str] = &["\\sum", "\\int", "\\lim", "\\prod"];

pub(crate) fn is_big_operator(label: &str) -> bool {
    BIG_OPERATORS.contains(&label)
}

/// Symbol layout tree: at most one child per relation per node.
///
/// This is the common intermediate form between stroke label graphs,
/// parsed LaTeX and the LaTeX/MathML emitters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutTree {
    labels: Vec<String>,
    ids: Vec<SymbolId>,
    children: Vec<[Option<usize>; 5]>,
    root: usize,
}

fn slot(rel: RelationLabel) -> Option<usize> {
    RelationLabel::PAIRWISE.iter().position(|&r| r == rel)
}

impl LayoutTree {
    /// Builds a tree from `(label, parent)` pairs; `parent` is `None` for the root.
    pub(crate) fn from_parents(
        entries: &[(String, Option<(usize, RelationLabel)>)],
        ids: Vec<SymbolId>,
    ) -> Result<Self, ConversionError> {
        let mut children = vec![[None; 5]; entries.len()];
        let mut root = None;
        for (i, (_, parent)) in entries.iter().enumerate() {
            match parent {
                None => root = Some(i),
                Some((p, rel)) => {
                    let s = slot(*rel).expect("pairwise relation");
                    if children[*p][s].is_some() {
                        return Err(ConversionError::DuplicateRelation {
                            node: ids[*p],
                            relation: *rel,
                        });
                    }
                    children[*p][s] = Some(i);
                }
            }
        }
        Ok(LayoutTree {
            labels: entries.iter().map(|(l, _)| l.clone()).collect(),
            ids,
            children,
            root: root.expect("tree has a root"),
        })
    }

    pub fn from_slg(slg: &StrokeLabelGraph) -> Result<Self, ConversionError> {
        let pos = |id: SymbolId| {
            slg.nodes()
                .iter()
                .position(|n| n.id == id)
                .expect("edge targets exist")
        };
        let mut entries: Vec<(String, Option<(usize, RelationLabel)>)> = slg
            .nodes()
            .iter()
            .map(|n| (n.label.clone(), None))
            .collect();
        for e in slg.edges() {
            if let EdgeSource::Node(src) = e.src {
                entries[pos(e.dst)].1 = Some((pos(src), e.label));
            }
        }
        LayoutTree::from_parents(&entries, slg.nodes().iter().map(|n| n.id).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn label(&self, n: usize) -> &str {
        &self.labels[n]
    }

    pub fn id(&self, n: usize) -> SymbolId {
        self.ids[n]
    }

    pub fn child(&self, n: usize, rel: RelationLabel) -> Option<usize> {
        slot(rel).and_then(|s| self.children[n][s])
    }

    /// Depth-first reading order: a symbol, then its sup, sub, over and
    /// under subtrees, then its right neighbour.
    pub fn reading_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            out.push(n);
            // Push in reverse so that sup is visited first and right last.
            for s in (0..5).rev().map(|i| (i + 1) % 5) {
                if let Some(c) = self.children[n][s] {
                    stack.push(c);
                }
            }
        }
        out
    }

    /// The chain `n, right(n), right(right(n)), ...`.
    pub(crate) fn chain(&self, n: usize) -> Vec<usize> {
        let mut out = vec![n];
        let mut cur = n;
        while let Some(r) = self.child(cur, RelationLabel::Right) {
            out.push(r);
            cur = r;
        }
        out
    }
}
