//! Symbol- and expression-level metrics over stroke label graphs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ink::{parse_lg, EdgeSource, RelationLabel, StrokeLabelGraph, TraceId};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("trace sets differ: {hyp_only:?} only in hypothesis, {ref_only:?} only in reference")]
    TraceMismatch {
        hyp_only: Vec<TraceId>,
        ref_only: Vec<TraceId>,
    },
    #[error("{path}: {msg}")]
    File { path: PathBuf, msg: String },
}

/// Tallies of one expression; symbol counts are over reference symbols.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExprTally {
    pub symbols: usize,
    pub seg: usize,
    pub sym: usize,
    pub rel: usize,
    pub exp: bool,
    pub stru: bool,
}

type Group = BTreeSet<TraceId>;

fn incoming(slg: &StrokeLabelGraph) -> HashMap<Group, (Option<Group>, RelationLabel)> {
    let group = |id| {
        slg.node(id)
            .map(|n| n.trace_ids.clone())
            .unwrap_or_default()
    };
    slg.edges()
        .iter()
        .map(|e| {
            let src = match e.src {
                EdgeSource::Root => None,
                EdgeSource::Node(s) => Some(group(s)),
            };
            (group(e.dst), (src, e.label))
        })
        .collect()
}

/// Compares a hypothesis with a reference over the same traces.
///
/// A reference symbol is segmented when some hypothesis symbol has exactly
/// its traces, classified when that symbol also has its label, and related
/// when that symbol's incoming edge has the same source traces (or ROOT)
/// and relation.
pub fn compare_slg(
    hyp: &StrokeLabelGraph,
    reference: &StrokeLabelGraph,
) -> Result<ExprTally, EvalError> {
    let (h, r) = (hyp.trace_ids(), reference.trace_ids());
    if h != r {
        return Err(EvalError::TraceMismatch {
            hyp_only: h.difference(&r).copied().collect(),
            ref_only: r.difference(&h).copied().collect(),
        });
    }
    let hyp_nodes: HashMap<&Group, &str> = hyp
        .nodes()
        .iter()
        .map(|n| (&n.trace_ids, n.label.as_str()))
        .collect();
    let (hin, rin) = (incoming(hyp), incoming(reference));
    let mut t = ExprTally {
        symbols: reference.len(),
        ..ExprTally::default()
    };
    for n in reference.nodes() {
        let Some(label) = hyp_nodes.get(&n.trace_ids) else {
            continue;
        };
        t.seg += 1;
        t.sym += (*label == n.label) as usize;
        t.rel += (hin.get(&n.trace_ids) == rin.get(&n.trace_ids)) as usize;
    }
    let all = t.symbols;
    t.stru = t.seg == all && t.rel == all && hyp.len() == all;
    t.exp = t.stru && t.sym == all;
    Ok(t)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Count {
    pub correct: usize,
    pub total: usize,
}

impl Count {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, correct: usize, total: usize) {
        self.correct += correct;
        self.total += total;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seg: Count,
    pub sym: Count,
    pub rel: Count,
    pub exp: Count,
    pub stru: Count,
}

impl MetricsReport {
    pub fn rates(&self) -> [f64; 5] {
        [
            self.seg.rate(),
            self.sym.rate(),
            self.rel.rate(),
            self.exp.rate(),
            self.stru.rate(),
        ]
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:<6}{:>9}{:>9}{:>9}{:>9}{:>9}",
            "", "Seg", "Sym", "Rel", "Exp", "Stru"
        )
        .unwrap();
        write!(s, "{:<6}", "rate").unwrap();
        for r in self.rates() {
            write!(s, "{:>8.2}%", 100.0 * r).unwrap();
        }
        s.push('\n');
        write!(s, "{:<6}", "count").unwrap();
        for c in [self.seg, self.sym, self.rel, self.exp, self.stru] {
            write!(s, "{:>9}", format!("{}/{}", c.correct, c.total)).unwrap();
        }
        s.push('\n');
        s
    }
}

/// Sums counts over expressions.
pub fn aggregate<'a>(tallies: impl IntoIterator<Item = &'a ExprTally>) -> MetricsReport {
    let mut m = MetricsReport::default();
    for t in tallies {
        m.seg.add(t.seg, t.symbols);
        m.sym.add(t.sym, t.symbols);
        m.rel.add(t.rel, t.symbols);
        m.exp.add(t.exp as usize, 1);
        m.stru.add(t.stru as usize, 1);
    }
    m
}

/// Per-file results of a directory evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DirEvaluation {
    pub metrics: MetricsReport,
    pub files: BTreeMap<String, ExprTally>,
    /// Reference files without a hypothesis; scored as entirely wrong.
    pub missing: Vec<String>,
}

fn read_lg(path: &Path) -> Result<StrokeLabelGraph, EvalError> {
    let err = |msg: String| EvalError::File {
        path: path.to_path_buf(),
        msg,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    parse_lg(&text).map_err(|e| err(e.to_string()))
}

/// Scores every `.lg` file of `reference` against the same name in `hyp`.
pub fn evaluate_dirs(hyp: &Path, reference: &Path) -> Result<DirEvaluation, EvalError> {
    let mut names: Vec<String> = std::fs::read_dir(reference)
        .map_err(|e| EvalError::File {
            path: reference.to_path_buf(),
            msg: e.to_string(),
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".lg"))
        .collect();
    names.sort();
    let mut out = DirEvaluation::default();
    for name in names {
        let r = read_lg(&reference.join(&name))?;
        let h = hyp.join(&name);
        let tally = if h.exists() {
            compare_slg(&read_lg(&h)?, &r).map_err(|e| EvalError::File {
                path: h,
                msg: e.to_string(),
            })?
        } else {
            out.missing.push(name.clone());
            ExprTally {
                symbols: r.len(),
                ..ExprTally::default()
            }
        };
        out.files.insert(name, tally);
    }
    out.metrics = aggregate(out.files.values());
    Ok(out)
}
