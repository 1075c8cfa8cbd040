//! Ink, symbol and Stroke Label Graph data model, plus the text formats
//! built on top of it (InkML, LG, LaTeX, MathML).

mod inkml;
mod inventory;
mod latex;
mod latex_parse;
mod layout;
mod lg;
mod mathml;
mod slg;

pub use inkml::{parse_inkml, write_inkml, InkDocument, InkmlError, TraceGroupAnnotation};
pub use inventory::{InventoryError, SymbolCategory, SymbolInventory, DEFAULT_INVENTORY};
pub use latex::{normalize_latex, slg_to_latex, ConversionError};
pub use latex_parse::{parse_latex_structure, AnnotStep, LatexError, PlanStep, StructuralPlan};
pub use layout::LayoutTree;
pub use lg::{parse_lg, write_lg, LgError};
pub use mathml::{slg_to_mathml, slg_to_mathml_with_ids};
pub use slg::{validate, Edge, EdgeSource, SlgError, StrokeLabelGraph, SymbolNode};

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub type TraceId = u32;
pub type SymbolId = u32;

/// A pen sample in device units. Timestamps are not kept.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InkError {
    #[error("trace {0} has no points")]
    EmptyTrace(TraceId),
    #[error("trace {0} contains a non-finite coordinate")]
    NonFinite(TraceId),
    #[error("duplicate trace id {0}")]
    DuplicateTrace(TraceId),
}

/// One pen-down to pen-up trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    id: TraceId,
    points: Vec<Point>,
}

impl Trace {
    pub fn new(id: TraceId, points: Vec<Point>) -> Result<Self, InkError> {
        if points.is_empty() {
            return Err(InkError::EmptyTrace(id));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(InkError::NonFinite(id));
        }
        Ok(Trace { id, points })
    }

    pub fn id(&self) -> TraceId {
        self.id
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn max_x(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.x)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_x(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.x)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<BBox> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = BBox {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        for p in it {
            b.min_x = b.min_x.min(p.x);
            b.min_y = b.min_y.min(p.y);
            b.max_x = b.max_x.max(p.x);
            b.max_y = b.max_y.max(p.y);
        }
        Some(b)
    }

    pub fn of_traces<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> Option<BBox> {
        BBox::of_points(traces.into_iter().flat_map(|t| t.points().iter()))
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.min_x + self.max_x),
            0.5 * (self.min_y + self.max_y),
        )
    }

    pub fn union(&self, o: &BBox) -> BBox {
        BBox {
            min_x: self.min_x.min(o.min_x),
            min_y: self.min_y.min(o.min_y),
            max_x: self.max_x.max(o.max_x),
            max_y: self.max_y.max(o.max_y),
        }
    }
}

/// A handwritten sample: traces in writing order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expression {
    traces: Vec<Trace>,
    source_id: String,
    latex_label: Option<String>,
}

impl Expression {
    pub fn new(
        traces: Vec<Trace>,
        source_id: impl Into<String>,
        latex_label: Option<String>,
    ) -> Result<Self, InkError> {
        let mut seen = HashSet::new();
        for t in &traces {
            if !seen.insert(t.id) {
                return Err(InkError::DuplicateTrace(t.id));
            }
        }
        Ok(Expression {
            traces,
            source_id: source_id.into(),
            latex_label,
        })
    }

    /// Builds an expression from bare point arrays, numbering traces by index.
    pub fn from_point_arrays(arrays: &[Vec<[f64; 2]>]) -> Result<Self, InkError> {
        let traces = arrays
            .iter()
            .enumerate()
            .map(|(i, pts)| {
                Trace::new(
                    i as TraceId,
                    pts.iter().map(|p| Point::new(p[0], p[1])).collect(),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Expression::new(traces, "", None)
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn trace(&self, id: TraceId) -> Option<&Trace> {
        self.traces.iter().find(|t| t.id == id)
    }

    pub fn trace_ids(&self) -> Vec<TraceId> {
        self.traces.iter().map(|t| t.id).collect()
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn latex_label(&self) -> Option<&str> {
        self.latex_label.as_deref()
    }

    pub fn with_latex_label(mut self, latex: Option<String>) -> Self {
        self.latex_label = latex;
        self
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    /// Position of each trace in writing order, keyed by id.
    pub fn order_of(&self, id: TraceId) -> Option<usize> {
        self.traces.iter().position(|t| t.id == id)
    }
}

/// Spatial relation between two symbols. `None` is the non-edge sentinel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationLabel {
    Right,
    Sup,
    Sub,
    Over,
    Under,
    LineStart,
    None,
}

impl RelationLabel {
    /// All labels in network class-index order.
    pub const ALL: [RelationLabel; 7] = [
        RelationLabel::Right,
        RelationLabel::Sup,
        RelationLabel::Sub,
        RelationLabel::Over,
        RelationLabel::Under,
        RelationLabel::LineStart,
        RelationLabel::None,
    ];

    /// Labels that may connect two symbols.
    pub const PAIRWISE: [RelationLabel; 5] = [
        RelationLabel::Right,
        RelationLabel::Sup,
        RelationLabel::Sub,
        RelationLabel::Over,
        RelationLabel::Under,
    ];

    pub const COUNT: usize = 7;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<RelationLabel> {
        RelationLabel::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::Right => "right",
            RelationLabel::Sup => "sup",
            RelationLabel::Sub => "sub",
            RelationLabel::Over => "over",
            RelationLabel::Under => "under",
            RelationLabel::LineStart => "line_start",
            RelationLabel::None => "none",
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationLabel {
    type Err = String;

    /// Accepts the native names and the CROHME label-graph spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "right" | "Right" | "R" => RelationLabel::Right,
            "sup" | "Sup" => RelationLabel::Sup,
            "sub" | "Sub" => RelationLabel::Sub,
            "over" | "Above" | "above" => RelationLabel::Over,
            "under" | "Below" | "below" => RelationLabel::Under,
            "line_start" => RelationLabel::LineStart,
            "none" | "_" => RelationLabel::None,
            other => return Err(format!("unknown relation label '{other}'")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relation_indices_round_trip() {
        for (i, r) in RelationLabel::ALL.iter().enumerate() {
            assert_eq!(r.index(), i);
            assert_eq!(RelationLabel::from_index(i), Some(*r));
            assert_eq!(r.as_str().parse::<RelationLabel>().unwrap(), *r);
        }
        assert_eq!(
            "Below".parse::<RelationLabel>().unwrap(),
            RelationLabel::Under
        );
    }

    #[test]
    fn trace_rejects_empty_and_nan() {
        assert_eq!(Trace::new(3, vec![]), Err(InkError::EmptyTrace(3)));
        assert_eq!(
            Trace::new(1, vec![Point::new(f64::NAN, 0.0)]),
            Err(InkError::NonFinite(1))
        );
    }

    #[test]
    fn expression_rejects_duplicate_ids() {
        let t = Trace::new(0, vec![Point::new(0.0, 0.0)]).unwrap();
        let err = Expression::new(vec![t.clone(), t], "x", None).unwrap_err();
        assert_eq!(err, InkError::DuplicateTrace(0));
    }
}
