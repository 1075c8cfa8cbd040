//! Structural recognition of online handwritten mathematical expressions.

pub mod annotator;
pub mod classifier;
pub mod corrector;
pub mod evalkit;
pub mod geometry;
pub mod ink;
pub mod nnet;
pub mod pipeline;
pub mod relator;
pub mod segmenter;
pub mod synth;
pub mod toy;

pub use ink::{
    Edge, EdgeSource, Expression, Point, RelationLabel, StrokeLabelGraph, SymbolId, SymbolNode,
    Trace, TraceId,
};
