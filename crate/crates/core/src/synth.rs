//! Synthetic handwriting: glyph prototypes, a small box typesetter over
//! layout trees and random expression sampling. Used for micro-corpora,
//! fixtures and tests.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::resample;
use crate::ink::{
    parse_latex_structure, slg_to_latex, Edge, Expression, LatexError, LayoutTree, Point,
    RelationLabel, StrokeLabelGraph, SymbolNode, Trace, TraceId,
};

/// Glyph in unit coordinates: `v = 0` is the ascender line and `v = 1`
/// the baseline (y grows downwards); `u` runs from 0 to `width`.
#[derive(Clone, Debug)]
pub struct Glyph {
    pub width: f64,
    pub strokes: Vec<Vec<(f64, f64)>>,
}

impl Glyph {
    fn top(&self) -> f64 {
        self.strokes
            .iter()
            .flatten()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min)
    }

    fn bottom(&self) -> f64 {
        self.strokes
            .iter()
            .flatten()
            .map(|p| p.1)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, a0: f64, a1: f64) -> Vec<(f64, f64)> {
    let n = 16;
    (0..=n)
        .map(|i| {
            let a = (a0 + (a1 - a0) * i as f64 / n as f64) * PI / 180.0;
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

fn cat(parts: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    parts.concat()
}

fn line(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    pts.to_vec()
}

/// Prototype for a label, if the generator knows how to draw it.
pub fn glyph(label: &str) -> Option<Glyph> {
    let (width, strokes) = match label {
        "0" => (0.6, vec![arc(0.3, 0.5, 0.27, 0.5, -90.0, 270.0)]),
        "1" => (0.35, vec![line(&[(0.05, 0.25), (0.25, 0.0), (0.25, 1.0)])]),
        "2" => (
            0.62,
            vec![cat(&[
                arc(0.3, 0.3, 0.28, 0.28, 180.0, 400.0),
                line(&[(0.02, 1.0), (0.62, 1.0)]),
            ])],
        ),
        "3" => (
            0.6,
            vec![cat(&[
                arc(0.3, 0.27, 0.26, 0.25, 200.0, 450.0),
                arc(0.3, 0.74, 0.28, 0.26, 270.0, 520.0),
            ])],
        ),
        "4" => (
            0.65,
            vec![
                line(&[(0.45, 0.0), (0.0, 0.65), (0.65, 0.65)]),
                line(&[(0.45, 0.25), (0.45, 1.0)]),
            ],
        ),
        "5" => (
            0.6,
            vec![
                line(&[(0.1, 0.0), (0.6, 0.0)]),
                cat(&[
                    line(&[(0.1, 0.0), (0.05, 0.45)]),
                    arc(0.3, 0.7, 0.27, 0.3, 225.0, 520.0),
                ]),
            ],
        ),
        "7" => (0.55, vec![line(&[(0.0, 0.0), (0.55, 0.0), (0.15, 1.0)])]),
        "9" => (
            0.58,
            vec![cat(&[
                arc(0.3, 0.3, 0.26, 0.28, 0.0, 360.0),
                line(&[(0.56, 0.3), (0.5, 1.0)]),
            ])],
        ),
        "x" => (
            0.6,
            vec![
                line(&[(0.0, 0.4), (0.6, 1.0)]),
                line(&[(0.6, 0.4), (0.0, 1.0)]),
            ],
        ),
        "y" => (
            0.6,
            vec![
                line(&[(0.0, 0.4), (0.3, 0.85)]),
                line(&[(0.6, 0.4), (0.1, 1.3)]),
            ],
        ),
        "z" => (
            0.55,
            vec![line(&[(0.0, 0.4), (0.55, 0.4), (0.0, 1.0), (0.55, 1.0)])],
        ),
        "a" => (
            0.6,
            vec![cat(&[
                arc(0.28, 0.7, 0.26, 0.3, -10.0, 350.0),
                line(&[(0.54, 0.4), (0.56, 1.0)]),
            ])],
        ),
        "b" => (
            0.58,
            vec![cat(&[
                line(&[(0.05, 0.0), (0.05, 1.0), (0.05, 0.72)]),
                arc(0.3, 0.72, 0.25, 0.28, 180.0, 540.0),
            ])],
        ),
        "c" => (0.58, vec![arc(0.3, 0.7, 0.28, 0.3, 320.0, 40.0)]),
        "n" => (
            0.6,
            vec![cat(&[
                line(&[(0.05, 0.4), (0.05, 1.0), (0.05, 0.62)]),
                arc(0.3, 0.62, 0.25, 0.2, 180.0, 360.0),
                line(&[(0.55, 1.0)]),
            ])],
        ),
        "i" => (
            0.2,
            vec![line(&[(0.1, 0.45), (0.1, 1.0)]), line(&[(0.1, 0.25)])],
        ),
        "A" => (
            0.7,
            vec![
                line(&[(0.0, 1.0), (0.35, 0.0), (0.7, 1.0)]),
                line(&[(0.15, 0.6), (0.55, 0.6)]),
            ],
        ),
        "B" => (
            0.65,
            vec![
                line(&[(0.05, 0.0), (0.05, 1.0)]),
                cat(&[
                    arc(0.3, 0.25, 0.3, 0.25, 270.0, 450.0),
                    arc(0.32, 0.75, 0.32, 0.25, 270.0, 450.0),
                ]),
            ],
        ),
        "O" => (0.9, vec![arc(0.45, 0.5, 0.44, 0.5, -90.0, 270.0)]),
        "+" => (
            0.6,
            vec![
                line(&[(0.0, 0.55), (0.6, 0.55)]),
                line(&[(0.3, 0.25), (0.3, 0.85)]),
            ],
        ),
        "-" => (0.6, vec![line(&[(0.0, 0.55), (0.6, 0.55)])]),
        "=" => (
            0.6,
            vec![
                line(&[(0.0, 0.42), (0.6, 0.42)]),
                line(&[(0.0, 0.68), (0.6, 0.68)]),
            ],
        ),
        ">" => (0.55, vec![line(&[(0.0, 0.3), (0.55, 0.6), (0.0, 0.9)])]),
        "<" => (0.55, vec![line(&[(0.55, 0.3), (0.0, 0.6), (0.55, 0.9)])]),
        "(" => (0.35, vec![arc(0.45, 0.5, 0.4, 0.6, 240.0, 120.0)]),
        ")" => (0.35, vec![arc(-0.1, 0.5, 0.4, 0.6, -60.0, 60.0)]),
        "\\sum" => (
            0.8,
            vec![line(&[
                (0.75, 0.05),
                (0.0, 0.0),
                (0.4, 0.5),
                (0.0, 1.0),
                (0.8, 0.95),
            ])],
        ),
        _ => return None,
    };
    Some(Glyph { width, strokes })
}

/// Labels with a prototype.
pub const GLYPH_LABELS: &[&str] = &[
    "0", "1", "2", "3", "4", "5", "7", "9", "x", "y", "z", "a", "b", "c", "n", "i", "A", "B", "O",
    "+", "-", "=", ">", "<", "(", ")", "\\sum",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Latex(#[from] LatexError),
    #[error("no glyph prototype for '{0}'")]
    UnknownGlyph(String),
}

/// Handwriting variability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Style {
    /// Glyph height in device units.
    pub size: f64,
    /// Standard deviation of per-point noise, relative to `size`.
    pub jitter: f64,
    /// Standard deviation of per-symbol rotation in degrees.
    pub slant_deg: f64,
    /// Standard deviation of per-symbol relative scale.
    pub scale_sigma: f64,
    /// Points per unit of glyph size along each stroke.
    pub density: f64,
}

impl Default for Style {
    fn default() -> Self {
        Style {
            size: 100.0,
            jitter: 0.01,
            slant_deg: 3.0,
            scale_sigma: 0.05,
            density: 12.0,
        }
    }
}

impl Style {
    pub fn clean() -> Self {
        Style {
            jitter: 0.0,
            slant_deg: 0.0,
            scale_sigma: 0.0,
            ..Style::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Extent {
    w: f64,
    up: f64,
    down: f64,
}

const SCRIPT_SCALE: f64 = 0.6;
const GAP: f64 = 0.25;

struct Typesetter<'a> {
    tree: &'a LayoutTree,
    glyphs: Vec<Glyph>,
}

/// Placement of one layout node: glyph origin (left edge, baseline) and scale.
#[derive(Clone, Copy, Debug)]
struct Placed {
    x: f64,
    base: f64,
    scale: f64,
    width: f64,
}

impl Typesetter<'_> {
    fn glyph_extent(&self, n: usize, sc: f64) -> Extent {
        let g = &self.glyphs[n];
        Extent {
            w: g.width * sc,
            up: (1.0 - g.top()) * sc,
            down: (g.bottom() - 1.0).max(0.0) * sc,
        }
    }

    fn child(&self, n: usize, r: RelationLabel) -> Option<usize> {
        self.tree.child(n, r)
    }

    fn is_stacked(&self, n: usize) -> bool {
        self.child(n, RelationLabel::Over).is_some()
            || self.child(n, RelationLabel::Under).is_some()
    }

    fn is_bar(&self, n: usize) -> bool {
        self.tree.label(n) == "-" && self.is_stacked(n)
    }

    /// Extent of a node with its scripts and limits, excluding its right chain.
    fn node_extent(&self, n: usize, sc: f64) -> Extent {
        let g = self.glyph_extent(n, sc);
        if self.is_bar(n) {
            let num = self
                .child(n, RelationLabel::Over)
                .map(|c| self.chain_extent(c, sc))
                .unwrap_or_default();
            let den = self
                .child(n, RelationLabel::Under)
                .map(|c| self.chain_extent(c, sc))
                .unwrap_or_default();
            let axis = 0.45 * sc;
            let gap = 0.15 * sc;
            return Extent {
                w: num.w.max(den.w) + 0.3 * sc,
                up: axis + gap + num.down + num.up,
                down: (gap + den.up + den.down - axis).max(0.0),
            };
        }
        let mut e = g;
        if self.is_stacked(n) {
            let lsc = SCRIPT_SCALE * sc;
            let gap = 0.1 * sc;
            if let Some(c) = self.child(n, RelationLabel::Over) {
                let o = self.chain_extent(c, lsc);
                e.w = e.w.max(o.w);
                e.up += gap + o.up + o.down;
            }
            if let Some(c) = self.child(n, RelationLabel::Under) {
                let u = self.chain_extent(c, lsc);
                e.w = e.w.max(u.w);
                e.down += gap + u.up + u.down;
            }
        }
        let ssc = SCRIPT_SCALE * sc;
        let sup = self
            .child(n, RelationLabel::Sup)
            .map(|c| self.chain_extent(c, ssc));
        let sub = self
            .child(n, RelationLabel::Sub)
            .map(|c| self.chain_extent(c, ssc));
        let sw = sup.map_or(0.0, |s| s.w).max(sub.map_or(0.0, |s| s.w));
        if sw > 0.0 {
            e.w += 0.08 * sc + sw;
        }
        if let Some(s) = sup {
            e.up = e.up.max(self.sup_shift(g) + s.up);
        }
        if let Some(s) = sub {
            e.down = e.down.max(self.sub_shift(sc) + s.down);
        }
        e
    }

    fn sup_shift(&self, g: Extent) -> f64 {
        0.7 * g.up
    }

    fn sub_shift(&self, sc: f64) -> f64 {
        0.3 * sc
    }

    fn chain_extent(&self, n: usize, sc: f64) -> Extent {
        let mut e = Extent::default();
        for (i, m) in self.tree.chain(n).into_iter().enumerate() {
            let x = self.node_extent(m, sc);
            e.w += x.w + if i > 0 { GAP * sc } else { 0.0 };
            e.up = e.up.max(x.up);
            e.down = e.down.max(x.down);
        }
        e
    }

    fn place_chain(&self, n: usize, x: f64, base: f64, sc: f64, out: &mut [Option<Placed>]) -> f64 {
        let mut x = x;
        for (i, m) in self.tree.chain(n).into_iter().enumerate() {
            if i > 0 {
                x += GAP * sc;
            }
            x += self.place_node(m, x, base, sc, out);
        }
        x
    }

    fn place_node(&self, n: usize, x: f64, base: f64, sc: f64, out: &mut [Option<Placed>]) -> f64 {
        let g = self.glyph_extent(n, sc);
        let e = self.node_extent(n, sc);
        if self.is_bar(n) {
            let axis = 0.45 * sc;
            let gap = 0.15 * sc;
            out[n] = Some(Placed {
                x,
                base: base - axis + 0.55 * sc,
                scale: sc,
                width: e.w,
            });
            if let Some(c) = self.child(n, RelationLabel::Over) {
                let num = self.chain_extent(c, sc);
                self.place_chain(
                    c,
                    x + 0.5 * (e.w - num.w),
                    base - axis - gap - num.down,
                    sc,
                    out,
                );
            }
            if let Some(c) = self.child(n, RelationLabel::Under) {
                let den = self.chain_extent(c, sc);
                self.place_chain(
                    c,
                    x + 0.5 * (e.w - den.w),
                    base - axis + gap + den.up,
                    sc,
                    out,
                );
            }
            return e.w;
        }
        let mut core_w = g.w;
        let mut gx = x;
        if self.is_stacked(n) {
            let lsc = SCRIPT_SCALE * sc;
            let gap = 0.1 * sc;
            let mut w = g.w;
            let over = self
                .child(n, RelationLabel::Over)
                .map(|c| (c, self.chain_extent(c, lsc)));
            let under = self
                .child(n, RelationLabel::Under)
                .map(|c| (c, self.chain_extent(c, lsc)));
            for (_, ext) in over.iter().chain(under.iter()) {
                w = w.max(ext.w);
            }
            gx = x + 0.5 * (w - g.w);
            if let Some((c, o)) = over {
                self.place_chain(c, x + 0.5 * (w - o.w), base - g.up - gap - o.down, lsc, out);
            }
            if let Some((c, u)) = under {
                self.place_chain(c, x + 0.5 * (w - u.w), base + g.down + gap + u.up, lsc, out);
            }
            core_w = w;
        }
        out[n] = Some(Placed {
            x: gx,
            base,
            scale: sc,
            width: g.w,
        });
        let sx = x + core_w + 0.08 * sc;
        let ssc = SCRIPT_SCALE * sc;
        if let Some(c) = self.child(n, RelationLabel::Sup) {
            self.place_chain(c, sx, base - self.sup_shift(g), ssc, out);
        }
        if let Some(c) = self.child(n, RelationLabel::Sub) {
            self.place_chain(c, sx, base + self.sub_shift(sc), ssc, out);
        }
        e.w
    }
}

/// One synthetic sample with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSample {
    pub expr: Expression,
    pub slg: StrokeLabelGraph,
    pub latex: String,
}

fn draw<R: Rng + ?Sized>(
    glyph: &Glyph,
    p: Placed,
    stretch: f64,
    style: &Style,
    rng: &mut R,
) -> Vec<Vec<Point>> {
    let rot = if style.slant_deg > 0.0 {
        Normal::new(0.0, style.slant_deg)
            .unwrap()
            .sample(rng)
            .to_radians()
    } else {
        0.0
    };
    let s = if style.scale_sigma > 0.0 {
        (1.0 + Normal::new(0.0, style.scale_sigma).unwrap().sample(rng)).clamp(0.8, 1.2)
    } else {
        1.0
    };
    let noise = (style.jitter > 0.0).then(|| Normal::new(0.0, style.jitter * p.scale).unwrap());
    let (sin, cos) = rot.sin_cos();
    let cx = p.x + 0.5 * p.width;
    let cy = p.base - 0.5 * p.scale;
    let sx = if stretch > 0.0 {
        stretch / glyph.width
    } else {
        p.scale
    };
    glyph
        .strokes
        .iter()
        .map(|stroke| {
            let raw: Vec<Point> = stroke
                .iter()
                .map(|&(u, v)| Point::new(p.x + u * sx, p.base - (1.0 - v) * p.scale))
                .collect();
            let len: f64 = raw.windows(2).map(|w| w[0].dist(&w[1])).sum();
            let m = ((len / p.scale) * style.density).ceil().max(1.0) as usize + 1;
            let pts = if raw.len() == 1 {
                raw
            } else {
                resample(&raw, m)
            };
            pts.into_iter()
                .map(|q| {
                    let (dx, dy) = ((q.x - cx) * s, (q.y - cy) * s);
                    let mut r = Point::new(cx + cos * dx - sin * dy, cy + sin * dx + cos * dy);
                    if let Some(nz) = &noise {
                        r.x += nz.sample(rng);
                        r.y += nz.sample(rng);
                    }
                    r
                })
                .collect()
        })
        .collect()
}

/// Typesets and "handwrites" a LaTeX expression. Symbols are written in
/// layout reading order; symbol ids follow that order.
pub fn render_latex<R: Rng + ?Sized>(
    latex: &str,
    style: &Style,
    rng: &mut R,
) -> Result<SynthSample, SynthError> {
    let plan = parse_latex_structure(latex)?;
    let tree = plan.to_layout();
    let glyphs = (0..tree.len())
        .map(|n| {
            glyph(tree.label(n)).ok_or_else(|| SynthError::UnknownGlyph(tree.label(n).to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ts = Typesetter {
        tree: &tree,
        glyphs,
    };
    let mut placed = vec![None; tree.len()];
    let top = ts.chain_extent(tree.root(), style.size).up;
    ts.place_chain(
        tree.root(),
        0.0,
        top + style.size * 0.2,
        style.size,
        &mut placed,
    );

    let mut traces = Vec::new();
    let mut nodes = Vec::new();
    let mut next: TraceId = 0;
    for n in tree.reading_order() {
        let p = placed[n].expect("every node placed");
        let stretch = if ts.is_bar(n) { p.width } else { 0.0 };
        let strokes = draw(&ts.glyphs[n], p, stretch, style, rng);
        let mut ids = Vec::new();
        for s in strokes {
            traces.push(Trace::new(next, s).expect("finite synthetic points"));
            ids.push(next);
            next += 1;
        }
        nodes.push(SymbolNode::new(tree.id(n), ids, tree.label(n)));
    }
    let mut edges = vec![Edge::root(tree.id(tree.root()))];
    for n in 0..tree.len() {
        for r in RelationLabel::PAIRWISE {
            if let Some(c) = tree.child(n, r) {
                edges.push(Edge::new(tree.id(n), tree.id(c), r));
            }
        }
    }
    let slg = StrokeLabelGraph::new(nodes, edges).expect("layout trees are valid graphs");
    let canonical = slg_to_latex(&slg).expect("layout trees convert");
    let expr = Expression::new(traces, "", Some(canonical.clone())).expect("unique trace ids");
    Ok(SynthSample {
        expr,
        slg,
        latex: canonical,
    })
}

/// Grammar knobs for [`random_latex`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grammar {
    pub atoms: Vec<String>,
    pub operators: Vec<String>,
    pub script_atoms: Vec<String>,
    pub max_terms: usize,
    pub p_sub: f64,
    pub p_sup: f64,
    pub p_frac: f64,
    pub p_sum: f64,
}

impl Default for Grammar {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        Grammar {
            atoms: s(&["x", "y", "a", "b", "n", "A", "B", "1", "2", "3", "4"]),
            operators: s(&["+", "-", "=", ">", "<"]),
            script_atoms: s(&["1", "2", "3", "n", "i"]),
            max_terms: 3,
            p_sub: 0.25,
            p_sup: 0.25,
            p_frac: 0.1,
            p_sum: 0.05,
        }
    }
}

fn pick<'a, R: Rng + ?Sized>(v: &'a [String], rng: &mut R) -> &'a str {
    v.choose(rng).expect("non-empty symbol list")
}

fn term<R: Rng + ?Sized>(g: &Grammar, rng: &mut R, depth: usize) -> String {
    let r: f64 = rng.gen();
    if depth == 0 && r < g.p_frac {
        let num = pick(&g.atoms, rng).to_string();
        let den = pick(&g.atoms, rng).to_string();
        return format!("\\frac{{{num}}}{{{den}}}");
    }
    if depth == 0 && r < g.p_frac + g.p_sum {
        let lo = pick(&g.script_atoms, rng).to_string();
        let hi = pick(&g.script_atoms, rng).to_string();
        return format!("\\sum_{{{lo}}}^{{{hi}}}{}", term(g, rng, depth + 1));
    }
    let mut s = pick(&g.atoms, rng).to_string();
    if rng.gen_bool(g.p_sub) {
        s.push_str(&format!("_{{{}}}", pick(&g.script_atoms, rng)));
    }
    if rng.gen_bool(g.p_sup) {
        s.push_str(&format!("^{{{}}}", pick(&g.script_atoms, rng)));
    }
    s
}

/// Random expression `term (op term)*` with up to `max_terms` terms.
pub fn random_latex<R: Rng + ?Sized>(g: &Grammar, rng: &mut R) -> String {
    let n = rng.gen_range(1..=g.max_terms.max(1));
    let mut s = term(g, rng, 0);
    for _ in 1..n {
        s.push_str(pick(&g.operators, rng));
        s.push_str(&term(g, rng, 0));
    }
    s
}

/// `n` distinct random samples (distinct by LaTeX).
pub fn random_corpus<R: Rng + ?Sized>(
    g: &Grammar,
    style: &Style,
    n: usize,
    rng: &mut R,
) -> Vec<SynthSample> {
    let mut seen = BTreeMap::new();
    let mut tries = 0;
    while seen.len() < n && tries < 100 * n {
        tries += 1;
        let latex = random_latex(g, rng);
        if seen.contains_key(&latex) {
            continue;
        }
        let sample = render_latex(&latex, style, rng).expect("grammar symbols have glyphs");
        seen.insert(latex, sample);
    }
    let mut out: Vec<SynthSample> = seen.into_values().collect();
    out.shuffle(rng);
    for (i, s) in out.iter_mut().enumerate() {
        s.expr = s.expr.clone().with_source_id(format!("synth{i:03}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ink::BBox;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_listed_glyph_exists() {
        for l in GLYPH_LABELS {
            let g = glyph(l).unwrap();
            assert!(!g.strokes.is_empty());
        }
        assert!(glyph("\\alpha").is_none());
    }

    #[test]
    fn subscripted_comparison_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = render_latex("A_2>B_2", &Style::default(), &mut rng).unwrap();
        assert_eq!(s.latex, "A_{2}>B_{2}");
        assert_eq!(s.slg.len(), 5);
        assert_eq!(s.expr.traces().len(), 7);
        let bbox = |id| {
            BBox::of_traces(
                s.slg
                    .node(id)
                    .unwrap()
                    .trace_ids
                    .iter()
                    .map(|t| s.expr.trace(*t).unwrap()),
            )
            .unwrap()
        };
        let (a, sub) = (bbox(0), bbox(1));
        assert!(sub.min_x > a.center().x && sub.center().y > a.center().y);
        assert!(bbox(2).min_x > sub.max_x);
    }

    #[test]
    fn fraction_bar_spans_operands() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = render_latex("\\frac{a}{b}+1", &Style::clean(), &mut rng).unwrap();
        let bb = |id| {
            BBox::of_traces(
                s.slg
                    .node(id)
                    .unwrap()
                    .trace_ids
                    .iter()
                    .map(|t| s.expr.trace(*t).unwrap()),
            )
            .unwrap()
        };
        let (bar, num, den) = (bb(0), bb(1), bb(2));
        assert!(bar.min_x < num.min_x && bar.max_x > num.max_x);
        assert!(num.max_y < bar.min_y && den.min_y > bar.max_y);
    }

    #[test]
    fn random_corpus_is_distinct_and_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_corpus(&Grammar::default(), &Style::default(), 25, &mut rng);
        assert_eq!(c.len(), 25);
        for s in &c {
            s.slg.check_traces(&s.expr).unwrap();
            assert_eq!(parse_latex_structure(&s.latex).unwrap().len(), s.slg.len());
        }
    }
}
