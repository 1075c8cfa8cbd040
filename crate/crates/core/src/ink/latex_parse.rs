use super::latex::{tokenize, ConversionError, Token};
use super::layout::{is_big_operator, LayoutTree, FRACTION_BAR};
use super::{RelationLabel, SymbolId, DEFAULT_INVENTORY};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LatexError {
    #[error("empty expression")]
    Empty,
    #[error("unsupported command {0}")]
    UnsupportedCommand(String),
    #[error("unbalanced braces at token {0}")]
    Unbalanced(usize),
    #[error("script without a base at token {0}")]
    ScriptWithoutBase(usize),
    #[error("double {kind} script at token {pos}")]
    DoubleScript { kind: char, pos: usize },
    #[error("{0} is missing an argument")]
    MissingArgument(String),
    #[error("empty group at token {0}")]
    EmptyGroup(usize),
    #[error(transparent)]
    Layout(#[from] ConversionError),
}

/// One symbol of a parsed expression, in reading order.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanStep {
    pub id: usize,
    pub symbol: String,
    /// `None` means the step hangs off ROOT (`line_start`).
    pub parent: Option<usize>,
    pub relation: RelationLabel,
    /// Outgoing relations of this symbol, `(child id, relation)`.
    pub children: Vec<(usize, RelationLabel)>,
}

/// Inputs for one iteration of trace-to-label alignment: where the next
/// symbol hangs in the layout and which symbols it governs.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotStep {
    pub s_ref: Option<(usize, String)>,
    pub s_next: (usize, String),
    pub rel: RelationLabel,
    pub neighbors: Vec<(String, RelationLabel)>,
}

/// Symbols of a LaTeX expression with their layout relations.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuralPlan {
    steps: Vec<PlanStep>,
}

impl StructuralPlan {
    pub fn steps(&self) -> &[PlanStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn to_layout(&self) -> LayoutTree {
        let entries: Vec<_> = self
            .steps
            .iter()
            .map(|s| (s.symbol.clone(), s.parent.map(|p| (p, s.relation))))
            .collect();
        LayoutTree::from_parents(&entries, (0..self.steps.len() as SymbolId).collect())
            .expect("plans are built from valid layouts")
    }

    /// Re-linearizes the plan with the SLG emitter.
    pub fn to_latex(&self) -> Result<String, ConversionError> {
        self.to_layout().to_latex()
    }

    pub fn annot_steps(&self) -> Vec<AnnotStep> {
        self.steps
            .iter()
            .map(|s| AnnotStep {
                s_ref: s.parent.map(|p| (p, self.steps[p].symbol.clone())),
                s_next: (s.id, s.symbol.clone()),
                rel: s.relation,
                neighbors: s
                    .children
                    .iter()
                    .map(|&(c, r)| (self.steps[c].symbol.clone(), r))
                    .collect(),
            })
            .collect()
    }
}

const ALIASES: &[(&str, &str)] = &[
    ("\\lt", "<"),
    ("\\gt", ">"),
    ("\\lbrace", "\\{"),
    ("\\rbrace", "\\}"),
];
const IGNORED: &[&str] = &["\\,", "\\;", "\\!", "\\ ", "\\limits", "\\displaystyle"];
const EXTRA_COMMANDS: &[&str] = &[
    "\\prod", "\\cdot", "\\ln", "\\exp", "\\cdots", "\\ne", "\\le", "\\ge",
];

fn supported_command(cmd: &str) -> Option<String> {
    if let Some((_, to)) = ALIASES.iter().find(|(from, _)| *from == cmd) {
        return Some(to.to_string());
    }
    let known = EXTRA_COMMANDS.contains(&cmd)
        || DEFAULT_INVENTORY
            .lines()
            .any(|l| l.split_whitespace().next() == Some(cmd));
    known.then(|| cmd.to_string())
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    nodes: Vec<(String, Option<(usize, RelationLabel)>)>,
}

type Span = (usize, usize);

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn node(&mut self, label: String) -> usize {
        self.nodes.push((label, None));
        self.nodes.len() - 1
    }

    fn link(&mut self, child: usize, parent: usize, rel: RelationLabel) {
        self.nodes[child].1 = Some((parent, rel));
    }

    /// A right-chained sequence; `in_group` means it must end at `}`.
    fn seq(&mut self, in_group: bool) -> Result<Option<Span>, LatexError> {
        let mut head = None;
        let mut tail: Option<usize> = None;
        loop {
            match self.peek() {
                None if in_group => return Err(LatexError::Unbalanced(self.pos)),
                None => break,
                Some(Token::Char('}')) if in_group => {
                    self.pos += 1;
                    break;
                }
                Some(Token::Char('}')) => return Err(LatexError::Unbalanced(self.pos)),
                Some(Token::Command(c)) if IGNORED.contains(&c.as_str()) => {
                    self.pos += 1;
                    continue;
                }
                _ => {}
            }
            let (h, t) = self.item()?;
            match tail {
                Some(p) => self.link(h, p, RelationLabel::Right),
                None => head = Some(h),
            }
            tail = Some(t);
        }
        Ok(head.zip(tail))
    }

    fn item(&mut self) -> Result<Span, LatexError> {
        let (head, tail) = self.atom()?;
        let (mut sub, mut sup) = (false, false);
        while let Some(Token::Char(kind @ ('_' | '^'))) = self.peek().cloned() {
            let at = self.pos;
            self.pos += 1;
            let seen = if kind == '_' { &mut sub } else { &mut sup };
            if *seen {
                return Err(LatexError::DoubleScript { kind, pos: at });
            }
            *seen = true;
            let (arg, _) = self.arg(if kind == '_' { "_" } else { "^" })?;
            let base = &self.nodes[tail].0;
            let rel = match (kind, is_big_operator(base) && base != "\\int") {
                ('_', true) => RelationLabel::Under,
                ('^', true) => RelationLabel::Over,
                ('_', false) => RelationLabel::Sub,
                _ => RelationLabel::Sup,
            };
            self.link(arg, tail, rel);
        }
        Ok((head, tail))
    }

    fn arg(&mut self, owner: &str) -> Result<Span, LatexError> {
        match self.peek() {
            None => Err(LatexError::MissingArgument(owner.to_string())),
            Some(Token::Char('{')) => {
                let at = self.pos;
                self.pos += 1;
                self.seq(true)?.ok_or(LatexError::EmptyGroup(at))
            }
            Some(_) => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Span, LatexError> {
        let at = self.pos;
        let tok = self.next().ok_or(LatexError::Empty)?;
        match tok {
            Token::Char('{') => self.seq(true)?.ok_or(LatexError::EmptyGroup(at)),
            Token::Char('}') => Err(LatexError::Unbalanced(at)),
            Token::Char('_' | '^') => Err(LatexError::ScriptWithoutBase(at)),
            Token::Char(c) => {
                let n = self.node(c.to_string());
                Ok((n, n))
            }
            Token::Command(cmd) => match cmd.as_str() {
                "\\frac" => {
                    let bar = self.node(FRACTION_BAR.to_string());
                    let (num, _) = self.arg("\\frac")?;
                    let (den, _) = self.arg("\\frac")?;
                    self.link(num, bar, RelationLabel::Over);
                    self.link(den, bar, RelationLabel::Under);
                    Ok((bar, bar))
                }
                "\\overset" | "\\underset" => {
                    let (limit, _) = self.arg(&cmd)?;
                    let base = self.arg(&cmd)?;
                    let rel = if cmd == "\\overset" {
                        RelationLabel::Over
                    } else {
                        RelationLabel::Under
                    };
                    self.link(limit, base.0, rel);
                    Ok(base)
                }
                "\\left" | "\\right" => match self.next() {
                    Some(Token::Char(c)) => {
                        let n = self.node(c.to_string());
                        Ok((n, n))
                    }
                    Some(Token::Command(c)) => {
                        let label =
                            supported_command(&c).ok_or(LatexError::UnsupportedCommand(c))?;
                        let n = self.node(label);
                        Ok((n, n))
                    }
                    None => Err(LatexError::MissingArgument(cmd)),
                },
                _ => {
                    let label =
                        supported_command(&cmd).ok_or(LatexError::UnsupportedCommand(cmd))?;
                    let n = self.node(label);
                    Ok((n, n))
                }
            },
        }
    }
}

/// Parses the supported LaTeX subset into symbols and layout relations.
///
/// Steps come in reading order (a symbol, its scripts and limits, then its
/// right neighbour), so every step's parent precedes it.
pub fn parse_latex_structure(latex: &str) -> Result<StructuralPlan, LatexError> {
    let trimmed = latex.trim().trim_start_matches('$').trim_end_matches('$');
    let mut p = Parser {
        tokens: tokenize(trimmed),
        pos: 0,
        nodes: Vec::new(),
    };
    if p.seq(false)?.is_none() {
        return Err(LatexError::Empty);
    }
    let layout = LayoutTree::from_parents(&p.nodes, (0..p.nodes.len() as SymbolId).collect())?;
    let order = layout.reading_order();
    let mut rank = vec![0; order.len()];
    for (k, &n) in order.iter().enumerate() {
        rank[n] = k;
    }
    let mut steps: Vec<PlanStep> = order
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let (label, parent) = &p.nodes[n];
            PlanStep {
                id: k,
                symbol: label.clone(),
                parent: parent.map(|(q, _)| rank[q]),
                relation: parent.map_or(RelationLabel::LineStart, |(_, r)| r),
                children: Vec::new(),
            }
        })
        .collect();
    for k in 0..steps.len() {
        if let Some(parent) = steps[k].parent {
            let rel = steps[k].relation;
            steps[parent].children.push((k, rel));
        }
    }
    Ok(StructuralPlan { steps })
}
