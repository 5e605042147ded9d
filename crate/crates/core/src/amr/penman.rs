use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use super::{AmrEdge, AmrError, AmrGraph, Constant, Target, Variable};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Slash,
    Role(String),
    Symbol { text: String, align: Vec<usize> },
    Str { text: String, align: Vec<usize> },
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0 }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek_char() {
            if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn read_bare(&mut self) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.peek_char() {
            if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                break;
            }
            self.bump();
        }
        &self.src[start..self.pos]
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, AmrError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            let start = self.pos;
            let Some(c) = self.peek_char() else { break };
            let tok = match c {
                '(' => {
                    self.bump();
                    Tok::Open
                }
                ')' => {
                    self.bump();
                    Tok::Close
                }
                '/' => {
                    self.bump();
                    Tok::Slash
                }
                ':' => {
                    let text = self.read_bare();
                    if text.len() < 2 {
                        return Err(AmrError::malformed(start, "empty role label"));
                    }
                    Tok::Role(text.to_string())
                }
                '"' => {
                    self.bump();
                    let mut text = String::new();
                    loop {
                        match self.bump() {
                            None => return Err(AmrError::malformed(start, "unterminated string")),
                            Some('\\') => match self.bump() {
                                Some(e) => text.push(e),
                                None => {
                                    return Err(AmrError::malformed(start, "unterminated string"))
                                }
                            },
                            Some('"') => break,
                            Some(ch) => text.push(ch),
                        }
                    }
                    let suffix = self.read_bare();
                    let align = if suffix.is_empty() {
                        Vec::new()
                    } else if let Some(rest) = suffix.strip_prefix('~') {
                        parse_alignment(rest)?
                    } else {
                        return Err(AmrError::malformed(start, format!("junk after string: `{suffix}`")));
                    };
                    Tok::Str { text, align }
                }
                _ => {
                    let raw = self.read_bare();
                    // a lone slash glued to a symbol, e.g. `b/boy`
                    if let Some(idx) = raw.find('/') {
                        if idx > 0 && !raw.starts_with("http") {
                            self.pos = start + idx;
                            let (text, align) = split_alignment(&raw[..idx])?;
                            out.push((start, Tok::Symbol { text, align }));
                            continue;
                        }
                    }
                    let (text, align) = split_alignment(raw)?;
                    Tok::Symbol { text, align }
                }
            };
            out.push((start, tok));
        }
        Ok(out)
    }
}

fn split_alignment(raw: &str) -> Result<(String, Vec<usize>), AmrError> {
    match raw.find('~') {
        Some(0) | None => Ok((raw.to_string(), Vec::new())),
        Some(i) => Ok((raw[..i].to_string(), parse_alignment(&raw[i + 1..])?)),
    }
}

/// Accepts `e.1,2` as well as bare `1,2`.
fn parse_alignment(suffix: &str) -> Result<Vec<usize>, AmrError> {
    let body = match suffix.split_once('.') {
        Some((prefix, rest)) if prefix.chars().all(|c| c.is_ascii_alphabetic()) => rest,
        _ => suffix,
    };
    if body.is_empty() {
        return Err(AmrError::BadAlignment(suffix.to_string()));
    }
    body.split(',')
        .map(|p| p.parse::<usize>().map_err(|_| AmrError::BadAlignment(suffix.to_string())))
        .collect()
}

enum Pending {
    Resolved(Target),
    Bare { text: String, align: Vec<usize> },
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
    variables: Vec<Variable>,
    declared: BTreeSet<String>,
    alignments: HashMap<String, Vec<usize>>,
    edges: Vec<(String, String, Pending)>,
}

impl Parser {
    fn offset(&self) -> usize {
        self.toks.get(self.at).map(|t| t.0).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|t| t.1.clone());
        self.at += 1;
        t
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn node(&mut self) -> Result<String, AmrError> {
        let off = self.offset();
        if self.next() != Some(Tok::Open) {
            return Err(AmrError::malformed(off, "expected `(`"));
        }
        let off = self.offset();
        let var = match self.next() {
            Some(Tok::Symbol { text, align }) if align.is_empty() => text,
            Some(Tok::Symbol { .. }) => {
                return Err(AmrError::malformed(off, "alignment on variable name"))
            }
            _ => return Err(AmrError::malformed(off, "expected variable name")),
        };
        let off = self.offset();
        if self.next() != Some(Tok::Slash) {
            return Err(AmrError::malformed(off, format!("missing `/` after variable `{var}`")));
        }
        let off = self.offset();
        let (concept, align) = match self.next() {
            Some(Tok::Symbol { text, align }) | Some(Tok::Str { text, align }) => (text, align),
            _ => return Err(AmrError::malformed(off, "expected concept after `/`")),
        };
        if !self.declared.insert(var.clone()) {
            return Err(AmrError::DuplicateVariable(var));
        }
        self.variables.push(Variable { name: var.clone(), concept });
        if !align.is_empty() {
            self.alignments.entry(var.clone()).or_default().extend(align);
        }
        loop {
            let off = self.offset();
            match self.next() {
                Some(Tok::Close) => return Ok(var),
                Some(Tok::Role(role)) => {
                    let target = match self.peek() {
                        Some(Tok::Open) => {
                            // reserve the slot so edges stay in pre-order
                            let slot = self.edges.len();
                            self.edges.push((var.clone(), role, Pending::Resolved(Target::Var(String::new()))));
                            let child = self.node()?;
                            self.edges[slot].2 = Pending::Resolved(Target::Var(child));
                            continue;
                        }
                        Some(Tok::Symbol { .. }) => match self.next() {
                            Some(Tok::Symbol { text, align }) => Pending::Bare { text, align },
                            _ => unreachable!(),
                        },
                        Some(Tok::Str { .. }) => match self.next() {
                            Some(Tok::Str { text, align }) => Pending::Resolved(Target::Const(
                                Constant { value: text, quoted: true, alignment: align },
                            )),
                            _ => unreachable!(),
                        },
                        _ => {
                            return Err(AmrError::malformed(
                                self.offset(),
                                format!("dangling role `{role}`"),
                            ))
                        }
                    };
                    self.edges.push((var.clone(), role, target));
                }
                None => return Err(AmrError::malformed(off, "unbalanced parentheses")),
                Some(_) => return Err(AmrError::malformed(off, "expected role or `)`")),
            }
        }
    }
}

/// Parses one PENMAN-serialized AMR graph.
///
/// Bare symbols naming a declared variable (anywhere in the graph) are
/// reentrant references; other bare symbols become constants.
pub fn parse_amr(text: &str) -> Result<AmrGraph, AmrError> {
    let toks = Lexer::new(text).tokens()?;
    if toks.is_empty() {
        return Err(AmrError::malformed(0, "empty input"));
    }
    let mut p = Parser {
        toks,
        at: 0,
        end: text.len(),
        variables: Vec::new(),
        declared: BTreeSet::new(),
        alignments: HashMap::new(),
        edges: Vec::new(),
    };
    let top = p.node()?;
    if p.at < p.toks.len() {
        return Err(AmrError::malformed(p.offset(), "trailing input after graph"));
    }
    let mut edges = Vec::with_capacity(p.edges.len());
    for (source, role, pending) in std::mem::take(&mut p.edges) {
        let target = match pending {
            Pending::Resolved(t) => t,
            Pending::Bare { text, align } if p.declared.contains(&text) => {
                if !align.is_empty() {
                    p.alignments.entry(text.clone()).or_default().extend(align);
                }
                Target::Var(text)
            }
            Pending::Bare { text, align } => {
                Target::Const(Constant { value: text, quoted: false, alignment: align })
            }
        };
        edges.push(AmrEdge { source, role, target });
    }
    let alignments = p
        .alignments
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_unstable();
            v.dedup();
            (k, v)
        })
        .collect();
    Ok(AmrGraph { sentence_id: String::new(), top, variables: p.variables, edges, alignments })
}

fn write_alignment(out: &mut String, align: &[usize]) {
    if align.is_empty() {
        return;
    }
    out.push_str("~e.");
    for (i, a) in align.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{a}");
    }
}

fn write_constant(out: &mut String, c: &Constant) {
    if c.quoted {
        out.push('"');
        for ch in c.value.chars() {
            if ch == '"' || ch == '\\' {
                out.push('\\');
            }
            out.push(ch);
        }
        out.push('"');
    } else {
        out.push_str(&c.value);
    }
    write_alignment(out, &c.alignment);
}

/// Writes a graph in PENMAN notation. Each variable is instantiated at its
/// first depth-first occurrence; later occurrences are bare references.
pub fn serialize_amr(g: &AmrGraph) -> Result<String, AmrError> {
    g.validate()?;
    let mut children: HashMap<&str, Vec<&AmrEdge>> = HashMap::new();
    for e in &g.edges {
        children.entry(e.source.as_str()).or_default().push(e);
    }
    let concepts: HashMap<&str, &str> =
        g.variables.iter().map(|v| (v.name.as_str(), v.concept.as_str())).collect();
    let mut done: BTreeSet<&str> = BTreeSet::new();
    let mut out = String::new();

    // explicit stack to avoid recursion depth limits on deep graphs
    enum Step<'g> {
        Open(&'g str),
        Edge(&'g AmrEdge),
        Close,
    }
    let mut stack = vec![Step::Open(g.top.as_str())];
    while let Some(step) = stack.pop() {
        match step {
            Step::Open(var) => {
                done.insert(var);
                let _ = write!(out, "({var} / {}", concepts[var]);
                if let Some(a) = g.alignments.get(var) {
                    write_alignment(&mut out, a);
                }
                stack.push(Step::Close);
                if let Some(es) = children.get(var) {
                    for e in es.iter().rev() {
                        stack.push(Step::Edge(e));
                    }
                }
            }
            Step::Edge(e) => {
                let _ = write!(out, " {} ", e.role);
                match &e.target {
                    Target::Var(t) if !done.contains(t.as_str()) => {
                        stack.push(Step::Open(t.as_str()))
                    }
                    Target::Var(t) => out.push_str(t),
                    Target::Const(c) => write_constant(&mut out, c),
                }
            }
            Step::Close => out.push(')'),
        }
    }
    if let Some(v) = g.variables.iter().find(|v| !done.contains(v.name.as_str())) {
        return Err(AmrError::Invariant(format!("variable `{}` unreachable from top", v.name)));
    }
    Ok(out)
}
