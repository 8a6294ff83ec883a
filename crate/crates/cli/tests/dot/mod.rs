//! Parser for the DOT language subset graph renderers accept: strict or
//! plain `graph`/`digraph` bodies made of node, edge, attribute and
//! `ID = ID` statements. Subgraphs and ports are not used by the CLI and are
//! rejected.

#![allow(dead_code)]

use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Eq,
    UndirectedEdge,
    DirectedEdge,
}

fn tokenize(src: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '/' if chars.get(i + 1) == Some(&'*') => {
                i += 2;
                while i + 1 < chars.len() && !(chars[i] == '*' && chars[i + 1] == '/') {
                    i += 1;
                }
                if i + 1 >= chars.len() {
                    return Err("unterminated comment".into());
                }
                i += 2;
            }
            '{' => (out.push(Tok::LBrace), i += 1).1,
            '}' => (out.push(Tok::RBrace), i += 1).1,
            '[' => (out.push(Tok::LBracket), i += 1).1,
            ']' => (out.push(Tok::RBracket), i += 1).1,
            ';' => (out.push(Tok::Semi), i += 1).1,
            ',' => (out.push(Tok::Comma), i += 1).1,
            '=' => (out.push(Tok::Eq), i += 1).1,
            '-' if chars.get(i + 1) == Some(&'-') => (out.push(Tok::UndirectedEdge), i += 2).1,
            '-' if chars.get(i + 1) == Some(&'>') => (out.push(Tok::DirectedEdge), i += 2).1,
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err("unterminated string".into()),
                        Some('"') => break,
                        Some('\\') if chars.get(i + 1) == Some(&'"') => {
                            s.push('"');
                            i += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                i += 1;
                out.push(Tok::Id(s));
            }
            c if c == '-' || c == '.' || c.is_ascii_digit() => {
                // numeral: [-]?(.[0-9]+ | [0-9]+(.[0-9]*)?)
                let start = i;
                if c == '-' {
                    i += 1;
                }
                let mut digits = 0;
                let mut dots = 0;
                while let Some(&ch) = chars.get(i) {
                    if ch.is_ascii_digit() {
                        digits += 1;
                    } else if ch == '.' && dots == 0 {
                        dots += 1;
                    } else {
                        break;
                    }
                    i += 1;
                }
                if digits == 0 {
                    return Err(format!("bad numeral at offset {start}"));
                }
                if chars.get(i).is_some_and(|ch| ch.is_alphabetic() || *ch == '_') {
                    return Err(format!("numeral followed by a letter at offset {i}"));
                }
                out.push(Tok::Id(chars[start..i].iter().collect()));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while chars.get(i).is_some_and(|ch| ch.is_alphanumeric() || *ch == '_') {
                    i += 1;
                }
                out.push(Tok::Id(chars[start..i].iter().collect()));
            }
            other => return Err(format!("unexpected character {other:?} at offset {i}")),
        }
    }
    Ok(out)
}

pub type Attributes = Vec<(String, String)>;

/// Nodes and undirected edges (as ordered `(min, max)` pairs) of a parsed
/// graph, plus each edge's attributes.
#[derive(Debug, Default)]
pub struct DotGraph {
    pub directed: bool,
    pub nodes: BTreeSet<String>,
    pub edges: Vec<(String, String, Attributes)>,
}

impl DotGraph {
    pub fn edge_set(&self) -> BTreeSet<(String, String)> {
        self.edges
            .iter()
            .map(|(a, b, _)| if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) })
            .collect()
    }
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

fn is_keyword(s: &str, kw: &str) -> bool {
    s.eq_ignore_ascii_case(kw)
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), String> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(format!("expected {want:?}, found {other:?}")),
        }
    }

    fn id(&mut self) -> Result<String, String> {
        match self.next() {
            Some(Tok::Id(s)) => Ok(s),
            other => Err(format!("expected an identifier, found {other:?}")),
        }
    }

    fn attr_lists(&mut self) -> Result<Attributes, String> {
        let mut attrs = Vec::new();
        while self.peek() == Some(&Tok::LBracket) {
            self.next();
            loop {
                match self.peek() {
                    Some(Tok::RBracket) => {
                        self.next();
                        break;
                    }
                    Some(Tok::Id(_)) => {
                        let k = self.id()?;
                        self.expect(Tok::Eq)?;
                        let v = self.id()?;
                        attrs.push((k, v));
                        if matches!(self.peek(), Some(Tok::Semi | Tok::Comma)) {
                            self.next();
                        }
                    }
                    other => return Err(format!("bad attribute list near {other:?}")),
                }
            }
        }
        Ok(attrs)
    }

    fn graph(&mut self) -> Result<DotGraph, String> {
        let mut head = self.id()?;
        if is_keyword(&head, "strict") {
            head = self.id()?;
        }
        let directed = if is_keyword(&head, "graph") {
            false
        } else if is_keyword(&head, "digraph") {
            true
        } else {
            return Err(format!("expected `graph` or `digraph`, found `{head}`"));
        };
        if matches!(self.peek(), Some(Tok::Id(_))) {
            self.next();
        }
        self.expect(Tok::LBrace)?;
        let mut g = DotGraph { directed, ..DotGraph::default() };
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.next();
                    break;
                }
                Some(Tok::Semi) => {
                    self.next();
                }
                Some(Tok::Id(_)) => self.statement(&mut g)?,
                other => return Err(format!("unexpected token {other:?} in graph body")),
            }
        }
        if self.pos != self.toks.len() {
            return Err("trailing tokens after the closing brace".into());
        }
        Ok(g)
    }

    fn statement(&mut self, g: &mut DotGraph) -> Result<(), String> {
        let first = self.id()?;
        if ["graph", "node", "edge"].iter().any(|kw| is_keyword(&first, kw)) {
            self.attr_lists()?;
            return Ok(());
        }
        if is_keyword(&first, "subgraph") {
            return Err("subgraphs are not expected".into());
        }
        if self.peek() == Some(&Tok::Eq) {
            self.next();
            self.id()?;
            return Ok(());
        }
        let mut chain = vec![first];
        loop {
            match self.peek() {
                Some(Tok::UndirectedEdge) if !g.directed => {}
                Some(Tok::DirectedEdge) if g.directed => {}
                Some(Tok::UndirectedEdge | Tok::DirectedEdge) => {
                    return Err("edge operator does not match the graph kind".into())
                }
                _ => break,
            }
            self.next();
            chain.push(self.id()?);
        }
        let attrs = self.attr_lists()?;
        for n in &chain {
            g.nodes.insert(n.clone());
        }
        for pair in chain.windows(2) {
            g.edges.push((pair[0].clone(), pair[1].clone(), attrs.clone()));
        }
        Ok(())
    }
}

pub fn parse(src: &str) -> Result<DotGraph, String> {
    let toks = tokenize(src)?;
    Parser { toks, pos: 0 }.graph()
}
