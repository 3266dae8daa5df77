//! Plain-text topology fixtures.
//!
//! One directive per line, `#` starts a comment:
//!
//! ```text
//! S A            # undirected edge
//! S 10.0 20.0    # optional coordinates
//! latency S A 1000   # per-link latency in microseconds (ideal channel)
//! E              # isolated node declaration
//! ```
//!
//! Node ids are assigned in order of first appearance.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::engine::SimTime;
use crate::world::{NodeId, Position};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("reading fixture {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Fixture {
    pub names: Vec<String>,
    pub positions: Vec<Option<Position>>,
    pub edges: Vec<(NodeId, NodeId)>,
    pub latencies: BTreeMap<(NodeId, NodeId), SimTime>,
}

impl Fixture {
    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn id(&self, name: &str) -> Option<NodeId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| NodeId(i as u32))
    }

    fn intern(&mut self, name: &str) -> NodeId {
        if let Some(id) = self.id(name) {
            return id;
        }
        self.names.push(name.to_string());
        self.positions.push(None);
        NodeId(self.names.len() as u32 - 1)
    }

    pub fn add_node(&mut self, name: &str) -> NodeId {
        self.intern(name)
    }

    /// Adds an undirected edge, interning both endpoints. Duplicates are ignored.
    pub fn add_edge(&mut self, a: &str, b: &str) -> (NodeId, NodeId) {
        let ia = self.intern(a);
        let ib = self.intern(b);
        let key = if ia <= ib { (ia, ib) } else { (ib, ia) };
        if !self.edges.contains(&key) {
            self.edges.push(key);
        }
        key
    }

    pub fn set_latency(&mut self, a: NodeId, b: NodeId, latency: SimTime) {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.latencies.insert(key, latency);
    }

    pub fn parse(text: &str) -> Result<Self, FixtureError> {
        let mut fx = Fixture::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            let err = |msg: &str| FixtureError::Syntax {
                line,
                msg: msg.to_string(),
            };
            match toks.as_slice() {
                ["latency", a, b, us] => {
                    let us: u64 = us
                        .parse()
                        .map_err(|_| err("latency must be an integer number of microseconds"))?;
                    if a == b {
                        return Err(err("latency on a self-loop"));
                    }
                    let ia = fx.intern(a);
                    let ib = fx.intern(b);
                    fx.set_latency(ia, ib, SimTime(us));
                }
                [node, x, y] => {
                    let x: f64 = x.parse().map_err(|_| err("bad x coordinate"))?;
                    let y: f64 = y.parse().map_err(|_| err("bad y coordinate"))?;
                    let id = fx.intern(node);
                    fx.positions[id.index()] = Some(Position::new(x, y));
                }
                [a, b] => {
                    if a == b {
                        return Err(err("self-loop edge"));
                    }
                    fx.add_edge(a, b);
                }
                [node] => {
                    fx.intern(node);
                }
                _ => {
                    return Err(err(
                        "expected `<a> <b>`, `<node> <x> <y>` or `latency <a> <b> <us>`",
                    ))
                }
            }
        }
        Ok(fx)
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for name in &self.names {
            let _ = writeln!(out, "{name}");
        }
        for (i, p) in self.positions.iter().enumerate() {
            if let Some(p) = p {
                let _ = writeln!(out, "{} {} {}", self.names[i], p.x, p.y);
            }
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "{} {}", self.names[a.index()], self.names[b.index()]);
        }
        for ((a, b), lat) in &self.latencies {
            let _ = writeln!(
                out,
                "latency {} {} {}",
                self.names[a.index()],
                self.names[b.index()],
                lat.0
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_directive_kinds() {
        let fx = Fixture::parse(
            "# demo\nS A\nA B   # trailing comment\nS 1.5 2\nlatency A B 4000\nLONE\n",
        )
        .unwrap();
        assert_eq!(fx.names, vec!["S", "A", "B", "LONE"]);
        assert_eq!(
            fx.edges,
            vec![(NodeId(0), NodeId(1)), (NodeId(1), NodeId(2))]
        );
        assert_eq!(fx.positions[0], Some(Position::new(1.5, 2.0)));
        assert_eq!(fx.latencies[&(NodeId(1), NodeId(2))], SimTime(4000));
    }

    #[test]
    fn rejects_garbage_with_line_number() {
        let err = Fixture::parse("S A\nS A B C D\n").unwrap_err();
        assert!(err.to_string().starts_with("line 2"), "{err}");
        assert!(Fixture::parse("X X\n").is_err());
        assert!(Fixture::parse("latency A B soon\n").is_err());
    }

    #[test]
    fn text_roundtrip() {
        let src = "S A\nA B\nS 1 2\nlatency S A 10\n";
        let fx = Fixture::parse(src).unwrap();
        assert_eq!(Fixture::parse(&fx.to_text()).unwrap(), fx);
    }
}
