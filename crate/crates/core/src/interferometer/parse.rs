//! Line-oriented interferometer DSL.
//!
//! ```text
//! source ID
//! bs ID theta FLOAT [phi FLOAT]
//! mirror ID
//! detector ID
//! chan ID: NODE.PORT -> NODE.PORT
//! probe ID on CHAN[+CHAN...] eps FLOAT [slot INT]
//! ```
//!
//! `#` starts a comment that runs to the end of the line.

use super::{ChannelSpec, InterferometerSpec, NodeKind, NodeSpec, Port, PortRef, ProbeDecl};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Colon,
    Arrow,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    column: usize,
}

fn lex(line: &str, line_no: usize) -> Result<Vec<Token>> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let column = i + 1;
        if c == ':' {
            out.push(Token {
                tok: Tok::Colon,
                column,
            });
            i += 1;
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(Token {
                tok: Tok::Arrow,
                column,
            });
            i += 2;
        } else {
            let start = i;
            while i < chars.len() {
                let c = chars[i];
                if c.is_whitespace() || c == ':' || c == '#' {
                    break;
                }
                if c == '-' && chars.get(i + 1) == Some(&'>') {
                    break;
                }
                if !(c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '+' | '-')) {
                    return Err(Error::Syntax {
                        line: line_no,
                        column: i + 1,
                        message: format!("unexpected character {c:?}"),
                    });
                }
                i += 1;
            }
            out.push(Token {
                tok: Tok::Word(chars[start..i].iter().collect()),
                column,
            });
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    eol_column: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn here(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|t| t.column)
            .unwrap_or(self.eol_column)
    }

    fn word(&mut self, what: &str) -> Result<(String, usize)> {
        match self.toks.get(self.pos) {
            Some(Token {
                tok: Tok::Word(w),
                column,
            }) => {
                self.pos += 1;
                Ok((w.clone(), *column))
            }
            _ => Err(self.err(self.here(), format!("expected {what}"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        let (w, column) = self.word(what)?;
        if is_ident(&w) {
            Ok(w)
        } else {
            Err(self.err(column, format!("invalid {what} {w:?}")))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let (w, column) = self.word(kw)?;
        if w == kw {
            Ok(())
        } else {
            Err(self.err(column, format!("expected {kw:?}, found {w:?}")))
        }
    }

    fn float(&mut self, what: &str) -> Result<f64> {
        let (w, column) = self.word(what)?;
        match w.parse::<f64>() {
            Ok(x) if x.is_finite() && looks_numeric(&w) => Ok(x),
            _ => Err(self.err(column, format!("invalid {what} {w:?}"))),
        }
    }

    fn integer(&mut self, what: &str) -> Result<usize> {
        let (w, column) = self.word(what)?;
        w.parse::<usize>()
            .map_err(|_| self.err(column, format!("invalid {what} {w:?}")))
    }

    fn punct(&mut self, tok: Tok, what: &str) -> Result<()> {
        match self.toks.get(self.pos) {
            Some(t) if t.tok == tok => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(self.here(), format!("expected {what}"))),
        }
    }

    fn peek_word(&self) -> Option<&str> {
        match self.toks.get(self.pos) {
            Some(Token {
                tok: Tok::Word(w), ..
            }) => Some(w),
            _ => None,
        }
    }

    fn finish(&self) -> Result<()> {
        if self.pos < self.toks.len() {
            Err(self.err(self.here(), "unexpected trailing input"))
        } else {
            Ok(())
        }
    }

    fn port(&mut self) -> Result<PortRef> {
        let (w, column) = self.word("port")?;
        let parsed = w
            .split_once('.')
            .and_then(|(node, port)| Some((node, Port::from_name(port)?)))
            .filter(|(node, _)| is_ident(node));
        match parsed {
            Some((node, port)) => Ok(PortRef {
                node: node.to_string(),
                port,
            }),
            None => Err(self.err(column, format!("invalid port {w:?}"))),
        }
    }

    fn chanexpr(&mut self) -> Result<Vec<String>> {
        let (w, column) = self.word("channel expression")?;
        let parts: Vec<&str> = w.split('+').collect();
        if parts.iter().all(|p| is_ident(p)) {
            Ok(parts.into_iter().map(String::from).collect())
        } else {
            Err(self.err(column, format!("invalid channel expression {w:?}")))
        }
    }
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

// `f64::from_str` accepts "inf", "NaN" and friends; decimal literals only here.
fn looks_numeric(s: &str) -> bool {
    s.chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
}

/// Parse and validate an interferometer description.
pub fn parse_itf(text: &str) -> Result<InterferometerSpec> {
    let mut nodes = Vec::new();
    let mut channels = Vec::new();
    let mut probes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let toks = lex(line, line_no)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor {
            toks: &toks,
            pos: 0,
            line: line_no,
            eol_column: line.chars().count() + 1,
        };
        let (kw, column) = cur.word("statement")?;
        match kw.as_str() {
            "source" | "mirror" | "detector" => {
                let name = cur.ident("node name")?;
                let kind = match kw.as_str() {
                    "source" => NodeKind::Source,
                    "mirror" => NodeKind::Mirror,
                    _ => NodeKind::Detector,
                };
                nodes.push(NodeSpec { name, kind });
            }
            "bs" => {
                let name = cur.ident("node name")?;
                cur.keyword("theta")?;
                let theta = cur.float("theta")?;
                let phi = if cur.peek_word() == Some("phi") {
                    cur.pos += 1;
                    cur.float("phi")?
                } else {
                    0.0
                };
                nodes.push(NodeSpec {
                    name,
                    kind: NodeKind::BeamSplitter { theta, phi },
                });
            }
            "chan" => {
                let name = cur.ident("channel name")?;
                cur.punct(Tok::Colon, "':'")?;
                let from = cur.port()?;
                cur.punct(Tok::Arrow, "'->'")?;
                let to = cur.port()?;
                channels.push(ChannelSpec { name, from, to });
            }
            "probe" => {
                let name = cur.ident("probe name")?;
                cur.keyword("on")?;
                let targets = cur.chanexpr()?;
                cur.keyword("eps")?;
                let epsilon = cur.float("epsilon")?;
                let slot = if cur.peek_word() == Some("slot") {
                    cur.pos += 1;
                    Some(cur.integer("slot")?)
                } else {
                    None
                };
                probes.push(ProbeDecl {
                    name,
                    targets,
                    epsilon,
                    slot,
                });
            }
            other => return Err(cur.err(column, format!("unknown keyword {other:?}"))),
        }
        cur.finish()?;
    }
    InterferometerSpec::new(nodes, channels, probes)
}
