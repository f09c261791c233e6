//! Tokenizer shared by the structured text formats (scenes, materials,
//! configs, datasets, checkpoints). Whitespace-separated tokens, `{`/`}`
//! block delimiters, `#` comments to end of line. Parsers built on this
//! reject unknown fields so typos fail loudly instead of being ignored.

use thiserror::Error;

#[derive(Debug, Error)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub msg: String,
}

pub struct Tokens<'a> {
    toks: Vec<(&'a str, u32)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    pub fn new(src: &'a str) -> Tokens<'a> {
        let mut toks = Vec::new();
        for (i, raw_line) in src.lines().enumerate() {
            let line_no = i as u32 + 1;
            let line = match raw_line.find('#') {
                Some(p) => &raw_line[..p],
                None => raw_line,
            };
            let mut rest = line;
            while let Some(start) = rest.find(|c: char| !c.is_whitespace()) {
                rest = &rest[start..];
                // Braces bind tightly; split them off even when glued to a word.
                let end = if rest.starts_with('{') || rest.starts_with('}') {
                    1
                } else {
                    rest.find(|c: char| c.is_whitespace() || c == '{' || c == '}')
                        .unwrap_or(rest.len())
                };
                toks.push((&rest[..end], line_no));
                rest = &rest[end..];
            }
        }
        Tokens { toks, pos: 0 }
    }

    pub fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(|t| t.0)
    }

    pub fn line(&self) -> u32 {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|t| t.1)
            .unwrap_or(0)
    }

    pub fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line(), msg: msg.into() }
    }

    pub fn next(&mut self) -> Result<&'a str, ParseError> {
        match self.toks.get(self.pos) {
            Some(&(t, _)) => {
                self.pos += 1;
                Ok(t)
            }
            None => Err(ParseError { line: self.line(), msg: "unexpected end of input".into() }),
        }
    }

    pub fn expect(&mut self, want: &str) -> Result<(), ParseError> {
        let got = self.next()?;
        if got == want {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.err(format!("expected `{want}`, found `{got}`")))
        }
    }

    pub fn f64(&mut self) -> Result<f64, ParseError> {
        let t = self.next()?;
        t.parse::<f64>().map_err(|_| {
            self.pos -= 1;
            self.err(format!("expected a number, found `{t}`"))
        })
    }

    pub fn u32(&mut self) -> Result<u32, ParseError> {
        let t = self.next()?;
        t.parse::<u32>().map_err(|_| {
            self.pos -= 1;
            self.err(format!("expected a non-negative integer, found `{t}`"))
        })
    }

    pub fn usize(&mut self) -> Result<usize, ParseError> {
        let t = self.next()?;
        t.parse::<usize>().map_err(|_| {
            self.pos -= 1;
            self.err(format!("expected a non-negative integer, found `{t}`"))
        })
    }

    pub fn u64(&mut self) -> Result<u64, ParseError> {
        let t = self.next()?;
        t.parse::<u64>().map_err(|_| {
            self.pos -= 1;
            self.err(format!("expected a non-negative integer, found `{t}`"))
        })
    }

    pub fn u64_hex(&mut self) -> Result<u64, ParseError> {
        let t = self.next()?;
        u64::from_str_radix(t, 16).map_err(|_| {
            self.pos -= 1;
            self.err(format!("expected a hex word, found `{t}`"))
        })
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn expect_end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err(format!("unexpected trailing token `{}`", self.peek().unwrap())))
        }
    }
}

/// Shortest decimal form that parses back to exactly the same f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Exact bit-level f64 encoding for checkpoint payloads.
pub fn fmt_f64_bits(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}
