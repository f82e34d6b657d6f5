//! Line-oriented text format for problem instances.
//!
//! ```text
//! # comment
//! n 3
//! m 2
//! r_min 1
//! r_max 1
//! P                # n rows follow, or `P sparse K` and K lines `i j v` (1-based)
//! 1 0 0
//! 0 2 0
//! 0 0 3
//! q 1 0 -1
//! A                # m rows follow
//! 1 1 1
//! 0 1 0
//! b 1 2
//! x0 1 0 0         # optional
//! ```
//!
//! Numbers are written with the shortest representation that parses back
//! to the same `f64`.

use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector};
use normqp::{NormQP, Result as CoreResult};

#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemFile {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub x0: Option<DVector<f64>>,
}

impl ProblemFile {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn from_problem(prob: &NormQP) -> ProblemFile {
        ProblemFile {
            p: prob.p.clone(),
            q: prob.q.clone(),
            a: prob.a.clone(),
            b: prob.b.clone(),
            r_min: prob.r_min,
            r_max: prob.r_max,
            x0: None,
        }
    }

    pub fn to_problem(&self) -> CoreResult<NormQP> {
        NormQP::new(
            self.p.clone(),
            self.q.clone(),
            self.a.clone(),
            self.b.clone(),
            self.r_min,
            self.r_max,
        )
    }

    pub fn parse(text: &str) -> Result<ProblemFile, ParseError> {
        Parser::new(text).parse()
    }

    pub fn print(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, vals: &mut dyn Iterator<Item = f64>| {
            let mut first = true;
            for v in vals {
                if !first {
                    s.push(' ');
                }
                first = false;
                let _ = write!(s, "{v:?}");
            }
            s.push('\n');
        };
        let _ = writeln!(s, "n {}", self.n());
        let _ = writeln!(s, "m {}", self.m());
        let _ = writeln!(s, "r_min {:?}", self.r_min);
        let _ = writeln!(s, "r_max {:?}", self.r_max);
        s.push_str("P\n");
        for i in 0..self.n() {
            row(&mut s, &mut self.p.row(i).iter().copied());
        }
        s.push_str("q ");
        row(&mut s, &mut self.q.iter().copied());
        s.push_str("A\n");
        for i in 0..self.m() {
            row(&mut s, &mut self.a.row(i).iter().copied());
        }
        s.push_str("b");
        if self.m() > 0 {
            s.push(' ');
        }
        row(&mut s, &mut self.b.iter().copied());
        if let Some(x0) = &self.x0 {
            s.push_str("x0 ");
            row(&mut s, &mut x0.iter().copied());
        }
        s
    }
}

/// Whitespace-separated numbers; NaN and infinities are rejected.
pub fn parse_numbers(text: &str, line: usize) -> Result<Vec<f64>, ParseError> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| parse_number(t, line))
        .collect()
}

fn parse_number(tok: &str, line: usize) -> Result<f64, ParseError> {
    let v: f64 = tok.parse().map_err(|_| ParseError {
        line,
        message: format!("bad number `{tok}`"),
    })?;
    if !v.is_finite() {
        return Err(ParseError {
            line,
            message: format!("non-finite number `{tok}`"),
        });
    }
    Ok(v)
}

struct Parser<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Parser { lines, pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(1, |l| l.0)
    }

    fn err<T>(&self, line: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            line,
            message: message.into(),
        })
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), ParseError> {
        match self.lines.get(self.pos) {
            Some(&l) => {
                self.pos += 1;
                Ok(l)
            }
            None => self.err(self.last_line(), format!("unexpected end of file, expected {what}")),
        }
    }

    /// Next line, which must start with `key`; returns the rest.
    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str), ParseError> {
        let (no, l) = self.next(&format!("`{key}`"))?;
        let (head, rest) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
        if head != key {
            return self.err(no, format!("expected `{key}`, found `{head}`"));
        }
        Ok((no, rest.trim()))
    }

    fn count(&mut self, key: &str) -> Result<usize, ParseError> {
        let (no, rest) = self.keyed(key)?;
        rest.parse().or_else(|_| self.err(no, format!("bad {key} `{rest}`")))
    }

    fn scalar(&mut self, key: &str) -> Result<f64, ParseError> {
        let (no, rest) = self.keyed(key)?;
        let v = parse_numbers(rest, no)?;
        if v.len() != 1 {
            return self.err(no, format!("`{key}` takes one number"));
        }
        Ok(v[0])
    }

    fn vector(&mut self, key: &str, len: usize) -> Result<DVector<f64>, ParseError> {
        let (no, rest) = self.keyed(key)?;
        let v = parse_numbers(rest, no)?;
        if v.len() != len {
            return self.err(no, format!("`{key}` needs {len} numbers, found {}", v.len()));
        }
        Ok(DVector::from_vec(v))
    }

    fn dense_rows(&mut self, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, ParseError> {
        let mut out = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let (no, l) = self.next(&format!("row {} of {what}", i + 1))?;
            let v = parse_numbers(l, no)?;
            if v.len() != cols {
                return self.err(no, format!("row of {what} needs {cols} numbers, found {}", v.len()));
            }
            for (j, x) in v.into_iter().enumerate() {
                out[(i, j)] = x;
            }
        }
        Ok(out)
    }

    fn matrix_p(&mut self, n: usize) -> Result<DMatrix<f64>, ParseError> {
        let (no, rest) = self.keyed("P")?;
        if rest.is_empty() {
            return self.dense_rows(n, n, "P");
        }
        let parts: Vec<&str> = rest.split_whitespace().collect();
        let k: usize = match parts.as_slice() {
            ["sparse", k] => k.parse().or_else(|_| self.err(no, format!("bad count `{k}`")))?,
            _ => return self.err(no, format!("expected `P` or `P sparse K`, found `P {rest}`")),
        };
        let mut p = DMatrix::zeros(n, n);
        for _ in 0..k {
            let (no, l) = self.next("`i j v` entry of P")?;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return self.err(no, "sparse entry needs `i j v`");
            }
            let idx = |t: &str| -> Result<usize, ParseError> {
                match t.parse::<usize>() {
                    Ok(i) if (1..=n).contains(&i) => Ok(i - 1),
                    _ => self.err(no, format!("index `{t}` outside 1..={n}")),
                }
            };
            let (i, j) = (idx(f[0])?, idx(f[1])?);
            let v = parse_number(f[2], no)?;
            p[(i, j)] += v;
            if i != j {
                p[(j, i)] += v;
            }
        }
        Ok(p)
    }

    fn parse(mut self) -> Result<ProblemFile, ParseError> {
        let n = self.count("n")?;
        if n == 0 {
            return self.err(self.lines[0].0, "n must be positive");
        }
        let m = self.count("m")?;
        let r_min = self.scalar("r_min")?;
        let r_max = self.scalar("r_max")?;
        let p = self.matrix_p(n)?;
        let q = self.vector("q", n)?;
        let (a_line, a_rest) = self.keyed("A")?;
        if !a_rest.is_empty() {
            return self.err(a_line, "`A` takes no arguments");
        }
        let a = self.dense_rows(m, n, "A")?;
        let b = if m == 0 {
            let (no, rest) = self.keyed("b")?;
            if !rest.is_empty() {
                return self.err(no, "`b` must be empty when m = 0");
            }
            DVector::zeros(0)
        } else {
            self.vector("b", m)?
        };
        let x0 = if self.pos < self.lines.len() {
            Some(self.vector("x0", n)?)
        } else {
            None
        };
        if let Some(&(no, l)) = self.lines.get(self.pos) {
            return self.err(no, format!("unexpected trailing line `{l}`"));
        }
        Ok(ProblemFile {
            p,
            q,
            a,
            b,
            r_min,
            r_max,
            x0,
        })
    }
}
