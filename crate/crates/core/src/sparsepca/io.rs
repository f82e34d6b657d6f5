//! Bag-of-words corpus files.
//!
//! `docword`: three header lines (documents, vocabulary size, number of
//! entries) followed by `docID wordID count` lines with 1-based indices.
//! `vocab`: one token per line, the line number being the word ID.

use std::io::BufRead;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Docword {
    pub docs: usize,
    pub words: usize,
    /// 0-based `(doc, word, count)`.
    pub entries: Vec<(usize, usize, f64)>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn io_err(line: usize, e: std::io::Error) -> Error {
    parse_err(line, format!("read error: {e}"))
}

pub fn parse_docword<R: BufRead>(reader: R) -> Result<Docword> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut header = [0usize; 3];
    let names = ["document count", "vocabulary size", "entry count"];
    for (slot, name) in header.iter_mut().zip(names) {
        let (no, line) = loop {
            match lines.next() {
                Some((_, Ok(l))) if l.trim().is_empty() => continue,
                Some((no, Ok(l))) => break (no, l),
                Some((no, Err(e))) => return Err(io_err(no, e)),
                None => return Err(parse_err(0, format!("missing {name} header"))),
            }
        };
        *slot = line
            .trim()
            .parse()
            .map_err(|_| parse_err(no, format!("bad {name} `{}`", line.trim())))?;
    }
    let [docs, words, nnz] = header;
    if docs == 0 || words == 0 {
        return Err(parse_err(2, "empty corpus"));
    }
    let mut entries = Vec::with_capacity(nnz);
    for (no, line) in lines {
        let line = line.map_err(|e| io_err(no, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(no, format!("expected `docID wordID count`, got `{t}`")));
        }
        let doc: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(no, format!("bad document id `{}`", fields[0])))?;
        let word: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(no, format!("bad word id `{}`", fields[1])))?;
        let count: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(no, format!("bad count `{}`", fields[2])))?;
        if !(1..=docs).contains(&doc) {
            return Err(parse_err(no, format!("document id {doc} outside 1..={docs}")));
        }
        if !(1..=words).contains(&word) {
            return Err(parse_err(no, format!("word id {word} outside 1..={words}")));
        }
        if !count.is_finite() {
            return Err(parse_err(no, "non-finite count"));
        }
        if entries.len() == nnz {
            return Err(parse_err(no, format!("more than the declared {nnz} entries")));
        }
        entries.push((doc - 1, word - 1, count));
    }
    if entries.len() != nnz {
        return Err(parse_err(
            3,
            format!("declared {nnz} entries but found {}", entries.len()),
        ));
    }
    Ok(Docword {
        docs,
        words,
        entries,
    })
}

/// Reads one token per line; trailing blank lines are ignored.
pub fn parse_vocab<R: BufRead>(reader: R, expected: usize) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        tokens.push(line.map_err(|e| io_err(i + 1, e))?.trim().to_string());
    }
    while tokens.last().is_some_and(|t| t.is_empty()) {
        tokens.pop();
    }
    if let Some(i) = tokens.iter().position(|t| t.is_empty()) {
        return Err(parse_err(i + 1, "empty token"));
    }
    if tokens.len() != expected {
        return Err(parse_err(
            tokens.len() + 1,
            format!("vocabulary has {} tokens, expected {expected}", tokens.len()),
        ));
    }
    Ok(tokens)
}
