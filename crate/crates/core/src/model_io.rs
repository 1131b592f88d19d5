//! Reading and writing word2vec embedding files.
//!
//! Two layouts are supported:
//!
//! - text: a header line `vocab_size dim`, then one line per word,
//!   `token v1 ... v_dim`;
//! - binary: the ASCII header `vocab_size dim\n`, then per word the token
//!   bytes terminated by a single space, `dim` little-endian `f32` values and
//!   an optional `\n`.
//!
//! word2vec writes its vocabulary sorted by descending corpus frequency, so
//! file order doubles as frequency rank. A separate count file can override
//! that order (see [`EmbeddingModel::reranked`]).
//!
//! Loading never repairs input. Non-finite components, zero vectors,
//! duplicate tokens and count mismatches are errors carrying the line (text)
//! or entry (binary) where they were found.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use crate::vector_ops;

/// Where in an input file a problem was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// 1-based line number in a text file.
    Line(usize),
    /// 1-based entry number in a binary file or an in-memory entry list.
    Entry(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {}", n),
            Location::Entry(n) => write!(f, "entry {}", n),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("{at}: expected {expected} vector components, found {found}")]
    ComponentCount {
        at: Location,
        expected: usize,
        found: usize,
    },
    #[error("{at}: cannot parse component {component} ({text:?})")]
    BadNumber {
        at: Location,
        component: usize,
        text: String,
    },
    #[error("{at}: non-finite value in component {component}")]
    NonFinite { at: Location, component: usize },
    #[error("{at}: duplicate token {token:?}")]
    DuplicateToken { at: Location, token: String },
    #[error("{at}: zero vector for token {token:?}")]
    ZeroVector { at: Location, token: String },
    #[error("{at}: invalid token {token:?}: {reason}")]
    InvalidToken {
        at: Location,
        token: String,
        reason: &'static str,
    },
    #[error("{at}: token is not valid UTF-8")]
    InvalidUtf8 { at: Location },
    #[error("{at}: file truncated")]
    Truncated { at: Location },
    #[error("header promises {expected} entries, found {found}")]
    EntryCount { expected: usize, found: String },
    #[error("count file line {line}: {reason}")]
    CountFile { line: usize, reason: String },
    #[error("limit must be in 1..={vocab_size}, got {limit}")]
    InvalidLimit { limit: usize, vocab_size: usize },
}

/// On-disk layout of a model file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFormat {
    Text,
    Binary,
    /// Decide by inspecting the first entry after the header.
    Auto,
}

impl FromStr for ModelFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ModelFormat::Text),
            "binary" => Ok(ModelFormat::Binary),
            "auto" => Ok(ModelFormat::Auto),
            other => Err(format!("unknown model format {:?}", other)),
        }
    }
}

/// An immutable, rank-ordered embedding model.
///
/// Vectors are stored in `f64`, which holds both `f32` binary input and
/// decimal text input without loss. Norms are precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    tokens: Vec<String>,
    vectors: Vec<f64>,
    norms: Vec<f64>,
    rank_of: HashMap<String, usize>,
}

struct ModelBuilder {
    dim: usize,
    tokens: Vec<String>,
    vectors: Vec<f64>,
    norms: Vec<f64>,
    rank_of: HashMap<String, usize>,
}

impl ModelBuilder {
    fn with_capacity(dim: usize, vocab_size: usize) -> Self {
        // The header is untrusted; don't let it reserve unbounded memory.
        let cap = vocab_size.min(1 << 20);
        ModelBuilder {
            dim,
            tokens: Vec::with_capacity(cap),
            vectors: Vec::with_capacity(cap.saturating_mul(dim).min(1 << 26)),
            norms: Vec::with_capacity(cap),
            rank_of: HashMap::with_capacity(cap),
        }
    }

    fn push(&mut self, token: String, vector: &[f64], at: Location) -> Result<(), ModelError> {
        if let Err(reason) = check_token(&token) {
            return Err(ModelError::InvalidToken { at, token, reason });
        }
        if vector.len() != self.dim {
            return Err(ModelError::ComponentCount {
                at,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if let Some(component) = vector.iter().position(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite {
                at,
                component: component + 1,
            });
        }
        let norm = vector_ops::norm(vector);
        if norm == 0.0 {
            return Err(ModelError::ZeroVector { at, token });
        }
        if self.rank_of.contains_key(&token) {
            return Err(ModelError::DuplicateToken { at, token });
        }
        self.rank_of.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.vectors.extend_from_slice(vector);
        self.norms.push(norm);
        Ok(())
    }

    fn len(&self) -> usize {
        self.tokens.len()
    }

    fn finish(self) -> EmbeddingModel {
        EmbeddingModel {
            dim: self.dim,
            tokens: self.tokens,
            vectors: self.vectors,
            norms: self.norms,
            rank_of: self.rank_of,
        }
    }
}

/// Tokens must be nonempty and contain no space. A leading newline is
/// reserved as the binary entry separator.
fn check_token(token: &str) -> Result<(), &'static str> {
    if token.is_empty() {
        Err("empty token")
    } else if token.contains(' ') {
        Err("token contains a space")
    } else if token.starts_with('\n') {
        Err("token starts with a newline")
    } else {
        Ok(())
    }
}

impl EmbeddingModel {
    /// Builds a model from `(token, vector)` pairs in rank order, applying
    /// the same checks as the file loaders.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(ModelError::Header("dimension must be positive".into()));
        }
        let mut builder = ModelBuilder::with_capacity(dim, 0);
        for (i, (token, vector)) in entries.into_iter().enumerate() {
            builder.push(token.into(), &vector, Location::Entry(i + 1))?;
        }
        if builder.len() == 0 {
            return Err(ModelError::Header("vocabulary must not be empty".into()));
        }
        Ok(builder.finish())
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Tokens in rank order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, rank: usize) -> &str {
        &self.tokens[rank]
    }

    pub fn vector(&self, rank: usize) -> &[f64] {
        &self.vectors[rank * self.dim..(rank + 1) * self.dim]
    }

    pub fn norm(&self, rank: usize) -> f64 {
        self.norms[rank]
    }

    /// 0-based frequency rank of `token`.
    pub fn rank_of(&self, token: &str) -> Option<usize> {
        self.rank_of.get(token).copied()
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = (&str, &[f64])> + '_ {
        self.tokens
            .iter()
            .zip(self.vectors.chunks_exact(self.dim))
            .map(|(t, v)| (t.as_str(), v))
    }

    /// The `limit` most frequent tokens.
    pub fn stable_set(&self, limit: usize) -> Result<&[String], ModelError> {
        if limit == 0 || limit > self.vocab_size() {
            return Err(ModelError::InvalidLimit {
                limit,
                vocab_size: self.vocab_size(),
            });
        }
        Ok(&self.tokens[..limit])
    }

    /// Reorders the vocabulary by descending count. Tokens missing from
    /// `counts` go after all counted tokens. Ties keep file order.
    pub fn reranked(&self, counts: &HashMap<String, u64>) -> EmbeddingModel {
        let mut order: Vec<usize> = (0..self.vocab_size()).collect();
        order.sort_by_key(|&r| match counts.get(&self.tokens[r]) {
            Some(&c) => (false, std::cmp::Reverse(c), r),
            None => (true, std::cmp::Reverse(0), r),
        });
        let mut builder = ModelBuilder::with_capacity(self.dim, self.vocab_size());
        for &r in &order {
            builder.tokens.push(self.tokens[r].clone());
            builder.vectors.extend_from_slice(self.vector(r));
            builder.norms.push(self.norms[r]);
        }
        for (rank, token) in builder.tokens.iter().enumerate() {
            builder.rank_of.insert(token.clone(), rank);
        }
        builder.finish()
    }
}

/// Loads a model from `path`.
pub fn load_model<P: AsRef<Path>>(path: P, format: ModelFormat) -> Result<EmbeddingModel, ModelError> {
    let file = File::open(path)?;
    read_model(BufReader::with_capacity(1 << 20, file), format)
}

pub fn load_text_model<P: AsRef<Path>>(path: P) -> Result<EmbeddingModel, ModelError> {
    load_model(path, ModelFormat::Text)
}

pub fn load_binary_model<P: AsRef<Path>>(path: P) -> Result<EmbeddingModel, ModelError> {
    load_model(path, ModelFormat::Binary)
}

pub fn read_model<R: BufRead>(mut reader: R, format: ModelFormat) -> Result<EmbeddingModel, ModelError> {
    let (vocab_size, dim) = read_header(&mut reader)?;
    let format = match format {
        ModelFormat::Auto => sniff_format(&mut reader, dim)?,
        f => f,
    };
    match format {
        ModelFormat::Binary => read_binary_body(reader, vocab_size, dim),
        _ => read_text_body(reader, vocab_size, dim),
    }
}

pub fn read_text_model<R: BufRead>(reader: R) -> Result<EmbeddingModel, ModelError> {
    read_model(reader, ModelFormat::Text)
}

pub fn read_binary_model<R: BufRead>(reader: R) -> Result<EmbeddingModel, ModelError> {
    read_model(reader, ModelFormat::Binary)
}

fn read_header<R: BufRead>(reader: &mut R) -> Result<(usize, usize), ModelError> {
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(ModelError::Header("missing header line".into()));
    }
    let text = std::str::from_utf8(&line).map_err(|_| ModelError::Header("header is not ASCII".into()))?;
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(ModelError::Header(format!(
            "expected \"vocab_size dim\", got {:?}",
            text.trim_end()
        )));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| ModelError::Header(format!("bad {} {:?}", what, s)))
    };
    let vocab_size = parse(fields[0], "vocabulary size")?;
    let dim = parse(fields[1], "dimension")?;
    if vocab_size == 0 || dim == 0 {
        return Err(ModelError::Header(
            "vocabulary size and dimension must be positive".into(),
        ));
    }
    Ok((vocab_size, dim))
}

/// Text iff the first line after the header splits into a token plus `dim`
/// parseable numbers.
fn sniff_format<R: BufRead>(reader: &mut R, dim: usize) -> Result<ModelFormat, ModelError> {
    let peek = reader.fill_buf()?;
    let line = match peek.iter().position(|&b| b == b'\n') {
        Some(end) => &peek[..end],
        None => peek,
    };
    let looks_like_text = std::str::from_utf8(line)
        .map(|s| {
            let mut fields = s.split_whitespace();
            fields.next().is_some() && {
                let rest: Vec<&str> = fields.collect();
                rest.len() == dim && rest.iter().all(|f| f.parse::<f64>().is_ok())
            }
        })
        .unwrap_or(false);
    Ok(if looks_like_text {
        ModelFormat::Text
    } else {
        ModelFormat::Binary
    })
}

fn read_text_body<R: BufRead>(mut reader: R, vocab_size: usize, dim: usize) -> Result<EmbeddingModel, ModelError> {
    let mut builder = ModelBuilder::with_capacity(dim, vocab_size);
    let mut buf = Vec::new();
    let mut vector = Vec::with_capacity(dim);
    let mut line_no = 1;

    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let at = Location::Line(line_no);
        let line = std::str::from_utf8(&buf).map_err(|_| ModelError::InvalidUtf8 { at })?;
        let mut fields = line.split_whitespace();
        let token = match fields.next() {
            Some(t) => t,
            None => continue,
        };
        if builder.len() == vocab_size {
            return Err(ModelError::EntryCount {
                expected: vocab_size,
                found: format!("more (extra entry at {})", at),
            });
        }
        vector.clear();
        for (i, field) in fields.enumerate() {
            let value = field.parse::<f64>().map_err(|_| ModelError::BadNumber {
                at,
                component: i + 1,
                text: field.to_owned(),
            })?;
            vector.push(value);
        }
        builder.push(token.to_owned(), &vector, at)?;
    }

    if builder.len() != vocab_size {
        return Err(ModelError::EntryCount {
            expected: vocab_size,
            found: builder.len().to_string(),
        });
    }
    Ok(builder.finish())
}

fn read_binary_body<R: BufRead>(mut reader: R, vocab_size: usize, dim: usize) -> Result<EmbeddingModel, ModelError> {
    let mut builder = ModelBuilder::with_capacity(dim, vocab_size);
    let mut token = Vec::new();
    let mut raw = vec![0f32; dim];
    let mut vector = vec![0f64; dim];

    for entry in 1..=vocab_size {
        let at = Location::Entry(entry);
        token.clear();
        reader.read_until(b' ', &mut token)?;
        if token.pop() != Some(b' ') {
            return Err(ModelError::Truncated { at });
        }
        // Optional newline left over from the previous entry.
        let token = match token.first() {
            Some(b'\n') => &token[1..],
            _ => &token[..],
        };
        let token = std::str::from_utf8(token)
            .map_err(|_| ModelError::InvalidUtf8 { at })?
            .to_owned();
        reader
            .read_f32_into::<LittleEndian>(&mut raw)
            .map_err(|e| match e.kind() {
                io::ErrorKind::UnexpectedEof => ModelError::Truncated { at },
                _ => ModelError::Io(e),
            })?;
        for (dst, src) in vector.iter_mut().zip(&raw) {
            *dst = f64::from(*src);
        }
        builder.push(token, &vector, at)?;
    }

    let mut rest = Vec::new();
    reader.read_to_end(&mut rest)?;
    if !(rest.is_empty() || rest == b"\n") {
        return Err(ModelError::EntryCount {
            expected: vocab_size,
            found: format!("more ({} trailing bytes)", rest.len()),
        });
    }
    Ok(builder.finish())
}

/// Writes the model in text format. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_text_model<W: Write>(model: &EmbeddingModel, mut w: W) -> Result<(), ModelError> {
    writeln!(w, "{} {}", model.vocab_size(), model.dim())?;
    for (i, (token, vector)) in model.entries().enumerate() {
        if token.chars().any(char::is_whitespace) {
            return Err(ModelError::InvalidToken {
                at: Location::Entry(i + 1),
                token: token.to_owned(),
                reason: "whitespace cannot be written in text format",
            });
        }
        w.write_all(token.as_bytes())?;
        for x in vector {
            write!(w, " {}", x)?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the model in word2vec binary format, narrowing values to `f32`.
pub fn write_binary_model<W: Write>(model: &EmbeddingModel, mut w: W) -> Result<(), ModelError> {
    writeln!(w, "{} {}", model.vocab_size(), model.dim())?;
    for (token, vector) in model.entries() {
        w.write_all(token.as_bytes())?;
        w.write_all(b" ")?;
        for &x in vector {
            w.write_f32::<LittleEndian>(x as f32)?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_model<P: AsRef<Path>>(model: &EmbeddingModel, path: P, format: ModelFormat) -> Result<(), ModelError> {
    let w = BufWriter::new(File::create(path)?);
    match format {
        ModelFormat::Binary => write_binary_model(model, w),
        _ => write_text_model(model, w),
    }
}

/// Reads a `token<TAB>count` file.
pub fn read_count_file<R: BufRead>(reader: R) -> Result<HashMap<String, u64>, ModelError> {
    let mut counts = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (token, count) = line.split_once('\t').ok_or_else(|| ModelError::CountFile {
            line: line_no,
            reason: "expected token<TAB>count".into(),
        })?;
        let count = count.trim().parse::<u64>().map_err(|_| ModelError::CountFile {
            line: line_no,
            reason: format!("bad count {:?}", count),
        })?;
        if counts.insert(token.to_owned(), count).is_some() {
            return Err(ModelError::CountFile {
                line: line_no,
                reason: format!("duplicate token {:?}", token),
            });
        }
    }
    Ok(counts)
}

pub fn load_count_file<P: AsRef<Path>>(path: P) -> Result<HashMap<String, u64>, ModelError> {
    read_count_file(BufReader::new(File::open(path)?))
}
