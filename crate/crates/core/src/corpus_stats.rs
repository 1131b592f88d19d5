//! Unigram and adjacent-bigram counts over a whitespace-tokenized corpus.
//!
//! Corpora such as the word2vec demo sets are a single multi-hundred-MB
//! line, so the streaming counter reads fixed-size blocks and never splits
//! by line. [`count_text`] counts an in-memory buffer in parallel chunks and
//! stitches the bigram across each chunk boundary.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use rayon::prelude::*;
use serde::Serialize;

const READ_BLOCK: usize = 1 << 16;

/// Token and adjacent-pair counts. Tokens are interned; ids are internal.
#[derive(Debug, Clone, Default)]
pub struct FrequencyTable {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    unigram: Vec<u64>,
    bigram: HashMap<(u32, u32), u64>,
    total_tokens: u64,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = u32::try_from(self.tokens.len()).expect("more than 2^32 distinct tokens");
        self.tokens.push(token.to_owned());
        self.ids.insert(token.to_owned(), id);
        self.unigram.push(0);
        id
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Number of distinct tokens.
    pub fn distinct(&self) -> usize {
        self.tokens.len()
    }

    pub fn unigram(&self, token: &str) -> u64 {
        self.ids.get(token).map_or(0, |&id| self.unigram[id as usize])
    }

    /// Times `first` was immediately followed by `second`.
    pub fn bigram(&self, first: &str, second: &str) -> u64 {
        match (self.ids.get(first), self.ids.get(second)) {
            (Some(&a), Some(&b)) => self.bigram.get(&(a, b)).copied().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn unigrams(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.tokens.iter().map(String::as_str).zip(self.unigram.iter().copied())
    }

    pub fn bigrams(&self) -> impl Iterator<Item = ((&str, &str), u64)> + '_ {
        self.bigram
            .iter()
            .map(|(&(a, b), &c)| ((self.tokens[a as usize].as_str(), self.tokens[b as usize].as_str()), c))
    }

    fn add_bigram(&mut self, a: u32, b: u32, count: u64) {
        *self.bigram.entry((a, b)).or_insert(0) += count;
    }

    /// Adds `other` into `self`. Bigrams spanning the seam are not added.
    pub fn merge(&mut self, other: &FrequencyTable) {
        let remap: Vec<u32> = other.tokens.iter().map(|t| self.intern(t)).collect();
        for (id, &c) in other.unigram.iter().enumerate() {
            self.unigram[remap[id] as usize] += c;
        }
        for (&(a, b), &c) in &other.bigram {
            self.add_bigram(remap[a as usize], remap[b as usize], c);
        }
        self.total_tokens += other.total_tokens;
    }

    /// Writes `token<TAB>count` lines, most frequent first, ties by token.
    pub fn write_unigrams<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut rows: Vec<(&str, u64)> = self.unigrams().collect();
        rows.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        for (t, c) in rows {
            writeln!(w, "{}\t{}", t, c)?;
        }
        w.flush()
    }

    /// Writes `first second<TAB>count` lines, most frequent first.
    pub fn write_bigrams<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut rows: Vec<((&str, &str), u64)> = self.bigrams().collect();
        rows.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        for ((a, b), c) in rows {
            writeln!(w, "{} {}\t{}", a, b, c)?;
        }
        w.flush()
    }
}

impl PartialEq for FrequencyTable {
    /// Tables are equal when they hold the same counts, whatever the
    /// interning order.
    fn eq(&self, other: &Self) -> bool {
        self.total_tokens == other.total_tokens
            && self.tokens.len() == other.tokens.len()
            && self.bigram.len() == other.bigram.len()
            && self.unigrams().all(|(t, c)| other.unigram(t) == c)
            && self.bigrams().all(|((a, b), c)| other.bigram(a, b) == c)
    }
}

/// Incremental counter fed one token at a time.
#[derive(Debug, Default)]
pub struct Counter {
    table: FrequencyTable,
    lowercase: bool,
    first: Option<u32>,
    prev: Option<u32>,
}

impl Counter {
    pub fn new(lowercase: bool) -> Self {
        Counter {
            lowercase,
            ..Default::default()
        }
    }

    pub fn push(&mut self, token: &str) {
        let id = if self.lowercase && token.chars().any(char::is_uppercase) {
            self.table.intern(&token.to_lowercase())
        } else {
            self.table.intern(token)
        };
        self.table.unigram[id as usize] += 1;
        self.table.total_tokens += 1;
        if let Some(prev) = self.prev {
            self.table.add_bigram(prev, id, 1);
        }
        self.first.get_or_insert(id);
        self.prev = Some(id);
    }

    pub fn finish(self) -> FrequencyTable {
        self.table
    }

    fn finish_with_ends(self) -> (FrequencyTable, Option<(String, String)>) {
        let ends = match (self.first, self.prev) {
            (Some(f), Some(l)) => Some((
                self.table.tokens[f as usize].clone(),
                self.table.tokens[l as usize].clone(),
            )),
            _ => None,
        };
        (self.table, ends)
    }
}

fn utf8_token(bytes: &[u8]) -> io::Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Counts a token stream read from `reader`.
pub fn count_corpus<R: Read>(mut reader: R, lowercase: bool) -> io::Result<FrequencyTable> {
    let mut counter = Counter::new(lowercase);
    let mut block = vec![0u8; READ_BLOCK];
    let mut pending: Vec<u8> = Vec::new();

    loop {
        let n = match reader.read(&mut block) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        let mut start = 0;
        for (i, b) in block[..n].iter().enumerate() {
            if b.is_ascii_whitespace() {
                if !pending.is_empty() {
                    pending.extend_from_slice(&block[start..i]);
                    counter.push(utf8_token(&pending)?);
                    pending.clear();
                } else if start < i {
                    counter.push(utf8_token(&block[start..i])?);
                }
                start = i + 1;
            }
        }
        pending.extend_from_slice(&block[start..n]);
    }
    if !pending.is_empty() {
        counter.push(utf8_token(&pending)?);
    }
    Ok(counter.finish())
}

/// Splits `text` into about `parts` pieces, cutting only at whitespace.
fn split_at_whitespace(text: &str, parts: usize) -> Vec<&str> {
    let bytes = text.as_bytes();
    let target = (bytes.len() / parts.max(1)).max(1);
    let mut pieces = Vec::with_capacity(parts);
    let mut start = 0;
    while start < bytes.len() {
        let mut end = (start + target).min(bytes.len());
        while end < bytes.len() && !bytes[end].is_ascii_whitespace() {
            end += 1;
        }
        pieces.push(&text[start..end]);
        start = end;
    }
    pieces
}

/// Counts an in-memory corpus in parallel. Gives the same table as
/// [`count_corpus`] on the same text.
pub fn count_text(text: &str, lowercase: bool) -> FrequencyTable {
    let parts = rayon::current_num_threads() * 4;
    let partials: Vec<(FrequencyTable, Option<(String, String)>)> = split_at_whitespace(text, parts)
        .into_par_iter()
        .map(|chunk| {
            let mut counter = Counter::new(lowercase);
            for token in chunk.split_ascii_whitespace() {
                counter.push(token);
            }
            counter.finish_with_ends()
        })
        .collect();

    let mut table = FrequencyTable::new();
    let mut last: Option<String> = None;
    for (part, ends) in partials {
        table.merge(&part);
        if let Some((first, tail)) = ends {
            if let Some(prev) = last.take() {
                let a = table.intern(&prev);
                let b = table.intern(&first);
                table.add_bigram(a, b, 1);
            }
            last = Some(tail);
        }
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCount {
    pub name_count: u64,
    pub pair_count: u64,
    /// `pair_count / name_count`, or 0 when the name never occurs.
    pub ratio: f64,
}

/// How often `name` occurs and how often it is directly followed by
/// `follower`.
pub fn followed_by_ratio(table: &FrequencyTable, name: &str, follower: &str) -> PairCount {
    let name_count = table.unigram(name);
    let pair_count = table.bigram(name, follower);
    let ratio = if name_count == 0 {
        0.0
    } else {
        pair_count as f64 / name_count as f64
    };
    PairCount {
        name_count,
        pair_count,
        ratio,
    }
}
