//! Phonetic encoders: UrduPhone (Soundex-derived, homophone groups for
//! Roman Urdu) and classic American Soundex as a baseline.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::corpus::Vocabulary;
use crate::lexvar::Clustering;
use crate::WordId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PhoneticError {
    #[error("word {0:?} has no alphabetic characters")]
    Unencodable(String),
    #[error("encoding length {0} outside supported range 4..=8")]
    Length(usize),
    #[error("code table line {line}: {msg}")]
    Table { line: usize, msg: String },
}

pub const VOWELS: [char; 6] = ['a', 'e', 'i', 'o', 'u', 'y'];

fn is_vowel(c: char) -> bool {
    VOWELS.contains(&c)
}

/// Character (and optional digraph) codes. Members of one homophone group
/// share a code; vowels are never coded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeTable {
    singles: HashMap<char, u16>,
    digraphs: HashMap<[char; 2], u16>,
}

impl Default for CodeTable {
    fn default() -> Self {
        let singles = [
            ('s', 1),
            ('c', 1),
            ('t', 2),
            ('z', 3),
            ('x', 3),
            ('d', 5),
            ('f', 6),
            ('q', 7),
            ('k', 7),
            ('j', 8),
            ('b', 9),
            ('p', 10),
            ('n', 11),
            ('m', 12),
            ('g', 13),
            ('r', 14),
            ('w', 15),
            ('v', 15),
            ('l', 17),
            ('h', 19),
        ]
        .into_iter()
        .collect();
        let digraphs = [
            (['c', 'h'], 4),
            (['s', 'h'], 1),
            (['z', 'h'], 16),
            (['k', 'h'], 18),
            (['g', 'h'], 20),
            (['b', 'h'], 21),
            (['p', 'h'], 22),
            (['j', 'h'], 23),
            (['t', 'h'], 24),
            (['d', 'h'], 25),
            (['r', 'h'], 26),
        ]
        .into_iter()
        .collect();
        CodeTable { singles, digraphs }
    }
}

impl CodeTable {
    /// Default table with overrides from `char<TAB>code` lines. Keys of
    /// two characters set digraph codes. Blank lines and `#` comments are
    /// skipped.
    pub fn with_overrides(tsv: &str) -> Result<Self, PhoneticError> {
        let mut table = CodeTable::default();
        for (idx, raw) in tsv.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| PhoneticError::Table {
                line: idx + 1,
                msg: msg.to_string(),
            };
            let (key, code) = line.split_once('\t').ok_or_else(|| err("expected key<TAB>code"))?;
            let code: u16 = code
                .trim()
                .parse()
                .map_err(|_| err("code is not a non-negative integer"))?;
            if code == 0 {
                return Err(err("code 0 is reserved for padding"));
            }
            let chars: Vec<char> = key.trim().to_lowercase().chars().collect();
            match chars.as_slice() {
                [c] if is_vowel(*c) => return Err(err("vowels cannot be coded")),
                [c] => {
                    table.singles.insert(*c, code);
                }
                [a, b] => {
                    table.digraphs.insert([*a, *b], code);
                }
                _ => return Err(err("key must be one or two characters")),
            }
        }
        Ok(table)
    }

    pub fn code(&self, c: char) -> Option<u16> {
        self.singles.get(&c).copied()
    }

    pub fn digraph_code(&self, a: char, b: char) -> Option<u16> {
        self.digraphs.get(&[a, b]).copied()
    }
}

/// A fixed-length phonetic code: uppercase head letter plus zero-padded
/// numeric codes. Renders as `M_1_2_7_9_17`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhoneticCode {
    pub head: char,
    pub codes: Vec<u16>,
}

impl fmt::Display for PhoneticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        for c in &self.codes {
            write!(f, "_{c}")?;
        }
        Ok(())
    }
}

pub trait PhoneticEncoder: Send + Sync {
    fn encode(&self, word: &str) -> Result<PhoneticCode, PhoneticError>;
}

fn alphabetic_lowercase(word: &str) -> Vec<char> {
    word.chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect()
}

fn head_of(c: char) -> char {
    c.to_uppercase().next().unwrap_or(c)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrduPhone {
    pub table: CodeTable,
    length: usize,
    pub h_omission: bool,
    pub digraphs: bool,
}

impl Default for UrduPhone {
    fn default() -> Self {
        UrduPhone {
            table: CodeTable::default(),
            length: 6,
            h_omission: false,
            digraphs: false,
        }
    }
}

impl UrduPhone {
    pub fn with_length(length: usize) -> Result<Self, PhoneticError> {
        UrduPhone::default().length(length)
    }

    /// Total encoding length including the head letter.
    pub fn length(mut self, length: usize) -> Result<Self, PhoneticError> {
        if !(4..=8).contains(&length) {
            return Err(PhoneticError::Length(length));
        }
        self.length = length;
        Ok(self)
    }

    pub fn h_omission(mut self, on: bool) -> Self {
        self.h_omission = on;
        self
    }

    pub fn digraphs(mut self, on: bool) -> Self {
        self.digraphs = on;
        self
    }

    pub fn table(mut self, table: CodeTable) -> Self {
        self.table = table;
        self
    }

    pub fn encoding_length(&self) -> usize {
        self.length
    }
}

impl PhoneticEncoder for UrduPhone {
    fn encode(&self, word: &str) -> Result<PhoneticCode, PhoneticError> {
        let w = alphabetic_lowercase(word);
        let Some(&first) = w.first() else {
            return Err(PhoneticError::Unencodable(word.to_string()));
        };
        let slots = self.length - 1;
        let mut codes = Vec::with_capacity(slots);

        let mut i = 1;
        // A word opening on a digraph gets the digraph's code after the head.
        if self.digraphs && w.len() >= 2 && !(self.h_omission && w[1] == 'h') {
            if let Some(code) = self.table.digraph_code(w[0], w[1]) {
                codes.push(code);
                i = 2;
            }
        }
        while i < w.len() && codes.len() < slots {
            let c = w[i];
            if i + 1 < w.len() && w[i + 1] == c {
                i += 1;
                continue;
            }
            if is_vowel(c) {
                i += 1;
                continue;
            }
            if self.h_omission && c == 'h' && w[i - 1].is_alphabetic() && !is_vowel(w[i - 1]) {
                i += 1;
                continue;
            }
            if self.digraphs && i + 1 < w.len() && !(self.h_omission && w[i + 1] == 'h') {
                if let Some(code) = self.table.digraph_code(c, w[i + 1]) {
                    codes.push(code);
                    i += 2;
                    continue;
                }
            }
            if let Some(code) = self.table.code(c) {
                codes.push(code);
            }
            i += 1;
        }
        codes.resize(slots, 0);
        Ok(PhoneticCode {
            head: head_of(first),
            codes,
        })
    }
}

/// American Soundex: head letter plus three digits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Soundex;

fn soundex_digit(c: char) -> Option<u16> {
    match c {
        'b' | 'f' | 'p' | 'v' => Some(1),
        'c' | 'g' | 'j' | 'k' | 'q' | 's' | 'x' | 'z' => Some(2),
        'd' | 't' => Some(3),
        'l' => Some(4),
        'm' | 'n' => Some(5),
        'r' => Some(6),
        _ => None,
    }
}

impl PhoneticEncoder for Soundex {
    fn encode(&self, word: &str) -> Result<PhoneticCode, PhoneticError> {
        let w = alphabetic_lowercase(word);
        let Some(&first) = w.first() else {
            return Err(PhoneticError::Unencodable(word.to_string()));
        };
        let mut codes = Vec::with_capacity(3);
        let mut last = soundex_digit(first);
        for &c in &w[1..] {
            if codes.len() == 3 {
                break;
            }
            match c {
                // h and w do not separate equal codes
                'h' | 'w' => {}
                _ => match soundex_digit(c) {
                    Some(d) => {
                        if last != Some(d) {
                            codes.push(d);
                        }
                        last = Some(d);
                    }
                    None => last = None,
                },
            }
        }
        codes.resize(3, 0);
        Ok(PhoneticCode {
            head: head_of(first),
            codes,
        })
    }
}

/// 1 when both words encode identically, else 0.
pub fn phonetic_similarity(
    a: &str,
    b: &str,
    encoder: &dyn PhoneticEncoder,
) -> Result<f64, PhoneticError> {
    Ok(if encoder.encode(a)? == encoder.encode(b)? {
        1.0
    } else {
        0.0
    })
}

/// Dense code id per vocabulary word (first-seen order). Unencodable words
/// each get a private id so they never match anything.
pub fn code_ids(vocab: &Vocabulary, encoder: &dyn PhoneticEncoder) -> Vec<u32> {
    let mut ids: HashMap<PhoneticCode, u32> = HashMap::new();
    let mut next = 0u32;
    vocab
        .entries()
        .iter()
        .map(|e| {
            let id = match encoder.encode(&e.surface) {
                Ok(code) => *ids.entry(code).or_insert_with(|| {
                    next += 1;
                    next - 1
                }),
                Err(_) => {
                    next += 1;
                    next - 1
                }
            };
            id
        })
        .collect()
}

/// Segments `words` by identical encoding. Unencodable words become
/// singletons. Clusters are ordered by their lowest member id.
pub fn group_by_encoding(
    vocab: &Vocabulary,
    words: &[WordId],
    encoder: &dyn PhoneticEncoder,
) -> Clustering {
    let mut sorted = words.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut by_code: HashMap<PhoneticCode, usize> = HashMap::new();
    let mut groups: Vec<Vec<WordId>> = Vec::new();
    for id in sorted {
        match encoder.encode(vocab.surface(id)) {
            Ok(code) => match by_code.get(&code) {
                Some(&g) => groups[g].push(id),
                None => {
                    by_code.insert(code, groups.len());
                    groups.push(vec![id]);
                }
            },
            Err(_) => groups.push(vec![id]),
        }
    }
    Clustering::from_groups(groups)
}
