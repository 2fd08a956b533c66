//! String similarity: LCS, edit distance with a cost matrix, the
//! `lcs / (min_len + edist)` score and 2-skip-1-gram Jaccard.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StringSimError {
    #[error("string similarity is undefined for an empty token")]
    EmptyToken,
    #[error("cost file line {line}: {msg}")]
    CostFile { line: usize, msg: String },
}

/// The null symbol in cost files: `-<TAB>c` is an insertion of `c`,
/// `c<TAB>-` a deletion.
pub const NULL_SYMBOL: &str = "-";

const ASCII: usize = 128;

/// Per character-pair edit costs. Substituting a character for itself is
/// always free; every other cost is finite and within `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    sub: HashMap<(char, char), f64>,
    ins: HashMap<char, f64>,
    del: HashMap<char, f64>,
    default_sub: f64,
    default_indel: f64,
    // dense copies for ASCII lookups in the DP inner loop
    ascii_sub: Vec<f64>,
    ascii_ins: Vec<f64>,
    ascii_del: Vec<f64>,
}

impl Default for CostMatrix {
    fn default() -> Self {
        CostMatrix::unit()
    }
}

impl CostMatrix {
    /// Every insertion, deletion and substitution costs 1.
    pub fn unit() -> Self {
        CostMatrix::from_parts(HashMap::new(), HashMap::new(), HashMap::new(), 1.0, 1.0)
    }

    fn from_parts(
        mut sub: HashMap<(char, char), f64>,
        ins: HashMap<char, f64>,
        del: HashMap<char, f64>,
        default_sub: f64,
        default_indel: f64,
    ) -> Self {
        sub.retain(|(a, b), _| a != b);
        let cap = |c: f64| c.clamp(0.0, 1.0);
        let sub: HashMap<_, _> = sub.into_iter().map(|(k, v)| (k, cap(v))).collect();
        let ins: HashMap<_, _> = ins.into_iter().map(|(k, v)| (k, cap(v))).collect();
        let del: HashMap<_, _> = del.into_iter().map(|(k, v)| (k, cap(v))).collect();
        let default_sub = cap(default_sub);
        let default_indel = cap(default_indel);

        let mut ascii_sub = vec![default_sub; ASCII * ASCII];
        for i in 0..ASCII {
            ascii_sub[i * ASCII + i] = 0.0;
        }
        for (&(a, b), &v) in &sub {
            if (a as usize) < ASCII && (b as usize) < ASCII {
                ascii_sub[a as usize * ASCII + b as usize] = v;
            }
        }
        let mut ascii_ins = vec![default_indel; ASCII];
        let mut ascii_del = vec![default_indel; ASCII];
        for (&c, &v) in &ins {
            if (c as usize) < ASCII {
                ascii_ins[c as usize] = v;
            }
        }
        for (&c, &v) in &del {
            if (c as usize) < ASCII {
                ascii_del[c as usize] = v;
            }
        }
        CostMatrix {
            sub,
            ins,
            del,
            default_sub,
            default_indel,
            ascii_sub,
            ascii_ins,
            ascii_del,
        }
    }

    /// Builds a matrix from explicit entries. Costs are capped to `[0, 1]`
    /// and identity substitutions dropped.
    pub fn from_entries(
        sub: impl IntoIterator<Item = ((char, char), f64)>,
        ins: impl IntoIterator<Item = (char, f64)>,
        del: impl IntoIterator<Item = (char, f64)>,
    ) -> Self {
        CostMatrix::from_parts(
            sub.into_iter().collect(),
            ins.into_iter().collect(),
            del.into_iter().collect(),
            1.0,
            1.0,
        )
    }

    #[inline]
    pub fn sub(&self, a: char, b: char) -> f64 {
        if a == b {
            return 0.0;
        }
        if (a as usize) < ASCII && (b as usize) < ASCII {
            return self.ascii_sub[a as usize * ASCII + b as usize];
        }
        self.sub.get(&(a, b)).copied().unwrap_or(self.default_sub)
    }

    #[inline]
    pub fn ins(&self, c: char) -> f64 {
        if (c as usize) < ASCII {
            return self.ascii_ins[c as usize];
        }
        self.ins.get(&c).copied().unwrap_or(self.default_indel)
    }

    #[inline]
    pub fn del(&self, c: char) -> f64 {
        if (c as usize) < ASCII {
            return self.ascii_del[c as usize];
        }
        self.del.get(&c).copied().unwrap_or(self.default_indel)
    }

    /// Smallest insertion or deletion cost of any character.
    pub fn min_indel(&self) -> f64 {
        self.ins
            .values()
            .chain(self.del.values())
            .copied()
            .fold(self.default_indel, f64::min)
    }

    /// Smallest cost of any edit operation.
    pub fn min_cost(&self) -> f64 {
        self.sub
            .values()
            .copied()
            .fold(self.default_sub.min(self.min_indel()), f64::min)
    }

    pub fn is_symmetric(&self) -> bool {
        self.sub
            .iter()
            .all(|(&(a, b), &v)| self.sub(b, a) == v)
            && self.ins.keys().chain(self.del.keys()).all(|&c| self.ins(c) == self.del(c))
    }

    /// Averages each cost with its mirror (`sub(x,y)` with `sub(y,x)`,
    /// `ins(c)` with `del(c)`). Only directions with an explicit entry take
    /// part; a single explicit direction is copied to its mirror.
    pub fn symmetrized(&self) -> Self {
        let mut sub = HashMap::new();
        for &(a, b) in self.sub.keys() {
            let v = match (self.sub.get(&(a, b)), self.sub.get(&(b, a))) {
                (Some(x), Some(y)) => (x + y) / 2.0,
                (Some(x), None) | (None, Some(x)) => *x,
                (None, None) => unreachable!(),
            };
            sub.insert((a, b), v);
            sub.insert((b, a), v);
        }
        let mut indel = HashMap::new();
        for &c in self.ins.keys().chain(self.del.keys()) {
            let v = match (self.ins.get(&c), self.del.get(&c)) {
                (Some(x), Some(y)) => (x + y) / 2.0,
                (Some(x), None) | (None, Some(x)) => *x,
                (None, None) => unreachable!(),
            };
            indel.insert(c, v);
        }
        CostMatrix::from_parts(
            sub,
            indel.clone(),
            indel,
            self.default_sub,
            self.default_indel,
        )
    }

    /// Parses `src<TAB>tgt<TAB>cost` lines. Blank lines and `#` comments are
    /// skipped.
    pub fn from_tsv(text: &str) -> Result<Self, StringSimError> {
        let mut sub = HashMap::new();
        let mut ins = HashMap::new();
        let mut del = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| StringSimError::CostFile {
                line: idx + 1,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [src, tgt, cost] = fields.as_slice() else {
                return Err(err("expected src<TAB>tgt<TAB>cost"));
            };
            let cost: f64 = cost.trim().parse().map_err(|_| err("cost is not a number"))?;
            if !cost.is_finite() || cost < 0.0 {
                return Err(err("cost must be finite and non-negative"));
            }
            let one = |s: &str| -> Result<Option<char>, StringSimError> {
                if s == NULL_SYMBOL {
                    return Ok(None);
                }
                let mut it = s.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Ok(Some(c)),
                    _ => Err(err("symbols must be single characters or '-'")),
                }
            };
            match (one(src)?, one(tgt)?) {
                (Some(a), Some(b)) => {
                    sub.insert((a, b), cost);
                }
                (None, Some(b)) => {
                    ins.insert(b, cost);
                }
                (Some(a), None) => {
                    del.insert(a, cost);
                }
                (None, None) => return Err(err("null-to-null entry")),
            }
        }
        Ok(CostMatrix::from_parts(sub, ins, del, 1.0, 1.0))
    }

    /// Explicit entries as TSV, sorted for byte-stable output.
    pub fn to_tsv(&self) -> String {
        let mut rows: BTreeMap<(String, String), f64> = BTreeMap::new();
        for (&(a, b), &v) in &self.sub {
            rows.insert((a.to_string(), b.to_string()), v);
        }
        for (&c, &v) in &self.ins {
            rows.insert((NULL_SYMBOL.to_string(), c.to_string()), v);
        }
        for (&c, &v) in &self.del {
            rows.insert((c.to_string(), NULL_SYMBOL.to_string()), v);
        }
        let mut out = String::new();
        for ((a, b), v) in rows {
            let _ = writeln!(out, "{a}\t{b}\t{v}");
        }
        out
    }
}

const STACK_ROW: usize = 48;

/// Length of the longest common subsequence.
pub fn lcs_length(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    lcs_chars(&a, &b)
}

pub fn lcs_chars(a: &[char], b: &[char]) -> usize {
    if b.len() < STACK_ROW {
        let mut row = [0usize; STACK_ROW];
        lcs_with_row(a, b, &mut row[..=b.len()])
    } else {
        let mut row = vec![0usize; b.len() + 1];
        lcs_with_row(a, b, &mut row)
    }
}

fn lcs_with_row(a: &[char], b: &[char], row: &mut [usize]) -> usize {
    row.fill(0);
    for &ca in a {
        let mut diag = 0;
        for (j, &cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if ca == cb {
                diag + 1
            } else {
                up.max(row[j])
            };
            diag = up;
        }
    }
    row[b.len()]
}

/// Minimal-cost alignment of `a` into `b` using insertions, deletions and
/// substitutions priced by `costs`.
pub fn edit_distance(a: &str, b: &str, costs: &CostMatrix) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    edit_distance_chars(&a, &b, costs)
}

pub fn edit_distance_chars(a: &[char], b: &[char], costs: &CostMatrix) -> f64 {
    if b.len() < STACK_ROW {
        let mut row = [0f64; STACK_ROW];
        edit_with_row(a, b, costs, &mut row[..=b.len()])
    } else {
        let mut row = vec![0f64; b.len() + 1];
        edit_with_row(a, b, costs, &mut row)
    }
}

fn edit_with_row(a: &[char], b: &[char], costs: &CostMatrix, row: &mut [f64]) -> f64 {
    row[0] = 0.0;
    for (j, &cb) in b.iter().enumerate() {
        row[j + 1] = row[j] + costs.ins(cb);
    }
    for &ca in a {
        let mut diag = row[0];
        row[0] += costs.del(ca);
        for (j, &cb) in b.iter().enumerate() {
            let up = row[j + 1];
            let best = (diag + costs.sub(ca, cb))
                .min(up + costs.del(ca))
                .min(row[j] + costs.ins(cb));
            row[j + 1] = best;
            diag = up;
        }
    }
    row[b.len()]
}

/// `lcs(a, b) / (min(len a, len b) + edist(a, b))`.
pub fn string_similarity(a: &str, b: &str, costs: &CostMatrix) -> Result<f64, StringSimError> {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() || b.is_empty() {
        return Err(StringSimError::EmptyToken);
    }
    Ok(string_similarity_chars(&a, &b, costs))
}

/// Unchecked form of [`string_similarity`]; both slices must be non-empty.
pub fn string_similarity_chars(a: &[char], b: &[char], costs: &CostMatrix) -> f64 {
    let lcs = lcs_chars(a, b) as f64;
    let min_len = a.len().min(b.len()) as f64;
    lcs / (min_len + edit_distance_chars(a, b, costs))
}

/// Distinct `(w[k], w[k+2])` pairs of a word, sorted.
pub fn skip_grams(word: &[char]) -> Vec<(char, char)> {
    let mut grams: Vec<(char, char)> = word.windows(3).map(|w| (w[0], w[2])).collect();
    grams.sort_unstable();
    grams.dedup();
    grams
}

/// Jaccard coefficient of the 2-skip-1-gram sets; 0 when both are empty.
pub fn skipgram_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    jaccard_sorted(&skip_grams(&a), &skip_grams(&b))
}

/// Jaccard coefficient of two sorted, deduplicated slices.
pub fn jaccard_sorted<T: Ord>(a: &[T], b: &[T]) -> f64 {
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - common;
    if union == 0 {
        0.0
    } else {
        common as f64 / union as f64
    }
}
