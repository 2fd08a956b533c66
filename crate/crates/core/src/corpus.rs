//! Corpus ingestion: message cleanup, vocabulary and ranked context lists.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};
use thiserror::Error;

use crate::bcubed::GoldStandard;
use crate::WordId;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: input is not valid UTF-8")]
    Decode { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid command pattern on line {line}: {source}")]
    Pattern {
        line: usize,
        #[source]
        source: regex::Error,
    },
}

/// Placeholder tokens substituted for URLs, e-mail addresses, times, years
/// and long digit runs.
pub const URL_TOKEN: &str = "<url>";
pub const EMAIL_TOKEN: &str = "<email>";
pub const TIME_TOKEN: &str = "<time>";
pub const YEAR_TOKEN: &str = "<year>";
pub const NUMBER_TOKEN: &str = "<number>";

const PLACEHOLDERS: [(char, &str); 5] = [
    ('\u{E001}', URL_TOKEN),
    ('\u{E002}', EMAIL_TOKEN),
    ('\u{E003}', TIME_TOKEN),
    ('\u{E004}', YEAR_TOKEN),
    ('\u{E005}', NUMBER_TOKEN),
];

// Leftmost-first alternation: at equal start positions a URL wins over an
// e-mail, a year over a plain number.
static SPECIAL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"(?P<url>(?:[a-z][a-z0-9+.\-]*://|www\.)\S+)",
        r"|(?P<email>[a-z0-9._%+\-]+@[a-z0-9\-]+(?:\.[a-z0-9\-]+)+)",
        r"|(?P<time>\b\d{1,2}:\d{2}(?::\d{2})?\b)",
        r"|(?P<year>\b(?:19|20)\d{2}\b)",
        r"|(?P<number>\d{4,})",
    ))
    .expect("placeholder pattern")
});

static LITERAL_PLACEHOLDER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<(url|email|time|year|number)>").expect("literal pattern"));

/// A cleaned message: lowercase tokens, none empty, none containing whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub tokens: Vec<String>,
}

impl Message {
    pub fn new(tokens: Vec<String>) -> Self {
        Message { tokens }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PreprocessOptions {
    /// Removed from every raw line before any other step.
    pub command_patterns: Vec<Regex>,
}

impl PreprocessOptions {
    /// Compiles a command-pattern list, one case-insensitive regex per
    /// non-blank line.
    pub fn from_pattern_lines<S: AsRef<str>>(lines: &[S]) -> Result<Self, CorpusError> {
        let mut command_patterns = Vec::new();
        for (idx, line) in lines.iter().enumerate() {
            let pattern = line.as_ref().trim();
            if pattern.is_empty() {
                continue;
            }
            let re = RegexBuilder::new(pattern)
                .case_insensitive(true)
                .build()
                .map_err(|source| CorpusError::Pattern {
                    line: idx + 1,
                    source,
                })?;
            command_patterns.push(re);
        }
        Ok(PreprocessOptions { command_patterns })
    }
}

/// Reads newline-separated messages, rejecting invalid UTF-8 with the
/// offending (1-based) line number.
pub fn read_lines<R: BufRead>(mut reader: R) -> Result<Vec<String>, CorpusError> {
    let mut lines = Vec::new();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        while matches!(buf.last(), Some(b'\n' | b'\r')) {
            buf.pop();
        }
        let line = String::from_utf8(std::mem::take(&mut buf))
            .map_err(|_| CorpusError::Decode { line: line_no })?;
        lines.push(line);
    }
    Ok(lines)
}

/// Cleans raw message lines. Messages left with fewer than two tokens are
/// dropped.
pub fn preprocess<S: AsRef<str>>(raw_lines: &[S], options: &PreprocessOptions) -> Vec<Message> {
    raw_lines
        .iter()
        .filter_map(|line| {
            let tokens = clean_line(line.as_ref(), options);
            (tokens.len() >= 2).then(|| Message::new(tokens))
        })
        .collect()
}

/// Token-level cleanup of a single line, without the single-token filter.
///
/// The cleanup is iterated to a fixpoint (bounded), so running it on its own
/// output is a no-op.
pub fn clean_line(line: &str, options: &PreprocessOptions) -> Vec<String> {
    let mut tokens = clean_once(line, options);
    for _ in 0..8 {
        let again = clean_once(&tokens.join(" "), options);
        if again == tokens {
            break;
        }
        tokens = again;
    }
    tokens
}

fn clean_once(line: &str, options: &PreprocessOptions) -> Vec<String> {
    let mut text = line.to_string();
    for re in &options.command_patterns {
        text = re.replace_all(&text, " ").into_owned();
    }
    let text: String = text
        .to_lowercase()
        .chars()
        .map(|c| if is_sentinel(c) { ' ' } else { c })
        .collect();

    let text = LITERAL_PLACEHOLDER_RE.replace_all(&text, |caps: &regex::Captures| {
        format!(" {} ", sentinel_for(&caps[0]))
    });
    let text = SPECIAL_RE.replace_all(&text, |caps: &regex::Captures| {
        let token = ["url", "email", "time", "year", "number"]
            .iter()
            .zip(PLACEHOLDERS.iter())
            .find(|(name, _)| caps.name(name).is_some())
            .map(|(_, (_, token))| *token)
            .unwrap_or(NUMBER_TOKEN);
        format!(" {} ", sentinel_for(token))
    });

    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let collapsed = collapse_repeats(chunk);
        let spaced: String = collapsed
            .chars()
            .map(|c| {
                if c.is_alphanumeric() || is_sentinel(c) {
                    c
                } else {
                    ' '
                }
            })
            .collect();
        for tok in spaced.split_whitespace() {
            let mut chars = tok.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if is_sentinel(c) => tokens.push(placeholder_for(c).to_string()),
                _ => tokens.push(tok.to_string()),
            }
        }
    }
    tokens
}

fn is_sentinel(c: char) -> bool {
    PLACEHOLDERS.iter().any(|(s, _)| *s == c)
}

fn sentinel_for(token: &str) -> char {
    PLACEHOLDERS
        .iter()
        .find(|(_, t)| *t == token)
        .map(|(s, _)| *s)
        .expect("known placeholder")
}

fn placeholder_for(c: char) -> &'static str {
    PLACEHOLDERS
        .iter()
        .find(|(s, _)| *s == c)
        .map(|(_, t)| *t)
        .expect("known sentinel")
}

/// Collapses every group repeated more than twice down to two copies,
/// scanning left to right and preferring the shortest repeating unit.
/// Repeated until no such group remains.
pub fn collapse_repeats(s: &str) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    loop {
        let next = collapse_pass(&chars);
        if next.len() == chars.len() {
            return chars.into_iter().collect();
        }
        chars = next;
    }
}

fn collapse_pass(chars: &[char]) -> Vec<char> {
    let n = chars.len();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    'outer: while i < n {
        let mut period = 1;
        while i + 3 * period <= n {
            let unit = &chars[i..i + period];
            let mut reps = 1;
            while i + (reps + 1) * period <= n
                && &chars[i + reps * period..i + (reps + 1) * period] == unit
            {
                reps += 1;
            }
            if reps >= 3 {
                out.extend_from_slice(unit);
                out.extend_from_slice(unit);
                i += reps * period;
                continue 'outer;
            }
            period += 1;
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

/// A vocabulary word with its ranked context features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordEntry {
    pub id: WordId,
    pub surface: String,
    pub freq: u64,
    /// Top-k preceding features as `(feature id, count)`, count descending,
    /// ties by feature id ascending.
    pub prev_ctx: Vec<(u32, u32)>,
    pub next_ctx: Vec<(u32, u32)>,
    /// Number of distinct preceding features before top-k truncation.
    pub prev_distinct: usize,
    pub next_distinct: usize,
}

impl WordEntry {
    pub fn prev_features(&self) -> Vec<u32> {
        self.prev_ctx.iter().map(|&(f, _)| f).collect()
    }

    pub fn next_features(&self) -> Vec<u32> {
        self.next_ctx.iter().map(|&(f, _)| f).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<WordEntry>,
    index: HashMap<String, WordId>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: WordId) -> Option<&WordEntry> {
        self.entries.get(id as usize)
    }

    pub fn entry(&self, id: WordId) -> &WordEntry {
        &self.entries[id as usize]
    }

    pub fn surface(&self, id: WordId) -> &str {
        &self.entries[id as usize].surface
    }

    pub fn id_of(&self, surface: &str) -> Option<WordId> {
        self.index.get(surface).copied()
    }

    pub fn entries(&self) -> &[WordEntry] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = WordId> {
        0..self.entries.len() as WordId
    }
}

/// One entry per distinct token, ids in first-seen order.
pub fn build_vocabulary(messages: &[Message]) -> Vocabulary {
    let mut vocab = Vocabulary::default();
    for msg in messages {
        for tok in &msg.tokens {
            match vocab.index.get(tok) {
                Some(&id) => vocab.entries[id as usize].freq += 1,
                None => {
                    let id = vocab.entries.len() as WordId;
                    vocab.index.insert(tok.clone(), id);
                    vocab.entries.push(WordEntry {
                        id,
                        surface: tok.clone(),
                        freq: 1,
                        prev_ctx: Vec::new(),
                        next_ctx: Vec::new(),
                        prev_distinct: 0,
                        next_distinct: 0,
                    });
                }
            }
        }
    }
    vocab
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContextFeatureKind {
    WordId,
    UrduPhoneId,
    ClusterId,
}

impl FromStr for ContextFeatureKind {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word-id" | "word" => Ok(ContextFeatureKind::WordId),
            "urduphone-id" | "urduphone" => Ok(ContextFeatureKind::UrduPhoneId),
            "cluster-id" | "cluster" => Ok(ContextFeatureKind::ClusterId),
            other => Err(CorpusError::Config(format!(
                "unknown context feature kind {other:?}"
            ))),
        }
    }
}

/// How a neighboring word is represented in a context list.
#[derive(Debug, Clone, Copy)]
pub enum ContextFeature<'a> {
    WordId,
    /// Word id → phonetic code id.
    UrduPhoneId(&'a [u32]),
    /// Word id → initial cluster id.
    ClusterId(&'a [u32]),
}

impl ContextFeature<'_> {
    pub fn kind(&self) -> ContextFeatureKind {
        match self {
            ContextFeature::WordId => ContextFeatureKind::WordId,
            ContextFeature::UrduPhoneId(_) => ContextFeatureKind::UrduPhoneId,
            ContextFeature::ClusterId(_) => ContextFeatureKind::ClusterId,
        }
    }

    fn map(&self, id: WordId) -> u32 {
        match self {
            ContextFeature::WordId => id,
            ContextFeature::UrduPhoneId(m) | ContextFeature::ClusterId(m) => m[id as usize],
        }
    }
}

/// Fills each entry's ranked previous/next context lists with the top `k`
/// neighbor features. Message boundaries contribute nothing.
pub fn extract_contexts(
    messages: &[Message],
    vocab: &Vocabulary,
    k: usize,
    feature: ContextFeature<'_>,
) -> Result<Vocabulary, CorpusError> {
    if k == 0 {
        return Err(CorpusError::Config("context size must be at least 1".into()));
    }
    if let ContextFeature::UrduPhoneId(m) | ContextFeature::ClusterId(m) = feature {
        if m.len() != vocab.len() {
            return Err(CorpusError::Config(format!(
                "{:?} mapping covers {} words, vocabulary has {}",
                feature.kind(),
                m.len(),
                vocab.len()
            )));
        }
    }

    let n = vocab.len();
    let mut prev: Vec<HashMap<u32, u32>> = vec![HashMap::new(); n];
    let mut next: Vec<HashMap<u32, u32>> = vec![HashMap::new(); n];
    for msg in messages {
        let ids: Vec<Option<WordId>> = msg.tokens.iter().map(|t| vocab.id_of(t)).collect();
        for pair in ids.windows(2) {
            if let [Some(left), Some(right)] = *pair {
                *next[left as usize].entry(feature.map(right)).or_default() += 1;
                *prev[right as usize].entry(feature.map(left)).or_default() += 1;
            }
        }
    }

    let mut out = vocab.clone();
    for (entry, (p, nx)) in out.entries.iter_mut().zip(prev.into_iter().zip(next)) {
        entry.prev_distinct = p.len();
        entry.next_distinct = nx.len();
        entry.prev_ctx = top_k(p, k);
        entry.next_ctx = top_k(nx, k);
    }
    Ok(out)
}

fn top_k(counts: HashMap<u32, u32>, k: usize) -> Vec<(u32, u32)> {
    let mut items: Vec<(u32, u32)> = counts.into_iter().collect();
    items.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    items.truncate(k);
    items
}

/// Words present in the gold lexicon that have at least `min_ctx` distinct
/// preceding and following neighbors. Expects contexts already extracted.
pub fn filter_eval_words(
    vocab: &Vocabulary,
    gold: &GoldStandard,
    min_ctx: usize,
) -> BTreeSet<WordId> {
    vocab
        .entries
        .iter()
        .filter(|e| gold.contains(&e.surface))
        .filter(|e| e.prev_distinct >= min_ctx && e.next_distinct >= min_ctx)
        .map(|e| e.id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msgs(raw: &[&[&str]]) -> Vec<Message> {
        raw.iter()
            .map(|m| Message::new(m.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    fn clean(s: &str) -> Vec<String> {
        clean_line(s, &PreprocessOptions::default())
    }

    #[test]
    fn collapses_laughter() {
        assert_eq!(collapse_repeats("hahahaha"), "haha");
        assert_eq!(clean("hahahaha yaar"), vec!["haha", "yaar"]);
        assert_eq!(collapse_repeats("haha"), "haha");
        assert_eq!(collapse_repeats("sooooo"), "soo");
        assert_eq!(collapse_repeats("aaabaaabaaab"), "aabaab");
    }

    #[test]
    fn punctuation_and_spaces() {
        assert_eq!(clean("a!!b   c"), vec!["a", "b", "c"]);
        assert_eq!(clean("Kese ha aap log?"), vec!["kese", "ha", "aap", "log"]);
    }

    #[test]
    fn placeholders() {
        assert_eq!(clean("call 03001234567"), vec!["call", "<number>"]);
        assert_eq!(clean("see www.example.com now"), vec!["see", "<url>", "now"]);
        assert_eq!(
            clean("mail me at Someone.X@mail.example.pk"),
            vec!["mail", "me", "at", "<email>"]
        );
        assert_eq!(clean("milo 10:30 pe"), vec!["milo", "<time>", "pe"]);
        assert_eq!(clean("since 2019 ok"), vec!["since", "<year>", "ok"]);
        assert_eq!(clean("room 123 ok"), vec!["room", "123", "ok"]);
        assert_eq!(clean("go https://a.b/c?d=1 x"), vec!["go", "<url>", "x"]);
        // Already-cleaned placeholders survive a second pass.
        assert_eq!(clean("call <number>"), vec!["call", "<number>"]);
    }

    #[test]
    fn command_patterns_removed_first() {
        let opts = PreprocessOptions::from_pattern_lines(&["^@\\w+", ""]).unwrap();
        let out = preprocess(&["@JOIN kya haal hai"], &opts);
        assert_eq!(out[0].tokens, vec!["kya", "haal", "hai"]);
        assert!(matches!(
            PreprocessOptions::from_pattern_lines(&["(", "x"]),
            Err(CorpusError::Pattern { line: 1, .. })
        ));
    }

    #[test]
    fn single_token_messages_dropped() {
        let out = preprocess(&["salam", "!!!", "salam dost", "hello ???"], &Default::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].tokens, vec!["salam", "dost"]);
    }

    #[test]
    fn decode_error_names_line() {
        let data: &[u8] = b"ok line\nsecond\n\xff\xfe bad\n";
        match read_lines(data) {
            Err(CorpusError::Decode { line }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let good = read_lines(&b"a b\r\nc d"[..]).unwrap();
        assert_eq!(good, vec!["a b", "c d"]);
    }

    #[test]
    fn vocabulary_counts() {
        assert!(build_vocabulary(&[]).is_empty());
        let v = build_vocabulary(&msgs(&[&["a", "b"], &["a", "c"]]));
        assert_eq!(v.len(), 3);
        assert_eq!(v.entry(v.id_of("a").unwrap()).freq, 2);
        assert_eq!(v.id_of("b"), Some(1));
        assert_eq!(v.id_of("c"), Some(2));
    }

    #[test]
    fn contexts_single_occurrence() {
        let m = msgs(&[&["x", "w", "y"]]);
        let v = build_vocabulary(&m);
        let v = extract_contexts(&m, &v, 5, ContextFeature::WordId).unwrap();
        let w = v.entry(v.id_of("w").unwrap());
        assert_eq!(w.prev_ctx, vec![(0, 1)]);
        assert_eq!(w.next_ctx, vec![(2, 1)]);
        let x = v.entry(0);
        assert!(x.prev_ctx.is_empty());
    }

    #[test]
    fn contexts_fewer_than_k() {
        let m = msgs(&[&["p", "w"], &["q", "w"], &["r", "w"], &["p", "w"]]);
        let v = build_vocabulary(&m);
        let v = extract_contexts(&m, &v, 5, ContextFeature::WordId).unwrap();
        let w = v.entry(v.id_of("w").unwrap());
        assert_eq!(w.prev_ctx.len(), 3);
        // p seen twice ranks first; q and r tie and sort by id.
        assert_eq!(w.prev_ctx[0], (v.id_of("p").unwrap(), 2));
        assert!(w.prev_ctx[1].0 < w.prev_ctx[2].0);
        assert_eq!(w.prev_distinct, 3);
    }

    #[test]
    fn contexts_mapped_feature() {
        let m = msgs(&[&["p", "w"], &["q", "w"]]);
        let v = build_vocabulary(&m);
        let map = vec![7, 0, 7];
        let v2 = extract_contexts(&m, &v, 5, ContextFeature::ClusterId(&map)).unwrap();
        assert_eq!(v2.entry(1).prev_ctx, vec![(7, 2)]);
        assert!(matches!(
            extract_contexts(&m, &v, 5, ContextFeature::UrduPhoneId(&[1])),
            Err(CorpusError::Config(_))
        ));
        assert!(extract_contexts(&m, &v, 0, ContextFeature::WordId).is_err());
        assert!("bogus".parse::<ContextFeatureKind>().is_err());
        assert_eq!(
            "cluster-id".parse::<ContextFeatureKind>().unwrap(),
            ContextFeatureKind::ClusterId
        );
    }

    #[test]
    fn eval_filter() {
        let m = msgs(&[&["a", "w", "b"], &["c", "w", "d"], &["a", "z", "b"]]);
        let v = build_vocabulary(&m);
        let v = extract_contexts(&m, &v, 5, ContextFeature::WordId).unwrap();
        let gold = GoldStandard::from_pairs([("w", "1"), ("z", "1"), ("a", "2")]);
        let all: Vec<_> = filter_eval_words(&v, &gold, 0).into_iter().collect();
        assert_eq!(all.len(), 3);
        let two: Vec<_> = filter_eval_words(&v, &gold, 2).into_iter().collect();
        assert_eq!(two, vec![v.id_of("w").unwrap()]);
        let one = filter_eval_words(&v, &gold, 1);
        assert!(!one.contains(&v.id_of("a").unwrap()));
    }
}
