//! Synthetic corpus with known spelling-variant groups.
//!
//! Bases are grouped in families that share a consonant skeleton, and some
//! skeletons share their first four consonants. The first
//! base of a family gets several spelling variants (vowel substitution,
//! vowel deletion, doubled consonants, h-insertion); later bases differ from
//! it in a single vowel and mostly have no variants. Family members share a
//! phonetic code and look alike as strings, so only their contexts tell them
//! apart: every form of a base appears between function words drawn from a
//! base-specific distribution. The gold standard groups every form under its
//! base.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::bcubed::GoldStandard;
use crate::corpus::collapse_repeats;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub bases: usize,
    /// Distinct consonant skeletons the bases are drawn from.
    pub skeletons: usize,
    pub max_variants: usize,
    /// Chance that a non-leading family member gets a variant.
    pub minor_variant_share: f64,
    pub function_words: usize,
    /// Function words each base draws its left and right neighbors from.
    pub context_pool: usize,
    /// Exponent of the rank weights over the neighbor pool.
    pub context_skew: f64,
    pub min_occurrences: usize,
    pub max_occurrences: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            bases: 2300,
            skeletons: 700,
            max_variants: 6,
            minor_variant_share: 0.25,
            function_words: 60,
            context_pool: 8,
            context_skew: 1.0,
            min_occurrences: 10,
            max_occurrences: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    /// One message per line, tokens separated by single spaces.
    pub lines: Vec<String>,
    pub gold: GoldStandard,
    pub function_words: Vec<String>,
}

const CONSONANTS: [&str; 11] = ["k", "t", "b", "d", "r", "m", "n", "s", "l", "j", "g"];
const ASPIRABLE: [char; 7] = ['k', 'd', 't', 'b', 'p', 'g', 'j'];
const VOWELS: [char; 5] = ['a', 'i', 'u', 'e', 'o'];
const ENDINGS: [&str; 5] = ["", "a", "i", "ay", "on"];

/// Fixed-spelling filler words; distinct from generated bases because they
/// use letters the base generator never emits.
fn function_words(n: usize) -> Vec<String> {
    let heads = ["ph", "v", "w", "f", "y", "ch", "q", "x", "z", "sh"];
    let tails = ["o", "ey", "aw", "ee", "oo", "aa"];
    let mut out = Vec::new();
    'outer: for t in tails {
        for h in heads {
            out.push(format!("{h}{t}"));
            if out.len() == n {
                break 'outer;
            }
        }
    }
    assert!(out.len() == n, "at most {} function words", heads.len() * tails.len());
    out
}

/// Short skeletons are random; long ones extend a four-consonant stem that
/// several skeletons share, so they only differ past the fourth consonant.
fn make_skeletons(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<&'static str>> {
    let pick = |k: usize, rng: &mut ChaCha8Rng| -> Vec<&'static str> {
        (0..k).map(|_| *CONSONANTS.choose(rng).unwrap()).collect()
    };
    let stems: Vec<Vec<&str>> = (0..(n / 6).max(1)).map(|_| pick(4, rng)).collect();
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                let mut s = stems.choose(rng).unwrap().clone();
                let extra = rng.gen_range(1..=2);
                s.extend(pick(extra, rng));
                s
            } else {
                let k = rng.gen_range(3..=4);
                pick(k, rng)
            }
        })
        .collect()
}

fn make_base(skeleton: &[&str], rng: &mut ChaCha8Rng) -> String {
    let mut w = String::new();
    for (i, c) in skeleton.iter().enumerate() {
        w.push_str(c);
        if i + 1 < skeleton.len() {
            w.push(*VOWELS.choose(rng).unwrap());
        }
    }
    w.push_str(ENDINGS.choose(rng).unwrap());
    w
}

fn vowel_positions(w: &[char]) -> Vec<usize> {
    (1..w.len()).filter(|&i| VOWELS.contains(&w[i])).collect()
}

/// Another word of the same family: one vowel replaced by a different one.
fn sibling(base: &str, rng: &mut ChaCha8Rng) -> String {
    let mut w: Vec<char> = base.chars().collect();
    if let Some(&i) = vowel_positions(&w).choose(rng) {
        let others: Vec<char> = VOWELS.iter().copied().filter(|&v| v != w[i]).collect();
        w[i] = *others.choose(rng).unwrap();
    }
    w.into_iter().collect()
}

/// One random spelling change.
fn mutate(base: &str, rng: &mut ChaCha8Rng) -> String {
    let mut w: Vec<char> = base.chars().collect();
    match rng.gen_range(0..8) {
        0..=2 => {
            // vowel substitution or lengthening
            let pos = vowel_positions(&w);
            if let Some(&i) = pos.choose(rng) {
                let v = w[i];
                let swap = match v {
                    'a' => ["aa", "e", "a"],
                    'i' => ["ee", "e", "y"],
                    'u' => ["oo", "o", "u"],
                    'e' => ["ai", "ay", "i"],
                    _ => ["u", "oo", "au"],
                };
                let rep: Vec<char> = swap.choose(rng).unwrap().chars().collect();
                w.splice(i..=i, rep);
            }
        }
        3 | 4 => {
            // drop an inner vowel
            let pos: Vec<usize> = vowel_positions(&w)
                .into_iter()
                .filter(|&i| i + 1 < w.len())
                .collect();
            if let Some(&i) = pos.choose(rng) {
                w.remove(i);
            }
        }
        5 => {
            // h after an aspirable consonant
            let pos: Vec<usize> = (0..w.len())
                .filter(|&i| ASPIRABLE.contains(&w[i]) && w.get(i + 1) != Some(&'h'))
                .collect();
            if let Some(&i) = pos.choose(rng) {
                w.insert(i + 1, 'h');
            }
        }
        _ => {
            // doubled consonant
            let pos: Vec<usize> = (1..w.len())
                .filter(|&i| !VOWELS.contains(&w[i]) && w[i] != 'h')
                .collect();
            if let Some(&i) = pos.choose(rng) {
                let c = w[i];
                w.insert(i, c);
            }
        }
    }
    w.into_iter().collect()
}

pub fn generate(cfg: &SynthConfig) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fw = function_words(cfg.function_words);
    let reserved: BTreeSet<&str> = fw.iter().map(String::as_str).collect();

    let skeletons = make_skeletons(cfg.skeletons.max(1), &mut rng);
    // leading base of each skeleton family
    let mut leaders: Vec<Option<String>> = vec![None; skeletons.len()];
    let mut taken: BTreeSet<String> = BTreeSet::new();
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut stalled = 0;
    while groups.len() < cfg.bases {
        let s = rng.gen_range(0..skeletons.len());
        let (base, variants) = match &leaders[s] {
            None => (make_base(&skeletons[s], &mut rng), rng.gen_range(1..=cfg.max_variants)),
            Some(lead) => {
                let v = usize::from(rng.gen_bool(cfg.minor_variant_share));
                (sibling(lead, &mut rng), v)
            }
        };
        if taken.contains(&base) || reserved.contains(base.as_str()) {
            stalled += 1;
            assert!(stalled < 100_000, "skeleton pool too small for {} bases", cfg.bases);
            continue;
        }
        taken.insert(base.clone());
        leaders[s].get_or_insert_with(|| base.clone());
        let mut forms = vec![base];
        let mut tries = 0;
        while forms.len() <= variants && tries < 20 {
            tries += 1;
            let from = forms.choose(&mut rng).unwrap().clone();
            let v = mutate(&from, &mut rng);
            if v.len() >= 3 && !taken.contains(&v) && collapse_repeats(&v) == v {
                taken.insert(v.clone());
                forms.push(v);
            }
        }
        groups.push(forms);
    }

    let weights: Vec<f64> = (1..=cfg.context_pool)
        .map(|r| (r as f64).powf(-cfg.context_skew))
        .collect();
    let pick = WeightedIndex::new(&weights).expect("weights");
    let mut segments: Vec<(String, String, String)> = Vec::new();
    let mut gold = BTreeMap::new();
    for (g, forms) in groups.iter().enumerate() {
        let left: Vec<&String> = fw.choose_multiple(&mut rng, cfg.context_pool).collect();
        let right: Vec<&String> = fw.choose_multiple(&mut rng, cfg.context_pool).collect();
        for form in forms {
            gold.insert(form.clone(), format!("g{g}"));
            let occ = rng.gen_range(cfg.min_occurrences..=cfg.max_occurrences);
            for _ in 0..occ {
                let l = left[pick.sample(&mut rng)].clone();
                let r = right[pick.sample(&mut rng)].clone();
                segments.push((l, form.clone(), r));
            }
        }
    }
    segments.shuffle(&mut rng);

    // Messages hold one or two segments.
    let mut lines = Vec::new();
    let mut it = segments.into_iter();
    while let Some((l, w, r)) = it.next() {
        let mut line = format!("{l} {w} {r}");
        if rng.gen_bool(0.5) {
            if let Some((l2, w2, r2)) = it.next() {
                line.push_str(&format!(" {l2} {w2} {r2}"));
            }
        }
        lines.push(line);
    }
    Fixture {
        lines,
        gold: GoldStandard::from_pairs(gold),
        function_words: fw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_consistent() {
        let cfg = SynthConfig {
            bases: 50,
            ..SynthConfig::default()
        };
        let a = generate(&cfg);
        assert_eq!(a, generate(&cfg));
        let b = generate(&SynthConfig { seed: 8, ..cfg.clone() });
        assert_ne!(a.lines, b.lines);
        // preprocessing leaves every gold form intact
        assert!(a.gold.iter().all(|(w, _)| collapse_repeats(w) == w));
        // every content token has a gold label, function words do not
        let fw: BTreeSet<&str> = a.function_words.iter().map(String::as_str).collect();
        for line in &a.lines {
            for tok in line.split(' ') {
                assert!(fw.contains(tok) ^ a.gold.contains(tok), "{tok}");
            }
        }
        let groups: BTreeSet<&str> = a.gold.iter().map(|(_, g)| g).collect();
        assert_eq!(groups.len(), 50);
    }

    #[test]
    fn mutations_change_spelling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let changed = (0..100).filter(|_| mutate("kitabon", &mut rng) != "kitabon").count();
        assert!(changed > 80);
    }

    #[test]
    fn siblings_differ_in_one_vowel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = sibling("kitabon", &mut rng);
            let diff = s.chars().zip("kitabon".chars()).filter(|(a, b)| a != b).count();
            assert_eq!((s.len(), diff), (7, 1));
        }
    }
}
