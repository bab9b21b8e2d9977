use serde::{Deserialize, Serialize};

use crate::data::SpellPair;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Share of identity pairs in synthetic datasets unless configured otherwise.
pub const DEFAULT_IDENTITY_FRACTION: f64 = 0.2;

/// QWERTY adjacency: each key with the keys touching it on a standard
/// staggered layout (digit row included).
const QWERTY: [(char, &str); 36] = [
    ('1', "2q"),
    ('2', "13qw"),
    ('3', "24we"),
    ('4', "35er"),
    ('5', "46rt"),
    ('6', "57ty"),
    ('7', "68yu"),
    ('8', "79ui"),
    ('9', "80io"),
    ('0', "9op"),
    ('q', "12wa"),
    ('w', "23qeas"),
    ('e', "34wrsd"),
    ('r', "45etdf"),
    ('t', "56ryfg"),
    ('y', "67tugh"),
    ('u', "78yihj"),
    ('i', "89uojk"),
    ('o', "90ipkl"),
    ('p', "0ol"),
    ('a', "qwsz"),
    ('s', "weadzx"),
    ('d', "ersfxc"),
    ('f', "rtdgcv"),
    ('g', "tyfhvb"),
    ('h', "yugjbn"),
    ('j', "uihknm"),
    ('k', "iojlm"),
    ('l', "opk"),
    ('z', "asx"),
    ('x', "sdzc"),
    ('c', "dfxv"),
    ('v', "fgcb"),
    ('b', "ghvn"),
    ('n', "hjbm"),
    ('m', "jkn"),
];

/// Keys adjacent to `c` on a QWERTY keyboard; empty for anything else.
pub fn qwerty_neighbors(c: char) -> &'static str {
    QWERTY.iter().find(|(k, _)| *k == c).map_or("", |(_, n)| n)
}

/// Relative frequency of each edit operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpWeights {
    pub substitution: f64,
    pub deletion: f64,
    pub insertion: f64,
    pub transposition: f64,
}

impl Default for OpWeights {
    fn default() -> Self {
        OpWeights {
            substitution: 0.25,
            deletion: 0.25,
            insertion: 0.25,
            transposition: 0.25,
        }
    }
}

impl OpWeights {
    fn as_array(&self) -> [f64; 4] {
        [self.substitution, self.deletion, self.insertion, self.transposition]
    }
}

/// Synthetic typo model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Probability that an eligible character is picked for an edit.
    pub p_char: f64,
    pub weights: OpWeights,
    pub min_ops: usize,
    pub max_ops: usize,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            p_char: 0.1,
            weights: OpWeights::default(),
            min_ops: 1,
            max_ops: 3,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(0.0..=1.0).contains(&self.p_char) {
            problems.push(format!("p_char must be in [0, 1], got {}", self.p_char));
        }
        let w = self.weights.as_array();
        if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            problems.push("operation weights must be finite and nonnegative".to_string());
        } else if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            problems.push(format!("operation weights must sum to 1, got {}", w.iter().sum::<f64>()));
        }
        if self.min_ops > self.max_ops {
            problems.push(format!("min_ops {} exceeds max_ops {}", self.min_ops, self.max_ops));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Unrestricted Damerau-Levenshtein distance over chars (adjacent
/// transpositions cost 1 and substrings may be edited again).
pub fn damerau_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let inf = n + m;
    let w = m + 2;
    let mut d = vec![0usize; (n + 2) * w];
    d[0] = inf;
    for i in 0..=n {
        d[(i + 1) * w] = inf;
        d[(i + 1) * w + 1] = i;
    }
    for j in 0..=m {
        d[j + 1] = inf;
        d[w + j + 1] = j;
    }
    let mut last_row: std::collections::HashMap<char, usize> = std::collections::HashMap::new();
    for i in 1..=n {
        let mut last_match_col = 0;
        for j in 1..=m {
            let i1 = last_row.get(&b[j - 1]).copied().unwrap_or(0);
            let j1 = last_match_col;
            let cost = usize::from(a[i - 1] != b[j - 1]);
            if cost == 0 {
                last_match_col = j;
            }
            let sub = d[i * w + j] + cost;
            let ins = d[(i + 1) * w + j] + 1;
            let del = d[i * w + j + 1] + 1;
            let trans = d[i1 * w + j1] + (i - i1 - 1) + 1 + (j - j1 - 1);
            d[(i + 1) * w + j + 1] = sub.min(ins).min(del).min(trans);
        }
        last_row.insert(a[i - 1], i);
    }
    d[(n + 1) * w + m + 1]
}

#[derive(Clone, Copy)]
enum Op {
    Substitute,
    Delete,
    Insert,
    Transpose,
}

fn pick_neighbor(c: char, rng: &mut Rng) -> char {
    let n: Vec<char> = qwerty_neighbors(c).chars().collect();
    n[rng.below(n.len())]
}

/// A word of one character: deleting it would also remove a word boundary.
fn is_lone(chars: &[char], i: usize) -> bool {
    let left = i == 0 || chars[i - 1] == ' ';
    let right = i + 1 == chars.len() || chars[i + 1] == ' ';
    left && right
}

fn apply(chars: &mut Vec<char>, i: usize, op: Op, rng: &mut Rng) {
    let c = chars[i];
    match op {
        Op::Delete if !is_lone(chars, i) => {
            chars.remove(i);
        }
        Op::Insert => chars.insert(i + 1, pick_neighbor(c, rng)),
        Op::Transpose => {
            // swap with the right neighbour, or the left one at the end of a word
            let j = if i + 1 < chars.len() && chars[i + 1] != ' ' {
                Some(i + 1)
            } else if i > 0 && chars[i - 1] != ' ' {
                Some(i - 1)
            } else {
                None
            };
            match j {
                Some(j) if chars[j] != c => chars.swap(i, j),
                _ => chars[i] = pick_neighbor(c, rng),
            }
        }
        _ => chars[i] = pick_neighbor(c, rng),
    }
}

fn attempt(clean: &[char], eligible: &[usize], spec: &NoiseSpec, rng: &mut Rng) -> String {
    let picked = eligible.iter().filter(|_| rng.bernoulli(spec.p_char)).count();
    let k = picked.clamp(spec.min_ops, spec.max_ops).min(eligible.len());
    let mut positions = eligible.to_vec();
    for s in 0..k {
        let r = s + rng.below(positions.len() - s);
        positions.swap(s, r);
    }
    let mut chosen = positions[..k].to_vec();
    // right to left so earlier indices stay valid
    chosen.sort_unstable_by(|a, b| b.cmp(a));
    let weights = spec.weights.as_array();
    let mut chars = clean.to_vec();
    for i in chosen {
        let op = [Op::Substitute, Op::Delete, Op::Insert, Op::Transpose][rng.weighted_index(&weights)];
        apply(&mut chars, i, op, rng);
    }
    chars.into_iter().collect()
}

const MAX_ATTEMPTS: usize = 64;

/// Applies between `min_ops` and `max_ops` keyboard-style edits at distinct
/// letter or digit positions, each position picked with probability
/// `p_char`. Spaces and other characters are never edited, so word
/// boundaries survive. Draws are retried until the Damerau-Levenshtein
/// distance reaches `min_ops`; if no draw does (very short input), the
/// farthest one is returned.
pub fn corrupt(clean: &str, spec: &NoiseSpec, rng: &mut Rng) -> String {
    let chars: Vec<char> = clean.chars().collect();
    let eligible: Vec<usize> = (0..chars.len())
        .filter(|&i| !qwerty_neighbors(chars[i]).is_empty())
        .collect();
    if eligible.is_empty() || spec.max_ops == 0 {
        return clean.to_string();
    }
    let mut best: Option<(usize, String)> = None;
    for _ in 0..MAX_ATTEMPTS {
        let out = attempt(&chars, &eligible, spec, rng);
        let d = damerau_levenshtein(clean, &out);
        if d >= spec.min_ops {
            return out;
        }
        if best.as_ref().is_none_or(|(bd, _)| d > *bd) {
            best = Some((d, out));
        }
    }
    best.map(|(_, s)| s).unwrap_or_else(|| clean.to_string())
}

/// Samples `n_pairs` clean queries with replacement; a share
/// `identity_fraction` of them is kept unchanged, the rest corrupted.
pub fn make_synthetic_dataset<S: AsRef<str>>(
    lexicon: &[S],
    spec: &NoiseSpec,
    n_pairs: usize,
    identity_fraction: f64,
    rng: &mut Rng,
) -> Result<Vec<SpellPair>> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&identity_fraction) {
        return Err(Error::Config(format!("identity_fraction must be in [0, 1], got {identity_fraction}")));
    }
    let clean: Vec<String> = lexicon
        .iter()
        .map(|q| crate::tokenizer::normalize(q.as_ref()))
        .filter(|q| !q.is_empty())
        .collect();
    if n_pairs == 0 {
        return Ok(Vec::new());
    }
    if clean.is_empty() {
        return Err(Error::Input("lexicon is empty".into()));
    }
    (0..n_pairs)
        .map(|_| {
            let q = &clean[rng.below(clean.len())];
            let noisy = if rng.bernoulli(identity_fraction) {
                q.clone()
            } else {
                corrupt(q, spec, rng)
            };
            SpellPair::new(&noisy, q)
        })
        .collect()
}
