use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tokenizer::{normalize, END_OF_WORD};

const MERGES_HEADER: &str = "#version 1";

/// Ordered BPE merge rules.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
    ranks: HashMap<String, HashMap<String, usize>>,
}

impl MergeTable {
    pub fn new(merges: Vec<(String, String)>) -> Result<Self> {
        let mut ranks: HashMap<String, HashMap<String, usize>> = HashMap::new();
        for (rank, (l, r)) in merges.iter().enumerate() {
            if l.is_empty() || r.is_empty() {
                return Err(Error::Input(format!("merge {rank} has an empty symbol")));
            }
            if ranks
                .entry(l.clone())
                .or_default()
                .insert(r.clone(), rank)
                .is_some()
            {
                return Err(Error::Input(format!("duplicate merge ({l}, {r})")));
            }
        }
        Ok(MergeTable { merges, ranks })
    }

    pub fn empty() -> Self {
        MergeTable::default()
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// The first `n` merges.
    pub fn prefix(&self, n: usize) -> MergeTable {
        let merges = self.merges[..n.min(self.merges.len())].to_vec();
        MergeTable::new(merges).expect("prefix of a valid table is valid")
    }

    /// Symbols produced by merges, in rank order.
    pub fn products(&self) -> impl Iterator<Item = String> + '_ {
        self.merges.iter().map(|(l, r)| format!("{l}{r}"))
    }

    /// Segments one word (no whitespace) into symbols, ending with the
    /// end-of-word marker (possibly fused into the last symbol).
    ///
    /// Equivalent to applying every merge, in rank order, to all of its
    /// left-to-right non-overlapping occurrences.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        symbols.push(END_OF_WORD.to_string());
        if self.merges.is_empty() {
            return symbols;
        }
        let mut last_rank: Option<usize> = None;
        loop {
            let next = symbols
                .windows(2)
                .filter_map(|w| self.rank(&w[0], &w[1]))
                .filter(|&r| last_rank.map_or(true, |l| r > l))
                .min();
            let Some(rank) = next else { break };
            let (left, right) = &self.merges[rank];
            symbols = merge_pair(symbols, left, right);
            last_rank = Some(rank);
        }
        symbols
    }

    fn rank(&self, left: &str, right: &str) -> Option<usize> {
        self.ranks.get(left)?.get(right).copied()
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::from(MERGES_HEADER);
        out.push('\n');
        for (l, r) in &self.merges {
            out.push_str(l);
            out.push(' ');
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    pub fn from_file_string(text: &str, path: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(MERGES_HEADER) => {}
            other => {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: 1,
                    message: format!("expected header {MERGES_HEADER:?}, found {other:?}"),
                })
            }
        }
        let mut merges = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merges.push((l.to_string(), r.to_string()))
                }
                _ => {
                    return Err(Error::Parse {
                        path: path.to_string(),
                        line: i + 2,
                        message: format!("expected \"left right\", found {line:?}"),
                    })
                }
            }
        }
        MergeTable::new(merges).map_err(|e| Error::Parse {
            path: path.to_string(),
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MergeTable::from_file_string(&text, &path.display().to_string())
    }
}

fn merge_pair(symbols: Vec<String>, left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut iter = symbols.into_iter().peekable();
    while let Some(s) = iter.next() {
        if s == left && iter.peek().is_some_and(|n| n == right) {
            let r = iter.next().unwrap();
            out.push(s + &r);
        } else {
            out.push(s);
        }
    }
    out
}

/// Whitespace-delimited word frequencies of a normalized corpus.
pub(crate) fn word_counts<S: AsRef<str>>(corpus: &[S]) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for line in corpus {
        for w in normalize(line.as_ref()).split(' ').filter(|w| !w.is_empty()) {
            *counts.entry(w.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

/// Learns up to `num_merges` merges by repeatedly fusing the most frequent
/// adjacent symbol pair.
///
/// Pairs are counted over distinct words weighted by word frequency; ties go
/// to the lexicographically smallest `(left, right)`. Fewer merges are
/// returned only when no adjacent pair remains.
pub fn learn_bpe<S: AsRef<str>>(corpus: &[S], num_merges: usize) -> Result<MergeTable> {
    let counts = word_counts(corpus);
    if counts.is_empty() {
        return Err(Error::Input("cannot learn BPE merges from an empty corpus".into()));
    }

    let mut interner = Interner::default();
    let mut words: Vec<(Vec<u32>, u64)> = counts
        .iter()
        .map(|(w, &n)| {
            let mut syms: Vec<u32> = w.chars().map(|c| interner.intern(&c.to_string())).collect();
            syms.push(interner.intern(END_OF_WORD));
            (syms, n)
        })
        .collect();

    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut occurs_in: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    for (idx, (syms, n)) in words.iter().enumerate() {
        for w in syms.windows(2) {
            *pair_counts.entry((w[0], w[1])).or_insert(0) += n;
            occurs_in.entry((w[0], w[1])).or_default().push(idx);
        }
    }
    let mut heap: BinaryHeap<(u64, Reverse<(String, String)>, (u32, u32))> = BinaryHeap::new();
    for (&pair, &n) in &pair_counts {
        heap.push((n, Reverse(interner.pair_strings(pair)), pair));
    }

    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let Some((n, Reverse(names), pair)) = heap.pop() else { break };
        if n == 0 || pair_counts.get(&pair).copied() != Some(n) {
            continue; // stale entry
        }
        let merged = interner.intern(&format!("{}{}", names.0, names.1));
        merges.push(names);

        let mut affected = occurs_in.remove(&pair).unwrap_or_default();
        affected.sort_unstable();
        affected.dedup();
        let mut touched: Vec<(u32, u32)> = Vec::new();
        for idx in affected {
            let (syms, freq) = &mut words[idx];
            if !syms.windows(2).any(|w| (w[0], w[1]) == pair) {
                continue;
            }
            for w in syms.windows(2) {
                let p = (w[0], w[1]);
                if let Some(c) = pair_counts.get_mut(&p) {
                    *c -= *freq;
                }
                touched.push(p);
            }
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == pair {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            *syms = out;
            for w in syms.windows(2) {
                let p = (w[0], w[1]);
                *pair_counts.entry(p).or_insert(0) += *freq;
                let list = occurs_in.entry(p).or_default();
                if list.last() != Some(&idx) {
                    list.push(idx);
                }
                touched.push(p);
            }
        }
        touched.sort_unstable();
        touched.dedup();
        for p in touched {
            let c = pair_counts[&p];
            if c > 0 && p != pair {
                heap.push((c, Reverse(interner.pair_strings(p)), p));
            }
        }
        pair_counts.remove(&pair);
    }
    MergeTable::new(merges)
}

#[derive(Default)]
struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }

    fn pair_strings(&self, (l, r): (u32, u32)) -> (String, String) {
        (self.names[l as usize].clone(), self.names[r as usize].clone())
    }
}
