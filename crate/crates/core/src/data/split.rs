use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::SpellPair;
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Pairs are assigned independently.
    #[default]
    Random,
    /// All pairs sharing a clean string land in the same split.
    CleanDisjoint,
}

/// Largest-remainder allocation of `n` items to the three fractions.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!("split fractions must be positive and sum to 1, got {fractions:?}")));
    }
    let exact = fractions.map(|f| f * n as f64);
    let mut sizes = exact.map(|e| e.floor() as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let short = n - sizes.iter().sum::<usize>();
    for &k in order.iter().take(short) {
        sizes[k] += 1;
    }
    Ok(sizes)
}

/// Shuffles and partitions pairs into (train, dev, test).
///
/// In clean-disjoint mode whole groups of pairs with the same clean string
/// are dealt out, each to the split furthest below its target size, so sizes
/// only approximate the fractions.
pub fn split(
    pairs: &[SpellPair],
    fractions: [f64; 3],
    mode: SplitMode,
    rng: &mut Rng,
) -> Result<(Vec<SpellPair>, Vec<SpellPair>, Vec<SpellPair>)> {
    if pairs.len() < 3 {
        return Err(Error::Input(format!("need at least 3 pairs to split, got {}", pairs.len())));
    }
    let targets = split_sizes(pairs.len(), fractions)?;
    let mut out: [Vec<SpellPair>; 3] = Default::default();
    match mode {
        SplitMode::Random => {
            let mut shuffled = pairs.to_vec();
            rng.shuffle(&mut shuffled);
            let mut it = shuffled.into_iter();
            for (k, &size) in targets.iter().enumerate() {
                out[k].extend(it.by_ref().take(size));
            }
        }
        SplitMode::CleanDisjoint => {
            let mut groups: BTreeMap<&str, Vec<&SpellPair>> = BTreeMap::new();
            for p in pairs {
                groups.entry(p.clean.as_str()).or_default().push(p);
            }
            let mut groups: Vec<Vec<&SpellPair>> = groups.into_values().collect();
            rng.shuffle(&mut groups);
            for group in groups {
                let k = (0..3)
                    .max_by_key(|&k| (targets[k] as i64 - out[k].len() as i64, std::cmp::Reverse(k)))
                    .unwrap();
                out[k].extend(group.into_iter().cloned());
            }
            for part in &mut out {
                rng.shuffle(part);
            }
        }
    }
    let [train, dev, test] = out;
    Ok((train, dev, test))
}
