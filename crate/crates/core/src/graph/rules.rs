//! Association rules and the rule-based friend-network initializer.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::fpgrowth::{fp_growth, FrequentItemset};
use super::friend::{init_random, FriendAdjacency};
use crate::data::discretize::{discretize_db, DEFAULT_K_RANGE};
use crate::data::TabularDataset;
use crate::numerics::{streams, Rng};
use crate::Result;

pub const DEFAULT_MIN_SUPPORT: f64 = 0.1;
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.6;

/// `antecedent => consequent`, over item ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub antecedent: Vec<usize>,
    pub consequent: usize,
    pub support: f64,
    pub confidence: f64,
}

impl Rule {
    /// Antecedent and consequent together, ascending.
    pub fn items(&self) -> Vec<usize> {
        let mut all = self.antecedent.clone();
        all.push(self.consequent);
        all.sort_unstable();
        all
    }
}

/// Rules with a single-item consequent whose confidence reaches `min_confidence`.
/// `itemsets` must be downward closed, as `fp_growth` returns them.
pub fn derive_rules(itemsets: &[FrequentItemset], n_transactions: usize, min_confidence: f64) -> Vec<Rule> {
    let counts: BTreeMap<&[usize], usize> = itemsets.iter().map(|s| (s.items.as_slice(), s.count)).collect();
    let mut rules = Vec::new();
    for set in itemsets.iter().filter(|s| s.items.len() >= 2) {
        for (k, &consequent) in set.items.iter().enumerate() {
            let mut antecedent = set.items.clone();
            antecedent.remove(k);
            let Some(&base) = counts.get(antecedent.as_slice()) else { continue };
            let confidence = set.count as f64 / base as f64;
            if confidence >= min_confidence {
                rules.push(Rule {
                    antecedent,
                    consequent,
                    support: set.count as f64 / n_transactions as f64,
                    confidence,
                });
            }
        }
    }
    rules
}

/// One transaction per sample, an item per observed cell. Continuous columns
/// are binned first; items are numbered column by column.
pub fn transactions(ds: &TabularDataset) -> Result<Vec<Vec<usize>>> {
    let (n, m) = (ds.n_samples(), ds.n_features());
    let mut labels: Vec<Vec<Option<usize>>> = alloc::vec![alloc::vec![None; m]; n];
    let mut offset = 0;
    for (j, col) in ds.columns().iter().enumerate() {
        let rows: Vec<usize> = (0..n).filter(|&i| ds.is_observed(i, j)).collect();
        let width = match col.category_count() {
            Some(c) => {
                for &i in &rows {
                    labels[i][j] = Some(offset + ds.value(i, j) as usize);
                }
                c
            }
            None => {
                let values: Vec<f64> = rows.iter().map(|&i| ds.value(i, j)).collect();
                // Too few observed values to bin: the column contributes no items.
                let Ok(binning) = discretize_db(&values, DEFAULT_K_RANGE) else { continue };
                for (&i, &l) in rows.iter().zip(&binning.labels) {
                    labels[i][j] = Some(offset + l);
                }
                binning.bin_count()
            }
        };
        offset += width;
    }
    Ok(labels.into_iter().map(|r| r.into_iter().flatten().collect()).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleInit {
    pub adjacency: FriendAdjacency,
    pub rule_count: usize,
    /// Mining found no rules and the random initializer was used instead.
    pub fell_back: bool,
}

/// Connects samples that satisfy a common rule. For each rule the matching
/// samples are shuffled and paired off, so an odd one out stays unpaired.
pub fn init_rule(ds: &TabularDataset, min_support: f64, min_confidence: f64, seed: u64) -> Result<RuleInit> {
    let n = ds.n_samples();
    let tx = transactions(ds)?;
    let itemsets = fp_growth(&tx, min_support);
    let rules = derive_rules(&itemsets, tx.len(), min_confidence);
    if rules.is_empty() {
        return Ok(RuleInit { adjacency: init_random(n, seed)?, rule_count: 0, fell_back: true });
    }
    let sets: Vec<BTreeSet<usize>> = tx.iter().map(|t| t.iter().copied().collect()).collect();
    let mut rng = Rng::with_stream(seed, streams::RULE_PAIRING);
    let mut pairs = Vec::new();
    for rule in &rules {
        let items = rule.items();
        let mut candidates: Vec<usize> = (0..n).filter(|&i| items.iter().all(|it| sets[i].contains(it))).collect();
        rng.shuffle(&mut candidates);
        pairs.extend(candidates.chunks_exact(2).map(|p| (p[0], p[1])));
    }
    Ok(RuleInit { adjacency: FriendAdjacency::from_pairs(n, pairs)?, rule_count: rules.len(), fell_back: false })
}
