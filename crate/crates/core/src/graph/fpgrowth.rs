//! Frequent-itemset mining over a prefix tree of transactions.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

/// An itemset (ascending item ids) and the number of transactions containing it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct FrequentItemset {
    pub items: Vec<usize>,
    pub count: usize,
}

/// Smallest transaction count meeting `min_support` over `n` transactions.
pub fn min_count(min_support: f64, n: usize) -> usize {
    let need = min_support * n as f64 - 1e-9;
    (libm::ceil(need).max(1.0)) as usize
}

struct Node {
    item: usize,
    count: usize,
    parent: usize,
    children: BTreeMap<usize, usize>,
}

struct FpTree {
    nodes: Vec<Node>,
    /// Item to the tree nodes carrying it.
    header: BTreeMap<usize, Vec<usize>>,
    support: BTreeMap<usize, usize>,
}

impl FpTree {
    fn build(transactions: &[(Vec<usize>, usize)], min: usize) -> Self {
        let mut support = BTreeMap::new();
        for (t, w) in transactions {
            for &it in t {
                *support.entry(it).or_insert(0) += w;
            }
        }
        support.retain(|_, c| *c >= min);
        let root = Node { item: usize::MAX, count: 0, parent: usize::MAX, children: BTreeMap::new() };
        let mut tree = Self { nodes: vec![root], header: BTreeMap::new(), support };
        for (t, w) in transactions {
            let mut items: Vec<usize> = t.iter().copied().filter(|it| tree.support.contains_key(it)).collect();
            items.sort_by(|a, b| tree.support[b].cmp(&tree.support[a]).then(a.cmp(b)));
            items.dedup();
            tree.insert(&items, *w);
        }
        tree
    }

    fn insert(&mut self, items: &[usize], weight: usize) {
        let mut cur = 0;
        for &it in items {
            cur = match self.nodes[cur].children.get(&it) {
                Some(&child) => child,
                None => {
                    let id = self.nodes.len();
                    self.nodes.push(Node { item: it, count: 0, parent: cur, children: BTreeMap::new() });
                    self.nodes[cur].children.insert(it, id);
                    self.header.entry(it).or_default().push(id);
                    id
                }
            };
            self.nodes[cur].count += weight;
        }
    }

    /// Weighted prefix paths ending just above each node of `item`.
    fn conditional_base(&self, item: usize) -> Vec<(Vec<usize>, usize)> {
        let mut base = Vec::new();
        for &node in &self.header[&item] {
            let mut path = Vec::new();
            let mut cur = self.nodes[node].parent;
            while cur != 0 {
                path.push(self.nodes[cur].item);
                cur = self.nodes[cur].parent;
            }
            if !path.is_empty() {
                base.push((path, self.nodes[node].count));
            }
        }
        base
    }
}

fn mine(transactions: &[(Vec<usize>, usize)], min: usize, suffix: &[usize], out: &mut Vec<FrequentItemset>) {
    let tree = FpTree::build(transactions, min);
    for (&item, &count) in &tree.support {
        let mut items = suffix.to_vec();
        items.push(item);
        let base = tree.conditional_base(item);
        if !base.is_empty() {
            mine(&base, min, &items, out);
        }
        items.sort_unstable();
        out.push(FrequentItemset { items, count });
    }
}

/// Every itemset contained in at least `min_support` of the transactions,
/// with exact counts, sorted by (size, items).
pub fn fp_growth(transactions: &[Vec<usize>], min_support: f64) -> Vec<FrequentItemset> {
    if transactions.is_empty() {
        return Vec::new();
    }
    let weighted: Vec<(Vec<usize>, usize)> = transactions.iter().map(|t| (t.clone(), 1)).collect();
    let mut out = Vec::new();
    mine(&weighted, min_count(min_support, transactions.len()), &[], &mut out);
    out.sort_by(|a, b| a.items.len().cmp(&b.items.len()).then(a.items.cmp(&b.items)));
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Counts every subset of the item universe directly.
    pub(crate) fn brute_force(transactions: &[Vec<usize>], n_items: usize, min_support: f64) -> Vec<FrequentItemset> {
        let min = min_count(min_support, transactions.len());
        let mut out = Vec::new();
        if transactions.is_empty() {
            return out;
        }
        for bits in 1u32..(1 << n_items) {
            let items: Vec<usize> = (0..n_items).filter(|&k| bits & (1 << k) != 0).collect();
            let count = transactions.iter().filter(|t| items.iter().all(|it| t.contains(it))).count();
            if count >= min {
                out.push(FrequentItemset { items, count });
            }
        }
        out.sort_by(|a, b| a.items.len().cmp(&b.items.len()).then(a.items.cmp(&b.items)));
        out
    }

    fn set(items: &[usize], count: usize) -> FrequentItemset {
        FrequentItemset { items: items.to_vec(), count }
    }

    #[test]
    fn small_example() {
        let (a, b, c) = (0, 1, 2);
        let tx = vec![vec![a, b], vec![a, b, c], vec![a, c]];
        let got = fp_growth(&tx, 2.0 / 3.0);
        assert_eq!(got, vec![set(&[a], 3), set(&[b], 2), set(&[c], 2), set(&[a, b], 2), set(&[a, c], 2)]);
        assert_eq!(got, brute_force(&tx, 3, 2.0 / 3.0));
    }

    #[test]
    fn full_support_keeps_common_items() {
        let tx = vec![vec![0, 1, 4], vec![1, 4], vec![4, 1, 2]];
        assert_eq!(fp_growth(&tx, 1.0), vec![set(&[1], 3), set(&[4], 3), set(&[1, 4], 3)]);
    }

    #[test]
    fn empty_input() {
        assert!(fp_growth(&[], 0.1).is_empty());
    }

    proptest! {
        #[test]
        fn equals_brute_force(
            tx in prop::collection::vec(prop::collection::btree_set(0usize..12, 0..8), 0..25),
            support in 0.05f64..1.0,
        ) {
            let tx: Vec<Vec<usize>> = tx.into_iter().map(|s| s.into_iter().collect()).collect();
            prop_assert_eq!(fp_growth(&tx, support), brute_force(&tx, 12, support));
        }
    }
}
