//! Bipartite encoding of a table and the friend network initializers.

mod bipartite;
pub mod fpgrowth;
mod friend;
pub mod rules;
mod similarity;

pub use bipartite::{build_bipartite, edge_dim, BipartiteGraph};
pub use fpgrowth::{fp_growth, FrequentItemset};
pub use friend::{init_cos, init_random, CosineInit, FriendAdjacency};
pub use rules::{derive_rules, init_rule, Rule, RuleInit};
pub use similarity::masked_cosine;
