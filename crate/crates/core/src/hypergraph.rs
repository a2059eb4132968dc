//! Transaction hypergraphs: one hyperedge per trading day, spanning every
//! account that had an order filled that day. The system account is a node
//! like any other and exports as `admin`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::ClearingResult;
use crate::ledger::{AccountId, TokenKind, SYSTEM_ACCOUNT};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HypergraphError {
    #[error("result for day {day} is {found}, expected {expected}")]
    MixedTokens {
        day: u32,
        expected: TokenKind,
        found: TokenKind,
    },
    #[error("day {0} appears twice")]
    DuplicateDay(u32),
    #[error("unknown node {0}")]
    UnknownNode(AccountId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperedge {
    pub day: u32,
    pub members: BTreeSet<AccountId>,
    pub contracted_order_count: usize,
}

impl Hyperedge {
    pub fn cardinality(&self) -> usize {
        self.members.len()
    }
}

/// Hyperedge for one cleared day, or `None` if nothing traded.
pub fn daily_hyperedge(result: &ClearingResult) -> Option<Hyperedge> {
    if result.volume == 0 {
        return None;
    }
    let filled = result.fills.iter().filter(|f| f.filled_qty > 0);
    Some(Hyperedge {
        day: result.day,
        members: filled.clone().map(|f| f.account.clone()).collect(),
        contracted_order_count: filled.count(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypergraph {
    pub token: TokenKind,
    pub nodes: BTreeSet<AccountId>,
    /// Sorted by day.
    pub edges: Vec<Hyperedge>,
}

impl Hypergraph {
    /// Builds the month's hypergraph for `token`. Input order is irrelevant.
    pub fn build<'a>(
        results: impl IntoIterator<Item = &'a ClearingResult>,
        token: TokenKind,
    ) -> Result<Self, HypergraphError> {
        let mut by_day: BTreeMap<u32, Option<Hyperedge>> = BTreeMap::new();
        for r in results {
            if r.token != token {
                return Err(HypergraphError::MixedTokens {
                    day: r.day,
                    expected: token,
                    found: r.token,
                });
            }
            if by_day.insert(r.day, daily_hyperedge(r)).is_some() {
                return Err(HypergraphError::DuplicateDay(r.day));
            }
        }
        let edges: Vec<Hyperedge> = by_day.into_values().flatten().collect();
        let nodes = edges.iter().flat_map(|e| e.members.iter().cloned()).collect();
        Ok(Self { token, nodes, edges })
    }

    /// Adds nodes that never traded, so they show up with degree 0.
    pub fn with_isolated(mut self, accounts: impl IntoIterator<Item = AccountId>) -> Self {
        self.nodes.extend(accounts);
        self
    }

    pub fn degree(&self, node: &AccountId) -> Result<usize, HypergraphError> {
        if !self.nodes.contains(node) {
            return Err(HypergraphError::UnknownNode(node.clone()));
        }
        Ok(self.edges.iter().filter(|e| e.members.contains(node)).count())
    }

    pub fn degrees(&self) -> BTreeMap<AccountId, usize> {
        let mut out: BTreeMap<AccountId, usize> = self.nodes.iter().map(|n| (n.clone(), 0)).collect();
        for e in &self.edges {
            for m in &e.members {
                *out.get_mut(m).expect("members are nodes") += 1;
            }
        }
        out
    }

    /// Edge size → number of edges of that size.
    pub fn cardinality_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for e in &self.edges {
            *h.entry(e.cardinality()).or_default() += 1;
        }
        h
    }

    /// 0/1 matrix with one row per node (sorted) and one column per edge.
    pub fn incidence_matrix(&self) -> Vec<Vec<u8>> {
        self.nodes
            .iter()
            .map(|n| self.edges.iter().map(|e| u8::from(e.members.contains(n))).collect())
            .collect()
    }

    pub fn export(&self) -> HypergraphExport {
        HypergraphExport {
            token: self.token,
            system: SYSTEM_ACCOUNT.to_owned(),
            nodes: self.nodes.iter().cloned().collect(),
            edges: self.edges.clone(),
        }
    }
}

/// JSON export; `system` names the administrator node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypergraphExport {
    pub token: TokenKind,
    pub system: String,
    pub nodes: Vec<AccountId>,
    pub edges: Vec<Hyperedge>,
}
