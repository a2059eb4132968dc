mod common;

use std::collections::BTreeMap;

use common::{upx_fixture_month, spx_fixture_month, random_month, union_of_members};
use edisonx::hypergraph::{Hypergraph, HypergraphError};
use edisonx::ledger::{AccountId, TokenKind};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn upx_fixture_cardinalities() {
    let h = Hypergraph::build(&upx_fixture_month(), TokenKind::Upx).unwrap();
    let mut sizes: Vec<usize> = h.edges.iter().map(|e| e.cardinality()).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![2, 2, 2, 2, 3, 6]);
    assert_eq!(h.edges.iter().map(|e| e.day).collect::<Vec<_>>(), vec![2, 5, 8, 11, 15, 19]);
    assert_eq!(h.cardinality_histogram(), BTreeMap::from([(2, 4), (3, 1), (6, 1)]));
}

#[test]
fn spx_fixture_admin_degree() {
    let h = Hypergraph::build(&spx_fixture_month(), TokenKind::Spx).unwrap();
    assert_eq!(h.degree(&AccountId::system()).unwrap(), 6);
    assert_eq!(h.edges.len(), 6);
    assert_eq!(h.cardinality_histogram(), BTreeMap::from([(2, 3), (3, 3)]));
    assert!(h.degrees().iter().all(|(n, &d)| n.is_system() || d < 6));
    let json = serde_json::to_value(h.export()).unwrap();
    assert_eq!(json["system"], "admin");
    assert!(json["nodes"].as_array().unwrap().iter().any(|n| n == "admin"));
}

#[test]
fn isolated_and_unknown_nodes() {
    let h = Hypergraph::build(&upx_fixture_month(), TokenKind::Upx)
        .unwrap()
        .with_isolated([AccountId::new("s99")]);
    assert_eq!(h.degree(&AccountId::new("s99")), Ok(0));
    let ghost = AccountId::new("nobody");
    assert_eq!(h.degree(&ghost), Err(HypergraphError::UnknownNode(ghost)));
}

#[test]
fn mixed_tokens_rejected() {
    let mut results = upx_fixture_month();
    results.extend(spx_fixture_month());
    assert!(matches!(
        Hypergraph::build(&results, TokenKind::Upx),
        Err(HypergraphError::MixedTokens { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn structural_identities(seed in any::<u64>(), days in 1u32..=31, accounts in 2usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let results = random_month(&mut rng, TokenKind::Upx, days, accounts);
        let h = Hypergraph::build(&results, TokenKind::Upx).unwrap();

        let degrees = h.degrees();
        let degree_sum: usize = degrees.values().sum();
        let card_sum: usize = h.edges.iter().map(|e| e.cardinality()).sum();
        prop_assert_eq!(degree_sum, card_sum);

        let m = h.incidence_matrix();
        for (row, (node, d)) in m.iter().zip(&degrees) {
            prop_assert_eq!(row.iter().map(|&x| x as usize).sum::<usize>(), *d);
            prop_assert_eq!(h.degree(node).unwrap(), *d);
        }

        let trading_days = results.iter().filter(|r| r.volume > 0).count();
        prop_assert_eq!(h.cardinality_histogram().values().sum::<usize>(), trading_days);
        prop_assert_eq!(&h.nodes, &union_of_members(&results));

        let mut shuffled = results.clone();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(Hypergraph::build(&shuffled, TokenKind::Upx).unwrap(), h);
    }
}
