// Mint, trade and burn tokens, then rebuild the ledger from its log.
//
// `cargo run --example ledger_replay`

use std::error::Error;

use edisonx::ledger::{AccountId, Asset, Ledger, TokenKind};

pub fn run() -> Result<(), Box<dyn Error>> {
    let (alice, bob) = (AccountId::new("s01"), AccountId::new("s02"));
    let mut ledger = Ledger::with_students([alice.clone(), bob.clone()])?;

    ledger.mint(Asset::Currency, &alice, 1_000, 1, "deposit")?;
    ledger.mint(Asset::Currency, &bob, 1_000, 1, "deposit")?;
    ledger.mint(Asset::Upx, &alice, 40, 1, "monthly issue")?;
    ledger.transfer(TokenKind::Upx, &alice, &bob, 5, 2, "auction fill")?;
    ledger.pay(&bob, &alice, 150, 2, "auction fill")?;
    ledger.burn(Asset::Upx, &bob, 3, 2, "consumption")?;

    // Overdrawing fails and leaves no trace.
    let before = ledger.clone();
    let err = ledger.transfer(TokenKind::Upx, &bob, &alice, 99, 3, "oops").unwrap_err();
    println!("rejected: {err}");
    assert_eq!(ledger, before);

    for (id, acct) in ledger.accounts() {
        let b = acct.balances;
        println!("{id:>6}  UPX {:>3}  SPX {:>3}  currency {:>6}", b.upx, b.spx, b.currency);
    }
    let upx = ledger.supply(Asset::Upx);
    println!("UPX minted {} burned {} held {}", upx.minted, upx.burned, ledger.total_held(Asset::Upx));
    assert!(ledger.supply_identity_holds());

    let mut log = Vec::new();
    ledger.write_jsonl(&mut log)?;
    let restored = Ledger::import_jsonl(log.as_slice())?;
    assert_eq!(restored, ledger);
    println!("{} transactions replayed to an identical ledger", ledger.log().len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
