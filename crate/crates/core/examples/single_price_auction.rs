// One day's call auction: step curves, the clearing price and who filled.
//
// `cargo run --example single_price_auction`

use std::error::Error;

use edisonx::auction::{clear, Order, OrderBook, Side};
use edisonx::ledger::{AccountId, TokenKind};

fn order(id: u64, who: &str, side: Side, price: u64, qty: u64) -> Order {
    Order {
        order_id: id,
        account: AccountId::new(who),
        token: TokenKind::Upx,
        side,
        price,
        qty,
        day: 1,
        arrival: id as u32,
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    use Side::*;
    let book = OrderBook::from_orders(
        1,
        TokenKind::Upx,
        vec![
            order(1, "s01", Buy, 12, 10),
            order(2, "s02", Buy, 9, 5),
            order(3, "s03", Buy, 8, 5),
            order(4, "s04", Sell, 8, 6),
            order(5, "s05", Sell, 10, 8),
            order(6, "s06", Sell, 13, 5),
        ],
    )?;

    println!("price  demand  supply");
    for p in 7..=14 {
        println!("{p:>5}  {:>6}  {:>6}", book.demand_at(p), book.supply_at(p));
    }

    let r = clear(&book)?;
    println!("\nclearing price {:?}, volume {}", r.price, r.volume);
    for f in &r.fills {
        println!("  order {} {:?} {} filled {}", f.order_id, f.side, f.account, f.filled_qty);
    }
    for id in &r.rejected {
        println!("  order {id} unfilled");
    }
    assert_eq!((r.price, r.volume), (Some(10), 10));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
