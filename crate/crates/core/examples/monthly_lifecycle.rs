// A scripted five-day month for three students: issuance, daily trading,
// consumption and the month-end zero-net settlement.
//
// `cargo run --example monthly_lifecycle`

use std::collections::BTreeMap;
use std::error::Error;

use edisonx::auction::Side;
use edisonx::ledger::{AccountId, PerToken, TokenKind};
use edisonx::lifecycle::{run_month, DayView, MonthConfig, OrderRequest, OrderSource};

/// Heavy, light and average users; the light one sells spare UPX early.
struct Script {
    students: Vec<AccountId>,
}

impl OrderSource for Script {
    fn students(&self) -> Vec<AccountId> {
        self.students.clone()
    }

    fn usage(&mut self, _day: u32) -> Result<BTreeMap<AccountId, f64>, String> {
        Ok(self.students.iter().cloned().zip([14.0, 3.0, 8.0]).collect())
    }

    fn orders(&mut self, view: &DayView<'_>) -> Result<Vec<OrderRequest>, String> {
        if view.day > 2 {
            return Ok(vec![]);
        }
        let req = |who: usize, side, price, qty| OrderRequest {
            account: self.students[who].clone(),
            token: TokenKind::Upx,
            side,
            price,
            qty,
        };
        Ok(vec![req(1, Side::Sell, 28, 10), req(0, Side::Buy, 31, 8)])
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let config = MonthConfig {
        days_in_month: 5,
        num_students: 3,
        prev_year_usage_kwh: PerToken::new(120, 30),
        base_price: PerToken::new(30, 40),
        shortage_premium_factor: 1.5,
        settlement_discount_factor: 0.8,
        settlement_anchor: None,
        initial_currency: 5_000,
        theta: 0.25,
    };
    let mut script = Script {
        students: ["s01", "s02", "s03"].into_iter().map(AccountId::new).collect(),
    };
    let record = run_month(&config, &mut script)?;

    println!("issued per student: {:?}", record.issuance.per_student);
    for d in &record.days {
        let r = d.results.get(TokenKind::Upx);
        println!(
            "day {}: UPX price {:?} volume {}, system asks {}",
            d.day,
            r.price,
            r.volume,
            d.books.get(TokenKind::Upx).asks.iter().filter(|o| o.account.is_system()).count()
        );
    }
    for token in TokenKind::ALL {
        let s = record.settlement.get(token);
        println!(
            "{token} settlement: surplus {} at {}, deficit {} at {}, residue {}",
            s.surplus, s.buy_price, s.deficit, s.sell_price, s.residue
        );
    }
    for (id, a) in record.ledger.accounts() {
        println!("{id:>6} currency {}", a.balances.currency);
    }
    assert!(record.ledger.supply_identity_holds());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
