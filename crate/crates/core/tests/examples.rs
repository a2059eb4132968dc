//! Every example runs to completion.

macro_rules! example {
    ($name:ident) => {
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $name() {
            $name::run().unwrap();
        }
    };
}

example!(ledger_replay);
example!(single_price_auction);
example!(monthly_lifecycle);
example!(synthetic_month);
example!(transaction_hypergraph);
example!(cavity_detection);
example!(cavity_activity_table);
example!(full_pipeline);
