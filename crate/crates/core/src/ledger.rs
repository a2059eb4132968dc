//! Token accounting for the dormitory market.
//!
//! Every balance change is a [`LedgerTx`] appended to the log. Replaying the
//! log from genesis over the same account roster reproduces the balances
//! exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of the single system (issuer) account.
pub const SYSTEM_ACCOUNT: &str = "admin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    /// Right to 1 kWh from the utility grid.
    #[serde(rename = "UPX")]
    Upx,
    /// Right to 1 kWh from the rooftop PV array.
    #[serde(rename = "SPX")]
    Spx,
}

impl TokenKind {
    pub const ALL: [TokenKind; 2] = [TokenKind::Upx, TokenKind::Spx];

    pub fn as_str(self) -> &'static str {
        match self {
            TokenKind::Upx => "UPX",
            TokenKind::Spx => "SPX",
        }
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A value held once per token kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerToken<T> {
    #[serde(rename = "UPX")]
    pub upx: T,
    #[serde(rename = "SPX")]
    pub spx: T,
}

impl<T> PerToken<T> {
    pub fn new(upx: T, spx: T) -> Self {
        Self { upx, spx }
    }

    pub fn get(&self, token: TokenKind) -> &T {
        match token {
            TokenKind::Upx => &self.upx,
            TokenKind::Spx => &self.spx,
        }
    }

    pub fn get_mut(&mut self, token: TokenKind) -> &mut T {
        match token {
            TokenKind::Upx => &mut self.upx,
            TokenKind::Spx => &mut self.spx,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(TokenKind, &T) -> U) -> PerToken<U> {
        PerToken {
            upx: f(TokenKind::Upx, &self.upx),
            spx: f(TokenKind::Spx, &self.spx),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub String);

impl AccountId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn system() -> Self {
        Self(SYSTEM_ACCOUNT.to_owned())
    }

    pub fn is_system(&self) -> bool {
        self.0 == SYSTEM_ACCOUNT
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AccountId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Student,
    System,
}

/// What a transaction moves: one of the two tokens or currency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Asset {
    #[serde(rename = "UPX")]
    Upx,
    #[serde(rename = "SPX")]
    Spx,
    #[serde(rename = "currency")]
    Currency,
}

impl From<TokenKind> for Asset {
    fn from(t: TokenKind) -> Self {
        match t {
            TokenKind::Upx => Asset::Upx,
            TokenKind::Spx => Asset::Spx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Mint,
    Burn,
    Transfer,
    CurrencyTransfer,
}

/// One logged balance change. Field names and order are the JSON Lines
/// export schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTx {
    pub seq: u64,
    pub kind: TxKind,
    pub token: Asset,
    pub from: AccountId,
    pub to: AccountId,
    pub amount: u64,
    pub day: u32,
    pub cause: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Balances {
    pub upx: u64,
    pub spx: u64,
    /// Non-negative for students. The system account's currency is the
    /// signed settlement reserve.
    pub currency: i64,
}

impl Balances {
    pub fn token(&self, token: TokenKind) -> u64 {
        match token {
            TokenKind::Upx => self.upx,
            TokenKind::Spx => self.spx,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub role: Role,
    pub balances: Balances,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("account {account} holds {available} {asset:?}, needs {required}")]
    InsufficientBalance {
        account: AccountId,
        asset: Asset,
        available: i64,
        required: u64,
    },
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("transaction seq {got} does not follow {last}")]
    NonMonotoneSeq { last: u64, got: u64 },
    #[error("malformed transaction {seq}: {reason}")]
    Malformed { seq: u64, reason: String },
    #[error("duplicate account {0}")]
    DuplicateAccount(AccountId),
    #[error("ledger log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("ledger io: {0}")]
    Io(String),
}

/// Running per-asset totals of minted and burned units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Supply {
    pub minted: u128,
    pub burned: u128,
}

impl Supply {
    pub fn outstanding(&self) -> i128 {
        self.minted as i128 - self.burned as i128
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    accounts: BTreeMap<AccountId, Account>,
    log: Vec<LedgerTx>,
    supply: BTreeMap<Asset, Supply>,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    /// Empty ledger holding only the system account.
    pub fn new() -> Self {
        let mut accounts = BTreeMap::new();
        accounts.insert(
            AccountId::system(),
            Account {
                role: Role::System,
                balances: Balances::default(),
            },
        );
        Self {
            accounts,
            log: Vec::new(),
            supply: BTreeMap::new(),
        }
    }

    pub fn with_students<I, A>(students: I) -> Result<Self, LedgerError>
    where
        I: IntoIterator<Item = A>,
        A: Into<AccountId>,
    {
        let mut ledger = Self::new();
        for s in students {
            ledger.open_student(s.into())?;
        }
        Ok(ledger)
    }

    pub fn open_student(&mut self, id: AccountId) -> Result<(), LedgerError> {
        if self.accounts.contains_key(&id) {
            return Err(LedgerError::DuplicateAccount(id));
        }
        self.accounts.insert(
            id,
            Account {
                role: Role::Student,
                balances: Balances::default(),
            },
        );
        Ok(())
    }

    pub fn accounts(&self) -> &BTreeMap<AccountId, Account> {
        &self.accounts
    }

    pub fn students(&self) -> impl Iterator<Item = &AccountId> {
        self.accounts
            .iter()
            .filter(|(_, a)| a.role == Role::Student)
            .map(|(id, _)| id)
    }

    pub fn log(&self) -> &[LedgerTx] {
        &self.log
    }

    pub fn last_seq(&self) -> u64 {
        self.log.last().map_or(0, |tx| tx.seq)
    }

    pub fn supply(&self, asset: Asset) -> Supply {
        self.supply.get(&asset).copied().unwrap_or_default()
    }

    pub fn balances(&self, account: &AccountId) -> Result<Balances, LedgerError> {
        self.accounts
            .get(account)
            .map(|a| a.balances)
            .ok_or_else(|| LedgerError::UnknownAccount(account.clone()))
    }

    pub fn balance_of(&self, account: &AccountId, token: TokenKind) -> Result<u64, LedgerError> {
        self.balances(account).map(|b| b.token(token))
    }

    pub fn currency_of(&self, account: &AccountId) -> Result<i64, LedgerError> {
        self.balances(account).map(|b| b.currency)
    }

    /// Sum of `token` over student accounts; the system's holdings are excluded.
    pub fn aggregate_remaining(&self, token: TokenKind) -> u64 {
        self.accounts
            .values()
            .filter(|a| a.role == Role::Student)
            .map(|a| a.balances.token(token))
            .sum()
    }

    /// Sum of an asset over every account, system included.
    pub fn total_held(&self, asset: Asset) -> i128 {
        self.accounts
            .values()
            .map(|a| match asset {
                Asset::Upx => a.balances.upx as i128,
                Asset::Spx => a.balances.spx as i128,
                Asset::Currency => a.balances.currency as i128,
            })
            .sum()
    }

    /// Holdings equal mints minus burns for every asset.
    pub fn supply_identity_holds(&self) -> bool {
        [Asset::Upx, Asset::Spx, Asset::Currency]
            .into_iter()
            .all(|a| self.total_held(a) == self.supply(a).outstanding())
    }

    /// Validates and applies `tx`. On error the ledger is untouched.
    pub fn apply_tx(&mut self, tx: LedgerTx) -> Result<(), LedgerError> {
        let last = self.last_seq();
        if tx.seq != last + 1 {
            return Err(LedgerError::NonMonotoneSeq { last, got: tx.seq });
        }
        for id in [&tx.from, &tx.to] {
            if !self.accounts.contains_key(id) {
                return Err(LedgerError::UnknownAccount(id.clone()));
            }
        }
        let malformed = |reason: &str| LedgerError::Malformed {
            seq: tx.seq,
            reason: reason.to_owned(),
        };
        match tx.kind {
            TxKind::Mint if !tx.from.is_system() => {
                return Err(malformed("mint must originate at the system account"))
            }
            TxKind::Burn if !tx.to.is_system() => {
                return Err(malformed("burn must terminate at the system account"))
            }
            TxKind::Transfer if tx.token == Asset::Currency => {
                return Err(malformed("currency moves via currency_transfer"))
            }
            TxKind::CurrencyTransfer if tx.token != Asset::Currency => {
                return Err(malformed("currency_transfer must move currency"))
            }
            _ => {}
        }
        let amount_i64 = i64::try_from(tx.amount).map_err(|_| malformed("amount overflow"))?;

        // Debit check first so a failure leaves everything as it was.
        let debits_source = !matches!(tx.kind, TxKind::Mint);
        if debits_source {
            let src = &self.accounts[&tx.from];
            let available = match tx.token {
                Asset::Upx => src.balances.upx as i64,
                Asset::Spx => src.balances.spx as i64,
                Asset::Currency => src.balances.currency,
            };
            let may_go_negative = tx.token == Asset::Currency && src.role == Role::System;
            if !may_go_negative && available < amount_i64 {
                return Err(LedgerError::InsufficientBalance {
                    account: tx.from.clone(),
                    asset: tx.token,
                    available,
                    required: tx.amount,
                });
            }
        }

        if debits_source {
            let src = &mut self.accounts.get_mut(&tx.from).expect("checked").balances;
            match tx.token {
                Asset::Upx => src.upx -= tx.amount,
                Asset::Spx => src.spx -= tx.amount,
                Asset::Currency => src.currency -= amount_i64,
            }
        }
        if !matches!(tx.kind, TxKind::Burn) {
            let dst = &mut self.accounts.get_mut(&tx.to).expect("checked").balances;
            match tx.token {
                Asset::Upx => dst.upx += tx.amount,
                Asset::Spx => dst.spx += tx.amount,
                Asset::Currency => dst.currency += amount_i64,
            }
        }
        let supply = self.supply.entry(tx.token).or_default();
        match tx.kind {
            TxKind::Mint => supply.minted += tx.amount as u128,
            TxKind::Burn => supply.burned += tx.amount as u128,
            _ => {}
        }
        self.log.push(tx);
        Ok(())
    }

    /// Builds and applies the next transaction in sequence.
    pub fn record(
        &mut self,
        kind: TxKind,
        token: Asset,
        from: &AccountId,
        to: &AccountId,
        amount: u64,
        day: u32,
        cause: &str,
    ) -> Result<&LedgerTx, LedgerError> {
        let tx = LedgerTx {
            seq: self.last_seq() + 1,
            kind,
            token,
            from: from.clone(),
            to: to.clone(),
            amount,
            day,
            cause: cause.to_owned(),
        };
        self.apply_tx(tx)?;
        Ok(self.log.last().expect("just pushed"))
    }

    pub fn mint(
        &mut self,
        token: Asset,
        to: &AccountId,
        amount: u64,
        day: u32,
        cause: &str,
    ) -> Result<(), LedgerError> {
        let system = AccountId::system();
        self.record(TxKind::Mint, token, &system, to, amount, day, cause)
            .map(|_| ())
    }

    pub fn burn(
        &mut self,
        token: Asset,
        from: &AccountId,
        amount: u64,
        day: u32,
        cause: &str,
    ) -> Result<(), LedgerError> {
        let system = AccountId::system();
        self.record(TxKind::Burn, token, from, &system, amount, day, cause)
            .map(|_| ())
    }

    pub fn transfer(
        &mut self,
        token: TokenKind,
        from: &AccountId,
        to: &AccountId,
        amount: u64,
        day: u32,
        cause: &str,
    ) -> Result<(), LedgerError> {
        self.record(TxKind::Transfer, token.into(), from, to, amount, day, cause)
            .map(|_| ())
    }

    pub fn pay(
        &mut self,
        from: &AccountId,
        to: &AccountId,
        amount: u64,
        day: u32,
        cause: &str,
    ) -> Result<(), LedgerError> {
        self.record(
            TxKind::CurrencyTransfer,
            Asset::Currency,
            from,
            to,
            amount,
            day,
            cause,
        )
        .map(|_| ())
    }

    /// Rebuilds a ledger by applying `log` to a genesis holding `students`.
    pub fn replay<'a, I, A>(students: I, log: impl IntoIterator<Item = &'a LedgerTx>) -> Result<Self, LedgerError>
    where
        I: IntoIterator<Item = A>,
        A: Into<AccountId>,
    {
        let mut ledger = Self::with_students(students)?;
        for tx in log {
            ledger.apply_tx(tx.clone())?;
        }
        Ok(ledger)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), LedgerError> {
        for tx in &self.log {
            let line = serde_json::to_string(tx).map_err(|e| LedgerError::Io(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| LedgerError::Io(e.to_string()))?;
        }
        Ok(())
    }

    /// Parses a JSON Lines log. Blank lines are skipped.
    pub fn read_log<R: BufRead>(input: R) -> Result<Vec<LedgerTx>, LedgerError> {
        let mut txs = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| LedgerError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let tx = serde_json::from_str(&line).map_err(|e| LedgerError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            txs.push(tx);
        }
        Ok(txs)
    }

    /// Imports a log whose roster is implied: every non-system account it
    /// references is opened as a student in order of first appearance.
    pub fn import_jsonl<R: BufRead>(input: R) -> Result<Self, LedgerError> {
        let txs = Self::read_log(input)?;
        let mut roster: Vec<AccountId> = Vec::new();
        for tx in &txs {
            for id in [&tx.from, &tx.to] {
                if !id.is_system() && !roster.contains(id) {
                    roster.push(id.clone());
                }
            }
        }
        Self::replay(roster, &txs)
    }
}
