//! Per-model token prices and exact cost arithmetic.
//!
//! Rates are kept as exact decimals (dollars per 1000 tokens), so costs are
//! exact rationals and scaling the ledger scales every figure exactly.

use std::collections::BTreeMap;
use std::path::Path;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::Deserialize;

use super::ledger::{LedgerSnapshot, TokenCounts};
use super::EvalError;

pub type Dollars = Ratio<i128>;

/// Dollars per 1000 prompt and completion tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rate {
    pub prompt_per_1k: Dollars,
    pub completion_per_1k: Dollars,
    /// Open-weight models are reported separately from closed ones.
    pub open: bool,
}

/// Parses a non-negative decimal such as `0.00005` exactly.
pub fn parse_decimal(text: &str) -> Option<Dollars> {
    let text = text.trim();
    let (whole, frac) = text.split_once('.').unwrap_or((text, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 30 {
        return None;
    }
    let digits: i128 = format!("{whole}{frac}").parse().ok()?;
    Some(Ratio::new(digits, 10i128.pow(frac.len() as u32)))
}

/// Renders dollars rounded half-up to six decimals, e.g. `0.000130`.
pub fn format_dollars(amount: &Dollars) -> String {
    let micros = (amount * Ratio::from_integer(1_000_000)).round().to_integer();
    let sign = if micros < 0 { "-" } else { "" };
    let micros = micros.abs();
    format!("{sign}{}.{:06}", micros / 1_000_000, micros % 1_000_000)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingTable {
    rates: BTreeMap<String, Rate>,
}

impl Default for PricingTable {
    /// Published per-1k-token API prices for the supported models.
    fn default() -> Self {
        let mut table = Self { rates: BTreeMap::new() };
        table.insert("gpt-3.5-turbo", "0.0005", "0.0015", false);
        table.insert("gpt-4o", "0.0025", "0.01", false);
        table.insert("llama-3.1-8b-instruct", "0.00005", "0.00008", true);
        table
    }
}

#[derive(Deserialize)]
struct PricingRow {
    model: String,
    prompt_per_1k: String,
    completion_per_1k: String,
    #[serde(default)]
    open: Option<bool>,
}

impl PricingTable {
    pub fn empty() -> Self {
        Self { rates: BTreeMap::new() }
    }

    fn insert(&mut self, model: &str, prompt: &str, completion: &str, open: bool) {
        let rate = Rate {
            prompt_per_1k: parse_decimal(prompt).expect("valid built-in rate"),
            completion_per_1k: parse_decimal(completion).expect("valid built-in rate"),
            open,
        };
        self.rates.insert(model.to_string(), rate);
    }

    pub fn set(&mut self, model: impl Into<String>, rate: Rate) {
        self.rates.insert(model.into(), rate);
    }

    pub fn rate(&self, model: &str) -> Option<&Rate> {
        self.rates.get(model)
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.rates.keys().map(String::as_str)
    }

    /// Defaults overridden row by row from a CSV file with the columns
    /// `model,prompt_per_1k,completion_per_1k[,open]`.
    pub fn with_overrides(path: &Path) -> Result<Self, EvalError> {
        let mut table = Self::default();
        let mut reader = csv::Reader::from_path(path).map_err(|source| EvalError::Csv { path: path.into(), source })?;
        for (i, row) in reader.deserialize::<PricingRow>().enumerate() {
            let row = row.map_err(|source| EvalError::Csv { path: path.into(), source })?;
            let parse = |s: &str| parse_decimal(s).ok_or_else(|| EvalError::Pricing { row: i + 1, reason: format!("bad rate `{s}`") });
            let open = row.open.unwrap_or_else(|| table.rate(&row.model).is_some_and(|r| r.open));
            let rate = Rate { prompt_per_1k: parse(&row.prompt_per_1k)?, completion_per_1k: parse(&row.completion_per_1k)?, open };
            table.set(row.model, rate);
        }
        Ok(table)
    }

    pub fn price(&self, model: &str, tokens: TokenCounts) -> Result<Dollars, EvalError> {
        let rate = self.rate(model).ok_or_else(|| EvalError::UnknownModel(model.to_string()))?;
        let thousand = Ratio::from_integer(1000);
        Ok(Ratio::from_integer(tokens.prompt_tokens as i128) * &rate.prompt_per_1k / thousand
            + Ratio::from_integer(tokens.completion_tokens as i128) * &rate.completion_per_1k / thousand)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    pub per_model: BTreeMap<String, Dollars>,
    pub total: Dollars,
}

impl CostBreakdown {
    pub fn total_f64(&self) -> f64 {
        self.total.to_f64().unwrap_or(f64::NAN)
    }
}

/// Prices every model in the ledger; a model without a rate is an error.
pub fn cost(ledger: &LedgerSnapshot, pricing: &PricingTable) -> Result<CostBreakdown, EvalError> {
    let mut per_model = BTreeMap::new();
    let mut total = Dollars::zero();
    for (model, tokens) in ledger.per_model() {
        let dollars = pricing.price(&model, tokens)?;
        total += dollars;
        per_model.insert(model, dollars);
    }
    Ok(CostBreakdown { per_model, total })
}
