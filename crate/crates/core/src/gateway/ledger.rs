use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{GatewayError, ModelProfile};

/// Price per million tokens, held as integer micro-dollars so that one
/// unit is exactly one pico-dollar per token.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Price(u64);

impl Price {
    pub const ZERO: Price = Price(0);

    /// From dollars per million tokens, rounded to the nearest micro-dollar.
    pub fn from_usd(usd: f64) -> Self {
        Price((usd * 1e6).round().max(0.0) as u64)
    }

    pub fn from_micros(micros: u64) -> Self {
        Price(micros)
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    pub fn usd(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl Serialize for Price {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.usd())
    }
}

impl<'de> Deserialize<'de> for Price {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let usd = f64::deserialize(d)?;
        if !usd.is_finite() || usd < 0.0 {
            return Err(serde::de::Error::custom(format!("price must be a non-negative number, got {usd}")));
        }
        Ok(Price::from_usd(usd))
    }
}

/// Exact spend in pico-dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cost(u128);

impl Cost {
    pub const ZERO: Cost = Cost(0);

    pub fn of(profile: &ModelProfile, input_tokens: u64, output_tokens: u64) -> Self {
        Cost(
            input_tokens as u128 * profile.price_in.micros() as u128
                + output_tokens as u128 * profile.price_out.micros() as u128,
        )
    }

    pub fn from_picodollars(p: u128) -> Self {
        Cost(p)
    }

    /// From dollars, rounded to the nearest pico-dollar.
    pub fn from_usd_exact(usd: f64) -> Self {
        Cost((usd.max(0.0) * 1e12).round() as u128)
    }

    pub fn picodollars(self) -> u128 {
        self.0
    }

    pub fn usd(self) -> f64 {
        self.0 as f64 / 1e12
    }
}

impl std::ops::Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dollars = self.0 / 1_000_000_000_000;
        let frac = self.0 % 1_000_000_000_000;
        write!(f, "${dollars}.{:06}", frac / 1_000_000)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub profile: String,
    pub provider_id: String,
    pub model_name: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cached: bool,
    pub cost: Cost,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCost {
    /// Uncached completions.
    pub calls: u64,
    pub cached_hits: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: Cost,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub per_model: BTreeMap<String, ModelCost>,
    pub total: Cost,
}

impl CostReport {
    pub fn from_rows(rows: &[LedgerRow]) -> Self {
        let mut report = CostReport::default();
        for row in rows {
            let entry = report.per_model.entry(row.profile.clone()).or_default();
            if row.cached {
                entry.cached_hits += 1;
            } else {
                entry.calls += 1;
                entry.input_tokens += row.input_tokens;
                entry.output_tokens += row.output_tokens;
                entry.cost += row.cost;
            }
        }
        report.total = report.per_model.values().map(|m| m.cost).sum();
        report
    }
}

#[derive(Default)]
struct State {
    rows: Vec<LedgerRow>,
    committed: Cost,
    reserved: Cost,
}

/// Append-only cost rows plus the in-flight reservations used by the cap.
#[derive(Default)]
pub(super) struct Ledger {
    state: Mutex<State>,
}

impl Ledger {
    pub fn reserve(&self, cap: Option<Cost>, estimate: Cost) -> Result<(), GatewayError> {
        let mut s = self.state.lock().unwrap();
        if let Some(cap) = cap {
            if s.committed + s.reserved + estimate > cap {
                return Err(GatewayError::BudgetExceeded {
                    cap,
                    committed: s.committed,
                    estimate,
                });
            }
        }
        s.reserved += estimate;
        Ok(())
    }

    pub fn settle(&self, estimate: Cost) {
        let mut s = self.state.lock().unwrap();
        s.reserved = Cost(s.reserved.0 - estimate.0);
    }

    pub fn record(&self, profile: &ModelProfile, input_tokens: u64, output_tokens: u64, cached: bool) {
        let cost = if cached {
            Cost::ZERO
        } else {
            Cost::of(profile, input_tokens, output_tokens)
        };
        let mut s = self.state.lock().unwrap();
        s.committed += cost;
        s.rows.push(LedgerRow {
            profile: profile.name.clone(),
            provider_id: profile.provider_id.clone(),
            model_name: profile.model_name.clone(),
            input_tokens,
            output_tokens,
            cached,
            cost,
        });
    }

    pub fn rows(&self) -> Vec<LedgerRow> {
        self.state.lock().unwrap().rows.clone()
    }

    pub fn report(&self) -> CostReport {
        CostReport::from_rows(&self.state.lock().unwrap().rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(profile: &str, cost: u128, cached: bool) -> LedgerRow {
        LedgerRow {
            profile: profile.into(),
            provider_id: "p".into(),
            model_name: profile.into(),
            input_tokens: 1,
            output_tokens: 1,
            cached,
            cost: Cost(cost),
        }
    }

    #[test]
    fn empty_ledger_is_zero() {
        let r = Ledger::default().report();
        assert_eq!(r.total, Cost::ZERO);
        assert!(r.per_model.is_empty());
    }

    #[test]
    fn two_rows_one_model() {
        let r = CostReport::from_rows(&[row("a", 3, false), row("a", 4, false)]);
        assert_eq!(r.per_model["a"].cost, Cost(7));
        assert_eq!(r.per_model["a"].calls, 2);
        assert_eq!(r.total, Cost(7));
    }

    #[test]
    fn cost_display() {
        assert_eq!(Cost::from_usd_exact(12.5).to_string(), "$12.500000");
        assert_eq!(Cost(1).to_string(), "$0.000000");
        assert_eq!(Cost::from_usd_exact(0.0015).to_string(), "$0.001500");
    }

    #[test]
    fn price_is_exact_per_token() {
        let p = ModelProfile {
            price_in: Price::from_usd(2.5),
            price_out: Price::from_usd(10.0),
            ..ModelProfile::mock("m")
        };
        assert_eq!(Cost::of(&p, 1, 0).picodollars(), 2_500_000);
        assert_eq!(Cost::of(&p, 0, 1).picodollars(), 10_000_000);
    }

    proptest! {
        #[test]
        fn grand_total_equals_sum_of_groups(
            rows in prop::collection::vec((0usize..3, 0u128..1_000_000_000, any::<bool>()), 0..50)
        ) {
            let names = ["a", "b", "c"];
            let rows: Vec<LedgerRow> = rows.iter().map(|&(m, c, cached)| row(names[m], if cached { 0 } else { c }, cached)).collect();
            let report = CostReport::from_rows(&rows);
            // Independent fold straight over the rows.
            let direct: u128 = rows.iter().filter(|r| !r.cached).map(|r| r.cost.0).sum();
            prop_assert_eq!(report.total.0, direct);
            let groups: u128 = report.per_model.values().map(|m| m.cost.0).sum();
            prop_assert_eq!(groups, direct);
            let distinct: std::collections::BTreeSet<_> = rows.iter().map(|r| r.profile.clone()).collect();
            prop_assert_eq!(report.per_model.len(), distinct.len());
        }
    }
}
