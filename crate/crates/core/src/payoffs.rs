//! Discounted payoff processes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstrumentKind {
    AmericanPut,
    AmericanCall,
    AmericanStraddle,
    AsianPut,
    AsianCall,
    AsianStraddle,
    EuropeanCall,
    EuropeanPut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Put,
    Call,
    Straddle,
}

impl InstrumentKind {
    pub fn is_asian(self) -> bool {
        matches!(
            self,
            InstrumentKind::AsianPut | InstrumentKind::AsianCall | InstrumentKind::AsianStraddle
        )
    }

    pub fn is_european(self) -> bool {
        matches!(self, InstrumentKind::EuropeanCall | InstrumentKind::EuropeanPut)
    }

    fn side(self) -> Side {
        use InstrumentKind::*;
        match self {
            AmericanPut | AsianPut | EuropeanPut => Side::Put,
            AmericanCall | AsianCall | EuropeanCall => Side::Call,
            AmericanStraddle | AsianStraddle => Side::Straddle,
        }
    }

    pub fn name(self) -> &'static str {
        use InstrumentKind::*;
        match self {
            AmericanPut => "american-put",
            AmericanCall => "american-call",
            AmericanStraddle => "american-straddle",
            AsianPut => "asian-put",
            AsianCall => "asian-call",
            AsianStraddle => "asian-straddle",
            EuropeanCall => "european-call",
            EuropeanPut => "european-put",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        use InstrumentKind::*;
        let s = s.to_ascii_lowercase().replace('_', "-");
        [
            AmericanPut,
            AmericanCall,
            AmericanStraddle,
            AsianPut,
            AsianCall,
            AsianStraddle,
            EuropeanCall,
            EuropeanPut,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// An option contract on the simulated price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    pub kind: InstrumentKind,
    pub strike: f64,
    /// Asian only: the payoff is zero for `t <= lockout`.
    #[serde(default)]
    pub lockout: usize,
    /// Discount rate; `None` discounts at the model drift.
    #[serde(default)]
    pub discount_rate: Option<f64>,
}

impl Instrument {
    pub fn new(kind: InstrumentKind, strike: f64) -> Self {
        Instrument {
            kind,
            strike,
            lockout: 0,
            discount_rate: None,
        }
    }

    pub fn american_put(strike: f64) -> Self {
        Instrument::new(InstrumentKind::AmericanPut, strike)
    }

    pub fn validate(&self, periods: usize) -> Result<()> {
        if !(self.strike > 0.0) {
            return Err(Error::InvalidParameter {
                name: "strike",
                constraint: "positive",
                value: self.strike,
            });
        }
        if self.lockout >= periods.max(1) {
            return Err(Error::Config(format!(
                "lockout {} must be shorter than the {} periods",
                self.lockout, periods
            )));
        }
        Ok(())
    }

    /// Undiscounted exercise value at underlying level `x`.
    #[inline]
    pub fn intrinsic(&self, x: f64) -> f64 {
        match self.kind.side() {
            Side::Put => (self.strike - x).max(0.0),
            Side::Call => (x - self.strike).max(0.0),
            Side::Straddle => (x - self.strike).abs(),
        }
    }

    /// Binds the instrument to a discount rate and horizon.
    pub fn payoff(&self, mu: f64, periods: usize) -> Payoff {
        Payoff {
            instrument: *self,
            rate: self.discount_rate.unwrap_or(mu),
            periods,
        }
    }
}

/// Discounted payoff `Z_t` of an instrument over a fixed horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payoff {
    pub instrument: Instrument,
    pub rate: f64,
    pub periods: usize,
}

impl Payoff {
    /// Discounted exercise value at decision time `t` given the spot and
    /// running-average prices.
    ///
    /// Asian contracts pay on the running average and are locked out for
    /// `t <= lockout` (at `t = 0` no average exists yet). European contracts
    /// pay only at the horizon.
    #[inline]
    pub fn at(&self, t: usize, spot: f64, average: f64) -> f64 {
        let inst = &self.instrument;
        let x = if inst.kind.is_asian() {
            if t <= inst.lockout {
                return 0.0;
            }
            average
        } else {
            if inst.kind.is_european() && t < self.periods {
                return 0.0;
            }
            spot
        };
        let z = inst.intrinsic(x);
        if z > 0.0 {
            (-self.rate * t as f64).exp() * z
        } else {
            0.0
        }
    }
}
