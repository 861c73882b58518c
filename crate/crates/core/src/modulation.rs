//! Concentration shift keying: symbol `s` is sent as `s * N` molecules and
//! detected by comparing the received count against ordered thresholds.

use std::fmt;

use crate::error::{Error, Result};

/// Chemically distinct carrier. The transmitter uses type I, the relay type II.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoleculeType {
    TypeI,
    TypeII,
}

/// Number of amplitude levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Levels {
    Binary,
    Quadruple,
}

impl Levels {
    pub fn count(self) -> u8 {
        match self {
            Levels::Binary => 2,
            Levels::Quadruple => 4,
        }
    }

    pub fn from_count(n: u8) -> Result<Self> {
        match n {
            2 => Ok(Levels::Binary),
            4 => Ok(Levels::Quadruple),
            other => Err(Error::InvalidParameter {
                name: "levels",
                value: other as f64,
                reason: "must be 2 (BCSK) or 4 (QCSK)",
            }),
        }
    }

    /// Thresholds a detector needs.
    pub fn boundaries(self) -> usize {
        self.count() as usize - 1
    }

    /// Mean symbol value over equiprobable symbols, `(levels - 1) / 2`.
    pub fn mean_symbol(self) -> f64 {
        (self.count() - 1) as f64 / 2.0
    }
}

/// Symbol-to-emission mapping with base concentration `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CskScheme {
    pub base_concentration: u64,
    pub levels: Levels,
    pub molecule: MoleculeType,
}

impl CskScheme {
    pub fn qcsk(base_concentration: u64, molecule: MoleculeType) -> Self {
        Self {
            base_concentration,
            levels: Levels::Quadruple,
            molecule,
        }
    }

    pub fn bcsk(base_concentration: u64, molecule: MoleculeType) -> Self {
        Self {
            base_concentration,
            levels: Levels::Binary,
            molecule,
        }
    }

    pub fn with_concentration(self, base_concentration: u64) -> Self {
        Self {
            base_concentration,
            ..self
        }
    }

    /// Molecules released for `symbol`.
    pub fn emit_count(&self, symbol: u8) -> Result<u64> {
        if symbol >= self.levels.count() {
            return Err(Error::SymbolOutOfRange {
                symbol,
                levels: self.levels.count(),
            });
        }
        Ok(symbol as u64 * self.base_concentration)
    }
}

/// Ordered detection boundaries. BCSK uses only `tau1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    taus: [f64; 3],
    used: usize,
}

impl Thresholds {
    /// QCSK thresholds; requires `0 < tau1 < tau2 < tau3`.
    pub fn new(tau1: f64, tau2: f64, tau3: f64) -> Result<Self> {
        let t = Self {
            taus: [tau1, tau2, tau3],
            used: 3,
        };
        t.validate()?;
        Ok(t)
    }

    /// BCSK threshold; requires `tau1 > 0`.
    pub fn binary(tau1: f64) -> Result<Self> {
        let t = Self {
            taus: [tau1, f64::INFINITY, f64::INFINITY],
            used: 1,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn for_levels(levels: Levels, taus: &[f64]) -> Result<Self> {
        match (levels, taus) {
            (Levels::Binary, [t1]) => Self::binary(*t1),
            (Levels::Quadruple, [t1, t2, t3]) => Self::new(*t1, *t2, *t3),
            _ => Err(Error::InvalidThresholds(format!(
                "{} levels need {} thresholds, got {}",
                levels.count(),
                levels.boundaries(),
                taus.len()
            ))),
        }
    }

    fn validate(&self) -> Result<()> {
        let active = self.as_slice();
        if active.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidThresholds(format!("non-finite value in {active:?}")));
        }
        if active[0] <= 0.0 {
            return Err(Error::InvalidThresholds(format!("tau1 = {} must be positive", active[0])));
        }
        if active.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidThresholds(format!("{active:?} not strictly increasing")));
        }
        Ok(())
    }

    pub fn levels(&self) -> Levels {
        if self.used == 1 {
            Levels::Binary
        } else {
            Levels::Quadruple
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.taus[..self.used]
    }

    pub fn tau1(&self) -> f64 {
        self.taus[0]
    }

    pub fn tau2(&self) -> f64 {
        self.taus[1]
    }

    pub fn tau3(&self) -> f64 {
        self.taus[2]
    }
}

impl fmt::Display for Thresholds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.as_slice().iter().map(|t| format!("{t}")).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Symbol decided from a (possibly noisy, possibly negative) count.
///
/// An observation exactly on a threshold goes to the higher symbol.
pub fn detect(observation: f64, thresholds: &Thresholds) -> u8 {
    thresholds
        .as_slice()
        .iter()
        .take_while(|&&tau| observation >= tau)
        .count() as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn emission_counts() {
        let s = CskScheme::qcsk(150, MoleculeType::TypeI);
        assert_eq!(s.emit_count(0).unwrap(), 0);
        assert_eq!(s.emit_count(1).unwrap(), 150);
        assert_eq!(s.emit_count(3).unwrap(), 450);
        assert!(matches!(s.emit_count(4), Err(Error::SymbolOutOfRange { symbol: 4, levels: 4 })));
        let zero = s.with_concentration(0);
        assert!((0..4).all(|sym| zero.emit_count(sym).unwrap() == 0));
        let b = CskScheme::bcsk(100, MoleculeType::TypeII);
        assert_eq!(b.emit_count(1).unwrap(), 100);
        assert!(b.emit_count(2).is_err());
    }

    #[test]
    fn threshold_validation() {
        assert!(Thresholds::new(108.0, 198.0, 287.0).is_ok());
        assert!(Thresholds::new(0.0, 1.0, 2.0).is_err());
        assert!(Thresholds::new(5.0, 5.0, 6.0).is_err());
        assert!(Thresholds::new(5.0, 7.0, 6.0).is_err());
        assert!(Thresholds::new(5.0, 7.0, f64::NAN).is_err());
        assert!(Thresholds::binary(-1.0).is_err());
        assert!(Thresholds::for_levels(Levels::Quadruple, &[1.0, 2.0]).is_err());
        assert_eq!(Thresholds::for_levels(Levels::Binary, &[3.0]).unwrap().levels(), Levels::Binary);
    }

    #[test]
    fn detection_examples() {
        let t = Thresholds::new(108.0, 198.0, 287.0).unwrap();
        assert_eq!(detect(100.0, &t), 0);
        assert_eq!(detect(-5.0, &t), 0);
        assert_eq!(detect(108.0, &t), 1);
        assert_eq!(detect(198.0, &t), 2);
        assert_eq!(detect(286.999, &t), 2);
        assert_eq!(detect(287.0, &t), 3);
        assert_eq!(detect(1e9, &t), 3);

        let b = Thresholds::binary(50.0).unwrap();
        assert_eq!(detect(49.0, &b), 0);
        assert_eq!(detect(50.0, &b), 1);
        assert_eq!(detect(1e9, &b), 1);
    }

    proptest! {
        #[test]
        fn detect_is_monotone(a in -1e3f64..1e4, b in -1e3f64..1e4, t1 in 1.0f64..100.0, g2 in 0.1f64..100.0, g3 in 0.1f64..100.0) {
            let t = Thresholds::new(t1, t1 + g2, t1 + g2 + g3).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(detect(lo, &t) <= detect(hi, &t));
        }

        #[test]
        fn detect_partitions_the_line(x in -1e3f64..1e4, t1 in 1.0f64..100.0, g2 in 0.1f64..100.0, g3 in 0.1f64..100.0) {
            let t = Thresholds::new(t1, t1 + g2, t1 + g2 + g3).unwrap();
            let s = detect(x, &t) as usize;
            let lower = if s == 0 { f64::NEG_INFINITY } else { t.as_slice()[s - 1] };
            let upper = if s == 3 { f64::INFINITY } else { t.as_slice()[s] };
            prop_assert!(lower <= x && x < upper);
        }
    }
}
