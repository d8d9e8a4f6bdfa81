//! Alpha-spending function families.
//!
//! A family maps an information fraction `t` and a total level to the
//! cumulative one-sided alpha spent by `t`. Families are registered by name in
//! a [`SpendingRegistry`] so configs and the CLI can select them at runtime.

use crate::error::{Error, Result};
use crate::normal::{normal_sf, quantile_unchecked};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Cumulative spending `f(t; level)`.
///
/// Implementations must return 0 at `t = 0`, `level` for `t >= 1`, and be
/// strictly increasing in `t` on `(0, 1)` and in `level`.
pub trait SpendingFunction: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Family parameter, if the family has one.
    fn parameter(&self) -> Option<f64> {
        None
    }

    /// Spending for `0 < t < 1` and `0 < level < 1`.
    fn spend_interior(&self, t: f64, level: f64) -> f64;

    fn spend(&self, t: f64, level: f64) -> f64 {
        if t <= 0.0 || level <= 0.0 {
            0.0
        } else if t >= 1.0 {
            level
        } else {
            self.spend_interior(t, level).clamp(0.0, level)
        }
    }
}

/// Lan-DeMets O'Brien-Fleming-type: `2 (1 - Phi(z_{level/2} / sqrt(t)))`.
#[derive(Clone, Copy, Debug, Default)]
pub struct LanDeMetsObf;

impl SpendingFunction for LanDeMetsObf {
    fn name(&self) -> &'static str {
        "ld-obf"
    }

    fn spend_interior(&self, t: f64, level: f64) -> f64 {
        let z = quantile_unchecked(1.0 - level / 2.0);
        2.0 * normal_sf(z / t.sqrt())
    }
}

/// Lan-DeMets Pocock-type: `level * ln(1 + (e - 1) t)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct LanDeMetsPocock;

impl SpendingFunction for LanDeMetsPocock {
    fn name(&self) -> &'static str {
        "ld-pocock"
    }

    fn spend_interior(&self, t: f64, level: f64) -> f64 {
        level * (1.0 + (std::f64::consts::E - 1.0) * t).ln()
    }
}

/// Hwang-Shih-DeCani: `level (1 - e^{-gamma t}) / (1 - e^{-gamma})`.
#[derive(Clone, Copy, Debug)]
pub struct HwangShihDeCani {
    pub gamma: f64,
}

impl SpendingFunction for HwangShihDeCani {
    fn name(&self) -> &'static str {
        "hsd"
    }

    fn parameter(&self) -> Option<f64> {
        Some(self.gamma)
    }

    fn spend_interior(&self, t: f64, level: f64) -> f64 {
        level * (-self.gamma * t).exp_m1() / (-self.gamma).exp_m1()
    }
}

/// Kim-DeMets power family: `level * t^rho`.
#[derive(Clone, Copy, Debug)]
pub struct KimDeMetsPower {
    pub rho: f64,
}

impl SpendingFunction for KimDeMetsPower {
    fn name(&self) -> &'static str {
        "kim-demets"
    }

    fn parameter(&self) -> Option<f64> {
        Some(self.rho)
    }

    fn spend_interior(&self, t: f64, level: f64) -> f64 {
        level * t.powf(self.rho)
    }
}

type SpendingFactory = fn(Option<f64>) -> Result<Arc<dyn SpendingFunction>>;

/// Name -> family constructor. Names are case-insensitive.
#[derive(Clone)]
pub struct SpendingRegistry {
    factories: BTreeMap<String, SpendingFactory>,
}

fn no_parameter(name: &str, p: Option<f64>) -> Result<()> {
    match p {
        None => Ok(()),
        Some(_) => Err(Error::Config(format!("spending family '{name}' takes no parameter"))),
    }
}

impl Default for SpendingRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("ld-obf", |p| {
            no_parameter("ld-obf", p)?;
            Ok(Arc::new(LanDeMetsObf))
        });
        r.register("ld-pocock", |p| {
            no_parameter("ld-pocock", p)?;
            Ok(Arc::new(LanDeMetsPocock))
        });
        r.register("hsd", |p| {
            let gamma = p.ok_or_else(|| Error::Config("hsd spending needs parameter gamma".into()))?;
            if gamma == 0.0 || !gamma.is_finite() {
                return Err(Error::Config(format!("hsd gamma must be finite and nonzero, got {gamma}")));
            }
            Ok(Arc::new(HwangShihDeCani { gamma }))
        });
        r.register("kim-demets", |p| {
            let rho = p.ok_or_else(|| Error::Config("kim-demets spending needs parameter rho".into()))?;
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(Error::Config(format!("kim-demets rho must be positive, got {rho}")));
            }
            Ok(Arc::new(KimDeMetsPower { rho }))
        });
        r
    }
}

impl SpendingRegistry {
    pub fn register(&mut self, name: &str, factory: SpendingFactory) {
        self.factories.insert(name.to_ascii_lowercase(), factory);
    }

    pub fn create(&self, family: &str, parameter: Option<f64>) -> Result<Arc<dyn SpendingFunction>> {
        let factory = self.factories.get(&family.to_ascii_lowercase()).ok_or_else(|| {
            Error::Config(format!(
                "unknown spending family '{family}' (known: {})",
                self.names().join(", ")
            ))
        })?;
        factory(parameter)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }
}

/// Serializable spending family without a level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<f64>,
}

impl FamilySpec {
    pub fn new(family: &str, parameter: Option<f64>) -> Self {
        Self {
            family: family.to_string(),
            parameter,
        }
    }

    pub fn resolve(&self) -> Result<Arc<dyn SpendingFunction>> {
        SpendingRegistry::default().create(&self.family, self.parameter)
    }
}

/// Serializable description of a spending family and its total level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpendingSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<f64>,
    pub level: f64,
}

impl SpendingSpec {
    pub fn new(family: &str, parameter: Option<f64>, level: f64) -> Self {
        Self {
            family: family.to_string(),
            parameter,
            level,
        }
    }

    /// Looks the family up in the default registry and checks the level.
    pub fn resolve(&self) -> Result<Spending> {
        self.resolve_with(&SpendingRegistry::default())
    }

    pub fn resolve_with(&self, registry: &SpendingRegistry) -> Result<Spending> {
        Spending::new(registry.create(&self.family, self.parameter)?, self.level)
    }
}

/// A resolved family together with the level it spends.
#[derive(Clone, Debug)]
pub struct Spending {
    pub function: Arc<dyn SpendingFunction>,
    pub level: f64,
}

impl Spending {
    pub fn new(function: Arc<dyn SpendingFunction>, level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Config(format!("spending level must lie in (0, 1), got {level}")));
        }
        Ok(Self { function, level })
    }

    /// Cumulative alpha spent by information fraction `t`.
    pub fn spend(&self, t: f64) -> f64 {
        self.function.spend(t, self.level)
    }

    /// Same family at another level.
    pub fn at_level(&self, level: f64) -> Result<Self> {
        Self::new(self.function.clone(), level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obf(level: f64) -> Spending {
        SpendingSpec::new("ld-obf", None, level).resolve().unwrap()
    }

    #[test]
    fn full_level_at_one() {
        for spec in [
            SpendingSpec::new("ld-obf", None, 0.0125),
            SpendingSpec::new("LD-Pocock", None, 0.0125),
            SpendingSpec::new("hsd", Some(-4.0), 0.0125),
            SpendingSpec::new("kim-demets", Some(2.0), 0.0125),
        ] {
            let s = spec.resolve().unwrap();
            assert_eq!(s.spend(1.0), 0.0125);
            assert_eq!(s.spend(3.0), 0.0125);
            assert_eq!(s.spend(0.0), 0.0);
        }
    }

    #[test]
    fn obf_closed_form() {
        // z_{0.00625} = 2.497705474412...
        let z: f64 = 2.497_705_474_412_6;
        let want = libm::erfc(z / 0.5f64.sqrt() / 2f64.sqrt());
        assert!((obf(0.0125).spend(0.5) - want).abs() < 1e-12);
        assert!((obf(0.0125).spend(0.5) - 4.12e-4).abs() < 1e-6);
        assert!((obf(0.0125).spend(0.75) - 3.93e-3).abs() < 1e-5);
    }

    #[test]
    fn obf_spends_less_early_than_pocock() {
        let p = SpendingSpec::new("ld-pocock", None, 0.025).resolve().unwrap();
        for t in [0.1, 0.25, 0.5] {
            assert!(obf(0.025).spend(t) < p.spend(t));
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(matches!(
            SpendingSpec::new("hsd", Some(0.0), 0.025).resolve(),
            Err(Error::Config(_))
        ));
        assert!(SpendingSpec::new("hsd", None, 0.025).resolve().is_err());
        assert!(SpendingSpec::new("kim-demets", Some(-1.0), 0.025).resolve().is_err());
        assert!(SpendingSpec::new("ld-obf", Some(1.0), 0.025).resolve().is_err());
        assert!(SpendingSpec::new("ld-obf", None, 1.5).resolve().is_err());
        assert!(SpendingSpec::new("linear", None, 0.025).resolve().is_err());
    }
}
