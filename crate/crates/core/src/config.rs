//! TOML scenario and sweep files.
//!
//! ```toml
//! [network]
//! d_s_km = 8.04672
//! d_h_km = 80.4672
//! speed_kmh = 48.28032
//! lambda_per_hour = 4.0
//! mu_per_hour = 10.0
//! sim_time_hours = 1000.0
//! seed = 1
//! policy = "via_hub"        # via_hub | direct | threshold
//! threshold_km = 10.0       # threshold policy only
//!
//! [sweep]
//! d_s_km = [2.0, 8.0, 16.0]
//! d_h_km = [10.0, 40.0, 80.0]
//! replications = 16
//! policies = ["via_hub", "direct"]
//!
//! [cost]                    # analytic surface; every key optional
//! alpha = 1.0
//! lambda0 = 100.0
//! ```
//!
//! Every `[network]` key is optional and falls back to
//! [`NetworkConfig::default`].

use serde::Deserialize;
use thiserror::Error;

use crate::cost::CostParams;
use crate::model::{ModelError, NetworkConfig, RoutePolicy};
use crate::sweep::{SweepSpec, DEFAULT_REPLICATIONS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("config file has no [sweep] section")]
    MissingSweep,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub d_s_km: Option<f64>,
    pub d_h_km: Option<f64>,
    pub speed_kmh: Option<f64>,
    pub lambda_per_hour: Option<f64>,
    pub mu_per_hour: Option<f64>,
    pub sim_time_hours: Option<f64>,
    pub seed: Option<u64>,
    pub policy: Option<String>,
    pub threshold_km: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub d_s_km: Vec<f64>,
    pub d_h_km: Vec<f64>,
    pub replications: Option<u32>,
    pub policies: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda0: Option<f64>,
    pub mu: Option<f64>,
    pub speed: Option<f64>,
    pub d_min: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub network: NetworkSection,
    pub sweep: Option<SweepSection>,
    pub cost: Option<CostSection>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

impl NetworkSection {
    /// Keys set in `other` replace keys set here.
    pub fn overlay(&mut self, other: &NetworkSection) {
        macro_rules! take {
            ($($f:ident),*) => {$(if other.$f.is_some() { self.$f = other.$f.clone(); })*};
        }
        take!(
            d_s_km,
            d_h_km,
            speed_kmh,
            lambda_per_hour,
            mu_per_hour,
            sim_time_hours,
            seed,
            policy,
            threshold_km
        );
    }

    pub fn to_config(&self) -> Result<NetworkConfig, ConfigError> {
        let d = NetworkConfig::default();
        let policy = match &self.policy {
            Some(name) => RoutePolicy::parse(name, self.threshold_km)?,
            None => d.policy,
        };
        let config = NetworkConfig {
            d_s_km: self.d_s_km.unwrap_or(d.d_s_km),
            d_h_km: self.d_h_km.unwrap_or(d.d_h_km),
            speed_kmh: self.speed_kmh.unwrap_or(d.speed_kmh),
            lambda_per_hour: self.lambda_per_hour.unwrap_or(d.lambda_per_hour),
            mu_per_hour: self.mu_per_hour.unwrap_or(d.mu_per_hour),
            sim_time_hours: self.sim_time_hours.unwrap_or(d.sim_time_hours),
            seed: self.seed.unwrap_or(d.seed),
            policy,
        };
        config.validate()?;
        Ok(config)
    }
}

impl ConfigFile {
    pub fn sweep_spec(&self, network: &NetworkSection) -> Result<SweepSpec, ConfigError> {
        let sweep = self.sweep.as_ref().ok_or(ConfigError::MissingSweep)?;
        let base = network.to_config()?;
        let names = sweep
            .policies
            .clone()
            .unwrap_or_else(|| vec!["via_hub".into(), "direct".into()]);
        let policies = names
            .iter()
            .map(|n| RoutePolicy::parse(n, network.threshold_km))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SweepSpec {
            master_seed: base.seed,
            base,
            d_s_km: sweep.d_s_km.clone(),
            d_h_km: sweep.d_h_km.clone(),
            replications: sweep.replications.unwrap_or(DEFAULT_REPLICATIONS),
            policies,
        })
    }

    /// Cost parameters, defaulting `mu` and `speed` to the network's values.
    pub fn cost_params(&self, network: &NetworkConfig) -> CostParams {
        let d = CostParams {
            mu: network.mu_per_hour,
            speed: network.speed_kmh,
            ..CostParams::default()
        };
        let c = self.cost.clone().unwrap_or_default();
        CostParams {
            alpha: c.alpha.unwrap_or(d.alpha),
            beta: c.beta.unwrap_or(d.beta),
            gamma: c.gamma.unwrap_or(d.gamma),
            lambda0: c.lambda0.unwrap_or(d.lambda0),
            mu: c.mu.unwrap_or(d.mu),
            speed: c.speed.unwrap_or(d.speed),
            d_min: c.d_min.unwrap_or(d.d_min),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file() {
        let text = r#"
            [network]
            d_s_km = 8.0
            d_h_km = 80.0
            lambda_per_hour = 2.0
            policy = "threshold"
            threshold_km = 10.0
            seed = 7

            [sweep]
            d_s_km = [2.0, 8.0]
            d_h_km = [10.0, 40.0]
            replications = 2
            policies = ["via_hub", "direct", "threshold"]

            [cost]
            gamma = 2.5
        "#;
        let file = ConfigFile::parse(text).unwrap();
        let config = file.network.to_config().unwrap();
        assert_eq!(config.policy, RoutePolicy::Threshold { cutoff_km: 10.0 });
        assert_eq!(config.seed, 7);
        let spec = file.sweep_spec(&file.network).unwrap();
        assert_eq!(spec.cell_count(), 3 * 2 * 2);
        assert_eq!(spec.master_seed, 7);
        let cost = file.cost_params(&config);
        assert_eq!(cost.gamma, 2.5);
        assert_eq!(cost.mu, config.mu_per_hour);
    }

    #[test]
    fn overlay_and_errors() {
        let mut base = ConfigFile::parse("[network]\nd_s_km = 3.0\nseed = 1\n")
            .unwrap()
            .network;
        base.overlay(&NetworkSection {
            seed: Some(9),
            ..Default::default()
        });
        assert_eq!(base.d_s_km, Some(3.0));
        assert_eq!(base.seed, Some(9));

        assert!(matches!(
            ConfigFile::parse("[network]\nbogus = 1\n"),
            Err(ConfigError::Parse(_))
        ));
        let bad = NetworkSection {
            mu_per_hour: Some(0.0),
            ..Default::default()
        };
        match bad.to_config() {
            Err(ConfigError::Model(ModelError::ConfigInvalid { field, .. })) => assert_eq!(field, "mu_per_hour"),
            other => panic!("unexpected {other:?}"),
        }
        let threshold_without_cutoff = NetworkSection {
            policy: Some("threshold".into()),
            ..Default::default()
        };
        assert!(threshold_without_cutoff.to_config().is_err());
        assert!(matches!(
            ConfigFile::default().sweep_spec(&NetworkSection::default()),
            Err(ConfigError::MissingSweep)
        ));
    }
}
