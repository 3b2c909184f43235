//! Run configuration files and engine construction.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use replen_core::consortium::{BaselineReasoner, Consortium, PerturbedReasoner, Reasoner};
use replen_core::orchestrator::{Engine, EngineConfig};
use replen_core::sim::{generate_scenario, ScenarioSpec, World, WorldConfig};
use replen_gateway::remote::{RemoteReasoner, RemoteSupplier, DEFAULT_TIMEOUT};
use serde::Deserialize;
use serde_json::Value;

use crate::args::WorldArgs;
use crate::CliError;

pub const DEFAULT_OUTLETS: usize = 10;
pub const DEFAULT_SKUS: usize = 50;
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteReasonerConfig {
    pub id: String,
    pub url: String,
    #[serde(default)]
    pub timeout_ms: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsortiumConfig {
    /// Spread of the two perturbed local reasoners; 0 keeps only the baseline.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub dispersion_threshold: Option<f64>,
    #[serde(default)]
    pub remote: Vec<RemoteReasonerConfig>,
}

fn default_epsilon() -> f64 {
    0.05
}

impl Default for ConsortiumConfig {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            dispersion_threshold: None,
            remote: Vec::new(),
        }
    }
}

/// Either `scenario` (generated) or `world` (explicit) may be given; neither means
/// the default 10 outlet by 50 SKU scenario.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default)]
    pub world: Option<WorldConfig>,
    #[serde(default)]
    pub auto_approve: bool,
    #[serde(default)]
    pub consortium: ConsortiumConfig,
    #[serde(default)]
    pub supplier_url: Option<String>,
    #[serde(default)]
    pub supplier_timeout_ms: Option<u64>,
}

impl RunConfig {
    /// Reads a run configuration, or a bare world file as written by `scenario generate`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let invalid = |e: serde_json::Error| CliError::Validation(format!("{}: {e}", path.display()));
        if v.get("outlets").is_some_and(Value::is_array) {
            let world: WorldConfig = serde_json::from_value(v).map_err(invalid)?;
            return Ok(RunConfig {
                world: Some(world),
                ..RunConfig::default()
            });
        }
        let cfg: RunConfig = serde_json::from_value(v).map_err(invalid)?;
        if cfg.scenario.is_some() && cfg.world.is_some() {
            return Err(CliError::Validation(format!("{}: give either scenario or world, not both", path.display())));
        }
        Ok(cfg)
    }

    pub fn world_config(&self, seed: Option<u64>) -> WorldConfig {
        match (&self.world, &self.scenario) {
            (Some(w), _) => {
                let mut w = w.clone();
                if let Some(s) = seed {
                    w.seed = s;
                }
                w
            }
            (None, Some(spec)) => {
                let mut spec = spec.clone();
                if let Some(s) = seed {
                    spec.seed = s;
                }
                generate_scenario(&spec)
            }
            (None, None) => generate_scenario(&ScenarioSpec::new(DEFAULT_OUTLETS, DEFAULT_SKUS, seed.unwrap_or(DEFAULT_SEED))),
        }
    }

    pub fn consortium(&self, world: &WorldConfig) -> Consortium {
        let c = &self.consortium;
        let threshold = c.dispersion_threshold.unwrap_or(world.policy.dispersion_flag_threshold);
        let mut reasoners: Vec<Arc<dyn Reasoner>> = vec![Arc::new(BaselineReasoner::new("baseline"))];
        if c.epsilon != 0.0 {
            reasoners.push(Arc::new(PerturbedReasoner::fixed("low", -c.epsilon)));
            reasoners.push(Arc::new(PerturbedReasoner::fixed("high", c.epsilon)));
        }
        for r in &c.remote {
            let timeout = r.timeout_ms.map(Duration::from_millis).unwrap_or(DEFAULT_TIMEOUT);
            reasoners.push(Arc::new(RemoteReasoner::new(r.id.clone(), &r.url, timeout)));
        }
        Consortium::new(reasoners, threshold)
    }
}

/// Builds the engine described by the command-line world flags.
pub fn build_engine(args: &WorldArgs) -> Result<Engine, CliError> {
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let world_cfg = cfg.world_config(args.seed);
    let mut engine_cfg = EngineConfig::new(args.auto_approve || cfg.auto_approve, cfg.consortium(&world_cfg));
    if let Some(url) = &cfg.supplier_url {
        let timeout = cfg.supplier_timeout_ms.map(Duration::from_millis).unwrap_or(DEFAULT_TIMEOUT);
        engine_cfg.supplier_channel = Some(Arc::new(RemoteSupplier::new(url, timeout)));
    }
    let world = World::generate(world_cfg).map_err(|e| CliError::Validation(format!("invalid world: {e}")))?;
    Ok(Engine::new(world, engine_cfg))
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn defaults_to_the_standard_network() {
        let w = RunConfig::default().world_config(None);
        assert_eq!((w.outlets.len(), w.skus.len(), w.seed), (DEFAULT_OUTLETS, DEFAULT_SKUS, DEFAULT_SEED));
        assert_eq!(RunConfig::default().world_config(Some(3)).seed, 3);
    }

    #[test]
    fn scenario_section_with_seed_override() {
        let f = file(r#"{"scenario":{"outlets":2,"skus":3,"seed":1},"auto_approve":true,"consortium":{"epsilon":0}}"#);
        let cfg = RunConfig::load(f.path()).unwrap();
        assert!(cfg.auto_approve);
        let w = cfg.world_config(Some(9));
        assert_eq!((w.outlets.len(), w.skus.len()), (2, 3));
        assert_eq!(w, generate_scenario(&ScenarioSpec::new(2, 3, 9)));
        assert_eq!(cfg.consortium(&w).reasoner_ids(), ["baseline"]);
    }

    #[test]
    fn bare_world_files_are_accepted() {
        let w = generate_scenario(&ScenarioSpec::new(2, 2, 4));
        let f = file(&serde_json::to_string(&w).unwrap());
        let cfg = RunConfig::load(f.path()).unwrap();
        assert_eq!(cfg.world_config(None), w);
    }

    #[test]
    fn bad_files_are_validation_errors() {
        let f = file(r#"{"scenaro":{}}"#);
        assert!(matches!(RunConfig::load(f.path()), Err(CliError::Validation(_))));
        let f = file("{");
        assert!(matches!(RunConfig::load(f.path()), Err(CliError::Validation(_))));
        assert!(matches!(RunConfig::load(Path::new("/nonexistent/x.json")), Err(CliError::Validation(_))));
    }

    #[test]
    fn remote_reasoners_join_the_consortium() {
        let f = file(r#"{"consortium":{"epsilon":0.1,"remote":[{"id":"m1","url":"http://127.0.0.1:1"}]}}"#);
        let cfg = RunConfig::load(f.path()).unwrap();
        let w = cfg.world_config(Some(1));
        assert_eq!(cfg.consortium(&w).reasoner_ids(), ["baseline", "low", "high", "m1"]);
    }
}
