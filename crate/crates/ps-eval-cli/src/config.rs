//! Toolkit configuration document (JSON, versioned). One file can carry a
//! render block, a network block and a train block; each subcommand reads
//! what it needs.

use std::path::Path;

use ps_core::{LightSet, Real};
use ps_render::{generate_lights, generate_scene_specs, SceneGen, SceneSpec};
use rmaff_net::NetworkConfig;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, EvalResult};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LightsConfig {
    /// Explicit [lx, ly, lz, s] rows.
    #[serde(default)]
    pub explicit: Option<Vec<[f64; 4]>>,
    /// Or a generated set of this size...
    #[serde(default)]
    pub count: Option<usize>,
    /// ...with directions drawn uniformly in azimuth and this z band.
    #[serde(default = "default_z_range")]
    pub z_range: [f64; 2],
}

fn default_z_range() -> [f64; 2] {
    [0.4, 0.95]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RenderBlock {
    /// Explicit scene specs...
    #[serde(default)]
    pub scenes: Option<Vec<SceneSpec>>,
    /// ...or generator ranges.
    #[serde(default)]
    pub generate: Option<SceneGen>,
    pub lights: LightsConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalBlock {
    #[serde(default = "default_max_degrees")]
    pub max_degrees: f64,
}

fn default_max_degrees() -> f64 {
    90.0
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock { max_degrees: default_max_degrees() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ToolkitConfig {
    pub config_version: u32,
    #[serde(default)]
    pub render: Option<RenderBlock>,
    #[serde(default)]
    pub network: Option<NetworkConfig>,
    #[serde(default)]
    pub train: Option<ps_train::TrainConfig>,
    #[serde(default)]
    pub eval: Option<EvalBlock>,
}

impl ToolkitConfig {
    pub fn load(path: &Path) -> EvalResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::validation(format!("read {}: {e}", path.display())))?;
        let cfg: ToolkitConfig = serde_json::from_str(&text)
            .map_err(|e| EvalError::validation(format!("parse {}: {e}", path.display())))?;
        if cfg.config_version != CONFIG_VERSION {
            return Err(EvalError::validation(format!(
                "{}: config_version {} unsupported (expected {CONFIG_VERSION})",
                path.display(),
                cfg.config_version
            )));
        }
        Ok(cfg)
    }

    pub fn network_or_default(&self) -> NetworkConfig {
        self.network.clone().unwrap_or_default()
    }

    pub fn train_or_default(&self) -> ps_train::TrainConfig {
        self.train.clone().unwrap_or_default()
    }
}

impl RenderBlock {
    /// Scene specs, either explicit or expanded from the generator with the
    /// global seed.
    pub fn scene_specs(&self, seed: u64) -> EvalResult<Vec<SceneSpec>> {
        match (&self.scenes, &self.generate) {
            (Some(scenes), None) => {
                for s in scenes {
                    s.validate()?;
                }
                Ok(scenes.clone())
            }
            (None, Some(gen)) => Ok(generate_scene_specs(gen, seed)?),
            (Some(_), Some(_)) => Err(EvalError::validation(
                "render block must give either explicit scenes or a generator, not both",
            )),
            (None, None) => Err(EvalError::validation(
                "render block needs either explicit scenes or a generator",
            )),
        }
    }

    pub fn light_set<T: Real>(&self, seed: u64) -> EvalResult<LightSet<T>> {
        match (&self.lights.explicit, self.lights.count) {
            (Some(rows), None) => {
                let mut dirs = Vec::with_capacity(rows.len());
                let mut intensities = Vec::with_capacity(rows.len());
                for row in rows {
                    dirs.push(ps_core::unit_normalize(ps_core::Vec3::new(
                        T::of(row[0]),
                        T::of(row[1]),
                        T::of(row[2]),
                    )));
                    intensities.push(T::of(row[3]));
                }
                Ok(LightSet::new(dirs, intensities)?)
            }
            (None, Some(count)) => Ok(generate_lights(count, seed, self.lights.z_range)?),
            _ => Err(EvalError::validation(
                "lights config needs exactly one of explicit rows or a count",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_minimal_render_config() {
        let json = r#"{
            "config_version": 1,
            "render": {
                "generate": { "count": 2, "width": 16, "height": 16 },
                "lights": { "count": 4 }
            }
        }"#;
        let cfg: ToolkitConfig = serde_json::from_str(json).unwrap();
        let render = cfg.render.unwrap();
        assert_eq!(render.scene_specs(7).unwrap().len(), 2);
        assert_eq!(render.light_set::<f64>(7).unwrap().len(), 4);
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"config_version": 99}"#).unwrap();
        assert!(ToolkitConfig::load(&path).is_err());
    }
}
