//! Gait library and its TOML file format.
//!
//! Each `[[gait]]` table holds a name, the four phase offsets in cycle
//! fractions, the nominal frequency in Hz and two 4x6 weight matrices in
//! meters. The shipped library lives in `data/default_gaits.toml`, generated
//! from [`reference_gaits`] by `examples/fit_default_gaits.rs`.

use std::f64::consts::TAU;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::cpg::LEGS;
use crate::fit::{fit_weights_periodic, StanceSwingPath};
use crate::kinematics::{workspace_contains, LegGeometry};
use crate::trajectory::{GaitDefinition, WeightMatrix};
use crate::{Error, Result};

const SHIPPED: &str = include_str!("../data/default_gaits.toml");

/// The six flat-ground gaits, in keyboard slot order.
pub const GAIT_NAMES: [&str; 6] = [
    "trot",
    "gallop",
    "bound",
    "walk",
    "modified_trot_1",
    "modified_trot_2",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitEntry {
    pub name: String,
    pub nominal_frequency_hz: f64,
    /// Phase offsets as fractions of a cycle, each in `[0, 1)`.
    pub offsets: [f64; LEGS],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_residual_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<StanceSwingPath>,
    pub weights_x: WeightMatrix<f64>,
    pub weights_y: WeightMatrix<f64>,
}

impl GaitEntry {
    pub fn to_definition(&self) -> Result<GaitDefinition<f64>> {
        if self.name.is_empty() {
            return Err(Error::Config("gait name must not be empty".into()));
        }
        if !(self.nominal_frequency_hz.is_finite() && self.nominal_frequency_hz >= 0.0) {
            return Err(Error::Config(format!(
                "gait '{}': nominal frequency must be finite and >= 0",
                self.name
            )));
        }
        if self.offsets.iter().any(|o| !(0.0..1.0).contains(o)) {
            return Err(Error::Config(format!(
                "gait '{}': offsets must be cycle fractions in [0, 1)",
                self.name
            )));
        }
        let finite = |w: &WeightMatrix<f64>| w.iter().flatten().all(|v| v.is_finite());
        if !finite(&self.weights_x) || !finite(&self.weights_y) {
            return Err(Error::Config(format!("gait '{}': non-finite weight", self.name)));
        }
        Ok(GaitDefinition {
            name: self.name.clone(),
            weights_x: self.weights_x,
            weights_y: self.weights_y,
            target_offsets: self.offsets.map(|o| o * TAU),
            nominal_frequency: self.nominal_frequency_hz * TAU,
        })
    }

    pub fn from_definition(gait: &GaitDefinition<f64>) -> Self {
        Self {
            name: gait.name.clone(),
            nominal_frequency_hz: gait.nominal_frequency / TAU,
            offsets: gait.target_offsets.map(|o| o / TAU),
            fit_residual_m: None,
            reference: None,
            weights_x: gait.weights_x,
            weights_y: gait.weights_y,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GaitFile {
    #[serde(default)]
    pub gait: Vec<GaitEntry>,
}

impl GaitFile {
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Named gaits in file order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaitLibrary {
    gaits: IndexMap<String, GaitDefinition<f64>>,
}

impl GaitLibrary {
    pub fn new(gaits: impl IntoIterator<Item = GaitDefinition<f64>>) -> Result<Self> {
        let mut map = IndexMap::new();
        for g in gaits {
            if map.contains_key(&g.name) {
                return Err(Error::Config(format!("duplicate gait '{}'", g.name)));
            }
            map.insert(g.name.clone(), g);
        }
        if map.is_empty() {
            return Err(Error::Config("gait library is empty".into()));
        }
        Ok(Self { gaits: map })
    }

    /// The library compiled into the crate.
    pub fn shipped() -> Self {
        Self::from_toml_str(SHIPPED).expect("shipped gait library parses")
    }

    pub fn from_file(file: &GaitFile) -> Result<Self> {
        Self::new(
            file.gait
                .iter()
                .map(GaitEntry::to_definition)
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: GaitFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_file(&self) -> GaitFile {
        GaitFile {
            gait: self.gaits.values().map(GaitEntry::from_definition).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&GaitDefinition<f64>> {
        self.gaits.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.gaits.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.gaits.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &GaitDefinition<f64>> {
        self.gaits.values()
    }

    pub fn first(&self) -> &GaitDefinition<f64> {
        self.gaits.first().map(|(_, g)| g).expect("library is non-empty")
    }

    /// Checks every leg trajectory against the margin-shrunk workspace at
    /// `samples` evenly spaced phases, and that feet stay below the hip.
    pub fn validate_workspace(&self, geom: &LegGeometry<f64>, samples: usize) -> Result<()> {
        for gait in self.iter() {
            for leg in 0..LEGS {
                for k in 0..samples {
                    let phi = TAU * k as f64 / samples as f64;
                    let p = gait.endpoint(leg, phi)?;
                    if !(p.y > 0.0 && workspace_contains(p.x, p.y, geom)) {
                        return Err(Error::Config(format!(
                            "gait '{}' leg {} leaves the workspace at phase {phi:.4}: ({:.4}, {:.4})",
                            gait.name,
                            leg + 1,
                            p.x,
                            p.y
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parameters from which a shipped gait is fitted.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceGait {
    pub name: &'static str,
    pub offsets: [f64; LEGS],
    pub nominal_frequency_hz: f64,
    pub path: StanceSwingPath,
}

pub const STANDING_HEIGHT: f64 = 0.22;
pub const REFERENCE_SAMPLES: usize = 64;

pub fn reference_gaits() -> Vec<ReferenceGait> {
    let path = |stride, clearance, duty| StanceSwingPath {
        stride,
        clearance,
        height: STANDING_HEIGHT,
        duty,
    };
    let trot = [0.0, 0.5, 0.5, 0.0];
    vec![
        ReferenceGait {
            name: "trot",
            offsets: trot,
            nominal_frequency_hz: 1.0,
            path: path(0.10, 0.04, 0.5),
        },
        ReferenceGait {
            name: "gallop",
            offsets: [0.0, 0.25, 0.5, 0.75],
            nominal_frequency_hz: 1.0,
            path: path(0.10, 0.04, 0.5),
        },
        ReferenceGait {
            name: "bound",
            offsets: [0.0, 0.0, 0.5, 0.5],
            nominal_frequency_hz: 1.0,
            path: path(0.10, 0.04, 0.5),
        },
        ReferenceGait {
            name: "walk",
            offsets: [0.0, 0.5, 0.25, 0.75],
            nominal_frequency_hz: 0.5,
            path: path(0.10, 0.04, 0.75),
        },
        ReferenceGait {
            name: "modified_trot_1",
            offsets: trot,
            nominal_frequency_hz: 1.0,
            path: path(0.06, 0.04, 0.5),
        },
        ReferenceGait {
            name: "modified_trot_2",
            offsets: trot,
            nominal_frequency_hz: 1.0,
            path: path(0.10, 0.06, 0.5),
        },
    ]
}

/// Fits every reference gait (same weights on all legs).
pub fn fit_reference_library(samples: usize) -> Result<GaitFile> {
    let gait = reference_gaits()
        .into_iter()
        .map(|r| {
            let fit = fit_weights_periodic(&r.path.samples(samples))?;
            Ok(GaitEntry {
                name: r.name.to_string(),
                nominal_frequency_hz: r.nominal_frequency_hz,
                offsets: r.offsets,
                fit_residual_m: Some(fit.max_residual),
                reference: Some(r.path),
                weights_x: [fit.weights_x; LEGS],
                weights_y: [fit.weights_y; LEGS],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GaitFile { gait })
}
