//! Experiment configuration (TOML).

use anyhow::{bail, Context, Result};
use bergman_lab::geometry::{build_geometry_named, ModelGeometry, Resolution};
use bergman_lab::asymptotics::expected_dim;
use bergman_lab::sampling::{Cap, FamilyKind, PointFamily};
use bergman_lab::symbol::SuperSymbolSpec;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Bergman,
    Spectrum,
    Trace,
    Kernel,
    Sampling,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Bergman => "bergman",
            Experiment::Spectrum => "spectrum",
            Experiment::Trace => "trace",
            Experiment::Kernel => "kernel",
            Experiment::Sampling => "sampling",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nodes_per_panel: usize,
    pub angular: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapConfig {
    pub theta: f64,
    pub phi: f64,
    pub radius: f64,
}

impl From<CapConfig> for Cap {
    fn from(c: CapConfig) -> Cap {
        Cap { theta: c.theta, phi: c.phi, radius: c.radius }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    FibonacciUniform {
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sep: Option<f64>,
    },
    CapDeficient {
        c: f64,
        cap: CapConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sep: Option<f64>,
    },
    QuadratureNodes,
}

impl FamilyConfig {
    fn family(&self) -> PointFamily {
        let (kind, sep) = match *self {
            FamilyConfig::FibonacciUniform { c, sep } => (FamilyKind::FibonacciUniform { c }, sep),
            FamilyConfig::CapDeficient { c, cap, sep } => (FamilyKind::CapDeficient { c, cap: cap.into() }, sep),
            FamilyConfig::QuadratureNodes => (FamilyKind::QuadratureNodes, None),
        };
        let mut f = PointFamily::new(kind);
        if let Some(s) = sep {
            f.sep = s;
        }
        f
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Empty means the default trio: cap-deficient, quadrature nodes, sparse Fibonacci.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub families: Vec<FamilyConfig>,
    /// Empty means the northern hemisphere.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<CapConfig>,
}

/// Bounds of the acceptance bands checked by `run`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// `k·l1_error` at every k.
    pub bergman: f64,
    /// `k·|N/k − limit_mass|` at every k and γ.
    pub counting: f64,
    /// KS distance at the largest k.
    pub ks: f64,
    /// `k·trace_error` at every k.
    pub trace: f64,
    /// Gap between the two trace routes.
    pub route_gap: f64,
    /// Minimum R² of the exponential off-diagonal fit.
    pub kernel_r2: f64,
    /// Maximum `A` of weighted (quadrature) sampling families.
    pub frame_a: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { bergman: 3.0, counting: 2.0, ks: 0.15, trace: 3.0, route_gap: 1e-8, kernel_r2: 0.99, frame_a: 2.0 }
    }
}

fn default_gammas() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

fn default_delta() -> f64 {
    0.5
}

fn is_default<T: Default + PartialEq>(t: &T) -> bool {
    *t == T::default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Catalog string, e.g. `FS_CP1(1)` or `PERTURBED_CP1(1,tmax)`.
    pub geometry: String,
    pub q: usize,
    #[serde(default)]
    pub ks: Vec<u32>,
    #[serde(default)]
    pub experiments: Vec<Experiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    /// Geodesic radius of the off-diagonal kernel mass.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    /// Block key (`"0"`, `"1"`, `"2"`, `"12"`) to expression.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub symbol: BTreeMap<String, String>,
    /// Second symbol for `Tr(T_f T_g)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub sampling: SamplingConfig,
    #[serde(default, skip_serializing_if = "is_default")]
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn emit(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn enabled(&self, e: Experiment) -> bool {
        self.experiments.contains(&e)
    }

    /// Checks everything that can be checked without computing and resolves
    /// the catalog and symbol strings.
    pub fn validate(&self) -> Result<Plan> {
        let geom = build_geometry_named(&self.geometry)?;
        if expected_dim(&geom, 1, self.q).is_none() {
            bail!("q = {} is not supported on {}", self.q, geom.name());
        }
        let mut seen = self.experiments.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.experiments.len() {
            bail!("experiment listed twice");
        }
        if !self.experiments.is_empty() && self.ks.is_empty() {
            bail!("ks is empty");
        }
        if self.ks.contains(&0) {
            bail!("k must be ≥ 1");
        }
        let resolution = match self.grid {
            Some(g) => Resolution { nodes_per_panel: g.nodes_per_panel, angular: g.angular },
            None => Resolution::default_for(&geom),
        };
        if resolution.nodes_per_panel < Resolution::MIN_NODES_PER_PANEL || resolution.angular < Resolution::MIN_ANGULAR {
            bail!(
                "grid resolution below minimum ({} nodes per panel, {} angular)",
                Resolution::MIN_NODES_PER_PANEL,
                Resolution::MIN_ANGULAR
            );
        }
        if self.gammas.iter().any(|g| !g.is_finite()) {
            bail!("gammas must be finite");
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            bail!("delta must be positive");
        }
        let spec = |m: &BTreeMap<String, String>| -> Result<SuperSymbolSpec> {
            let blocks: Vec<(&str, &str)> = m.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
            Ok(SuperSymbolSpec::parse(geom.n, &blocks)?)
        };
        let needs_symbol = self.enabled(Experiment::Trace) || self.enabled(Experiment::Spectrum);
        if needs_symbol && self.symbol.is_empty() {
            bail!("trace and spectrum experiments need a symbol");
        }
        let symbol = if self.symbol.is_empty() { None } else { Some(spec(&self.symbol)?) };
        let second = self.second.as_ref().map(spec).transpose()?;
        if self.enabled(Experiment::Sampling) && (geom.n != 1 || self.q != 0) {
            bail!("sampling experiment needs a curve geometry with q = 0");
        }
        let families = if self.sampling.families.is_empty() {
            vec![
                PointFamily::new(FamilyKind::CapDeficient { c: 2.0, cap: Cap::hemisphere() }),
                PointFamily::new(FamilyKind::QuadratureNodes),
                PointFamily::new(FamilyKind::FibonacciUniform { c: 1.0 }),
            ]
        } else {
            self.sampling.families.iter().map(FamilyConfig::family).collect()
        };
        for f in &families {
            if let FamilyKind::FibonacciUniform { c } | FamilyKind::CapDeficient { c, .. } = f.kind {
                if !(c.is_finite() && c > 0.0) {
                    bail!("family density c must be positive, got {c}");
                }
            }
        }
        let regions = if self.sampling.regions.is_empty() {
            vec![Cap::hemisphere()]
        } else {
            self.sampling.regions.iter().map(|&c| c.into()).collect()
        };
        if regions.iter().any(|r| !(r.radius > 0.0 && r.radius.is_finite())) {
            bail!("region radius must be positive");
        }
        Ok(Plan { geom, resolution, symbol, second, families, regions })
    }
}

/// A validated configuration.
pub struct Plan {
    pub geom: ModelGeometry,
    pub resolution: Resolution,
    pub symbol: Option<SuperSymbolSpec>,
    pub second: Option<SuperSymbolSpec>,
    pub families: Vec<PointFamily>,
    pub regions: Vec<Cap>,
}
