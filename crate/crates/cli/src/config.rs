//! Sectioned TOML experiment configuration. Every key is optional.

use anyhow::{bail, Context, Result};
use osgood_lab::drift::DriftSpec;
use osgood_lab::grid::GridSpec;
use osgood_lab::noise::SpectralMeasure;
use osgood_lab::solver::InitialData;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub grid: GridSection,
    pub drift: DriftSection,
    pub noise: NoiseSection,
    pub audit: AuditSection,
    pub weight: WeightSection,
    pub solve: SolveSection,
    #[serde(rename = "blowup-scan")]
    pub blowup_scan: BlowupSection,
    pub uniq: UniqSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("malformed config {}", path.display()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    pub n: usize,
    pub half_len: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { d: 1, n: 256, half_len: 8.0 }
    }
}

impl GridSection {
    pub fn spec(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(self.d, self.n, self.half_len)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSection {
    /// ilog | linear | power | ulog | zero
    pub family: String,
    pub n: u32,
    pub lambda: f64,
    pub delta: f64,
    pub log_adjust: f64,
}

impl Default for DriftSection {
    fn default() -> Self {
        DriftSection { family: "ilog".into(), n: 2, lambda: 1.0, delta: 1.0, log_adjust: 0.0 }
    }
}

impl DriftSection {
    pub fn spec(&self) -> Result<DriftSpec> {
        let s = match self.family.as_str() {
            "ilog" | "iterated-log" => DriftSpec::iterated_log(self.n)?,
            "linear" => DriftSpec::linear(self.lambda)?,
            "power" => DriftSpec::power(self.delta)?,
            "ulog" => DriftSpec::ulog(),
            "zero" => DriftSpec::linear(0.0)?,
            other => bail!("unknown drift family '{other}'"),
        };
        Ok(if self.log_adjust > 0.0 { s.with_log_adjust(self.log_adjust)? } else { s })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// white | riesz | exp-decay
    pub measure: String,
    pub beta: f64,
    pub a: f64,
    pub sigma: f64,
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Paths for the covariance validation; skipped below 1000.
    pub covariance_paths: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { measure: "white".into(), beta: 0.5, a: 1.0, sigma: 1.0, paths: 100, dt: 0.01, horizon: 1.0, covariance_paths: 0 }
    }
}

impl NoiseSection {
    pub fn measure(&self) -> Result<SpectralMeasure> {
        Ok(match self.measure.as_str() {
            "white" => SpectralMeasure::White,
            "riesz" => SpectralMeasure::Riesz { beta: self.beta },
            "exp-decay" => SpectralMeasure::ExpDecay { a: self.a },
            other => bail!("unknown spectral measure '{other}'"),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    /// Chosen from the fitted growth exponent when absent.
    pub alpha: Option<f64>,
    pub x_max: f64,
    pub u_cap: f64,
    pub grid_points: usize,
    pub epsilon: f64,
    pub horizon: f64,
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection { alpha: None, x_max: 1e8, u_cap: 1e12, grid_points: 400, epsilon: 0.5, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightSection {
    pub alpha: f64,
    /// Domain of the weight in time; checks run at `times` strictly inside it.
    pub horizon: f64,
    /// gh | mc
    pub estimator: String,
    pub nodes: usize,
    pub mc_paths: usize,
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
}

impl Default for WeightSection {
    fn default() -> Self {
        WeightSection {
            alpha: 1.2,
            horizon: 2.0,
            estimator: "gh".into(),
            nodes: 64,
            mc_paths: 4096,
            times: vec![0.25, 0.5, 1.0],
            radii: vec![0.0, 1.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub cutoff: Option<f64>,
    pub initial: InitialData,
    pub limiter: Option<f64>,
    pub nodes: usize,
    /// exp-euler | picard
    pub scheme: String,
    pub threshold: f64,
}

impl Default for SolveSection {
    fn default() -> Self {
        SolveSection {
            dt: 1e-3,
            horizon: 1.0,
            paths: 50,
            sigma: 1.0,
            alpha: 1.2,
            cutoff: None,
            initial: InitialData::Rho0 { scale: 1.0 },
            limiter: None,
            nodes: 64,
            scheme: "exp-euler".into(),
            threshold: 1e8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlowupSection {
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub sigma: f64,
    pub initial: InitialData,
    pub limiter: Option<f64>,
}

impl Default for BlowupSection {
    fn default() -> Self {
        BlowupSection { dt: 1e-3, horizon: 1.0, paths: 50, sigma: 1.0, initial: InitialData::Constant { value: 1.0 }, limiter: Some(1.0) }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniqSection {
    pub dt: f64,
    pub horizon: f64,
    pub sigma: f64,
    pub level: f64,
    pub refinements: usize,
    pub epsilon: f64,
    pub nu: f64,
    pub nu2: f64,
    /// Constant `C` of the bracket; measured as `L(sup|u|)` when absent.
    pub c_lip: Option<f64>,
    pub initial: InitialData,
}

impl Default for UniqSection {
    fn default() -> Self {
        UniqSection {
            dt: 0.01,
            horizon: 1.0,
            sigma: 1.0,
            level: 100.0,
            refinements: 3,
            epsilon: 0.5,
            nu: 0.5,
            nu2: 1.2,
            c_lip: None,
            initial: InitialData::Rho0 { scale: 1.0 },
        }
    }
}
