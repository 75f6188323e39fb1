//! Experiment configuration: flat TOML with `[grid]`, `[map]`, `[solver]`
//! and `[output]` sections, so configs stay diffable and embed verbatim in
//! run manifests.

use anyhow::{bail, Context};
use serde::Deserialize;

use coneflow::boundary::{BoundaryMap, PiecewiseLinearMap};
use coneflow::grid::GridConfig;
use coneflow::solver::{LogDomainMode, SolverOptions};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub map: MapSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_x: usize,
    pub n_r: usize,
    pub r_lo: f64,
    pub r_hi: f64,
    pub k_levels: usize,
    pub t_total: f64,
}

/// Either a named preset or an explicit piecewise-linear map given by
/// breakpoints plus values (or slopes with an anchor value at 0).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub preset: Option<String>,
    pub breakpoints: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
    pub slopes: Option<Vec<f64>>,
    pub h0: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub epsilon: f64,
    pub alpha: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_log_domain")]
    pub log_domain: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<String>,
    /// 1-based snapshot levels; defaults to the reference figure levels
    /// scaled to the configured `k_levels`.
    pub snapshots: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
}

fn default_tolerance() -> f64 {
    1e-7
}

fn default_max_sweeps() -> usize {
    5000
}

fn default_log_domain() -> String {
    "auto".into()
}

/// Snapshot levels used by the reference experiment figures at 35 time
/// levels.
pub const REFERENCE_SNAPSHOT_LEVELS: [usize; 8] = [1, 6, 11, 16, 20, 25, 30, 35];

/// Reference levels rescaled proportionally (by floor) to `k_levels`,
/// deduplicated. At `k_levels = 35` this is the reference list itself.
pub fn default_snapshots(k_levels: usize) -> Vec<usize> {
    let mut out: Vec<usize> = REFERENCE_SNAPSHOT_LEVELS
        .iter()
        .map(|&k| (k - 1) * (k_levels - 1) / 34 + 1)
        .collect();
    out.dedup();
    out
}

pub fn parse_log_domain(name: &str) -> anyhow::Result<LogDomainMode> {
    Ok(match name {
        "auto" => LogDomainMode::Auto,
        "on" => LogDomainMode::On,
        "off" => LogDomainMode::Off,
        other => bail!("log_domain must be auto, on or off, got {other:?}"),
    })
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> anyhow::Result<()> {
        if let Some(snapshots) = &self.output.snapshots {
            for &k in snapshots {
                if k < 1 || k > self.grid.k_levels {
                    bail!("snapshot level {k} outside 1..={}", self.grid.k_levels);
                }
            }
        }
        parse_log_domain(&self.solver.log_domain)?;
        self.boundary_map()?;
        Ok(())
    }

    pub fn grid_config(&self) -> GridConfig {
        GridConfig {
            n_x: self.grid.n_x,
            n_r: self.grid.n_r,
            r_lo: self.grid.r_lo,
            r_hi: self.grid.r_hi,
            k_levels: self.grid.k_levels,
            t_total: self.grid.t_total,
        }
    }

    pub fn boundary_map(&self) -> anyhow::Result<BoundaryMap> {
        let m = &self.map;
        if let Some(preset) = &m.preset {
            if m.breakpoints.is_some() || m.values.is_some() || m.slopes.is_some() {
                bail!("map preset and explicit breakpoints are mutually exclusive");
            }
            return Ok(match preset.as_str() {
                "peakon" => BoundaryMap::peakon(),
                "reflection" => BoundaryMap::Reflection,
                "identity" => BoundaryMap::Identity,
                other => bail!("unknown map preset {other:?} (peakon | reflection | identity)"),
            });
        }
        let breakpoints = m
            .breakpoints
            .clone()
            .context("map needs either a preset or breakpoints")?;
        let map = match (&m.values, &m.slopes) {
            (Some(values), None) => PiecewiseLinearMap::new(breakpoints, values.clone())?,
            (None, Some(slopes)) => {
                PiecewiseLinearMap::from_slopes(breakpoints, slopes.clone(), m.h0.unwrap_or(0.0))?
            }
            _ => bail!("give exactly one of map.values or map.slopes"),
        };
        Ok(BoundaryMap::PiecewiseLinear(map))
    }

    pub fn solver_options(&self) -> anyhow::Result<SolverOptions> {
        Ok(SolverOptions {
            tolerance: self.solver.tolerance,
            max_sweeps: self.solver.max_sweeps,
            log_domain: parse_log_domain(&self.solver.log_domain)?,
        })
    }

    pub fn snapshots(&self) -> Vec<usize> {
        self.output
            .snapshots
            .clone()
            .unwrap_or_else(|| default_snapshots(self.grid.k_levels))
    }

    /// Map description for the manifest.
    pub fn map_description(&self) -> String {
        match self.boundary_map() {
            Ok(BoundaryMap::Identity) => "identity".into(),
            Ok(BoundaryMap::Reflection) => "reflection".into(),
            Ok(BoundaryMap::PiecewiseLinear(map)) => format!(
                "piecewise-linear breakpoints={:?} values={:?}",
                map.breakpoints(),
                map.values()
            ),
            Err(_) => "invalid".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_preset_config() {
        let text = r#"
            [grid]
            n_x = 16
            n_r = 17
            r_lo = 0.55
            r_hi = 1.45
            k_levels = 9
            t_total = 1.0

            [map]
            preset = "peakon"

            [solver]
            epsilon = 5e-3
            alpha = 40.0
        "#;
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        config.validate().unwrap();
        assert!(matches!(config.boundary_map().unwrap(), BoundaryMap::PiecewiseLinear(_)));
        assert_eq!(config.solver.tolerance, 1e-7);
        assert_eq!(config.solver.max_sweeps, 5000);
        assert_eq!(config.snapshots(), vec![1, 2, 3, 4, 5, 6, 7, 9]);
    }

    #[test]
    fn explicit_map_via_slopes() {
        let text = r#"
            [grid]
            n_x = 4
            n_r = 3
            r_lo = 0.5
            r_hi = 1.5
            k_levels = 3
            t_total = 1.0

            [map]
            breakpoints = [0.0, 0.5, 1.0]
            slopes = [1.4, 0.6]

            [solver]
            epsilon = 0.1
            alpha = 1.0
        "#;
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        let map = config.boundary_map().unwrap();
        let (h, j) = map.eval(0.25).unwrap();
        assert!((h - 0.35).abs() < 1e-12);
        assert_eq!(j, 1.4);
    }

    #[test]
    fn reference_snapshots_scale_with_levels() {
        assert_eq!(default_snapshots(35), vec![1, 6, 11, 16, 20, 25, 30, 35]);
        assert_eq!(default_snapshots(9), vec![1, 2, 3, 4, 5, 6, 7, 9]);
        assert_eq!(default_snapshots(2), vec![1, 2]);
    }

    #[test]
    fn rejects_bad_snapshots_and_modes() {
        let text = r#"
            [grid]
            n_x = 4
            n_r = 3
            r_lo = 0.5
            r_hi = 1.5
            k_levels = 3
            t_total = 1.0

            [map]
            preset = "identity"

            [solver]
            epsilon = 0.1
            alpha = 1.0
            log_domain = "sometimes"
        "#;
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        assert!(config.validate().is_err());
    }
}
