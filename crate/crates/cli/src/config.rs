//! `--config run.json`: defaults for every subcommand, overridden in turn by
//! explicit flags.

use std::path::Path;

use omnisweep::calibration::{SolverOptions, DEFAULT_HUBER_DELTA};
use omnisweep::stitcher::StitchParams;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub render: RenderConfig,
    pub calibrate: CalibrateConfig,
    pub stitch: StitchParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub size: [usize; 2],
    pub samples: usize,
    pub panorama: [usize; 2],
    pub boards: usize,
    pub corner_sigma: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            size: [1024, 1024],
            samples: 2,
            panorama: [2048, 1024],
            boards: 8,
            corner_sigma: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    pub huber: f64,
    pub solver: SolverOptions,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            huber: DEFAULT_HUBER_DELTA,
            solver: SolverOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> omnisweep::Result<Self> {
        omnisweep::io::read_json(path)
    }
}

/// Parses `WIDTHxHEIGHT`.
pub fn parse_size(s: &str) -> Result<[usize; 2], String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    let (w, h) = (parse(w)?, parse(h)?);
    if w == 0 || h == 0 {
        return Err(format!("size must be positive, got {s:?}"));
    }
    Ok([w, h])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("512x256"), Ok([512, 256]));
        assert!(parse_size("512").is_err());
        assert!(parse_size("0x4").is_err());
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"stitch": {"n_layers": 16}}"#).unwrap();
        assert_eq!(c.stitch.n_layers, 16);
        assert_eq!(c.stitch.grid, [512, 256]);
        assert_eq!(c.render, RenderConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"stich": {}}"#).is_err());
    }
}
