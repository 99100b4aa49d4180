//! Named training configurations: eight method rows × four dataset columns.
//!
//! These are the tuned settings for the public benchmarks, reachable by
//! name (`"bpr+uib@ml1m"`) from the CLI and the acceptance suite. Structure
//! shared by every cell: d = 32, batch 1024, Adagrad, patience 20, and
//! M = 32 sampled negatives for boundary objectives versus 1 otherwise —
//! only the per-cell scalars below vary.

use crate::losses::LossSpec;
use crate::scorers::{ModelKind, ModelSpec};
use crate::training::TrainConfig;
use std::str::FromStr;

/// Benchmark column. Only the largest one trims the epoch budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Ml10m,
    Ml1m,
    Aiv,
    Lastfm,
}

impl Dataset {
    pub const ALL: [Dataset; 4] = [Dataset::Ml10m, Dataset::Ml1m, Dataset::Aiv, Dataset::Lastfm];

    fn column(self) -> usize {
        match self {
            Dataset::Ml10m => 0,
            Dataset::Ml1m => 1,
            Dataset::Aiv => 2,
            Dataset::Lastfm => 3,
        }
    }

    fn max_epochs(self) -> usize {
        match self {
            Dataset::Ml10m => 100,
            _ => 500,
        }
    }
}

impl FromStr for Dataset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ml10m" => Ok(Dataset::Ml10m),
            "ml1m" => Ok(Dataset::Ml1m),
            "aiv" => Ok(Dataset::Aiv),
            "lastfm" => Ok(Dataset::Lastfm),
            other => Err(format!("unknown dataset {other:?} (ml10m|ml1m|aiv|lastfm)")),
        }
    }
}

impl std::fmt::Display for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Dataset::Ml10m => "ml10m",
            Dataset::Ml1m => "ml1m",
            Dataset::Aiv => "aiv",
            Dataset::Lastfm => "lastfm",
        })
    }
}

/// Method row: four scorer families, each as its own baseline objective and
/// with the interest-boundary hybrid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Bpr,
    BprUib,
    Ncf,
    NcfUib,
    Sml,
    SmlUib,
    LightGcn,
    LightGcnUib,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Bpr,
        Method::BprUib,
        Method::Ncf,
        Method::NcfUib,
        Method::Sml,
        Method::SmlUib,
        Method::LightGcn,
        Method::LightGcnUib,
    ];

    pub fn kind(self) -> ModelKind {
        match self {
            Method::Bpr | Method::BprUib => ModelKind::Mf,
            Method::Ncf | Method::NcfUib => ModelKind::Mlp,
            Method::Sml | Method::SmlUib => ModelKind::Metric,
            Method::LightGcn | Method::LightGcnUib => ModelKind::Gcn,
        }
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bpr" => Ok(Method::Bpr),
            "bpr+uib" => Ok(Method::BprUib),
            "ncf" => Ok(Method::Ncf),
            "ncf+uib" => Ok(Method::NcfUib),
            "sml" => Ok(Method::Sml),
            "sml+uib" => Ok(Method::SmlUib),
            "lightgcn" => Ok(Method::LightGcn),
            "lightgcn+uib" => Ok(Method::LightGcnUib),
            other => Err(format!(
                "unknown method {other:?} (bpr|bpr+uib|ncf|ncf+uib|sml|sml+uib|lightgcn|lightgcn+uib)"
            )),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Bpr => "bpr",
            Method::BprUib => "bpr+uib",
            Method::Ncf => "ncf",
            Method::NcfUib => "ncf+uib",
            Method::Sml => "sml",
            Method::SmlUib => "sml+uib",
            Method::LightGcn => "lightgcn",
            Method::LightGcnUib => "lightgcn+uib",
        })
    }
}

const DEFAULT_D: usize = 32;
const GCN_LAYERS: usize = 3;
const SML_LAMBDA: f64 = 0.3;
const GCN_UPSILON: f64 = 1e-4;

/// The tuned configuration for one (method, dataset) cell.
///
/// Per-cell scalars, columns ordered ml10m / ml1m / aiv / lastfm:
///
/// | method        | η                    | τ                  | extra                          |
/// |---------------|----------------------|--------------------|--------------------------------|
/// | bpr           | 1.0, 1.0, 3.0, 1.0   | 0.0, 0.1, 0.3, 0.2 |                                |
/// | bpr+uib       | 3.0, 1.0, 3.0, 3.0   | 0.1, 0.1, 0.2, 0.2 | α 8, 8, 1, 2                   |
/// | ncf           | 1.0 ×4               | 0.1, 0.1, 0.4, 0.3 |                                |
/// | ncf+uib       | 1.0 ×4               | 0.1, 0.1, 0.4, 0.4 | α 8, 8, 0.1, 8                 |
/// | sml           | 0.1, 1.0, 1.0, 1.0   | 0 ×4               | λ 0.3, γ 64, 128, 256, 128     |
/// | sml+uib       | 0.1, 1.0, 0.3, 0.3   | 0 ×4               | λ 0.3, γ 64, 128, 256, 256, α 0.2, 0.2, 0.2, 2 |
/// | lightgcn      | 0.1, 0.1, 0.03, 0.1  | 0 ×4               | υ 1e-4                         |
/// | lightgcn+uib  | 0.3, 0.3, 0.03, 0.1  | 0 ×4               | υ 1e-4, α 8, 8, 8, 0.2         |
pub fn preset(method: Method, dataset: Dataset) -> TrainConfig {
    let c = dataset.column();
    let pick = |v: [f64; 4]| v[c];
    let (eta, tau, upsilon, loss) = match method {
        Method::Bpr => {
            (pick([1.0, 1.0, 3.0, 1.0]), pick([0.0, 0.1, 0.3, 0.2]), 0.0, LossSpec::PairwiseLnsig)
        }
        Method::BprUib => (
            pick([3.0, 1.0, 3.0, 3.0]),
            pick([0.1, 0.1, 0.2, 0.2]),
            0.0,
            LossSpec::UibLnsig { alpha: pick([8.0, 8.0, 1.0, 2.0]) },
        ),
        Method::Ncf => {
            (1.0, pick([0.1, 0.1, 0.4, 0.3]), 0.0, LossSpec::PointwiseCe)
        }
        Method::NcfUib => (
            1.0,
            pick([0.1, 0.1, 0.4, 0.4]),
            0.0,
            LossSpec::UibLnsig { alpha: pick([8.0, 8.0, 0.1, 8.0]) },
        ),
        Method::Sml => (
            pick([0.1, 1.0, 1.0, 1.0]),
            0.0,
            0.0,
            LossSpec::Sml { lambda: SML_LAMBDA, gamma: pick([64.0, 128.0, 256.0, 128.0]) },
        ),
        Method::SmlUib => (
            pick([0.1, 1.0, 0.3, 0.3]),
            0.0,
            0.0,
            LossSpec::SmlUib {
                alpha: pick([0.2, 0.2, 0.2, 2.0]),
                lambda: SML_LAMBDA,
                gamma: pick([64.0, 128.0, 256.0, 256.0]),
            },
        ),
        Method::LightGcn => {
            (pick([0.1, 0.1, 0.03, 0.1]), 0.0, GCN_UPSILON, LossSpec::PairwiseLnsig)
        }
        Method::LightGcnUib => (
            pick([0.3, 0.3, 0.03, 0.1]),
            0.0,
            GCN_UPSILON,
            LossSpec::UibLnsig { alpha: pick([8.0, 8.0, 8.0, 0.2]) },
        ),
    };
    let kind = method.kind();
    let spec = ModelSpec {
        kind,
        d: DEFAULT_D,
        k_layers: if kind == ModelKind::Gcn { GCN_LAYERS } else { 0 },
    };
    let mut config = TrainConfig::new(spec, loss);
    config.eta = eta;
    config.tau = tau;
    config.upsilon = upsilon;
    config.max_epochs = dataset.max_epochs();
    config
}

/// Parse a `"method@dataset"` name, e.g. `"lightgcn+uib@lastfm"`.
pub fn preset_by_name(name: &str) -> Result<TrainConfig, String> {
    let (method, dataset) = name
        .split_once('@')
        .ok_or_else(|| format!("preset {name:?} is not of the form method@dataset"))?;
    Ok(preset(method.parse()?, dataset.parse()?))
}

/// Every defined preset name, row-major (method outer, dataset inner).
pub fn preset_names() -> Vec<String> {
    Method::ALL
        .iter()
        .flat_map(|m| Dataset::ALL.iter().map(move |d| format!("{m}@{d}")))
        .collect()
}
