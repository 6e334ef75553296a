//! Run configuration, validation and the content hash used for caching.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use magspec::acceptance::AcceptanceSettings;
use magspec::eigensolver::{LanczosOptions, CACHE_VERSION, DEFAULT_DENSE_CAP};
use magspec::geometry::{build_geometry, GeometryField, TorusConfig};
use magspec::intervals::{Interval, IntervalUnion};
use magspec::lattice::Perturbation;
use magspec::model_spectrum::{sigma_envelope, ENDPOINT_TOL, MERGE_TOL};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Version of the JSON report and CSV table layouts written by the runner.
pub const REPORT_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub dense_cap: usize,
    pub rel_tol: f64,
    pub seed: u64,
    /// Lanczos search range above the cutoff.
    pub margin: f64,
    pub certify: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let l = LanczosOptions::default();
        SolverSettings {
            dense_cap: DEFAULT_DENSE_CAP,
            rel_tol: l.rel_tol,
            seed: l.seed,
            margin: l.margin,
            certify: l.certify,
        }
    }
}

impl SolverSettings {
    pub fn lanczos(&self) -> LanczosOptions {
        LanczosOptions {
            rel_tol: self.rel_tol,
            seed: self.seed,
            margin: self.margin,
            certify: self.certify,
            ..LanczosOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisToggles {
    pub global_weyl: bool,
    pub local_weyl: bool,
    pub kernel: bool,
    pub functional_calculus: bool,
    /// Grid multi-indices used for local reports; empty means the grid centre.
    pub sites: Vec<Vec<usize>>,
    /// Kernel slice radius in magnetic lengths `(k max B)^{-1/2}`.
    pub kernel_radius: f64,
    /// Energies tabulated in the integrated density table.
    pub weyl_samples: usize,
}

impl Default for AnalysisToggles {
    fn default() -> Self {
        AnalysisToggles {
            global_weyl: true,
            local_weyl: true,
            kernel: true,
            functional_calculus: true,
            sites: Vec::new(),
            kernel_radius: 3.0,
            weyl_samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub torus: TorusConfig,
    pub ks: Vec<u32>,
    /// Energy cutoff for `k^{-1} H`.
    pub cutoff: f64,
    #[serde(default)]
    pub intervals: Vec<Interval>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub analysis: AnalysisToggles,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
    /// Minimum distance between the envelope and the cutoff or any interval
    /// endpoint.
    #[serde(default = "default_clearance")]
    pub clearance: f64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub acceptance: AcceptanceSettings,
}

fn default_clearance() -> f64 {
    1e-6
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/default")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// The constant-field configuration shipped as `configs/default.json`.
    pub fn default_run() -> Self {
        RunConfig {
            torus: TorusConfig::constant_field(48, 1),
            ks: vec![4, 6, 8, 12],
            cutoff: 6.0 * PI,
            intervals: vec![
                Interval::new(0.5, 2.0 * PI),
                Interval::new(2.0 * PI, 4.0 * PI),
                Interval::new(4.0 * PI, 6.0 * PI),
            ],
            solver: SolverSettings {
                dense_cap: 1024,
                ..SolverSettings::default()
            },
            analysis: AnalysisToggles::default(),
            perturbation: None,
            clearance: default_clearance(),
            output: default_output(),
            acceptance: AcceptanceSettings::default(),
        }
    }

    pub fn max_k(&self) -> u32 {
        self.ks.iter().copied().max().unwrap_or(0)
    }

    pub fn perturbation(&self) -> Option<&Perturbation> {
        self.perturbation.as_ref().filter(|p| !p.is_empty())
    }

    /// Checks everything that can be checked before any eigen-solve and
    /// returns the geometry together with the envelope below the cutoff.
    pub fn preflight(&self) -> Result<(GeometryField, IntervalUnion), CliError> {
        if self.ks.is_empty() {
            return Err(CliError::Usage("the k list is empty".into()));
        }
        if self.ks.contains(&0) {
            return Err(CliError::Usage("k must be at least 1".into()));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(CliError::Config(format!("cutoff {} must be positive", self.cutoff)));
        }
        if let Some(i) = self.intervals.iter().find(|i| i.hi > self.cutoff) {
            return Err(CliError::Config(format!(
                "interval [{}, {}] reaches past the cutoff {}",
                i.lo, i.hi, self.cutoff
            )));
        }
        let geom = build_geometry(&self.torus).map_err(|e| CliError::Config(e.to_string()))?;
        let max_b = geom.max_intensity().map_err(|e| CliError::Config(e.to_string()))?;
        let bound = resolution_bound(self.max_k(), max_b);
        if geom.spacing() > bound {
            return Err(CliError::Config(format!(
                "grid spacing {:.4e} exceeds {:.4e}, the limit of six points per magnetic length at k = {}; \
                 use at least {} points per axis",
                geom.spacing(),
                bound,
                self.max_k(),
                (1.0 / bound).ceil()
            )));
        }
        // Look past the cutoff so that a level sitting on it is seen.
        let sigma = sigma_envelope(&geom, self.cutoff + 1.0).map_err(|e| CliError::Config(e.to_string()))?;
        let mut endpoints = vec![("cutoff".to_string(), self.cutoff)];
        for (n, i) in self.intervals.iter().enumerate() {
            endpoints.push((format!("interval {n} lower end"), i.lo));
            endpoints.push((format!("interval {n} upper end"), i.hi));
        }
        for (what, x) in endpoints {
            let d = sigma.distance(x);
            if d < self.clearance {
                return Err(CliError::Config(format!(
                    "{what} {x} lies within {d:.3e} of the model envelope (clearance {:.1e})",
                    self.clearance
                )));
            }
        }
        let sigma = IntervalUnion {
            components: sigma.below(self.cutoff),
            resolution: sigma.resolution,
        };
        Ok((geom, sigma))
    }

    /// SHA-256 over every input that changes numbers: the configuration
    /// without its output location, the file format versions and the
    /// tolerance defaults of the library.
    pub fn hash(&self) -> [u8; 32] {
        let mut cfg = self.clone();
        cfg.output = PathBuf::new();
        let payload = json!({
            "config": cfg,
            "formats": {"cache": CACHE_VERSION, "report": REPORT_VERSION, "manifest": MANIFEST_VERSION},
            "tolerances": {
                "merge": MERGE_TOL,
                "endpoint": ENDPOINT_TOL,
                "lanczos": LanczosOptions::default(),
                "dense_cap_default": DEFAULT_DENSE_CAP,
            },
        });
        Sha256::digest(payload.to_string().as_bytes()).into()
    }

    pub fn hash_hex(&self) -> String {
        self.hash().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Largest admissible grid spacing: `(1/6) k^{-1/2} (2 pi / max B)^{1/2}`.
pub fn resolution_bound(k: u32, max_b: f64) -> f64 {
    (k.max(1) as f64).powf(-0.5) * (2.0 * PI / max_b).sqrt() / 6.0
}
