//! JSON report schemas. Every report carries the configuration hash and the
//! report format version so that stale files are recognisable.

use magspec::acceptance::CriterionOutcome;
use magspec::eigensolver::SolverMethod;
use magspec::intervals::{Interval, IntervalUnion};
use magspec::spectral_analysis::{ClusterReport, FunctionalCalculus, GaussianFit, RrCheck, WeylRatio};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config_hash: String,
    pub report_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotReport {
    pub site: usize,
    pub coords: Vec<f64>,
    pub intensities: Vec<f64>,
    pub potential_eigenvalues: Vec<f64>,
    /// Distinct model eigenvalues below the cutoff with multiplicities.
    pub levels: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub header: Header,
    pub cutoff: f64,
    pub sigma: IntervalUnion,
    pub gaps: Vec<Interval>,
    pub spots: Vec<SpotReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRun {
    pub k: u32,
    pub method: SolverMethod,
    pub count: usize,
    pub lowest: Option<f64>,
    pub max_residual: f64,
    pub orthonormality_defect: f64,
    pub from_cache: bool,
    pub cache_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub header: Header,
    pub cutoff: f64,
    pub runs: Vec<SpectrumRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRun {
    pub k: u32,
    pub report: ClusterReport,
    pub riemann_roch: Vec<RrCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersReport {
    pub header: Header,
    pub runs: Vec<ClusterRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalWeylRow {
    pub k: u32,
    pub lambda: f64,
    pub count: usize,
    pub predicted: f64,
    /// `None` when the prediction vanishes.
    pub ratio: Option<f64>,
}

impl GlobalWeylRow {
    pub fn new(k: u32, w: &WeylRatio) -> Self {
        GlobalWeylRow {
            k,
            lambda: w.lambda,
            count: w.count,
            predicted: w.predicted,
            ratio: (!w.degenerate).then_some(w.ratio),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalWeylRow {
    pub k: u32,
    pub site: usize,
    pub window: Interval,
    pub value: f64,
    pub normalized: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRow {
    pub k: u32,
    pub support: f64,
    #[serde(flatten)]
    pub result: FunctionalCalculus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylReport {
    pub header: Header,
    pub global: Vec<GlobalWeylRow>,
    pub local: Vec<LocalWeylRow>,
    /// `g(t) = exp(-t)` on the diagonal against the model trace.
    pub heat_trace: Vec<FunctionalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRun {
    pub k: u32,
    pub window: Interval,
    pub site: usize,
    pub radius: f64,
    pub samples: usize,
    pub samples_file: String,
    /// `Pi(x, x) (2 pi / k)^n`.
    pub peak_normalized: f64,
    pub model_peak: f64,
    pub fit: Option<GaussianFit>,
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub header: Header,
    pub runs: Vec<KernelRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChernRow {
    pub window: Interval,
    pub rank: usize,
    pub c1: i64,
    pub raw: f64,
    pub curvature_file: String,
    /// `(k, rank k d + c1)` for every configured `k`.
    pub riemann_roch: Vec<(u32, i64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChernReport {
    pub header: Header,
    pub degree: i64,
    pub bundles: Vec<ChernRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptReport {
    pub header: Header,
    pub passed: usize,
    pub failed: usize,
    pub outcomes: Vec<CriterionOutcome>,
}
