//! TOML experiment configuration.
//!
//! ```toml
//! experiment = "equivalence31"
//!
//! [domain]
//! dim = 1
//! half_width = 8.0
//! points = 256
//! boundary = "truncated_dirichlet"
//!
//! [operator]
//! kind = "schrodinger"
//! order_m = 2.0
//!
//! [potential]
//! kind = "constant"
//! c = 1.0
//!
//! [[norms]]
//! p = 2.0
//! lambda = 0.5
//!
//! [corpus]
//! generators = ["constants:2", "modes:4", "trig:6", "bumps:3", "indicators:2", "morrey_singular"]
//! seed = 7
//! ```
//!
//! Every other section is optional; see the field docs for defaults.

use crate::corpus::{self, CorpusSpec, NamedFunction, SingularExponent};
use campanato_core::cache::build_engine;
use campanato_core::dirichlet::HeightGrid;
use campanato_core::grid::{BallFamily, Boundary, GridDomain};
use campanato_core::norms::NormParams;
use campanato_core::potentials::PotentialSpec;
use campanato_core::spectral::{OperatorEngine, OperatorSpec};
use campanato_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Equivalence31,
    Schrodinger41,
    DirichletForward42,
    TraceInverse42,
    KernelBounds,
    LemmaChecks,
    RhCertify,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Equivalence31 => "equivalence31",
            Self::Schrodinger41 => "schrodinger41",
            Self::DirichletForward42 => "dirichlet_forward42",
            Self::TraceInverse42 => "trace_inverse42",
            Self::KernelBounds => "kernel_bounds",
            Self::LemmaChecks => "lemma_checks",
            Self::RhCertify => "rh_certify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub dim: usize,
    pub half_width: f64,
    pub points: usize,
    pub boundary: Boundary,
}

impl DomainSpec {
    pub fn build(&self) -> Result<GridDomain> {
        GridDomain::new(self.dim, self.half_width, self.points, self.boundary)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorChoice {
    Laplacian,
    Schrodinger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub kind: OperatorChoice,
    /// 2 selects the heat semigroup, 1 the Poisson semigroup.
    #[serde(default = "two")]
    pub order_m: f64,
}

fn two() -> f64 {
    2.0
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self { kind: OperatorChoice::Laplacian, order_m: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    pub p: f64,
    pub lambda: f64,
}

/// Ball family; unset fields take the defaults of [`BallFamily::default_for`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub stride: Option<usize>,
    pub ratio: Option<f64>,
    pub min_radius: Option<f64>,
}

impl FamilyConfig {
    pub fn build(&self, domain: &GridDomain) -> Result<BallFamily> {
        let d = BallFamily::default_for(domain);
        BallFamily::new(
            domain,
            self.stride.unwrap_or(d.stride()),
            self.ratio.unwrap_or(d.ratio()),
            self.min_radius.unwrap_or(d.min_radius()),
        )
    }

    /// The same centers and radii on a grid refined by `factor`.
    pub fn build_refined(&self, coarse: &GridDomain, factor: usize) -> Result<(GridDomain, BallFamily)> {
        let fam = self.build(coarse)?;
        let fine = coarse.refined(factor)?;
        let fam = BallFamily::new(&fine, fam.stride() * factor, fam.ratio(), fam.min_radius())?;
        Ok((fine, fam))
    }
}

/// Log-spaced heights; defaults span `[2h, R/2]` with 200 heights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeightConfig {
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    #[serde(default = "default_height_count")]
    pub count: usize,
}

fn default_height_count() -> usize {
    200
}

impl Default for HeightConfig {
    fn default() -> Self {
        Self { t_min: None, t_max: None, count: default_height_count() }
    }
}

impl HeightConfig {
    pub fn build(&self, domain: &GridDomain) -> Result<HeightGrid> {
        HeightGrid::new(
            domain,
            self.t_min.unwrap_or(2.0 * domain.spacing()),
            self.t_max.unwrap_or(domain.half_width() / 2.0),
            self.count,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    /// Number of `k` values, log-spaced so that `1/k` covers
    /// `[t_min, span · t_min]`. On that window the slices decay like
    /// `exp(-√μ t)`, so their Morrey norms spread by about
    /// `exp(√μ t_min (span - 1))`; keep `span` close to 1.
    #[serde(default = "default_k_count")]
    pub k_count: usize,
    #[serde(default = "default_k_span")]
    pub span: f64,
    #[serde(default = "default_extrapolation")]
    pub extrapolation_order: usize,
    #[serde(default = "default_inner")]
    pub inner_fraction: f64,
}

fn default_k_count() -> usize {
    6
}
fn default_k_span() -> f64 {
    1.5
}
fn default_extrapolation() -> usize {
    3
}
fn default_inner() -> f64 {
    0.5
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            k_count: default_k_count(),
            span: default_k_span(),
            extrapolation_order: default_extrapolation(),
            inner_fraction: default_inner(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReverseHolderConfig {
    #[serde(default = "two")]
    pub q: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Expected verdict; when unset the run passes iff certified.
    pub expect: Option<campanato_core::potentials::Verdict>,
}

fn default_budget() -> usize {
    5
}

impl Default for ReverseHolderConfig {
    fn default() -> Self {
        Self { q: 2.0, budget: default_budget(), expect: None }
    }
}

/// Times at which `semigroup` and membership checks evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default = "default_times")]
    pub values: Vec<f64>,
}

fn default_times() -> Vec<f64> {
    vec![0.01, 0.1, 1.0, 10.0]
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { values: default_times() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// `sup|σ(f)| ≤ sigma · sup|f|` under a potential with trivial kernel.
    #[serde(default = "d_sigma")]
    pub sigma: f64,
    /// Relative drift of `C*` under grid and family refinement.
    #[serde(default = "d_drift")]
    pub drift: f64,
    /// Relative drift of the Carleson constant under grid refinement.
    #[serde(default = "d_carleson_drift")]
    pub carleson_drift: f64,
    /// Round-trip trace error relative to `sup|f|`.
    #[serde(default = "d_trace")]
    pub trace: f64,
    /// Allowed relative spread of the `f_k` Morrey norms.
    #[serde(default = "d_fk_spread")]
    pub fk_spread: f64,
    #[serde(default = "d_kernel_heat")]
    pub kernel_heat: f64,
    #[serde(default = "d_kernel_poisson")]
    pub kernel_poisson: f64,
    /// Allowed excess of a finite-difference heat kernel over the free
    /// Gaussian, relative to the Gaussian peak.
    #[serde(default = "d_kernel_fd")]
    pub kernel_fd: f64,
    /// Relative change of the fitted Poisson constant under grid doubling.
    #[serde(default = "d_kernel_constant")]
    pub kernel_constant: f64,
    /// Smallest `sup|S_1 f - f| / sup|f|` counted as nontrivial.
    #[serde(default = "d_membership")]
    pub membership: f64,
    #[serde(default = "d_domination")]
    pub domination: f64,
    /// Relative error of fitted decay exponents.
    #[serde(default = "d_slope")]
    pub slope: f64,
    /// Relative spread of gap-decay slopes across `K`.
    #[serde(default = "d_k_spread")]
    pub k_spread: f64,
}

fn d_sigma() -> f64 {
    1e-6
}
fn d_drift() -> f64 {
    0.2
}
fn d_carleson_drift() -> f64 {
    0.3
}
fn d_trace() -> f64 {
    1e-3
}
fn d_fk_spread() -> f64 {
    0.1
}
fn d_kernel_heat() -> f64 {
    1e-6
}
fn d_kernel_poisson() -> f64 {
    1e-3
}
fn d_kernel_fd() -> f64 {
    0.05
}
fn d_kernel_constant() -> f64 {
    0.01
}
fn d_membership() -> f64 {
    1e-3
}
fn d_domination() -> f64 {
    1e-8
}
fn d_slope() -> f64 {
    0.1
}
fn d_k_spread() -> f64 {
    0.15
}

impl Default for Tolerances {
    fn default() -> Self {
        toml::from_str("").expect("all tolerance fields have defaults")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Grid dump stem (`<stem>.bin` + `<stem>.json`) used instead of the
    /// corpus by `norm`, `semigroup` and `limits`.
    pub grid: Option<PathBuf>,
    /// Directory of a stored solution field for `trace`.
    pub field: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    /// File stem of `<stem>.json` and `<stem>.csv`.
    #[serde(default = "default_stem")]
    pub stem: String,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_stem() -> String {
    "report".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out(), stem: default_stem() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub domain: DomainSpec,
    #[serde(default)]
    pub operator: OperatorConfig,
    pub potential: Option<PotentialSpec>,
    #[serde(default = "default_norms")]
    pub norms: Vec<NormConfig>,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub heights: HeightConfig,
    #[serde(default)]
    pub corpus: CorpusSpec,
    #[serde(default)]
    pub trace: TraceConfig,
    #[serde(default)]
    pub reverse_holder: ReverseHolderConfig,
    #[serde(default)]
    pub times: TimeConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Repeat the run on the doubled grid (and refined family) and check the
    /// drift of the fitted constants. Turn off when `2N` exceeds the dense
    /// eigen budget.
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn yes() -> bool {
    true
}

fn default_norms() -> Vec<NormConfig> {
    vec![NormConfig { p: 2.0, lambda: 0.5 }]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Norm parameters with `m` taken from the operator.
    pub fn norm_params(&self) -> Result<Vec<NormParams>> {
        self.norms
            .iter()
            .map(|n| NormParams::new(n.p, n.lambda, self.operator.order_m, self.domain.dim))
            .collect()
    }

    pub fn singular_exponent(&self) -> SingularExponent {
        let n = self.norms.first().copied().unwrap_or(default_norms()[0]);
        SingularExponent { p: n.p, lambda: n.lambda }
    }

    pub fn operator_spec(&self, domain: &GridDomain) -> Result<OperatorSpec> {
        let spec = match self.operator.kind {
            OperatorChoice::Laplacian => OperatorSpec::laplacian(),
            OperatorChoice::Schrodinger => {
                let v = self
                    .potential
                    .as_ref()
                    .ok_or_else(|| Error::Config("a schrodinger operator needs a [potential] section".into()))?;
                OperatorSpec::schrodinger(v.sample(domain)?)
            }
        };
        Ok(spec.with_order(self.operator.order_m))
    }

    pub fn engine(&self, domain: &GridDomain) -> Result<OperatorEngine> {
        build_engine(self.operator_spec(domain)?, domain)
    }

    pub fn corpus(&self, domain: &GridDomain) -> Result<Vec<NamedFunction>> {
        corpus::generate_corpus(&self.corpus, domain, self.singular_exponent())
    }

    fn needs_corpus(&self) -> bool {
        !matches!(self.experiment, ExperimentKind::KernelBounds | ExperimentKind::RhCertify)
    }

    /// Checks everything that can be checked without running the experiment.
    pub fn validate(&self) -> Result<()> {
        let domain = self.domain.build()?;
        self.norm_params()?;
        if self.norms.is_empty() {
            return Err(Error::Config("at least one [[norms]] entry is required".into()));
        }
        match (self.operator.kind, &self.potential) {
            (OperatorChoice::Laplacian, Some(_)) if self.experiment != ExperimentKind::RhCertify => {
                return Err(Error::Config("a [potential] section needs operator.kind = \"schrodinger\"".into()))
            }
            (_, Some(p)) => {
                p.sample(&domain)?;
            }
            (OperatorChoice::Schrodinger, None) => {
                return Err(Error::Config("a schrodinger operator needs a [potential] section".into()))
            }
            _ => {}
        }
        if self.experiment == ExperimentKind::RhCertify && self.potential.is_none() {
            return Err(Error::Config("rh_certify needs a [potential] section".into()));
        }
        self.family.build(&domain)?;
        if matches!(self.experiment, ExperimentKind::DirichletForward42 | ExperimentKind::TraceInverse42) {
            let h = self.heights.build(&domain)?;
            if h.len() < 5 {
                return Err(Error::Config("the Dirichlet experiments need at least 5 heights".into()));
            }
        }
        if self.needs_corpus() && self.input.grid.is_none() && self.input.field.is_none() {
            corpus::validate_spec(&self.corpus)?;
        }
        if !(self.trace.span > 1.0 && self.trace.k_count >= 2 && self.trace.inner_fraction > 0.0 && self.trace.inner_fraction <= 1.0) {
            return Err(Error::Config("trace needs span > 1, k_count ≥ 2 and inner_fraction in (0, 1]".into()));
        }
        if !(self.reverse_holder.q > 1.0) || self.reverse_holder.budget < 2 {
            return Err(Error::Config("reverse_holder needs q > 1 and budget ≥ 2".into()));
        }
        if self.times.values.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("times must be nonnegative".into()));
        }
        Ok(())
    }
}
