//! Discretized `L ∈ {-Δ, -Δ + V}` and its heat and Poisson semigroups.
//!
//! Periodic Laplacians are diagonalized by the FFT with exact multipliers
//! `|ξ|²`; everything else goes through a dense symmetric eigendecomposition
//! of the second-order central-difference matrix. Semigroups act by scaling
//! spectral coefficients, so the semigroup law holds to roundoff.

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{GridDomain, GridFunction, Index};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Largest `N^dim` accepted by the dense eigen route.
pub const EIGEN_BUDGET: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    Laplacian,
    Schrodinger(GridFunction),
}

/// Which semigroup a norm or check uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calculus {
    /// `e^{-tL}`
    Heat,
    /// `e^{-t√L}`
    Poisson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    /// Scaling exponent of the kernel bound: 2 for heat calculus, 1 when the
    /// engine is read as generating `e^{-t√L}`.
    pub order_m: f64,
    /// Candidate decay exponents for kernel-bound checks.
    pub epsilon_list: Vec<f64>,
    /// Explicit β values standing in for the supremum of admissible decay.
    pub theta_policy: Vec<f64>,
}

impl OperatorSpec {
    pub fn laplacian() -> Self {
        Self {
            kind: OperatorKind::Laplacian,
            order_m: 2.0,
            epsilon_list: vec![1.0],
            theta_policy: vec![1.0],
        }
    }

    pub fn schrodinger(potential: GridFunction) -> Self {
        Self {
            kind: OperatorKind::Schrodinger(potential),
            ..Self::laplacian()
        }
    }

    pub fn with_order(mut self, m: f64) -> Self {
        self.order_m = m;
        self
    }

    /// The semigroup matching `order_m`: Poisson for `m = 1`, heat otherwise.
    pub fn calculus(&self) -> Calculus {
        if self.order_m == 1.0 {
            Calculus::Poisson
        } else {
            Calculus::Heat
        }
    }

    pub fn potential(&self) -> Option<&GridFunction> {
        match &self.kind {
            OperatorKind::Laplacian => None,
            OperatorKind::Schrodinger(v) => Some(v),
        }
    }

    fn validate(&self, domain: &GridDomain) -> Result<()> {
        if !(self.order_m.is_finite() && self.order_m > 0.0) {
            return Err(Error::InvalidParams(format!(
                "order m must be positive, got {}",
                self.order_m
            )));
        }
        if let Some(v) = self.potential() {
            if v.domain() != domain {
                return Err(Error::DomainMismatch);
            }
            if v.min() < 0.0 {
                return Err(Error::InvalidPotential(format!(
                    "potential takes the negative value {}",
                    v.min()
                )));
            }
            if v.max() <= 0.0 {
                return Err(Error::InvalidPotential("potential vanishes identically".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone)]
struct FourierPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Angular frequency `π k / R` per axis index, Nyquist included.
    freqs: Vec<f64>,
    /// `|ξ|²` for every flat frequency index.
    multipliers: Vec<f64>,
}

impl std::fmt::Debug for FourierPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierPlan")
            .field("len", &self.multipliers.len())
            .finish()
    }
}

impl FourierPlan {
    fn new(domain: &GridDomain) -> Self {
        let n = domain.points_per_axis();
        let mut planner = FftPlanner::new();
        let r = domain.half_width();
        let freqs: Vec<f64> = (0..n)
            .map(|k| {
                let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
                PI * kk / r
            })
            .collect();
        let dim = domain.dim();
        let multipliers = (0..domain.len())
            .map(|flat| {
                let idx = domain.multi_index(flat);
                idx[..dim].iter().map(|&k| freqs[k] * freqs[k]).sum()
            })
            .collect();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            freqs,
            multipliers,
        }
    }

    /// In-place multi-dimensional transform, one axis at a time.
    fn transform(&self, domain: &GridDomain, buf: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        let n = domain.points_per_axis();
        let dim = domain.dim();
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            if stride == 1 {
                for line in buf.chunks_mut(n) {
                    plan.process(line);
                }
                continue;
            }
            let block = stride * n;
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for outer in 0..buf.len() / block {
                for inner in 0..stride {
                    let base = outer * block + inner;
                    for (k, v) in line.iter_mut().enumerate() {
                        *v = buf[base + k * stride];
                    }
                    plan.process(&mut line);
                    for (k, v) in line.iter().enumerate() {
                        buf[base + k * stride] = *v;
                    }
                }
            }
        }
        if inverse {
            let scale = 1.0 / buf.len() as f64;
            for v in buf.iter_mut() {
                *v *= scale;
            }
        }
    }

    fn analyze(&self, domain: &GridDomain, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(domain, &mut buf, false);
        buf
    }

    fn synthesize(&self, domain: &GridDomain, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.transform(domain, &mut buf, true);
        buf.into_iter().map(|c| c.re).collect()
    }
}

#[derive(Debug, Clone)]
enum Spectrum {
    Fourier(FourierPlan),
    /// Eigenvalues ascending; columns of `vectors` are Euclidean-orthonormal.
    Eigen {
        values: Vec<f64>,
        vectors: DMatrix<f64>,
    },
}

/// Spectral coefficients of a grid function in an engine's eigenbasis.
#[derive(Debug, Clone)]
pub enum Coefficients {
    Fourier(Vec<Complex64>),
    Eigen(DVector<f64>),
}

/// Which kernel [`OperatorEngine::kernel_column`] extracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Heat,
    Poisson,
    /// `t ∂_t P_t(·, y)` by central difference with step `t / 100`.
    PoissonTimeDerivative,
    /// `t |∇_x P_t(·, y)|`.
    PoissonGradient,
}

/// Envelope a kernel column is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum KernelBound {
    /// `C t^{-n/m} (1 + |x-y| / t^{1/m})^{-(n+ε)}`
    Algebraic { c: f64, m: f64, epsilon: f64 },
    /// `C t / (t² + |x-y|²)^{(n+1)/2}`
    PoissonShape { c: f64 },
}

impl KernelBound {
    pub fn eval(&self, n: usize, t: f64, dist: f64) -> f64 {
        let nf = n as f64;
        match *self {
            KernelBound::Algebraic { c, m, epsilon } => {
                let scale = t.powf(1.0 / m);
                c * t.powf(-nf / m) * (1.0 + dist / scale).powf(-(nf + epsilon))
            }
            KernelBound::PoissonShape { c } => c * t / (t * t + dist * dist).powf((nf + 1.0) / 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundReport {
    pub kind: KernelKind,
    pub bound: KernelBound,
    pub max_ratio: f64,
    pub argmax_t: f64,
    pub argmax_x: Vec<f64>,
    pub argmax_y: Vec<f64>,
    pub pass: bool,
}

/// A discretized operator together with its spectral representation.
#[derive(Debug, Clone)]
pub struct OperatorEngine {
    spec: OperatorSpec,
    domain: GridDomain,
    spectrum: Spectrum,
}

impl OperatorEngine {
    pub fn build(spec: OperatorSpec, domain: &GridDomain) -> Result<Self> {
        spec.validate(domain)?;
        let spectrum = if matches!(spec.kind, OperatorKind::Laplacian) && domain.is_periodic() {
            Spectrum::Fourier(FourierPlan::new(domain))
        } else {
            let (values, vectors) = eigen_decompose(&spec, domain)?;
            Spectrum::Eigen { values, vectors }
        };
        Ok(Self {
            spec,
            domain: *domain,
            spectrum,
        })
    }

    /// Reassembles an eigen-route engine from a stored decomposition.
    pub(crate) fn from_parts(
        spec: OperatorSpec,
        domain: &GridDomain,
        values: Vec<f64>,
        vectors: DMatrix<f64>,
    ) -> Result<Self> {
        spec.validate(domain)?;
        if values.len() != domain.len() || vectors.shape() != (domain.len(), domain.len()) {
            return Err(Error::Config("cached decomposition has the wrong size".into()));
        }
        Ok(Self {
            spec,
            domain: *domain,
            spectrum: Spectrum::Eigen { values, vectors },
        })
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    /// The same spectrum with a different order `m`, which switches between
    /// heat (`m ≠ 1`) and Poisson (`m = 1`) calculus.
    pub fn with_order(&self, m: f64) -> Result<Self> {
        let spec = self.spec.clone().with_order(m);
        spec.validate(&self.domain)?;
        Ok(Self { spec, ..self.clone() })
    }

    pub fn is_fourier(&self) -> bool {
        matches!(self.spectrum, Spectrum::Fourier(_))
    }

    pub(crate) fn eigen_parts(&self) -> Option<(&[f64], &DMatrix<f64>)> {
        match &self.spectrum {
            Spectrum::Eigen { values, vectors } => Some((values, vectors)),
            Spectrum::Fourier(_) => None,
        }
    }

    /// All eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match &self.spectrum {
            Spectrum::Fourier(plan) => {
                let mut v = plan.multipliers.clone();
                v.sort_by(f64::total_cmp);
                v
            }
            Spectrum::Eigen { values, .. } => values.clone(),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// The `j`-th eigenfunction normalized in the grid inner product
    /// (eigen route only).
    pub fn eigenfunction(&self, j: usize) -> Option<GridFunction> {
        match &self.spectrum {
            Spectrum::Eigen { vectors, .. } if j < vectors.ncols() => {
                let scale = 1.0 / self.domain.cell_volume().sqrt();
                Some(GridFunction::from_raw(
                    self.domain,
                    vectors.column(j).iter().map(|v| v * scale).collect(),
                ))
            }
            _ => None,
        }
    }

    fn check_domain(&self, f: &GridFunction) -> Result<()> {
        if f.domain() != &self.domain {
            return Err(Error::DomainMismatch);
        }
        Ok(())
    }

    pub fn analyze(&self, f: &GridFunction) -> Result<Coefficients> {
        self.check_domain(f)?;
        Ok(match &self.spectrum {
            Spectrum::Fourier(plan) => Coefficients::Fourier(plan.analyze(&self.domain, f.values())),
            Spectrum::Eigen { vectors, .. } => {
                Coefficients::Eigen(vectors.tr_mul(&DVector::from_column_slice(f.values())))
            }
        })
    }

    /// Synthesizes `Σ m(μ_j) c_j φ_j`.
    pub fn synthesize(&self, coeffs: &Coefficients, m: impl Fn(f64) -> f64) -> GridFunction {
        let values = match (&self.spectrum, coeffs) {
            (Spectrum::Fourier(plan), Coefficients::Fourier(c)) => {
                let buf = c
                    .iter()
                    .zip(&plan.multipliers)
                    .map(|(z, &mu)| z * m(mu))
                    .collect();
                plan.synthesize(&self.domain, buf)
            }
            (Spectrum::Eigen { values, vectors }, Coefficients::Eigen(c)) => {
                let scaled = DVector::from_iterator(
                    c.len(),
                    c.iter().zip(values).map(|(a, &mu)| a * m(mu)),
                );
                (vectors * scaled).as_slice().to_vec()
            }
            _ => panic!("coefficients do not belong to this engine"),
        };
        GridFunction::from_raw(self.domain, values)
    }

    pub fn apply_multiplier(&self, f: &GridFunction, m: impl Fn(f64) -> f64) -> Result<GridFunction> {
        Ok(self.synthesize(&self.analyze(f)?, m))
    }

    fn check_time(t: f64) -> Result<()> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidParams(format!("time must be nonnegative, got {t}")));
        }
        Ok(())
    }

    /// `e^{-tL} f`; `t = 0` returns `f` unchanged.
    pub fn heat_apply(&self, t: f64, f: &GridFunction) -> Result<GridFunction> {
        Self::check_time(t)?;
        self.check_domain(f)?;
        if t == 0.0 {
            return Ok(f.clone());
        }
        self.apply_multiplier(f, |mu| (-t * mu).exp())
    }

    /// `e^{-t√L} f`; `t = 0` returns `f` unchanged.
    pub fn poisson_apply(&self, t: f64, f: &GridFunction) -> Result<GridFunction> {
        Self::check_time(t)?;
        self.check_domain(f)?;
        if t == 0.0 {
            return Ok(f.clone());
        }
        self.apply_multiplier(f, |mu| (-t * mu.max(0.0).sqrt()).exp())
    }

    /// `∂_t e^{-t√L} f`, exact in the spectral representation.
    pub fn poisson_time_derivative(&self, t: f64, f: &GridFunction) -> Result<GridFunction> {
        Self::check_time(t)?;
        self.apply_multiplier(f, |mu| {
            let s = mu.max(0.0).sqrt();
            -s * (-t * s).exp()
        })
    }

    /// The semigroup of `calculus` at time `t`.
    pub fn semigroup_apply(&self, calculus: Calculus, t: f64, f: &GridFunction) -> Result<GridFunction> {
        match calculus {
            Calculus::Heat => self.heat_apply(t, f),
            Calculus::Poisson => self.poisson_apply(t, f),
        }
    }

    /// Same as [`semigroup_apply`](Self::semigroup_apply) on precomputed coefficients.
    pub fn semigroup_from(&self, calculus: Calculus, t: f64, c: &Coefficients) -> GridFunction {
        match calculus {
            Calculus::Heat => self.synthesize(c, |mu| (-t * mu).exp()),
            Calculus::Poisson => self.synthesize(c, |mu| (-t * mu.max(0.0).sqrt()).exp()),
        }
    }

    /// `L f` in the engine's discretization.
    pub fn apply_generator(&self, f: &GridFunction) -> Result<GridFunction> {
        self.apply_multiplier(f, |mu| mu)
    }

    /// Independent route to `e^{-t√L} f` through the subordination identity
    ///
    /// `e^{-t√L} = (2/√π) ∫_0^∞ e^{-w²} e^{-(t²/4w²) L} dw`,
    ///
    /// discretized by the trapezoid rule in `u = ln w` on `[-21, 3.5]` with
    /// `nodes` points, each node costing one heat application. The result is
    /// compared with the `nodes / 2` rule and rejected if they differ by more
    /// than `1e-6 · sup|f|`. Intended as an oracle, not a production path.
    pub fn poisson_via_subordination(&self, t: f64, f: &GridFunction, nodes: usize) -> Result<GridFunction> {
        Self::check_time(t)?;
        self.check_domain(f)?;
        if nodes < 50 {
            return Err(Error::InvalidParams(format!(
                "subordination needs at least 50 nodes, got {nodes}"
            )));
        }
        if t == 0.0 {
            return Ok(f.clone());
        }
        let coeffs = self.analyze(f)?;
        let fine = self.subordination_rule(t, &coeffs, nodes);
        let coarse = self.subordination_rule(t, &coeffs, nodes / 2);
        let scale = f.sup_norm().max(f64::MIN_POSITIVE);
        let diff = fine.sub(&coarse)?.sup_norm() / scale;
        if diff > 1e-6 {
            return Err(Error::QuadratureNonconvergence { difference: diff });
        }
        Ok(fine)
    }

    fn subordination_rule(&self, t: f64, coeffs: &Coefficients, nodes: usize) -> GridFunction {
        const LO: f64 = -21.0;
        const HI: f64 = 3.5;
        let du = (HI - LO) / (nodes - 1) as f64;
        let terms = exec::map_range(nodes, |i| {
            let u = LO + i as f64 * du;
            let w = u.exp();
            let end = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
            let weight = end * du * 2.0 / PI.sqrt() * (-w * w).exp() * w;
            let s = t * t / (4.0 * w * w);
            self.semigroup_from(Calculus::Heat, s, coeffs).scale(weight)
        });
        let mut acc = GridFunction::zeros(self.domain);
        for term in &terms {
            acc = acc.add(term).expect("same domain");
        }
        acc
    }

    /// Discrete delta at node `y`, scaled by `h^{-dim}`.
    pub fn delta(&self, y: &Index) -> GridFunction {
        let mut v = vec![0.0; self.domain.len()];
        v[self.domain.flat_index(y)] = 1.0 / self.domain.cell_volume();
        GridFunction::from_raw(self.domain, v)
    }

    /// The kernel `K_t(·, y)` of the requested kind.
    pub fn kernel_column(&self, t: f64, y: &Index, kind: KernelKind) -> Result<GridFunction> {
        let delta = self.delta(y);
        match kind {
            KernelKind::Heat => self.heat_apply(t, &delta),
            KernelKind::Poisson => self.poisson_apply(t, &delta),
            KernelKind::PoissonTimeDerivative => {
                let dt = t / 100.0;
                let plus = self.poisson_apply(t + dt, &delta)?;
                let minus = self.poisson_apply(t - dt, &delta)?;
                Ok(plus.sub(&minus)?.scale(t / (2.0 * dt)))
            }
            KernelKind::PoissonGradient => {
                let col = self.poisson_apply(t, &delta)?;
                let grads = gradient(&col);
                let mut mag = vec![0.0; self.domain.len()];
                for g in &grads {
                    for (m, v) in mag.iter_mut().zip(g.values()) {
                        *m += v * v;
                    }
                }
                Ok(GridFunction::from_raw(
                    self.domain,
                    mag.into_iter().map(|m| t * m.sqrt()).collect(),
                ))
            }
        }
    }

    /// Largest ratio `|K_t(x, y)| / bound(t, |x - y|)` over `t ∈ t_list`,
    /// `y ∈ ys` and every node `x`. Passes iff the ratio is at most 1.
    pub fn check_kernel_bound(
        &self,
        t_list: &[f64],
        ys: &[Index],
        kind: KernelKind,
        bound: KernelBound,
    ) -> Result<KernelBoundReport> {
        let pairs: Vec<(f64, Index)> = t_list
            .iter()
            .flat_map(|&t| ys.iter().map(move |&y| (t, y)))
            .collect();
        let rows = exec::map(&pairs, |&(t, y)| -> Result<(f64, usize, f64, Index)> {
            let col = self.kernel_column(t, &y, kind)?;
            Ok(max_ratio(&self.domain, &col, &y, t, &bound)
                .map(|(ratio, x)| (ratio, x, t, y))
                .unwrap_or((0.0, 0, t, y)))
        });
        let mut best = (0.0, 0usize, t_list.first().copied().unwrap_or(0.0), ys.first().copied().unwrap_or_default());
        for row in rows {
            let row = row?;
            if row.0 > best.0 {
                best = row;
            }
        }
        let dim = self.domain.dim();
        let yp = node_point(&self.domain, &best.3);
        Ok(KernelBoundReport {
            kind,
            bound,
            max_ratio: best.0,
            argmax_t: best.2,
            argmax_x: self.domain.point(best.1)[..dim].to_vec(),
            argmax_y: yp[..dim].to_vec(),
            pass: best.0 <= 1.0,
        })
    }
}

/// `(4πt)^{-n/2} e^{-d²/4t}`, the heat kernel of `-Δ` on `ℝⁿ`.
pub fn gaussian_kernel(n: usize, t: f64, dist: f64) -> f64 {
    (4.0 * PI * t).powf(-(n as f64) / 2.0) * (-dist * dist / (4.0 * t)).exp()
}

/// Relative deviation of a kernel column from a reference kernel over the
/// nodes where the comparison is meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelDeviation {
    pub t: f64,
    pub max_rel_error: f64,
    pub compared_nodes: usize,
}

/// Compares the heat kernel column at `y` with [`gaussian_kernel`].
///
/// Only nodes are compared where the periodic images of the Gaussian are
/// below `tol / 4` of it (per axis, `|x_a - y_a| ≤ R - t ln(4/tol) / R`) and
/// where the Gaussian is above `1e3 ε / tol` of its peak, so that neither the
/// wrap-around nor roundoff can account for a deviation of `tol`.
pub fn heat_kernel_deviation(engine: &OperatorEngine, t: f64, y: &Index, tol: f64) -> Result<KernelDeviation> {
    if !matches!(engine.spec().kind, OperatorKind::Laplacian) {
        return Err(Error::InvalidParams("the Gaussian reference needs the Laplacian".into()));
    }
    let domain = engine.domain();
    let col = engine.kernel_column(t, y, KernelKind::Heat)?;
    let yp = node_point(domain, y);
    let r = domain.half_width();
    let reach = if domain.is_periodic() { r - t * (4.0 / tol).ln() / r } else { f64::INFINITY };
    let floor = (1e3 * f64::EPSILON / tol).ln();
    let n = domain.dim();
    let mut worst = 0.0f64;
    let mut compared = 0;
    for (i, v) in col.values().iter().enumerate() {
        let disp = domain.displacement(i, &yp);
        let d2: f64 = disp[..n].iter().map(|a| a * a).sum();
        if disp[..n].iter().any(|a| a.abs() > reach) || -d2 / (4.0 * t) < floor {
            continue;
        }
        let g = gaussian_kernel(n, t, d2.sqrt());
        worst = worst.max((v - g).abs() / g);
        compared += 1;
    }
    Ok(KernelDeviation { t, max_rel_error: worst, compared_nodes: compared })
}

/// Relative deviation of `col` from `c t / (t² + |x-y|²)^{(n+1)/2}` over
/// nodes with `|x - y| ≤ window`.
pub fn poisson_shape_deviation(col: &GridFunction, y: &Index, t: f64, c: f64, window: f64) -> KernelDeviation {
    let domain = col.domain();
    let yp = node_point(domain, y);
    let shape = KernelBound::PoissonShape { c };
    let mut worst = 0.0f64;
    let mut compared = 0;
    for (i, v) in col.values().iter().enumerate() {
        let d = domain.distance(i, &yp);
        if d <= window {
            let s = shape.eval(domain.dim(), t, d);
            worst = worst.max((v - s).abs() / s);
            compared += 1;
        }
    }
    KernelDeviation { t, max_rel_error: worst, compared_nodes: compared }
}

fn node_point(domain: &GridDomain, idx: &Index) -> [f64; 3] {
    domain.point(domain.flat_index(idx))
}

fn max_ratio(
    domain: &GridDomain,
    col: &GridFunction,
    y: &Index,
    t: f64,
    bound: &KernelBound,
) -> Option<(f64, usize)> {
    let yp = node_point(domain, y);
    let n = domain.dim();
    col.values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let b = bound.eval(n, t, domain.distance(i, &yp));
            (if b > 0.0 { v.abs() / b } else { 0.0 }, i)
        })
        .filter(|(r, _)| r.is_finite())
        .max_by(|a, b| a.0.total_cmp(&b.0))
}

/// Least-squares constant `c` fitting `col ≈ c t / (t² + |x-y|²)^{(n+1)/2}`
/// over nodes with `|x - y| ≤ window`.
pub fn fit_poisson_constant(col: &GridFunction, y: &Index, t: f64, window: f64) -> f64 {
    let domain = col.domain();
    let yp = node_point(domain, y);
    let shape = KernelBound::PoissonShape { c: 1.0 };
    let (mut num, mut den) = (0.0, 0.0);
    for (i, v) in col.values().iter().enumerate() {
        let d = domain.distance(i, &yp);
        if d <= window {
            let s = shape.eval(domain.dim(), t, d);
            num += v * s;
            den += s * s;
        }
    }
    num / den
}

/// Spatial gradient: spectral on periodic domains, central differences with
/// zero extension on truncated ones.
pub fn gradient(u: &GridFunction) -> Vec<GridFunction> {
    let domain = *u.domain();
    let dim = domain.dim();
    let n = domain.points_per_axis();
    if domain.is_periodic() {
        let plan = FourierPlan::new(&domain);
        let hat = plan.analyze(&domain, u.values());
        (0..dim)
            .map(|axis| {
                let buf = hat
                    .iter()
                    .enumerate()
                    .map(|(flat, z)| {
                        let k = domain.multi_index(flat)[axis];
                        if k == n / 2 {
                            Complex64::new(0.0, 0.0)
                        } else {
                            z * Complex64::new(0.0, plan.freqs[k])
                        }
                    })
                    .collect();
                GridFunction::from_raw(domain, plan.synthesize(&domain, buf))
            })
            .collect()
    } else {
        let h = domain.spacing();
        (0..dim)
            .map(|axis| {
                let stride = n.pow((dim - 1 - axis) as u32);
                let values = (0..domain.len())
                    .map(|flat| {
                        let k = domain.multi_index(flat)[axis];
                        let up = if k + 1 < n { u.values()[flat + stride] } else { 0.0 };
                        let down = if k > 0 { u.values()[flat - stride] } else { 0.0 };
                        (up - down) / (2.0 * h)
                    })
                    .collect();
                GridFunction::from_raw(domain, values)
            })
            .collect()
    }
}

/// Dense matrix of `-Δ_h + V` with the domain's boundary semantics.
pub fn operator_matrix(spec: &OperatorSpec, domain: &GridDomain) -> DMatrix<f64> {
    let len = domain.len();
    let n = domain.points_per_axis();
    let dim = domain.dim();
    let inv_h2 = 1.0 / (domain.spacing() * domain.spacing());
    let mut m = DMatrix::<f64>::zeros(len, len);
    for flat in 0..len {
        let idx = domain.multi_index(flat);
        m[(flat, flat)] = 2.0 * dim as f64 * inv_h2;
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            let k = idx[axis];
            if k + 1 < n {
                m[(flat, flat + stride)] -= inv_h2;
            } else if domain.is_periodic() {
                m[(flat, flat + stride - n * stride)] -= inv_h2;
            }
            if k > 0 {
                m[(flat, flat - stride)] -= inv_h2;
            } else if domain.is_periodic() {
                m[(flat, flat + n * stride - stride)] -= inv_h2;
            }
        }
        if let Some(v) = spec.potential() {
            m[(flat, flat)] += v.values()[flat];
        }
    }
    m
}

fn eigen_decompose(spec: &OperatorSpec, domain: &GridDomain) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let len = domain.len();
    if len > EIGEN_BUDGET {
        return Err(Error::BudgetExceeded {
            route: "dense eigen",
            points: len,
            limit: EIGEN_BUDGET,
        });
    }
    let matrix = operator_matrix(spec, domain);
    let eig = nalgebra::SymmetricEigen::try_new(matrix, f64::EPSILON, 1_000_000)
        .ok_or_else(|| Error::EigenFailure("symmetric QR iteration did not converge".into()))?;
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    let vectors = DMatrix::from_fn(len, len, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}
