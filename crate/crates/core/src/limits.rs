//! Long-time limits of the semigroup, fixed-point membership, and power-law
//! decay fits for `e^{-tL} f` on Morrey data.

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{BallFamily, GridDomain, GridFunction};
use crate::norms::{campanato_operator, NormParams};
use crate::quadrature::{abs_pow, geomspace, linear_fit};
use crate::spectral::OperatorEngine;
use serde::{Deserialize, Serialize};

/// Deviations below this multiple of `ε · sup|f|` are treated as roundoff.
const ROUNDOFF_FLOOR: f64 = 1e3 * f64::EPSILON;
/// Largest log-log residual for a fit to count as a power law.
pub const POWER_LAW_RESIDUAL: f64 = 0.05;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitDiagnostics {
    pub t_schedule: Vec<f64>,
    pub sup_deviations: Vec<f64>,
    pub converged: bool,
    /// First index `j` with `deviation[j + 1] > deviation[j]`, if any.
    pub offending_pair: Option<(usize, usize)>,
    #[serde(skip)]
    pub limit: Option<GridFunction>,
    pub limit_sup: f64,
}

/// Geometric times from `(4h)^m` to `(R/4)^m`, the range where kernels are
/// resolved and unaffected by the box.
pub fn resolved_times(domain: &GridDomain, m: f64, count: usize) -> Vec<f64> {
    let lo = (4.0 * domain.spacing()).powf(m);
    let hi = (domain.half_width() / 4.0).powf(m);
    geomspace(lo, hi, count)
}

fn check_increasing(ts: &[f64]) -> Result<()> {
    if ts.is_empty() || ts[0] <= 0.0 || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("time schedule must be positive and increasing".into()));
    }
    Ok(())
}

/// Approximates `σ(f) = lim_{t→∞} S_t f` by the semigroup at the last time of
/// a geometric schedule; converged iff the successive sup-differences are
/// nonincreasing and the last one is at most `tol · sup|f|`.
pub fn sigma_limit(
    engine: &OperatorEngine,
    f: &GridFunction,
    t_schedule: &[f64],
    tol: f64,
) -> Result<LimitDiagnostics> {
    check_increasing(t_schedule)?;
    if t_schedule.len() < 2 {
        return Err(Error::InvalidParams("schedule needs at least two times".into()));
    }
    let ratios: Vec<f64> = t_schedule.windows(2).map(|w| w[1] / w[0]).collect();
    if ratios.iter().any(|r| (r / ratios[0] - 1.0).abs() > 1e-6) {
        return Err(Error::InvalidParams("time schedule must be geometric".into()));
    }
    let m = engine.spec().order_m;
    let last = *t_schedule.last().expect("nonempty");
    let need = (engine.domain().half_width() / 2.0).powf(m);
    if last < need * (1.0 - 1e-12) {
        return Err(Error::InvalidParams(format!(
            "final time {last} is below (R/2)^m = {need}"
        )));
    }
    let calculus = engine.spec().calculus();
    let coeffs = engine.analyze(f)?;
    let states = exec::map(t_schedule, |&t| engine.semigroup_from(calculus, t, &coeffs));
    let sup_deviations: Vec<f64> = states
        .windows(2)
        .map(|w| w[0].sub(&w[1]).expect("same domain").sup_norm())
        .collect();
    let scale = f.sup_norm();
    let floor = ROUNDOFF_FLOOR * scale;
    let offending_pair = sup_deviations
        .windows(2)
        .position(|w| w[1] > w[0] * (1.0 + 1e-9) + floor)
        .map(|j| (j, j + 1));
    let converged = offending_pair.is_none()
        && *sup_deviations.last().expect("nonempty") <= tol * scale;
    let limit = states.into_iter().last().expect("nonempty");
    Ok(LimitDiagnostics {
        t_schedule: t_schedule.to_vec(),
        sup_deviations,
        converged,
        offending_pair,
        limit_sup: limit.sup_norm(),
        limit: Some(limit),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    pub max_deviation: f64,
}

/// Whether `S_t f = f` for every `t` in `t_list`, i.e.
/// `max_t sup|S_t f - f| ≤ tol (1 + sup|f|)`.
pub fn kernel_membership(
    engine: &OperatorEngine,
    f: &GridFunction,
    t_list: &[f64],
    tol: f64,
) -> Result<Membership> {
    check_increasing(t_list)?;
    if t_list.last().expect("nonempty") / t_list[0] < 100.0 * (1.0 - 1e-12) {
        return Err(Error::InvalidParams("time list must span at least two decades".into()));
    }
    let calculus = engine.spec().calculus();
    let coeffs = engine.analyze(f)?;
    let devs = exec::map(t_list, |&t| {
        engine
            .semigroup_from(calculus, t, &coeffs)
            .sub(f)
            .expect("same domain")
            .sup_norm()
    });
    let max_deviation = devs.into_iter().fold(0.0, f64::max);
    Ok(Membership {
        member: max_deviation <= tol * (1.0 + f.sup_norm()),
        max_deviation,
    })
}

/// Least-squares power-law fit `log y ≈ slope · log t + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub expected_slope: f64,
    pub usable_points: usize,
    pub max_residual: f64,
    /// False when the log-log residual exceeds [`POWER_LAW_RESIDUAL`].
    pub power_law: bool,
}

impl DecayFit {
    pub fn relative_slope_error(&self) -> f64 {
        (self.slope - self.expected_slope).abs() / self.expected_slope.abs()
    }
}

fn expected_exponent(engine: &OperatorEngine, params: &NormParams) -> f64 {
    let n = engine.domain().dim() as f64;
    (params.lambda - n) / (params.p * params.m)
}

fn fit_decay(ts: &[f64], ys: &[f64], scale: f64, expected_slope: f64) -> Result<DecayFit> {
    let floor = ROUNDOFF_FLOOR * scale;
    let (lx, ly): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > floor && y > 0.0)
        .map(|(&t, &y)| (t.ln(), y.ln()))
        .unzip();
    if lx.len() < 4 {
        return Err(Error::InsufficientDynamicRange { usable: lx.len() });
    }
    let (slope, intercept, max_residual) = linear_fit(&lx, &ly);
    Ok(DecayFit {
        slope,
        intercept,
        expected_slope,
        usable_points: lx.len(),
        max_residual,
        power_law: max_residual <= POWER_LAW_RESIDUAL,
    })
}

/// Fits the decay of `sup|S_t f - S_{Kt} f|` against `t`; the reference
/// exponent is `(λ - n) / (p m)`.
pub fn check_semigroup_gap_decay(
    engine: &OperatorEngine,
    f: &GridFunction,
    params: &NormParams,
    k: f64,
    t_grid: &[f64],
) -> Result<DecayFit> {
    if !(k > 1.0) {
        return Err(Error::InvalidParams(format!("K must exceed 1, got {k}")));
    }
    check_increasing(t_grid)?;
    let calculus = engine.spec().calculus();
    let coeffs = engine.analyze(f)?;
    let devs = exec::map(t_grid, |&t| {
        let a = engine.semigroup_from(calculus, t, &coeffs);
        let b = engine.semigroup_from(calculus, k * t, &coeffs);
        a.sub(&b).expect("same domain").sup_norm()
    });
    fit_decay(t_grid, &devs, f.sup_norm(), expected_exponent(engine, params))
}

/// Fits the decay of `sup|S_t f|` against `t`.
pub fn check_linfty_bound(
    engine: &OperatorEngine,
    f: &GridFunction,
    params: &NormParams,
    t_grid: &[f64],
) -> Result<DecayFit> {
    check_increasing(t_grid)?;
    let calculus = engine.spec().calculus();
    let coeffs = engine.analyze(f)?;
    let sups = exec::map(t_grid, |&t| engine.semigroup_from(calculus, t, &coeffs).sup_norm());
    fit_decay(t_grid, &sups, f.sup_norm(), expected_exponent(engine, params))
}

/// Ratio of `∫ |S_t f - f|^p / (t^{1/m} + |x|)^{n+δ} dx` to
/// `t^{-(n-λ+δ)/m} ‖f‖^p` with `‖f‖` the operator Campanato seminorm.
pub fn check_weighted_difference(
    engine: &OperatorEngine,
    f: &GridFunction,
    params: &NormParams,
    family: &BallFamily,
    t: f64,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParams(format!("delta must be positive, got {delta}")));
    }
    let seminorm = campanato_operator(f, engine, params, family)?.value;
    if seminorm <= 1e-10 * f.sup_norm() || seminorm == 0.0 {
        return Err(Error::DegenerateNormalizer);
    }
    let domain = engine.domain();
    let n = domain.dim() as f64;
    let m = params.m;
    let diff = engine.semigroup_apply(engine.spec().calculus(), t, f)?.sub(f)?;
    let origin = [0.0; 3];
    let scale = t.powf(1.0 / m);
    let lhs = domain.cell_volume()
        * diff
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| abs_pow(v, params.p) / (scale + domain.distance(i, &origin)).powf(n + delta))
            .sum::<f64>();
    let rhs = t.powf(-(n - params.lambda + delta) / m) * seminorm.powf(params.p);
    Ok(lhs / rhs)
}

/// `max_t (sup|S_t f| - e^{-t min V} sup|f|)`; nonpositive (up to roundoff)
/// when the semigroup is dominated by the shifted free one.
pub fn shifted_domination_margin(engine: &OperatorEngine, f: &GridFunction, t_grid: &[f64]) -> Result<f64> {
    let shift = engine.spec().potential().map(|v| v.min()).unwrap_or(0.0);
    let coeffs = engine.analyze(f)?;
    let calculus = engine.spec().calculus();
    let sup = f.sup_norm();
    let margins = exec::map(t_grid, |&t| {
        engine.semigroup_from(calculus, t, &coeffs).sup_norm() - (-t * shift).exp() * sup
    });
    Ok(margins.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample, sample_regularized, Boundary};
    use crate::spectral::OperatorSpec;

    fn periodic(n: usize, r: f64) -> GridDomain {
        GridDomain::new(1, r, n, Boundary::Periodic).unwrap()
    }

    #[test]
    fn periodic_limit_is_the_mean() {
        let d = periodic(64, std::f64::consts::PI);
        let e = OperatorEngine::build(OperatorSpec::laplacian(), &d).unwrap();
        let f = sample(&d, |x| 0.7 + x[0].sin() + 0.3 * (2.0 * x[0]).cos()).unwrap();
        let ts = geomspace(0.5, 40.0, 12);
        let diag = sigma_limit(&e, &f, &ts, 1e-8).unwrap();
        assert!(diag.converged);
        let lim = diag.limit.unwrap();
        assert!(lim.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
        // gap 1: deviation ratio tracks e^{-(t_{j+1}-t_j)} for the slowest mode
        let d0 = diag.sup_deviations[7];
        let pred = (-ts[7]).exp() - (-ts[8]).exp();
        assert!((d0 - pred).abs() / pred < 1e-6);
    }

    #[test]
    fn zero_function_converges_immediately() {
        let d = periodic(32, 2.0);
        let e = OperatorEngine::build(OperatorSpec::laplacian(), &d).unwrap();
        let z = GridFunction::zeros(d);
        let diag = sigma_limit(&e, &z, &geomspace(0.1, 10.0, 5), 1e-10).unwrap();
        assert!(diag.converged);
        assert_eq!(diag.sup_deviations[0], 0.0);
        assert!(kernel_membership(&e, &z, &[0.1, 1.0, 10.0], 1e-10).unwrap().member);
    }

    #[test]
    fn schedule_validation() {
        let d = periodic(32, 2.0);
        let e = OperatorEngine::build(OperatorSpec::laplacian(), &d).unwrap();
        let f = GridFunction::constant(d, 1.0);
        assert!(sigma_limit(&e, &f, &[0.1, 0.2, 0.5], 1e-6).is_err());
        assert!(sigma_limit(&e, &f, &[0.01, 0.1], 1e-6).is_err());
        assert!(kernel_membership(&e, &f, &[1.0, 2.0], 1e-6).is_err());
    }

    #[test]
    fn membership_constant_vs_schrodinger() {
        let d = periodic(32, 2.0);
        let e = OperatorEngine::build(OperatorSpec::laplacian(), &d).unwrap();
        let one = GridFunction::constant(d, 1.0);
        assert!(kernel_membership(&e, &one, &[0.1, 1.0, 10.0], 1e-10).unwrap().member);

        let dd = GridDomain::new(1, 2.0, 32, Boundary::TruncatedDirichlet).unwrap();
        let s = OperatorEngine::build(OperatorSpec::schrodinger(GridFunction::constant(dd, 1.0)), &dd).unwrap();
        let m = kernel_membership(&s, &GridFunction::constant(dd, 1.0), &[0.1, 1.0, 10.0], 1e-6).unwrap();
        assert!(!m.member);
        assert!(m.max_deviation > 0.5);
    }

    #[test]
    fn eigenfunction_gap_matches_scalar_oracle() {
        let d = GridDomain::new(1, 3.0, 64, Boundary::TruncatedDirichlet).unwrap();
        let e = OperatorEngine::build(OperatorSpec::laplacian(), &d).unwrap();
        let phi = e.eigenfunction(2).unwrap();
        let mu = e.eigenvalues()[2];
        let params = NormParams::new(2.0, 0.5, 2.0, 1).unwrap();
        let ts = geomspace(1e-3, 1e-1, 12);
        let fit = check_semigroup_gap_decay(&e, &phi, &params, 2.0, &ts).unwrap();
        let (lx, ly): (Vec<f64>, Vec<f64>) = ts
            .iter()
            .map(|&t| (t.ln(), (((-t * mu).exp() - (-2.0 * t * mu).exp()) * phi.sup_norm()).ln()))
            .unzip();
        let (slope, intercept, _) = linear_fit(&lx, &ly);
        assert!((fit.slope - slope).abs() < 1e-8);
        assert!((fit.intercept - intercept).abs() < 1e-8);
    }

    #[test]
    fn eigenfunction_linfty_is_not_a_power_law() {
        let d = GridDomain::new(1, 3.0, 64, Boundary::TruncatedDirichlet).unwrap();
        let e = OperatorEngine::build(OperatorSpec::laplacian(), &d).unwrap();
        let phi = e.eigenfunction(4).unwrap();
        let params = NormParams::new(2.0, 0.5, 2.0, 1).unwrap();
        let fit = check_linfty_bound(&e, &phi, &params, &geomspace(0.01, 10.0, 16)).unwrap();
        assert!(!fit.power_law);
    }

    #[test]
    fn zero_function_has_no_dynamic_range() {
        let d = periodic(64, 4.0);
        let e = OperatorEngine::build(OperatorSpec::laplacian(), &d).unwrap();
        let params = NormParams::new(2.0, 0.5, 2.0, 1).unwrap();
        let z = GridFunction::zeros(d);
        let ts = resolved_times(&d, 2.0, 10);
        assert!(matches!(
            check_linfty_bound(&e, &z, &params, &ts),
            Err(Error::InsufficientDynamicRange { .. })
        ));
        assert!(matches!(
            check_semigroup_gap_decay(&e, &z, &params, 2.0, &ts),
            Err(Error::InsufficientDynamicRange { .. })
        ));
    }

    #[test]
    fn weighted_difference_degenerate_and_stable() {
        let d = periodic(1024, 8.0);
        let e = OperatorEngine::build(OperatorSpec::laplacian(), &d).unwrap();
        let fam = BallFamily::default_for(&d);
        let params = NormParams::new(2.0, 0.5, 2.0, 1).unwrap();
        let one = GridFunction::constant(d, 1.0);
        assert!(matches!(
            check_weighted_difference(&e, &one, &params, &fam, 0.1, 0.5),
            Err(Error::DegenerateNormalizer)
        ));
        assert!(matches!(
            check_weighted_difference(&e, &GridFunction::zeros(d), &params, &fam, 0.1, 0.5),
            Err(Error::DegenerateNormalizer)
        ));
        let f = sample_regularized(&d, |x| x[0].abs().powf(-0.25)).unwrap();
        let ratios: Vec<f64> = geomspace(1e-2, 1.0, 5)
            .into_iter()
            .map(|t| check_weighted_difference(&e, &f, &params, &fam, t, 0.5).unwrap())
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |a, &v| (a.0.min(v), a.1.max(v)));
        assert!(hi / lo <= 5.0, "{ratios:?}");
    }
}
