//! Morrey, classical Campanato, operator-adapted Campanato and growth-weighted
//! norms, with the supremum over balls taken over a [`BallFamily`].

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{Ball, BallFamily, BallScanner, BallStencil, GridDomain, GridFunction};
use crate::quadrature::abs_pow;
use crate::spectral::{Calculus, OperatorEngine};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub p: f64,
    pub lambda: f64,
    pub m: f64,
}

impl NormParams {
    /// Requires `p ≥ 1` and `0 < λ < n`; `λ ≥ n` is out of scope.
    pub fn new(p: f64, lambda: f64, m: f64, dim: usize) -> Result<Self> {
        let n = dim as f64;
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidParams(format!("p must be at least 1, got {p}")));
        }
        if !(lambda > 0.0 && lambda < n * (1.0 - 1e-12)) {
            return Err(Error::InvalidParams(format!(
                "lambda must lie in (0, {n}), got {lambda}"
            )));
        }
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::InvalidParams(format!("m must be positive, got {m}")));
        }
        Ok(Self { p, lambda, m })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub radius: f64,
    pub value: f64,
}

/// A discrete supremum over balls with the ball attaining it and, for each
/// radius, the maximum over centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormValue {
    pub value: f64,
    pub argmax_ball: Ball,
    pub profile: Vec<ProfileEntry>,
}

impl NormValue {
    /// Builds the value from per-radius, per-center ball values.
    pub(crate) fn from_table(family: &BallFamily, table: &[Vec<f64>]) -> Self {
        let mut best = (f64::NEG_INFINITY, Ball { center: family.centers()[0], radius: family.radii()[0] });
        let mut profile = Vec::with_capacity(table.len());
        for (&radius, row) in family.radii().iter().zip(table) {
            let (ci, v) = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            profile.push(ProfileEntry { radius, value: v });
            if v > best.0 {
                best = (v, Ball { center: family.centers()[ci], radius });
            }
        }
        Self {
            value: best.0.max(0.0),
            argmax_ball: best.1,
            profile,
        }
    }

    pub fn report(&self, norm: &str, params: &NormParams, domain: &GridDomain) -> NormReport {
        NormReport {
            norm: norm.to_string(),
            value: self.value,
            p: params.p,
            lambda: params.lambda,
            argmax_center: self.argmax_ball.center_point(domain)[..domain.dim()].to_vec(),
            argmax_radius: self.argmax_ball.radius,
            profile: self.profile.clone(),
        }
    }
}

/// Serialized form of a [`NormValue`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub norm: String,
    pub value: f64,
    pub p: f64,
    pub lambda: f64,
    pub argmax_center: Vec<f64>,
    pub argmax_radius: f64,
    pub profile: Vec<ProfileEntry>,
}

/// `r^{-λ} h^dim Σ_{B} g` for every (radius, center) pair of the family,
/// where `g` may depend on the radius.
pub(crate) fn scaled_ball_integrals(
    domain: &GridDomain,
    family: &BallFamily,
    lambda: f64,
    integrand: impl Fn(usize, f64) -> Vec<f64> + Sync,
) -> Vec<Vec<f64>> {
    let vol = domain.cell_volume();
    exec::map_range(family.radii().len(), |j| {
        let r = family.radii()[j];
        let g = integrand(j, r);
        let scan = BallScanner::new(domain, &g);
        let stencil = BallStencil::new(domain, r);
        let scale = r.powf(-lambda) * vol;
        family
            .centers()
            .iter()
            .map(|c| scale * scan.sum(&stencil, c).max(0.0))
            .collect()
    })
}

fn root_table(table: Vec<Vec<f64>>, p: f64) -> Vec<Vec<f64>> {
    table
        .into_iter()
        .map(|row| row.into_iter().map(|v| v.powf(1.0 / p)).collect())
        .collect()
}

fn check_family(f: &GridFunction, family: &BallFamily) -> Result<()> {
    if family.is_empty() {
        return Err(Error::InvalidParams("empty ball family".into()));
    }
    let r = f.domain().half_width();
    if family.radii()[0] > r * (1.0 + 1e-12) {
        return Err(Error::InvalidParams("ball family does not match the domain".into()));
    }
    Ok(())
}

/// `(sup_B r^{-λ} ∫_B |f|^p)^{1/p}`.
pub fn morrey_norm(f: &GridFunction, params: &NormParams, family: &BallFamily) -> Result<NormValue> {
    check_family(f, family)?;
    let g: Vec<f64> = f.values().iter().map(|&v| abs_pow(v, params.p)).collect();
    let table = scaled_ball_integrals(f.domain(), family, params.lambda, |_, _| g.clone());
    Ok(NormValue::from_table(family, &root_table(table, params.p)))
}

/// `(sup_B r^{-λ} ∫_B |f - f_B|^p)^{1/p}` with `f_B` the ball mean.
pub fn campanato_classical(
    f: &GridFunction,
    params: &NormParams,
    family: &BallFamily,
) -> Result<NormValue> {
    check_family(f, family)?;
    let domain = f.domain();
    let n = domain.points_per_axis();
    let vol = domain.cell_volume();
    let values = f.values();
    let table = exec::map_range(family.radii().len(), |j| {
        let r = family.radii()[j];
        let stencil = BallStencil::new(domain, r);
        let scale = r.powf(-params.lambda) * vol;
        exec::map(family.centers(), |c| {
            let count = stencil.count(domain, c);
            let mean = stencil.sum_direct(domain, c, values) / count as f64;
            let mut acc = 0.0;
            stencil.segments(domain, c, |row, s, e| {
                acc += values[row * n + s..row * n + e]
                    .iter()
                    .map(|&v| abs_pow(v - mean, params.p))
                    .sum::<f64>();
            });
            (scale * acc).powf(1.0 / params.p)
        })
    });
    Ok(NormValue::from_table(family, &table))
}

/// `(sup_B r^{-λ} ∫_B |f - S_{r^m} f|^p)^{1/p}` where `S_t` is the engine's
/// semigroup: `e^{-tL}` for heat calculus, `e^{-t√L}` when `m = 1`.
pub fn campanato_operator(
    f: &GridFunction,
    engine: &OperatorEngine,
    params: &NormParams,
    family: &BallFamily,
) -> Result<NormValue> {
    if f.domain() != engine.domain() {
        return Err(Error::DomainMismatch);
    }
    check_family(f, family)?;
    if params.m != engine.spec().order_m {
        return Err(Error::InvalidParams(format!(
            "norm order m = {} differs from the engine's m = {}",
            params.m,
            engine.spec().order_m
        )));
    }
    let calculus = engine.spec().calculus();
    let coeffs = engine.analyze(f)?;
    let table = scaled_ball_integrals(f.domain(), family, params.lambda, |_, r| {
        let t = semigroup_time(calculus, r, params.m);
        let s = engine.semigroup_from(calculus, t, &coeffs);
        f.values()
            .iter()
            .zip(s.values())
            .map(|(a, b)| abs_pow(a - b, params.p))
            .collect()
    });
    Ok(NormValue::from_table(family, &root_table(table, params.p)))
}

/// Semigroup time attached to a ball of radius `r`.
pub fn semigroup_time(calculus: Calculus, r: f64, m: f64) -> f64 {
    match calculus {
        Calculus::Heat => r.powf(m),
        Calculus::Poisson => r,
    }
}

/// `(∫ |f|^p / (1 + |x|)^{n+β} dx)^{1/p}` by midpoint quadrature.
pub fn mtype_norm(f: &GridFunction, p: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParams(format!("beta must be positive, got {beta}")));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParams(format!("p must be at least 1, got {p}")));
    }
    let domain = f.domain();
    let n = domain.dim() as f64;
    let origin = [0.0; 3];
    let sum: f64 = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| abs_pow(v, p) / (1.0 + domain.distance(i, &origin)).powf(n + beta))
        .sum();
    Ok((domain.cell_volume() * sum).powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample, sample_regularized, Boundary};
    use crate::spectral::OperatorSpec;

    fn line(n: usize, r: f64, b: Boundary) -> GridDomain {
        GridDomain::new(1, r, n, b).unwrap()
    }

    #[test]
    fn params_reject_out_of_range() {
        assert!(NormParams::new(0.5, 0.5, 2.0, 1).is_err());
        assert!(NormParams::new(2.0, 1.0, 2.0, 1).is_err());
        assert!(NormParams::new(2.0, 0.0, 2.0, 1).is_err());
        assert!(NormParams::new(2.0, 1.5, 2.0, 2).is_ok());
    }

    #[test]
    fn zero_function_has_zero_norms() {
        let d = line(64, 2.0, Boundary::Periodic);
        let fam = BallFamily::default_for(&d);
        let pr = NormParams::new(2.0, 0.5, 2.0, 1).unwrap();
        let z = GridFunction::zeros(d);
        let e = OperatorEngine::build(OperatorSpec::laplacian(), &d).unwrap();
        assert_eq!(morrey_norm(&z, &pr, &fam).unwrap().value, 0.0);
        assert_eq!(campanato_classical(&z, &pr, &fam).unwrap().value, 0.0);
        assert_eq!(campanato_operator(&z, &e, &pr, &fam).unwrap().value, 0.0);
        assert_eq!(mtype_norm(&z, 2.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn indicator_morrey_sup_closed_form() {
        // sup_r r^{-1/2} min(2r, 2) = 2 at r = 1
        let d = line(512, 4.0, Boundary::TruncatedDirichlet);
        let f = sample(&d, |x| if x[0].abs() <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        let fam = BallFamily::default_for(&d);
        let pr = NormParams::new(1.0, 0.5, 2.0, 1).unwrap();
        let v = morrey_norm(&f, &pr, &fam).unwrap();
        assert!((v.value - 2.0).abs() <= d.spacing() * 1.01, "{}", v.value);
        assert!((v.argmax_ball.radius - 1.0).abs() < 1e-12);
        let top = v.profile.iter().map(|e| e.value).fold(0.0, f64::max);
        assert_eq!(top, v.value);
    }

    #[test]
    fn classical_campanato_basic_properties() {
        let d = line(256, 4.0, Boundary::TruncatedDirichlet);
        let fam = BallFamily::default_for(&d);
        let pr = NormParams::new(2.0, 0.5, 2.0, 1).unwrap();
        let c = GridFunction::constant(d, 3.0);
        assert!(campanato_classical(&c, &pr, &fam).unwrap().value < 1e-12);
        let ind = sample(&d, |x| if x[0].abs() <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        let osc = campanato_classical(&ind, &pr, &fam).unwrap().value;
        let mor = morrey_norm(&ind, &pr, &fam).unwrap().value;
        assert!(osc <= mor);
        let scaled = campanato_classical(&ind.scale(-2.5), &pr, &fam).unwrap().value;
        assert!((scaled - 2.5 * osc).abs() < 1e-12 * osc);
    }

    #[test]
    fn operator_campanato_conservation_and_eigen_profile() {
        let d = line(128, 3.0, Boundary::Periodic);
        let e = OperatorEngine::build(OperatorSpec::laplacian(), &d).unwrap();
        let fam = BallFamily::default_for(&d);
        let pr = NormParams::new(2.0, 0.5, 2.0, 1).unwrap();
        let one = GridFunction::constant(d, 1.0);
        assert!(campanato_operator(&one, &e, &pr, &fam).unwrap().value < 1e-12);

        // eigen route: closed-form profile r^{-λ} |1 - e^{-r² μ}|^p ∫_B |φ|^p
        let dd = line(64, 3.0, Boundary::TruncatedDirichlet);
        let ee = OperatorEngine::build(OperatorSpec::laplacian(), &dd).unwrap();
        let famd = BallFamily::default_for(&dd);
        let phi = ee.eigenfunction(3).unwrap();
        let mu = ee.eigenvalues()[3];
        let got = campanato_operator(&phi, &ee, &pr, &famd).unwrap();
        for entry in &got.profile {
            let r = entry.radius;
            let best = famd
                .centers()
                .iter()
                .map(|&c| {
                    let b = Ball { center: c, radius: r };
                    let i = crate::grid::ball_lp_integral(&phi, &b, 2.0).unwrap();
                    (r.powf(-0.5) * (1.0 - (-r * r * mu).exp()).powi(2) * i).sqrt()
                })
                .fold(0.0, f64::max);
            assert!((entry.value - best).abs() <= 1e-8 * best.max(1e-300));
        }
    }

    #[test]
    fn operator_campanato_checks_order_and_domain() {
        let d = line(32, 1.0, Boundary::Periodic);
        let e = OperatorEngine::build(OperatorSpec::laplacian(), &d).unwrap();
        let fam = BallFamily::default_for(&d);
        let f = GridFunction::constant(d, 1.0);
        let wrong_m = NormParams::new(2.0, 0.5, 1.0, 1).unwrap();
        assert!(campanato_operator(&f, &e, &wrong_m, &fam).is_err());
        let other = GridFunction::zeros(line(64, 1.0, Boundary::Periodic));
        let pr = NormParams::new(2.0, 0.5, 2.0, 1).unwrap();
        assert!(matches!(
            campanato_operator(&other, &e, &pr, &fam),
            Err(Error::DomainMismatch)
        ));
    }

    #[test]
    fn singular_profile_is_nearly_scale_invariant() {
        // ∫_{B(0,r)} |x|^{-(n-λ)} dx ∝ r^λ, so the centered profile is flat
        let d = line(512, 4.0, Boundary::TruncatedDirichlet);
        let (p, lambda) = (2.0, 0.5);
        let f = sample_regularized(&d, |x| x[0].abs().powf(-(1.0 - lambda) / p)).unwrap();
        let origin = d.origin();
        let h = d.spacing();
        let vals: Vec<f64> = [16.0 * h, 32.0 * h, 64.0 * h, 128.0 * h, 256.0 * h]
            .iter()
            .map(|&r| {
                let b = Ball { center: origin, radius: r };
                r.powf(-lambda) * crate::grid::ball_lp_integral(&f, &b, p).unwrap()
            })
            .collect();
        let (lo, hi) = vals.iter().fold((f64::MAX, 0.0f64), |a, &v| (a.0.min(v), a.1.max(v)));
        assert!(hi / lo - 1.0 <= 0.25, "{vals:?}");
    }

    #[test]
    fn mtype_constant_approaches_improper_integral() {
        // ∫_R (1+|x|)^{-2} dx = 2
        let mut prev = 0.0;
        for (r, n) in [(50.0, 4096), (200.0, 16384), (800.0, 65536)] {
            let d = line(n, r, Boundary::TruncatedDirichlet);
            let v = mtype_norm(&GridFunction::constant(d, 1.0), 1.0, 1.0).unwrap();
            let expected_tail = 2.0 / (1.0 + r);
            assert!((v - (2.0 - expected_tail)).abs() < 2e-3, "{v}");
            assert!(v > prev);
            prev = v;
        }
        assert!(mtype_norm(&GridFunction::constant(line(8, 1.0, Boundary::Periodic), 1.0), 2.0, 0.0).is_err());
    }
}
