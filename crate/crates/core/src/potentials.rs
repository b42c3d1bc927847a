//! Builtin nonnegative potentials and the reverse-Hölder `B_q` check.

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{sample, sample_regularized, Ball, BallFamily, BallScanner, BallStencil, GridDomain, GridFunction};
use serde::{Deserialize, Serialize};

/// Potentials `V ≥ 0` sampled onto a grid.
///
/// `Custom` takes an [`evalexpr`] expression in the variables `x`, `y`, `z`
/// and `r = |x|`, e.g. `"1 + math::cos(x)^2"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Constant { c: f64 },
    /// `|x|^a`; for `a < 0` the node at the origin gets its cell average.
    PowerLaw { a: f64 },
    /// `amplitude · exp(1 - 1/(1 - |x - center|²/width²))` inside the support.
    Bump {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// Indicator of the half-space `{x₁ ≥ 0}`.
    Indicator,
    Custom { expr: String },
}

impl PotentialSpec {
    pub fn sample(&self, domain: &GridDomain) -> Result<GridFunction> {
        let v = match self {
            Self::Constant { c } => GridFunction::constant(*domain, *c),
            Self::PowerLaw { a } => {
                let a = *a;
                let expr = move |x: &[f64]| x.iter().map(|c| c * c).sum::<f64>().sqrt().powf(a);
                if a < 0.0 {
                    sample_regularized(domain, expr)?
                } else {
                    sample(domain, expr)?
                }
            }
            Self::Bump { amplitude, width, center } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidPotential(format!("bump width must be positive, got {width}")));
                }
                let (amp, w) = (*amplitude, *width);
                let c = center.clone();
                sample(domain, move |x| {
                    let s: f64 = x
                        .iter()
                        .enumerate()
                        .map(|(a, xi)| (xi - c.get(a).copied().unwrap_or(0.0)).powi(2))
                        .sum::<f64>()
                        / (w * w);
                    if s < 1.0 {
                        amp * (1.0 - 1.0 / (1.0 - s)).exp()
                    } else {
                        0.0
                    }
                })?
            }
            Self::Indicator => sample(domain, |x| if x[0] >= 0.0 { 1.0 } else { 0.0 })?,
            Self::Custom { expr } => {
                let tree = evalexpr::build_operator_tree::<evalexpr::DefaultNumericTypes>(expr)
                    .map_err(|e| Error::InvalidPotential(format!("{expr}: {e}")))?;
                let eval = |x: &[f64]| -> std::result::Result<f64, evalexpr::EvalexprError> {
                    use evalexpr::{ContextWithMutableVariables, HashMapContext, Value};
                    let mut ctx = HashMapContext::new();
                    for (name, v) in ["x", "y", "z"].iter().zip(x) {
                        ctx.set_value((*name).into(), Value::Float(*v))?;
                    }
                    let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                    ctx.set_value("r".into(), Value::Float(r))?;
                    tree.eval_number_with_context(&ctx)
                };
                // Surface parse-time variable errors once instead of per node.
                eval(&vec![0.0; domain.dim()]).map_err(|e| Error::InvalidPotential(format!("{expr}: {e}")))?;
                sample(domain, |x| eval(x).unwrap_or(f64::NAN))?
            }
        };
        validate(&v)?;
        Ok(v)
    }
}

/// `V ≥ 0` and not identically zero.
pub fn validate(v: &GridFunction) -> Result<()> {
    if v.min() < 0.0 {
        return Err(Error::InvalidPotential(format!("negative value {}", v.min())));
    }
    if v.max() == 0.0 {
        return Err(Error::InvalidPotential("potential is identically zero".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverseHolder {
    pub constant: f64,
    pub argmax_ball: Ball,
    pub skipped_balls: usize,
}

/// `max_B (avg_B V^q)^{1/q} / avg_B V` over the family, skipping balls where
/// `V` vanishes identically.
pub fn reverse_holder_constant(v: &GridFunction, q: f64, family: &BallFamily) -> Result<ReverseHolder> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::InvalidParams(format!("q must exceed 1, got {q}")));
    }
    validate(v)?;
    let domain = v.domain();
    // Normalizing by the maximum makes constants exactly 1 and indicators
    // exactly 0/1, so their prefix sums carry no roundoff.
    let top = v.max();
    let base: Vec<f64> = v.values().iter().map(|x| x / top).collect();
    let powered: Vec<f64> = base.iter().map(|x| x.powf(q)).collect();
    let scan1 = BallScanner::new(domain, &base);
    let scanq = BallScanner::new(domain, &powered);
    let rows = exec::map_range(family.radii().len(), |j| {
        let stencil = BallStencil::new(domain, family.radii()[j]);
        let mut best = (f64::NEG_INFINITY, 0usize);
        let mut skipped = 0;
        for (ci, c) in family.centers().iter().enumerate() {
            let mut s1 = scan1.sum(&stencil, c);
            if s1 <= 64.0 * f64::EPSILON * stencil.count(domain, c) as f64 {
                s1 = stencil.sum_direct(domain, c, &base);
                if s1 == 0.0 {
                    skipped += 1;
                    continue;
                }
            }
            let sq = scanq.sum(&stencil, c).max(0.0);
            let n = stencil.count(domain, c) as f64;
            let ratio = (sq / n).powf(1.0 / q) / (s1 / n);
            if ratio > best.0 {
                best = (ratio, ci);
            }
        }
        (best, skipped)
    });
    let skipped_balls = rows.iter().map(|r| r.1).sum();
    let (j, ((constant, ci), _)) = rows
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1 .0 .0.total_cmp(&b.1 .0 .0))
        .expect("nonempty family");
    if !constant.is_finite() {
        return Err(Error::PotentialVanishes);
    }
    Ok(ReverseHolder {
        constant,
        argmax_ball: Ball { center: family.centers()[ci], radius: family.radii()[j] },
        skipped_balls,
    })
}

/// Which theorem hypothesis a certified `q` satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// `q < n/2`.
    None,
    /// `q ≥ n/2`: enough for kernel triviality.
    HalfDimension,
    /// `q ≥ n`: enough for the Dirichlet problem.
    FullDimension,
}

impl Hypothesis {
    pub fn for_exponent(q: f64, dim: usize) -> Self {
        let n = dim as f64;
        if q >= n {
            Self::FullDimension
        } else if q >= n / 2.0 {
            Self::HalfDimension
        } else {
            Self::None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Diverging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BqCertificate {
    pub q: f64,
    pub verdict: Verdict,
    /// Constant at the last level when certified.
    pub constant: Option<f64>,
    /// Constant at each refinement level.
    pub levels: Vec<f64>,
    pub skipped_balls: usize,
    pub hypothesis_met: Hypothesis,
}

impl BqCertificate {
    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

/// Relative change between consecutive levels below which the constant counts
/// as stable.
pub const STABILITY: f64 = 0.10;

/// Evaluates the reverse-Hölder constant on successively refined grids: each
/// level doubles the points per axis and adds the matching smaller radii,
/// keeping the ball centers fixed. Certified once two consecutive levels
/// agree within [`STABILITY`]; diverging if `budget` levels pass without that.
pub fn certify_bq(
    potential: &PotentialSpec,
    domain: &GridDomain,
    q: f64,
    family: &BallFamily,
    budget: usize,
) -> Result<BqCertificate> {
    if budget < 2 {
        return Err(Error::InvalidParams("certification needs at least two levels".into()));
    }
    let mut dom = *domain;
    let mut fam = family.clone();
    let mut levels = Vec::with_capacity(budget);
    let mut skipped_balls = 0;
    for level in 0..budget {
        if level > 0 {
            dom = dom.refined(2)?;
            fam = BallFamily::new(&dom, fam.stride() * 2, fam.ratio(), fam.min_radius() / 2.0)?;
        }
        let v = potential.sample(&dom)?;
        let rh = reverse_holder_constant(&v, q, &fam)?;
        skipped_balls = rh.skipped_balls;
        levels.push(rh.constant);
        if level > 0 && (rh.constant / levels[level - 1] - 1.0).abs() <= STABILITY {
            return Ok(BqCertificate {
                q,
                verdict: Verdict::Certified,
                constant: Some(rh.constant),
                levels,
                skipped_balls,
                hypothesis_met: Hypothesis::for_exponent(q, domain.dim()),
            });
        }
    }
    Ok(BqCertificate {
        q,
        verdict: Verdict::Diverging,
        constant: None,
        levels,
        skipped_balls,
        hypothesis_met: Hypothesis::None,
    })
}
