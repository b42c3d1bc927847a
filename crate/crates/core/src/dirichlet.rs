//! Poisson extensions `u(x, t) = e^{-t√L} f` sampled on log-spaced heights,
//! the PDE residual of `-u_tt + L u = 0`, the Carleson functional and square
//! function, and recovery of the boundary trace from a field.

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{Ball, BallFamily, BallScanner, BallStencil, GridDomain, GridFunction};
use crate::io::{self, GridHeader};
use crate::norms::{morrey_norm, NormParams, NormValue, ProfileEntry};
use crate::quadrature::geomspace;
use crate::spectral::{gradient, OperatorEngine};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Strictly increasing, geometrically spaced heights inside `[2h, R/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightGrid {
    heights: Vec<f64>,
}

impl HeightGrid {
    pub fn new(domain: &GridDomain, t_min: f64, t_max: f64, count: usize) -> Result<Self> {
        if count < 2 || !(t_max > t_min) {
            return Err(Error::InvalidHeights(format!(
                "need at least two heights with t_min < t_max, got {count} on [{t_min}, {t_max}]"
            )));
        }
        Self::from_heights(domain, geomspace(t_min, t_max, count))
    }

    /// `count` heights spanning the whole admissible range `[2h, R/2]`.
    pub fn full_range(domain: &GridDomain, count: usize) -> Result<Self> {
        Self::new(domain, 2.0 * domain.spacing(), domain.half_width() / 2.0, count)
    }

    pub fn from_heights(domain: &GridDomain, heights: Vec<f64>) -> Result<Self> {
        if heights.len() < 2 {
            return Err(Error::InvalidHeights("need at least two heights".into()));
        }
        if heights.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidHeights("heights must be strictly increasing".into()));
        }
        let lo = 2.0 * domain.spacing();
        let hi = domain.half_width() / 2.0;
        let (first, last) = (heights[0], heights[heights.len() - 1]);
        if first < lo * (1.0 - 1e-12) || last > hi * (1.0 + 1e-12) {
            return Err(Error::InvalidHeights(format!(
                "heights [{first}, {last}] leave the resolved range [{lo}, {hi}]"
            )));
        }
        let step = (heights[1] / heights[0]).ln();
        if heights
            .windows(2)
            .any(|w| ((w[1] / w[0]).ln() / step - 1.0).abs() > 1e-9)
        {
            return Err(Error::InvalidHeights("heights must be geometrically spaced".into()));
        }
        Ok(Self { heights })
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    /// The constant spacing `Δ = ln(t_{j+1} / t_j)`.
    pub fn log_step(&self) -> f64 {
        (self.heights[self.len() - 1] / self.heights[0]).ln() / (self.len() - 1) as f64
    }

    pub fn t_min(&self) -> f64 {
        self.heights[0]
    }

    pub fn t_max(&self) -> f64 {
        self.heights[self.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    /// Built by [`poisson_extension`] from this boundary function.
    Extended(GridFunction),
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    heights: HeightGrid,
    slices: Vec<GridFunction>,
    provenance: Provenance,
}

impl SolutionField {
    /// A field from given slices, one per height, all on one domain.
    pub fn external(heights: HeightGrid, slices: Vec<GridFunction>) -> Result<Self> {
        if slices.len() != heights.len() {
            return Err(Error::InvalidHeights(format!(
                "{} slices for {} heights",
                slices.len(),
                heights.len()
            )));
        }
        if slices.iter().any(|s| s.domain() != slices[0].domain()) {
            return Err(Error::DomainMismatch);
        }
        Ok(Self { heights, slices, provenance: Provenance::External })
    }

    pub fn domain(&self) -> &GridDomain {
        self.slices[0].domain()
    }

    pub fn heights(&self) -> &HeightGrid {
        &self.heights
    }

    pub fn slices(&self) -> &[GridFunction] {
        &self.slices
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            heights: self.heights.clone(),
            slices: self.slices.iter().map(|s| s.scale(a)).collect(),
            provenance: match &self.provenance {
                Provenance::Extended(f) => Provenance::Extended(f.scale(a)),
                Provenance::External => Provenance::External,
            },
        }
    }

    /// `u(·, t)`, interpolated linearly in `ln t` between neighbouring heights.
    pub fn slice_at(&self, t: f64) -> Result<GridFunction> {
        let hs = self.heights.heights();
        let s = t.ln();
        let tol = 1e-12 * self.heights.log_step();
        if !(s >= hs[0].ln() - tol && s <= hs[hs.len() - 1].ln() + tol) {
            return Err(Error::InvalidHeights(format!(
                "height {t} outside [{}, {}]",
                hs[0],
                hs[hs.len() - 1]
            )));
        }
        let pos = ((s - hs[0].ln()) / self.heights.log_step()).clamp(0.0, (hs.len() - 1) as f64);
        let j = (pos.floor() as usize).min(hs.len() - 2);
        let theta = pos - j as f64;
        if theta.abs() < 1e-9 {
            return Ok(self.slices[j].clone());
        }
        if (1.0 - theta).abs() < 1e-9 {
            return Ok(self.slices[j + 1].clone());
        }
        let (a, b) = (self.slices[j].values(), self.slices[j + 1].values());
        let values = a.iter().zip(b).map(|(x, y)| (1.0 - theta) * x + theta * y).collect();
        Ok(GridFunction::from_raw(*self.domain(), values))
    }

    /// Writes `<dir>/field.json`, one `slice_NNNN` dump per height and, for
    /// extended fields, the boundary function as `boundary`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut header = GridHeader::for_domain(self.domain());
        header.heights = Some(self.heights.heights().to_vec());
        header.shape = Some(vec![self.slices.len(), self.domain().len()]);
        let meta = FieldMeta {
            grid: header,
            extended: matches!(self.provenance, Provenance::Extended(_)),
        };
        fs::write(dir.join("field.json"), serde_json::to_string_pretty(&meta)?)?;
        for (j, s) in self.slices.iter().enumerate() {
            io::write_grid(&dir.join(format!("slice_{j:04}")), s)?;
        }
        if let Provenance::Extended(f) = &self.provenance {
            io::write_grid(&dir.join("boundary"), f)?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta: FieldMeta = serde_json::from_str(&fs::read_to_string(dir.join("field.json"))?)?;
        let domain = meta.grid.domain()?;
        let heights = HeightGrid::from_heights(
            &domain,
            meta.grid.heights.ok_or_else(|| Error::Config("field header lists no heights".into()))?,
        )?;
        let slices = (0..heights.len())
            .map(|j| io::read_grid(&dir.join(format!("slice_{j:04}"))))
            .collect::<Result<Vec<_>>>()?;
        if slices.iter().any(|s| s.domain() != &domain) {
            return Err(Error::DomainMismatch);
        }
        let provenance = if meta.extended {
            Provenance::Extended(io::read_grid(&dir.join("boundary"))?)
        } else {
            Provenance::External
        };
        Ok(Self { heights, slices, provenance })
    }
}

#[derive(Serialize, Deserialize)]
struct FieldMeta {
    grid: GridHeader,
    extended: bool,
}

/// `u(·, t_j) = e^{-t_j √L} f` for every height.
pub fn poisson_extension(engine: &OperatorEngine, f: &GridFunction, heights: &HeightGrid) -> Result<SolutionField> {
    let coeffs = engine.analyze(f)?;
    let slices = exec::map(heights.heights(), |&t| {
        engine.synthesize(&coeffs, |mu| (-t * mu.max(0.0).sqrt()).exp())
    });
    Ok(SolutionField {
        heights: heights.clone(),
        slices,
        provenance: Provenance::Extended(f.clone()),
    })
}

/// `max_j sup|-u_tt + L u| / max_j sup|L u|` over interior heights.
///
/// With `s = ln t`, `u_tt = (u_ss - u_s) / t²` and both `s`-derivatives are
/// central differences, so the residual is `O(Δ²)` in the log spacing.
pub fn pde_residual(field: &SolutionField, engine: &OperatorEngine) -> Result<f64> {
    let m = field.heights.len();
    if m < 5 {
        return Err(Error::TooFewHeights(m.saturating_sub(2)));
    }
    if field.domain() != engine.domain() {
        return Err(Error::DomainMismatch);
    }
    let ds = field.heights.log_step();
    let hs = field.heights.heights();
    let rows = exec::map_range(m - 2, |i| -> Result<(f64, f64)> {
        let j = i + 1;
        let lu = engine.apply_generator(&field.slices[j])?;
        let (a, b, c) = (
            field.slices[j - 1].values(),
            field.slices[j].values(),
            field.slices[j + 1].values(),
        );
        let t2 = hs[j] * hs[j];
        let res = lu
            .values()
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let us = (c[k] - a[k]) / (2.0 * ds);
                let uss = (c[k] - 2.0 * b[k] + a[k]) / (ds * ds);
                (l - (uss - us) / t2).abs()
            })
            .fold(0.0, f64::max);
        Ok((res, lu.sup_norm()))
    });
    let (mut res, mut scale) = (0.0f64, 0.0f64);
    for row in rows {
        let (r, s) = row?;
        res = res.max(r);
        scale = scale.max(s);
    }
    Ok(if scale == 0.0 { res } else { res / scale })
}

/// `∂_t u` at every height from second-order differences in `ln t`.
fn time_derivative(field: &SolutionField) -> Vec<GridFunction> {
    let m = field.heights.len();
    let ds = field.heights.log_step();
    let hs = field.heights.heights();
    let v = |j: usize| field.slices[j].values();
    exec::map_range(m, |j| {
        let t = hs[j];
        let values: Vec<f64> = if m < 3 {
            v(0).iter().zip(v(1)).map(|(a, b)| (b - a) / (ds * t)).collect()
        } else if j == 0 {
            (0..v(0).len())
                .map(|k| (-3.0 * v(0)[k] + 4.0 * v(1)[k] - v(2)[k]) / (2.0 * ds * t))
                .collect()
        } else if j == m - 1 {
            (0..v(j).len())
                .map(|k| (3.0 * v(j)[k] - 4.0 * v(j - 1)[k] + v(j - 2)[k]) / (2.0 * ds * t))
                .collect()
        } else {
            v(j + 1).iter().zip(v(j - 1)).map(|(a, b)| (a - b) / (2.0 * ds * t)).collect()
        };
        GridFunction::from_raw(*field.domain(), values)
    })
}

/// Minimum number of heights at or below `r_B` for a ball to be evaluated.
pub const MIN_HEIGHTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonValue {
    pub value: f64,
    pub argmax_ball: Ball,
    /// Per evaluated radius, the maximum over centers.
    pub profile: Vec<ProfileEntry>,
    /// `table[i][c]`: value of the ball with radius `profile[i].radius` and
    /// the family's `c`-th center.
    pub table: Vec<Vec<f64>>,
    /// Balls with fewer than [`MIN_HEIGHTS`] heights below their radius or a
    /// radius above the top height.
    pub skipped_balls: usize,
    /// Upper bound on the omitted `(0, t_min)` part of any ball's value:
    /// `max_B r^{-λ} |B| t_min² sup|∇u(·, t_min)|²`.
    pub collar_bound: f64,
}

impl CarlesonValue {
    pub fn as_norm_value(&self) -> NormValue {
        NormValue {
            value: self.value,
            argmax_ball: self.argmax_ball,
            profile: self.profile.clone(),
        }
    }
}

/// `max_B r^{-λ} ∫_{t_min}^{r_B} ∫_B t G(x, t) dx dt` for a density `G` given
/// at every height; the `t`-integral is the trapezoid rule in `ln t` of
/// `t² ∫_B G`, closed by a partial interval up to `r_B`.
fn height_functional(
    domain: &GridDomain,
    heights: &HeightGrid,
    density: &[GridFunction],
    lambda: f64,
    family: &BallFamily,
) -> Result<CarlesonValue> {
    let hs = heights.heights();
    let ds = heights.log_step();
    let vol = domain.cell_volume();
    // Radii with enough heights below them and no height extrapolation.
    let resolved: Vec<usize> = (0..family.radii().len())
        .filter(|&i| {
            let r = family.radii()[i];
            r <= heights.t_max() * (1.0 + 1e-12) && hs.iter().filter(|&&t| t <= r * (1.0 + 1e-12)).count() >= MIN_HEIGHTS
        })
        .collect();
    let skipped_balls = (family.radii().len() - resolved.len()) * family.centers().len();
    if resolved.is_empty() {
        return Err(Error::AllBallsSkipped { skipped: skipped_balls });
    }
    let stencils: Vec<BallStencil> = resolved
        .iter()
        .map(|&i| BallStencil::new(domain, family.radii()[i]))
        .collect();
    // g[j][i][c] = t_j² ∫_B G(·, t_j) for the resolved radius i.
    let g: Vec<Vec<Vec<f64>>> = exec::map_range(hs.len(), |j| {
        let scan = BallScanner::new(domain, density[j].values());
        let t2 = hs[j] * hs[j];
        stencils
            .iter()
            .map(|st| {
                family
                    .centers()
                    .iter()
                    .map(|c| t2 * vol * scan.sum(st, c).max(0.0))
                    .collect()
            })
            .collect()
    });
    let nc = family.centers().len();
    let mut table = Vec::with_capacity(resolved.len());
    let mut profile = Vec::with_capacity(resolved.len());
    let mut best = (f64::NEG_INFINITY, Ball { center: family.centers()[0], radius: family.radii()[resolved[0]] });
    for (i, &ri) in resolved.iter().enumerate() {
        let r = family.radii()[ri];
        let top = hs.iter().filter(|&&t| t <= r * (1.0 + 1e-12)).count() - 1;
        let partial = (r.ln() - hs[top].ln()).max(0.0);
        let row: Vec<f64> = (0..nc)
            .map(|c| {
                let mut acc = 0.0;
                for j in 0..top {
                    acc += 0.5 * ds * (g[j][i][c] + g[j + 1][i][c]);
                }
                if partial > 0.0 && top + 1 < hs.len() {
                    let theta = partial / ds;
                    let at_r = (1.0 - theta) * g[top][i][c] + theta * g[top + 1][i][c];
                    acc += 0.5 * partial * (g[top][i][c] + at_r);
                }
                r.powf(-lambda) * acc
            })
            .collect();
        let (ci, v) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (k, &v)| if v > a.1 { (k, v) } else { a });
        profile.push(ProfileEntry { radius: r, value: v });
        if v > best.0 {
            best = (v, Ball { center: family.centers()[ci], radius: r });
        }
        table.push(row);
    }
    let first_sup = density[0].max().max(0.0);
    let collar_bound = resolved
        .iter()
        .zip(&stencils)
        .map(|(&ri, st)| {
            let r = family.radii()[ri];
            let count = family.centers().iter().map(|c| st.count(domain, c)).max().unwrap_or(0);
            r.powf(-lambda) * count as f64 * vol * hs[0] * hs[0] * first_sup
        })
        .fold(0.0, f64::max);
    Ok(CarlesonValue {
        value: best.0.max(0.0),
        argmax_ball: best.1,
        profile,
        table,
        skipped_balls,
        collar_bound,
    })
}

fn check_family(domain: &GridDomain, family: &BallFamily) -> Result<()> {
    if family.is_empty() || family.radii()[0] > domain.half_width() * (1.0 + 1e-12) {
        return Err(Error::InvalidParams("ball family does not match the domain".into()));
    }
    Ok(())
}

/// The Carleson functional `sup_B r^{-λ} ∫_0^{r_B} ∫_B t |∇u|² dx dt` with
/// `∇ = (∇_x, ∂_t)`, restricted to the resolved heights.
pub fn carleson_functional(field: &SolutionField, params: &NormParams, family: &BallFamily) -> Result<CarlesonValue> {
    let domain = *field.domain();
    check_family(&domain, family)?;
    let dt = time_derivative(field);
    let density: Vec<GridFunction> = exec::map_range(field.heights.len(), |j| {
        let mut acc: Vec<f64> = dt[j].values().iter().map(|v| v * v).collect();
        for g in gradient(&field.slices[j]) {
            for (a, v) in acc.iter_mut().zip(g.values()) {
                *a += v * v;
            }
        }
        GridFunction::from_raw(domain, acc)
    });
    height_functional(&domain, &field.heights, &density, params.lambda, family)
}

/// `sup_B r^{-λ} ∫_0^{r_B} ∫_B |t ∂_t e^{-t√L} f|² dx dt / t` with the
/// derivative taken exactly in the spectral representation.
pub fn square_function_norm(
    engine: &OperatorEngine,
    f: &GridFunction,
    params: &NormParams,
    family: &BallFamily,
    heights: &HeightGrid,
) -> Result<CarlesonValue> {
    let domain = *engine.domain();
    check_family(&domain, family)?;
    let coeffs = engine.analyze(f)?;
    let density: Vec<GridFunction> = exec::map(heights.heights(), |&t| {
        engine
            .synthesize(&coeffs, |mu| {
                let s = mu.max(0.0).sqrt();
                -s * (-t * s).exp()
            })
            .map(|v| v * v)
    });
    height_functional(&domain, heights, &density, params.lambda, family)
}

/// Options for [`trace_recover`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Comparisons use `|x|_∞ ≤ inner_fraction · R`.
    pub inner_fraction: f64,
    /// Degree of the polynomial in `1/k` through the last slices used to
    /// extrapolate to `t = 0`; `0` takes the last slice as is.
    pub extrapolation_order: usize,
    /// The reconstruction is flagged when its error exceeds
    /// `tolerance · sup|u|`.
    pub tolerance: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { inner_fraction: 0.5, extrapolation_order: 3, tolerance: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDiagnostics {
    pub k_schedule: Vec<f64>,
    /// `‖f_k‖` in `L^{2,λ}` for each `k`.
    pub fk_norms: Vec<f64>,
    /// `sup|f_{k+1} - f_k|` on the inner box.
    pub cauchy_increments: Vec<f64>,
    /// `max_j sup|u(·, t_j) - e^{-t_j √L} f|` on the inner box.
    pub reconstruction_error: f64,
    /// `max fk_norms / min fk_norms`.
    pub norm_spread: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecovery {
    pub f: GridFunction,
    pub diagnostics: TraceDiagnostics,
}

/// Recovers the boundary function of a field from the slices `f_k = u(·, 1/k)`.
///
/// Fails with [`Error::NoUniformTraceBound`] when the Morrey norms of the
/// `f_k` grow monotonically by more than a factor 2 along the schedule.
pub fn trace_recover(
    field: &SolutionField,
    engine: &OperatorEngine,
    params: &NormParams,
    family: &BallFamily,
    k_schedule: &[f64],
    options: &TraceOptions,
) -> Result<TraceRecovery> {
    if k_schedule.is_empty() || k_schedule.windows(2).any(|w| !(w[1] > w[0])) || !(k_schedule[0] > 0.0) {
        return Err(Error::InvalidParams("k schedule must be positive and increasing".into()));
    }
    if options.extrapolation_order + 1 > k_schedule.len() {
        return Err(Error::InvalidParams(format!(
            "extrapolation of order {} needs {} slices, schedule has {}",
            options.extrapolation_order,
            options.extrapolation_order + 1,
            k_schedule.len()
        )));
    }
    if field.domain() != engine.domain() {
        return Err(Error::DomainMismatch);
    }
    let norm_params = NormParams { p: 2.0, ..*params };
    let fk = k_schedule
        .iter()
        .map(|k| field.slice_at(1.0 / k))
        .collect::<Result<Vec<_>>>()?;
    let fk_norms = exec::map(&fk, |f| morrey_norm(f, &norm_params, family).map(|v| v.value))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let first = fk_norms[0];
    let last = fk_norms[fk_norms.len() - 1];
    if fk_norms.windows(2).all(|w| w[1] > w[0]) && last > 2.0 * first {
        return Err(Error::NoUniformTraceBound { growth: last / first });
    }
    let cauchy_increments = fk
        .windows(2)
        .map(|w| w[1].sub(&w[0]).map(|d| d.sup_norm_inner(options.inner_fraction)))
        .collect::<Result<Vec<_>>>()?;
    let f = extrapolate_to_zero(&fk, k_schedule, options.extrapolation_order);
    let coeffs = engine.analyze(&f)?;
    let errors = exec::map_range(field.heights.len(), |j| {
        let t = field.heights.heights()[j];
        let pf = engine.synthesize(&coeffs, |mu| (-t * mu.max(0.0).sqrt()).exp());
        field.slices[j].sub(&pf).map(|d| d.sup_norm_inner(options.inner_fraction))
    });
    let reconstruction_error = errors.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    let scale = field.slices.iter().map(|s| s.sup_norm()).fold(0.0, f64::max);
    let lo = fk_norms.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = fk_norms.iter().copied().fold(0.0, f64::max);
    let norm_spread = if hi == 0.0 { 1.0 } else { hi / lo };
    Ok(TraceRecovery {
        diagnostics: TraceDiagnostics {
            k_schedule: k_schedule.to_vec(),
            fk_norms,
            cauchy_increments,
            reconstruction_error,
            norm_spread,
            flagged: reconstruction_error > options.tolerance * scale,
        },
        f,
    })
}

/// Value at `t = 0` of the interpolating polynomial in `t = 1/k` through the
/// last `order + 1` slices (Neville's scheme, node by node).
fn extrapolate_to_zero(fk: &[GridFunction], ks: &[f64], order: usize) -> GridFunction {
    let n = fk.len();
    let last = &fk[n - 1];
    if order == 0 {
        return last.clone();
    }
    let ts: Vec<f64> = ks[n - order - 1..].iter().map(|k| 1.0 / k).collect();
    let slices = &fk[n - order - 1..];
    let values = (0..last.values().len())
        .map(|x| {
            let mut p: Vec<f64> = slices.iter().map(|s| s.values()[x]).collect();
            for level in 1..=order {
                for i in 0..=order - level {
                    let (ti, tj) = (ts[i], ts[i + level]);
                    p[i] = (tj * p[i] - ti * p[i + 1]) / (tj - ti);
                }
            }
            p[0]
        })
        .collect();
    GridFunction::from_raw(*last.domain(), values)
}
