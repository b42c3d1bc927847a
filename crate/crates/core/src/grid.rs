//! Uniform grids on `[-R, R]^dim`, sampled functions, balls and ball families.
//!
//! Nodes sit at `x_i = -R + i h` with `h = 2R / N`, so the origin is always the
//! node `N / 2` on every axis. Multi-indices are flattened row-major with the
//! last axis fastest; a "row" is a fixed choice of the leading `dim - 1`
//! indices.

use crate::error::{Error, Result};
use crate::exec;
use crate::quadrature::{abs_pow, gauss_legendre};
use serde::{Deserialize, Serialize};

/// Largest number of grid points accepted by [`GridDomain::new`].
pub const MAX_POINTS: usize = 1 << 24;

/// A point in up to three dimensions; unused trailing coordinates are zero.
pub type Point = [f64; 3];
/// A grid multi-index; unused trailing entries are zero.
pub type Index = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// `x = -R` is identified with `x = R`.
    Periodic,
    /// Values are zero outside the box.
    TruncatedDirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    dim: usize,
    half_width: f64,
    points: usize,
    boundary: Boundary,
}

impl GridDomain {
    pub fn new(dim: usize, half_width: f64, points: usize, boundary: Boundary) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidDomain(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if points < 2 || !points.is_multiple_of(2) {
            return Err(Error::InvalidDomain(format!(
                "points per axis must be a positive even integer, got {points}"
            )));
        }
        let total = points
            .checked_pow(dim as u32)
            .filter(|&t| t <= MAX_POINTS)
            .ok_or_else(|| {
                Error::InvalidDomain(format!("{points}^{dim} points exceed the memory budget"))
            })?;
        debug_assert!(total > 0);
        Ok(Self {
            dim,
            half_width,
            points,
            boundary,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Total node count `N^dim`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Number of rows (products of the leading `dim - 1` axes).
    pub fn rows(&self) -> usize {
        self.points.pow(self.dim as u32 - 1)
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn multi_index(&self, flat: usize) -> Index {
        let n = self.points;
        let mut idx = [0; 3];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            idx[axis] = rest % n;
            rest /= n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &Index) -> usize {
        idx[..self.dim]
            .iter()
            .fold(0, |acc, &i| acc * self.points + i)
    }

    pub fn point(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        let mut p = [0.0; 3];
        for axis in 0..self.dim {
            p[axis] = self.axis_coord(idx[axis]);
        }
        p
    }

    /// The node index of the origin.
    pub fn origin(&self) -> Index {
        let mut idx = [0; 3];
        for i in idx.iter_mut().take(self.dim) {
            *i = self.points / 2;
        }
        idx
    }

    /// Nearest node to `x`, wrapped (periodic) or clamped (truncated).
    pub fn snap(&self, x: &[f64]) -> Index {
        let h = self.spacing();
        let n = self.points as isize;
        let mut idx = [0; 3];
        for axis in 0..self.dim {
            let k = ((x[axis] + self.half_width) / h).round() as isize;
            idx[axis] = match self.boundary {
                Boundary::Periodic => k.rem_euclid(n) as usize,
                Boundary::TruncatedDirichlet => k.clamp(0, n - 1) as usize,
            };
        }
        idx
    }

    /// Displacement `x - y` from the node `flat` to the point `y`, using the
    /// minimum image on periodic domains.
    pub fn displacement(&self, flat: usize, y: &[f64]) -> Point {
        let x = self.point(flat);
        let period = 2.0 * self.half_width;
        let mut d = [0.0; 3];
        for axis in 0..self.dim {
            let mut v = x[axis] - y[axis];
            if self.is_periodic() {
                v -= period * (v / period).round();
            }
            d[axis] = v;
        }
        d
    }

    pub fn distance(&self, flat: usize, y: &[f64]) -> f64 {
        let d = self.displacement(flat, y);
        d.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// The same box with `factor` times as many points per axis.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.dim, self.half_width, self.points * factor, self.boundary)
    }
}

/// Real samples on a [`GridDomain`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    domain: GridDomain,
    values: Vec<f64>,
}

impl GridFunction {
    /// Wraps `values`, checking the length and that every sample is finite.
    pub fn new(domain: GridDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::InvalidDomain(format!(
                "expected {} samples, got {}",
                domain.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                coord: domain.point(i)[..domain.dim()].to_vec(),
                value: values[i],
            });
        }
        Ok(Self { domain, values })
    }

    pub(crate) fn from_raw(domain: GridDomain, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.len());
        Self { domain, values }
    }

    pub fn zeros(domain: GridDomain) -> Self {
        Self::from_raw(domain, vec![0.0; domain.len()])
    }

    pub fn constant(domain: GridDomain, c: f64) -> Self {
        Self::from_raw(domain, vec![c; domain.len()])
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.domain, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch);
        }
        Ok(Self::from_raw(
            self.domain,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Grid inner product `h^dim Σ f_i g_i`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch);
        }
        Ok(self.domain.cell_volume()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>())
    }

    /// Sup of `|f|` over nodes with `|x|_∞ ≤ fraction · R`.
    pub fn sup_norm_inner(&self, fraction: f64) -> f64 {
        let limit = fraction * self.domain.half_width() * (1.0 + 1e-12);
        let dim = self.domain.dim();
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let p = self.domain.point(*i);
                p[..dim].iter().all(|c| c.abs() <= limit)
            })
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }
}

/// Samples `expr` at every node; rejects non-finite values.
pub fn sample(domain: &GridDomain, expr: impl Fn(&[f64]) -> f64 + Sync) -> Result<GridFunction> {
    let dim = domain.dim();
    let values = exec::map_range(domain.len(), |i| expr(&domain.point(i)[..dim]));
    GridFunction::new(*domain, values)
}

/// Samples `expr`, replacing every node where it is not finite by the
/// average of `expr` over that node's cell.
///
/// The cell average uses 16-point Gauss-Legendre per axis on a dyadic
/// grading toward the node, so integrable point singularities resolve.
pub fn sample_regularized(
    domain: &GridDomain,
    expr: impl Fn(&[f64]) -> f64 + Sync,
) -> Result<GridFunction> {
    let dim = domain.dim();
    let h = domain.spacing();
    let values = exec::map_range(domain.len(), |i| {
        let p = domain.point(i);
        let v = expr(&p[..dim]);
        if v.is_finite() {
            v
        } else {
            cell_average(dim, &p, h, &expr)
        }
    });
    GridFunction::new(*domain, values)
}

/// Average of `expr` over the cube of side `h` centred at `center`.
pub fn cell_average(dim: usize, center: &Point, h: f64, expr: &dyn Fn(&[f64]) -> f64) -> f64 {
    let (gx, gw) = gauss_legendre(16);
    let depth = match dim {
        1 => 60,
        2 => 30,
        _ => 14,
    };
    // Stop grading before offsets round onto the center coordinate.
    let scale = center[..dim].iter().fold(h, |a, c| a.max(c.abs()));
    let floor = 1e4 * f64::EPSILON * scale;
    let mut total = 0.0;
    for orthant in 0..(1usize << dim) {
        let signs: Vec<f64> = (0..dim)
            .map(|a| if orthant >> a & 1 == 1 { -1.0 } else { 1.0 })
            .collect();
        let mut side = h / 2.0;
        for _ in 0..depth {
            let half = side / 2.0;
            if half < floor {
                break;
            }
            for sub in 1..(1usize << dim) {
                let lo: Vec<f64> = (0..dim)
                    .map(|a| if sub >> a & 1 == 1 { half } else { 0.0 })
                    .collect();
                total += tensor_gauss(dim, center, &signs, &lo, half, &gx, &gw, expr);
            }
            side = half;
        }
        total += tensor_gauss(dim, center, &signs, &vec![0.0; dim], side, &gx, &gw, expr);
    }
    total / h.powi(dim as i32)
}

#[allow(clippy::too_many_arguments)]
fn tensor_gauss(
    dim: usize,
    center: &Point,
    signs: &[f64],
    lo: &[f64],
    side: f64,
    gx: &[f64],
    gw: &[f64],
    expr: &dyn Fn(&[f64]) -> f64,
) -> f64 {
    let n = gx.len();
    let jac = (side / 2.0).powi(dim as i32);
    let mut sum = 0.0;
    let mut x = [0.0; 3];
    for k in 0..n.pow(dim as u32) {
        let mut rest = k;
        let mut w = jac;
        for a in 0..dim {
            let q = rest % n;
            rest /= n;
            x[a] = center[a] + signs[a] * (lo[a] + side * (1.0 + gx[q]) / 2.0);
            w *= gw[q];
        }
        sum += w * expr(&x[..dim]);
    }
    sum
}

/// A ball snapped to a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Index,
    pub radius: f64,
}

impl Ball {
    /// Ball around the node nearest to `center`; requires `h ≤ r ≤ R`.
    pub fn new(domain: &GridDomain, center: &[f64], radius: f64) -> Result<Self> {
        Self::at_index(domain, domain.snap(center), radius)
    }

    pub fn at_index(domain: &GridDomain, center: Index, radius: f64) -> Result<Self> {
        let h = domain.spacing();
        let tol = 1e-12 * domain.half_width();
        if !(radius.is_finite() && radius >= h - tol && radius <= domain.half_width() + tol) {
            return Err(Error::DegenerateBall {
                center: center[..domain.dim()]
                    .iter()
                    .map(|&i| domain.axis_coord(i))
                    .collect(),
                radius,
            });
        }
        Ok(Self { center, radius })
    }

    pub fn center_point(&self, domain: &GridDomain) -> Point {
        let mut p = [0.0; 3];
        for (a, c) in p.iter_mut().enumerate().take(domain.dim()) {
            *c = domain.axis_coord(self.center[a]);
        }
        p
    }
}

/// One chord of a discrete ball: a fixed offset in the leading axes and a
/// contiguous range `lo..=hi` of last-axis offsets.
#[derive(Debug, Clone, Copy)]
struct Chord {
    offset: [isize; 2],
    lo: isize,
    hi: isize,
}

/// The node pattern of a ball of given radius, independent of its center.
#[derive(Debug, Clone)]
pub struct BallStencil {
    radius: f64,
    chords: Vec<Chord>,
}

impl BallStencil {
    /// Nodes `k` with `|k| h ≤ r`; on periodic domains offsets are taken in
    /// `-N/2..N/2` so every node is counted once.
    pub fn new(domain: &GridDomain, radius: f64) -> Self {
        let dim = domain.dim();
        let n = domain.points_per_axis() as isize;
        let rr = radius / domain.spacing();
        let r2 = rr * rr + 1e-9;
        let kmax = (rr + 1e-9).floor() as isize;
        let (olo, ohi) = if domain.is_periodic() {
            ((-kmax).max(-n / 2), kmax.min(n / 2 - 1))
        } else {
            (-kmax, kmax)
        };
        let clamp_half = |k: isize| -> (isize, isize) {
            if domain.is_periodic() && 2 * k + 1 >= n {
                (-n / 2, n / 2 - 1)
            } else {
                (-k, k)
            }
        };
        let mut chords = Vec::new();
        let mut push = |offset: [isize; 2], used: f64| {
            let rem = r2 - used;
            if rem < 0.0 {
                return;
            }
            let k = (rem.sqrt() + 1e-12).floor() as isize;
            let (lo, hi) = clamp_half(k);
            chords.push(Chord { offset, lo, hi });
        };
        match dim {
            1 => push([0, 0], 0.0),
            2 => {
                for a in olo..=ohi {
                    push([a, 0], (a * a) as f64);
                }
            }
            _ => {
                for a in olo..=ohi {
                    for b in olo..=ohi {
                        push([a, b], (a * a + b * b) as f64);
                    }
                }
            }
        }
        Self { radius, chords }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Calls `visit(row, start, end)` for each half-open last-axis segment of
    /// the ball centred at `center`, after wrapping or clipping.
    pub fn segments(
        &self,
        domain: &GridDomain,
        center: &Index,
        mut visit: impl FnMut(usize, usize, usize),
    ) {
        let dim = domain.dim();
        let n = domain.points_per_axis() as isize;
        let periodic = domain.is_periodic();
        let last = center[dim - 1] as isize;
        'chord: for chord in &self.chords {
            let mut row = 0usize;
            for a in 0..dim - 1 {
                let mut c = center[a] as isize + chord.offset[a];
                if periodic {
                    c = c.rem_euclid(n);
                } else if c < 0 || c >= n {
                    continue 'chord;
                }
                row = row * n as usize + c as usize;
            }
            let start = last + chord.lo;
            let end = last + chord.hi + 1;
            if periodic {
                let len = end - start;
                if len >= n {
                    visit(row, 0, n as usize);
                    continue;
                }
                let s = start.rem_euclid(n);
                if s + len <= n {
                    visit(row, s as usize, (s + len) as usize);
                } else {
                    visit(row, s as usize, n as usize);
                    visit(row, 0, (s + len - n) as usize);
                }
            } else {
                let s = start.max(0);
                let e = end.min(n);
                if s < e {
                    visit(row, s as usize, e as usize);
                }
            }
        }
    }

    /// Number of nodes of the ball centred at `center` inside the domain.
    pub fn count(&self, domain: &GridDomain, center: &Index) -> usize {
        let mut c = 0;
        self.segments(domain, center, |_, s, e| c += e - s);
        c
    }

    /// Direct sum of `values` over the ball.
    pub fn sum_direct(&self, domain: &GridDomain, center: &Index, values: &[f64]) -> f64 {
        let n = domain.points_per_axis();
        let mut acc = 0.0;
        self.segments(domain, center, |row, s, e| {
            acc += values[row * n + s..row * n + e].iter().sum::<f64>();
        });
        acc
    }
}

/// Last-axis prefix sums of a sampled integrand; every ball sum is then a
/// sum over the ball's chords of two table lookups.
#[derive(Debug, Clone)]
pub struct BallScanner {
    domain: GridDomain,
    prefix: Vec<f64>,
}

impl BallScanner {
    pub fn new(domain: &GridDomain, values: &[f64]) -> Self {
        let n = domain.points_per_axis();
        let rows = domain.rows();
        let mut prefix = vec![0.0; rows * (n + 1)];
        exec::for_each_mut(&mut prefix.chunks_mut(n + 1).collect::<Vec<_>>(), |row, out| {
            let src = &values[row * n..(row + 1) * n];
            let mut acc = 0.0;
            for (j, v) in src.iter().enumerate() {
                acc += v;
                out[j + 1] = acc;
            }
        });
        Self {
            domain: *domain,
            prefix,
        }
    }

    pub fn sum(&self, stencil: &BallStencil, center: &Index) -> f64 {
        let stride = self.domain.points_per_axis() + 1;
        let mut acc = 0.0;
        stencil.segments(&self.domain, center, |row, s, e| {
            let base = row * stride;
            acc += self.prefix[base + e] - self.prefix[base + s];
        });
        acc
    }

    /// Ball sums for every center, in order.
    pub fn sums(&self, stencil: &BallStencil, centers: &[Index]) -> Vec<f64> {
        exec::map(centers, |c| self.sum(stencil, c))
    }
}

/// Finite family of balls: centers on a sublattice of stride `s` through the
/// origin node, radii `R ρ^j` down to a minimum radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallFamily {
    stride: usize,
    ratio: f64,
    anchor: f64,
    min_radius: f64,
    radii: Vec<f64>,
    #[serde(skip)]
    centers: Vec<Index>,
}

impl BallFamily {
    pub fn new(domain: &GridDomain, stride: usize, ratio: f64, min_radius: f64) -> Result<Self> {
        let h = domain.spacing();
        if stride == 0 {
            return Err(Error::InvalidParams("ball stride must be positive".into()));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidParams(format!(
                "radius ratio must lie in (0, 1), got {ratio}"
            )));
        }
        if !(min_radius >= h * (1.0 - 1e-12)) {
            return Err(Error::InvalidParams(format!(
                "minimum radius {min_radius} is below the grid spacing {h}"
            )));
        }
        let anchor = domain.half_width();
        let mut radii = Vec::new();
        let mut r = anchor;
        while r >= min_radius * (1.0 - 1e-12) {
            radii.push(r);
            r *= ratio;
        }
        if radii.is_empty() {
            return Err(Error::InvalidParams("ball family has no radii".into()));
        }
        let n = domain.points_per_axis();
        let origin = n / 2;
        let axis: Vec<usize> = (0..n)
            .filter(|i| (*i as isize - origin as isize).rem_euclid(stride as isize) == 0)
            .collect();
        let dim = domain.dim();
        let mut centers = Vec::new();
        let count = axis.len().pow(dim as u32);
        for k in 0..count {
            let mut rest = k;
            let mut idx = [0; 3];
            for a in (0..dim).rev() {
                idx[a] = axis[rest % axis.len()];
                rest /= axis.len();
            }
            centers.push(idx);
        }
        Ok(Self {
            stride,
            ratio,
            anchor,
            min_radius,
            radii,
            centers,
        })
    }

    /// Stride `N/16`, ratio `2^{-1/2}`, smallest radius at least `2h`.
    pub fn default_for(domain: &GridDomain) -> Self {
        let stride = (domain.points_per_axis() / 16).max(1);
        Self::new(
            domain,
            stride,
            std::f64::consts::FRAC_1_SQRT_2,
            2.0 * domain.spacing(),
        )
        .expect("default ball family is valid")
    }

    /// Halves the stride (to 1 when odd) and the minimum radius (not below
    /// `h`); every existing pair is kept.
    pub fn refine(&self, domain: &GridDomain) -> Result<Self> {
        let stride = if self.stride.is_multiple_of(2) {
            self.stride / 2
        } else {
            1
        };
        let min_radius = (self.min_radius / 2.0).max(domain.spacing());
        Self::new(domain, stride, self.ratio, min_radius)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn min_radius(&self) -> f64 {
        self.min_radius
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn centers(&self) -> &[Index] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.radii.len() * self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn balls(&self) -> impl Iterator<Item = Ball> + '_ {
        self.radii.iter().flat_map(move |&radius| {
            self.centers.iter().map(move |&center| Ball { center, radius })
        })
    }
}

/// Midpoint quadrature `h^dim Σ_{x_i ∈ B} |f(x_i)|^p`.
pub fn ball_lp_integral(f: &GridFunction, ball: &Ball, p: f64) -> Result<f64> {
    let domain = f.domain();
    let stencil = BallStencil::new(domain, ball.radius);
    let n = domain.points_per_axis();
    let mut count = 0;
    let mut acc = 0.0;
    stencil.segments(domain, &ball.center, |row, s, e| {
        count += e - s;
        acc += f.values()[row * n + s..row * n + e]
            .iter()
            .map(|&v| abs_pow(v, p))
            .sum::<f64>();
    });
    if count == 0 {
        return Err(degenerate(domain, ball));
    }
    Ok(domain.cell_volume() * acc)
}

/// Mean of the samples of `f` inside `ball`.
pub fn ball_mean(f: &GridFunction, ball: &Ball) -> Result<f64> {
    let domain = f.domain();
    let stencil = BallStencil::new(domain, ball.radius);
    let count = stencil.count(domain, &ball.center);
    if count == 0 {
        return Err(degenerate(domain, ball));
    }
    Ok(stencil.sum_direct(domain, &ball.center, f.values()) / count as f64)
}

fn degenerate(domain: &GridDomain, ball: &Ball) -> Error {
    Error::DegenerateBall {
        center: ball.center_point(domain)[..domain.dim()].to_vec(),
        radius: ball.radius,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, r: f64, b: Boundary) -> GridDomain {
        GridDomain::new(1, r, n, b).unwrap()
    }

    #[test]
    fn domain_validation() {
        assert!(GridDomain::new(4, 1.0, 8, Boundary::Periodic).is_err());
        assert!(GridDomain::new(1, 1.0, 7, Boundary::Periodic).is_err());
        assert!(GridDomain::new(1, -1.0, 8, Boundary::Periodic).is_err());
        assert!(GridDomain::new(3, 1.0, 1 << 10, Boundary::Periodic).is_err());
        let d = GridDomain::new(2, 2.0, 8, Boundary::Periodic).unwrap();
        assert_eq!(d.len(), 64);
        assert!((d.spacing() - 0.5).abs() < 1e-15);
        assert_eq!(d.point(d.flat_index(&d.origin())), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn sample_constant_and_zero() {
        let d = line(16, 1.0, Boundary::Periodic);
        assert!(sample(&d, |_| 0.0).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(sample(&d, |_| 1.0).unwrap().values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sample_rejects_non_finite_with_coordinate() {
        let d = line(16, 1.0, Boundary::Periodic);
        match sample(&d, |x| 1.0 / x[0].abs()) {
            Err(Error::NonFinite { coord, .. }) => assert_eq!(coord, vec![0.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn singular_node_is_cell_average() {
        // exact average of |x|^{-g} over [-h/2, h/2] is (h/2)^{-g} / (1 - g)
        let d = line(64, 1.0, Boundary::Periodic);
        let g = 0.25;
        let f = sample_regularized(&d, |x| x[0].abs().powf(-g)).unwrap();
        let h = d.spacing();
        let exact = (h / 2.0).powf(-g) / (1.0 - g);
        let got = f.values()[32];
        assert!((got - exact).abs() / exact < 1e-9, "{got} vs {exact}");
        // regular nodes untouched
        assert_eq!(f.values()[33], h.powf(-g));
    }

    #[test]
    fn singular_cell_average_two_dims() {
        // average of |x|^{-1/2} over the square [-a,a]^2 in polar form:
        // 8 ∫_0^{π/4} ∫_0^{a/cosθ} r^{1/2} dr dθ / (2a)^2
        let d = GridDomain::new(2, 1.0, 16, Boundary::Periodic).unwrap();
        let h = d.spacing();
        let a = h / 2.0;
        let (gx, gw) = gauss_legendre(16);
        let mut oracle = 0.0;
        for (x, w) in gx.iter().zip(&gw) {
            let th = std::f64::consts::FRAC_PI_8 * (1.0 + x);
            oracle += w * std::f64::consts::FRAC_PI_8 * (a / th.cos()).powf(1.5) / 1.5;
        }
        oracle *= 8.0 / (4.0 * a * a);
        let f = sample_regularized(&d, |x| (x[0] * x[0] + x[1] * x[1]).powf(-0.25)).unwrap();
        let got = f.values()[d.flat_index(&d.origin())];
        assert!((got - oracle).abs() / oracle < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn interval_measure() {
        let d = line(256, 4.0, Boundary::TruncatedDirichlet);
        let one = GridFunction::constant(d, 1.0);
        let h = d.spacing();
        for r in [0.5, 1.0, 1.3, 2.7] {
            let b = Ball::new(&d, &[0.0], r).unwrap();
            let v = ball_lp_integral(&one, &b, 1.0).unwrap();
            assert!((v - 2.0 * r).abs() <= h + 1e-12, "r={r}: {v}");
        }
    }

    #[test]
    fn ball_mean_examples() {
        let d = line(128, 2.0, Boundary::TruncatedDirichlet);
        let c = GridFunction::constant(d, 3.5);
        let b = Ball::new(&d, &[0.5], 0.7).unwrap();
        assert!((ball_mean(&c, &b).unwrap() - 3.5).abs() < 1e-14);
        let x = sample(&d, |p| p[0]).unwrap();
        let a = b.center_point(&d)[0];
        assert!((ball_mean(&x, &b).unwrap() - a).abs() <= d.spacing());
        let odd = sample(&d, |p| (p[0] - a).powi(3)).unwrap();
        assert!(ball_mean(&odd, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn bump_integral_matches_quadrature_oracle() {
        // ∫ exp(-1/(1-x^2)) over (-1,1) by 64-point Gauss on each half
        let bump = |x: f64| {
            if x.abs() < 1.0 {
                (-1.0 / (1.0 - x * x)).exp()
            } else {
                0.0
            }
        };
        let (gx, gw) = gauss_legendre(64);
        let oracle: f64 = gx
            .iter()
            .zip(&gw)
            .map(|(x, w)| 0.5 * w * (bump(0.5 * (x - 1.0)) + bump(0.5 * (x + 1.0))))
            .sum();
        let d = line(512, 2.0, Boundary::TruncatedDirichlet);
        let f = sample(&d, |p| bump(p[0])).unwrap();
        let b = Ball::new(&d, &[0.0], 1.5).unwrap();
        let v = ball_lp_integral(&f, &b, 1.0).unwrap();
        assert!((v - oracle).abs() / oracle < 0.01);
    }

    #[test]
    fn periodic_ball_wraps_and_counts_each_node_once() {
        let d = line(16, 1.0, Boundary::Periodic);
        let full = BallStencil::new(&d, 1.0);
        assert_eq!(full.count(&d, &[0, 0, 0]), 16);
        let s = BallStencil::new(&d, 2.0 * d.spacing());
        assert_eq!(s.count(&d, &[0, 0, 0]), 5);
        let t = line(16, 1.0, Boundary::TruncatedDirichlet);
        assert_eq!(BallStencil::new(&t, 2.0 * t.spacing()).count(&t, &[0, 0, 0]), 3);
    }

    #[test]
    fn scanner_agrees_with_direct_sums() {
        for boundary in [Boundary::Periodic, Boundary::TruncatedDirichlet] {
            let d = GridDomain::new(2, 1.0, 32, boundary).unwrap();
            let f = sample(&d, |p| (3.0 * p[0]).sin() + p[1] * p[1]).unwrap();
            let scan = BallScanner::new(&d, f.values());
            let fam = BallFamily::default_for(&d);
            for ball in fam.balls() {
                let st = BallStencil::new(&d, ball.radius);
                let a = scan.sum(&st, &ball.center);
                let b = st.sum_direct(&d, &ball.center, f.values());
                assert!((a - b).abs() <= 1e-11 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn default_family_shape() {
        let d = line(512, 4.0, Boundary::Periodic);
        let fam = BallFamily::default_for(&d);
        assert_eq!(fam.stride(), 32);
        assert_eq!(fam.centers().len(), 16);
        assert!(fam.radii().last().unwrap() >= &(2.0 * d.spacing() * (1.0 - 1e-12)));
        assert!((fam.radii()[0] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn refinement_keeps_every_pair() {
        let d = GridDomain::new(2, 1.0, 64, Boundary::TruncatedDirichlet).unwrap();
        let coarse = BallFamily::default_for(&d);
        let fine = coarse.refine(&d).unwrap();
        assert!(fine.len() > coarse.len());
        for ball in coarse.balls() {
            assert!(fine.balls().any(|b| b.center == ball.center
                && (b.radius - ball.radius).abs() < 1e-12 * ball.radius));
        }
    }
}
