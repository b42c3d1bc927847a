//! Deterministic test functions for the experiments.
//!
//! A corpus spec is a list of generator names, each optionally followed by
//! `:count`:
//!
//! | name              | default count | functions                                     |
//! |-------------------|---------------|-----------------------------------------------|
//! | `constants`       | 1             | nonzero constants                             |
//! | `modes`           | 1             | `cos(π j x_a / R)` cycling over the axes      |
//! | `trig`            | 1             | random trigonometric polynomials, degree ≤ 4  |
//! | `bumps`           | 3             | smooth bumps of width `R/3` at shifted centers |
//! | `indicators`      | 2             | indicators of balls of radius `R/4`           |
//! | `morrey_singular` | 3             | `|x - x₀|^{-(n-λ)/p}` at three placements      |

use campanato_core::grid::{sample, sample_regularized, GridDomain, GridFunction};
use campanato_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct CorpusSpec {
    pub generators: Vec<String>,
    #[serde(default)]
    pub seed: u64,
}


#[derive(Debug, Clone, PartialEq)]
pub struct NamedFunction {
    pub name: String,
    pub f: GridFunction,
}

/// Exponent data for the singular generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularExponent {
    pub p: f64,
    pub lambda: f64,
}

const CONSTANTS: [f64; 4] = [1.0, -2.5, 0.5, 4.0];
const TRIG_DEGREE: i64 = 4;

fn parse(entry: &str) -> Result<(&str, Option<usize>)> {
    match entry.split_once(':') {
        None => Ok((entry.trim(), None)),
        Some((name, count)) => {
            let n = count
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad count in corpus entry `{entry}`")))?;
            Ok((name.trim(), Some(n)))
        }
    }
}

/// Checks names and counts without sampling anything.
pub fn validate_spec(spec: &CorpusSpec) -> Result<()> {
    if spec.generators.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for g in &spec.generators {
        let (name, _) = parse(g)?;
        if !matches!(name, "constants" | "modes" | "trig" | "bumps" | "indicators" | "morrey_singular") {
            return Err(Error::UnknownGenerator(name.to_string()));
        }
    }
    Ok(())
}

pub fn generate_corpus(spec: &CorpusSpec, domain: &GridDomain, exponent: SingularExponent) -> Result<Vec<NamedFunction>> {
    validate_spec(spec)?;
    let r = domain.half_width();
    let dim = domain.dim();
    let mut out = Vec::new();
    for (gi, g) in spec.generators.iter().enumerate() {
        let (name, count) = parse(g)?;
        match name {
            "constants" => {
                for j in 0..count.unwrap_or(1) {
                    let c = CONSTANTS[j % CONSTANTS.len()] * (1 + j / CONSTANTS.len()) as f64;
                    out.push(NamedFunction { name: format!("constant_{j}"), f: GridFunction::constant(*domain, c) });
                }
            }
            "modes" => {
                for j in 1..=count.unwrap_or(1) {
                    let axis = (j - 1) % dim;
                    let k = std::f64::consts::PI * j as f64 / r;
                    out.push(NamedFunction { name: format!("mode_{j}"), f: sample(domain, |x| (k * x[axis]).cos())? });
                }
            }
            "trig" => {
                let terms: Vec<[i64; 3]> = lattice(dim);
                for j in 0..count.unwrap_or(1) {
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ ((gi as u64) << 32) ^ j as u64);
                    let coeffs: Vec<(f64, f64)> = terms
                        .iter()
                        .map(|k| {
                            let norm2: i64 = k.iter().map(|v| v * v).sum();
                            let a = rng.gen_range(-1.0..1.0) / (1.0 + norm2 as f64);
                            (a, rng.gen_range(0.0..std::f64::consts::TAU))
                        })
                        .collect();
                    let f = sample(domain, |x| {
                        terms
                            .iter()
                            .zip(&coeffs)
                            .map(|(k, (a, phi))| {
                                let phase: f64 = (0..dim).map(|ax| k[ax] as f64 * x[ax]).sum::<f64>();
                                a * (std::f64::consts::PI * phase / r + phi).cos()
                            })
                            .sum()
                    })?;
                    out.push(NamedFunction { name: format!("trig_{j}"), f });
                }
            }
            "bumps" => {
                let n = count.unwrap_or(3);
                for j in 0..n {
                    let shift = r * (-0.5 + j as f64 / n as f64);
                    let w = r / 3.0;
                    let f = sample(domain, |x| {
                        let s: f64 = (0..dim)
                            .map(|ax| {
                                let c = if ax == 0 { shift } else { 0.0 };
                                (x[ax] - c).powi(2)
                            })
                            .sum::<f64>()
                            / (w * w);
                        if s < 1.0 {
                            (1.0 - 1.0 / (1.0 - s)).exp()
                        } else {
                            0.0
                        }
                    })?;
                    out.push(NamedFunction { name: format!("bump_{j}"), f });
                }
            }
            "indicators" => {
                let n = count.unwrap_or(2);
                for j in 0..n {
                    let shift = r * (-0.25 + 0.5 * j as f64 / n.max(1) as f64);
                    let rad = r / 4.0;
                    let f = sample(domain, |x| {
                        let s: f64 = (0..dim)
                            .map(|ax| (x[ax] - if ax == 0 { shift } else { 0.0 }).powi(2))
                            .sum();
                        if s <= rad * rad {
                            1.0
                        } else {
                            0.0
                        }
                    })?;
                    out.push(NamedFunction { name: format!("indicator_{j}"), f });
                }
            }
            "morrey_singular" => {
                let a = -(dim as f64 - exponent.lambda) / exponent.p;
                let placements = [0.0, 0.25 * r, -0.5 * r];
                for (j, &off) in placements.iter().take(count.unwrap_or(3)).enumerate() {
                    let mut at = [0.0; 3];
                    at[0] = off;
                    let x0 = domain.point(domain.flat_index(&domain.snap(&at[..dim])));
                    let f = sample_regularized(domain, |x| {
                        let d2: f64 = (0..dim).map(|ax| (x[ax] - x0[ax]).powi(2)).sum();
                        d2.sqrt().powf(a)
                    })?;
                    out.push(NamedFunction { name: format!("singular_{j}"), f });
                }
            }
            _ => unreachable!("validated above"),
        }
    }
    Ok(out)
}

/// Frequency vectors with entries in `-D..=D`, one of each `±k` pair.
fn lattice(dim: usize) -> Vec<[i64; 3]> {
    let d = TRIG_DEGREE;
    let mut out = Vec::new();
    let range = |ax: usize| if ax < dim { -d..=d } else { 0..=0 };
    for a in range(0) {
        for b in range(1) {
            for c in range(2) {
                let k = [a, b, c];
                if k > [0, 0, 0] {
                    out.push(k);
                }
            }
        }
    }
    out
}
