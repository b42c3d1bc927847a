//! On-disk cache of dense eigendecompositions, keyed by a SHA-256 digest of
//! the operator matrix inputs.
//!
//! The directory comes from `CAMPANATO_CACHE_DIR` when set.

use crate::error::Result;
use crate::grid::{Boundary, GridDomain};
use crate::io::{read_array, write_array, GridHeader};
use crate::spectral::{OperatorEngine, OperatorSpec};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const CACHE_ENV: &str = "CAMPANATO_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    /// Fourier engines are cheap to rebuild and never stored.
    Bypass,
}

/// Hex digest of everything that determines the operator matrix: the grid and
/// the potential values. The order `m` only affects how the spectrum is used.
pub fn cache_key(spec: &OperatorSpec, domain: &GridDomain) -> String {
    let mut h = Sha256::new();
    h.update(b"campanato-eigen-v1");
    h.update((domain.dim() as u64).to_le_bytes());
    h.update(domain.half_width().to_le_bytes());
    h.update((domain.points_per_axis() as u64).to_le_bytes());
    h.update([match domain.boundary() {
        Boundary::Periodic => 0u8,
        Boundary::TruncatedDirichlet => 1u8,
    }]);
    match spec.potential() {
        None => h.update([0u8]),
        Some(v) => {
            h.update([1u8]);
            for x in v.values() {
                h.update(x.to_le_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct EngineCache {
    dir: PathBuf,
}

impl EngineCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn stems(&self, key: &str) -> (PathBuf, PathBuf) {
        (self.dir.join(format!("{key}_values")), self.dir.join(format!("{key}_vectors")))
    }

    /// Loads the engine from the cache or builds and stores it. Unreadable
    /// entries are rebuilt rather than reported.
    pub fn build(&self, spec: OperatorSpec, domain: &GridDomain) -> Result<(OperatorEngine, CacheStatus)> {
        let fourier = matches!(spec.kind, crate::spectral::OperatorKind::Laplacian) && domain.is_periodic();
        if fourier {
            return Ok((OperatorEngine::build(spec, domain)?, CacheStatus::Bypass));
        }
        let key = cache_key(&spec, domain);
        let (vs, vecs) = self.stems(&key);
        if let Ok(engine) = self.load(&spec, domain, &vs, &vecs) {
            return Ok((engine, CacheStatus::Hit));
        }
        let engine = OperatorEngine::build(spec, domain)?;
        if let Some((values, vectors)) = engine.eigen_parts() {
            let mut header = GridHeader::for_domain(domain);
            write_array(&vs, &header, values)?;
            header.shape = Some(vec![vectors.nrows(), vectors.ncols()]);
            write_array(&vecs, &header, vectors.as_slice())?;
        }
        Ok((engine, CacheStatus::Miss))
    }

    fn load(&self, spec: &OperatorSpec, domain: &GridDomain, vs: &Path, vecs: &Path) -> Result<OperatorEngine> {
        let (_, values) = read_array(vs)?;
        let (header, data) = read_array(vecs)?;
        let n = domain.len();
        if header.domain()? != *domain || header.shape != Some(vec![n, n]) || data.len() != n * n {
            return Err(crate::Error::Config("cache entry does not match the domain".into()));
        }
        OperatorEngine::from_parts(spec.clone(), domain, values, DMatrix::from_vec(n, n, data))
    }
}

/// Builds through the `CAMPANATO_CACHE_DIR` cache when it is set.
pub fn build_engine(spec: OperatorSpec, domain: &GridDomain) -> Result<OperatorEngine> {
    match EngineCache::from_env() {
        Some(cache) => cache.build(spec, domain).map(|(e, _)| e),
        None => OperatorEngine::build(spec, domain),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample, GridFunction};

    #[test]
    fn second_build_hits_and_matches() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EngineCache::new(dir.path());
        let d = GridDomain::new(1, 2.0, 32, Boundary::TruncatedDirichlet).unwrap();
        let v = sample(&d, |x| 1.0 + x[0] * x[0]).unwrap();
        let (a, s1) = cache.build(OperatorSpec::schrodinger(v.clone()), &d).unwrap();
        let (b, s2) = cache.build(OperatorSpec::schrodinger(v.clone()), &d).unwrap();
        assert_eq!((s1, s2), (CacheStatus::Miss, CacheStatus::Hit));
        assert_eq!(a.eigenvalues(), b.eigenvalues());
        let f = sample(&d, |x| (-x[0] * x[0]).exp()).unwrap();
        assert_eq!(a.heat_apply(0.3, &f).unwrap(), b.heat_apply(0.3, &f).unwrap());
        let other = GridFunction::constant(d, 2.0);
        assert_ne!(cache_key(&OperatorSpec::schrodinger(other), &d), cache_key(&OperatorSpec::schrodinger(v), &d));
    }

    #[test]
    fn fourier_engines_bypass() {
        let dir = tempfile::tempdir().unwrap();
        let d = GridDomain::new(1, 2.0, 32, Boundary::Periodic).unwrap();
        let (_, s) = EngineCache::new(dir.path()).build(OperatorSpec::laplacian(), &d).unwrap();
        assert_eq!(s, CacheStatus::Bypass);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn corrupt_entries_are_rebuilt() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EngineCache::new(dir.path());
        let d = GridDomain::new(1, 1.0, 16, Boundary::Periodic).unwrap();
        let spec = OperatorSpec::schrodinger(GridFunction::constant(d, 1.0));
        cache.build(spec.clone(), &d).unwrap();
        let key = cache_key(&spec, &d);
        std::fs::write(dir.path().join(format!("{key}_vectors.bin")), b"junk").unwrap();
        let (_, s) = cache.build(spec, &d).unwrap();
        assert_eq!(s, CacheStatus::Miss);
    }
}
