use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::model::{Millis, OpRef};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbKind {
    None,
    UniformFactor { lo: f64, hi: f64 },
    Lognormal { sigma: f64 },
}

/// Multiplies each nominal duration by a random factor. The factor of an
/// operation depends only on the seed and the operation, so every strategy
/// sees the same realized time for the same (job, stage).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    #[serde(flatten)]
    pub kind: PerturbKind,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PerturbError {
    #[error("uniform factor bounds must satisfy 0 < lo <= hi, got ({0}, {1})")]
    BadUniform(f64, f64),
    #[error("lognormal sigma must be finite and >= 0, got {0}")]
    BadSigma(f64),
    #[error("cannot parse perturbation `{0}` (expected none, uniform:LO:HI or lognormal:SIGMA)")]
    Syntax(String),
}

impl Perturbation {
    pub fn none() -> Self {
        Self {
            kind: PerturbKind::None,
            seed: 0,
        }
    }

    pub fn uniform(lo: f64, hi: f64, seed: u64) -> Result<Self, PerturbError> {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(PerturbError::BadUniform(lo, hi));
        }
        Ok(Self {
            kind: PerturbKind::UniformFactor { lo, hi },
            seed,
        })
    }

    pub fn lognormal(sigma: f64, seed: u64) -> Result<Self, PerturbError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(PerturbError::BadSigma(sigma));
        }
        Ok(Self {
            kind: PerturbKind::Lognormal { sigma },
            seed,
        })
    }

    /// Parses `none`, `uniform:LO:HI` or `lognormal:SIGMA`.
    pub fn parse(text: &str, seed: u64) -> Result<Self, PerturbError> {
        let parts: Vec<&str> = text.split(':').collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| PerturbError::Syntax(text.into()));
        match parts.as_slice() {
            ["none"] => Ok(Self::none()),
            ["uniform", lo, hi] => Self::uniform(num(lo)?, num(hi)?, seed),
            ["lognormal", sigma] => Self::lognormal(num(sigma)?, seed),
            _ => Err(PerturbError::Syntax(text.into())),
        }
    }

    pub fn factor(&self, op: &OpRef) -> f64 {
        match self.kind {
            PerturbKind::None => 1.0,
            PerturbKind::UniformFactor { lo, hi } if lo == hi => lo,
            PerturbKind::UniformFactor { lo, hi } => self.rng(op).random_range(lo..hi),
            PerturbKind::Lognormal { sigma } if sigma == 0.0 => 1.0,
            PerturbKind::Lognormal { sigma } => LogNormal::new(0.0, sigma)
                .expect("sigma validated")
                .sample(&mut self.rng(op)),
        }
    }

    /// Realized duration, at least 1 ms. Exact when the factor is 1.
    pub fn realize(&self, op: &OpRef, nominal: Millis) -> Millis {
        let f = self.factor(op);
        if f == 1.0 {
            return nominal;
        }
        ((nominal as f64 * f).round() as Millis).max(1)
    }

    fn rng(&self, op: &OpRef) -> ChaCha8Rng {
        // FNV-1a over "job.stage", mixed with the seed
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in op.job.bytes().chain([b'.']).chain((op.stage as u64).to_le_bytes()) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        ChaCha8Rng::seed_from_u64(h ^ self.seed.rotate_left(17))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn none_is_identity() {
        let p = Perturbation::none();
        assert_eq!(p.realize(&OpRef::new("J1", 1), 3001), 3001);
    }

    #[test]
    fn degenerate_uniform_scales_exactly() {
        let p = Perturbation::uniform(1.5, 1.5, 9).unwrap();
        assert_eq!(p.realize(&OpRef::new("J1", 2), 3000), 4500);
    }

    #[test]
    fn factors_are_seeded_per_operation() {
        let p = Perturbation::uniform(0.5, 2.0, 4).unwrap();
        let a = OpRef::new("J1", 1);
        assert_eq!(p.factor(&a), p.factor(&a));
        assert_ne!(p.factor(&a), p.factor(&OpRef::new("J1", 2)));
        for q in 1..50 {
            let f = p.factor(&OpRef::new("x", q));
            assert!((0.5..2.0).contains(&f));
        }
    }

    #[test]
    fn parse_forms() {
        assert_eq!(Perturbation::parse("none", 3).unwrap().kind, PerturbKind::None);
        assert_eq!(
            Perturbation::parse("uniform:0.9:1.1", 3).unwrap().kind,
            PerturbKind::UniformFactor { lo: 0.9, hi: 1.1 }
        );
        assert!(Perturbation::parse("uniform:2:1", 3).is_err());
        assert!(Perturbation::parse("lognormal:-1", 3).is_err());
        assert!(Perturbation::parse("gauss", 3).is_err());
        let ln = Perturbation::parse("lognormal:0.2", 3).unwrap();
        assert!(ln.factor(&OpRef::new("J", 1)) > 0.0);
    }
}
