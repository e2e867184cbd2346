//! The Gaussian sequence model `Y = θ₀ + Z`, `Z ~ N(0, σ² I)`, with
//! counter-based noise streams so that replicate `i` always sees the same
//! noise no matter which worker draws it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSequenceModel<T> {
    theta0: Vec<T>,
    sigma: T,
}

impl<T: Scalar> GaussianSequenceModel<T> {
    pub fn new(theta0: Vec<T>, sigma: T) -> Result<Self> {
        if theta0.is_empty() {
            return Err(Error::param("theta0", "dimension n must be at least 1"));
        }
        if theta0.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("theta0"));
        }
        if !sigma.is_finite() || sigma <= T::zero() {
            return Err(Error::param(
                "sigma",
                format!("noise level must be positive and finite, got {sigma}"),
            ));
        }
        Ok(GaussianSequenceModel { theta0, sigma })
    }

    pub fn n(&self) -> usize {
        self.theta0.len()
    }

    pub fn theta0(&self) -> &[T] {
        &self.theta0
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn sigma_sq(&self) -> T {
        self.sigma * self.sigma
    }

    /// Builds the observation `θ₀ + z` for a given noise realization.
    ///
    /// The stored noise is recomputed as `y − θ₀`, so `y − θ₀ − z` is exactly
    /// zero in floating point.
    pub fn observe(&self, noise: &[T]) -> Result<Observation<T>> {
        if noise.len() != self.n() {
            return Err(Error::shape("observation noise", self.n(), noise.len()));
        }
        let y: Vec<T> = self.theta0.iter().zip(noise).map(|(&t, &e)| t + e).collect();
        let z = y.iter().zip(&self.theta0).map(|(&yi, &t)| yi - t).collect();
        Ok(Observation { y, z })
    }

    /// Draws one observation from `stream`.
    pub fn sample(&self, stream: &mut NoiseStream) -> Observation<T> {
        let noise: Vec<T> = (0..self.n())
            .map(|_| self.sigma * stream.standard_normal::<T>())
            .collect();
        self.observe(&noise).expect("noise has model dimension")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub y: Vec<T>,
    /// Realized noise `y − θ₀`.
    pub z: Vec<T>,
}

/// Truth-vector recipes for experiment scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaKind {
    Zero,
    Constant { value: f64 },
    /// `amplitude` in the first `k` coordinates, zero elsewhere.
    Sparse { k: usize, amplitude: f64 },
    /// `θ_i = scale · i^(−alpha)` with 1-based `i`.
    PolyDecay { alpha: f64, scale: f64 },
    Explicit { values: Vec<f64> },
}

pub fn make_theta0<T: Scalar>(kind: &ThetaKind, n: usize) -> Result<Vec<T>> {
    if n == 0 {
        return Err(Error::param("n", "dimension must be at least 1"));
    }
    let finite = |name: &'static str, v: f64| {
        if v.is_finite() {
            Ok(T::of(v))
        } else {
            Err(Error::param(name, format!("must be finite, got {v}")))
        }
    };
    let theta = match *kind {
        ThetaKind::Zero => vec![T::zero(); n],
        ThetaKind::Constant { value } => vec![finite("value", value)?; n],
        ThetaKind::Sparse { k, amplitude } => {
            if k > n {
                return Err(Error::param("k", format!("sparsity {k} exceeds dimension {n}")));
            }
            let a = finite("amplitude", amplitude)?;
            (0..n).map(|i| if i < k { a } else { T::zero() }).collect()
        }
        ThetaKind::PolyDecay { alpha, scale } => {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
            }
            let scale = finite("scale", scale)?;
            (1..=n)
                .map(|i| scale * T::of_usize(i).powf(T::of(-alpha)))
                .collect()
        }
        ThetaKind::Explicit { ref values } => {
            if values.len() != n {
                return Err(Error::shape("explicit theta0", n, values.len()));
            }
            values
                .iter()
                .map(|&v| finite("values", v))
                .collect::<Result<_>>()?
        }
    };
    Ok(theta)
}

/// Independent random stream for one replicate.
///
/// A ChaCha8 generator keyed by the master seed, with the replicate index as
/// its 64-bit stream id: distinct indices give non-overlapping sequences and
/// the mapping does not depend on scheduling. Normal variates come from the
/// ziggurat sampler in `rand_distr::StandardNormal`.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

pub fn derive_stream(master_seed: u64, replicate_index: u64) -> NoiseStream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate_index);
    NoiseStream { rng }
}

impl NoiseStream {
    pub fn standard_normal<T: Scalar>(&mut self) -> T {
        let g: f64 = StandardNormal.sample(&mut self.rng);
        T::of(g)
    }

    pub fn standard_normal_vec<T: Scalar>(&mut self, len: usize) -> Vec<T> {
        (0..len).map(|_| self.standard_normal()).collect()
    }
}

impl RngCore for NoiseStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_constructors() {
        assert_eq!(make_theta0::<f64>(&ThetaKind::Zero, 3).unwrap(), vec![0.0; 3]);
        assert_eq!(
            make_theta0::<f64>(&ThetaKind::Sparse { k: 1, amplitude: 2.0 }, 3).unwrap(),
            vec![2.0, 0.0, 0.0]
        );
        let poly = make_theta0::<f64>(&ThetaKind::PolyDecay { alpha: 1.0, scale: 1.0 }, 3).unwrap();
        let expected = [1.0, 0.5, 1.0 / 3.0];
        for (a, b) in poly.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(
            make_theta0::<f64>(&ThetaKind::Constant { value: -1.5 }, 2).unwrap(),
            vec![-1.5, -1.5]
        );
    }

    #[test]
    fn theta_parameter_errors() {
        let bad = [
            (ThetaKind::Sparse { k: 4, amplitude: 1.0 }, 3),
            (ThetaKind::PolyDecay { alpha: 0.0, scale: 1.0 }, 3),
            (ThetaKind::PolyDecay { alpha: -1.0, scale: 1.0 }, 3),
            (ThetaKind::Zero, 0),
            (ThetaKind::Explicit { values: vec![1.0] }, 2),
            (ThetaKind::Constant { value: f64::NAN }, 2),
        ];
        for (kind, n) in bad {
            assert!(make_theta0::<f64>(&kind, n).is_err(), "{kind:?} n={n}");
        }
    }

    #[test]
    fn model_invariants() {
        assert!(GaussianSequenceModel::new(vec![1.0, 0.0], 0.0).is_err());
        assert!(GaussianSequenceModel::new(vec![1.0, 0.0], -1.0).is_err());
        assert!(GaussianSequenceModel::<f64>::new(vec![], 1.0).is_err());
        assert!(GaussianSequenceModel::new(vec![f64::INFINITY], 1.0).is_err());
    }

    #[test]
    fn observation_is_exact() {
        let model = GaussianSequenceModel::new(vec![1.0, 0.0, 1e17, -3.25], 0.7).unwrap();
        for rep in 0..100 {
            let obs = model.sample(&mut derive_stream(9, rep));
            for i in 0..model.n() {
                assert_eq!(obs.y[i] - model.theta0()[i] - obs.z[i], 0.0);
            }
        }
        let obs = model.observe(&[1e-17, 0.5, 0.5, 0.0]).unwrap();
        assert_eq!(obs.y[0] - 1.0 - obs.z[0], 0.0);
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a: f64 = derive_stream(42, 0).standard_normal();
        let b: f64 = derive_stream(42, 0).standard_normal();
        let c: f64 = derive_stream(42, 1).standard_normal();
        let d: f64 = derive_stream(43, 0).standard_normal();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn noise_moments() {
        let reps = 100_000u64;
        let sigma = 2.0;
        let model = GaussianSequenceModel::new(vec![0.0; 3], sigma).unwrap();
        let mut sum = [0.0; 3];
        let mut sum_sq = [0.0; 3];
        for r in 0..reps {
            let obs = model.sample(&mut derive_stream(1234, r));
            for i in 0..3 {
                sum[i] += obs.z[i];
                sum_sq[i] += obs.z[i] * obs.z[i];
            }
        }
        let rf = reps as f64;
        for i in 0..3 {
            let mean = sum[i] / rf;
            let var = (sum_sq[i] - rf * mean * mean) / (rf - 1.0);
            assert!(mean.abs() <= 4.0 * sigma / rf.sqrt(), "mean {mean}");
            let s2 = sigma * sigma;
            assert!((var - s2).abs() <= 4.0 * s2 * (2.0 / rf).sqrt(), "var {var}");
        }
    }
}
