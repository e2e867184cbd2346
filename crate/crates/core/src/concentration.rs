//! Numerical checks of sub-exponential moment-generating-function bounds for
//! Gaussian quadratic forms and of moment bounds for maxima.
//!
//! A mean-zero `X` is `(τ², b)`-sub-exponential when
//! `E[exp(λX)] ≤ exp(λ²τ²/2)` for all `|λ| ≤ 1/b` (`b = 0`: sub-Gaussian).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, symmetric_eigen, Matrix};
use crate::montecarlo::{Accumulator, Estimate};
use crate::scalar::Scalar;
use crate::sequence_model::{derive_stream, NoiseStream};

/// Smallest sample size accepted by the Monte Carlo MGF check.
pub const MIN_MGF_SAMPLES: usize = 10_000;

/// Default multiplier for constant-free bounds in smoke tests.
pub const DEFAULT_C_TEST: f64 = 10.0;

/// Samples drawn per derived stream.
const SAMPLE_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubExpParams<T> {
    pub tau_sq: T,
    pub b: T,
}

impl<T: Scalar> SubExpParams<T> {
    pub fn new(tau_sq: T, b: T) -> Result<Self> {
        if !(tau_sq >= T::zero()) || !tau_sq.is_finite() {
            return Err(Error::param("tau_sq", format!("must be nonnegative, got {tau_sq}")));
        }
        if !(b >= T::zero()) || !b.is_finite() {
            return Err(Error::param("b", format!("must be nonnegative, got {b}")));
        }
        Ok(SubExpParams { tau_sq, b })
    }

    pub fn is_sub_gaussian(&self) -> bool {
        self.b == T::zero()
    }

    /// `1/b`, or `None` when every `λ` is admissible.
    pub fn lambda_limit(&self) -> Option<T> {
        (self.b > T::zero()).then(|| T::one() / self.b)
    }

    pub fn check_lambda(&self, lambda: T) -> Result<()> {
        match self.lambda_limit() {
            Some(limit) if lambda.abs() > limit => Err(Error::Domain {
                lambda: lambda.as_f64(),
                limit: limit.as_f64(),
            }),
            _ if !lambda.is_finite() => Err(Error::param("lambda", "must be finite")),
            _ => Ok(()),
        }
    }

    /// `exp(λ²τ²/2)`.
    pub fn mgf_bound(&self, lambda: T) -> T {
        (lambda * lambda * self.tau_sq / T::of(2.0)).exp()
    }
}

/// Both sub-exponential parameterizations of `ZᵀAZ` (centered), for
/// `Z ~ N(0, I)`: `(tr((A + Aᵀ)²), 2‖A + Aᵀ‖_op)` and `(‖A‖_F², 4‖A‖_op)`.
pub fn quadratic_form_params<T: Scalar>(
    a: &Matrix<T>,
) -> Result<(SubExpParams<T>, SubExpParams<T>)> {
    if !a.is_square() {
        return Err(Error::shape(
            "quadratic form",
            "square matrix",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("quadratic form matrix"));
    }
    let sym = Matrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + a[(j, i)]);
    // sym is symmetric, so tr(sym²) = ‖sym‖_F².
    let first = SubExpParams {
        tau_sq: sym.frob_sq(),
        b: T::of(2.0) * operator_norm(&sym)?,
    };
    let second = SubExpParams {
        tau_sq: a.frob_sq(),
        b: T::of(4.0) * operator_norm(a)?,
    };
    Ok((first, second))
}

/// `(4‖A‖_F², 4‖A‖_op)`: the variance proxy the bound `tr((A + Aᵀ)²) ≤
/// 4‖A‖_F²` supports, for comparison with the second parameterization.
pub fn quadratic_form_params_inflated<T: Scalar>(a: &Matrix<T>) -> Result<SubExpParams<T>> {
    let (_, second) = quadratic_form_params(a)?;
    Ok(SubExpParams {
        tau_sq: T::of(4.0) * second.tau_sq,
        b: second.b,
    })
}

/// Eigenvalues of the symmetric part of `a`.
fn symmetric_part_eigenvalues<T: Scalar>(a: &Matrix<T>) -> Result<Vec<T>> {
    if a.is_diagonal() {
        Ok(a.diagonal())
    } else {
        Ok(symmetric_eigen(&a.symmetrized())?.values)
    }
}

/// `ln E[exp(λ(ZᵀAZ − tr A))]` in closed form,
/// `Σ_i (−λμ_i − ½ ln(1 − 2λμ_i))` over eigenvalues `μ_i` of `(A + Aᵀ)/2`.
/// `None` where the MGF is infinite.
pub fn quadratic_form_log_mgf<T: Scalar>(a: &Matrix<T>, lambda: T) -> Result<Option<T>> {
    let mu = symmetric_part_eigenvalues(a)?;
    let two = T::of(2.0);
    let mut acc = T::zero();
    for m in mu {
        let arg = T::one() - two * lambda * m;
        if arg <= T::zero() {
            return Ok(None);
        }
        acc += -lambda * m - arg.ln() / two;
    }
    Ok(Some(acc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MgfMethod {
    Exact,
    MonteCarlo,
}

/// One `λ` of an MGF verification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgfRow {
    pub lambda: f64,
    pub estimate: f64,
    /// `None` for the exact path.
    pub stderr: Option<f64>,
    /// `exp(λ²τ²/2)`.
    pub bound: f64,
    pub method: MgfMethod,
    pub pass: bool,
}

fn mgf_pass(estimate: f64, stderr: Option<f64>, bound: f64, slack: f64) -> bool {
    estimate <= bound * (1.0 + slack) + 4.0 * stderr.unwrap_or(0.0)
}

fn check_grid<T: Scalar>(params: &SubExpParams<T>, grid: &[T], slack: f64) -> Result<()> {
    if !(slack >= 0.0) {
        return Err(Error::param("slack", format!("must be nonnegative, got {slack}")));
    }
    grid.iter().try_for_each(|&l| params.check_lambda(l))
}

/// Draws `n_samples` values of `sampler`, chunked over derived streams so the
/// draws do not depend on the thread count.
pub fn draw_samples<T, F>(sampler: &F, n_samples: usize, master_seed: u64) -> Vec<T>
where
    T: Scalar,
    F: Fn(&mut NoiseStream) -> T + Sync,
{
    let chunks = n_samples.div_ceil(SAMPLE_CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut stream = derive_stream(master_seed, c as u64);
            let len = SAMPLE_CHUNK.min(n_samples - c * SAMPLE_CHUNK);
            (0..len).map(move |_| sampler(&mut stream)).collect::<Vec<_>>()
        })
        .collect()
}

/// Monte Carlo check of `E[exp(λX)] ≤ exp(λ²τ²/2)` on a grid of `λ`.
///
/// Each row passes when the estimate is at most
/// `exp(λ²τ²/2)·(1 + slack) + 4·stderr`.
pub fn verify_mgf_bound<T, F>(
    sampler: F,
    params: &SubExpParams<T>,
    lambda_grid: &[T],
    n_samples: usize,
    slack: f64,
    master_seed: u64,
) -> Result<Vec<MgfRow>>
where
    T: Scalar,
    F: Fn(&mut NoiseStream) -> T + Sync,
{
    check_grid(params, lambda_grid, slack)?;
    if n_samples < MIN_MGF_SAMPLES {
        return Err(Error::param(
            "n_samples",
            format!("need at least {MIN_MGF_SAMPLES}, got {n_samples}"),
        ));
    }
    let xs = draw_samples(&sampler, n_samples, master_seed);
    Ok(lambda_grid
        .iter()
        .map(|&lambda| {
            let mut acc = Accumulator::default();
            for &x in &xs {
                acc.push((lambda * x).exp().as_f64());
            }
            let est = acc.estimate();
            let bound = params.mgf_bound(lambda).as_f64();
            MgfRow {
                lambda: lambda.as_f64(),
                estimate: est.mean,
                stderr: est.stderr,
                bound,
                method: MgfMethod::MonteCarlo,
                pass: mgf_pass(est.mean, est.stderr, bound, slack),
            }
        })
        .collect())
}

/// Sampler for `ZᵀAZ − tr(A)` with `Z ~ N(0, I)`.
pub fn quadratic_form_sampler<T: Scalar>(a: &Matrix<T>) -> impl Fn(&mut NoiseStream) -> T + Sync + '_ {
    let trace = a.trace();
    move |stream| {
        let z: Vec<T> = stream.standard_normal_vec(a.nrows());
        let az = a.matvec(&z);
        crate::scalar::dot(&z, &az) - trace
    }
}

/// MGF check for the centered quadratic form `ZᵀAZ − tr(A)`, either through
/// the closed-form MGF or by sampling.
pub fn verify_quadratic_form_mgf<T: Scalar>(
    a: &Matrix<T>,
    params: &SubExpParams<T>,
    lambda_grid: &[T],
    method: MgfMethod,
    n_samples: usize,
    slack: f64,
    master_seed: u64,
) -> Result<Vec<MgfRow>> {
    match method {
        MgfMethod::MonteCarlo => verify_mgf_bound(
            quadratic_form_sampler(a),
            params,
            lambda_grid,
            n_samples,
            slack,
            master_seed,
        ),
        MgfMethod::Exact => {
            check_grid(params, lambda_grid, slack)?;
            lambda_grid
                .iter()
                .map(|&lambda| {
                    let estimate = quadratic_form_log_mgf(a, lambda)?
                        .map_or(f64::INFINITY, |l| l.exp().as_f64());
                    let bound = params.mgf_bound(lambda).as_f64();
                    Ok(MgfRow {
                        lambda: lambda.as_f64(),
                        estimate,
                        stderr: None,
                        bound,
                        method: MgfMethod::Exact,
                        pass: mgf_pass(estimate, None, bound, slack),
                    })
                })
                .collect()
        }
    }
}

/// `λ = ±f/b` for each fraction `f` (plus `0`), sorted and deduplicated.
pub fn lambda_grid_from_fractions<T: Scalar>(params: &SubExpParams<T>, fractions: &[f64]) -> Vec<T> {
    let unit = params.lambda_limit().unwrap_or(T::one());
    let mut grid: Vec<T> = vec![T::zero()];
    for &f in fractions {
        grid.push(T::of(f) * unit);
        grid.push(-T::of(f) * unit);
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    grid.dedup();
    grid
}

fn check_moment_args<T: Scalar>(n_vars: usize, k: T) -> Result<()> {
    if n_vars < 1 {
        return Err(Error::param("n_vars", "need at least one variable"));
    }
    if !(k >= T::one()) {
        return Err(Error::param("k", format!("moment order must be at least 1, got {k}")));
    }
    Ok(())
}

/// `2 τ^k max{(2 ln N)^(k/2), k^(k/2)}`, bounding `E[max_i |X_i|^k]` for
/// `τ²`-sub-Gaussian `X_i`.
pub fn max_moment_bound<T: Scalar>(n_vars: usize, k: T, tau: T) -> Result<T> {
    check_moment_args(n_vars, k)?;
    if !(tau > T::zero()) {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    let half_k = k / T::of(2.0);
    let log_term = (T::of(2.0) * T::of_usize(n_vars).ln()).powf(half_k);
    let k_term = k.powf(half_k);
    Ok(T::of(2.0) * tau.powf(k) * log_term.max(k_term))
}

/// `c · max{√(τ² ln N), b ln N, √(τ² k), b k}`, the scale of
/// `E[max_i |X_i|^k]^(1/k)` for `(τ², b)`-sub-exponential `X_i`.
pub fn max_moment_bound_subexp<T: Scalar>(
    n_vars: usize,
    k: T,
    params: &SubExpParams<T>,
    c_test: T,
) -> Result<T> {
    check_moment_args(n_vars, k)?;
    max_moment_bound_subexp_from_log(T::of_usize(n_vars).ln(), k, params, c_test)
}

/// [`max_moment_bound_subexp`] with `ln N` supplied directly.
pub fn max_moment_bound_subexp_from_log<T: Scalar>(
    log_n: T,
    k: T,
    params: &SubExpParams<T>,
    c_test: T,
) -> Result<T> {
    if !(k >= T::one()) {
        return Err(Error::param("k", format!("moment order must be at least 1, got {k}")));
    }
    if !(log_n >= T::zero()) {
        return Err(Error::param("log_n", format!("must be nonnegative, got {log_n}")));
    }
    let terms = [
        (params.tau_sq * log_n).sqrt(),
        params.b * log_n,
        (params.tau_sq * k).sqrt(),
        params.b * k,
    ];
    Ok(c_test * terms.into_iter().fold(T::zero(), T::max))
}

/// Monte Carlo estimate of `E[max_{i ≤ N} |X_i|^k]` for i.i.d. draws of
/// `sampler`.
pub fn empirical_max_moment<T, F>(
    sampler: F,
    n_vars: usize,
    k: f64,
    n_samples: usize,
    master_seed: u64,
) -> Result<Estimate>
where
    T: Scalar,
    F: Fn(&mut NoiseStream) -> T + Sync,
{
    check_moment_args(n_vars, k)?;
    if n_samples < 2 {
        return Err(Error::param("n_samples", "need at least two samples"));
    }
    let draw_max = |stream: &mut NoiseStream| {
        (0..n_vars)
            .map(|_| sampler(stream).abs().as_f64())
            .fold(0.0, f64::max)
            .powf(k)
    };
    let values = draw_samples(&draw_max, n_samples, master_seed);
    let mut acc = Accumulator::default();
    values.iter().for_each(|&v| acc.push(v));
    Ok(acc.estimate())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxMomentCheck {
    pub n_vars: usize,
    pub k: f64,
    pub tau: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Checks the sub-Gaussian maxima bound with exact `N(0, τ²)` variables:
/// passes when `empirical − 4·stderr ≤ bound`.
pub fn verify_max_moment(
    n_vars: usize,
    k: f64,
    tau: f64,
    n_samples: usize,
    master_seed: u64,
) -> Result<MaxMomentCheck> {
    let bound = max_moment_bound(n_vars, k, tau)?;
    let est = empirical_max_moment(
        |s: &mut NoiseStream| tau * s.standard_normal::<f64>(),
        n_vars,
        k,
        n_samples,
        master_seed,
    )?;
    let stderr = est.stderr.unwrap_or(0.0);
    Ok(MaxMomentCheck {
        n_vars,
        k,
        tau,
        empirical: est.mean,
        stderr,
        bound,
        pass: est.mean - 4.0 * stderr <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn params_examples() {
        let (first, _) = quadratic_form_params(&Matrix::<f64>::identity(2)).unwrap();
        assert_relative_eq!(first.tau_sq, 8.0);
        assert_relative_eq!(first.b, 4.0, max_relative = 1e-12);

        let (first, _) = quadratic_form_params(&m(&[&[0.0, 1.0], &[-1.0, 0.0]])).unwrap();
        assert_eq!((first.tau_sq, first.b), (0.0, 0.0));
        assert!(first.is_sub_gaussian());

        let (first, second) = quadratic_form_params(&m(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap();
        assert_relative_eq!(first.tau_sq, 2.0);
        assert_relative_eq!(first.b, 2.0, max_relative = 1e-12);
        assert_relative_eq!(second.tau_sq, 1.0);
        assert_relative_eq!(second.b, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn chi_square_exact_example() {
        let a = Matrix::<f64>::identity(2);
        let (first, _) = quadratic_form_params(&a).unwrap();
        let rows = verify_quadratic_form_mgf(&a, &first, &[0.1, 0.0], MgfMethod::Exact, 0, 0.0, 0).unwrap();
        // e^{-0.2}/(1 - 0.2) against exp(0.01·8/2).
        assert_relative_eq!(rows[0].estimate, (-0.2f64).exp() / 0.8, max_relative = 1e-14);
        assert_relative_eq!(rows[0].estimate, 1.0234, epsilon = 5e-5);
        assert_relative_eq!(rows[0].bound, 1.0408, epsilon = 5e-5);
        assert!(rows[0].pass);
        assert_eq!((rows[1].estimate, rows[1].bound, rows[1].pass), (1.0, 1.0, true));
    }

    #[test]
    fn domain_enforced() {
        let a = Matrix::<f64>::identity(2);
        let (first, _) = quadratic_form_params(&a).unwrap();
        let err = verify_quadratic_form_mgf(&a, &first, &[0.3], MgfMethod::Exact, 0, 0.0, 0);
        assert!(matches!(err, Err(Error::Domain { .. })));
        let err = verify_mgf_bound(quadratic_form_sampler(&a), &first, &[-0.3], 20_000, 0.0, 1);
        assert!(matches!(err, Err(Error::Domain { .. })));
    }

    #[test]
    fn mc_argument_validation() {
        let a = Matrix::<f64>::identity(2);
        let (first, _) = quadratic_form_params(&a).unwrap();
        assert!(verify_mgf_bound(quadratic_form_sampler(&a), &first, &[0.1], 100, 0.0, 1).is_err());
        assert!(verify_mgf_bound(quadratic_form_sampler(&a), &first, &[0.1], 20_000, -1.0, 1).is_err());
    }

    #[test]
    fn exact_matches_monte_carlo_for_diagonal() {
        let a = Matrix::from_diag(&[1.0, -0.5, 0.25]);
        let (first, _) = quadratic_form_params(&a).unwrap();
        let grid = lambda_grid_from_fractions(&first, &[0.9, 0.5, 0.1]);
        let exact = verify_quadratic_form_mgf(&a, &first, &grid, MgfMethod::Exact, 0, 0.0, 0).unwrap();
        let mc = verify_quadratic_form_mgf(&a, &first, &grid, MgfMethod::MonteCarlo, 200_000, 0.0, 17).unwrap();
        for (e, s) in exact.iter().zip(&mc) {
            let se = s.stderr.unwrap();
            assert!((e.estimate - s.estimate).abs() <= 4.0 * se.max(1e-300), "{e:?} {s:?}");
            assert!(e.pass && s.pass);
        }
    }

    #[test]
    fn exact_path_handles_non_diagonal() {
        // Rotation-invariant: A and QᵀAQ share the quadratic form law.
        let a = m(&[&[1.0, 2.0], &[0.0, -1.0]]);
        let sym_eigs = symmetric_eigen(&a.symmetrized()).unwrap().values;
        let d = Matrix::from_diag(&sym_eigs);
        for lambda in [-0.1, 0.05, 0.2] {
            let x = quadratic_form_log_mgf(&a, lambda).unwrap().unwrap();
            let y = quadratic_form_log_mgf(&d, lambda).unwrap().unwrap();
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
        assert_eq!(quadratic_form_log_mgf(&Matrix::from_diag(&[1.0]), 0.5).unwrap(), None);
    }

    #[test]
    fn second_parameterization_fails_for_identity() {
        // (‖I‖_F², 4‖I‖_op) = (2, 4): at λ = 0.2 the exact MGF 1.117 exceeds
        // exp(0.04) = 1.041, while the inflated proxy 4‖A‖_F² covers it.
        let a = Matrix::<f64>::identity(2);
        let (_, second) = quadratic_form_params(&a).unwrap();
        let rows = verify_quadratic_form_mgf(&a, &second, &[0.2], MgfMethod::Exact, 0, 0.0, 0).unwrap();
        assert!(!rows[0].pass);
        let inflated = quadratic_form_params_inflated(&a).unwrap();
        let rows = verify_quadratic_form_mgf(&a, &inflated, &[0.2], MgfMethod::Exact, 0, 0.0, 0).unwrap();
        assert!(rows[0].pass);
    }

    #[test]
    fn max_moment_bound_examples() {
        assert_eq!(max_moment_bound(1, 2.0, 1.0).unwrap(), 4.0);
        let expected = 2.0 * (2.0 * 10f64.ln()).sqrt();
        assert_relative_eq!(max_moment_bound(10, 1.0, 1.0).unwrap(), expected, max_relative = 1e-15);
        assert_relative_eq!(max_moment_bound(10, 1.0, 1.0).unwrap(), 4.2919, epsilon = 5e-5);
        let l = 2.0 * 10f64.ln();
        assert_relative_eq!(max_moment_bound(10, 4.0, 2.0).unwrap(), 32.0 * l * l, max_relative = 1e-14);
        assert_relative_eq!(max_moment_bound(10, 4.0, 2.0).unwrap(), 678.6, epsilon = 0.05);
        assert_relative_eq!(max_moment_bound(100, 2.0, 1.0).unwrap(), 4.0 * 100f64.ln(), max_relative = 1e-14);
        assert!(max_moment_bound(0, 2.0, 1.0).is_err());
        assert!(max_moment_bound(3, 0.5, 1.0).is_err());
        assert!(max_moment_bound(3, 2.0, 0.0).is_err());
    }

    #[test]
    fn subexp_bound_examples() {
        let p = SubExpParams::new(1.0, 0.0).unwrap();
        assert_eq!(max_moment_bound_subexp(1, 1.0, &p, 1.0).unwrap(), 1.0);
        let q = SubExpParams::new(1.0, 1.0).unwrap();
        assert_eq!(max_moment_bound_subexp_from_log(4.0, 2.0, &q, 1.0).unwrap(), 4.0);
        // b = 0 reduces to sqrt(τ² max{log N, k}).
        let g = SubExpParams::new(3.0, 0.0).unwrap();
        let v = max_moment_bound_subexp_from_log(5.0, 2.0, &g, 1.0).unwrap();
        assert_relative_eq!(v, (3.0f64 * 5.0).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn verify_max_moment_small_cases() {
        let single = verify_max_moment(1, 2.0, 1.0, 50_000, 3).unwrap();
        assert!((single.empirical - 1.0).abs() < 4.0 * single.stderr + 1e-3);
        assert!(single.pass);
        let many = verify_max_moment(100, 2.0, 1.0, 20_000, 3).unwrap();
        assert!(many.pass && many.empirical <= 18.42);
    }

    #[test]
    fn sampling_is_thread_independent() {
        let a = Matrix::from_diag(&[1.0, 2.0]);
        let s = quadratic_form_sampler(&a);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()
            .install(|| draw_samples(&s, 10_000, 5));
        let many = rayon::ThreadPoolBuilder::new().num_threads(6).build().unwrap()
            .install(|| draw_samples(&s, 10_000, 5));
        assert_eq!(one, many);
    }

    #[test]
    fn tau_sq_at_most_four_frobenius() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let n = rng.random_range(1..=10);
            let a = Matrix::<f64>::from_fn(n, n, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let (first, _) = quadratic_form_params(&a).unwrap();
            assert!(first.tau_sq <= 4.0 * a.frob_sq() * (1.0 + 1e-12));
        }
    }

    proptest! {
        #[test]
        fn max_moment_bound_monotone(
            n in 1usize..500, dn in 0usize..500,
            k in 1.0f64..6.0, dk in 0.0f64..3.0,
            tau in 1.0f64..3.0, dt in 0.0f64..2.0,
        ) {
            let base = max_moment_bound(n, k, tau).unwrap();
            prop_assert!(base <= max_moment_bound(n + dn, k, tau).unwrap() * (1.0 + 1e-12));
            prop_assert!(base <= max_moment_bound(n, k + dk, tau).unwrap() * (1.0 + 1e-12));
            prop_assert!(base <= max_moment_bound(n, k, tau + dt).unwrap() * (1.0 + 1e-12));
        }
    }
}
