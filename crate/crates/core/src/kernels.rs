//! Kernels, the median heuristic, and MMD² estimators.
//!
//! The squared maximum mean discrepancy between distributions `P` and `Q`
//! with kernel `k` is `E k(x,x′) − 2 E k(x,y) + E k(y,y′)`. This module
//! provides the unbiased U-statistic between two samples, an exact weighted
//! form against a finitely supported measure (no resampling noise), and the
//! U-statistic of the parameter gradient obtained by differentiating the
//! simulated side with forward-mode duals.
//!
//! All double sums use compensated accumulation and run single-threaded and
//! in a fixed order, so results are bitwise reproducible; parallelism lives
//! at the posterior-bootstrap level where draws are independent.

use crate::error::{Error, Result};
use crate::forward_ad::{Dual, MAX_WIDTH};
use crate::measures::{Points, WeightedMeasure};
use crate::simulators::Simulator;
use crate::util::KahanSum;

/// Reference mixture lengthscales used by the toggle-switch experiments.
pub const DEFAULT_MIXTURE_LENGTHSCALES: [f64; 11] = [
    1.0, 10.0, 20.0, 40.0, 80.0, 100.0, 130.0, 200.0, 400.0, 800.0, 1000.0,
];

/// Components with `d²/(2l²)` beyond this threshold contribute less than
/// ~4e-18 and are skipped inside mixture sums.
const NEGLIGIBLE_EXPONENT: f64 = 40.0;

/// Positive-definite kernel on ℝᵈ: a single Gaussian
/// `exp(−‖x−y‖²/(2l²))` or an unweighted sum of Gaussians over several
/// lengthscales (bounded by the component count instead of 1).
#[derive(Clone, Debug)]
pub enum Kernel {
    Gaussian { lengthscale: f64 },
    Mixture { lengthscales: Vec<f64> },
}

impl Kernel {
    /// Single Gaussian kernel with the given lengthscale (> 0, finite).
    pub fn gaussian(lengthscale: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel lengthscale must be positive and finite, got {lengthscale}"
            )));
        }
        Ok(Kernel::Gaussian { lengthscale })
    }

    /// Unweighted mixture over the given lengthscales (non-empty, all > 0).
    pub fn mixture(lengthscales: Vec<f64>) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::invalid(
                "mixture kernel needs at least one lengthscale",
            ));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::invalid(format!(
                "kernel lengthscale must be positive and finite, got {l}"
            )));
        }
        Ok(Kernel::Mixture { lengthscales })
    }

    /// The reference 11-component mixture.
    pub fn default_mixture() -> Self {
        Kernel::Mixture {
            lengthscales: DEFAULT_MIXTURE_LENGTHSCALES.to_vec(),
        }
    }

    /// Upper bound of the kernel: 1 for a single Gaussian, the component
    /// count for a mixture.
    pub fn upper_bound(&self) -> f64 {
        match self {
            Kernel::Gaussian { .. } => 1.0,
            Kernel::Mixture { lengthscales } => lengthscales.len() as f64,
        }
    }

    /// Kernel value from a squared distance.
    #[inline]
    fn eval_sq(&self, d2: f64) -> f64 {
        match self {
            Kernel::Gaussian { lengthscale } => (-d2 / (2.0 * lengthscale * lengthscale)).exp(),
            Kernel::Mixture { lengthscales } => {
                let mut acc = 0.0;
                for &l in lengthscales {
                    let e = d2 / (2.0 * l * l);
                    if e <= NEGLIGIBLE_EXPONENT {
                        acc += (-e).exp();
                    }
                }
                acc
            }
        }
    }

    /// Scale `s(d²)` such that `∇₁k(x, y) = −(x − y) · s(‖x−y‖²)`; for the
    /// Gaussian family `s = Σᵢ k_{lᵢ}(d²)/lᵢ²`.
    #[inline]
    fn grad_scale_sq(&self, d2: f64) -> f64 {
        match self {
            Kernel::Gaussian { lengthscale } => {
                let l2 = lengthscale * lengthscale;
                (-d2 / (2.0 * l2)).exp() / l2
            }
            Kernel::Mixture { lengthscales } => {
                let mut acc = 0.0;
                for &l in lengthscales {
                    let l2 = l * l;
                    let e = d2 / (2.0 * l2);
                    if e <= NEGLIGIBLE_EXPONENT {
                        acc += (-e).exp() / l2;
                    }
                }
                acc
            }
        }
    }
}

#[inline]
fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        acc += d * d;
    }
    acc
}

/// Evaluate the kernel at a pair of points.
///
/// # Errors
/// The points must share one dimension.
pub fn kernel_eval(kernel: &Kernel, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "kernel arguments have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(kernel.eval_sq(squared_distance(x, y)))
}

/// Median-heuristic lengthscale: the square root of the median of all
/// pairwise squared distances (strictly `i < j`, so self-distances are
/// excluded). For an even pair count, the two middle values are averaged.
///
/// # Errors
/// Needs at least two points; all-identical points (median 0) are rejected.
pub fn median_heuristic(points: &Points) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "median heuristic needs at least 2 points, got {n}"
        )));
    }
    let mut d2: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d2.push(squared_distance(points.row(i), points.row(j)));
        }
    }
    let m = d2.len();
    let median = if m % 2 == 1 {
        let (_, mid, _) = d2.select_nth_unstable_by(m / 2, f64::total_cmp);
        *mid
    } else {
        let (left, mid, _) = d2.select_nth_unstable_by(m / 2, f64::total_cmp);
        let lower = left
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
            .min(*mid);
        (lower + *mid) / 2.0
    };
    if !(median > 0.0) {
        return Err(Error::invalid(
            "median pairwise distance is zero (all points identical)",
        ));
    }
    Ok(median.sqrt())
}

fn check_dims(xs: &Points, ys: &Points) -> Result<()> {
    if xs.dim() != ys.dim() {
        return Err(Error::invalid(format!(
            "point sets have dimensions {} and {}",
            xs.dim(),
            ys.dim()
        )));
    }
    Ok(())
}

/// Mean of `k` over unordered distinct pairs within one set (U-statistic).
pub(crate) fn mean_within(points: &Points, kernel: &Kernel) -> f64 {
    let n = points.len();
    let mut acc = KahanSum::new();
    for i in 0..n {
        for j in (i + 1)..n {
            acc.add(kernel.eval_sq(squared_distance(points.row(i), points.row(j))));
        }
    }
    2.0 * acc.total() / (n as f64 * (n - 1) as f64)
}

/// Mean of `k` over the full cross product of two sets.
fn mean_between(xs: &Points, ys: &Points, kernel: &Kernel) -> f64 {
    let mut acc = KahanSum::new();
    for x in xs.iter() {
        for y in ys.iter() {
            acc.add(kernel.eval_sq(squared_distance(x, y)));
        }
    }
    acc.total() / (xs.len() as f64 * ys.len() as f64)
}

/// Unbiased MMD² U-statistic between two samples; may be negative.
///
/// # Errors
/// Both samples need ≥ 2 points of a common dimension.
pub fn mmd2_u(xs: &Points, ys: &Points, kernel: &Kernel) -> Result<f64> {
    check_dims(xs, ys)?;
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::invalid(format!(
            "MMD U-statistic needs ≥ 2 points on each side, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    Ok(mean_within(xs, kernel) - 2.0 * mean_between(xs, ys, kernel) + mean_within(ys, kernel))
}

/// MMD² between a weighted measure and a sample: the measure side is exact
/// (V-form over atoms and weights, diagonal included), the sample side keeps
/// the unbiased U-statistic.
///
/// # Errors
/// The sample needs ≥ 2 points; dimensions must match.
pub fn mmd2_weighted(measure: &WeightedMeasure, ys: &Points, kernel: &Kernel) -> Result<f64> {
    check_dims(measure.atoms(), ys)?;
    if ys.len() < 2 {
        return Err(Error::invalid(format!(
            "MMD needs ≥ 2 sample points, got {}",
            ys.len()
        )));
    }
    Ok(
        weighted_self_term(measure, kernel) - 2.0 * weighted_cross_mean(measure, ys, kernel)
            + mean_within(ys, kernel),
    )
}

/// `Σ_{i,i′} wᵢ wᵢ′ k(zᵢ, zᵢ′)` including the diagonal.
pub(crate) fn weighted_self_term(measure: &WeightedMeasure, kernel: &Kernel) -> f64 {
    let atoms = measure.atoms();
    let w = measure.weights();
    let n = atoms.len();
    let mut off = KahanSum::new();
    let mut diag = KahanSum::new();
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        diag.add(w[i] * w[i]);
        for j in (i + 1)..n {
            if w[j] == 0.0 {
                continue;
            }
            off.add(w[i] * w[j] * kernel.eval_sq(squared_distance(atoms.row(i), atoms.row(j))));
        }
    }
    2.0 * off.total() + diag.total() * kernel.eval_sq(0.0)
}

/// `Σᵢ Σⱼ wᵢ k(zᵢ, yⱼ) / M`.
pub(crate) fn weighted_cross_mean(measure: &WeightedMeasure, ys: &Points, kernel: &Kernel) -> f64 {
    let atoms = measure.atoms();
    let w = measure.weights();
    let mut acc = KahanSum::new();
    for i in 0..atoms.len() {
        if w[i] == 0.0 {
            continue;
        }
        let mut inner = KahanSum::new();
        for y in ys.iter() {
            inner.add(kernel.eval_sq(squared_distance(atoms.row(i), y)));
        }
        acc.add(w[i] * inner.total());
    }
    acc.total() / ys.len() as f64
}

/// Fully weighted MMD² between two weighted measures (V-form on both
/// sides); non-negative up to rounding, being a squared RKHS norm.
///
/// # Errors
/// Dimensions must match.
pub fn mmd2_weighted_pair(
    a: &WeightedMeasure,
    b: &WeightedMeasure,
    kernel: &Kernel,
) -> Result<f64> {
    check_dims(a.atoms(), b.atoms())?;
    let mut cross = KahanSum::new();
    for (i, x) in a.atoms().iter().enumerate() {
        let wi = a.weights()[i];
        if wi == 0.0 {
            continue;
        }
        for (j, y) in b.atoms().iter().enumerate() {
            let vj = b.weights()[j];
            if vj == 0.0 {
                continue;
            }
            cross.add(wi * vj * kernel.eval_sq(squared_distance(x, y)));
        }
    }
    Ok(weighted_self_term(a, kernel) + weighted_self_term(b, kernel) - 2.0 * cross.total())
}

/// How the target side of the gradient is weighted.
enum TargetWeights<'a> {
    Uniform,
    Weighted(&'a [f64]),
}

/// Shared machinery for both gradient estimators: simulate all latents with
/// dual parameters, then accumulate the analytic kernel gradient over
/// simulated pairs (antisymmetric, each unordered pair visited once) and the
/// simulated-target cross terms.
fn grad_impl(
    theta: &[f64],
    us: &Points,
    targets: &Points,
    target_weights: TargetWeights<'_>,
    simulator: &dyn Simulator,
    kernel: &Kernel,
) -> Result<Vec<f64>> {
    let m = us.len();
    if m < 2 {
        return Err(Error::invalid(format!(
            "gradient U-statistic needs ≥ 2 latents, got {m}"
        )));
    }
    if targets.is_empty() {
        return Err(Error::invalid("gradient needs at least one target point"));
    }
    let p = simulator.param_dim();
    let d = simulator.output_dim();
    if theta.len() != p || p > MAX_WIDTH {
        return Err(Error::invalid(format!(
            "parameter vector of length {} for simulator with {p} parameters",
            theta.len()
        )));
    }
    if us.dim() != simulator.latent_dim() || targets.dim() != d {
        return Err(Error::invalid(format!(
            "latent/target dimensions ({}, {}) do not match simulator ({}, {d})",
            us.dim(),
            targets.dim(),
            simulator.latent_dim()
        )));
    }

    // Simulate every latent once with seeded duals; store values and
    // Jacobians flat (point-major).
    let seeds = Dual::seed_vector(theta);
    let mut values = vec![0.0; m * d];
    let mut jac = vec![0.0; m * d * p];
    let mut out = vec![Dual::constant(0.0, p); d];
    for j in 0..m {
        simulator.simulate_dual(&seeds, us.row(j), &mut out)?;
        for k in 0..d {
            values[j * d + k] = out[k].value();
            jac[(j * d + k) * p..(j * d + k) * p + p].copy_from_slice(out[k].partials());
        }
    }
    let sim_pts = Points::new(values, d)?;

    let mut pair_acc = [KahanSum::new(); MAX_WIDTH];
    for j in 0..m {
        let xj = sim_pts.row(j);
        let jac_j = &jac[j * d * p..(j + 1) * d * p];
        for j2 in (j + 1)..m {
            let xj2 = sim_pts.row(j2);
            let s = kernel.grad_scale_sq(squared_distance(xj, xj2));
            if s == 0.0 {
                continue;
            }
            let jac_j2 = &jac[j2 * d * p..(j2 + 1) * d * p];
            // ∇₁k(x_j, x_j2) = −(x_j − x_j2)·s; by antisymmetry the j2→j
            // term contributes through (J_j − J_j2).
            for k in 0..d {
                let g = -(xj[k] - xj2[k]) * s;
                for q in 0..p {
                    pair_acc[q].add((jac_j[k * p + q] - jac_j2[k * p + q]) * g);
                }
            }
        }
    }

    let mut cross_acc = [KahanSum::new(); MAX_WIDTH];
    let n = targets.len();
    for j in 0..m {
        let xj = sim_pts.row(j);
        let jac_j = &jac[j * d * p..(j + 1) * d * p];
        for i in 0..n {
            let ci = match target_weights {
                TargetWeights::Uniform => 1.0 / n as f64,
                TargetWeights::Weighted(w) => {
                    if w[i] == 0.0 {
                        continue;
                    }
                    w[i]
                }
            };
            let yi = targets.row(i);
            let s = kernel.grad_scale_sq(squared_distance(xj, yi));
            if s == 0.0 {
                continue;
            }
            for k in 0..d {
                let g = -(xj[k] - yi[k]) * s;
                for q in 0..p {
                    cross_acc[q].add(ci * jac_j[k * p + q] * g);
                }
            }
        }
    }

    let pair_scale = 2.0 / (m as f64 * (m - 1) as f64);
    let cross_scale = 2.0 / m as f64;
    Ok((0..p)
        .map(|q| pair_scale * pair_acc[q].total() - cross_scale * cross_acc[q].total())
        .collect())
}

/// U-statistic estimate of `∇_θ MMD²(P̂, P_θ)` at `theta`: latents `us` are
/// pushed through the simulator with forward-mode duals and combined with
/// the analytic Gaussian-kernel gradient; `ys` is the (uniformly weighted)
/// target sample.
///
/// # Errors
/// Needs ≥ 2 latents, ≥ 1 target, and consistent dimensions; simulator
/// failures propagate.
pub fn mmd2_grad_u(
    theta: &[f64],
    us: &Points,
    ys: &Points,
    simulator: &dyn Simulator,
    kernel: &Kernel,
) -> Result<Vec<f64>> {
    grad_impl(theta, us, ys, TargetWeights::Uniform, simulator, kernel)
}

/// Like [`mmd2_grad_u`] but against a weighted measure target, matching the
/// [`mmd2_weighted`] objective exactly (atom weights replace `1/N`).
///
/// # Errors
/// As for [`mmd2_grad_u`].
pub fn mmd2_grad_weighted(
    theta: &[f64],
    us: &Points,
    measure: &WeightedMeasure,
    simulator: &dyn Simulator,
    kernel: &Kernel,
) -> Result<Vec<f64>> {
    grad_impl(
        theta,
        us,
        measure.atoms(),
        TargetWeights::Weighted(measure.weights()),
        simulator,
        kernel,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulators::{GAndK, GaussianLocation, ToggleSwitch};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn pts1(values: &[f64]) -> Points {
        Points::new(values.to_vec(), 1).unwrap()
    }

    #[test]
    fn kernel_constructors_validate() {
        assert!(Kernel::gaussian(0.0).is_err());
        assert!(Kernel::gaussian(-1.0).is_err());
        assert!(Kernel::gaussian(f64::NAN).is_err());
        assert!(Kernel::mixture(vec![]).is_err());
        assert!(Kernel::mixture(vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn gaussian_kernel_values() {
        let k = Kernel::gaussian(1.0).unwrap();
        assert_eq!(kernel_eval(&k, &[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        let k2 = Kernel::gaussian(std::f64::consts::SQRT_2).unwrap();
        assert_relative_eq!(
            kernel_eval(&k2, &[0.0], &[2.0]).unwrap(),
            (-1.0_f64).exp(),
            max_relative = 1e-12
        );
        assert!(kernel_eval(&k, &[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn mixture_kernel_at_equal_points_counts_components() {
        let k = Kernel::default_mixture();
        assert_eq!(kernel_eval(&k, &[5.0], &[5.0]).unwrap(), 11.0);
        assert_eq!(k.upper_bound(), 11.0);
    }

    #[test]
    fn kernel_symmetry_and_bounds() {
        let kernels = [Kernel::gaussian(0.7).unwrap(), Kernel::default_mixture()];
        let mut r = rng(40);
        for k in &kernels {
            for i in 0..200 {
                // Moderate distances keep the value strictly positive; huge
                // distances may underflow to 0 but never exceed the bound.
                let span = if i % 2 == 0 { 3.0 } else { 50.0 };
                let x = [r.random_range(-span..span), r.random_range(-span..span)];
                let y = [r.random_range(-span..span), r.random_range(-span..span)];
                let kxy = kernel_eval(k, &x, &y).unwrap();
                let kyx = kernel_eval(k, &y, &x).unwrap();
                assert_eq!(kxy, kyx);
                assert!(kxy <= k.upper_bound());
                if span == 3.0 {
                    assert!(kxy > 0.0);
                }
            }
        }
    }

    #[test]
    fn median_heuristic_examples() {
        assert_eq!(median_heuristic(&pts1(&[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(median_heuristic(&pts1(&[0.0, 1.0, 3.0])).unwrap(), 2.0);
        assert!(median_heuristic(&pts1(&[0.5])).is_err());
        assert!(median_heuristic(&pts1(&[2.0, 2.0, 2.0])).is_err());
    }

    #[test]
    fn median_heuristic_even_pair_count() {
        // Points {0,1,2,3}: squared distances {1,4,9,1,4,1} sorted
        // {1,1,1,4,4,9}; median = (1+4)/2 = 2.5.
        let l = median_heuristic(&pts1(&[0.0, 1.0, 2.0, 3.0])).unwrap();
        assert_relative_eq!(l, 2.5_f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn mmd2_u_trivial_zero() {
        let k = Kernel::gaussian(1.0).unwrap();
        let xs = pts1(&[0.0, 0.0]);
        assert_eq!(mmd2_u(&xs, &xs, &k).unwrap(), 0.0);
    }

    #[test]
    fn mmd2_u_hand_value() {
        let k = Kernel::gaussian(std::f64::consts::SQRT_2).unwrap();
        let xs = pts1(&[0.0, 2.0]);
        let expected = (-1.0_f64).exp() - 1.0;
        assert_relative_eq!(
            mmd2_u(&xs, &xs, &k).unwrap(),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn mmd2_u_rejects_small_samples() {
        let k = Kernel::gaussian(1.0).unwrap();
        assert!(mmd2_u(&pts1(&[0.0]), &pts1(&[0.0, 1.0]), &k).is_err());
        assert!(mmd2_u(&pts1(&[0.0, 1.0]), &pts1(&[0.0]), &k).is_err());
    }

    /// Closed-form population MMD² between `N(mu1, sigma²)` and
    /// `N(mu2, sigma²)` in one dimension under a Gaussian kernel.
    fn gaussian_population_mmd2(l: f64, mu1: f64, mu2: f64, sigma: f64) -> f64 {
        let ek = |ma: f64, mb: f64| -> f64 {
            let denom = l * l + 2.0 * sigma * sigma;
            (l / denom.sqrt()) * (-((ma - mb) * (ma - mb)) / (2.0 * denom)).exp()
        };
        ek(mu1, mu1) - 2.0 * ek(mu1, mu2) + ek(mu2, mu2)
    }

    #[test]
    fn mmd2_u_is_unbiased_for_gaussians() {
        let l = 1.0;
        let k = Kernel::gaussian(l).unwrap();
        let truth = gaussian_population_mmd2(l, 0.0, 1.0, 1.0);
        let mut r = rng(41);
        let reps = 50;
        let n = 2000;
        let mut estimates = Vec::with_capacity(reps);
        for _ in 0..reps {
            let std_normal = rand_distr::StandardNormal;
            let xs: Vec<f64> = (0..n)
                .map(|_| rand_distr::Distribution::sample(&std_normal, &mut r))
                .collect();
            let ys: Vec<f64> = (0..n)
                .map(|_| {
                    let z: f64 = rand_distr::Distribution::sample(&std_normal, &mut r);
                    1.0 + z
                })
                .collect();
            estimates.push(mmd2_u(&pts1(&xs), &pts1(&ys), &k).unwrap());
        }
        let mean = estimates.iter().sum::<f64>() / reps as f64;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - truth).abs() <= 3.0 * se,
            "estimate {mean} vs population {truth} (3 SE = {})",
            3.0 * se
        );
    }

    #[test]
    fn mmd2_weighted_single_atom_zero() {
        let k = Kernel::gaussian(1.0).unwrap();
        let m = WeightedMeasure::new(pts1(&[0.4]), vec![1.0]).unwrap();
        assert_eq!(mmd2_weighted(&m, &pts1(&[0.4, 0.4]), &k).unwrap(), 0.0);
    }

    #[test]
    fn mmd2_weighted_uniform_matches_u_statistic_up_to_v_form() {
        // With uniform weights the weighted form differs from the
        // U-statistic only in the self term: V − U = (k(0) − U_xx)/N.
        let k = Kernel::gaussian(0.8).unwrap();
        let mut r = rng(42);
        for _ in 0..20 {
            let xs: Vec<f64> = (0..5).map(|_| r.random_range(-2.0..2.0)).collect();
            let ys: Vec<f64> = (0..6).map(|_| r.random_range(-2.0..2.0)).collect();
            let xs = pts1(&xs);
            let ys = pts1(&ys);
            let measure = WeightedMeasure::uniform(xs.clone()).unwrap();
            let weighted = mmd2_weighted(&measure, &ys, &k).unwrap();
            let u = mmd2_u(&xs, &ys, &k).unwrap();
            let uxx = mean_within(&xs, &k);
            let correction = (kernel_eval(&k, &[0.0], &[0.0]).unwrap() - uxx) / xs.len() as f64;
            assert_relative_eq!(weighted, u + correction, epsilon = 1e-12);
        }
    }

    #[test]
    fn mmd2_weighted_term_by_term_oracle() {
        let k = Kernel::gaussian(1.3).unwrap();
        let atoms = pts1(&[-1.0, 0.2, 0.5, 2.0, 3.1]);
        let w = vec![0.1, 0.3, 0.2, 0.25, 0.15];
        let ys = pts1(&[-0.5, 0.0, 1.5]);
        let measure = WeightedMeasure::new(atoms.clone(), w.clone()).unwrap();
        let kv = |a: f64, b: f64| (-(a - b) * (a - b) / (2.0 * 1.3 * 1.3)).exp();
        let mut t1 = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                t1 += w[i] * w[j] * kv(atoms.row(i)[0], atoms.row(j)[0]);
            }
        }
        let mut t2 = 0.0;
        for i in 0..5 {
            for y in ys.iter() {
                t2 += w[i] * kv(atoms.row(i)[0], y[0]);
            }
        }
        t2 *= 2.0 / 3.0;
        let mut t3 = 0.0;
        for j in 0..3 {
            for j2 in 0..3 {
                if j != j2 {
                    t3 += kv(ys.row(j)[0], ys.row(j2)[0]);
                }
            }
        }
        t3 /= 3.0 * 2.0;
        let expected = t1 - t2 + t3;
        assert_relative_eq!(
            mmd2_weighted(&measure, &ys, &k).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn weighted_pair_nonnegative_on_random_instances() {
        let k = Kernel::gaussian(0.9).unwrap();
        let mut r = rng(43);
        for _ in 0..1000 {
            let dim = r.random_range(1..=3usize);
            let make = |r: &mut ChaCha8Rng| -> WeightedMeasure {
                let n = r.random_range(1..=6usize);
                let flat: Vec<f64> = (0..n * dim).map(|_| r.random_range(-3.0..3.0)).collect();
                let mut w: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0) + 1e-6).collect();
                let s: f64 = w.iter().sum();
                for wi in &mut w {
                    *wi /= s;
                }
                let s2: f64 = w.iter().sum();
                for wi in &mut w {
                    *wi /= s2;
                }
                WeightedMeasure::new(Points::new(flat, dim).unwrap(), w).unwrap()
            };
            let a = make(&mut r);
            let b = make(&mut r);
            let v = mmd2_weighted_pair(&a, &b, &k).unwrap();
            assert!(v >= -1e-12, "negative squared norm {v}");
        }
    }

    #[test]
    fn grad_zero_by_symmetry() {
        let sim = GaussianLocation::new(1).unwrap();
        let k = Kernel::gaussian(1.0).unwrap();
        let theta = [0.7];
        let c = 0.45;
        let us = pts1(&[-c, c]);
        let ys = pts1(&[theta[0] + -c, theta[0] + c]);
        let g = mmd2_grad_u(&theta, &us, &ys, &sim, &k).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn grad_sign_pushes_theta_toward_data() {
        let sim = GaussianLocation::new(1).unwrap();
        let k = Kernel::gaussian(1.0).unwrap();
        // θ far above all data: the gradient must be positive so a descent
        // step decreases θ.
        let theta = [6.0];
        let us = pts1(&[-0.3, 0.1, 0.4, -0.2]);
        let ys = pts1(&[0.0, 0.5, -0.5, 1.0]);
        let g = mmd2_grad_u(&theta, &us, &ys, &sim, &k).unwrap();
        assert!(g[0] > 0.0, "gradient {g:?}");
    }

    #[test]
    fn grad_rejects_single_latent() {
        let sim = GaussianLocation::new(1).unwrap();
        let k = Kernel::gaussian(1.0).unwrap();
        assert!(mmd2_grad_u(&[0.0], &pts1(&[0.1]), &pts1(&[0.0, 1.0]), &sim, &k).is_err());
    }

    /// Finite-difference oracle: d/dθ mmd2_u(G_θ(us), ys) with common
    /// random numbers.
    fn fd_grad(
        theta: &[f64],
        us: &Points,
        ys: &Points,
        sim: &dyn Simulator,
        k: &Kernel,
        h: f64,
    ) -> Vec<f64> {
        let eval = |th: &[f64]| -> f64 {
            let mut out = vec![0.0; sim.output_dim()];
            let mut flat = Vec::with_capacity(us.len() * sim.output_dim());
            for j in 0..us.len() {
                sim.simulate(th, us.row(j), &mut out).unwrap();
                flat.extend_from_slice(&out);
            }
            mmd2_u(&Points::new(flat, sim.output_dim()).unwrap(), ys, k).unwrap()
        };
        (0..theta.len())
            .map(|i| {
                let mut up = theta.to_vec();
                up[i] += h;
                let mut dn = theta.to_vec();
                dn[i] -= h;
                (eval(&up) - eval(&dn)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn grad_matches_finite_differences_all_simulators() {
        let mut r = rng(44);
        let gaussian = GaussianLocation::new(2).unwrap();
        let gandk = GAndK;
        let toggle = ToggleSwitch::new(15).unwrap();
        let sims: [&dyn Simulator; 3] = [&gaussian, &gandk, &toggle];
        let kernels = [Kernel::gaussian(1.2).unwrap(), Kernel::default_mixture()];
        for sim in sims {
            let kernel = if sim.name() == "toggleswitch" {
                &kernels[1]
            } else {
                &kernels[0]
            };
            let instances = if sim.name() == "toggleswitch" {
                20
            } else {
                100
            };
            for _ in 0..instances {
                let theta: Vec<f64> = match sim.name() {
                    "gaussian" => (0..2).map(|_| r.random_range(-2.0..2.0)).collect(),
                    "gandk" => vec![
                        r.random_range(0.0..4.0),
                        r.random_range(0.5..1.5),
                        r.random_range(-1.0..1.0),
                        r.random_range(-1.0..0.3),
                    ],
                    _ => [22.0, 12.0, 4.0, 4.5, 325.0, 0.25, 0.15]
                        .iter()
                        .map(|t| t * r.random_range(0.95..1.05))
                        .collect(),
                };
                let m = 6;
                let mut u = vec![0.0; sim.latent_dim()];
                let mut us = Points::with_capacity(m, sim.latent_dim());
                for _ in 0..m {
                    sim.sample_latent(&mut r, &mut u);
                    us.push(&u);
                }
                // Targets near the simulated range so kernels are active.
                let mut ys = Points::with_capacity(m, sim.output_dim());
                let mut out = vec![0.0; sim.output_dim()];
                for _ in 0..m {
                    sim.sample_latent(&mut r, &mut u);
                    sim.simulate(&theta, &u, &mut out).unwrap();
                    for o in out.iter_mut() {
                        *o += r.random_range(-0.2..0.2);
                    }
                    ys.push(&out);
                }
                let h = 1e-5;
                let analytic = mmd2_grad_u(&theta, &us, &ys, sim, kernel).unwrap();
                let numeric = fd_grad(&theta, &us, &ys, sim, kernel, h);
                let floor = match sim.name() {
                    "toggleswitch" => 64.0 * f64::EPSILON * 1000.0 / h,
                    _ => 64.0 * f64::EPSILON / h,
                };
                for i in 0..theta.len() {
                    let scale = analytic[i].abs().max(numeric[i].abs());
                    assert!(
                        (analytic[i] - numeric[i]).abs() <= 1e-4 * scale + floor,
                        "{}: component {i} analytic {} vs FD {}",
                        sim.name(),
                        analytic[i],
                        numeric[i]
                    );
                }
            }
        }
    }

    #[test]
    fn grad_weighted_matches_weighted_objective_fd() {
        // The weighted-gradient variant must differentiate exactly the
        // mmd2_weighted objective (θ-dependent parts).
        let sim = GaussianLocation::new(1).unwrap();
        let k = Kernel::gaussian(1.0).unwrap();
        let mut r = rng(45);
        for _ in 0..20 {
            let theta = [r.random_range(-1.0..1.0)];
            let atoms: Vec<f64> = (0..5).map(|_| r.random_range(-2.0..2.0)).collect();
            let mut w: Vec<f64> = (0..5).map(|_| r.random_range(0.1..1.0)).collect();
            let s: f64 = w.iter().sum();
            for wi in &mut w {
                *wi /= s;
            }
            let s2: f64 = w.iter().sum();
            for wi in &mut w {
                *wi /= s2;
            }
            let measure = WeightedMeasure::new(pts1(&atoms), w).unwrap();
            let us: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
            let us = pts1(&us);
            let analytic = mmd2_grad_weighted(&theta, &us, &measure, &sim, &k).unwrap();
            let h = 1e-6;
            let eval = |th: f64| -> f64 {
                let flat: Vec<f64> = us.iter().map(|u| th + u[0]).collect();
                // Weighted objective with the simulated side as the sample:
                // term1 (θ-free) + cross + U-form self term of simulations.
                mmd2_weighted(&measure, &pts1(&flat), &k).unwrap()
            };
            let numeric = (eval(theta[0] + h) - eval(theta[0] - h)) / (2.0 * h);
            assert_relative_eq!(analytic[0], numeric, max_relative = 1e-4, epsilon = 1e-9);
        }
    }
}
