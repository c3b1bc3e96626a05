//! Generative models and contaminated-data generation.
//!
//! Each simulator is a deterministic map `G_θ(u)` from parameters and a
//! latent vector to an observation. The map body is written once, generic
//! over the [`Real`] scalar, and instantiated both at `f64` (plain
//! simulation) and at [`Dual`] (forward-mode derivatives); the dual value
//! slot therefore reproduces plain evaluation bit for bit.
//!
//! Provided models:
//! - [`GaussianLocation`]: `G_θ(u) = θ + u`, `u ~ N(0, I_d)`.
//! - [`GAndK`]: the g-and-k quantile distribution with unconstrained fourth
//!   parameter (`kurtosis exponent = exp(θ₄)`).
//! - [`ToggleSwitch`]: a 300-step coupled genetic toggle-switch recursion
//!   with truncated-normal innovations and a state-scaled output transform.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::forward_ad::{Dual, Real};
use crate::measures::{Dataset, Points};

pub use crate::special::{std_normal_cdf, std_normal_quantile};

/// A parametric simulator with a latent distribution and a map evaluable in
/// plain reals and in dual scalars.
pub trait Simulator: Send + Sync {
    /// Short identifier used in configs and output files.
    fn name(&self) -> &'static str;
    /// Parameter dimension p.
    fn param_dim(&self) -> usize;
    /// Latent dimension (length of `u`).
    fn latent_dim(&self) -> usize;
    /// Output dimension d.
    fn output_dim(&self) -> usize;
    /// Draw one latent vector into `out` (length [`Self::latent_dim`]).
    fn sample_latent(&self, rng: &mut dyn RngCore, out: &mut [f64]);
    /// Plain evaluation of `G_θ(u)` into `out` (length [`Self::output_dim`]).
    fn simulate(&self, theta: &[f64], u: &[f64], out: &mut [f64]) -> Result<()>;
    /// Dual evaluation: `theta` carries seeded tangents, `out` receives
    /// outputs with parameter Jacobian rows in the tangent slots.
    fn simulate_dual(&self, theta: &[Dual], u: &[f64], out: &mut [Dual]) -> Result<()>;
    /// Per-parameter lower bounds for projected optimisation, when the map
    /// is only defined (or numerically sane) on part of the space.
    fn lower_bounds(&self) -> Option<&[f64]> {
        None
    }
}

// ---------------------------------------------------------------------------
// Gaussian location
// ---------------------------------------------------------------------------

/// `G_θ(u) = θ + u` with `u ~ N(0, I_d)`, i.e. `P_θ = N(θ, I_d)`.
#[derive(Clone, Debug)]
pub struct GaussianLocation {
    dim: usize,
}

impl GaussianLocation {
    /// Location model in `dim` dimensions (1 ≤ dim ≤ [`crate::MAX_WIDTH`]).
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > crate::forward_ad::MAX_WIDTH {
            return Err(Error::invalid(format!(
                "Gaussian location dimension must be in 1..={}, got {dim}",
                crate::forward_ad::MAX_WIDTH
            )));
        }
        Ok(GaussianLocation { dim })
    }
}

/// Shared map for the Gaussian location model: `out = θ + u`.
///
/// # Errors
/// `theta`, `u`, and `out` must all have the same length.
pub fn gaussian_location_simulate<S: Real>(theta: &[S], u: &[f64], out: &mut [S]) -> Result<()> {
    if theta.len() != u.len() || out.len() != u.len() {
        return Err(Error::invalid(format!(
            "Gaussian location expects matching dimensions, got theta {}, u {}, out {}",
            theta.len(),
            u.len(),
            out.len()
        )));
    }
    for ((o, &t), &z) in out.iter_mut().zip(theta).zip(u) {
        *o = t + z;
    }
    Ok(())
}

impl Simulator for GaussianLocation {
    fn name(&self) -> &'static str {
        "gaussian"
    }
    fn param_dim(&self) -> usize {
        self.dim
    }
    fn latent_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn sample_latent(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = StandardNormal.sample(rng);
        }
    }
    fn simulate(&self, theta: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        gaussian_location_simulate(theta, u, out)
    }
    fn simulate_dual(&self, theta: &[Dual], u: &[f64], out: &mut [Dual]) -> Result<()> {
        gaussian_location_simulate(theta, u, out)
    }
}

// ---------------------------------------------------------------------------
// g-and-k
// ---------------------------------------------------------------------------

/// The univariate g-and-k quantile distribution, parameterised as
/// `(a, b, g, θ₄)` with location `a`, scale `b`, skewness `g`, and kurtosis
/// exponent `exp(θ₄)` so the fourth parameter is unconstrained.
#[derive(Clone, Debug, Default)]
pub struct GAndK;

/// Shared g-and-k map.
///
/// `z = sqrt(-2 log u₁) · cos(2π u₂)` is a standard normal draw and the
/// output is `a + b (1 + 0.8 (1-e^{-gz})/(1+e^{-gz})) (1+z²)^{exp(θ₄)} z`.
///
/// # Errors
/// `theta` must have length 4 and both latent components must lie strictly
/// inside (0, 1).
pub fn gandk_simulate<S: Real>(theta: &[S], u: &[f64]) -> Result<S> {
    if theta.len() != 4 {
        return Err(Error::invalid(format!(
            "g-and-k expects 4 parameters, got {}",
            theta.len()
        )));
    }
    if u.len() != 2 {
        return Err(Error::invalid(format!(
            "g-and-k expects 2 latent components, got {}",
            u.len()
        )));
    }
    if !(u[0] > 0.0 && u[0] < 1.0 && u[1] > 0.0 && u[1] < 1.0) {
        return Err(Error::invalid(format!(
            "g-and-k latents must lie in (0,1), got ({}, {})",
            u[0], u[1]
        )));
    }
    let (a, b, g, theta4) = (theta[0], theta[1], theta[2], theta[3]);
    // Box-Muller normal from the two uniforms; latent-only, so plain f64.
    let z = (-2.0 * u[0].ln()).sqrt() * (std::f64::consts::TAU * u[1]).cos();
    let e = (-(g * z)).exp();
    let skew = (-(e - 1.0)) / (e + 1.0);
    let kappa = theta4.exp();
    // (1 + z²)^κ via the variable-exponent power; the base is ≥ 1.
    let amp = kappa.lift(1.0 + z * z).pow(kappa)?;
    Ok(a + b * (skew * 0.8 + 1.0) * amp * z)
}

impl Simulator for GAndK {
    fn name(&self) -> &'static str {
        "gandk"
    }
    fn param_dim(&self) -> usize {
        4
    }
    fn latent_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn sample_latent(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = open_unit(rng);
        }
    }
    fn simulate(&self, theta: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = gandk_simulate(theta, u)?;
        Ok(())
    }
    fn simulate_dual(&self, theta: &[Dual], u: &[f64], out: &mut [Dual]) -> Result<()> {
        out[0] = gandk_simulate(theta, u)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Toggle switch
// ---------------------------------------------------------------------------

/// Stochastic toggle-switch simulator with parameters
/// `(α₁, α₂, β₁, β₂, μ, σ, γ)`, initial state `(v₀, w₀) = (10, 10)`, and
/// `t_steps` coupled updates driven by truncated-normal innovations; the
/// latent dimension is `2·t_steps + 1`.
#[derive(Clone, Debug)]
pub struct ToggleSwitch {
    t_steps: usize,
}

impl Default for ToggleSwitch {
    fn default() -> Self {
        ToggleSwitch { t_steps: 300 }
    }
}

/// Parameter floor used both for the in-map state clamp and as the
/// optimiser's projection bound for this model.
const TOGGLE_FLOOR: f64 = 1e-6;
const TOGGLE_LOWER_BOUNDS: [f64; 7] = [TOGGLE_FLOOR; 7];

impl ToggleSwitch {
    /// Simulator with `t_steps` updates (the reference experiment uses 300).
    pub fn new(t_steps: usize) -> Result<Self> {
        if t_steps == 0 {
            return Err(Error::invalid("toggle switch needs at least one step"));
        }
        Ok(ToggleSwitch { t_steps })
    }

    /// Number of state updates.
    pub fn t_steps(&self) -> usize {
        self.t_steps
    }
}

/// State raised to a real power, clamped below at the floor first so the
/// power (computed as `exp(e·log s)`) stays defined when the state grazes 0.
fn state_pow<S: Real>(s: S, e: S) -> Result<S> {
    s.max_const(TOGGLE_FLOOR).pow(e)
}

/// One truncated-normal innovation: sample from `N(x, 0.5²)` conditioned on
/// `[0, ∞)` by inverse transform, with the quantile argument clamped to
/// `[1e-12, 1 - 1e-12]` so the quantile stays finite at saturated tails.
fn trunc_step<S: Real>(x: S, u: f64, step: usize) -> Result<S> {
    let lo = (x * -2.0).normal_cdf();
    let arg = lo + (-(lo - 1.0)) * u;
    let clamped = arg.max_const(1e-12).min_const(1.0 - 1e-12);
    let q = clamped.normal_quantile().map_err(|e| Error::Simulation {
        step,
        reason: e.to_string(),
    })?;
    Ok(x + q * 0.5)
}

/// Shared toggle-switch map; see [`ToggleSwitch`] for the parameterisation.
///
/// # Errors
/// Wrong parameter/latent dimensions, latents outside (0,1), non-positive
/// `μ` or `σ`, non-finite states, or a non-positive terminal state all
/// produce a simulation error carrying the step index.
pub fn toggle_switch_simulate<S: Real>(theta: &[S], u: &[f64], t_steps: usize) -> Result<S> {
    if theta.len() != 7 {
        return Err(Error::invalid(format!(
            "toggle switch expects 7 parameters, got {}",
            theta.len()
        )));
    }
    if u.len() != 2 * t_steps + 1 {
        return Err(Error::invalid(format!(
            "toggle switch with {t_steps} steps expects {} latent components, got {}",
            2 * t_steps + 1,
            u.len()
        )));
    }
    if let Some(k) = u.iter().position(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::Simulation {
            step: k / 2,
            reason: format!("latent component {k} = {} outside (0,1)", u[k]),
        });
    }
    let (a1, a2, b1, b2, mu, sg, gm) = (
        theta[0], theta[1], theta[2], theta[3], theta[4], theta[5], theta[6],
    );
    if !(mu.value() > 0.0) || !(sg.value() > 0.0) {
        return Err(Error::Simulation {
            step: 0,
            reason: format!(
                "output transform needs positive mu and sigma, got mu = {}, sigma = {}",
                mu.value(),
                sg.value()
            ),
        });
    }

    let mut v = mu.lift(10.0);
    let mut w = mu.lift(10.0);
    for t in 0..t_steps {
        let v_drift = v + a1 / (state_pow(w, b1)? + 1.0) - (v * 0.03 + 1.0);
        let w_drift = w + a2 / (state_pow(v, b2)? + 1.0) - (w * 0.03 + 1.0);
        v = trunc_step(v_drift, u[2 * t], t)?;
        w = trunc_step(w_drift, u[2 * t + 1], t)?;
        if !v.value().is_finite() || !w.value().is_finite() {
            return Err(Error::Simulation {
                step: t,
                reason: format!("state diverged: v = {}, w = {}", v.value(), w.value()),
            });
        }
    }
    if !(v.value() > 0.0) {
        return Err(Error::Simulation {
            step: t_steps,
            reason: format!("terminal state v = {} is not positive", v.value()),
        });
    }

    let v_gamma = state_pow(v, gm)?;
    let mu_sigma = mu * sg;
    let h = -(((mu + v) * v_gamma) / mu_sigma);
    let lo = h.normal_cdf();
    let arg = lo + (-(lo - 1.0)) * u[2 * t_steps];
    let clamped = arg.max_const(1e-12).min_const(1.0 - 1e-12);
    let q = clamped.normal_quantile().map_err(|e| Error::Simulation {
        step: t_steps,
        reason: e.to_string(),
    })?;
    let out = q * mu_sigma / v_gamma + (mu + v);
    if !out.value().is_finite() {
        return Err(Error::Simulation {
            step: t_steps,
            reason: format!("non-finite output {}", out.value()),
        });
    }
    Ok(out)
}

impl Simulator for ToggleSwitch {
    fn name(&self) -> &'static str {
        "toggleswitch"
    }
    fn param_dim(&self) -> usize {
        7
    }
    fn latent_dim(&self) -> usize {
        2 * self.t_steps + 1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn sample_latent(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = open_unit(rng);
        }
    }
    fn simulate(&self, theta: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = toggle_switch_simulate(theta, u, self.t_steps)?;
        Ok(())
    }
    fn simulate_dual(&self, theta: &[Dual], u: &[f64], out: &mut [Dual]) -> Result<()> {
        out[0] = toggle_switch_simulate(theta, u, self.t_steps)?;
        Ok(())
    }
    fn lower_bounds(&self) -> Option<&[f64]> {
        Some(&TOGGLE_LOWER_BOUNDS)
    }
}

/// Uniform draw guaranteed to lie strictly inside (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>().max(1e-300)
}

// ---------------------------------------------------------------------------
// Contaminated data generation
// ---------------------------------------------------------------------------

/// Contamination mechanism; the variant also selects the generative model
/// that produces the clean portion of the data.
#[derive(Clone, Debug)]
pub enum Contamination {
    /// Gaussian location data where each point is independently replaced by
    /// a draw from `N(θ′, I)` with probability `epsilon`.
    GaussianMixture { epsilon: f64, theta_prime: Vec<f64> },
    /// g-and-k data where exactly `2·⌊εn/2⌋` points are shifted, half by
    /// `+delta` and half by `-delta`.
    GnkShift { epsilon: f64, delta: f64 },
    /// Toggle-switch data where exactly `⌊fraction·n⌋` uniformly chosen
    /// points receive additive Cauchy(location, scale) noise.
    CauchyNoise {
        fraction: f64,
        location: f64,
        scale: f64,
    },
    /// Misspecification benchmark: data drawn as `θ₀ + standard Cauchy`
    /// per coordinate (no point-wise outliers, mask all false).
    CauchyData,
}

impl Contamination {
    /// g-and-k shift contamination with the reference offset Δ = 50.
    pub fn gnk_shift(epsilon: f64) -> Self {
        Contamination::GnkShift {
            epsilon,
            delta: 50.0,
        }
    }

    /// Toggle-switch Cauchy noise with the reference fraction 0.1,
    /// location 0, scale 10.
    pub fn cauchy_noise() -> Self {
        Contamination::CauchyNoise {
            fraction: 0.1,
            location: 0.0,
            scale: 10.0,
        }
    }
}

/// Dataset recipe: contamination model plus sample size.
#[derive(Clone, Debug)]
pub struct ContaminationSpec {
    pub model: Contamination,
    pub n: usize,
}

/// Standard Cauchy draw via `tan(π(U − 1/2))`.
fn standard_cauchy<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (std::f64::consts::PI * (rng.random::<f64>() - 0.5)).tan()
}

fn check_unit_interval(value: f64, label: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::invalid(format!(
            "{label} must lie in [0,1], got {value}"
        )));
    }
    Ok(())
}

/// Generate a contaminated dataset at the true parameter.
///
/// The contamination variant determines the generative model: Gaussian
/// mixture → Gaussian location, g-and-k shift → g-and-k, Cauchy noise →
/// toggle switch, Cauchy data → heavy-tailed location data. The returned
/// mask flags points generated as outliers (all false for `CauchyData`,
/// where the whole distribution is misspecified rather than single points).
///
/// # Errors
/// Requires `n ≥ 2`, valid mixing proportions, and a `true_theta` whose
/// length matches the implied model.
pub fn generate_dataset<R: Rng>(
    spec: &ContaminationSpec,
    true_theta: &[f64],
    rng: &mut R,
) -> Result<Dataset> {
    let n = spec.n;
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 points, got {n}")));
    }
    match &spec.model {
        Contamination::GaussianMixture {
            epsilon,
            theta_prime,
        } => {
            check_unit_interval(*epsilon, "epsilon")?;
            let d = true_theta.len();
            if theta_prime.len() != d {
                return Err(Error::invalid(format!(
                    "outlier location has dimension {}, data has {d}",
                    theta_prime.len()
                )));
            }
            let sim = GaussianLocation::new(d)?;
            let mut mask = Vec::with_capacity(n);
            let mut points = Points::with_capacity(n, d);
            let mut u = vec![0.0; d];
            let mut x = vec![0.0; d];
            for _ in 0..n {
                let outlier = rng.random::<f64>() < *epsilon;
                sim.sample_latent(rng, &mut u);
                let center = if outlier { theta_prime } else { true_theta };
                sim.simulate(center, &u, &mut x)?;
                points.push(&x);
                mask.push(outlier);
            }
            Dataset::new(points, mask)
        }
        Contamination::GnkShift { epsilon, delta } => {
            check_unit_interval(*epsilon, "epsilon")?;
            let sim = GAndK;
            let mut u = [0.0; 2];
            let mut x = [0.0];
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                sim.sample_latent(rng, &mut u);
                sim.simulate(true_theta, &u, &mut x)?;
                values.push(x[0]);
            }
            let half = (*epsilon * n as f64 / 2.0).floor() as usize;
            let chosen = rand::seq::index::sample(rng, n, 2 * half);
            let mut mask = vec![false; n];
            for (rank, idx) in chosen.into_iter().enumerate() {
                let shift = if rank < half { *delta } else { -*delta };
                values[idx] += shift;
                mask[idx] = true;
            }
            Dataset::new(Points::new(values, 1)?, mask)
        }
        Contamination::CauchyNoise {
            fraction,
            location,
            scale,
        } => {
            check_unit_interval(*fraction, "fraction")?;
            let sim = ToggleSwitch::default();
            let mut u = vec![0.0; sim.latent_dim()];
            let mut x = [0.0];
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                sim.sample_latent(rng, &mut u);
                sim.simulate(true_theta, &u, &mut x)?;
                values.push(x[0]);
            }
            let count = (*fraction * n as f64).floor() as usize;
            let chosen = rand::seq::index::sample(rng, n, count);
            let mut mask = vec![false; n];
            for idx in chosen {
                values[idx] += location + scale * standard_cauchy(rng);
                mask[idx] = true;
            }
            Dataset::new(Points::new(values, 1)?, mask)
        }
        Contamination::CauchyData => {
            let d = true_theta.len();
            let mut points = Points::with_capacity(n, d);
            let mut x = vec![0.0; d];
            for _ in 0..n {
                for (k, xk) in x.iter_mut().enumerate() {
                    *xk = true_theta[k] + standard_cauchy(rng);
                }
                points.push(&x);
            }
            Ok(Dataset::clean(points))
        }
    }
}
