//! Posterior moments by 1-D adaptive quadrature.
//!
//! These routines integrate the scalar-channel posterior density directly and
//! never call the closed-form denoisers; they are the reference the denoiser
//! implementations are tested against.

use std::f64::consts::PI;

use crate::denoise::truncnorm::log_norm_tail;

/// Maximum recursion depth of the adaptive Simpson rule.
const MAX_DEPTH: u32 = 48;
/// Points in the coarse scan used to locate the posterior mode.
const SCAN_POINTS: usize = 2001;

fn log_channel(x: f64, q: f64, v: f64) -> f64 {
    -0.5 * ((2.0 * PI * v).ln() + (x - q) * (x - q) / v)
}

fn simpson_segment(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, eps: f64) -> f64 {
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    adaptive(f, a, fa, m, fm, b, fb, whole, eps, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        left + right + delta / 15.0
    } else {
        adaptive(f, a, fa, lm, flm, m, fm, left, 0.5 * eps, depth - 1)
            + adaptive(f, m, fm, rm, frm, b, fb, right, 0.5 * eps, depth - 1)
    }
}

/// Integrates `exp(log_prior(x)) · N(q; x, v)` over `[lo, hi]` and returns
/// `(log mass, posterior mean, posterior variance)`.
///
/// The caller supplies a bracket `[lo, hi]` that contains essentially all of
/// the posterior mass. Moments are computed around the scanned mode so that
/// the variance does not cancel catastrophically.
pub fn posterior_moments_log(
    log_prior: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    q: f64,
    v: f64,
) -> (f64, f64, f64) {
    assert!(hi > lo, "empty integration bracket");
    let g = |x: f64| log_prior(x) + log_channel(x, q, v);

    // Locate the mode on a dense grid; it pivots the moment integrals and
    // normalizes the integrand into exp range.
    let h = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let mut peak = f64::NEG_INFINITY;
    let mut c = lo;
    let mut coarse = 0.0f64;
    let mut values = Vec::with_capacity(SCAN_POINTS);
    for k in 0..SCAN_POINTS {
        let x = lo + h * k as f64;
        let gx = g(x);
        values.push(gx);
        if gx > peak {
            peak = gx;
            c = x;
        }
    }
    for gx in &values {
        coarse += (gx - peak).exp() * h;
    }

    let f0 = |x: f64| (g(x) - peak).exp();
    let eps0 = coarse.max(1e-30) * 1e-13;
    let width = hi - lo;

    let integrate = |f: &dyn Fn(f64) -> f64, eps: f64| -> f64 {
        let mut total = 0.0;
        for (a, b) in [(lo, c), (c, hi)] {
            if b > a {
                total += simpson_segment(&|x| f(x), a, f(a), b, f(b), eps);
            }
        }
        total
    };

    let mass = integrate(&f0, eps0);
    let first = integrate(&|x| (x - c) * f0(x), eps0 * width.max(1.0));
    let second = integrate(&|x| (x - c) * (x - c) * f0(x), eps0 * (width * width).max(1.0));

    let shift = first / mass;
    let mean = c + shift;
    let var = (second / mass - shift * shift).max(0.0);
    (peak + mass.ln(), mean, var)
}

/// Bracket for a Gaussian product posterior with mean `m` and deviation `s`.
fn gaussian_bracket(m: f64, s: f64) -> (f64, f64) {
    (m - 15.0 * s, m + 15.0 * s)
}

/// Bracket for a posterior `∝ N(m, s²)` restricted to `x ≥ 0`. For deeply
/// truncated cases (`m ≪ 0`) the surviving mass is a boundary layer of width
/// `≈ s²/|m|` at the origin.
fn truncated_bracket(m: f64, s: f64) -> (f64, f64) {
    let z = -m / s;
    let u_hi = if z <= 1.0 { 15.0 } else { z + 60.0 / z };
    (0.0, m + s * u_hi)
}

/// Reference moments for the Gaussian prior `N(m0, v0)`.
pub fn gaussian_reference(q: f64, v: f64, m0: f64, v0: f64) -> (f64, f64) {
    let s2 = v0 * v / (v0 + v);
    let m = s2 * (m0 / v0 + q / v);
    let (lo, hi) = gaussian_bracket(m, s2.sqrt());
    let (_, mean, var) =
        posterior_moments_log(|x| -0.5 * (x - m0) * (x - m0) / v0, lo, hi, q, v);
    (mean, var)
}

/// Reference moments for `N(0, γ⁻¹)`; `γ = 0` is the flat prior.
pub fn gaussian_gamma_reference(q: f64, v: f64, gamma: f64) -> (f64, f64) {
    if gamma == 0.0 {
        let (lo, hi) = gaussian_bracket(q, v.sqrt());
        let (_, mean, var) = posterior_moments_log(|_| 0.0, lo, hi, q, v);
        return (mean, var);
    }
    gaussian_reference(q, v, 0.0, 1.0 / gamma)
}

/// Reference moments for the non-negative Gaussian prior `N₊(θ, φ)`.
pub fn nonneg_reference(q: f64, v: f64, theta: f64, phi: f64) -> (f64, f64) {
    let s2 = phi * v / (phi + v);
    let m = s2 * (theta / phi + q / v);
    let (lo, hi) = truncated_bracket(m, s2.sqrt());
    let (_, mean, var) = posterior_moments_log(
        |x| -0.5 * (x - theta) * (x - theta) / phi,
        lo,
        hi,
        q,
        v,
    );
    (mean, var)
}

/// Reference moments for the spike-and-slab prior: point mass at zero with
/// weight `1 − delta` plus `N₊(θ, φ)` with weight `delta`. The spike is
/// handled analytically; the slab by quadrature.
pub fn spike_slab_reference(q: f64, v: f64, delta: f64, theta: f64, phi: f64) -> (f64, f64) {
    if delta <= 0.0 {
        return (0.0, 0.0);
    }
    let s2 = phi * v / (phi + v);
    let m = s2 * (theta / phi + q / v);
    let (lo, hi) = truncated_bracket(m, s2.sqrt());
    let log_slab_norm = log_norm_tail(-theta / phi.sqrt());
    let (log_mass_slab, slab_mean, slab_var) = posterior_moments_log(
        |x| delta.ln() - 0.5 * (x - theta) * (x - theta) / phi
            - 0.5 * (2.0 * PI * phi).ln()
            - log_slab_norm,
        lo,
        hi,
        q,
        v,
    );
    if delta >= 1.0 {
        return (slab_mean, slab_var);
    }
    let log_mass_spike = (1.0 - delta).ln() + log_channel(0.0, q, v);
    let hi_mass = log_mass_slab.max(log_mass_spike);
    let z = (log_mass_slab - hi_mass).exp() + (log_mass_spike - hi_mass).exp();
    let resp = (log_mass_slab - hi_mass).exp() / z;
    let mean = resp * slab_mean;
    let second = resp * (slab_var + slab_mean * slab_mean);
    (mean, (second - mean * mean).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_prior_returns_the_channel() {
        let (mean, var) = gaussian_gamma_reference(1.7, 0.3, 0.0);
        assert!((mean - 1.7).abs() < 1e-9);
        assert!((var - 0.3).abs() < 1e-9);
    }

    #[test]
    fn conjugate_gaussian_closed_form() {
        // Two Gaussians multiply to a Gaussian; quadrature must agree with
        // the textbook formula.
        let (q, v, m0, v0) = (2.0, 0.5, -1.0, 2.0);
        let (mean, var) = gaussian_reference(q, v, m0, v0);
        let var_ref = v0 * v / (v0 + v);
        let mean_ref = var_ref * (m0 / v0 + q / v);
        assert!((mean - mean_ref).abs() < 1e-10);
        assert!((var - var_ref).abs() < 1e-10);
    }

    #[test]
    fn truncated_standard_case() {
        let (mean, var) = nonneg_reference(0.0, 1.0, 0.0, 1.0);
        assert!((mean - 0.5641895835477563).abs() < 1e-9);
        assert!((var - 0.18169011381620932).abs() < 1e-9);
    }

    #[test]
    fn deep_truncation_boundary_layer() {
        // Posterior mass is an exponential sliver at the origin; the bracket
        // logic must still capture it.
        let (mean, var) = nonneg_reference(-10.0, 1e-3, 0.0, 1.0);
        assert!(mean > 0.0 && mean < 1e-3);
        assert!(var > 0.0 && var < mean * mean * 10.0);
    }

    #[test]
    fn spike_slab_collapses_at_the_limits() {
        let (m1, v1) = spike_slab_reference(1.0, 1.0, 1.0, 0.0, 1.0);
        let (m2, v2) = nonneg_reference(1.0, 1.0, 0.0, 1.0);
        assert!((m1 - m2).abs() < 1e-9);
        assert!((v1 - v2).abs() < 1e-9);
        let (m0, v0) = spike_slab_reference(1.0, 1.0, 0.0, 0.0, 1.0);
        assert_eq!((m0, v0), (0.0, 0.0));
    }
}
