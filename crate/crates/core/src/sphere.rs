//! Radial diffusion in a sphere on a uniform nodal grid, shared by the
//! negative particle and the one-phase positive particle.

/// Central second-order finite differences of
/// dc/dt = D (c'' + 2 c' / r) on nodes r_i = i R / (N - 1).
///
/// The centre node uses the symmetry limit 3 D c''; the surface node uses a
/// ghost node placed so that dc/dr = `surface_gradient` at r = R.
pub fn diffusion_rhs_into(
    c: &[f64],
    radius: f64,
    diffusivity: f64,
    surface_gradient: f64,
    out: &mut [f64],
) {
    let n = c.len();
    let h = radius / (n - 1) as f64;
    let inv_h2 = 1.0 / (h * h);
    out[0] = 6.0 * diffusivity * (c[1] - c[0]) * inv_h2;
    for i in 1..n - 1 {
        let r = i as f64 * h;
        out[i] = diffusivity
            * ((c[i + 1] - 2.0 * c[i] + c[i - 1]) * inv_h2 + (c[i + 1] - c[i - 1]) / (r * h));
    }
    let ghost = c[n - 2] + 2.0 * h * surface_gradient;
    out[n - 1] = diffusivity
        * ((ghost - 2.0 * c[n - 1] + c[n - 2]) * inv_h2 + 2.0 * surface_gradient / radius);
}

/// Integral of c(r) r^2 over [r_0, r_last] for a profile that is linear
/// between the given nodes; exact for piecewise-linear c.
pub fn moment_piecewise_linear(r: &[f64], c: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..r.len() - 1 {
        let (a, b) = (r[i], r[i + 1]);
        let (ca, cb) = (c[i], c[i + 1]);
        // c(r) = ca + s (r - a), s = (cb - ca) / (b - a)
        let s = (cb - ca) / (b - a);
        let i2 = (b.powi(3) - a.powi(3)) / 3.0;
        let i3 = (b.powi(4) - a.powi(4)) / 4.0;
        total += (ca - s * a) * i2 + s * i3;
    }
    total
}

/// Volume-averaged concentration normalized by `c_max` on the uniform grid.
pub fn bulk_fraction(c: &[f64], radius: f64, c_max: f64) -> f64 {
    let n = c.len();
    let h = radius / (n - 1) as f64;
    let r: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    3.0 * moment_piecewise_linear(&r, c) / (c_max * radius.powi(3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_linear_profiles_integrate_exactly() {
        let n = 20;
        assert!((bulk_fraction(&vec![7.0; n], 2.5e-6, 7.0) - 1.0).abs() < 1e-12);
        assert!((bulk_fraction(&vec![3.5; n], 2.5e-6, 7.0) - 0.5).abs() < 1e-12);
        let c: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        assert!((bulk_fraction(&c, 1.0, 1.0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn uniform_profile_without_flux_is_stationary() {
        let c = vec![1234.0; 12];
        let mut out = vec![1.0; 12];
        diffusion_rhs_into(&c, 1e-6, 1e-14, 0.0, &mut out);
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quadratic_profile_rises_uniformly() {
        // c = a r^2 is the steady-rising solution with c' (R) = 2 a R and
        // dc/dt = 6 a D everywhere; the stencils reproduce it exactly
        let (n, radius, d, a) = (15, 2.0, 0.3, 0.7);
        let h = radius / (n - 1) as f64;
        let c: Vec<f64> = (0..n).map(|i| a * (i as f64 * h).powi(2)).collect();
        let mut out = vec![0.0; n];
        diffusion_rhs_into(&c, radius, d, 2.0 * a * radius, &mut out);
        for v in out {
            assert!((v - 6.0 * a * d).abs() < 1e-12, "{v}");
        }
    }
}
