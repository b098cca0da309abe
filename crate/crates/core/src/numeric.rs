//! Small numerical helpers shared by the geometric modules: uniform grids,
//! composite Simpson weights, five-point differentiation of sampled curves,
//! seeded sampling and pseudo-inverse solves.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// `n + 1` equally spaced nodes on `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| if k == n { b } else { a + (b - a) * k as f64 / n as f64 })
        .collect()
}

/// Composite Simpson weights for `n` (even) equal intervals of width `h`.
pub fn simpson_weights(n: usize, h: f64) -> Result<Vec<f64>> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::Invalid(format!(
            "Simpson quadrature needs an even, positive number of intervals (got {n})"
        )));
    }
    Ok((0..=n)
        .map(|k| {
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect())
}

/// Composite Simpson rule on equally spaced samples.
pub fn simpson(values: &[f64], h: f64) -> Result<f64> {
    let w = simpson_weights(values.len().saturating_sub(1), h)?;
    Ok(w.iter().zip(values).map(|(w, v)| w * v).sum())
}

/// Simpson with one Richardson step against the every-other-sample rule
/// (Boole's rule) when the interval count is a multiple of 4.
pub fn simpson_extrapolated(values: &[f64], h: f64) -> Result<f64> {
    let n = values.len().saturating_sub(1);
    let fine = simpson(values, h)?;
    if n < 4 || !n.is_multiple_of(4) {
        return Ok(fine);
    }
    let coarse: Vec<f64> = values.iter().step_by(2).copied().collect();
    let coarse = simpson(&coarse, 2.0 * h)?;
    Ok((16.0 * fine - coarse) / 15.0)
}

/// Fourth-order derivative of equally spaced samples (one-sided stencils at the ends).
pub fn derivative5(f: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = f.len();
    if n < 5 {
        return Err(Error::Invalid(format!(
            "five-point differentiation needs at least 5 samples (got {n})"
        )));
    }
    let c = 1.0 / (12.0 * h);
    let mut d = vec![0.0; n];
    d[0] = c * (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]);
    d[1] = c * (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]);
    for k in 2..n - 2 {
        d[k] = c * (f[k - 2] - 8.0 * f[k - 1] + 8.0 * f[k + 1] - f[k + 2]);
    }
    let m = n - 1;
    d[m - 1] = c * (3.0 * f[m] + 10.0 * f[m - 1] - 18.0 * f[m - 2] + 6.0 * f[m - 3] - f[m - 4]);
    d[m] = c * (25.0 * f[m] - 48.0 * f[m - 1] + 36.0 * f[m - 2] - 16.0 * f[m - 3] + 3.0 * f[m - 4]);
    Ok(d)
}

/// Componentwise [`derivative5`] of a sampled vector curve.
pub fn derivative5_vec(curve: &[Vec<f64>], h: f64) -> Result<Vec<Vec<f64>>> {
    let n = curve.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; n]; curve.len()];
    for i in 0..n {
        let comp: Vec<f64> = curve.iter().map(|v| v[i]).collect();
        for (k, d) in derivative5(&comp, h)?.into_iter().enumerate() {
            out[k][i] = d;
        }
    }
    Ok(out)
}

/// Deterministic generator for all random sampling.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` points drawn uniformly from the box `[lo, hi]^dim`.
pub fn sample_box(seed: u64, count: usize, dim: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut rng = seeded_rng(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect())
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Minimum-norm least-squares solution of `m x = rhs` and its residual norm.
///
/// Singular values below `rel_tol * σ_max` are treated as zero.
pub fn lstsq(m: &DMatrix<f64>, rhs: &DVector<f64>, rel_tol: f64) -> (DVector<f64>, f64) {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = (rel_tol * smax).max(f64::MIN_POSITIVE);
    let x = svd
        .solve(rhs, eps)
        .unwrap_or_else(|_| DVector::zeros(m.ncols()));
    let residual = (m * &x - rhs).norm();
    (x, residual)
}

/// Map over a slice, in parallel when the `parallel` feature is enabled.
/// Output order always matches input order.
#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Solve `y' = F(k, y)` on equally spaced samples `0..count` (spacing `h`),
/// where `F` is only known at the sample indices and is affine in `y` with
/// smoothly varying coefficients.
///
/// Even nodes come from RK4 with step `2h` over sample triples; odd nodes from
/// an RK4 step of size `h` whose midpoint coefficients are interpolated
/// quadratically from the neighbouring triple. `count - 1` must be even.
pub fn solve_on_samples<F>(count: usize, h: f64, y0: &[f64], f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize, &[f64]) -> Result<Vec<f64>>,
{
    if count < 3 || !(count - 1).is_multiple_of(2) {
        return Err(Error::Invalid(format!(
            "sampled ODE needs an even number of intervals (got {})",
            count.saturating_sub(1)
        )));
    }
    let n = y0.len();
    let axpy = |y: &[f64], s: f64, k: &[f64]| -> Vec<f64> {
        y.iter().zip(k).map(|(a, b)| a + s * b).collect()
    };
    let combine = |y: &[f64], step: f64, k: [&Vec<f64>; 4]| -> Vec<f64> {
        (0..n)
            .map(|i| y[i] + step / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
            .collect()
    };
    let mid = |k: usize, y: &[f64]| -> Result<Vec<f64>> {
        let w = [0.375, 0.75, -0.125];
        let mut acc = vec![0.0; n];
        for (m, wm) in w.iter().enumerate() {
            for (a, v) in acc.iter_mut().zip(f(k + m, y)?) {
                *a += wm * v;
            }
        }
        Ok(acc)
    };
    let mut out = vec![Vec::new(); count];
    out[0] = y0.to_vec();
    let mut y = y0.to_vec();
    let mut k = 0;
    while k + 2 < count {
        let big = 2.0 * h;
        let k1 = f(k, &y)?;
        let k2 = f(k + 1, &axpy(&y, 0.5 * big, &k1))?;
        let k3 = f(k + 1, &axpy(&y, 0.5 * big, &k2))?;
        let k4 = f(k + 2, &axpy(&y, big, &k3))?;
        let next = combine(&y, big, [&k1, &k2, &k3, &k4]);

        let m2 = mid(k, &axpy(&y, 0.5 * h, &k1))?;
        let m3 = mid(k, &axpy(&y, 0.5 * h, &m2))?;
        let m4 = f(k + 1, &axpy(&y, h, &m3))?;
        out[k + 1] = combine(&y, h, [&k1, &m2, &m3, &m4]);

        y = next;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Ode {
                t: (k + 2) as f64 * h,
                reason: "solution is no longer finite".into(),
            });
        }
        out[k + 2] = y.clone();
        k += 2;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrapolated_simpson_is_exact_on_quintics() {
        let xs = uniform_grid(0.0, 1.0, 8);
        let v: Vec<f64> = xs.iter().map(|x| x.powi(5) - 2.0 * x.powi(4)).collect();
        let got = simpson_extrapolated(&v, 0.125).unwrap();
        assert!((got - (1.0 / 6.0 - 0.4)).abs() < 1e-14, "{got}");
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        let n = 10;
        let h = 1.0 / n as f64;
        let vals: Vec<f64> = uniform_grid(0.0, 1.0, n).iter().map(|t| t * t * t - t).collect();
        assert!((simpson(&vals, h).unwrap() - (0.25 - 0.5)).abs() < 1e-15);
        assert!(simpson(&vals[..10], h).is_err());
    }

    #[test]
    fn five_point_derivative_is_exact_on_quartics() {
        let n = 12;
        let h = 0.5 / n as f64;
        let t = uniform_grid(0.0, 0.5, n);
        let f: Vec<f64> = t.iter().map(|t| t.powi(4) - 2.0 * t).collect();
        let d = derivative5(&f, h).unwrap();
        for (t, d) in t.iter().zip(d) {
            assert!((d - (4.0 * t.powi(3) - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_samples_repeat() {
        assert_eq!(sample_box(7, 3, 2, -1.0, 1.0), sample_box(7, 3, 2, -1.0, 1.0));
        assert_ne!(sample_box(7, 3, 2, -1.0, 1.0), sample_box(8, 3, 2, -1.0, 1.0));
    }
}
