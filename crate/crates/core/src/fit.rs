//! Least-squares fitting: Levenberg–Marquardt with analytic Jacobians for
//! the resonance models and direct linear least squares for polynomials.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// `s² (JᵀJ)⁻¹` with `s² = SSE / (m − n)`.
    pub covariance: DMatrix<f64>,
    /// `√SSE`.
    pub residual_norm: f64,
    pub iterations: usize,
}

impl FitResult {
    /// One-sigma uncertainty of parameter `i`.
    pub fn std_error(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative parameter-step tolerance.
    pub x_tol: f64,
    /// Relative SSE-reduction tolerance.
    pub f_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 500, x_tol: 1e-12, f_tol: 1e-12 }
    }
}

/// Minimizes `Σᵢ (yᵢ − f(i, p))²`. `model(i, p, jac)` returns the model value
/// at data point `i` and writes `∂f/∂p` into `jac`.
pub fn levenberg_marquardt<F>(model: F, y: &[f64], p0: &[f64], opts: &LmOptions) -> Result<FitResult>
where
    F: Fn(usize, &[f64], &mut [f64]) -> f64,
{
    let m = y.len();
    let n = p0.len();
    if m < n {
        return Err(Error::FitFailed(format!("{m} points for {n} parameters")));
    }
    let evaluate = |p: &[f64], jac: &mut DMatrix<f64>, r: &mut DVector<f64>| -> f64 {
        let mut row = vec![0.0; n];
        for i in 0..m {
            let v = model(i, p, &mut row);
            r[i] = y[i] - v;
            for k in 0..n {
                jac[(i, k)] = row[k];
            }
        }
        r.norm_squared()
    };
    let mut p = p0.to_vec();
    let mut jac = DMatrix::zeros(m, n);
    let mut r = DVector::zeros(m);
    let mut sse = evaluate(&p, &mut jac, &mut r);
    if !sse.is_finite() {
        return Err(Error::FitFailed("non-finite residual at the initial guess".into()));
    }
    let mut mu = 1e-3;
    let mut trial_jac = DMatrix::zeros(m, n);
    let mut trial_r = DVector::zeros(m);
    let mut converged = sse == 0.0;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut accepted = false;
        for _ in 0..60 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += mu * jtj[(k, k)].max(1e-300);
            }
            let Some(chol) = a.cholesky() else {
                mu *= 4.0;
                continue;
            };
            let step = chol.solve(&g);
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_sse = evaluate(&trial, &mut trial_jac, &mut trial_r);
            if trial_sse.is_finite() && trial_sse <= sse {
                let reduction = sse - trial_sse;
                let step_small = step.iter().zip(&p).all(|(s, x)| s.abs() <= opts.x_tol * (x.abs() + opts.x_tol));
                p = trial;
                std::mem::swap(&mut jac, &mut trial_jac);
                std::mem::swap(&mut r, &mut trial_r);
                sse = trial_sse;
                mu = (mu / 3.0).max(1e-15);
                converged = step_small || reduction <= opts.f_tol * sse || sse == 0.0;
                accepted = true;
                break;
            }
            mu *= 4.0;
            if mu > 1e20 {
                break;
            }
        }
        if !accepted {
            // no downhill step exists at machine precision: a local minimum
            converged = g.amax() <= 1e-10 * (1.0 + sse) || mu > 1e20;
            if !converged {
                return Err(Error::FitFailed("no downhill step found".into()));
            }
        }
    }
    if !converged {
        return Err(Error::FitFailed(format!("no convergence after {iterations} iterations")));
    }
    let covariance = covariance(&jac, sse, m, n)?;
    Ok(FitResult { params: p, covariance, residual_norm: sse.sqrt(), iterations })
}

fn covariance(jac: &DMatrix<f64>, sse: f64, m: usize, n: usize) -> Result<DMatrix<f64>> {
    let jtj = jac.transpose() * jac;
    let eps = 1e-14 * jtj.amax();
    let inv = jtj.pseudo_inverse(eps).map_err(|e| Error::FitFailed(e.to_string()))?;
    let dof = (m - n).max(1) as f64;
    Ok(inv * (sse / dof))
}

/// Linear least squares `y ≈ X β`.
pub fn linear_least_squares(design: &DMatrix<f64>, y: &[f64]) -> Result<FitResult> {
    let (m, n) = design.shape();
    if y.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: y.len() });
    }
    if m < n {
        return Err(Error::FitFailed(format!("{m} points for {n} parameters")));
    }
    let yv = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let beta = svd.solve(&yv, 1e-14).map_err(|e| Error::FitFailed(e.to_string()))?;
    let sse = (&yv - design * &beta).norm_squared();
    Ok(FitResult {
        params: beta.iter().copied().collect(),
        covariance: covariance(design, sse, m, n)?,
        residual_norm: sse.sqrt(),
        iterations: 1,
    })
}

/// Coefficients `c₀ + c₁x + … + c_d x^d`.
pub fn fit_polynomial(x: &[f64], y: &[f64], degree: usize) -> Result<FitResult> {
    let design = DMatrix::from_fn(x.len(), degree + 1, |i, k| x[i].powi(k as i32));
    linear_least_squares(&design, y)
}

/// Coefficients `(a, b)` of `y = a x² + b`.
pub fn fit_even_quadratic(x: &[f64], y: &[f64]) -> Result<FitResult> {
    let design = DMatrix::from_fn(x.len(), 2, |i, k| if k == 0 { x[i] * x[i] } else { 1.0 });
    linear_least_squares(&design, y)
}

/// Coefficients of `c₀ + c₁x + c₂y + c₃x² + c₄xy + c₅y²` over a grid,
/// `signal[i][j]` at `(grid_x[i], grid_y[j])`.
pub fn fit_quadratic_surface(grid_x: &[f64], grid_y: &[f64], signal: &[Vec<f64>]) -> Result<FitResult> {
    if signal.len() != grid_x.len() || signal.iter().any(|r| r.len() != grid_y.len()) {
        return Err(Error::DimensionMismatch { expected: grid_x.len() * grid_y.len(), found: signal.iter().map(Vec::len).sum() });
    }
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (i, &xi) in grid_x.iter().enumerate() {
        for (j, &yj) in grid_y.iter().enumerate() {
            rows.push([1.0, xi, yj, xi * xi, xi * yj, yj * yj]);
            y.push(signal[i][j]);
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailed("non-finite data".into()));
    }
    let design = DMatrix::from_fn(rows.len(), 6, |i, k| rows[i][k]);
    linear_least_squares(&design, &y)
}

fn surface_stationary_point(c: &[f64]) -> Option<[f64; 2]> {
    let (hxx, hxy, hyy) = (2.0 * c[3], c[4], 2.0 * c[5]);
    let det = hxx * hyy - hxy * hxy;
    if det.abs() < f64::MIN_POSITIVE {
        return None;
    }
    Some([(-c[1] * hyy + c[2] * hxy) / det, (-c[2] * hxx + c[1] * hxy) / det])
}

/// Maximum of a fitted quadratic surface and its one-sigma uncertainty,
/// propagated linearly from the coefficient covariance. Fails unless the
/// surface is concave.
pub fn quadratic_surface_peak(fit: &FitResult) -> Result<([f64; 2], [f64; 2])> {
    let c = &fit.params;
    if c.len() != 6 {
        return Err(Error::InvalidArgument("expected six surface coefficients".into()));
    }
    let (hxx, hxy, hyy) = (2.0 * c[3], c[4], 2.0 * c[5]);
    if !(hxx < 0.0 && hxx * hyy - hxy * hxy > 0.0) {
        return Err(Error::FitFailed("surface has no maximum".into()));
    }
    let peak = surface_stationary_point(c).ok_or_else(|| Error::FitFailed("singular curvature".into()))?;
    let mut jac = DMatrix::zeros(2, 6);
    for k in 0..6 {
        let h = 1e-6 * c[k].abs().max(1e-8);
        let mut cp = c.clone();
        let mut cm = c.clone();
        cp[k] += h;
        cm[k] -= h;
        let (pp, pm) = match (surface_stationary_point(&cp), surface_stationary_point(&cm)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::FitFailed("singular curvature".into())),
        };
        for d in 0..2 {
            jac[(d, k)] = (pp[d] - pm[d]) / (2.0 * h);
        }
    }
    let cov = &jac * &fit.covariance * jac.transpose();
    Ok((peak, [cov[(0, 0)].max(0.0).sqrt(), cov[(1, 1)].max(0.0).sqrt()]))
}

pub fn eval_polynomial(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn check_signal(x: &[f64], y: &[f64], min_points: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() < min_points {
        return Err(Error::FitFailed(format!("need at least {min_points} points, got {}", x.len())));
    }
    if y.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::FitFailed("non-finite data".into()));
    }
    let (lo, hi) = min_max(y);
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    if hi - lo <= 1e-12 * scale {
        return Err(Error::FitFailed("flat signal".into()));
    }
    Ok(())
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// `offset + amplitude · w² / ((x − center)² + w²)`; parameter order
/// `[center, w, amplitude, offset]` with `w` the half width at half maximum.
pub fn lorentzian(x: f64, p: &[f64]) -> f64 {
    let d = x - p[0];
    p[3] + p[2] * p[1] * p[1] / (d * d + p[1] * p[1])
}

/// Fits a single Lorentzian peak or dip. The result has
/// `params = [center, hwhm, amplitude, offset]`.
pub fn fit_lorentzian(x: &[f64], y: &[f64]) -> Result<FitResult> {
    check_signal(x, y, 5)?;
    let base = median(y);
    let (imax, _) = y
        .iter()
        .enumerate()
        .max_by(|a, b| (a.1 - base).abs().total_cmp(&(b.1 - base).abs()))
        .expect("nonempty");
    let amp = y[imax] - base;
    // half-maximum crossings around the extremum
    let half = base + 0.5 * amp;
    let beyond = |v: f64| if amp > 0.0 { v < half } else { v > half };
    let left = (0..imax).rev().find(|&i| beyond(y[i])).map(|i| x[i]).unwrap_or(x[0]);
    let right = (imax + 1..x.len()).find(|&i| beyond(y[i])).map(|i| x[i]).unwrap_or(x[x.len() - 1]);
    let (xlo, xhi) = min_max(x);
    let span = xhi - xlo;
    let w0 = (0.5 * (right - left).abs()).max(span / (4.0 * x.len() as f64));
    let p0 = [x[imax], w0, amp, base];
    let fit = levenberg_marquardt(
        |i, p, j| {
            let d = x[i] - p[0];
            let w2 = p[1] * p[1];
            let den = d * d + w2;
            let shape = w2 / den;
            j[0] = p[2] * 2.0 * d * w2 / (den * den);
            j[1] = p[2] * 2.0 * p[1] * d * d / (den * den);
            j[2] = shape;
            j[3] = 1.0;
            p[3] + p[2] * shape
        },
        y,
        &p0,
        &LmOptions::default(),
    )?;
    let mut fit = fit;
    fit.params[1] = fit.params[1].abs();
    if !(fit.params[0] >= xlo && fit.params[0] <= xhi) {
        return Err(Error::FitFailed(format!("center {} outside the scan range", fit.params[0])));
    }
    if !(fit.params[1] > 0.0 && fit.params[1] < 10.0 * span) {
        return Err(Error::FitFailed("unphysical width".into()));
    }
    Ok(fit)
}

/// Elliptical 2-D Gaussian
/// `offset + A exp(−½ (a u² + 2b uv + c v²))`, `u = x − x₀`, `v = y − y₀`;
/// parameter order `[x₀, y₀, a, b, c, A, offset]`.
pub fn gaussian_2d(x: f64, y: f64, p: &[f64]) -> f64 {
    let (u, v) = (x - p[0], y - p[1]);
    p[6] + p[5] * (-0.5 * (p[2] * u * u + 2.0 * p[3] * u * v + p[4] * v * v)).exp()
}

/// Standard deviations along x and y of a fitted [`gaussian_2d`].
pub fn gaussian_2d_widths(p: &[f64]) -> (f64, f64) {
    let det = p[2] * p[4] - p[3] * p[3];
    ((p[4] / det).sqrt(), (p[2] / det).sqrt())
}

/// Fits [`gaussian_2d`] to samples on the grid `grid_x × grid_y`;
/// `signal[i][j]` is the value at `(grid_x[i], grid_y[j])`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Peak,
    Dip,
    /// Chosen from the larger excursion around the median.
    Auto,
}

pub fn fit_gaussian_2d(grid_x: &[f64], grid_y: &[f64], signal: &[Vec<f64>], polarity: Polarity) -> Result<FitResult> {
    if grid_x.len() < 6 || grid_y.len() < 6 {
        return Err(Error::FitFailed("2-D Gaussian fit needs at least a 6×6 grid".into()));
    }
    if signal.len() != grid_x.len() || signal.iter().any(|r| r.len() != grid_y.len()) {
        return Err(Error::DimensionMismatch { expected: grid_x.len() * grid_y.len(), found: signal.iter().map(Vec::len).sum() });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut zs = Vec::new();
    for (i, row) in signal.iter().enumerate() {
        for (j, &z) in row.iter().enumerate() {
            xs.push(grid_x[i]);
            ys.push(grid_y[j]);
            zs.push(z);
        }
    }
    check_signal(&xs, &zs, 36)?;
    let mid = median(&zs);
    let (lo, hi) = min_max(&zs);
    let peak = match polarity {
        Polarity::Peak => true,
        Polarity::Dip => false,
        Polarity::Auto => hi - mid >= mid - lo,
    };
    let (base, sign) = if peak { (lo, 1.0) } else { (hi, -1.0) };
    let (k, _) = zs.iter().enumerate().max_by(|a, b| (sign * a.1).total_cmp(&(sign * b.1))).expect("nonempty");
    let amp = zs[k] - base;
    // moments of the region above half maximum; for a Gaussian they are
    // 0.307 times the full covariance
    let mut c = [0.0; 3];
    let mut total = 0.0;
    for i in 0..zs.len() {
        if (zs[i] - base) / amp >= 0.5 {
            let (u, v) = (xs[i] - xs[k], ys[i] - ys[k]);
            c[0] += u * u;
            c[1] += u * v;
            c[2] += v * v;
            total += 1.0;
        }
    }
    let (xlo, xhi) = min_max(grid_x);
    let (ylo, yhi) = min_max(grid_y);
    let min_var_x = ((xhi - xlo) / grid_x.len() as f64).powi(2);
    let min_var_y = ((yhi - ylo) / grid_y.len() as f64).powi(2);
    let vx = (c[0] / total / 0.307).max(min_var_x);
    let vy = (c[2] / total / 0.307).max(min_var_y);
    let cxy = (c[1] / total / 0.307).clamp(-0.9 * (vx * vy).sqrt(), 0.9 * (vx * vy).sqrt());
    let det = vx * vy - cxy * cxy;
    let p0 = [xs[k], ys[k], vy / det, -cxy / det, vx / det, amp, base];
    let fit = levenberg_marquardt(
        |i, p, j| {
            let (u, v) = (xs[i] - p[0], ys[i] - p[1]);
            let q = p[2] * u * u + 2.0 * p[3] * u * v + p[4] * v * v;
            let e = (-0.5 * q).exp();
            let ae = p[5] * e;
            j[0] = ae * (p[2] * u + p[3] * v);
            j[1] = ae * (p[3] * u + p[4] * v);
            j[2] = -0.5 * ae * u * u;
            j[3] = -ae * u * v;
            j[4] = -0.5 * ae * v * v;
            j[5] = e;
            j[6] = 1.0;
            p[6] + ae
        },
        &zs,
        &p0,
        &LmOptions::default(),
    )?;
    let p = &fit.params;
    if !(p[2] > 0.0 && p[4] > 0.0 && p[2] * p[4] > p[3] * p[3]) {
        return Err(Error::FitFailed("fitted Gaussian is not localized".into()));
    }
    if polarity != Polarity::Auto && (p[5] > 0.0) != peak {
        return Err(Error::FitFailed("fitted Gaussian has the wrong polarity".into()));
    }
    if !(p[0] >= xlo && p[0] <= xhi && p[1] >= ylo && p[1] <= yhi) {
        return Err(Error::FitFailed(format!("center ({}, {}) outside the grid", p[0], p[1])));
    }
    Ok(fit)
}

/// `A e^{−γt} cos(ωt + φ) + c`; parameter order `[A, γ, ω, φ, c]`.
pub fn decaying_sinusoid(t: f64, p: &[f64]) -> f64 {
    p[0] * (-p[1] * t).exp() * (p[2] * t + p[3]).cos() + p[4]
}

/// Fits [`decaying_sinusoid`]. The angular frequency is seeded from the
/// periodogram peak of the mean-subtracted signal.
pub fn fit_decaying_sinusoid(t: &[f64], y: &[f64]) -> Result<FitResult> {
    check_signal(t, y, 8)?;
    let (t0, t1) = min_max(t);
    let span = t1 - t0;
    if !(span > 0.0) {
        return Err(Error::FitFailed("zero time span".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    // periodogram on a frequency grid up to the Nyquist rate of the samples
    let nyquist = 0.5 * (t.len() - 1) as f64 / span;
    let nf = 16 * t.len();
    let mut best = (0.0, 0.0);
    for k in 1..=nf {
        let f = nyquist * k as f64 / nf as f64;
        let w = TAU * f;
        let (mut c, mut s) = (0.0, 0.0);
        for (ti, yi) in t.iter().zip(y) {
            c += (yi - mean) * (w * ti).cos();
            s += (yi - mean) * (w * ti).sin();
        }
        let power = c * c + s * s;
        if power > best.1 {
            best = (w, power);
        }
    }
    let w0 = best.0;
    // linear fit of a cos + b sin + c at fixed frequency
    let design = DMatrix::from_fn(t.len(), 3, |i, k| match k {
        0 => (w0 * t[i]).cos(),
        1 => (w0 * t[i]).sin(),
        _ => 1.0,
    });
    let lin = linear_least_squares(&design, y)?;
    let (a, b, c) = (lin.params[0], lin.params[1], lin.params[2]);
    let amp = a.hypot(b);
    let phase = (-b).atan2(a);
    let p0 = [amp, 0.0, w0, phase, c];
    let fit = levenberg_marquardt(
        |i, p, j| {
            let ti = t[i];
            let e = (-p[1] * ti).exp();
            let (s, co) = (p[2] * ti + p[3]).sin_cos();
            j[0] = e * co;
            j[1] = -ti * p[0] * e * co;
            j[2] = -ti * p[0] * e * s;
            j[3] = -p[0] * e * s;
            j[4] = 1.0;
            p[0] * e * co + p[4]
        },
        y,
        &p0,
        &LmOptions::default(),
    )?;
    let mut fit = fit;
    if fit.params[2] < 0.0 {
        fit.params[2] = -fit.params[2];
        fit.params[3] = -fit.params[3];
    }
    if !(fit.params[2] > 0.0) {
        return Err(Error::FitFailed("no oscillation found".into()));
    }
    Ok(fit)
}
