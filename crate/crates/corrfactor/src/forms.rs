//! Parametric correlation-factor forms: the linear R12 and Ten-no factors and
//! their range-separated extensions, with analytic derivatives, the Gaussian
//! switching function, and least-squares fitting to reference f(r) grids.

use crate::error::{Error, Result};

/// Families of closed-form correlation factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormKind {
    /// f = 1 + r/2.
    R12,
    /// f = (1 + 2 gamma - e^(-gamma r)) / (2 gamma).
    TenNo,
    /// f = (1 + r/2) e^(-mu r^2) + c r^rho e^(b r) S_n(mu r^2).
    RangeSepLinear,
    /// Ten-no short range switched to the same long-range tail.
    RangeSepTenNo,
}

/// A correlation factor with its parameters. Fields not used by the given
/// kind are zero. `n` is the switching index; for `rho >= 0` it must be 0,
/// for `rho < 0` it must be the smallest integer with `2n + rho >= 0`.
#[derive(Clone, Debug)]
pub struct CorrelationFactorForm {
    pub kind: FormKind,
    pub gamma: f64,
    pub mu: f64,
    pub c: f64,
    pub b: f64,
    pub rho: f64,
    pub n: u32,
}

impl CorrelationFactorForm {
    pub fn r12() -> CorrelationFactorForm {
        CorrelationFactorForm { kind: FormKind::R12, gamma: 0.0, mu: 0.0, c: 0.0, b: 0.0, rho: 0.0, n: 0 }
    }

    pub fn ten_no(gamma: f64) -> Result<CorrelationFactorForm> {
        let f = CorrelationFactorForm { kind: FormKind::TenNo, gamma, ..Self::r12() };
        f.validate()?;
        Ok(f)
    }

    pub fn range_sep_linear(mu: f64, c: f64, b: f64, rho: f64) -> Result<CorrelationFactorForm> {
        let f = CorrelationFactorForm {
            kind: FormKind::RangeSepLinear,
            gamma: 0.0,
            mu,
            c,
            b,
            rho,
            n: choose_n(rho),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn range_sep_ten_no(
        gamma: f64,
        mu: f64,
        c: f64,
        b: f64,
        rho: f64,
    ) -> Result<CorrelationFactorForm> {
        let f = CorrelationFactorForm {
            kind: FormKind::RangeSepTenNo,
            gamma,
            mu,
            c,
            b,
            rho,
            n: choose_n(rho),
        };
        f.validate()?;
        Ok(f)
    }

    fn is_range_sep(&self) -> bool {
        matches!(self.kind, FormKind::RangeSepLinear | FormKind::RangeSepTenNo)
    }

    /// Exponential rate of the large-r envelope (0 for the short-range kinds).
    pub fn long_range_rate(&self) -> f64 {
        if self.is_range_sep() {
            self.b
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.gamma, self.mu, self.c, self.b, self.rho]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("form parameters must be finite".into()));
        }
        if matches!(self.kind, FormKind::TenNo | FormKind::RangeSepTenNo) && !(self.gamma > 0.0) {
            return Err(Error::Domain(format!(
                "Ten-no slope gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.is_range_sep() {
            if !(self.mu > 0.0) {
                return Err(Error::Domain(format!(
                    "switch width mu must be positive, got {}",
                    self.mu
                )));
            }
            if self.rho >= 0.0 {
                if self.n != 0 {
                    return Err(Error::Domain(format!(
                        "switching index must be 0 for rho = {} >= 0, got n = {}",
                        self.rho, self.n
                    )));
                }
            } else {
                let n = self.n as f64;
                if 2.0 * n + self.rho < 0.0 || 2.0 * (n - 1.0) + self.rho >= 0.0 {
                    return Err(Error::Domain(format!(
                        "switching index n = {} incompatible with rho = {}",
                        self.n, self.rho
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Switching function S_n(x) = 1 - e^(-x) sum_{l<=n} x^l/l!, the regularized
/// lower incomplete gamma function P(n+1, x). For x below n+1 the
/// complementary finite sum would cancel catastrophically, so the tail series
/// e^(-x) sum_{l>n} x^l/l! is summed directly instead.
pub fn switching_s_n(n: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < n as f64 + 1.0 {
        let mut term = 1.0;
        for l in 1..=n as u64 + 1 {
            term *= x / l as f64;
        }
        let mut sum = term;
        let mut l = n as f64 + 2.0;
        loop {
            term *= x / l;
            sum += term;
            if term < f64::EPSILON * sum {
                break;
            }
            l += 1.0;
        }
        sum * (-x).exp()
    } else {
        let mut partial = 1.0;
        let mut term = 1.0;
        for l in 1..=n as u64 {
            term *= x / l as f64;
            partial += term;
        }
        1.0 - (-x).exp() * partial
    }
}

/// Derivative of the switching function: S_n'(x) = e^(-x) x^n / n!.
pub fn switching_s_n_prime(n: u32, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let mut v = (-x).exp();
    for l in 1..=n as u64 {
        v *= x / l as f64;
    }
    v
}

/// Smallest switching index n >= 0 with 2n + rho >= 0; 0 for rho >= 0.
pub fn choose_n(rho: f64) -> u32 {
    if rho >= 0.0 {
        0
    } else {
        (-rho / 2.0).ceil() as u32
    }
}

/// Value (deriv = 0) or analytic first/second derivative (deriv = 1, 2) of
/// the form at r > 0.
pub fn evaluate_form(form: &CorrelationFactorForm, r: f64, deriv: u8) -> Result<f64> {
    let (f, fp, fpp) = evaluate_form_derivs(form, r)?;
    match deriv {
        0 => Ok(f),
        1 => Ok(fp),
        2 => Ok(fpp),
        _ => Err(Error::Domain(format!("derivative order {deriv} not supported"))),
    }
}

/// Value and first two derivatives in one pass.
pub fn evaluate_form_derivs(form: &CorrelationFactorForm, r: f64) -> Result<(f64, f64, f64)> {
    form.validate()?;
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("forms are defined for r > 0, got {r}")));
    }
    // Short-range factor and its derivatives.
    let (sp, sp1, sp2) = match form.kind {
        FormKind::R12 | FormKind::RangeSepLinear => (1.0 + 0.5 * r, 0.5, 0.0),
        FormKind::TenNo | FormKind::RangeSepTenNo => {
            let g = form.gamma;
            let e = (-g * r).exp();
            ((1.0 + 2.0 * g - e) / (2.0 * g), 0.5 * e, -0.5 * g * e)
        }
    };
    if !form.is_range_sep() {
        return Ok((sp, sp1, sp2));
    }
    let mu = form.mu;
    let x = mu * r * r;
    // Gaussian switch-off of the short range.
    let gsw = (-x).exp();
    let gsw1 = -2.0 * mu * r * gsw;
    let gsw2 = (4.0 * mu * mu * r * r - 2.0 * mu) * gsw;
    let short = sp * gsw;
    let short1 = sp1 * gsw + sp * gsw1;
    let short2 = sp2 * gsw + 2.0 * sp1 * gsw1 + sp * gsw2;
    // Long range c u(r) S_n(mu r^2) with u = r^rho e^(b r).
    let (c, b, rho, n) = (form.c, form.b, form.rho, form.n);
    let u = r.powf(rho) * (b * r).exp();
    let u1 = (rho / r + b) * u;
    let u2 = (rho * (rho - 1.0) / (r * r) + 2.0 * b * rho / r + b * b) * u;
    let s = switching_s_n(n, x);
    let sx = switching_s_n_prime(n, x);
    // d/dr S_n(mu r^2) and its derivative.
    let s1 = 2.0 * mu * r * sx;
    let s2 = 2.0 * mu * sx * (1.0 + 2.0 * (n as f64) - 2.0 * x);
    let long = c * u * s;
    let long1 = c * (u1 * s + u * s1);
    let long2 = c * (u2 * s + 2.0 * u1 * s1 + u * s2);
    Ok((short + long, short1 + long1, short2 + long2))
}

/// Free parameters of each kind, in fit order.
fn free_params(form: &CorrelationFactorForm) -> Vec<f64> {
    match form.kind {
        FormKind::R12 => Vec::new(),
        FormKind::TenNo => vec![form.gamma],
        FormKind::RangeSepLinear => vec![form.mu, form.c],
        FormKind::RangeSepTenNo => vec![form.gamma, form.mu, form.c],
    }
}

fn with_params(form: &CorrelationFactorForm, p: &[f64]) -> CorrelationFactorForm {
    let mut f = form.clone();
    match form.kind {
        FormKind::R12 => {}
        FormKind::TenNo => f.gamma = p[0],
        FormKind::RangeSepLinear => {
            f.mu = p[0];
            f.c = p[1];
        }
        FormKind::RangeSepTenNo => {
            f.gamma = p[0];
            f.mu = p[1];
            f.c = p[2];
        }
    }
    f
}

/// Strictly positive parameters (the scale at index 0, slopes, widths) stay
/// positive during fitting.
fn params_admissible(form: &CorrelationFactorForm, p: &[f64]) -> bool {
    if !(p[0] > 0.0) {
        return false;
    }
    match form.kind {
        FormKind::R12 => true,
        FormKind::TenNo => p[1] > 0.0,
        FormKind::RangeSepLinear => p[1] > 0.0,
        FormKind::RangeSepTenNo => p[1] > 0.0 && p[2] > 0.0,
    }
}

/// Extrapolate the reference to r = 0 through the lowest few grid points
/// (Lagrange on up to 5 nodes); used to normalize f(0) = 1 before fitting.
fn extrapolate_zero(grid: &[(f64, f64)]) -> f64 {
    let k = grid.len().min(5);
    let pts = &grid[..k];
    let mut v = 0.0;
    for (i, &(ri, fi)) in pts.iter().enumerate() {
        let mut w = fi;
        for (j, &(rj, _)) in pts.iter().enumerate() {
            if i != j {
                w *= rj / (rj - ri);
            }
        }
        v += w;
    }
    v
}

/// Least-squares fit of the free parameters of `template` (slope, switch
/// width, long-range amplitude depending on kind) to a reference (r, f) grid,
/// with the exponential rate b and the power rho held fixed. Weights are
/// uniform over the given grid. Every form family satisfies f(0) = 1 by
/// construction, so the normalization of the reference to f(0) = 1 is fitted
/// jointly as an overall scale (a polynomial extrapolation to r = 0 would be
/// biased by the fractional power r^(2 + rho) near the origin). Returns the
/// fitted form and the root-mean-square residual on the normalized scale.
pub fn fit_form(
    template: &CorrelationFactorForm,
    reference: &[(f64, f64)],
) -> Result<(CorrelationFactorForm, f64)> {
    template.validate()?;
    if reference.len() < 8 {
        return Err(Error::Domain(format!(
            "reference grid has {} points; at least 8 required",
            reference.len()
        )));
    }
    let mut grid: Vec<(f64, f64)> = reference.to_vec();
    grid.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if grid.iter().any(|&(r, f)| !(r > 0.0) || !f.is_finite()) {
        return Err(Error::Domain("reference grid must have r > 0 and finite f".into()));
    }
    let (rmin, rmax) = (grid[0].0, grid[grid.len() - 1].0);
    if rmin > 0.1 || rmax < 8.0 {
        return Err(Error::Domain(format!(
            "reference grid [{rmin}, {rmax}] must cover the cusp region and the asymptote"
        )));
    }
    let f0 = extrapolate_zero(&grid);
    if !(f0.abs() > 1e-12) {
        return Err(Error::Domain("reference extrapolates to f(0) = 0".into()));
    }

    // p[0] is the reference scale; p[1..] the form parameters.
    let cost = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
        let form = with_params(template, &p[1..]);
        let mut res = Vec::with_capacity(grid.len());
        let mut c = 0.0;
        for &(r, y) in &grid {
            let e = p[0] * evaluate_form(&form, r, 0)? - y;
            c += e * e;
            res.push(e);
        }
        Ok((c, res))
    };

    let mut p = vec![f0];
    p.extend(free_params(template));
    let np = p.len();
    let (mut fcur, mut rescur) = cost(&p)?;
    let mut lambda = 1e-3;
    let mut trace = Vec::new();
    let finish = |p: &[f64], fcur: f64| -> Result<(CorrelationFactorForm, f64)> {
        let fitted = with_params(template, &p[1..]);
        fitted.validate()?;
        let scale = p[0].abs().max(1e-12);
        Ok((fitted, (fcur / grid.len() as f64).sqrt() / scale))
    };
    for iter in 0..500 {
        // Central-difference Jacobian of the residual vector.
        let mut jac = vec![vec![0.0; np]; grid.len()];
        for k in 0..np {
            let h = 1e-6 * p[k].abs().max(0.1);
            let mut pp = p.clone();
            pp[k] += h;
            let (_, rp) = cost(&pp)?;
            pp[k] = p[k] - h;
            let (_, rm) = cost(&pp)?;
            for (i, row) in jac.iter_mut().enumerate() {
                row[k] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let mut jtj = vec![vec![0.0; np]; np];
        let mut jtr = vec![0.0; np];
        for (i, row) in jac.iter().enumerate() {
            for a in 0..np {
                jtr[a] += row[a] * rescur[i];
                for b in 0..np {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        if jtr.iter().all(|g| g.abs() < 1e-14 * (1.0 + fcur)) {
            return finish(&p, fcur);
        }
        // Inner damping loop: raise lambda until a step is accepted.
        loop {
            let mut m = jtj.clone();
            for a in 0..np {
                m[a][a] += lambda * jtj[a][a].max(1e-30);
            }
            let mut rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let step = solve_small(&mut m, &mut rhs);
            let mut accepted = false;
            if let Some(step) = step {
                let pnew: Vec<f64> = p.iter().zip(&step).map(|(a, d)| a + d).collect();
                if params_admissible(template, &pnew) {
                    if let Ok((fnew, resnew)) = cost(&pnew) {
                        if fnew <= fcur {
                            let drop = fcur - fnew;
                            let small_step = step
                                .iter()
                                .zip(&p)
                                .all(|(d, a)| d.abs() < 1e-12 * (1.0 + a.abs()));
                            p = pnew;
                            fcur = fnew;
                            rescur = resnew;
                            lambda = (lambda / 3.0).max(1e-14);
                            accepted = true;
                            if small_step || drop < 1e-16 * fcur.max(1e-28) {
                                return finish(&p, fcur);
                            }
                        }
                    }
                }
            }
            if accepted {
                break;
            }
            lambda *= 7.0;
            if lambda > 1e13 {
                // Damping floor: no admissible descent direction remains at
                // double precision, so the current point is the minimum.
                return finish(&p, fcur);
            }
        }
        trace.push(format!("iter {iter}: cost {fcur:.6e} lambda {lambda:.1e}"));
    }
    Err(Error::Convergence(format!(
        "fit did not converge; last steps: {}",
        trace.iter().rev().take(4).cloned().collect::<Vec<_>>().join("; ")
    )))
}

/// Gaussian elimination with partial pivoting for the tiny normal systems.
fn solve_small(m: &mut [Vec<f64>], rhs: &mut [f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let fac = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= fac * m[col][k];
            }
            rhs[row] -= fac * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut v = rhs[row];
        for k in row + 1..n {
            v -= m[row][k] * x[k];
        }
        x[row] = v / m[row][row];
    }
    Some(x)
}
