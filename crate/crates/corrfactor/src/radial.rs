//! Closed-form radial two-electron integrals over the perimetric domain
//! r1 in [0, inf), r2 in [|r1 - r|, r1 + r] at fixed interelectronic
//! distance r, together with exact rational moment constants and the
//! large-r asymptotic form.

use num_traits::{One, ToPrimitive, Zero};
use std::cell::RefCell;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rational::{binom, fact, pow_i, rat, rat_i, rat_to_f64, Rat};

/// Largest exponent pair accepted by the f64 evaluation path; beyond this the
/// alternating sums lose too much precision to be trusted.
pub const MAX_POWER: u32 = 60;

/// Compensated (Kahan) accumulator for sums with cancellation.
#[derive(Default, Clone, Copy)]
pub(crate) struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

/// Arguments of the basic integral `i_mn`.
#[derive(Clone, Copy, Debug)]
pub struct IntegralRequest {
    pub m: u32,
    pub n: u32,
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
}

/// A_k(p) = (k!/p^(k+1)) e^(-p) sum_{j<=k} p^j / j!, for p > 0.
pub fn a_k(k: u32, p: f64) -> Result<f64> {
    if p <= 0.0 || !p.is_finite() {
        return Err(Error::Domain(format!("a_k requires p > 0, got {p}")));
    }
    // Horner form of e^(-p)/p * sum_{i<=k} k!/(k-i)! p^(-i); all terms positive.
    let mut acc = 1.0;
    for m in 1..=k {
        acc = 1.0 + f64::from(m) / p * acc;
    }
    Ok((-p).exp() * acc / p)
}

/// B_l(q) = integral of eta^l e^(-q eta) over [-1, 1].
///
/// Uses the closed two-exponential form for large |q| and the everywhere-
/// convergent Taylor series otherwise (the closed form cancels
/// catastrophically as q -> 0; in particular it is unusable for |q| < 1e-4,
/// where the series branch is always taken).
pub fn b_l(l: u32, q: f64) -> f64 {
    if q.abs() < 5.0 {
        // sum_t (-q)^t/t! * (1 + (-1)^(l+t)) / (l + t + 1)
        let mut term = 1.0; // (-q)^t / t!
        let mut acc = Kahan::default();
        for t in 0..200u32 {
            if (l + t) % 2 == 0 {
                acc.add(2.0 * term / f64::from(l + t + 1));
            }
            term *= -q / f64::from(t + 1);
            if t > 3 && term.abs() < 1e-19 * (acc.value().abs() + 1e-300) {
                break;
            }
        }
        acc.value()
    } else {
        let mut s_plus = 0.0; // sum q^j / j!
        let mut s_minus = 0.0; // sum (-q)^j / j!
        let mut term = 1.0;
        for j in 0..=l {
            s_plus += term;
            s_minus += if j % 2 == 0 { term } else { -term };
            term *= q / f64::from(j + 1);
        }
        let bracket = q.exp() * s_minus - (-q).exp() * s_plus;
        let mut lfac = 1.0;
        for j in 2..=l {
            lfac *= f64::from(j);
        }
        lfac / q.powi(l as i32 + 1) * bracket
    }
}

/// The basic integral
/// I_mn(alpha, beta, r) = int_0^inf dr1 int_{|r1-r|}^{r1+r} dr2
///                        e^(-alpha r1 - beta r2) r1^m r2^n,
/// evaluated through the A_k/B_l binomial expansion.
pub fn i_mn(req: &IntegralRequest) -> Result<f64> {
    let IntegralRequest { m, n, alpha, beta, r } = *req;
    if m > MAX_POWER || n > MAX_POWER {
        return Err(Error::Range(format!(
            "i_mn supports powers up to {MAX_POWER}, got m={m} n={n}"
        )));
    }
    if r <= 0.0 || !r.is_finite() {
        return Err(Error::Domain(format!("i_mn requires r > 0, got {r}")));
    }
    if alpha + beta <= 0.0 {
        return Err(Error::Domain(format!(
            "i_mn requires alpha + beta > 0, got {}",
            alpha + beta
        )));
    }
    let p = r * (alpha + beta) / 2.0;
    let q = r * (alpha - beta) / 2.0;
    let top = (m + n) as usize;
    let mut a_cache = Vec::with_capacity(top + 1);
    let mut b_cache = Vec::with_capacity(top + 1);
    for k in 0..=top as u32 {
        a_cache.push(a_k(k, p)?);
        b_cache.push(b_l(k, q));
    }
    let mut acc = Kahan::default();
    for l in 0..=m {
        for k in 0..=n {
            let kk = (k + l) as usize;
            let ll = (m + n - l - k) as usize;
            let j_kl = 2.0 * (r / 2.0).powi((kk + ll + 2) as i32) * a_cache[kk] * b_cache[ll];
            let c = binom(m as u64, l as u64) * binom(n as u64, k as u64);
            let sign = if (n - k) % 2 == 0 { 1.0 } else { -1.0 };
            acc.add(sign * c.to_f64().unwrap() * j_kl);
        }
    }
    Ok(acc.value())
}

/// C_mn = n! m! / (n + m + 1)!, the leading asymptotic moment constant.
pub fn c_mn(m: u32, n: u32) -> Rat {
    Rat::new(fact(m as u64) * fact(n as u64), fact((m + n + 1) as u64))
}

/// D_mn = 2 (m + n + 1) C_mn - delta_m0 - delta_n0, the next-order constant.
pub fn d_mn(m: u32, n: u32) -> Rat {
    let mut d = rat_i(2 * (m + n + 1) as i64) * c_mn(m, n);
    if m == 0 {
        d -= Rat::one();
    }
    if n == 0 {
        d -= Rat::one();
    }
    d
}

/// C_mn as its defining binomial double sum; oracle for `c_mn`.
pub fn c_mn_double_sum(m: u32, n: u32) -> Rat {
    let mut s = Rat::zero();
    for l in 0..=m {
        for k in 0..=n {
            let sign_k = if k % 2 == 0 { 1 } else { -1 };
            let sign_l = if l % 2 == 0 { 1 } else { -1 };
            s += Rat::new(
                binom(m as u64, l as u64) * binom(n as u64, k as u64) * (sign_k + sign_l),
                num_bigint::BigInt::from((k + l + 1) as i64),
            );
        }
    }
    s / pow_i(&rat_i(2), (m + n + 1) as i64).unwrap()
}

/// D_mn as its defining binomial double sum; oracle for `d_mn`.
pub fn d_mn_double_sum(m: u32, n: u32) -> Rat {
    let mut s = Rat::zero();
    for l in 0..=m {
        for k in 0..=n {
            let sign_k = if k % 2 == 0 { 1 } else { -1 };
            let sign_l = if l % 2 == 0 { 1 } else { -1 };
            let weight = (m - l + n - k) as i64;
            s += Rat::new(
                binom(m as u64, l as u64) * binom(n as u64, k as u64) * (sign_k + sign_l) * weight,
                num_bigint::BigInt::from((k + l + 1) as i64),
            );
        }
    }
    s / pow_i(&rat_i(2), (m + n) as i64).unwrap()
}

/// Large-r expansion of the equal-exponent integral:
/// I_mn(alpha, alpha, r) ~ (e^(-alpha r)/alpha) r^(m+n+1)
///                         [C_mn + D_mn/(2 alpha r) + O(1/r^2)].
/// `order` 1 keeps only C_mn; `order` 2 adds the D_mn correction.
pub fn i_mn_asymptotic(m: u32, n: u32, alpha: f64, r: f64, order: u8) -> Result<f64> {
    if alpha <= 0.0 || r <= 0.0 {
        return Err(Error::Domain(format!(
            "i_mn_asymptotic requires alpha > 0 and r > 0, got alpha={alpha} r={r}"
        )));
    }
    if !(order == 1 || order == 2) {
        return Err(Error::Domain(format!("asymptotic order must be 1 or 2, got {order}")));
    }
    let mut bracket = rat_to_f64(&c_mn(m, n));
    if order == 2 {
        bracket += rat_to_f64(&d_mn(m, n)) / (2.0 * alpha * r);
    }
    Ok((-alpha * r).exp() / alpha * r.powi((m + n + 1) as i32) * bracket)
}

/// One exponential component of an exact integral: `poly(r) * exp(-rate r)`,
/// with `coeffs[p]` the rational coefficient of r^p.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpPoly {
    pub rate: Rat,
    pub coeffs: Vec<Rat>,
}

impl ExpPoly {
    /// Numerical value of this component at r.
    pub fn eval(&self, r: f64) -> f64 {
        let mut poly = 0.0;
        for c in self.coeffs.iter().rev() {
            poly = poly * r + rat_to_f64(c);
        }
        poly * (-rat_to_f64(&self.rate) * r).exp()
    }
}

thread_local! {
    /// Kernel reductions request the same (m, n, a, b) decompositions many
    /// thousands of times during matrix assembly; memoize per thread.
    static COMPONENT_CACHE: RefCell<BTreeMap<(u32, u32, Rat, Rat), Vec<ExpPoly>>> =
        RefCell::new(BTreeMap::new());
}

/// Exact decomposition I_mn(a, b, r) = sum over components poly(r) e^(-rate r)
/// with rational polynomial coefficients. For a != b the components decay as
/// e^(-a r) and e^(-b r); for a == b a single component remains. All powers of
/// r are non-negative and the r^0 coefficients cancel in the sum (I_mn(0)=0).
pub fn i_mn_components(m: u32, n: u32, a: &Rat, b: &Rat) -> Result<Vec<ExpPoly>> {
    let key = (m, n, a.clone(), b.clone());
    if let Some(hit) = COMPONENT_CACHE.with(|c| c.borrow().get(&key).cloned()) {
        return Ok(hit);
    }
    let out = i_mn_components_uncached(m, n, a, b)?;
    COMPONENT_CACHE.with(|c| {
        let mut map = c.borrow_mut();
        if map.len() >= 4096 {
            map.clear();
        }
        map.insert(key, out.clone());
    });
    Ok(out)
}

fn i_mn_components_uncached(m: u32, n: u32, a: &Rat, b: &Rat) -> Result<Vec<ExpPoly>> {
    if (a.clone() + b.clone()) <= Rat::zero() {
        return Err(Error::Domain("i_mn_components requires a + b > 0".into()));
    }
    let two = rat_i(2);
    let p_rate = (a.clone() + b.clone()) / &two;
    let q_rate = (a.clone() - b.clone()) / &two;
    // map: rate -> (power -> coefficient)
    let mut comps: BTreeMap<Rat, BTreeMap<i64, Rat>> = BTreeMap::new();
    let mut push = |rate: &Rat, pow: i64, c: Rat| {
        if pow < 0 {
            return Err(Error::Internal(format!(
                "negative power r^{pow} in integral component"
            )));
        }
        *comps
            .entry(rate.clone())
            .or_default()
            .entry(pow)
            .or_insert_with(Rat::zero) += c;
        Ok(())
    };
    for l in 0..=m as u64 {
        for k in 0..=n as u64 {
            let kk = k + l;
            let ll = (m + n) as u64 - l - k;
            let mut big = binom(m as u64, l) * binom(n as u64, k);
            if (n as u64 - k) % 2 == 1 {
                big = -big;
            }
            let scale = Rat::from_integer(big) * pow_i(&two, -(kk as i64 + ll as i64 + 1))?;
            if q_rate.is_zero() {
                // B_L(0) = (1 + (-1)^L)/(L + 1)
                if ll % 2 == 1 {
                    continue;
                }
                let b0 = rat(2, ll as i64 + 1);
                for j1 in 0..=kk {
                    let c = scale.clone() * &b0 * Rat::from_integer(fact(kk) / fact(j1))
                        * pow_i(&p_rate, j1 as i64 - kk as i64 - 1)?;
                    push(a, (ll + 1 + j1) as i64, c)?;
                }
            } else {
                let kl_fac = Rat::from_integer(fact(kk) * fact(ll));
                for j1 in 0..=kk {
                    for j2 in 0..=ll {
                        let base = scale.clone() * &kl_fac
                            / Rat::from_integer(fact(j1) * fact(j2))
                            * pow_i(&p_rate, j1 as i64 - kk as i64 - 1)?
                            * pow_i(&q_rate, j2 as i64 - ll as i64 - 1)?;
                        let pow = (j1 + j2) as i64;
                        let sign_j2 = if j2 % 2 == 0 { 1 } else { -1 };
                        // e^(-b r) part carries (-1)^j2; e^(-a r) part enters negated.
                        push(b, pow, base.clone() * rat_i(sign_j2))?;
                        push(a, pow, -base)?;
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    let mut const_sum = Rat::zero();
    for (rate, powers) in comps {
        let max_pow = powers.keys().max().copied().unwrap_or(0);
        let mut coeffs = vec![Rat::zero(); (max_pow + 1) as usize];
        for (p, c) in powers {
            coeffs[p as usize] = c;
        }
        while coeffs.last().map(|c| c.is_zero()).unwrap_or(false) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            continue;
        }
        const_sum += &coeffs[0];
        out.push(ExpPoly { rate, coeffs });
    }
    if !const_sum.is_zero() {
        return Err(Error::Internal(
            "integral components do not vanish at r = 0".into(),
        ));
    }
    Ok(out)
}

/// Evaluate a component decomposition at r.
pub fn eval_components(comps: &[ExpPoly], r: f64) -> f64 {
    comps.iter().map(|c| c.eval(r)).sum()
}

/// Exact Coulomb-type double integral
/// int_0^inf int_0^inf r1^s1 e^(-c1 r1) r2^s2 e^(-c2 r2) / max(r1, r2) dr2 dr1,
/// used by the self-consistent-field solver. Requires s1, s2 >= 1.
pub fn coulomb_ss(s1: u32, s2: u32, c1: &Rat, c2: &Rat) -> Result<Rat> {
    if s1 < 1 || s2 < 1 {
        return Err(Error::Domain("coulomb_ss requires s1, s2 >= 1".into()));
    }
    if *c1 <= Rat::zero() || *c2 <= Rat::zero() {
        return Err(Error::Domain("coulomb_ss requires positive exponents".into()));
    }
    // G(s1, s2, c1, c2) covers the region r2 < r1 with the 1/r1 weight.
    let g = |s1: u32, s2: u32, c1: &Rat, c2: &Rat| -> Result<Rat> {
        let csum = c1.clone() + c2.clone();
        let mut inner = Rat::from_integer(fact(s1 as u64 - 1)) * pow_i(c1, -(s1 as i64))?;
        for j in 0..=s2 as u64 {
            inner -= pow_i(c2, j as i64)? / Rat::from_integer(fact(j))
                * Rat::from_integer(fact(s1 as u64 - 1 + j))
                * pow_i(&csum, -(s1 as i64 + j as i64))?;
        }
        Ok(Rat::from_integer(fact(s2 as u64)) * pow_i(c2, -(s2 as i64 + 1))? * inner)
    };
    Ok(g(s1, s2, c1, c2)? + g(s2, s1, c2, c1)?)
}
