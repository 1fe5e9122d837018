//! Exact reduction of the Hamiltonian kernel for the Gaussian reference
//! function e^(-alpha r1^2) e^(-alpha r2^2).
//!
//! In scaled perimetric coordinates xi = (r1 + r2)/r in [1, inf),
//! eta = (r1 - r2)/r in [-1, 1] the fixed-r electron integrals factorize into
//! one-dimensional Gaussian moments over xi and eta. Those moments close
//! under an algebra of monomials
//!   q t^(h/2) pi^(k/2) e^(-j t) erf(sqrt(t))^e,   t = alpha r^2,
//! with rational q, and every erf^2, pi, and bare-sqrt(pi) monomial cancels
//! exactly from the assembled kernel, leaving the rational-coefficient
//! normalized operator plus a single known normalization factor.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::polyexp::{merge_ode, OdeTerm};
use crate::rational::{binom, pow_i, rat, rat_i, Rat};

/// Monomial q * t^(half_t/2) * pi^(half_pi/2) * e^(-expt * t) * erf(sqrt t)^erf.
#[derive(Clone, Debug)]
struct TMono {
    q: Rat,
    half_t: i64,
    half_pi: i64,
    expt: i64,
    erf: u8,
}

fn tmul(a: &TMono, b: &TMono) -> TMono {
    TMono {
        q: &a.q * &b.q,
        half_t: a.half_t + b.half_t,
        half_pi: a.half_pi + b.half_pi,
        expt: a.expt + b.expt,
        erf: a.erf + b.erf,
    }
}

fn tscale(list: &[TMono], q: &Rat, dhalf_t: i64) -> Vec<TMono> {
    list.iter()
        .map(|m| TMono {
            q: &m.q * q,
            half_t: m.half_t + dhalf_t,
            ..m.clone()
        })
        .collect()
}

/// Ga_K(t) = int_1^inf xi^K e^(-t xi^2) dxi as monomials, via
/// Ga_0 = (sqrt(pi)/2) t^(-1/2) (1 - erf), Ga_1 = e^(-t)/(2t),
/// Ga_K = e^(-t)/(2t) + (K-1)/(2t) Ga_{K-2}.
fn ga(k: u32) -> Vec<TMono> {
    match k {
        0 => vec![
            TMono { q: rat(1, 2), half_t: -1, half_pi: 1, expt: 0, erf: 0 },
            TMono { q: rat(-1, 2), half_t: -1, half_pi: 1, expt: 0, erf: 1 },
        ],
        1 => vec![TMono { q: rat(1, 2), half_t: -2, half_pi: 0, expt: 1, erf: 0 }],
        _ => {
            let mut v = vec![TMono { q: rat(1, 2), half_t: -2, half_pi: 0, expt: 1, erf: 0 }];
            v.extend(tscale(&ga(k - 2), &rat(k as i64 - 1, 2), -2));
            v
        }
    }
}

/// Gb_L(t) = int_{-1}^{1} eta^L e^(-t eta^2) deta as monomials (zero for odd
/// L), via Gb_0 = sqrt(pi) t^(-1/2) erf, Gb_L = -e^(-t)/t + (L-1)/(2t) Gb_{L-2}.
fn gb(l: u32) -> Vec<TMono> {
    if l % 2 == 1 {
        return Vec::new();
    }
    if l == 0 {
        return vec![TMono { q: rat_i(1), half_t: -1, half_pi: 1, expt: 0, erf: 1 }];
    }
    let mut v = vec![TMono { q: rat_i(-1), half_t: -2, half_pi: 0, expt: 1, erf: 0 }];
    v.extend(tscale(&gb(l - 2), &rat(l as i64 - 1, 2), -2));
    v
}

/// One 2-D term c r^p r1^m r2^n (times the implicit Gaussian weight
/// e^(-alpha(r1^2 + r2^2)) of the reference function) multiplying f^(fderiv).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussTerm2D {
    pub coeff: Rat,
    pub p: i64,
    pub m: i64,
    pub n: i64,
    pub fderiv: u8,
}

/// Apply the S-state Hamiltonian to (sum of terms) * f(r) where every term
/// carries the Gaussian weight e^(-alpha(r1^2 + r2^2)).
pub fn apply_hamiltonian_gauss(
    psi: &[GaussTerm2D],
    alpha: &Rat,
    z: &Rat,
) -> Result<Vec<GaussTerm2D>> {
    let mut out = Vec::new();
    let half = rat(1, 2);
    let two_alpha = rat_i(2) * alpha;
    for t in psi {
        if t.fderiv != 0 || t.p != 0 || t.m < 0 || t.n < 0 {
            return Err(Error::Domain(format!(
                "apply_hamiltonian_gauss expects bare reference terms, got {t:?}"
            )));
        }
        for swap in [false, true] {
            let m = if swap { t.n } else { t.m };
            let mq = rat_i(m);
            let mut push = |coeff: Rat, dp: i64, dm: i64, dn_other: i64, fderiv: u8| {
                if coeff.is_zero() {
                    return;
                }
                let (dm1, dn1) = if swap { (dn_other, dm) } else { (dm, dn_other) };
                out.push(GaussTerm2D {
                    coeff: t.coeff.clone() * coeff,
                    p: t.p + dp,
                    m: t.m + dm1,
                    n: t.n + dn1,
                    fderiv,
                });
            };
            // d/dri [ri^m e^(-alpha ri^2)] = (m ri^(m-1) - 2 alpha ri^(m+1)) e^(..)
            // -(1/2) d^2/dri^2: m(m-1) ri^(m-2) - 2 alpha (2m+1) ri^m + 4 alpha^2 ri^(m+2)
            push(-&half * &mq * rat_i(m - 1), 0, -2, 0, 0);
            push(&half * &two_alpha * rat_i(2 * m + 1), 0, 0, 0, 0);
            push(-&half * rat_i(4) * alpha * alpha, 0, 2, 0, 0);
            // -(1/2)(2/ri) d/dri: 2m ri^(m-2) - 4 alpha ri^m
            push(-&mq, 0, -2, 0, 0);
            push(two_alpha.clone(), 0, 0, 0, 0);
            // -(1/2)((r^2 + ri^2 - rj^2)/(r ri)) d/dri acting on f'
            for (dcoeff, ddm) in [(mq.clone(), -1i64), (-two_alpha.clone(), 1)] {
                let c = -&half * &dcoeff;
                push(c.clone(), 1, ddm - 1, 0, 1);
                push(c.clone(), -1, ddm + 1, 0, 1);
                push(-c, -1, ddm - 1, 2, 1);
            }
            // -(1/2) 2Z/ri
            push(-z.clone(), 0, -1, 0, 0);
        }
        let base = |coeff: Rat, dp: i64, fderiv: u8| GaussTerm2D {
            coeff: t.coeff.clone() * coeff,
            p: t.p + dp,
            m: t.m,
            n: t.n,
            fderiv,
        };
        out.push(base(rat_i(-1), 0, 2));
        out.push(base(rat_i(-2), -1, 1));
        out.push(base(rat_i(1), -1, 0));
    }
    Ok(merge_gauss_2d(out))
}

fn merge_gauss_2d(terms: Vec<GaussTerm2D>) -> Vec<GaussTerm2D> {
    let mut map: std::collections::BTreeMap<(i64, i64, i64, u8), Rat> =
        std::collections::BTreeMap::new();
    for t in terms {
        *map.entry((t.p, t.m, t.n, t.fderiv)).or_insert_with(Rat::zero) += t.coeff;
    }
    map.into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|((p, m, n, fderiv), coeff)| GaussTerm2D { coeff, p, m, n, fderiv })
        .collect()
}

/// Radial monomial q alpha^(ha/2) pi^(hp/2) r^p e^(-g alpha r^2) erf(sqrt(alpha) r)^e.
#[derive(Clone, Debug)]
struct GMono {
    q: Rat,
    half_alpha: i64,
    half_pi: i64,
    p: i64,
    gauss_units: i64,
    erf: u8,
}

/// T_mn(r) = int int r1^m r2^n e^(-2 alpha (r1^2 + r2^2)) dr2 dr1 over the
/// triangle domain at fixed r, as radial monomials with t = alpha r^2.
fn t_mn(m: u32, n: u32) -> Vec<GMono> {
    let mut out = Vec::new();
    for l in 0..=m as u64 {
        for k in 0..=n as u64 {
            let kk = (k + l) as u32;
            let ll = m + n - kk;
            let mut big = binom(m as u64, l) * binom(n as u64, k);
            if (n as u64 - k) % 2 == 1 {
                big = -big;
            }
            // prefactor (r^2/2)(r/2)^(m+n)
            let pre = Rat::from_integer(big) * pow_i(&rat(1, 2), m as i64 + n as i64 + 1).unwrap();
            for ga_m in ga(kk) {
                for gb_m in gb(ll) {
                    let prod = tmul(&ga_m, &gb_m);
                    out.push(GMono {
                        q: &pre * &prod.q,
                        half_alpha: prod.half_t,
                        half_pi: prod.half_pi,
                        p: m as i64 + n as i64 + 2 + prod.half_t,
                        gauss_units: prod.expt,
                        erf: prod.erf,
                    });
                }
            }
        }
    }
    out
}

/// Fold even powers of alpha into the rational coefficient and merge
/// monomials sharing every remaining attribute.
fn merge_gmono(terms: Vec<GMono>, alpha: &Rat) -> Vec<GMono> {
    let mut map: std::collections::BTreeMap<(i64, i64, i64, i64, u8), Rat> =
        std::collections::BTreeMap::new();
    for t in terms {
        let rem = t.half_alpha.rem_euclid(2);
        let fold = (t.half_alpha - rem) / 2;
        let q = t.q * pow_i(alpha, fold).unwrap();
        *map.entry((t.p, rem, t.half_pi, t.gauss_units, t.erf))
            .or_insert_with(Rat::zero) += q;
    }
    map.into_iter()
        .filter(|(_, q)| !q.is_zero())
        .map(|((p, half_alpha, half_pi, gauss_units, erf), q)| GMono {
            q,
            half_alpha,
            half_pi,
            p,
            gauss_units,
            erf,
        })
        .collect()
}

/// Normalization factor relating a normalized radial kernel to the raw
/// integrated one: raw = scale * sqrt(sqrt_alpha)^sqrt_alpha_pow
/// * pi^(sqrt_pi_pow/2) * r^rpow * e^(-rate r) * e^(-gauss r^2) * normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct NormFactor {
    pub scale: Rat,
    pub sqrt_alpha: Rat,
    pub sqrt_alpha_pow: i64,
    pub sqrt_pi_pow: i64,
    pub rpow: i64,
    pub rate: Rat,
    pub gauss: Rat,
}

impl NormFactor {
    pub fn identity() -> Self {
        NormFactor {
            scale: rat_i(1),
            sqrt_alpha: rat_i(1),
            sqrt_alpha_pow: 0,
            sqrt_pi_pow: 0,
            rpow: 0,
            rate: Rat::zero(),
            gauss: Rat::zero(),
        }
    }

    /// Pure exponential-scale normalization (Slater models).
    pub fn slater(scale: Rat, rate: Rat) -> Self {
        NormFactor { scale, rate, ..NormFactor::identity() }
    }

    pub fn eval_f64(&self, r: f64) -> f64 {
        use crate::rational::rat_to_f64;
        let mut v = rat_to_f64(&self.scale);
        if self.sqrt_alpha_pow != 0 {
            v *= rat_to_f64(&self.sqrt_alpha).sqrt().powi(self.sqrt_alpha_pow as i32);
        }
        if self.sqrt_pi_pow != 0 {
            v *= std::f64::consts::PI.sqrt().powi(self.sqrt_pi_pow as i32);
        }
        v * r.powi(self.rpow as i32)
            * (-rat_to_f64(&self.rate) * r - rat_to_f64(&self.gauss) * r * r).exp()
    }
}

/// Raw reduced kernel: h[d] multiplies f^(d) in <ref | H | ref f>, w is the
/// overlap kernel <ref | ref f> coefficient of f. Lists are normalized; the
/// raw kernels are norm * (the lists).
#[derive(Clone, Debug)]
pub struct RawKernel {
    pub h: [Vec<OdeTerm>; 3],
    pub w: Vec<OdeTerm>,
    pub norm: NormFactor,
}

/// Reduce the Gaussian-model kernel exactly. Returns the normalized kernel
/// (rational coefficients plus erf terms) and the normalization factor
/// N(r) = -(sqrt(pi)/32) alpha^(-3/2) e^(-alpha r^2).
pub fn gaussian_kernel(alpha: &Rat, z: &Rat) -> Result<RawKernel> {
    if *alpha <= Rat::zero() {
        return Err(Error::Domain("gaussian_kernel requires alpha > 0".into()));
    }
    let psi = vec![GaussTerm2D { coeff: rat_i(1), p: 0, m: 0, n: 0, fderiv: 0 }];
    let h2d = apply_hamiltonian_gauss(&psi, alpha, z)?;
    // Buckets 0..2 hold the Hamiltonian kernel by f-derivative order;
    // bucket 3 holds the overlap kernel.
    let mut buckets: [Vec<GMono>; 4] = Default::default();
    let add = |bucket: usize, t: &GaussTerm2D, buckets: &mut [Vec<GMono>; 4]| -> Result<()> {
        let m_tot = t.m + 1;
        let n_tot = t.n + 1;
        if m_tot < 0 || n_tot < 0 {
            return Err(Error::Internal("negative total power in gaussian kernel".into()));
        }
        for mono in t_mn(m_tot as u32, n_tot as u32) {
            buckets[bucket].push(GMono {
                q: &mono.q * &t.coeff,
                p: mono.p + t.p,
                ..mono
            });
        }
        Ok(())
    };
    for t in &h2d {
        add(t.fderiv as usize, t, &mut buckets)?;
    }
    for t in &psi {
        add(3, t, &mut buckets)?;
    }
    // Normalize by N(r) = -(sqrt(pi)/32) alpha^(-3/2) e^(-t): multiply by
    // -32 alpha^(3/2) pi^(-1/2) e^(+t).
    let mut out_h: [Vec<OdeTerm>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut out_w: Vec<OdeTerm> = Vec::new();
    for (bi, bucket) in buckets.into_iter().enumerate() {
        let normalized: Vec<GMono> = bucket
            .into_iter()
            .map(|m| GMono {
                q: m.q * rat_i(-32),
                half_alpha: m.half_alpha + 3,
                half_pi: m.half_pi - 1,
                gauss_units: m.gauss_units - 1,
                ..m
            })
            .collect();
        let merged = merge_gmono(normalized, alpha);
        let mut terms = Vec::new();
        for m in merged {
            if m.half_alpha != 0 || m.half_pi != 0 || m.gauss_units != 0 || m.erf > 1 {
                return Err(Error::Internal(format!(
                    "gaussian kernel failed to normalize: {m:?}"
                )));
            }
            if m.p < 0 {
                return Err(Error::Internal(format!(
                    "gaussian kernel has negative power r^{}",
                    m.p
                )));
            }
            terms.push(OdeTerm {
                coeff: m.q,
                p: m.p,
                rate: Rat::zero(),
                gauss: Rat::zero(),
                erf_scale: if m.erf == 1 { Some(alpha.clone()) } else { None },
            });
        }
        let terms = merge_ode(terms);
        if bi == 3 {
            out_w = terms;
        } else {
            out_h[bi] = terms;
        }
    }
    Ok(RawKernel {
        h: out_h,
        w: out_w,
        norm: NormFactor {
            scale: rat(-1, 32),
            sqrt_alpha: alpha.clone(),
            sqrt_alpha_pow: -3,
            sqrt_pi_pow: 1,
            rpow: 0,
            rate: Rat::zero(),
            gauss: alpha.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyexp::eval_ode_terms;
    use crate::quadrature::{adaptive, adaptive_semi_inf};
    use crate::rational::rat_to_f64;

    #[test]
    fn gaussian_moment_primitives_match_quadrature() {
        for (k, t) in [(0u32, 0.7f64), (1, 0.7), (2, 1.3), (4, 0.25)] {
            let want = {
                let f = move |xi: f64| (1.0 + xi).powi(k as i32) * (-t * (1.0 + xi).powi(2)).exp();
                adaptive_semi_inf(&f, 2.0 * t, 1e-13, 1e-18).unwrap().0
            };
            let got: f64 = ga(k)
                .iter()
                .map(|m| {
                    rat_to_f64(&m.q)
                        * t.powf(m.half_t as f64 / 2.0)
                        * std::f64::consts::PI.powf(m.half_pi as f64 / 2.0)
                        * (-(m.expt as f64) * t).exp()
                        * crate::precision::erf_f64(t.sqrt()).powi(m.erf as i32)
                })
                .sum();
            assert!((got - want).abs() < 1e-12 * want.abs(), "Ga k={k} t={t}: {got} vs {want}");
        }
        for (l, t) in [(0u32, 0.9f64), (2, 0.9), (4, 2.0)] {
            let want = {
                let f = move |eta: f64| eta.powi(l as i32) * (-t * eta * eta).exp();
                adaptive(&f, -1.0, 1.0, 1e-13, 1e-18, 2000).unwrap().0
            };
            let got: f64 = gb(l)
                .iter()
                .map(|m| {
                    rat_to_f64(&m.q)
                        * t.powf(m.half_t as f64 / 2.0)
                        * std::f64::consts::PI.powf(m.half_pi as f64 / 2.0)
                        * (-(m.expt as f64) * t).exp()
                        * crate::precision::erf_f64(t.sqrt()).powi(m.erf as i32)
                })
                .sum();
            assert!((got - want).abs() < 1e-12 * want.abs(), "Gb l={l} t={t}: {got} vs {want}");
        }
        assert!(gb(3).is_empty());
    }

    #[test]
    fn normalized_kernel_has_expected_closed_form() {
        // With Z general and t = alpha r^2 the normalized operator reads
        //   p2 = 2r, p1 = 4 - 4 alpha r^2,
        //   p0 = 8Z erf(sqrt(alpha) r) - 2 - 9 alpha r + 2 alpha^2 r^3,
        //   w  = -2r,
        // the energy entering separately as -E w = +2E r.
        let alpha = rat(3, 4);
        let z = rat_i(2);
        let kern = gaussian_kernel(&alpha, &z).unwrap();
        let mk = |coeff: Rat, p: i64| OdeTerm {
            coeff,
            p,
            rate: Rat::zero(),
            gauss: Rat::zero(),
            erf_scale: None,
        };
        assert_eq!(kern.h[2], vec![mk(rat_i(2), 1)]);
        assert_eq!(kern.w, vec![mk(rat_i(-2), 1)]);
        assert_eq!(
            kern.h[1],
            merge_ode(vec![mk(rat_i(4), 0), mk(rat_i(-4) * &alpha, 2)])
        );
        let erf_term = OdeTerm {
            coeff: rat_i(8) * &z,
            p: 0,
            rate: Rat::zero(),
            gauss: Rat::zero(),
            erf_scale: Some(alpha.clone()),
        };
        assert_eq!(
            kern.h[0],
            merge_ode(vec![
                mk(rat_i(-2), 0),
                mk(rat_i(-9) * &alpha, 1),
                mk(rat_i(2) * &alpha * &alpha, 3),
                erf_term,
            ])
        );
        assert_eq!(kern.norm.scale, rat(-1, 32));
        assert_eq!(kern.norm.sqrt_alpha_pow, -3);
    }

    #[test]
    fn raw_kernel_matches_quadrature_oracle() {
        let alpha = rat(4, 5);
        let z = rat_i(2);
        let kern = gaussian_kernel(&alpha, &z).unwrap();
        let af = rat_to_f64(&alpha);
        let psi = vec![GaussTerm2D { coeff: rat_i(1), p: 0, m: 0, n: 0, fderiv: 0 }];
        let h2d = apply_hamiltonian_gauss(&psi, &alpha, &z).unwrap();
        let r = 0.8f64;
        for d in 0..3u8 {
            let terms: Vec<(f64, i64, i64, i64)> = h2d
                .iter()
                .filter(|t| t.fderiv == d)
                .map(|t| (rat_to_f64(&t.coeff), t.p, t.m + 1, t.n + 1))
                .collect();
            let outer = |r1: f64| {
                let inner = |r2: f64| {
                    terms
                        .iter()
                        .map(|&(c, p, m, n)| {
                            c * r.powi(p as i32)
                                * r1.powi(m as i32)
                                * r2.powi(n as i32)
                                * (-2.0 * af * (r1 * r1 + r2 * r2)).exp()
                        })
                        .sum::<f64>()
                };
                adaptive(&inner, (r1 - r).abs(), r1 + r, 1e-12, 1e-18, 2000).unwrap().0
            };
            // The Gaussian outer integrand decays faster than exp(-r1) within
            // the region that matters.
            let (oracle, _) = adaptive(&outer, 0.0, 12.0, 1e-11, 1e-18, 4000).unwrap();
            let got = kern.norm.eval_f64(r) * eval_ode_terms(&kern.h[d as usize], r);
            assert!(
                (got - oracle).abs() < 1e-9 * oracle.abs().max(1e-12),
                "fderiv={d}: reduced {got}, oracle {oracle}"
            );
        }
        // Overlap kernel against quadrature as well.
        let outer_w = |r1: f64| {
            let inner = |r2: f64| r1 * r2 * (-2.0 * af * (r1 * r1 + r2 * r2)).exp();
            adaptive(&inner, (r1 - r).abs(), r1 + r, 1e-12, 1e-18, 2000).unwrap().0
        };
        let (oracle_w, _) = adaptive(&outer_w, 0.0, 12.0, 1e-11, 1e-18, 4000).unwrap();
        let got_w = kern.norm.eval_f64(r) * eval_ode_terms(&kern.w, r);
        assert!((got_w - oracle_w).abs() < 1e-9 * oracle_w.abs());
        assert!(got_w > 0.0, "overlap kernel must be positive");
    }
}
