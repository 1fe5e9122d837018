//! Symbolic application of the S-state two-electron Hamiltonian to products
//! of a reference wave function with a correlation factor f(r), and exact
//! reduction of the resulting matrix-element kernels to one-dimensional
//! radial form.
//!
//! In the (r1, r2, r) coordinates with volume measure 8 pi^2 r1 r2 r, the
//! Hamiltonian acting on Phi(r1, r2) f(r) is
//!
//!   H = -(1/2) sum_{i=1,2} [ d^2/dri^2 + (2/ri) d/dri
//!         + ((r^2 + ri^2 - rj^2)/(r ri)) d^2/(dri dr) + 2Z/ri ]
//!       - d^2/dr^2 - (2/r) d/dr + 1/r .

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::radial::i_mn_components;
use crate::rational::{rat_i, rat_to_f64, Rat};

/// One monomial term c r^p r1^m r2^n e^(-a r1 - b r2) multiplying the
/// fderiv-th derivative of the correlation factor f(r).
#[derive(Clone, Debug, PartialEq)]
pub struct PolyExpTerm2D {
    pub coeff: Rat,
    pub p: i64,
    pub m: i64,
    pub n: i64,
    pub a: Rat,
    pub b: Rat,
    pub fderiv: u8,
}

/// One term of a reduced radial kernel:
/// coeff r^p e^(-rate r) e^(-gauss r^2) [erf(sqrt(erf_scale) r)].
#[derive(Clone, Debug, PartialEq)]
pub struct OdeTerm {
    pub coeff: Rat,
    pub p: i64,
    pub rate: Rat,
    pub gauss: Rat,
    pub erf_scale: Option<Rat>,
}

impl OdeTerm {
    /// Purely polynomial-times-exponential term (the Slater-model case).
    pub fn slater(coeff: Rat, p: i64, rate: Rat) -> Self {
        OdeTerm { coeff, p, rate, gauss: Rat::zero(), erf_scale: None }
    }

    /// Numerical value at r > 0.
    pub fn eval(&self, r: f64) -> f64 {
        let mut v = rat_to_f64(&self.coeff) * r.powi(self.p as i32);
        let rate = rat_to_f64(&self.rate);
        let gauss = rat_to_f64(&self.gauss);
        if rate != 0.0 || gauss != 0.0 {
            v *= (-rate * r - gauss * r * r).exp();
        }
        if let Some(s) = &self.erf_scale {
            v *= crate::precision::erf_f64(rat_to_f64(s).sqrt() * r);
        }
        v
    }
}

/// Sum of kernel terms at r.
pub fn eval_ode_terms(terms: &[OdeTerm], r: f64) -> f64 {
    let mut acc = crate::radial::Kahan::default();
    for t in terms {
        acc.add(t.eval(r));
    }
    acc.value()
}

/// Merge terms sharing (p, rate, gauss, erf_scale); drop exact zeros.
pub fn merge_ode(terms: Vec<OdeTerm>) -> Vec<OdeTerm> {
    let mut map: BTreeMap<(i64, Rat, Rat, Option<Rat>), Rat> = BTreeMap::new();
    for t in terms {
        *map.entry((t.p, t.rate, t.gauss, t.erf_scale))
            .or_insert_with(Rat::zero) += t.coeff;
    }
    map.into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|((p, rate, gauss, erf_scale), coeff)| OdeTerm { coeff, p, rate, gauss, erf_scale })
        .collect()
}

/// Merge 2-D terms sharing (p, m, n, a, b, fderiv); drop exact zeros.
pub fn merge_2d(terms: Vec<PolyExpTerm2D>) -> Vec<PolyExpTerm2D> {
    let mut map: BTreeMap<(i64, i64, i64, Rat, Rat, u8), Rat> = BTreeMap::new();
    for t in terms {
        *map.entry((t.p, t.m, t.n, t.a, t.b, t.fderiv))
            .or_insert_with(Rat::zero) += t.coeff;
    }
    map.into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|((p, m, n, a, b, fderiv), coeff)| PolyExpTerm2D { coeff, p, m, n, a, b, fderiv })
        .collect()
}

/// Apply the S-state Hamiltonian to (sum of psi terms) * f(r).
///
/// Inputs must be bare reference-function monomials: fderiv = 0, p = 0,
/// m, n >= 0, and positive exponential decay in both electron coordinates.
/// The output multiplies f, f', f'' as indicated by `fderiv`; the energy
/// term -E is not included here.
pub fn apply_hamiltonian(psi: &[PolyExpTerm2D], z: &Rat) -> Result<Vec<PolyExpTerm2D>> {
    let mut out = Vec::new();
    let half = crate::rational::rat(1, 2);
    for t in psi {
        if t.fderiv != 0 || t.p != 0 || t.m < 0 || t.n < 0 {
            return Err(Error::Domain(format!(
                "apply_hamiltonian expects bare reference terms, got {t:?}"
            )));
        }
        if t.a <= Rat::zero() || t.b <= Rat::zero() {
            return Err(Error::Domain(
                "apply_hamiltonian requires positive exponential decay".into(),
            ));
        }
        // Electron sectors: (coordinate power, its exponent, other power).
        // swap = false acts on r1, swap = true on r2.
        for swap in [false, true] {
            let (m, a) = if swap { (t.n, &t.b) } else { (t.m, &t.a) };
            let mq = rat_i(m);
            let mut push = |coeff: Rat, dp: i64, dm: i64, dn_other: i64, fderiv: u8| {
                if coeff.is_zero() {
                    return;
                }
                let (dm1, dn1) = if swap { (dn_other, dm) } else { (dm, dn_other) };
                out.push(PolyExpTerm2D {
                    coeff: t.coeff.clone() * coeff,
                    p: t.p + dp,
                    m: t.m + dm1,
                    n: t.n + dn1,
                    a: t.a.clone(),
                    b: t.b.clone(),
                    fderiv,
                });
            };
            // -(1/2) d^2/dri^2 : m(m-1) r^(m-2) - 2am r^(m-1) + a^2 r^m
            push(-&half * &mq * rat_i(m - 1), 0, -2, 0, 0);
            push(&half * rat_i(2) * a * &mq, 0, -1, 0, 0);
            push(-&half * a * a, 0, 0, 0, 0);
            // -(1/2)(2/ri) d/dri : 2m r^(m-2) - 2a r^(m-1)
            push(-&mq, 0, -2, 0, 0);
            push(a.clone(), 0, -1, 0, 0);
            // -(1/2) ((r^2 + ri^2 - rj^2)/(r ri)) (d/dri) acting on f':
            // (d/dri) gives (m r^(m-1) - a r^m); the prefactor expands to
            // r/ri + ri/r - rj^2/(r ri).
            for (dcoeff, ddm) in [(mq.clone(), -1i64), (-a.clone(), 0)] {
                let c = -&half * &dcoeff;
                push(c.clone(), 1, ddm - 1, 0, 1);
                push(c.clone(), -1, ddm + 1, 0, 1);
                push(-c, -1, ddm - 1, 2, 1);
            }
            // -(1/2) 2Z/ri
            push(-z.clone(), 0, -1, 0, 0);
        }
        // Interelectronic sector: -f'' - (2/r) f' + (1/r) f.
        let base = |coeff: Rat, dp: i64, fderiv: u8| PolyExpTerm2D {
            coeff: t.coeff.clone() * coeff,
            p: t.p + dp,
            m: t.m,
            n: t.n,
            a: t.a.clone(),
            b: t.b.clone(),
            fderiv,
        };
        out.push(base(rat_i(-1), 0, 2));
        out.push(base(rat_i(-2), -1, 1));
        out.push(base(rat_i(1), -1, 0));
    }
    Ok(merge_2d(out))
}

/// Radial kernels K_d(r) (d = 0, 1, 2 indexing f, f', f'') obtained by
/// integrating r1 r2 * (left) * (right) over the two electron coordinates at
/// fixed r:
///
///   K_d(r) = int_0^inf dr1 int_{|r1-r|}^{r1+r} dr2 r1 r2
///            (sum of left terms) (sum of right terms with fderiv = d).
///
/// The r1 r2 volume factor is supplied here; `left` must be a bare reference
/// function (fderiv = 0, p = 0). The result is exact.
pub fn reduce_to_ode(
    left: &[PolyExpTerm2D],
    right: &[PolyExpTerm2D],
) -> Result<[Vec<OdeTerm>; 3]> {
    let mut buckets: [Vec<OdeTerm>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for lt in left {
        if lt.fderiv != 0 || lt.p != 0 {
            return Err(Error::Domain(
                "reduce_to_ode expects a bare reference function on the left".into(),
            ));
        }
        for rt in right {
            if rt.fderiv > 2 {
                return Err(Error::Domain(format!(
                    "unsupported derivative order {}",
                    rt.fderiv
                )));
            }
            let m_tot = lt.m + rt.m + 1;
            let n_tot = lt.n + rt.n + 1;
            if m_tot < 0 || n_tot < 0 {
                return Err(Error::Internal(format!(
                    "negative total electron power (m={m_tot}, n={n_tot})"
                )));
            }
            let a_tot = lt.a.clone() + rt.a.clone();
            let b_tot = lt.b.clone() + rt.b.clone();
            let coeff = lt.coeff.clone() * rt.coeff.clone();
            let p_tot = lt.p + rt.p;
            let comps = i_mn_components(m_tot as u32, n_tot as u32, &a_tot, &b_tot)?;
            for comp in comps {
                for (j, cj) in comp.coeffs.iter().enumerate() {
                    if cj.is_zero() {
                        continue;
                    }
                    buckets[rt.fderiv as usize].push(OdeTerm::slater(
                        coeff.clone() * cj,
                        p_tot + j as i64,
                        comp.rate.clone(),
                    ));
                }
            }
        }
    }
    let [b0, b1, b2] = buckets;
    let out = [merge_ode(b0), merge_ode(b1), merge_ode(b2)];
    for bucket in &out {
        if let Some(t) = bucket.iter().find(|t| t.p < -1) {
            return Err(Error::Internal(format!(
                "reduced kernel has power r^{} below -1",
                t.p
            )));
        }
    }
    Ok(out)
}

/// Overlap kernel W(r): `reduce_to_ode` of left against right with no
/// Hamiltonian applied.
pub fn reduce_overlap(left: &[PolyExpTerm2D], right: &[PolyExpTerm2D]) -> Result<Vec<OdeTerm>> {
    let [w, h1, h2] = reduce_to_ode(left, right)?;
    if !h1.is_empty() || !h2.is_empty() {
        return Err(Error::Domain(
            "overlap reduction requires fderiv = 0 on the right".into(),
        ));
    }
    Ok(w)
}
