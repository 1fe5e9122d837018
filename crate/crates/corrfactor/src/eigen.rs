//! Extended-precision symmetric eigensolver and the generalized eigenvalue
//! problem H c = E S c via symmetric orthogonalization of the overlap.
//!
//! Power bases make the overlap matrix notoriously ill conditioned, so the
//! whole solve runs in `rug::Float` at a caller-chosen precision, and overlap
//! directions below a relative threshold are discarded and counted.

use rug::ops::Pow;
use rug::Float;

use crate::error::{Error, Result};

/// Dense symmetric matrix as rows of `rug::Float`.
pub type FMat = Vec<Vec<Float>>;

/// Result of a generalized eigensolve.
#[derive(Clone, Debug)]
pub struct EigenSolution {
    /// Lowest eigenvalue (hartree for Hamiltonian problems).
    pub energy: f64,
    /// Eigenvector in the original basis, normalized to unit length in the
    /// orthogonalized frame, first significant component made positive.
    pub coefficients: Vec<f64>,
    /// (smallest retained overlap eigenvalue relative to the largest,
    /// number of discarded directions).
    pub condition_report: (f64, usize),
}

fn dims(m: &FMat) -> Result<usize> {
    let n = m.len();
    if n == 0 || m.iter().any(|row| row.len() != n) {
        return Err(Error::Domain("matrix must be square and non-empty".into()));
    }
    Ok(n)
}

fn working_prec(m: &FMat) -> u32 {
    m.iter()
        .flat_map(|row| row.iter().map(|v| v.prec()))
        .max()
        .unwrap_or(64)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues (diagonal after convergence) and the orthogonal matrix of
/// eigenvectors stored as columns.
fn jacobi(a: &mut FMat, prec: u32) -> Result<(Vec<Float>, FMat)> {
    let n = a.len();
    let mut v: FMat = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Float::with_val(prec, if i == j { 1 } else { 0 }))
                .collect()
        })
        .collect();
    if n == 1 {
        return Ok((vec![a[0][0].clone()], v));
    }
    let mut norm = Float::with_val(prec, 0);
    for row in a.iter() {
        for x in row {
            norm += x.clone().square();
        }
    }
    let norm = norm.sqrt();
    // Stop once every off-diagonal entry is negligible at working precision.
    let tol = norm * Float::with_val(prec, 2f64).pow(-(prec as i32) + 6);
    for _sweep in 0..60 {
        let mut off = Float::with_val(prec, 0);
        for p in 0..n {
            for q in p + 1..n {
                off += a[p][q].clone().square();
            }
        }
        if off.sqrt() <= tol {
            let vals = (0..n).map(|i| a[i][i].clone()).collect();
            return Ok((vals, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].is_zero() {
                    continue;
                }
                let theta: Float =
                    (a[q][q].clone() - &a[p][p]) / (Float::with_val(prec, 2) * &a[p][q]);
                let t = {
                    let denom: Float =
                        theta.clone().abs() + (theta.clone().square() + 1u32).sqrt();
                    let mag: Float = Float::with_val(prec, 1) / denom;
                    if theta < 0 {
                        -mag
                    } else {
                        mag
                    }
                };
                let c: Float = (t.clone().square() + 1u32).sqrt().recip();
                let s: Float = t.clone() * &c;
                let tau: Float = s.clone() / (Float::with_val(prec, 1) + &c);
                let apq = a[p][q].clone();
                let tapq: Float = t.clone() * &apq;
                a[p][p] -= &tapq;
                a[q][q] += &tapq;
                a[p][q] = Float::with_val(prec, 0);
                a[q][p] = Float::with_val(prec, 0);
                for i in 0..n {
                    if i != p && i != q {
                        let aip = a[i][p].clone();
                        let aiq = a[i][q].clone();
                        let dp: Float = s.clone() * (aiq.clone() + tau.clone() * &aip);
                        let dq: Float = s.clone() * (aip.clone() - tau.clone() * &aiq);
                        a[i][p] = aip - &dp;
                        a[p][i] = a[i][p].clone();
                        a[i][q] = aiq + &dq;
                        a[q][i] = a[i][q].clone();
                    }
                }
                for row in v.iter_mut() {
                    let vip = row[p].clone();
                    let viq = row[q].clone();
                    row[p] = vip.clone() - s.clone() * (viq.clone() + tau.clone() * &vip);
                    row[q] = viq.clone() + s.clone() * (vip - tau.clone() * &viq);
                }
            }
        }
    }
    Err(Error::Convergence(
        "Jacobi eigensolver did not converge in 60 sweeps".into(),
    ))
}

/// Lowest eigenpair of H c = E S c.
///
/// The overlap is first scaled to unit diagonal (a pure conditioning
/// transformation), then diagonalized; eigendirections with eigenvalue below
/// `discard_threshold` times the largest are dropped and counted. The
/// Hamiltonian is projected onto the surviving orthonormalized directions and
/// diagonalized there.
pub fn solve_gevp(h: &FMat, s: &FMat, discard_threshold: f64) -> Result<EigenSolution> {
    let n = dims(h)?;
    if dims(s)? != n {
        return Err(Error::Domain("H and S dimensions differ".into()));
    }
    if !(discard_threshold >= 0.0) || discard_threshold >= 1.0 {
        return Err(Error::Domain(format!(
            "discard threshold must lie in [0, 1), got {discard_threshold}"
        )));
    }
    let prec = working_prec(h).max(working_prec(s));
    // Unit-diagonal scaling d_i = 1/sqrt(s_ii).
    let mut d = Vec::with_capacity(n);
    for (i, row) in s.iter().enumerate() {
        if !(row[i].clone().to_f64() > 0.0) {
            return Err(Error::Conditioning(format!(
                "overlap diagonal entry {i} is not positive"
            )));
        }
        d.push(row[i].clone().sqrt().recip());
    }
    let scaled = |m: &FMat| -> FMat {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| Float::with_val(prec, &m[i][j]) * &d[i] * &d[j])
                    .collect()
            })
            .collect()
    };
    let mut s_sc = scaled(s);
    // Symmetrize against last-ulp asymmetry from independent entry assembly.
    for i in 0..n {
        for j in i + 1..n {
            let avg: Float = (s_sc[i][j].clone() + &s_sc[j][i]) / 2u32;
            s_sc[i][j] = avg.clone();
            s_sc[j][i] = avg;
        }
    }
    let (svals, svecs) = jacobi(&mut s_sc, prec)?;
    let mut lam_max = Float::with_val(prec, 0);
    for l in &svals {
        if *l > lam_max {
            lam_max = l.clone();
        }
    }
    if !(lam_max.clone().to_f64() > 0.0) {
        return Err(Error::Conditioning("overlap matrix is not positive".into()));
    }
    let cut: Float = lam_max.clone() * Float::with_val(prec, discard_threshold);
    let retained: Vec<usize> = (0..n).filter(|&i| svals[i] > cut && svals[i] > 0).collect();
    let discarded = n - retained.len();
    if retained.is_empty() {
        return Err(Error::Conditioning(
            "all overlap directions fall below the discard threshold".into(),
        ));
    }
    let mut lam_min_rel = f64::INFINITY;
    for &i in &retained {
        let rel = (svals[i].clone() / &lam_max).to_f64();
        lam_min_rel = lam_min_rel.min(rel);
    }
    // X = D U Lambda^(-1/2) maps the orthonormal frame to the original basis.
    let m = retained.len();
    let x: FMat = (0..n)
        .map(|i| {
            retained
                .iter()
                .map(|&k| {
                    Float::with_val(prec, &svecs[i][k]) * svals[k].clone().sqrt().recip()
                })
                .collect()
        })
        .collect();
    let h_sc = scaled(h);
    // Project: Ht = X^T Hsc X.
    let mut hx: FMat = vec![vec![Float::with_val(prec, 0); m]; n];
    for i in 0..n {
        for k in 0..m {
            let mut acc = Float::with_val(prec, 0);
            for j in 0..n {
                acc += h_sc[i][j].clone() * &x[j][k];
            }
            hx[i][k] = acc;
        }
    }
    let mut ht: FMat = vec![vec![Float::with_val(prec, 0); m]; m];
    for a in 0..m {
        for b in a..m {
            let mut acc = Float::with_val(prec, 0);
            for i in 0..n {
                acc += x[i][a].clone() * &hx[i][b];
            }
            ht[a][b] = acc.clone();
            ht[b][a] = acc;
        }
    }
    let (evals, evecs) = jacobi(&mut ht, prec)?;
    let mut best = 0;
    for k in 1..m {
        if evals[k] < evals[best] {
            best = k;
        }
    }
    // Map back to the original basis: c = D X y.
    let mut coeff = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = Float::with_val(prec, 0);
        for k in 0..m {
            acc += x[i][k].clone() * &evecs[k][best];
        }
        acc *= &d[i];
        coeff.push(acc.to_f64());
    }
    let lead = coeff
        .iter()
        .find(|v| v.abs() > 1e-14 * coeff.iter().fold(0.0f64, |a, b| a.max(b.abs())));
    if let Some(&l) = lead {
        if l < 0.0 {
            for v in &mut coeff {
                *v = -*v;
            }
        }
    }
    Ok(EigenSolution {
        energy: evals[best].clone().to_f64(),
        coefficients: coeff,
        condition_report: (lam_min_rel, discarded),
    })
}

/// Convert an f64 matrix to the working type at the given precision.
pub fn to_fmat(rows: &[Vec<f64>], prec: u32) -> FMat {
    rows.iter()
        .map(|row| row.iter().map(|&v| Float::with_val(prec, v)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(rows: &[&[f64]], prec: u32) -> FMat {
        rows.iter()
            .map(|row| row.iter().map(|&v| Float::with_val(prec, v)).collect())
            .collect()
    }

    #[test]
    fn one_by_one_is_the_ratio() {
        let h = fm(&[&[-3.5]], 128);
        let s = fm(&[&[0.5]], 128);
        let sol = solve_gevp(&h, &s, 0.0).unwrap();
        assert!((sol.energy + 7.0).abs() < 1e-25);
        assert_eq!(sol.condition_report.1, 0);
    }

    #[test]
    fn known_two_by_two_problem() {
        // H = [[2, 1], [1, 3]], S = I: eigenvalues (5 +- sqrt(5))/2.
        let h = fm(&[&[2.0, 1.0], &[1.0, 3.0]], 160);
        let s = fm(&[&[1.0, 0.0], &[0.0, 1.0]], 160);
        let sol = solve_gevp(&h, &s, 0.0).unwrap();
        let exact = (5.0 - 5.0f64.sqrt()) / 2.0;
        assert!((sol.energy - exact).abs() < 1e-15);
        // Eigenvector direction: (2 - lambda) x + y = 0.
        let ratio = sol.coefficients[1] / sol.coefficients[0];
        assert!((ratio - (exact - 2.0)).abs() < 1e-12, "ratio {ratio}");
    }

    #[test]
    fn generalized_problem_with_nontrivial_overlap() {
        // Exact pencil: H = [[1, 0], [0, 2]], S = [[2, 1], [1, 2]].
        // det(H - E S) = 0 -> 3 E^2 - 6 E + 2 = 0.
        let h = fm(&[&[1.0, 0.0], &[0.0, 2.0]], 192);
        let s = fm(&[&[2.0, 1.0], &[1.0, 2.0]], 192);
        let sol = solve_gevp(&h, &s, 1e-30).unwrap();
        let exact = (6.0 - 12.0f64.sqrt()) / 6.0;
        assert!((sol.energy - exact).abs() < 1e-16, "E = {}", sol.energy);
    }

    #[test]
    fn rescaling_the_basis_leaves_the_energy_unchanged() {
        // Same pencil expressed in a rescaled basis x_i -> t_i x_i.
        let h0 = [[1.0, 0.4, 0.1], [0.4, 2.0, -0.3], [0.1, -0.3, 2.5]];
        let s0 = [[1.0, 0.5, 0.2], [0.5, 1.0, 0.4], [0.2, 0.4, 1.0]];
        let t = [1.0, 1e3, 1e-4];
        let mut h1 = vec![vec![0.0; 3]; 3];
        let mut s1 = vec![vec![0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                h1[i][j] = h0[i][j] * t[i] * t[j];
                s1[i][j] = s0[i][j] * t[i] * t[j];
            }
        }
        let e0 = solve_gevp(&to_fmat(&h0.map(|r| r.to_vec()), 192), &to_fmat(&s0.map(|r| r.to_vec()), 192), 1e-30)
            .unwrap()
            .energy;
        let e1 = solve_gevp(&to_fmat(&h1, 192), &to_fmat(&s1, 192), 1e-30).unwrap().energy;
        assert!((e0 - e1).abs() < 1e-12, "{e0} vs {e1}");
    }

    #[test]
    fn near_dependent_directions_are_discarded() {
        // Second basis vector nearly equals the first.
        let eps = 1e-9;
        let h = fm(&[&[1.0, 1.0], &[1.0, 1.0 + 4.0 * eps]], 128);
        let s = fm(&[&[1.0, 1.0 - eps], &[1.0 - eps, 1.0]], 128);
        let sol = solve_gevp(&h, &s, 1e-6).unwrap();
        assert_eq!(sol.condition_report.1, 1);
        assert!(sol.condition_report.0 <= 1.0);
        // A non-positive overlap cannot be orthogonalized at all.
        let s_deg = fm(&[&[0.0, 0.0], &[0.0, 0.0]], 128);
        assert!(matches!(
            solve_gevp(&h, &s_deg, 1e-6),
            Err(Error::Conditioning(_))
        ));
    }

    #[test]
    fn rejects_malformed_input() {
        let h = fm(&[&[1.0, 0.0]], 64);
        let s = fm(&[&[1.0]], 64);
        assert!(solve_gevp(&h, &s, 0.0).is_err());
        let h = fm(&[&[1.0]], 64);
        assert!(solve_gevp(&h, &s, 1.5).is_err());
        let s_bad = fm(&[&[-1.0]], 64);
        assert!(solve_gevp(&h, &s_bad, 0.0).is_err());
    }
}
