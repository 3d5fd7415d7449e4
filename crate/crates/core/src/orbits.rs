//! Periodic orbits located as critical points of the length functional.
//!
//! An orbit with coding (i_0, ..., i_{p-1}) is found by Newton iteration on
//! the gradient of s -> Σ_k |γ_{i_{k+1}}(s_{k+1}) - γ_{i_k}(s_k)|, whose
//! Hessian is cyclic tridiagonal. Double-precision relaxation provides the
//! seed; the high-precision Newton then converges quadratically.

use thiserror::Error;

use crate::billiard::{chord_jet, PhasePoint};
use crate::geometry::Table3;
use crate::numerics::bigfloat::{ctx_digits, BigFloat};
use crate::numerics::linalg::{solve_cyclic_tridiag, solve_dense};

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("coding must have length >= 2 with adjacent symbols distinct")]
    BadCoding,
    #[error("orbit solver did not converge (max residual 1e{0:.0})")]
    NoConvergence(f64),
}

#[derive(Clone, Debug)]
pub struct Orbit {
    pub coding: Vec<usize>,
    pub points: Vec<PhasePoint>,
    pub length: BigFloat,
}

/// Coding of the cyclicity-two orbit x^{m,n}: the word 3 (12)^{m-1} 1 3
/// (12)^{n-1} 1 of period 2m + 2n, with index 0 on scatterer 3.
pub fn cyclicity2_coding(m: usize, n: usize) -> Vec<usize> {
    assert!(m >= 1 && n >= 1);
    let mut seq = Vec::with_capacity(2 * m + 2 * n);
    for half in [m, n] {
        seq.push(3);
        for _ in 0..half - 1 {
            seq.push(1);
            seq.push(2);
        }
        seq.push(1);
    }
    seq
}

fn check_coding(coding: &[usize]) -> Result<(), OrbitError> {
    let p = coding.len();
    if p < 2 {
        return Err(OrbitError::BadCoding);
    }
    for k in 0..p {
        let a = coding[k];
        let b = coding[(k + 1) % p];
        if !(1..=3).contains(&a) || a == b {
            return Err(OrbitError::BadCoding);
        }
    }
    Ok(())
}

/// Double-precision seed: native parameters t_k, relaxed so each point
/// locally minimizes the two adjacent chord lengths.
fn seed_f64(table: &Table3, coding: &[usize]) -> Vec<f64> {
    let p = coding.len();
    let centers: Vec<[f64; 2]> = (1..=3)
        .map(|i| {
            let c = table.scatterer(i).center();
            [c[0].to_f64(), c[1].to_f64()]
        })
        .collect();
    // Start with each point facing the midpoint of its neighbours' centers.
    let mut ts: Vec<f64> = (0..p)
        .map(|k| {
            let prev = centers[coding[(k + p - 1) % p] - 1];
            let next = centers[coding[(k + 1) % p] - 1];
            let own = centers[coding[k] - 1];
            let dx = 0.5 * (prev[0] + next[0]) - own[0];
            let dy = 0.5 * (prev[1] + next[1]) - own[1];
            dy.atan2(dx)
        })
        .collect();
    // The native parameter of a rotated shape is offset by the rotation.
    // Resolve by sampling: snap each t to the boundary point closest to the
    // intended direction.
    for (k, t) in ts.iter_mut().enumerate() {
        let sc = table.scatterer(coding[k]);
        let own = centers[coding[k] - 1];
        let target = [own[0] + t.cos(), own[1] + t.sin()];
        let mut best = (0.0f64, f64::INFINITY);
        for i in 0..256 {
            let tt = 2.0 * std::f64::consts::PI * i as f64 / 256.0;
            let q = sc.point_f64(tt);
            let d = (q[0] - target[0]).powi(2) + (q[1] - target[1]).powi(2);
            if d < best.1 {
                best = (tt, d);
            }
        }
        *t = best.0;
    }
    // Gauss–Seidel sweeps: Newton in each t_k on the reflection condition
    // T(t_k) · (u_prev + u_next) = 0, derivatives by central differences.
    let point = |k: usize, t: f64| table.scatterer(coding[k]).point_f64(t);
    for _ in 0..60 {
        for k in 0..p {
            let a = point((k + p - 1) % p, ts[(k + p - 1) % p]);
            let b = point((k + 1) % p, ts[(k + 1) % p]);
            let f = |t: f64| {
                let q = point(k, t);
                let la = ((q[0] - a[0]).powi(2) + (q[1] - a[1]).powi(2)).sqrt();
                let lb = ((q[0] - b[0]).powi(2) + (q[1] - b[1]).powi(2)).sqrt();
                la + lb
            };
            let h = 1e-5;
            for _ in 0..8 {
                let fp = (f(ts[k] + h) - f(ts[k] - h)) / (2.0 * h);
                let fpp = (f(ts[k] + h) - 2.0 * f(ts[k]) + f(ts[k] - h)) / (h * h);
                if fpp.abs() < 1e-12 {
                    break;
                }
                let step = fp / fpp;
                ts[k] -= step.clamp(-0.3, 0.3);
                if step.abs() < 1e-12 {
                    break;
                }
            }
        }
    }
    ts
}

/// Finds the periodic orbit with the given coding.
pub fn solve_periodic(table: &Table3, coding: &[usize]) -> Result<Orbit, OrbitError> {
    check_coding(coding)?;
    let p = coding.len();
    let ts = seed_f64(table, coding);
    let mut s: Vec<BigFloat> = (0..p)
        .map(|k| {
            let t = BigFloat::from_f64_digits(ts[k], 20).with_precision(ctx_digits());
            table.scatterer(coding[k]).s_of_t(&t)
        })
        .collect();
    let tol = -((ctx_digits() as f64 - 8.0) * 3.32);
    let mut worst = f64::INFINITY;
    for _ in 0..200 {
        // Assemble gradient and cyclic tridiagonal Hessian from the chord
        // jets of each edge.
        let two = BigFloat::from_i64(2);
        let edges: Vec<_> = (0..p)
            .map(|k| {
                let kn = (k + 1) % p;
                chord_jet(
                    table.scatterer(coding[k]),
                    &s[k],
                    table.scatterer(coding[kn]),
                    &s[kn],
                    2,
                )
            })
            .collect();
        let mut grad = Vec::with_capacity(p);
        let mut diag = Vec::with_capacity(p);
        let mut off = Vec::with_capacity(p);
        for k in 0..p {
            let kp = (k + p - 1) % p;
            let g = edges[kp].get(0, 1).clone() + edges[k].get(1, 0).clone();
            let d = edges[kp].get(0, 2).clone() * &two + edges[k].get(2, 0).clone() * &two;
            grad.push(g);
            diag.push(d);
            off.push(edges[k].get(1, 1).clone());
        }
        worst = grad.iter().map(|g| g.mag_log2()).fold(f64::NEG_INFINITY, f64::max);
        if worst < tol {
            // Converged: assemble phase points and the total length.
            let length = edges
                .iter()
                .fold(BigFloat::zero(), |acc, e| acc + e.get(0, 0).clone());
            let points = (0..p)
                .map(|k| {
                    // r_k = -∂L/∂s at the outgoing edge.
                    let r = -edges[k].get(1, 0).clone();
                    PhasePoint::new(coding[k], s[k].clone(), r)
                })
                .collect();
            return Ok(Orbit { coding: coding.to_vec(), points, length });
        }
        let step = if p >= 3 {
            solve_cyclic_tridiag(&diag, &off, &grad)
        } else {
            // Period 2: both off-diagonal couplings act on the same entry.
            let o = off[0].clone() + off[1].clone();
            let mut m = vec![
                vec![diag[0].clone(), o.clone()],
                vec![o, diag[1].clone()],
            ];
            let mut rhs = grad.clone();
            solve_dense(&mut m, &mut rhs)
        }
        .ok_or(OrbitError::NoConvergence(worst))?;
        for k in 0..p {
            s[k] = &s[k] - &step[k];
        }
    }
    Err(OrbitError::NoConvergence(worst))
}

/// The orbit x^{m,n} and its length ℓ_{m,n}.
pub fn orbit_mn(table: &Table3, m: usize, n: usize) -> Result<Orbit, OrbitError> {
    solve_periodic(table, &cyclicity2_coding(m, n))
}

/// ℓ_n = ℓ_{n,n} / 2, the length of the period-(2n) orbit 3 (12)^{n-1} 1.
pub fn ell_n(table: &Table3, n: usize) -> Result<BigFloat, OrbitError> {
    let mut coding = Vec::with_capacity(2 * n);
    coding.push(3);
    for _ in 0..n - 1 {
        coding.push(1);
        coding.push(2);
    }
    coding.push(1);
    Ok(solve_periodic(table, &coding)?.length)
}

/// Points x_k of the homoclinic orbit (21)^∞ 3 (12)^∞ for |k| <= kmax,
/// returned as hom[k + kmax]. Approximated by the periodic orbit x^{m,m}
/// with m large enough that the tail contamination λ^{2m - kmax} is far
/// below the working precision.
pub fn homoclinic(table: &Table3, kmax: usize, m: usize) -> Result<Vec<PhasePoint>, OrbitError> {
    assert!(2 * m > kmax + 4);
    let orbit = orbit_mn(table, m, m)?;
    let p = orbit.points.len();
    let mut out = Vec::with_capacity(2 * kmax + 1);
    for k in -(kmax as i64)..=(kmax as i64) {
        let idx = (k.rem_euclid(p as i64)) as usize;
        out.push(orbit.points[idx].clone());
    }
    Ok(out)
}

/// Picks m so the homoclinic truncation error sits below the target digits,
/// given the expansion rate λ of the two-periodic core.
pub fn homoclinic_m_for(kmax: usize, lambda_log10: f64, digits: u32) -> usize {
    // λ^{2m - kmax} < 10^{-digits - 10}.
    let need = (digits as f64 + 10.0) / (-lambda_log10);
    (((need + kmax as f64) / 2.0).ceil() as usize).max(kmax / 2 + 3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::billiard::collide;
    use crate::geometry::reference_table;
    use crate::numerics::bigfloat::with_digits;

    fn tol(e: &str) -> BigFloat {
        BigFloat::parse_digits(e, 20).unwrap()
    }

    fn table() -> Table3 {
        let mut t = reference_table();
        t.normalize_frame().unwrap();
        t
    }

    #[test]
    fn coding_layout() {
        assert_eq!(cyclicity2_coding(1, 1), vec![3, 1, 3, 1]);
        assert_eq!(cyclicity2_coding(2, 1), vec![3, 1, 2, 1, 3, 1]);
        assert_eq!(cyclicity2_coding(2, 3), vec![3, 1, 2, 1, 3, 1, 2, 1, 2, 1]);
    }

    #[test]
    fn two_periodic_orbit() {
        with_digits(60, || {
            let t = table();
            let o = solve_periodic(&t, &[1, 2]).unwrap();
            assert!((o.length.clone() - BigFloat::from_i64(4)).abs() < tol("1e-50"));
            for p in &o.points {
                assert!(p.s.abs() < tol("1e-50"));
                assert!(p.r.abs() < tol("1e-50"));
            }
        });
    }

    #[test]
    fn orbit_shadowed_by_collision_map() {
        with_digits(60, || {
            let t = table();
            let o = orbit_mn(&t, 2, 3).unwrap();
            let p = o.points.len();
            for k in 0..p {
                let y = collide(&t, &o.points[k]).unwrap();
                let expect = &o.points[(k + 1) % p];
                assert_eq!(y.i, expect.i, "scatterer at step {}", k);
                assert!((y.s.clone() - expect.s.clone()).abs() < tol("1e-45"), "s at {}", k);
                assert!((y.r.clone() - expect.r.clone()).abs() < tol("1e-45"), "r at {}", k);
            }
        });
    }

    #[test]
    fn symmetry_and_perpendicular_bounces() {
        with_digits(60, || {
            let t = table();
            let (m, n) = (3usize, 2usize);
            let a = orbit_mn(&t, m, n).unwrap();
            let b = orbit_mn(&t, n, m).unwrap();
            // ℓ_{m,n} = ℓ_{n,m}.
            assert!((a.length.clone() - b.length.clone()).abs() < tol("1e-50"));
            // Perpendicular bounces at k = m and k = 2m + n.
            assert!(a.points[m].r.abs() < tol("1e-50"));
            assert!(a.points[2 * m + n].r.abs() < tol("1e-50"));
            // Time-reversal symmetry x_k = I₀ x_{2m-k}.
            for k in 0..a.points.len() {
                let kk = (2 * m + a.points.len() - k) % a.points.len();
                let p = &a.points[k];
                let q = &a.points[kk];
                assert_eq!(p.i, q.i);
                assert!((p.s.clone() - q.s.clone()).abs() < tol("1e-45"));
                assert!((p.r.clone() + q.r.clone()).abs() < tol("1e-45"));
            }
        });
    }

    #[test]
    fn half_length_relation() {
        with_digits(60, || {
            let t = table();
            let n = 3;
            let half = ell_n(&t, n).unwrap();
            let full = orbit_mn(&t, n, n).unwrap().length;
            assert!(
                (full - half * BigFloat::from_i64(2)).abs() < tol("1e-50"),
                "ℓ_n should be half of ℓ_(n,n)"
            );
        });
    }

    #[test]
    fn homoclinic_points_stabilize() {
        with_digits(50, || {
            let t = table();
            // x_k for |k| <= 6 from two different shadowing orbits agree far
            // beyond double precision once m is large enough.
            let a = homoclinic(&t, 6, 40).unwrap();
            let b = homoclinic(&t, 6, 48).unwrap();
            for (pa, pb) in a.iter().zip(&b) {
                assert_eq!(pa.i, pb.i);
                assert!((pa.s.clone() - pb.s.clone()).abs() < tol("1e-40"));
                assert!((pa.r.clone() - pb.r.clone()).abs() < tol("1e-40"));
            }
            // Symmetry x_k = I₀ x_{-k}.
            for k in 0..=12 {
                let p = &a[k];
                let q = &a[12 - k];
                assert_eq!(p.i, q.i);
                assert!((p.s.clone() - q.s.clone()).abs() < tol("1e-40"));
                assert!((p.r.clone() + q.r.clone()).abs() < tol("1e-40"));
            }
        });
    }
}
