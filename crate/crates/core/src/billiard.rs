//! The billiard collision map on phase space.
//!
//! Phase points are triples (i, s, r): the scatterer index, the arc-length
//! position of the *outgoing* ray's footpoint, and r = sin φ, the sine of
//! the angle between the outgoing ray and the outward normal, signed by the
//! tangent direction. The collision map follows the ray to the next
//! scatterer and reflects. Chord lengths L(s, s') act as generating
//! functions: r = -∂L/∂s, r' = +∂L/∂s'.

use thiserror::Error;

use crate::geometry::{Scatterer, Table3};
use crate::numerics::bigfloat::{ctx_digits, BigFloat};
use crate::numerics::jet1::Jet1;
use crate::numerics::jet2::{Jet2, Jet2Map};
use crate::numerics::jet3::{solve_implicit, Jet3};

#[derive(Debug, Error)]
pub enum BilliardError {
    #[error("ray from scatterer {0} does not hit another scatterer")]
    NoHit(usize),
    #[error("|r| >= 1 is not a valid collision state")]
    TangentRay,
    #[error("newton refinement of the ray intersection failed")]
    Refinement,
}

#[derive(Clone, Debug)]
pub struct PhasePoint {
    /// Scatterer index in {1, 2, 3}.
    pub i: usize,
    pub s: BigFloat,
    pub r: BigFloat,
}

impl PhasePoint {
    pub fn new(i: usize, s: BigFloat, r: BigFloat) -> Self {
        PhasePoint { i, s, r }
    }

    /// The time-reversal involution (i, s, r) -> (i, s, -r).
    pub fn reversed(&self) -> Self {
        PhasePoint { i: self.i, s: self.s.clone(), r: -self.r.clone() }
    }
}

/// Chord length between boundary points of two scatterers as a bivariate
/// jet: L(sa + x, sb + y) to total order k.
pub fn chord_jet(
    a: &Scatterer,
    sa: &BigFloat,
    b: &Scatterer,
    sb: &BigFloat,
    k: usize,
) -> Jet2<BigFloat> {
    let [ax, ay] = a.point_jet(sa, k);
    let [bx, by] = b.point_jet(sb, k);
    let dx = jet1_pair_to_jet2(&bx, &ax, k);
    let dy = jet1_pair_to_jet2(&by, &ay, k);
    dx.mul(&dx).add(&dy.mul(&dy)).sqrt()
}

/// f(y) - g(x) embedded as a bivariate jet (g depends on the first slot,
/// f on the second).
fn jet1_pair_to_jet2(f: &Jet1<BigFloat>, g: &Jet1<BigFloat>, k: usize) -> Jet2<BigFloat> {
    let mut out = Jet2::zero(k);
    out.set(0, 0, f.c[0].clone() - g.c[0].clone());
    for i in 1..=k {
        if i <= f.order() {
            out.set(0, i, f.c[i].clone());
        }
        if i <= g.order() {
            out.set(i, 0, -g.c[i].clone());
        }
    }
    out
}

/// Outgoing ray (footpoint and unit direction) of a phase point.
pub fn outgoing_ray(table: &Table3, x: &PhasePoint) -> Result<([BigFloat; 2], [BigFloat; 2]), BilliardError> {
    let sc = table.scatterer(x.i);
    let one = BigFloat::one();
    let c2 = &one - &x.r * &x.r;
    if c2 <= BigFloat::zero() {
        return Err(BilliardError::TangentRay);
    }
    let cosphi = c2.sqrt();
    let [px, py] = sc.point(&x.s);
    let t = sc.tangent(&x.s);
    let n = sc.normal(&x.s);
    let d = [
        &x.r * &t[0] + &cosphi * &n[0],
        &x.r * &t[1] + &cosphi * &n[1],
    ];
    Ok(([px, py], d))
}

/// Double-precision prescan: first intersection of the ray with any other
/// scatterer. Returns (scatterer index, native parameter, ray length).
fn ray_hit_f64(table: &Table3, p: [f64; 2], d: [f64; 2], from: usize) -> Option<(usize, f64, f64)> {
    let n = 1024;
    let mut best: Option<(usize, f64, f64)> = None;
    for j in 1..=3usize {
        if j == from {
            continue;
        }
        let sc = table.scatterer(j);
        let cross = |t: f64| {
            let q = sc.point_f64(t);
            (q[0] - p[0]) * d[1] - (q[1] - p[1]) * d[0]
        };
        let along = |t: f64| {
            let q = sc.point_f64(t);
            (q[0] - p[0]) * d[0] + (q[1] - p[1]) * d[1]
        };
        let step = 2.0 * std::f64::consts::PI / n as f64;
        let mut prev = cross(0.0);
        for i in 0..n {
            let t0 = i as f64 * step;
            let t1 = t0 + step;
            let cur = cross(t1);
            if prev == 0.0 || prev.signum() != cur.signum() {
                // Bisect the crossing.
                let (mut lo, mut hi) = (t0, t1);
                let mut flo = prev;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let fm = cross(mid);
                    if fm == 0.0 {
                        lo = mid;
                        break;
                    }
                    if flo.signum() == fm.signum() {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                let t_root = 0.5 * (lo + hi);
                let len = along(t_root);
                if len > 1e-9 {
                    match best {
                        Some((_, _, l)) if l <= len => {}
                        _ => best = Some((j, t_root, len)),
                    }
                }
            }
            prev = cur;
        }
    }
    best
}

/// One step of the collision map.
pub fn collide(table: &Table3, x: &PhasePoint) -> Result<PhasePoint, BilliardError> {
    let ([px, py], d) = outgoing_ray(table, x)?;
    let pf = [px.to_f64(), py.to_f64()];
    let df = [d[0].to_f64(), d[1].to_f64()];
    let (j, t_seed, _) = ray_hit_f64(table, pf, df, x.i).ok_or(BilliardError::NoHit(x.i))?;
    let sc = table.scatterer(j);
    // Newton in the native parameter on cross(γ(t) - p, d) = 0. The root is
    // simple (transversal entry crossing), so convergence is quadratic.
    let mut t = BigFloat::from_f64_digits(t_seed, 20).with_precision(ctx_digits());
    let tol = -((ctx_digits() as f64 - 8.0) * 3.32);
    let mut converged = false;
    for _ in 0..120 {
        let [gx, gy] = sc.world_jets_native(&t, 1);
        let f = (gx.c[0].clone() - &px) * &d[1] - (gy.c[0].clone() - &py) * &d[0];
        let fp = &gx.c[1] * &d[1] - &gy.c[1] * &d[0];
        let step = f.clone() / fp;
        t = &t - &step;
        if f.mag_log2() < tol || step.mag_log2() < tol {
            converged = true;
        }
        if converged && step.mag_log2() < tol {
            break;
        }
    }
    if !converged {
        return Err(BilliardError::Refinement);
    }
    let s_new = sc.s_of_t(&t);
    // r' = d · T(s') (the normal component flips under reflection, the
    // tangential one is preserved).
    let tang = sc.tangent(&s_new);
    let r_new = &d[0] * &tang[0] + &d[1] * &tang[1];
    Ok(PhasePoint { i: j, s: s_new, r: r_new })
}

/// Inverse collision map, via time reversal.
pub fn collide_inverse(table: &Table3, x: &PhasePoint) -> Result<PhasePoint, BilliardError> {
    Ok(collide(table, &x.reversed())?.reversed())
}

/// Flight length of the outgoing segment.
pub fn flight_length(table: &Table3, x: &PhasePoint) -> Result<BigFloat, BilliardError> {
    let y = collide(table, x)?;
    let ([px, py], _) = outgoing_ray(table, x)?;
    let q = table.scatterer(y.i).point(&y.s);
    let dx = &q[0] - &px;
    let dy = &q[1] - &py;
    Ok((&dx * &dx + &dy * &dy).sqrt())
}

/// Jet of the collision map at a phase point: returns the image point and
/// the displacement map (δs, δr) -> (δs', δr') as a jet of order k with
/// zero constant term.
pub fn collision_jet(
    table: &Table3,
    x: &PhasePoint,
    k: usize,
) -> Result<(PhasePoint, Jet2Map<BigFloat>), BilliardError> {
    let y = collide(table, x)?;
    let src = table.scatterer(x.i);
    let dst = table.scatterer(y.i);
    // Inputs as jets in (δs, δr); expand one order higher so that the
    // tangent jets (arc-length derivatives) are full order-k expansions.
    let [px, py] = src.point_jet(&x.s, k + 1);
    let px2 = lift_x(&px, k);
    let py2 = lift_x(&py, k);
    // Tangent/normal along the source boundary: derivatives of the point
    // jets, as functions of δs only.
    let tx2 = lift_x(&px.derivative(), k);
    let ty2 = lift_x(&py.derivative(), k);
    let nx2 = ty2.clone();
    let ny2 = tx2.neg();
    // r + δr and cos φ = sqrt(1 - r²) as jets.
    let r2 = Jet2::var_y(x.r.clone(), k);
    let one = Jet2::constant(BigFloat::one(), k);
    let cos2 = one.sub(&r2.mul(&r2)).sqrt();
    let dxj = r2.mul(&tx2).add(&cos2.mul(&nx2));
    let dyj = r2.mul(&ty2).add(&cos2.mul(&ny2));
    // Unknown z = arc-length offset on the target. Solve
    // cross(γ_dst(s' + z) - p(δs), d(δs, δr)) = 0 for z(δs, δr).
    let [qx, qy] = dst.point_jet(&y.s, k + 1);
    let g = jet3_cross(&qx, &qy, &px2, &py2, &dxj, &dyj, k);
    let sigma = solve_implicit(&g, BigFloat::zero());
    // s' jet is just y.s + sigma. r' = d · T(s' + z) evaluated at z = sigma.
    let txd = qx.derivative();
    let tyd = qy.derivative();
    let tx_at = compose_jet1_jet2(&txd, &sigma, k);
    let ty_at = compose_jet1_jet2(&tyd, &sigma, k);
    let rp = dxj.mul(&tx_at).add(&dyj.mul(&ty_at));
    let mut ds = sigma;
    ds.set(0, 0, BigFloat::zero());
    let mut dr = rp;
    dr.set(0, 0, BigFloat::zero());
    Ok((y, Jet2Map { x: ds, y: dr }))
}

/// Lifts a univariate jet in δs to a bivariate jet in (δs, δr).
fn lift_x(f: &Jet1<BigFloat>, k: usize) -> Jet2<BigFloat> {
    let mut out = Jet2::zero(k);
    for i in 0..=k.min(f.order()) {
        out.set(i, 0, f.c[i].clone());
    }
    out
}

/// Composes a univariate jet with a bivariate jet (constant term of the
/// inner jet is absorbed as the expansion point).
fn compose_jet1_jet2(f: &Jet1<BigFloat>, g: &Jet2<BigFloat>, k: usize) -> Jet2<BigFloat> {
    // f is expanded at 0 in its argument; g's constant term must be the
    // same expansion point (0 here, since sigma(0,0) = 0).
    let mut taylor = f.c.clone();
    taylor.resize(k + 1, BigFloat::zero());
    let mut g0 = g.clone();
    g0.set(0, 0, BigFloat::zero());
    // apply_taylor expects coefficients at g's constant term.
    let mut shifted = Jet2::zero(k);
    for (i, j, a) in g0.iter() {
        shifted.set(i, j, a.clone());
    }
    shifted_apply(&shifted, &taylor)
}

fn shifted_apply(g: &Jet2<BigFloat>, taylor: &[BigFloat]) -> Jet2<BigFloat> {
    g.apply_taylor(taylor)
}

/// Builds cross(q(z) - p(x,y), d(x,y)) as a trivariate jet, where q is a
/// univariate jet in z and p, d are bivariate jets in (x, y).
#[allow(clippy::too_many_arguments)]
fn jet3_cross(
    qx: &Jet1<BigFloat>,
    qy: &Jet1<BigFloat>,
    px: &Jet2<BigFloat>,
    py: &Jet2<BigFloat>,
    dx: &Jet2<BigFloat>,
    dy: &Jet2<BigFloat>,
    k: usize,
) -> Jet3<BigFloat> {
    let mut out = Jet3::zero(k);
    // q(z) ⊗ d(x, y) terms: Σ_l q_l z^l · d(x, y).
    for l in 0..=k {
        if l <= qx.order() {
            add_slice(&mut out, l, &dy.scale(&qx.c[l]), k);
        }
        if l <= qy.order() {
            add_slice(&mut out, l, &dx.scale(&qy.c[l]).neg(), k);
        }
    }
    // -(p × d) contribution, independent of z.
    let pd = px.mul(dy).sub(&py.mul(dx));
    add_slice(&mut out, 0, &pd.neg(), k);
    out
}

fn add_slice(f: &mut Jet3<BigFloat>, l: usize, g: &Jet2<BigFloat>, k: usize) {
    for (i, j, a) in g.iter() {
        if i + j + l <= k && !a.is_zero() {
            let cur = f.get(i, j, l).clone();
            f.set(i, j, l, cur + a.clone());
        }
    }
}

/// Differential of the collision map from the generating-function second
/// derivatives: an independent route used to cross-check `collision_jet`.
pub fn jacobian(table: &Table3, x: &PhasePoint) -> Result<[[BigFloat; 2]; 2], BilliardError> {
    let y = collide(table, x)?;
    let l = chord_jet(table.scatterer(x.i), &x.s, table.scatterer(y.i), &y.s, 2);
    let two = BigFloat::from_i64(2);
    let lss = l.get(2, 0).clone() * &two;
    let lspsp = l.get(0, 2).clone() * &two;
    let lssp = l.get(1, 1).clone();
    let a = -(&lss / &lssp);
    let b = -(BigFloat::one() / &lssp);
    let c = &lssp - &lspsp * &lss / &lssp;
    let d = -(&lspsp / &lssp);
    Ok([[a, b], [c, d]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::reference_table;
    use crate::numerics::bigfloat::with_digits;

    fn tol(e: &str) -> BigFloat {
        BigFloat::parse_digits(e, 20).unwrap()
    }

    fn normalized_reference() -> Table3 {
        let mut t = reference_table();
        t.normalize_frame().unwrap();
        t
    }

    #[test]
    fn reference_two_bounce() {
        with_digits(60, || {
            let t = normalized_reference();
            let x = PhasePoint::new(1, BigFloat::zero(), BigFloat::zero());
            let y = collide(&t, &x).unwrap();
            assert_eq!(y.i, 2);
            assert!(y.s.abs() < tol("1e-50"));
            assert!(y.r.abs() < tol("1e-50"));
            let l = flight_length(&t, &x).unwrap();
            assert!((l - BigFloat::from_i64(2)).abs() < tol("1e-50"));
        });
    }

    #[test]
    fn time_reversal_conjugates_inverse() {
        with_digits(60, || {
            let t = normalized_reference();
            let x = PhasePoint::new(
                1,
                BigFloat::parse("0.1").unwrap(),
                BigFloat::parse("0.05").unwrap(),
            );
            let y = collide(&t, &x).unwrap();
            // F(I₀ y) should equal I₀ x.
            let back = collide(&t, &y.reversed()).unwrap();
            assert_eq!(back.i, x.i);
            assert!((back.s.clone() - x.s.clone()).abs() < tol("1e-50"));
            assert!((back.r.clone() + x.r.clone()).abs() < tol("1e-50"));
            // And collide_inverse undoes collide.
            let z = collide_inverse(&t, &y).unwrap();
            assert_eq!(z.i, x.i);
            assert!((z.s.clone() - x.s.clone()).abs() < tol("1e-50"));
            assert!((z.r.clone() - x.r.clone()).abs() < tol("1e-50"));
        });
    }

    #[test]
    fn jacobian_eigenvalues_at_two_bounce() {
        with_digits(60, || {
            // Unit curvature, gap 2, perpendicular hit: the differential is
            // the flight/reflection product [[1,0],[2,1]]·[[1,2],[0,1]] =
            // [[1,2],[2,5]] with eigenvalues 3 ± 2√2.
            // With both boundaries oriented counterclockwise the one-step
            // differential picks up an orientation sign: D = -[[3,2],[4,3]].
            // The invariant content is in the doubled map, whose eigenvalues
            // are (3 ± 2√2)² = 17 ± 12√2.
            let t = normalized_reference();
            let x = PhasePoint::new(1, BigFloat::zero(), BigFloat::zero());
            let j = jacobian(&t, &x).unwrap();
            let tr = j[0][0].clone() + j[1][1].clone();
            let det = j[0][0].clone() * j[1][1].clone() - j[0][1].clone() * j[1][0].clone();
            assert!((det.clone() - BigFloat::one()).abs() < tol("1e-50"), "det = {}", det);
            assert!((tr.abs() - BigFloat::from_i64(6)).abs() < tol("1e-50"), "tr = {}", tr);
            // Doubled map: D𝓕² = D𝓕(x₂)·D𝓕(x₁); by symmetry its trace is
            // tr² - 2 = 34, giving eigenvalues 17 ± 12√2 = (3 ± 2√2)².
            let tr2 = &tr * &tr - BigFloat::from_i64(2);
            let disc = (&tr2 * &tr2 - BigFloat::from_i64(4)).sqrt();
            let lam2_small = (&tr2 - &disc) / BigFloat::from_i64(2);
            let lam = lam2_small.sqrt();
            let expect = BigFloat::from_i64(3) - BigFloat::from_i64(8).sqrt();
            assert!((lam - expect).abs() < tol("1e-50"));
        });
    }

    #[test]
    fn collision_jet_matches_jacobian_and_finite_differences() {
        with_digits(70, || {
            let t = normalized_reference();
            let x = PhasePoint::new(
                1,
                BigFloat::parse("0.05").unwrap(),
                BigFloat::parse("0.02").unwrap(),
            );
            let (y, map) = collision_jet(&t, &x, 3).unwrap();
            let j = jacobian(&t, &x).unwrap();
            let lp = map.linear_part();
            assert!((lp[0].clone() - j[0][0].clone()).abs() < tol("1e-55"));
            assert!((lp[1].clone() - j[0][1].clone()).abs() < tol("1e-55"));
            assert!((lp[2].clone() - j[1][0].clone()).abs() < tol("1e-55"));
            assert!((lp[3].clone() - j[1][1].clone()).abs() < tol("1e-55"));
            // Second-order check against direct evaluation: compare the jet
            // prediction with an actual collision at a nearby point.
            let eps = BigFloat::parse("1e-12").unwrap();
            let xp = PhasePoint::new(1, &x.s + &eps, x.r.clone() - &eps);
            let yp = collide(&t, &xp).unwrap();
            let (ps, pr) = map.eval(&eps, &-(eps.clone()));
            let pred_s = &y.s + &ps;
            let pred_r = &y.r + &pr;
            // Order-3 jet at step 1e-12 leaves a ~1e-48 remainder.
            assert!((pred_s - yp.s).abs() < tol("1e-45"));
            assert!((pred_r - yp.r).abs() < tol("1e-45"));
            // The collision map is symplectic in (s, r): unit determinant.
            assert!((map.linear_det() - BigFloat::one()).abs() < tol("1e-55"));
        });
    }
}
