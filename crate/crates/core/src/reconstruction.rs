//! Point-by-point reconstruction of the shadowed scatterer ∂D₃.
//!
//! The period-2n orbit 3 (12)^{n-1} 1 touches D₃ exactly once, at γ₃(s₀ⁿ).
//! Its interior collisions all lie on the two known scatterers, so the sum
//! of the interior chords is computable from D₁ and D₂ alone, and the two
//! remaining legs — from D₃ to the first interior point and back from the
//! last one — are equal by the orbit's time-reversal symmetry. Hence
//!
//!   L₃₁ = (ℓ_n − Σ interior chords) / 2,
//!
//! and γ₃(s₀ⁿ) = γ₁(s₁ⁿ) + L₃₁·u, where u reverses the incoming ray at the
//! first interior collision. Nothing about D₃ is queried except the
//! perimeter ℓ_n and the interior collision data, so the routine recovers
//! boundary points of a scatterer it never sees.

use rayon::prelude::*;
use thiserror::Error;

use crate::billiard::PhasePoint;
use crate::geometry::{Scatterer, Table3};
use crate::numerics::bigfloat::{ctx_digits, BigFloat};
use crate::numerics::linalg::solve_dense;
use crate::orbits::{solve_periodic, OrbitError};

const LOG2_10: f64 = std::f64::consts::LOG2_10;

#[derive(Debug, Error)]
pub enum ReconstructionError {
    #[error("interior collision {0} lies on the unknown scatterer")]
    InteriorOnUnknown(usize),
    #[error("interior data for n = {0} must hold the 2n - 1 points between the D3 collisions")]
    BadInteriorCount(usize),
    #[error("|r| >= 1 at the first interior collision")]
    TangentRay,
    #[error("recovered chord L31 is not positive: inconsistent inputs")]
    NegativeChord,
    #[error("arc fit needs at least 6 points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate point configuration in arc fit")]
    Degenerate,
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

type Result<T> = std::result::Result<T, ReconstructionError>;

/// Everything the reconstruction may know about one orbit 3 (12)^{n-1} 1:
/// its perimeter and the 2n − 1 collisions on the two known scatterers.
/// The collision on D₃ itself is deliberately absent.
#[derive(Clone, Debug)]
pub struct InteriorData {
    pub n: usize,
    /// Phase points x_k for 1 ≤ k ≤ 2n − 1, in orbit order, each on D₁ or D₂.
    pub interior: Vec<PhasePoint>,
    /// Perimeter ℓ_n of the full orbit, including the two legs to D₃.
    pub ell_n: BigFloat,
}

/// Extracts [`InteriorData`] from the orbit solver for the family
/// 3 (12)^{n-1} 1, or its mirror 3 (21)^{n-1} 2 when `mirror` is set
/// (n = 1 gives the period-two orbits 31 and 32). This stands in for the
/// spectral recovery of the interior collision coordinates: the dynamics on
/// the two known scatterers determines them, and only the perimeter and
/// these points are passed on, never the third scatterer itself.
pub fn interior_from_orbit(table: &Table3, n: usize, mirror: bool) -> Result<InteriorData> {
    assert!(n >= 1);
    let (a, b) = if mirror { (2, 1) } else { (1, 2) };
    let mut coding = Vec::with_capacity(2 * n);
    coding.push(3);
    for _ in 0..n - 1 {
        coding.push(a);
        coding.push(b);
    }
    coding.push(a);
    let orbit = solve_periodic(table, &coding)?;
    Ok(InteriorData {
        n,
        interior: orbit.points[1..].to_vec(),
        ell_n: orbit.length,
    })
}

/// A recovered boundary point of D₃ with an a-posteriori error estimate.
#[derive(Clone, Debug)]
pub struct ReconstructedPoint {
    pub n: usize,
    pub point: [BigFloat; 2],
    /// log10 of the estimated position error, from the closure re-sum
    /// residual and the working-precision floor.
    pub err_log10: f64,
}

fn scatterer_of<'a>(
    d1: &'a Scatterer,
    d2: &'a Scatterer,
    x: &PhasePoint,
) -> Result<&'a Scatterer> {
    match x.i {
        1 => Ok(d1),
        2 => Ok(d2),
        i => Err(ReconstructionError::InteriorOnUnknown(i)),
    }
}

fn dist(a: &[BigFloat; 2], b: &[BigFloat; 2]) -> BigFloat {
    let dx = &a[0] - &b[0];
    let dy = &a[1] - &b[1];
    (&dx * &dx + &dy * &dy).sqrt()
}

/// Re-sums the full perimeter with the candidate D₃ point inserted as the
/// first collision and returns |re-sum − ℓ_n|. Uses only D₁, D₂ and the
/// interior data, so it doubles as the reconstruction's error estimate.
pub fn closure_residual(
    d1: &Scatterer,
    d2: &Scatterer,
    data: &InteriorData,
    point: &[BigFloat; 2],
) -> Result<BigFloat> {
    let pts: Vec<[BigFloat; 2]> = data
        .interior
        .iter()
        .map(|x| Ok(scatterer_of(d1, d2, x)?.point(&x.s)))
        .collect::<Result<_>>()?;
    let mut total = dist(point, &pts[0]) + dist(pts.last().unwrap(), point);
    for k in 1..pts.len() {
        total = total + dist(&pts[k - 1], &pts[k]);
    }
    Ok((total - &data.ell_n).abs())
}

fn reconstruct_one(
    d1: &Scatterer,
    d2: &Scatterer,
    data: &InteriorData,
) -> Result<ReconstructedPoint> {
    if data.interior.len() != 2 * data.n - 1 {
        return Err(ReconstructionError::BadInteriorCount(data.n));
    }
    let pts: Vec<[BigFloat; 2]> = data
        .interior
        .iter()
        .map(|x| Ok(scatterer_of(d1, d2, x)?.point(&x.s)))
        .collect::<Result<_>>()?;

    // Interior chord sum and the recovered leg length.
    let mut sigma = BigFloat::zero();
    for k in 1..pts.len() {
        sigma = sigma + dist(&pts[k - 1], &pts[k]);
    }
    let half = BigFloat::from_i64(2);
    let l31 = (&data.ell_n - &sigma) / &half;
    if l31.is_sign_negative() || l31.is_zero() {
        return Err(ReconstructionError::NegativeChord);
    }

    // Reverse the incoming ray at the first interior collision: the outgoing
    // ray of the time-reversed phase point (i, s, -r).
    let x1 = &data.interior[0];
    let sc1 = scatterer_of(d1, d2, x1)?;
    let r = -x1.r.clone();
    let c2 = BigFloat::one() - &r * &r;
    if c2 <= BigFloat::zero() {
        return Err(ReconstructionError::TangentRay);
    }
    let cosphi = c2.sqrt();
    let t = sc1.tangent(&x1.s);
    let nrm = sc1.normal(&x1.s);
    let u = [&r * &t[0] + &cosphi * &nrm[0], &r * &t[1] + &cosphi * &nrm[1]];
    let point = [&pts[0][0] + &(&l31 * &u[0]), &pts[0][1] + &(&l31 * &u[1])];

    let res = closure_residual(d1, d2, data, &point)?;
    let floor = -((ctx_digits() as f64 - 12.0) * LOG2_10);
    let err_log10 = (res.mag_log2().max(floor)) / LOG2_10;
    Ok(ReconstructedPoint { n: data.n, point, err_log10 })
}

/// Recovers one boundary point of D₃ per orbit datum. The unknown scatterer
/// enters only through the perimeters and the interior collision data.
/// Per-orbit reconstructions are independent and run in parallel.
pub fn reconstruct_d3_points(
    d1: &Scatterer,
    d2: &Scatterer,
    data: &[InteriorData],
) -> Result<Vec<ReconstructedPoint>> {
    let digits = ctx_digits();
    data.par_iter()
        .map(|d| crate::numerics::bigfloat::with_digits(digits, || reconstruct_one(d1, d2, d)))
        .collect()
}

/// A conic arc A x² + B xy + C y² + D x + E y + F = 0 fitted through
/// reconstructed points, normalized to A + C = 1.
#[derive(Clone, Debug)]
pub struct ArcFit {
    /// Coefficients (A, B, C, D, E, F).
    pub conic: [BigFloat; 6],
    /// Per point: log10 of the approximate geometric distance to the arc
    /// (algebraic residual divided by the conic gradient).
    pub residual_log10: Vec<f64>,
    /// Indices of points whose residual exceeds their own error estimate.
    pub flagged: Vec<usize>,
}

impl ArcFit {
    /// Center and radius when the conic is a circle (B ≈ 0, A ≈ C). The
    /// tolerance is relative to the fitted quadratic part.
    pub fn circle(&self) -> Option<([BigFloat; 2], BigFloat)> {
        let [a, b, c, d, e, f] = &self.conic;
        let tol = -((ctx_digits() as f64 / 3.0) * LOG2_10);
        if b.mag_log2() > tol || (a - c).mag_log2() > tol {
            return None;
        }
        let two = BigFloat::from_i64(2);
        let cx = -(d / &(&two * a));
        let cy = -(e / &(&two * a));
        let r2 = &(&cx * &cx + &cy * &cy) - &(f / a);
        if r2.is_sign_negative() {
            return None;
        }
        Some(([cx, cy], r2.sqrt()))
    }
}

/// Least-squares conic through weighted points: each entry is a point and
/// the log10 of its position error estimate. The fit flags points whose
/// distance to the arc exceeds their own estimate; a clean fit therefore
/// reports every residual at or below the data's noise.
pub fn fit_boundary_arc(points: &[([BigFloat; 2], f64)]) -> Result<ArcFit> {
    if points.len() < 6 {
        return Err(ReconstructionError::TooFewPoints(points.len()));
    }
    // With C = 1 - A the model is linear in (A, B, D, E, F):
    //   A (x² - y²) + B xy + D x + E y + F = -y².
    let rows: Vec<Vec<BigFloat>> = points
        .iter()
        .map(|([x, y], _)| {
            vec![
                &(x * x) - &(y * y),
                x * y,
                x.clone(),
                y.clone(),
                BigFloat::one(),
            ]
        })
        .collect();
    let rhs: Vec<BigFloat> = points.iter().map(|([_, y], _)| -(y * y)).collect();
    // Normal equations; 5 unknowns at full precision keep this benign.
    let mut ata = vec![vec![BigFloat::zero(); 5]; 5];
    let mut atb = vec![BigFloat::zero(); 5];
    for (row, b) in rows.iter().zip(&rhs) {
        for i in 0..5 {
            for j in 0..5 {
                ata[i][j] = &ata[i][j] + &(&row[i] * &row[j]);
            }
            atb[i] = &atb[i] + &(&row[i] * b);
        }
    }
    let sol = solve_dense(&mut ata, &mut atb).ok_or(ReconstructionError::Degenerate)?;
    let [a, b, d, e, f]: [BigFloat; 5] =
        sol.try_into().map_err(|_| ReconstructionError::Degenerate)?;
    let c = BigFloat::one() - &a;
    let conic = [a, b, c, d, e, f];

    let two = BigFloat::from_i64(2);
    let mut residual_log10 = Vec::with_capacity(points.len());
    let mut flagged = Vec::new();
    for (k, ([x, y], err)) in points.iter().enumerate() {
        let [a, b, c, d, e, f] = &conic;
        let val = &(&(&(a * &(x * x)) + &(b * &(x * y))) + &(c * &(y * y)))
            + &(&(&(d * x) + &(e * y)) + f);
        let gx = &(&two * &(a * x)) + &(&(b * y) + d);
        let gy = &(&two * &(c * y)) + &(&(b * x) + e);
        let grad = (&(&gx * &gx) + &(&gy * &gy)).sqrt();
        let res = (val / &grad).mag_log2() / LOG2_10;
        residual_log10.push(res);
        // Two digits of slack: the estimate and the fit are both approximate.
        if res > err + 2.0 {
            flagged.push(k);
        }
    }
    Ok(ArcFit { conic, residual_log10, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::reference_table;
    use crate::numerics::bigfloat::with_digits;
    use crate::orbits::{homoclinic, homoclinic_m_for};

    fn d3_data(
        n_range: std::ops::RangeInclusive<usize>,
        mirror: bool,
    ) -> (Table3, Vec<InteriorData>) {
        let table = reference_table();
        let data = n_range
            .map(|n| interior_from_orbit(&table, n, mirror).unwrap())
            .collect();
        (table, data)
    }

    /// Reconstructed points land on the true circle |p - (6, 0)| = 1 and the
    /// closure re-sum reproduces ℓ_n; the mirror orbit family reconstructs
    /// the reflected points, matching the table's y ↦ -y symmetry.
    #[test]
    fn points_land_on_the_hidden_circle() {
        with_digits(60, || {
            let (table, data) = d3_data(3..=8, false);
            let (d1, d2) = (table.scatterer(1), table.scatterer(2));
            let pts = reconstruct_d3_points(d1, d2, &data).unwrap();
            assert_eq!(pts.len(), data.len());
            for (p, d) in pts.iter().zip(&data) {
                let dx = &p.point[0] - &BigFloat::from_i64(6);
                let on_circle =
                    (&(&dx * &dx + &(&p.point[1] * &p.point[1])).sqrt() - &BigFloat::one()).abs();
                assert!(
                    on_circle.mag_log2() < -30.0 * LOG2_10,
                    "n = {}: off circle by 1e{:.1}",
                    p.n,
                    on_circle.mag_log2() / LOG2_10
                );
                let res = closure_residual(d1, d2, d, &p.point).unwrap();
                assert!(
                    res.mag_log2() < -40.0 * LOG2_10,
                    "n = {}: closure residual 1e{:.1}",
                    p.n,
                    res.mag_log2() / LOG2_10
                );
                assert!(p.err_log10 < -40.0);
            }

            let (_, mdata) = d3_data(3..=8, true);
            let mpts = reconstruct_d3_points(d1, d2, &mdata).unwrap();
            for (p, q) in pts.iter().zip(&mpts) {
                assert!((&p.point[0] - &q.point[0]).mag_log2() < -40.0 * LOG2_10);
                assert!((&p.point[1] + &q.point[1]).mag_log2() < -40.0 * LOG2_10);
            }
        });
    }

    /// The reconstructed points accumulate at the homoclinic collision on
    /// D₃ as n grows.
    #[test]
    fn points_accumulate_at_the_homoclinic_point() {
        with_digits(60, || {
            let (table, data) = d3_data(3..=8);
            let (d1, d2) = (table.scatterer(1), table.scatterer(2));
            let pts = reconstruct_d3_points(d1, d2, &data).unwrap();
            let m = homoclinic_m_for(0, -0.766, 45);
            let hom = homoclinic(&table, 0, m).unwrap();
            let limit = table.scatterer(3).point(&hom[0].s);
            let gaps: Vec<f64> = pts
                .iter()
                .map(|p| {
                    (&(&p.point[0] - &limit[0]) * &(&p.point[0] - &limit[0])
                        + &(&p.point[1] - &limit[1]) * &(&p.point[1] - &limit[1]))
                        .sqrt()
                        .mag_log2()
                })
                .collect();
            for w in gaps.windows(2) {
                assert!(w[1] < w[0] - 2.0, "gaps not contracting: {gaps:?}");
            }
            assert!(*gaps.last().unwrap() < -20.0);
        });
    }

    /// Points sampled from the reconstruction fit a circle whose center and
    /// radius match the hidden scatterer.
    #[test]
    fn arc_fit_recovers_the_circle() {
        with_digits(60, || {
            let (table, data) = d3_data(3..=9);
            let pts =
                reconstruct_d3_points(table.scatterer(1), table.scatterer(2), &data).unwrap();
            let weighted: Vec<([BigFloat; 2], f64)> =
                pts.iter().map(|p| (p.point.clone(), p.err_log10)).collect();
            let fit = fit_boundary_arc(&weighted).unwrap();
            assert!(fit.flagged.is_empty(), "clean data flagged: {:?}", fit.flagged);
            let (center, radius) = fit.circle().expect("not recognized as a circle");
            assert!((&center[0] - &BigFloat::from_i64(6)).mag_log2() < -20.0 * LOG2_10);
            assert!(center[1].mag_log2() < -20.0 * LOG2_10);
            assert!((radius - BigFloat::one()).mag_log2() < -20.0 * LOG2_10);
        });
    }

    /// A synthetic ellipse is fitted by the conic with residuals at the
    /// sampling noise floor; corrupting one point raises its flag.
    #[test]
    fn conic_fit_and_outlier_flag() {
        with_digits(60, || {
            let (a, b) = (BigFloat::from_i64(3), BigFloat::from_i64(2));
            let mut pts: Vec<([BigFloat; 2], f64)> = (0..10)
                .map(|k| {
                    let t = BigFloat::from_i64(k as i64) / &BigFloat::from_i64(4);
                    ([&a * &t.cos(), &b * &t.sin()], -45.0)
                })
                .collect();
            let fit = fit_boundary_arc(&pts).unwrap();
            assert!(fit.flagged.is_empty(), "flags on clean data: {:?}", fit.flagged);
            for r in &fit.residual_log10 {
                assert!(*r < -40.0, "residual above noise floor: 1e{r:.1}");
            }

            let bump = BigFloat::parse_digits("1e-5", 20).unwrap();
            pts[4].0[0] = &pts[4].0[0] + &bump;
            let fit = fit_boundary_arc(&pts).unwrap();
            assert!(fit.flagged.contains(&4), "corrupted point not flagged: {:?}", fit.flagged);
        });
    }
}
