//! Birkhoff normal form of the hyperbolic two-bounce core between the first
//! two scatterers, analytic continuation of its linearizing chart along the
//! homoclinic excursion to the third scatterer, and the gluing map with its
//! generating function.
//!
//! The normal form of the two-collision return map is
//!   N²(ξ, η) = (μ²(h) ξ, η / μ²(h)),  h = ξη,  μ(h) = λ (1 + Σ δ_j h^j),
//! with 0 < λ < 1, and the one-collision step is N(ξ, η) = (μ(h) ξ, η/μ(h)).
//! The chart Φ₁ at the collision point on the first scatterer satisfies
//! 𝓕² ∘ Φ₁ = Φ₁ ∘ N² and the reversibility Φ₁ ∘ I = I₀ ∘ Φ₁ with
//! I(ξ, η) = (η, ξ) and I₀(s, r) = (s, −r).
//!
//! All computations honor the ambient big-float precision context.

use crate::billiard::{collision_jet, BilliardError, PhasePoint};
use crate::geometry::Table3;
use crate::numerics::{ctx_digits, BigFloat, Jet1, Jet2, Jet2Map};
use crate::orbits::{ell_n, homoclinic, homoclinic_m_for, orbit_mn, OrbitError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NormalFormError {
    #[error(transparent)]
    Billiard(#[from] BilliardError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error("normal form construction failed: {0}")]
    Structure(String),
}

type Result<T> = std::result::Result<T, NormalFormError>;

const LOG2_10: f64 = std::f64::consts::LOG2_10;

fn err(msg: impl Into<String>) -> NormalFormError {
    NormalFormError::Structure(msg.into())
}

fn jet2_max_log2(j: &Jet2<BigFloat>) -> f64 {
    j.iter()
        .map(|(_, _, c)| if c.is_zero() { f64::NEG_INFINITY } else { c.mag_log2() })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
fn map_diff_log2(a: &Jet2Map<BigFloat>, b: &Jet2Map<BigFloat>) -> f64 {
    jet2_max_log2(&a.x.sub(&b.x)).max(jet2_max_log2(&a.y.sub(&b.y)))
}

/// Σ coeffs[j] (xy)^j as a bivariate jet of order k.
fn poly_in_h(coeffs: &[BigFloat], k: usize) -> Jet2<BigFloat> {
    let h = Jet2::var_x(BigFloat::zero(), k).mul(&Jet2::var_y(BigFloat::zero(), k));
    let mut acc = Jet2::constant(coeffs.last().cloned().unwrap_or_else(BigFloat::zero), k);
    for c in coeffs.iter().rev().skip(1) {
        acc = acc.mul(&h).add(&Jet2::constant(c.clone(), k));
    }
    acc
}

/// The twist map (m(h) x, y / m(h)) for m(h) = Σ coeffs[j] h^j, as a jet map.
fn twist_map(coeffs: &[BigFloat], k: usize) -> Jet2Map<BigFloat> {
    let m = poly_in_h(coeffs, k);
    let x = Jet2::var_x(BigFloat::zero(), k);
    let y = Jet2::var_y(BigFloat::zero(), k);
    Jet2Map { x: m.mul(&x), y: y.mul(&m.recip()) }
}

fn twist_map_inverse(coeffs: &[BigFloat], k: usize) -> Jet2Map<BigFloat> {
    let m = poly_in_h(coeffs, k);
    let x = Jet2::var_x(BigFloat::zero(), k);
    let y = Jet2::var_y(BigFloat::zero(), k);
    Jet2Map { x: x.mul(&m.recip()), y: y.mul(&m) }
}

/// Normal form data and linearizing charts of the two-bounce core.
#[derive(Clone, Debug)]
pub struct Conjugacy {
    /// Jet order of all charts.
    pub order: usize,
    /// Contraction rate per collision, 0 < λ < 1.
    pub lambda: BigFloat,
    /// Twist coefficients δ_1, δ_2, … of μ(h) = λ(1 + Σ δ_j h^j); order k
    /// determines them for 2j + 1 ≤ k.
    pub delta: Vec<BigFloat>,
    /// Chart at the collision point on scatterer 1, as a jet in (ξ, η) with
    /// values in displacement coordinates (δs, δr); zero constant term.
    pub phi1: Jet2Map<BigFloat>,
    /// Chart at the collision point on scatterer 2: 𝓕 ∘ Φ₁ = Φ₂ ∘ N.
    pub phi2: Jet2Map<BigFloat>,
}

impl Conjugacy {
    /// Coefficients [λ, λδ₁, λδ₂, …] of μ as a polynomial in h.
    pub fn mu_coeffs(&self) -> Vec<BigFloat> {
        let mut v = vec![self.lambda.clone()];
        for d in &self.delta {
            v.push(&self.lambda * d);
        }
        v
    }

    /// μ(h) and μ′(h) evaluated at a numeric h.
    pub fn mu_at(&self, h: &BigFloat) -> (BigFloat, BigFloat) {
        let mut jet = Jet1::zero(self.delta.len() + 1);
        for (i, c) in self.mu_coeffs().into_iter().enumerate() {
            jet.c[i] = c;
        }
        (jet.eval(h), jet.derivative().eval(h))
    }

    /// One-collision normal form N as a jet map of order k.
    pub fn n_map(&self, k: usize) -> Jet2Map<BigFloat> {
        twist_map(&self.mu_coeffs(), k)
    }

    pub fn n_map_inverse(&self, k: usize) -> Jet2Map<BigFloat> {
        twist_map_inverse(&self.mu_coeffs(), k)
    }
}

/// Computes the normal form and charts of the two-bounce core to jet order k.
pub fn compute_normal_form(table: &Table3, k: usize) -> Result<Conjugacy> {
    let digits = ctx_digits();
    let zero = BigFloat::zero;
    let x1 = PhasePoint::new(1, zero(), zero());
    let (x2, j1) = collision_jet(table, &x1, k)?;
    let (x1b, j2) = collision_jet(table, &x2, k)?;
    if x1b.s.mag_log2() > -8.0 || x1b.r.mag_log2() > -8.0 {
        return Err(err("table frame is not normalized to the two-periodic orbit"));
    }
    let f2 = j2.compose(&j1);

    // Hyperbolic splitting of the linear part; Λ = λ² is the eigenvalue in
    // (0, 1). Reversibility pairs the eigenvectors by (v₁, v₂) ↦ (v₁, −v₂),
    // which requires v₁v₂ < 0 for the contracting direction.
    let [a, b, c, d] = f2.linear_part();
    let tr = &a + &d;
    if tr.to_f64() <= 2.0 {
        return Err(err("two-bounce return map is not hyperbolic with positive trace"));
    }
    let two = BigFloat::from_i64(2);
    let disc = (&tr * &tr - BigFloat::from_i64(4)).sqrt();
    let cap = (&tr - &disc) / &two; // Λ = λ²
    let v = if b.mag_log2() > c.mag_log2() {
        [b.clone(), &cap - &a]
    } else {
        [&cap - &d, c.clone()]
    };
    let v1v2 = &v[0] * &v[1];
    if !v1v2.is_sign_negative() {
        return Err(err("contracting eigenvector is not reversibility-adapted"));
    }
    let alpha = (-&v1v2 * &two).sqrt().recip();
    let (tv1, tv2) = (&alpha * &v[0], &alpha * &v[1]);
    // T = [αv | I₀ αv]; det T = −2α²v₁v₂ = 1, and T ∘ I = I₀ ∘ T.
    let t = Jet2Map::linear(tv1.clone(), tv1.clone(), tv2.clone(), -&tv2, k);
    let tinv = Jet2Map::linear(-&tv2, -&tv1, -&tv2, tv1.clone(), k);
    let ghat = tinv.compose(&f2.compose(&t));
    let scale_log2 = jet2_max_log2(&ghat.x).max(jet2_max_log2(&ghat.y)).max(0.0);

    // Solve Ĝ ∘ Φ̂ = Φ̂ ∘ N₂ order by order. Unknowns at order d: the chart
    // coefficients φ¹_{ab}, φ²_{ab} (a + b = d) and, when d = 2j + 1, the
    // resonant twist coefficient e_j of m(h) = Λ(1 + Σ e_j h^j).
    let mut phi = Jet2Map::identity(k);
    let mut e: Vec<BigFloat> = Vec::new();
    let cap_pows: Vec<BigFloat> = (0..=(2 * k + 1)).map(|p| cap.powi(p as i32 - k as i32)).collect();
    let cap_pow = |p: i64| cap_pows[(p + k as i64) as usize].clone();
    for dord in 2..=k {
        let mut n2_coeffs = vec![cap.clone()];
        for ej in &e {
            n2_coeffs.push(&cap * ej);
        }
        let n2 = twist_map(&n2_coeffs, k);
        let lhs = ghat.compose(&phi);
        let rhs = phi.compose(&n2);
        let rx = lhs.x.sub(&rhs.x);
        let ry = lhs.y.sub(&rhs.y);
        for aa in 0..=dord {
            let bb = dord - aa;
            let diff = aa as i64 - bb as i64;
            let r1 = rx.get(aa, bb).clone();
            let r2 = ry.get(aa, bb).clone();
            if diff == 1 {
                // Resonance of the first component: absorbed into e_j.
                e.push(&r1 / &cap);
            } else {
                let den = cap_pow(diff) - &cap;
                let cur = phi.x.get(aa, bb).clone();
                phi.x.set(aa, bb, cur + &r1 / &den);
            }
            if diff != -1 {
                let den = cap_pow(diff) - cap.recip();
                let cur = phi.y.get(aa, bb).clone();
                phi.y.set(aa, bb, cur + &r2 / &den);
            }
            // The second-component resonance (diff = −1) has no unknown: it
            // must be matched by the e_j fixed from the first component, a
            // consequence of area preservation checked below.
        }
    }
    let resid_of = |phi: &Jet2Map<BigFloat>, e: &[BigFloat]| -> f64 {
        let mut n2_coeffs = vec![cap.clone()];
        for ej in e {
            n2_coeffs.push(&cap * ej);
        }
        let n2 = twist_map(&n2_coeffs, k);
        let lhs = ghat.compose(phi);
        let rhs = phi.compose(&n2);
        jet2_max_log2(&lhs.x.sub(&rhs.x)).max(jet2_max_log2(&lhs.y.sub(&rhs.y)))
    };
    let tol = -((digits as f64 - 30.0) * LOG2_10) + scale_log2;
    let resid = resid_of(&phi, &e);
    if resid > tol {
        return Err(err(format!(
            "conjugacy residual too large: 2^{resid:.1} > 2^{tol:.1}"
        )));
    }

    // The resonant normalization pins the chart only up to the commuting
    // family (s(h)ξ, t(h)η), and a generic member is not symplectic: the
    // conjugacy forces det DΦ̂ only to be an invariant function c(h) with
    // c(0) = 1. The generating function of the gluing map needs the
    // symplectic member, so reparametrize the energy: with ψ solving
    // ψ′ = 1/c(ψ), ψ(0) = 0, the correction K = (s(h)ξ, s(h)η),
    // s = √(ψ(h)/h), gives det D(Φ̂ ∘ K) ≡ 1 because
    // det DK = (ψ(h))′ = 1/c(ψ(h)), and keeps the twist form with the
    // conjugated multiplier m̃ = m ∘ ψ.
    let jord = e.len();
    let det = phi.x.dx().mul(&phi.y.dy()).sub(&phi.x.dy().mul(&phi.y.dx()));
    for (i, j, v) in det.iter() {
        if i != j && i + j < k && v.mag_log2() > tol {
            return Err(err("chart distortion is not a function of the energy"));
        }
    }
    let mut c_h = Jet1::zero(jord);
    for (j, cj) in c_h.c.iter_mut().enumerate() {
        *cj = det.get(j, j).clone();
    }
    let mut psi = Jet1::var(BigFloat::zero(), jord);
    psi.c[0] = BigFloat::zero();
    for _ in 0..jord {
        psi = c_h.compose(&psi).recip().integral();
    }
    let mut gamma = Jet1::zero(jord);
    for j in 0..jord {
        gamma.c[j] = psi.c[j + 1].clone();
    }
    let s = gamma.sqrt();
    let sp = poly_in_h(&s.c, k);
    let kmap = Jet2Map {
        x: sp.mul(&Jet2::var_x(BigFloat::zero(), k)),
        y: sp.mul(&Jet2::var_y(BigFloat::zero(), k)),
    };
    let phi = phi.compose(&kmap);
    let mut m1 = Jet1::zero(jord);
    m1.c[0] = cap.clone();
    for (j, ej) in e.iter().enumerate() {
        m1.c[j + 1] = &cap * ej;
    }
    let mt = m1.compose(&psi.truncated(jord));
    let e: Vec<BigFloat> = (1..=jord).map(|j| &mt.c[j] / &cap).collect();
    let resid = resid_of(&phi, &e);
    if resid > tol + 8.0 * k as f64 {
        return Err(err(format!(
            "symplectic renormalization broke the conjugacy: 2^{resid:.1}"
        )));
    }

    // μ(h) = λ √(1 + Σ e_j h^j): the square root fixes δ_j from e_j.
    let lambda = cap.sqrt();
    let jmax = e.len();
    let mut srel = Jet1::zero(jmax);
    srel.c[0] = BigFloat::one();
    for (j, ej) in e.iter().enumerate() {
        srel.c[j + 1] = ej.clone();
    }
    let root = srel.sqrt();
    let delta: Vec<BigFloat> = (1..=jmax).map(|j| root.c[j].clone()).collect();

    let phi1 = t.compose(&phi);
    let mut conj = Conjugacy { order: k, lambda, delta, phi1, phi2: Jet2Map::identity(k) };
    conj.phi2 = j1.compose(&conj.phi1).compose(&conj.n_map_inverse(k));
    Ok(conj)
}

/// Analytic germ of a map together with its base points: y = out0 + map(x − in0).
#[derive(Clone, Debug)]
pub struct AffineJet {
    pub in0: [BigFloat; 2],
    pub out0: [BigFloat; 2],
    /// Zero-constant jet of the displacement map.
    pub map: Jet2Map<BigFloat>,
}

impl AffineJet {
    pub fn new(in0: [BigFloat; 2], out0: [BigFloat; 2], map: Jet2Map<BigFloat>) -> Self {
        AffineJet { in0, out0, map }
    }

    /// self ∘ inner. A mismatch between inner's image base and self's domain
    /// base is absorbed by re-expanding self there; it must lie well inside
    /// the jet's accuracy radius (here always an exponentially small shadowing
    /// discrepancy).
    pub fn compose(&self, inner: &AffineJet) -> AffineJet {
        let dx = &inner.out0[0] - &self.in0[0];
        let dy = &inner.out0[1] - &self.in0[1];
        let (recentered, base) = self.map.recenter(&dx, &dy);
        AffineJet {
            in0: inner.in0.clone(),
            out0: [&self.out0[0] + &base.0, &self.out0[1] + &base.1],
            map: recentered.compose(&inner.map),
        }
    }

    pub fn inverse(&self) -> AffineJet {
        AffineJet {
            in0: self.out0.clone(),
            out0: self.in0.clone(),
            map: self.map.inverse(),
        }
    }

    pub fn eval(&self, x: &BigFloat, y: &BigFloat) -> (BigFloat, BigFloat) {
        let (u, v) = (x - &self.in0[0], y - &self.in0[1]);
        let (a, b) = self.map.eval(&u, &v);
        (&self.out0[0] + &a, &self.out0[1] + &b)
    }

    pub fn eval_with_jacobian(
        &self,
        x: &BigFloat,
        y: &BigFloat,
    ) -> ((BigFloat, BigFloat), [[BigFloat; 2]; 2]) {
        let (u, v) = (x - &self.in0[0], y - &self.in0[1]);
        let (a, b) = self.map.eval(&u, &v);
        let jac = [
            [self.map.x.dx().eval(&u, &v), self.map.x.dy().eval(&u, &v)],
            [self.map.y.dx().eval(&u, &v), self.map.y.dy().eval(&u, &v)],
        ];
        ((&self.out0[0] + &a, &self.out0[1] + &b), jac)
    }
}

/// Gluing data of the homoclinic excursion to the third scatterer.
#[derive(Clone, Debug)]
pub struct Gluing {
    /// Scale of the homoclinic tail in the chart: Φ₁⁻¹(x_k) = (λ^k ξ_∞, 0).
    pub xi_inf: BigFloat,
    /// Length of the two-periodic core orbit chord.
    pub ell0: BigFloat,
    /// L_∞ = lim (ℓ_n − 2nℓ₀), where ℓ_n is the length of the cyclicity-one
    /// orbit 3(12)^{n-1}1.
    pub l_inf: BigFloat,
    /// Generating function coefficients a_{ij} of M̃(h_A, h_B), normalized to
    /// a₀₀ = 0, a₁₀ = a₀₁ = 1, symmetric.
    pub a: Jet2<BigFloat>,
    /// Generating function M(η_A, η_B) in the unstable coordinates.
    pub m_eta: Jet2<BigFloat>,
    /// Gluing map jet, based at (0, ξ_∞) ↦ (ξ_∞, 0): input (η_A, ξ_A) as a
    /// phase point (ξ, η) = (η_A, ξ_A), output (ξ_B, η_B).
    pub g: AffineJet,
    /// Continued chart Φ₋ based at (ξ_∞, 0) with image the perpendicular
    /// collision point on the third scatterer.
    pub phi_minus: AffineJet,
    /// Largest total degree of `g`, `a`, `m_eta` that the transport
    /// determines; higher-degree coefficients are zeroed.
    pub keep_deg: usize,
}

/// Extends the chart along the homoclinic orbit and builds the gluing data.
///
/// The chart is transported from a tail point (λ^κ ξ_∞, 0) by the exact jet
/// recursion Φ^{(t−1)} = 𝓕⁻¹ ∘ Φ^{(t)} ∘ N; the only approximation is the
/// initial re-expansion of Φ₁ at the tail point. The transported chart is
/// pinched in the unstable direction — its degree-d coefficients genuinely
/// grow like λ^{−κ(d−1)} and cancel only in the final gluing map — with two
/// consequences for the error budget:
///
/// * the initial re-expansion error ~(λ^κ)^{k_c+1−d} at degree d is
///   amplified by λ^{−κ(d−1)}, so a degree-d gluing coefficient carries an
///   error ~λ^{κ(k_c+2−2d)} where k_c is the chain's jet order: degrees
///   above (k_c+2)/2 are unrecoverable at any κ and are truncated away. The
///   chain therefore runs at order k_c = k+4 and the results keep degrees
///   up to (k_c−2)/2, with κ sized so the worst kept degree reaches
///   `tail_digits` (lower degrees are progressively more accurate);
/// * roundoff suffers the same λ^{−κ(d−1)} amplification, so the whole
///   transport runs at a guard precision covering it.
///
/// May flip the sign of the charts in `conj` (recomputed at the guard
/// precision, at order k_c) to normalize ξ_∞ > 0.
pub fn extend_and_glue(table: &Table3, conj: &mut Conjugacy, tail_digits: u32) -> Result<Gluing> {
    let digits = ctx_digits();
    let k_out = conj.order;
    let kc = k_out + 4;
    let keep_deg = (kc - 2) / 2;
    let lam_log10 = conj.lambda.to_f64().log10();
    let err_exp = (kc + 2 - 2 * keep_deg) as f64;
    let km = {
        let raw = ((tail_digits as f64) / (err_exp * -lam_log10)).ceil() as usize;
        (raw | 1).max(5)
    };
    let guard = digits + ((km as f64) * ((kc - 1) as f64) * -lam_log10).ceil() as u32 + 30;
    // The chain must run with all intermediates carried at the guard
    // precision; a table built at lower precision would cap them, so its
    // coefficients are re-tagged as data. Re-normalizing the frame then puts
    // the two-bounce point at the origin to guard accuracy.
    let mut lifted = table.clone();
    lifted.lift_precision(guard);
    crate::numerics::with_digits(guard, || {
        lifted
            .normalize_frame()
            .map_err(|e| err(format!("frame normalization at guard precision: {e}")))?;
        extend_and_glue_inner(&lifted, conj, tail_digits, km, kc, keep_deg, k_out, digits)
    })
}

#[allow(clippy::too_many_arguments)]
fn extend_and_glue_inner(
    table: &Table3,
    conj: &mut Conjugacy,
    tail_digits: u32,
    km: usize,
    kc: usize,
    keep_deg: usize,
    k_out: usize,
    digits: u32,
) -> Result<Gluing> {
    let k = kc;
    *conj = compute_normal_form(table, k)?;
    let lambda = conj.lambda.clone();
    let lam_log10 = lambda.to_f64().log10();
    let k0 = 25i64;
    let kmax = km.max(k0 as usize) + 2;
    let m_shadow = homoclinic_m_for(kmax, lam_log10, ctx_digits());
    let hom = homoclinic(table, kmax, m_shadow)?;
    let hp = |kk: i64| &hom[(kk + kmax as i64) as usize];

    // ξ_∞ from the stable tail: Φ₁⁻¹(x_k) = (λ^k ξ_∞, 0) at odd k. Use a
    // moderate k so the pullback sits well inside the chart's accuracy.
    let phi1_inv = conj.phi1.inverse();
    let pull = |kk: i64, inv: &Jet2Map<BigFloat>| -> (BigFloat, BigFloat) {
        let p = hp(kk);
        assert_eq!(p.i, 1, "tail pullback point must sit on scatterer 1");
        inv.eval(&p.s, &p.r)
    };
    let (xa, ya) = pull(k0, &phi1_inv);
    let (xb, _yb) = pull(k0 + 2, &phi1_inv);
    let mut xi_inf = &xa / &lambda.powi(k0 as i32);
    let xi_chk = &xb / &lambda.powi(k0 as i32 + 2);
    let rel = ((&xi_inf - &xi_chk) / &xi_inf).mag_log2();
    if rel > -((digits as f64 - 25.0) * LOG2_10) {
        return Err(err(format!("inconsistent tail scale: 2^{rel:.1}")));
    }
    if ya.mag_log2() - xa.mag_log2() > -((tail_digits as f64 / 2.0) * LOG2_10) {
        return Err(err("tail pullback is not on the stable axis"));
    }
    if xi_inf.is_sign_negative() {
        // Conjugating by −Id commutes with N and flips the tail sign.
        let neg = Jet2Map::linear(
            -BigFloat::one(),
            BigFloat::zero(),
            BigFloat::zero(),
            -BigFloat::one(),
            k,
        );
        conj.phi1 = conj.phi1.compose(&neg);
        conj.phi2 = conj.phi2.compose(&neg);
        xi_inf = -xi_inf;
    }

    // Transport the chart from the deep tail to the excursion collision:
    // Φ^{(κ−1)} = 𝓕⁻¹ ∘ Φ^{(κ)} ∘ N, starting from Φ₁ re-expanded at
    // (λ^{km} ξ_∞, 0) and ending at Φ₋ based at (ξ_∞, 0).
    let mu_coeffs = conj.mu_coeffs();
    let start_base = &xi_inf * &lambda.powi(km as i32);
    let (start_map, start_out) = conj.phi1.recenter(&start_base, &BigFloat::zero());
    let mut cur = AffineJet::new(
        [start_base, BigFloat::zero()],
        [start_out.0, start_out.1],
        start_map,
    );
    {
        let p = hp(km as i64);
        let miss = (&cur.out0[0] - &p.s).abs() + (&cur.out0[1] - &p.r).abs();
        if miss.mag_log2() > -((tail_digits as f64 - 10.0) * LOG2_10) {
            return Err(err("chart tail does not match the homoclinic tail point"));
        }
    }
    for kk in (0..km).rev() {
        let xk = hp(kk as i64);
        let (y, fjet) = collision_jet(table, xk, k)?;
        let fwd = AffineJet::new([xk.s.clone(), xk.r.clone()], [y.s, y.r], fjet);
        // N re-expanded at (λ^kk ξ_∞, 0): its base image is exactly
        // (λ^{kk+1} ξ_∞, 0) because h vanishes on the axis.
        let base = &xi_inf * &lambda.powi(kk as i32);
        let n_aff = twist_affine_at(&mu_coeffs, &base, k);
        cur = fwd.inverse().compose(&cur).compose(&n_aff);
    }
    let phi_minus = cur;
    if phi_minus.out0[1].mag_log2() > -4.0 {
        return Err(err("excursion collision is far from perpendicular"));
    }

    // Φ₊ = I₀ ∘ Φ₋ ∘ I and the gluing map G = Φ₋⁻¹ ∘ Φ₊.
    let swap = Jet2Map::swap(k);
    let phi_plus = AffineJet::new(
        [phi_minus.in0[1].clone(), phi_minus.in0[0].clone()],
        [phi_minus.out0[0].clone(), -&phi_minus.out0[1]],
        Jet2Map {
            x: phi_minus.map.x.compose(&swap),
            y: phi_minus.map.y.compose(&swap).neg(),
        },
    );
    let g_full = phi_minus.inverse().compose(&phi_plus);
    // Degrees above keep_deg carry the amplified re-expansion error and are
    // unrecoverable at any κ; drop them together with the container order.
    let clip = |jet: &Jet2<BigFloat>| -> Jet2<BigFloat> {
        let mut t = jet.truncated(k_out);
        for p in 0..=k_out {
            for q in 0..=(k_out - p) {
                if p + q > keep_deg {
                    t.set(p, q, BigFloat::zero());
                }
            }
        }
        t
    };
    let g = AffineJet::new(
        g_full.in0.clone(),
        g_full.out0.clone(),
        Jet2Map { x: clip(&g_full.map.x), y: clip(&g_full.map.y) },
    );
    let struct_tol = -((tail_digits as f64 / 2.0) * LOG2_10);
    if ((&g.out0[0] - &xi_inf) / &xi_inf).mag_log2() > struct_tol
        || (&g.out0[1] / &xi_inf).mag_log2() > struct_tol
    {
        return Err(err("gluing base points are inconsistent with the tail scale"));
    }

    // Generating function M(η_A, η_B): the input point is (ξ, η) = (η_A, ξ_A)
    // with displacement u = (η_A, ξ_A − ξ_∞); the output is (ξ_B, η_B).
    // Solve (η_A, η_B) = Θ(u) = (u₁, G₂(u)) for u, then integrate
    // ξ_A = ∂M/∂η_A, ξ_B = ∂M/∂η_B.
    let mut eta_b_jet = g.map.y.clone();
    eta_b_jet.set(0, 0, BigFloat::zero());
    let theta = Jet2Map { x: Jet2::var_x(BigFloat::zero(), k_out), y: eta_b_jet };
    let theta_inv = theta.inverse();
    let xi_a = Jet2::var_y(xi_inf.clone(), k_out).compose(&theta_inv);
    let xi_b = Jet2::constant(g.out0[0].clone(), k_out)
        .add(&g.map.x)
        .compose(&theta_inv);
    let closed = {
        let mut curl = xi_a.dy().sub(&xi_b.dx());
        // A curl entry of degree d draws on ξ coefficients of degree d + 1,
        // so only degrees below keep_deg are meaningful after the clip.
        for p in 0..k_out {
            for q in 0..(k_out - p) {
                if p + q + 1 > keep_deg {
                    curl.set(p, q, BigFloat::zero());
                }
            }
        }
        jet2_max_log2(&curl) - xi_inf.mag_log2()
    };
    if closed > struct_tol + (k_out as f64) * 8.0 {
        return Err(err(format!("gluing map is not exact: curl 2^{closed:.1}")));
    }
    let mut m_eta = xi_a.integrate_x();
    let tail_int = xi_b.restrict_x0().integral();
    for j in 1..=k_out {
        if j <= tail_int.order() {
            let cur = m_eta.get(0, j).clone();
            m_eta.set(0, j, cur + tail_int.c[j].clone());
        }
    }
    // Symmetry of M is equivalent to the reversibility of G; enforce it after
    // checking it holds to the transport accuracy on the kept degrees.
    let mut sym = Jet2::zero(k_out);
    for (i, j, c) in m_eta.iter() {
        if i + j <= keep_deg {
            sym.set(i, j, (c + m_eta.get(j, i)) / BigFloat::from_i64(2));
        }
    }
    let asym = clip(&m_eta).sub(&sym);
    if jet2_max_log2(&asym) - xi_inf.mag_log2() > struct_tol + (k_out as f64) * 8.0 {
        return Err(err("generating function is not symmetric"));
    }
    let m_eta = sym;

    // Energy chart Ψ = (η_A ξ_A, η_B ξ_B) and M̃ = M ∘ Ψ⁻¹.
    let psi = Jet2Map {
        x: Jet2::var_x(BigFloat::zero(), k_out).mul(&xi_a),
        y: Jet2::var_y(BigFloat::zero(), k_out).mul(&xi_b),
    };
    let mut a = clip(&m_eta.compose(&psi.inverse()));
    a.set(0, 0, BigFloat::zero());
    for (i, j) in [(1usize, 0usize), (0, 1)] {
        let dev = (a.get(i, j) - BigFloat::one()).mag_log2();
        if dev > struct_tol {
            return Err(err("energy-normalized generating function is not unit-normalized"));
        }
        a.set(i, j, BigFloat::one());
    }

    // Frame constants: ℓ₀ from the core chord, L_∞ by Richardson-accelerated
    // limits of ℓ_n − 2nℓ₀ (error ratio λ² per step).
    let p1 = table.scatterer(1).point(&BigFloat::zero());
    let p2 = table.scatterer(2).point(&BigFloat::zero());
    let (dx, dy) = (&p1[0] - &p2[0], &p1[1] - &p2[1]);
    let ell0 = (&dx * &dx + &dy * &dy).sqrt();
    let cap = &lambda * &lambda;
    let n1 = ((digits as f64) * std::f64::consts::LN_10 / (-lambda.to_f64().ln()) / 4.0).ceil()
        as usize
        + 4;
    let seq: Vec<BigFloat> = (0..3)
        .map(|i| {
            let n = n1 + i;
            Ok(ell_n(table, n)? - BigFloat::from_i64(2 * n as i64) * &ell0)
        })
        .collect::<Result<_>>()?;
    let rich = |a0: &BigFloat, a1: &BigFloat, ratio: &BigFloat| -> BigFloat {
        (a1 - ratio * a0) / (BigFloat::one() - ratio)
    };
    let r10 = rich(&seq[0], &seq[1], &cap);
    let r11 = rich(&seq[1], &seq[2], &cap);
    let cap2 = &cap * &cap;
    let l_inf = rich(&r10, &r11, &cap2);
    if ((&l_inf - &r11) / &l_inf).mag_log2() > -((digits as f64 / 3.0) * LOG2_10) {
        return Err(err("core-limit extraction did not converge"));
    }

    Ok(Gluing { xi_inf, ell0, l_inf, a, m_eta, g, phi_minus, keep_deg })
}

/// N re-expanded at the axis point (b, 0) as an affine jet.
fn twist_affine_at(mu_coeffs: &[BigFloat], b: &BigFloat, k: usize) -> AffineJet {
    let y = Jet2::var_y(BigFloat::zero(), k);
    // h = (b + u) w has zero constant term, so μ(h) has constant exactly λ.
    let h = Jet2::var_x(b.clone(), k).mul(&y);
    let mut mu = Jet2::constant(mu_coeffs.last().cloned().unwrap_or_else(BigFloat::zero), k);
    for c in mu_coeffs.iter().rev().skip(1) {
        mu = mu.mul(&h).add(&Jet2::constant(c.clone(), k));
    }
    let out_x = &mu_coeffs[0] * b;
    let mut mx = mu.mul(&Jet2::var_x(b.clone(), k));
    mx.set(0, 0, BigFloat::zero());
    let my = y.mul(&mu.recip());
    AffineJet::new(
        [b.clone(), BigFloat::zero()],
        [out_x, BigFloat::zero()],
        Jet2Map { x: mx, y: my },
    )
}

/// Birkhoff energies of the cyclicity-two orbit x^{m,n}.
#[derive(Clone, Debug)]
pub struct Energies {
    pub xi_a: BigFloat,
    pub eta_a: BigFloat,
    pub xi_b: BigFloat,
    pub eta_b: BigFloat,
    pub h_a: BigFloat,
    pub h_b: BigFloat,
}

/// N^t with its Jacobian at a numeric point; exact in h since h is invariant.
#[cfg(test)]
fn twist_power(conj: &Conjugacy, t: i64, z: &(BigFloat, BigFloat)) -> ((BigFloat, BigFloat), [[BigFloat; 2]; 2]) {
    let (xi, eta) = z;
    let h = xi * eta;
    let (mu, dmu) = conj.mu_at(&h);
    let mt = mu.powi(t as i32);
    let tb = BigFloat::from_i64(t);
    let ratio = &tb * &h * &dmu / &mu;
    let one = BigFloat::one();
    let j11 = &mt * (&one + &ratio);
    let j12 = &mt * &tb * &dmu * xi * xi / &mu;
    let j21 = -(&tb * &dmu * eta * eta / (&mu * &mt));
    let j22 = (&one - &ratio) / &mt;
    ((&mt * xi, eta / &mt), [[j11, j12], [j21, j22]])
}

/// Solves for the fixed point (ξ_A, η_A) of G ∘ N^{2n} ∘ G ∘ N^{2m} and
/// returns the invariant energies h_A = ξ_A η_A, h_B = ξ_B η_B, where
/// (ξ_B, η_B) = G(N^{2m}(ξ_A, η_A)).
pub fn fixed_point_energies(
    conj: &Conjugacy,
    gluing: &Gluing,
    m: usize,
    n: usize,
) -> Result<Energies> {
    // Shooting formulation. Composing G ∘ N^{2n} ∘ G ∘ N^{2m} is hopeless:
    // N^{2t} amplifies η-errors by μ^{-2t}, which throws the intermediate
    // point out of the gluing jet's pinched domain. Instead take as unknowns
    // the two points P = N^{2m}(A) and R = N^{2n}(B), both near the gluing
    // base (0, ξ_∞), with A = G(R) and B = G(P), and impose the twist powers
    // through the invariant h: P₁P₂ = (G(R))₁(G(R))₂ and P₁ = μ(h)^{2m}(G(R))₁
    // (the η-component then matches automatically), and symmetrically for R.
    // Every G-evaluation stays at the base and every twist power only ever
    // multiplies by the contracting factor.
    let digits = ctx_digits();
    let cap = &conj.lambda * &conj.lambda;
    let mut p = (&gluing.xi_inf * &cap.powi(m as i32), gluing.xi_inf.clone());
    let mut r = (&gluing.xi_inf * &cap.powi(n as i32), gluing.xi_inf.clone());
    let tol = -((digits as f64 - 10.0) * LOG2_10);
    let mut converged = false;
    for _ in 0..80 {
        let ((ax, ay), ja) = gluing.g.eval_with_jacobian(&r.0, &r.1);
        let ((bx, by), jb) = gluing.g.eval_with_jacobian(&p.0, &p.1);
        let ha = &p.0 * &p.1;
        let hb = &r.0 * &r.1;
        let (mua, dmua) = conj.mu_at(&ha);
        let (mub, dmub) = conj.mu_at(&hb);
        let ma = mua.powi(2 * m as i32);
        let mb = mub.powi(2 * n as i32);
        // d(μ^{2t})/dh = 2t μ^{2t-1} μ'.
        let dma = &(&(&BigFloat::from_i64(2 * m as i64) * &ma) / &mua) * &dmua;
        let dmb = &(&(&BigFloat::from_i64(2 * n as i64) * &mb) / &mub) * &dmub;
        let f = [
            &ax * &ay - &ha,
            &p.0 - &(&ma * &ax),
            &bx * &by - &hb,
            &r.0 - &(&mb * &bx),
        ];
        // Unknown order (P₁, P₂, R₁, R₂).
        let jac = [
            [
                -p.1.clone(),
                -p.0.clone(),
                &ay * &ja[0][0] + &ax * &ja[1][0],
                &ay * &ja[0][1] + &ax * &ja[1][1],
            ],
            [
                BigFloat::one() - &(&ax * &dma) * &p.1,
                -(&(&ax * &dma) * &p.0),
                -(&ma * &ja[0][0]),
                -(&ma * &ja[0][1]),
            ],
            [
                &by * &jb[0][0] + &bx * &jb[1][0],
                &by * &jb[0][1] + &bx * &jb[1][1],
                -r.1.clone(),
                -r.0.clone(),
            ],
            [
                -(&mb * &jb[0][0]),
                -(&mb * &jb[0][1]),
                BigFloat::one() - &(&bx * &dmb) * &r.1,
                -(&(&bx * &dmb) * &r.0),
            ],
        ];
        let d = solve4(&jac, &f)?;
        let scaled = [
            f[0].mag_log2() - ha.mag_log2(),
            f[1].mag_log2() - p.0.mag_log2(),
            f[2].mag_log2() - hb.mag_log2(),
            f[3].mag_log2() - r.0.mag_log2(),
        ];
        p = (&p.0 - &d[0], &p.1 - &d[1]);
        r = (&r.0 - &d[2], &r.1 - &d[3]);
        if scaled.iter().all(|&s| s < tol) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(err(format!("fixed-point iteration stalled for (m, n) = ({m}, {n})")));
    }
    let ((xi_a, eta_a), _) = gluing.g.eval_with_jacobian(&r.0, &r.1);
    let ((xi_b, eta_b), _) = gluing.g.eval_with_jacobian(&p.0, &p.1);
    let h_a = &xi_a * &eta_a;
    let h_b = &xi_b * &eta_b;
    Ok(Energies { xi_a, eta_a, xi_b, eta_b, h_a, h_b })
}

/// Solves a 4×4 linear system by Gaussian elimination with partial pivoting.
fn solve4(a: &[[BigFloat; 4]; 4], b: &[BigFloat; 4]) -> Result<[BigFloat; 4]> {
    let mut m: Vec<Vec<BigFloat>> = (0..4)
        .map(|i| {
            let mut row: Vec<BigFloat> = a[i].to_vec();
            row.push(b[i].clone());
            row
        })
        .collect();
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&i, &j| m[i][col].mag_log2().total_cmp(&m[j][col].mag_log2()))
            .unwrap();
        if m[piv][col].mag_log2() == f64::NEG_INFINITY {
            return Err(err("singular Jacobian in fixed-point solve"));
        }
        m.swap(col, piv);
        for row in (col + 1)..4 {
            let factor = &m[row][col] / &m[col][col];
            for j in col..5 {
                m[row][j] = &m[row][j] - &(&factor * &m[col][j]);
            }
        }
    }
    let mut x = [BigFloat::zero(), BigFloat::zero(), BigFloat::zero(), BigFloat::zero()];
    for row in (0..4).rev() {
        let mut acc = m[row][4].clone();
        for j in (row + 1)..4 {
            acc = &acc - &(&m[row][j] * &x[j]);
        }
        x[row] = &acc / &m[row][row];
    }
    Ok(x)
}

/// ℓ_{m,n} predicted from the core data:
///   (2m+2n)ℓ₀ + 2L_∞ + 2mΣ(h_A) + 2nΣ(h_B) + h_A + h_B − 2M̃(h_A, h_B),
/// where Σ(h) = h log μ(h) − ∫₀^h log μ and M̃ uses the normalized a-table.
pub fn predicted_length(
    conj: &Conjugacy,
    gluing: &Gluing,
    m: usize,
    n: usize,
    en: &Energies,
) -> BigFloat {
    let k = conj.order;
    let dhat = crate::series::sigma_from_mu(&conj.delta, conj.delta.len());
    let sigma = |h: &BigFloat| -> BigFloat {
        let mut acc = BigFloat::zero();
        let mut hp = h.clone();
        for dj in &dhat {
            hp = &hp * h;
            acc = acc + dj * &hp;
        }
        acc
    };
    let mtilde = gluing.a.truncated(k).eval(&en.h_a, &en.h_b);
    let two = BigFloat::from_i64(2);
    BigFloat::from_i64(2 * (m + n) as i64) * &gluing.ell0
        + &two * &gluing.l_inf
        + BigFloat::from_i64(2 * m as i64) * sigma(&en.h_a)
        + BigFloat::from_i64(2 * n as i64) * sigma(&en.h_b)
        + &en.h_a
        + &en.h_b
        - &two * &mtilde
}

/// Convenience: the true orbit length for comparison with `predicted_length`.
pub fn orbit_length(table: &Table3, m: usize, n: usize) -> Result<BigFloat> {
    Ok(orbit_mn(table, m, n)?.length)
}
