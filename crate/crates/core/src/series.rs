//! Triangular power-series algebra in the four variables (m, n, z_A, z_B) and
//! the forward model mapping normal-form and gluing coefficients (δ_j, a_{pq})
//! to the coefficients of the Birkhoff energies h_A, h_B and of the length
//! spectral data ℓ_{m,n} − (2m+2n)ℓ₀.
//!
//! A series is a finite sum Σ c^{ij}_{pq} m^i n^j z_A^p z_B^q truncated at
//! total z-degree ν, with the polynomial degrees (i, j) bounded by the
//! monomial degrees (p, q) ("triangular") or by (p−1, q−1) ("strict").
//! Coefficients are generic over the scalar type, so the whole forward model
//! runs in exact rational arithmetic as well as in big-float arithmetic.

use crate::numerics::{Jet1, Jet2, Scalar};

/// Grading flags of a triangular series. `strict_a` bounds the m-degree by
/// max(0, p−1) instead of p; `strict_b` does the same for n and q.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grading {
    pub strict_a: bool,
    pub strict_b: bool,
}

impl Grading {
    pub const PLAIN: Grading = Grading { strict_a: false, strict_b: false };
    pub const STRICT_BOTH: Grading = Grading { strict_a: true, strict_b: true };

    pub fn bound_i(&self, p: usize) -> usize {
        if self.strict_a { p.saturating_sub(1) } else { p }
    }

    pub fn bound_j(&self, q: usize) -> usize {
        if self.strict_b { q.saturating_sub(1) } else { q }
    }

    /// Grading preserved by sums: strict only if both summands are strict.
    pub fn meet(self, other: Grading) -> Grading {
        Grading { strict_a: self.strict_a && other.strict_a, strict_b: self.strict_b && other.strict_b }
    }

    fn swapped(self) -> Grading {
        Grading { strict_a: self.strict_b, strict_b: self.strict_a }
    }
}

fn negligible<T: Scalar>(x: &T, tol_log2: f64) -> bool {
    x.is_zero() || x.mag_log2() <= tol_log2
}

/// Truncated series Σ c^{ij}_{pq} m^i n^j z_A^p z_B^q over p+q ≤ ν.
/// Storage is a dense box 0 ≤ i ≤ p, 0 ≤ j ≤ q per (p, q); the grading flag
/// promises which of those entries can be nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct Series4<T: Scalar> {
    nu: usize,
    grading: Grading,
    offsets: Vec<usize>,
    c: Vec<T>,
}

impl<T: Scalar> Series4<T> {
    pub fn zero(nu: usize, grading: Grading) -> Self {
        let mut offsets = vec![usize::MAX; (nu + 1) * (nu + 1)];
        let mut len = 0;
        for p in 0..=nu {
            for q in 0..=(nu - p) {
                offsets[p * (nu + 1) + q] = len;
                len += (p + 1) * (q + 1);
            }
        }
        Series4 { nu, grading, offsets, c: vec![T::zero(); len] }
    }

    pub fn constant(v: T, nu: usize, grading: Grading) -> Self {
        let mut s = Self::zero(nu, grading);
        s.c[0] = v;
        s
    }

    /// The variable z_A. It is strict in both gradings: its only coefficient
    /// sits at (p, q, i, j) = (1, 0, 0, 0).
    pub fn var_za(nu: usize) -> Self {
        let mut s = Self::zero(nu, Grading::STRICT_BOTH);
        let idx = s.index(1, 0, 0, 0);
        s.c[idx] = T::one();
        s
    }

    pub fn var_zb(nu: usize) -> Self {
        Self::var_za(nu).swap()
    }

    pub fn order(&self) -> usize {
        self.nu
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    fn index(&self, p: usize, q: usize, i: usize, j: usize) -> usize {
        assert!(p + q <= self.nu && i <= p && j <= q, "series index out of range");
        self.offsets[p * (self.nu + 1) + q] + i * (q + 1) + j
    }

    pub fn coef(&self, p: usize, q: usize, i: usize, j: usize) -> &T {
        &self.c[self.index(p, q, i, j)]
    }

    pub fn set(&mut self, p: usize, q: usize, i: usize, j: usize, v: T) {
        assert!(
            i <= self.grading.bound_i(p) && j <= self.grading.bound_j(q),
            "write violates grading bounds"
        );
        let idx = self.index(p, q, i, j);
        self.c[idx] = v;
    }

    /// Iterates (p, q, i, j, coefficient) over all stored entries.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, usize, &T)> {
        let nu = self.nu;
        (0..=nu)
            .flat_map(move |p| (0..=(nu - p)).map(move |q| (p, q)))
            .flat_map(move |(p, q)| {
                (0..=p).flat_map(move |i| (0..=q).map(move |j| (p, q, i, j)))
            })
            .map(move |(p, q, i, j)| (p, q, i, j, &self.c[self.index(p, q, i, j)]))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.nu, other.nu);
        let mut out = self.clone();
        for (a, b) in out.c.iter_mut().zip(&other.c) {
            *a = a.clone() + b.clone();
        }
        out.grading = self.grading.meet(other.grading);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for a in out.c.iter_mut() {
            *a = -a.clone();
        }
        out
    }

    pub fn scale(&self, s: &T) -> Self {
        let mut out = self.clone();
        for a in out.c.iter_mut() {
            *a = a.clone() * s.clone();
        }
        out
    }

    pub fn add_const(&self, v: T) -> Self {
        let mut out = self.clone();
        out.c[0] = out.c[0].clone() + v;
        out
    }

    /// Truncated product. Strictness survives multiplication only when both
    /// factors carry it, so the result grading is the meet of the inputs.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.nu, other.nu);
        let mut out = Self::zero(self.nu, self.grading.meet(other.grading));
        for (p1, q1, i1, j1, a) in self.iter() {
            if a.is_zero() {
                continue;
            }
            for (p2, q2, i2, j2, b) in other.iter() {
                if p1 + p2 + q1 + q2 > self.nu || b.is_zero() {
                    continue;
                }
                let idx = out.index(p1 + p2, q1 + q2, i1 + i2, j1 + j2);
                out.c[idx] = out.c[idx].clone() + a.clone() * b.clone();
            }
        }
        out
    }

    /// Multiplication by z_A (shift p by one, dropping degree ν terms). The
    /// result is strict in z_A: its (p, q) coefficients came from (p−1, q)
    /// with m-degree at most p−1.
    pub fn mul_za(&self) -> Self {
        let mut out = Self::zero(
            self.nu,
            Grading { strict_a: true, strict_b: self.grading.strict_b },
        );
        for (p, q, i, j, a) in self.iter() {
            if p + 1 + q <= self.nu && !a.is_zero() {
                let idx = out.index(p + 1, q, i, j);
                out.c[idx] = a.clone();
            }
        }
        out
    }

    pub fn mul_zb(&self) -> Self {
        self.swap().mul_za().swap()
    }

    /// Division of a strict-in-z_A multiple of z_A by z_A; the quotient is
    /// plainly triangular in z_A and trusted one order lower.
    pub fn div_za(&self, tol_log2: f64) -> Self {
        assert!(self.grading.strict_a, "div_za requires a strict-in-z_A series");
        for (p, _q, _i, _j, a) in self.iter() {
            if p == 0 {
                assert!(negligible(a, tol_log2), "div_za input is not a multiple of z_A");
            }
        }
        let mut out = Self::zero(
            self.nu - 1,
            Grading { strict_a: false, strict_b: self.grading.strict_b },
        );
        for (p, q, i, j, a) in self.iter() {
            if p >= 1 && p - 1 + q <= out.nu && !a.is_zero() {
                let idx = out.index(p - 1, q, i, j);
                out.c[idx] = a.clone();
            }
        }
        out
    }

    /// Composition f(S) of a univariate analytic germ f (Taylor coefficients
    /// `f[k]`) with a series S having zero constant term.
    pub fn compose_analytic(f: &[T], s: &Self) -> Self {
        assert!(s.c[0].is_zero(), "composition needs a zero constant term");
        let mut out = Series4::constant(
            f.last().cloned().unwrap_or_else(T::zero),
            s.nu,
            s.grading,
        );
        for k in (0..f.len().saturating_sub(1)).rev() {
            out = out.mul(s).add_const(f[k].clone());
        }
        // The constant term of f does not disturb the strict grading (the
        // (0,0) block always admits i = j = 0), so keep S's grading.
        out.grading = s.grading;
        out
    }

    /// Multiplication by a polynomial in m with coefficients `poly[k]` on m^k.
    pub fn mul_m_poly(&self, poly: &[T]) -> Self {
        let mut out = Self::zero(self.nu, Grading { strict_a: false, strict_b: self.grading.strict_b });
        for (p, q, i, j, a) in self.iter() {
            if a.is_zero() {
                continue;
            }
            for (k, w) in poly.iter().enumerate() {
                if w.is_zero() {
                    continue;
                }
                assert!(i + k <= p, "m-degree overflow: series is not triangular enough");
                let idx = out.index(p, q, i + k, j);
                out.c[idx] = out.c[idx].clone() + a.clone() * w.clone();
            }
        }
        out
    }

    /// The involution (m, z_A) ↔ (n, z_B).
    pub fn swap(&self) -> Self {
        let mut out = Self::zero(self.nu, self.grading.swapped());
        for (p, q, i, j, a) in self.iter() {
            if !a.is_zero() {
                let idx = out.index(q, p, j, i);
                out.c[idx] = a.clone();
            }
        }
        out
    }

    /// Re-tags the series with a (tighter) grading after checking that every
    /// out-of-bounds entry is negligible; the offending entries are dropped.
    pub fn cast(&self, grading: Grading, tol_log2: f64) -> Self {
        let mut out = Self::zero(self.nu, grading);
        for (p, q, i, j, a) in self.iter() {
            if i <= grading.bound_i(p) && j <= grading.bound_j(q) {
                let idx = out.index(p, q, i, j);
                out.c[idx] = a.clone();
            } else {
                assert!(
                    negligible(a, tol_log2),
                    "grading violation at (p,q,i,j)=({p},{q},{i},{j})"
                );
            }
        }
        out
    }

    /// Checks that all entries outside the stored grading bounds vanish.
    pub fn grading_ok(&self, tol_log2: f64) -> bool {
        self.iter().all(|(p, q, i, j, a)| {
            (i <= self.grading.bound_i(p) && j <= self.grading.bound_j(q)) || negligible(a, tol_log2)
        })
    }

    pub fn max_abs_diff_log2(&self, other: &Self) -> f64 {
        assert_eq!(self.nu, other.nu);
        self.c
            .iter()
            .zip(&other.c)
            .map(|(a, b)| {
                let d = a.clone() - b.clone();
                if d.is_zero() { f64::NEG_INFINITY } else { d.mag_log2() }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn eval(&self, m: &T, n: &T, za: &T, zb: &T) -> T {
        let mp = powers(m, self.nu);
        let np = powers(n, self.nu);
        let zap = powers(za, self.nu);
        let zbp = powers(zb, self.nu);
        let mut acc = T::zero();
        for (p, q, i, j, a) in self.iter() {
            if !a.is_zero() {
                acc = acc
                    + a.clone() * mp[i].clone() * np[j].clone() * zap[p].clone() * zbp[q].clone();
            }
        }
        acc
    }
}

fn powers<T: Scalar>(x: &T, k: usize) -> Vec<T> {
    let mut v = Vec::with_capacity(k + 1);
    v.push(T::one());
    for _ in 0..k {
        v.push(v.last().unwrap().clone() * x.clone());
    }
    v
}

fn factorial<T: Scalar>(k: usize) -> T {
    let mut f = T::one();
    for i in 2..=k {
        f = f * T::from_i64(i as i64);
    }
    f
}

/// Taylor coefficients of t ↦ e^{ct} up to order k.
fn exp_taylor<T: Scalar>(c: &T, k: usize) -> Vec<T> {
    let mut v = Vec::with_capacity(k + 1);
    v.push(T::one());
    for i in 1..=k {
        let prev = v[i - 1].clone();
        v.push(prev * c.clone() / T::from_i64(i as i64));
    }
    v
}

/// The binomial coefficient C(2m, k) as a polynomial in m: coefficients of
/// Π_{t=0}^{k−1} (2m − t) / k! on m^0, …, m^k. Its constant term vanishes for
/// k ≥ 1, which is what keeps the binomial factor triangular.
fn binom_2m_poly<T: Scalar>(k: usize) -> Vec<T> {
    // Integer coefficients of Π (2m − t).
    let mut poly: Vec<i64> = vec![1];
    for t in 0..k {
        let mut next = vec![0i64; poly.len() + 1];
        for (d, &cd) in poly.iter().enumerate() {
            next[d + 1] += 2 * cd;
            next[d] -= (t as i64) * cd;
        }
        poly = next;
    }
    let kfac: T = factorial(k);
    poly.into_iter().map(|cd| T::from_i64(cd) / kfac.clone()).collect()
}

/// Σ table_{ij} A^i B^j for a coefficient table with zero (0,0) entry allowed.
fn eval_bivariate<T: Scalar>(table: &Jet2<T>, sa: &Series4<T>, sb: &Series4<T>) -> Series4<T> {
    let nu = sa.order();
    let mut pa = vec![Series4::constant(T::one(), nu, Grading::STRICT_BOTH)];
    let mut pb = pa.clone();
    for k in 1..=nu {
        pa.push(pa[k - 1].mul(sa));
        pb.push(pb[k - 1].mul(sb));
    }
    let mut acc = Series4::zero(nu, Grading::STRICT_BOTH);
    for (i, j, t) in table.iter() {
        if i + j <= nu && !t.is_zero() {
            acc = acc.add(&pa[i].mul(&pb[j]).scale(t));
        }
    }
    acc
}

/// Coefficients δ̂_j of Σ(h) = h log μ(h) − ∫₀^h log μ(τ) dτ = Σ δ̂_j h^{j+1},
/// computed from μ(h) = λ(1 + Σ δ_j h^j). The λ factor cancels, so the result
/// is an exact rational function of the δ_j alone. Writing log μ(h) = log λ +
/// Σ L_j h^j gives δ̂_j = L_j − L_j/(j+1) = j L_j/(j+1).
pub fn sigma_from_mu<T: Scalar>(delta: &[T], k: usize) -> Vec<T> {
    let mut d = Jet1::zero(k + 1);
    for (j, dj) in delta.iter().enumerate() {
        if j + 1 <= k + 1 {
            d.c[j + 1] = dj.clone();
        }
    }
    // log(1 + d) via L' = d'/(1 + d), L(0) = 0.
    let one_plus = d.add(&Jet1::constant(T::one(), k + 1));
    let l = d.derivative().mul(&one_plus.truncated(k).recip()).integral();
    (1..=k)
        .map(|j| l.c[j].clone() * T::from_i64(j as i64) / T::from_i64((j + 1) as i64))
        .collect()
}

/// Coefficients u_{ij} of u(h_A, h_B) = v(h_A, h_B)²/ξ_∞² − 1 from the
/// coefficients a_{ij} of M̃(h_A, h_B) = Σ a_{ij} h_A^i h_B^j.
///
/// Derivation: with η_A = h_A/v and η_B = h_B/ṽ (ṽ the argument swap of v),
/// the generating relations ξ_A = ∂M/∂η_A, ξ_B = ∂M/∂η_B give
///   dM̃ = v d(h_A/v) + ṽ d(h_B/ṽ) = dh_A + dh_B − h_A d log v − h_B d log ṽ,
/// so Q := h_A + h_B − M̃ satisfies dQ = h_A d g + h_B d g̃ for
/// g := log(v/ξ_∞). Matching coefficients of ∂Q/∂h_A at (p, q) yields
///   p g_{pq} + (p+1) g_{q−1,p+1} = [∂Q/∂h_A]_{pq} = −(p+1) a_{p+1,q},
/// a linear system that pairs (p, q) with (q−1, p+1) and is uniquely solvable
/// (the 2×2 determinant is −(p+q)). Finally u = e^{2g} − 1. The result does
/// not depend on ξ_∞; the parameter is kept for interface uniformity.
pub fn u_from_gluing<T: Scalar>(a: &Jet2<T>, _xi_inf: &T, nu: usize) -> Jet2<T> {
    assert!(a.order() >= nu, "a-table order too small");
    assert!(a.get(0, 0).is_zero(), "M̃ must vanish at the origin");
    let one = T::one();
    let a10 = a.get(1, 0).clone() - one.clone();
    let a01 = a.get(0, 1).clone() - one;
    assert!(a10.is_zero() && a01.is_zero(), "normalization a₁₀ = a₀₁ = 1 required");

    let gord = nu.saturating_sub(1);
    // c_{pq} = [∂Q/∂h_A]_{pq} = −(p+1) a_{p+1,q}.
    let c = |p: usize, q: usize| -> T {
        -(T::from_i64((p + 1) as i64) * a.get(p + 1, q).clone())
    };
    let mut g = Jet2::zero(gord);
    for dtot in 1..=gord {
        for p in (0..=dtot).rev() {
            let q = dtot - p;
            if q == 0 {
                // No partner term: p g_{p,0} = c_{p,0}.
                g.set(p, 0, c(p, 0) / T::from_i64(p as i64));
            } else if q == p + 1 {
                // Self-paired: (2p+1) g_{p,p+1} = c_{p,p+1}.
                g.set(p, q, c(p, q) / T::from_i64((2 * p + 1) as i64));
            } else if p >= q {
                // Joint solve for the pair {(p,q), (q−1,p+1)}:
                //   p g_{pq} + (p+1) g_{q−1,p+1} = c_{pq}
                //   q g_{pq} + (q−1) g_{q−1,p+1} = c_{q−1,p+1}
                let det = T::from_i64((p * (q - 1)) as i64) - T::from_i64((q * (p + 1)) as i64);
                let c1 = c(p, q);
                let c2 = c(q - 1, p + 1);
                let g1 = (c1.clone() * T::from_i64((q - 1) as i64)
                    - c2.clone() * T::from_i64((p + 1) as i64))
                    / det.clone();
                let g2 = (c2 * T::from_i64(p as i64) - c1 * T::from_i64(q as i64)) / det;
                g.set(p, q, g1);
                g.set(q - 1, p + 1, g2);
            }
        }
    }
    let two = T::from_i64(2);
    let mut u = g.apply_taylor(&exp_taylor(&two, gord));
    let u00 = u.get(0, 0).clone() - T::one();
    u.set(0, 0, u00);
    u
}

/// Solves the implicit equations
///   h_A = (1 + u(h_A, h_B)) (1 + δ(h_A))^{2m} z_A,
///   h_B = (1 + u(h_B, h_A)) (1 + δ(h_B))^{2n} z_B
/// for the strictly triangular series h_A, h_B by fixed-point sweeps; each
/// sweep raises the trusted total degree by one, so ν sweeps converge and an
/// extra sweep is run to assert stabilization.
pub fn solve_energy_series<T: Scalar>(
    delta: &[T],
    u: &Jet2<T>,
    nu: usize,
    tol_log2: f64,
) -> (Series4<T>, Series4<T>) {
    let mut ha = Series4::var_za(nu);
    let mut hb = Series4::var_zb(nu);
    let mut dcoef = vec![T::zero()];
    dcoef.extend(delta.iter().cloned());
    let mut last_change = f64::INFINITY;
    for sweep in 0..=nu {
        // 1 + u(h_A, h_B): strictly triangular (constant term handled apart).
        let ufac = eval_bivariate(u, &ha, &hb).add_const(T::one());
        // (1 + δ(h_A))^{2m} = Σ_k C(2m, k) δ(h_A)^k; δ(h_A)^k is a multiple
        // of z_A^k, so the sum is finite and stays triangular.
        let x = Series4::compose_analytic(&dcoef, &ha);
        let mut dfac = Series4::constant(T::one(), nu, Grading::PLAIN);
        let mut xpow = Series4::constant(T::one(), nu, Grading::STRICT_BOTH);
        for k in 1..=nu {
            xpow = xpow.mul(&x);
            dfac = dfac.add(&xpow.mul_m_poly(&binom_2m_poly::<T>(k)));
        }
        let ha_new = ufac.mul(&dfac).mul_za().cast(Grading::STRICT_BOTH, tol_log2);
        let hb_new = ha_new.swap();
        last_change = ha_new.max_abs_diff_log2(&ha);
        if sweep == nu {
            assert!(
                last_change <= tol_log2,
                "energy series failed to stabilize after {nu} sweeps (change 2^{last_change})"
            );
        }
        ha = ha_new;
        hb = hb_new;
    }
    let _ = last_change;
    (ha, hb)
}

/// The strictly triangular series of ℓ_{m,n} − (2m+2n)ℓ₀:
///   2L_∞ + 2m Σ(h_A) + 2n Σ(h_B) + h_A + h_B − 2 M̃(h_A, h_B),
/// expressed in (m, n, z_A, z_B). Its constant coefficient is 2L_∞ and its
/// z_A and z_B coefficients are −1.
pub fn length_series<T: Scalar>(
    delta: &[T],
    a: &Jet2<T>,
    xi_inf: &T,
    l_inf: &T,
    nu: usize,
    tol_log2: f64,
) -> Series4<T> {
    let u = u_from_gluing(a, xi_inf, nu);
    let (ha, hb) = solve_energy_series(delta, &u, nu, tol_log2);
    let dhat = sigma_from_mu(delta, nu.saturating_sub(1));

    // Σ(h_A) = Σ_j δ̂_j h_A^{j+1}, then weighted by 2m.
    let mut sig_a = Series4::zero(nu, Grading::STRICT_BOTH);
    let mut hpow = ha.clone();
    for dj in dhat.iter() {
        hpow = hpow.mul(&ha);
        sig_a = sig_a.add(&hpow.scale(dj));
    }
    let two_m = [T::zero(), T::from_i64(2)];
    let m_sig_a = sig_a.mul_m_poly(&two_m);
    let n_sig_b = m_sig_a.swap();

    let mtilde = eval_bivariate(a, &ha, &hb);
    let two = T::from_i64(2);
    let ell = ha
        .add(&hb)
        .sub(&mtilde.scale(&two))
        .add(&m_sig_a)
        .add(&n_sig_b)
        .add_const(two * l_inf.clone());
    ell.cast(Grading::STRICT_BOTH, tol_log2)
}
