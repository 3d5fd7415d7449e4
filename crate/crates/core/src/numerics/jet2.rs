//! Bivariate truncated Taylor expansions and formal plane maps.
//!
//! A `Jet2` stores all coefficients of total degree <= K densely. Maps of
//! the plane (`Jet2Map`) support composition, inversion, and Taylor
//! recentering, which is everything the conjugation pipeline needs.

use super::jet1::Jet1;
use super::scalar::Scalar;
use super::bigfloat::BigFloat;

/// Truncated bivariate Taylor series sum_{i+j<=K} c[i,j] x^i y^j.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2<T: Scalar> {
    k: usize,
    c: Vec<T>,
}

#[inline]
fn tri_index(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

#[inline]
pub fn tri_len(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

impl<T: Scalar> Jet2<T> {
    pub fn zero(k: usize) -> Self {
        Jet2 { k, c: vec![T::zero(); tri_len(k)] }
    }

    pub fn constant(v: T, k: usize) -> Self {
        let mut j = Self::zero(k);
        j.c[0] = v;
        j
    }

    /// base + x.
    pub fn var_x(base: T, k: usize) -> Self {
        let mut j = Self::constant(base, k);
        if k >= 1 {
            *j.get_mut(1, 0) = T::one();
        }
        j
    }

    /// base + y.
    pub fn var_y(base: T, k: usize) -> Self {
        let mut j = Self::constant(base, k);
        if k >= 1 {
            *j.get_mut(0, 1) = T::one();
        }
        j
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        debug_assert!(i + j <= self.k);
        &self.c[tri_index(i, j)]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut T {
        debug_assert!(i + j <= self.k);
        &mut self.c[tri_index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        *self.get_mut(i, j) = v;
    }

    /// Iterates (i, j, coefficient).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let k = self.k;
        (0..=k).flat_map(move |d| (0..=d).map(move |j| (d - j, j))).map(move |(i, j)| {
            (i, j, &self.c[tri_index(i, j)])
        })
    }

    pub fn truncated(&self, k: usize) -> Self {
        let mut out = Self::zero(k);
        for d in 0..=k.min(self.k) {
            for j in 0..=d {
                out.c[tri_index(d - j, j)] = self.c[tri_index(d - j, j)].clone();
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.k, other.k);
        Jet2 {
            k: self.k,
            c: self.c.iter().zip(&other.c).map(|(a, b)| a.clone() + b.clone()).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.k, other.k);
        Jet2 {
            k: self.k,
            c: self.c.iter().zip(&other.c).map(|(a, b)| a.clone() - b.clone()).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        Jet2 { k: self.k, c: self.c.iter().map(|a| -a.clone()).collect() }
    }

    pub fn scale(&self, s: &T) -> Self {
        Jet2 { k: self.k, c: self.c.iter().map(|a| a.clone() * s.clone()).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let k = self.k.min(other.k);
        let mut out = Self::zero(k);
        for (i1, j1, a) in self.iter() {
            if a.is_zero() || i1 + j1 > k {
                continue;
            }
            for (i2, j2, b) in other.iter() {
                if i1 + j1 + i2 + j2 > k {
                    continue;
                }
                if b.is_zero() {
                    continue;
                }
                let t = &mut out.c[tri_index(i1 + i2, j1 + j2)];
                *t = t.clone() + a.clone() * b.clone();
            }
        }
        out
    }

    /// Multiplicative inverse; nonzero constant term required.
    pub fn recip(&self) -> Self {
        assert!(!self.c[0].is_zero(), "jet reciprocal of zero constant term");
        let k = self.k;
        let c0 = self.c[0].clone();
        // 1/(c0 + u) = (1/c0) * sum (-u/c0)^n.
        let mut u = self.clone();
        u.c[0] = T::zero();
        let taylor: Vec<T> = (0..=k)
            .map(|n| {
                let mut p = T::one() / c0.clone();
                for _ in 0..n {
                    p = -(p / c0.clone());
                }
                p
            })
            .collect();
        u.apply_taylor(&taylor)
    }

    /// Applies univariate Taylor data `taylor[n]` (coefficients at the jet's
    /// constant term): result = sum_n taylor[n] * (self - const)^n.
    pub fn apply_taylor(&self, taylor: &[T]) -> Self {
        let k = self.k;
        assert!(taylor.len() > k);
        let mut u = self.clone();
        u.c[0] = T::zero();
        let mut acc = Self::constant(taylor[k].clone(), k);
        for n in (0..k).rev() {
            acc = acc.mul(&u);
            acc.c[0] = acc.c[0].clone() + taylor[n].clone();
        }
        acc
    }

    pub fn dx(&self) -> Self {
        let k = self.k;
        let mut out = Self::zero(k);
        for (i, j, a) in self.iter() {
            if i >= 1 && !a.is_zero() {
                out.c[tri_index(i - 1, j)] = a.clone() * T::from_i64(i as i64);
            }
        }
        out
    }

    pub fn dy(&self) -> Self {
        let k = self.k;
        let mut out = Self::zero(k);
        for (i, j, a) in self.iter() {
            if j >= 1 && !a.is_zero() {
                out.c[tri_index(i, j - 1)] = a.clone() * T::from_i64(j as i64);
            }
        }
        out
    }

    /// Antiderivative in x (zero constant of integration); degree-(k) terms
    /// of the integrand would exceed the truncation order and are dropped.
    pub fn integrate_x(&self) -> Self {
        let k = self.k;
        let mut out = Self::zero(k);
        for (i, j, a) in self.iter() {
            if i + j < k && !a.is_zero() {
                out.c[tri_index(i + 1, j)] = a.clone() / T::from_i64((i + 1) as i64);
            }
        }
        out
    }

    pub fn integrate_y(&self) -> Self {
        let k = self.k;
        let mut out = Self::zero(k);
        for (i, j, a) in self.iter() {
            if i + j < k && !a.is_zero() {
                out.c[tri_index(i, j + 1)] = a.clone() / T::from_i64((j + 1) as i64);
            }
        }
        out
    }

    pub fn eval(&self, x: &T, y: &T) -> T {
        let mut acc = T::zero();
        // Sum degree blocks from highest to lowest with Horner in the radial
        // direction is awkward for two variables; direct accumulation with
        // cached powers is fine at these orders.
        let mut xp = vec![T::one()];
        let mut yp = vec![T::one()];
        for _ in 1..=self.k {
            xp.push(xp.last().unwrap().clone() * x.clone());
            yp.push(yp.last().unwrap().clone() * y.clone());
        }
        for (i, j, a) in self.iter() {
            if !a.is_zero() {
                acc = acc + a.clone() * xp[i].clone() * yp[j].clone();
            }
        }
        acc
    }

    /// Composition self(gx(x,y), gy(x,y)); gx, gy must have zero constant term.
    pub fn compose(&self, g: &Jet2Map<T>) -> Self {
        let k = self.k.min(g.x.k).min(g.y.k);
        let pw = PowerTable::new(g, k);
        self.compose_with(&pw)
    }

    fn compose_with(&self, pw: &PowerTable<T>) -> Self {
        let k = self.k.min(pw.k);
        let mut out = Jet2::zero(k);
        for (i, j, a) in self.iter() {
            if a.is_zero() || i + j > k {
                continue;
            }
            let term = pw.xp[i].mul(&pw.yp[j]).scale(a);
            out = out.add(&term);
        }
        out
    }

    /// Taylor shift: returns the expansion of the same function around the
    /// point (cx, cy), i.e. coefficients of f(cx + x, cy + y).
    pub fn recenter(&self, cx: &T, cy: &T) -> Self {
        let k = self.k;
        // Binomial recombination per axis.
        let mut binom = vec![vec![T::zero(); k + 1]; k + 1];
        for n in 0..=k {
            binom[n][0] = T::one();
            for r in 1..=n {
                binom[n][r] = binom[n - 1][r - 1].clone()
                    + if r <= n - 1 { binom[n - 1][r].clone() } else { T::zero() };
            }
        }
        let mut cxp = vec![T::one()];
        let mut cyp = vec![T::one()];
        for _ in 1..=k {
            cxp.push(cxp.last().unwrap().clone() * cx.clone());
            cyp.push(cyp.last().unwrap().clone() * cy.clone());
        }
        let mut out = Self::zero(k);
        for (i, j, a) in self.iter() {
            if a.is_zero() {
                continue;
            }
            for ii in 0..=i {
                for jj in 0..=j {
                    let w = binom[i][ii].clone()
                        * binom[j][jj].clone()
                        * cxp[i - ii].clone()
                        * cyp[j - jj].clone();
                    let t = &mut out.c[tri_index(ii, jj)];
                    *t = t.clone() + a.clone() * w;
                }
            }
        }
        out
    }

    /// Restriction to the x-axis as a univariate jet in x.
    pub fn restrict_y0(&self) -> Jet1<T> {
        let mut c = vec![T::zero(); self.k + 1];
        for (idx, coef) in c.iter_mut().enumerate() {
            *coef = self.get(idx, 0).clone();
        }
        Jet1 { c }
    }

    /// Restriction to the y-axis as a univariate jet in y.
    pub fn restrict_x0(&self) -> Jet1<T> {
        let mut c = vec![T::zero(); self.k + 1];
        for (idx, coef) in c.iter_mut().enumerate() {
            *coef = self.get(0, idx).clone();
        }
        Jet1 { c }
    }
}

impl Jet2<BigFloat> {
    pub fn sqrt(&self) -> Self {
        let k = self.k;
        let c0 = self.c[0].clone();
        let s0 = c0.sqrt();
        let mut taylor = Vec::with_capacity(k + 1);
        let mut coef = s0;
        taylor.push(coef.clone());
        let half = BigFloat::one() / BigFloat::from_i64(2);
        for n in 0..k {
            let nf = BigFloat::from_i64(n as i64);
            coef = coef * (&half - &nf) / (&nf + BigFloat::one()) / &c0;
            taylor.push(coef.clone());
        }
        self.apply_taylor(&taylor)
    }
}

/// Cached powers of the two components of a map, shared across compositions.
struct PowerTable<T: Scalar> {
    k: usize,
    xp: Vec<Jet2<T>>,
    yp: Vec<Jet2<T>>,
}

impl<T: Scalar> PowerTable<T> {
    fn new(g: &Jet2Map<T>, k: usize) -> Self {
        assert!(
            g.x.c[0].is_zero() && g.y.c[0].is_zero(),
            "composition needs zero constant terms"
        );
        let gx = g.x.truncated(k);
        let gy = g.y.truncated(k);
        let mut xp = vec![Jet2::constant(T::one(), k)];
        let mut yp = vec![Jet2::constant(T::one(), k)];
        for _ in 1..=k {
            xp.push(xp.last().unwrap().mul(&gx));
            yp.push(yp.last().unwrap().mul(&gy));
        }
        PowerTable { k, xp, yp }
    }
}

/// A formal map of the plane given by a pair of jets.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2Map<T: Scalar> {
    pub x: Jet2<T>,
    pub y: Jet2<T>,
}

impl<T: Scalar> Jet2Map<T> {
    pub fn identity(k: usize) -> Self {
        Jet2Map { x: Jet2::var_x(T::zero(), k), y: Jet2::var_y(T::zero(), k) }
    }

    /// Linear map (x, y) -> (a x + b y, c x + d y).
    pub fn linear(a: T, b: T, c: T, d: T, k: usize) -> Self {
        let mut mx = Jet2::zero(k);
        let mut my = Jet2::zero(k);
        if k >= 1 {
            mx.set(1, 0, a);
            mx.set(0, 1, b);
            my.set(1, 0, c);
            my.set(0, 1, d);
        }
        Jet2Map { x: mx, y: my }
    }

    /// The swap involution (x, y) -> (y, x).
    pub fn swap(k: usize) -> Self {
        Jet2Map::linear(T::zero(), T::one(), T::one(), T::zero(), k)
    }

    pub fn order(&self) -> usize {
        self.x.order()
    }

    /// self ∘ g, both with zero constant terms.
    pub fn compose(&self, g: &Jet2Map<T>) -> Self {
        let k = self.order().min(g.order());
        let pw = PowerTable::new(g, k);
        Jet2Map { x: self.x.compose_with(&pw), y: self.y.compose_with(&pw) }
    }

    pub fn truncated(&self, k: usize) -> Self {
        Jet2Map { x: self.x.truncated(k), y: self.y.truncated(k) }
    }

    pub fn linear_part(&self) -> [T; 4] {
        [
            self.x.get(1, 0).clone(),
            self.x.get(0, 1).clone(),
            self.y.get(1, 0).clone(),
            self.y.get(0, 1).clone(),
        ]
    }

    pub fn linear_det(&self) -> T {
        let [a, b, c, d] = self.linear_part();
        a * d - b * c
    }

    /// Formal inverse; requires zero constant terms and invertible linear part.
    pub fn inverse(&self) -> Self {
        let k = self.order();
        assert!(self.x.c[0].is_zero() && self.y.c[0].is_zero(), "inverse needs zero constant terms");
        let [a, b, c, d] = self.linear_part();
        let det = a.clone() * d.clone() - b.clone() * c.clone();
        assert!(!det.is_zero(), "inverse needs invertible linear part");
        let li = Jet2Map::linear(
            d.clone() / det.clone(),
            -(b.clone() / det.clone()),
            -(c.clone() / det.clone()),
            a / det,
            k,
        );
        // Newton iteration in the jet ring: h <- h - L^{-1}(f∘h - id).
        // Each pass at least doubles the number of correct orders.
        let mut h = li.clone();
        let id = Jet2Map::identity(k);
        let mut passes = 1usize;
        while (1usize << passes) <= k {
            passes += 1;
        }
        for _ in 0..=passes {
            let fh = self.compose(&h);
            let resid = Jet2Map { x: fh.x.sub(&id.x), y: fh.y.sub(&id.y) };
            let corr = li.compose(&resid);
            h = Jet2Map { x: h.x.sub(&corr.x), y: h.y.sub(&corr.y) };
        }
        h
    }

    pub fn eval(&self, x: &T, y: &T) -> (T, T) {
        (self.x.eval(x, y), self.y.eval(x, y))
    }

    /// Expansion of the same map around a new base point: the returned map
    /// sends local coordinates at (cx, cy) to displacements from self(cx, cy).
    /// The constant terms self(cx, cy) are returned separately.
    pub fn recenter(&self, cx: &T, cy: &T) -> (Self, (T, T)) {
        let rx = self.x.recenter(cx, cy);
        let ry = self.y.recenter(cx, cy);
        let bx = rx.c[0].clone();
        let by = ry.c[0].clone();
        let mut rx = rx;
        let mut ry = ry;
        rx.c[0] = T::zero();
        ry.c[0] = T::zero();
        (Jet2Map { x: rx, y: ry }, (bx, by))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::scalar::rational;
    use num_rational::BigRational;

    type Q = BigRational;

    fn qjet(k: usize, entries: &[(usize, usize, i64, i64)]) -> Jet2<Q> {
        let mut j = Jet2::zero(k);
        for &(i, jj, n, d) in entries {
            j.set(i, jj, rational(n, d));
        }
        j
    }

    #[test]
    fn mul_matches_hand_expansion() {
        // (1 + x + 2y) * (3 + x y) = 3 + 3x + 6y + x^2 y ... truncated at 3:
        // 3 + 3x + 6y + 0 + xy*1(from 1*xy) + x^2 y -> at k=3: x y and x^2 y.
        let a = qjet(3, &[(0, 0, 1, 1), (1, 0, 1, 1), (0, 1, 2, 1)]);
        let b = qjet(3, &[(0, 0, 3, 1), (1, 1, 1, 1)]);
        let p = a.mul(&b);
        assert_eq!(*p.get(0, 0), rational(3, 1));
        assert_eq!(*p.get(1, 0), rational(3, 1));
        assert_eq!(*p.get(0, 1), rational(6, 1));
        assert_eq!(*p.get(1, 1), rational(1, 1));
        assert_eq!(*p.get(2, 1), rational(1, 1));
        assert_eq!(*p.get(1, 2), rational(2, 1));
        assert_eq!(*p.get(2, 0), rational(0, 1));
    }

    #[test]
    fn compose_against_direct_expansion() {
        // f(u,v) = u^2 + 3v, g = (x + y^2, 2x y).
        // f(g) = (x + y^2)^2 + 6xy = x^2 + 2x y^2 + y^4 + 6xy, truncated at 4.
        let f = qjet(4, &[(2, 0, 1, 1), (0, 1, 3, 1)]);
        let g = Jet2Map {
            x: qjet(4, &[(1, 0, 1, 1), (0, 2, 1, 1)]),
            y: qjet(4, &[(1, 1, 2, 1)]),
        };
        let h = f.compose(&g);
        assert_eq!(*h.get(2, 0), rational(1, 1));
        assert_eq!(*h.get(1, 2), rational(2, 1));
        assert_eq!(*h.get(0, 4), rational(1, 1));
        assert_eq!(*h.get(1, 1), rational(6, 1));
        assert_eq!(*h.get(0, 0), rational(0, 1));
        assert_eq!(*h.get(0, 2), rational(0, 1));
    }

    #[test]
    fn inverse_round_trip_exact() {
        // Nonlinear map with rational coefficients; check f∘f^{-1} = id exactly.
        let f = Jet2Map {
            x: qjet(5, &[(1, 0, 2, 1), (0, 1, 1, 3), (2, 0, 1, 1), (1, 1, -1, 2)]),
            y: qjet(5, &[(1, 0, 1, 5), (0, 1, 1, 1), (0, 2, 3, 1), (2, 1, 1, 7)]),
        };
        let g = f.inverse();
        let id = f.compose(&g);
        let expect = Jet2Map::<Q>::identity(5);
        assert_eq!(id.x, expect.x);
        assert_eq!(id.y, expect.y);
        let id2 = g.compose(&f);
        assert_eq!(id2.x, expect.x);
        assert_eq!(id2.y, expect.y);
    }

    #[test]
    fn recenter_reproduces_values() {
        // Compare f(cx + dx, cy + dy) via recentred jet against direct eval.
        let f = qjet(4, &[(0, 0, 1, 2), (1, 0, 3, 1), (1, 1, -2, 1), (3, 0, 1, 1), (0, 4, 5, 1)]);
        let (cx, cy) = (rational(1, 3), rational(-2, 5));
        let r = f.recenter(&cx, &cy);
        for (dx_n, dy_n) in [(1i64, 2i64), (-3, 1), (0, 7)] {
            let dx = rational(dx_n, 11);
            let dy = rational(dy_n, 13);
            let direct = f.eval(&(cx.clone() + dx.clone()), &(cy.clone() + dy.clone()));
            let shifted = r.eval(&dx, &dy);
            assert_eq!(direct, shifted);
        }
    }

    #[test]
    fn derivative_integral_inverse() {
        let f = qjet(5, &[(1, 0, 1, 1), (2, 2, 7, 3), (0, 3, -4, 9)]);
        let back = f.dx().integrate_x();
        // integrate_x . dx reproduces all terms with i >= 1 and degree < 5.
        assert_eq!(*back.get(1, 0), rational(1, 1));
        assert_eq!(*back.get(2, 2), rational(7, 3));
        assert_eq!(*back.get(0, 3), rational(0, 1));
        let g = f.dy().integrate_y();
        assert_eq!(*g.get(0, 3), rational(-4, 9));
        assert_eq!(*g.get(2, 2), rational(7, 3));
    }
}
