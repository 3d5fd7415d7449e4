//! Univariate truncated Taylor series (jets) over a generic scalar.

use super::bigfloat::BigFloat;
use super::scalar::Scalar;

/// Truncated power series c[0] + c[1] t + ... + c[k] t^k.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet1<T: Scalar> {
    pub c: Vec<T>,
}

impl<T: Scalar> Jet1<T> {
    pub fn zero(order: usize) -> Self {
        Jet1 { c: vec![T::zero(); order + 1] }
    }

    pub fn constant(v: T, order: usize) -> Self {
        let mut j = Self::zero(order);
        j.c[0] = v;
        j
    }

    /// The variable itself: v + t.
    pub fn var(v: T, order: usize) -> Self {
        let mut j = Self::constant(v, order);
        if order >= 1 {
            j.c[1] = T::one();
        }
        j
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn truncated(&self, order: usize) -> Self {
        let mut c = self.c.clone();
        c.truncate(order + 1);
        c.resize(order + 1, T::zero());
        Jet1 { c }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.order(), other.order());
        Jet1 {
            c: self
                .c
                .iter()
                .zip(&other.c)
                .map(|(a, b)| a.clone() + b.clone())
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.order(), other.order());
        Jet1 {
            c: self
                .c
                .iter()
                .zip(&other.c)
                .map(|(a, b)| a.clone() - b.clone())
                .collect(),
        }
    }

    pub fn neg(&self) -> Self {
        Jet1 { c: self.c.iter().map(|a| -a.clone()).collect() }
    }

    pub fn scale(&self, s: &T) -> Self {
        Jet1 { c: self.c.iter().map(|a| a.clone() * s.clone()).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let k = self.order().min(other.order());
        let mut c = vec![T::zero(); k + 1];
        for (i, a) in self.c.iter().enumerate().take(k + 1) {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.c.iter().enumerate().take(k + 1 - i) {
                if b.is_zero() {
                    continue;
                }
                c[i + j] = c[i + j].clone() + a.clone() * b.clone();
            }
        }
        Jet1 { c }
    }

    /// Multiplicative inverse; the constant term must be nonzero.
    pub fn recip(&self) -> Self {
        let k = self.order();
        assert!(!self.c[0].is_zero(), "jet reciprocal of zero constant term");
        let inv0 = T::one() / self.c[0].clone();
        let mut r = vec![T::zero(); k + 1];
        r[0] = inv0.clone();
        for n in 1..=k {
            let mut s = T::zero();
            for i in 1..=n {
                s = s + self.c[i].clone() * r[n - i].clone();
            }
            r[n] = -(inv0.clone() * s);
        }
        Jet1 { c: r }
    }

    pub fn derivative(&self) -> Self {
        let k = self.order();
        let mut c = vec![T::zero(); k + 1];
        for i in 1..=k {
            c[i - 1] = self.c[i].clone() * T::from_i64(i as i64);
        }
        Jet1 { c }
    }

    /// Antiderivative with zero constant term, truncated at the same order.
    pub fn integral(&self) -> Self {
        let k = self.order();
        let mut c = vec![T::zero(); k + 1];
        for i in 0..k {
            c[i + 1] = self.c[i].clone() / T::from_i64((i + 1) as i64);
        }
        Jet1 { c }
    }

    /// Composition self(other(t)); `other` must have zero constant term.
    pub fn compose(&self, other: &Self) -> Self {
        assert!(other.c[0].is_zero(), "jet composition needs zero constant term");
        let k = self.order().min(other.order());
        // Horner evaluation in the jet ring.
        let mut acc = Jet1::constant(self.c[k].clone(), k);
        for i in (0..k).rev() {
            acc = acc.mul(&other.truncated(k));
            acc.c[0] = acc.c[0].clone() + self.c[i].clone();
        }
        acc
    }

    /// Compositional inverse of a jet with zero constant term and a unit
    /// linear coefficient structure (nonzero linear term).
    pub fn inverse(&self) -> Self {
        let k = self.order();
        assert!(self.c[0].is_zero(), "compositional inverse needs zero constant term");
        assert!(!self.c[1].is_zero(), "compositional inverse needs nonzero linear term");
        let mut g = Jet1::zero(k);
        if k >= 1 {
            g.c[1] = T::one() / self.c[1].clone();
        }
        // Newton-style refinement order by order: g <- g - (f∘g - id)/f'(g).
        for _ in 0..k {
            let fg = self.compose(&g);
            let mut resid = fg;
            if k >= 1 {
                resid.c[1] = resid.c[1].clone() - T::one();
            }
            let fpg = self.derivative().compose(&g);
            g = g.sub(&resid.mul(&fpg.recip()));
        }
        g
    }

    pub fn eval(&self, t: &T) -> T {
        let mut acc = T::zero();
        for c in self.c.iter().rev() {
            acc = acc * t.clone() + c.clone();
        }
        acc
    }

    /// Applies an analytic function given its Taylor coefficients at c[0]:
    /// result = sum_n taylor[n] * (self - c[0])^n.
    pub fn apply_taylor(&self, taylor: &[T]) -> Self {
        let k = self.order();
        assert!(taylor.len() > k);
        let mut shifted = self.clone();
        shifted.c[0] = T::zero();
        let f = Jet1 { c: taylor[..=k].to_vec() };
        f.compose(&shifted)
    }
}

impl Jet1<BigFloat> {
    /// Square root of a jet with positive constant term.
    pub fn sqrt(&self) -> Self {
        let k = self.order();
        let c0 = self.c[0].clone();
        let s0 = c0.sqrt();
        // Taylor of sqrt at c0: s0 * binom(1/2, n) / c0^n.
        let mut taylor = Vec::with_capacity(k + 1);
        let mut coef = s0.clone();
        taylor.push(coef.clone());
        let half = BigFloat::one() / BigFloat::from_i64(2);
        for n in 0..k {
            let nf = BigFloat::from_i64(n as i64);
            coef = coef * (&half - &nf) / (&nf + BigFloat::one()) / &c0;
            taylor.push(coef.clone());
        }
        self.apply_taylor(&taylor)
    }

    /// Sine and cosine of the jet.
    pub fn sin_cos(&self) -> (Self, Self) {
        let k = self.order();
        let (s0, c0) = (self.c[0].sin(), self.c[0].cos());
        // Taylor coefficients cycle through (s, c, -s, -c)/n!.
        let mut ts = Vec::with_capacity(k + 1);
        let mut tc = Vec::with_capacity(k + 1);
        let mut fact = BigFloat::one();
        for n in 0..=k {
            if n > 0 {
                fact = fact * BigFloat::from_i64(n as i64);
            }
            let (ds, dc) = match n % 4 {
                0 => (s0.clone(), c0.clone()),
                1 => (c0.clone(), -s0.clone()),
                2 => (-s0.clone(), -c0.clone()),
                _ => (-c0.clone(), s0.clone()),
            };
            ts.push(ds / &fact);
            tc.push(dc / &fact);
        }
        (self.apply_taylor(&ts), self.apply_taylor(&tc))
    }

    /// Natural log of a jet with positive constant term.
    pub fn ln(&self) -> Self {
        // log(c0 (1+u)) = log c0 + integral of u'/(1+u).
        let k = self.order();
        let c0 = self.c[0].clone();
        let mut u = self.scale(&c0.recip());
        u.c[0] = BigFloat::zero();
        let mut taylor = Vec::with_capacity(k + 1);
        taylor.push(BigFloat::zero());
        for n in 1..=k {
            let sign = if n % 2 == 1 { 1 } else { -1 };
            taylor.push(BigFloat::from_i64(sign) / BigFloat::from_i64(n as i64));
        }
        let mut r = u.apply_taylor(&taylor);
        r.c[0] = c0.ln();
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::bigfloat::with_digits;
    use num_rational::BigRational;
    use crate::numerics::scalar::rational;

    fn close(a: &BigFloat, b: &BigFloat, tol: &str) -> bool {
        (a.clone() - b.clone()).abs() < BigFloat::parse_digits(tol, 20).unwrap()
    }

    #[test]
    fn geometric_series_recip() {
        // 1/(1 - t) = 1 + t + t^2 + ... exactly in rationals.
        let mut f: Jet1<BigRational> = Jet1::constant(rational(1, 1), 6);
        f.c[1] = rational(-1, 1);
        let r = f.recip();
        for i in 0..=6 {
            assert_eq!(r.c[i], rational(1, 1));
        }
    }

    #[test]
    fn compose_matches_expansion() {
        // f(t) = 1/(1+t), g(t) = t + t^2; f(g(t)) = 1 - t - t^2 + 3t^3 + ...
        // Oracle: expand (t + t^2)^n with alternating signs by hand.
        let mut f: Jet1<BigRational> = Jet1::zero(4);
        for n in 0..=4 {
            f.c[n] = rational(if n % 2 == 0 { 1 } else { -1 }, 1);
        }
        let mut g: Jet1<BigRational> = Jet1::zero(4);
        g.c[1] = rational(1, 1);
        g.c[2] = rational(1, 1);
        let h = f.compose(&g);
        let expect = [1i64, -1, 0, 1, -1];
        // 1 - (t+t^2) + (t+t^2)^2 - (t+t^2)^3 + (t+t^2)^4
        //   = 1 - t - t^2 + t^2 + 2t^3 + t^4 - t^3 - 3t^4 + t^4 + O(t^5)
        //   = 1 - t + 0 t^2 + t^3 - t^4.
        for (i, e) in expect.iter().enumerate() {
            assert_eq!(h.c[i], rational(*e, 1), "coefficient {}", i);
        }
    }

    #[test]
    fn inverse_lagrange_oracle() {
        // f(t) = t e^t truncated; inverse is the Lambert-type series
        // g(t) = sum_{n>=1} (-n)^(n-1)/n! t^n (Lagrange inversion).
        with_digits(50, || {
            let k = 6;
            let mut f: Jet1<BigFloat> = Jet1::zero(k);
            let mut fact = BigFloat::one();
            for n in 1..=k {
                fact = fact * BigFloat::from_i64((n - 1).max(1) as i64);
                f.c[n] = BigFloat::one() / fact.clone();
            }
            // f.c[n] = 1/(n-1)! so f = t e^t.
            let g = f.inverse();
            let mut nfact = BigFloat::one();
            for n in 1..=k {
                nfact = nfact * BigFloat::from_i64(n as i64);
                let pw = BigFloat::from_i64(-(n as i64)).powi((n - 1) as i32);
                let expect = pw / nfact.clone();
                assert!(close(&g.c[n], &expect, "1e-40"), "order {}", n);
            }
            // Round trip.
            let id = f.compose(&g);
            assert!(close(&id.c[1], &BigFloat::one(), "1e-40"));
            for n in 2..=k {
                assert!(close(&id.c[n], &BigFloat::zero(), "1e-40"));
            }
        });
    }

    #[test]
    fn sqrt_and_ln_consistency() {
        with_digits(60, || {
            let x = Jet1::var(BigFloat::from_i64(3), 8);
            let s = x.sqrt();
            // s*s == x.
            let back = s.mul(&s);
            for i in 0..=8 {
                assert!(close(&back.c[i], &x.c[i], "1e-50"), "order {}", i);
            }
            // ln(x) derivative is 1/x.
            let l = x.ln().derivative();
            let r = x.recip();
            for i in 0..8 {
                assert!(close(&l.c[i], &r.c[i], "1e-50"), "order {}", i);
            }
        });
    }

    #[test]
    fn sin_cos_pythagoras() {
        with_digits(60, || {
            let x = Jet1::var(BigFloat::parse("0.3").unwrap(), 7);
            let (s, c) = x.sin_cos();
            let p = s.mul(&s).add(&c.mul(&c));
            assert!(close(&p.c[0], &BigFloat::one(), "1e-50"));
            for i in 1..=7 {
                assert!(close(&p.c[i], &BigFloat::zero(), "1e-50"));
            }
        });
    }
}
