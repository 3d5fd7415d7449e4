//! Trivariate truncated Taylor expansions and implicit-function solving.
//!
//! `Jet3` represents F(x, y, z) up to total degree K. `solve_implicit`
//! recovers the jet of z(x, y) with z(0,0) = 0 from F(x, y, z(x, y)) = 0
//! when F(0,0,0) = 0 and dF/dz(0,0,0) is invertible.

use super::jet2::{Jet2, Jet2Map};
use super::scalar::Scalar;

/// Truncated trivariate Taylor series sum_{i+j+l<=K} c[i,j,l] x^i y^j z^l.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet3<T: Scalar> {
    k: usize,
    // Indexed by z-degree l: slice[l] is a Jet2 of order k - l holding the
    // coefficient functions of z^l.
    slices: Vec<Jet2<T>>,
}

impl<T: Scalar> Jet3<T> {
    pub fn zero(k: usize) -> Self {
        Jet3 { k, slices: (0..=k).map(|l| Jet2::zero(k - l)).collect() }
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> &T {
        self.slices[l].get(i, j)
    }

    pub fn set(&mut self, i: usize, j: usize, l: usize, v: T) {
        self.slices[l].set(i, j, v);
    }

    pub fn constant(v: T, k: usize) -> Self {
        let mut f = Self::zero(k);
        f.set(0, 0, 0, v);
        f
    }

    pub fn var_x(k: usize) -> Self {
        let mut f = Self::zero(k);
        f.set(1, 0, 0, T::one());
        f
    }

    pub fn var_y(k: usize) -> Self {
        let mut f = Self::zero(k);
        f.set(0, 1, 0, T::one());
        f
    }

    pub fn var_z(k: usize) -> Self {
        let mut f = Self::zero(k);
        f.set(0, 0, 1, T::one());
        f
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.k, other.k);
        Jet3 {
            k: self.k,
            slices: self
                .slices
                .iter()
                .zip(&other.slices)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.k, other.k);
        Jet3 {
            k: self.k,
            slices: self
                .slices
                .iter()
                .zip(&other.slices)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    pub fn scale(&self, s: &T) -> Self {
        Jet3 { k: self.k, slices: self.slices.iter().map(|a| a.scale(s)).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let k = self.k.min(other.k);
        let mut out = Self::zero(k);
        for (l1, s1) in self.slices.iter().enumerate() {
            if l1 > k {
                break;
            }
            for (l2, s2) in other.slices.iter().enumerate() {
                let l = l1 + l2;
                if l > k {
                    break;
                }
                let prod = s1.truncated(k - l).mul(&s2.truncated(k - l));
                let t = out.slices[l].add(&prod);
                out.slices[l] = t;
            }
        }
        out
    }

    /// Partial derivative in z.
    pub fn dz(&self) -> Self {
        let k = self.k;
        let mut out = Self::zero(k);
        for l in 1..=k {
            // (l) * slice[l], order k - l + 1 >= k - (l-1).
            let s = self.slices[l].scale(&T::from_i64(l as i64));
            // Slice l-1 of the derivative has order k - (l - 1); pad.
            let mut padded = Jet2::zero(k - (l - 1));
            for (i, j, a) in s.iter() {
                padded.set(i, j, a.clone());
            }
            out.slices[l - 1] = padded;
        }
        out
    }

    /// Substitutes a bivariate jet for z: F(x, y, w(x, y)).
    pub fn substitute_z(&self, w: &Jet2<T>) -> Jet2<T> {
        let k = self.k.min(w.order());
        let mut wp = vec![Jet2::constant(T::one(), k)];
        for _ in 1..=k {
            wp.push(wp.last().unwrap().mul(&w.truncated(k)));
        }
        let mut out = Jet2::zero(k);
        for (l, s) in self.slices.iter().enumerate() {
            if l > k {
                break;
            }
            let mut padded = Jet2::zero(k);
            for (i, j, a) in s.iter() {
                if i + j <= k {
                    padded.set(i, j, a.clone());
                }
            }
            out = out.add(&padded.mul(&wp[l]));
        }
        out
    }
}

/// Solves F(x, y, z(x, y)) = 0 for the jet of z with z(0, 0) = z0, where
/// F(0, 0, z0) = 0 and dF/dz(0, 0, z0) != 0. `z0` must be an exact root.
pub fn solve_implicit<T: Scalar>(f: &Jet3<T>, z0: T) -> Jet2<T> {
    let k = f.order();
    let fz = f.dz();
    let mut z = Jet2::constant(z0, k);
    // Jet Newton: each pass doubles the number of correct orders.
    let mut passes = 1usize;
    while (1usize << passes) <= k {
        passes += 1;
    }
    for _ in 0..=passes {
        let fval = f.substitute_z(&z);
        let fzval = fz.substitute_z(&z);
        z = z.sub(&fval.mul(&fzval.recip()));
    }
    // The constant term can accumulate roundoff only if z0 was inexact;
    // with an exact root it stays put, and F(z) vanishes to order k.
    z
}

/// Solves the pair G(x, y, z, w) = 0, H(x, y, z, w) = 0 for jets z(x, y),
/// w(x, y) with given exact roots at the origin. The system is encoded by a
/// callback producing the residual pair from candidate jets, plus the four
/// partial derivatives evaluated the same way; for our use cases a plain
/// fixed-slope Newton with the (0,0) Jacobian converges order by order.
pub fn solve_implicit_pair<T: Scalar>(
    residual: &dyn Fn(&Jet2<T>, &Jet2<T>) -> (Jet2<T>, Jet2<T>),
    jac00: [T; 4],
    z0: T,
    w0: T,
    k: usize,
) -> (Jet2<T>, Jet2<T>) {
    let [a, b, c, d] = jac00;
    let det = a.clone() * d.clone() - b.clone() * c.clone();
    assert!(!det.is_zero());
    let inv = [
        d.clone() / det.clone(),
        -(b.clone() / det.clone()),
        -(c.clone() / det.clone()),
        a / det,
    ];
    let mut z = Jet2::constant(z0, k);
    let mut w = Jet2::constant(w0, k);
    // Fixed-slope Newton gains at least one correct order per pass.
    for _ in 0..=(k + 1) {
        let (rg, rh) = residual(&z, &w);
        let dz = rg.scale(&inv[0]).add(&rh.scale(&inv[1]));
        let dw = rg.scale(&inv[2]).add(&rh.scale(&inv[3]));
        z = z.sub(&dz);
        w = w.sub(&dw);
    }
    (z, w)
}

/// Builds the Jet3 of a bivariate jet in (x, z): helper for assembling
/// implicit systems where one of the variables plays the role of z.
pub fn jet2_xz_to_jet3<T: Scalar>(g: &Jet2<T>, k: usize) -> Jet3<T> {
    let mut out = Jet3::zero(k);
    for (i, l, a) in g.iter() {
        if i + l <= k && !a.is_zero() {
            out.set(i, 0, l, a.clone());
        }
    }
    out
}

/// Applies a Jet2Map-style substitution (x, y) -> (gx, gy) to the (x, y)
/// variables of a Jet3, leaving z alone.
pub fn jet3_compose_xy<T: Scalar>(f: &Jet3<T>, g: &Jet2Map<T>) -> Jet3<T> {
    let k = f.order();
    let mut out = Jet3::zero(k);
    for l in 0..=k {
        let composed = f.slices[l].compose(&g.truncated(k - l));
        out.slices[l] = composed;
    }
    out
}
