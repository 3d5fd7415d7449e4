//! Strictly convex scatterers in the plane.
//!
//! Three shape families are supported: circles, ellipses, and trigonometric
//! support-function perturbations of a circle ("fourier" scatterers with
//! h(θ) = R + Σ_{k≥2} c_k cos kθ + d_k sin kθ). All boundary queries are
//! exposed in arc-length parametrization, oriented counterclockwise, with a
//! movable origin so a collision frame can be pinned exactly.

use thiserror::Error;

use crate::numerics::bigfloat::{ctx_digits, BigFloat};
use crate::numerics::jet1::Jet1;
use crate::numerics::jet2::Jet2;
use crate::numerics::linalg::solve_dense;


#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("fourier scatterer is not strictly convex: h + h'' <= 0 near θ = {0}")]
    NotConvex(f64),
    #[error("invalid shape parameter: {0}")]
    BadParameter(&'static str),
    #[error("closest-approach search failed to converge")]
    ClosestApproach,
}

#[derive(Clone, Debug)]
pub enum Shape {
    Circle { r: BigFloat },
    Ellipse { a: BigFloat, b: BigFloat },
    Fourier { r: BigFloat, cos: Vec<BigFloat>, sin: Vec<BigFloat> },
}

/// Composite Gauss–Legendre arc-length table for shapes without a closed
/// form (ellipses): anchors[i] = arc length from t = 0 to t = i·2π/N.
#[derive(Clone, Debug)]
struct ArcTable {
    anchors: Vec<BigFloat>,
    nodes: Vec<BigFloat>,
    weights: Vec<BigFloat>,
    perimeter: BigFloat,
}

#[derive(Clone, Debug)]
pub struct Scatterer {
    shape: Shape,
    center: [BigFloat; 2],
    /// Rotation of the local frame, radians counterclockwise.
    rotation: BigFloat,
    /// Native parameter value where arc length is measured from.
    origin_t: BigFloat,
    table: Option<ArcTable>,
}

const ELLIPSE_ANCHORS: usize = 256;
const GL_NODES: usize = 32;
const CONVEXITY_SAMPLES: usize = 4096;

/// Gauss–Legendre nodes and weights on [-1, 1] at working precision.
fn gauss_legendre(n: usize) -> (Vec<BigFloat>, Vec<BigFloat>) {
    let pi = BigFloat::pi();
    let one = BigFloat::one();
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-type initial guess, then Newton on P_n.
        let guess = ((BigFloat::from_i64(4 * i as i64 + 3)
            / BigFloat::from_i64(4 * n as i64 + 2))
            * &pi)
            .cos();
        let mut x = guess;
        for _ in 0..200 {
            // Evaluate P_n and P_n' by the three-term recurrence.
            let mut p0 = one.clone();
            let mut p1 = x.clone();
            for k in 2..=n {
                let kf = BigFloat::from_i64(k as i64);
                let p2 = ((BigFloat::from_i64(2 * k as i64 - 1) * &x * &p1)
                    - (&kf - &one) * &p0)
                    / &kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = BigFloat::from_i64(n as i64) * (&x * &p1 - &p0)
                / (&x * &x - &one);
            let step = &p1 / &dp;
            x = &x - &step;
            if step.mag_log2() < -((ctx_digits() as f64 - 8.0) * 3.32) {
                break;
            }
        }
        // Weight 2 / ((1 - x^2) P_n'(x)^2).
        let mut p0 = one.clone();
        let mut p1 = x.clone();
        for k in 2..=n {
            let kf = BigFloat::from_i64(k as i64);
            let p2 = ((BigFloat::from_i64(2 * k as i64 - 1) * &x * &p1) - (&kf - &one) * &p0)
                / &kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = BigFloat::from_i64(n as i64) * (&x * &p1 - &p0) / (&x * &x - &one);
        let w = BigFloat::from_i64(2) / ((&one - &x * &x) * &dp * &dp);
        nodes.push(x);
        weights.push(w);
    }
    (nodes, weights)
}

impl Scatterer {
    pub fn circle(center: [BigFloat; 2], r: BigFloat) -> Result<Self, GeometryError> {
        if !r.is_finite() || r <= BigFloat::zero() {
            return Err(GeometryError::BadParameter("circle radius must be positive"));
        }
        Ok(Scatterer {
            shape: Shape::Circle { r },
            center,
            rotation: BigFloat::zero(),
            origin_t: BigFloat::zero(),
            table: None,
        })
    }

    pub fn ellipse(
        center: [BigFloat; 2],
        a: BigFloat,
        b: BigFloat,
        rotation: BigFloat,
    ) -> Result<Self, GeometryError> {
        if a <= BigFloat::zero() || b <= BigFloat::zero() {
            return Err(GeometryError::BadParameter("ellipse semi-axes must be positive"));
        }
        let mut s = Scatterer {
            shape: Shape::Ellipse { a, b },
            center,
            rotation,
            origin_t: BigFloat::zero(),
            table: None,
        };
        s.table = Some(s.build_table());
        Ok(s)
    }

    pub fn fourier(
        center: [BigFloat; 2],
        r: BigFloat,
        cos: Vec<BigFloat>,
        sin: Vec<BigFloat>,
        rotation: BigFloat,
    ) -> Result<Self, GeometryError> {
        let s = Scatterer {
            shape: Shape::Fourier { r, cos, sin },
            center,
            rotation,
            origin_t: BigFloat::zero(),
            table: None,
        };
        // Strict convexity: the curvature radius h + h'' must stay positive.
        let two_pi = BigFloat::pi() * BigFloat::from_i64(2);
        for i in 0..CONVEXITY_SAMPLES {
            let t = &two_pi * BigFloat::from_i64(i as i64)
                / BigFloat::from_i64(CONVEXITY_SAMPLES as i64);
            if s.curvature_radius_native(&t) <= BigFloat::zero() {
                return Err(GeometryError::NotConvex(t.to_f64()));
            }
        }
        Ok(s)
    }

    fn build_table(&self) -> ArcTable {
        let (nodes, weights) = gauss_legendre(GL_NODES);
        let two_pi = BigFloat::pi() * BigFloat::from_i64(2);
        let h = &two_pi / BigFloat::from_i64(ELLIPSE_ANCHORS as i64);
        let half = BigFloat::one() / BigFloat::from_i64(2);
        let mut anchors = Vec::with_capacity(ELLIPSE_ANCHORS + 1);
        let mut acc = BigFloat::zero();
        anchors.push(acc.clone());
        for i in 0..ELLIPSE_ANCHORS {
            let t0 = &h * BigFloat::from_i64(i as i64);
            let mid = &t0 + &h * &half;
            let scale = &h * &half;
            let mut seg = BigFloat::zero();
            for (x, w) in nodes.iter().zip(&weights) {
                let t = &mid + &scale * x;
                seg = seg + w * self.speed_native(&t);
            }
            acc = acc + seg * &scale;
            anchors.push(acc.clone());
        }
        ArcTable { anchors, nodes, weights, perimeter: acc }
    }

    /// |dγ/dt| in the native parameter.
    fn speed_native(&self, t: &BigFloat) -> BigFloat {
        match &self.shape {
            Shape::Circle { r } => r.clone(),
            Shape::Ellipse { a, b } => {
                let (s, c) = (t.sin(), t.cos());
                (a * a * &s * &s + b * b * &c * &c).sqrt()
            }
            Shape::Fourier { .. } => self.curvature_radius_native(t),
        }
    }

    /// Radius of curvature h + h'' for support-function shapes; general
    /// formula for the others.
    fn curvature_radius_native(&self, t: &BigFloat) -> BigFloat {
        match &self.shape {
            Shape::Circle { r } => r.clone(),
            Shape::Ellipse { a, b } => {
                let (s, c) = (t.sin(), t.cos());
                let q = a * a * &s * &s + b * b * &c * &c;
                &q * q.sqrt() / (a * b)
            }
            Shape::Fourier { r, cos, sin } => {
                let mut acc = r.clone();
                for (k0, ck) in cos.iter().enumerate() {
                    let k = (k0 + 2) as i64;
                    let factor = BigFloat::one() - BigFloat::from_i64(k * k);
                    acc = acc + ck * (BigFloat::from_i64(k) * t).cos() * &factor;
                }
                for (k0, dk) in sin.iter().enumerate() {
                    let k = (k0 + 2) as i64;
                    let factor = BigFloat::one() - BigFloat::from_i64(k * k);
                    acc = acc + dk * (BigFloat::from_i64(k) * t).sin() * &factor;
                }
                acc
            }
        }
    }

    /// Arc length from the native origin t = 0 to t (monotone in t).
    fn arclen_native(&self, t: &BigFloat) -> BigFloat {
        match &self.shape {
            Shape::Circle { r } => r * t,
            Shape::Fourier { r, cos, sin } => {
                // ∫ (h + h'') dθ has a closed form for trig polynomials.
                let mut acc = r * t;
                for (k0, ck) in cos.iter().enumerate() {
                    let k = (k0 + 2) as i64;
                    let kf = BigFloat::from_i64(k);
                    let factor = (BigFloat::one() - &kf * &kf) / &kf;
                    acc = acc + ck * (&kf * t).sin() * &factor;
                }
                for (k0, dk) in sin.iter().enumerate() {
                    let k = (k0 + 2) as i64;
                    let kf = BigFloat::from_i64(k);
                    let factor = (BigFloat::one() - &kf * &kf) / &kf;
                    acc = acc + dk * (BigFloat::one() - (&kf * t).cos()) * &factor;
                }
                acc
            }
            Shape::Ellipse { .. } => {
                let table = self.table.as_ref().expect("ellipse table");
                let two_pi = BigFloat::pi() * BigFloat::from_i64(2);
                // Reduce t into [0, 2π) plus a whole number of turns.
                let turns = (t / &two_pi).floor_i64();
                let t_red = t - &two_pi * BigFloat::from_i64(turns);
                let h = &two_pi / BigFloat::from_i64(ELLIPSE_ANCHORS as i64);
                let idx = ((&t_red / &h).floor_i64().max(0) as usize).min(ELLIPSE_ANCHORS - 1);
                let t0 = &h * BigFloat::from_i64(idx as i64);
                let half = BigFloat::one() / BigFloat::from_i64(2);
                let mid = (&t0 + &t_red) * &half;
                let scale = (&t_red - &t0) * &half;
                let mut seg = BigFloat::zero();
                for (x, w) in table.nodes.iter().zip(&table.weights) {
                    let tt = &mid + &scale * x;
                    seg = seg + w * self.speed_native(&tt);
                }
                table.anchors[idx].clone()
                    + seg * scale
                    + &table.perimeter * BigFloat::from_i64(turns)
            }
        }
    }

    pub fn perimeter(&self) -> BigFloat {
        match &self.shape {
            Shape::Circle { r } => BigFloat::pi() * BigFloat::from_i64(2) * r,
            Shape::Fourier { r, .. } => BigFloat::pi() * BigFloat::from_i64(2) * r,
            Shape::Ellipse { .. } => self.table.as_ref().expect("ellipse table").perimeter.clone(),
        }
    }

    /// Native parameter for a given arc length from the current origin.
    pub fn t_of_s(&self, s: &BigFloat) -> BigFloat {
        let target = self.arclen_native(&self.origin_t) + s;
        match &self.shape {
            Shape::Circle { r } => &target / r,
            _ => {
                // Newton on arclen_native(t) = target; speed is bounded away
                // from zero so plain Newton converges from a linear guess.
                let rate = self.perimeter() / (BigFloat::pi() * BigFloat::from_i64(2));
                let mut t = &target / &rate;
                let tol = -((ctx_digits() as f64 - 8.0) * 3.32);
                for _ in 0..300 {
                    let f = self.arclen_native(&t) - &target;
                    if f.mag_log2() < tol {
                        break;
                    }
                    t = &t - f / self.speed_native(&t);
                }
                t
            }
        }
    }

    pub fn s_of_t(&self, t: &BigFloat) -> BigFloat {
        self.arclen_native(t) - self.arclen_native(&self.origin_t)
    }

    /// Moves the arc-length origin to the native parameter t0.
    pub fn set_origin_t(&mut self, t0: BigFloat) {
        self.origin_t = t0;
    }

    pub fn origin_t(&self) -> &BigFloat {
        &self.origin_t
    }

    pub fn center(&self) -> &[BigFloat; 2] {
        &self.center
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Boundary point in the native parameter, local frame (no rotation or
    /// translation applied), as univariate jets in the parameter.
    fn local_jets(&self, t0: &BigFloat, k: usize) -> [Jet1<BigFloat>; 2] {
        let t = Jet1::var(t0.clone(), k);
        match &self.shape {
            Shape::Circle { r } => {
                let (s, c) = t.sin_cos();
                [c.scale(r), s.scale(r)]
            }
            Shape::Ellipse { a, b } => {
                let (s, c) = t.sin_cos();
                [c.scale(a), s.scale(b)]
            }
            Shape::Fourier { r, cos, sin } => {
                // γ(θ) = h u + h' u⊥ with u = (cos θ, sin θ).
                let mut h = Jet1::constant(r.clone(), k);
                let mut hp = Jet1::zero(k);
                for (k0, ck) in cos.iter().enumerate() {
                    let kk = (k0 + 2) as i64;
                    let kt = t.scale(&BigFloat::from_i64(kk));
                    let (skt, ckt) = kt.sin_cos();
                    h = h.add(&ckt.scale(ck));
                    hp = hp.sub(&skt.scale(&(ck * BigFloat::from_i64(kk))));
                }
                for (k0, dk) in sin.iter().enumerate() {
                    let kk = (k0 + 2) as i64;
                    let kt = t.scale(&BigFloat::from_i64(kk));
                    let (skt, ckt) = kt.sin_cos();
                    h = h.add(&skt.scale(dk));
                    hp = hp.add(&ckt.scale(&(dk * BigFloat::from_i64(kk))));
                }
                let (su, cu) = t.sin_cos();
                [
                    h.mul(&cu).sub(&hp.mul(&su)),
                    h.mul(&su).add(&hp.mul(&cu)),
                ]
            }
        }
    }

    /// World-frame boundary jets in the *native* parameter around t0.
    pub(crate) fn world_jets_native(&self, t0: &BigFloat, k: usize) -> [Jet1<BigFloat>; 2] {
        let [lx, ly] = self.local_jets(t0, k);
        let (sr, cr) = (self.rotation.sin(), self.rotation.cos());
        let wx = lx.scale(&cr).sub(&ly.scale(&sr));
        let wy = lx.scale(&sr).add(&ly.scale(&cr));
        let mut wx = wx;
        let mut wy = wy;
        wx.c[0] = wx.c[0].clone() + &self.center[0];
        wy.c[0] = wy.c[0].clone() + &self.center[1];
        [wx, wy]
    }

    /// Boundary point, unit tangent, and outward normal at arc length s, as
    /// jets in the arc-length increment, to order k.
    pub fn point_jet(&self, s: &BigFloat, k: usize) -> [Jet1<BigFloat>; 2] {
        if let Shape::Circle { r } = &self.shape {
            // s = r t exactly: expand directly in arc length.
            let t0 = self.t_of_s(s);
            let rinv = BigFloat::one() / r;
            let theta = Jet1::var(t0, k).scale(&BigFloat::one());
            // Replace the linear coefficient to express θ(σ) = t0 + σ / r.
            let mut theta = theta;
            if k >= 1 {
                theta.c[1] = rinv;
            }
            let (st, ct) = theta.sin_cos();
            let (sr, cr) = (self.rotation.sin(), self.rotation.cos());
            let lx = ct.scale(r);
            let ly = st.scale(r);
            let mut wx = lx.scale(&cr).sub(&ly.scale(&sr));
            let mut wy = lx.scale(&sr).add(&ly.scale(&cr));
            wx.c[0] = wx.c[0].clone() + &self.center[0];
            wy.c[0] = wy.c[0].clone() + &self.center[1];
            return [wx, wy];
        }
        // General case: expand in the native parameter one order higher,
        // then reparametrize by arc length via series inversion.
        let t0 = self.t_of_s(s);
        let kk = k + 1;
        let [x, y] = self.world_jets_native(&t0, kk);
        let speed = x
            .derivative()
            .mul(&x.derivative())
            .add(&y.derivative().mul(&y.derivative()))
            .sqrt();
        let arc = speed.integral(); // arc(τ) with arc(0) = 0
        let tau_of_sigma = arc.inverse();
        [
            x.compose(&tau_of_sigma).truncated(k),
            y.compose(&tau_of_sigma).truncated(k),
        ]
    }

    pub fn point(&self, s: &BigFloat) -> [BigFloat; 2] {
        let [x, y] = self.point_jet(s, 0);
        [x.c[0].clone(), y.c[0].clone()]
    }

    /// Unit tangent in the direction of increasing arc length.
    pub fn tangent(&self, s: &BigFloat) -> [BigFloat; 2] {
        let [x, y] = self.point_jet(s, 1);
        [x.c[1].clone(), y.c[1].clone()]
    }

    /// Outward unit normal (tangent rotated clockwise for a ccw curve).
    pub fn normal(&self, s: &BigFloat) -> [BigFloat; 2] {
        let t = self.tangent(s);
        [t[1].clone(), -t[0].clone()]
    }

    pub fn curvature(&self, s: &BigFloat) -> BigFloat {
        match &self.shape {
            Shape::Circle { r } => BigFloat::one() / r,
            _ => {
                let [x, y] = self.point_jet(s, 2);
                // Unit-speed curve: κ = |γ''| with sign from (γ', γ'').
                let two = BigFloat::from_i64(2);
                let xpp = x.c[2].clone() * &two;
                let ypp = y.c[2].clone() * &two;
                x.c[1].clone() * ypp - y.c[1].clone() * xpp
            }
        }
    }

    /// Support function max_{p in body} p · u for a unit direction u.
    pub fn support(&self, u: &[BigFloat; 2]) -> BigFloat {
        let base = &self.center[0] * &u[0] + &self.center[1] * &u[1];
        match &self.shape {
            Shape::Circle { r } => base + r,
            Shape::Ellipse { a, b } => {
                // Rotate u into the local frame.
                let (sr, cr) = (self.rotation.sin(), self.rotation.cos());
                let ux = &cr * &u[0] + &sr * &u[1];
                let uy = -&sr * &u[0] + &cr * &u[1];
                base + (a * a * &ux * &ux + b * b * &uy * &uy).sqrt()
            }
            Shape::Fourier { r, cos, sin } => {
                let (sr, cr) = (self.rotation.sin(), self.rotation.cos());
                let ux = &cr * &u[0] + &sr * &u[1];
                let uy = -&sr * &u[0] + &cr * &u[1];
                let theta = uy.atan2(&ux);
                let mut h = r.clone();
                for (k0, ck) in cos.iter().enumerate() {
                    let k = (k0 + 2) as i64;
                    h = h + ck * (BigFloat::from_i64(k) * &theta).cos();
                }
                for (k0, dk) in sin.iter().enumerate() {
                    let k = (k0 + 2) as i64;
                    h = h + dk * (BigFloat::from_i64(k) * &theta).sin();
                }
                base + h
            }
        }
    }

    /// Applies a direct isometry (rotation by `angle` about the origin, then
    /// translation) to the scatterer.
    /// Re-tags every stored coefficient at no less than `digits` working
    /// precision, treating the current values as exact data. Needed when a
    /// computation must run at a precision above the one the table was built
    /// at: min-precision propagation would otherwise cap every intermediate.
    pub fn lift_precision(&mut self, digits: u32) {
        let lift = |v: &mut BigFloat| {
            if !v.is_exact() && v.digits() < digits {
                *v = v.with_precision(digits);
            }
        };
        match &mut self.shape {
            Shape::Circle { r } => lift(r),
            Shape::Ellipse { a, b } => {
                lift(a);
                lift(b);
            }
            Shape::Fourier { r, cos, sin } => {
                lift(r);
                cos.iter_mut().for_each(lift);
                sin.iter_mut().for_each(lift);
            }
        }
        self.center.iter_mut().for_each(lift);
        lift(&mut self.rotation);
        lift(&mut self.origin_t);
        if let Some(tab) = &mut self.table {
            tab.anchors.iter_mut().for_each(lift);
            tab.nodes.iter_mut().for_each(lift);
            tab.weights.iter_mut().for_each(lift);
            lift(&mut tab.perimeter);
        }
    }

    pub fn transform(&mut self, angle: &BigFloat, translation: &[BigFloat; 2]) {
        let (s, c) = (angle.sin(), angle.cos());
        let cx = &c * &self.center[0] - &s * &self.center[1] + &translation[0];
        let cy = &s * &self.center[0] + &c * &self.center[1] + &translation[1];
        self.center = [cx, cy];
        self.rotation = &self.rotation + angle;
    }

    /// Pure double-precision boundary evaluation for seeding and scans.
    pub(crate) fn point_f64(&self, t: f64) -> [f64; 2] {
        let rot = self.rotation.to_f64();
        let cx = self.center[0].to_f64();
        let cy = self.center[1].to_f64();
        let (lx, ly) = match &self.shape {
            Shape::Circle { r } => {
                let rf = r.to_f64();
                (rf * t.cos(), rf * t.sin())
            }
            Shape::Ellipse { a, b } => (a.to_f64() * t.cos(), b.to_f64() * t.sin()),
            Shape::Fourier { r, cos, sin } => {
                let mut h = r.to_f64();
                let mut hp = 0.0f64;
                for (k0, ck) in cos.iter().enumerate() {
                    let k = (k0 + 2) as f64;
                    h += ck.to_f64() * (k * t).cos();
                    hp -= ck.to_f64() * k * (k * t).sin();
                }
                for (k0, dk) in sin.iter().enumerate() {
                    let k = (k0 + 2) as f64;
                    h += dk.to_f64() * (k * t).sin();
                    hp += dk.to_f64() * k * (k * t).cos();
                }
                (h * t.cos() - hp * t.sin(), h * t.sin() + hp * t.cos())
            }
        };
        let (sr, cr) = rot.sin_cos();
        [cx + cr * lx - sr * ly, cy + sr * lx + cr * ly]
    }
}

/// Closest approach between two disjoint convex scatterers: returns the
/// native parameters (ta, tb) and the distance.
pub fn closest_approach(
    a: &Scatterer,
    b: &Scatterer,
) -> Result<(BigFloat, BigFloat, BigFloat), GeometryError> {
    // Coarse double-precision scan, then Newton on the distance gradient.
    let n = 512;
    let mut best = (0usize, 0usize, f64::INFINITY);
    let pa: Vec<[f64; 2]> = (0..n)
        .map(|i| a.point_f64(2.0 * std::f64::consts::PI * i as f64 / n as f64))
        .collect();
    let pb: Vec<[f64; 2]> = (0..n)
        .map(|i| b.point_f64(2.0 * std::f64::consts::PI * i as f64 / n as f64))
        .collect();
    for (i, p) in pa.iter().enumerate() {
        for (j, q) in pb.iter().enumerate() {
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            if d2 < best.2 {
                best = (i, j, d2);
            }
        }
    }
    let two_pi = BigFloat::pi() * BigFloat::from_i64(2);
    let mut ta = &two_pi * BigFloat::from_i64(best.0 as i64) / BigFloat::from_i64(n as i64);
    let mut tb = &two_pi * BigFloat::from_i64(best.1 as i64) / BigFloat::from_i64(n as i64);
    let tol = -((ctx_digits() as f64 - 8.0) * 3.32);
    for iter in 0..400 {
        // D(ta, tb) = |γa(ta) - γb(tb)|² as an order-2 bivariate jet.
        let [ax, ay] = a.world_jets_native(&ta, 2);
        let [bx, by] = b.world_jets_native(&tb, 2);
        let dx = jet1_sub_as_jet2(&ax, &bx);
        let dy = jet1_sub_as_jet2(&ay, &by);
        let d2 = dx.mul(&dx).add(&dy.mul(&dy));
        let g0 = d2.get(1, 0).clone();
        let g1 = d2.get(0, 1).clone();
        let two = BigFloat::from_i64(2);
        let h00 = d2.get(2, 0).clone() * &two;
        let h11 = d2.get(0, 2).clone() * &two;
        let h01 = d2.get(1, 1).clone();
        let mut mat = vec![vec![h00, h01.clone()], vec![h01, h11]];
        let mut rhs = vec![g0.clone(), g1.clone()];
        let step = solve_dense(&mut mat, &mut rhs).ok_or(GeometryError::ClosestApproach)?;
        ta = &ta - &step[0];
        tb = &tb - &step[1];
        let done = g0.mag_log2() < tol && g1.mag_log2() < tol;
        if done {
            let pa = a.world_jets_native(&ta, 0);
            let pb = b.world_jets_native(&tb, 0);
            let ddx = pa[0].c[0].clone() - pb[0].c[0].clone();
            let ddy = pa[1].c[0].clone() - pb[1].c[0].clone();
            let dist = (&ddx * &ddx + &ddy * &ddy).sqrt();
            return Ok((ta, tb, dist));
        }
        if iter == 399 {
            return Err(GeometryError::ClosestApproach);
        }
    }
    Err(GeometryError::ClosestApproach)
}

/// Embeds the difference of two univariate jets (in separate variables)
/// into a bivariate jet: f(x) - g(y).
fn jet1_sub_as_jet2(f: &Jet1<BigFloat>, g: &Jet1<BigFloat>) -> Jet2<BigFloat> {
    let k = f.order().min(g.order());
    let mut out = Jet2::zero(k);
    for i in 0..=k {
        if i == 0 {
            out.set(0, 0, f.c[0].clone() - g.c[0].clone());
        } else {
            out.set(i, 0, f.c[i].clone());
            out.set(0, i, -g.c[i].clone());
        }
    }
    out
}

/// A billiard table: three non-eclipsing strictly convex scatterers.
#[derive(Clone, Debug)]
pub struct Table3 {
    pub scatterers: [Scatterer; 3],
}

impl Table3 {
    pub fn new(scatterers: [Scatterer; 3]) -> Self {
        Table3 { scatterers }
    }

    pub fn scatterer(&self, i: usize) -> &Scatterer {
        &self.scatterers[i - 1]
    }

    /// See [`Scatterer::lift_precision`].
    pub fn lift_precision(&mut self, digits: u32) {
        for s in self.scatterers.iter_mut() {
            s.lift_precision(digits);
        }
    }

    /// Checks the non-eclipse condition: each scatterer is separated from
    /// the convex hull of the other two by some line. Sampled over many
    /// directions; a found separating direction is a certificate.
    pub fn non_eclipse(&self) -> bool {
        let two_pi = BigFloat::pi() * BigFloat::from_i64(2);
        let n = CONVEXITY_SAMPLES;
        'outer: for k in 0..3 {
            let third = &self.scatterers[k];
            let others: Vec<&Scatterer> = (0..3).filter(|&j| j != k).map(|j| &self.scatterers[j]).collect();
            for i in 0..n {
                let th = &two_pi * BigFloat::from_i64(i as i64) / BigFloat::from_i64(n as i64);
                let u = [th.cos(), th.sin()];
                let neg_u = [-u[0].clone(), -u[1].clone()];
                // hull(A, B) ⊂ {x·u <= h}, third ⊂ {x·u >= -h_third(-u)}.
                let h_hull = {
                    let ha = others[0].support(&u);
                    let hb = others[1].support(&u);
                    if ha > hb { ha } else { hb }
                };
                let sep = h_hull + third.support(&neg_u);
                if sep < BigFloat::zero() {
                    continue 'outer;
                }
            }
            return false;
        }
        true
    }

    /// Brings the table into the normalized frame: the closest points of
    /// Γ₁ and Γ₂ at (0, ±ℓ₀/2) with arc-length origins there, and Γ₃ in the
    /// half-plane x > 0 (swapping the labels 1 and 2 if needed). Returns ℓ₀.
    pub fn normalize_frame(&mut self) -> Result<BigFloat, GeometryError> {
        let (t1, t2, dist) = closest_approach(&self.scatterers[0], &self.scatterers[1])?;
        let p1 = {
            let [x, y] = self.scatterers[0].world_jets_native(&t1, 0);
            [x.c[0].clone(), y.c[0].clone()]
        };
        let p2 = {
            let [x, y] = self.scatterers[1].world_jets_native(&t2, 0);
            [x.c[0].clone(), y.c[0].clone()]
        };
        // Direct isometry sending p1 -> (0, d/2), p2 -> (0, -d/2): rotate the
        // direction p1 - p2 onto +e_y, then translate the midpoint to 0.
        let dir = [p1[0].clone() - p2[0].clone(), p1[1].clone() - p2[1].clone()];
        let angle = dir[1].atan2(&dir[0]);
        let half_pi = BigFloat::pi() / BigFloat::from_i64(2);
        let rot = &half_pi - &angle;
        let (sr, cr) = (rot.sin(), rot.cos());
        let half = BigFloat::one() / BigFloat::from_i64(2);
        let mid = [
            (p1[0].clone() + p2[0].clone()) * &half,
            (p1[1].clone() + p2[1].clone()) * &half,
        ];
        let trans = [
            -(&cr * &mid[0] - &sr * &mid[1]),
            -(&sr * &mid[0] + &cr * &mid[1]),
        ];
        for s in self.scatterers.iter_mut() {
            s.transform(&rot, &trans);
        }
        self.scatterers[0].set_origin_t(t1.clone());
        self.scatterers[1].set_origin_t(t2.clone());
        // Γ₃ must sit in x > 0; otherwise rotate the frame by π and swap
        // the first two scatterers to keep an orientation-preserving map.
        if self.scatterers[2].center()[0] < BigFloat::zero() {
            let pi = BigFloat::pi();
            let zero = [BigFloat::zero(), BigFloat::zero()];
            for s in self.scatterers.iter_mut() {
                s.transform(&pi, &zero);
            }
            self.scatterers.swap(0, 1);
        }
        Ok(dist)
    }
}

/// The standard symmetric test table: unit circles centered at (0, 2),
/// (0, -2), and (6, 0).
pub fn reference_table() -> Table3 {
    let one = BigFloat::one();
    let mk = |x: i64, y: i64| {
        Scatterer::circle([BigFloat::from_i64(x), BigFloat::from_i64(y)], one.clone()).unwrap()
    };
    Table3::new([mk(0, 2), mk(0, -2), mk(6, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::bigfloat::with_digits;

    fn tol(e: &str) -> BigFloat {
        BigFloat::parse_digits(e, 20).unwrap()
    }

    #[test]
    fn circle_point_and_curvature() {
        with_digits(60, || {
            let c = Scatterer::circle([BigFloat::zero(), BigFloat::from_i64(2)], BigFloat::one())
                .unwrap();
            // Native origin t = 0 is the point (1, 2); move the origin to the
            // bottom of the circle (t = -π/2) and check (0, 1).
            let mut c = c;
            c.set_origin_t(-(BigFloat::pi() / BigFloat::from_i64(2)));
            let p = c.point(&BigFloat::zero());
            assert!((p[0].clone()).abs() < tol("1e-55"));
            assert!((p[1].clone() - BigFloat::one()).abs() < tol("1e-55"));
            assert_eq!(c.curvature(&BigFloat::zero()), BigFloat::one());
            // Outward normal points away from the center.
            let nrm = c.normal(&BigFloat::zero());
            assert!((nrm[0].clone()).abs() < tol("1e-55"));
            assert!((nrm[1].clone() + BigFloat::one()).abs() < tol("1e-55"));
        });
    }

    #[test]
    fn ellipse_curvature_major_axis() {
        with_digits(50, || {
            let a = BigFloat::from_i64(3);
            let b = BigFloat::from_i64(2);
            let e = Scatterer::ellipse(
                [BigFloat::zero(), BigFloat::zero()],
                a.clone(),
                b.clone(),
                BigFloat::zero(),
            )
            .unwrap();
            // κ at the end of the major axis (native t = 0) is a/b².
            let kappa = e.curvature(&BigFloat::zero());
            let expect = &a / (&b * &b);
            assert!((kappa - expect).abs() < tol("1e-40"));
        });
    }

    #[test]
    fn circle_perimeter_full_precision() {
        with_digits(80, || {
            let r = BigFloat::parse("1.25").unwrap();
            let c = Scatterer::circle([BigFloat::zero(), BigFloat::zero()], r.clone()).unwrap();
            let p = c.perimeter();
            let expect = BigFloat::pi() * BigFloat::from_i64(2) * &r;
            assert!((p - expect).abs() < tol("1e-70"));
        });
    }

    #[test]
    fn ellipse_perimeter_against_known_value() {
        with_digits(60, || {
            // Perimeter of the 3-2 ellipse; reference value from the
            // arithmetic-geometric-mean iteration for the complete elliptic
            // integral E (computed independently below).
            let a = BigFloat::from_i64(3);
            let b = BigFloat::from_i64(2);
            let e = Scatterer::ellipse(
                [BigFloat::zero(), BigFloat::zero()],
                a.clone(),
                b.clone(),
                BigFloat::zero(),
            )
            .unwrap();
            let per = e.perimeter();
            // AGM oracle: C = 4 a E(k), with K = π / (2 agm(1, k')) and
            // E = K (1 - Σ 2^{n-1} c_n²), where c_0 = k, c_n the AGM gaps.
            let half = BigFloat::one() / BigFloat::from_i64(2);
            let kp = &b / &a;
            let k2 = BigFloat::one() - &kp * &kp;
            let mut x = BigFloat::one().with_precision(60);
            let mut y = kp;
            let mut sum = &k2 * &half;
            let mut pow = BigFloat::one().with_precision(60);
            for _ in 0..200 {
                let c = (&x - &y) * &half;
                let xn = (&x + &y) * &half;
                let yn = (&x * &y).sqrt();
                sum = sum + &pow * &c * &c;
                pow = pow * BigFloat::from_i64(2);
                x = xn;
                y = yn;
                if (&x - &y).mag_log2() < -220.0 {
                    break;
                }
            }
            let kk = BigFloat::pi() * &half / &x;
            let ee = &kk * (BigFloat::one() - sum);
            let oracle = BigFloat::from_i64(4) * &a * ee;
            assert!(
                (per.clone() - oracle.clone()).abs() < tol("1e-50"),
                "{} vs {}",
                per,
                oracle
            );
        });
    }

    #[test]
    fn fourier_jets_match_finite_differences() {
        with_digits(60, || {
            let f = Scatterer::fourier(
                [BigFloat::one(), BigFloat::from_i64(-2)],
                BigFloat::one(),
                vec![BigFloat::parse("0.03").unwrap()],
                vec![BigFloat::parse("-0.02").unwrap()],
                BigFloat::parse("0.4").unwrap(),
            )
            .unwrap();
            let s = BigFloat::parse("0.7").unwrap();
            let [xj, yj] = f.point_jet(&s, 3);
            // Richardson-extrapolated central differences as the oracle.
            let h1 = BigFloat::parse("1e-8").unwrap();
            let h2 = &h1 / BigFloat::from_i64(2);
            let d = |h: &BigFloat| {
                let pp = f.point(&(&s + h));
                let pm = f.point(&(&s - h));
                [
                    (pp[0].clone() - pm[0].clone()) / (BigFloat::from_i64(2) * h),
                    (pp[1].clone() - pm[1].clone()) / (BigFloat::from_i64(2) * h),
                ]
            };
            let d1 = d(&h1);
            let d2 = d(&h2);
            let four = BigFloat::from_i64(4);
            let three = BigFloat::from_i64(3);
            let rx = (&four * &d2[0] - &d1[0]) / &three;
            let ry = (&four * &d2[1] - &d1[1]) / &three;
            assert!((rx - xj.c[1].clone()).abs() < tol("1e-25"));
            assert!((ry - yj.c[1].clone()).abs() < tol("1e-25"));
            // Unit-speed check at several points.
            for sv in ["0.0", "1.1", "2.9"] {
                let sb = BigFloat::parse(sv).unwrap();
                let t = f.tangent(&sb);
                let n2 = &t[0] * &t[0] + &t[1] * &t[1];
                assert!((n2 - BigFloat::one()).abs() < tol("1e-50"));
            }
        });
    }

    #[test]
    fn fourier_convexity_rejected() {
        with_digits(40, || {
            let r = Scatterer::fourier(
                [BigFloat::zero(), BigFloat::zero()],
                BigFloat::one(),
                vec![BigFloat::parse("0.5").unwrap()], // k=2: (1-4)*0.5 = -1.5 < -1
                vec![],
                BigFloat::zero(),
            );
            assert!(r.is_err());
        });
    }

    #[test]
    fn reference_frame_already_normalized() {
        with_digits(60, || {
            let mut t = reference_table();
            let l0 = t.normalize_frame().unwrap();
            assert!((l0 - BigFloat::from_i64(2)).abs() < tol("1e-50"));
            let p1 = t.scatterer(1).point(&BigFloat::zero());
            let p2 = t.scatterer(2).point(&BigFloat::zero());
            assert!((p1[0].clone()).abs() < tol("1e-50"));
            assert!((p1[1].clone() - BigFloat::one()).abs() < tol("1e-50"));
            assert!((p2[0].clone()).abs() < tol("1e-50"));
            assert!((p2[1].clone() + BigFloat::one()).abs() < tol("1e-50"));
            assert!(t.scatterer(3).center()[0] > BigFloat::zero());
        });
    }

    #[test]
    fn two_ellipse_gap_matches_grid_oracle() {
        with_digits(50, || {
            let e1 = Scatterer::ellipse(
                [BigFloat::zero(), BigFloat::from_i64(3)],
                BigFloat::parse("1.5").unwrap(),
                BigFloat::one(),
                BigFloat::parse("0.3").unwrap(),
            )
            .unwrap();
            let e2 = Scatterer::ellipse(
                [BigFloat::zero(), BigFloat::from_i64(-3)],
                BigFloat::one(),
                BigFloat::parse("0.8").unwrap(),
                BigFloat::parse("-0.2").unwrap(),
            )
            .unwrap();
            let (_, _, dist) = closest_approach(&e1, &e2).unwrap();
            // Dense double-precision grid oracle: the minimum over a fine
            // product grid approximates the gap to second order in the step.
            let n = 2048;
            let pa: Vec<[f64; 2]> = (0..n)
                .map(|i| e1.point_f64(2.0 * std::f64::consts::PI * i as f64 / n as f64))
                .collect();
            let pb: Vec<[f64; 2]> = (0..n)
                .map(|i| e2.point_f64(2.0 * std::f64::consts::PI * i as f64 / n as f64))
                .collect();
            let mut best = f64::INFINITY;
            for p in &pa {
                for q in &pb {
                    let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                    if d < best {
                        best = d;
                    }
                }
            }
            assert!((dist.to_f64() - best).abs() < 1e-4);
        });
    }

    #[test]
    fn non_eclipse_reference_true_collinear_false() {
        with_digits(40, || {
            let t = reference_table();
            assert!(t.non_eclipse());
            let one = BigFloat::one();
            let mk = |x: i64, y: i64| {
                Scatterer::circle([BigFloat::from_i64(x), BigFloat::from_i64(y)], one.clone())
                    .unwrap()
            };
            let bad = Table3::new([mk(0, 2), mk(0, -2), mk(0, 6)]);
            assert!(!bad.non_eclipse());
        });
    }
}
