//! Algebra-valued curves with exact derivatives.
//!
//! A [`Curve`] is a map `[r, r′] → gl(d)` together with the number of
//! derivatives it can produce and an ordered list of interior breakpoints.
//! Between breakpoints every derivative is continuous; at a breakpoint the
//! caller chooses which one-sided limit to evaluate via [`Side`].

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lie::Matrix;

/// One-sided evaluation at breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Number of derivatives a curve can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    Finite(usize),
    Smooth,
}

impl Order {
    pub fn allows(self, m: usize) -> bool {
        match self {
            Order::Finite(k) => m <= k,
            Order::Smooth => true,
        }
    }

    pub fn min(self, other: Order) -> Order {
        match (self, other) {
            (Order::Smooth, o) | (o, Order::Smooth) => o,
            (Order::Finite(a), Order::Finite(b)) => Order::Finite(a.min(b)),
        }
    }

    /// Order after differentiating `m` times.
    pub fn lowered(self, m: usize) -> Order {
        match self {
            Order::Smooth => Order::Smooth,
            Order::Finite(k) => Order::Finite(k.saturating_sub(m)),
        }
    }
}

/// Evaluation backend of a curve: all derivatives `0..=k` at `t`.
pub trait CurveMap: Send + Sync {
    fn jet(&self, t: f64, k: usize, side: Side) -> Result<Vec<Matrix>>;
}

impl<F> CurveMap for F
where
    F: Fn(f64, usize, Side) -> Result<Vec<Matrix>> + Send + Sync,
{
    fn jet(&self, t: f64, k: usize, side: Side) -> Result<Vec<Matrix>> {
        self(t, k, side)
    }
}

#[derive(Clone)]
pub struct Curve {
    start: f64,
    end: f64,
    order: Order,
    breakpoints: Vec<f64>,
    dim: usize,
    map: Arc<dyn CurveMap>,
}

impl fmt::Debug for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Curve")
            .field("interval", &(self.start, self.end))
            .field("order", &self.order)
            .field("breakpoints", &self.breakpoints)
            .field("dim", &self.dim)
            .finish()
    }
}

/// `amplitude · sin(ωt + θ) · C` or the cosine analogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub cosine: bool,
    pub frequency: f64,
    pub phase: f64,
    #[serde(with = "matrix_rows")]
    pub coefficient: Matrix,
}

impl TrigTerm {
    pub fn sin(frequency: f64, phase: f64, coefficient: Matrix) -> Self {
        TrigTerm {
            cosine: false,
            frequency,
            phase,
            coefficient,
        }
    }

    pub fn cos(frequency: f64, phase: f64, coefficient: Matrix) -> Self {
        TrigTerm {
            cosine: true,
            frequency,
            phase,
            coefficient,
        }
    }

    fn derivative_factor(&self, t: f64, m: usize) -> f64 {
        let arg = self.frequency * t + self.phase + m as f64 * std::f64::consts::FRAC_PI_2;
        let f = if self.cosine { arg.cos() } else { arg.sin() };
        self.frequency.powi(m as i32) * f
    }
}

/// Polynomial plus trigonometric curve `Σ c_k t^k + Σ trig_j`.
#[derive(Debug, Clone, PartialEq)]
struct ClosedForm {
    poly: Vec<Matrix>,
    trig: Vec<TrigTerm>,
    dim: usize,
}

impl ClosedForm {
    fn eval(&self, t: f64, m: usize) -> Matrix {
        let mut out = Matrix::zeros(self.dim, self.dim);
        for (k, c) in self.poly.iter().enumerate().skip(m) {
            let falling: f64 = ((k - m + 1)..=k).map(|j| j as f64).product();
            out += c * (falling * t.powi((k - m) as i32));
        }
        for term in &self.trig {
            out += &term.coefficient * term.derivative_factor(t, m);
        }
        out
    }
}

impl Curve {
    /// General constructor from a jet function.
    pub fn from_map(
        start: f64,
        end: f64,
        order: Order,
        breakpoints: Vec<f64>,
        dim: usize,
        map: impl CurveMap + 'static,
    ) -> Curve {
        assert!(start < end, "curve interval must satisfy r < r′, got [{start}, {end}]");
        let mut breakpoints: Vec<f64> = breakpoints.into_iter().filter(|&t| t > start && t < end).collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        Curve {
            start,
            end,
            order,
            breakpoints,
            dim,
            map: Arc::new(map),
        }
    }

    pub fn closed_form(start: f64, end: f64, poly: Vec<Matrix>, trig: Vec<TrigTerm>) -> Curve {
        let dim = poly
            .first()
            .map(|m| m.nrows())
            .or_else(|| trig.first().map(|t| t.coefficient.nrows()))
            .expect("closed-form curve needs at least one coefficient");
        let form = ClosedForm { poly, trig, dim };
        Curve::from_map(start, end, Order::Smooth, Vec::new(), dim, move |t: f64, k: usize, _side: Side| {
            Ok((0..=k).map(|m| form.eval(t, m)).collect())
        })
    }

    pub fn constant(start: f64, end: f64, value: Matrix) -> Curve {
        Curve::closed_form(start, end, vec![value], Vec::new())
    }

    pub fn zero(start: f64, end: f64, dim: usize) -> Curve {
        Curve::constant(start, end, Matrix::zeros(dim, dim))
    }

    /// `Σ c_k t^k`.
    pub fn polynomial(start: f64, end: f64, coefficients: Vec<Matrix>) -> Curve {
        Curve::closed_form(start, end, coefficients, Vec::new())
    }

    pub fn trig(start: f64, end: f64, terms: Vec<TrigTerm>) -> Curve {
        Curve::closed_form(start, end, Vec::new(), terms)
    }

    /// Glues `pieces[p]` on `[knots[p], knots[p+1]]`.
    pub fn piecewise(knots: Vec<f64>, pieces: Vec<Curve>) -> Result<Curve> {
        if knots.len() < 2 || pieces.len() + 1 != knots.len() {
            return Err(LabError::Argument(format!(
                "piecewise curve needs n+1 knots for n pieces (got {} knots, {} pieces)",
                knots.len(),
                pieces.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(LabError::Argument("piecewise knots must be strictly increasing".into()));
        }
        for (p, piece) in pieces.iter().enumerate() {
            let (a, b) = piece.interval();
            if a > knots[p] || b < knots[p + 1] {
                return Err(LabError::Argument(format!(
                    "piece {p} on [{a}, {b}] does not cover [{}, {}]",
                    knots[p],
                    knots[p + 1]
                )));
            }
        }
        let dim = pieces[0].dim();
        let order = pieces.iter().fold(Order::Smooth, |o, p| o.min(p.order()));
        let mut breakpoints: Vec<f64> = knots[1..knots.len() - 1].to_vec();
        for (p, piece) in pieces.iter().enumerate() {
            breakpoints.extend(piece.breakpoints().iter().filter(|&&t| t > knots[p] && t < knots[p + 1]));
        }
        let start = knots[0];
        let end = *knots.last().unwrap();
        Ok(Curve::from_map(start, end, order, breakpoints, dim, move |t: f64, k: usize, side: Side| {
            let p = locate_piece(&knots, t, side);
            pieces[p].jet_sided(t, k, side)
        }))
    }

    /// Step function taking `values[p]` on `[knots[p], knots[p+1])` (closed on the last piece).
    pub fn piecewise_constant(knots: Vec<f64>, values: Vec<Matrix>) -> Result<Curve> {
        if knots.len() < 2 {
            return Err(LabError::Argument("piecewise-constant curve needs at least two knots".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(LabError::Argument("piecewise knots must be strictly increasing".into()));
        }
        let pieces = knots
            .windows(2)
            .zip(values)
            .map(|(w, v)| Curve::constant(w[0], w[1], v))
            .collect();
        Curve::piecewise(knots, pieces)
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Breakpoints together with both endpoints.
    pub fn knots(&self) -> Vec<f64> {
        let mut k = vec![self.start];
        k.extend_from_slice(&self.breakpoints);
        k.push(self.end);
        k
    }

    fn clamp(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * (self.end - self.start).max(1.0);
        if t < self.start - slack || t > self.end + slack || t.is_nan() {
            return Err(LabError::Argument(format!(
                "t = {t} outside curve interval [{}, {}]",
                self.start, self.end
            )));
        }
        Ok(t.clamp(self.start, self.end))
    }

    /// Derivatives `0..=k` at `t`, one-sided at breakpoints.
    pub fn jet_sided(&self, t: f64, k: usize, side: Side) -> Result<Vec<Matrix>> {
        if !self.order.allows(k) {
            return Err(LabError::Argument(format!(
                "derivative order {k} exceeds curve order {:?}",
                self.order
            )));
        }
        let t = self.clamp(t)?;
        let side = if t >= self.end { Side::Left } else if t <= self.start { Side::Right } else { side };
        self.map.jet(t, k, side)
    }

    pub fn jet(&self, t: f64, k: usize) -> Result<Vec<Matrix>> {
        self.jet_sided(t, k, Side::Right)
    }

    /// `m`-th derivative at `t` (right limit at breakpoints, left limit at the end point).
    pub fn eval(&self, t: f64, m: usize) -> Result<Matrix> {
        self.eval_sided(t, m, Side::Right)
    }

    pub fn eval_sided(&self, t: f64, m: usize, side: Side) -> Result<Matrix> {
        let mut jet = self.jet_sided(t, m, side)?;
        Ok(jet.pop().expect("jet is nonempty"))
    }

    /// The curve `t ↦ γ^{(m)}(t)`.
    pub fn derivative_curve(&self, m: usize) -> Result<Curve> {
        if !self.order.allows(m) {
            return Err(LabError::Argument(format!("curve of order {:?} has no derivative {m}", self.order)));
        }
        let base = self.clone();
        Ok(Curve::from_map(
            self.start,
            self.end,
            self.order.lowered(m),
            self.breakpoints.clone(),
            self.dim,
            move |t: f64, k: usize, side: Side| {
                let jet = base.jet_sided(t, k + m, side)?;
                Ok(jet[m..].to_vec())
            },
        ))
    }

    /// Same values on a sub-interval.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Curve> {
        if a < self.start || b > self.end || !(a < b) {
            return Err(LabError::Argument(format!(
                "[{a}, {b}] is not a sub-interval of [{}, {}]",
                self.start, self.end
            )));
        }
        let base = self.clone();
        Ok(Curve::from_map(a, b, self.order, self.breakpoints.clone(), self.dim, move |t: f64, k: usize, side: Side| {
            base.jet_sided(t, k, side)
        }))
    }

    /// `c · γ`.
    pub fn scaled(&self, c: f64) -> Curve {
        let base = self.clone();
        Curve::from_map(self.start, self.end, self.order, self.breakpoints.clone(), self.dim, move |t: f64, k: usize, side: Side| {
            Ok(base.jet_sided(t, k, side)?.into_iter().map(|m| m * c).collect())
        })
    }

    /// Pointwise sum on a common interval.
    pub fn sum(&self, other: &Curve) -> Result<Curve> {
        if self.interval() != other.interval() || self.dim != other.dim {
            return Err(LabError::Argument("curves must share interval and dimension".into()));
        }
        let (a, b) = (self.clone(), other.clone());
        let mut bps = self.breakpoints.clone();
        bps.extend_from_slice(&other.breakpoints);
        Ok(Curve::from_map(self.start, self.end, self.order.min(other.order), bps, self.dim, move |t: f64, k: usize, side: Side| {
            let ja = a.jet_sided(t, k, side)?;
            let jb = b.jet_sided(t, k, side)?;
            Ok(ja.into_iter().zip(jb).map(|(x, y)| x + y).collect())
        }))
    }

    /// Sample points covering every smooth segment, with one-sided evaluation at
    /// both ends of each segment. `per_segment` interior points are used.
    pub fn sample_points(&self, per_segment: usize) -> Vec<(f64, Side)> {
        let knots = self.knots();
        let mut pts = Vec::new();
        for w in knots.windows(2) {
            pts.push((w[0], Side::Right));
            for i in 1..=per_segment {
                pts.push((w[0] + (w[1] - w[0]) * i as f64 / (per_segment + 1) as f64, Side::Right));
            }
            pts.push((w[1], Side::Left));
        }
        pts
    }

    /// Sampled `sup_t norm(γ^{(m)}(t))`.
    pub fn sup_norm(&self, m: usize, per_segment: usize, norm: impl Fn(&Matrix) -> f64) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for (t, side) in self.sample_points(per_segment) {
            sup = sup.max(norm(&self.eval_sided(t, m, side)?));
        }
        Ok(sup)
    }

    /// Sampled `max_{k ≤ q} sup_t norm(γ^{(k)}(t))`, the `C^q` sup-seminorm.
    pub fn sup_norm_upto(&self, q: usize, per_segment: usize, norm: impl Fn(&Matrix) -> f64) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for (t, side) in self.sample_points(per_segment) {
            for d in self.jet_sided(t, q, side)? {
                sup = sup.max(norm(&d));
            }
        }
        Ok(sup)
    }
}

/// Index of the piece used to evaluate at `t` from the given side.
pub(crate) fn locate_piece(knots: &[f64], t: f64, side: Side) -> usize {
    let last = knots.len() - 2;
    let p = match side {
        Side::Right => knots.partition_point(|&k| k <= t).saturating_sub(1),
        Side::Left => knots.partition_point(|&k| k < t).saturating_sub(1),
    };
    p.min(last)
}

/// Serializable description of the closed-form curve families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum CurveSpec {
    Constant {
        interval: [f64; 2],
        #[serde(with = "matrix_rows")]
        value: Matrix,
    },
    Polynomial {
        interval: [f64; 2],
        #[serde(with = "matrix_list")]
        coefficients: Vec<Matrix>,
    },
    Trigonometric {
        interval: [f64; 2],
        #[serde(default, with = "matrix_list")]
        polynomial: Vec<Matrix>,
        terms: Vec<TrigTerm>,
    },
    PiecewiseConstant {
        knots: Vec<f64>,
        #[serde(with = "matrix_list")]
        values: Vec<Matrix>,
    },
}

impl CurveSpec {
    pub fn build(&self) -> Result<Curve> {
        let check = |iv: &[f64; 2]| {
            if iv[0] < iv[1] {
                Ok(())
            } else {
                Err(LabError::Parse(format!("curve interval [{}, {}] is empty", iv[0], iv[1])))
            }
        };
        match self {
            CurveSpec::Constant { interval, value } => {
                check(interval)?;
                Ok(Curve::constant(interval[0], interval[1], value.clone()))
            }
            CurveSpec::Polynomial { interval, coefficients } => {
                check(interval)?;
                if coefficients.is_empty() {
                    return Err(LabError::Parse("polynomial needs coefficients".into()));
                }
                Ok(Curve::polynomial(interval[0], interval[1], coefficients.clone()))
            }
            CurveSpec::Trigonometric { interval, polynomial, terms } => {
                check(interval)?;
                if polynomial.is_empty() && terms.is_empty() {
                    return Err(LabError::Parse("trigonometric curve needs terms".into()));
                }
                Ok(Curve::closed_form(interval[0], interval[1], polynomial.clone(), terms.clone()))
            }
            CurveSpec::PiecewiseConstant { knots, values } => {
                if values.len() + 1 != knots.len() {
                    return Err(LabError::Parse("piecewise-constant curve needs one value per panel".into()));
                }
                Curve::piecewise_constant(knots.clone(), values.clone())
            }
        }
    }
}

/// Matrices as arrays of rows.
pub mod matrix_rows {
    use super::Matrix;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix, String> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err("matrix must be square and nonempty".into());
        }
        Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(to_rows(m))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }
}

pub mod matrix_list {
    use super::{matrix_rows, Matrix};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ms: &[Matrix], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(ms.iter().map(matrix_rows::to_rows))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Matrix>, D::Error> {
        let list = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        list.iter()
            .map(|rows| matrix_rows::from_rows(rows).map_err(D::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::unit;

    #[test]
    fn closed_form_derivatives() {
        let x = unit(2, 0, 1);
        let c = Curve::closed_form(
            0.0,
            1.0,
            vec![Matrix::zeros(2, 2), x.clone(), x.clone() * 3.0],
            vec![TrigTerm::sin(2.0, 0.1, x.clone())],
        );
        let t = 0.4;
        let jet = c.jet(t, 3).unwrap();
        let expect = |m: usize| -> f64 {
            let poly = match m {
                0 => t + 3.0 * t * t,
                1 => 1.0 + 6.0 * t,
                2 => 6.0,
                _ => 0.0,
            };
            let arg = 2.0 * t + 0.1;
            let trig = match m {
                0 => arg.sin(),
                1 => 2.0 * arg.cos(),
                2 => -4.0 * arg.sin(),
                _ => -8.0 * arg.cos(),
            };
            poly + trig
        };
        for (m, d) in jet.iter().enumerate() {
            assert!((d[(0, 1)] - expect(m)).abs() < 1e-13, "m = {m}");
        }
    }

    #[test]
    fn piecewise_evaluation_sides() {
        let a = unit(2, 0, 0);
        let b = unit(2, 1, 1);
        let c = Curve::piecewise_constant(vec![0.0, 0.5, 1.0], vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(c.breakpoints(), &[0.5]);
        assert_eq!(c.eval(0.5, 0).unwrap(), b);
        assert_eq!(c.eval_sided(0.5, 0, Side::Left).unwrap(), a);
        assert_eq!(c.eval(1.0, 0).unwrap(), b);
        assert_eq!(c.eval(0.0, 0).unwrap(), a);
        assert!(c.eval(1.5, 0).is_err());
        assert!(Curve::piecewise_constant(vec![0.0, 0.0, 1.0], vec![a.clone(), b]).is_err());
    }

    #[test]
    fn order_is_enforced() {
        let base = Curve::constant(0.0, 1.0, unit(2, 0, 1));
        let limited = Curve::from_map(0.0, 1.0, Order::Finite(1), vec![], 2, move |t: f64, k: usize, s: Side| base.jet_sided(t, k, s));
        assert!(limited.eval(0.5, 1).is_ok());
        assert!(limited.eval(0.5, 2).is_err());
        assert!(limited.derivative_curve(2).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let spec = CurveSpec::Trigonometric {
            interval: [0.0, 1.0],
            polynomial: vec![unit(2, 0, 1)],
            terms: vec![TrigTerm::cos(1.5, 0.0, unit(2, 1, 0))],
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back: CurveSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let c = back.build().unwrap();
        assert!((c.eval(0.0, 0).unwrap()[(1, 0)] - 1.0).abs() < 1e-15);
        let bad = r#"{"family":"constant","interval":[1.0,0.0],"value":[[0.0]]}"#;
        assert!(serde_json::from_str::<CurveSpec>(bad).unwrap().build().is_err());
    }
}
