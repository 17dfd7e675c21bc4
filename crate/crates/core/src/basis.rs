//! B-spline bases for curves, tensor-product patches and trivariate solids,
//! all presented through one flat control index so that a spline reads
//! `P(t) = Σ_i P_i B_i(t)` regardless of its parametric dimension.
//!
//! Flat indices follow the layout `i = iw·(c_u·c_v) + iu·c_v + iv`, where
//! `c_u`, `c_v` are the control counts of the u and v directions; the v index
//! varies fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointMatrix;

/// Nondecreasing knot sequence together with the spline degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        if knots.len() < 2 * (degree + 1) {
            return Err(Error::Knots(format!(
                "{} knots is too few for degree {degree} (need at least {})",
                knots.len(),
                2 * (degree + 1)
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::Knots("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Knots("knots must be nondecreasing".into()));
        }
        let kv = Self { knots, degree };
        let (lo, hi) = kv.domain();
        if lo >= hi {
            return Err(Error::Knots(format!("empty parameter domain [{lo}, {hi}]")));
        }
        Ok(kv)
    }

    /// Uniform knots on `[0, 1]` with Bézier end conditions (end knots of
    /// multiplicity `degree + 1`), yielding `count` basis functions.
    pub fn clamped_uniform(degree: usize, count: usize) -> Result<Self> {
        if count < degree + 1 {
            return Err(Error::Knots(format!("{count} control points cannot carry degree {degree}")));
        }
        let spans = count - degree;
        let interior: Vec<f64> = (1..spans).map(|s| s as f64 / spans as f64).collect();
        Self::clamped(degree, &interior)
    }

    /// Clamped knot vector on `[0, 1]` with the given interior knots.
    pub fn clamped(degree: usize, interior: &[f64]) -> Result<Self> {
        let mut knots = vec![0.0; degree + 1];
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self::new(knots, degree)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions, `knots − degree − 1`.
    pub fn count(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Full-support domain `[t_p, t_count]`.
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.count()])
    }

    pub fn is_clamped(&self) -> bool {
        let p = self.degree;
        let n = self.knots.len();
        self.knots[..=p].iter().all(|&k| k == self.knots[0])
            && self.knots[n - p - 1..].iter().all(|&k| k == self.knots[n - 1])
    }

    /// Greville abscissa of basis function `i`.
    pub fn greville(&self, i: usize) -> f64 {
        if self.degree == 0 {
            return 0.5 * (self.knots[i] + self.knots[i + 1]);
        }
        self.knots[i + 1..=i + self.degree].iter().sum::<f64>() / self.degree as f64
    }

    fn check_domain(&self, u: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if u.is_nan() || u < lo || u > hi {
            return Err(Error::Domain { value: u, lo, hi });
        }
        Ok(())
    }

    /// Last knot span with positive length inside the domain. The right
    /// endpoint of the domain is assigned to it (left-limit convention).
    fn last_span(&self) -> usize {
        let n = self.count();
        (self.degree..n).rev().find(|&s| self.knots[s] < self.knots[s + 1]).unwrap_or(self.degree)
    }

    /// Knot span `s` with `t_s ≤ u < t_{s+1}`, `p ≤ s < count`.
    pub fn find_span(&self, u: f64) -> Result<usize> {
        self.check_domain(u)?;
        let (_, hi) = self.domain();
        if u == hi {
            return Ok(self.last_span());
        }
        // upper bound of u among knots[p..=count], minus one
        let (mut low, mut high) = (self.degree, self.count());
        while high - low > 1 {
            let mid = (low + high) / 2;
            if u < self.knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
        }
        Ok(low)
    }

    /// The `degree + 1` possibly-nonzero basis values at `u`, as
    /// `(first index, values)`. Triangular Cox–de Boor scheme.
    pub fn nonzero_basis(&self, u: f64) -> Result<(usize, Vec<f64>)> {
        let p = self.degree;
        let span = self.find_span(u)?;
        let t = &self.knots;
        let mut values = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        values[0] = 1.0;
        for j in 1..=p {
            left[j] = u - t[span + 1 - j];
            right[j] = t[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { values[r] / denom };
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        Ok((span - p, values))
    }
}

/// Value of the `i`-th B-spline basis function of `kv` at `u`, by the
/// Cox–de Boor recursion.
pub fn basis_eval(kv: &KnotVector, i: usize, u: f64) -> Result<f64> {
    if i >= kv.count() {
        return Err(Error::Index { index: i, bound: kv.count() });
    }
    kv.check_domain(u)?;
    let at_end = u == kv.domain().1;
    Ok(cox_de_boor(kv, i, kv.degree, u, at_end.then(|| kv.last_span())))
}

fn cox_de_boor(kv: &KnotVector, i: usize, p: usize, u: f64, end_span: Option<usize>) -> f64 {
    let t = &kv.knots;
    if p == 0 {
        return match end_span {
            Some(s) => (i == s) as u8 as f64,
            None => (t[i] <= u && u < t[i + 1]) as u8 as f64,
        };
    }
    let mut value = 0.0;
    let left_width = t[i + p] - t[i];
    if left_width > 0.0 {
        value += (u - t[i]) / left_width * cox_de_boor(kv, i, p - 1, u, end_span);
    }
    let right_width = t[i + p + 1] - t[i + 1];
    if right_width > 0.0 {
        value += (t[i + p + 1] - u) / right_width * cox_de_boor(kv, i + 1, p - 1, u, end_span);
    }
    value
}

/// Point in parameter space: `u`, `(u, v)` or `(u, v, w)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamPoint {
    coords: [f64; 3],
    dim: usize,
}

impl ParamPoint {
    pub fn new(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() || coords.len() > 3 {
            return Err(Error::Shape(format!("parameter point needs 1-3 coordinates, got {}", coords.len())));
        }
        let mut c = [0.0; 3];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Self { coords: c, dim: coords.len() })
    }

    pub fn u(u: f64) -> Self {
        Self { coords: [u, 0.0, 0.0], dim: 1 }
    }

    pub fn uv(u: f64, v: f64) -> Self {
        Self { coords: [u, v, 0.0], dim: 2 }
    }

    pub fn uvw(u: f64, v: f64, w: f64) -> Self {
        Self { coords: [u, v, w], dim: 3 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }
}

/// Per-direction knot vectors of a curve (1), patch (2) or solid (3).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpace {
    directions: Vec<KnotVector>,
}

impl BasisSpace {
    pub fn new(directions: Vec<KnotVector>) -> Result<Self> {
        if directions.is_empty() || directions.len() > 3 {
            return Err(Error::Shape(format!("basis dimensionality must be 1-3, got {}", directions.len())));
        }
        Ok(Self { directions })
    }

    /// Clamped uniform knots on `[0,1]` in every direction.
    pub fn clamped_uniform(degrees: &[usize], counts: &[usize]) -> Result<Self> {
        if degrees.len() != counts.len() {
            return Err(Error::Shape(format!("{} degrees given for {} directions", degrees.len(), counts.len())));
        }
        let dirs =
            degrees.iter().zip(counts).map(|(&d, &c)| KnotVector::clamped_uniform(d, c)).collect::<Result<Vec<_>>>()?;
        Self::new(dirs)
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    pub fn direction(&self, d: usize) -> &KnotVector {
        &self.directions[d]
    }

    pub fn directions(&self) -> &[KnotVector] {
        &self.directions
    }

    pub fn counts(&self) -> Vec<usize> {
        self.directions.iter().map(KnotVector::count).collect()
    }

    /// Total number of basis functions `n + 1`.
    pub fn len(&self) -> usize {
        self.directions.iter().map(KnotVector::count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Maximum number of functions nonzero at one parameter point.
    pub fn max_support_overlap(&self) -> usize {
        self.directions.iter().map(|k| k.degree() + 1).product()
    }

    pub fn flatten_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.dim() {
            return Err(Error::Shape(format!("{} indices for a {}-D basis", idx.len(), self.dim())));
        }
        for (&k, kv) in idx.iter().zip(&self.directions) {
            if k >= kv.count() {
                return Err(Error::Index { index: k, bound: kv.count() });
            }
        }
        let c = self.counts();
        Ok(match *idx {
            [iu] => iu,
            [iu, iv] => iu * c[1] + iv,
            [iu, iv, iw] => iw * c[0] * c[1] + iu * c[1] + iv,
            _ => unreachable!(),
        })
    }

    /// Per-direction indices `(u[, v[, w]])` of flat index `i`.
    pub fn unflatten_index(&self, i: usize) -> Result<Vec<usize>> {
        if i >= self.len() {
            return Err(Error::Index { index: i, bound: self.len() });
        }
        let c = self.counts();
        Ok(match self.dim() {
            1 => vec![i],
            2 => vec![i / c[1], i % c[1]],
            _ => {
                let layer = c[0] * c[1];
                let r = i % layer;
                vec![r / c[1], r % c[1], i / layer]
            }
        })
    }

    fn check_point(&self, t: &ParamPoint) -> Result<()> {
        if t.dim() != self.dim() {
            return Err(Error::Shape(format!("{}-D parameter for a {}-D basis", t.dim(), self.dim())));
        }
        Ok(())
    }

    /// All basis functions nonzero at `t`, as `(flat index, value)` pairs.
    /// Exact zeros from the recursion are dropped.
    pub fn nonzero(&self, t: &ParamPoint) -> Result<Vec<(usize, f64)>> {
        self.check_point(t)?;
        let per_dir =
            self.directions.iter().zip(t.coords()).map(|(kv, &u)| kv.nonzero_basis(u)).collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(self.max_support_overlap());
        let mut idx = vec![0usize; self.dim()];
        self.tensor_walk(&per_dir, 0, 1.0, &mut idx, &mut out)?;
        Ok(out)
    }

    fn tensor_walk(
        &self,
        per_dir: &[(usize, Vec<f64>)],
        d: usize,
        acc: f64,
        idx: &mut [usize],
        out: &mut Vec<(usize, f64)>,
    ) -> Result<()> {
        if d == per_dir.len() {
            if acc > 0.0 {
                out.push((self.flatten_index(idx)?, acc));
            }
            return Ok(());
        }
        let (first, values) = &per_dir[d];
        for (k, &b) in values.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            idx[d] = first + k;
            self.tensor_walk(per_dir, d + 1, acc * b, idx, out)?;
        }
        Ok(())
    }

    /// Greville point of flat index `i`.
    pub fn greville(&self, i: usize) -> Result<ParamPoint> {
        let idx = self.unflatten_index(i)?;
        let g: Vec<f64> = idx.iter().zip(&self.directions).map(|(&k, kv)| kv.greville(k)).collect();
        ParamPoint::new(&g)
    }

    pub fn contains(&self, t: &ParamPoint) -> bool {
        t.dim() == self.dim()
            && t.coords().iter().zip(&self.directions).all(|(&u, kv)| {
                let (lo, hi) = kv.domain();
                u >= lo && u <= hi
            })
    }
}

/// `B_i(t)`: product of per-direction basis values at the unflattened indices.
pub fn unified_basis_eval(space: &BasisSpace, i: usize, t: &ParamPoint) -> Result<f64> {
    space.check_point(t)?;
    let idx = space.unflatten_index(i)?;
    idx.iter()
        .zip(space.directions())
        .zip(t.coords())
        .try_fold(1.0, |acc, ((&k, kv), &u)| Ok(acc * basis_eval(kv, k, u)?))
}

/// `P(t) = Σ_i P_i B_i(t)`.
pub fn evaluate_form(space: &BasisSpace, controls: &PointMatrix, t: &ParamPoint) -> Result<Vec<f64>> {
    if controls.rows() != space.len() {
        return Err(Error::Shape(format!(
            "{} control points for a basis of {} functions",
            controls.rows(),
            space.len()
        )));
    }
    let mut out = vec![0.0; controls.dim()];
    for (i, b) in space.nonzero(t)? {
        for (o, &p) in out.iter_mut().zip(controls.row(i)) {
            *o += b * p;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cubic_bezier() -> KnotVector {
        KnotVector::new(vec![0., 0., 0., 0., 1., 1., 1., 1.], 3).unwrap()
    }

    #[test]
    fn degree_zero_indicator() {
        let kv = KnotVector::new(vec![0.0, 1.0], 0).unwrap();
        assert_eq!(basis_eval(&kv, 0, 0.5).unwrap(), 1.0);
        assert_eq!(basis_eval(&kv, 0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn cubic_matches_bernstein() {
        let kv = cubic_bezier();
        let bernstein = |i: usize, u: f64| -> f64 {
            let c = [1.0, 3.0, 3.0, 1.0][i];
            c * u.powi(i as i32) * (1.0 - u).powi(3 - i as i32)
        };
        assert_abs_diff_eq!(basis_eval(&kv, 1, 0.5).unwrap(), 0.375, epsilon = 1e-15);
        for s in 0..=20 {
            let u = s as f64 / 20.0;
            for i in 0..4 {
                assert_abs_diff_eq!(basis_eval(&kv, i, u).unwrap(), bernstein(i, u), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn right_endpoint_takes_left_limit() {
        let kv = KnotVector::clamped_uniform(3, 7).unwrap();
        let sum: f64 = (0..7).map(|i| basis_eval(&kv, i, 1.0).unwrap()).sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-15);
        assert_eq!(basis_eval(&kv, 6, 1.0).unwrap(), 1.0);
        let (first, vals) = kv.nonzero_basis(1.0).unwrap();
        assert_eq!(first + vals.len() - 1, 6);
        assert_eq!(*vals.last().unwrap(), 1.0);
    }

    #[test]
    fn domain_and_index_errors() {
        let kv = cubic_bezier();
        assert!(matches!(basis_eval(&kv, 4, 0.5), Err(Error::Index { .. })));
        assert!(matches!(basis_eval(&kv, 0, 1.5), Err(Error::Domain { .. })));
        assert!(matches!(basis_eval(&kv, 0, -0.1), Err(Error::Domain { .. })));
        assert!(matches!(kv.find_span(f64::NAN), Err(Error::Domain { .. })));
    }

    #[test]
    fn knot_validation() {
        assert!(KnotVector::new(vec![0., 0., 1.], 1).is_err());
        assert!(KnotVector::new(vec![0., 1., 0.5, 1.], 1).is_err());
        assert!(KnotVector::new(vec![0., 0., 0., 0.], 1).is_err());
        let kv = KnotVector::clamped_uniform(3, 6).unwrap();
        assert_eq!(kv.knots(), &[0., 0., 0., 0., 1. / 3., 2. / 3., 1., 1., 1., 1.]);
        assert!(kv.is_clamped());
        assert_eq!(kv.count(), 6);
    }

    #[test]
    fn patch_index_layout() {
        // five control points along v, so i = 7 -> (u 1, v 2)
        let s = BasisSpace::clamped_uniform(&[3, 3], &[5, 5]).unwrap();
        assert_eq!(s.unflatten_index(7).unwrap(), vec![1, 2]);
        assert_eq!(s.flatten_index(&[1, 2]).unwrap(), 7);
    }

    #[test]
    fn solid_index_layout() {
        // fastest-varying (v) count 3, u count 4: i = 17 -> (u 1, v 2, w 1)
        let s = BasisSpace::clamped_uniform(&[2, 2, 1], &[4, 3, 2]).unwrap();
        assert_eq!(s.unflatten_index(17).unwrap(), vec![1, 2, 1]);
        assert_eq!(s.flatten_index(&[1, 2, 1]).unwrap(), 17);
        assert!(matches!(s.unflatten_index(24), Err(Error::Index { .. })));
        assert!(matches!(s.flatten_index(&[4, 0, 0]), Err(Error::Index { .. })));
    }

    #[test]
    fn curve_unified_equals_basis_eval() {
        let kv = KnotVector::clamped(2, &[0.2, 0.5, 0.5, 0.9]).unwrap();
        let s = BasisSpace::new(vec![kv.clone()]).unwrap();
        for k in 0..=40 {
            let u = k as f64 / 40.0;
            for i in 0..kv.count() {
                assert_eq!(unified_basis_eval(&s, i, &ParamPoint::u(u)).unwrap(), basis_eval(&kv, i, u).unwrap());
            }
        }
    }

    #[test]
    fn patch_is_separable() {
        let s = BasisSpace::clamped_uniform(&[2, 3], &[4, 6]).unwrap();
        let t = ParamPoint::uv(0.37, 0.81);
        for i in 0..s.len() {
            let idx = s.unflatten_index(i).unwrap();
            let expect =
                basis_eval(s.direction(0), idx[0], 0.37).unwrap() * basis_eval(s.direction(1), idx[1], 0.81).unwrap();
            assert_eq!(unified_basis_eval(&s, i, &t).unwrap(), expect);
        }
    }

    #[test]
    fn tricubic_partition_of_unity() {
        let s = BasisSpace::clamped_uniform(&[3, 3, 3], &[6, 6, 6]).unwrap();
        for t in [ParamPoint::uvw(0.1, 0.5, 0.9), ParamPoint::uvw(0.33, 0.67, 0.999), ParamPoint::uvw(0.0, 1.0, 0.5)] {
            let sum: f64 = (0..s.len()).map(|i| unified_basis_eval(&s, i, &t).unwrap()).sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn form_reproduces_constants_and_endpoints() {
        let s = BasisSpace::clamped_uniform(&[3], &[4]).unwrap();
        let c = PointMatrix::from_rows(&vec![vec![2.0, -1.0]; 4]).unwrap();
        for k in 0..=10 {
            let v = evaluate_form(&s, &c, &ParamPoint::u(k as f64 / 10.0)).unwrap();
            assert_abs_diff_eq!(v[0], 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(v[1], -1.0, epsilon = 1e-14);
        }
        let bez = PointMatrix::from_rows(&[[0.0, 0.0], [1.0, 2.0], [3.0, 2.0], [4.0, 0.0]]).unwrap();
        assert_eq!(evaluate_form(&s, &bez, &ParamPoint::u(0.0)).unwrap(), vec![0.0, 0.0]);
        assert_eq!(evaluate_form(&s, &bez, &ParamPoint::u(1.0)).unwrap(), vec![4.0, 0.0]);
        let scaled = evaluate_form(&s, &bez.scaled(2.5), &ParamPoint::u(0.3)).unwrap();
        let base = evaluate_form(&s, &bez, &ParamPoint::u(0.3)).unwrap();
        assert_abs_diff_eq!(scaled[1], 2.5 * base[1], epsilon = 1e-14);
        assert!(matches!(evaluate_form(&s, &PointMatrix::zeros(3, 2), &ParamPoint::u(0.1)), Err(Error::Shape(_))));
    }

    fn arb_knots() -> impl Strategy<Value = KnotVector> {
        (0usize..=4, prop::collection::vec(0.0f64..1.0, 0..8)).prop_map(|(p, mut interior)| {
            interior.sort_by(f64::total_cmp);
            KnotVector::clamped(p, &interior).unwrap()
        })
    }

    proptest! {
        #[test]
        fn nonnegative_local_and_unit_sum(kv in arb_knots(), u in 0.0f64..=1.0) {
            let p = kv.degree();
            let mut sum = 0.0;
            for i in 0..kv.count() {
                let b = basis_eval(&kv, i, u).unwrap();
                prop_assert!(b >= 0.0);
                let (a, z) = (kv.knots()[i], kv.knots()[i + p + 1]);
                if u < a || u > z {
                    prop_assert_eq!(b, 0.0);
                }
                sum += b;
            }
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn triangular_scheme_matches_recursion(kv in arb_knots(), u in 0.0f64..=1.0) {
            let (first, vals) = kv.nonzero_basis(u).unwrap();
            for i in 0..kv.count() {
                let direct = basis_eval(&kv, i, u).unwrap();
                let tri = if i >= first && i < first + vals.len() { vals[i - first] } else { 0.0 };
                prop_assert!((direct - tri).abs() <= 1e-13, "i={} direct={} tri={}", i, direct, tri);
            }
        }

        #[test]
        fn index_round_trip(cu in 1usize..6, cv in 1usize..6, cw in 1usize..6, dim in 1usize..=3) {
            let counts = [cu + 1, cv + 1, cw + 1];
            let s = BasisSpace::clamped_uniform(&vec![1; dim], &counts[..dim]).unwrap();
            for i in 0..s.len() {
                let idx = s.unflatten_index(i).unwrap();
                prop_assert_eq!(s.flatten_index(&idx).unwrap(), i);
            }
        }
    }
}
