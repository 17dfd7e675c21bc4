//! Assembly of the least-squares fitting system: data grouping by basis
//! support, the sparse collocation matrix `A` and the diagonal weights `Λ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpace, ParamPoint};
use crate::error::{Error, Result};
use crate::points::PointMatrix;

/// Data points `Q_j` with their parameters `t_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    points: PointMatrix,
    params: Vec<ParamPoint>,
}

impl DataSet {
    pub fn new(points: PointMatrix, params: Vec<ParamPoint>) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::Degenerate("data set has no points".into()));
        }
        if points.rows() != params.len() {
            return Err(Error::Shape(format!("{} points but {} parameters", points.rows(), params.len())));
        }
        if let Some(p) = params.iter().find(|p| p.dim() != params[0].dim()) {
            return Err(Error::Shape(format!("mixed parameter dimensions {} and {}", params[0].dim(), p.dim())));
        }
        Ok(Self { points, params })
    }

    pub fn points(&self) -> &PointMatrix {
        &self.points
    }

    pub fn params(&self) -> &[ParamPoint] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParamMode {
    /// Cumulative chord length, normalized to the curve domain.
    Chord,
    /// Equally spaced over the curve domain.
    Uniform,
    /// Caller-supplied parameters, validated against the domain.
    Given(Vec<ParamPoint>),
}

/// Assigns parameters to raw points. Chord and uniform modes apply to curve
/// bases only.
pub fn parameterize(points: PointMatrix, mode: ParamMode, space: &BasisSpace) -> Result<DataSet> {
    let m = points.rows();
    let params = match mode {
        ParamMode::Given(params) => {
            if let Some(bad) = params.iter().find(|t| !space.contains(t)) {
                if bad.dim() != space.dim() {
                    return Err(Error::Shape(format!("{}-D parameters for a {}-D basis", bad.dim(), space.dim())));
                }
                let (d, &value) = bad
                    .coords()
                    .iter()
                    .enumerate()
                    .find(|&(d, &u)| {
                        let (lo, hi) = space.direction(d).domain();
                        !(u >= lo && u <= hi)
                    })
                    .expect("out-of-domain coordinate");
                let (lo, hi) = space.direction(d).domain();
                return Err(Error::Domain { value, lo, hi });
            }
            params
        }
        ParamMode::Chord | ParamMode::Uniform if space.dim() != 1 => {
            return Err(Error::Config(format!(
                "automatic parameterization supports curves only; supply parameters for a {}-D basis",
                space.dim()
            )));
        }
        ParamMode::Uniform => {
            let (lo, hi) = space.direction(0).domain();
            if m == 1 {
                vec![ParamPoint::u(lo)]
            } else {
                (0..m).map(|j| ParamPoint::u(lo + (hi - lo) * j as f64 / (m - 1) as f64)).collect()
            }
        }
        ParamMode::Chord => {
            if m < 2 {
                return Err(Error::Degenerate("chord parameterization needs at least 2 points".into()));
            }
            let mut cumulative = Vec::with_capacity(m);
            let mut total = 0.0;
            cumulative.push(0.0);
            for j in 1..m {
                let step: f64 =
                    points.row(j).iter().zip(points.row(j - 1)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                total += step;
                cumulative.push(total);
            }
            if total == 0.0 {
                return Err(Error::Degenerate("all points coincide; chord length is zero".into()));
            }
            let (lo, hi) = space.direction(0).domain();
            cumulative.into_iter().map(|c| ParamPoint::u(lo + (hi - lo) * (c / total))).collect()
        }
    };
    DataSet::new(points, params)
}

/// For every control index `i`, the group `I_i` of data indices with
/// `B_i(t_j) ≠ 0`, together with those basis values.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupTable {
    // group i occupies ptr[i]..ptr[i + 1] of idx/vals
    ptr: Vec<usize>,
    idx: Vec<u32>,
    vals: Vec<f64>,
    samples: usize,
}

impl GroupTable {
    fn from_groups(groups: Vec<Vec<(usize, f64)>>, samples: usize) -> Result<Self> {
        if samples > u32::MAX as usize {
            return Err(Error::Shape(format!("{samples} samples exceed the supported size")));
        }
        let total = groups.iter().map(Vec::len).sum();
        let mut ptr = Vec::with_capacity(groups.len() + 1);
        let (mut idx, mut vals) = (Vec::with_capacity(total), Vec::with_capacity(total));
        ptr.push(0);
        for g in groups {
            for (j, b) in g {
                if j >= samples {
                    return Err(Error::Index { index: j, bound: samples });
                }
                idx.push(j as u32);
                vals.push(b);
            }
            ptr.push(idx.len());
        }
        Ok(Self { ptr, idx, vals, samples })
    }

    /// `(j, B_i(t_j))` for the members of group `i`, in increasing `j`.
    pub fn group(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + Clone + '_ {
        let (idx, vals) = self.slices(i);
        idx.iter().map(|&j| j as usize).zip(vals.iter().copied())
    }

    pub(crate) fn slices(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.ptr[i]..self.ptr[i + 1];
        (&self.idx[r.clone()], &self.vals[r])
    }

    pub fn len(&self) -> usize {
        self.ptr.len() - 1
    }

    /// Number of data points the sample indices refer to.
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn empty_groups(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.ptr[i] == self.ptr[i + 1]).collect()
    }
}

/// Classifies every data point into the groups of the basis functions that
/// do not vanish at its parameter.
pub fn build_groups(space: &BasisSpace, data: &DataSet) -> Result<GroupTable> {
    let mut groups = vec![Vec::new(); space.len()];
    for (j, t) in data.params().iter().enumerate() {
        for (i, b) in space.nonzero(t)? {
            groups[i].push((j, b));
        }
    }
    GroupTable::from_groups(groups, data.len())
}

/// Rows per parallel task; smaller blocks cost more in scheduling than they gain.
const ROW_BLOCK: usize = 1024;

/// Calls `f(row, out_row)` for every `dim`-wide row of `out`, in parallel blocks.
fn for_each_row_block(out: &mut [f64], dim: usize, f: impl Fn(usize, &mut [f64]) + Sync) {
    if dim == 0 {
        return;
    }
    out.par_chunks_mut(dim * ROW_BLOCK).enumerate().for_each(|(b, block)| {
        for (r, o) in block.chunks_exact_mut(dim).enumerate() {
            f(b * ROW_BLOCK + r, o);
        }
    });
}

/// Sparse row/column access: index and value slices of equal length.
pub(crate) trait Entries {
    fn len(&self) -> usize;
    /// # Safety
    /// `n < self.len()`.
    unsafe fn get(&self, n: usize) -> (usize, f64);
}

impl Entries for (&[u32], &[f64]) {
    #[inline(always)]
    fn len(&self) -> usize {
        self.0.len().min(self.1.len())
    }
    #[inline(always)]
    unsafe fn get(&self, n: usize) -> (usize, f64) {
        unsafe { (*self.0.get_unchecked(n) as usize, *self.1.get_unchecked(n)) }
    }
}

/// `out += Σ v · src[k]` over `(k, v)` entries, where `src` holds rows of
/// `out.len()` coordinates.
///
/// # Safety
/// Every index `k` in `entries` must satisfy `(k + 1) * out.len() <= src.len()`.
/// Callers rely on the index invariants of [`CollocationMatrix`] and
/// [`GroupTable`] after checking the operand shape.
pub(crate) unsafe fn gather<E: Entries>(entries: E, src: &[f64], out: &mut [f64]) {
    // Two interleaved partial sums hide floating-point add latency.
    #[inline(always)]
    unsafe fn fixed<const D: usize, E: Entries>(entries: E, src: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), D);
        let row = |k: usize| -> [f64; D] {
            debug_assert!((k + 1) * D <= src.len());
            unsafe { *(src.as_ptr().add(k * D) as *const [f64; D]) }
        };
        let (mut a, mut b) = ([0.0; D], [0.0; D]);
        let n = entries.len();
        let mut e = 0;
        while e + 1 < n {
            let ((k0, v0), (k1, v1)) = unsafe { (entries.get(e), entries.get(e + 1)) };
            let (s0, s1) = (row(k0), row(k1));
            for c in 0..D {
                a[c] += v0 * s0[c];
                b[c] += v1 * s1[c];
            }
            e += 2;
        }
        if e < n {
            let (k, v) = unsafe { entries.get(e) };
            let s = row(k);
            for c in 0..D {
                a[c] += v * s[c];
            }
        }
        for c in 0..D {
            out[c] += a[c] + b[c];
        }
    }
    unsafe {
        match out.len() {
            1 => fixed::<1, E>(entries, src, out),
            2 => fixed::<2, E>(entries, src, out),
            3 => fixed::<3, E>(entries, src, out),
            d => {
                for n in 0..entries.len() {
                    let (k, v) = entries.get(n);
                    for (o, s) in out.iter_mut().zip(&src[k * d..k * d + d]) {
                        *o += v * s;
                    }
                }
            }
        }
    }
}

/// Sparse `(m+1)×(n+1)` collocation matrix, stored both row- and column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    // u32 indices halve index traffic in the products
    col_idx: Vec<u32>,
    row_vals: Vec<f64>,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    col_vals: Vec<f64>,
}

impl CollocationMatrix {
    /// Builds from per-row `(column, value)` lists. Zero entries are dropped.
    pub fn from_rows(ncols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let nrows = rows.len();
        if nrows > u32::MAX as usize || ncols > u32::MAX as usize {
            return Err(Error::Shape(format!("{nrows}x{ncols} exceeds the supported matrix size")));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut row_vals = Vec::new();
        row_ptr.push(0);
        for (j, row) in rows.iter().enumerate() {
            let mut sorted: Vec<(usize, f64)> = row.iter().copied().filter(|&(_, v)| v != 0.0).collect();
            sorted.sort_by_key(|&(i, _)| i);
            for w in sorted.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Shape(format!("duplicate column {} in row {j}", w[0].0)));
                }
            }
            for (i, v) in sorted {
                if i >= ncols {
                    return Err(Error::Index { index: i, bound: ncols });
                }
                if !v.is_finite() {
                    return Err(Error::Shape(format!("non-finite entry in row {j}")));
                }
                col_idx.push(i as u32);
                row_vals.push(v);
            }
            row_ptr.push(col_idx.len());
        }

        let mut counts = vec![0usize; ncols + 1];
        for &i in &col_idx {
            counts[i as usize + 1] += 1;
        }
        for i in 0..ncols {
            counts[i + 1] += counts[i];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0; col_idx.len()];
        let mut col_vals = vec![0.0; col_idx.len()];
        for j in 0..nrows {
            for k in row_ptr[j]..row_ptr[j + 1] {
                let i = col_idx[k] as usize;
                row_idx[next[i]] = j as u32;
                col_vals[next[i]] = row_vals[k];
                next[i] += 1;
            }
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, row_vals, col_ptr, row_idx, col_vals })
    }

    pub fn from_dense_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let sparse: Vec<Vec<(usize, f64)>> =
            rows.iter().map(|r| r.as_ref().iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect()).collect();
        if rows.iter().any(|r| r.as_ref().len() != ncols) {
            return Err(Error::Shape("ragged dense rows".into()));
        }
        Self::from_rows(ncols, &sparse)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.row_vals.len()
    }

    pub fn row(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[j]..self.row_ptr[j + 1];
        self.col_idx[r.clone()].iter().map(|&c| c as usize).zip(self.row_vals[r].iter().copied())
    }

    fn row_slices(&self, j: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[j]..self.row_ptr[j + 1];
        (&self.col_idx[r.clone()], &self.row_vals[r])
    }

    fn col_slices(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.col_ptr[i]..self.col_ptr[i + 1];
        (&self.row_idx[r.clone()], &self.col_vals[r])
    }

    pub fn col(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[i]..self.col_ptr[i + 1];
        self.row_idx[r.clone()].iter().map(|&c| c as usize).zip(self.col_vals[r].iter().copied())
    }

    pub fn col_sum(&self, i: usize) -> f64 {
        self.col(i).map(|(_, v)| v).sum()
    }

    pub fn row_sum(&self, j: usize) -> f64 {
        self.row(j).map(|(_, v)| v).sum()
    }

    /// Max absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.nrows).map(|j| self.row(j).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// `A·X` for `X` with `ncols` rows.
    pub fn mul(&self, x: &PointMatrix) -> Result<PointMatrix> {
        if x.rows() != self.ncols {
            return Err(Error::Shape(format!("A is {}x{} but operand has {} rows", self.nrows, self.ncols, x.rows())));
        }
        let dim = x.dim();
        let mut out = PointMatrix::zeros(self.nrows, dim);
        // SAFETY: column indices are < ncols and x has ncols rows of width dim
        for_each_row_block(out.as_mut_slice(), dim, |j, o| unsafe { gather(self.row_slices(j), x.as_slice(), o) });
        Ok(out)
    }

    /// `Aᵀ·Y` for `Y` with `nrows` rows.
    pub fn tmul(&self, y: &PointMatrix) -> Result<PointMatrix> {
        if y.rows() != self.nrows {
            return Err(Error::Shape(format!("Aᵀ is {}x{} but operand has {} rows", self.ncols, self.nrows, y.rows())));
        }
        let dim = y.dim();
        let mut out = PointMatrix::zeros(self.ncols, dim);
        // SAFETY: row indices are < nrows and y has nrows rows of width dim
        for_each_row_block(out.as_mut_slice(), dim, |i, o| unsafe { gather(self.col_slices(i), y.as_slice(), o) });
        Ok(out)
    }

    /// Sparse `AᵀA`, `ncols × ncols`. Entry `(i, k)` is nonzero exactly when
    /// columns `i` and `k` share a row.
    pub fn gram(&self) -> Result<CollocationMatrix> {
        let rows: Vec<Vec<(usize, f64)>> = (0..self.ncols)
            .into_par_iter()
            .map_init(
                || (vec![0.0; self.ncols], vec![false; self.ncols], Vec::new()),
                |(acc, seen, touched), i| {
                    for (j, vi) in self.col(i) {
                        for (k, vk) in self.row(j) {
                            if !std::mem::replace(&mut seen[k], true) {
                                touched.push(k);
                            }
                            acc[k] += vi * vk;
                        }
                    }
                    touched.sort_unstable();
                    let row: Vec<(usize, f64)> = touched
                        .iter()
                        .map(|&k| {
                            seen[k] = false;
                            (k, std::mem::take(&mut acc[k]))
                        })
                        .collect();
                    touched.clear();
                    row
                },
            )
            .collect();
        CollocationMatrix::from_rows(self.ncols, &rows)
    }

    /// Row-major dense copy.
    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        (0..self.nrows)
            .map(|j| {
                let mut r = vec![0.0; self.ncols];
                for (i, v) in self.row(j) {
                    r[i] = v;
                }
                r
            })
            .collect()
    }
}

/// What to do with a control index whose group is empty (zero column of `A`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyGroupPolicy {
    /// Keep the control point fixed at its initial value.
    #[default]
    Freeze,
    /// Refuse to assemble.
    Strict,
}

/// Diagonal `Λ` with `d_i = 1 / Σ_{j∈I_i} B_i(t_j)`.
///
/// Frozen (empty-group) indices carry a zero multiplier so that their update
/// vanishes; every other stored weight is positive.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    diag: Vec<f64>,
    frozen: Vec<bool>,
}

impl WeightMatrix {
    pub fn from_column_sums(sums: &[f64]) -> Self {
        let frozen: Vec<bool> = sums.iter().map(|&s| s <= 0.0).collect();
        let diag = sums.iter().zip(&frozen).map(|(&s, &f)| if f { 0.0 } else { 1.0 / s }).collect();
        Self { diag, frozen }
    }

    /// Multiplier applied to the gathered difference of control `i`
    /// (zero when frozen).
    pub fn multiplier(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// `d_i`, or `None` for a frozen index where `Λ` is undefined.
    pub fn weight(&self, i: usize) -> Option<f64> {
        (!self.frozen[i]).then_some(self.diag[i])
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen[i]
    }

    pub fn frozen_indices(&self) -> Vec<usize> {
        (0..self.frozen.len()).filter(|&i| self.frozen[i]).collect()
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }
}

/// Assembled fitting system.
#[derive(Clone, Debug)]
pub struct FitProblem {
    space: Option<BasisSpace>,
    params: Vec<ParamPoint>,
    a: CollocationMatrix,
    q: PointMatrix,
    weights: WeightMatrix,
    groups: GroupTable,
}

impl FitProblem {
    /// Wraps an explicit collocation matrix (no spline attached). Groups and
    /// weights are read off the columns of `a`.
    pub fn from_matrix(a: CollocationMatrix, q: PointMatrix, policy: EmptyGroupPolicy) -> Result<Self> {
        if q.rows() != a.nrows() {
            return Err(Error::Shape(format!("A has {} rows but Q has {}", a.nrows(), q.rows())));
        }
        let groups = GroupTable::from_groups((0..a.ncols()).map(|i| a.col(i).collect()).collect(), a.nrows())?;
        Self::finish(None, Vec::new(), a, q, groups, policy)
    }

    fn finish(
        space: Option<BasisSpace>,
        params: Vec<ParamPoint>,
        a: CollocationMatrix,
        q: PointMatrix,
        groups: GroupTable,
        policy: EmptyGroupPolicy,
    ) -> Result<Self> {
        let empty = groups.empty_groups();
        if !empty.is_empty() {
            if policy == EmptyGroupPolicy::Strict {
                return Err(Error::SingularAssembly { indices: empty });
            }
            log::warn!("{} control points have empty groups and will stay frozen: {:?}", empty.len(), empty);
        }
        let sums: Vec<f64> = (0..groups.len()).map(|i| groups.group(i).map(|(_, b)| b).sum()).collect();
        let weights = WeightMatrix::from_column_sums(&sums);
        Ok(Self { space, params, a, q, weights, groups })
    }

    pub fn space(&self) -> Option<&BasisSpace> {
        self.space.as_ref()
    }

    pub fn params(&self) -> &[ParamPoint] {
        &self.params
    }

    pub fn collocation(&self) -> &CollocationMatrix {
        &self.a
    }

    pub fn data(&self) -> &PointMatrix {
        &self.q
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn groups(&self) -> &GroupTable {
        &self.groups
    }

    /// Number of control points `n + 1`.
    pub fn controls(&self) -> usize {
        self.a.ncols()
    }

    pub fn samples(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }
}

/// Builds `A`, `Λ` and the group table for `data` over `space`.
pub fn assemble(space: &BasisSpace, data: &DataSet, policy: EmptyGroupPolicy) -> Result<FitProblem> {
    if data.params()[0].dim() != space.dim() {
        return Err(Error::Shape(format!("{}-D parameters for a {}-D basis", data.params()[0].dim(), space.dim())));
    }
    if space.len() > data.len() {
        log::warn!(
            "{} control points exceed {} data points; the system is necessarily rank deficient",
            space.len(),
            data.len()
        );
    }
    let rows = data.params().par_iter().map(|t| space.nonzero(t)).collect::<Result<Vec<_>>>()?;
    let a = CollocationMatrix::from_rows(space.len(), &rows)?;
    let groups = build_groups(space, data)?;
    FitProblem::finish(Some(space.clone()), data.params().to_vec(), a, data.points().clone(), groups, policy)
}
