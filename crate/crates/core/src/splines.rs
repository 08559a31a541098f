//! Univariate and tensor-product B-spline / NURBS bases.
//!
//! Knot vectors are always open (end knots repeated `degree + 1` times). Basis
//! evaluation uses the triangular Cox–de Boor recurrence and returns only the
//! `degree + 1` functions that can be nonzero at the evaluation point.

use crate::error::{Error, Result};

/// Relative slack allowed when a parameter sits on the ends of the knot range.
const RANGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

/// A non-degenerate knot span `[lo, hi)`; `index` is the knot index `i` with
/// `knots[i] <= x < knots[i + 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Span {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(Error::InvalidKnots(format!(
                "{} knots cannot hold an open vector of degree {p}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidKnots("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("knots must be non-decreasing".into()));
        }
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if !(last > first) {
            return Err(Error::InvalidKnots("empty parameter range".into()));
        }
        let lead = knots.iter().take_while(|&&k| k == first).count();
        let trail = knots.iter().rev().take_while(|&&k| k == last).count();
        if lead != p + 1 || trail != p + 1 {
            return Err(Error::InvalidKnots(format!(
                "not open: end multiplicities {lead}/{trail}, expected {}",
                p + 1
            )));
        }
        let mut run = 1;
        for w in knots[lead - 1..knots.len() - trail + 1].windows(2) {
            run = if w[1] == w[0] { run + 1 } else { 1 };
            if run > p + 1 {
                return Err(Error::InvalidKnots(format!(
                    "interior knot {} has multiplicity above {}",
                    w[0],
                    p + 1
                )));
            }
        }
        Ok(Self { knots, degree })
    }

    /// Open knot vector on `[0, 1]` with `n_spans` equal spans and simple interior knots.
    pub fn uniform(degree: usize, n_spans: usize) -> Self {
        let breaks: Vec<f64> = (0..=n_spans).map(|j| j as f64 / n_spans as f64).collect();
        Self::from_breakpoints(degree, &breaks, &vec![1; n_spans.saturating_sub(1)])
            .expect("uniform knot vector is valid")
    }

    /// Builds an open knot vector from strictly increasing breakpoints and
    /// one multiplicity per interior breakpoint.
    pub fn from_breakpoints(degree: usize, breaks: &[f64], interior_mult: &[usize]) -> Result<Self> {
        if breaks.len() < 2 || interior_mult.len() + 2 != breaks.len() {
            return Err(Error::InvalidKnots(format!(
                "{} breakpoints with {} interior multiplicities",
                breaks.len(),
                interior_mult.len()
            )));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidKnots("breakpoints must increase strictly".into()));
        }
        let mut knots = vec![breaks[0]; degree + 1];
        for (b, &m) in breaks[1..breaks.len() - 1].iter().zip(interior_mult) {
            knots.extend(std::iter::repeat(*b).take(m));
        }
        knots.extend(std::iter::repeat(breaks[breaks.len() - 1]).take(degree + 1));
        Self::new(knots, degree)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn first(&self) -> f64 {
        self.knots[0]
    }

    pub fn last(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Distinct knot values in increasing order.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for &k in &self.knots {
            if out.last() != Some(&k) {
                out.push(k);
            }
        }
        out
    }

    /// `(value, multiplicity)` for every interior breakpoint.
    pub fn interior_multiplicities(&self) -> Vec<(f64, usize)> {
        let p = self.degree;
        let inner = &self.knots[p + 1..self.knots.len() - p - 1];
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &k in inner {
            match out.last_mut() {
                Some((v, m)) if *v == k => *m += 1,
                _ => out.push((k, 1)),
            }
        }
        out
    }

    /// Non-degenerate spans in increasing order.
    pub fn spans(&self) -> Vec<Span> {
        let p = self.degree;
        (p..self.num_basis())
            .filter(|&i| self.knots[i + 1] > self.knots[i])
            .map(|i| Span {
                index: i,
                lo: self.knots[i],
                hi: self.knots[i + 1],
            })
            .collect()
    }

    pub fn num_spans(&self) -> usize {
        self.breakpoints().len() - 1
    }

    fn clamp_to_range(&self, x: f64) -> Result<f64> {
        let (lo, hi) = (self.first(), self.last());
        let slack = RANGE_SLACK * (hi - lo);
        if !(x >= lo - slack && x <= hi + slack) {
            return Err(Error::Domain { value: x, lo, hi });
        }
        Ok(x.clamp(lo, hi))
    }

    /// Knot index `i` with `knots[i] <= x < knots[i+1]`; the right end of the
    /// range belongs to the last non-degenerate span.
    pub fn find_span(&self, x: f64) -> Result<usize> {
        let x = self.clamp_to_range(x)?;
        Ok(self.span_of_clamped(x))
    }

    fn span_of_clamped(&self, x: f64) -> usize {
        let n = self.num_basis();
        let p = self.degree;
        if x >= self.knots[n] {
            return n - 1;
        }
        // knots[p] <= x < knots[n]
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Values of the `degree + 1` functions that may be nonzero at `x`,
    /// together with the index of the first one.
    pub fn eval_basis(&self, x: f64) -> Result<(usize, Vec<f64>)> {
        let x = self.clamp_to_range(x)?;
        let span = self.span_of_clamped(x);
        Ok((span - self.degree, self.basis_funs(span, x)))
    }

    fn basis_funs(&self, span: usize, x: f64) -> Vec<f64> {
        let p = self.degree;
        let u = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// Derivative table `ders[m][j]` (order `m`, active function `j`) up to
    /// `max_order`. Orders above the degree are exact zeros.
    pub fn eval_basis_derivs(&self, x: f64, max_order: usize) -> Result<(usize, Vec<Vec<f64>>)> {
        let x = self.clamp_to_range(x)?;
        let span = self.span_of_clamped(x);
        Ok((span - self.degree, self.ders_basis_funs(span, x, max_order)))
    }

    pub(crate) fn ders_basis_funs(&self, span: usize, x: f64, max_order: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                // lower triangle holds knot differences
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; max_order + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let n = max_order.min(p);
        let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=n {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize) - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=n {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }

    /// Range of spans (indices into [`Self::spans`]) covered by the support of
    /// basis function `i`.
    pub fn support_spans(&self, i: usize) -> (usize, usize) {
        let spans = self.spans();
        let lo = self.knots[i];
        let hi = self.knots[i + self.degree + 1];
        let first = spans.iter().position(|s| s.lo >= lo).unwrap_or(0);
        let last = spans.iter().rposition(|s| s.hi <= hi).unwrap_or(spans.len() - 1);
        (first, last)
    }

    /// Bisects every non-degenerate span `times` times. Inserted knots are simple.
    pub fn h_refine(&self, times: usize) -> KnotVector {
        let mut kv = self.clone();
        for _ in 0..times {
            let mids: Vec<f64> = kv.spans().iter().map(|s| 0.5 * (s.lo + s.hi)).collect();
            kv = kv.with_inserted(&mids);
        }
        kv
    }

    /// Subdivides every span into `parts` equal pieces.
    pub fn subdivide(&self, parts: usize) -> KnotVector {
        if parts <= 1 {
            return self.clone();
        }
        let mut new = Vec::new();
        for s in self.spans() {
            for j in 1..parts {
                new.push(s.lo + s.len() * j as f64 / parts as f64);
            }
        }
        self.with_inserted(&new)
    }

    fn with_inserted(&self, extra: &[f64]) -> KnotVector {
        let mut knots = self.knots.clone();
        knots.extend_from_slice(extra);
        knots.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
        KnotVector {
            knots,
            degree: self.degree,
        }
    }

    /// Inserts `x` once (Boehm). `coeffs[i]` is the coefficient vector of basis
    /// function `i` (homogeneous coordinates for rational curves).
    pub fn insert_knot(&self, x: f64, coeffs: &[Vec<f64>]) -> Result<(KnotVector, Vec<Vec<f64>>)> {
        let p = self.degree;
        if coeffs.len() != self.num_basis() {
            return Err(Error::Config(format!(
                "{} coefficients for {} basis functions",
                coeffs.len(),
                self.num_basis()
            )));
        }
        let x = self.clamp_to_range(x)?;
        if x <= self.first() || x >= self.last() {
            return Err(Error::Config("knot insertion requires an interior parameter".into()));
        }
        let k = self.span_of_clamped(x);
        let s = self.knots.iter().filter(|&&u| u == x).count();
        if s >= p + 1 {
            return Err(Error::InvalidKnots(format!("knot {x} already has multiplicity {s}")));
        }
        let u = &self.knots;
        let dim = coeffs[0].len();
        let mut out = Vec::with_capacity(coeffs.len() + 1);
        for i in 0..=coeffs.len() {
            let q = if i + p <= k {
                coeffs[i].clone()
            } else if i + s >= k + 1 {
                coeffs[i - 1].clone()
            } else {
                let a = (x - u[i]) / (u[i + p] - u[i]);
                (0..dim)
                    .map(|c| a * coeffs[i][c] + (1.0 - a) * coeffs[i - 1][c])
                    .collect()
            };
            out.push(q);
        }
        let mut knots = u.clone();
        knots.insert(k + 1, x);
        Ok((KnotVector { knots, degree: p }, out))
    }
}

/// Power-law breakpoints `(j / n)^(1/mu)`, measured from 0 or mirrored so that
/// the refinement concentrates at 1.
pub fn graded_breakpoints(n_spans: usize, mu: f64, toward_upper: bool) -> Result<Vec<f64>> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::Config(format!("grading exponent {mu} outside (0, 1]")));
    }
    if n_spans < 1 {
        return Err(Error::Config("graded mesh needs at least one span".into()));
    }
    let n = n_spans as f64;
    let mut t: Vec<f64> = (0..=n_spans).map(|j| (j as f64 / n).powf(1.0 / mu)).collect();
    t[0] = 0.0;
    t[n_spans] = 1.0;
    if toward_upper {
        t = t.iter().rev().map(|v| 1.0 - v).collect();
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradingConfig {
    /// Grading exponent in `(0, 1]`; 1 means no grading.
    pub mu_grading: f64,
    /// Parametric corner: bit `j` set means the singular point sits at
    /// parameter 1 in direction `j`.
    pub singular_corner: usize,
    /// Singularity exponent in `(0, 1)`.
    pub lambda: f64,
    pub levels: usize,
}

impl GradingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_grading > 0.0 && self.mu_grading <= 1.0) {
            return Err(Error::Config(format!(
                "grading exponent {} outside (0, 1]",
                self.mu_grading
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!(
                "singularity exponent {} outside (0, 1)",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Open knot vector of the given degree with graded simple interior knots
/// along parametric `direction`.
pub fn graded_knots(
    degree: usize,
    n_spans: usize,
    cfg: &GradingConfig,
    direction: usize,
) -> Result<KnotVector> {
    if !(cfg.mu_grading > 0.0 && cfg.mu_grading <= 1.0) {
        return Err(Error::Config(format!(
            "grading exponent {} outside (0, 1]",
            cfg.mu_grading
        )));
    }
    if n_spans < 2 {
        return Err(Error::Config("graded knots need at least two spans".into()));
    }
    let upper = cfg.singular_corner >> direction & 1 == 1;
    let breaks = graded_breakpoints(n_spans, cfg.mu_grading, upper)?;
    KnotVector::from_breakpoints(degree, &breaks, &vec![1; n_spans - 1])
}

/// First active index, values and first derivatives of a univariate basis.
type Univariate = (usize, Vec<f64>, Vec<f64>);

fn univariate(kv: &KnotVector, x: f64) -> Result<Univariate> {
    let (f, ders) = kv.eval_basis_derivs(x, 1)?;
    let mut it = ders.into_iter();
    let v = it.next().unwrap_or_default();
    let dv = it.next().unwrap_or_else(|| vec![0.0; v.len()]);
    Ok((f, v, dv))
}

/// Tensor product of up to three univariate bases with optional NURBS weights.
///
/// Functions are numbered lexicographically with direction 0 running fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBasis {
    dirs: Vec<KnotVector>,
    weights: Option<Vec<f64>>,
}

/// Active functions of a tensor basis at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEval {
    /// First active index per direction.
    pub first: [usize; 3],
    /// Number of active functions per direction (1 for unused directions).
    pub counts: [usize; 3],
    pub values: Vec<f64>,
    /// Parametric gradients; unused directions are zero.
    pub grads: Vec<[f64; 3]>,
}

impl TensorEval {
    /// Flat (patch-level) indices of the active functions, in the same order
    /// as `values`.
    pub fn indices(&self, sizes: [usize; 3]) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.values.len());
        for c in 0..self.counts[2] {
            for b in 0..self.counts[1] {
                for a in 0..self.counts[0] {
                    let (i, j, k) = (self.first[0] + a, self.first[1] + b, self.first[2] + c);
                    out.push(i + sizes[0] * (j + sizes[1] * k));
                }
            }
        }
        out
    }
}

impl TensorBasis {
    pub fn new(dirs: Vec<KnotVector>, weights: Option<Vec<f64>>) -> Result<Self> {
        if dirs.is_empty() || dirs.len() > 3 {
            return Err(Error::Config(format!("{} parametric directions", dirs.len())));
        }
        let size: usize = dirs.iter().map(KnotVector::num_basis).product();
        if let Some(w) = &weights {
            if w.len() != size {
                return Err(Error::Config(format!("{} weights for {} functions", w.len(), size)));
            }
            if w.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Config("NURBS weights must be strictly positive".into()));
            }
        }
        Ok(Self { dirs, weights })
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }

    pub fn dirs(&self) -> &[KnotVector] {
        &self.dirs
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_rational(&self) -> bool {
        self.weights.is_some()
    }

    pub fn sizes(&self) -> [usize; 3] {
        let mut s = [1; 3];
        for (d, kv) in self.dirs.iter().enumerate() {
            s[d] = kv.num_basis();
        }
        s
    }

    pub fn size(&self) -> usize {
        self.sizes().iter().product()
    }

    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        let s = self.sizes();
        idx[0] + s[0] * (idx[1] + s[1] * idx[2])
    }

    /// Values and parametric gradients of the `prod(k_j + 1)` active functions.
    pub fn eval(&self, point: &[f64]) -> Result<TensorEval> {
        if point.len() != self.dim() {
            return Err(Error::Config(format!(
                "point of dimension {} for a {}-variate basis",
                point.len(),
                self.dim()
            )));
        }
        let mut rows = Vec::with_capacity(self.dim());
        for (d, kv) in self.dirs.iter().enumerate() {
            rows.push(univariate(kv, point[d])?);
        }
        let refs: Vec<&Univariate> = rows.iter().collect();
        Ok(self.combine(&refs))
    }

    /// Evaluates on the tensor grid `coords[0] × coords[1] × …`, direction 0
    /// fastest; univariate values are computed once per coordinate.
    pub fn eval_grid(&self, coords: &[Vec<f64>]) -> Result<Vec<TensorEval>> {
        if coords.len() != self.dim() {
            return Err(Error::Config(format!(
                "grid of dimension {} for a {}-variate basis",
                coords.len(),
                self.dim()
            )));
        }
        let tabs: Vec<Vec<Univariate>> = self
            .dirs
            .iter()
            .zip(coords)
            .map(|(kv, xs)| xs.iter().map(|&x| univariate(kv, x)).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        let lens: Vec<usize> = coords.iter().map(Vec::len).collect();
        let total: usize = lens.iter().product();
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let refs: Vec<&Univariate> = tabs
                .iter()
                .zip(&lens)
                .map(|(t, &n)| {
                    let r = &t[rem % n];
                    rem /= n;
                    r
                })
                .collect();
            out.push(self.combine(&refs));
        }
        Ok(out)
    }

    fn combine(&self, rows: &[&Univariate]) -> TensorEval {
        let unit: Univariate = (0, vec![1.0], vec![0.0]);
        let mut first = [0usize; 3];
        let mut counts = [1usize; 3];
        let mut tables: [&Univariate; 3] = [&unit, &unit, &unit];
        for (d, r) in rows.iter().enumerate() {
            first[d] = r.0;
            counts[d] = r.1.len();
            tables[d] = r;
        }
        let tables = [(&tables[0].1, &tables[0].2), (&tables[1].1, &tables[1].2), (&tables[2].1, &tables[2].2)];
        let n = counts.iter().product();
        let mut values = Vec::with_capacity(n);
        let mut grads = Vec::with_capacity(n);
        for c in 0..counts[2] {
            for b in 0..counts[1] {
                for a in 0..counts[0] {
                    let (v0, d0) = (tables[0].0[a], tables[0].1[a]);
                    let (v1, d1) = (tables[1].0[b], tables[1].1[b]);
                    let (v2, d2) = (tables[2].0[c], tables[2].1[c]);
                    values.push(v0 * v1 * v2);
                    grads.push([d0 * v1 * v2, v0 * d1 * v2, v0 * v1 * d2]);
                }
            }
        }
        let mut ev = TensorEval {
            first,
            counts,
            values,
            grads,
        };
        if let Some(w) = &self.weights {
            let idx = ev.indices(self.sizes());
            let mut wsum = 0.0;
            let mut wgrad = [0.0; 3];
            for (l, &gi) in idx.iter().enumerate() {
                wsum += w[gi] * ev.values[l];
                for d in 0..3 {
                    wgrad[d] += w[gi] * ev.grads[l][d];
                }
            }
            for (l, &gi) in idx.iter().enumerate() {
                let n = ev.values[l];
                let dn = ev.grads[l];
                ev.values[l] = w[gi] * n / wsum;
                for d in 0..3 {
                    ev.grads[l][d] = w[gi] * (dn[d] * wsum - n * wgrad[d]) / (wsum * wsum);
                }
            }
        }
        ev
    }
}
