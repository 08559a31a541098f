//! Patch mappings, metric quantities and multipatch topology.
//!
//! Every patch maps the unit parameter box `[0,1]^d` into `R^n` (`n >= d`).
//! Volumetric patches have `n == d`; surface patches have `d = 2, n = 3`.
//! Both are handled through the first fundamental form `F = J^T J`, so a
//! volumetric patch is simply the case where `J` is square.

use crate::error::{Error, Result};
use crate::splines::{KnotVector, TensorBasis, TensorEval};

pub type Point = [f64; 3];

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// A side of the parameter box: `axis` is held fixed at 0 (`upper == false`)
/// or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Side {
    pub axis: usize,
    pub upper: bool,
}

impl Side {
    pub fn new(axis: usize, upper: bool) -> Self {
        Self { axis, upper }
    }

    /// 0 = west, 1 = east, 2 = south, 3 = north, 4 = front, 5 = back.
    pub fn index(&self) -> usize {
        2 * self.axis + self.upper as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::new(i / 2, i % 2 == 1)
    }

    pub fn all(dim: usize) -> impl Iterator<Item = Side> {
        (0..2 * dim).map(Side::from_index)
    }

    /// Parametric directions running along this side, in increasing order.
    pub fn tangent_axes(&self, dim: usize) -> Vec<usize> {
        (0..dim).filter(|&a| a != self.axis).collect()
    }

    /// Lifts face coordinates `t` (one per tangent axis) into the parameter box.
    pub fn lift(&self, t: &[f64], dim: usize) -> Vec<f64> {
        let mut x = vec![0.0; dim];
        x[self.axis] = if self.upper { 1.0 } else { 0.0 };
        for (v, a) in t.iter().zip(self.tangent_axes(dim)) {
            x[a] = *v;
        }
        x
    }

    /// Outward parametric normal sign.
    pub fn sign(&self) -> f64 {
        if self.upper {
            1.0
        } else {
            -1.0
        }
    }
}

/// Parametric partial derivatives `cols[a] = dx/dx̂_a` of a patch map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    pub cols: [Point; 3],
    pub par_dim: usize,
}

/// First fundamental form `F = J^T J`, its inverse and `g = sqrt(det F)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub f: [[f64; 3]; 3],
    pub f_inv: [[f64; 3]; 3],
    pub g: f64,
    pub dim: usize,
}

/// Smallest `det F` accepted before a mapping is declared degenerate.
pub const DEGENERATE_DET: f64 = 1e-14;

impl Jacobian {
    pub fn metric(&self) -> Option<Metric> {
        let d = self.par_dim;
        let mut f = [[0.0; 3]; 3];
        for a in 0..d {
            for b in 0..d {
                f[a][b] = dot(&self.cols[a], &self.cols[b]);
            }
        }
        let (det, f_inv) = invert(&f, d);
        if !(det > DEGENERATE_DET) {
            return None;
        }
        Some(Metric {
            f,
            f_inv,
            g: det.sqrt(),
            dim: d,
        })
    }

    /// `J v` for a parametric vector `v`.
    pub fn apply(&self, v: &[f64; 3]) -> Point {
        let mut out = [0.0; 3];
        for a in 0..self.par_dim {
            for c in 0..3 {
                out[c] += self.cols[a][c] * v[a];
            }
        }
        out
    }

    /// Physical (tangential) gradient `J F^{-1} ∇̂` of a parametric gradient.
    pub fn push_gradient(&self, metric: &Metric, grad: &[f64; 3]) -> Point {
        self.apply(&metric.raise(grad))
    }
}

impl Metric {
    /// `F^{-1} v`.
    pub fn raise(&self, v: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for a in 0..self.dim {
            for b in 0..self.dim {
                out[a] += self.f_inv[a][b] * v[b];
            }
        }
        out
    }

    /// `u^T F^{-1} v` for parametric gradients.
    pub fn inner(&self, u: &[f64; 3], v: &[f64; 3]) -> f64 {
        let w = self.raise(v);
        (0..self.dim).map(|a| u[a] * w[a]).sum()
    }
}

fn invert(m: &[[f64; 3]; 3], d: usize) -> (f64, [[f64; 3]; 3]) {
    let mut inv = [[0.0; 3]; 3];
    match d {
        1 => {
            let det = m[0][0];
            inv[0][0] = 1.0 / det;
            (det, inv)
        }
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            inv[0][0] = m[1][1] / det;
            inv[0][1] = -m[0][1] / det;
            inv[1][0] = -m[1][0] / det;
            inv[1][1] = m[0][0] / det;
            (det, inv)
        }
        _ => {
            let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
            let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
            let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
            let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
            inv[0][0] = c00 / det;
            inv[1][0] = c01 / det;
            inv[2][0] = c02 / det;
            inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
            inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
            inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
            inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
            inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
            inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
            (det, inv)
        }
    }
}

/// A (rational) tensor-product spline map from `[0,1]^d` into `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub id: usize,
    basis: TensorBasis,
    control_points: Vec<Point>,
    phys_dim: usize,
}

impl Patch {
    pub fn new(basis: TensorBasis, control_points: Vec<Point>, phys_dim: usize) -> Result<Self> {
        if control_points.len() != basis.size() {
            return Err(Error::Config(format!(
                "{} control points for {} basis functions",
                control_points.len(),
                basis.size()
            )));
        }
        if phys_dim < basis.dim() || phys_dim > 3 {
            return Err(Error::Config(format!(
                "{}-variate patch cannot live in R^{phys_dim}",
                basis.dim()
            )));
        }
        for kv in basis.dirs() {
            if kv.first() != 0.0 || kv.last() != 1.0 {
                return Err(Error::Config("patch knot vectors must span [0, 1]".into()));
            }
        }
        Ok(Self {
            id: 0,
            basis,
            control_points,
            phys_dim,
        })
    }

    /// Affine box `[lo, hi]` as a degree-1 patch (control points at the corners).
    pub fn axis_box(lo: &[f64], hi: &[f64]) -> Self {
        let d = lo.len();
        let dirs = vec![KnotVector::uniform(1, 1); d];
        let basis = TensorBasis::new(dirs, None).expect("linear basis");
        let mut cps = Vec::with_capacity(1 << d);
        for c in 0..(1usize << d) {
            let mut p = [0.0; 3];
            for a in 0..d {
                p[a] = if c >> a & 1 == 1 { hi[a] } else { lo[a] };
            }
            cps.push(p);
        }
        Self::new(basis, cps, d).expect("box patch")
    }

    /// Bilinear quadrilateral with corners ordered `(0,0), (1,0), (0,1), (1,1)`.
    pub fn bilinear(corners: [Point; 4], phys_dim: usize) -> Result<Self> {
        let dirs = vec![KnotVector::uniform(1, 1); 2];
        Self::new(TensorBasis::new(dirs, None)?, corners.to_vec(), phys_dim)
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    pub fn control_points(&self) -> &[Point] {
        &self.control_points
    }

    pub fn par_dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    pub fn is_surface(&self) -> bool {
        self.phys_dim > self.par_dim()
    }

    /// Physical point and Jacobian at a parametric point.
    pub fn map_point(&self, xhat: &[f64]) -> Result<(Point, Jacobian)> {
        Ok(self.map_eval(&self.basis.eval(xhat)?))
    }

    /// [`Patch::map_point`] on a tensor grid of parameters, direction 0 fastest.
    pub fn map_grid(&self, coords: &[Vec<f64>]) -> Result<Vec<(Point, Jacobian)>> {
        Ok(self.basis.eval_grid(coords)?.iter().map(|ev| self.map_eval(ev)).collect())
    }

    fn map_eval(&self, ev: &TensorEval) -> (Point, Jacobian) {
        let idx = ev.indices(self.basis.sizes());
        let mut x = [0.0; 3];
        let mut cols = [[0.0; 3]; 3];
        for (l, &gi) in idx.iter().enumerate() {
            let p = &self.control_points[gi];
            for c in 0..3 {
                x[c] += ev.values[l] * p[c];
                for a in 0..3 {
                    cols[a][c] += ev.grads[l][a] * p[c];
                }
            }
        }
        (
            x,
            Jacobian {
                cols,
                par_dim: self.par_dim(),
            },
        )
    }

    pub fn metric_at(&self, xhat: &[f64]) -> Result<(Point, Jacobian, Metric)> {
        let (x, jac) = self.map_point(xhat)?;
        let metric = jac.metric().ok_or_else(|| self.degenerate(xhat, "det F below threshold"))?;
        Ok((x, jac, metric))
    }

    /// First fundamental form of a surface patch.
    pub fn surface_metric(&self, xhat: &[f64]) -> Result<Metric> {
        if !self.is_surface() {
            return Err(Error::Config(format!("patch {} is not a surface patch", self.id)));
        }
        Ok(self.metric_at(xhat)?.2)
    }

    pub(crate) fn degenerate(&self, xhat: &[f64], what: &str) -> Error {
        Error::Degenerate {
            patch: self.id,
            at: xhat.to_vec(),
            what: what.to_string(),
        }
    }

    /// Unit outward normal (volumetric) or outward conormal (surface) on `side`.
    pub fn face_normal(&self, side: Side, xhat: &[f64]) -> Result<Point> {
        let (_, jac, metric) = self.metric_at(xhat)?;
        Ok(outward_normal(&jac, &metric, side))
    }

    /// Reparametrizes the patch with `times` uniform bisections along
    /// `direction`, updating control points by knot insertion.
    pub fn refine(&self, direction: usize, times: usize) -> Result<Patch> {
        let target = self.basis.dirs()[direction].h_refine(times);
        let mut patch = self.clone();
        let existing = self.basis.dirs()[direction].knots().to_vec();
        let mut extra: Vec<f64> = target.knots().to_vec();
        for k in existing {
            if let Some(pos) = extra.iter().position(|&v| v == k) {
                extra.remove(pos);
            }
        }
        for x in extra {
            patch = patch.insert_knot(direction, x)?;
        }
        Ok(patch)
    }

    fn insert_knot(&self, direction: usize, x: f64) -> Result<Patch> {
        let sizes = self.basis.sizes();
        let weights = self.basis.weights();
        let kv = &self.basis.dirs()[direction];
        let mut new_sizes = sizes;
        new_sizes[direction] += 1;
        let total: usize = new_sizes.iter().product();
        let mut new_cps = vec![[0.0; 3]; total];
        let mut new_w = vec![0.0; total];
        let mut new_kv = None;
        let others: Vec<usize> = (0..3).filter(|&d| d != direction).collect();
        for o1 in 0..sizes[others[1]] {
            for o0 in 0..sizes[others[0]] {
                let flat = |i: usize, s: [usize; 3]| {
                    let mut idx = [0; 3];
                    idx[direction] = i;
                    idx[others[0]] = o0;
                    idx[others[1]] = o1;
                    idx[0] + s[0] * (idx[1] + s[1] * idx[2])
                };
                let line: Vec<Vec<f64>> = (0..sizes[direction])
                    .map(|i| {
                        let gi = flat(i, sizes);
                        let w = weights.map_or(1.0, |w| w[gi]);
                        let p = self.control_points[gi];
                        vec![w * p[0], w * p[1], w * p[2], w]
                    })
                    .collect();
                let (kv2, q) = kv.insert_knot(x, &line)?;
                new_kv = Some(kv2);
                for (i, h) in q.iter().enumerate() {
                    let gi = flat(i, new_sizes);
                    new_w[gi] = h[3];
                    new_cps[gi] = [h[0] / h[3], h[1] / h[3], h[2] / h[3]];
                }
            }
        }
        let mut dirs = self.basis.dirs().to_vec();
        dirs[direction] = new_kv.expect("at least one control line");
        let basis = TensorBasis::new(dirs, weights.map(|_| new_w))?;
        Ok(Patch::new(basis, new_cps, self.phys_dim)?.with_id(self.id))
    }

    /// Samples `g` (area/volume element) on a regular grid of interior points
    /// and returns `(min, max)`; errors if the map degenerates anywhere.
    pub fn regularity_bounds(&self, per_span: usize) -> Result<(f64, f64)> {
        let d = self.par_dim();
        let mut samples: Vec<Vec<f64>> = Vec::with_capacity(d);
        for kv in self.basis.dirs() {
            let mut pts = Vec::new();
            for s in kv.spans() {
                for q in 0..per_span {
                    pts.push(s.lo + s.len() * (q as f64 + 0.5) / per_span as f64);
                }
            }
            samples.push(pts);
        }
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let counts: Vec<usize> = samples.iter().map(Vec::len).collect();
        let total: usize = counts.iter().product();
        for flat in 0..total {
            let mut rem = flat;
            let mut xhat = Vec::with_capacity(d);
            for a in 0..d {
                xhat.push(samples[a][rem % counts[a]]);
                rem /= counts[a];
            }
            let (_, _, m) = self.metric_at(&xhat)?;
            lo = lo.min(m.g);
            hi = hi.max(m.g);
        }
        Ok((lo, hi))
    }

    /// Applies `x -> R x` to all control points.
    fn rotated(&self, r: &[[f64; 3]; 3]) -> Patch {
        let mut p = self.clone();
        for c in p.control_points.iter_mut() {
            let v = *c;
            *c = [dot(&r[0], &v), dot(&r[1], &v), dot(&r[2], &v)];
        }
        p
    }
}

/// Unit outward (co)normal `J F^{-1} n̂ / |J F^{-1} n̂|` for parametric outward normal `n̂`.
pub fn outward_normal(jac: &Jacobian, metric: &Metric, side: Side) -> Point {
    let mut nhat = [0.0; 3];
    nhat[side.axis] = side.sign();
    let v = jac.push_gradient(metric, &nhat);
    let l = norm(&v);
    [v[0] / l, v[1] / l, v[2] / l]
}

/// Physical measure density of `side` at a point (length element for 2-variate
/// patches, area element for trivariate ones, 1 for curves).
pub fn face_density(jac: &Jacobian, side: Side) -> f64 {
    let t = side.tangent_axes(jac.par_dim);
    match t.len() {
        0 => 1.0,
        1 => norm(&jac.cols[t[0]]),
        _ => norm(&cross(&jac.cols[t[0]], &jac.cols[t[1]])),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SideRef {
    pub patch: usize,
    pub side: Side,
}

/// How face coordinates on side `a` map to face coordinates on side `b`:
/// optionally swap the two tangent coordinates, then flip individual ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FaceOrientation {
    pub swap: bool,
    pub flip: [bool; 2],
}

impl FaceOrientation {
    pub fn apply(&self, t: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = t.to_vec();
        if self.swap && out.len() == 2 {
            out.swap(0, 1);
        }
        for (j, v) in out.iter_mut().enumerate() {
            if self.flip[j] {
                *v = 1.0 - *v;
            }
        }
        out
    }

    /// Which tangent coordinate of `b` is driven by tangent coordinate `j` of `a`.
    pub fn target_axis(&self, j: usize, face_dim: usize) -> usize {
        if self.swap && face_dim == 2 {
            1 - j
        } else {
            j
        }
    }

    fn candidates(face_dim: usize) -> Vec<FaceOrientation> {
        match face_dim {
            0 => vec![FaceOrientation::default()],
            1 => vec![
                FaceOrientation::default(),
                FaceOrientation {
                    swap: false,
                    flip: [true, false],
                },
            ],
            _ => {
                let mut v = Vec::new();
                for swap in [false, true] {
                    for f0 in [false, true] {
                        for f1 in [false, true] {
                            v.push(FaceOrientation { swap, flip: [f0, f1] });
                        }
                    }
                }
                v
            }
        }
    }
}

/// Full-side to full-side identification of two patch boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceGlue {
    pub a: SideRef,
    pub b: SideRef,
    pub orientation: FaceOrientation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiPatchDomain {
    pub patches: Vec<Patch>,
    pub interfaces: Vec<InterfaceGlue>,
    pub boundary: Vec<SideRef>,
    pub alpha: Vec<f64>,
    pub surface: bool,
}

/// Distance below which sampled points on two sides count as coincident.
pub const GLUE_TOL: f64 = 1e-10;

impl MultiPatchDomain {
    /// Builds a domain, detecting the interface topology by matching sides
    /// geometrically. Unmatched sides become Dirichlet boundary.
    pub fn from_patches(patches: Vec<Patch>, alpha: Vec<f64>) -> Result<Self> {
        let patches: Vec<Patch> = patches.into_iter().enumerate().map(|(i, p)| p.with_id(i)).collect();
        if patches.is_empty() {
            return Err(Error::Config("domain without patches".into()));
        }
        let d = patches[0].par_dim();
        let n = patches[0].phys_dim();
        if patches.iter().any(|p| p.par_dim() != d || p.phys_dim() != n) {
            return Err(Error::Config("all patches must share dimensions".into()));
        }
        let sides: Vec<SideRef> = (0..patches.len())
            .flat_map(|p| Side::all(d).map(move |side| SideRef { patch: p, side }))
            .collect();
        let mut used = vec![false; sides.len()];
        let mut interfaces = Vec::new();
        for i in 0..sides.len() {
            if used[i] {
                continue;
            }
            for j in i + 1..sides.len() {
                if used[j] {
                    continue;
                }
                if let Some(orientation) = match_sides(&patches, sides[i], sides[j])? {
                    interfaces.push(InterfaceGlue {
                        a: sides[i],
                        b: sides[j],
                        orientation,
                    });
                    used[i] = true;
                    used[j] = true;
                    break;
                }
            }
        }
        let boundary = sides
            .iter()
            .zip(&used)
            .filter(|(_, &u)| !u)
            .map(|(s, _)| *s)
            .collect();
        let dom = Self {
            surface: n > d,
            patches,
            interfaces,
            boundary,
            alpha,
        };
        dom.validate()?;
        Ok(dom)
    }

    pub fn par_dim(&self) -> usize {
        self.patches[0].par_dim()
    }

    pub fn phys_dim(&self) -> usize {
        self.patches[0].phys_dim()
    }

    pub fn is_closed(&self) -> bool {
        self.boundary.is_empty()
    }

    pub fn with_alpha(mut self, alpha: Vec<f64>) -> Result<Self> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() != self.patches.len() {
            return Err(Error::Config(format!(
                "{} diffusion coefficients for {} patches",
                self.alpha.len(),
                self.patches.len()
            )));
        }
        if self.alpha.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::Config("diffusion coefficients must be positive".into()));
        }
        let d = self.par_dim();
        let mut seen = std::collections::HashMap::new();
        for g in &self.interfaces {
            for s in [g.a, g.b] {
                *seen.entry(s).or_insert(0usize) += 1;
            }
        }
        for s in &self.boundary {
            *seen.entry(*s).or_insert(0) += 1;
        }
        for p in 0..self.patches.len() {
            for side in Side::all(d) {
                let c = seen.get(&SideRef { patch: p, side }).copied().unwrap_or(0);
                if c != 1 {
                    return Err(Error::Glue(format!(
                        "side {} of patch {p} is referenced {c} times",
                        side.index()
                    )));
                }
            }
        }
        for p in &self.patches {
            p.regularity_bounds(3)?;
        }
        for g in &self.interfaces {
            let err = glue_mismatch(&self.patches, g, 50)?;
            if err > GLUE_TOL {
                return Err(Error::Glue(format!(
                    "sides {:?} and {:?} differ by {err:.2e}",
                    g.a, g.b
                )));
            }
        }
        Ok(())
    }
}

fn side_point(patches: &[Patch], s: SideRef, t: &[f64]) -> Result<Point> {
    let p = &patches[s.patch];
    Ok(p.map_point(&s.side.lift(t, p.par_dim()))?.0)
}

fn match_sides(patches: &[Patch], a: SideRef, b: SideRef) -> Result<Option<FaceOrientation>> {
    let d = patches[a.patch].par_dim();
    let fd = d - 1;
    let probes: Vec<Vec<f64>> = match fd {
        0 => vec![vec![]],
        1 => vec![vec![0.0], vec![1.0], vec![0.3], vec![0.71]],
        _ => vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![0.3, 0.61],
        ],
    };
    'orient: for o in FaceOrientation::candidates(fd) {
        for t in &probes {
            let xa = side_point(patches, a, t)?;
            let xb = side_point(patches, b, &o.apply(t))?;
            if norm(&sub(&xa, &xb)) > GLUE_TOL {
                continue 'orient;
            }
        }
        return Ok(Some(o));
    }
    Ok(None)
}

/// Largest distance between corresponding points of the glued sides over
/// `samples` pseudo-random face parameters (plus corners).
pub fn glue_mismatch(patches: &[Patch], g: &InterfaceGlue, samples: usize) -> Result<f64> {
    let d = patches[g.a.patch].par_dim();
    let fd = d - 1;
    let mut worst = 0.0f64;
    // deterministic low-discrepancy samples
    for s in 0..samples.max(1) {
        let t: Vec<f64> = (0..fd)
            .map(|j| ((s as f64 + 0.5) * [0.618_033_988_749_895, 0.754_877_666_246_693][j]).fract())
            .collect();
        let xa = side_point(patches, g.a, &t)?;
        let xb = side_point(patches, g.b, &g.orientation.apply(&t))?;
        worst = worst.max(norm(&sub(&xa, &xb)));
    }
    Ok(worst)
}

pub const GEOMETRY_NAMES: [&str; 6] = [
    "unit_square_2patch",
    "square_4patch",
    "cube_4patch",
    "lshape_2patch",
    "sphere_6patch",
    "torus_4patch",
];

/// Major and minor radius of the built-in torus.
pub const TORUS_RADII: (f64, f64) = (2.0, 1.0);

pub fn builtin_geometry(name: &str) -> Result<MultiPatchDomain> {
    let patches = match name {
        "unit_square_2patch" => vec![
            Patch::axis_box(&[-1.0, 0.0], &[0.0, 1.0]),
            Patch::axis_box(&[0.0, 0.0], &[1.0, 1.0]),
        ],
        "square_4patch" => {
            let mut v = Vec::new();
            for y in [-1.0, 0.0] {
                for x in [-1.0, 0.0] {
                    v.push(Patch::axis_box(&[x, y], &[x + 1.0, y + 1.0]));
                }
            }
            v
        }
        "cube_4patch" => {
            let mut v = Vec::new();
            for y in [-1.0, 0.0] {
                for x in [-1.0, 0.0] {
                    v.push(Patch::axis_box(&[x, y, -1.0], &[x + 1.0, y + 1.0, 1.0]));
                }
            }
            v
        }
        "lshape_2patch" => lshape_patches()?,
        "sphere_6patch" => sphere_patches()?,
        "torus_4patch" => torus_patches(TORUS_RADII.0, TORUS_RADII.1)?,
        other => return Err(Error::UnknownName(other.to_string())),
    };
    let n = patches.len();
    MultiPatchDomain::from_patches(patches, vec![1.0; n])
}

/// `(-1,1)^2 \ (-1,0)^2` split along the diagonal ray from the re-entrant
/// corner to `(1,1)`; the corner is parametric `(0,0)` of both patches.
fn lshape_patches() -> Result<Vec<Patch>> {
    Ok(vec![
        Patch::bilinear(
            [[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [-1.0, 1.0, 0.0]],
            2,
        )?,
        Patch::bilinear(
            [[0.0, 0.0, 0.0], [0.0, -1.0, 0.0], [1.0, 1.0, 0.0], [1.0, -1.0, 0.0]],
            2,
        )?,
    ])
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Bernstein coefficients of the product of two biquadratic polynomials.
fn bernstein_product_22(p: &[[f64; 3]; 3], q: &[[f64; 3]; 3]) -> [[f64; 5]; 5] {
    let mut out = [[0.0; 5]; 5];
    for i1 in 0..3 {
        for i2 in 0..3 {
            let ci = binom(2, i1) * binom(2, i2) / binom(4, i1 + i2);
            for j1 in 0..3 {
                for j2 in 0..3 {
                    let cj = binom(2, j1) * binom(2, j2) / binom(4, j1 + j2);
                    out[i1 + i2][j1 + j2] += ci * cj * p[i1][j1] * q[i2][j2];
                }
            }
        }
    }
    out
}

/// One face of the cube-to-sphere tiling (the face around `(0,0,-1)`) as an
/// exact rational biquartic: a rational biquadratic patch in the stereographic
/// plane whose edges are the circular images of great-circle arcs, composed
/// with inverse stereographic projection.
fn sphere_face() -> Result<Patch> {
    let a = (3f64.sqrt() - 1.0) / 2.0;
    let m = a + a * a / (a + 1.0);
    let w = (a + 1.0) / 2f64.sqrt();
    let pts: [[(f64, f64); 3]; 3] = [
        [(-a, -a), (-m, 0.0), (-a, a)],
        [(0.0, -m), (0.0, 0.0), (0.0, m)],
        [(a, -a), (m, 0.0), (a, a)],
    ];
    let wts = [[1.0, w, 1.0], [w, w * w, w], [1.0, w, 1.0]];
    let mut hu = [[0.0; 3]; 3];
    let mut hv = [[0.0; 3]; 3];
    let mut hw = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            hu[i][j] = wts[i][j] * pts[i][j].0;
            hv[i][j] = wts[i][j] * pts[i][j].1;
            hw[i][j] = wts[i][j];
        }
    }
    let uw = bernstein_product_22(&hu, &hw);
    let vw = bernstein_product_22(&hv, &hw);
    let uu = bernstein_product_22(&hu, &hu);
    let vv = bernstein_product_22(&hv, &hv);
    let ww = bernstein_product_22(&hw, &hw);
    let mut cps = Vec::with_capacity(25);
    let mut weights = Vec::with_capacity(25);
    // direction 0 (index i) runs fastest
    for j in 0..5 {
        for i in 0..5 {
            let den = uu[i][j] + vv[i][j] + ww[i][j];
            if !(den > 0.0) {
                return Err(Error::Config("non-positive sphere weight".into()));
            }
            weights.push(den);
            cps.push([
                2.0 * uw[i][j] / den,
                2.0 * vw[i][j] / den,
                (uu[i][j] + vv[i][j] - ww[i][j]) / den,
            ]);
        }
    }
    let kv = KnotVector::new(vec![0., 0., 0., 0., 0., 1., 1., 1., 1., 1.], 4)?;
    Patch::new(TensorBasis::new(vec![kv.clone(), kv], Some(weights))?, cps, 3)
}

fn sphere_patches() -> Result<Vec<Patch>> {
    let base = sphere_face()?;
    let rotations: [[[f64; 3]; 3]; 6] = [
        [[1., 0., 0.], [0., 1., 0.], [0., 0., 1.]],
        [[1., 0., 0.], [0., -1., 0.], [0., 0., -1.]],
        [[0., 0., 1.], [0., 1., 0.], [-1., 0., 0.]],
        [[0., 0., -1.], [0., 1., 0.], [1., 0., 0.]],
        [[1., 0., 0.], [0., 0., 1.], [0., -1., 0.]],
        [[1., 0., 0.], [0., 0., -1.], [0., 1., 0.]],
    ];
    Ok(rotations.iter().map(|r| base.rotated(r)).collect())
}

/// Torus with major radius `big_r` and tube radius `small_r`: four patches,
/// each a quarter turn around the z axis times the full tube circle.
/// Parameter direction 0 runs around the tube, direction 1 around the axis.
fn torus_patches(big_r: f64, small_r: f64) -> Result<Vec<Patch>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let tube: [(f64, f64, f64); 9] = [
        (1.0, 0.0, 1.0),
        (1.0, 1.0, s),
        (0.0, 1.0, 1.0),
        (-1.0, 1.0, s),
        (-1.0, 0.0, 1.0),
        (-1.0, -1.0, s),
        (0.0, -1.0, 1.0),
        (1.0, -1.0, s),
        (1.0, 0.0, 1.0),
    ];
    let tube_kv = KnotVector::new(
        vec![0., 0., 0., 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1., 1., 1.],
        2,
    )?;
    let arc_kv = KnotVector::new(vec![0., 0., 0., 1., 1., 1.], 2)?;
    let quarter: [(f64, f64, f64); 3] = [(1.0, 0.0, 1.0), (1.0, 1.0, s), (0.0, 1.0, 1.0)];
    let mut out = Vec::with_capacity(4);
    for q in 0..4 {
        let (sn, cs) = (q as f64 * std::f64::consts::FRAC_PI_2).sin_cos();
        let mut cps = Vec::with_capacity(27);
        let mut weights = Vec::with_capacity(27);
        for &(x, y, wj) in &quarter {
            let (c, sv) = (cs * x - sn * y, sn * x + cs * y);
            for &(a, b, wi) in &tube {
                cps.push([(big_r + small_r * a) * c, (big_r + small_r * a) * sv, small_r * b]);
                weights.push(wi * wj);
            }
        }
        let basis = TensorBasis::new(vec![tube_kv.clone(), arc_kv.clone()], Some(weights))?;
        out.push(Patch::new(basis, cps, 3)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Patch {
        Patch::axis_box(&[0.0, 0.0], &[1.0, 1.0])
    }

    #[test]
    fn identity_patch_reproduces_parameters() {
        let p = unit_square();
        let (x, j) = p.map_point(&[0.3, 0.8]).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-15 && (x[1] - 0.8).abs() < 1e-15);
        assert_eq!(j.cols[0], [1.0, 0.0, 0.0]);
        assert_eq!(j.cols[1], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn translated_patch() {
        let p = Patch::axis_box(&[-1.0, 0.0], &[0.0, 1.0]);
        let (x, j) = p.map_point(&[0.25, 0.5]).unwrap();
        assert!((x[0] + 0.75).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
        assert_eq!(j.cols[0], [1.0, 0.0, 0.0]);
        let n = p.face_normal(Side::new(0, true), &[1.0, 0.3]).unwrap();
        assert!((n[0] - 1.0).abs() < 1e-15 && n[1].abs() < 1e-15);
    }

    #[test]
    fn out_of_box_is_a_domain_error() {
        assert!(matches!(unit_square().map_point(&[1.2, 0.0]), Err(Error::Domain { .. })));
    }

    #[test]
    fn identity_normals() {
        let p = unit_square();
        let cases = [
            (Side::new(0, false), [-1.0, 0.0]),
            (Side::new(0, true), [1.0, 0.0]),
            (Side::new(1, false), [0.0, -1.0]),
            (Side::new(1, true), [0.0, 1.0]),
        ];
        for (side, expect) in cases {
            let xhat = side.lift(&[0.4], 2);
            let n = p.face_normal(side, &xhat).unwrap();
            assert!((n[0] - expect[0]).abs() < 1e-15 && (n[1] - expect[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_embedded_patch_has_identity_metric() {
        let p = Patch::bilinear(
            [[0., 0., 0.], [1., 0., 0.], [0., 1., 0.], [1., 1., 0.]],
            3,
        )
        .unwrap();
        let m = p.surface_metric(&[0.2, 0.9]).unwrap();
        assert!((m.g - 1.0).abs() < 1e-15);
        assert_eq!(m.f[0][0], 1.0);
        assert_eq!(m.f[0][1], 0.0);
    }

    #[test]
    fn degenerate_patch_reports_patch_and_point() {
        // collapsed to a segment
        let p = Patch::bilinear(
            [[0., 0., 0.], [1., 0., 0.], [0., 0., 0.], [1., 0., 0.]],
            3,
        )
        .unwrap()
        .with_id(7);
        match p.surface_metric(&[0.5, 0.5]) {
            Err(Error::Degenerate { patch, at, .. }) => {
                assert_eq!(patch, 7);
                assert_eq!(at, vec![0.5, 0.5]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn metric_inverse_is_inverse() {
        let dom = builtin_geometry("torus_4patch").unwrap();
        let m = dom.patches[1].surface_metric(&[0.37, 0.61]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let v: f64 = (0..2).map(|c| m.f[a][c] * m.f_inv[c][b]).sum();
                let e = if a == b { 1.0 } else { 0.0 };
                assert!((v - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn registry_topologies() {
        let d = builtin_geometry("unit_square_2patch").unwrap();
        assert_eq!((d.patches.len(), d.interfaces.len(), d.boundary.len()), (2, 1, 6));
        let d = builtin_geometry("square_4patch").unwrap();
        assert_eq!((d.interfaces.len(), d.boundary.len()), (4, 8));
        let d = builtin_geometry("cube_4patch").unwrap();
        assert_eq!((d.interfaces.len(), d.boundary.len()), (4, 16));
        let d = builtin_geometry("lshape_2patch").unwrap();
        assert_eq!((d.interfaces.len(), d.boundary.len()), (1, 6));
        let d = builtin_geometry("sphere_6patch").unwrap();
        assert_eq!((d.interfaces.len(), d.boundary.len()), (12, 0));
        assert!(d.surface && d.is_closed());
        let d = builtin_geometry("torus_4patch").unwrap();
        assert_eq!((d.interfaces.len(), d.boundary.len()), (8, 0));
        assert!(matches!(builtin_geometry("klein_bottle"), Err(Error::UnknownName(_))));
    }

    #[test]
    fn torus_self_glue_closes_the_tube() {
        let d = builtin_geometry("torus_4patch").unwrap();
        let selfglued = d.interfaces.iter().filter(|g| g.a.patch == g.b.patch).count();
        assert_eq!(selfglued, 4);
    }

    #[test]
    fn torus_membership() {
        let (big, small) = TORUS_RADII;
        let dom = builtin_geometry("torus_4patch").unwrap();
        for p in &dom.patches {
            for s in 0..40 {
                let u = (s as f64 * 0.618_033_988_749_895).fract();
                let v = (s as f64 * 0.754_877_666_246_693).fract();
                let (x, _) = p.map_point(&[u, v]).unwrap();
                let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let f = (rho - big).powi(2) + x[2] * x[2] - small * small;
                assert!(f.abs() < 1e-10, "{f}");
            }
        }
    }

    #[test]
    fn sphere_membership() {
        let dom = builtin_geometry("sphere_6patch").unwrap();
        for p in &dom.patches {
            for s in 0..500 {
                let u = (s as f64 * 0.618_033_988_749_895 + 0.1).fract();
                let v = (s as f64 * 0.754_877_666_246_693 + 0.2).fract();
                let (x, _) = p.map_point(&[u, v]).unwrap();
                assert!((norm(&x) - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn sphere_conormal_lies_in_tangent_plane() {
        let dom = builtin_geometry("sphere_6patch").unwrap();
        for p in &dom.patches {
            for side in Side::all(2) {
                for t in [0.1, 0.5, 0.83] {
                    let xhat = side.lift(&[t], 2);
                    let (x, jac) = p.map_point(&xhat).unwrap();
                    let n = p.face_normal(side, &xhat).unwrap();
                    let tangent = jac.cols[side.tangent_axes(2)[0]];
                    assert!(dot(&n, &x).abs() < 1e-8);
                    assert!(dot(&n, &tangent).abs() < 1e-8 * norm(&tangent));
                    // outward: moving inward in parameter space goes against n
                    let mut inner = xhat.clone();
                    inner[side.axis] += -side.sign() * 1e-4;
                    let (y, _) = p.map_point(&inner).unwrap();
                    assert!(dot(&n, &sub(&y, &x)) < 0.0);
                }
            }
        }
    }

    #[test]
    fn refinement_preserves_rational_geometry() {
        let dom = builtin_geometry("torus_4patch").unwrap();
        let p = &dom.patches[2];
        let r = p.refine(0, 2).unwrap().refine(1, 1).unwrap();
        assert_eq!(r.basis().dirs()[0].num_spans(), 16);
        for s in 0..100 {
            let u = (s as f64 * 0.618_033_988_749_895).fract();
            let v = (s as f64 * 0.754_877_666_246_693).fract();
            let (a, _) = p.map_point(&[u, v]).unwrap();
            let (b, _) = r.map_point(&[u, v]).unwrap();
            assert!(norm(&sub(&a, &b)) < 1e-13);
        }
    }

    #[test]
    fn nonconforming_sides_stay_boundary() {
        // two squares touching only along half a side
        let patches = vec![
            Patch::axis_box(&[0.0, 0.0], &[1.0, 1.0]),
            Patch::axis_box(&[1.0, 0.5], &[2.0, 1.5]),
        ];
        let d = MultiPatchDomain::from_patches(patches, vec![1.0, 1.0]).unwrap();
        assert!(d.interfaces.is_empty());
        assert_eq!(d.boundary.len(), 8);
    }

    #[test]
    fn alpha_must_be_positive() {
        let patches = vec![Patch::axis_box(&[0.0, 0.0], &[1.0, 1.0])];
        assert!(MultiPatchDomain::from_patches(patches.clone(), vec![0.0]).is_err());
        assert!(MultiPatchDomain::from_patches(patches, vec![1.0, 2.0]).is_err());
    }
}
