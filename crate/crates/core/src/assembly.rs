//! Symmetric interior-penalty dG assembly on multipatch (surface) domains.
//!
//! Each patch carries its own B-spline space; no dofs are shared between
//! patches. Coupling happens only through face integrals:
//!
//! * interfaces: `−∫{α∇u}·n⟦v⟧ − ∫{α∇v}·n⟦u⟧ + σ∫⟦u⟧⟦v⟧`, with
//!   `σ = μ(α_a/h_a + α_b/h_b)`, each interface assembled once;
//! * Dirichlet sides: the same with one-sided traces and `σ = μα/h`.
//!
//! Surface patches use the pullback `α ∇̂uᵀ F⁻¹ ∇̂v g`, which reduces to the
//! usual volumetric form when the Jacobian is square.

use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{face_density, norm, MultiPatchDomain, Patch, Point, Side, SideRef};
use crate::linalg::{solve_spd, solve_zero_mean, CgOptions, CsrMatrix, SolveReport};
use crate::quadrature::{
    boundary_quadrature, element_quadrature, gauss_rule, interface_quadrature, ElementMesh, FaceQuadrature,
    GaussRule,
};
use crate::splines::{graded_knots, GradingConfig, KnotVector, TensorBasis};

pub type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Constraint {
    #[default]
    None,
    /// `∫ u dΩ = 0`, for closed surfaces.
    ZeroMean,
}

/// How the mesh size `h` in the penalty is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyScale {
    /// Element extent normal to the face at each quadrature point
    /// (`|E| / |F|` on affine elements).
    #[default]
    LocalElement,
    /// Largest mapped element diagonal over the whole patch.
    PatchMaxDiagonal,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub domain: MultiPatchDomain,
    pub rhs: ScalarFn,
    pub dirichlet: Option<ScalarFn>,
    pub exact: Option<ScalarFn>,
    pub exact_grad: Option<VectorFn>,
    /// `None` selects [`default_penalty`].
    pub penalty: Option<f64>,
    pub penalty_scale: PenaltyScale,
    pub nitsche_rhs_consistency: bool,
    pub constraint: Constraint,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("patches", &self.domain.patches.len())
            .field("penalty", &self.penalty)
            .field("penalty_scale", &self.penalty_scale)
            .field("nitsche_rhs_consistency", &self.nitsche_rhs_consistency)
            .field("constraint", &self.constraint)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn new(domain: MultiPatchDomain, rhs: ScalarFn) -> Self {
        let constraint = if domain.is_closed() {
            Constraint::ZeroMean
        } else {
            Constraint::None
        };
        Self {
            domain,
            rhs,
            dirichlet: None,
            exact: None,
            exact_grad: None,
            penalty: None,
            penalty_scale: PenaltyScale::default(),
            nitsche_rhs_consistency: true,
            constraint,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(mu) = self.penalty {
            if !(mu > 0.0) {
                return Err(Error::Config(format!("penalty must be positive, got {mu}")));
            }
        }
        if self.domain.is_closed() {
            if self.constraint != Constraint::ZeroMean {
                return Err(Error::Config("closed domains need the zero-mean constraint".into()));
            }
        } else if self.dirichlet.is_none() {
            return Err(Error::Config("open domain without Dirichlet data".into()));
        }
        self.domain.validate()
    }
}

/// `μ = 2(k+1)(k+d)/d`.
pub fn default_penalty(degree: usize, dim: usize) -> f64 {
    let (k, d) = (degree as f64, dim as f64);
    2.0 * (k + 1.0) * (k + d) / d
}

/// Power-law grading toward a physical point; patches having that point as
/// a parametric corner are graded toward it in every direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grading {
    pub mu_grading: f64,
    pub lambda: f64,
    pub point: Point,
}

/// Mesh and degree choices for one refinement level.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub degree: usize,
    pub level: usize,
    /// Extra uniform subdivision per patch and direction applied before the
    /// level bisections (empty means none).
    pub base_subdivision: Vec<[usize; 3]>,
    pub grading: Option<Grading>,
    /// Gauss points per direction; `None` means `degree + 1`.
    pub quad_points: Option<usize>,
}

impl Discretization {
    pub fn new(degree: usize, level: usize) -> Self {
        Self {
            degree,
            level,
            base_subdivision: Vec::new(),
            grading: None,
            quad_points: None,
        }
    }

    pub fn quad_points(&self) -> usize {
        self.quad_points.unwrap_or(self.degree + 1)
    }
}

/// Per-patch discrete spaces and the global dof layout (patch-major,
/// lexicographic within a patch with direction 0 fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpace {
    pub degree: usize,
    pub bases: Vec<TensorBasis>,
    pub meshes: Vec<ElementMesh>,
    pub offsets: Vec<usize>,
}

fn graded_corner(patch: &Patch, point: &Point) -> Result<Option<usize>> {
    let d = patch.par_dim();
    for c in 0..(1usize << d) {
        let xhat: Vec<f64> = (0..d).map(|a| (c >> a & 1) as f64).collect();
        let (x, _) = patch.map_point(&xhat)?;
        if norm(&[x[0] - point[0], x[1] - point[1], x[2] - point[2]]) < 1e-12 {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

fn field_knots(geom: &KnotVector, k: usize, parts: usize, level: usize) -> Result<KnotVector> {
    let p = geom.degree();
    let breaks = geom.breakpoints();
    let mults: Vec<usize> = geom
        .interior_multiplicities()
        .iter()
        .map(|&(_, m)| {
            let cont = (p as isize - m as isize).min(k as isize - 1);
            (k as isize - cont) as usize
        })
        .collect();
    Ok(KnotVector::from_breakpoints(k, &breaks, &mults)?.subdivide(parts).h_refine(level))
}

impl FieldSpace {
    pub fn new(domain: &MultiPatchDomain, disc: &Discretization) -> Result<Self> {
        let k = disc.degree;
        if k == 0 {
            return Err(Error::Config("field degree must be at least 1".into()));
        }
        if !disc.base_subdivision.is_empty() && disc.base_subdivision.len() != domain.patches.len() {
            return Err(Error::Config("base subdivision must be given for every patch".into()));
        }
        let mut bases = Vec::with_capacity(domain.patches.len());
        for (pi, patch) in domain.patches.iter().enumerate() {
            let parts = disc.base_subdivision.get(pi).copied().unwrap_or([1; 3]);
            let corner = match &disc.grading {
                Some(g) => graded_corner(patch, &g.point)?,
                None => None,
            };
            let mut dirs = Vec::with_capacity(patch.par_dim());
            for (a, geom) in patch.basis().dirs().iter().enumerate() {
                let n_spans = parts[a].max(1) << disc.level;
                let kv = match (corner, &disc.grading) {
                    (Some(c), Some(g)) if n_spans >= 2 => {
                        if geom.num_spans() != 1 {
                            return Err(Error::Config(format!(
                                "grading needs single-element geometry patches (patch {pi})"
                            )));
                        }
                        let cfg = GradingConfig {
                            mu_grading: g.mu_grading,
                            singular_corner: c,
                            lambda: g.lambda,
                            levels: disc.level,
                        };
                        graded_knots(k, n_spans, &cfg, a)?
                    }
                    _ => field_knots(geom, k, parts[a].max(1), disc.level)?,
                };
                dirs.push(kv);
            }
            bases.push(TensorBasis::new(dirs, None)?);
        }
        let meshes = bases.iter().map(ElementMesh::from_basis).collect();
        let mut offsets = vec![0];
        for b in &bases {
            offsets.push(offsets.last().unwrap() + b.size());
        }
        Ok(Self {
            degree: k,
            bases,
            meshes,
            offsets,
        })
    }

    pub fn num_dofs(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn patch_dofs(&self, p: usize) -> Range<usize> {
        self.offsets[p]..self.offsets[p + 1]
    }

    /// Global indices, values and parametric gradients of the functions of
    /// patch `p` active at `xhat`.
    pub fn eval_basis(&self, p: usize, xhat: &[f64]) -> Result<(Vec<usize>, Vec<f64>, Vec<[f64; 3]>)> {
        let basis = &self.bases[p];
        let ev = basis.eval(xhat)?;
        let off = self.offsets[p];
        let idx = ev.indices(basis.sizes()).into_iter().map(|i| i + off).collect();
        Ok((idx, ev.values, ev.grads))
    }

    /// Value and parametric gradient of the discrete field `coeffs` on patch `p`.
    pub fn eval(&self, p: usize, xhat: &[f64], coeffs: &[f64]) -> Result<(f64, [f64; 3])> {
        let (idx, vals, grads) = self.eval_basis(p, xhat)?;
        let mut u = 0.0;
        let mut g = [0.0; 3];
        for ((&i, v), gr) in idx.iter().zip(&vals).zip(&grads) {
            u += coeffs[i] * v;
            for a in 0..3 {
                g[a] += coeffs[i] * gr[a];
            }
        }
        Ok((u, g))
    }
}

/// Traces of one side's active functions at a face quadrature point.
#[derive(Debug, Clone)]
pub struct FaceTrace {
    pub dofs: Vec<usize>,
    pub values: Vec<f64>,
    /// `∇φ·n` (physical gradient against the face normal of side `a`).
    pub flux: Vec<f64>,
    /// Weight of this side's flux in the face average (`α/2` on interfaces, `α` on boundaries).
    pub alpha: f64,
    pub h: f64,
}

#[derive(Debug, Clone)]
pub struct FacePointEval {
    pub xhat_a: [f64; 3],
    pub xhat_b: Option<[f64; 3]>,
    pub weight: f64,
    pub x: Point,
    pub normal: Point,
    /// Penalty weight `σ` at this point.
    pub sigma: f64,
    pub a: FaceTrace,
    pub b: Option<FaceTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaceKind {
    Interface(usize),
    Boundary(SideRef),
}

#[derive(Debug, Clone)]
pub struct FaceData {
    pub kind: FaceKind,
    pub points: Vec<FacePointEval>,
}

impl FaceData {
    /// Jump of a discrete field (`a` minus `b`; one-sided trace on boundaries).
    pub fn jump(pt: &FacePointEval, coeffs: &[f64]) -> f64 {
        let ua: f64 = pt.a.dofs.iter().zip(&pt.a.values).map(|(&i, v)| coeffs[i] * v).sum();
        let ub: f64 = pt
            .b
            .as_ref()
            .map_or(0.0, |t| t.dofs.iter().zip(&t.values).map(|(&i, v)| coeffs[i] * v).sum());
        ua - ub
    }
}

/// The assembled system `K u = f` plus what post-processing needs.
#[derive(Debug, Clone)]
pub struct DGSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Gram matrix of the dG norm on the discrete space.
    pub norm_matrix: CsrMatrix,
    /// `m_i = ∫ φ_i dΩ`.
    pub mean_vector: Vec<f64>,
    pub constraint: Constraint,
    pub space: FieldSpace,
    pub faces: Vec<FaceData>,
    pub penalty: f64,
}

impl DGSystem {
    pub fn offsets(&self) -> &[usize] {
        &self.space.offsets
    }

    pub fn num_dofs(&self) -> usize {
        self.space.num_dofs()
    }

    pub fn solve(&self, opts: &CgOptions) -> Result<(Vec<f64>, SolveReport)> {
        Ok(match self.constraint {
            Constraint::None => solve_spd(&self.matrix, &self.rhs, opts, DIRECT_LIMIT)?,
            Constraint::ZeroMean => solve_zero_mean(&self.matrix, &self.rhs, &self.mean_vector, opts)?,
        })
    }
}

/// Unconstrained systems up to this order are factorized directly.
pub const DIRECT_LIMIT: usize = 1000;

fn local_h(space: &FieldSpace, p: usize, patch: &Patch, side: Side, xhat: &[f64]) -> Result<f64> {
    let br = space.meshes[p].breaks(side.axis);
    let dx = if side.upper {
        br[br.len() - 1] - br[br.len() - 2]
    } else {
        br[1] - br[0]
    };
    let (_, jac, metric) = patch.metric_at(xhat)?;
    Ok(dx * metric.g / face_density(&jac, side))
}

/// Largest physical distance between opposite corners of any element.
pub fn patch_max_diagonal(patch: &Patch, mesh: &ElementMesh) -> Result<f64> {
    let d = patch.par_dim();
    let mut h = 0.0f64;
    for el in mesh.elements() {
        for c in 0..(1usize << d.saturating_sub(1)) {
            let lo: Vec<f64> = (0..d).map(|a| if c >> a & 1 == 1 { el.hi[a] } else { el.lo[a] }).collect();
            let hi: Vec<f64> = (0..d).map(|a| if c >> a & 1 == 1 { el.lo[a] } else { el.hi[a] }).collect();
            let (x, _) = patch.map_point(&lo)?;
            let (y, _) = patch.map_point(&hi)?;
            h = h.max(norm(&[x[0] - y[0], x[1] - y[1], x[2] - y[2]]));
        }
    }
    Ok(h)
}

struct SideCtx<'a> {
    space: &'a FieldSpace,
    domain: &'a MultiPatchDomain,
    scale: PenaltyScale,
    diag: &'a [f64],
}

impl SideCtx<'_> {
    fn trace(&self, p: usize, side: Side, xhat: &[f64], normal: &Point, half: bool) -> Result<FaceTrace> {
        let patch = &self.domain.patches[p];
        let (_, jac, metric) = patch.metric_at(xhat)?;
        let (dofs, values, grads) = self.space.eval_basis(p, xhat)?;
        let flux = grads.iter().map(|g| dot3(&jac.push_gradient(&metric, g), normal)).collect();
        let alpha = self.domain.alpha[p];
        let h = match self.scale {
            PenaltyScale::LocalElement => local_h(self.space, p, patch, side, xhat)?,
            PenaltyScale::PatchMaxDiagonal => self.diag[p],
        };
        Ok(FaceTrace {
            dofs,
            values,
            flux,
            alpha: if half { 0.5 * alpha } else { alpha },
            h,
        })
    }
}

fn dot3(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Evaluates all face quadratures (interfaces first, then Dirichlet sides).
pub fn face_data(
    domain: &MultiPatchDomain,
    space: &FieldSpace,
    rule: &GaussRule,
    penalty: f64,
    scale: PenaltyScale,
) -> Result<Vec<FaceData>> {
    let diag: Vec<f64> = match scale {
        PenaltyScale::PatchMaxDiagonal => domain
            .patches
            .iter()
            .zip(&space.meshes)
            .map(|(p, m)| patch_max_diagonal(p, m))
            .collect::<Result<_>>()?,
        PenaltyScale::LocalElement => Vec::new(),
    };
    let ctx = SideCtx {
        space,
        domain,
        scale,
        diag: &diag,
    };
    let kinds: Vec<FaceKind> = (0..domain.interfaces.len())
        .map(FaceKind::Interface)
        .chain(domain.boundary.iter().copied().map(FaceKind::Boundary))
        .collect();
    kinds
        .par_iter()
        .map(|&kind| -> Result<FaceData> {
            let points = match kind {
                FaceKind::Interface(i) => {
                    let g = &domain.interfaces[i];
                    let fq: FaceQuadrature = interface_quadrature(
                        &domain.patches,
                        g,
                        &space.meshes[g.a.patch],
                        &space.meshes[g.b.patch],
                        rule,
                    )?;
                    fq.points
                        .iter()
                        .map(|fp| {
                            let d = domain.par_dim();
                            let xa = &fp.xhat_a[..d];
                            let xb = &fp.xhat_b.expect("interface point")[..d];
                            let a = ctx.trace(g.a.patch, g.a.side, xa, &fp.normal, true)?;
                            let b = ctx.trace(g.b.patch, g.b.side, xb, &fp.normal, true)?;
                            let sigma = penalty * (2.0 * a.alpha / a.h + 2.0 * b.alpha / b.h);
                            Ok(FacePointEval {
                                xhat_a: fp.xhat_a,
                                xhat_b: fp.xhat_b,
                                weight: fp.weight,
                                x: fp.x,
                                normal: fp.normal,
                                sigma,
                                a,
                                b: Some(b),
                            })
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                FaceKind::Boundary(s) => {
                    let patch = &domain.patches[s.patch];
                    let fq = boundary_quadrature(patch, s.side, &space.meshes[s.patch], rule)?;
                    fq.points
                        .iter()
                        .map(|fp| {
                            let a = ctx.trace(s.patch, s.side, &fp.xhat_a[..patch.par_dim()], &fp.normal, false)?;
                            let sigma = penalty * a.alpha / a.h;
                            Ok(FacePointEval {
                                xhat_a: fp.xhat_a,
                                xhat_b: None,
                                weight: fp.weight,
                                x: fp.x,
                                normal: fp.normal,
                                sigma,
                                a,
                                b: None,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?
                }
            };
            Ok(FaceData { kind, points })
        })
        .collect()
}

/// For each function of a univariate space, the range of functions whose
/// supports overlap it.
fn coupling_ranges(kv: &KnotVector) -> Vec<(usize, usize)> {
    let n = kv.num_basis();
    let mut r = vec![(usize::MAX, 0); n];
    for s in kv.spans() {
        let mid = 0.5 * (s.lo + s.hi);
        let (first, vals) = kv.eval_basis(mid).expect("span midpoint");
        let last = first + vals.len() - 1;
        for e in r.iter_mut().take(last + 1).skip(first) {
            e.0 = e.0.min(first);
            e.1 = e.1.max(last);
        }
    }
    r
}

fn sparsity(space: &FieldSpace, faces: &[FaceData]) -> Vec<Vec<usize>> {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); space.num_dofs()];
    for (p, basis) in space.bases.iter().enumerate() {
        let ranges: Vec<Vec<(usize, usize)>> = basis.dirs().iter().map(coupling_ranges).collect();
        let sizes = basis.sizes();
        let off = space.offsets[p];
        let d = basis.dim();
        for flat in 0..basis.size() {
            let idx = [flat % sizes[0], flat / sizes[0] % sizes[1], flat / (sizes[0] * sizes[1])];
            let mut lo = [0; 3];
            let mut hi = [0; 3];
            for a in 0..d {
                (lo[a], hi[a]) = ranges[a][idx[a]];
            }
            let row = &mut rows[off + flat];
            for k in lo[2]..=hi[2] {
                for j in lo[1]..=hi[1] {
                    for i in lo[0]..=hi[0] {
                        row.push(off + i + sizes[0] * (j + sizes[1] * k));
                    }
                }
            }
        }
    }
    for f in faces {
        for pt in &f.points {
            if let Some(b) = &pt.b {
                for &i in &pt.a.dofs {
                    rows[i].extend_from_slice(&b.dofs);
                }
                for &j in &b.dofs {
                    rows[j].extend_from_slice(&pt.a.dofs);
                }
            }
        }
    }
    rows.par_iter_mut().for_each(|r| {
        r.sort_unstable();
        r.dedup();
    });
    rows
}

/// Tabulated univariate values and derivatives at the Gauss points of each span.
struct SpanTable {
    first: Vec<usize>,
    /// `[span][q] -> (values, derivatives)`
    data: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
}

fn span_table(kv: &KnotVector, breaks: &[f64], rule: &GaussRule) -> Result<SpanTable> {
    let mut first = Vec::new();
    let mut data = Vec::new();
    for w in breaks.windows(2) {
        let mut rows = Vec::new();
        let mut f0 = 0;
        for (x, _) in rule.mapped(w[0], w[1]) {
            let (f, ders) = kv.eval_basis_derivs(x, 1)?;
            f0 = f;
            rows.push((ders[0].clone(), ders[1].clone()));
        }
        first.push(f0);
        data.push(rows);
    }
    Ok(SpanTable { first, data })
}

/// Span tables of one patch of a [`FieldSpace`], for evaluating discrete
/// fields at the Gauss points of its elements.
pub(crate) struct PatchTables {
    tables: Vec<SpanTable>,
    nl: [usize; 3],
    sizes: [usize; 3],
    off: usize,
    nq: usize,
}

impl PatchTables {
    pub(crate) fn new(space: &FieldSpace, p: usize, rule: &GaussRule) -> Result<Self> {
        let basis = &space.bases[p];
        let d = basis.dim();
        let tables = (0..d)
            .map(|a| span_table(&basis.dirs()[a], space.meshes[p].breaks(a), rule))
            .collect::<Result<_>>()?;
        let mut nl = [1; 3];
        let mut sizes = [1; 3];
        for a in 0..d {
            nl[a] = basis.dirs()[a].degree() + 1;
            sizes[a] = basis.sizes()[a];
        }
        Ok(Self { tables, nl, sizes, off: space.offsets[p], nq: rule.len() })
    }

    /// Value and parametric gradient of `coeffs` at Gauss point `qi` of `el`
    /// (ordering of [`element_quadrature`]).
    pub(crate) fn eval(&self, el: &crate::quadrature::Element, qi: usize, coeffs: &[f64]) -> (f64, [f64; 3]) {
        let nq = self.nq;
        let qd = [qi % nq, qi / nq % nq, qi / (nq * nq)];
        let one: (&[f64], &[f64]) = (&[1.0], &[0.0]);
        let mut tab = [one; 3];
        let mut first = [0; 3];
        for (a, t) in self.tables.iter().enumerate() {
            let (v, dv) = &t.data[el.index[a]][qd[a]];
            tab[a] = (v, dv);
            first[a] = t.first[el.index[a]];
        }
        let (mut u, mut g) = (0.0, [0.0; 3]);
        for l2 in 0..self.nl[2] {
            for l1 in 0..self.nl[1] {
                let row = self.off + first[0] + self.sizes[0] * ((first[1] + l1) + self.sizes[1] * (first[2] + l2));
                let (v12, d1v2, v1d2) = (
                    tab[1].0[l1] * tab[2].0[l2],
                    tab[1].1[l1] * tab[2].0[l2],
                    tab[1].0[l1] * tab[2].1[l2],
                );
                for l0 in 0..self.nl[0] {
                    let c = coeffs[row + l0];
                    u += c * tab[0].0[l0] * v12;
                    g[0] += c * tab[0].1[l0] * v12;
                    g[1] += c * tab[0].0[l0] * d1v2;
                    g[2] += c * tab[0].0[l0] * v1d2;
                }
            }
        }
        (u, g)
    }
}

struct PatchOut {
    rhs: Vec<f64>,
    mean: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn assemble_patch(
    p: usize,
    domain: &MultiPatchDomain,
    space: &FieldSpace,
    rule: &GaussRule,
    rhs_fn: &ScalarFn,
    row_ptr: &[usize],
    col_idx: &[usize],
    kvals: &mut [f64],
    dvals: &mut [f64],
) -> Result<PatchOut> {
    let patch = &domain.patches[p];
    let basis = &space.bases[p];
    let mesh = &space.meshes[p];
    let alpha = domain.alpha[p];
    let d = basis.dim();
    let sizes = basis.sizes();
    let off = space.offsets[p];
    let base = row_ptr[off];
    let n_local = basis.size();
    let mut rhs = vec![0.0; n_local];
    let mut mean = vec![0.0; n_local];
    let tables: Vec<SpanTable> = (0..d)
        .map(|a| span_table(&basis.dirs()[a], mesh.breaks(a), rule))
        .collect::<Result<_>>()?;
    let nq = rule.len();
    let nl: Vec<usize> = (0..3).map(|a| if a < d { basis.dirs()[a].degree() + 1 } else { 1 }).collect();
    let n_act = nl[0] * nl[1] * nl[2];
    let mut kloc = vec![0.0; n_act * n_act];
    let mut vals = vec![0.0; n_act];
    let mut grads = vec![[0.0; 3]; n_act];
    let mut raised = vec![[0.0; 3]; n_act];
    let mut gidx = vec![0usize; n_act];
    for el in mesh.elements() {
        kloc.iter_mut().for_each(|v| *v = 0.0);
        let qps = element_quadrature(patch, &el, rule)?;
        let firsts: Vec<usize> = (0..3).map(|a| if a < d { tables[a].first[el.index[a]] } else { 0 }).collect();
        for l in 0..n_act {
            let (l0, l1, l2) = (l % nl[0], l / nl[0] % nl[1], l / (nl[0] * nl[1]));
            gidx[l] = (firsts[0] + l0) + sizes[0] * ((firsts[1] + l1) + sizes[1] * (firsts[2] + l2));
        }
        for (qi, qp) in qps.iter().enumerate() {
            let qd = [qi % nq, qi / nq % nq, qi / (nq * nq)];
            let tab = |a: usize| -> (&[f64], &[f64]) {
                if a < d {
                    let (v, dv) = &tables[a].data[el.index[a]][qd[a]];
                    (v, dv)
                } else {
                    (&[1.0], &[0.0])
                }
            };
            let (v0, d0) = tab(0);
            let (v1, d1) = tab(1);
            let (v2, d2) = tab(2);
            let fval = rhs_fn(&qp.x);
            for l in 0..n_act {
                let (l0, l1, l2) = (l % nl[0], l / nl[0] % nl[1], l / (nl[0] * nl[1]));
                vals[l] = v0[l0] * v1[l1] * v2[l2];
                grads[l] = [d0[l0] * v1[l1] * v2[l2], v0[l0] * d1[l1] * v2[l2], v0[l0] * v1[l1] * d2[l2]];
                raised[l] = qp.metric.raise(&grads[l]);
                rhs[gidx[l]] += qp.weight * fval * vals[l];
                mean[gidx[l]] += qp.weight * vals[l];
            }
            let w = qp.weight * alpha;
            for l in 0..n_act {
                let gl = &grads[l];
                let row = &mut kloc[l * n_act..(l + 1) * n_act];
                for (m, r) in raised.iter().enumerate() {
                    row[m] += w * (gl[0] * r[0] + gl[1] * r[1] + gl[2] * r[2]);
                }
            }
        }
        for l in 0..n_act {
            let i = off + gidx[l];
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            let cols = &col_idx[lo..hi];
            for m in 0..n_act {
                let j = off + gidx[m];
                let pos = lo + cols.binary_search(&j).expect("volume entry in pattern") - base;
                kvals[pos] += kloc[l * n_act + m];
                dvals[pos] += kloc[l * n_act + m];
            }
        }
    }
    Ok(PatchOut { rhs, mean })
}

/// Assembles the dG system for `spec` on the mesh described by `disc`.
pub fn assemble(spec: &ProblemSpec, disc: &Discretization) -> Result<DGSystem> {
    spec.validate()?;
    let domain = &spec.domain;
    let space = FieldSpace::new(domain, disc)?;
    let rule = gauss_rule(disc.quad_points())?;
    let penalty = spec.penalty.unwrap_or_else(|| default_penalty(disc.degree, domain.par_dim()));
    let faces = face_data(domain, &space, &rule, penalty, spec.penalty_scale)?;
    let n = space.num_dofs();
    let pattern = sparsity(&space, &faces);
    let mut k = CsrMatrix::from_pattern(n, pattern);
    let mut dmat = k.clone();
    let mut rhs = vec![0.0; n];
    let mut mean = vec![0.0; n];

    // volume terms: patches own disjoint row blocks, so they fill in parallel
    {
        let (row_ptr, col_idx, kv) = k.parts_mut();
        let (_, _, dv) = dmat.parts_mut();
        let mut kslices = Vec::new();
        let mut dslices = Vec::new();
        let (mut krest, mut drest) = (kv, dv);
        for p in 0..domain.patches.len() {
            let len = row_ptr[space.offsets[p + 1]] - row_ptr[space.offsets[p]];
            let (a, b) = krest.split_at_mut(len);
            let (c, e) = drest.split_at_mut(len);
            kslices.push(a);
            dslices.push(c);
            krest = b;
            drest = e;
        }
        let outs: Vec<PatchOut> = kslices
            .into_par_iter()
            .zip(dslices.into_par_iter())
            .enumerate()
            .map(|(p, (ks, ds))| assemble_patch(p, domain, &space, &rule, &spec.rhs, row_ptr, col_idx, ks, ds))
            .collect::<Result<_>>()?;
        for (p, o) in outs.into_iter().enumerate() {
            let r = space.patch_dofs(p);
            rhs[r.clone()].copy_from_slice(&o.rhs);
            mean[r].copy_from_slice(&o.mean);
        }
    }

    // face terms, scattered in a fixed order
    for f in &faces {
        for pt in &f.points {
            let mut dofs: Vec<usize> = pt.a.dofs.clone();
            let mut jump: Vec<f64> = pt.a.values.clone();
            let mut avg: Vec<f64> = pt.a.flux.iter().map(|g| pt.a.alpha * g).collect();
            if let Some(b) = &pt.b {
                dofs.extend_from_slice(&b.dofs);
                jump.extend(b.values.iter().map(|v| -v));
                avg.extend(b.flux.iter().map(|g| b.alpha * g));
            }
            let w = pt.weight;
            for l in 0..dofs.len() {
                for m in 0..dofs.len() {
                    let pen = w * pt.sigma * jump[l] * jump[m];
                    let cons = -w * (avg[m] * jump[l] + avg[l] * jump[m]);
                    k.add(dofs[l], dofs[m], cons + pen);
                    dmat.add(dofs[l], dofs[m], pen);
                }
            }
            if pt.b.is_none() {
                let ud = spec.dirichlet.as_ref().expect("validated")(&pt.x);
                for l in 0..dofs.len() {
                    rhs[dofs[l]] += w * pt.sigma * ud * jump[l];
                    if spec.nitsche_rhs_consistency {
                        rhs[dofs[l]] -= w * avg[l] * ud;
                    }
                }
            }
        }
    }

    Ok(DGSystem {
        matrix: k,
        rhs,
        norm_matrix: dmat,
        mean_vector: mean,
        constraint: spec.constraint,
        space,
        faces,
        penalty,
    })
}

/// Smallest sampled ratio `vᵀKv / vᵀDv` over `n_random` seeded random
/// coefficient vectors, where `D` is the dG-norm Gram matrix.
pub fn coercivity_probe(system: &DGSystem, n_random: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = system.num_dofs();
    let mut worst = f64::INFINITY;
    for _ in 0..n_random {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let num = system.matrix.bilinear(&v, &v);
        let den = system.norm_matrix.bilinear(&v, &v);
        if den > 0.0 {
            worst = worst.min(num / den);
        }
    }
    worst
}
