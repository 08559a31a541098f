//! Gauss rules, element iteration and face quadrature (including merged
//! breakpoints on non-matching interfaces).

use crate::error::{Error, Result};
use crate::geometry::{face_density, outward_normal, norm, InterfaceGlue, Jacobian, Metric, Patch, Point, Side};
use crate::splines::TensorBasis;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub const MAX_GAUSS_POINTS: usize = 30;

pub fn gauss_rule(n: usize) -> Result<GaussRule> {
    if n == 0 || n > MAX_GAUSS_POINTS {
        return Err(Error::Config(format!(
            "Gauss rule needs 1..={MAX_GAUSS_POINTS} points, got {n}"
        )));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(GaussRule { nodes, weights })
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (a + h * (x + 1.0), h * w))
    }
}

/// Tensor-product element partition of the parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMesh {
    breaks: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub index: [usize; 3],
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl ElementMesh {
    pub fn new(breaks: Vec<Vec<f64>>) -> Result<Self> {
        for b in &breaks {
            if b.len() < 2 || b.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Config("element breakpoints must be strictly increasing".into()));
            }
        }
        Ok(Self { breaks })
    }

    pub fn from_basis(basis: &TensorBasis) -> Self {
        Self {
            breaks: basis.dirs().iter().map(|k| k.breakpoints()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.breaks.len()
    }

    pub fn breaks(&self, dir: usize) -> &[f64] {
        &self.breaks[dir]
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [1; 3];
        for (a, b) in self.breaks.iter().enumerate() {
            c[a] = b.len() - 1;
        }
        c
    }

    pub fn num_elements(&self) -> usize {
        self.counts().iter().product()
    }

    pub fn element(&self, flat: usize) -> Element {
        let c = self.counts();
        let index = [flat % c[0], flat / c[0] % c[1], flat / (c[0] * c[1])];
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for a in 0..self.dim() {
            lo[a] = self.breaks[a][index[a]];
            hi[a] = self.breaks[a][index[a] + 1];
        }
        Element { index, lo, hi }
    }

    pub fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        (0..self.num_elements()).map(|e| self.element(e))
    }

    /// Span in direction `dir` containing `x` (upper end belongs to the last span).
    pub fn locate(&self, dir: usize, x: f64) -> usize {
        let b = &self.breaks[dir];
        let n = b.len() - 1;
        b[1..n].partition_point(|&v| v <= x)
    }
}

/// One element quadrature point; `weight` already contains `g` (|det J| or
/// the surface area element).
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub xhat: [f64; 3],
    pub x: Point,
    pub jac: Jacobian,
    pub metric: Metric,
    pub weight: f64,
}

pub fn element_quadrature(patch: &Patch, el: &Element, rule: &GaussRule) -> Result<Vec<QuadPoint>> {
    let d = patch.par_dim();
    let n = rule.len();
    let mut out = Vec::with_capacity(n.pow(d as u32));
    let per_dir: Vec<Vec<(f64, f64)>> = (0..d).map(|a| rule.mapped(el.lo[a], el.hi[a]).collect()).collect();
    let coords: Vec<Vec<f64>> = per_dir.iter().map(|v| v.iter().map(|p| p.0).collect()).collect();
    let maps = patch.map_grid(&coords)?;
    for (flat, (x, jac)) in maps.into_iter().enumerate() {
        let mut xhat = [0.0; 3];
        let mut w = 1.0;
        let mut rem = flat;
        for a in 0..d {
            let (xa, wa) = per_dir[a][rem % n];
            rem /= n;
            xhat[a] = xa;
            w *= wa;
        }
        let metric = jac.metric().ok_or_else(|| patch.degenerate(&xhat[..d], "det F below threshold"))?;
        out.push(QuadPoint {
            xhat,
            x,
            jac,
            metric,
            weight: w * metric.g,
        });
    }
    Ok(out)
}

/// Quadrature point on a face. `xhat_b` is set for interfaces; `normal` is
/// the unit outward (co)normal of side `a`.
#[derive(Debug, Clone, Copy)]
pub struct FacePoint {
    pub xhat_a: [f64; 3],
    pub xhat_b: Option<[f64; 3]>,
    pub x: Point,
    pub normal: Point,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct FaceQuadrature {
    /// Merged breakpoints per face coordinate of side `a`.
    pub breaks: Vec<Vec<f64>>,
    pub points: Vec<FacePoint>,
}

impl FaceQuadrature {
    pub fn measure(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }
}

/// Glue points farther apart than this abort the interface quadrature.
pub const FACE_MATCH_TOL: f64 = 1e-8;

fn merge_breaks(a: &[f64], b: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = a.iter().copied().chain(b).collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|x, y| (*x - *y).abs() < 1e-13);
    v
}

fn face_cells(breaks: &[Vec<f64>], rule: &GaussRule) -> Vec<(Vec<f64>, f64)> {
    let mut pts: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for b in breaks {
        let line: Vec<(f64, f64)> = b.windows(2).flat_map(|w| rule.mapped(w[0], w[1]).collect::<Vec<_>>()).collect();
        let mut next = Vec::with_capacity(pts.len() * line.len());
        for &(x, w) in &line {
            for (t, wt) in &pts {
                let mut t2 = t.clone();
                t2.push(x);
                next.push((t2, wt * w));
            }
        }
        pts = next;
    }
    pts
}

fn to3(v: &[f64]) -> [f64; 3] {
    let mut o = [0.0; 3];
    o[..v.len()].copy_from_slice(v);
    o
}

fn face_point(patch: &Patch, side: Side, t: &[f64], w: f64) -> Result<FacePoint> {
    let d = patch.par_dim();
    let xhat = side.lift(t, d);
    let (x, jac, metric) = patch.metric_at(&xhat)?;
    Ok(FacePoint {
        xhat_a: to3(&xhat),
        xhat_b: None,
        x,
        normal: outward_normal(&jac, &metric, side),
        weight: w * face_density(&jac, side),
    })
}

/// Quadrature on a Dirichlet side, with Gauss points per element face.
pub fn boundary_quadrature(patch: &Patch, side: Side, mesh: &ElementMesh, rule: &GaussRule) -> Result<FaceQuadrature> {
    let d = patch.par_dim();
    let breaks: Vec<Vec<f64>> = side.tangent_axes(d).iter().map(|&a| mesh.breaks(a).to_vec()).collect();
    let points = face_cells(&breaks, rule)
        .into_iter()
        .map(|(t, w)| face_point(patch, side, &t, w))
        .collect::<Result<_>>()?;
    Ok(FaceQuadrature { breaks, points })
}

/// Quadrature on an interface: each face coordinate line is split at the
/// union of both sides' element breakpoints so that traces from either side
/// are smooth on every sub-cell.
pub fn interface_quadrature(
    patches: &[Patch],
    glue: &InterfaceGlue,
    mesh_a: &ElementMesh,
    mesh_b: &ElementMesh,
    rule: &GaussRule,
) -> Result<FaceQuadrature> {
    let pa = &patches[glue.a.patch];
    let pb = &patches[glue.b.patch];
    let d = pa.par_dim();
    let ta = glue.a.side.tangent_axes(d);
    let tb = glue.b.side.tangent_axes(d);
    let fd = ta.len();
    let o = glue.orientation;
    let breaks: Vec<Vec<f64>> = (0..fd)
        .map(|j| {
            let k = o.target_axis(j, fd);
            let flip = o.flip[k];
            let other = mesh_b.breaks(tb[k]).iter().map(move |&x| if flip { 1.0 - x } else { x });
            merge_breaks(mesh_a.breaks(ta[j]), other)
        })
        .collect();
    let mut points = Vec::new();
    for (t, w) in face_cells(&breaks, rule) {
        let mut fp = face_point(pa, glue.a.side, &t, w)?;
        let xb = glue.b.side.lift(&o.apply(&t), d);
        let (yb, _) = pb.map_point(&xb)?;
        let gap = norm(&[fp.x[0] - yb[0], fp.x[1] - yb[1], fp.x[2] - yb[2]]);
        if gap > FACE_MATCH_TOL {
            return Err(Error::Glue(format!(
                "patches {} and {} separate by {gap:.2e} at face point {t:?}",
                glue.a.patch, glue.b.patch
            )));
        }
        fp.xhat_b = Some(to3(&xb));
        points.push(fp);
    }
    Ok(FaceQuadrature { breaks, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin_geometry, SideRef, FaceOrientation};
    use crate::splines::KnotVector;

    #[test]
    fn classical_small_rules() {
        let r = gauss_rule(1).unwrap();
        assert_eq!(r.nodes, vec![0.0]);
        assert!((r.weights[0] - 2.0).abs() < 1e-15);
        let r = gauss_rule(2).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((r.nodes[0] + s).abs() < 1e-15 && (r.nodes[1] - s).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15 && (r.weights[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rule_bounds() {
        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(31).is_err());
        assert!(gauss_rule(30).is_ok());
    }

    #[test]
    fn mapped_quintic() {
        let r = gauss_rule(3).unwrap();
        let v: f64 = r.mapped(0.0, 1.0).map(|(x, w)| w * x.powi(5)).sum();
        assert!((v - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn exact_to_degree_2n_minus_1() {
        for n in 1..=MAX_GAUSS_POINTS {
            let r = gauss_rule(n).unwrap();
            for p in 0..2 * n {
                let v: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((v - exact).abs() < 1e-13, "n={n} p={p}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn square_areas() {
        for lo in [[0.0, 0.0], [-1.0, 0.0]] {
            let p = Patch::axis_box(&lo, &[lo[0] + 1.0, lo[1] + 1.0]);
            let mesh = ElementMesh::from_basis(p.basis());
            for n in 1..5 {
                let rule = gauss_rule(n).unwrap();
                let a: f64 = mesh
                    .elements()
                    .flat_map(|e| element_quadrature(&p, &e, &rule).unwrap())
                    .map(|q| q.weight)
                    .sum();
                assert!((a - 1.0).abs() < 1e-14);
            }
        }
    }

    fn surface_area(name: &str, n: usize, refine: usize) -> f64 {
        let dom = builtin_geometry(name).unwrap();
        let rule = gauss_rule(n).unwrap();
        let mut total = 0.0;
        for p in &dom.patches {
            let dirs: Vec<KnotVector> = p.basis().dirs().iter().map(|k| k.h_refine(refine)).collect();
            let mesh = ElementMesh::from_basis(&TensorBasis::new(dirs, None).unwrap());
            for e in mesh.elements() {
                total += element_quadrature(p, &e, &rule).unwrap().iter().map(|q| q.weight).sum::<f64>();
            }
        }
        total
    }

    #[test]
    fn torus_area() {
        let a = surface_area("torus_4patch", 8, 2);
        let exact = 8.0 * std::f64::consts::PI.powi(2);
        assert!((a - exact).abs() < 1e-6, "{a} vs {exact}");
    }

    #[test]
    fn sphere_area() {
        let a = surface_area("sphere_6patch", 10, 2);
        assert!((a - 4.0 * std::f64::consts::PI).abs() < 1e-6, "{a}");
    }

    #[test]
    fn locate_spans() {
        let m = ElementMesh::new(vec![vec![0.0, 0.25, 0.5, 1.0]]).unwrap();
        assert_eq!(m.locate(0, 0.0), 0);
        assert_eq!(m.locate(0, 0.25), 1);
        assert_eq!(m.locate(0, 0.7), 2);
        assert_eq!(m.locate(0, 1.0), 2);
        assert!(ElementMesh::new(vec![vec![0.0, 0.0, 1.0]]).is_err());
    }

    fn mesh_with(spans: [usize; 2]) -> ElementMesh {
        ElementMesh::new(
            spans
                .iter()
                .map(|&n| (0..=n).map(|i| i as f64 / n as f64).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn merged_breakpoints_are_the_union() {
        let dom = builtin_geometry("unit_square_2patch").unwrap();
        let g = &dom.interfaces[0];
        let rule = gauss_rule(2).unwrap();
        let fq = interface_quadrature(&dom.patches, g, &mesh_with([2, 2]), &mesh_with([4, 4]), &rule).unwrap();
        assert_eq!(fq.breaks, vec![vec![0.0, 0.25, 0.5, 0.75, 1.0]]);
        assert_eq!(fq.points.len(), 8);
        assert!((fq.measure() - 1.0).abs() < 1e-14);
        // nested meshes: merged = finer side
        let fq = interface_quadrature(&dom.patches, g, &mesh_with([4, 4]), &mesh_with([8, 8]), &rule).unwrap();
        assert_eq!(fq.breaks[0], mesh_with([8, 8]).breaks(1).to_vec());
    }

    #[test]
    fn interface_measure_is_side_independent() {
        let dom = builtin_geometry("sphere_6patch").unwrap();
        let rule = gauss_rule(8).unwrap();
        let m = mesh_with([3, 3]);
        for g in &dom.interfaces {
            let fa = interface_quadrature(&dom.patches, g, &m, &m, &rule).unwrap();
            let swapped = InterfaceGlue {
                a: g.b,
                b: g.a,
                orientation: invert(g.orientation),
            };
            let fb = interface_quadrature(&dom.patches, &swapped, &m, &m, &rule).unwrap();
            assert!((fa.measure() - fb.measure()).abs() < 1e-10);
            // great-circle arc between adjacent cube-face corners
            let arc = (1.0f64 / 3.0).acos();
            assert!((fa.measure() - arc).abs() < 1e-9, "{}", fa.measure());
        }
    }

    fn invert(o: FaceOrientation) -> FaceOrientation {
        // 1D faces: a flip is its own inverse
        o
    }

    #[test]
    fn merged_face_integral_matches_brute_force() {
        // degree-2 traces from both sides of a non-matching interface
        let dom = builtin_geometry("unit_square_2patch").unwrap();
        let g = dom.interfaces[0];
        let ka = KnotVector::uniform(2, 3);
        let kb = KnotVector::uniform(2, 5);
        let ma = ElementMesh::new(vec![vec![0.0, 1.0], ka.breakpoints()]).unwrap();
        let mb = ElementMesh::new(vec![vec![0.0, 1.0], kb.breakpoints()]).unwrap();
        let rule = gauss_rule(3).unwrap();
        let fq = interface_quadrature(&dom.patches, &g, &ma, &mb, &rule).unwrap();
        let (side_a, side_b) = (g.a.side, g.b.side);
        assert_eq!((side_a.axis, side_b.axis), (0, 0));
        let basis_val = |kv: &KnotVector, i: usize, y: f64| {
            let (first, vals) = kv.eval_basis(y).unwrap();
            if i >= first && i < first + vals.len() {
                vals[i - first]
            } else {
                0.0
            }
        };
        for (ia, ib) in [(0, 0), (1, 3), (2, 4), (4, 6), (3, 2)] {
            let quad: f64 = fq
                .points
                .iter()
                .map(|p| p.weight * basis_val(&ka, ia, p.xhat_a[1]) * basis_val(&kb, ib, p.xhat_b.unwrap()[1]))
                .sum();
            let n = 2000;
            let brute: f64 = (0..n)
                .map(|s| {
                    let y = (s as f64 + 0.5) / n as f64;
                    basis_val(&ka, ia, y) * basis_val(&kb, ib, y) / n as f64
                })
                .sum();
            // midpoint rule error is O(h^2 f''), tiny but above 1e-10 for kinks;
            // compare against a refined Richardson estimate instead
            let brute2: f64 = (0..2 * n)
                .map(|s| {
                    let y = (s as f64 + 0.5) / (2 * n) as f64;
                    basis_val(&ka, ia, y) * basis_val(&kb, ib, y) / (2 * n) as f64
                })
                .sum();
            let richardson = (4.0 * brute2 - brute) / 3.0;
            assert!((quad - richardson).abs() < 1e-10, "{ia},{ib}: {quad} vs {richardson}");
        }
    }

    #[test]
    fn boundary_quadrature_measures_sides() {
        let dom = builtin_geometry("cube_4patch").unwrap();
        let rule = gauss_rule(2).unwrap();
        let p = &dom.patches[0];
        let mesh = ElementMesh::from_basis(p.basis());
        let fq = boundary_quadrature(p, Side::new(2, false), &mesh, &rule).unwrap();
        assert!((fq.measure() - 1.0).abs() < 1e-14);
        for pt in &fq.points {
            assert!((pt.normal[2] + 1.0).abs() < 1e-14);
        }
        let fq = boundary_quadrature(p, Side::new(0, false), &mesh, &rule).unwrap();
        assert!((fq.measure() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn mismatched_glue_is_rejected() {
        let patches = vec![
            Patch::axis_box(&[0.0, 0.0], &[1.0, 1.0]),
            Patch::axis_box(&[1.0, 0.1], &[2.0, 1.1]),
        ];
        let g = InterfaceGlue {
            a: SideRef { patch: 0, side: Side::new(0, true) },
            b: SideRef { patch: 1, side: Side::new(0, false) },
            orientation: FaceOrientation::default(),
        };
        let m = mesh_with([1, 1]);
        let r = interface_quadrature(&patches, &g, &m, &m, &gauss_rule(2).unwrap());
        assert!(matches!(r, Err(Error::Glue(_))));
    }
}
