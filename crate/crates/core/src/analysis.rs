//! Error norms, convergence tables and predicted rates.

use crate::assembly::{assemble, PatchTables, DGSystem, Discretization, FaceData, FaceKind, FieldSpace, ProblemSpec};
use crate::error::{Error, Result};
use crate::geometry::{MultiPatchDomain, Point};
use crate::linalg::{CgOptions, SolveReport};
use crate::quadrature::{element_quadrature, gauss_rule, GaussRule, QuadPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2: f64,
    /// Broken `α`-weighted H¹ seminorm part of the dG norm.
    pub energy: f64,
    /// Full dG norm: energy plus penalty-weighted face jumps.
    pub dg: f64,
}

/// Tangential part `J F⁻¹ Jᵀ g` of an ambient vector (identity on volumes).
fn tangential(jac: &crate::geometry::Jacobian, metric: &crate::geometry::Metric, g: &Point) -> Point {
    let mut par = [0.0; 3];
    for a in 0..jac.par_dim {
        par[a] = jac.cols[a][0] * g[0] + jac.cols[a][1] * g[1] + jac.cols[a][2] * g[2];
    }
    jac.push_gradient(metric, &par)
}

fn error_rule(space: &FieldSpace, quad_points: Option<usize>) -> Result<GaussRule> {
    gauss_rule(quad_points.unwrap_or(space.degree + 3).min(crate::quadrature::MAX_GAUSS_POINTS))
}

/// Volume part shared by exact and reference comparisons: integrates
/// `(e, ∇e)` returned by `err` over every element of `space`. `err` also
/// receives the value and parametric gradient of `coeffs` at the point.
fn volume_errors(
    domain: &MultiPatchDomain,
    space: &FieldSpace,
    coeffs: &[f64],
    rule: &GaussRule,
    mut err: impl FnMut(usize, &[f64], &QuadPoint, (f64, [f64; 3])) -> Result<(f64, Point)>,
) -> Result<(f64, f64)> {
    let (mut l2, mut en) = (0.0, 0.0);
    for (p, patch) in domain.patches.iter().enumerate() {
        let alpha = domain.alpha[p];
        let d = patch.par_dim();
        let tables = PatchTables::new(space, p, rule)?;
        for el in space.meshes[p].elements() {
            for (qi, q) in element_quadrature(patch, &el, rule)?.iter().enumerate() {
                let (e, ge) = err(p, &q.xhat[..d], q, tables.eval(&el, qi, coeffs))?;
                l2 += q.weight * e * e;
                en += q.weight * alpha * (ge[0] * ge[0] + ge[1] * ge[1] + ge[2] * ge[2]);
            }
        }
    }
    Ok((l2, en))
}

/// `‖u − u_h‖_{L²}` and the dG norm of the error against the exact solution.
///
/// Across interfaces the exact solution does not jump, so the face part is
/// `σ ∫⟦u_h⟧²`; on Dirichlet sides it is `σ ∫(u − u_h)²`.
pub fn error_norms(
    spec: &ProblemSpec,
    system: &DGSystem,
    coeffs: &[f64],
    quad_points: Option<usize>,
) -> Result<ErrorNorms> {
    let exact = spec
        .exact
        .as_ref()
        .ok_or_else(|| Error::Config("problem has no exact solution".into()))?;
    let grad = spec
        .exact_grad
        .as_ref()
        .ok_or_else(|| Error::Config("problem has no exact gradient".into()))?;
    let space = &system.space;
    let rule = error_rule(space, quad_points)?;
    let (l2, energy) = volume_errors(&spec.domain, space, coeffs, &rule, |_, _, q, (uh, gh)| {
        let gu = tangential(&q.jac, &q.metric, &grad(&q.x));
        let gh = q.jac.push_gradient(&q.metric, &gh);
        Ok((exact(&q.x) - uh, [gu[0] - gh[0], gu[1] - gh[1], gu[2] - gh[2]]))
    })?;
    let mut faces = 0.0;
    for f in &system.faces {
        for pt in &f.points {
            let j = FaceData::jump(pt, coeffs);
            let e = if pt.b.is_some() { j } else { exact(&pt.x) - j };
            faces += pt.weight * pt.sigma * e * e;
        }
    }
    Ok(ErrorNorms {
        l2: l2.sqrt(),
        energy: energy.sqrt(),
        dg: (energy + faces).sqrt(),
    })
}

/// Error of a coarse solution against a reference solution on a nested,
/// `level_gap` times bisected mesh. Integration runs over the fine mesh; the
/// face penalty uses coarse mesh sizes (`σ_fine / 2^gap`).
pub fn reference_error_norms(
    domain: &MultiPatchDomain,
    coarse: &DGSystem,
    coarse_coeffs: &[f64],
    fine: &DGSystem,
    fine_coeffs: &[f64],
    level_gap: usize,
    quad_points: Option<usize>,
) -> Result<ErrorNorms> {
    let rule = error_rule(&fine.space, quad_points)?;
    let (l2, energy) = volume_errors(domain, &fine.space, fine_coeffs, &rule, |p, xhat, q, (uf, gf)| {
        let (uc, gc) = coarse.space.eval(p, xhat, coarse_coeffs)?;
        let g = [gf[0] - gc[0], gf[1] - gc[1], gf[2] - gc[2]];
        Ok((uf - uc, q.jac.push_gradient(&q.metric, &g)))
    })?;
    let scale = 0.5f64.powi(level_gap as i32);
    let mut faces = 0.0;
    for f in &fine.faces {
        let (pa, pb) = match f.kind {
            FaceKind::Interface(i) => (domain.interfaces[i].a.patch, Some(domain.interfaces[i].b.patch)),
            FaceKind::Boundary(s) => (s.patch, None),
        };
        let d = domain.par_dim();
        for pt in &f.points {
            let jf = FaceData::jump(pt, fine_coeffs);
            let mut jc = coarse.space.eval(pa, &pt.xhat_a[..d], coarse_coeffs)?.0;
            if let (Some(pb), Some(xb)) = (pb, pt.xhat_b) {
                jc -= coarse.space.eval(pb, &xb[..d], coarse_coeffs)?.0;
            }
            faces += pt.weight * pt.sigma * scale * (jf - jc).powi(2);
        }
    }
    Ok(ErrorNorms {
        l2: l2.sqrt(),
        energy: energy.sqrt(),
        dg: (energy + faces).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub level: usize,
    pub dofs: usize,
    pub l2_error: f64,
    pub dg_error: f64,
    pub l2_rate: Option<f64>,
    pub dg_rate: Option<f64>,
}

/// Errors below this are treated as exact and get no rate.
pub const RATE_FLOOR: f64 = 1e-11;

/// `log2(e_{s-1} / e_s)` for consecutive bisection levels.
pub fn rate(prev: f64, cur: f64) -> Option<f64> {
    if prev > RATE_FLOOR && cur > RATE_FLOOR {
        Some((prev / cur).log2())
    } else {
        None
    }
}

/// Fills in the rate columns of `records` from their errors.
pub fn fill_rates(records: &mut [ConvergenceRecord]) {
    for s in 1..records.len() {
        records[s].l2_rate = rate(records[s - 1].l2_error, records[s].l2_error);
        records[s].dg_rate = rate(records[s - 1].dg_error, records[s].dg_error);
    }
}

/// Assembles and solves one level.
pub fn solve_level(spec: &ProblemSpec, disc: &Discretization, opts: &CgOptions) -> Result<(DGSystem, Vec<f64>, SolveReport)> {
    let sys = assemble(spec, disc)?;
    let (u, rep) = sys.solve(opts)?;
    Ok((sys, u, rep))
}

/// Runs levels `0..levels` of `disc` (its `level` field is ignored) and
/// measures errors against the exact solution.
pub fn rate_table(
    spec: &ProblemSpec,
    disc: &Discretization,
    levels: usize,
    opts: &CgOptions,
) -> Result<Vec<ConvergenceRecord>> {
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        let d = Discretization { level, ..disc.clone() };
        let (sys, u, _) = solve_level(spec, &d, opts)?;
        let e = error_norms(spec, &sys, &u, None)?;
        out.push(ConvergenceRecord {
            level,
            dofs: sys.num_dofs(),
            l2_error: e.l2,
            dg_error: e.dg,
            l2_rate: None,
            dg_rate: None,
        });
    }
    fill_rates(&mut out);
    Ok(out)
}

/// Like [`rate_table`], but errors are measured against the solution on
/// level `levels - 1 + gap`.
pub fn reference_rate_table(
    spec: &ProblemSpec,
    disc: &Discretization,
    levels: usize,
    gap: usize,
    opts: &CgOptions,
) -> Result<Vec<ConvergenceRecord>> {
    let ref_level = levels - 1 + gap;
    let (fine, uf, _) = solve_level(spec, &Discretization { level: ref_level, ..disc.clone() }, opts)?;
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        let (sys, u, _) = solve_level(spec, &Discretization { level, ..disc.clone() }, opts)?;
        let e = reference_error_norms(&spec.domain, &sys, &u, &fine, &uf, ref_level - level, None)?;
        out.push(ConvergenceRecord {
            level,
            dofs: sys.num_dofs(),
            l2_error: e.l2,
            dg_error: e.dg,
            l2_rate: None,
            dg_rate: None,
        });
    }
    fill_rates(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatePrediction {
    /// Solution smooth enough for the full rate `k`.
    Smooth { k: usize },
    /// Solution in `W^{l,p}` in `d` dimensions.
    LowRegularity { k: usize, l: f64, p: f64, d: usize },
    /// Point singularity `r^λ` on a mesh graded with exponent `mu_grading`.
    Graded { k: usize, lambda: f64, mu_grading: f64 },
}

/// Predicted dG-norm convergence exponent.
pub fn predicted_rate(pred: &RatePrediction) -> Result<f64> {
    match *pred {
        RatePrediction::Smooth { k } => Ok(k as f64),
        RatePrediction::LowRegularity { k, l, p, d } => {
            let df = d as f64;
            let lower = if l > 1.0 {
                (2.0 * df / (df + 2.0 * (l - 1.0))).max(1.0)
            } else {
                f64::INFINITY
            };
            if !(p > lower && p <= 2.0) {
                return Err(Error::Config(format!(
                    "integrability p = {p} outside ({lower}, 2] for l = {l}, d = {d}"
                )));
            }
            Ok((l + df / 2.0 - df / p - 1.0).min(k as f64))
        }
        RatePrediction::Graded { k, lambda, mu_grading } => {
            if !(mu_grading > 0.0 && mu_grading <= 1.0 && lambda > 0.0) {
                return Err(Error::Config(format!("invalid grading μ = {mu_grading}, λ = {lambda}")));
            }
            Ok((lambda / mu_grading).min(k as f64))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::ScalarFn;
    use crate::geometry::{builtin_geometry, MultiPatchDomain, Patch};
    use std::sync::Arc;

    #[test]
    fn predicted_rates_from_the_tables() {
        let r = predicted_rate(&RatePrediction::LowRegularity { k: 2, l: 2.0, p: 1.4, d: 3 }).unwrap();
        assert!((r - (2.0 + 1.5 - 3.0 / 1.4 - 1.0)).abs() < 1e-15);
        assert!((r - 0.357).abs() < 1e-3);
        let r = predicted_rate(&RatePrediction::LowRegularity { k: 3, l: 3.0, p: 1.4, d: 3 }).unwrap();
        assert!((r - 1.357).abs() < 1e-3);
        let r = predicted_rate(&RatePrediction::Graded { k: 2, lambda: 0.6, mu_grading: 0.3 }).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        assert_eq!(predicted_rate(&RatePrediction::Smooth { k: 3 }).unwrap(), 3.0);
    }

    #[test]
    fn rate_caps_and_admissibility() {
        let r = predicted_rate(&RatePrediction::LowRegularity { k: 1, l: 3.0, p: 2.0, d: 2 }).unwrap();
        assert_eq!(r, 1.0);
        // lower bound 2d/(d+2(l-1)) = 6/5 for l = 2, d = 3
        assert!(predicted_rate(&RatePrediction::LowRegularity { k: 2, l: 2.0, p: 1.2, d: 3 }).is_err());
        assert!(predicted_rate(&RatePrediction::LowRegularity { k: 2, l: 2.0, p: 2.5, d: 3 }).is_err());
        assert!(predicted_rate(&RatePrediction::Graded { k: 2, lambda: 0.6, mu_grading: 0.0 }).is_err());
    }

    #[test]
    fn rates_skip_the_first_level_and_zero_errors() {
        let mut recs: Vec<ConvergenceRecord> = [(1.0, 1.0), (0.25, 0.5), (1e-15, 0.125)]
            .iter()
            .enumerate()
            .map(|(level, &(l2, dg))| ConvergenceRecord {
                level,
                dofs: 0,
                l2_error: l2,
                dg_error: dg,
                l2_rate: None,
                dg_rate: None,
            })
            .collect();
        fill_rates(&mut recs);
        assert_eq!(recs[0].l2_rate, None);
        assert_eq!(recs[1].l2_rate, Some(2.0));
        assert_eq!(recs[1].dg_rate, Some(1.0));
        assert_eq!(recs[2].l2_rate, None);
        assert_eq!(recs[2].dg_rate, Some(2.0));
    }

    fn unit_square_spec(u: ScalarFn, g: crate::assembly::VectorFn) -> ProblemSpec {
        let dom = MultiPatchDomain::from_patches(vec![Patch::axis_box(&[0.0, 0.0], &[1.0, 1.0])], vec![1.0]).unwrap();
        let mut s = ProblemSpec::new(dom, Arc::new(|_: &Point| 0.0));
        s.dirichlet = Some(u.clone());
        s.exact = Some(u);
        s.exact_grad = Some(g);
        s
    }

    #[test]
    fn zero_field_against_constant() {
        let spec = unit_square_spec(Arc::new(|_: &Point| 1.0), Arc::new(|_: &Point| [0.0; 3]));
        let sys = assemble(&spec, &Discretization::new(1, 1)).unwrap();
        let e = error_norms(&spec, &sys, &vec![0.0; sys.num_dofs()], None).unwrap();
        assert!((e.l2 - 1.0).abs() < 1e-13);
        assert!(e.energy.abs() < 1e-14);
        assert!(e.dg > 0.0); // boundary penalty only
    }

    #[test]
    fn interpolated_bilinear_has_only_discretization_free_error() {
        // u = xy lies in the Q1 space; its coefficients are nodal values
        let spec = unit_square_spec(
            Arc::new(|x: &Point| x[0] * x[1]),
            Arc::new(|x: &Point| [x[1], x[0], 0.0]),
        );
        let sys = assemble(&spec, &Discretization::new(1, 2)).unwrap();
        let n = 5;
        let coeffs: Vec<f64> = (0..n * n).map(|f| (f % n) as f64 / 4.0 * (f / n) as f64 / 4.0).collect();
        let e = error_norms(&spec, &sys, &coeffs, None).unwrap();
        assert!(e.dg < 1e-13, "{e:?}");
    }

    #[test]
    fn dg_norm_vanishes_only_for_zero() {
        let dom = builtin_geometry("unit_square_2patch").unwrap();
        let mut spec = ProblemSpec::new(dom, Arc::new(|_: &Point| 0.0));
        spec.dirichlet = Some(Arc::new(|_: &Point| 0.0));
        let sys = assemble(&spec, &Discretization::new(2, 1)).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let v: Vec<f64> = (0..sys.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(sys.norm_matrix.bilinear(&v, &v) > 0.0);
        }
        assert_eq!(sys.norm_matrix.bilinear(&vec![0.0; sys.num_dofs()], &vec![0.0; sys.num_dofs()]), 0.0);
    }
}
