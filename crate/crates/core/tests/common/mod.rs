//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::sync::Arc;

use dgiga_core::analysis::{error_norms, solve_level, ErrorNorms};
use dgiga_core::assembly::{Discretization, ProblemSpec};
use dgiga_core::geometry::{MultiPatchDomain, Patch, Point};
use dgiga_core::linalg::CgOptions;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Polynomial `Σ c x^a y^b z^c` with analytic derivatives.
#[derive(Debug, Clone)]
pub struct Poly {
    pub terms: Vec<(f64, [i32; 3])>,
}

fn pw(x: f64, e: i32) -> f64 {
    if e < 0 {
        0.0
    } else {
        x.powi(e)
    }
}

impl Poly {
    /// Random polynomial of total degree ≤ `degree` in `dim` variables.
    pub fn random(dim: usize, degree: i32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = Vec::new();
        let zmax = if dim == 3 { degree } else { 0 };
        let ymax = if dim >= 2 { degree } else { 0 };
        for a in 0..=degree {
            for b in 0..=ymax {
                for c in 0..=zmax {
                    if a + b + c <= degree {
                        terms.push((rng.gen_range(-1.0..1.0), [a, b, c]));
                    }
                }
            }
        }
        Self { terms }
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| c * pw(x[0], e[0]) * pw(x[1], e[1]) * pw(x[2], e[2]))
            .sum()
    }

    pub fn grad(&self, x: &Point) -> Point {
        let mut g = [0.0; 3];
        for (c, e) in &self.terms {
            let f = [e[0] as f64, e[1] as f64, e[2] as f64];
            g[0] += c * f[0] * pw(x[0], e[0] - 1) * pw(x[1], e[1]) * pw(x[2], e[2]);
            g[1] += c * f[1] * pw(x[0], e[0]) * pw(x[1], e[1] - 1) * pw(x[2], e[2]);
            g[2] += c * f[2] * pw(x[0], e[0]) * pw(x[1], e[1]) * pw(x[2], e[2] - 1);
        }
        g
    }

    pub fn laplacian(&self, x: &Point) -> f64 {
        let mut l = 0.0;
        for (c, e) in &self.terms {
            let f = [e[0] as f64, e[1] as f64, e[2] as f64];
            l += c * f[0] * (f[0] - 1.0) * pw(x[0], e[0] - 2) * pw(x[1], e[1]) * pw(x[2], e[2]);
            l += c * f[1] * (f[1] - 1.0) * pw(x[0], e[0]) * pw(x[1], e[1] - 2) * pw(x[2], e[2]);
            l += c * f[2] * (f[2] - 1.0) * pw(x[0], e[0]) * pw(x[1], e[1]) * pw(x[2], e[2] - 2);
        }
        l
    }
}

/// Dirichlet problem `−αΔu = f` with `u = poly` on every patch.
pub fn poly_spec(domain: MultiPatchDomain, poly: &Poly, alpha: f64) -> ProblemSpec {
    let (p1, p2, p3, p4) = (poly.clone(), poly.clone(), poly.clone(), poly.clone());
    let mut spec = ProblemSpec::new(domain, Arc::new(move |x: &Point| -alpha * p1.laplacian(x)));
    spec.dirichlet = Some(Arc::new(move |x: &Point| p2.value(x)));
    spec.exact = Some(Arc::new(move |x: &Point| p3.value(x)));
    spec.exact_grad = Some(Arc::new(move |x: &Point| p4.grad(x)));
    spec
}

pub fn solve_errors(spec: &ProblemSpec, disc: &Discretization) -> ErrorNorms {
    let opts = CgOptions {
        tol: 1e-13,
        ..Default::default()
    };
    let (sys, u, _) = solve_level(spec, disc, &opts).expect("solve");
    error_norms(spec, &sys, &u, None).expect("norms")
}

/// Affine (parallelogram) 2×2 multipatch layout of a sheared square.
pub fn sheared_square() -> MultiPatchDomain {
    let map = |x: f64, y: f64| -> Point { [x + 0.3 * y, 0.2 * x + y, 0.0] };
    let mut patches = Vec::new();
    for j in 0..2 {
        for i in 0..2 {
            let (x0, y0) = (i as f64 - 1.0, j as f64 - 1.0);
            let c = [map(x0, y0), map(x0 + 1.0, y0), map(x0, y0 + 1.0), map(x0 + 1.0, y0 + 1.0)];
            patches.push(Patch::bilinear(c, 2).expect("affine patch"));
        }
    }
    MultiPatchDomain::from_patches(patches, vec![1.0; 4]).expect("sheared square")
}

/// Four boxes tiling `(−1,1)×(−1,1)×(0,1)`, unequal in size.
pub fn boxes_3d() -> MultiPatchDomain {
    let xs = [-1.0, 0.25, 1.0];
    let ys = [-1.0, -0.4, 1.0];
    let mut patches = Vec::new();
    for j in 0..2 {
        for i in 0..2 {
            patches.push(Patch::axis_box(&[xs[i], ys[j], 0.0], &[xs[i + 1], ys[j + 1], 1.0]));
        }
    }
    MultiPatchDomain::from_patches(patches, vec![1.0; 4]).expect("3d boxes")
}

/// `u = c_i x + d_i x y + y^2` on `x < 0` / `x > 0` with `α_1 c_1 = α_2 c_2`
/// and `α_1 d_1 = α_2 d_2`: continuous value and normal flux across `x = 0`.
pub fn jump_spec(k: usize) -> ProblemSpec {
    let (a1, a2) = (1.0, 25.0);
    let (c1, d1) = (1.5, -0.8);
    let (c2, d2) = (a1 * c1 / a2, a1 * d1 / a2);
    let quad = if k >= 2 { 1.0 } else { 0.0 };
    let coef = move |x: &Point| if x[0] < 0.0 { (c1, d1, a1) } else { (c2, d2, a2) };
    let u = move |x: &Point| {
        let (c, d, _) = coef(x);
        c * x[0] + d * x[0] * x[1] + quad * x[1] * x[1]
    };
    let domain = MultiPatchDomain::from_patches(
        vec![Patch::axis_box(&[-1.0, 0.0], &[0.0, 1.0]), Patch::axis_box(&[0.0, 0.0], &[1.0, 1.0])],
        vec![a1, a2],
    )
    .unwrap();
    let mut spec = ProblemSpec::new(domain, Arc::new(move |x: &Point| -coef(x).2 * 2.0 * quad));
    spec.dirichlet = Some(Arc::new(u));
    spec.exact = Some(Arc::new(u));
    spec.exact_grad = Some(Arc::new(move |x: &Point| {
        let (c, d, _) = coef(x);
        [c + d * x[1], d * x[0] + 2.0 * quad * x[1], 0.0]
    }));
    spec
}

/// One PASS/FAIL line per acceptance criterion.
pub fn report(id: &str, ok: bool, detail: &str) -> bool {
    println!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}
