//! Reproduction of discrete-space solutions to machine precision.

mod common;

use std::sync::Arc;

use common::*;
use dgiga_core::assembly::{Discretization, ProblemSpec};
use dgiga_core::geometry::{MultiPatchDomain, Patch, Point};

const TOL: f64 = 1e-9;

#[test]
fn polynomials_on_sheared_2d_patches() {
    for k in 1..=3 {
        let poly = Poly::random(2, k as i32, 10 + k as u64);
        let spec = poly_spec(sheared_square(), &poly, 1.0);
        for level in 0..2 {
            let e = solve_errors(&spec, &Discretization::new(k, level));
            assert!(e.dg < TOL && e.l2 < TOL, "k={k} level={level}: {e:?}");
        }
    }
}

#[test]
fn polynomials_on_3d_boxes() {
    for k in 1..=3 {
        let poly = Poly::random(3, k as i32, 20 + k as u64);
        let spec = poly_spec(boxes_3d(), &poly, 1.0);
        let e = solve_errors(&spec, &Discretization::new(k, 1));
        assert!(e.dg < TOL && e.l2 < TOL, "k={k}: {e:?}");
    }
}

#[test]
fn nonmatching_refinement_keeps_polynomials() {
    let poly = Poly::random(2, 2, 3);
    let spec = poly_spec(sheared_square(), &poly, 1.0);
    let mut disc = Discretization::new(2, 0);
    disc.base_subdivision = vec![[1, 1, 1], [3, 2, 1], [2, 5, 1], [4, 4, 1]];
    let e = solve_errors(&spec, &disc);
    assert!(e.dg < TOL, "{e:?}");
}

#[test]
fn doubling_the_penalty_keeps_the_patch_test() {
    let poly = Poly::random(2, 2, 5);
    let mut spec = poly_spec(sheared_square(), &poly, 1.0);
    spec.penalty = Some(2.0 * dgiga_core::assembly::default_penalty(2, 2));
    let e = solve_errors(&spec, &Discretization::new(2, 1));
    assert!(e.dg < TOL, "{e:?}");
}

#[test]
fn flux_continuous_solution_with_jumping_coefficient() {
    for k in 1..=3 {
        let mut disc = Discretization::new(k, 1);
        disc.base_subdivision = vec![[1, 1, 1], [2, 3, 1]];
        let e = solve_errors(&jump_spec(k), &disc);
        assert!(e.dg < TOL, "k={k}: {e:?}");
    }
}

#[test]
fn one_dimensional_two_patch_linear() {
    let domain = MultiPatchDomain::from_patches(
        vec![Patch::axis_box(&[0.0], &[0.4]), Patch::axis_box(&[0.4], &[1.0])],
        vec![1.0, 1.0],
    )
    .unwrap();
    let mut spec = ProblemSpec::new(domain, Arc::new(|_: &Point| 0.0));
    spec.dirichlet = Some(Arc::new(|x: &Point| x[0]));
    let (sys, u, _) = dgiga_core::analysis::solve_level(&spec, &Discretization::new(1, 0), &Default::default()).unwrap();
    // dofs: endpoints of each patch
    let expect = [0.0, 0.4, 0.4, 1.0];
    assert_eq!(sys.num_dofs(), 4);
    for (a, b) in u.iter().zip(expect) {
        assert!((a - b).abs() < 1e-12, "{u:?}");
    }
}

#[test]
fn degree_above_k_is_not_reproduced() {
    // guards against a vacuous patch test
    let poly = Poly::random(2, 3, 11);
    let spec = poly_spec(sheared_square(), &poly, 1.0);
    let e = solve_errors(&spec, &Discretization::new(2, 0));
    assert!(e.dg > 1e-4, "{e:?}");
}
