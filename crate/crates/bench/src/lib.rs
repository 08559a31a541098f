//! Fixtures shared by the benchmarks.

use dgiga_core::assembly::assemble;
use dgiga_core::problems::get_case;
use dgiga_core::{DGSystem, ProblemSpec};

/// Spec and assembled system of a registry case at `(k, level)`.
pub fn system(case: &str, k: usize, level: usize) -> (ProblemSpec, dgiga_core::Discretization, DGSystem) {
    let case = get_case(case).expect("registered case");
    let spec = case.spec().expect("valid spec");
    let disc = case.discretization(k, level);
    let sys = assemble(&spec, &disc).expect("assembly");
    (spec, disc, sys)
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_assembles() {
        let (_, _, sys) = super::system("smooth2d", 1, 0);
        assert!(sys.num_dofs() > 0);
    }
}
