mod common;

use common::*;
use singctrl_core::ocp::{control_affinity_defect, reduced_cost_and_gradient, Mesh, Trajectory};
use singctrl_core::problems::{fishery_switching, FisheryParams};

#[test]
fn adjoint_gradient_matches_finite_differences() {
    let mut rng = rng(21);
    for (name, problem) in benchmark_problems() {
        let mesh = Mesh::new(problem.horizon(), 60).unwrap();
        for _ in 0..5 {
            let u = random_controls(problem.as_ref(), 60, &mut rng);
            let gap = gradient_gap(problem.as_ref(), &mesh, &u);
            assert!(gap <= 1e-5, "{name}: {gap:e}");
        }
    }
}

#[test]
fn benchmarks_are_control_affine() {
    let mut rng = rng(22);
    for (name, problem) in benchmark_problems() {
        let u = random_controls(problem.as_ref(), 1, &mut rng);
        let x = problem.initial_state().to_vec();
        let defect =
            control_affinity_defect(problem.as_ref(), &x, u.column(0).as_slice().unwrap(), 0.3);
        assert!(defect <= 1e-9, "{name}: {defect:e}");
    }
}

#[test]
fn fishery_switching_function_is_scaled_gradient() {
    let p = FisheryParams::default();
    let problem = singctrl_core::problems::fishery_problem(p).unwrap();
    let mesh = Mesh::new(p.horizon, 120).unwrap();
    let u = random_controls(&problem, 120, &mut rng(23));
    let traj = Trajectory::evaluate(&problem, &mesh, u.clone()).unwrap();
    let psi = fishery_switching(&p, traj.states.view(), traj.adjoints.view());
    let (_, g) = reduced_cost_and_gradient(&problem, &mesh, u.view()).unwrap();
    for k in 0..120 {
        assert!((psi[k] - g[[0, k]] / mesh.step()).abs() <= 1e-12 * (1.0 + psi[k].abs()));
    }
}
