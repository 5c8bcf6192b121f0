use proptest::prelude::*;
use qmm_core::measure::DiscreteMeasure;
use qmm_core::problem::ProblemSpec;
use qmm_core::solver::{solve, SolveReport};
use qmm_core::verification::c_mu;
use qmm_core::Error;

fn two_point(a: f64) -> DiscreteMeasure {
    DiscreteMeasure::uniform(1, vec![vec![-a], vec![a]]).unwrap()
}

fn intercept(report: &SolveReport) -> f64 {
    let n = report.solution.dimension;
    report.solution.potential.phi(&vec![0.0; n])
}

#[test]
fn two_point_intercepts_follow_the_scaling_law() {
    for a in [0.5, 1.0, 2.0] {
        let report = solve(&ProblemSpec::new(2.0, two_point(a))).unwrap();
        let b = intercept(&report);
        let expected = (1.0 / a).sqrt();
        assert!((b / expected - 1.0).abs() <= 2e-2, "a = {a}: b = {b}, expected {expected}");
        // φ = a|x| + b away from the kink
        for x in [-3.0, -0.7, 1.3, 5.0] {
            let phi = report.solution.potential.phi(&[x]);
            assert!((phi - (a * f64::abs(x) + b)).abs() <= 1e-6 * (1.0 + phi), "x = {x}");
        }
    }
}

#[test]
fn translated_target_gives_the_same_solution() {
    let base = solve(&ProblemSpec::new(2.0, two_point(1.0))).unwrap();
    let shifted = DiscreteMeasure::uniform(1, vec![vec![2.5], vec![4.5]]).unwrap();
    let mut spec = ProblemSpec::new(2.0, shifted.clone());
    assert!(matches!(spec.validate(), Err(Error::NonzeroBarycenter(_))));
    spec.auto_center = true;
    let moved = solve(&spec).unwrap();
    let tol = 2.0 * spec.solver.tolerance;
    let (j0, j1) = (base.diagnostics.values.j, moved.diagnostics.values.j);
    assert!((j0 - j1).abs() <= tol * j0.abs(), "{j0} vs {j1}");
    // adding the shift back: φ(x) + 3.5 x is a potential whose gradient hits the original atoms
    for x in [-2.0, 0.0, 0.3, 4.0] {
        let a = base.solution.potential.phi(&[x]);
        let b = moved.solution.potential.phi(&[x]);
        assert!((a - b).abs() <= 1e-9 * (1.0 + a), "x = {x}: {a} vs {b}");
    }
}

fn triangle() -> DiscreteMeasure {
    DiscreteMeasure::new(2, vec![vec![1.0, 0.0], vec![-0.5, 0.8], vec![-0.5, -0.8]], vec![1.0 / 3.0; 3])
        .unwrap()
        .centered()
}

#[test]
fn iterations_descend_and_end_at_a_fixed_point() {
    let report = solve(&ProblemSpec::new(2.0, triangle()).with_grid(15.0, 64)).unwrap();
    assert!(report.solution.converged);
    for w in report.history.windows(2) {
        if w[0].damping > 0.0 {
            assert!(w[1].j <= w[0].j + 1e-9, "J rose from {} to {}", w[0].j, w[1].j);
        }
    }
    let s = &report.solution;
    let p = s.exponent();
    let max = s.density.values().iter().cloned().fold(0.0, f64::max);
    let worst = s
        .phi_values()
        .iter()
        .zip(s.density.values())
        .map(|(phi, rho)| (phi.powf(-p) - rho).abs() / max)
        .fold(0.0, f64::max);
    assert!(worst <= 1e-4, "relative fixed-point error {worst}");
    assert!(report.diagnostics.pushforward_tv <= 1e-3);
}

#[test]
fn three_dimensional_solve_converges() {
    let mu = DiscreteMeasure::uniform(
        3,
        vec![vec![1.0, 1.0, 1.0], vec![1.0, -1.0, -1.0], vec![-1.0, 1.0, -1.0], vec![-1.0, -1.0, 1.0]],
    )
    .unwrap();
    let report = solve(&ProblemSpec::new(3.0, mu).with_grid(6.0, 20)).unwrap();
    assert!(report.solution.converged);
    assert!(report.diagnostics.pushforward_tv <= 1e-3);
    assert!(report.diagnostics.residual <= 1e-4);
}

#[test]
fn small_exponents_are_flagged() {
    let report = solve(&ProblemSpec::new(0.8, two_point(1.0)).with_grid(2000.0, 5000)).unwrap();
    assert!(report.solution.outside_existence_theory);
    assert!(report.diagnostics.notes.iter().any(|n| n.contains("q <= 1")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn cmu_is_positive_exactly_for_full_dimensional_targets(
        n in 1usize..=3,
        flat in any::<bool>(),
        raw in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 3), 0.1f64..1.0), 2..9),
        normal in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let nrm: f64 = normal[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(nrm > 0.1);
        let e: Vec<f64> = normal[..n].iter().map(|v| v / nrm).collect();
        let points: Vec<Vec<f64>> = raw
            .iter()
            .map(|(p, _)| {
                let mut p = p[..n].to_vec();
                if flat {
                    // project onto the hyperplane through 0 with normal e
                    let d: f64 = p.iter().zip(&e).map(|(a, b)| a * b).sum();
                    for (x, y) in p.iter_mut().zip(&e) {
                        *x -= d * y;
                    }
                }
                p
            })
            .collect();
        let mu = DiscreteMeasure::normalized(n, points, raw.iter().map(|(_, w)| *w).collect()).unwrap().centered();
        let mut spec = ProblemSpec::new(2.0, mu.clone());
        spec.auto_center = true;
        let full = spec.validate().is_ok();
        let c = c_mu(&mu);
        prop_assert!(c >= -1e-12);
        prop_assert_eq!(c > 1e-6, full, "c(mu) = {}, validate ok = {}", c, full);
    }
}
