//! Cross-checks every solver against the exhaustive reference oracle on
//! randomized instances, and checks the reductions that tie the threshold
//! scan, the plain e-BH ordering, and the selection program together.

use kelp_core::elp::{
    focused_ebh, ElpError, ElpProblem, OuterNodeFilter, SolverChoice, DEFAULT_NODE_BUDGET,
};
use kelp_core::evalue::{ebh_indices, EValueTable, Provenance};
use kelp_core::family::HypothesisFamily;
use kelp_core::testing::{
    enumerate_optimum, is_feasible, random_evalue_rows, random_general_family,
    random_nested_family, random_nested_specs, TestRng,
};

fn table_for(family: &HypothesisFamily, rows: Vec<Vec<f64>>) -> EValueTable {
    EValueTable::new(family, rows, Provenance::Raw, family.n_groups()).unwrap()
}

fn flat_ids(sol: &kelp_core::elp::ElpSolution, family: &HypothesisFamily) -> Vec<usize> {
    sol.rejection.rejected.iter().map(|&g| family.flat_index(g)).collect()
}

#[test]
fn all_solvers_match_oracle_on_nested_instances() {
    let mut rng = TestRng::new(0xA11CE);
    for trial in 0..120 {
        let p = 4 + rng.below(7);
        let levels = 1 + rng.below(3);
        let family = random_nested_family(&mut rng, p, levels);
        let alpha = [0.2, 0.3, 0.5][rng.below(3)];
        let rows = random_evalue_rows(&mut rng, &family, alpha);
        let table = table_for(&family, rows);
        let flat = table.flat();
        let problem = ElpProblem::new(&family, &table, alpha).unwrap();

        let (oracle_w, _) = enumerate_optimum(&family, &flat, alpha);
        for sol in [
            problem.solve_exact().unwrap(),
            problem.solve_interval_dp().unwrap(),
            problem.solve_branch_bound(DEFAULT_NODE_BUDGET).unwrap(),
        ] {
            // Dyadic weights make the objective exact, so agreement is
            // equality, not closeness.
            assert_eq!(
                sol.objective, oracle_w,
                "trial {trial}: {} objective {} vs oracle {}",
                sol.solver.as_str(),
                sol.objective,
                oracle_w
            );
            assert!(sol.optimal);
            let ids = flat_ids(&sol, &family);
            assert!(is_feasible(&family, &flat, &ids, alpha));
        }
    }
}

#[test]
fn exact_and_branch_bound_match_oracle_on_general_instances() {
    let mut rng = TestRng::new(0xBEEF);
    for trial in 0..80 {
        let p = 4 + rng.below(6);
        let levels = 1 + rng.below(2);
        let family = random_general_family(&mut rng, p, levels);
        let alpha = [0.2, 0.4][rng.below(2)];
        let rows = random_evalue_rows(&mut rng, &family, alpha);
        let table = table_for(&family, rows);
        let flat = table.flat();
        let problem = ElpProblem::new(&family, &table, alpha).unwrap();

        let (oracle_w, _) = enumerate_optimum(&family, &flat, alpha);
        let exact = problem.solve_exact().unwrap();
        let bb = problem.solve_branch_bound(DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(exact.objective, oracle_w, "trial {trial}");
        assert_eq!(bb.objective, oracle_w, "trial {trial}");
        assert!(is_feasible(&family, &flat, &flat_ids(&exact, &family), alpha));
        assert!(is_feasible(&family, &flat, &flat_ids(&bb, &family), alpha));

        if !family.all_contiguous() {
            assert!(matches!(
                problem.solve_interval_dp(),
                Err(ElpError::NonContiguous { .. })
            ));
        }
    }
}

#[test]
fn truncated_search_still_returns_valid_selections() {
    let mut rng = TestRng::new(0x7B);
    for _ in 0..40 {
        let p = 6 + rng.below(5);
        let family = random_general_family(&mut rng, p, 2);
        let alpha = 0.3;
        let rows = random_evalue_rows(&mut rng, &family, alpha);
        let table = table_for(&family, rows);
        let flat = table.flat();
        let problem = ElpProblem::new(&family, &table, alpha).unwrap();
        let (oracle_w, _) = enumerate_optimum(&family, &flat, alpha);
        // A few nodes only: whatever comes back must be feasible and no
        // better than the optimum.
        let sol = problem.solve_branch_bound(3).unwrap();
        let ids = flat_ids(&sol, &family);
        assert!(is_feasible(&family, &flat, &ids, alpha));
        assert!(sol.objective <= oracle_w + 1e-12);
    }
}

#[test]
fn focused_scan_equals_program_on_nested_default_weights() {
    // With inverse-size weights on a nested family the threshold scan with
    // the outer-node filter and the full program pick the same set.
    let mut rng = TestRng::new(0xF0C05);
    for trial in 0..120 {
        let p = 4 + rng.below(7);
        let levels = 1 + rng.below(3);
        let specs = random_nested_specs(&mut rng, p, levels);
        let family = HypothesisFamily::new(p, specs).unwrap();
        let alpha = [0.2, 0.3, 0.5][rng.below(3)];
        let rows = random_evalue_rows(&mut rng, &family, alpha);
        let table = table_for(&family, rows);
        let problem = ElpProblem::new(&family, &table, alpha).unwrap();

        let program = problem.solve_exact().unwrap();
        let scan = focused_ebh(&family, &table, alpha, &OuterNodeFilter).unwrap();
        assert_eq!(
            program.rejection.rejected, scan.rejection.rejected,
            "trial {trial}: program and scan disagree"
        );
    }
}

#[test]
fn single_resolution_program_is_ebh() {
    let mut rng = TestRng::new(0xE8);
    for _ in 0..100 {
        let p = 3 + rng.below(9);
        let family = random_nested_family(&mut rng, p, 0);
        let alpha = [0.2, 0.5][rng.below(2)];
        let rows = random_evalue_rows(&mut rng, &family, alpha);
        let flat_row = rows[0].clone();
        let table = table_for(&family, rows);
        let problem = ElpProblem::new(&family, &table, alpha).unwrap();
        let sol = problem.solve(SolverChoice::Auto).unwrap();
        let mut got = flat_ids(&sol, &family);
        got.sort_unstable();
        let want = ebh_indices(&flat_row, p, alpha).unwrap();
        assert_eq!(got, want);
    }
}

#[test]
fn auto_dispatch_matches_explicit_solvers() {
    let mut rng = TestRng::new(0xD15);
    for _ in 0..40 {
        let p = 4 + rng.below(6);
        let nested = random_nested_family(&mut rng, p, 2);
        let general = random_general_family(&mut rng, p, 2);
        for family in [nested, general] {
            let alpha = 0.3;
            let rows = random_evalue_rows(&mut rng, &family, alpha);
            let table = table_for(&family, rows);
            let problem = ElpProblem::new(&family, &table, alpha).unwrap();
            let auto = problem.solve(SolverChoice::Auto).unwrap();
            let exact = problem.solve_exact().unwrap();
            assert_eq!(auto.objective, exact.objective);
        }
    }
}
