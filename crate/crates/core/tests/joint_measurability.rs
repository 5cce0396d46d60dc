mod common;

use common::{classical_parent, commuting_pair, sharp, xz_bloch_sweep, xz_random_parents};
use proptest::prelude::*;
use qdarwin::compat::{
    commutation_chain_check, constructive_parent, jm_feasibility_search, marginalizing_witness, verify_jm_witness,
    JmSearchOptions, JmWitness, StateSet,
};
use qdarwin::covering::{non_tuple_covering, theorem1_substitutes, Partition, TupleOptions};
use qdarwin::measurement::{redundancy_audit_over, Povm};
use qdarwin::random::{random_density, seeded};
use qdarwin::scenarios::{
    block_majority_povm, build_grid_state, column_parity_povm, grid_partitions, noisy_grid_images, row_povm,
    GridScenario, TiltedRepetition,
};
use qdarwin::tensor::{pauli, DenseOperator, SiteSpace, State, StateVector, C64};

#[test]
fn sharp_x_and_z_agree_with_bloch_sweep() {
    let optimum = (1.0 - std::f64::consts::FRAC_1_SQRT_2) / 2.0;
    let sweep = xz_bloch_sweep(0.02);
    assert!(sweep >= 0.05, "sweep found a parent with residual {sweep}");
    assert!(sweep >= optimum - 1e-12 && sweep <= optimum + 0.01, "{sweep}");
    let sampled = xz_random_parents(20_000, &mut seeded(17));
    assert!(sampled >= optimum - 1e-9, "{sampled}");

    let (x, z) = (sharp(0, &pauli::x()), sharp(0, &pauli::z()));
    let r = jm_feasibility_search(&[&x, &z], JmSearchOptions::default()).unwrap();
    assert!(!r.is_feasible());
    assert!(r.residual >= 0.05);
    assert!((r.residual - sweep).abs() < 0.01, "solver {} vs sweep {sweep}", r.residual);
}

#[test]
fn overlapping_grid_qubit_needs_incompatible_measurements() {
    // Restricted to the shared qubit, the row record reads X (the ± basis)
    // and the column record reads Z (the computational basis).
    let plus_minus = sharp(0, &pauli::x());
    let computational = Povm::computational(0, 2);
    let r = jm_feasibility_search(&[&plus_minus, &computational], JmSearchOptions::default()).unwrap();
    assert!(!r.is_feasible());
    assert!(r.residual >= 0.05, "{}", r.residual);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn commuting_projective_pairs_are_certified(seed in 0u64..1000, d in 2usize..=5, sa in 1usize..=4, sb in 2usize..=3) {
        prop_assume!(sa < d);
        let (a, b) = commuting_pair(seed, d, sa, sb);
        let r = jm_feasibility_search(&[&a, &b], JmSearchOptions::default()).unwrap();
        prop_assert!(r.is_feasible());
        prop_assert!(r.residual <= 1e-6);
        prop_assert!(r.iterations <= 500, "{} iterations", r.iterations);
    }

    #[test]
    fn diagonal_povms_match_classical_table(seed in 0u64..1000, na in 2usize..=4, nb in 2usize..=3) {
        use rand::Rng;
        let d = 3;
        let mut rng = seeded(seed);
        let mut member = |k: usize| -> Vec<Vec<f64>> {
            let raw: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
            let sums: Vec<f64> = (0..d).map(|i| raw.iter().map(|r| r[i]).sum()).collect();
            raw.into_iter().map(|r| r.iter().zip(&sums).map(|(x, s)| x / s).collect()).collect()
        };
        let (ma, mb) = (member(na), member(nb));
        let sp = SiteSpace::new(vec![d]).unwrap();
        let to_povm = |m: &Vec<Vec<f64>>, tag: &str| {
            Povm::new(vec![0], m.iter().enumerate().map(|(k, diag)| (format!("{tag}{k}"), DenseOperator::from_diagonal(sp.clone(), diag).unwrap())).collect()).unwrap()
        };
        let (a, b) = (to_povm(&ma, "a"), to_povm(&mb, "b"));
        let table = classical_parent(&[ma.clone(), mb.clone()]);
        let parent = Povm::new(
            vec![0],
            table.iter().map(|(t, diag)| (format!("{}|{}", t[0], t[1]), DenseOperator::from_diagonal(sp.clone(), diag).unwrap())).collect(),
        ).unwrap();
        let conditionals = vec![
            table.iter().map(|(t, _)| (0..na).map(|w| if w == t[0] { 1.0 } else { 0.0 }).collect()).collect(),
            table.iter().map(|(t, _)| (0..nb).map(|w| if w == t[1] { 1.0 } else { 0.0 }).collect()).collect(),
        ];
        let oracle = JmWitness::new(parent, conditionals);
        let set = StateSet::spanning(&sp);
        prop_assert!(verify_jm_witness(&[&a, &b], &oracle, &set).unwrap() <= 1e-12);
        let r = jm_feasibility_search(&[&a, &b], JmSearchOptions::default()).unwrap();
        prop_assert!(r.is_feasible());
        prop_assert!(r.residual <= 1e-8, "{}", r.residual);
    }
}

fn coarse_rows(n: usize) -> Vec<Povm> {
    (0..n).map(|i| row_povm(i, n).unwrap().coarse_grained(&[("+", &["+"]), ("rest", &["-", "perp"])]).unwrap()).collect()
}

fn grid_states(n: usize, p: f64, random: usize, seed: u64) -> StateSet {
    let images = noisy_grid_images(n, p).unwrap();
    let sp = SiteSpace::qubits(1);
    let mut sigmas: Vec<DenseOperator> = StateSet::spanning(&sp).states().iter().map(|s| s.to_density()).collect();
    let mut rng = seeded(seed);
    for _ in 0..random {
        sigmas.push(DenseOperator::new(sp.clone(), random_density(2, 2, &mut rng)).unwrap());
    }
    match StateSet::new("grid", sigmas.iter().map(|s| State::Mixed(images.apply(s).unwrap())).collect()) { Ok(s) => s, Err(e) => panic!("{e}") }
}

#[test]
fn pair_parents_on_noisy_grid_stay_within_audited_delta() {
    let n = 3;
    let (rows, _) = grid_partitions(n);
    let fine: Vec<Povm> = (0..n).map(|i| row_povm(i, n).unwrap()).collect();
    let coarse = coarse_rows(n);
    for p in [0.0, 0.05] {
        let set = grid_states(n, p, 6, 3);
        let refs: Vec<&State> = set.states().iter().collect();
        let af = redundancy_audit_over(&rows, &fine, &refs).unwrap();
        let ag = redundancy_audit_over(&rows, &coarse, &refs).unwrap();
        if p > 0.0 {
            assert!(af.overall_delta > 1e-3);
        }
        for f in 0..n {
            for g in 0..n {
                let (fp, gp) = theorem1_substitutes(&rows, &rows, f, g).unwrap().expect("three rows always admit substitutes");
                let w = constructive_parent(&fine[f], &coarse[g], &fine[fp], &coarse[gp]).unwrap();
                let residual = verify_jm_witness(&[&fine[f], &coarse[g]], &w, &set).unwrap();
                let d = |a: &qdarwin::measurement::RecordAudit, x: usize, y: usize| if x == y { 0.0 } else { a.pair_delta(x, y).unwrap() };
                let delta = d(&af, f, fp).max(d(&ag, g, gp));
                assert!(residual <= delta + 1e-9, "p = {p}, ({f}, {g}): {residual} > {delta}");
                if p == 0.0 {
                    assert!(residual <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn tuple_parents_on_tilted_repetition_stay_within_audited_delta() {
    let t = TiltedRepetition { n_sites: 12, tilt: 0.05, tilt_step: 0.02 };
    let f = Partition::new(12, vec![vec![0, 1], vec![2, 3]]);
    let g = Partition::new(12, vec![vec![4, 5], vec![6, 7]]);
    let w = Partition::new(12, vec![vec![8, 9], vec![10, 11], vec![1, 5]]);
    let parts = [&f, &g, &w];
    let povms: Vec<Vec<Povm>> =
        parts.iter().map(|p| p.blocks().iter().map(|b| block_majority_povm(b).unwrap()).collect()).collect();
    // Balanced inputs: a rare logical value is recorded as badly as local
    // noise, which pushes the worst-case δ towards one.
    let inputs: Vec<StateVector> = (0..6)
        .map(|k| {
            let p0: f64 = 0.25 + 0.1 * k as f64;
            let amps = vec![C64::new(p0.sqrt(), 0.0), C64::from_polar((1.0 - p0).sqrt(), 1.1 * k as f64)];
            StateVector::new(SiteSpace::qubits(1), amps.into()).unwrap()
        })
        .collect();
    let states: Vec<State> = inputs.iter().map(|s| State::Pure(t.encode(s).unwrap())).collect();
    let set = StateSet::new("tilted", states.clone()).unwrap();
    let refs: Vec<&State> = states.iter().collect();
    let audits: Vec<_> = parts.iter().zip(&povms).map(|(p, v)| redundancy_audit_over(p, v, &refs).unwrap()).collect();
    let ds: Vec<f64> = audits.iter().map(|a| a.overall_delta).collect();
    assert!(ds.iter().all(|&d| d > 0.0 && d < 0.5), "{ds:?}");
    let report = non_tuple_covering(&parts, TupleOptions::default()).unwrap();
    assert!(report.holds);
    for c in &report.witnesses {
        let members: Vec<&Povm> = (0..3).map(|k| &povms[k][c.tuple[k]]).collect();
        let subs: Vec<&Povm> = (0..3).map(|k| &povms[k][c.choice[k]]).collect();
        let wit = marginalizing_witness(&members, &subs).unwrap();
        let residual = verify_jm_witness(&members, &wit, &set).unwrap();
        let delta = (0..3)
            .map(|k| if c.tuple[k] == c.choice[k] { 0.0 } else { audits[k].pair_delta(c.tuple[k], c.choice[k]).unwrap() })
            .fold(0.0, f64::max);
        assert!(residual <= delta + 1e-9, "{c:?}: {residual} > {delta}");
    }
}

#[test]
fn coarse_grained_row_families_pass_the_chain() {
    let n = 3;
    let s = GridScenario::new(n, C64::new(0.6, 0.0), C64::new(0.0, 0.8), 0.0).unwrap();
    let State::Pure(psi) = build_grid_state(&s).unwrap() else { panic!("pure") };
    let fine: Vec<Povm> = (0..n).map(|i| row_povm(i, n).unwrap()).collect();
    let coarse = coarse_rows(n);
    let r = commutation_chain_check(&fine[0], &coarse[0], &fine[1], &coarse[2], &psi).unwrap();
    assert!(r.preconditions_hold, "{:?}", r.violations);
    assert!(r.max_residual() <= 1e-10, "{:?}", r);
}

#[test]
fn rows_and_columns_fail_the_chain() {
    let n = 2;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let s = GridScenario::new(n, C64::new(h, 0.0), C64::new(h, 0.0), 0.0).unwrap();
    let State::Pure(psi) = build_grid_state(&s).unwrap() else { panic!("pure") };
    let (r0, r1) = (row_povm(0, n).unwrap(), row_povm(1, n).unwrap());
    let (c0, c1) = (column_parity_povm(0, n).unwrap(), column_parity_povm(1, n).unwrap());
    let r = commutation_chain_check(&r0, &c0, &r1, &c1, &psi).unwrap();
    assert!(!r.preconditions_hold);
    assert!(!r.violations.is_empty());
    assert!(r.commutator > 0.1, "{}", r.commutator);
}
