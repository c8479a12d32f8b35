mod support;

use regaze::kernels::KernelConfig;
use regaze::svr::{dual_objective, predict, train, Angle, SvrHyperparams};
use regaze::DenseMatrix;
use support::{oracle_predict, random_instance, rbf_matrix, solve_svr_qp};

#[test]
fn smo_matches_projected_gradient_oracle() {
    for seed in 0..25 {
        let inst = random_instance(seed);
        let k_rows = rbf_matrix(&inst.x, &inst.x, inst.gamma);
        let k = DenseMatrix::from_rows(&k_rows);
        let hp =
            SvrHyperparams::new(inst.c, inst.eps, KernelConfig::rbf(inst.gamma)).with_tol(1e-5);
        let model = train(&k, &inst.y, &hp, Angle::Pitch).unwrap();
        assert!(model.converged);
        let oracle = solve_svr_qp(&k_rows, &inst.y, inst.c, inst.eps);

        let ours = dual_objective(&k, &inst.y, &model.beta, inst.eps);
        assert!(
            (ours - oracle.objective).abs() <= 1e-4,
            "seed {seed}: SMO {ours} vs oracle {}",
            oracle.objective
        );

        let probes: Vec<Vec<f64>> = inst
            .x
            .iter()
            .map(|p| p.iter().map(|v| v * 0.9 + 0.05).collect())
            .collect();
        let k_probe = rbf_matrix(&probes, &inst.x, inst.gamma);
        for row in k_rows.iter().chain(&k_probe) {
            let a = predict(&model, row).unwrap();
            let b = oracle_predict(&oracle, row);
            assert!((a - b).abs() <= 1e-3, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn coefficients_feasible() {
    for seed in 100..110 {
        let inst = random_instance(seed);
        let k = DenseMatrix::from_rows(&rbf_matrix(&inst.x, &inst.x, inst.gamma));
        let hp = SvrHyperparams::new(inst.c, inst.eps, KernelConfig::rbf(inst.gamma));
        let m = train(&k, &inst.y, &hp, Angle::Yaw).unwrap();
        assert!(m.beta.iter().all(|b| b.abs() <= inst.c + 1e-12));
        let sum: f64 = m.beta.iter().sum();
        assert!(sum.abs() < 1e-9 * inst.c * m.beta.len() as f64, "{sum}");
        for (i, b) in m.beta.iter().enumerate() {
            assert_eq!(*b != 0.0, m.support_indices.contains(&i));
        }
    }
}
