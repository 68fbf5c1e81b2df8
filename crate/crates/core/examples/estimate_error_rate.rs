//! Trains the rate regressor on a synthetic corpus, reports cross-validated
//! scores and feature importances, then predicts a rate for one circuit.

use std::collections::BTreeMap;

use qcluster::distributions::{normalized_entropy, OutcomeDistribution};
use qcluster::estimator::corpus::{design_matrix, generate_corpus, CorpusSpec};
use qcluster::estimator::trees::{cross_validate, ExtraTreesParams, TreeEnsemble};
use qcluster::estimator::{compute_esp, CalibrationSnapshot, CircuitFeatures, FEATURE_NAMES};

fn main() -> qcluster::Result<()> {
    let corpus = generate_corpus(&CorpusSpec { samples: 500, shots: 8192, seed: 0 })?;
    let (x, y) = design_matrix(&corpus);
    let params = ExtraTreesParams::default();
    let cv = cross_validate(&FEATURE_NAMES, &x, &y, 5, &params, 0)?;
    println!("5-fold cv: mse {:.5}, r2 {:.4}", cv.mse, cv.r2);

    let model = TreeEnsemble::fit_rows(&FEATURE_NAMES, &x, &y, &params)?;
    let mut importance = model.feature_importance();
    importance.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (name, v) in importance {
        println!("  {name:<18} {v:.3}");
    }

    let calib = CalibrationSnapshot {
        gate_errors: BTreeMap::from([("2q".into(), 0.01), ("sx".into(), 3e-4), ("x".into(), 3e-4), ("rz".into(), 0.0)]),
        readout_errors: vec![0.02; 8],
    };
    let mut circuit = CircuitFeatures {
        num_qubits: 8,
        num_measurements: 8,
        num_2q_gates: 24,
        num_sx_gates: 40,
        num_x_gates: 6,
        num_rz_gates: 60,
        entropy: 0.0,
        esp: 0.0,
    };
    circuit.esp = compute_esp(&circuit.gate_counts(), 8, &calib)?;
    let observed = OutcomeDistribution::from_text_weights([("10110010", 0.55), ("10110011", 0.08), ("00110010", 0.07), ("10100010", 0.06)])?;
    circuit.entropy = normalized_entropy(&observed)?;
    println!("esp {:.3}, entropy {:.3}, predicted p_e {:.4}", circuit.esp, circuit.entropy, model.predict(&circuit)?);
    Ok(())
}
