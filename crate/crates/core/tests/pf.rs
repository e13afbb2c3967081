#![allow(clippy::needless_range_loop)]

use bpfrls::model::simulate;
use bpfrls::pf::{ParticleSet, StateEstimateMode};
use bpfrls::signals::{prbs, NoiseStreams};
use bpfrls::{BilinearModel, ParameterVector, SystemMatrices};

#[test]
fn tracks_the_true_state_with_the_true_model() {
    let theta = [0.30, -0.25, 0.10, 0.15, 0.30, 0.20, 1.15, 1.56, -0.14, 0.20];
    let q = vec![0.07f64.powi(2), 0.01f64.powi(2)];
    let r = 0.45f64.powi(2);
    let model = BilinearModel::from_parameters(&ParameterVector(theta.to_vec()), 2, 2, q.clone(), r).unwrap();
    let len = 500;
    let u = prbs(len, 21, -1.0, 1.0);
    // measurement noise only; the filter still assumes Q
    let mut noise = NoiseStreams::generate(21, len, r, &q);
    noise.w = vec![vec![0.0; 2]; len];
    let traj = simulate(&model, &u, &noise).unwrap();
    let sys = SystemMatrices::from_slice(&theta, 2, 2).unwrap();

    let mut set = ParticleSet::init(500, 2, 0.1, 5).unwrap();
    let mut sq = 0.0;
    for t in 0..len {
        let x_hat = set.estimate_state(StateEstimateMode::Weighted);
        sq += (x_hat[0] - traj.x[t][0]).powi(2) + (x_hat[1] - traj.x[t][1]).powi(2);
        let ma: f64 = (1..=2).filter(|&i| t >= i).map(|i| sys.k[i - 1] * traj.v[t - i]).sum();
        set.gaussian_weights(traj.y[t], ma, r).unwrap();
        set.resample_systematic();
        set.propagate(&sys, u[t], &q);
    }
    let rmse = (sq / len as f64).sqrt();
    assert!(rmse <= 3.0 * r.sqrt(), "state RMSE {rmse}");
}
