use hjsolve::network::NetworkConfig;
use hjsolve::problems::ProblemSpec;
use hjsolve::trainer::{evaluate_mse, train, EvalSpec, OptimizerKind, TrainConfig};

fn main() {
    let problem = ProblemSpec::by_id("burgers-d1").unwrap();
    let net = NetworkConfig::new(1, 5, 64, 100.0);
    let cfg = TrainConfig {
        epochs: 500,
        batch: 1000,
        optimizer: OptimizerKind::Adam,
        log_every: 0,
        seed: 1,
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let report = train(&problem, &net, &cfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "500 epochs in {:.1}s -> {:.1} ms/epoch; loss {:.3e} -> {:.3e}",
        dt,
        1000.0 * dt / 500.0,
        report.loss_trace[0],
        report.final_loss()
    );
    let spec = EvalSpec { grid_per_axis: 201, time_slices: 11, ..Default::default() };
    let (mse, rmse) = evaluate_mse(&report.final_params, &problem, &spec).unwrap();
    println!("mse {mse:.3e} rmse {rmse:.3e}");
}
