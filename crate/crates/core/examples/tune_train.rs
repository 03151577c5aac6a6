//! Scratch harness for training schedule experiments.
//! Run: cargo run --release -p shaper-core --example tune_train -- <n> <tau0> <tau_min> <decay> <iters> <lr> <batch> <sigma2>

use shaper_core::constellation::make_qam;
use shaper_core::nlin::NlinCoeffs;
use shaper_core::trainer::{train, TrainConfig};

fn main() {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().unwrap())
        .collect();
    let (n, tau0, tau_min, decay, iters, lr, batch, sigma2) = (
        args[0] as usize,
        args[1],
        args[2],
        args[3],
        args[4] as u64,
        args[5],
        args[6] as usize,
        args[7],
    );
    let init = make_qam(n).unwrap();
    let coeffs = NlinCoeffs {
        sigma2_ase: sigma2,
        chi: [0.0; 4],
    };
    let config = TrainConfig {
        batch_size: batch,
        learning_rate: lr,
        iterations: iters,
        tau0,
        tau_min,
        tau_decay: decay,
        seed: 7,
        power_w: 1.0,
    };
    let t0 = std::time::Instant::now();
    let out = train(&config, &coeffs, &init).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    for row in out.history.iter().step_by((iters as usize / 20).max(1)) {
        println!(
            "step {:6} tau {:7.4} J {:8.5} H {:8.5} mu4 {:7.4} mu6 {:8.4}",
            row.step, row.temperature, row.objective_bits, row.entropy_bits, row.mu4, row.mu6
        );
    }
    let c = &out.constellation;
    let (mu4, mu6) = c.standardized_moments().unwrap();
    let mi = shaper_core::metrics::mi_exact_awgn(c, sigma2).unwrap();
    let mi_uniform = shaper_core::metrics::mi_exact_awgn(&init, sigma2).unwrap();
    let (lambda, mb) = shaper_core::constellation::optimize_mb_lambda(
        init.points(),
        20.0,
        |cand| shaper_core::metrics::mi_exact_awgn(cand, sigma2),
    )
    .unwrap();
    let mi_mb = shaper_core::metrics::mi_exact_awgn(&mb, sigma2).unwrap();
    println!(
        "final: H {:.4} mu4 {:.4} mu6 {:.4} MI {:.5} (uniform {:.5}, MB {:.5} at lambda {:.3}) diverged {} [{:.1}s]",
        c.entropy_bits(),
        mu4,
        mu6,
        mi,
        mi_uniform,
        mi_mb,
        lambda,
        out.diverged,
        dt
    );
}
