//! Subcommand implementations.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use shaper_core::constellation::{make_qam, maxwell_boltzmann, mb_lambda_for_entropy, optimize_mb_lambda, Constellation};
use shaper_core::nlin::CalibrationFile;
use shaper_core::pipeline::{
    calibrate_link, dbm_to_watts, evaluate_mss, evaluate_nlin, nlin_mb_objective,
};
use shaper_core::trainer::{derive_seed, train, TrainOutcome};

use crate::config::ExperimentConfig;

pub const MB_LAMBDA_MAX: f64 = shaper_core::constellation::MB_LAMBDA_MAX;

fn ensure_out_dir(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
}

fn calibration_path(out: &Path, explicit: Option<&PathBuf>) -> PathBuf {
    explicit
        .cloned()
        .unwrap_or_else(|| out.join("calibration.json"))
}

fn load_calibration(path: &Path) -> anyhow::Result<CalibrationFile> {
    CalibrationFile::load(path).with_context(|| {
        format!(
            "cannot load calibration {}; run `shaper-cli calibrate` first",
            path.display()
        )
    })
}

fn master_seed(config: &ExperimentConfig, cli_seed: Option<u64>) -> u64 {
    cli_seed.unwrap_or(config.seeds.master)
}

pub fn cmd_calibrate(
    config: &ExperimentConfig,
    cli_seed: Option<u64>,
    out: &Path,
) -> anyhow::Result<i32> {
    ensure_out_dir(out)?;
    let seed = master_seed(config, cli_seed);
    let ssfm_cfg = config.ssfm_config()?;
    let eval_cfg = config.eval_config();
    let (fit, probes) = calibrate_link(
        &config.link,
        &ssfm_cfg,
        &eval_cfg,
        &config.calibration.powers_dbm,
        derive_seed(seed, 0xCA11),
    )?;

    let file = CalibrationFile::from_fit(&fit);
    let json_path = out.join("calibration.json");
    file.save(&json_path)?;

    let mut probe_csv = csv::Writer::from_path(out.join("calibration_probes.csv"))?;
    probe_csv.write_record(["mu4", "mu6", "power_w", "variance_w"])?;
    for p in &probes {
        probe_csv.write_record([
            p.mu4.to_string(),
            p.mu6.to_string(),
            p.power_w.to_string(),
            p.variance_w.to_string(),
        ])?;
    }
    probe_csv.flush()?;

    println!(
        "calibration: sigma2_ase = {:.6e} W, chi = [{:.6e}, {:.6e}, {:.6e}, {:.6e}], R^2 = {:.6}",
        file.sigma2_ase, file.chi[0], file.chi[1], file.chi[2], file.chi[3], file.r2
    );
    println!("wrote {}", json_path.display());

    if fit.r_squared < config.calibration.min_r_squared {
        eprintln!(
            "calibration R^2 {:.4} below required {:.4}; probe residuals do not follow the \
             NLIN moment model (see calibration_probes.csv)",
            fit.r_squared, config.calibration.min_r_squared
        );
        return Ok(2);
    }
    Ok(0)
}

fn run_training(
    config: &ExperimentConfig,
    coeffs: &shaper_core::NlinCoeffs,
    power_dbm: f64,
    seed: u64,
) -> anyhow::Result<TrainOutcome> {
    let init = make_qam(config.train.constellation_size)?;
    let train_config = config.train_config(dbm_to_watts(power_dbm), seed);
    let outcome = train(&train_config, coeffs, &init)?;
    if outcome.diverged {
        bail!(
            "training diverged at {power_dbm} dBm after {} recorded steps",
            outcome.history.len()
        );
    }
    Ok(outcome)
}

fn write_history(path: &Path, outcome: &TrainOutcome) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "step",
        "objective_bits",
        "entropy_bits",
        "mu4",
        "mu6",
        "temperature",
    ])?;
    for row in &outcome.history {
        w.write_record([
            row.step.to_string(),
            row.objective_bits.to_string(),
            row.entropy_bits.to_string(),
            row.mu4.to_string(),
            row.mu6.to_string(),
            row.temperature.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_train(
    config: &ExperimentConfig,
    cli_seed: Option<u64>,
    out: &Path,
    power_dbm: f64,
    calibration: Option<&PathBuf>,
) -> anyhow::Result<i32> {
    ensure_out_dir(out)?;
    let seed = master_seed(config, cli_seed);
    let coeffs = load_calibration(&calibration_path(out, calibration))?.coeffs();
    let outcome = run_training(config, &coeffs, power_dbm, derive_seed(seed, 0x7121))?;

    let tag = format!("{power_dbm:.1}dbm");
    let constellation_path = out.join(format!("js_{tag}.json"));
    outcome.constellation.save(&constellation_path)?;
    write_history(&out.join(format!("history_{tag}.csv")), &outcome)?;
    let (mu4, mu6) = outcome.constellation.standardized_moments()?;
    println!(
        "trained {} points at {power_dbm} dBm: H = {:.4} bits, mu4 = {:.4}, mu6 = {:.4}, \
         best smoothed J = {:.4} bits/2D",
        outcome.constellation.len(),
        outcome.constellation.entropy_bits(),
        mu4,
        mu6,
        outcome.best_objective_bits
    );
    println!("wrote {}", constellation_path.display());
    Ok(0)
}

pub fn cmd_mb_baseline(
    config: &ExperimentConfig,
    cli_seed: Option<u64>,
    out: &Path,
    lambda: Option<f64>,
    entropy_bits: Option<f64>,
    power_dbm: Option<f64>,
    calibration: Option<&PathBuf>,
) -> anyhow::Result<i32> {
    ensure_out_dir(out)?;
    let _ = master_seed(config, cli_seed);
    let grid = make_qam(config.train.constellation_size)?;
    let (lambda, shaped) = match (lambda, entropy_bits, power_dbm) {
        (Some(l), None, None) => (l, maxwell_boltzmann(grid.points(), l)?),
        (None, Some(h), None) => mb_lambda_for_entropy(grid.points(), h, MB_LAMBDA_MAX)?,
        (None, None, Some(p)) => {
            let coeffs = load_calibration(&calibration_path(out, calibration))?.coeffs();
            let objective = nlin_mb_objective(&coeffs, dbm_to_watts(p));
            optimize_mb_lambda(grid.points(), MB_LAMBDA_MAX, objective)?
        }
        _ => bail!("give exactly one of --lambda, --entropy-bits, --power-dbm"),
    };
    let path = out.join("mb.json");
    shaped.save(&path)?;
    let (mu4, mu6) = shaped.standardized_moments()?;
    println!(
        "MB baseline: lambda = {lambda:.6}, H = {:.4} bits, mu4 = {:.4}, mu6 = {:.4}",
        shaped.entropy_bits(),
        mu4,
        mu6
    );
    println!("wrote {}", path.display());
    Ok(0)
}

pub fn cmd_evaluate(
    config: &ExperimentConfig,
    cli_seed: Option<u64>,
    out: &Path,
    constellation_path: &Path,
    power_dbm: f64,
) -> anyhow::Result<i32> {
    ensure_out_dir(out)?;
    let seed = master_seed(config, cli_seed);
    let c = Constellation::load(constellation_path)
        .with_context(|| format!("invalid constellation file {}", constellation_path.display()))?;
    let report = evaluate_mss(
        &c,
        &config.link,
        &config.ssfm_config()?,
        &config.eval_config(),
        dbm_to_watts(power_dbm),
        derive_seed(seed, 0xE7A1),
    )?;

    let json = serde_json::json!({
        "constellation": constellation_path.display().to_string(),
        "power_dbm": power_dbm,
        "seed": seed,
        "mi_kde_x_bits": report.mi_kde_x_bits,
        "mi_kde_y_bits": report.mi_kde_y_bits,
        "mi_bits_4d": report.mi_bits_4d,
        "snr_x_db": report.snr_x_db,
        "snr_y_db": report.snr_y_db,
        "snr_eff_db": report.snr_eff_db,
        "mu4": report.mu4,
        "mu6": report.mu6,
        "entropy_bits": report.entropy_bits,
        "kde_excluded_points": report.kde_excluded_points,
    });
    let path = out.join("evaluation.json");
    std::fs::write(&path, serde_json::to_string_pretty(&json)?)?;
    println!(
        "MI = {:.4} bits/4D, effective SNR = {:.3} dB",
        report.mi_bits_4d, report.snr_eff_db
    );
    println!("wrote {}", path.display());
    Ok(0)
}

struct SweepRow {
    power_dbm: f64,
    scheme: &'static str,
    estimator: &'static str,
    mi_bits_4d: f64,
    snr_eff_db: f64,
    mu4: f64,
    mu6: f64,
    entropy_bits: f64,
    seed: u64,
}

fn sweep_one_power(
    config: &ExperimentConfig,
    coeffs: &shaper_core::NlinCoeffs,
    out: &Path,
    power_dbm: f64,
    seed: u64,
) -> anyhow::Result<Vec<SweepRow>> {
    let power_w = dbm_to_watts(power_dbm);
    let ssfm_cfg = config.ssfm_config()?;
    let eval_cfg = config.eval_config();
    let tag = format!("{power_dbm:.1}dbm");

    let uniform = make_qam(config.train.constellation_size)?;
    let (_, mb) = optimize_mb_lambda(
        uniform.points(),
        MB_LAMBDA_MAX,
        nlin_mb_objective(coeffs, power_w),
    )?;
    let js = run_training(config, coeffs, power_dbm, derive_seed(seed, 0x7121))?.constellation;

    let schemes: [(&'static str, &Constellation); 3] =
        [("uniform", &uniform), ("mb", &mb), ("js", &js)];
    let mut rows = Vec::with_capacity(6);
    for (name, c) in schemes {
        c.save(&out.join(format!("{name}_{tag}.json")))?;
        let nlin_seed = derive_seed(seed, 0x0111);
        let nlin = evaluate_nlin(c, coeffs, power_w, config.eval.nlin_symbols, nlin_seed)?;
        rows.push(SweepRow {
            power_dbm,
            scheme: name,
            estimator: "nlin",
            mi_bits_4d: nlin.mi_bits_4d,
            snr_eff_db: nlin.snr_eff_db,
            mu4: nlin.mu4,
            mu6: nlin.mu6,
            entropy_bits: nlin.entropy_bits,
            seed: nlin_seed,
        });
        let mss_seed = derive_seed(seed, 0x0555);
        let mss = evaluate_mss(c, &config.link, &ssfm_cfg, &eval_cfg, power_w, mss_seed)?;
        rows.push(SweepRow {
            power_dbm,
            scheme: name,
            estimator: "mss",
            mi_bits_4d: mss.mi_bits_4d,
            snr_eff_db: mss.snr_eff_db,
            mu4: mss.mu4,
            mu6: mss.mu6,
            entropy_bits: mss.entropy_bits,
            seed: mss_seed,
        });
    }
    Ok(rows)
}

pub fn cmd_sweep(
    config: &ExperimentConfig,
    cli_seed: Option<u64>,
    out: &Path,
    calibration: Option<&PathBuf>,
) -> anyhow::Result<i32> {
    ensure_out_dir(out)?;
    let seed = master_seed(config, cli_seed);
    let coeffs = load_calibration(&calibration_path(out, calibration))?.coeffs();
    let powers = config.sweep_powers_dbm();

    // Sweep points are independent; run them on a bounded worker count and
    // merge in power order. Partial results are flushed even if a later
    // point fails.
    let workers = config.sweep.workers.max(1).min(powers.len());
    let results: Vec<Option<anyhow::Result<Vec<SweepRow>>>> = {
        let mut slots: Vec<Option<anyhow::Result<Vec<SweepRow>>>> =
            (0..powers.len()).map(|_| None).collect();
        if workers == 1 {
            for (i, p) in powers.iter().enumerate() {
                slots[i] = Some(sweep_one_power(
                    config,
                    &coeffs,
                    out,
                    *p,
                    derive_seed(seed, i as u64),
                ));
            }
        } else {
            let next = std::sync::atomic::AtomicUsize::new(0);
            let slots_mutex = std::sync::Mutex::new(&mut slots);
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                        if i >= powers.len() {
                            break;
                        }
                        let row = sweep_one_power(
                            config,
                            &coeffs,
                            out,
                            powers[i],
                            derive_seed(seed, i as u64),
                        );
                        slots_mutex.lock().unwrap()[i] = Some(row);
                    });
                }
            });
        }
        slots
    };

    let csv_path = out.join("sweep.csv");
    let mut file = std::fs::File::create(&csv_path)?;
    writeln!(file, "# master_seed = {seed}")?;
    writeln!(
        file,
        "# power grid = {} to {} dBm step {}",
        config.sweep.power_dbm_start, config.sweep.power_dbm_stop, config.sweep.power_dbm_step
    )?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "power_dbm",
        "scheme",
        "estimator",
        "mi_bits_4d",
        "snr_eff_db",
        "mu4",
        "mu6",
        "entropy_bits",
        "seed",
    ])?;
    let mut failure: Option<anyhow::Error> = None;
    for slot in results {
        match slot {
            Some(Ok(rows)) => {
                for r in rows {
                    w.write_record([
                        r.power_dbm.to_string(),
                        r.scheme.to_string(),
                        r.estimator.to_string(),
                        r.mi_bits_4d.to_string(),
                        r.snr_eff_db.to_string(),
                        r.mu4.to_string(),
                        r.mu6.to_string(),
                        r.entropy_bits.to_string(),
                        r.seed.to_string(),
                    ])?;
                }
            }
            Some(Err(e)) => failure = Some(e),
            None => {}
        }
    }
    w.flush()?;
    println!("wrote {}", csv_path.display());
    if let Some(e) = failure {
        eprintln!("sweep point failed: {e:#}");
        return Ok(1);
    }
    Ok(0)
}
