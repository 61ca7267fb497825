//! Acceptance criteria A1–A8. Runs as a plain binary and prints one line
//! per criterion; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use qfc_link::analysis::{auto_correlation_histogram, fit_conversion_curve};
use qfc_link::qfc::{chain_efficiency, conversion_rate, photon_conversion_rate, ConversionCurve, EfficiencyBudget, QfcStage};
use qfc_link::source::{excited_population_curve, simulate_cw_stream, steady_state_population, EmitterParams};
use qfc_link::Seed;
use qfc_link_cli::Report;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

type Outcome = Result<String, String>;

const LIFETIME_S: f64 = 8.12e-9;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scenario(name: &str) -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn qfc_link(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qfc-link"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("qfc-link {}: {}", args[0], String::from_utf8_lossy(&out.stderr).trim()))
    }
}

/// Writes the scenario into `dir` and runs the given subcommands on it.
fn run_scenario(dir: &Path, config: &Value, commands: &[&str]) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let cfg = dir.join("scenario.json");
    std::fs::write(&cfg, serde_json::to_string_pretty(config).unwrap()).map_err(|e| e.to_string())?;
    for c in commands {
        qfc_link(&[c, "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()])?;
    }
    Ok(())
}

fn report(dir: &Path, name: &str) -> Result<Report, String> {
    let text = std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
    serde_json::from_str(&text).map_err(|e| format!("{name}: {e}"))
}

fn derived_f64(r: &Report, key: &str) -> Result<f64, String> {
    r.derived.get(key).and_then(Value::as_f64).ok_or(format!("missing {key}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn a1() -> Outcome {
    let curve = ConversionCurve::new(0.49, 152.0).map_err(|e| e.to_string())?;
    let at_max = conversion_rate(&curve, 152.0).map_err(|e| e.to_string())?;
    let at_82 = conversion_rate(&curve, 82.0).map_err(|e| e.to_string())?;
    check(
        (at_max - 0.49).abs() < 1e-12 && (at_82 - 0.4097).abs() <= 0.0005,
        format!("zeta(152 mW) = {at_max:.4}, zeta(82 mW) = {at_82:.4}"),
    )
}

fn a2() -> Outcome {
    let photon = photon_conversion_rate(0.414, 369.0, 456.0).map_err(|e| e.to_string())?;
    let budget = EfficiencyBudget::from_values(&[0.2, 0.2, 0.512, 0.7]).map_err(|e| e.to_string())?;
    let eta = chain_efficiency(&budget).map_err(|e| e.to_string())?.total;
    check(
        (photon - 0.512).abs() <= 0.001 && (eta - 0.01434).abs() <= 0.00001,
        format!("photon rate = {photon:.4}, eta_qfc = {eta:.6}"),
    )
}

fn a3() -> Outcome {
    let curve = ConversionCurve::new(0.49, 152.0).unwrap();
    let noise = Normal::new(0.0, 0.02).unwrap();
    let (mut etas, mut pmaxes, mut slopes) = (Vec::new(), Vec::new(), Vec::new());
    for rep in 0..100 {
        let mut rng = Seed::new(3).derive(rep).rng();
        let points: Vec<(f64, f64)> = (0..8)
            .map(|k| {
                let p = 150.0 * k as f64 / 7.0;
                let z = conversion_rate(&curve, p).unwrap();
                (p, z * (1.0 + noise.sample(&mut rng)))
            })
            .collect();
        let fit = fit_conversion_curve(&points).map_err(|e| format!("repetition {rep}: {e}"))?;
        etas.push(fit.params.peak_conversion);
        pmaxes.push(fit.params.p_max_mw);
        slopes.push(fit.params.low_power_slope_per_watt());
    }
    let (eta, pmax, slope) = (median(etas), median(pmaxes), median(slopes));
    check(
        (0.47..=0.51).contains(&eta) && (147.0..=157.0).contains(&pmax) && (slope - 7.95).abs() <= 0.3,
        format!("median eta = {eta:.4}, P_max = {pmax:.1} mW, slope = {slope:.3} /W over 100 fits"),
    )
}

fn a4(dirs: &[PathBuf]) -> Outcome {
    let config = scenario("lifetime.json");
    for d in dirs {
        run_scenario(d, &config, &["simulate"])?;
    }
    run_scenario(&dirs[0], &config, &["analyze"])?;
    let r = report(&dirs[0], "analysis_report.json")?;
    let tail = r.fits.iter().find(|f| f.model == "exponential_tail").ok_or("no tail fit")?;
    let tau = tail.params["decay_time_ps"] / 1e3;
    let tau_err = tail.std_errors["decay_time_ps"] / 1e3;
    let discarded = derived_f64(&r, "discarded_fraction")?;
    check(
        (tau - 8.12).abs() <= 0.20 && (discarded - 0.42).abs() <= 0.03,
        format!("tau = {tau:.3} ± {tau_err:.3} ns, discarded fraction = {:.1}%", 100.0 * discarded),
    )
}

fn a5(dirs: &[PathBuf]) -> Outcome {
    let mut config = scenario("g2_hbt.json");
    config["duration_ps"] = json!(400_000_000_000i64);
    for arm in ["a", "b"] {
        config["detectors"][arm]["quantum_efficiency"] = json!(0.5);
    }
    // scale the output coupling so the stage passes exactly 1% of photons
    let mut stage: QfcStage = serde_json::from_value(config["stages"][0].clone()).unwrap();
    let survival = stage.survival().unwrap();
    stage.coupling_out *= 0.01 / survival;
    assert!((stage.survival().unwrap() - 0.01).abs() < 1e-12);
    config["stages"][0] = serde_json::to_value(&stage).unwrap();

    for d in dirs {
        run_scenario(d, &config, &["simulate"])?;
    }
    run_scenario(&dirs[0], &config, &["analyze"])?;
    let sim = report(&dirs[0], "simulate_report.json")?;
    let emitted = derived_f64(&sim, "emitted_photons")?;
    let r = report(&dirs[0], "analysis_report.json")?;
    let g0 = derived_f64(&r, "g2_zero")?;
    let g0_err = derived_f64(&r, "g2_zero_error")?;
    let raw = derived_f64(&r, "raw_minimum")?;
    let fit = r.fits.iter().find(|f| f.model == "g2").ok_or("no g2 fit")?;
    let gamma_in = 1.0 / LIFETIME_S;
    let gamma_rel = fit.params["gamma_per_s"] / gamma_in - 1.0;
    check(
        emitted >= 1e6 && g0 <= 0.10 && gamma_rel.abs() <= 0.10 && raw >= g0 - g0_err,
        format!(
            "{emitted:.3e} photons, g2(0) = {g0:.4} ± {g0_err:.4}, raw minimum = {raw:.4}, gamma off by {:+.1}%",
            100.0 * gamma_rel
        ),
    )
}

/// Bin-averaged `(T − τ) g²(τ)` from the Bloch equations, by composite Simpson.
fn expected_pair_density(params: &EmitterParams, bin_s: f64, n_bins: usize, duration_s: f64) -> Vec<f64> {
    const SUB: usize = 16;
    let h = bin_s / SUB as f64;
    let times: Vec<f64> = (0..=n_bins * SUB).map(|i| i as f64 * h).collect();
    let rho = excited_population_curve(params, &times).unwrap();
    let rho_ss = steady_state_population(params);
    let f = |i: usize| rho[i] / rho_ss * (duration_s - times[i]);
    (0..n_bins)
        .map(|k| {
            let base = k * SUB;
            let mut s = f(base) + f(base + SUB);
            for j in 1..SUB {
                s += if j % 2 == 1 { 4.0 } else { 2.0 } * f(base + j);
            }
            s * h / 3.0
        })
        .collect()
}

fn a6() -> Outcome {
    let sets = [(2.0, 0.0, "Omega_R = 2 gamma"), (0.3, 0.0, "Omega_R = 0.3 gamma"), (2.0, 1.0, "Delta = gamma")];
    let bin = 1000;
    let max_lag = 80_000;
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, (rabi, detuning, label)) in sets.into_iter().enumerate() {
        let params = EmitterParams::from_lifetime(LIFETIME_S, rabi, detuning).unwrap();
        let duration_s = 3e6 / params.emission_rate();
        let duration = (duration_s * 1e12) as i64;
        let stream = simulate_cw_stream(&params, duration, Seed::new(6).derive(i as u64)).map_err(|e| e.to_string())?;
        let hist = auto_correlation_histogram(stream.events(), bin, max_lag).map_err(|e| e.to_string())?;
        let rate = stream.len() as f64 / duration_s;
        let density = expected_pair_density(&params, bin as f64 * 1e-12, hist.len(), duration_s);
        let within = hist
            .counts
            .iter()
            .zip(&density)
            .filter(|(&c, &d)| {
                let expected = rate * rate * d;
                (c as f64 - expected).abs() <= 3.0 * expected.sqrt()
            })
            .count();
        let frac = within as f64 / hist.len() as f64;
        ok &= frac >= 0.95;
        parts.push(format!("{label}: {:.0}% of bins within 3 sigma ({} events)", 100.0 * frac, stream.len()));
    }
    check(ok, parts.join("; "))
}

fn a7(dir: &Path) -> Outcome {
    let mut config = scenario("g2_hbt.json");
    config["emitter"]["cw"]["rabi_frequency_rad_per_s"] = json!(0.0);
    config["duration_ps"] = json!(100_000_000_000_000i64);
    run_scenario(dir, &config, &["simulate"])?;
    let r = report(dir, "simulate_report.json")?;
    let dark = config["detectors"]["a"]["dark_rate_hz"].as_f64().unwrap();
    let expected = dark * 100.0;
    let mut counts = BTreeMap::new();
    for arm in ["a", "b"] {
        let n = r.derived["detected"][arm].as_f64().ok_or("missing detected count")?;
        counts.insert(arm, n);
    }
    let ok = counts.values().all(|n| (n - expected).abs() <= 3.0 * expected.sqrt());
    check(
        ok && derived_f64(&r, "emitted_photons")? == 0.0,
        format!(
            "counts a = {}, b = {} over 100 s, expected {expected} ± {:.0}",
            counts["a"],
            counts["b"],
            3.0 * expected.sqrt()
        ),
    )
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn a8(pairs: &[(&str, &Path, &Path)]) -> Outcome {
    let mut parts = Vec::new();
    for (label, one, two) in pairs {
        // the second run of each pair was simulated only
        let mut first = dir_contents(one);
        first.retain(|name, _| !name.starts_with("analysis") && !name.ends_with(".csv"));
        let second = dir_contents(two);
        if first != second {
            let names: Vec<_> = first.keys().filter(|k| first.get(*k) != second.get(*k)).cloned().collect();
            return Err(format!("{label}: files differ between runs: {names:?}"));
        }
        parts.push(format!("{label}: {} files identical", first.len()));
    }
    Ok(parts.join("; "))
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |name: &str| tmp.path().join(name);
    let (life, hbt) = ([dir("lifetime_1"), dir("lifetime_2")], [dir("g2_1"), dir("g2_2")]);

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("A1", Box::new(a1)),
        ("A2", Box::new(a2)),
        ("A3", Box::new(a3)),
        ("A4", Box::new(|| a4(&life))),
        ("A5", Box::new(|| a5(&hbt))),
        ("A6", Box::new(a6)),
        ("A7", Box::new(|| a7(&dir("dark")))),
        (
            "A8",
            Box::new(|| a8(&[("lifetime", &life[0], &life[1]), ("g2_hbt", &hbt[0], &hbt[1])])),
        ),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{name} PASS: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("{name} FAIL: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
