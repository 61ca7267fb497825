//! The four subcommands. Each returns its report and a short text summary;
//! files are written under the output directory.

use std::fmt::Write as _;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use qfc_link::analysis::{
    arrival_histogram, cross_correlation_histogram, fit_conversion_curve, fit_exponential_tail,
    fit_g2, fit_gaussian, g2_curve_csv, initial_guess_g2, normalize_g2, G2Fit,
};
use qfc_link::detection::{beam_split, detect, TimestampRecord};
use qfc_link::qfc::{
    cascade, cascade_survival, chain_efficiency, BudgetFactor, EfficiencyBudget, QfcStage,
};
use qfc_link::source::{simulate_cw_sharded, simulate_pulsed_decay};
use qfc_link::stream::ps_to_seconds;
use qfc_link::{Seed, TimestampStream};
use serde::Serialize;

use crate::error::{CliError, CliResult, Context};
use crate::report::{write_file, write_report, FileEntry, Report};
use crate::scenario::{Emitter, Experiment, Scenario, StagePlacement};

pub const RECORD_A: &str = "detector_a.txt";
pub const RECORD_B: &str = "detector_b.txt";
pub const TRIGGERS: &str = "triggers.txt";

/// Seed tags of the simulation steps.
mod tag {
    pub const SOURCE: u64 = 1;
    pub const STAGES: u64 = 2;
    pub const SPLITTER: u64 = 3;
    pub const ARM_STAGES: u64 = 4;
    pub const DETECTOR_A: u64 = 5;
    pub const DETECTOR_B: u64 = 6;
}

pub struct Outcome {
    pub report: Report,
    pub summary: String,
}

#[derive(Serialize)]
struct StageRow {
    label: String,
    pump_mw: f64,
    power_conversion: f64,
    photon_conversion: f64,
    survival: f64,
    delay_ps: i64,
    noise_rate_hz: f64,
}

fn stage_table(stages: &[QfcStage]) -> CliResult<Vec<StageRow>> {
    stages
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let path = format!("stages[{i}]");
            Ok(StageRow {
                label: s.label.clone(),
                pump_mw: s.pump_mw,
                power_conversion: s.power_conversion_rate().at(&path)?,
                photon_conversion: s.photon_rate().at(&path)?,
                survival: s.survival().at(&path)?,
                delay_ps: s.delay_ps,
                noise_rate_hz: s.noise_rate_hz,
            })
        })
        .collect()
}

fn apply_stages(stream: TimestampStream, stages: &[QfcStage], seed: Seed) -> CliResult<TimestampStream> {
    if stages.is_empty() {
        Ok(stream)
    } else {
        cascade(&stream, stages, seed).at("stages")
    }
}

// ------------------------------------------------------------ budget ----

pub fn budget(scenario: &Scenario, out: &Path) -> CliResult<Outcome> {
    let budget = match &scenario.budget {
        Some(b) => b.clone(),
        None if !scenario.stages.is_empty() => {
            let mut factors: Vec<BudgetFactor> = Vec::new();
            for (i, s) in scenario.stages.iter().enumerate() {
                let path = format!("stages[{i}]");
                for f in s.budget().at(&path)?.factors() {
                    let label = if s.label.is_empty() {
                        format!("{path}.{}", f.label)
                    } else {
                        format!("{}.{}", s.label, f.label)
                    };
                    factors.push(BudgetFactor::new(label, f.value));
                }
            }
            EfficiencyBudget::new(factors).at("stages")?
        }
        None => return Err(CliError::Validation("budget: section missing".into())),
    };
    let chain = chain_efficiency(&budget).at("budget")?;
    let mut report = Report::new("budget", scenario.seed, Some(scenario.clone()));
    report.set("eta_qfc", chain.total);
    let sens: Vec<serde_json::Value> = budget
        .factors()
        .iter()
        .zip(&chain.sensitivities)
        .map(|(f, (_, s))| serde_json::json!({"label": f.label, "value": f.value, "sensitivity": s}))
        .collect();
    report.set("sensitivities", sens);

    let mut summary = String::new();
    writeln!(summary, "eta_qfc = {:.6}", chain.total).unwrap();
    writeln!(summary, "{:<28} {:>10} {:>12}", "factor", "value", "d eta/d f").unwrap();
    for (f, (_, s)) in budget.factors().iter().zip(&chain.sensitivities) {
        writeln!(summary, "{:<28} {:>10.6} {:>12.6}", f.label, f.value, s).unwrap();
    }
    if !scenario.stages.is_empty() {
        let table = stage_table(&scenario.stages)?;
        for row in &table {
            writeln!(
                summary,
                "stage {:<12} zeta = {:.6}  zeta_photon = {:.6}  survival = {:.6}",
                row.label, row.power_conversion, row.photon_conversion, row.survival
            )
            .unwrap();
        }
        let total = cascade_survival(&scenario.stages).at("stages")?;
        writeln!(summary, "cascade survival = {total:.6}").unwrap();
        report.set("stages", table);
        report.set("cascade_survival", total);
    }
    write_report(out, "budget_report.json", &report)?;
    Ok(Outcome { report, summary })
}

// ---------------------------------------------------------- simulate ----

fn record_bytes(record: &TimestampRecord) -> Vec<u8> {
    record.to_text().into_bytes()
}

pub fn simulate(scenario: &Scenario, out: &Path) -> CliResult<Outcome> {
    let root = Seed::new(scenario.seed);
    let mut report = Report::new("simulate", scenario.seed, Some(scenario.clone()));
    let detectors = scenario.detectors.as_ref().expect("validated");
    let mut summary = String::new();
    match (&scenario.experiment, &scenario.emitter) {
        (Experiment::G2Hbt, Some(Emitter::Cw(params))) => {
            let duration = scenario.duration_ps.expect("validated");
            let det_b = detectors.b.expect("validated");
            let emitted = simulate_cw_sharded(params, duration, root.derive(tag::SOURCE), scenario.shards)
                .at("emitter.cw")?;
            let n_emitted = emitted.len();
            let (a, b) = match scenario.stage_placement {
                StagePlacement::BeforeSplitter => {
                    let converted = apply_stages(emitted, &scenario.stages, root.derive(tag::STAGES))?;
                    beam_split(&converted, scenario.beam_splitter.reflectance, root.derive(tag::SPLITTER))
                        .at("beam_splitter")?
                }
                StagePlacement::ArmB => {
                    let (a, b) =
                        beam_split(&emitted, scenario.beam_splitter.reflectance, root.derive(tag::SPLITTER))
                            .at("beam_splitter")?;
                    (a, apply_stages(b, &scenario.stages, root.derive(tag::ARM_STAGES))?)
                }
            };
            let ra = detect(&a, &detectors.a, root.derive(tag::DETECTOR_A)).at("detectors.a")?;
            let rb = detect(&b, &det_b, root.derive(tag::DETECTOR_B)).at("detectors.b")?;
            report.files.push(write_file(out, RECORD_A, &record_bytes(&ra))?);
            report.files.push(write_file(out, RECORD_B, &record_bytes(&rb))?);
            report.set("emitted_photons", n_emitted);
            report.set("emission_rate_hz", params.emission_rate());
            report.set("photons_at_detector", serde_json::json!({"a": a.len(), "b": b.len()}));
            report.set("detected", serde_json::json!({"a": ra.len(), "b": rb.len()}));
            report.set("detected_total", ra.len() + rb.len());
            writeln!(summary, "emitted {n_emitted} photons over {} s", ps_to_seconds(duration)).unwrap();
            writeln!(summary, "detected a = {}, b = {}", ra.len(), rb.len()).unwrap();
        }
        (Experiment::Lifetime, Some(Emitter::Pulsed(sched))) => {
            let n = scenario.n_triggers.expect("validated");
            let (emitted, triggers) =
                simulate_pulsed_decay(sched, n, root.derive(tag::SOURCE)).at("emitter.pulsed")?;
            let n_emitted = emitted.len();
            let converted = apply_stages(emitted, &scenario.stages, root.derive(tag::STAGES))?;
            let ra = detect(&converted, &detectors.a, root.derive(tag::DETECTOR_A)).at("detectors.a")?;
            let trig = TimestampRecord::new(triggers, 1, converted.duration()).at("triggers")?;
            report.files.push(write_file(out, RECORD_A, &record_bytes(&ra))?);
            report.files.push(write_file(out, TRIGGERS, &record_bytes(&trig))?);
            report.set("emitted_photons", n_emitted);
            report.set("n_triggers", n);
            report.set("detected", serde_json::json!({"a": ra.len()}));
            report.set("detected_total", ra.len());
            writeln!(summary, "{n} triggers, {n_emitted} photons emitted, {} detected", ra.len()).unwrap();
        }
        _ => {
            return Err(CliError::Validation(format!(
                "experiment: simulate supports g2_hbt and lifetime, not {}",
                scenario.experiment.name()
            )))
        }
    }
    if !scenario.stages.is_empty() {
        report.set("stages", stage_table(&scenario.stages)?);
        report.set("cascade_survival", cascade_survival(&scenario.stages).at("stages")?);
    }
    write_report(out, "simulate_report.json", &report)?;
    Ok(Outcome { report, summary })
}

// ----------------------------------------------------------- analyze ----

fn read_record(dir: &Path, name: &str) -> CliResult<(TimestampRecord, FileEntry)> {
    let path = dir.join(name);
    let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    let record = TimestampRecord::read_from(BufReader::new(bytes.as_slice()))
        .map_err(|e| CliError::from_read(&path, e))?;
    Ok((record, FileEntry::of(name, &bytes)))
}

fn analysis_failure(context: &str, err: qfc_link::Error) -> CliError {
    CliError::from_core(context, err)
}

pub fn analyze(scenario: &Scenario, input: &Path, out: &Path) -> CliResult<Outcome> {
    match scenario.experiment {
        Experiment::G2Hbt => analyze_g2(scenario, input, out),
        Experiment::Lifetime => analyze_lifetime(scenario, input, out),
        Experiment::ConversionCurve => fit_conversion(Some(scenario), &scenario.conversion_pairs(), out),
        Experiment::Budget => budget(scenario, out),
    }
}

fn analyze_g2(scenario: &Scenario, input: &Path, out: &Path) -> CliResult<Outcome> {
    let (a, fa) = read_record(input, RECORD_A)?;
    let (b, fb) = read_record(input, RECORD_B)?;
    let settings = &scenario.analysis;
    let hist = cross_correlation_histogram(&a, &b, settings.bin_width_ps, settings.tau_range_ps)
        .map_err(|e| analysis_failure("g2 histogram", e))?;
    let mut report = Report::new("analyze", scenario.seed, Some(scenario.clone()));
    report.inputs = vec![fa, fb];
    report.files.push(write_file(out, "g2_histogram.csv", hist.to_csv().as_bytes())?);
    let overlap = ps_to_seconds(a.duration().min(b.duration()));
    let curve = normalize_g2(&hist, a.rate_hz(), b.rate_hz(), overlap)
        .map_err(|e| analysis_failure("g2 normalization", e))?;
    let fit: G2Fit = initial_guess_g2(&curve)
        .and_then(|init| fit_g2(&curve, &init))
        .map_err(|e| analysis_failure("g2 fit", e))?;
    let p = fit.fit.params;
    let csv = g2_curve_csv(&curve, Some(&|tau| p.eval(tau)));
    report.files.push(write_file(out, "g2_curve.csv", csv.as_bytes())?);
    report.fits.push(fit.fit.report("g2"));
    report.set("pairs", hist.total());
    report.set("rate_a_hz", a.rate_hz());
    report.set("rate_b_hz", b.rate_hz());
    report.set("g2_zero", fit.g2_zero);
    report.set("g2_zero_error", fit.g2_zero_error);
    report.set("raw_minimum", fit.raw_minimum);
    report.set("raw_minimum_error", fit.raw_minimum_error);
    let summary = format!(
        "{} pairs; fitted g2(0) = {:.4} ± {:.4}, raw minimum = {:.4} ± {:.4}\n\
         gamma = {:.4e} /s, omega = {:.4e} rad/s, tau0 = {:.1} ps\n",
        hist.total(),
        fit.g2_zero,
        fit.g2_zero_error,
        fit.raw_minimum,
        fit.raw_minimum_error,
        p.gamma,
        p.omega,
        p.tau0_ps
    );
    write_report(out, "analysis_report.json", &report)?;
    Ok(Outcome { report, summary })
}

fn analyze_lifetime(scenario: &Scenario, input: &Path, out: &Path) -> CliResult<Outcome> {
    let Some(Emitter::Pulsed(sched)) = &scenario.emitter else {
        unreachable!("validated")
    };
    let (record, fr) = read_record(input, RECORD_A)?;
    let (triggers, ft) = read_record(input, TRIGGERS)?;
    let settings = &scenario.analysis;
    let hist = arrival_histogram(
        &record,
        triggers.events(),
        sched.measurement_window_ps,
        settings.bin_width_ps,
    )
    .map_err(|e| analysis_failure("arrival histogram", e))?;
    let mut report = Report::new("analyze", scenario.seed, Some(scenario.clone()));
    report.inputs = vec![fr, ft];
    report.files.push(write_file(out, "arrival_histogram.csv", hist.to_csv().as_bytes())?);
    let mut summary = String::new();

    // the backscatter peak is informative but not required for the decay fit
    match fit_gaussian(&hist, settings.gaussian_range_ps) {
        Ok(g) => {
            report.set("backscatter_fwhm_ps", g.params.fwhm_ps());
            writeln!(
                summary,
                "early peak t0 = {:.1} ps, FWHM = {:.1} ps",
                g.params.mean_ps,
                g.params.fwhm_ps()
            )
            .unwrap();
            report.fits.push(g.report("gaussian"));
        }
        Err(e) => report.set("gaussian_error", e.to_string()),
    }
    // the ion is excited at the scheduled pulse time
    let onset = sched.pulse_center_ps as f64;
    let tail = fit_exponential_tail(&hist, settings.cutoff_ps)
        .map_err(|e| analysis_failure("exponential tail fit", e))?;
    report.fits.push(tail.fit.report("exponential_tail"));
    report.set("events", hist.total());
    report.set("cutoff_ps", settings.cutoff_ps);
    report.set("discarded_fraction", tail.discarded_fraction);
    report.set("onset_ps", onset);
    report.set("model_discarded_fraction", tail.model_discarded_fraction(onset));
    writeln!(
        summary,
        "decay time = {:.1} ± {:.1} ps; {:.1}% of counts before the {} ps cut-off",
        tail.fit.params.decay_time_ps,
        tail.fit.std_errors.decay_time_ps,
        100.0 * tail.discarded_fraction,
        settings.cutoff_ps
    )
    .unwrap();
    write_report(out, "analysis_report.json", &report)?;
    Ok(Outcome { report, summary })
}

// ---------------------------------------------------- fit-conversion ----

/// Parses `pump_mw,conversion` rows; a header row and `#` comments are
/// skipped.
pub fn parse_conversion_csv(text: &str) -> CliResult<Vec<(f64, f64)>> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("pump_mw")) {
            continue;
        }
        let bad = |why: &str| CliError::Validation(format!("line {}: {why}", i + 1));
        let mut cols = line.split(',').map(str::trim);
        let (Some(p), Some(z), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(bad("expected two columns pump_mw,conversion"));
        };
        let p: f64 = p.parse().map_err(|_| bad("pump power is not a number"))?;
        let z: f64 = z.parse().map_err(|_| bad("conversion is not a number"))?;
        points.push((p, z));
    }
    Ok(points)
}

pub fn read_conversion_csv(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_conversion_csv(&text).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn fit_conversion(scenario: Option<&Scenario>, points: &[(f64, f64)], out: &Path) -> CliResult<Outcome> {
    if points.is_empty() {
        return Err(CliError::Validation(
            "conversion_points: no data (use the config section or --data)".into(),
        ));
    }
    let fit = fit_conversion_curve(points).map_err(|e| analysis_failure("conversion fit", e))?;
    let seed = scenario.map_or(0, |s| s.seed);
    let mut report = Report::new("fit-conversion", seed, scenario.cloned());
    let c = fit.params;
    let mut csv = String::from("pump_mw,conversion,model\n");
    for &(p, z) in points {
        let m = qfc_link::qfc::conversion_rate(&c, p).at("conversion_points")?;
        writeln!(csv, "{p},{z},{m}").unwrap();
    }
    report.files.push(write_file(out, "conversion_curve.csv", csv.as_bytes())?);
    report.fits.push(fit.report("conversion_curve"));
    report.set("n_points", points.len());
    report.set("low_power_slope_per_watt", c.low_power_slope_per_watt());
    let summary = format!(
        "eta_conv = {:.4} ± {:.4}, P_max = {:.2} ± {:.2} mW, low-power slope = {:.3} /W\n",
        c.peak_conversion,
        fit.std_errors.peak_conversion,
        c.p_max_mw,
        fit.std_errors.p_max_mw,
        c.low_power_slope_per_watt()
    );
    write_report(out, "conversion_fit.json", &report)?;
    Ok(Outcome { report, summary })
}

/// Output directory: the flag wins over the config.
pub fn output_dir(flag: Option<PathBuf>, scenario: Option<&Scenario>) -> PathBuf {
    flag.or_else(|| scenario.map(|s| s.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}
