use qfc_link::analysis::{
    arrival_histogram, cross_correlation_histogram, fit_conversion_curve, fit_exponential_tail,
    fit_g2, fit_gaussian, initial_guess_g2, normalize_g2, G2FitParams, G2Point, Histogram,
};
use qfc_link::detection::{beam_split, detect, DetectorParams, TimestampRecord};
use qfc_link::qfc::{conversion_rate, ConversionCurve};
use qfc_link::source::{
    antibunching_curve, simulate_cw_stream, simulate_pulsed_decay, Backscatter, EmitterParams,
    PulsedScheduleParams,
};
use qfc_link::{par, Seed};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

const GAMMA: f64 = 1.0 / 8.12e-9;

/// Smallest value of `cost` over a regular grid on `box_`.
fn grid_minimum(box_: &[(f64, f64)], n: usize, cost: impl Fn(&[f64]) -> f64) -> f64 {
    let dims = box_.len();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; dims];
    let mut p = vec![0.0; dims];
    loop {
        for d in 0..dims {
            let (lo, hi) = box_[d];
            p[d] = lo + (hi - lo) * idx[d] as f64 / (n - 1) as f64;
        }
        best = best.min(cost(&p));
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < n {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == dims {
                return best;
            }
        }
    }
}

fn poisson_sigma(c: f64) -> f64 {
    c.max(1.0).sqrt()
}

fn noisy_g2_curve(truth: &G2FitParams, counts_per_bin: f64, seed: u64) -> Vec<G2Point> {
    let mut rng = Seed::new(seed).rng();
    (-120..=120)
        .map(|k| {
            let tau = k as f64 * 1250.0;
            let mean = counts_per_bin * truth.eval(tau);
            let c = if mean > 0.0 { Poisson::new(mean).unwrap().sample(&mut rng) as u64 } else { 0 };
            G2Point {
                tau_ps: tau,
                g2: c as f64 / counts_per_bin,
                sigma: poisson_sigma(c as f64) / counts_per_bin,
                counts: c,
            }
        })
        .collect()
}

fn g2_chi2(curve: &[G2Point], p: &G2FitParams) -> f64 {
    curve.iter().map(|q| ((q.g2 - p.eval(q.tau_ps)) / q.sigma).powi(2)).sum()
}

#[test]
fn g2_fit_recovers_noisy_parameters_and_beats_a_grid() {
    let truth = G2FitParams::new(0.95, GAMMA, 1.9 * GAMMA, 1500.0);
    let curve = noisy_g2_curve(&truth, 400.0, 1);
    let fit = fit_g2(&curve, &initial_guess_g2(&curve).unwrap()).unwrap();
    let (p, e) = (&fit.fit.params, &fit.fit.std_errors);
    assert!(fit.fit.converged);
    assert!((p.g0 - truth.g0).abs() < 3.0 * e.g0, "g0 {} ± {}", p.g0, e.g0);
    assert!((p.gamma - truth.gamma).abs() < 3.0 * e.gamma, "γ {} ± {}", p.gamma, e.gamma);
    assert!((p.omega - truth.omega).abs() < 3.0 * e.omega, "Ω {} ± {}", p.omega, e.omega);
    assert!((p.tau0_ps - truth.tau0_ps).abs() < 3.0 * e.tau0_ps);

    // two-parameter slice through (g0, γ) with Ω², τ₀ held at the optimum
    let slice = |q: &[f64]| {
        let mut t = *p;
        t.g0 = q[0];
        t.gamma = q[1];
        g2_chi2(&curve, &t)
    };
    let box_ = [
        (p.g0 - 5.0 * e.g0, p.g0 + 5.0 * e.g0),
        (p.gamma - 5.0 * e.gamma, p.gamma + 5.0 * e.gamma),
    ];
    let grid = grid_minimum(&box_, 201, slice);
    assert!(fit.fit.rss <= grid * (1.0 + 1e-9), "{} vs grid {grid}", fit.fit.rss);
    assert!((g2_chi2(&curve, p) - fit.fit.rss).abs() < 1e-6 * fit.fit.rss);

    // full four-dimensional box, coarse
    let full = grid_minimum(
        &[(0.8, 1.1), (0.7 * GAMMA, 1.3 * GAMMA), (2.5 * GAMMA * GAMMA, 4.5 * GAMMA * GAMMA), (0.0, 3000.0)],
        15,
        |q| {
            let mut t = G2FitParams::new(q[0], q[1], 0.0, q[3]);
            t.omega_squared = q[2];
            g2_chi2(&curve, &t)
        },
    );
    assert!(fit.fit.rss <= full);
}

#[test]
fn gaussian_fit_beats_a_grid() {
    let mut rng = Seed::new(2).rng();
    let normal = Normal::new(3070.0f64, 800.0).unwrap();
    let mut h = Histogram::zeros(0, 250, 40);
    for _ in 0..20_000 {
        if let Some(k) = h.bin_of(normal.sample(&mut rng).round() as i64) {
            h.counts[k] += 1;
        }
    }
    let fit = fit_gaussian(&h, (0, 8000)).unwrap();
    assert!((fit.params.mean_ps - 3070.0).abs() < 3.0 * fit.std_errors.mean_ps);
    assert!((fit.params.sigma_ps - 800.0).abs() < 3.0 * fit.std_errors.sigma_ps);
    let bins: Vec<(f64, f64)> = (0..h.len())
        .map(|k| (h.bin_center(k), h.counts[k] as f64))
        .filter(|(t, _)| *t <= 8000.0)
        .collect();
    let cost = |q: &[f64]| -> f64 {
        bins.iter()
            .map(|(t, c)| ((c - q[0] * (-0.5 * ((t - q[1]) / q[2]).powi(2)).exp()) / poisson_sigma(*c)).powi(2))
            .sum()
    };
    let p = &fit.params;
    let grid = grid_minimum(
        &[(0.9 * p.amplitude, 1.1 * p.amplitude), (2900.0, 3250.0), (700.0, 900.0)],
        41,
        cost,
    );
    assert!(fit.rss <= grid * (1.0 + 1e-9), "{} vs {grid}", fit.rss);
}

#[test]
fn exponential_fit_beats_a_grid() {
    let mut rng = Seed::new(3).rng();
    let mut h = Histogram::zeros(0, 1250, 80);
    for k in 0..h.len() {
        let mean = 2000.0 * (-h.bin_center(k) / 8120.0).exp() + 4.0;
        h.counts[k] = Poisson::new(mean).unwrap().sample(&mut rng) as u64;
    }
    let fit = fit_exponential_tail(&h, 7500).unwrap();
    let p = &fit.fit.params;
    let e = &fit.fit.std_errors;
    assert!((p.decay_time_ps - 8120.0).abs() < 3.0 * e.decay_time_ps);
    let tail: Vec<(f64, f64)> = (6..h.len()).map(|k| (h.bin_center(k) - 7500.0, h.counts[k] as f64)).collect();
    let cost = |q: &[f64]| -> f64 {
        tail.iter()
            .map(|(x, c)| ((c - (q[0] * (-x / q[1]).exp() + q[2])) / poisson_sigma(*c)).powi(2))
            .sum()
    };
    let grid = grid_minimum(
        &[(0.8 * p.amplitude, 1.2 * p.amplitude), (7000.0, 9000.0), (0.0, 10.0)],
        41,
        cost,
    );
    assert!(fit.fit.rss <= grid * (1.0 + 1e-9), "{} vs {grid}", fit.fit.rss);
}

#[test]
fn conversion_fit_beats_a_grid() {
    let curve = ConversionCurve::new(0.49, 152.0).unwrap();
    let mut rng = Seed::new(4).rng();
    let noise = Normal::new(1.0, 0.02).unwrap();
    let pts: Vec<(f64, f64)> = (0..8)
        .map(|k| {
            let p = 150.0 * k as f64 / 7.0;
            (p, conversion_rate(&curve, p).unwrap() * noise.sample(&mut rng))
        })
        .collect();
    let fit = fit_conversion_curve(&pts).unwrap();
    let cost = |q: &[f64]| -> f64 {
        let c = ConversionCurve { peak_conversion: q[0], p_max_mw: q[1] };
        pts.iter().map(|(p, z)| (z - conversion_rate(&c, *p).unwrap()).powi(2)).sum()
    };
    let grid = grid_minimum(&[(0.3, 0.7), (100.0, 200.0)], 401, cost);
    assert!(fit.rss <= grid * (1.0 + 1e-9), "{} vs {grid}", fit.rss);
}

fn fig5_schedule(p_exc: f64, p_bs: f64) -> PulsedScheduleParams {
    PulsedScheduleParams {
        trigger_period_ps: 2_100_000,
        pulse_center_ps: 3070,
        measurement_window_ps: 100_000,
        lifetime_ps: 8120.0,
        excitation_probability: p_exc,
        backscatter: Backscatter {
            probability_per_trigger: p_bs,
            sigma_ps: 800.0,
        },
    }
}

fn arrivals(sched: &PulsedScheduleParams, n: usize, det: &DetectorParams, bin: i64, seed: u64) -> Histogram {
    let (s, trig) = simulate_pulsed_decay(sched, n, Seed::new(seed)).unwrap();
    let r = detect(&s, det, Seed::new(seed + 1)).unwrap();
    arrival_histogram(&r, &trig, sched.measurement_window_ps, bin).unwrap()
}

#[test]
fn pure_exponential_arrivals_follow_the_density() {
    let det = DetectorParams::ideal(1250);
    let sched = PulsedScheduleParams {
        pulse_center_ps: 0,
        ..fig5_schedule(1.0, 0.0)
    };
    let h = arrivals(&sched, 200_000, &det, 1250, 5);
    let n = h.total() as f64;
    let mut chi2 = 0.0;
    let mut dof = 0usize;
    for k in 0..h.len() {
        let (a, b) = (h.bin_left(k) as f64, h.bin_left(k + 1) as f64);
        let expected = n * ((-a / 8120.0).exp() - (-b / 8120.0).exp());
        if expected > 20.0 {
            chi2 += (h.counts[k] as f64 - expected).powi(2) / expected;
            dof += 1;
        }
    }
    assert!(chi2 < dof as f64 + 5.0 * (2.0 * dof as f64).sqrt(), "chi2 {chi2} / {dof}");
}

#[test]
fn backscatter_peak_widens_with_the_ion_present() {
    let det = DetectorParams::ideal(250);
    let bs_only = arrivals(&fig5_schedule(0.0, 0.5), 100_000, &det, 250, 6);
    let with_ion = arrivals(&fig5_schedule(0.5, 0.5), 100_000, &det, 250, 6);
    let range = (0, 5000);
    let a = fit_gaussian(&bs_only, range).unwrap();
    let b = fit_gaussian(&with_ion, range).unwrap();
    assert!((a.params.sigma_ps - 800.0).abs() < 3.0 * a.std_errors.sigma_ps);
    assert!(
        b.params.sigma_ps > a.params.sigma_ps,
        "{} vs {}",
        b.params.sigma_ps,
        a.params.sigma_ps
    );
    assert!(b.params.fwhm_ps() > a.params.fwhm_ps());
}

#[test]
fn lifetime_scenario_recovers_decay_and_discarded_fraction() {
    let det = DetectorParams {
        quantum_efficiency: 0.9,
        dark_rate_hz: 15.0,
        dead_time_ps: 0,
        resolution_ps: 1250,
    };
    let h = arrivals(&fig5_schedule(0.5, 0.01), 100_000, &det, 1250, 7);
    let fit = fit_exponential_tail(&h, 7500).unwrap();
    let tau = fit.fit.params.decay_time_ps;
    assert!((tau - 8120.0).abs() < 200.0, "τ = {tau}");
    assert!((fit.discarded_fraction - 0.42).abs() < 0.03, "{}", fit.discarded_fraction);
    assert!((fit.model_discarded_fraction(3070.0) - 0.42).abs() < 0.03);
}

#[test]
fn flat_arrivals_are_flagged() {
    let mut rng = Seed::new(8).rng();
    let mut h = Histogram::zeros(0, 1250, 80);
    h.counts.iter_mut().for_each(|c| *c = rng.random_range(40..60));
    assert!(fit_exponential_tail(&h, 7500).is_err());
}

fn simulated_hbt(rabi: f64, duration_ps: i64, seed: u64) -> Vec<G2Point> {
    let p = EmitterParams::new(rabi * GAMMA, 0.0, GAMMA).unwrap();
    let s = simulate_cw_stream(&p, duration_ps, Seed::new(seed)).unwrap();
    let (a, b) = beam_split(&s, 0.5, Seed::new(seed + 1)).unwrap();
    let det = DetectorParams {
        quantum_efficiency: 0.3,
        dark_rate_hz: 15.0,
        dead_time_ps: 0,
        resolution_ps: 1250,
    };
    let ra = detect(&a, &det, Seed::new(seed + 2)).unwrap();
    let rb = detect(&b, &det, Seed::new(seed + 3)).unwrap();
    let h = cross_correlation_histogram(&ra, &rb, 1250, 150_000).unwrap();
    normalize_g2(&h, ra.rate_hz(), rb.rate_hz(), duration_ps as f64 * 1e-12).unwrap()
}

#[test]
fn simulated_hbt_fit_recovers_decay_rate_and_orders_minimum() {
    let curve = simulated_hbt(2.0, 400_000_000_000, 30);
    let fit = fit_g2(&curve, &initial_guess_g2(&curve).unwrap()).unwrap();
    let gamma = fit.fit.params.gamma;
    assert!((gamma / GAMMA - 1.0).abs() < 0.1, "γ ratio {}", gamma / GAMMA);
    assert!(fit.raw_minimum >= 0.0 && fit.raw_minimum < 1.0);
    assert!(
        fit.g2_zero <= fit.raw_minimum + fit.raw_minimum_error,
        "fitted {} vs raw {} ± {}",
        fit.g2_zero,
        fit.raw_minimum,
        fit.raw_minimum_error
    );
    // the model evaluated through the fitted parameters matches the curve
    let p = fit.fit.params;
    let direct = antibunching_curve(p.g0, p.gamma, p.omega_squared, 10e-9);
    assert!((p.eval(p.tau0_ps + 10_000.0) - direct).abs() < 1e-12);
}

#[test]
fn histogramming_is_independent_of_thread_count() {
    let empty = qfc_link::TimestampStream::empty(200_000_000_000).unwrap();
    let det = DetectorParams {
        quantum_efficiency: 1.0,
        dark_rate_hz: 2e6,
        dead_time_ps: 0,
        resolution_ps: 1250,
    };
    let a = detect(&empty, &det, Seed::new(1)).unwrap();
    let b = detect(&empty, &det, Seed::new(2)).unwrap();
    let serial = par::with_threads(1, || cross_correlation_histogram(&a, &b, 1250, 100_000).unwrap());
    let pooled = par::with_threads(4, || cross_correlation_histogram(&a, &b, 1250, 100_000).unwrap());
    assert_eq!(serial, pooled);
    let trig: Vec<i64> = (0..200_000_000_000 / 2_100_000).map(|k| k * 2_100_000).collect();
    let s1 = par::with_threads(1, || arrival_histogram(&a, &trig, 100_000, 1250).unwrap());
    let s4 = par::with_threads(4, || arrival_histogram(&a, &trig, 100_000, 1250).unwrap());
    assert_eq!(s1, s4);
}

#[test]
fn empty_records_are_rejected() {
    let empty = TimestampRecord::new(vec![], 1250, 1_000_000).unwrap();
    let one = TimestampRecord::new(vec![0], 1250, 1_000_000).unwrap();
    assert!(matches!(
        cross_correlation_histogram(&empty, &one, 1250, 10_000),
        Err(qfc_link::Error::EmptyRecord)
    ));
    assert_eq!(qfc_link::Error::EmptyRecord.to_string(), "empty record");
    assert!(arrival_histogram(&empty, &[0], 1000, 250).is_err());
}
