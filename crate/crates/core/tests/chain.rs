use phasetrack::analysis::{effective_sample_size, estimate_band};
use phasetrack::bench::{build_bench, BenchConfig};
use phasetrack::dsp::{calibrate, FirSpec};
use phasetrack::pipeline::{run_rf, RfChainConfig};
use phasetrack::synth::{simulate_baseband, RfOptions, SampleRecord};
use phasetrack::trajectory::{Interpolation, TrajectoryKind, TrajectorySpec, Waypoint};

fn noiseless() -> RfChainConfig {
    RfChainConfig {
        synth: RfOptions { noise_enabled: false, ..RfOptions::default() },
        ..RfChainConfig::default()
    }
}

fn ramp(shift: f64, duration: f64) -> TrajectorySpec {
    let points = [(0.0, 0.0, 0.0), (3e-4, 1.0, -0.5), (6e-4, 2.5, 1.5), (1.1e-3, -1.0, 2.0)]
        .into_iter()
        .map(|(t, x, y)| Waypoint { t: t + shift, x, y })
        .collect();
    TrajectorySpec::new(TrajectoryKind::Waypoints { points, interpolation: Interpolation::Cubic }, duration).unwrap()
}

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

#[test]
fn chain_is_linear_in_the_displacement() {
    let model = build_bench(&BenchConfig::ideal(10.0)).unwrap();
    let chain = RfChainConfig::default();
    let d = 2e-3;
    let zero = run_rf(&model, &TrajectorySpec::zero(d).unwrap(), d, 11, &chain).unwrap();
    let one = run_rf(&model, &TrajectorySpec::constant(1.5, -0.7, d).unwrap(), d, 11, &chain).unwrap();
    let two = run_rf(&model, &TrajectorySpec::constant(3.0, -1.4, d).unwrap(), d, 11, &chain).unwrap();
    for ((z, a), b) in zero.iter().zip(&one).zip(&two) {
        assert!(((b.u - z.u) - 2.0 * (a.u - z.u)).abs() < 1e-9);
        assert!(((b.v - z.v) - 2.0 * (a.v - z.v)).abs() < 1e-9);
    }
}

#[test]
fn shifted_trajectory_shifts_the_records() {
    let model = build_bench(&BenchConfig::ideal(10.0)).unwrap();
    let chain = noiseless();
    let lag = 7;
    let d = 1.5e-3;
    let base = run_rf(&model, &ramp(0.0, d), d, 1, &chain).unwrap();
    let moved = run_rf(&model, &ramp(lag as f64 * chain.demod.out_dt, d), d, 1, &chain).unwrap();
    let worst = base
        .iter()
        .zip(&moved[lag..])
        .map(|(a, b): (&SampleRecord, &SampleRecord)| (a.u - b.u).abs().max((a.v - b.v).abs()))
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn calibrated_variance_does_not_depend_on_tap_count() {
    let model = build_bench(&BenchConfig::ideal(10.0).without_entanglement()).unwrap();
    let d = 0.4;
    let spec = TrajectorySpec::zero(d).unwrap();
    let mut results = Vec::new();
    for taps in [401, 661, 1001] {
        let chain = RfChainConfig {
            demod: phasetrack::dsp::DemodConfig {
                fir: FirSpec { taps: Some(taps), ..FirSpec::default() },
                ..Default::default()
            },
            ..RfChainConfig::default()
        };
        let cal = chain.nominal_calibration().unwrap();
        let recs = cal.apply(&run_rf(&model, &spec, d, 21, &chain).unwrap());
        let u: Vec<f64> = recs.iter().map(|r| r.u).collect();
        let n_eff = effective_sample_size(&u, 2);
        results.push((taps, variance(&u), n_eff));
    }
    for &(taps, v, n_eff) in &results {
        let (lo, hi) = estimate_band(1.0, n_eff - 1.0, 3.0);
        assert!(v >= lo && v <= hi, "{taps} taps: {v} outside [{lo}, {hi}]");
    }
    let reference = results[1].1;
    for &(taps, v, _) in &results {
        assert!((v / reference - 1.0).abs() <= 0.02, "{taps} taps: {v} vs {reference}");
    }
}

#[test]
fn calibration_examples() {
    let vacuum = build_bench(&BenchConfig::ideal(10.0).without_entanglement()).unwrap();
    let squeezed = build_bench(&BenchConfig::ideal(10.0)).unwrap();
    let spec = TrajectorySpec::zero(0.026).unwrap();
    let cal_records = simulate_baseband(&vacuum, &spec, 1e-5, 100).unwrap();
    let cal = calibrate(&cal_records).unwrap();

    let own = cal.apply(&cal_records);
    for v in [variance(&own.iter().map(|r| r.u).collect::<Vec<_>>()), variance(&own.iter().map(|r| r.v).collect::<Vec<_>>())] {
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    let independent = cal.apply(&simulate_baseband(&vacuum, &spec, 1e-5, 101).unwrap());
    let (lo, hi) = estimate_band(1.0, 2599.0, 3.0);
    assert!(lo > 0.9 && hi < 1.1);
    for v in [variance(&independent.iter().map(|r| r.u).collect::<Vec<_>>()), variance(&independent.iter().map(|r| r.v).collect::<Vec<_>>())] {
        assert!((v - 1.0).abs() <= 0.06, "{v}");
    }

    let ten = cal.apply(&simulate_baseband(&squeezed, &spec, 1e-5, 102).unwrap());
    for v in [variance(&ten.iter().map(|r| r.u).collect::<Vec<_>>()), variance(&ten.iter().map(|r| r.v).collect::<Vec<_>>())] {
        assert!((v / 0.1 - 1.0).abs() <= 0.10, "{v}");
    }
}
