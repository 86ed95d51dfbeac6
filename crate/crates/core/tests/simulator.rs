use std::f64::consts::PI;

use proptest::prelude::*;
use sgplfm::friction_sim::{
    add_noise_snr, dieterich_ruina, jonswap_multisine, jonswap_spectrum, read_trajectory_csv, resample_uniform,
    signal_power, simulate_stick_slip, simulate_stick_slip_with, uniform_grid, FrictionParams, InputSignal,
    JonswapParams, MotionRegime, Multisine, SimOptions, Trajectory,
};
use sgplfm::ssm_builder::{ExcitationKind, SystemParams};

fn reference_system() -> SystemParams {
    SystemParams::new(1.0, 5.0, 500.0).unwrap()
}

fn reference_run(seed: u64, opts: &SimOptions) -> Trajectory {
    let input = jonswap_multisine(&JonswapParams::reference(seed)).unwrap();
    simulate_stick_slip_with(
        &reference_system(),
        &FrictionParams::reference(),
        &input,
        5.0,
        ExcitationKind::DirectForce,
        opts,
    )
    .unwrap()
}

/// Hand-written law evaluation, kept apart from the library.
fn law_oracle(v: f64) -> f64 {
    let (f_star, a, b, c, v_star, eps) = (1.0, 0.07, 0.09, 0.022, 0.003, 1e-6);
    let s = v.abs() + eps;
    v.signum() * (f_star + a * (s / v_star).ln() + b * (c + v_star / s).ln())
}

#[test]
fn static_limit_and_reference_speed() {
    let p = FrictionParams::reference();
    let fs = 1.0 + 0.07 * (1e-6f64 / 0.003).ln() + 0.09 * (0.022 + 0.003 / 1e-6f64).ln();
    assert!((p.static_force() - fs).abs() < 1e-12);
    assert!((fs - 1.16013).abs() < 1e-5);
    for v in [1e-9, 1e-4, 0.003, 0.05, 0.7] {
        assert!((dieterich_ruina(v, &p).unwrap() - law_oracle(v)).abs() < 1e-12);
        assert_eq!(dieterich_ruina(-v, &p).unwrap(), -dieterich_ruina(v, &p).unwrap());
    }
}

#[test]
fn rest_without_input() {
    let traj = simulate_stick_slip(
        &reference_system(),
        &FrictionParams::reference(),
        &Multisine::zero(),
        2.0,
        ExcitationKind::DirectForce,
    )
    .unwrap();
    assert!(traj.z.iter().chain(&traj.zdot).chain(&traj.friction).all(|v| *v == 0.0));
    assert!(traj.regime.iter().all(|r| *r == MotionRegime::Stick));
    assert_eq!(traj.stick_count(), 1);
}

#[test]
fn stick_contract_and_dissipation_sign() {
    let fs = FrictionParams::reference().static_force();
    for seed in 1..=5 {
        let traj = reference_run(seed, &SimOptions::default());
        assert!(traj.time.windows(2).all(|w| w[1] > w[0]));
        assert!(traj.stick_count() >= 3, "seed {seed}: {} stops", traj.stick_count());
        for i in 0..traj.len() {
            match traj.regime[i] {
                MotionRegime::Stick => {
                    assert!(traj.friction[i].abs() <= fs + 1e-9, "seed {seed} t {}", traj.time[i]);
                    assert!(traj.zdot[i].abs() <= 1e-10);
                }
                MotionRegime::Slip => assert!(traj.friction[i] * traj.zdot[i] >= 0.0),
            }
        }
        // Displacement is frozen over each stick interval.
        for (a, b) in traj.stick_intervals() {
            let zs: Vec<f64> = (0..traj.len())
                .filter(|&i| traj.time[i] >= a && traj.time[i] <= b)
                .map(|i| traj.z[i])
                .collect();
            assert!(zs.iter().all(|z| (z - zs[0]).abs() <= 1e-12));
        }
    }
}

fn trapezoid(t: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    (1..t.len()).map(|i| 0.5 * (t[i] - t[i - 1]) * (f(i) + f(i - 1))).sum()
}

#[test]
fn energy_balance_over_slip_intervals() {
    let sys = reference_system();
    let opts = SimOptions {
        output_rate: 20_000.0,
        ..SimOptions::default()
    };
    let mut audited = 0;
    for seed in 1..=3 {
        let traj = reference_run(seed, &opts);
        let mut i = 0;
        while i < traj.len() {
            if traj.regime[i] != MotionRegime::Slip {
                i += 1;
                continue;
            }
            let start = i;
            while i < traj.len() && traj.regime[i] == MotionRegime::Slip {
                i += 1;
            }
            let idx: Vec<usize> = (start..i).collect();
            if idx.len() < 50 {
                continue;
            }
            let t: Vec<f64> = idx.iter().map(|&j| traj.time[j]).collect();
            let at = |k: usize| idx[k];
            let work = trapezoid(&t, |k| traj.u[at(k)] * traj.zdot[at(k)]);
            let viscous = trapezoid(&t, |k| sys.damping * traj.zdot[at(k)].powi(2));
            let friction = trapezoid(&t, |k| traj.friction[at(k)] * traj.zdot[at(k)]);
            let energy = |j: usize| 0.5 * sys.mass * traj.zdot[j].powi(2) + 0.5 * sys.stiffness * traj.z[j].powi(2);
            let stored = energy(idx[idx.len() - 1]) - energy(idx[0]);
            let scale = work.abs().max(viscous + friction);
            let err = (work - stored - viscous - friction).abs() / scale;
            assert!(err < 1e-3, "seed {seed} slip at {:.4}: relative imbalance {err:.2e}", t[0]);
            audited += 1;
        }
    }
    assert!(audited >= 6);
}

#[test]
fn halving_tolerances_barely_moves_final_state() {
    let base = SimOptions::default();
    let fine = SimOptions {
        rtol: base.rtol / 2.0,
        atol: base.atol / 2.0,
        event_tol: base.event_tol / 2.0,
        ..base
    };
    for seed in [1, 2] {
        let a = reference_run(seed, &base);
        let b = reference_run(seed, &fine);
        let (za, zb) = (*a.z.last().unwrap(), *b.z.last().unwrap());
        assert!((za - zb).abs() / za.abs().max(1e-12) < 1e-6, "seed {seed}: {za} vs {zb}");
    }
}

#[test]
fn resampling_counts_and_linear_exactness() {
    let traj = reference_run(1, &SimOptions::default());
    let r = resample_uniform(&traj, 500.0).unwrap();
    assert_eq!(r.len(), 2501);
    assert!((r.time[2500] - 5.0).abs() < 1e-12);
    let again = resample_uniform(&r, 500.0).unwrap();
    assert_eq!(again.len(), r.len());
    for i in 0..r.len() {
        assert!((again.z[i] - r.z[i]).abs() < 1e-15);
        assert_eq!(again.regime[i], r.regime[i]);
    }

    let mut lin = Trajectory::empty(ExcitationKind::DirectForce);
    let times = [0.0, 0.013, 0.4, 0.41, 1.0];
    lin.time = times.to_vec();
    lin.z = times.to_vec();
    for ch in [&mut lin.zdot, &mut lin.zddot, &mut lin.friction, &mut lin.u, &mut lin.udot] {
        *ch = vec![0.0; times.len()];
    }
    lin.regime = vec![MotionRegime::Slip; times.len()];
    for f_s in [3.0, 7.0, 100.0] {
        let r = resample_uniform(&lin, f_s).unwrap();
        for (t, z) in r.time.iter().zip(&r.z) {
            assert!((t - z).abs() < 1e-14);
        }
    }
}

#[test]
fn trajectory_csv_round_trip() {
    let traj = resample_uniform(&reference_run(2, &SimOptions::default()), 100.0).unwrap();
    let mut buf = Vec::new();
    sgplfm::friction_sim::write_trajectory_csv(&traj, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("time_s,z_m,zdot_m_per_s"));
    let back = read_trajectory_csv(buf.as_slice()).unwrap();
    assert_eq!(back.regime, traj.regime);
    for (a, b) in back.z.iter().zip(&traj.z) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12));
    }
}

#[test]
fn noise_level_for_a_given_displacement_rms() {
    // Sinusoid with RMS 78.623 mm.
    let rms = 78.623e-3;
    let signal: Vec<f64> = (0..2501).map(|i| rms * 2f64.sqrt() * (2.0 * PI * 1.3 * i as f64 / 500.0).sin()).collect();
    let power = signal_power(&signal);
    assert!((power.sqrt() - rms).abs() / rms < 1e-3);
    let (_, s80) = add_noise_snr(&signal, 80.0, 3).unwrap();
    let (_, s60) = add_noise_snr(&signal, 60.0, 3).unwrap();
    let expect80 = (power / 1e8).sqrt();
    assert!((s80 - expect80).abs() < 1e-15);
    assert!((s80 - 7.8623e-6).abs() / 7.8623e-6 < 2e-3);
    assert!((s60 - 7.86e-5).abs() / 7.86e-5 < 2e-3);
    assert!((s80 * s80 - 6.18e-11).abs() / 6.18e-11 < 5e-3);
    let (same, s) = add_noise_snr(&signal, f64::INFINITY, 3).unwrap();
    assert_eq!(same, signal);
    assert_eq!(s, 0.0);
    assert_eq!(add_noise_snr(&signal, 70.0, 9).unwrap(), add_noise_snr(&signal, 70.0, 9).unwrap());
}

#[test]
fn realized_snr_matches_request() {
    let traj = resample_uniform(&reference_run(1, &SimOptions::default()), 500.0).unwrap();
    let realized = |signal: &[f64], snr: f64, seed: u64| {
        let (noisy, _) = add_noise_snr(signal, snr, seed).unwrap();
        let noise: Vec<f64> = noisy.iter().zip(signal).map(|(a, b)| a - b).collect();
        10.0 * (signal_power(signal) / signal_power(&noise)).log10()
    };
    // T = 2501: the realized level scatters with sd ≈ 10 log10(e) √(2/T) ≈ 0.12 dB.
    for snr in [60.0, 80.0, 100.0] {
        let draws: Vec<f64> = (0..50).map(|seed| realized(&traj.z, snr, seed)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - snr).abs() < 0.05, "{snr} dB: mean {mean}");
        assert!(draws.iter().all(|d| (d - snr).abs() < 0.5));
        let within = draws.iter().filter(|d| (*d - snr).abs() < 0.2).count();
        assert!(within >= 40, "{snr} dB: {within}/50 within 0.2 dB");
    }
    let long: Vec<f64> = (0..100_000).map(|i| (i as f64 * 0.01).sin() + 0.3 * (i as f64 * 0.137).cos()).collect();
    for seed in 0..10 {
        assert!((realized(&long, 70.0, seed) - 70.0).abs() < 0.2);
    }
}

/// Spectrum written out independently from the library.
fn jonswap_oracle(w: f64) -> f64 {
    let (hs, tp, gamma): (f64, f64, f64) = (10.0, 0.5, 3.3);
    let wp = 2.0 * PI / tp;
    let sigma = if w < wp { 0.07 } else { 0.09 };
    let alpha = 320.0 * hs * hs / tp.powi(4);
    let peak = gamma.powf((-(w - wp).powi(2) / (2.0 * sigma * sigma * wp * wp)).exp());
    alpha / w.powi(5) * (-1.25 * (wp / w).powi(4)).exp() * peak
}

#[test]
fn spectrum_shape() {
    let p = JonswapParams::reference(0);
    for w in [0.5, 5.0, 10.0, 12.566, 13.0, 20.0, 60.0, 99.0] {
        assert!((jonswap_spectrum(w, &p) - jonswap_oracle(w)).abs() <= 1e-12 * jonswap_oracle(w));
    }
    let wp = p.peak_frequency();
    assert!(jonswap_spectrum(wp, &p) > jonswap_spectrum(0.8 * wp, &p));
    assert!(jonswap_spectrum(wp, &p) > jonswap_spectrum(1.2 * wp, &p));
    // ω⁻⁵ tail.
    let ratio = jonswap_spectrum(400.0, &p) / jonswap_spectrum(200.0, &p);
    assert!((ratio * 32.0 - 1.0).abs() < 1e-3);
}

#[test]
fn periodogram_matches_spectrum() {
    let p = JonswapParams::reference(11);
    let sig = jonswap_multisine(&p).unwrap();
    assert_eq!(sig, jonswap_multisine(&JonswapParams::reference(11)).unwrap());
    // One full period of the 0.02 rad/s grid.
    let period = 2.0 * PI / 0.02;
    let n = 1usize << 15;
    let dt = period / n as f64;
    let x: Vec<f64> = (0..n).map(|i| sig.value(i as f64 * dt)).collect();
    let dw = 0.02;
    let probes = [100usize, 300, 450, 550, 628, 700, 800, 1000, 1500, 2500];
    for k in probes {
        let w = k as f64 * dw;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * (k as f64) * (i as f64) / n as f64;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        // Amplitude of the cosine at bin k is 2|X_k|/N; S = A²/(2Δω).
        let amp = 2.0 * (re * re + im * im).sqrt() / n as f64;
        let s_hat = amp * amp / (2.0 * dw);
        let s = jonswap_oracle(w);
        assert!((s_hat - s).abs() <= 1e-6 * s + 1e-12, "ω = {w}: {s_hat} vs {s}");
    }
    let grid = uniform_grid(0.02, 0.02, 100.0);
    assert_eq!(grid.len(), 5000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn law_is_odd_and_matches_oracle(v in 1e-8f64..2.0) {
        let p = FrictionParams::reference();
        let f = dieterich_ruina(v, &p).unwrap();
        prop_assert!((f - law_oracle(v)).abs() < 1e-12);
        prop_assert_eq!(dieterich_ruina(-v, &p).unwrap(), -f);
    }

    #[test]
    fn harmonic_runs_respect_stick_bound(amp in 0.5f64..4.0, freq in 0.5f64..3.0) {
        let input = Multisine::harmonic(amp, 2.0 * PI * freq, 0.0).unwrap();
        let law = FrictionParams::reference();
        let traj = simulate_stick_slip(&reference_system(), &law, &input, 2.0, ExcitationKind::DirectForce).unwrap();
        for i in 0..traj.len() {
            if traj.regime[i] == MotionRegime::Stick {
                prop_assert!(traj.friction[i].abs() <= law.static_force() + 1e-9);
            } else {
                prop_assert!(traj.friction[i] * traj.zdot[i] >= 0.0);
            }
        }
    }
}
