use nalgebra::DVector;
use sgplfm::friction_sim::{
    add_noise_snr, jonswap_multisine, resample_uniform, simulate_stick_slip, FrictionParams, JonswapParams,
};
use sgplfm::gp_ssm::KernelSpec;
use sgplfm::hyper_opt::{log_posterior, optimize, HyperContext, HyperPrior, Hyperparameters};
use sgplfm::ssm_builder::{ExcitationKind, ObservationKind, RegimeSpec, SystemParams};
use sgplfm::switching::InferenceConfig;

struct Data {
    inputs: Vec<DVector<f64>>,
    observations: Vec<DVector<f64>>,
    noise_variance: f64,
}

fn dataset(t_f: f64, seed: u64) -> Data {
    let sys = SystemParams::new(1.0, 5.0, 500.0).unwrap();
    let input = jonswap_multisine(&JonswapParams::reference(seed)).unwrap();
    let dense =
        simulate_stick_slip(&sys, &FrictionParams::reference(), &input, t_f, ExcitationKind::DirectForce).unwrap();
    let truth = resample_uniform(&dense, 500.0).unwrap();
    let (y, sd) = add_noise_snr(&truth.z, 80.0, 100 + seed).unwrap();
    Data {
        inputs: truth.u.iter().map(|u| DVector::from_element(1, *u)).collect(),
        observations: y.iter().map(|v| DVector::from_element(1, *v)).collect(),
        noise_variance: sd * sd,
    }
}

fn context(data: &Data) -> HyperContext<'_> {
    HyperContext {
        spec: RegimeSpec {
            params: SystemParams::new(1.0, 5.0, 500.0).unwrap(),
            excitation: ExcitationKind::DirectForce,
            kernel: KernelSpec::exponential(20.0, 20.0).unwrap(),
            dt: 0.002,
            observation: ObservationKind::Displacement,
            noise_variance: 2e-11,
            p0: 0.05,
            stick_slip: true,
            reset: true,
        },
        persistence: 0.92,
        inference: InferenceConfig::new(3, 3).unwrap(),
        inputs: &data.inputs,
        observations: &data.observations,
        prior_mean: None,
    }
}

#[test]
fn posterior_prefers_plausible_kernels() {
    let data = dataset(2.0, 1);
    let ctx = context(&data);
    let prior = HyperPrior::reference();
    let good = Hyperparameters {
        signal_variance: 3.6567,
        lengthscale: 0.4169,
        noise_variance: data.noise_variance,
    };
    let bad = Hyperparameters {
        signal_variance: good.signal_variance * 1e4,
        lengthscale: good.lengthscale * 1e-3,
        ..good
    };
    let lp_good = log_posterior(&good, &prior, &ctx);
    assert!(lp_good.is_finite());
    assert!(lp_good > log_posterior(&bad, &prior, &ctx));
    let silent = Hyperparameters {
        noise_variance: 0.0,
        ..good
    };
    assert_eq!(log_posterior(&silent, &prior, &ctx), f64::NEG_INFINITY);
    assert_eq!(ctx.log_likelihood(&silent), f64::NEG_INFINITY);
}

#[test]
fn optimizer_is_reproducible_and_monotone() {
    let data = dataset(1.0, 2);
    let ctx = context(&data);
    let prior = HyperPrior::reference();
    let a = optimize(&prior, &ctx, 80, 5).unwrap();
    let b = optimize(&prior, &ctx, 80, 5).unwrap();
    assert_eq!(a, b);
    assert!(a.evaluations <= 80);
    assert_eq!(a.trace.len(), a.evaluations);
    assert!(a.trace.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(*a.trace.last().unwrap(), a.log_posterior);
    assert!(a.hyper.signal_variance > 0.0 && a.hyper.lengthscale > 0.0 && a.hyper.noise_variance > 0.0);
    let again = log_posterior(&a.hyper, &prior, &ctx);
    assert!((again - a.log_posterior).abs() < 1e-9 * again.abs());
    assert!(optimize(&prior, &ctx, 49, 5).is_err());
}

#[test]
fn restarts_agree_across_seeds() {
    let data = dataset(5.0, 1);
    let ctx = context(&data);
    let prior = HyperPrior::reference();
    let a = optimize(&prior, &ctx, 300, 7).unwrap();
    let b = optimize(&prior, &ctx, 300, 8).unwrap();
    assert!((a.log_posterior - b.log_posterior).abs() < 1.0, "{} vs {}", a.log_posterior, b.log_posterior);
}
