use nalgebra::DMatrix;

/// `exp(M)` by scaling and squaring a 30-term Taylor series.
pub fn expm_taylor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.abs().row_sum().max();
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.5 {
        s += 1;
    }
    let a = m / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `∫₀^Δt exp(Aτ) G exp(Aᵀτ) dτ` by composite Simpson with `intervals` (even) panels.
pub fn process_noise_quadrature(a: &DMatrix<f64>, g: &DMatrix<f64>, dt: f64, intervals: usize) -> DMatrix<f64> {
    assert!(intervals % 2 == 0);
    let h = dt / intervals as f64;
    let n = a.nrows();
    let mut acc = DMatrix::zeros(n, n);
    for i in 0..=intervals {
        let e = expm_taylor(&(a * (i as f64 * h)));
        let w = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += (&e * g * e.transpose()) * w;
    }
    acc * (h / 3.0)
}

/// `∫₀^Δt exp(Aτ) dτ B` by composite Simpson.
pub fn input_integral_quadrature(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64, intervals: usize) -> DMatrix<f64> {
    assert!(intervals % 2 == 0);
    let h = dt / intervals as f64;
    let mut acc = DMatrix::zeros(a.nrows(), b.ncols());
    for i in 0..=intervals {
        let e = expm_taylor(&(a * (i as f64 * h)));
        let w = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += (&e * b) * w;
    }
    acc * (h / 3.0)
}
