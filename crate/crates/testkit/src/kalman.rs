use nalgebra::{DMatrix, DVector};

/// One transition `x_t = A x_{t−1} + c + w`, `w ~ N(0, Q)`.
#[derive(Debug, Clone)]
pub struct Step {
    pub a: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub q: DMatrix<f64>,
}

/// `y_t = C x_t + d_t + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone)]
pub struct Observation {
    pub c: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct KalmanRun {
    pub log_likelihood: f64,
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    pub smoothed_means: Vec<DVector<f64>>,
    pub smoothed_covs: Vec<DMatrix<f64>>,
}

fn log_normal(r: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
    let inv = s.clone().try_inverse().expect("invertible innovation covariance");
    let det = s.determinant();
    -0.5 * ((r.transpose() * inv * r)[(0, 0)] + det.ln() + r.len() as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Kalman filter and RTS smoother with explicit inverses. `steps[t−1]` maps
/// `x_{t−1}` to `x_t`; `y_0` conditions the prior directly.
pub fn filter_smooth(
    m0: &DVector<f64>,
    p0: &DMatrix<f64>,
    steps: &[Step],
    obs: &Observation,
    offsets: &[DVector<f64>],
    ys: &[DVector<f64>],
) -> KalmanRun {
    let n_t = ys.len();
    assert_eq!(steps.len() + 1, n_t);
    let mut ll = 0.0;
    let mut fm = Vec::with_capacity(n_t);
    let mut fp = Vec::with_capacity(n_t);
    let mut pm = Vec::with_capacity(n_t);
    let mut pp = Vec::with_capacity(n_t);
    let (mut m, mut p) = (m0.clone(), p0.clone());
    for t in 0..n_t {
        if t > 0 {
            let st = &steps[t - 1];
            m = &st.a * &m + &st.offset;
            p = &st.a * &p * st.a.transpose() + &st.q;
        }
        pm.push(m.clone());
        pp.push(p.clone());
        let s = &obs.c * &p * obs.c.transpose() + &obs.r;
        let r = &ys[t] - (&obs.c * &m + &offsets[t]);
        ll += log_normal(&r, &s);
        let k = &p * obs.c.transpose() * s.try_inverse().unwrap();
        m = &m + &k * r;
        let n = m.len();
        p = (DMatrix::identity(n, n) - &k * &obs.c) * &p;
        p = (&p + p.transpose()) * 0.5;
        fm.push(m.clone());
        fp.push(p.clone());
    }
    let mut sm = fm.clone();
    let mut sp = fp.clone();
    for t in (0..n_t - 1).rev() {
        let a = &steps[t].a;
        let g = &fp[t] * a.transpose() * pp[t + 1].clone().try_inverse().unwrap();
        sm[t] = &fm[t] + &g * (&sm[t + 1] - &pm[t + 1]);
        sp[t] = &fp[t] + &g * (&sp[t + 1] - &pp[t + 1]) * g.transpose();
    }
    KalmanRun {
        log_likelihood: ll,
        filtered_means: fm,
        filtered_covs: fp,
        smoothed_means: sm,
        smoothed_covs: sp,
    }
}
