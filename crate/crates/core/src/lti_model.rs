//! Plant, residual generator, trajectories and signal stacking.
//!
//! Time indexing follows the data-collection convention throughout: a trace of
//! horizon `T` stores `x(0..T)` and `y(0..T)`, while `u`, `d` and `f` hold the
//! `T - 1` samples `0..T-1` that drive the state from `x(0)` to `x(T-1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{numerical_rank, Mat, Tolerance, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub r: usize,
}

/// Ground-truth plant `x+ = A x + B u + E d + B f`, `y = C x`.
#[derive(Debug, Clone)]
pub struct SystemRealization {
    a: Mat,
    b: Mat,
    c: Mat,
    e: Mat,
}

impl SystemRealization {
    /// Validates dimensions and that `E` has full column rank.
    pub fn new(a: Mat, b: Mat, c: Mat, e: Mat, tol: &Tolerance) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::dims("A", "square n x n with n > 0", format!("{:?}", a.shape())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::dims("B", format!("{n} x m, m > 0"), format!("{:?}", b.shape())));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::dims("C", format!("p x {n}, p > 0"), format!("{:?}", c.shape())));
        }
        if e.nrows() != n {
            return Err(Error::dims("E", format!("{n} x r"), format!("{:?}", e.shape())));
        }
        let rank_e = numerical_rank(&e, tol);
        if rank_e != e.ncols() {
            return Err(Error::InvalidSystem(format!(
                "E must have full column rank: rank {rank_e}, r = {}",
                e.ncols()
            )));
        }
        if [&a, &b, &c, &e].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidSystem("non-finite entry".into()));
        }
        Ok(Self { a, b, c, e })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn e(&self) -> &Mat {
        &self.e
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.a.nrows(),
            m: self.b.ncols(),
            p: self.c.nrows(),
            r: self.e.ncols(),
        }
    }

    /// Copy with the output matrix replaced (used for perturbation studies).
    pub fn with_output_matrix(&self, c: Mat) -> Result<Self> {
        if c.shape() != self.c.shape() {
            return Err(Error::dims("C", format!("{:?}", self.c.shape()), format!("{:?}", c.shape())));
        }
        Ok(Self { c, ..self.clone() })
    }
}

/// Residual generator `z+ = A_uio z + B_u u + B_y y`, `xhat = z + D y`,
/// `r = y - C xhat`.
#[derive(Debug, Clone)]
pub struct UioMatrices {
    pub a_uio: Mat,
    pub b_u: Mat,
    pub b_y: Mat,
    pub d_uio: Mat,
    pub c: Mat,
}

impl UioMatrices {
    pub fn new(a_uio: Mat, b_u: Mat, b_y: Mat, d_uio: Mat, c: Mat) -> Result<Self> {
        let n = a_uio.nrows();
        if n == 0 || a_uio.ncols() != n {
            return Err(Error::dims("A_uio", "square", format!("{:?}", a_uio.shape())));
        }
        let p = c.nrows();
        if c.ncols() != n || p == 0 {
            return Err(Error::dims("C", format!("p x {n}"), format!("{:?}", c.shape())));
        }
        if b_u.nrows() != n || b_u.ncols() == 0 {
            return Err(Error::dims("B_u", format!("{n} x m"), format!("{:?}", b_u.shape())));
        }
        if b_y.shape() != (n, p) {
            return Err(Error::dims("B_y", format!("{n} x {p}"), format!("{:?}", b_y.shape())));
        }
        if d_uio.shape() != (n, p) {
            return Err(Error::dims("D_uio", format!("{n} x {p}"), format!("{:?}", d_uio.shape())));
        }
        Ok(Self {
            a_uio,
            b_u,
            b_y,
            d_uio,
            c,
        })
    }

    pub fn n(&self) -> usize {
        self.a_uio.nrows()
    }
    pub fn m(&self) -> usize {
        self.b_u.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    pub u: Vec<Vector>,
    pub d: Vec<Vector>,
    pub f: Vec<Vector>,
    pub x: Vec<Vector>,
    pub y: Vec<Vector>,
}

impl SignalTrace {
    pub fn horizon(&self) -> usize {
        self.x.len()
    }

    /// Checks the length convention and per-sample dimensions.
    pub fn validate(&self) -> Result<Dims> {
        let t = self.horizon();
        if t == 0 {
            return Err(Error::HorizonTooShort { required: 1, actual: 0 });
        }
        if self.y.len() != t {
            return Err(Error::dims("trace y", t, self.y.len()));
        }
        for (name, seq) in [("trace u", &self.u), ("trace d", &self.d), ("trace f", &self.f)] {
            if seq.len() != t - 1 {
                return Err(Error::dims(name, t - 1, seq.len()));
            }
        }
        let width = |seq: &[Vector], fallback: usize| seq.first().map_or(fallback, |v| v.len());
        let dims = Dims {
            n: width(&self.x, 0),
            m: width(&self.u, 0),
            p: width(&self.y, 0),
            r: width(&self.d, 0),
        };
        let uniform = |seq: &[Vector], w: usize| seq.iter().all(|v| v.len() == w);
        if !uniform(&self.x, dims.n)
            || !uniform(&self.y, dims.p)
            || !uniform(&self.u, dims.m)
            || !uniform(&self.d, dims.r)
            || !uniform(&self.f, dims.m)
        {
            return Err(Error::dims("trace", "uniform sample widths", "ragged samples"));
        }
        Ok(dims)
    }
}

/// `omega_N(k) = [omega(k); ...; omega(k+N-1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedVector {
    pub start: usize,
    pub depth: usize,
    pub value: Vector,
}

fn check_len(context: &'static str, seq: &[Vector], needed: usize, width: usize) -> Result<()> {
    if seq.len() < needed {
        return Err(Error::dims(context, format!("at least {needed} samples"), seq.len()));
    }
    if let Some(bad) = seq.iter().take(needed).find(|v| v.len() != width) {
        return Err(Error::dims(context, width, bad.len()));
    }
    Ok(())
}

/// Simulates the plant for `horizon` samples. Missing disturbance or fault
/// sequences are taken as zero.
pub fn simulate_plant(
    sys: &SystemRealization,
    x0: &Vector,
    u: &[Vector],
    d: Option<&[Vector]>,
    f: Option<&[Vector]>,
    horizon: usize,
) -> Result<SignalTrace> {
    let Dims { n, m, r, .. } = sys.dims();
    if horizon == 0 {
        return Err(Error::HorizonTooShort { required: 1, actual: 0 });
    }
    if x0.len() != n {
        return Err(Error::dims("x0", n, x0.len()));
    }
    let steps = horizon - 1;
    check_len("u", u, steps, m)?;
    let d: Vec<Vector> = match d {
        Some(d) => {
            check_len("d", d, steps, r)?;
            d[..steps].to_vec()
        }
        None => vec![Vector::zeros(r); steps],
    };
    let f: Vec<Vector> = match f {
        Some(f) => {
            check_len("f", f, steps, m)?;
            f[..steps].to_vec()
        }
        None => vec![Vector::zeros(m); steps],
    };
    let u = u[..steps].to_vec();

    let mut x = Vec::with_capacity(horizon);
    x.push(x0.clone());
    for k in 0..steps {
        let next = sys.a() * &x[k] + sys.b() * (&u[k] + &f[k]) + sys.e() * &d[k];
        x.push(next);
    }
    let y = x.iter().map(|xk| sys.c() * xk).collect();
    Ok(SignalTrace { u, d, f, x, y })
}

/// Amplitudes of a seeded uniform experiment: every entry of `x(0)`, `u` and
/// `d` is drawn from `(-a, a)`. A zero amplitude gives an all-zero signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub x0_amplitude: f64,
    pub u_amplitude: f64,
    pub d_amplitude: f64,
}

impl Excitation {
    fn validate(&self) -> Result<()> {
        for (name, a) in [
            ("x0_amplitude", self.x0_amplitude),
            ("u_amplitude", self.u_amplitude),
            ("d_amplitude", self.d_amplitude),
        ] {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::InvalidExcitation(format!("{name} must be finite and nonnegative, got {a}")));
            }
        }
        Ok(())
    }
}

/// `len` samples of width `width`, entries uniform in `(-amplitude, amplitude)`.
pub fn uniform_samples(rng: &mut ChaCha8Rng, len: usize, width: usize, amplitude: f64) -> Vec<Vector> {
    if amplitude == 0.0 {
        return vec![Vector::zeros(width); len];
    }
    (0..len)
        .map(|_| Vector::from_iterator(width, (0..width).map(|_| rng.random_range(-amplitude..amplitude))))
        .collect()
}

/// Seeded experiment: draws `x(0)`, then `u`, then `d` from one ChaCha8
/// stream and simulates. `f` defaults to zero.
pub fn random_experiment(
    sys: &SystemRealization,
    exc: &Excitation,
    seed: u64,
    horizon: usize,
    f: Option<&[Vector]>,
) -> Result<SignalTrace> {
    exc.validate()?;
    let Dims { n, m, r, .. } = sys.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = horizon.saturating_sub(1);
    let x0 = uniform_samples(&mut rng, 1, n, exc.x0_amplitude).remove(0);
    let u = uniform_samples(&mut rng, steps, m, exc.u_amplitude);
    let d = uniform_samples(&mut rng, steps, r, exc.d_amplitude);
    simulate_plant(sys, &x0, &u, Some(&d), f, horizon)
}

#[derive(Debug, Clone)]
pub struct ResidualRun {
    pub z: Vec<Vector>,
    pub xhat: Vec<Vector>,
    pub residuals: Vec<Vector>,
}

/// Runs the residual generator over the output samples `y`; `u` must cover at
/// least `y.len() - 1` steps. `z0` defaults to zero.
pub fn run_residual_generator(
    uio: &UioMatrices,
    z0: Option<&Vector>,
    u: &[Vector],
    y: &[Vector],
) -> Result<ResidualRun> {
    let (n, m, p) = (uio.n(), uio.m(), uio.p());
    let t = y.len();
    check_len("y", y, t, p)?;
    check_len("u", u, t.saturating_sub(1), m)?;
    let mut z = match z0 {
        Some(z0) if z0.len() != n => return Err(Error::dims("z0", n, z0.len())),
        Some(z0) => z0.clone(),
        None => Vector::zeros(n),
    };
    let mut zs = Vec::with_capacity(t);
    let mut xhat = Vec::with_capacity(t);
    let mut residuals = Vec::with_capacity(t);
    for k in 0..t {
        let xh = &z + &uio.d_uio * &y[k];
        residuals.push(&y[k] - &uio.c * &xh);
        xhat.push(xh);
        zs.push(z.clone());
        if k + 1 < t {
            z = &uio.a_uio * &z + &uio.b_u * &u[k] + &uio.b_y * &y[k];
        }
    }
    Ok(ResidualRun {
        z: zs,
        xhat,
        residuals,
    })
}

pub fn stack(signal: &[Vector], start: usize, depth: usize) -> Result<StackedVector> {
    if depth == 0 || start + depth > signal.len() {
        return Err(Error::OutOfRange {
            start,
            depth,
            len: signal.len(),
        });
    }
    let width = signal[start].len();
    let mut value = Vector::zeros(width * depth);
    for (i, sample) in signal[start..start + depth].iter().enumerate() {
        if sample.len() != width {
            return Err(Error::dims("stack", width, sample.len()));
        }
        value.rows_mut(i * width, width).copy_from(sample);
    }
    Ok(StackedVector { start, depth, value })
}

/// `e(k) = x(k) - xhat(k)` over the common prefix... lengths must agree.
pub fn estimation_error(trace: &SignalTrace, xhat: &[Vector]) -> Result<Vec<Vector>> {
    if xhat.len() != trace.x.len() {
        return Err(Error::dims("xhat", trace.x.len(), xhat.len()));
    }
    trace
        .x
        .iter()
        .zip(xhat)
        .map(|(x, xh)| {
            if x.len() != xh.len() {
                Err(Error::dims("xhat sample", x.len(), xh.len()))
            } else {
                Ok(x - xh)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn scalar_sys() -> SystemRealization {
        SystemRealization::new(
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            &Tolerance::default(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_rank_deficient_e() {
        let e = dmatrix![1.0, 1.0; 0.0, 0.0];
        let err = SystemRealization::new(
            Mat::identity(2, 2),
            dmatrix![1.0; 0.0],
            Mat::identity(2, 2),
            e,
            &Tolerance::default(),
        );
        assert!(matches!(err, Err(Error::InvalidSystem(_))));
    }

    #[test]
    fn allows_empty_disturbance() {
        let sys = SystemRealization::new(
            Mat::identity(2, 2),
            dmatrix![1.0; 0.0],
            Mat::identity(2, 2),
            Mat::zeros(2, 0),
            &Tolerance::default(),
        )
        .unwrap();
        assert_eq!(sys.dims().r, 0);
    }

    #[test]
    fn scalar_integrator_by_hand() {
        let u = vec![dvector![1.0], dvector![1.0]];
        let zero = vec![dvector![0.0], dvector![0.0]];
        let tr = simulate_plant(&scalar_sys(), &dvector![0.0], &u, Some(&zero), Some(&zero), 3).unwrap();
        let xs: Vec<f64> = tr.x.iter().map(|v| v[0]).collect();
        let ys: Vec<f64> = tr.y.iter().map(|v| v[0]).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0]);
        assert_eq!(ys, vec![0.0, 1.0, 2.0]);
        assert_eq!(tr.validate().unwrap(), Dims { n: 1, m: 1, p: 1, r: 1 });
    }

    #[test]
    fn zero_dynamics_forget_initial_state() {
        let sys = SystemRealization::new(
            Mat::zeros(2, 2),
            Mat::zeros(2, 1),
            Mat::identity(2, 2),
            dmatrix![1.0; 0.0],
            &Tolerance::default(),
        )
        .unwrap();
        let u = vec![dvector![3.0]; 4];
        let d = vec![dvector![0.0]; 4];
        let f = vec![dvector![7.0]; 4];
        let tr = simulate_plant(&sys, &dvector![1.0, 2.0], &u, Some(&d), Some(&f), 5).unwrap();
        assert_eq!(tr.x[0], dvector![1.0, 2.0]);
        assert!(tr.x[1..].iter().all(|x| x.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn simulate_checks_lengths() {
        let u = vec![dvector![1.0]];
        assert!(simulate_plant(&scalar_sys(), &dvector![0.0], &u, None, None, 3).is_err());
        assert!(simulate_plant(&scalar_sys(), &dvector![0.0, 1.0], &u, None, None, 2).is_err());
        assert!(matches!(
            simulate_plant(&scalar_sys(), &dvector![0.0], &u, None, None, 0),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn zero_inputs_give_zero_residual() {
        let uio = UioMatrices::new(
            dmatrix![0.0, 1.0; 0.0, 0.0],
            dmatrix![1.0; 0.0],
            dmatrix![0.5; 0.5],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap();
        let u = vec![dvector![0.0]; 5];
        let y = vec![dvector![0.0]; 6];
        let run = run_residual_generator(&uio, None, &u, &y).unwrap();
        assert_eq!(run.residuals.len(), 6);
        assert!(run.residuals.iter().all(|r| r[0] == 0.0));
    }

    #[test]
    fn stacking() {
        let s = vec![dvector![1.0], dvector![2.0], dvector![3.0]];
        assert_eq!(stack(&s, 1, 1).unwrap().value, dvector![2.0]);
        assert_eq!(stack(&s, 0, 3).unwrap().value, dvector![1.0, 2.0, 3.0]);
        assert_eq!(stack(&s, 1, 2).unwrap().value, dvector![2.0, 3.0]);
        assert!(matches!(stack(&s, 2, 2), Err(Error::OutOfRange { .. })));
        let v = vec![dvector![1.0, 2.0], dvector![3.0, 4.0]];
        assert_eq!(stack(&v, 0, 2).unwrap().value, dvector![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn estimation_error_is_pointwise() {
        let u = vec![dvector![1.0]];
        let mut tr = simulate_plant(&scalar_sys(), &dvector![1.0], &u, None, None, 2).unwrap();
        tr.x = vec![dvector![1.0], dvector![2.0]];
        let e = estimation_error(&tr, &[dvector![0.0], dvector![0.0]]).unwrap();
        assert_eq!(e, vec![dvector![1.0], dvector![2.0]]);
        let e = estimation_error(&tr, &tr.x.clone()).unwrap();
        assert!(e.iter().all(|v| v[0] == 0.0));
    }
}
