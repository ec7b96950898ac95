use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{save_steps, step_count, SimError};
use crate::expr::{eval_basis, Harmonic, PolyExpr, SdeModel};
use crate::index::{ExtIndex, StateSpace};

const CHUNK: usize = 64;
const MAX_FAILED_FRACTION: f64 = 0.01;
const REAL_TOL: f64 = 1e-9;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;
/// Differences below this (relative to `1 + |mean|`) count as inside any band,
/// so exactly-zero components compare equal to round-off.
pub const BAND_SLACK: f64 = 1e-12;

/// Whether `v` lies in `mean ± Z95·se`.
pub fn within_band(mean: f64, se: f64, v: f64) -> bool {
    (v - mean).abs() <= Z95 * se + BAND_SLACK * (1.0 + mean.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub save_every: usize,
}

/// Sample means of moment observables with per-component standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub basis: Vec<ExtIndex>,
    pub times: Vec<f64>,
    /// `mean[k][p]`: observable `p` at `times[k]`.
    pub mean: Vec<Vec<Complex64>>,
    /// Standard error of the real part in `re`, of the imaginary part in `im`.
    pub stderr: Vec<Vec<Complex64>>,
    pub paths: usize,
    pub failed: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Componentwise 95% band `(lo, hi)`.
    pub fn band(&self, k: usize, p: usize) -> (Complex64, Complex64) {
        let m = self.mean[k][p];
        let s = self.stderr[k][p] * Z95;
        (m - s, m + s)
    }

    pub fn in_band(&self, k: usize, p: usize, v: Complex64) -> bool {
        let (m, s) = (self.mean[k][p], self.stderr[k][p]);
        within_band(m.re, s.re, v.re) && within_band(m.im, s.im, v.im)
    }

    pub fn position(&self, idx: &ExtIndex) -> Option<usize> {
        self.basis.iter().position(|b| b == idx)
    }
}

/// Euler-Maruyama estimate of `E[h(x(t))]` for each label in `basis`.
pub fn euler_maruyama(
    model: &SdeModel,
    x0: &[f64],
    cfg: &McConfig,
    basis: &[ExtIndex],
) -> Result<McEstimate, SimError> {
    let space = model.space().clone();
    let raw = simulate(model, x0, cfg, basis.len(), |x, out| {
        for (o, idx) in out.iter_mut().zip(basis) {
            *o = eval_basis(&space, idx, x);
        }
    })?;
    Ok(McEstimate {
        basis: basis.to_vec(),
        times: raw.times,
        mean: raw.mean,
        stderr: raw.stderr,
        paths: cfg.paths,
        failed: raw.failed,
        seed: cfg.seed,
    })
}

/// Sample statistics of arbitrary observables, as produced by [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct RawEstimate {
    pub times: Vec<f64>,
    pub mean: Vec<Vec<Complex64>>,
    pub stderr: Vec<Vec<Complex64>>,
    pub failed: usize,
}

/// Runs the paths and averages `observe(x)` (length `n_obs`) at each save point.
///
/// Path `i` draws its normals from ChaCha8 seeded with `seed` on stream `i`,
/// and chunk statistics are merged in path order, so the output does not
/// depend on the thread schedule.
pub fn simulate<F>(model: &SdeModel, x0: &[f64], cfg: &McConfig, n_obs: usize, observe: F) -> Result<RawEstimate, SimError>
where
    F: Fn(&[f64], &mut [Complex64]) + Sync,
{
    if cfg.paths < 2 {
        return Err(SimError::InvalidArgument(format!("need at least 2 paths, got {}", cfg.paths)));
    }
    if x0.len() != model.space().dim() {
        return Err(SimError::InvalidArgument(format!(
            "initial state has {} entries, model has {}",
            x0.len(),
            model.space().dim()
        )));
    }
    let steps = step_count(cfg.t0, cfg.t1, cfg.dt)?;
    let h = (cfg.t1 - cfg.t0) / steps as f64;
    let saves = save_steps(steps, cfg.save_every);
    let dynamics = Dynamics::compile(model);

    let n_chunks = cfg.paths.div_ceil(CHUNK);
    let chunks: Vec<Result<ChunkStats, SimError>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let first = c * CHUNK;
            let last = ((c + 1) * CHUNK).min(cfg.paths);
            run_chunk(&dynamics, x0, cfg, h, &saves, first..last, n_obs, &observe)
        })
        .collect();

    let mut total: Option<ChunkStats> = None;
    for chunk in chunks {
        let chunk = chunk?;
        total = Some(match total {
            None => chunk,
            Some(acc) => acc.merge(chunk),
        });
    }
    let total = total.expect("at least one chunk");
    if total.failed as f64 > MAX_FAILED_FRACTION * cfg.paths as f64 {
        return Err(SimError::PathFailures {
            failed: total.failed,
            total: cfg.paths,
        });
    }

    let times = saves.iter().map(|&s| cfg.t0 + s as f64 * h).collect();
    let mut mean = Vec::with_capacity(saves.len());
    let mut stderr = Vec::with_capacity(saves.len());
    for row in &total.acc {
        mean.push(row.iter().map(Acc::mean).collect());
        stderr.push(row.iter().map(Acc::stderr).collect());
    }
    Ok(RawEstimate {
        times,
        mean,
        stderr,
        failed: total.failed,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_chunk<F>(
    dyn_: &Dynamics,
    x0: &[f64],
    cfg: &McConfig,
    h: f64,
    saves: &[usize],
    paths: std::ops::Range<usize>,
    n_obs: usize,
    observe: &F,
) -> Result<ChunkStats, SimError>
where
    F: Fn(&[f64], &mut [Complex64]),
{
    let n = x0.len();
    let m = paths.len();
    let channels = dyn_.noise.first().map_or(0, Vec::len);
    let mut rngs: Vec<ChaCha8Rng> = paths
        .clone()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            rng
        })
        .collect();
    let mut xs: Vec<f64> = x0.iter().copied().cycle().take(n * m).collect();
    let mut alive = vec![true; m];
    let mut failed = 0;

    let mut acc = vec![vec![Acc::default(); n_obs]; saves.len()];
    let mut obs = vec![Complex64::new(0.0, 0.0); n_obs];
    let mut drift = vec![0.0; n];
    let mut noise = vec![0.0; n * channels];
    let mut xi = vec![0.0; channels];
    let sqrt_h = h.sqrt();
    let steps = *saves.last().expect("non-empty grid");
    let mut next_save = 0;

    for step in 0..=steps {
        let t = cfg.t0 + step as f64 * h;
        if saves[next_save] == step {
            for (p, x) in xs.chunks_exact(n).enumerate() {
                if !alive[p] {
                    continue;
                }
                observe(x, &mut obs);
                for (a, v) in acc[next_save].iter_mut().zip(&obs) {
                    a.push(*v);
                }
            }
            next_save += 1;
        }
        if step == steps {
            break;
        }

        let coeffs = dyn_.time_coefficients(t);
        for (p, x) in xs.chunks_exact_mut(n).enumerate() {
            if !alive[p] {
                continue;
            }
            dyn_.eval(&coeffs, x, t, &mut drift, &mut noise)?;
            for v in xi.iter_mut() {
                *v = StandardNormal.sample(&mut rngs[p]);
            }
            for i in 0..n {
                let mut dw = 0.0;
                for c in 0..channels {
                    dw += noise[i * channels + c] * xi[c];
                }
                x[i] += drift[i] * h + dw * sqrt_h;
            }
            if !x.iter().all(|v| v.is_finite()) {
                alive[p] = false;
                failed += 1;
            }
        }
    }
    Ok(ChunkStats { acc, failed })
}

/// Drift and noise flattened for fast repeated evaluation.
struct Dynamics {
    space: StateSpace,
    /// Every polynomial of the model: drift first, then noise row-major.
    polys: Vec<Vec<(Complex64, Harmonic, ExtIndex)>>,
    drift_len: usize,
    noise: Vec<Vec<usize>>,
}

impl Dynamics {
    fn compile(model: &SdeModel) -> Self {
        let n = model.space().dim();
        let flat = |p: &PolyExpr| -> Vec<(Complex64, Harmonic, ExtIndex)> {
            p.terms().iter().map(|t| (t.coeff, t.harmonic, t.basis.clone())).collect()
        };
        let mut polys: Vec<_> = (0..n).map(|i| flat(model.drift(i))).collect();
        let mut noise = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(model.channels());
            for c in 0..model.channels() {
                row.push(polys.len());
                polys.push(flat(model.noise(i, c)));
            }
            noise.push(row);
        }
        Dynamics {
            space: model.space().clone(),
            polys,
            drift_len: n,
            noise,
        }
    }

    fn time_coefficients(&self, t: f64) -> Vec<Vec<Complex64>> {
        self.polys
            .iter()
            .map(|terms| terms.iter().map(|(c, h, _)| c * h.value(t)).collect())
            .collect()
    }

    fn eval_one(&self, k: usize, coeffs: &[Vec<Complex64>], x: &[f64]) -> Complex64 {
        self.polys[k]
            .iter()
            .zip(&coeffs[k])
            .map(|((_, _, b), c)| if b.is_zero() { *c } else { c * eval_basis(&self.space, b, x) })
            .sum()
    }

    fn eval(&self, coeffs: &[Vec<Complex64>], x: &[f64], t: f64, drift: &mut [f64], noise: &mut [f64]) -> Result<(), SimError> {
        for (i, d) in drift.iter_mut().enumerate().take(self.drift_len) {
            *d = self.real(self.eval_one(i, coeffs, x), i, t)?;
        }
        let mut w = 0;
        for (i, row) in self.noise.iter().enumerate() {
            for &k in row {
                noise[w] = self.real(self.eval_one(k, coeffs, x), i, t)?;
                w += 1;
            }
        }
        Ok(())
    }

    fn real(&self, v: Complex64, state: usize, t: f64) -> Result<f64, SimError> {
        if v.im.abs() > REAL_TOL * (1.0 + v.re.abs()) {
            return Err(SimError::ModelNotReal {
                state: self.space.names()[state].clone(),
                t,
                imag: v.im,
            });
        }
        Ok(v.re)
    }
}

/// Running mean and sum of squared deviations, separately for re and im.
#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    n: u64,
    mean: Complex64,
    m2_re: f64,
    m2_im: f64,
}

impl Acc {
    fn push(&mut self, v: Complex64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        let d2 = v - self.mean;
        self.m2_re += d.re * d2.re;
        self.m2_im += d.im * d2.im;
    }

    fn merge(self, other: Acc) -> Acc {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        let cross = self.n as f64 * w;
        Acc {
            n,
            mean: self.mean + d * w,
            m2_re: self.m2_re + other.m2_re + d.re * d.re * cross,
            m2_im: self.m2_im + other.m2_im + d.im * d.im * cross,
        }
    }

    fn mean(&self) -> Complex64 {
        self.mean
    }

    fn stderr(&self) -> Complex64 {
        if self.n < 2 {
            return Complex64::new(0.0, 0.0);
        }
        let n = self.n as f64;
        let scale = 1.0 / ((n - 1.0) * n);
        Complex64::new((self.m2_re * scale).sqrt(), (self.m2_im * scale).sqrt())
    }
}

struct ChunkStats {
    acc: Vec<Vec<Acc>>,
    failed: usize,
}

impl ChunkStats {
    fn merge(self, other: ChunkStats) -> ChunkStats {
        let acc = self
            .acc
            .into_iter()
            .zip(other.acc)
            .map(|(a, b)| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect())
            .collect();
        ChunkStats {
            acc,
            failed: self.failed + other.failed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_model;
    use crate::models;
    use crate::sim::initial_moments;

    fn cfg(paths: usize, t1: f64, dt: f64) -> McConfig {
        McConfig {
            t0: 0.0,
            t1,
            dt,
            paths,
            seed: 7,
            save_every: 10,
        }
    }

    #[test]
    fn welford_merge_matches_two_pass() {
        let data: Vec<Complex64> = (0..37).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64).sqrt())).collect();
        let mut a = Acc::default();
        let mut b = Acc::default();
        for v in &data[..20] {
            a.push(*v);
        }
        for v in &data[20..] {
            b.push(*v);
        }
        let m = a.merge(b);
        let n = data.len() as f64;
        let mean: Complex64 = data.iter().sum::<Complex64>() / n;
        let var_re = data.iter().map(|v| (v.re - mean.re).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((m.mean() - mean).norm() < 1e-14);
        assert!((m.stderr().re - (var_re / n).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn ou_mean_within_three_stderr() {
        let model = parse_model(models::ORNSTEIN_UHLENBECK).unwrap();
        let basis = model.space().enumerate_upto(1).unwrap();
        let est = euler_maruyama(&model, &[1.0], &cfg(10_000, 1.0, 1e-3), &basis).unwrap();
        let k = est.times.len() - 1;
        let want = (-1.0f64).exp();
        assert!((est.mean[k][0].re - want).abs() < 3.0 * est.stderr[k][0].re);
    }

    #[test]
    fn initial_estimate_is_exact_and_runs_repeat() {
        let model = parse_model(models::PENDULUM).unwrap();
        let basis = model.space().enumerate_upto(2).unwrap();
        let x0 = [0.4, 0.2];
        let c = cfg(100, 0.01, 1e-3);
        let a = euler_maruyama(&model, &x0, &c, &basis).unwrap();
        let b = euler_maruyama(&model, &x0, &c, &basis).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mean[0], initial_moments(model.space(), &x0, &basis));
        assert_eq!(a.times, vec![0.0, 0.01]);
    }

    #[test]
    fn sine_from_phasor_matches_direct_average() {
        let model = parse_model(models::PENDULUM).unwrap();
        let raw = simulate(&model, &[0.5, 0.0], &cfg(500, 0.2, 1e-3), 2, |x, out| {
            out[0] = Complex64::from_polar(1.0, x[0]);
            out[1] = Complex64::new(x[0].sin(), 0.0);
        })
        .unwrap();
        for row in &raw.mean {
            assert!((row[0].im - row[1].re).abs() < 1e-12);
        }
    }

    #[test]
    fn imaginary_drift_is_rejected() {
        let model = parse_model("states: x\ndrift x = 2j*x\n").unwrap();
        let err = simulate(&model, &[1.0], &cfg(4, 0.01, 1e-3), 0, |_, _| {}).unwrap_err();
        assert!(matches!(err, SimError::ModelNotReal { .. }));
    }

    #[test]
    fn exploding_paths_abort() {
        let model = parse_model("states: x\ndrift x = x^3\n").unwrap();
        let err = simulate(&model, &[10.0], &cfg(8, 1.0, 1e-2), 0, |_, _| {}).unwrap_err();
        assert_eq!(err, SimError::PathFailures { failed: 8, total: 8 });
    }

    #[test]
    fn rejects_single_path() {
        let model = parse_model(models::ORNSTEIN_UHLENBECK).unwrap();
        assert!(simulate(&model, &[1.0], &cfg(1, 0.1, 1e-2), 0, |_, _| {}).is_err());
    }
}
