use num_complex::Complex64;

use super::{save_steps, step_count, SimError};
use crate::closure::ClosedMomentSystem;
use crate::index::ExtIndex;

/// Moment values sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub basis: Vec<ExtIndex>,
    pub times: Vec<f64>,
    /// `values[k][p]` is moment `p` at `times[k]`.
    pub values: Vec<Vec<Complex64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, p: usize) -> impl Iterator<Item = Complex64> + '_ {
        self.values.iter().map(move |row| row[p])
    }

    pub fn position(&self, idx: &ExtIndex) -> Option<usize> {
        self.basis.iter().position(|b| b == idx)
    }

    pub fn last(&self) -> Option<(f64, &[Complex64])> {
        Some((*self.times.last()?, self.values.last()?.as_slice()))
    }
}

/// Classical fixed-step RK4 on the closed system.
pub fn integrate_closed(
    closed: &ClosedMomentSystem,
    nu0: &[Complex64],
    t0: f64,
    t1: f64,
    dt: f64,
    save_every: usize,
) -> Result<Trajectory, SimError> {
    let n = closed.dim();
    if nu0.len() != n {
        return Err(SimError::InvalidArgument(format!(
            "initial vector has {} entries, system has {n}",
            nu0.len()
        )));
    }
    let steps = step_count(t0, t1, dt)?;
    let h = (t1 - t0) / steps as f64;
    let saves = save_steps(steps, save_every);

    let zero = Complex64::new(0.0, 0.0);
    let mut nu = nu0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
    let mut tmp = vec![zero; n];

    let mut times = Vec::with_capacity(saves.len());
    let mut values = Vec::with_capacity(saves.len());
    let mut next_save = 0;
    let mut last_finite = t0;

    for step in 0..=steps {
        let t = t0 + step as f64 * h;
        if !nu.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(SimError::Diverged { last_finite });
        }
        last_finite = t;
        if saves.get(next_save) == Some(&step) {
            times.push(t);
            values.push(nu.clone());
            next_save += 1;
        }
        if step == steps {
            break;
        }

        closed.rhs_into(t, &nu, &mut k1);
        axpy(&mut tmp, &nu, &k1, h / 2.0);
        closed.rhs_into(t + h / 2.0, &tmp, &mut k2);
        axpy(&mut tmp, &nu, &k2, h / 2.0);
        closed.rhs_into(t + h / 2.0, &tmp, &mut k3);
        axpy(&mut tmp, &nu, &k3, h);
        closed.rhs_into(t + h, &tmp, &mut k4);
        for i in 0..n {
            nu[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
        }
    }

    Ok(Trajectory {
        basis: closed.open().basis().to_vec(),
        times,
        values,
    })
}

fn axpy(out: &mut [Complex64], x: &[Complex64], k: &[Complex64], a: f64) {
    for ((o, x), k) in out.iter_mut().zip(x).zip(k) {
        *o = x + k * a;
    }
}
