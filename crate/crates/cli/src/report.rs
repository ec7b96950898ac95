use mclose_core::sim::within_band;
use mclose_core::{McEstimate, SdeModel, StateKind, Trajectory};

use crate::RunConfig;

/// Agreement between a closed trajectory and the Monte Carlo estimate for one
/// observable.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub label: String,
    /// `‖closed − mc‖₂ / ‖mc‖₂` over the save grid.
    pub rel_l2: f64,
    /// Share of save points where the closed value is inside the 95% band.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub header: Vec<String>,
    pub moments: Vec<MomentReport>,
    pub closed_seconds: f64,
    pub mc_seconds: f64,
}

#[derive(Clone, Copy)]
enum Part {
    Full,
    Re,
    Im,
}

impl CompareReport {
    pub fn new(model: &SdeModel, cfg: &RunConfig, traj: &Trajectory, est: &McEstimate) -> CompareReport {
        assert_eq!(traj.times, est.times, "closed and Monte Carlo grids differ");
        let space = model.space();
        let header = vec![
            format!("model: {}", model.name),
            format!("scheme: {}  order: {}  delta: {:e}", cfg.scheme.short_name(), cfg.order, cfg.delta),
            format!(
                "grid: t0={} t1={} dt={:e} save_every={} points={}",
                cfg.t0,
                cfg.t1,
                cfg.dt,
                cfg.save_every,
                traj.times.len()
            ),
            format!("monte carlo: paths={} seed={} failed={}", est.paths, est.seed, est.failed),
        ];

        let mut moments: Vec<MomentReport> = traj
            .basis
            .iter()
            .enumerate()
            .map(|(p, idx)| measure(space.moment_label(idx), traj, est, p, Part::Full))
            .collect();
        for (i, name) in space.names().iter().enumerate() {
            if space.kind(i) != StateKind::Angle {
                continue;
            }
            if let Some(p) = traj.position(&space.unit(i)) {
                moments.push(measure(format!("E[sin({name})]"), traj, est, p, Part::Im));
                moments.push(measure(format!("E[cos({name})]"), traj, est, p, Part::Re));
            }
        }
        CompareReport {
            header,
            moments,
            closed_seconds: 0.0,
            mc_seconds: 0.0,
        }
    }

    pub fn get(&self, label: &str) -> Option<&MomentReport> {
        self.moments.iter().find(|m| m.label == label)
    }

    /// Deterministic text form; timings are left out.
    pub fn render(&self) -> String {
        let width = self.moments.iter().map(|m| m.label.chars().count()).max().unwrap_or(0).max(6);
        let mut s = String::new();
        for line in &self.header {
            s.push_str(line);
            s.push('\n');
        }
        s.push_str(&format!("{:<width$}  {:>12}  {:>8}\n", "moment", "rel_l2", "coverage"));
        for m in &self.moments {
            s.push_str(&format!("{:<width$}  {:>12.4e}  {:>8.4}\n", m.label, m.rel_l2, m.coverage));
        }
        s
    }
}

fn measure(label: String, traj: &Trajectory, est: &McEstimate, p: usize, part: Part) -> MomentReport {
    let mut diff2 = 0.0;
    let mut ref2 = 0.0;
    let mut inside = 0usize;
    for (k, row) in traj.values.iter().enumerate() {
        let (c, m, s) = (row[p], est.mean[k][p], est.stderr[k][p]);
        let (d, r, ok) = match part {
            Part::Full => ((c - m).norm_sqr(), m.norm_sqr(), est.in_band(k, p, c)),
            Part::Re => ((c.re - m.re).powi(2), m.re * m.re, within_band(m.re, s.re, c.re)),
            Part::Im => ((c.im - m.im).powi(2), m.im * m.im, within_band(m.im, s.im, c.im)),
        };
        diff2 += d;
        ref2 += r;
        inside += usize::from(ok);
    }
    let rel_l2 = if ref2 > 0.0 {
        (diff2 / ref2).sqrt()
    } else if diff2 == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let n = traj.values.len().max(1);
    MomentReport {
        label,
        rel_l2,
        coverage: inside as f64 / n as f64,
    }
}

