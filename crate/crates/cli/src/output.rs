use mclose_core::{McEstimate, StateSpace, Trajectory};

use crate::CliError;

/// Imaginary parts at or below this are treated as round-off when deciding
/// which columns to write.
pub const IMAG_EPS: f64 = 1e-12;

fn show_imag(rows: &[Vec<mclose_core::Complex64>], p: usize, force: bool) -> bool {
    force || rows.iter().any(|r| r[p].im.abs() > IMAG_EPS)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Output(e.to_string()))
}

/// `t,re:E[..],im:E[..],...`, imaginary columns only where needed or forced.
pub fn trajectory_csv(traj: &Trajectory, space: &StateSpace, imag: bool) -> Result<String, CliError> {
    let cols: Vec<(usize, bool)> = (0..traj.basis.len())
        .map(|p| (p, show_imag(&traj.values, p, imag)))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    for &(p, im) in &cols {
        let label = space.moment_label(&traj.basis[p]);
        header.push(format!("re:{label}"));
        if im {
            header.push(format!("im:{label}"));
        }
    }
    w.write_record(&header)?;
    for (t, row) in traj.times.iter().zip(&traj.values) {
        let mut rec = vec![t.to_string()];
        for &(p, im) in &cols {
            rec.push(row[p].re.to_string());
            if im {
                rec.push(row[p].im.to_string());
            }
        }
        w.write_record(&rec)?;
    }
    finish(w)
}

/// Like [`trajectory_csv`] with `se:`, `lo:` and `hi:` columns after each value.
pub fn mc_csv(est: &McEstimate, space: &StateSpace, imag: bool) -> Result<String, CliError> {
    let cols: Vec<(usize, bool)> = (0..est.basis.len())
        .map(|p| (p, show_imag(&est.mean, p, imag)))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    for &(p, im) in &cols {
        let label = space.moment_label(&est.basis[p]);
        let parts: &[&str] = if im { &["re", "im"] } else { &["re"] };
        for part in parts {
            let name = format!("{part}:{label}");
            header.push(name.clone());
            header.push(format!("se:{name}"));
            header.push(format!("lo:{name}"));
            header.push(format!("hi:{name}"));
        }
    }
    w.write_record(&header)?;
    for (k, t) in est.times.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        for &(p, im) in &cols {
            let (m, s) = (est.mean[k][p], est.stderr[k][p]);
            let (lo, hi) = est.band(k, p);
            rec.extend([m.re, s.re, lo.re, hi.re].map(|v| v.to_string()));
            if im {
                rec.extend([m.im, s.im, lo.im, hi.im].map(|v| v.to_string()));
            }
        }
        w.write_record(&rec)?;
    }
    finish(w)
}
