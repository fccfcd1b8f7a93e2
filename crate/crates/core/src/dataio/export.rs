//! Headered CSV exports. Floats are written in shortest round-trip form.

use std::io::Write;

use crate::error::Result;
use crate::evalx::{FoldResult, GridRow};
use crate::relevance::RelevanceProfile;
use crate::tpmodel::Trajectory;

fn num(v: f64) -> String {
    format!("{v}")
}

/// `step, t, <mean per channel>, var_<channel>...`. `channels` names the
/// spatial channels; missing names fall back to `x1, x2, ...`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, channels: &[String], out: W) -> Result<()> {
    let d = traj.spatial_dim();
    let names: Vec<String> = (0..d)
        .map(|k| channels.get(k).cloned().unwrap_or_else(|| format!("x{}", k + 1)))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string(), "t".to_string()];
    header.extend(names.iter().cloned());
    header.extend(names.iter().map(|n| format!("var_{n}")));
    w.write_record(&header)?;
    for n in 0..traj.len() {
        let mut rec = vec![n.to_string(), num(traj.times[n])];
        rec.extend(traj.means[n].iter().map(|&v| num(v)));
        rec.extend((0..d).map(|k| num(traj.covs[n][(k, k)])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `step, frame_1, ..., frame_P`.
pub fn write_profile_csv<W: Write>(profile: &RelevanceProfile, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let p = profile.num_frames();
    let mut header = vec!["step".to_string()];
    header.extend((1..=p).map(|j| format!("frame_{j}")));
    w.write_record(&header)?;
    for (n, row) in profile.weights().row_iter().enumerate() {
        let mut rec = vec![n.to_string()];
        rec.extend(row.iter().map(|&v| num(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One line per grid cell; failed cells carry `failed` in `flags` and empty metrics.
pub fn write_grid_csv<W: Write>(rows: &[GridRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell_x", "cell_y", "path_length", "start_err", "end_err", "constraint_err", "flags"])?;
    for r in rows {
        let mut rec = vec![num(r.cell_x), num(r.cell_y)];
        match &r.metrics {
            Some(m) => {
                rec.extend([num(m.path_length), num(m.start_error), num(m.end_error), m.constraint_error.to_string()]);
                rec.push(String::new());
            }
            None => {
                rec.extend(vec![String::new(); 4]);
                rec.push("failed".into());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `alpha, loss` in evaluation order.
pub fn write_alpha_trace_csv<W: Write>(evaluations: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "loss"])?;
    for &(a, l) in evaluations {
        w.write_record([num(a), num(l)])?;
    }
    w.flush()?;
    Ok(())
}

/// `held_out, rmse, alpha` per leave-one-out fold.
pub fn write_folds_csv<W: Write>(folds: &[FoldResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["held_out", "rmse", "alpha"])?;
    for f in folds {
        w.write_record([f.held_out.to_string(), num(f.rmse), f.alpha.map(num).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}
