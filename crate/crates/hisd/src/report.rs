//! CSV and SVG emission. CSVs are the data contract: header row, scientific
//! notation with 12 significant digits, trailing newline, byte-identical
//! across repeated runs. The SVG plots are an optional convenience.

use std::io::Write;

use crate::error::Result;
use crate::lab::{ConvergenceReport, DifferenceSeries, ResidualOrder, ResidualOrderStudy};
use crate::scheme::Trajectory;

/// Scientific notation with 12 significant digits.
pub fn format_sci(x: f64) -> String {
    format!("{x:.11e}")
}

/// Columns: t, the d state components, then the k direction vectors.
pub fn write_trajectory_csv(traj: &Trajectory, out: &mut dyn Write) -> Result<()> {
    let dim = traj.states[0].x.len();
    let k = traj.config.index_k;
    let mut header = vec!["t".to_owned()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    for vi in 1..=k {
        header.extend((1..=dim).map(|i| format!("v{vi}_{i}")));
    }
    writeln!(out, "{}", header.join(","))?;
    for state in &traj.states {
        let mut row = vec![format_sci(state.time)];
        row.extend(state.x.iter().map(|&a| format_sci(a)));
        for i in 0..k {
            row.extend(state.frame.column(i).iter().map(|&a| format_sci(a)));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Columns: tau, err_x, cr_x, err_v1, cr_v1, ... with the rate printed on
/// the row of the smaller step; the first row's rate cells are blank.
pub fn write_convergence_csv(report: &ConvergenceReport, out: &mut dyn Write) -> Result<()> {
    let k = report.directions();
    let mut header = vec!["tau".to_owned(), "err_x".to_owned(), "cr_x".to_owned()];
    for i in 1..=k {
        header.push(format!("err_v{i}"));
        header.push(format!("cr_v{i}"));
    }
    writeln!(out, "{}", header.join(","))?;
    for (row, &tau) in report.taus.iter().enumerate() {
        let mut cells = vec![format_sci(tau), format_sci(report.errors_x[row])];
        cells.push(if row == 0 {
            String::new()
        } else {
            format_sci(report.rates_x[row - 1])
        });
        for i in 0..k {
            cells.push(format_sci(report.errors_v[row][i]));
            cells.push(if row == 0 {
                String::new()
            } else {
                format_sci(report.rates_v[row - 1][i])
            });
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Columns: t, dx, dv1.
pub fn write_difference_csv(series: &DifferenceSeries, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "t,dx,dv1")?;
    for n in 0..series.t_grid.len() {
        writeln!(
            out,
            "{},{},{}",
            format_sci(series.t_grid[n]),
            format_sci(series.dx[n]),
            format_sci(series.dv1[n])
        )?;
    }
    Ok(())
}

/// Columns: tau, max_residual_x, max_residual_v.
pub fn write_residual_csv(study: &ResidualOrderStudy, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "tau,max_residual_x,max_residual_v")?;
    for row in 0..study.taus.len() {
        writeln!(
            out,
            "{},{},{}",
            format_sci(study.taus[row]),
            format_sci(study.max_x[row]),
            format_sci(study.max_v[row])
        )?;
    }
    Ok(())
}

pub fn residual_order_label(order: ResidualOrder) -> String {
    match order {
        ResidualOrder::Exact => "exact".to_owned(),
        ResidualOrder::Slope(s) => format!("{s:.4}"),
    }
}

const SVG_WIDTH: f64 = 640.0;
const SVG_HEIGHT: f64 = 480.0;
const SVG_MARGIN: f64 = 50.0;

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

fn scale(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    (lo, hi)
}

fn svg_document(title: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" \
         viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">{title}</text>\n\
         <rect x=\"{SVG_MARGIN}\" y=\"{SVG_MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" \
         stroke=\"black\" stroke-width=\"1\"/>\n{body}</svg>\n",
        SVG_WIDTH / 2.0,
        SVG_WIDTH - 2.0 * SVG_MARGIN,
        SVG_HEIGHT - 2.0 * SVG_MARGIN,
    )
}

fn map_points(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    let (x_lo, x_hi) = scale(xs.iter().copied());
    let (y_lo, y_hi) = scale(ys.iter().copied());
    let w = SVG_WIDTH - 2.0 * SVG_MARGIN;
    let h = SVG_HEIGHT - 2.0 * SVG_MARGIN;
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            (
                SVG_MARGIN + (x - x_lo) / (x_hi - x_lo) * w,
                SVG_HEIGHT - SVG_MARGIN - (y - y_lo) / (y_hi - y_lo) * h,
            )
        })
        .collect()
}

/// Plane plot of the first two state components along the trajectory, or the
/// components against time when the state is not two-dimensional.
pub fn svg_trajectory(traj: &Trajectory) -> String {
    let dim = traj.states[0].x.len();
    if dim == 2 {
        let xs: Vec<f64> = traj.states.iter().map(|s| s.x[0]).collect();
        let ys: Vec<f64> = traj.states.iter().map(|s| s.x[1]).collect();
        svg_document("state trajectory", &polyline(&map_points(&xs, &ys), "steelblue"))
    } else {
        let ts: Vec<f64> = traj.states.iter().map(|s| s.time).collect();
        let mut body = String::new();
        let palette = ["steelblue", "firebrick", "seagreen", "goldenrod", "purple"];
        for (c, color) in palette.iter().enumerate().take(dim.min(palette.len())) {
            let ys: Vec<f64> = traj.states.iter().map(|s| s.x[c]).collect();
            body.push_str(&polyline(&map_points(&ts, &ys), color));
        }
        svg_document("state components over time", &body)
    }
}

/// Difference norms over time, both series in one plot.
pub fn svg_difference(series: &DifferenceSeries) -> String {
    let mut body = polyline(&map_points(&series.t_grid, &series.dx), "steelblue");
    body.push_str(&polyline(&map_points(&series.t_grid, &series.dv1), "firebrick"));
    body.push_str(
        "<text x=\"60\" y=\"70\" font-family=\"sans-serif\" font-size=\"12\" \
         fill=\"steelblue\">|x_n - X_n|</text>\n\
         <text x=\"60\" y=\"88\" font-family=\"sans-serif\" font-size=\"12\" \
         fill=\"firebrick\">|v_1,n - V_1,n|</text>\n",
    );
    svg_document("scheme difference over time", &body)
}
