//! Static SVG figures: feature scatters and accuracy curves.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::experiment::{SweepResult, TrialOutcome};
use super::records::TrialRecord;
use crate::separation::Source;
use crate::{Error, Result};

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Output(format!("plot: {e}"))
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        if v.is_finite() {
            (a.min(v), b.max(v))
        } else {
            (a, b)
        }
    });
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.08).max(1e-3);
    (lo - pad, hi + pad)
}

/// `scatter_ebn0_<e>dB_p<p>.svg`
pub fn scatter_file_name(ebn0_db: f64, p: usize) -> String {
    format!("scatter_ebn0_{ebn0_db}dB_p{p}.svg")
}

/// Feature scatter of both sources and all devices: filled markers for the
/// payload fingerprint, hollow for the pilot fingerprint.
pub fn write_feature_scatter(path: &Path, title: &str, payload: &[TrialRecord], pilot: &[TrialRecord]) -> Result<()> {
    let mut labels: Vec<&str> = payload.iter().chain(pilot).map(|r| r.device.as_str()).collect();
    labels.dedup();
    labels.sort_unstable();
    labels.dedup();
    let all = || payload.iter().chain(pilot);
    let (x0, x1) = padded_range(all().map(|r| r.feature.0));
    let (y0, y1) = padded_range(all().map(|r| r.feature.1));

    let root = SVGBackend::new(path, (720, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("Re b3")
        .y_desc("Im b3")
        .draw()
        .map_err(plot_err)?;

    for (i, label) in labels.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (records, source) in [(payload, Source::Payload), (pilot, Source::Pilot)] {
            let pts: Vec<(f64, f64)> = records
                .iter()
                .filter(|r| r.device == *label)
                .map(|r| r.feature)
                .collect();
            let filled = source == Source::Payload;
            let style = if filled { color.filled() } else { color.stroke_width(1) };
            chart
                .draw_series(pts.iter().map(|&p| Circle::new(p, 3, style)))
                .map_err(plot_err)?
                .label(format!("{label} ({source})"))
                .legend(move |(x, y)| Circle::new((x, y), 4, style));
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Mean accuracy against Eb/N0, one line per payload count plus the pilot
/// baseline.
pub fn write_rate_curves(path: &Path, result: &SweepResult) -> Result<()> {
    let rows = &result.table.rows;
    let (x0, x1) = padded_range(rows.iter().map(|r| r.ebn0_db));
    let (lo, _) = padded_range(rows.iter().map(|r| r.acc_mean));
    let y0 = lo.clamp(0.0, 0.5);

    let root = SVGBackend::new(path, (720, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("3-NN classification rate", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..1.02)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("Eb/N0 (dB)")
        .y_desc("accuracy")
        .draw()
        .map_err(plot_err)?;

    let mut series: Vec<(usize, Source)> = rows.iter().map(|r| (r.p, r.source)).collect();
    series.sort_by_key(|s| (s.1 == Source::Payload, s.0));
    series.dedup();
    for (i, (p, source)) in series.into_iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.p == p && r.source == source)
            .map(|r| (r.ebn0_db, r.acc_mean))
            .collect();
        let label = match source {
            Source::Pilot => "pilot".to_string(),
            Source::Payload => format!("payload p={p}"),
        };
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// One scatter per (Eb/N0, p) from trial 0, plus `rates.svg`. Returns the
/// written paths.
pub fn write_sweep_plots(dir: &Path, result: &SweepResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for TrialOutcome { cell, payload, pilot, .. } in &result.first_trial {
        let path = dir.join(scatter_file_name(cell.ebn0_db, cell.p));
        let title = format!("b3 features, Eb/N0 = {} dB, p = {}", cell.ebn0_db, cell.p);
        write_feature_scatter(&path, &title, payload, pilot)?;
        written.push(path);
    }
    let rates = dir.join("rates.svg");
    write_rate_curves(&rates, result)?;
    written.push(rates);
    Ok(written)
}
