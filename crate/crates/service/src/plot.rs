//! SVG plots of sweep curves.

use std::path::Path;

use hed_core::corpus::Emotion;
use plotters::prelude::*;

use crate::error::ServiceError;
use crate::pipeline::SweepCurves;

const COLORS: [RGBColor; 4] = [RED, GREEN, BLUE, MAGENTA];

fn plot_err<E: std::fmt::Display>(e: E) -> ServiceError {
    ServiceError::Invalid(format!("plot: {e}"))
}

/// One panel per target emotion: probe outputs against commanded intensity.
pub fn sweep_curves(path: &Path, curves: &SweepCurves) -> Result<(), ServiceError> {
    let root = SVGBackend::new(path, (1200, 320)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let panels = root.split_evenly((1, 4));
    for (panel, target) in panels.iter().zip(Emotion::INTENSITY_ORDER) {
        let Some(series) = curves.curves.get(target.name()) else {
            continue;
        };
        let mut chart = ChartBuilder::on(panel)
            .caption(format!("target: {}", target.name()), ("sans-serif", 16))
            .margin(8)
            .x_label_area_size(28)
            .y_label_area_size(36)
            .build_cartesian_2d(0f64..1f64, 0f64..1f64)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("commanded")
            .y_desc("predicted")
            .draw()
            .map_err(plot_err)?;
        for (k, emotion) in Emotion::INTENSITY_ORDER.iter().enumerate() {
            let pts: Vec<(f64, f64)> = curves
                .values
                .iter()
                .zip(series)
                .map(|(x, p)| (*x, p[k]))
                .collect();
            let color = COLORS[k];
            chart
                .draw_series(LineSeries::new(pts, color.stroke_width(2)))
                .map_err(plot_err)?
                .label(emotion.name())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 12, y)], color));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}
