//! Minimal SVG line chart of a training log: loss (log scale) on top,
//! PSNR below.

use std::fmt::Write as _;

use holosplat::train::MetricsLog;

const WIDTH: f64 = 720.0;
const PANEL: f64 = 240.0;
const MARGIN: f64 = 48.0;
const MAX_POINTS: usize = 2000;

fn polyline(xs: &[f64], ys: &[f64], top: f64, color: &str) -> String {
    let finite: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| y.is_finite())
        .map(|(&x, &y)| (x, y))
        .collect();
    if finite.is_empty() {
        return String::new();
    }
    let (x0, x1) = (finite[0].0, finite[finite.len() - 1].0.max(finite[0].0 + 1.0));
    let lo = finite.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = finite.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let step = finite.len().div_ceil(MAX_POINTS).max(1);
    let mut pts = String::new();
    for (x, y) in finite.iter().step_by(step) {
        let px = MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let py = top + PANEL - MARGIN / 2.0 - (y - lo) / span * (PANEL - MARGIN);
        let _ = write!(pts, "{px:.1},{py:.1} ");
    }
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>\n\
         <text x=\"4\" y=\"{:.1}\" font-size=\"10\">{hi:.4}</text>\n\
         <text x=\"4\" y=\"{:.1}\" font-size=\"10\">{lo:.4}</text>\n",
        pts.trim_end(),
        top + MARGIN / 2.0 + 4.0,
        top + PANEL - MARGIN / 2.0,
    )
}

pub fn metrics_svg(log: &MetricsLog) -> String {
    let its: Vec<f64> = log.records.iter().map(|r| r.iteration as f64).collect();
    let loss: Vec<f64> = log.records.iter().map(|r| r.loss.log10()).collect();
    let psnr: Vec<f64> = log.records.iter().map(|r| r.psnr).collect();
    let height = 2.0 * PANEL;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" \
         viewBox=\"0 0 {WIDTH} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN}\" y=\"14\" font-size=\"12\">log10 loss</text>"
    );
    s.push_str(&polyline(&its, &loss, 0.0, "#1f77b4"));
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"12\">PSNR (dB)</text>",
        PANEL + 14.0
    );
    s.push_str(&polyline(&its, &psnr, PANEL, "#d62728"));
    if let (Some(a), Some(b)) = (its.first(), its.last()) {
        let _ = writeln!(
            s,
            "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"10\">iteration {a} to {b}</text>",
            height - 6.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use holosplat::train::MetricsRecord;

    #[test]
    fn one_polyline_per_panel() {
        let mut log = MetricsLog::default();
        for i in 1..=5000 {
            log.push(MetricsRecord {
                iteration: i,
                loss: 1.0 / i as f64,
                l1: 0.0,
                dssim: 0.0,
                psnr: if i == 3 {
                    f64::INFINITY
                } else {
                    20.0 + i as f64 * 1e-3
                },
                count: 10,
                seconds: 0.0,
            });
        }
        let svg = metrics_svg(&log);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn empty_log_is_still_an_svg() {
        let svg = metrics_svg(&MetricsLog::default());
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 0);
    }
}
