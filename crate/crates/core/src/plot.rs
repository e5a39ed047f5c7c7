//! Static SVG figures: ROC overlays, AUC box plots and embedding scatters.

use std::fmt::Write;

use crate::stats::{quantile, AucEnsemble, RocCurve};

const W: f64 = 480.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps data coordinates onto the plot area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Self { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }
}

fn open(svg: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n\
         <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        W / 2.0,
        escape(title),
        W / 2.0,
        H - 12.0,
        escape(xlabel),
        H / 2.0,
        H / 2.0,
        escape(ylabel),
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN,
    );
}

fn ticks(svg: &mut String, f: &Frame) {
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (xv, yv) = (f.x.0 + t * (f.x.1 - f.x.0), f.y.0 + t * (f.y.1 - f.y.0));
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{xv:.2}</text>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{yv:.3}</text>",
            f.px(xv),
            H - MARGIN + 14.0,
            MARGIN - 4.0,
            f.py(yv) + 4.0
        );
    }
}

fn legend(svg: &mut String, entries: &[String]) {
    for (i, e) in entries.iter().enumerate() {
        let y = MARGIN + 12.0 + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            W - MARGIN - 150.0,
            y - 9.0,
            color(i),
            W - MARGIN - 136.0,
            y,
            escape(e)
        );
    }
}

/// Overlaid ROC curves with their AUCs in the legend.
pub fn roc_overlay_svg(curves: &[(String, &RocCurve)]) -> String {
    let mut svg = String::new();
    open(&mut svg, "ROC", "false positive rate", "true positive rate");
    let f = Frame::new((0.0, 1.0), (0.0, 1.0));
    ticks(&mut svg, &f);
    let _ = writeln!(
        svg,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>",
        f.px(0.0),
        f.py(0.0),
        f.px(1.0),
        f.py(1.0)
    );
    for (i, (_, c)) in curves.iter().enumerate() {
        let pts: Vec<String> = c.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
            color(i),
            pts.join(" ")
        );
    }
    let labels: Vec<String> = curves.iter().map(|(n, c)| format!("{n} ({:.3})", c.auc)).collect();
    legend(&mut svg, &labels);
    svg.push_str("</svg>\n");
    svg
}

/// One box per ensemble: quartile box, median line, whiskers to the
/// extremes.
pub fn auc_boxplot_svg(ensembles: &[AucEnsemble]) -> String {
    let mut svg = String::new();
    open(&mut svg, "Bootstrap AUC", "configuration", "AUC");
    let all = ensembles.iter().flat_map(|e| e.values.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let pad = 0.05 * (hi - lo).max(1e-3);
    let f = Frame::new((0.0, ensembles.len().max(1) as f64), (lo - pad, hi + pad));
    for i in 0..=4 {
        let v = f.y.0 + i as f64 / 4.0 * (f.y.1 - f.y.0);
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.3}</text>", MARGIN - 4.0, f.py(v) + 4.0);
    }
    for (i, e) in ensembles.iter().enumerate() {
        let mut v = e.values.clone();
        v.sort_by(f64::total_cmp);
        if v.is_empty() {
            continue;
        }
        let (q1, med, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let cx = f.px(i as f64 + 0.5);
        let half = 0.3 * (f.px(1.0) - f.px(0.0));
        let _ = writeln!(
            svg,
            "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
             <rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\" fill-opacity=\"0.5\" stroke=\"black\"/>\n\
             <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\" stroke-width=\"2\"/>\n\
             <text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            f.py(v[0]),
            f.py(v[v.len() - 1]),
            cx - half,
            f.py(q3),
            2.0 * half,
            (f.py(q1) - f.py(q3)).max(0.5),
            color(i),
            cx - half,
            f.py(med),
            cx + half,
            f.py(med),
            H - MARGIN + 14.0,
            escape(&e.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// 2-D scatter colored by group, legend in order of first appearance.
pub fn scatter_svg(title: &str, points: &[(f64, f64)], groups: &[String]) -> String {
    let mut svg = String::new();
    open(&mut svg, title, "t-SNE 1", "t-SNE 2");
    let fold = |sel: fn(&(f64, f64)) -> f64| {
        points.iter().map(sel).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    };
    let (xr, yr) = if points.is_empty() { ((0.0, 1.0), (0.0, 1.0)) } else { (fold(|p| p.0), fold(|p| p.1)) };
    let f = Frame::new(xr, yr);
    let mut names: Vec<String> = Vec::new();
    for (p, g) in points.iter().zip(groups) {
        let i = names.iter().position(|n| n == g).unwrap_or_else(|| {
            names.push(g.clone());
            names.len() - 1
        });
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2\" fill=\"{}\" fill-opacity=\"0.7\"/>",
            f.px(p.0),
            f.py(p.1),
            color(i)
        );
    }
    legend(&mut svg, &names);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{bootstrap_auc, roc_auc};

    #[test]
    fn figures_are_well_formed() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.2, 0.9, 0.6, 0.3, 0.7, 0.05];
        let labels = [0, 0, 1, 1, 0, 1, 0, 0, 1, 0];
        let roc = roc_auc(&scores, &labels).unwrap();
        let svg = roc_overlay_svg(&[("Mag<1>".into(), &roc)]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("Mag&lt;1&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 1);

        let e = bootstrap_auc("mag", &scores, &labels, 20, 1).unwrap();
        let b = auc_boxplot_svg(&[e.clone(), AucEnsemble { name: "psd".into(), ..e }]);
        assert_eq!(b.matches("<rect").count(), 2 + 2);

        let s = scatter_svg("t", &[(0.0, 0.0), (1.0, 2.0), (3.0, 1.0)], &["A".into(), "B".into(), "A".into()]);
        assert_eq!(s.matches("<circle").count(), 3);
        assert_eq!(scatter_svg("t", &[], &[]).matches("<circle").count(), 0);
    }
}
