//! Minimal SVG figures. The CSV/TSV written next to each figure carries
//! the same numbers.

use std::fmt::Write as _;

use milscene_core::train::ConfusionMatrix;
use milscene_core::Tensor;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// White to dark blue for `v` in `[0, 1]`.
fn blue(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * v).round() as u8;
    format!("rgb({},{},{})", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

/// Dark purple through orange to yellow, for spectrogram-like maps.
fn heat(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let stops = [(0.0, [0.0, 0.0, 4.0]), (0.5, [187.0, 55.0, 84.0]), (1.0, [252.0, 255.0, 164.0])];
    let (lo, hi) = if v <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let t = (v - lo.0) / (hi.0 - lo.0);
    let c: Vec<u8> = (0..3).map(|i| (lo.1[i] + (hi.1[i] - lo.1[i]) * t).round() as u8).collect();
    format!("rgb({},{},{})", c[0], c[1], c[2])
}

fn open(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Row-normalized confusion heat map with counts in the cells and
/// per-class recall in a column on the right.
pub fn confusion_svg(cm: &ConfusionMatrix, class_names: &[String]) -> String {
    let c = cm.classes();
    let cell = 36.0;
    let left = 10.0 + 7.0 * class_names.iter().map(|n| n.len()).max().unwrap_or(1) as f64;
    let top = 40.0;
    let width = left + cell * (c as f64 + 1.5) + 20.0;
    let height = top + cell * c as f64 + 90.0;
    let mut s = open(width, height);
    writeln!(s, "<text x=\"{left}\" y=\"20\" font-size=\"13\">Confusion matrix (rows: true class)</text>").unwrap();
    for t in 0..c {
        let row = cm.row_sum(t).max(1) as f64;
        let y = top + cell * t as f64;
        for p in 0..c {
            let x = left + cell * p as f64;
            let n = cm.count(t, p);
            let frac = n as f64 / row;
            writeln!(s, "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\" stroke=\"#ccc\"/>", blue(frac))
                .unwrap();
            let ink = if frac > 0.5 { "white" } else { "black" };
            writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{ink}\">{n}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            )
            .unwrap();
        }
        let name = escape(class_names.get(t).map(String::as_str).unwrap_or("?"));
        writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{name}</text>", left - 5.0, y + cell / 2.0 + 4.0).unwrap();
        let recall = cm.recall(t).map_or("-".to_string(), |r| format!("{:.1}%", 100.0 * r));
        writeln!(s, "<text x=\"{}\" y=\"{}\">{recall}</text>", left + cell * c as f64 + 8.0, y + cell / 2.0 + 4.0).unwrap();
    }
    writeln!(s, "<text x=\"{}\" y=\"{}\">recall</text>", left + cell * c as f64 + 8.0, top - 6.0).unwrap();
    for p in 0..c {
        let x = left + cell * p as f64 + cell / 2.0;
        let y = top + cell * c as f64 + 8.0;
        let name = escape(class_names.get(p).map(String::as_str).unwrap_or("?"));
        writeln!(s, "<text transform=\"translate({x},{y}) rotate(45)\">{name}</text>").unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Line plot with markers, axes scaled to the data.
pub fn line_svg(points: &[(f64, f64)], title: &str, x_label: &str, y_label: &str) -> String {
    let (w, h) = (480.0, 320.0);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 50.0);
    let mut s = open(w, h);
    writeln!(s, "<text x=\"{left}\" y=\"22\" font-size=\"13\">{}</text>", escape(title)).unwrap();
    let xs = points.iter().map(|p| p.0);
    let ys = points.iter().map(|p| p.1);
    let (x0, x1) = (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) = (ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
    let pad = ((y1 - y0) * 0.1).max(1e-3);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let px = |x: f64| left + (x - x0) / span(x0, x1) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / span(y0, y1) * (h - top - bottom);
    writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{0}\" stroke=\"black\"/>",
        h - bottom,
        w - right
    )
    .unwrap();
    for &(x, _) in points {
        writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x}</text>", px(x), h - bottom + 16.0).unwrap();
    }
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y:.3}</text>", left - 6.0, py(y) + 4.0).unwrap();
    }
    let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>", path.join(" ")).unwrap();
    for &(x, y) in points {
        writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"#1f77b4\"/>", px(x), py(y)).unwrap();
    }
    writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", (left + w - right) / 2.0, h - 12.0, escape(x_label))
        .unwrap();
    writeln!(
        s,
        "<text transform=\"translate(16,{}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
        (top + h - bottom) / 2.0,
        escape(y_label)
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

/// Spectrogram `[bands, frames]` with the instance score matrix `[C, m]`
/// underneath, each instance column spanning `stride` frames. Argmax
/// instances are outlined.
pub fn instance_svg(features: &Tensor, scores: &Tensor, argmax: &[usize], class_names: &[String], stride: usize) -> String {
    let (bands, frames) = (features.dim(0), features.dim(1));
    let (classes, m) = (scores.dim(0), scores.dim(1));
    let px = (800.0 / frames as f64).clamp(1.0, 8.0);
    let band_h = 4.0;
    let row_h = 16.0;
    let left = 10.0 + 7.0 * class_names.iter().map(|n| n.len()).max().unwrap_or(1) as f64;
    let spec_h = band_h * bands as f64;
    let width = left + px * frames as f64 + 20.0;
    let height = 20.0 + spec_h + 10.0 + row_h * classes as f64 + 20.0;
    let mut s = open(width, height);
    let lo = features.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = features.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = if hi > lo { hi - lo } else { 1.0 };
    for b in 0..bands {
        // low frequencies at the bottom
        let y = 20.0 + band_h * (bands - 1 - b) as f64;
        for t in 0..frames {
            let v = (features.get(&[b, t]) - lo) / range;
            writeln!(s, "<rect x=\"{:.2}\" y=\"{y}\" width=\"{px:.2}\" height=\"{band_h}\" fill=\"{}\"/>", left + px * t as f64, heat(v))
                .unwrap();
        }
    }
    let top = 20.0 + spec_h + 10.0;
    let col = px * stride as f64;
    for l in 0..classes {
        let y = top + row_h * l as f64;
        let name = escape(class_names.get(l).map(String::as_str).unwrap_or("?"));
        writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{name}</text>", left - 5.0, y + 12.0).unwrap();
        for j in 0..m {
            let x = left + col * j as f64;
            let stroke = if argmax.get(l) == Some(&j) { " stroke=\"red\" stroke-width=\"2\"" } else { "" };
            writeln!(
                s,
                "<rect x=\"{x:.2}\" y=\"{y}\" width=\"{col:.2}\" height=\"{row_h}\" fill=\"{}\"{stroke}/>",
                blue(scores.get(&[l, j]))
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}
