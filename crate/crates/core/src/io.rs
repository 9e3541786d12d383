//! Binary dataset dumps, CSV formatting and a minimal SVG line chart.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"SCMD";
pub const DATASET_HEADER_LEN: usize = 16;

/// Encode a matrix as `SCMD | u32 n | u32 d | u32 reserved(0)` followed by
/// row-major little-endian f64 values.
pub fn encode_matrix(x: &DMatrix<f64>) -> Result<Vec<u8>> {
    let (n, d) = x.shape();
    let n32 = u32::try_from(n).map_err(|_| Error::Format("n does not fit in u32".into()))?;
    let d32 = u32::try_from(d).map_err(|_| Error::Format("d does not fit in u32".into()))?;
    let mut out = Vec::with_capacity(DATASET_HEADER_LEN + 8 * n * d);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&n32.to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for i in 0..n {
        for j in 0..d {
            out.extend_from_slice(&x[(i, j)].to_le_bytes());
        }
    }
    Ok(out)
}

/// Decode the format written by [`encode_matrix`].
pub fn decode_matrix(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < DATASET_HEADER_LEN {
        return Err(Error::Format(format!("need a {DATASET_HEADER_LEN}-byte header, got {} bytes", bytes.len())));
    }
    if &bytes[..4] != DATASET_MAGIC {
        return Err(Error::Format("bad magic, expected SCMD".into()));
    }
    let word = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
    let (n, d, reserved) = (word(4) as usize, word(8) as usize, word(12));
    if reserved != 0 {
        return Err(Error::Format(format!("reserved header word must be 0, got {reserved}")));
    }
    if n == 0 || d == 0 {
        return Err(Error::Format(format!("empty matrix {n}x{d}")));
    }
    let payload = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    if bytes.len() - DATASET_HEADER_LEN != payload {
        return Err(Error::Format(format!(
            "payload is {} bytes, header implies {payload}",
            bytes.len() - DATASET_HEADER_LEN
        )));
    }
    let body = &bytes[DATASET_HEADER_LEN..];
    Ok(DMatrix::from_fn(n, d, |i, j| {
        let at = 8 * (i * d + j);
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&body[at..at + 8]);
        f64::from_le_bytes(buf)
    }))
}

/// Float with 17 significant digits, or an explicit `inf`/`-inf`/`nan` token.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// Parse a float, accepting the `inf`/`nan` tokens written by [`fmt_f64`].
pub fn parse_f64(s: &str) -> Result<f64> {
    let t = s.trim();
    match t.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        "nan" => Ok(f64::NAN),
        _ => t.parse::<f64>().map_err(|_| Error::Format(format!("not a number: `{s}`"))),
    }
}

pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, header: &[&str]) -> Result<Self> {
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out, columns: header.len() })
    }

    pub fn row(&mut self, cells: &[String]) -> Result<()> {
        if cells.len() != self.columns {
            return Err(Error::Format(format!("row has {} cells, header has {}", cells.len(), self.columns)));
        }
        writeln!(self.out, "{}", cells.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_spectrum_csv<W: Write>(out: W, eigenvalues: &[f64]) -> Result<()> {
    let mut w = CsvWriter::new(out, &["index", "eigenvalue"])?;
    for (i, v) in eigenvalues.iter().enumerate() {
        w.row(&[i.to_string(), fmt_f64(*v)])?;
    }
    w.finish()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

/// Self-contained SVG line chart.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 440.0;
    const L: f64 = 70.0;
    const R: f64 = 160.0;
    const T: f64 = 40.0;
    const B: f64 = 55.0;
    const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

    let finite = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (W - R + L) / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{L} {T} L{L} {} L{} {}" fill="none" stroke="black"/>"#,
        H - B,
        W - R,
        H - B
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, px(xv), H - B + 18.0, tick(xv));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, L - 6.0, py(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (W - R + L) / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (H - B + T) / 2.0,
        (H - B + T) / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#, pts.join(" "));
        let ly = T + 16.0 * i as f64 + 8.0;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#, W - R + 12.0, W - R + 36.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, W - R + 42.0, ly + 4.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
