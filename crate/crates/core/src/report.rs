//! CSV, SVG and manifest output.

use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{AlphaEstimate, CMatrix};
use crate::constellation::{overlap_probability, overlap_probability_numeric, Pool};
use crate::mapping::MappingTable;
use crate::pn_model::{combined_pn_variance, monte_carlo_combined_variance};
use crate::sim::{BerRecord, SimConfig};
use crate::{Complex, Error, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

/// Hex SHA-256 digest of `data`, truncated to `bytes` bytes.
pub fn content_hash(data: &[u8], bytes: usize) -> String {
    hex::encode(&Sha256::digest(data)[..bytes.min(32)])
}

/// One line of the sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub ber_overall: f64,
    pub ber_spatial: f64,
    pub ber_mqam: f64,
    pub trials: u64,
    pub bits_total: u64,
    pub errors_total: u64,
    pub config_hash: String,
}

impl SweepRow {
    pub fn from_record(r: &BerRecord, config_hash: &str) -> Self {
        Self {
            snr_db: r.snr_db,
            ber_overall: r.ber(),
            ber_spatial: r.ber_spatial(),
            ber_mqam: r.ber_mqam(),
            trials: r.trials,
            bits_total: r.bits_total(),
            errors_total: r.errors_total(),
            config_hash: config_hash.to_string(),
        }
    }

    /// Field-wise equality that treats two `NaN` rates as equal.
    pub fn same_as(&self, o: &Self) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        eq(self.snr_db, o.snr_db)
            && eq(self.ber_overall, o.ber_overall)
            && eq(self.ber_spatial, o.ber_spatial)
            && eq(self.ber_mqam, o.ber_mqam)
            && self.trials == o.trials
            && self.bits_total == o.bits_total
            && self.errors_total == o.errors_total
            && self.config_hash == o.config_hash
    }
}

pub const SWEEP_HEADER: [&str; 8] = [
    "snr_db",
    "ber_overall",
    "ber_spatial",
    "ber_mqam",
    "trials",
    "bits_total",
    "errors_total",
    "config_hash",
];

/// Incremental sweep CSV writer; every row is flushed as soon as it is
/// written so that an interrupted sweep leaves its finished points behind.
pub struct SweepWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl SweepWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let file = File::create(path).map_err(io_err(path))?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        inner.write_record(SWEEP_HEADER).map_err(csv_err(path))?;
        inner.flush().map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner,
        })
    }

    pub fn write(&mut self, row: &SweepRow) -> Result<()> {
        self.inner.serialize(row).map_err(csv_err(&self.path))?;
        self.inner.flush().map_err(io_err(&self.path))
    }
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = SweepWriter::create(path)?;
    for r in rows {
        w.write(r)?;
    }
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != SWEEP_HEADER {
        return Err(Error::SimConfig(format!(
            "{}: unexpected header {:?}",
            path.display(),
            header
        )));
    }
    rdr.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))
}

/// Formats a lattice point as `a+bi` / `a-bi`.
pub fn format_symbol(x: Complex) -> String {
    let sign = if x.im < 0.0 { '-' } else { '+' };
    format!("{}{}{}i", x.re, sign, x.im.abs())
}

/// Pool and mapping table as CSV text.
pub fn pool_design_csv(table: &MappingTable) -> String {
    let m = table.order().trailing_zeros() as usize;
    let mut out = String::from("pool_index,bit_prefix,symbol_1,symbol_2,sensitivity,allowed_J_list\n");
    for e in table.entries() {
        let prefix: String = e.prefix.iter().map(|&b| if b { '1' } else { '0' }).collect();
        debug_assert_eq!(prefix.len(), m - 1);
        let js: Vec<String> = e.allowed_j.iter().map(|j| j.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.pool.index,
            prefix,
            format_symbol(e.pool.symbols[0]),
            format_symbol(e.pool.symbols[1]),
            e.pool.sensitivity.tag(),
            js.join(";")
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapRow {
    pub pool_index: usize,
    pub delta_theta: f64,
    pub euclidean_distance: f64,
    pub overlap_closed_form: f64,
    pub overlap_quadrature: f64,
}

pub fn overlap_rows(pools: &[Pool], variance: f64) -> Result<Vec<OverlapRow>> {
    pools
        .iter()
        .map(|p| {
            let (t1, t2) = (p.symbols[0].arg(), p.symbols[1].arg());
            Ok(OverlapRow {
                pool_index: p.index,
                delta_theta: p.separation(),
                euclidean_distance: p.euclidean_distance(),
                overlap_closed_form: overlap_probability(t1, t2, variance)?,
                overlap_quadrature: overlap_probability_numeric(t1, t2, variance, 1e-13)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PnVarianceRow {
    pub n: usize,
    pub analytic: f64,
    pub monte_carlo: f64,
    pub relative_gap: f64,
}

/// Variance law against Monte Carlo for `1..=max_branches` active branches.
/// With zero variance every column is zero.
pub fn pn_variance_rows(variance: f64, max_branches: usize, samples: usize, seed: u64) -> Result<Vec<PnVarianceRow>> {
    if max_branches == 0 {
        return Err(Error::Domain("max_branches must be at least 1".into()));
    }
    (1..=max_branches)
        .map(|n| {
            let analytic = combined_pn_variance(n, variance)?;
            let monte_carlo = monte_carlo_combined_variance(n, variance, samples, seed)?;
            let relative_gap = if analytic == 0.0 {
                monte_carlo.abs()
            } else {
                (monte_carlo - analytic).abs() / analytic
            };
            Ok(PnVarianceRow {
                n,
                analytic,
                monte_carlo,
                relative_gap,
            })
        })
        .collect()
}

/// Serializes rows with a header derived from the row type.
pub fn rows_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let path = Path::new("<memory>");
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::SimConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub const OVERLAP_HEADER: [&str; 5] = [
    "pool_index",
    "delta_theta",
    "euclidean_distance",
    "overlap_closed_form",
    "overlap_quadrature",
];

pub const PN_VARIANCE_HEADER: [&str; 4] = ["n", "analytic", "monte_carlo", "relative_gap"];

/// Row-major complex matrix dump: a `rows,cols` header line followed by one
/// line per row of `re,im` pairs.
pub fn matrix_csv(m: &CMatrix) -> String {
    let mut out = format!("{},{}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:e},{:e}", m[(i, j)].re, m[(i, j)].im))
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Manifest of a sweep file: the tool version, a hash of the CSV bytes and
/// one entry per simulated configuration.
#[derive(Debug, Clone, Serialize)]
pub struct SweepManifest {
    pub tool_version: String,
    pub results_file: String,
    pub results_hash: String,
    pub runs: Vec<RunManifest>,
}

/// Configuration echo and bookkeeping of one simulated configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub label: String,
    pub config: SimConfig,
    pub config_hash: String,
    pub n_active: usize,
    pub alpha: AlphaEstimate,
    pub rejected_channels: u64,
    pub points: Vec<ManifestPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestPoint {
    pub snr_db: f64,
    pub trials: u64,
    pub spatial_bits: u64,
    pub spatial_errors: u64,
    pub mqam_bits: u64,
    pub mqam_errors: u64,
    pub rejected_channels: u64,
    pub wall_time_s: f64,
}

impl ManifestPoint {
    pub fn from_record(r: &BerRecord) -> Self {
        Self {
            snr_db: r.snr_db,
            trials: r.trials,
            spatial_bits: r.counts.spatial_bits,
            spatial_errors: r.counts.spatial_errors,
            mqam_bits: r.counts.mqam_bits,
            mqam_errors: r.counts.mqam_errors,
            rejected_channels: r.rejected_channels,
            wall_time_s: r.wall_time_s,
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &SweepManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::SimConfig(e.to_string()))?;
    write_text(path, &(json + "\n"))
}

/// One curve of a BER plot.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// BER versus SNR on a logarithmic y axis. Zero and non-finite BER values
/// are left out of the curves.
pub fn ber_plot_svg(series: &[Series]) -> String {
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (70.0, 200.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let finite: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|&(x, y)| x.is_finite() && y.is_finite() && y > 0.0)
        .collect();
    let (mut x0, mut x1) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let ymin = finite.iter().map(|p| p.1).fold(1.0, f64::min);
    let d0 = ymin.log10().floor().min(-1.0);
    let d1 = 0.0;

    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (d1 - y.log10()) / (d1 - d0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let mut d = d0 as i32;
    while d as f64 <= d1 {
        let y = sy(10f64.powi(d));
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">1e{d}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
        d += 1;
    }
    let mut xs: Vec<f64> = finite.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in xs {
        let px = sx(x);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.1}" y1="{top}" x2="{px:.1}" y2="{:.1}" stroke="#eee"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{x}</text>"##,
            top + ph,
            top + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">SNR (dB)</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">BER</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|&&(x, y)| x.is_finite() && y.is_finite() && y > 0.0)
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
