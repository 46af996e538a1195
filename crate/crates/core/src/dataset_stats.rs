//! Corpus-level component statistics: per-scan component counts summarised
//! by median and interquartile range, plus mean and standard deviation of
//! component volumes in mm³.

use serde::{Deserialize, Serialize};

use crate::components::label_components;
use crate::error::{Error, Result};
use crate::volume::BinaryMask;

/// Percentile of ascending `sorted` data with linear interpolation between
/// closest ranks (`q` in `[0, 100]`).
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=100.0).contains(&q) {
        return None;
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdKind {
    /// Divide by `n`.
    Population,
    /// Divide by `n - 1`.
    Sample,
}

/// Mean and standard deviation; `None` for empty input.
pub fn mean_std(values: &[f64], kind: StdKind) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let denom = match kind {
        StdKind::Population => n as f64,
        StdKind::Sample if n > 1 => (n - 1) as f64,
        StdKind::Sample => return Some((mean, 0.0)),
    };
    Some((mean, (ss / denom).sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_scans: usize,
    pub n_components: usize,
    pub cc_p25: f64,
    pub cc_p50: f64,
    pub cc_p75: f64,
    /// Undefined (`None`) when the corpus holds no components.
    pub vol_mean_mm3: Option<f64>,
    pub vol_std_mm3: Option<f64>,
    pub std_kind: StdKind,
}

pub fn corpus_stats(masks: &[BinaryMask], std_kind: StdKind) -> Result<CorpusStats> {
    if masks.is_empty() {
        return Err(Error::invalid("corpus statistics need at least one mask"));
    }
    let mut counts = Vec::with_capacity(masks.len());
    let mut volumes = Vec::new();
    for mask in masks {
        let lab = label_components(mask);
        counts.push(lab.count() as f64);
        volumes.extend_from_slice(lab.volumes_mm3());
    }
    counts.sort_by(f64::total_cmp);
    let pct = |q| percentile(&counts, q).expect("non-empty");
    let summary = mean_std(&volumes, std_kind);
    Ok(CorpusStats {
        n_scans: masks.len(),
        n_components: volumes.len(),
        cc_p25: pct(25.0),
        cc_p50: pct(50.0),
        cc_p75: pct(75.0),
        vol_mean_mm3: summary.map(|s| s.0),
        vol_std_mm3: summary.map(|s| s.1),
        std_kind,
    })
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

impl CorpusStats {
    /// `"P50 [P25, P75]"`.
    pub fn cc_cell(&self) -> String {
        format!(
            "{} [{}, {}]",
            fmt_num(self.cc_p50),
            fmt_num(self.cc_p25),
            fmt_num(self.cc_p75)
        )
    }

    /// `"mean ± std"`, or `"n/a"` with no components.
    pub fn volume_cell(&self) -> String {
        match (self.vol_mean_mm3, self.vol_std_mm3) {
            (Some(m), Some(s)) => format!("{} ± {}", fmt_num(m), fmt_num(s)),
            _ => "n/a".into(),
        }
    }
}

pub const TABLE_HEADER: [&str; 3] = ["Dataset", "CC P50 [P25, P75]", "Mean volume ± std [mm³]"];

/// Aligned plain-text table, one row per named corpus.
pub fn render_table(rows: &[(String, CorpusStats)]) -> String {
    let cells: Vec<[String; 3]> = rows
        .iter()
        .map(|(name, s)| [name.clone(), s.cc_cell(), s.volume_cell()])
        .collect();
    let mut widths = TABLE_HEADER.map(|h| h.chars().count());
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w - s.chars().count()));
    let mut out = String::new();
    let header: Vec<String> = TABLE_HEADER
        .iter()
        .zip(widths)
        .map(|(h, w)| pad(h, w))
        .collect();
    out.push_str(header.join("  ").trim_end());
    out.push('\n');
    for row in &cells {
        let line: Vec<String> = row.iter().zip(widths).map(|(c, w)| pad(c, w)).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Shape, Spacing};

    fn scan_with_points(points: &[[usize; 3]]) -> BinaryMask {
        let mut m = BinaryMask::empty(Shape::new(12, 3, 1).unwrap(), Spacing::unit());
        for &[x, y, z] in points {
            m.set(x, y, z, true);
        }
        m
    }

    #[test]
    fn percentile_linear_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        assert_eq!(percentile(&v, 25.0), Some(2.75));
        assert_eq!(percentile(&v, 50.0), Some(4.5));
        assert_eq!(percentile(&v, 75.0), Some(6.25));
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 100.0), Some(8.0));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn counts_zero_one_two() {
        let masks = [
            scan_with_points(&[]),
            scan_with_points(&[[0, 0, 0]]),
            scan_with_points(&[[0, 0, 0], [5, 0, 0]]),
        ];
        let s = corpus_stats(&masks, StdKind::Population).unwrap();
        assert_eq!((s.cc_p25, s.cc_p50, s.cc_p75), (0.5, 1.0, 1.5));
        assert_eq!(s.n_components, 3);
        assert_eq!(s.cc_cell(), "1 [0.5, 1.5]");
    }

    #[test]
    fn single_ten_voxel_component() {
        let pts: Vec<[usize; 3]> = (0..10).map(|x| [x, 1, 0]).collect();
        let s = corpus_stats(&[scan_with_points(&pts)], StdKind::Population).unwrap();
        assert_eq!(s.vol_mean_mm3, Some(10.0));
        assert_eq!(s.vol_std_mm3, Some(0.0));
    }

    #[test]
    fn empty_scan_contributes_no_volume() {
        let s = corpus_stats(&[scan_with_points(&[])], StdKind::Population).unwrap();
        assert_eq!(s.cc_p50, 0.0);
        assert_eq!(s.n_components, 0);
        assert_eq!(s.vol_mean_mm3, None);
        assert_eq!(s.volume_cell(), "n/a");
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(corpus_stats(&[], StdKind::Population).is_err());
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 3.0], StdKind::Sample).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[1.0, 3.0], StdKind::Population), Some((2.0, 1.0)));
    }

    #[test]
    fn table_is_aligned() {
        let masks = [scan_with_points(&[[0, 0, 0]])];
        let s = corpus_stats(&masks, StdKind::Population).unwrap();
        let t = render_table(&[("A".into(), s.clone()), ("Longer".into(), s)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Dataset  CC P50 [P25, P75]"));
        assert!(lines[1].starts_with("A        1 [1, 1]"));
    }
}
