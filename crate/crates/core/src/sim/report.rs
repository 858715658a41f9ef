use serde::{Deserialize, Serialize};

/// Quartiles with whiskers at the most extreme values within 1.5 IQR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceReport {
    pub tiles_x: u32,
    pub tiles_y: u32,
    /// Row-major counts, one row per tile row.
    pub heatmap: Vec<Vec<u64>>,
    pub boxplot: BoxStats,
    pub mean: f64,
    /// `None` when the median is zero.
    pub max_over_median: Option<f64>,
}

/// Linear-interpolated quantile of an ascending slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn imbalance_report(counts: &[u64], tiles_x: u32, tiles_y: u32) -> ImbalanceReport {
    let heatmap = counts
        .chunks(tiles_x.max(1) as usize)
        .map(|r| r.to_vec())
        .collect();
    let mut v: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    v.sort_by(f64::total_cmp);
    let boxplot = if v.is_empty() {
        BoxStats {
            min: 0.0,
            q1: 0.0,
            median: 0.0,
            q3: 0.0,
            max: 0.0,
            whisker_low: 0.0,
            whisker_high: 0.0,
            outliers: 0,
        }
    } else {
        let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = v.iter().copied().filter(|x| (lo..=hi).contains(x)).collect();
        BoxStats {
            min: v[0],
            q1,
            median,
            q3,
            max: v[v.len() - 1],
            whisker_low: inside.first().copied().unwrap_or(q1),
            whisker_high: inside.last().copied().unwrap_or(q3),
            outliers: v.len() - inside.len(),
        }
    };
    let mean = if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    };
    ImbalanceReport {
        tiles_x,
        tiles_y,
        heatmap,
        max_over_median: (boxplot.median > 0.0).then(|| boxplot.max / boxplot.median),
        boxplot,
        mean,
    }
}
