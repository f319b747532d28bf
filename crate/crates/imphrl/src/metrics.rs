//! Evaluation metrics and report rendering.
//!
//! Compositionality is the mean pairwise normalized edit-distance similarity
//! of the greedy primitive sequences; force statistics aggregate peak contact
//! forces over successful episodes only; learning curves are smoothed with a
//! rolling mean and min-max normalized against the task's documented return
//! bounds.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Classic dynamic-programming edit distance over primitive index sequences.
pub fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Pairwise sequence similarity: 1 - d_edit / max(len). Identical sets score
/// exactly 1.0; an empty or singleton set scores 1.0 by convention.
pub fn compositionality(sequences: &[Vec<usize>]) -> f64 {
    let n = sequences.len();
    if n < 2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let max_len = sequences[i].len().max(sequences[j].len());
            let sim = if max_len == 0 {
                1.0
            } else {
                1.0 - levenshtein(&sequences[i], &sequences[j]) as f64 / max_len as f64
            };
            sum += sim;
            pairs += 1;
        }
    }
    sum / pairs as f64
}

/// Peak-force statistics over the successful episodes of an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ForceStats {
    /// No successful episode: the statistic is absent, not zero.
    Absent,
    Present {
        mean: f64,
        /// Population standard deviation.
        std: f64,
        max: f64,
        n: usize,
    },
}

impl ForceStats {
    pub fn mean(&self) -> Option<f64> {
        match self {
            ForceStats::Absent => None,
            ForceStats::Present { mean, .. } => Some(*mean),
        }
    }
}

/// `episodes` pairs each episode's peak contact force with its success flag.
pub fn force_stats(episodes: &[(f64, bool)]) -> ForceStats {
    let forces: Vec<f64> = episodes
        .iter()
        .filter(|(_, ok)| *ok)
        .map(|(f, _)| *f)
        .collect();
    if forces.is_empty() {
        return ForceStats::Absent;
    }
    let n = forces.len();
    let mean = forces.iter().sum::<f64>() / n as f64;
    let var = forces.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n as f64;
    let max = forces.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ForceStats::Present {
        mean,
        std: var.sqrt(),
        max,
        n,
    }
}

/// Rolling-mean smoothing followed by min-max normalization against the
/// task's known return bounds; a curve pinned at the maximum maps to 1.0.
pub fn normalize_learning_curve(returns: &[f64], window: usize, lo: f64, hi: f64) -> Vec<f64> {
    assert!(window > 0 && hi > lo);
    let mut out = Vec::with_capacity(returns.len());
    for i in 0..returns.len() {
        let start = (i + 1).saturating_sub(window);
        let slice = &returns[start..=i];
        let mean = slice.iter().sum::<f64>() / slice.len() as f64;
        out.push(((mean - lo) / (hi - lo)).clamp(0.0, 1.0));
    }
    out
}

/// First epoch from which the normalized curve stays at or above the
/// threshold for `sustain` consecutive epochs.
pub fn convergence_epoch(curve: &[f64], threshold: f64, sustain: usize) -> Option<usize> {
    if sustain == 0 || curve.len() < sustain {
        return None;
    }
    for start in 0..=(curve.len() - sustain) {
        if curve[start..start + sustain].iter().all(|v| *v >= threshold) {
            return Some(start);
        }
    }
    None
}

/// One arm of the ablation study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationArm {
    pub name: String,
    pub success_rate: f64,
    pub force: ForceStats,
    pub compositionality: f64,
    pub normalized_curve: Vec<f64>,
    pub convergence_epoch: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub task: String,
    pub arms: Vec<AblationArm>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("arm,success_rate,mean_force,std_force,max_force,n_success,compositionality,convergence_epoch\n");
        for arm in &self.arms {
            let (mf, sf, xf, n) = match &arm.force {
                ForceStats::Absent => ("".into(), "".into(), "".into(), 0),
                ForceStats::Present { mean, std, max, n } => {
                    (format!("{mean:.6}"), format!("{std:.6}"), format!("{max:.6}"), *n)
                }
            };
            let conv = arm
                .convergence_epoch
                .map(|e| e.to_string())
                .unwrap_or_default();
            writeln!(
                out,
                "{},{:.6},{},{},{},{},{:.6},{}",
                arm.name, arm.success_rate, mf, sf, xf, n, arm.compositionality, conv
            )
            .unwrap();
        }
        out
    }
}

/// Minimal line-chart SVG for the normalized learning curves; no plotting
/// dependency needed for a handful of polylines.
pub fn curves_to_svg(curves: &[(String, Vec<f64>)]) -> String {
    let (w, h, pad) = (640.0, 400.0, 40.0);
    let max_len = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(1).max(2);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        y0 = h - pad,
        x1 = w - pad,
    );
    for (ci, (name, curve)) in curves.iter().enumerate() {
        if curve.is_empty() {
            continue;
        }
        let color = colors[ci % colors.len()];
        let pts: Vec<String> = curve
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let x = pad + (w - 2.0 * pad) * i as f64 / (max_len - 1) as f64;
                let y = (h - pad) - (h - 2.0 * pad) * v.clamp(0.0, 1.0);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{y}\" fill=\"{color}\" font-size=\"12\">{name}</text>",
            x = w - pad - 120.0,
            y = pad + 16.0 * (ci as f64 + 1.0),
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Heatmap SVG over a (distance, stiffness) grid of coupling values.
pub fn heatmap_to_svg(rows: &[(f64, f64, f64)], nx: usize, ny: usize) -> String {
    assert_eq!(rows.len(), nx * ny);
    let cell = 24.0;
    let (w, h) = (nx as f64 * cell + 60.0, ny as f64 * cell + 60.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    for (idx, (_, _, v)) in rows.iter().enumerate() {
        let ix = idx / ny;
        let iy = idx % ny;
        let shade = (255.0 * (1.0 - v.clamp(0.0, 1.0))) as u8;
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb(255,{shade},{shade})\"/>",
            x = 30.0 + ix as f64 * cell,
            y = 30.0 + iy as f64 * cell,
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn levenshtein_textbook_cases() {
        assert_eq!(levenshtein(&[], &[]), 0);
        assert_eq!(levenshtein(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(levenshtein(&[1, 2, 3], &[]), 3);
        // kitten -> sitting analogue over ints
        assert_eq!(levenshtein(&[1, 2, 3, 3, 4, 5], &[6, 2, 3, 3, 2, 5, 7]), 3);
        assert_eq!(levenshtein(&[0, 1], &[1, 0]), 2);
    }

    #[test]
    fn identical_sequences_score_exactly_one() {
        let seqs: Vec<Vec<usize>> = (0..30).map(|_| vec![1, 0]).collect();
        assert_eq!(compositionality(&seqs), 1.0);
    }

    #[test]
    fn disjoint_sequences_score_zero() {
        let seqs = vec![vec![0, 0, 0], vec![1, 1, 1]];
        assert_eq!(compositionality(&seqs), 0.0);
    }

    #[test]
    fn force_stats_use_successes_only() {
        let eps = vec![(10.0, true), (99.0, false), (20.0, true)];
        match force_stats(&eps) {
            ForceStats::Present { mean, std, max, n } => {
                assert_eq!(mean, 15.0);
                assert_eq!(std, 5.0);
                assert_eq!(max, 20.0);
                assert_eq!(n, 2);
            }
            ForceStats::Absent => panic!("expected stats"),
        }
        assert_eq!(force_stats(&[(5.0, false)]), ForceStats::Absent);
        assert_eq!(force_stats(&[]), ForceStats::Absent);
    }

    #[test]
    fn curve_normalization_maps_max_to_one() {
        let flat = vec![50.0; 30];
        let norm = normalize_learning_curve(&flat, 20, 0.0, 50.0);
        assert!(norm.iter().all(|v| (*v - 1.0).abs() < 1e-12));
        let ramp: Vec<f64> = (0..10).map(|i| i as f64 * 10.0).collect();
        let norm = normalize_learning_curve(&ramp, 1, 0.0, 90.0);
        assert_eq!(norm[0], 0.0);
        assert_eq!(norm[9], 1.0);
    }

    #[test]
    fn rolling_window_smooths_prefix_correctly() {
        let curve = vec![0.0, 1.0, 2.0, 3.0];
        let norm = normalize_learning_curve(&curve, 2, 0.0, 3.0);
        // windows: [0], [0,1], [1,2], [2,3]
        assert_eq!(norm[1], 0.5 / 3.0);
        assert_eq!(norm[3], 2.5 / 3.0);
    }

    #[test]
    fn convergence_epoch_finds_first_sustained_crossing() {
        let mut curve = vec![0.0; 100];
        for v in curve.iter_mut().skip(37) {
            *v = 0.95;
        }
        curve[42] = 0.5; // dip breaks the run starting at 37
        assert_eq!(convergence_epoch(&curve, 0.9, 10), Some(43));
        curve[42] = 0.95;
        assert_eq!(convergence_epoch(&curve, 0.9, 10), Some(37));
        assert_eq!(convergence_epoch(&curve, 0.99, 10), None);
    }

    #[test]
    fn report_csv_has_header_and_rows() {
        let report = AblationReport {
            task: "lift".into(),
            arms: vec![AblationArm {
                name: "full".into(),
                success_rate: 0.9,
                force: force_stats(&[(12.0, true)]),
                compositionality: 1.0,
                normalized_curve: vec![0.5, 1.0],
                convergence_epoch: Some(1),
            }],
        };
        let csv = report.to_csv();
        assert!(csv.starts_with("arm,success_rate"));
        assert!(csv.contains("full,0.9"));
    }

    #[test]
    fn svg_renders_polylines() {
        let svg = curves_to_svg(&[("full".into(), vec![0.0, 0.5, 1.0])]);
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("</svg>"));
    }

    proptest! {
        #[test]
        fn levenshtein_is_a_metric(
            a in proptest::collection::vec(0usize..5, 0..12),
            b in proptest::collection::vec(0usize..5, 0..12),
            c in proptest::collection::vec(0usize..5, 0..12),
        ) {
            let dab = levenshtein(&a, &b);
            let dba = levenshtein(&b, &a);
            prop_assert_eq!(dab, dba);
            prop_assert_eq!(levenshtein(&a, &a), 0);
            let dac = levenshtein(&a, &c);
            let dcb = levenshtein(&c, &b);
            prop_assert!(dab <= dac + dcb);
            prop_assert!(dab <= a.len().max(b.len()));
        }

        #[test]
        fn compositionality_in_unit_range(
            seqs in proptest::collection::vec(
                proptest::collection::vec(0usize..5, 0..8), 2..8),
        ) {
            let f = compositionality(&seqs);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
