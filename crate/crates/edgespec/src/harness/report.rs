//! Summaries over metrics rows: group means, confidence intervals, and
//! head-to-head comparisons against the best-performing baseline.

use std::collections::BTreeMap;

use crate::harness::metrics::MetricsRow;

/// Two-sided 95% critical values of Student's t for 1..=30 degrees of
/// freedom; larger samples fall back to the normal value.
const T_95: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
    2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
    2.052, 2.048, 2.045, 2.042,
];

/// 95% two-sided critical value for `df` degrees of freedom.
pub fn t_critical_95(df: usize) -> f64 {
    if df == 0 {
        f64::INFINITY
    } else if df <= 30 {
        T_95[df - 1]
    } else {
        1.96
    }
}

/// Sample mean with a 95% confidence half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Half-width of the 95% interval; 0 when `n < 2`.
    pub ci_half_width: f64,
}

/// Mean and t-based 95% half-width of a sample.
pub fn mean_ci(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary { n: 0, mean: f64::NAN, ci_half_width: 0.0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Summary { n, mean, ci_half_width: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    Summary { n, mean, ci_half_width: t_critical_95(n - 1) * se }
}

/// Per-policy summary over aggregate allocation rows.
#[derive(Debug, Clone)]
pub struct PolicySummary {
    pub policy: String,
    pub objective: Summary,
    pub latency: Summary,
    pub energy: Summary,
}

/// Groups whole-rollout rows (empty `slot`, objective present) by policy.
/// Policies come back in alphabetical order.
pub fn summarize_policies(rows: &[MetricsRow]) -> Vec<PolicySummary> {
    let mut groups: BTreeMap<&str, Vec<&MetricsRow>> = BTreeMap::new();
    for row in rows {
        if row.slot.is_none() && row.mean_objective.is_some() {
            groups.entry(&row.policy).or_default().push(row);
        }
    }
    groups
        .into_iter()
        .map(|(policy, rows)| PolicySummary {
            policy: policy.to_string(),
            objective: mean_ci(
                &rows.iter().filter_map(|r| r.mean_objective).collect::<Vec<_>>(),
            ),
            latency: mean_ci(&rows.iter().map(|r| r.mean_latency_s).collect::<Vec<_>>()),
            energy: mean_ci(&rows.iter().filter_map(|r| r.mean_energy_j).collect::<Vec<_>>()),
        })
        .collect()
}

/// How a policy stacks up against the best (lowest mean objective) of the
/// other policies.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub policy: String,
    /// The rival with the lowest mean objective.
    pub best_rival: String,
    /// Relative objective reduction vs that rival; positive is better.
    pub improvement_frac: f64,
    /// Whether the two 95% intervals are disjoint.
    pub intervals_disjoint: bool,
}

/// Compares `policy` to the best of the other summarized policies.
/// Returns `None` when `policy` or a rival is missing.
pub fn compare_to_best_rival(summaries: &[PolicySummary], policy: &str) -> Option<Comparison> {
    let target = summaries.iter().find(|s| s.policy == policy)?;
    let rival = summaries
        .iter()
        .filter(|s| s.policy != policy)
        .min_by(|a, b| a.objective.mean.total_cmp(&b.objective.mean))?;
    let improvement_frac = (rival.objective.mean - target.objective.mean) / rival.objective.mean;
    let intervals_disjoint = target.objective.mean + target.objective.ci_half_width
        < rival.objective.mean - rival.objective.ci_half_width
        || rival.objective.mean + rival.objective.ci_half_width
            < target.objective.mean - target.objective.ci_half_width;
    Some(Comparison {
        policy: policy.to_string(),
        best_rival: rival.policy.clone(),
        improvement_frac,
        intervals_disjoint,
    })
}

/// Renders a plain-text report over any mix of metrics rows: an
/// allocation section (aggregate rows by policy) and a decoding section
/// (throughput by engine and rate).
pub fn render_report(rows: &[MetricsRow]) -> String {
    let mut out = String::new();

    let summaries = summarize_policies(rows);
    if !summaries.is_empty() {
        out.push_str("association/allocation (whole-rollout means, 95% CI)\n");
        for s in &summaries {
            out.push_str(&format!(
                "  {:<12} n={:<3} objective {:.4} ±{:.4}  latency {:.4} ±{:.4} s  energy {:.3e} J\n",
                s.policy,
                s.objective.n,
                s.objective.mean,
                s.objective.ci_half_width,
                s.latency.mean,
                s.latency.ci_half_width,
                s.energy.mean,
            ));
        }
        if let Some(c) = compare_to_best_rival(&summaries, "swap-sac") {
            out.push_str(&format!(
                "  swap-sac vs best rival ({}): {:+.1}% objective, 95% intervals {}\n",
                c.best_rival,
                c.improvement_frac * 100.0,
                if c.intervals_disjoint { "disjoint" } else { "overlapping" },
            ));
        }
    }

    let mut decode: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for row in rows {
        if let (Some(rate), Some(tps)) = (row.rate_bps, row.tokens_per_s) {
            decode.entry((row.policy.clone(), rate.to_bits())).or_default().push(tps);
        }
    }
    if !decode.is_empty() {
        out.push_str("decoding throughput (tokens/s by engine and uplink rate)\n");
        for ((policy, rate_bits), tps) in &decode {
            let s = mean_ci(tps);
            out.push_str(&format!(
                "  {:<14} rate {:>9.0} bps: {:.3} ±{:.3} (n={})\n",
                policy,
                f64::from_bits(*rate_bits),
                s.mean,
                s.ci_half_width,
                s.n,
            ));
        }
    }

    if out.is_empty() {
        out.push_str("no rows\n");
    }
    out
}
