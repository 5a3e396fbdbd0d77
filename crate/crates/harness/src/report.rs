//! Plain-text summary tables.

use std::fmt::Write as _;

use anoseqs::envs::EnvId;
use anoseqs::metrics::{format_mean_std, MeanStd, MetricsSummary};

use crate::config::Algo;
use crate::pipeline::SweepPoint;

/// One row pair per environment: `Episode Cost` then `Episode Rewards`,
/// each cell `mean ± std` over the pooled evaluation episodes.
///
/// ```text
/// Environment | Metric | TD3 Mean ± Std | AnoSeqs Mean ± Std
/// hazard_point_goal | Episode Cost | 1.20 ± 0.40 | 0.50 ± 0.10
///  | Episode Rewards | 19.60 ± 0.30 | 19.10 ± 0.20
/// ```
pub fn summary_table(env: EnvId, columns: &[(Algo, MetricsSummary)]) -> String {
    let mut out = String::from("Environment | Metric");
    for (algo, _) in columns {
        let _ = write!(out, " | {} Mean ± Std", algo.label());
    }
    out.push('\n');
    let cell = |m: &MeanStd| format_mean_std(m.mean, m.std);
    let _ = write!(out, "{env} | Episode Cost");
    for (_, s) in columns {
        let _ = write!(out, " | {}", cell(&s.episode_cost));
    }
    out.push('\n');
    out.push_str(" | Episode Rewards");
    for (_, s) in columns {
        let _ = write!(out, " | {}", cell(&s.episode_return));
    }
    out.push('\n');
    out
}

/// `value,seed,...` rows for every run of a sweep.
pub fn sweep_csv(param: &str, points: &[SweepPoint]) -> String {
    let mut out = format!(
        "{param},seed,total_cost_rate,final_episodic_return,final_episodic_cost_rate,eval_episode_cost_mean,eval_episode_return_mean\n"
    );
    for p in points {
        for (run, eval) in p.runs.iter().zip(&p.evaluations) {
            let last = run.final_row();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.value,
                run.seed,
                run.total_cost_rate,
                last.map_or(f64::NAN, |r| r.episodic_return_mean),
                last.map_or(f64::NAN, |r| r.episodic_cost_rate_mean),
                eval.summary.episode_cost.mean,
                eval.summary.episode_return.mean
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(cost: (f64, f64), ret: (f64, f64)) -> MetricsSummary {
        let ms = |(mean, std)| MeanStd { mean, std };
        MetricsSummary {
            episodes: 100,
            episode_return: ms(ret),
            episode_cost: ms(cost),
            episode_cost_rate: ms((0.0, 0.0)),
            episode_length: ms((200.0, 0.0)),
        }
    }

    #[test]
    fn table_layout() {
        let t = summary_table(
            EnvId::HazardPointGoal,
            &[
                (Algo::Td3Baseline, summary((53.11, 19.06), (27.51, 0.48))),
                (Algo::Anoseqs, summary((52.9, 17.09), (27.22, 0.77))),
            ],
        );
        assert_eq!(
            t,
            "Environment | Metric | TD3 Mean ± Std | AnoSeqs Mean ± Std\n\
             hazard_point_goal | Episode Cost | 53.11 ± 19.06 | 52.90 ± 17.09\n \
             | Episode Rewards | 27.51 ± 0.48 | 27.22 ± 0.77\n"
        );
    }
}
