//! Per-generation population statistics.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::{mean_var, quantile_sorted};
use crate::types::Agent;

/// Where in the generation cycle a record was taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initial,
    /// Inside an inner training block.
    Training,
    /// After training, before the jump.
    PreJump,
    /// Immediately after the selection–mutation jump.
    PostJump,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Initial => "initial",
            Phase::Training => "training",
            Phase::PreJump => "pre_jump",
            Phase::PostJump => "post_jump",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub generation: usize,
    pub sim_time: f64,
    pub phase: Phase,
    pub fitness_q10: f64,
    pub fitness_median: f64,
    pub fitness_q90: f64,
    pub mean_h: Vec<f64>,
    pub var_h: Vec<f64>,
    pub mean_theta: Option<Vec<f64>>,
    pub extra: BTreeMap<String, f64>,
}

impl MetricsRecord {
    /// Statistics of a population with the given (reported) fitness values.
    pub fn from_population(
        generation: usize,
        sim_time: f64,
        phase: Phase,
        agents: &[Agent],
        fitness: &[f64],
    ) -> Self {
        let mut sorted = fitness.to_vec();
        sorted.sort_by(f64::total_cmp);
        let dh = agents.first().map_or(0, |a| a.h.len());
        let dt = agents.first().map_or(0, |a| a.theta.len());
        let column = |f: &dyn Fn(&Agent) -> f64| -> (f64, f64) {
            let xs: Vec<f64> = agents.iter().map(f).collect();
            mean_var(&xs)
        };
        let (mean_h, var_h): (Vec<f64>, Vec<f64>) =
            (0..dh).map(|k| column(&|a: &Agent| a.h[k])).unzip();
        let mean_theta = (0..dt).map(|k| column(&|a: &Agent| a.theta[k]).0).collect();
        Self {
            generation,
            sim_time,
            phase,
            fitness_q10: quantile_sorted(&sorted, 0.1),
            fitness_median: quantile_sorted(&sorted, 0.5),
            fitness_q90: quantile_sorted(&sorted, 0.9),
            mean_h,
            var_h,
            mean_theta: Some(mean_theta),
            extra: BTreeMap::new(),
        }
    }
}

/// Writes the metrics CSV. Columns: `generation, sim_time, phase,
/// fitness_q10, fitness_median, fitness_q90, mean_h0.., var_h0..`, then
/// `mean_theta0..` and any extra keys (taken from the first record).
pub fn write_metrics_csv<W: Write>(mut w: W, records: &[MetricsRecord]) -> Result<()> {
    let Some(first) = records.first() else {
        return Ok(());
    };
    let dh = first.mean_h.len();
    let dt = first.mean_theta.as_ref().map_or(0, Vec::len);
    let extra_keys: Vec<&String> = first.extra.keys().collect();
    let mut header = vec![
        "generation".to_string(),
        "sim_time".into(),
        "phase".into(),
        "fitness_q10".into(),
        "fitness_median".into(),
        "fitness_q90".into(),
    ];
    header.extend((0..dh).map(|k| format!("mean_h{k}")));
    header.extend((0..dh).map(|k| format!("var_h{k}")));
    header.extend((0..dt).map(|k| format!("mean_theta{k}")));
    header.extend(extra_keys.iter().map(|k| k.to_string()));
    writeln!(w, "{}", header.join(","))?;
    for r in records {
        let mut row = vec![
            r.generation.to_string(),
            r.sim_time.to_string(),
            r.phase.as_str().to_string(),
            r.fitness_q10.to_string(),
            r.fitness_median.to_string(),
            r.fitness_q90.to_string(),
        ];
        row.extend(r.mean_h.iter().map(f64::to_string));
        row.extend(r.var_h.iter().map(f64::to_string));
        if let Some(mt) = &r.mean_theta {
            row.extend(mt.iter().map(f64::to_string));
        }
        row.extend(
            extra_keys
                .iter()
                .map(|k| r.extra.get(*k).map_or(String::new(), f64::to_string)),
        );
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn quantiles_are_ordered(f in proptest::collection::vec(-100.0f64..100.0, 1..200)) {
            let agents: Vec<Agent> = (0..f.len()).map(|i| Agent::new(i, vec![0.0], vec![0.0])).collect();
            let r = MetricsRecord::from_population(0, 0.0, Phase::Initial, &agents, &f);
            prop_assert!(r.fitness_q10 <= r.fitness_median && r.fitness_median <= r.fitness_q90);
        }
    }

    #[test]
    fn csv_has_expected_header() {
        let agents = vec![Agent::new(0, vec![1.0, 2.0], vec![0.5, 0.25])];
        let r = MetricsRecord::from_population(3, 1.5, Phase::PostJump, &agents, &[0.7]);
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "generation,sim_time,phase,fitness_q10,fitness_median,fitness_q90,mean_h0,mean_h1,var_h0,var_h1,mean_theta0,mean_theta1"
        );
        assert_eq!(lines.next().unwrap(), "3,1.5,post_jump,0.7,0.7,0.7,0.5,0.25,0,0,1,2");
    }
}
