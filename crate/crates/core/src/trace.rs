//! Attack traces and their CSV form.

use std::io::Write;

use crate::error::Result;
use crate::linalg::Vector;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub iteration: usize,
    /// Monte-Carlo estimate of the attack objective at `x`.
    pub objective: f64,
    /// Posterior draws consumed by the gradient step that produced `x`.
    pub samples: usize,
    /// MLMC levels used by that step (empty for point attacks).
    pub levels: Vec<usize>,
    pub x: Vector,
}

/// Iterates of one projected-SGD attack. Step 0 is the clean input.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackTrace {
    pub steps: Vec<TraceStep>,
    pub final_x: Vector,
    /// Objective estimate at `final_x` from a fresh batch of draws.
    pub final_residual: f64,
}

impl AttackTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.objective).collect()
    }

    pub fn total_samples(&self) -> usize {
        self.steps.iter().map(|s| s.samples).sum()
    }

    /// Means of the objective over consecutive non-overlapping windows.
    pub fn smoothed_objective(&self, window: usize) -> Vec<f64> {
        let window = window.max(1);
        self.steps
            .chunks(window)
            .filter(|c| c.len() == window)
            .map(|c| c.iter().map(|s| s.objective).sum::<f64>() / window as f64)
            .collect()
    }

    /// Columns: `iteration,objective,samples,levels,x0..x{p-1}`; levels are
    /// `;`-separated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let p = self.final_x.len();
        let mut header = vec!["iteration".to_string(), "objective".into(), "samples".into(), "levels".into()];
        header.extend((0..p).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for s in &self.steps {
            let mut row = vec![
                s.iteration.to_string(),
                format!("{:.12e}", s.objective),
                s.samples.to_string(),
                s.levels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";"),
            ];
            row.extend(s.x.iter().map(|v| format!("{v:.12e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let step = |i: usize| TraceStep {
            iteration: i,
            objective: i as f64,
            samples: 3,
            levels: vec![0, 2],
            x: Vector::from_vec(vec![1.0, 2.0]),
        };
        let trace = AttackTrace {
            steps: vec![step(0), step(1), step(2)],
            final_x: Vector::from_vec(vec![1.0, 2.0]),
            final_residual: 0.0,
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iteration,objective,samples,levels,x0,x1");
        assert!(lines.next().unwrap().starts_with("0,0.000000000000e0,3,0;2,"));
        assert_eq!(trace.smoothed_objective(2), vec![0.5]);
        assert_eq!(trace.total_samples(), 9);
    }
}
