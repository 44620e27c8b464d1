use std::fmt::Write;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Per-token training NLL accumulated during the epoch.
    pub train_nll: f64,
    /// Per-token dev NLL after the epoch.
    pub dev_nll: f64,
    pub seconds: f64,
    pub words_per_sec: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub skipped_steps: usize,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "epoch,train_nll,dev_nll,seconds,words_per_sec";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{:.3},{:.1}",
                e.epoch, e.train_nll, e.dev_nll, e.seconds, e.words_per_sec
            );
        }
        out
    }

    pub fn best_dev_nll(&self) -> Option<f64> {
        self.epochs.iter().map(|e| e.dev_nll).min_by(f64::total_cmp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let r = TrainReport {
            epochs: vec![EpochStats {
                epoch: 1,
                train_nll: 2.5,
                dev_nll: 2.0,
                seconds: 1.0,
                words_per_sec: 960.0,
            }],
            best_epoch: 1,
            skipped_steps: 0,
        };
        assert_eq!(
            r.to_csv(),
            "epoch,train_nll,dev_nll,seconds,words_per_sec\n1,2.5,2,1.000,960.0\n"
        );
        assert_eq!(r.best_dev_nll(), Some(2.0));
    }
}
