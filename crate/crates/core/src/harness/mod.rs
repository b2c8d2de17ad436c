//! Monte Carlo orchestration, aggregation and CSV output.

pub mod config;
pub mod experiment;
pub mod presets;
pub mod report;
pub mod validate;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, ResultRecord};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = CompensatedSum::default();
    xs.into_iter().for_each(|x| s.add(x));
    s.value()
}

/// Mean, population variance and mean square of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub mean_square: f64,
}

/// Returns `None` for an empty sample.
pub fn aggregate(xs: &[f64]) -> Option<Summary> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    let variance = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / n;
    let mean_square = compensated_sum(xs.iter().map(|x| x * x)) / n;
    Some(Summary { count: xs.len(), mean, variance, mean_square })
}
