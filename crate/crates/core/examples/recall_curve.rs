//! A small recall-versus-budget curve written as CSV to stdout.

use ppmsearch::experiment::{recall_curve, write_curve_csv, CurveRow};
use ppmsearch::{Method, Result, ScenarioConfig};

pub fn run_example() -> Result<Vec<CurveRow>> {
    let mut cfg = ScenarioConfig::default();
    cfg.experiment.methods = vec![Method::PpmPs, Method::Rpm, Method::Mpf];
    cfg.experiment.budgets = vec![100, 300];
    cfg.experiment.seeds = 3;
    cfg.experiment.scenes = 2;
    let rows = recall_curve(&cfg)?;
    let mut csv = Vec::new();
    write_curve_csv(&mut csv, &rows)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(rows)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
