//! Final localization error with and without variance voting.

use ppmsearch::experiment::{deviation_study, DeviationRow};
use ppmsearch::{Result, ScenarioConfig};

pub fn run_example() -> Result<Vec<DeviationRow>> {
    let mut cfg = ScenarioConfig::default();
    cfg.experiment.seeds = 5;
    let rows = deviation_study(&cfg)?;
    println!("voting object moving found   dx_px   dy_px");
    for r in &rows {
        println!(
            "{:>6} {:>6} {:>6} {:>5} {:>7.1} {:>7.1}",
            r.voting, r.object, r.moving, r.found, r.dx_mean, r.dy_mean
        );
    }
    Ok(rows)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
