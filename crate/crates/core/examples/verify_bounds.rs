//! Randomized checks that every quadratic upper bound used to derive the
//! spectral steps holds, printed as CSV.
//!
//! ```text
//! cargo run --release --example verify_bounds [seed]
//! ```

use ssd_rbm::verify::{reports_to_csv, run_suite, SuiteConfig};

fn main() -> ssd_rbm::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse()).expect("seed must be an integer");
    let reports = run_suite(&SuiteConfig::new(seed))?;
    print!("{}", reports_to_csv(&reports));
    let failed = reports.iter().filter(|r| !r.passed()).count();
    eprintln!("{} bounds checked, {failed} with violations", reports.len());
    Ok(())
}
