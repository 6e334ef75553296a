//! Runs every acceptance criterion and prints one PASS/FAIL line per
//! criterion. Exits with a nonzero status if any criterion fails.
//!
//! `MAGSPEC_CRITERIA=3,7` restricts the run to the listed criteria.

use magspec::acceptance::{AcceptanceSettings, Session, CRITERIA};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let ids: Vec<u8> = match std::env::var("MAGSPEC_CRITERIA") {
        Ok(list) => list.split(',').filter_map(|s| s.trim().parse().ok()).collect(),
        Err(_) => CRITERIA.iter().map(|c| c.0).collect(),
    };
    let mut session = Session::new(AcceptanceSettings::default());
    let mut failed = 0;
    for &id in &ids {
        let outcome = session.run(id);
        println!("{}", outcome.line());
        failed += usize::from(!outcome.pass);
    }
    println!("acceptance: {} passed, {} failed", ids.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
