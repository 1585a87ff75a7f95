//! Finite-difference verification of every backward pass, printed as a
//! table. The same harness backs the `stfn gradcheck` subcommand.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use stfn::gradcheck;

fn main() {
    let checks = gradcheck::run_all(1, false);
    println!("{:<42} {:>14} {:>10} {:>7}", "component", "max_rel_error", "tolerance", "status");
    let mut failures = 0;
    for c in &checks {
        println!(
            "{:<42} {:>14.3e} {:>10.0e} {:>7}",
            c.component,
            c.max_rel_error,
            c.tolerance,
            if c.passed() { "PASS" } else { "FAIL" }
        );
        if !c.passed() {
            failures += 1;
        }
    }
    println!("\n{} components checked, {failures} failures", checks.len());
}
