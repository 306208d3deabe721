use std::process::ExitCode;

use dolr::acceptance::run_all;

fn main() -> ExitCode {
    let checks = run_all(|c| println!("{}", c.line()));
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
