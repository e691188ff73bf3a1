//! Acceptance suite. Every criterion prints one PASS/FAIL line; the process
//! exits nonzero when any fails.

use std::time::Instant;

mod oracles;

mod closed_loop;
mod geometry;
mod learning;
mod retrieval;
mod stereo;

type Outcome = Result<String, String>;

/// Fails with `msg` unless `ok`.
fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        (
            "back-projection round-trip",
            geometry::backprojection_round_trip,
        ),
        (
            "umeyama exactness and icp scale recovery",
            geometry::umeyama_and_icp,
        ),
        ("retrieval correctness", retrieval::retrieval_correctness),
        ("ssm receptive-field isolation", stereo::ssm_isolation),
        ("metric oracle equivalence", geometry::metric_oracles),
        ("closed-loop pipeline", closed_loop::closed_loop),
        ("dmd toy convergence", learning::dmd_toy),
        ("sampler statistics", stereo::sampler_statistics),
        ("trajectory defaults", retrieval::trajectory_defaults),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{}] {name} ({secs:.1}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name} ({secs:.1}s): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
