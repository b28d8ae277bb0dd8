//! Central-difference check of every parameter group, for each aggregator,
//! loss and attention setting.
//!
//! ```text
//! cargo run --example gradient_check
//! ```

use fignn::aggregator::AggregatorKind;
use fignn::training::{finite_difference_check, GradCheckConfig, LossMode};

fn main() -> fignn::Result<()> {
    let mut all_passed = true;
    for aggregator in [AggregatorKind::Gcn, AggregatorKind::SageMean] {
        for mode in [LossMode::Semi, LossMode::Unsup] {
            for attention in [true, false] {
                let cfg = GradCheckConfig {
                    aggregator,
                    mode,
                    attention,
                    ..Default::default()
                };
                let report = finite_difference_check(&cfg, 0)?;
                all_passed &= report.passed();
                println!("{aggregator} {mode} attention={attention}\n{report}");
            }
        }
    }
    println!(
        "{}",
        if all_passed {
            "all groups pass"
        } else {
            "some groups FAIL"
        }
    );
    Ok(())
}
