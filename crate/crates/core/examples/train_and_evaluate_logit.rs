//! Ten-fold cross-validation of the three choice models on the default
//! synthetic district.
//!
//! cargo run --release --example train_and_evaluate_logit

use rwc::choice::{evaluate, EvalReport, FollowModel, FrequencyModel, LogitLearner};
use rwc::synth::{generate_district, GenParams};

fn main() -> rwc::Result<()> {
    let district = generate_district(&GenParams::default())?;
    let reports = vec![
        evaluate(&FollowModel, &district, 10, 0)?,
        evaluate(&FrequencyModel::default(), &district, 10, 0)?,
        evaluate(&LogitLearner::default(), &district, 10, 0)?,
    ];
    EvalReport::write_csv(&reports, std::io::stdout().lock())?;

    let logit = &reports[2];
    println!("\nlogit per fold (top-1 / top-3 / top-5):");
    for (k, f) in logit.per_fold.iter().enumerate() {
        println!("  fold {k}: {:.3} / {:.3} / {:.3}", f.accuracy, f.top3_accuracy, f.top5_accuracy);
    }
    Ok(())
}
