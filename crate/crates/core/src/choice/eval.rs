//! k-fold cross-validation of choice models.
//!
//! Top-k accuracies are computed per fold and averaged. Accuracy,
//! precision, recall and F1 come from the confusion matrix summed over
//! folds. Rows of the confusion matrix are true schools, columns predicted.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::ChoiceLearner;
use crate::district::{District, SchoolId, StudentId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldMetrics {
    pub n_test: usize,
    pub accuracy: f64,
    pub top3_accuracy: f64,
    pub top5_accuracy: f64,
    /// Schools that label some student in the district but no training student of this fold.
    pub missing_train_classes: Vec<SchoolId>,
}

/// Precision, recall and F1 with macro and support-weighted averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

impl ClassMetrics {
    /// Averages run over classes that are either present in the labels or
    /// predicted at least once; undefined ratios count as 0.
    pub fn from_confusion(confusion: &[Vec<u64>]) -> Self {
        let k = confusion.len();
        let support: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
        let predicted: Vec<u64> = (0..k).map(|c| confusion.iter().map(|r| r[c]).sum()).collect();
        let total: u64 = support.iter().sum();
        let correct: u64 = (0..k).map(|c| confusion[c][c]).sum();

        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let mut m = ClassMetrics {
            accuracy: ratio(correct, total),
            macro_precision: 0.0,
            macro_recall: 0.0,
            macro_f1: 0.0,
            weighted_precision: 0.0,
            weighted_recall: 0.0,
            weighted_f1: 0.0,
        };
        let mut n_classes = 0usize;
        for c in 0..k {
            if support[c] == 0 && predicted[c] == 0 {
                continue;
            }
            n_classes += 1;
            let p = ratio(confusion[c][c], predicted[c]);
            let r = ratio(confusion[c][c], support[c]);
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            m.macro_precision += p;
            m.macro_recall += r;
            m.macro_f1 += f;
            let w = ratio(support[c], total);
            m.weighted_precision += w * p;
            m.weighted_recall += w * r;
            m.weighted_f1 += w * f;
        }
        if n_classes > 0 {
            let n = n_classes as f64;
            m.macro_precision /= n;
            m.macro_recall /= n;
            m.macro_f1 /= n;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub folds: usize,
    pub metrics: ClassMetrics,
    /// Absent for point-mass models.
    pub top3_accuracy: Option<f64>,
    pub top5_accuracy: Option<f64>,
    pub per_fold: Vec<FoldMetrics>,
    pub confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.metrics.accuracy
    }

    /// Classes missing from the training set of at least one fold.
    pub fn missing_classes(&self) -> Vec<SchoolId> {
        let mut all: Vec<SchoolId> = self
            .per_fold
            .iter()
            .flat_map(|f| f.missing_train_classes.iter().copied())
            .collect();
        all.sort();
        all.dedup();
        all
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "model",
        "accuracy",
        "top3_accuracy",
        "top5_accuracy",
        "macro_precision",
        "macro_recall",
        "macro_f1",
        "weighted_precision",
        "weighted_recall",
        "weighted_f1",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        let f = |v: f64| format!("{v:.4}");
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), f);
        let m = &self.metrics;
        vec![
            self.model.clone(),
            f(m.accuracy),
            opt(self.top3_accuracy),
            opt(self.top5_accuracy),
            f(m.macro_precision),
            f(m.macro_recall),
            f(m.macro_f1),
            f(m.weighted_precision),
            f(m.weighted_recall),
            f(m.weighted_f1),
        ]
    }

    /// Writes a table with one row per report.
    pub fn write_csv(reports: &[EvalReport], mut out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(Self::CSV_HEADER)?;
        for r in reports {
            w.write_record(r.csv_row())?;
        }
        w.flush().map_err(|e| Error::io(Path::new("<eval>"), e))?;
        Ok(())
    }
}

/// Cross-validates `learner` over `folds` random, near-equal partitions of
/// the students. Each test student is predicted at their status-quo zoned
/// school.
pub fn evaluate(learner: &dyn ChoiceLearner, district: &District, folds: usize, seed: u64) -> Result<EvalReport> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    let n = district.n_students();
    if n < folds {
        return Err(Error::Config(format!("{n} students cannot fill {folds} folds")));
    }
    let mut order: Vec<StudentId> = (0..n).map(StudentId::from_index).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_schools = district.n_schools();
    let mut label_present = vec![false; n_schools];
    for st in district.students() {
        label_present[st.actual_school.index()] = true;
    }

    let results: Vec<(FoldMetrics, Vec<Vec<u64>>, bool)> = (0..folds)
        .into_par_iter()
        .map(|f| -> Result<_> {
            let (test, train): (Vec<(usize, StudentId)>, Vec<(usize, StudentId)>) =
                order.iter().copied().enumerate().partition(|(k, _)| k % folds == f);
            let train: Vec<StudentId> = train.into_iter().map(|(_, s)| s).collect();
            let test: Vec<StudentId> = test.into_iter().map(|(_, s)| s).collect();

            let mut in_train = vec![false; n_schools];
            for id in &train {
                in_train[district.student(*id).actual_school.index()] = true;
            }
            let missing_train_classes = (0..n_schools)
                .filter(|&s| label_present[s] && !in_train[s])
                .map(SchoolId::from_index)
                .collect();

            let model = learner.fit(district, &train)?;
            let mut confusion = vec![vec![0u64; n_schools]; n_schools];
            let (mut hit1, mut hit3, mut hit5) = (0usize, 0usize, 0usize);
            for id in &test {
                let st = district.student(*id);
                let dist = model.distribution(district, st, district.status_quo_school_of(st))?;
                let ranked = dist.ranked();
                let label = st.actual_school;
                confusion[label.index()][ranked[0].index()] += 1;
                let rank = ranked.iter().position(|&s| s == label).expect("all schools ranked");
                hit1 += usize::from(rank < 1);
                hit3 += usize::from(rank < 3);
                hit5 += usize::from(rank < 5);
            }
            let nt = test.len() as f64;
            Ok((
                FoldMetrics {
                    n_test: test.len(),
                    accuracy: hit1 as f64 / nt,
                    top3_accuracy: hit3 as f64 / nt,
                    top5_accuracy: hit5 as f64 / nt,
                    missing_train_classes,
                },
                confusion,
                model.is_point_mass(),
            ))
        })
        .collect::<Result<_>>()?;

    let mut confusion = vec![vec![0u64; n_schools]; n_schools];
    for (_, c, _) in &results {
        for (row, add) in confusion.iter_mut().zip(c) {
            for (a, b) in row.iter_mut().zip(add) {
                *a += b;
            }
        }
    }
    let point_mass = results.iter().any(|r| r.2);
    let per_fold: Vec<FoldMetrics> = results.into_iter().map(|r| r.0).collect();
    let mean = |f: fn(&FoldMetrics) -> f64| per_fold.iter().map(f).sum::<f64>() / folds as f64;
    let (top3, top5) = if point_mass {
        (None, None)
    } else {
        (Some(mean(|f| f.top3_accuracy)), Some(mean(|f| f.top5_accuracy)))
    };

    Ok(EvalReport {
        model: learner.name().to_string(),
        folds,
        metrics: ClassMetrics::from_confusion(&confusion),
        top3_accuracy: top3,
        top5_accuracy: top5,
        per_fold,
        confusion,
    })
}
