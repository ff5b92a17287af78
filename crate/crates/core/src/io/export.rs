use crate::agent::{EpisodeLog, ValidationLog};
use crate::branch::EpochLog;
use crate::error::{Error, Result};
use crate::eval::{MetricCurve, NavStats};
use crate::saliency::SaliencySource;

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn training_log_csv(log: &[EpisodeLog]) -> Result<Vec<u8>> {
    to_csv(
        &["episode", "return", "steps", "success", "epsilon", "td_loss_mean", "skipped"],
        log.iter().map(|e| {
            vec![
                e.episode.to_string(),
                num(e.total_return),
                e.steps.to_string(),
                u8::from(e.success).to_string(),
                num(e.epsilon),
                num(e.td_loss_mean),
                u8::from(e.skipped).to_string(),
            ]
        }),
    )
}

pub fn validation_log_csv(log: &[ValidationLog], selected: Option<u64>) -> Result<Vec<u8>> {
    to_csv(
        &["episode", "trials", "successes", "collisions", "selected"],
        log.iter().map(|v| {
            vec![
                v.episode.to_string(),
                v.trials.to_string(),
                v.successes.to_string(),
                v.collisions.to_string(),
                u8::from(selected == Some(v.episode)).to_string(),
            ]
        }),
    )
}

pub fn distill_log_csv(log: &[EpochLog]) -> Result<Vec<u8>> {
    to_csv(
        &["epoch", "lr", "train_loss", "train_agreement", "heldout_agreement"],
        log.iter().map(|e| {
            vec![
                e.epoch.to_string(),
                num(e.lr),
                num(e.train_loss),
                num(e.train_agreement),
                num(e.heldout_agreement),
            ]
        }),
    )
}

/// Columns in the order successes, trials, mean final distance, collisions.
pub fn nav_stats_csv(stats: &NavStats) -> Result<Vec<u8>> {
    to_csv(
        &["successes", "trials", "avg_final_distance_m", "collisions", "skipped"],
        [vec![
            stats.successes.to_string(),
            stats.trials.to_string(),
            num(stats.mean_final_distance),
            stats.collisions.to_string(),
            stats.skipped.to_string(),
        ]],
    )
}

/// One row per fraction, one accuracy column per source.
pub fn curves_csv(curves: &[(SaliencySource, MetricCurve)]) -> Result<Vec<u8>> {
    let mut header = vec!["fraction"];
    header.extend(curves.iter().map(|(s, _)| s.name()));
    let n = curves.first().map_or(0, |(_, c)| c.fractions.len());
    to_csv(
        &header,
        (0..n).map(|i| {
            let mut row = vec![num(curves[0].1.fractions[i])];
            row.extend(curves.iter().map(|(_, c)| num(c.accuracy[i])));
            row
        }),
    )
}

pub fn auc_csv(deletion: &[(SaliencySource, MetricCurve)], insertion: &[(SaliencySource, MetricCurve)]) -> Result<Vec<u8>> {
    to_csv(
        &["source", "deletion_auc", "insertion_auc"],
        deletion.iter().map(|(s, d)| {
            let ins = insertion.iter().find(|(t, _)| t == s).map_or(f64::NAN, |(_, c)| c.auc);
            vec![s.name().to_string(), num(d.auc), num(ins)]
        }),
    )
}
