// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV readers and writers for trajectories, curves and analysis reports.
//!
//! Every table has a header row. Absent values are written as empty cells.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::analysis::{CalibrationBin, CorrelationMatrix, Detection};
use crate::error::{Error, Result};
use crate::metrics::TurnCurve;
use crate::probe::ProbVector;
use crate::task::Task;
use crate::trajectory::{Granularity, Trajectory, TrajectoryPoint};
use crate::transcript::{BigFive, Conversation, Strategy};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes trajectories, one row per point. The `role` column is filled for
/// turn points when the conversation is supplied.
pub fn write_trajectories<W: Write>(
    sink: W,
    rows: &[(&Trajectory, Option<&Conversation>)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let class_names = rows
        .first()
        .map(|(t, _)| t.task.class_names())
        .unwrap_or_default();
    let mut header = vec![
        "conversation_id".to_string(),
        "task".into(),
        "granularity".into(),
        "index".into(),
        "role".into(),
    ];
    header.extend(class_names.iter().map(|c| format!("p_{c}")));
    header.push("predicted_class".into());
    w.write_record(&header)?;

    for (traj, conv) in rows {
        if traj.task.num_classes() != class_names.len() {
            return Err(Error::InvalidValue(
                "trajectories with different class counts in one table".into(),
            ));
        }
        for p in &traj.points {
            let role = match (p.granularity, conv) {
                (Granularity::Turn | Granularity::ConversationEnd, Some(c)) => c
                    .turns
                    .get(p.index.wrapping_sub(1))
                    .map(|t| t.role.as_str())
                    .unwrap_or(""),
                _ => "",
            };
            let mut rec = vec![
                traj.conversation_id.clone(),
                traj.task.to_string(),
                p.granularity.to_string(),
                p.index.to_string(),
                role.to_string(),
            ];
            rec.extend(p.probs.as_slice().iter().map(|v| v.to_string()));
            rec.push(p.predicted_class.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory table back, grouping rows by conversation id in order
/// of first appearance. Probability columns are those prefixed `p_`.
pub fn read_trajectories<R: Read>(source: R) -> Result<Vec<Trajectory>> {
    let mut r = csv::Reader::from_reader(source);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("trajectory table lacks column `{name}`")))
    };
    let (id_col, task_col, gran_col, idx_col) = (
        col("conversation_id")?,
        col("task")?,
        col("granularity")?,
        col("index")?,
    );
    let prob_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("p_"))
        .map(|(i, _)| i)
        .collect();
    if prob_cols.len() < 2 {
        return Err(Error::Format(
            "trajectory table needs at least two p_ columns".into(),
        ));
    }

    let mut out: Vec<Trajectory> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let cell = |i: usize| rec.get(i).unwrap_or("");
        let bad = |what: &str| Error::Format(format!("row {line}: bad {what}"));
        let task: Task = cell(task_col).parse().map_err(|_| bad("task"))?;
        if task.num_classes() != prob_cols.len() {
            return Err(bad("number of probability columns for task"));
        }
        let granularity: Granularity = cell(gran_col).parse().map_err(|_| bad("granularity"))?;
        let index: usize = cell(idx_col).parse().map_err(|_| bad("index"))?;
        let probs = prob_cols
            .iter()
            .map(|&i| cell(i).parse::<f64>().map_err(|_| bad("probability")))
            .collect::<Result<Vec<_>>>()?;
        let probs =
            ProbVector::new(probs).map_err(|e| Error::Format(format!("row {line}: {e}")))?;

        let id = cell(id_col).to_string();
        let i = *slot.entry(id.clone()).or_insert_with(|| {
            out.push(Trajectory {
                conversation_id: id,
                task,
                points: Vec::new(),
            });
            out.len() - 1
        });
        let traj = &mut out[i];
        if traj.task != task {
            return Err(bad("task (differs from earlier rows)"));
        }
        if traj.points.last().is_some_and(|p| p.index >= index) {
            return Err(bad("index (not strictly increasing)"));
        }
        traj.points
            .push(TrajectoryPoint::new(granularity, index, probs));
    }
    Ok(out)
}

/// `turn,value,n`.
pub fn write_curve<W: Write>(sink: W, curve: &TurnCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["turn", "value", "n"])?;
    for p in &curve.points {
        w.write_record([p.turn.to_string(), p.value.to_string(), p.n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `turn,tpr,fpr,n_pos,n_neg`.
pub fn write_detection<W: Write>(sink: W, rows: &[Detection]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["turn", "tpr", "fpr", "n_pos", "n_neg"])?;
    for d in rows {
        w.write_record([
            d.turn.to_string(),
            opt(d.tpr),
            opt(d.fpr),
            d.n_pos.to_string(),
            d.n_neg.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn matrix_header() -> Vec<String> {
    std::iter::once("strategy".to_string())
        .chain(BigFive::ALL.iter().map(|t| t.to_string()))
        .collect()
}

/// Strategy rows × trait columns of Pearson r.
pub fn write_correlation<W: Write>(sink: W, m: &CorrelationMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(matrix_header())?;
    for s in Strategy::ALL {
        let mut rec = vec![s.to_string()];
        rec.extend(m.entries[s.class_index()].iter().map(|&v| opt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Sample counts behind [`write_correlation`], same shape.
pub fn write_correlation_counts<W: Write>(sink: W, m: &CorrelationMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(matrix_header())?;
    for s in Strategy::ALL {
        let mut rec = vec![s.to_string()];
        rec.extend(m.n[s.class_index()].iter().map(|n| n.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `label,proportion,n`.
pub fn write_calibration<W: Write>(sink: W, bins: &[CalibrationBin]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["label", "proportion", "n"])?;
    for b in bins {
        w.write_record([b.label.clone(), b.proportion.to_string(), b.n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `word_index,word,delta_p`.
pub fn write_ablation<W: Write>(sink: W, rows: &[(usize, String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["word_index", "word", "delta_p"])?;
    for (i, word, dp) in rows {
        w.write_record([i.to_string(), word.clone(), dp.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `epoch,loss`, epochs counted from 1.
pub fn write_loss_curve<W: Write>(sink: W, losses: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["epoch", "loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads two label columns from a CSV with a header. `columns` names them;
/// `None` takes the first two.
pub fn read_label_columns<R: Read>(
    source: R,
    columns: Option<(&str, &str)>,
) -> Result<(Vec<String>, Vec<String>)> {
    let mut r = csv::Reader::from_reader(source);
    let headers = r.headers()?.clone();
    let (ia, ib) = match columns {
        Some((a, b)) => {
            let find = |name: &str| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Format(format!("no column `{name}`")))
            };
            (find(a)?, find(b)?)
        }
        None if headers.len() >= 2 => (0, 1),
        None => return Err(Error::Format("need at least two columns".into())),
    };
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let get = |i: usize| {
            rec.get(i)
                .map(str::to_owned)
                .ok_or_else(|| Error::Format("short row".into()))
        };
        a.push(get(ia)?);
        b.push(get(ib)?);
    }
    Ok((a, b))
}
