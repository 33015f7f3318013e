//! Import of a flattened Zooniverse classification export.
//!
//! Expected CSV columns (extra columns are ignored):
//!
//! | column        | maps to                                   |
//! |---------------|-------------------------------------------|
//! | `user_name`   | `annotator_id`                            |
//! | `subject_ids` | `article_id`                              |
//! | `task`        | task name, e.g. `claim_span` or `stance`  |
//! | `value`       | span tasks: JSON list of inclusive `[start, end]` token ranges; categorical tasks: the label |
//!
//! Token ranges are expanded into masks whose length is the article's token
//! count.

use std::collections::BTreeMap;
use std::io::Read;

use serde::Deserialize;

use super::{AnnotatorLabeling, Task};

#[derive(Debug, thiserror::Error)]
pub enum ZooniverseError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: unknown task `{task}`")]
    UnknownTask { row: usize, task: String },
    #[error("row {row}: no token count for article `{article_id}`")]
    UnknownArticle { row: usize, article_id: String },
    #[error("row {row}: bad span list `{value}`: {message}")]
    BadRanges {
        row: usize,
        value: String,
        message: String,
    },
}

#[derive(Deserialize)]
struct Row {
    user_name: String,
    subject_ids: String,
    task: String,
    value: String,
}

pub fn import_zooniverse_csv<R: Read>(
    reader: R,
    token_counts: &BTreeMap<String, usize>,
) -> Result<Vec<AnnotatorLabeling>, ZooniverseError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row_no = i + 2;
        let r = row?;
        let task = Task::parse(r.task.trim()).ok_or_else(|| ZooniverseError::UnknownTask {
            row: row_no,
            task: r.task.clone(),
        })?;
        let article_id = r.subject_ids.trim().to_string();
        let mut labeling = AnnotatorLabeling {
            annotator_id: r.user_name.trim().to_string(),
            article_id: article_id.clone(),
            task,
            token_mask: None,
            label: None,
        };
        if task.is_span() {
            let n = *token_counts
                .get(&article_id)
                .ok_or(ZooniverseError::UnknownArticle {
                    row: row_no,
                    article_id,
                })?;
            let bad = |message: String| ZooniverseError::BadRanges {
                row: row_no,
                value: r.value.clone(),
                message,
            };
            let ranges: Vec<(usize, usize)> = if r.value.trim().is_empty() {
                Vec::new()
            } else {
                serde_json::from_str(&r.value).map_err(|e| bad(e.to_string()))?
            };
            let mut mask = vec![0u8; n];
            for (s, e) in ranges {
                if s > e || e >= n {
                    return Err(bad(format!("range [{s}, {e}] outside 0..{n}")));
                }
                mask[s..=e].iter_mut().for_each(|x| *x = 1);
            }
            labeling.token_mask = Some(mask);
        } else {
            labeling.label = Some(r.value.trim().to_string());
        }
        out.push(labeling);
    }
    Ok(out)
}
