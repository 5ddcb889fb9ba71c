use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One table row: a subject or topic group and its agreement scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// `subject`, `topic`, `all`, `memory` or `mood`.
    pub group_kind: String,
    pub group: String,
    pub events: usize,
    pub ccc_arousal: Option<f64>,
    pub ccc_valence: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub rows: Vec<ReportRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl Report {
    pub const CSV_HEADER: &'static str = "group_kind,group,events,ccc_arousal,ccc_valence,accuracy";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.group_kind,
                r.group,
                r.events,
                cell(r.ccc_arousal),
                cell(r.ccc_valence),
                cell(r.accuracy)
            ));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn row(&self, kind: &str, group: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.group_kind == kind && r.group == group)
    }
}
