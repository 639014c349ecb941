//! Result tables written as CSV with a commented metadata header.

use std::io::Write;

use serde::Serialize;

pub const TABLE_SCHEMA: u32 = 1;

/// Build identifier recorded in every table.
pub fn git_describe() -> &'static str {
    env!("GWRW_GIT_DESCRIBE")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub section: String,
    pub statistic: String,
    pub parameter: String,
    pub value: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub note: String,
}

/// A named assertion of a suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<Row>,
}

impl ResultTable {
    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn push(&mut self, section: &str, statistic: &str, parameter: impl ToString, value: f64) {
        self.push_ci(section, statistic, parameter, value, None, "");
    }

    pub fn push_note(
        &mut self,
        section: &str,
        statistic: &str,
        parameter: impl ToString,
        value: f64,
        note: &str,
    ) {
        self.push_ci(section, statistic, parameter, value, None, note);
    }

    pub fn push_ci(
        &mut self,
        section: &str,
        statistic: &str,
        parameter: impl ToString,
        value: f64,
        ci: Option<(f64, f64)>,
        note: &str,
    ) {
        self.rows.push(Row {
            section: section.to_string(),
            statistic: statistic.to_string(),
            parameter: parameter.to_string(),
            value,
            ci_low: ci.map(|c| c.0),
            ci_high: ci.map(|c| c.1),
            note: note.to_string(),
        });
    }

    pub fn value(&self, section: &str, statistic: &str, parameter: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.section == section && r.statistic == statistic && r.parameter == parameter)
            .map(|r| r.value)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# schema: {TABLE_SCHEMA}")?;
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}: {}", v.replace('\n', " "))?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "section",
            "statistic",
            "parameter",
            "value",
            "ci_low",
            "ci_high",
            "note",
        ])
        .map_err(std::io::Error::other)?;
        for r in &self.rows {
            w.write_record([
                r.section.as_str(),
                r.statistic.as_str(),
                r.parameter.as_str(),
                &fmt(r.value),
                &r.ci_low.map(fmt).unwrap_or_default(),
                &r.ci_high.map(fmt).unwrap_or_default(),
                r.note.as_str(),
            ])
            .map_err(std::io::Error::other)?;
        }
        w.flush()
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 output")
    }
}

/// Shortest round-trip decimal form.
fn fmt(x: f64) -> String {
    format!("{x:?}")
}
