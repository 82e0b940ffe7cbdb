//! JSON forms of the tool reports. The schema is described in
//! `docs/reports.md`.

use serde::{Deserialize, Serialize};

use probevm_core::tools::{CoverageReport, ProfileReport, TraceEntry};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StatementJson {
    pub line: usize,
    pub column: usize,
    pub end_line: usize,
    pub end_column: usize,
    pub char_start: usize,
    pub length: usize,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCoverageJson {
    pub source: String,
    pub language: String,
    pub statements: Vec<StatementJson>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageJson {
    pub sources: Vec<SourceCoverageJson>,
}

impl From<&CoverageReport> for CoverageJson {
    fn from(r: &CoverageReport) -> Self {
        CoverageJson {
            sources: r
                .sources
                .iter()
                .map(|s| SourceCoverageJson {
                    source: s.source.clone(),
                    language: s.language.clone(),
                    statements: s
                        .statements
                        .iter()
                        .map(|c| StatementJson {
                            line: c.line,
                            column: c.column,
                            end_line: c.end_line,
                            end_column: c.end_column,
                            char_start: c.char_start,
                            length: c.length,
                            count: c.count,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RootProfileJson {
    pub name: String,
    pub source: String,
    pub line: usize,
    pub column: usize,
    pub count: u64,
    pub inclusive_ns: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileJson {
    pub roots: Vec<RootProfileJson>,
}

impl From<&ProfileReport> for ProfileJson {
    fn from(r: &ProfileReport) -> Self {
        ProfileJson {
            roots: r
                .roots
                .iter()
                .map(|p| RootProfileJson {
                    name: p.name.clone(),
                    source: p.source.clone(),
                    line: p.line,
                    column: p.column,
                    count: p.count,
                    inclusive_ns: p.inclusive_ns,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntryJson {
    pub source: String,
    pub line: usize,
    pub column: usize,
    pub root: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceJson {
    pub statements: u64,
    pub entries: Vec<TraceEntryJson>,
}

impl TraceJson {
    pub fn new(entries: &[TraceEntry]) -> TraceJson {
        TraceJson {
            statements: entries.len() as u64,
            entries: entries
                .iter()
                .map(|e| TraceEntryJson {
                    source: e.source.clone(),
                    line: e.line,
                    column: e.column,
                    root: e.root.clone(),
                })
                .collect(),
        }
    }
}

/// Everything `probevm run` prints after the program ends. Absent tools
/// are omitted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceJson>,
}

impl RunReport {
    pub fn is_empty(&self) -> bool {
        self.coverage.is_none() && self.profile.is_none() && self.trace.is_none()
    }
}
