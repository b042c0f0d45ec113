use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::registry::{CheckId, Severity};

pub const SCHEMA_VERSION: &str = "utmsec.report/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotAssessable,
    Skipped,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::NotAssessable => "not_assessable",
            CheckStatus::Skipped => "skipped",
        }
    }

    /// Combines per-target verdicts: any failure wins, then any gap.
    pub fn worst(statuses: impl IntoIterator<Item = CheckStatus>) -> CheckStatus {
        let mut out = CheckStatus::Pass;
        for s in statuses {
            match s {
                CheckStatus::Fail => return CheckStatus::Fail,
                CheckStatus::NotAssessable => out = CheckStatus::NotAssessable,
                _ => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check_id: CheckId,
    pub status: CheckStatus,
    pub evidence: Vec<String>,
    /// Component the failure is attributed to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component_id: Option<String>,
    pub duration_ms: u64,
}

impl CheckResult {
    pub fn new(check_id: CheckId, status: CheckStatus) -> Self {
        CheckResult {
            check_id,
            status,
            evidence: Vec::new(),
            component_id: None,
            duration_ms: 0,
        }
    }

    pub fn pass(check_id: CheckId, evidence: impl Into<String>) -> Self {
        Self::new(check_id, CheckStatus::Pass).with(evidence)
    }

    pub fn fail(check_id: CheckId, evidence: impl Into<String>) -> Self {
        Self::new(check_id, CheckStatus::Fail).with(evidence)
    }

    pub fn not_assessable(check_id: CheckId, reason: impl Into<String>) -> Self {
        Self::new(check_id, CheckStatus::NotAssessable).with(reason)
    }

    pub fn skipped(check_id: CheckId, reason: impl Into<String>) -> Self {
        Self::new(check_id, CheckStatus::Skipped).with(reason)
    }

    /// Builds a result from collected evidence and per-target verdicts.
    pub fn from_verdicts(
        check_id: CheckId,
        verdicts: impl IntoIterator<Item = CheckStatus>,
        evidence: Vec<String>,
    ) -> Self {
        CheckResult {
            check_id,
            status: CheckStatus::worst(verdicts),
            evidence,
            component_id: None,
            duration_ms: 0,
        }
    }

    pub fn with(mut self, evidence: impl Into<String>) -> Self {
        self.evidence.push(evidence.into());
        self
    }

    pub fn on(mut self, component_id: impl Into<String>) -> Self {
        self.component_id = Some(component_id.into());
        self
    }

    pub fn is_fail(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub check_id: CheckId,
    pub severity: Severity,
    pub title: String,
    pub remediation: String,
    pub component_id: String,
}

impl Finding {
    pub fn for_result(result: &CheckResult) -> Finding {
        let info = result.check_id.info();
        Finding {
            check_id: result.check_id,
            severity: info.severity,
            title: info.title.to_string(),
            remediation: info.remediation.to_string(),
            component_id: result
                .component_id
                .clone()
                .unwrap_or_else(|| "deployment".to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        ToolInfo {
            name: "utmsec".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub pass: usize,
    pub fail: usize,
    pub not_assessable: usize,
    pub skipped: usize,
    pub findings: usize,
    pub by_severity: BTreeMap<Severity, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub tool: ToolInfo,
    pub generated_at: String,
    pub manifest_digest: String,
    pub results: Vec<CheckResult>,
    pub findings: Vec<Finding>,
    pub summary: Summary,
}

impl Report {
    /// Sorts results, derives findings and counts.
    pub fn assemble(
        manifest_digest: String,
        generated_at: String,
        mut results: Vec<CheckResult>,
    ) -> Report {
        results.sort_by_key(|r| r.check_id);
        let findings: Vec<Finding> = results
            .iter()
            .filter(|r| r.is_fail())
            .map(Finding::for_result)
            .collect();
        let count = |s: CheckStatus| results.iter().filter(|r| r.status == s).count();
        let mut by_severity = BTreeMap::new();
        for f in &findings {
            *by_severity.entry(f.severity).or_insert(0) += 1;
        }
        let summary = Summary {
            total: results.len(),
            pass: count(CheckStatus::Pass),
            fail: count(CheckStatus::Fail),
            not_assessable: count(CheckStatus::NotAssessable),
            skipped: count(CheckStatus::Skipped),
            findings: findings.len(),
            by_severity,
        };
        Report {
            schema_version: SCHEMA_VERSION.to_string(),
            tool: ToolInfo::default(),
            generated_at,
            manifest_digest,
            results,
            findings,
            summary,
        }
    }

    pub fn result(&self, id: CheckId) -> Option<&CheckResult> {
        self.results.iter().find(|r| r.check_id == id)
    }

    pub fn failed_ids(&self) -> Vec<CheckId> {
        self.findings.iter().map(|f| f.check_id).collect()
    }

    /// 0 when clean, 1 when there are findings.
    pub fn exit_code(&self) -> i32 {
        if self.findings.is_empty() {
            0
        } else {
            1
        }
    }
}
