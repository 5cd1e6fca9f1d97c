//! Line-oriented verification reports with a JSON trailer.

use serde::Serialize;
use serde_json::Value;

/// One verified condition.
#[derive(Clone, Debug, Serialize)]
pub struct Section {
    pub name: String,
    pub passed: bool,
    /// Smallest margin to the asserted bound; negative when violated.
    pub worst_slack: Option<f64>,
    pub seed: Option<u64>,
    pub lines: Vec<String>,
    pub details: Value,
}

impl Section {
    pub fn new(name: impl Into<String>, passed: bool, details: &impl Serialize) -> Self {
        Section {
            name: name.into(),
            passed,
            worst_slack: None,
            seed: None,
            lines: Vec::new(),
            details: serde_json::to_value(details).unwrap_or(Value::Null),
        }
    }

    pub fn slack(mut self, s: f64) -> Self {
        self.worst_slack = Some(s);
        self
    }

    pub fn seed(mut self, s: u64) -> Self {
        self.seed = Some(s);
        self
    }

    pub fn line(mut self, l: impl Into<String>) -> Self {
        self.lines.push(l.into());
        self
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub hash: String,
    pub sections: Vec<Section>,
}

impl Report {
    pub fn new(hash: impl Into<String>) -> Self {
        Report { hash: hash.into(), sections: Vec::new() }
    }

    pub fn push(&mut self, s: Section) {
        self.sections.push(s);
    }

    pub fn passed(&self) -> bool {
        self.sections.iter().all(|s| s.passed)
    }

    pub fn failed_names(&self) -> Vec<&str> {
        self.sections.iter().filter(|s| !s.passed).map(|s| s.name.as_str()).collect()
    }

    /// Marks `name` as failed, adding the section if absent.
    pub fn inject_fault(&mut self, name: &str) {
        match self.sections.iter_mut().find(|s| s.name == name) {
            Some(s) => {
                s.passed = false;
                s.lines.push("fault injected".into());
            }
            None => self.push(Section::new(name, false, &Value::Null).line("fault injected")),
        }
    }

    /// The machine-readable summary: overall verdict, per-section verdicts,
    /// worst slacks and seeds.
    pub fn summary(&self) -> Value {
        serde_json::json!({
            "passed": self.passed(),
            "hash": self.hash,
            "sections": self.sections.iter().map(|s| serde_json::json!({
                "name": s.name,
                "passed": s.passed,
                "worst_slack": s.worst_slack,
                "seed": s.seed,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).unwrap_or(Value::Null);
        if let Value::Object(m) = &mut v {
            m.insert("passed".into(), Value::Bool(self.passed()));
        }
        serde_json::to_string_pretty(&v).unwrap_or_default()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("hash {}\n", self.hash);
        for s in &self.sections {
            out += &format!("[{}] {}", if s.passed { "PASS" } else { "FAIL" }, s.name);
            if let Some(w) = s.worst_slack {
                out += &format!(" worst_slack={w:.6e}");
            }
            if let Some(seed) = s.seed {
                out += &format!(" seed={seed}");
            }
            out.push('\n');
            for l in &s.lines {
                out += &format!("    {l}\n");
            }
        }
        out += &format!("overall: {}\n", if self.passed() { "PASS" } else { "FAIL" });
        out += "--- json ---\n";
        out += &serde_json::to_string(&self.summary()).unwrap_or_default();
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailer_is_last_line_and_parses() {
        let mut r = Report::new("abc");
        r.push(Section::new("nesting", true, &1).slack(0.5).seed(7).line("ok"));
        r.push(Section::new("encoding", false, &2));
        let text = r.to_text();
        let last = text.lines().last().unwrap();
        let v: Value = serde_json::from_str(last).unwrap();
        assert_eq!(v["passed"], Value::Bool(false));
        assert_eq!(v["sections"][0]["seed"], 7);
        assert!(text.contains("[FAIL] encoding"));
    }

    #[test]
    fn injected_fault_flips_verdict() {
        let mut r = Report::new("h");
        r.push(Section::new("goodness", true, &()));
        assert!(r.passed());
        r.inject_fault("goodness");
        assert_eq!(r.failed_names(), vec!["goodness"]);
    }
}
