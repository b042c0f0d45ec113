use std::fmt;
use std::path::Path;

/// The default corpus, compiled in.
pub const DEFAULT_CORPUS: &str = include_str!("../../data/sqli-corpus.v1.txt");

const MUTATION_VERBS: [&str; 11] = [
    "INSERT", "UPDATE", "DELETE", "DROP", "ALTER", "TRUNCATE", "CREATE", "REPLACE", "MERGE", "GRANT",
    "EXEC",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayloadClass {
    ErrorBased,
    Boolean,
    TimeBased,
}

impl PayloadClass {
    fn tag(self) -> &'static str {
        match self {
            PayloadClass::ErrorBased => "error",
            PayloadClass::Boolean => "bool",
            PayloadClass::TimeBased => "time",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub class: PayloadClass,
    /// Template with `{V}`, `{T}` and `{S}` placeholders.
    pub template: String,
    pub line: usize,
}

impl Payload {
    pub fn render(&self, baseline: &str, truth: Option<bool>, sleep_s: u64) -> String {
        let t = match truth {
            Some(true) | None => "1",
            Some(false) => "2",
        };
        self.template
            .replace("{V}", baseline)
            .replace("{T}", t)
            .replace("{S}", &sleep_s.to_string())
    }

    pub fn mutates(&self) -> bool {
        let upper = self.template.to_ascii_uppercase();
        upper
            .split(|c: char| !c.is_ascii_alphabetic())
            .any(|w| MUTATION_VERBS.contains(&w))
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}", self.class.tag(), self.template)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub payloads: Vec<Payload>,
    /// Entries dropped because they would change data.
    pub excluded: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Corpus {
    /// Parses `<tag>\t<payload>` lines; `#` starts a comment line.
    pub fn parse(text: &str, allow_mutating: bool) -> Result<Corpus, CorpusError> {
        let mut payloads = Vec::new();
        let mut excluded = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let (tag, template) = raw.split_once('\t').ok_or_else(|| CorpusError::Line {
                line,
                message: "expected <class><TAB><payload>".into(),
            })?;
            let class = match tag.trim() {
                "error" => PayloadClass::ErrorBased,
                "bool" => PayloadClass::Boolean,
                "time" => PayloadClass::TimeBased,
                other => {
                    return Err(CorpusError::Line {
                        line,
                        message: format!("unknown class {other:?}"),
                    })
                }
            };
            if template.is_empty() {
                return Err(CorpusError::Line { line, message: "empty payload".into() });
            }
            if class == PayloadClass::Boolean && !template.contains("{T}") {
                return Err(CorpusError::Line {
                    line,
                    message: "boolean payload needs a {T} placeholder".into(),
                });
            }
            let p = Payload { class, template: template.to_string(), line };
            if !allow_mutating && p.mutates() {
                excluded += 1;
                continue;
            }
            payloads.push(p);
        }
        Ok(Corpus { payloads, excluded })
    }

    pub fn default_corpus() -> Corpus {
        Corpus::parse(DEFAULT_CORPUS, false).expect("shipped corpus parses")
    }

    pub fn load(path: &Path) -> Result<Corpus, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Corpus::parse(&text, false)
    }

    pub fn of(&self, class: PayloadClass) -> impl Iterator<Item = &Payload> {
        self.payloads.iter().filter(move |p| p.class == class)
    }
}
