use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ScorerError, UncertaintyScorer};
use crate::text::word_tokens_lower;

/// Replays fixed distributions per round. Rounds past the script reuse the
/// last one.
#[derive(Debug, Clone)]
pub struct ScriptedScorer {
    num_classes: usize,
    rounds: Vec<BTreeMap<String, Vec<f64>>>,
}

impl ScriptedScorer {
    pub fn new(num_classes: usize, rounds: Vec<BTreeMap<String, Vec<f64>>>) -> Self {
        Self { num_classes, rounds }
    }
}

impl UncertaintyScorer for ScriptedScorer {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn score(&self, round: usize, article_id: &str) -> Result<Vec<f64>, ScorerError> {
        let script = self
            .rounds
            .get(round.saturating_sub(1))
            .or(self.rounds.last())
            .ok_or_else(|| ScorerError("empty script".into()))?;
        script
            .get(article_id)
            .cloned()
            .ok_or_else(|| ScorerError(format!("no scripted score for `{article_id}`")))
    }
}

const ARGUMENT_CUES: &[&str] = &[
    "because", "therefore", "since", "thus", "hence", "due", "consequently", "should", "must",
    "will", "would", "could", "expects", "expected", "argued", "argues", "said", "says", "believes",
    "according", "however", "although", "but", "warned", "claims", "evidence", "shows",
];

/// Two classes, `[no argument, argument]`. The argument probability rises
/// with the density of argument cue words, so texts near the middle of the
/// scale come out most uncertain.
#[derive(Debug, Clone)]
pub struct LexicalScorer {
    texts: BTreeMap<String, String>,
}

impl LexicalScorer {
    pub fn new(texts: impl IntoIterator<Item = (String, String)>) -> Self {
        Self {
            texts: texts.into_iter().collect(),
        }
    }

    pub fn argument_probability(text: &str) -> f64 {
        let tokens = word_tokens_lower(text);
        if tokens.is_empty() {
            return 0.0;
        }
        let cues = tokens.iter().filter(|t| ARGUMENT_CUES.contains(&t.as_str())).count();
        let density = 25.0 * cues as f64 / tokens.len() as f64;
        density / (1.0 + density)
    }
}

impl UncertaintyScorer for LexicalScorer {
    fn num_classes(&self) -> usize {
        2
    }

    fn score(&self, _round: usize, article_id: &str) -> Result<Vec<f64>, ScorerError> {
        let text = self
            .texts
            .get(article_id)
            .ok_or_else(|| ScorerError(format!("unknown article `{article_id}`")))?;
        let p = Self::argument_probability(text);
        Ok(vec![1.0 - p, p])
    }
}

#[derive(Serialize)]
struct Request<'a> {
    article_id: &'a str,
    round: usize,
}

#[derive(Deserialize)]
struct Response {
    prob_dist: Vec<f64>,
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// External model over a line-delimited JSON protocol: one
/// `{"article_id": .., "round": ..}` line in, one `{"prob_dist": [..]}` line
/// out. Calls are serialized over a single child process.
pub struct SubprocessScorer {
    num_classes: usize,
    pipe: Mutex<Pipe>,
}

impl SubprocessScorer {
    pub fn spawn(program: &str, args: &[String], num_classes: usize) -> Result<Self, ScorerError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| ScorerError(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout piped"));
        Ok(Self {
            num_classes,
            pipe: Mutex::new(Pipe {
                child,
                stdin,
                stdout,
            }),
        })
    }
}

impl UncertaintyScorer for SubprocessScorer {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn score(&self, round: usize, article_id: &str) -> Result<Vec<f64>, ScorerError> {
        let mut pipe = self.pipe.lock().map_err(|_| ScorerError("scorer lock poisoned".into()))?;
        let line = serde_json::to_string(&Request { article_id, round })
            .map_err(|e| ScorerError(e.to_string()))?;
        writeln!(pipe.stdin, "{line}").map_err(|e| ScorerError(format!("write: {e}")))?;
        pipe.stdin.flush().map_err(|e| ScorerError(format!("flush: {e}")))?;
        let mut reply = String::new();
        let n = pipe
            .stdout
            .read_line(&mut reply)
            .map_err(|e| ScorerError(format!("read: {e}")))?;
        if n == 0 {
            return Err(ScorerError("scorer process closed its output".into()));
        }
        let r: Response = serde_json::from_str(reply.trim())
            .map_err(|e| ScorerError(format!("bad reply for `{article_id}`: {e}")))?;
        Ok(r.prob_dist)
    }
}

impl Drop for SubprocessScorer {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}
