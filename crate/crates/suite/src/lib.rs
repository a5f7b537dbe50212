//! Pass/fail bookkeeping for the acceptance run.

use std::time::{Duration, Instant};

/// Outcome of one criterion: a verdict plus lines of evidence.
pub struct Verdict {
    pub pass: bool,
    pub detail: Vec<String>,
}

impl Verdict {
    pub fn new(pass: bool) -> Self {
        Verdict { pass, detail: Vec::new() }
    }

    pub fn note(mut self, line: impl Into<String>) -> Self {
        self.detail.push(line.into());
        self
    }

    /// Fails the verdict unless `elapsed` is within `limit`.
    pub fn within(mut self, elapsed: Duration, limit: Duration) -> Self {
        if elapsed > limit {
            self.pass = false;
            self.detail.push(format!("runtime {elapsed:.2?} exceeds {limit:?}"));
        }
        self
    }
}

impl From<Result<Verdict, String>> for Verdict {
    fn from(r: Result<Verdict, String>) -> Self {
        r.unwrap_or_else(|e| Verdict::new(false).note(e))
    }
}

#[derive(Default)]
pub struct Report {
    results: Vec<(String, bool)>,
}

impl Report {
    /// Runs one criterion and prints its PASS/FAIL line with evidence below.
    pub fn check(&mut self, name: &str, f: impl FnOnce() -> Result<Verdict, String>) {
        let started = Instant::now();
        let verdict = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
            Ok(r) => Verdict::from(r),
            Err(_) => Verdict::new(false).note("panicked"),
        };
        let elapsed = started.elapsed();
        let tag = if verdict.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name} ({elapsed:.1?})");
        for line in &verdict.detail {
            println!("     {line}");
        }
        self.results.push((name.to_owned(), verdict.pass));
    }

    pub fn failures(&self) -> Vec<&str> {
        self.results.iter().filter(|(_, p)| !p).map(|(n, _)| n.as_str()).collect()
    }

    /// Prints the tally and returns the process exit code.
    pub fn finish(&self) -> i32 {
        let failed = self.failures();
        println!("{} passed, {} failed", self.results.len() - failed.len(), failed.len());
        i32::from(!failed.is_empty())
    }
}
