//! Event trace: SHA-256 over every line, optionally mirrored to a writer.

use std::io::{self, Write};

use sha2::{Digest, Sha256};

pub struct Trace<'a> {
    hasher: Sha256,
    sink: Option<&'a mut dyn Write>,
}

impl<'a> Trace<'a> {
    pub fn new(sink: Option<&'a mut dyn Write>) -> Self {
        Trace { hasher: Sha256::new(), sink }
    }

    pub fn record(&mut self, time_us: u64, seq: u64, kind: &str, subject: &str, detail: &str) -> io::Result<()> {
        let line = format!("{time_us}\t{seq}\t{kind}\t{subject}\t{detail}\n");
        self.hasher.update(line.as_bytes());
        if let Some(w) = self.sink.as_mut() {
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn finish(self) -> io::Result<String> {
        if let Some(w) = self.sink {
            w.flush()?;
        }
        Ok(self.hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}
