//! Program text and character-range sections.
//!
//! Positions count Unicode code points. Lines and columns are 1-based. CRLF
//! line endings are normalized to LF when a source is created, so every
//! section maps to the same line/column no matter how the file was saved.

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Immutable named program text.
pub struct Source {
    name: String,
    language_id: String,
    text: String,
    internal: bool,
    /// Byte offset of every code point, plus one trailing entry for the end.
    byte_offsets: Vec<u32>,
    /// Code point index at which each line starts.
    line_starts: Vec<u32>,
}

impl Source {
    /// Builds a detached source. Engines register sources through
    /// [`crate::Engine::create_source`], which also enforces unique names.
    pub fn new(name: &str, language_id: &str, text: &str, internal: bool) -> Result<Rc<Source>> {
        if name.is_empty() {
            return Err(Error::InvalidSource("source name must not be empty".into()));
        }
        let text = normalize_newlines(text);
        let mut byte_offsets = Vec::with_capacity(text.len() + 1);
        let mut line_starts = alloc::vec![0u32];
        for (i, (b, c)) in text.char_indices().enumerate() {
            byte_offsets.push(b as u32);
            if c == '\n' {
                line_starts.push(i as u32 + 1);
            }
        }
        byte_offsets.push(text.len() as u32);
        Ok(Rc::new(Source {
            name: name.into(),
            language_id: language_id.into(),
            text,
            internal,
            byte_offsets,
            line_starts,
        }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn language_id(&self) -> &str {
        &self.language_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn is_internal(&self) -> bool {
        self.internal
    }

    /// Length in code points.
    pub fn char_len(&self) -> usize {
        self.byte_offsets.len() - 1
    }

    /// Number of lines; an empty text has one (empty) line.
    pub fn line_count(&self) -> usize {
        self.line_starts.len()
    }

    /// 1-based line containing the code point at `index`. `index == char_len()`
    /// is accepted and maps to the last line.
    pub fn line_of(&self, index: usize) -> usize {
        match self.line_starts.binary_search(&(index as u32)) {
            Ok(i) => i + 1,
            Err(i) => i,
        }
    }

    /// 1-based (line, column) of the code point at `index`.
    pub fn line_col(&self, index: usize) -> (usize, usize) {
        let line = self.line_of(index);
        let col = index - self.line_starts[line - 1] as usize + 1;
        (line, col)
    }

    /// Code point index of the first character of `line`.
    pub fn line_start(&self, line: usize) -> Option<usize> {
        if line == 0 {
            return None;
        }
        self.line_starts.get(line - 1).map(|&s| s as usize)
    }

    /// Inverse of [`Source::line_col`].
    pub fn position_of(&self, line: usize, col: usize) -> Result<usize> {
        let start = self.line_start(line).ok_or(Error::InvalidPosition { line, col })?;
        let end = match self.line_starts.get(line) {
            // the newline itself is addressable as the last column
            Some(&next) => next as usize - 1,
            None => self.char_len(),
        };
        if col == 0 || start + col - 1 > end {
            return Err(Error::InvalidPosition { line, col });
        }
        Ok(start + col - 1)
    }

    /// Substring by code point range.
    pub fn slice(&self, start: usize, len: usize) -> &str {
        let b0 = self.byte_offsets[start] as usize;
        let b1 = self.byte_offsets[start + len] as usize;
        &self.text[b0..b1]
    }

    /// A checked section of this source.
    pub fn section(self: &Rc<Self>, char_start: usize, length: usize) -> Result<SourceSection> {
        if char_start.checked_add(length).is_none_or(|end| end > self.char_len()) {
            return Err(Error::InvalidSection {
                start: char_start,
                length,
                source_len: self.char_len(),
            });
        }
        Ok(SourceSection {
            source: self.clone(),
            char_start: char_start as u32,
            length: length as u32,
        })
    }
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Source")
            .field("name", &self.name)
            .field("language_id", &self.language_id)
            .field("internal", &self.internal)
            .field("chars", &self.char_len())
            .finish()
    }
}

fn normalize_newlines(text: &str) -> String {
    if text.contains('\r') {
        text.replace("\r\n", "\n")
    } else {
        text.into()
    }
}

/// A contiguous character range of a [`Source`].
#[derive(Clone)]
pub struct SourceSection {
    source: Rc<Source>,
    char_start: u32,
    length: u32,
}

/// Derived 1-based coordinates of a section. The end position names the last
/// character of the section (for an empty section it equals the start).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LineCol {
    pub start_line: usize,
    pub start_col: usize,
    pub end_line: usize,
    pub end_col: usize,
}

impl SourceSection {
    pub fn source(&self) -> &Rc<Source> {
        &self.source
    }

    pub fn char_start(&self) -> usize {
        self.char_start as usize
    }

    pub fn length(&self) -> usize {
        self.length as usize
    }

    /// Exclusive end index.
    pub fn char_end(&self) -> usize {
        (self.char_start + self.length) as usize
    }

    pub fn text(&self) -> &str {
        self.source.slice(self.char_start(), self.length())
    }

    pub fn line_col(&self) -> LineCol {
        let (start_line, start_col) = self.source.line_col(self.char_start());
        let last = if self.length == 0 {
            self.char_start()
        } else {
            self.char_end() - 1
        };
        let (end_line, end_col) = self.source.line_col(last);
        LineCol {
            start_line,
            start_col,
            end_line,
            end_col,
        }
    }

    pub fn start_line(&self) -> usize {
        self.source.line_of(self.char_start())
    }

    pub fn end_line(&self) -> usize {
        if self.length == 0 {
            self.start_line()
        } else {
            self.source.line_of(self.char_end() - 1)
        }
    }

    /// Whether `other` lies within this section of the same source.
    pub fn contains(&self, other: &SourceSection) -> bool {
        Rc::ptr_eq(&self.source, &other.source)
            && self.char_start <= other.char_start
            && other.char_end() <= self.char_end()
    }

    /// Smallest section covering both; both must come from the same source.
    pub fn join(&self, other: &SourceSection) -> SourceSection {
        let start = self.char_start.min(other.char_start);
        let end = self.char_end().max(other.char_end()) as u32;
        SourceSection {
            source: self.source.clone(),
            char_start: start,
            length: end - start,
        }
    }
}

impl PartialEq for SourceSection {
    fn eq(&self, other: &Self) -> bool {
        Rc::ptr_eq(&self.source, &other.source) && self.char_start == other.char_start && self.length == other.length
    }
}

impl Eq for SourceSection {}

impl fmt::Debug for SourceSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lc = self.line_col();
        write!(
            f,
            "{}:{}:{}-{}:{}",
            self.source.name, lc.start_line, lc.start_col, lc.end_line, lc.end_col
        )
    }
}

impl fmt::Display for SourceSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (line, col) = self.source.line_col(self.char_start());
        write!(f, "{}:{}:{}", self.source.name, line, col)
    }
}
