//! Location queries: which AST nodes a binding applies to.
//!
//! Criteria are AND-ed; the values listed within one criterion are OR-ed. An
//! unset criterion matches everything. Line and index ranges match sections
//! that overlap them, with an empty index range or section counting as one
//! position. The start-line range matches sections whose first line falls
//! inside it.

use alloc::collections::BTreeSet;
use alloc::rc::Rc;
use alloc::string::String;

use crate::error::{Error, Result};
use crate::node::{Node, RootNode, Tag, TagSet};
use crate::source::{Source, SourceSection};

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SourceSectionFilter {
    source_names: Option<BTreeSet<String>>,
    language_ids: Option<BTreeSet<String>>,
    tags: Option<TagSet>,
    line_range: Option<(usize, usize)>,
    start_line_range: Option<(usize, usize)>,
    index_range: Option<(usize, usize)>,
    include_internal: bool,
}

#[derive(Clone, Debug, Default)]
pub struct FilterBuilder {
    filter: SourceSectionFilter,
    error: Option<String>,
}

impl FilterBuilder {
    pub fn source_is(mut self, name: &str) -> Self {
        self.filter
            .source_names
            .get_or_insert_with(BTreeSet::new)
            .insert(name.into());
        self
    }

    pub fn language_is(mut self, language_id: &str) -> Self {
        self.filter
            .language_ids
            .get_or_insert_with(BTreeSet::new)
            .insert(language_id.into());
        self
    }

    pub fn tag_is(mut self, tag: Tag) -> Self {
        self.filter.tags.get_or_insert(TagSet::EMPTY).insert(tag);
        self
    }

    pub fn tags_in(mut self, tags: &[Tag]) -> Self {
        for &t in tags {
            self = self.tag_is(t);
        }
        self
    }

    pub fn line_is(self, line: usize) -> Self {
        self.line_in(line, line)
    }

    /// Inclusive line range.
    pub fn line_in(mut self, lo: usize, hi: usize) -> Self {
        if lo > hi {
            self.error = Some(alloc::format!("inverted line range [{lo}, {hi}]"));
        }
        self.filter.line_range = Some((lo, hi));
        self
    }

    /// Inclusive range for the first line of a section.
    pub fn start_line_in(mut self, lo: usize, hi: usize) -> Self {
        if lo > hi {
            self.error = Some(alloc::format!("inverted line range [{lo}, {hi}]"));
        }
        self.filter.start_line_range = Some((lo, hi));
        self
    }

    pub fn start_line_is(self, line: usize) -> Self {
        self.start_line_in(line, line)
    }

    /// Half-open code point range `[lo, hi)`.
    pub fn index_in(mut self, lo: usize, hi: usize) -> Self {
        if lo > hi {
            self.error = Some(alloc::format!("inverted index range [{lo}, {hi})"));
        }
        self.filter.index_range = Some((lo, hi));
        self
    }

    pub fn include_internal(mut self, include: bool) -> Self {
        self.filter.include_internal = include;
        self
    }

    pub fn build(self) -> Result<Rc<SourceSectionFilter>> {
        match self.error {
            Some(e) => Err(Error::InvalidFilter(e)),
            None => Ok(Rc::new(self.filter)),
        }
    }
}

impl SourceSectionFilter {
    pub fn builder() -> FilterBuilder {
        FilterBuilder::default()
    }

    /// Filter matching every instrumentable, non-internal node.
    pub fn any() -> Rc<SourceSectionFilter> {
        Rc::new(SourceSectionFilter::default())
    }

    pub fn source_names(&self) -> Option<&BTreeSet<String>> {
        self.source_names.as_ref()
    }

    pub fn language_ids(&self) -> Option<&BTreeSet<String>> {
        self.language_ids.as_ref()
    }

    pub fn tags(&self) -> Option<TagSet> {
        self.tags
    }

    pub fn line_range(&self) -> Option<(usize, usize)> {
        self.line_range
    }

    pub fn start_line_range(&self) -> Option<(usize, usize)> {
        self.start_line_range
    }

    pub fn index_range(&self) -> Option<(usize, usize)> {
        self.index_range
    }

    pub fn includes_internal(&self) -> bool {
        self.include_internal
    }

    /// Source-level criteria only (name, language, internal flag).
    pub fn matches_source(&self, source: &Source) -> bool {
        if source.is_internal() && !self.include_internal {
            return false;
        }
        if let Some(names) = &self.source_names {
            if !names.contains(source.name()) {
                return false;
            }
        }
        if let Some(langs) = &self.language_ids {
            if !langs.contains(source.language_id()) {
                return false;
            }
        }
        true
    }

    fn matches_extent(&self, section: &SourceSection) -> bool {
        if let Some((lo, hi)) = self.line_range {
            if section.end_line() < lo || section.start_line() > hi {
                return false;
            }
        }
        if let Some((lo, hi)) = self.index_range {
            if !ranges_overlap(section.char_start(), section.char_end(), lo, hi) {
                return false;
            }
        }
        true
    }

    /// Whether the filter selects `node`. Non-instrumentable nodes never match.
    pub fn matches(&self, node: &Node) -> bool {
        if !node.is_instrumentable() {
            return false;
        }
        let Some(section) = &node.section else {
            return false;
        };
        if let Some(tags) = self.tags {
            if !tags.intersects(node.tags) {
                return false;
            }
        }
        if let Some((lo, hi)) = self.start_line_range {
            let line = section.start_line();
            if line < lo || line > hi {
                return false;
            }
        }
        self.matches_source(section.source()) && self.matches_extent(section)
    }

    /// Conservative root check: `false` guarantees no node of `root` matches.
    pub fn root_may_match(&self, root: &RootNode) -> bool {
        if !root.sections_nested {
            return true;
        }
        let Some(section) = &root.section else {
            return true;
        };
        // a node starting on line L lies inside the root, so the root overlaps L
        if let Some((lo, hi)) = self.start_line_range {
            if section.end_line() < lo || section.start_line() > hi {
                return false;
            }
        }
        self.matches_source(section.source()) && self.matches_extent(section)
    }
}

/// Overlap of half-open ranges. An empty range stands for the single
/// position it sits at.
fn ranges_overlap(start: usize, end: usize, lo: usize, hi: usize) -> bool {
    let end = end.max(start + 1);
    let hi = hi.max(lo + 1);
    start < hi && lo < end
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverted_ranges_rejected() {
        assert!(matches!(
            SourceSectionFilter::builder().line_in(5, 2).build(),
            Err(Error::InvalidFilter(_))
        ));
        assert!(SourceSectionFilter::builder().index_in(3, 1).build().is_err());
        assert!(SourceSectionFilter::builder().line_in(2, 2).build().is_ok());
    }

    #[test]
    fn builder_accumulates_or_values() {
        let f = SourceSectionFilter::builder()
            .source_is("a")
            .source_is("b")
            .tag_is(Tag::Statement)
            .tag_is(Tag::Call)
            .build()
            .unwrap();
        assert_eq!(f.source_names().unwrap().len(), 2);
        let tags = f.tags().unwrap();
        assert!(tags.contains(Tag::Statement) && tags.contains(Tag::Call));
    }
}
