//! Filters as plain data, with a brute-force match predicate.

use std::rc::Rc;

use probevm_core::filter::SourceSectionFilter;
use probevm_core::node::{Node, Tag};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FilterSpec {
    pub sources: Option<Vec<String>>,
    pub languages: Option<Vec<String>>,
    pub tags: Option<Vec<Tag>>,
    pub lines: Option<(usize, usize)>,
    pub start_lines: Option<(usize, usize)>,
    pub index: Option<(usize, usize)>,
    pub include_internal: bool,
}

/// Where a node is, computed straight from the text.
#[derive(Clone, Debug)]
pub struct Place<'a> {
    pub source: &'a str,
    pub language: &'a str,
    pub internal: bool,
    pub text: &'a str,
    pub start: usize,
    pub len: usize,
}

fn line_at(text: &str, index: usize) -> usize {
    1 + text.chars().take(index).filter(|&c| c == '\n').count()
}

impl FilterSpec {
    pub fn random<R: Rng>(rng: &mut R, sources: &[&str], lines: usize, chars: usize) -> FilterSpec {
        let mut f = FilterSpec::default();
        let lines = lines.max(1);
        let range = |rng: &mut R, n: usize| {
            let a = rng.gen_range(1..=n + 1);
            let b = rng.gen_range(1..=n + 1);
            (a.min(b), a.max(b))
        };
        if rng.gen_bool(0.3) {
            let k = rng.gen_range(1..=2);
            f.sources = Some((0..k).map(|_| sources.choose(rng).unwrap().to_string()).collect());
        }
        if rng.gen_bool(0.15) {
            f.languages = Some(vec![["toylang", "minicalc"].choose(rng).unwrap().to_string()]);
        }
        if rng.gen_bool(0.6) {
            let k = rng.gen_range(1..=2);
            f.tags = Some((0..k).map(|_| *Tag::ALL.choose(rng).unwrap()).collect());
        }
        if rng.gen_bool(0.3) {
            f.lines = Some(range(rng, lines));
        }
        if rng.gen_bool(0.3) {
            f.start_lines = Some(range(rng, lines));
        }
        if rng.gen_bool(0.25) {
            let a = rng.gen_range(0..=chars + 1);
            let b = rng.gen_range(0..=chars + 1);
            f.index = Some((a.min(b), a.max(b)));
        }
        f.include_internal = rng.gen_bool(0.2);
        f
    }

    pub fn build(&self) -> Rc<SourceSectionFilter> {
        let mut b = SourceSectionFilter::builder().include_internal(self.include_internal);
        for s in self.sources.iter().flatten() {
            b = b.source_is(s);
        }
        for l in self.languages.iter().flatten() {
            b = b.language_is(l);
        }
        for &t in self.tags.iter().flatten() {
            b = b.tag_is(t);
        }
        if let Some((lo, hi)) = self.lines {
            b = b.line_in(lo, hi);
        }
        if let Some((lo, hi)) = self.start_lines {
            b = b.start_line_in(lo, hi);
        }
        if let Some((lo, hi)) = self.index {
            b = b.index_in(lo, hi);
        }
        b.build().expect("generated ranges are ordered")
    }

    pub fn matches_place(&self, tags: &[Tag], p: &Place<'_>) -> bool {
        if p.internal && !self.include_internal {
            return false;
        }
        if let Some(s) = &self.sources {
            if !s.iter().any(|s| s == p.source) {
                return false;
            }
        }
        if let Some(l) = &self.languages {
            if !l.iter().any(|l| l == p.language) {
                return false;
            }
        }
        if let Some(t) = &self.tags {
            if !t.iter().any(|t| tags.contains(t)) {
                return false;
            }
        }
        let first = line_at(p.text, p.start);
        let last = if p.len == 0 {
            first
        } else {
            line_at(p.text, p.start + p.len - 1)
        };
        if let Some((lo, hi)) = self.lines {
            if !(lo..=hi).any(|l| (first..=last).contains(&l)) {
                return false;
            }
        }
        if let Some((lo, hi)) = self.start_lines {
            if !(lo..=hi).contains(&first) {
                return false;
            }
        }
        if let Some((lo, hi)) = self.index {
            let query = if hi == lo { lo..lo + 1 } else { lo..hi };
            let hit = (p.start..p.start + p.len.max(1)).any(|i| query.contains(&i));
            if !hit {
                return false;
            }
        }
        true
    }

    /// Brute-force decision for a tree node.
    pub fn matches_node(&self, node: &Node) -> bool {
        if node.kind.is_instrumentation() {
            return false;
        }
        let Some(section) = &node.section else {
            return false;
        };
        let tags: Vec<Tag> = Tag::ALL.into_iter().filter(|&t| node.tags.contains(t)).collect();
        if tags.is_empty() {
            return false;
        }
        let src = section.source();
        self.matches_place(
            &tags,
            &Place {
                source: src.name(),
                language: src.language_id(),
                internal: src.is_internal(),
                text: src.text(),
                start: section.char_start(),
                len: section.length(),
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_overlap_by_enumeration() {
        let f = FilterSpec {
            lines: Some((2, 2)),
            ..Default::default()
        };
        let text = "a\nbb\nc";
        let at = |start, len| Place {
            source: "s",
            language: "toylang",
            internal: false,
            text,
            start,
            len,
        };
        assert!(f.matches_place(&[Tag::Statement], &at(0, 3)));
        assert!(!f.matches_place(&[Tag::Statement], &at(0, 1)));
        assert!(!f.matches_place(&[Tag::Statement], &at(5, 1)));
    }
}
