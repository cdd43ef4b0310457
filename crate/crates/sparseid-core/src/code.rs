use crate::error::{Error, Result};

/// A length-`L` code over the alphabet `{-1, 0, +1}`.
///
/// The number of nonzero entries (the support size) is tracked alongside the
/// entries; it is the quantity every search and privacy operation reasons
/// about.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TernaryCode {
    entries: Vec<i8>,
    support: usize,
}

impl TernaryCode {
    /// Builds a code from raw entries, rejecting anything outside `{-1, 0, +1}`.
    pub fn new(entries: Vec<i8>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|e| !matches!(**e, -1 | 0 | 1)) {
            return Err(Error::invalid(format!(
                "ternary code entry {bad} outside {{-1, 0, +1}}"
            )));
        }
        Ok(Self::from_signs(entries))
    }

    /// Internal constructor for entries already known to be in-alphabet.
    pub(crate) fn from_signs(entries: Vec<i8>) -> Self {
        debug_assert!(entries.iter().all(|e| matches!(*e, -1 | 0 | 1)));
        let support = entries.iter().filter(|e| **e != 0).count();
        Self { entries, support }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            entries: vec![0; len],
            support: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of nonzero entries.
    pub fn support_size(&self) -> usize {
        self.support
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    /// Iterates `(position, sign)` over the nonzero entries, in index order.
    pub fn support(&self) -> impl Iterator<Item = (usize, i8)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| **e != 0)
            .map(|(i, e)| (i, *e))
    }

    /// Indices of the zero entries, in index order.
    pub fn co_support(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| **e == 0)
            .map(|(i, _)| i)
    }

    /// Entry-wise negation.
    pub fn negated(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|e| -e).collect(),
            support: self.support,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_alphabet_entries() {
        assert!(TernaryCode::new(vec![1, 0, -1]).is_ok());
        assert!(TernaryCode::new(vec![1, 2, 0]).is_err());
        assert!(TernaryCode::new(vec![-3]).is_err());
    }

    #[test]
    fn support_tracks_nonzeros() {
        let c = TernaryCode::new(vec![1, 0, -1, 0, 1]).unwrap();
        assert_eq!(c.support_size(), 3);
        let idx: Vec<_> = c.support().collect();
        assert_eq!(idx, vec![(0, 1), (2, -1), (4, 1)]);
        let co: Vec<_> = c.co_support().collect();
        assert_eq!(co, vec![1, 3]);
    }

    #[test]
    fn negation_swaps_signs_keeps_support() {
        let c = TernaryCode::new(vec![1, 0, -1]).unwrap();
        let n = c.negated();
        assert_eq!(n.entries(), &[-1, 0, 1]);
        assert_eq!(n.support_size(), 2);
    }
}
