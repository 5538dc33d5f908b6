use crate::nncore::ParamKind;

/// One layer type: the shared structural kind and the names of every
/// member parameter. All members have identical (kind, dims); the
/// coefficient generator stores its projection pair once per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub kind: ParamKind,
    pub members: Vec<String>,
}

/// Maps structural parameter kinds to dense type ids, in first-appearance
/// order. Two parameters share an id exactly when their kinds (including
/// dimensions) are equal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerTypeRegistry {
    entries: Vec<RegistryEntry>,
}

impl LayerTypeRegistry {
    pub fn new() -> Self {
        LayerTypeRegistry::default()
    }

    /// Registers `member` and returns its layer-type id, reusing the
    /// entry of any previously seen identical kind.
    pub fn assign(&mut self, member: &str, kind: ParamKind) -> usize {
        if let Some(id) = self.entries.iter().position(|e| e.kind == kind) {
            self.entries[id].members.push(member.to_string());
            return id;
        }
        self.entries.push(RegistryEntry {
            kind,
            members: vec![member.to_string()],
        });
        self.entries.len() - 1
    }

    pub fn n_types(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, id: usize) -> &RegistryEntry {
        &self.entries[id]
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    /// Total members across all entries.
    pub fn n_members(&self) -> usize {
        self.entries.iter().map(|e| e.members.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_kinds_share_an_id_in_first_appearance_order() {
        let mut reg = LayerTypeRegistry::new();
        let a = reg.assign("w0", ParamKind::Linear { d_in: 96, d_out: 64 });
        let b = reg.assign("b0", ParamKind::Bias { d_out: 64 });
        let c = reg.assign("w1", ParamKind::Linear { d_in: 64, d_out: 64 });
        let d = reg.assign("b1", ParamKind::Bias { d_out: 64 });
        let e = reg.assign("w2", ParamKind::Linear { d_in: 64, d_out: 24 });
        let f = reg.assign("b2", ParamKind::Bias { d_out: 24 });
        assert_eq!((a, b, c, d, e, f), (0, 1, 2, 1, 3, 4));
        assert_eq!(reg.n_types(), 5);
        assert_eq!(reg.entry(1).members, vec!["b0".to_string(), "b1".to_string()]);
        assert_eq!(reg.n_members(), 6);
    }

    #[test]
    fn dims_must_match_exactly_to_share() {
        let mut reg = LayerTypeRegistry::new();
        let a = reg.assign("w0", ParamKind::Linear { d_in: 8, d_out: 8 });
        let b = reg.assign("w1", ParamKind::Linear { d_in: 8, d_out: 9 });
        let c = reg.assign(
            "f0",
            ParamKind::ConvFilter {
                d_in: 8,
                d_out: 8,
                d_k: 3,
            },
        );
        assert_eq!((a, b, c), (0, 1, 2));
    }
}
