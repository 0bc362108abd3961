use std::collections::HashSet;

use super::{split_counts, Dataset, Split};

/// Outcome of the protocol checks; `violations` is empty for a conforming dataset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuditReport {
    pub users_checked: usize,
    pub cold_users_checked: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks split sizes, split disjointness, per-user train/test item disjointness, and that
/// every referenced id resolves.
pub fn audit(d: &Dataset) -> AuditReport {
    let mut report = AuditReport::default();
    let v = &mut report.violations;

    for o in &d.outfits {
        if o.items.is_empty() {
            v.push(format!("outfit {} is empty", o.id));
        }
        if let Some(bad) = o.items.iter().find(|&&i| i >= d.items.len()) {
            v.push(format!("outfit {} references unknown item {bad}", o.id));
        }
    }
    let resolves = |ids: &[usize]| ids.iter().all(|&o| o < d.outfits.len());
    let items_of = |ids: &[usize]| -> HashSet<usize> {
        ids.iter()
            .filter_map(|&o| d.outfits.get(o))
            .flat_map(|o| o.items.iter().copied())
            .collect()
    };

    for (u, s) in d.users.iter().enumerate() {
        let total: usize = Split::ALL.iter().map(|&sp| s.get(sp).len()).sum();
        let expected = split_counts(total);
        let actual = Split::ALL.map(|sp| s.get(sp).len());
        if actual != expected {
            v.push(format!("user {u}: split sizes {actual:?}, expected {expected:?} for 9:2:2"));
        }
        if s.val_teacher.len().abs_diff(s.val_student.len()) > 1 {
            v.push(format!("user {u}: validation halves differ by more than one"));
        }
        let mut seen = HashSet::new();
        for sp in Split::ALL {
            if !resolves(s.get(sp)) {
                v.push(format!("user {u}: {sp} references an unknown outfit"));
            }
            for &o in s.get(sp) {
                if !seen.insert(o) {
                    v.push(format!("user {u}: outfit {o} appears in more than one split slot"));
                }
            }
        }
        let shared = items_of(&s.train).intersection(&items_of(&s.test)).count();
        if shared > 0 {
            v.push(format!("user {u}: {shared} items shared between train and test"));
        }
        report.users_checked += 1;
    }

    for cu in &d.cold_users {
        if cu.profile.is_empty() {
            v.push(format!("cold user {}: empty profile", cu.id));
        }
        if !resolves(&cu.profile) || !resolves(&cu.test) {
            v.push(format!("cold user {}: unknown outfit reference", cu.id));
        }
        let shared = items_of(&cu.profile).intersection(&items_of(&cu.test)).count();
        if shared > 0 {
            v.push(format!("cold user {}: {shared} items shared between profile and test", cu.id));
        }
        if cu.id < d.users.len() {
            v.push(format!("cold user {} collides with a known user id", cu.id));
        }
        report.cold_users_checked += 1;
    }
    report
}
