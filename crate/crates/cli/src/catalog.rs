//! The geometry catalog as text or JSON.

use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Entry {
    pub name: &'static str,
    pub params: &'static str,
    pub n: usize,
    pub q: &'static str,
    pub k_range: &'static str,
    pub dim: &'static str,
    pub notes: &'static str,
}

pub const CATALOG: &[Entry] = &[
    Entry {
        name: "FS_CP1",
        params: "d ≥ 1",
        n: 1,
        q: "q=0 only",
        k_range: "k ≥ 0; default grid resolves k ≤ 60",
        dim: "dim = d·k+1",
        notes: "Fubini–Study, positive everywhere",
    },
    Entry {
        name: "PERTURBED_CP1",
        params: "d ≥ 1, 0 ≤ t ≤ t_max(d) (or `tmax`)",
        n: 1,
        q: "q=0 only",
        k_range: "k ≥ 0; default grid resolves k ≤ 60",
        dim: "dim = d·k+1",
        notes: "radial bump; at t_max a degenerate circle, X(1) empty",
    },
    Entry {
        name: "NEG_CP1",
        params: "m ≥ 1",
        n: 1,
        q: "q=1 only",
        k_range: "k ≥ 1; default grid resolves k ≤ 60",
        dim: "dim = m·k−1",
        notes: "negative everywhere, all of X is X(1)",
    },
    Entry {
        name: "PRODUCT_CP1xCP1",
        params: "a, b ≥ 1",
        n: 2,
        q: "q=1 only",
        k_range: "k ≥ 1; default grid resolves k ≤ 12",
        dim: "dim = (a·k+1)(b·k−1)",
        notes: "O(a) ⊠ O(−b), all of X is X(1)",
    },
];

pub fn text() -> String {
    let mut s = String::new();
    for e in CATALOG {
        s.push_str(&format!("{}({})  n={}  {}  {}  {}\n    {}\n", e.name, e.params, e.n, e.q, e.dim, e.k_range, e.notes));
    }
    s
}

pub fn json() -> String {
    serde_json::to_string_pretty(CATALOG).expect("static catalog serializes")
}
