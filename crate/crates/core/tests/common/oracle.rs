//! Reference implementations written separately from the library code, used
//! to cross-check it. They favour obviousness over speed.

use sha2::{Digest, Sha256};

pub type H = [u8; 32];

pub fn sha256(data: &[u8]) -> H {
    Sha256::digest(data).into()
}

// ---- canonical JSON ----------------------------------------------------

#[derive(Debug, Clone)]
pub enum J {
    Obj(Vec<(String, J)>),
    Arr(Vec<J>),
    Str(String),
    Int(i128),
    Bool(bool),
}

pub fn obj(fields: &[(&str, J)]) -> J {
    J::Obj(fields.iter().map(|(k, v)| (k.to_string(), v.clone())).collect())
}

pub fn s(v: &str) -> J {
    J::Str(v.to_string())
}

pub fn encode(v: &J) -> String {
    match v {
        J::Bool(b) => if *b { "true" } else { "false" }.to_string(),
        J::Int(i) => i.to_string(),
        J::Str(x) => quote(x),
        J::Arr(items) => format!("[{}]", items.iter().map(encode).collect::<Vec<_>>().join(",")),
        J::Obj(fields) => {
            let mut fields: Vec<&(String, J)> = fields.iter().collect();
            // Compare as sequences of Unicode scalar values.
            fields.sort_by(|a, b| a.0.chars().map(u32::from).cmp(b.0.chars().map(u32::from)));
            let parts: Vec<String> = fields
                .iter()
                .map(|(k, v)| format!("{}:{}", quote(k), encode(v)))
                .collect();
            format!("{{{}}}", parts.join(","))
        }
    }
}

fn quote(x: &str) -> String {
    let mut out = String::from("\"");
    for c in x.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\u{08}' => out.push_str("\\b"),
            '\u{0c}' => out.push_str("\\f"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

// ---- Merkle tree -------------------------------------------------------

pub fn leaf(data: &[u8]) -> H {
    let mut v = vec![0u8];
    v.extend_from_slice(data);
    sha256(&v)
}

pub fn node(l: &H, r: &H) -> H {
    let mut v = vec![1u8];
    v.extend_from_slice(l);
    v.extend_from_slice(r);
    sha256(&v)
}

/// Largest power of two strictly below n, found by counting up.
pub fn split(n: usize) -> usize {
    let mut k = 1;
    while k * 2 < n {
        k *= 2;
    }
    k
}

pub fn mth(leaves: &[H]) -> H {
    match leaves.len() {
        0 => sha256(b""),
        1 => leaves[0],
        n => {
            let k = split(n);
            node(&mth(&leaves[..k]), &mth(&leaves[k..]))
        }
    }
}

/// Rebuilds the root by walking the tree shape top-down, consuming the
/// audit path from its end.
pub fn inclusion_root(index: usize, size: usize, leaf: H, path: &[H]) -> Option<H> {
    if index >= size {
        return None;
    }
    if size == 1 {
        return path.is_empty().then_some(leaf);
    }
    let (last, rest) = path.split_last()?;
    let k = split(size);
    if index < k {
        Some(node(&inclusion_root(index, k, leaf, rest)?, last))
    } else {
        Some(node(last, &inclusion_root(index - k, size - k, leaf, rest)?))
    }
}

/// Returns (old root, new root) implied by a consistency path, walking the
/// same recursion that produces it. `old_root` stands in for the subtree
/// when the old tree is a complete subtree of the new one.
pub fn consistency_roots(m: usize, n: usize, path: &[H], old_root: H) -> Option<(H, H)> {
    fn go(m: usize, n: usize, path: &[H], complete: bool, old_root: H) -> Option<(H, H)> {
        if m == n {
            return if complete {
                path.is_empty().then_some((old_root, old_root))
            } else {
                match path {
                    [h] => Some((*h, *h)),
                    _ => None,
                }
            };
        }
        let (last, rest) = path.split_last()?;
        let k = split(n);
        if m <= k {
            let (o, nw) = go(m, k, rest, complete, old_root)?;
            Some((o, node(&nw, last)))
        } else {
            let (o, nw) = go(m - k, n - k, rest, false, old_root)?;
            Some((node(last, &o), node(last, &nw)))
        }
    }
    if m == 0 || m > n {
        return None;
    }
    go(m, n, path, true, old_root)
}

// ---- gates -------------------------------------------------------------

pub fn min_gate(scores: &[u32; 5], thresholds: &[u32; 5]) -> bool {
    (0..5).all(|i| scores[i] >= thresholds[i])
}

// ---- status replay -----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ev {
    Issue,
    Suspend,
    Reinstate,
    Revoke,
}

/// Declarative status: any REVOKE wins; otherwise nothing counts before the
/// first issuance, and the last SUSPEND/REINSTATE after it decides.
pub fn status(events: &[Ev], expired: bool) -> &'static str {
    if events.contains(&Ev::Revoke) {
        return "REVOKED";
    }
    let Some(first) = events.iter().position(|e| *e == Ev::Issue) else {
        return "UNKNOWN";
    };
    let last = events[first..]
        .iter()
        .rev()
        .find(|e| matches!(e, Ev::Suspend | Ev::Reinstate));
    if expired {
        return "EXPIRED";
    }
    match last {
        Some(Ev::Suspend) => "SUSPENDED",
        _ => "ACTIVE",
    }
}
