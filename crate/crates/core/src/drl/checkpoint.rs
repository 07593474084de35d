use std::fmt::Write as _;
use std::path::Path;

use super::network::{NetworkShape, QNetwork};
use crate::error::{Error, Result};

const MAGIC: &str = "mmcache-qnet 1";

/// Plain-text serialization. Values use the shortest representation that
/// parses back to the same `f64`, so a reload is bit-exact.
pub fn to_text(net: &QNetwork) -> String {
    let shape = net.shape();
    let hidden: Vec<String> = shape.hidden.iter().map(|h| h.to_string()).collect();
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "input_dim {}", shape.input_dim).unwrap();
    writeln!(out, "hidden {}", hidden.join(" ")).unwrap();
    writeln!(out, "actions {}", shape.actions).unwrap();
    writeln!(out, "dueling {}", shape.dueling).unwrap();
    for t in net.tensors() {
        let vals: Vec<String> = t.iter().map(|v| v.to_string()).collect();
        writeln!(out, "tensor {} {}", t.len(), vals.join(" ")).unwrap();
    }
    out
}

pub fn from_text(text: &str) -> Result<QNetwork> {
    let bad = |m: String| Error::Checkpoint(m);
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing header".into()));
    }
    let mut field = |key: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
        let rest = line
            .strip_prefix(key)
            .ok_or_else(|| bad(format!("expected {key}, found {line:?}")))?;
        Ok(rest.trim().to_string())
    };
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
    let input_dim = parse_usize(&field("input_dim")?)?;
    let hidden = field("hidden")?
        .split_whitespace()
        .map(parse_usize)
        .collect::<Result<Vec<_>>>()?;
    let actions = parse_usize(&field("actions")?)?;
    let dueling = field("dueling")?
        .parse::<bool>()
        .map_err(|e| bad(e.to_string()))?;
    let mut tensors = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        if parts.next() != Some("tensor") {
            return Err(bad(format!("unexpected line {line:?}")));
        }
        let len = parse_usize(parts.next().unwrap_or(""))?;
        let vals = parts
            .map(|v| v.parse::<f64>().map_err(|e| bad(format!("{v:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != len {
            return Err(bad(format!("tensor declares {len} values, has {}", vals.len())));
        }
        tensors.push(vals);
    }
    if input_dim == 0 || actions == 0 {
        return Err(bad("empty network".into()));
    }
    let mut net = QNetwork::zeros(NetworkShape {
        input_dim,
        hidden,
        actions,
        dueling,
    });
    let slots = net.tensors_mut();
    if slots.len() != tensors.len() {
        return Err(Error::ShapeMismatch);
    }
    for (dst, src) in slots.into_iter().zip(&tensors) {
        if dst.len() != src.len() {
            return Err(Error::ShapeMismatch);
        }
        dst.copy_from_slice(src);
    }
    Ok(net)
}

pub fn save(net: &QNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<QNetwork> {
    from_text(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let shape = NetworkShape {
            input_dim: 7,
            hidden: vec![64, 64],
            actions: 10,
            dueling: true,
        };
        let net = QNetwork::new(shape, &mut rng::stream(11, "ckpt"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.txt");
        save(&net, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.shape(), net.shape());
        let a: Vec<u64> = net.params().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.params().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        let s = [0.1, 0.9, 0.4, 1.0, 0.0, 0.0, 0.3];
        assert_eq!(net.forward(&s).unwrap(), back.forward(&s).unwrap());
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(from_text("nope").is_err());
        let net = QNetwork::zeros(NetworkShape {
            input_dim: 2,
            hidden: vec![],
            actions: 2,
            dueling: false,
        });
        let text = to_text(&net);
        let truncated: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        assert!(matches!(from_text(&truncated), Err(Error::ShapeMismatch)));
        let garbled = text.replace("tensor 2 0 0", "tensor 2 0 x");
        assert!(from_text(&garbled).is_err());
    }
}
