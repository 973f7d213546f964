//! Parameter checkpoint files.
//!
//! Plain text, UTF-8, `\n` line endings:
//!
//! ```text
//! bayesdl-checkpoint 1
//! spec <NetworkSpec as single-line JSON>
//! tensors <count>
//! tensor <name> <dim0> [<dim1>]
//! <one line per row: values separated by single spaces>
//! ...
//! ```
//!
//! Tensors appear in canonical order (`hidden.<i>.weight`, `hidden.<i>.bias`,
//! ..., `mean_head.*`, then `scale_head.*` when present). Weights are
//! `[fan_in, fan_out]`, biases `[fan_out]` written on one line. Values are
//! float64 in Rust's shortest round-trip decimal form, so a save/load cycle is
//! bit-exact for `f64` parameters.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::network::{Linear, NetworkSpec, Parameters};
use crate::scalar::Scalar;

pub const MAGIC: &str = "bayesdl-checkpoint";
pub const VERSION: u32 = 1;

fn names(spec: &NetworkSpec) -> Vec<String> {
    let mut layers: Vec<String> = (0..spec.hidden.len()).map(|i| format!("hidden.{i}")).collect();
    layers.push("mean_head".into());
    if spec.scale_width().is_some() {
        layers.push("scale_head".into());
    }
    layers.iter().flat_map(|l| [format!("{l}.weight"), format!("{l}.bias")]).collect()
}

pub fn to_string<T: Scalar>(spec: &NetworkSpec, params: &Parameters<T>) -> Result<String> {
    params.check_shapes(spec)?;
    let mut out = String::new();
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(out, "spec {}", serde_json::to_string(spec)?).unwrap();
    let tensors = params.tensors();
    writeln!(out, "tensors {}", tensors.len()).unwrap();
    for (name, t) in names(spec).iter().zip(tensors) {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        writeln!(out, "tensor {name} {}", dims.join(" ")).unwrap();
        for row in t.data().chunks(t.last_dim()) {
            let vals: Vec<String> = row.iter().map(|v| format!("{:?}", v.to_f64_lossy())).collect();
            writeln!(out, "{}", vals.join(" ")).unwrap();
        }
    }
    Ok(out)
}

pub fn from_str<T: Scalar>(text: &str) -> Result<(NetworkSpec, Parameters<T>)> {
    let bad = |msg: String| Error::Format(format!("checkpoint: {msg}"));
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("missing {what}")));

    let header = next("header")?;
    let version = header
        .strip_prefix(MAGIC)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| bad(format!("bad header `{header}`")))?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let spec_line = next("spec")?;
    let spec: NetworkSpec =
        serde_json::from_str(spec_line.strip_prefix("spec ").ok_or_else(|| bad("expected `spec`".into()))?)?;
    spec.validate()?;
    let count: usize = next("tensor count")?
        .strip_prefix("tensors ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| bad("expected `tensors <count>`".into()))?;
    let expected = names(&spec);
    if count != expected.len() {
        return Err(bad(format!("{count} tensors, spec needs {}", expected.len())));
    }

    let mut tensors = Vec::with_capacity(count);
    for name in &expected {
        let head = next("tensor header")?;
        let mut parts = head.split_whitespace();
        if parts.next() != Some("tensor") || parts.next() != Some(name.as_str()) {
            return Err(bad(format!("expected tensor {name}, got `{head}`")));
        }
        let shape = parts
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("{name}: {e}")))?;
        let numel: usize = shape.iter().product();
        let row_len = *shape.last().ok_or_else(|| bad(format!("{name}: empty shape")))?;
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel / row_len.max(1) {
            let row = next(name)?;
            let vals = row
                .split(' ')
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("{name}: {e}")))?;
            if vals.len() != row_len {
                return Err(bad(format!("{name}: row of {} values, expected {row_len}", vals.len())));
            }
            data.extend(vals.into_iter().map(T::of));
        }
        tensors.push(Tensor::new(shape, data)?);
    }

    let mut it = tensors.into_iter();
    let mut layer = || Linear { weight: it.next().unwrap(), bias: it.next().unwrap() };
    let hidden = (0..spec.hidden.len()).map(|_| layer()).collect();
    let mean_head = layer();
    let scale_head = spec.scale_width().map(|_| layer());
    let params = Parameters { hidden, mean_head, scale_head };
    params.check_shapes(&spec)?;
    if !params.all_finite() {
        return Err(bad("non-finite parameter".into()));
    }
    Ok((spec, params))
}

pub fn save<T: Scalar>(path: &Path, spec: &NetworkSpec, params: &Parameters<T>) -> Result<()> {
    fsutil::write_atomic(path, to_string(spec, params)?.as_bytes())
}

pub fn load<T: Scalar>(path: &Path) -> Result<(NetworkSpec, Parameters<T>)> {
    from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_network, Head};

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = NetworkSpec::new(3, vec![5, 4], 2, 0.2, Head::ClassificationHetero);
        let p = init_network::<f64>(&spec, 8).unwrap();
        let text = to_string(&spec, &p).unwrap();
        let (s2, p2) = from_str::<f64>(&text).unwrap();
        assert_eq!(s2, spec);
        assert_eq!(p2, p);
        assert!(text.starts_with("bayesdl-checkpoint 1\nspec {"));
        assert!(text.contains("\ntensor scale_head.bias 2\n-2.0 -2.0\n"));
    }

    #[test]
    fn rejects_corruption() {
        let spec = NetworkSpec::new(1, vec![2], 1, 0.0, Head::RegressionPlain);
        let p = init_network::<f64>(&spec, 8).unwrap();
        let text = to_string(&spec, &p).unwrap();
        assert!(from_str::<f64>(&text.replace("checkpoint 1", "checkpoint 9")).is_err());
        assert!(from_str::<f64>(&text.replace("tensors 4", "tensors 5")).is_err());
        let truncated: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(from_str::<f64>(&truncated).is_err());
    }
}
