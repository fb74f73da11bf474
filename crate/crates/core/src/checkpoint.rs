//! Plain-text parameter checkpoints.
//!
//! ```text
//! cardio-lstm checkpoint v1
//! meta hidden_dim 16
//! tensor lstm.W_f 16 28
//! 0.0123 -0.4 ...
//! end
//! ```
//!
//! Each `tensor` line is followed by one line holding its row-major values.
//! Values are written in Rust's shortest round-trip notation, so a
//! save → load cycle reproduces every bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lstm::LstmParams;
use crate::numerics::{Matrix, Vector};
use crate::tensors::TensorSet;

const MAGIC: &str = "cardio-lstm checkpoint v1";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("missing meta key {key}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("meta {key}: cannot parse {raw:?}")))
    }

    /// Appends every tensor of `set`, names prefixed with `prefix`.
    pub fn push_set(&mut self, prefix: &str, set: &impl TensorSet) {
        for t in set.tensors() {
            self.tensors.push(NamedTensor {
                name: format!("{prefix}{}", t.name),
                rows: t.rows,
                cols: t.cols,
                data: t.data.to_vec(),
            });
        }
    }

    pub fn tensor(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    pub fn matrix(&self, name: &str) -> Result<Matrix> {
        let t = self.tensor(name)?;
        Matrix::new(t.rows, t.cols, t.data.clone())
    }

    pub fn vector(&self, name: &str) -> Result<Vector> {
        let t = self.tensor(name)?;
        if t.cols != 1 {
            return Err(Error::Checkpoint(format!("{name} is {}x{}, expected a column", t.rows, t.cols)));
        }
        Vector::new(t.data.clone())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for t in &self.tensors {
            let _ = writeln!(out, "tensor {} {} {}", t.name, t.rows, t.cols);
            let values: Vec<String> = t.data.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&values.join(" "));
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Checkpoint(format!("line {}: {msg}", line + 1));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim() == MAGIC => {}
            _ => return Err(bad(0, "missing checkpoint header")),
        }
        let mut ck = Checkpoint::new();
        let mut ended = false;
        while let Some((n, line)) = lines.next() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line == "end" {
                ended = true;
                break;
            }
            let mut parts = line.splitn(3, ' ');
            match parts.next() {
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| bad(n, "meta without key"))?;
                    let value = parts.next().unwrap_or("");
                    ck.meta.push((key.to_string(), value.to_string()));
                }
                Some("tensor") => {
                    let name = parts.next().ok_or_else(|| bad(n, "tensor without name"))?;
                    let dims: Vec<usize> = parts
                        .next()
                        .unwrap_or("")
                        .split_whitespace()
                        .map(|d| d.parse().map_err(|_| bad(n, "bad tensor shape")))
                        .collect::<Result<_>>()?;
                    let [rows, cols] = dims[..] else {
                        return Err(bad(n, "tensor shape needs rows and cols"));
                    };
                    let (vn, values) = lines.next().ok_or_else(|| bad(n, "tensor values missing"))?;
                    let data: Vec<f64> = values
                        .split_whitespace()
                        .map(|v| v.parse().map_err(|_| bad(vn, &format!("bad value {v:?}"))))
                        .collect::<Result<_>>()?;
                    if data.len() != rows * cols {
                        return Err(bad(vn, &format!("{name}: expected {} values, found {}", rows * cols, data.len())));
                    }
                    if !data.iter().all(|v| v.is_finite()) {
                        return Err(bad(vn, &format!("{name}: non-finite value")));
                    }
                    ck.tensors.push(NamedTensor {
                        name: name.to_string(),
                        rows,
                        cols,
                        data,
                    });
                }
                _ => return Err(bad(n, &format!("unrecognised line {line:?}"))),
            }
        }
        if !ended {
            return Err(Error::Checkpoint("truncated checkpoint (no end marker)".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Writes `p` under `prefix` along with its dimensions.
pub fn push_lstm(ck: &mut Checkpoint, prefix: &str, p: &LstmParams) {
    ck.set_meta(&format!("{prefix}input_dim"), p.input_dim());
    ck.set_meta(&format!("{prefix}hidden_dim"), p.hidden_dim());
    ck.push_set(prefix, p);
}

pub fn read_lstm(ck: &Checkpoint, prefix: &str) -> Result<LstmParams> {
    let input_dim = ck.meta_parse(&format!("{prefix}input_dim"))?;
    let hidden_dim = ck.meta_parse(&format!("{prefix}hidden_dim"))?;
    let m = |n: &str| ck.matrix(&format!("{prefix}{n}"));
    let v = |n: &str| ck.vector(&format!("{prefix}{n}"));
    LstmParams::new(
        input_dim,
        hidden_dim,
        m("W_f")?,
        m("W_i")?,
        m("W_c")?,
        m("W_o")?,
        v("b_f")?,
        v("b_i")?,
        v("b_c")?,
        v("b_o")?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    #[test]
    fn lstm_round_trip_is_exact() {
        let p = LstmParams::init(5, 3, &mut Rng::new(17)).unwrap();
        let mut ck = Checkpoint::new();
        push_lstm(&mut ck, "lstm.", &p);
        let text = ck.to_text();
        let back = read_lstm(&Checkpoint::parse(&text).unwrap(), "lstm.").unwrap();
        assert_eq!(back, p);
        assert_eq!(text.matches("\ntensor ").count(), 8);
    }

    #[test]
    fn rejects_damaged_documents() {
        let p = LstmParams::init(1, 1, &mut Rng::new(1)).unwrap();
        let mut ck = Checkpoint::new();
        push_lstm(&mut ck, "", &p);
        let text = ck.to_text();
        assert!(Checkpoint::parse("nonsense\nend\n").is_err());
        assert!(Checkpoint::parse(text.trim_end_matches("end\n")).is_err());
        let short = text.replacen("tensor W_f 1 2", "tensor W_f 1 3", 1);
        assert!(Checkpoint::parse(&short).is_err());
        let missing = Checkpoint::parse(&text.replacen("b_o", "b_x", 1)).unwrap();
        assert!(read_lstm(&missing, "").is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_values_round_trip(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..64)) {
            let mut ck = Checkpoint::new();
            ck.set_meta("k", "v w");
            ck.tensors.push(NamedTensor { name: "t".into(), rows: values.len(), cols: 1, data: values.clone() });
            let back = Checkpoint::parse(&ck.to_text()).unwrap();
            prop_assert_eq!(back.meta("k").unwrap(), "v w");
            let bits: Vec<u64> = back.tensors[0].data.iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, want);
        }
    }
}
