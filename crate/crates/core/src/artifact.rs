//! Persisted model files.
//!
//! A plain-text header of `key=value` lines opened by the magic line
//! `ITERGP-MODEL` and closed by `end_header`, followed by little-endian
//! `f64` arrays in this order: training inputs (row-major, n×d),
//! representer weights (n), precision factors D (column-major, n×rank),
//! normalizers η (rank).

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelParams};
use crate::posterior::{CombinedPosterior, PriorMean};
use crate::solver::LowRankPrecision;

pub const MAGIC: &str = "ITERGP-MODEL";
pub const FORMAT_VERSION: u32 = 1;
const END: &str = "end_header";
const MAX_HEADER_BYTES: usize = 64 * 1024;

/// Summary of the solver run that produced the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub policy: String,
    pub iterations: usize,
    pub stop_reason: String,
    pub residual_norm: f64,
    pub matvecs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub kernel: KernelParams,
    pub noise: f64,
    pub prior_mean: f64,
    pub inputs: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub precision: LowRankPrecision,
    pub trace: TraceSummary,
}

impl ModelArtifact {
    pub fn from_posterior(post: &CombinedPosterior, trace: TraceSummary) -> Result<Self> {
        let prior_mean = match post.prior_mean() {
            PriorMean::Zero => 0.0,
            PriorMean::Constant(c) => *c,
            PriorMean::Function(_) => {
                return Err(Error::InvalidArgument(
                    "only constant prior means can be stored".into(),
                ))
            }
        };
        Ok(Self {
            kernel: *post.kernel(),
            noise: post.noise(),
            prior_mean,
            inputs: post.train_inputs().clone(),
            weights: post.weights().clone(),
            precision: post.precision().clone(),
            trace,
        })
    }

    pub fn posterior(&self) -> Result<CombinedPosterior> {
        let mean = if self.prior_mean == 0.0 {
            PriorMean::Zero
        } else {
            PriorMean::Constant(self.prior_mean)
        };
        CombinedPosterior::new(
            mean,
            self.kernel,
            self.inputs.clone(),
            self.noise,
            self.weights.clone(),
            self.precision.clone(),
        )
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let (n, d) = self.inputs.shape();
        let rank = self.precision.rank();
        if self.weights.len() != n || self.precision.n() != n {
            return Err(Error::InvalidArgument("inconsistent model shapes".into()));
        }
        for s in [&self.trace.policy, &self.trace.stop_reason] {
            if s.contains(['\n', '\r']) {
                return Err(Error::InvalidArgument("header values must be single-line".into()));
            }
        }
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        line("version", FORMAT_VERSION.to_string());
        line("kernel", self.kernel.family().to_string());
        line("lengthscale", hex_f64(self.kernel.lengthscale()));
        line("output_scale", hex_f64(self.kernel.output_scale()));
        line("noise", hex_f64(self.noise));
        line("prior_mean", hex_f64(self.prior_mean));
        line("n", n.to_string());
        line("d", d.to_string());
        line("rank", rank.to_string());
        line("policy", self.trace.policy.clone());
        line("iterations", self.trace.iterations.to_string());
        line("stop_reason", self.trace.stop_reason.clone());
        line("residual_norm", hex_f64(self.trace.residual_norm));
        line("matvecs", self.trace.matvecs.to_string());
        let mut bytes = format!("{MAGIC}\n{out}{END}\n").into_bytes();
        bytes.reserve(8 * (n * d + n + n * rank + rank));
        for row in self.inputs.row_iter() {
            push_all(&mut bytes, row.iter());
        }
        push_all(&mut bytes, self.weights.iter());
        push_all(&mut bytes, self.precision.factors().iter());
        push_all(&mut bytes, self.precision.weights().iter());
        Ok(bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (header, body) = split_header(bytes)?;
        let h = Header::parse(header)?;
        let version: u32 = h.num("version")?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let family: KernelFamily = h.get("kernel")?.parse().map_err(|_| bad("unknown kernel family"))?;
        let kernel = KernelParams::new(family, h.float("lengthscale")?, h.float("output_scale")?)
            .map_err(|e| bad(e.to_string()))?;
        let noise = h.float("noise")?;
        if !(noise >= 0.0) {
            return Err(bad("noise must be non-negative"));
        }
        let prior_mean = h.float("prior_mean")?;
        let n: usize = h.num("n")?;
        let d: usize = h.num("d")?;
        let rank: usize = h.num("rank")?;
        if n == 0 || d == 0 {
            return Err(bad("model needs n >= 1 and d >= 1"));
        }
        if rank > n {
            return Err(bad("rank exceeds n"));
        }
        let trace = TraceSummary {
            policy: h.get("policy")?.to_owned(),
            iterations: h.num("iterations")?,
            stop_reason: h.get("stop_reason")?.to_owned(),
            residual_norm: h.float("residual_norm")?,
            matvecs: h.num("matvecs")?,
        };
        h.check_all_used()?;

        let lens = [
            n.checked_mul(d),
            Some(n),
            n.checked_mul(rank),
            Some(rank),
        ];
        let mut total = 0usize;
        for l in lens {
            let l = l.ok_or_else(|| bad("array sizes overflow"))?;
            total = total.checked_add(l).ok_or_else(|| bad("array sizes overflow"))?;
        }
        let expected = total.checked_mul(8).ok_or_else(|| bad("array sizes overflow"))?;
        if body.len() != expected {
            return Err(bad(format!(
                "payload has {} bytes, header implies {expected}",
                body.len()
            )));
        }
        let vals: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(bad("payload contains non-finite values"));
        }
        let (x, rest) = vals.split_at(n * d);
        let (v, rest) = rest.split_at(n);
        let (f, eta) = rest.split_at(n * rank);
        let precision = LowRankPrecision::new(
            DMatrix::from_column_slice(n, rank, f),
            DVector::from_column_slice(eta),
        )
        .map_err(|e| bad(e.to_string()))?;
        Ok(Self {
            kernel,
            noise,
            prior_mean,
            inputs: DMatrix::from_row_slice(n, d, x),
            weights: DVector::from_column_slice(v),
            precision,
            trace,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)
            .map_err(|e| Error::Data(format!("cannot read model {}: {e}", path.display())))?;
        Self::decode(&bytes)
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Parse(format!("model file: {}", msg.into()))
}

fn push_all<'a>(out: &mut Vec<u8>, vals: impl Iterator<Item = &'a f64>) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Exact text form: the bit pattern in hex, after a readable value.
fn hex_f64(v: f64) -> String {
    format!("{v:e}@{:016x}", v.to_bits())
}

fn parse_hex_f64(s: &str) -> Option<f64> {
    let (_, hex) = s.split_once('@')?;
    if hex.len() != 16 {
        return None;
    }
    let v = f64::from_bits(u64::from_str_radix(hex, 16).ok()?);
    v.is_finite().then_some(v)
}

fn split_header(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let marker = format!("\n{END}\n");
    let window = &bytes[..bytes.len().min(MAX_HEADER_BYTES)];
    let pos = window
        .windows(marker.len())
        .position(|w| w == marker.as_bytes())
        .ok_or_else(|| bad("header terminator not found"))?;
    let header = std::str::from_utf8(&bytes[..pos]).map_err(|_| bad("header is not UTF-8"))?;
    let header = header
        .strip_prefix(MAGIC)
        .and_then(|h| h.strip_prefix('\n'))
        .ok_or_else(|| bad("missing magic line"))?;
    Ok((header, &bytes[pos + marker.len()..]))
}

struct Header<'a> {
    entries: Vec<(&'a str, &'a str, std::cell::Cell<bool>)>,
}

impl<'a> Header<'a> {
    fn parse(text: &'a str) -> Result<Self> {
        let mut entries: Vec<(&str, &str, std::cell::Cell<bool>)> = Vec::new();
        for line in text.split('\n') {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed header line {line:?}")))?;
            if entries.iter().any(|(e, _, _)| *e == k) {
                return Err(bad(format!("duplicate header key {k:?}")));
            }
            entries.push((k, v, std::cell::Cell::new(false)));
        }
        Ok(Self { entries })
    }

    fn get(&self, key: &str) -> Result<&'a str> {
        let (_, v, used) = self
            .entries
            .iter()
            .find(|(k, _, _)| *k == key)
            .ok_or_else(|| bad(format!("missing header key {key:?}")))?;
        used.set(true);
        Ok(v)
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .parse()
            .map_err(|_| bad(format!("bad integer for {key:?}")))
    }

    fn float(&self, key: &str) -> Result<f64> {
        parse_hex_f64(self.get(key)?).ok_or_else(|| bad(format!("bad number for {key:?}")))
    }

    fn check_all_used(&self) -> Result<()> {
        match self.entries.iter().find(|(_, _, used)| !used.get()) {
            Some((k, _, _)) => Err(bad(format!("unknown header key {k:?}"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelArtifact {
        let inputs = DMatrix::from_row_slice(3, 2, &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);
        let factors = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.5, 1.0, 0.0]);
        ModelArtifact {
            kernel: KernelParams::new(KernelFamily::Matern32, 0.7, 1.3).unwrap(),
            noise: 0.01,
            prior_mean: 0.25,
            inputs,
            weights: DVector::from_vec(vec![1.0, -2.0, 1.0 / 3.0]),
            precision: LowRankPrecision::new(factors, DVector::from_vec(vec![1.1, 0.9])).unwrap(),
            trace: TraceSummary {
                policy: "cg".into(),
                iterations: 2,
                stop_reason: "max_iterations".into(),
                residual_norm: 0.125,
                matvecs: 2,
            },
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let a = sample();
        let bytes = a.encode().unwrap();
        assert!(bytes.starts_with(b"ITERGP-MODEL\nversion=1\n"));
        assert_eq!(ModelArtifact::decode(&bytes).unwrap(), a);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().encode().unwrap();
        assert!(ModelArtifact::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(ModelArtifact::decode(&bytes[1..]).is_err());
        assert!(ModelArtifact::decode(b"").is_err());
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let swap = |from: &str, to: &str| {
            let mut b = bytes.clone();
            let pos = text.find(from).unwrap();
            b.splice(pos..pos + from.len(), to.bytes());
            ModelArtifact::decode(&b)
        };
        assert!(swap("version=1", "version=2").is_err());
        assert!(swap("kernel=matern32", "kernel=cosine").is_err());
        assert!(swap("rank=2", "rank=4").is_err());
        assert!(swap("n=3", "n=9").is_err());
        assert!(swap("matvecs=2", "matvecs=2\nextra=1").is_err());
        assert!(swap("matvecs=2", "matvecs=2\nmatvecs=2").is_err());
        let mut nan = bytes.clone();
        let len = nan.len();
        nan[len - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(ModelArtifact::decode(&nan).is_err());
        let mut neg = bytes;
        neg[len - 8..].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(ModelArtifact::decode(&neg).is_err());
    }

    #[test]
    fn huge_shapes_do_not_overflow() {
        let text = format!(
            "{MAGIC}\nversion=1\nkernel=rbf\nlengthscale={}\noutput_scale={}\nnoise={}\nprior_mean={}\nn={}\nd={}\nrank=1\npolicy=cg\niterations=0\nstop_reason=x\nresidual_norm={}\nmatvecs=0\n{END}\n",
            hex_f64(1.0), hex_f64(1.0), hex_f64(0.1), hex_f64(0.0), usize::MAX / 2, usize::MAX / 2, hex_f64(0.0)
        );
        assert!(ModelArtifact::decode(text.as_bytes()).is_err());
    }
}
