//! Text checkpoints: a header line with the model shape, then one block
//! per parameter tensor.
//!
//! ```text
//! ECAL-CHECKPOINT v1 DV=4 DE=4 DH=32 C=2 DEPTH=2 ENCODER=egatv2 ESTIMATOR=egatv2 CAUSAL=ecal SEED=0
//! T <name> <rows> <cols>
//! <cols reals>   (rows lines)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::{ParamSet, Tensor};
use crate::causal::{CausalModel, ModelConfig};
use crate::error::{Error, Result};
use crate::graph::format::{content_lines, fmt_real, header_field, parse_err, parse_reals};

const MAGIC: &str = "ECAL-CHECKPOINT v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    pub params: ParamSet,
}

pub fn render_checkpoint(ckpt: &Checkpoint) -> String {
    let c = &ckpt.config;
    let mut out = format!(
        "{MAGIC} DV={} DE={} DH={} C={} DEPTH={} ENCODER={} ESTIMATOR={} CAUSAL={} SEED={}\n",
        c.d_v, c.d_e, c.d_h, c.num_classes, c.depth, c.encoder, c.estimator, c.causal, ckpt.seed
    );
    for (name, t) in ckpt.params.iter() {
        let _ = writeln!(out, "T {name} {} {}", t.rows(), t.cols());
        for r in 0..t.rows() {
            for (i, &x) in t.row(r).iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                fmt_real(&mut out, x);
            }
            out.push('\n');
        }
    }
    out
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_checkpoint(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let rest = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| parse_err(hl, format!("expected `{MAGIC} ...`")))?;
    let t: Vec<&str> = rest.split_whitespace().collect();
    if t.len() != 9 {
        return Err(parse_err(hl, "expected 9 header fields"));
    }
    let word = |i: usize, key: &str| header_field::<String>(hl, t[i], key);
    let parse = |s: String| s.parse().map_err(|e: Error| parse_err(hl, e.to_string()));
    let config = ModelConfig {
        d_v: header_field(hl, t[0], "DV")?,
        d_e: header_field(hl, t[1], "DE")?,
        d_h: header_field(hl, t[2], "DH")?,
        num_classes: header_field(hl, t[3], "C")?,
        depth: header_field(hl, t[4], "DEPTH")?,
        encoder: parse(word(5, "ENCODER")?)?,
        estimator: parse(word(6, "ESTIMATOR")?)?,
        causal: word(7, "CAUSAL")?.parse().map_err(|e: Error| parse_err(hl, e.to_string()))?,
    };
    let seed = header_field(hl, t[8], "SEED")?;

    let mut params = ParamSet::new();
    while let Some((l, line)) = lines.next() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 4 || tok[0] != "T" {
            return Err(parse_err(l, "expected `T <name> <rows> <cols>`"));
        }
        let dims: Vec<usize> = tok[2..]
            .iter()
            .map(|d| d.parse().map_err(|_| parse_err(l, format!("invalid dimension `{d}`"))))
            .collect::<Result<_>>()?;
        let mut data = Vec::with_capacity(dims[0] * dims[1]);
        let mut last = l;
        for _ in 0..dims[0] {
            let (rl, row) = lines
                .next()
                .ok_or_else(|| parse_err(last + 1, format!("unexpected end of file in tensor `{}`", tok[1])))?;
            let vals: Vec<&str> = row.split_whitespace().collect();
            data.extend(parse_reals(rl, &vals, dims[1])?);
            last = rl;
        }
        if params
            .insert(tok[1].to_string(), Tensor::from_vec(dims[0], dims[1], data))
            .is_some()
        {
            return Err(parse_err(l, format!("duplicate tensor `{}`", tok[1])));
        }
    }
    Ok(Checkpoint { config, seed, params })
}

/// Loads a checkpoint and checks it against the model it describes.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(CausalModel, Checkpoint)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt = parse_checkpoint(&text)?;
    let model = CausalModel::new(ckpt.config)?;
    model.check_params(&ckpt.params)?;
    Ok((model, ckpt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::CausalMode;
    use crate::encoders::EncoderKind;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut config = ModelConfig::new(EncoderKind::EgatV1, CausalMode::Ecal, 3, 2, 2);
        config.d_h = 4;
        let model = CausalModel::new(config).unwrap();
        let mut params = model.init(7);
        params.get_mut("classifier_c.bias").unwrap().data_mut()[0] = -0.0;
        let ckpt = Checkpoint { config, seed: 7, params };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let (_, back) = load_checkpoint(&path).unwrap();
        assert_eq!(render_checkpoint(&back), render_checkpoint(&ckpt));
        let bits = |p: &ParamSet| p.iter().flat_map(|(_, t)| t.data().iter().map(|x| x.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&back.params), bits(&ckpt.params));
        assert_eq!(back.config, config);
    }

    #[test]
    fn malformed_checkpoints() {
        assert!(matches!(parse_checkpoint("nope"), Err(Error::Parse { line: 1, .. })));
        let config = ModelConfig::new(EncoderKind::Gcn, CausalMode::None, 1, 1, 2);
        let mut text = render_checkpoint(&Checkpoint {
            config,
            seed: 0,
            params: CausalModel::new(config).unwrap().init(0),
        });
        text.push_str("T extra 1 2\n0.5\n");
        let last = text.lines().count();
        assert!(matches!(parse_checkpoint(&text), Err(Error::Parse { line, .. }) if line == last));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        let short = render_checkpoint(&Checkpoint {
            config,
            seed: 0,
            params: ParamSet::new(),
        });
        fs::write(&path, short).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::MissingParam(_))));
    }
}
