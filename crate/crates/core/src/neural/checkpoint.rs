//! Plain-text checkpoints.
//!
//! ```text
//! relsym-checkpoint 1
//! config d_o=6 d_k=1 heads=3 ... aggregation=neighbors attention=relational
//! input_mean m0 m1 m2 m3 m4 m5
//! input_scale s0 s1 s2 s3 s4 s5
//! tensor encoder.l0.w 6 128
//! v v v ...
//! ...
//! end
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting.

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::model::RelationalNet;
use super::{Aggregation, AttentionKind, ModelConfig, Real};
use crate::sim::ObjectFeature;

const MAGIC: &str = "relsym-checkpoint 1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> CheckpointError {
    CheckpointError::Parse { line, message: message.into() }
}

pub fn write_checkpoint<F: Real, W: Write>(net: &RelationalNet<F>, mut w: W) -> io::Result<()> {
    let c = &net.config;
    writeln!(w, "{MAGIC}")?;
    writeln!(
        w,
        "config d_o={} d_k={} heads={} d_att={} d_z={} d_a={} hidden={} pre_gs_norm={} aggregation={} attention={}",
        c.d_o,
        c.d_k,
        c.heads,
        c.d_att,
        c.d_z,
        c.d_a,
        c.hidden,
        c.pre_gs_norm,
        c.aggregation.name(),
        c.attention.name()
    )?;
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    writeln!(w, "input_mean {}", join(&net.input_mean))?;
    writeln!(w, "input_scale {}", join(&net.input_scale))?;
    for (name, values, [r, c]) in net.named_tensors() {
        writeln!(w, "tensor {name} {r} {c}")?;
        let line = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(w, "{line}")?;
    }
    writeln!(w, "end")?;
    w.flush()
}

pub fn save_checkpoint<F: Real>(net: &RelationalNet<F>, path: &Path) -> Result<(), CheckpointError> {
    let file = fs::File::create(path)?;
    write_checkpoint(net, io::BufWriter::new(file))?;
    Ok(())
}

fn parse_config(line_no: usize, line: &str) -> Result<ModelConfig, CheckpointError> {
    let rest = line
        .strip_prefix("config ")
        .ok_or_else(|| parse_err(line_no, "expected config line"))?;
    let mut cfg = ModelConfig::default();
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| parse_err(line_no, format!("bad entry {kv:?}")))?;
        let num = || v.parse::<usize>().map_err(|_| parse_err(line_no, format!("bad value for {k}: {v:?}")));
        match k {
            "d_o" => cfg.d_o = num()?,
            "d_k" => cfg.d_k = num()?,
            "heads" => cfg.heads = num()?,
            "d_att" => cfg.d_att = num()?,
            "d_z" => cfg.d_z = num()?,
            "d_a" => cfg.d_a = num()?,
            "hidden" => cfg.hidden = num()?,
            "pre_gs_norm" => {
                cfg.pre_gs_norm = v.parse().map_err(|_| parse_err(line_no, format!("bad pre_gs_norm {v:?}")))?
            }
            "aggregation" => {
                cfg.aggregation =
                    Aggregation::from_name(v).ok_or_else(|| parse_err(line_no, format!("unknown aggregation {v:?}")))?
            }
            "attention" => {
                cfg.attention =
                    AttentionKind::from_name(v).ok_or_else(|| parse_err(line_no, format!("unknown attention {v:?}")))?
            }
            _ => return Err(parse_err(line_no, format!("unknown config key {k:?}"))),
        }
    }
    cfg.validate().map_err(|e| parse_err(line_no, e.to_string()))?;
    Ok(cfg)
}

fn parse_vec6(line_no: usize, line: &str, key: &str) -> Result<[f64; ObjectFeature::DIM], CheckpointError> {
    let rest = line
        .strip_prefix(key)
        .ok_or_else(|| parse_err(line_no, format!("expected {key}")))?;
    let vals: Vec<f64> = rest
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(line_no, format!("bad number {t:?}"))))
        .collect::<Result<_, _>>()?;
    vals.try_into()
        .map_err(|v: Vec<f64>| parse_err(line_no, format!("expected {} values, got {}", ObjectFeature::DIM, v.len())))
}

pub fn read_checkpoint<F: Real, R: Read>(r: R) -> Result<RelationalNet<F>, CheckpointError> {
    let mut lines = BufReader::new(r).lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String), CheckpointError> {
        match lines.next() {
            Some((n, l)) => Ok((n, l?)),
            None => Err(parse_err(0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let (n, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(parse_err(n, format!("bad header {magic:?}")));
    }
    let (n, line) = next("config")?;
    let config = parse_config(n, line.trim())?;
    let (n, line) = next("input_mean")?;
    let input_mean = parse_vec6(n, line.trim(), "input_mean")?;
    let (n, line) = next("input_scale")?;
    let input_scale = parse_vec6(n, line.trim(), "input_scale")?;

    // shapes come from a freshly built network of the same configuration
    let mut net: RelationalNet<F> = RelationalNet::init(config, &mut ChaCha8Rng::seed_from_u64(0));
    net.input_mean = input_mean;
    net.input_scale = input_scale;
    let expected: Vec<(String, [usize; 2])> = net.named_tensors().into_iter().map(|(n, _, s)| (n, s)).collect();
    let slots = net.tensors_mut();
    for ((name, shape), slot) in expected.into_iter().zip(slots) {
        let (n, head) = next(&format!("tensor {name}"))?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        let ok = parts.len() == 4
            && parts[0] == "tensor"
            && parts[1] == name
            && parts[2].parse::<usize>().ok() == Some(shape[0])
            && parts[3].parse::<usize>().ok() == Some(shape[1]);
        if !ok {
            return Err(parse_err(n, format!("expected tensor {name} {} {}, got {head:?}", shape[0], shape[1])));
        }
        let (n, data) = next(&format!("values of {name}"))?;
        let mut count = 0;
        for tok in data.split_whitespace() {
            if count >= slot.len() {
                return Err(parse_err(n, format!("too many values for {name}")));
            }
            slot[count] = tok.parse().map_err(|_| parse_err(n, format!("bad number {tok:?}")))?;
            count += 1;
        }
        if count != slot.len() {
            return Err(parse_err(n, format!("{name}: expected {} values, got {count}", slot.len())));
        }
    }
    let (n, end) = next("end")?;
    if end.trim() != "end" {
        return Err(parse_err(n, format!("expected end, got {end:?}")));
    }
    Ok(net)
}

pub fn load_checkpoint<F: Real>(path: &Path) -> Result<RelationalNet<F>, CheckpointError> {
    read_checkpoint(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(attention: AttentionKind) -> RelationalNet<f32> {
        let cfg = ModelConfig { hidden: 7, d_att: 3, d_z: 4, attention, ..ModelConfig::default() };
        let mut net = RelationalNet::init(cfg, &mut ChaCha8Rng::seed_from_u64(9));
        net.input_mean = [1.5, -2.0, 7.25, 0.0, 0.0, 0.5];
        net.input_scale = [20.0, 15.0, 3.0, 1.0, 1.0, 0.5];
        net
    }

    #[test]
    fn round_trip_is_exact() {
        for attention in [AttentionKind::Relational, AttentionKind::AllOnes] {
            let net = small(attention);
            let mut buf = Vec::new();
            write_checkpoint(&net, &mut buf).unwrap();
            let back: RelationalNet<f32> = read_checkpoint(&buf[..]).unwrap();
            assert_eq!(back, net);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut buf = Vec::new();
        write_checkpoint(&small(AttentionKind::Relational), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        assert!(read_checkpoint::<f32, _>(cut.as_bytes()).is_err());
        let bad = text.replacen("relsym-checkpoint 1", "something else", 1);
        assert!(matches!(read_checkpoint::<f32, _>(bad.as_bytes()), Err(CheckpointError::Parse { line: 1, .. })));
    }
}
