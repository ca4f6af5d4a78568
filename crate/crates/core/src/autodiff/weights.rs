//! Little-endian binary weight files.
//!
//! ```text
//! magic        4 bytes  "INRP"
//! version      u32      1
//! layer count  u32      n
//! dims         n × (in u32, out u32)
//! activation   u8       0 = sine, 1 = relu_pe
//! omega0       f64      first-layer ω
//! omega_hidden f64      hidden-layer ω
//! harmonics    u32      harmonics per component (relu_pe)
//! schedule     u8       0 = linear, 1 = geometric
//! payload      per layer: out×in f64 weights (row-major), then out f64 biases
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::autodiff::{Layer, ParamSet};
use crate::error::{Error, Result};
use crate::models::{Arch, HarmonicSchedule, ModelConfig};

pub const MAGIC: &[u8; 4] = b"INRP";
pub const VERSION: u32 = 1;

pub fn write_weights<W: Write>(mut out: W, net: &ParamSet, config: &ModelConfig) -> Result<()> {
    let dims = config.layer_dims();
    let actual: Vec<_> = net.layers().iter().map(|l| (l.in_dim(), l.out_dim())).collect();
    if dims != actual {
        return Err(Error::Config("network shape does not match its model config".into()));
    }
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for (i, o) in &dims {
        out.write_all(&(*i as u32).to_le_bytes())?;
        out.write_all(&(*o as u32).to_le_bytes())?;
    }
    let tag: u8 = match config.arch {
        Arch::Sine => 0,
        Arch::ReluPe => 1,
    };
    out.write_all(&[tag])?;
    out.write_all(&config.omega0_first.to_le_bytes())?;
    out.write_all(&config.omega0_hidden.to_le_bytes())?;
    out.write_all(&(config.n_harmonics as u32).to_le_bytes())?;
    let schedule: u8 = match config.harmonic_schedule {
        HarmonicSchedule::Linear => 0,
        HarmonicSchedule::Geometric => 1,
    };
    out.write_all(&[schedule])?;
    for layer in net.layers() {
        for v in layer.weight.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in layer.bias.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated weight file: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(input)?))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(input)?))
}

pub fn read_weights<R: Read>(mut input: R) -> Result<(ParamSet, ModelConfig)> {
    let magic: [u8; 4] = read_array(&mut input)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a weight file (bad magic)".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weight file version {version}")));
    }
    let count = read_u32(&mut input)? as usize;
    if count < 3 {
        return Err(Error::Format(format!("weight file declares {count} layers, need at least 3")));
    }
    let mut dims = Vec::with_capacity(count);
    for _ in 0..count {
        let i = read_u32(&mut input)? as usize;
        let o = read_u32(&mut input)? as usize;
        dims.push((i, o));
    }
    let [tag] = read_array::<1, _>(&mut input)?;
    let arch = match tag {
        0 => Arch::Sine,
        1 => Arch::ReluPe,
        t => return Err(Error::Format(format!("unknown activation tag {t}"))),
    };
    let omega0_first = read_f64(&mut input)?;
    let omega0_hidden = read_f64(&mut input)?;
    let n_harmonics = read_u32(&mut input)? as usize;
    let [sched] = read_array::<1, _>(&mut input)?;
    let harmonic_schedule = match sched {
        0 => HarmonicSchedule::Linear,
        1 => HarmonicSchedule::Geometric,
        s => return Err(Error::Format(format!("unknown harmonic schedule {s}"))),
    };
    let first_in = dims[0].0;
    let input_dim = match arch {
        Arch::Sine => first_in,
        Arch::ReluPe => {
            if n_harmonics == 0 || first_in % (2 * n_harmonics) != 0 {
                return Err(Error::Format("embedded width inconsistent with harmonic count".into()));
            }
            first_in / (2 * n_harmonics)
        }
    };
    let config = ModelConfig {
        arch,
        input_dim,
        output_dim: dims[count - 1].1,
        hidden_features: dims[0].1,
        hidden_layers: count - 2,
        omega0_first,
        omega0_hidden,
        n_harmonics,
        harmonic_schedule,
    };
    if config.layer_dims() != dims {
        return Err(Error::Format("layer dims do not form a coordinate MLP".into()));
    }
    let mut layers = Vec::with_capacity(count);
    for &(i, o) in &dims {
        let mut w = Vec::with_capacity(i * o);
        for _ in 0..i * o {
            w.push(read_f64(&mut input)?);
        }
        let mut b = Vec::with_capacity(o);
        for _ in 0..o {
            b.push(read_f64(&mut input)?);
        }
        let weight = Array2::from_shape_vec((o, i), w).expect("length matches shape");
        layers.push(Layer {
            weight,
            bias: Array1::from(b),
        });
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after weight payload".into()));
    }
    Ok((ParamSet::new(layers)?, config))
}

pub fn save_weights(path: impl AsRef<Path>, net: &ParamSet, config: &ModelConfig) -> Result<()> {
    write_weights(BufWriter::new(File::create(path)?), net, config)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<(ParamSet, ModelConfig)> {
    read_weights(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::build;

    #[test]
    fn header_layout() {
        let cfg = ModelConfig::sine(2, 1).with_hidden(4);
        let net = build(&cfg, 1);
        let mut buf = Vec::new();
        write_weights(&mut buf, &net, &cfg).unwrap();
        assert_eq!(&buf[..4], b"INRP");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 4);
        let header = 12 + 5 * 8 + 1 + 8 + 8 + 4 + 1;
        assert_eq!(buf[52], 0);
        assert_eq!(f64::from_le_bytes(buf[53..61].try_into().unwrap()), 60.0);
        assert_eq!(buf.len(), header + 8 * net.num_params());
        // first weight immediately after the header
        let w0 = f64::from_le_bytes(buf[header..header + 8].try_into().unwrap());
        assert_eq!(w0, net.layers()[0].weight[[0, 0]]);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for cfg in [
            ModelConfig::sine(2, 3).with_hidden(8),
            ModelConfig {
                n_harmonics: 5,
                harmonic_schedule: HarmonicSchedule::Geometric,
                ..ModelConfig::relu_pe(2, 1).with_hidden(6)
            },
        ] {
            let net = build(&cfg, 9);
            let mut buf = Vec::new();
            write_weights(&mut buf, &net, &cfg).unwrap();
            let (back, back_cfg) = read_weights(buf.as_slice()).unwrap();
            assert_eq!(back_cfg, cfg);
            assert!(back.iter().zip(net.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(read_weights(&b"NOPE"[..]), Err(Error::Format(_))));
        let cfg = ModelConfig::sine(1, 1).with_hidden(3);
        let net = build(&cfg, 0);
        let mut buf = Vec::new();
        write_weights(&mut buf, &net, &cfg).unwrap();
        buf.pop();
        assert!(matches!(read_weights(buf.as_slice()), Err(Error::Format(_))));
        buf.extend([0u8; 9]);
        assert!(matches!(read_weights(buf.as_slice()), Err(Error::Format(_))));
    }
}
