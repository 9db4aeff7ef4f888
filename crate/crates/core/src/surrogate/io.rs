//! Binary model and dataset files.
//!
//! Both formats are little-endian. Model file:
//!
//! ```text
//! b"EMFFMLP\0"  u32 version (=2)  u32 n_sizes  u32 sizes[n_sizes]
//! f64 r_min  f64 r_max  f64 coil_radius
//! f64 input_mean[in]  f64 input_scale[in]  f64 output_mean[out]  f64 output_scale[out]
//! u32 n_powers  [f64 r_ref  i32 powers[n_powers]]   (absent in version 1)
//! u64 n_values  f64 values[n_values]
//! ```
//!
//! `n_powers` is 0 (no radial scaling) or `out`. `values` holds, per layer in
//! order, `W` (out x in, row-major), `b`, and for hidden layers the
//! normalization gain and offset.
//!
//! Dataset file:
//!
//! ```text
//! b"EMFFDSET"  u32 version (=1)  u64 n_rows  u32 n_inputs (=4)  u32 n_outputs (=6)
//! f64 r_min  f64 r_max  f64 coil_radius  u64 n_quad  u64 seed
//! f64 column[n_rows] for each of the 4 inputs, then each of the 6 labels
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::dataset::{Dataset, SampleRegion, INPUT_DIM, OUTPUT_DIM};
use super::mlp::{MlpParams, RadialScaling, Standardizer};
use super::online::Surrogate;
use crate::{Error, Result};

const MODEL_MAGIC: &[u8; 8] = b"EMFFMLP\0";
const DATASET_MAGIC: &[u8; 8] = b"EMFFDSET";
const MODEL_VERSION: u32 = 2;
const DATASET_VERSION: u32 = 1;

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn u32(&mut self, v: u32) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn f64s(&mut self, v: &[f64]) -> Result<()> {
        for x in v {
            self.0.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("file is truncated".into()),
            _ => Error::Io(e),
        })?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn header(&mut self, magic: &[u8; 8], what: &str, versions: &[u32]) -> Result<u32> {
        if &self.bytes::<8>()? != magic {
            return Err(Error::Format(format!("not a {what} file")));
        }
        let v = self.u32()?;
        if !versions.contains(&v) {
            return Err(Error::Format(format!("unsupported {what} version {v}")));
        }
        Ok(v)
    }
    fn expect_end(&mut self) -> Result<()> {
        let mut extra = [0u8; 1];
        match self.0.read(&mut extra)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after end of data".into())),
        }
    }
}

fn checked_len(n: u64, limit: u64, what: &str) -> Result<usize> {
    if n > limit {
        return Err(Error::Format(format!("{what} count {n} is implausible")));
    }
    Ok(n as usize)
}

pub fn write_model<W: Write>(w: W, surrogate: &Surrogate) -> Result<()> {
    let mut o = Out(w);
    let p = surrogate.params();
    o.0.write_all(MODEL_MAGIC)?;
    o.u32(MODEL_VERSION)?;
    o.u32(p.sizes().len() as u32)?;
    for s in p.sizes() {
        o.u32(*s as u32)?;
    }
    let r = &surrogate.region;
    o.f64s(&[r.r_min, r.r_max, r.coil_radius])?;
    o.f64s(&p.input_scaler.mean)?;
    o.f64s(&p.input_scaler.scale)?;
    o.f64s(&p.output_scaler.mean)?;
    o.f64s(&p.output_scaler.scale)?;
    match &p.radial {
        None => o.u32(0)?,
        Some(rs) => {
            o.u32(rs.powers.len() as u32)?;
            o.f64s(&[rs.r_ref])?;
            for q in &rs.powers {
                o.0.write_all(&q.to_le_bytes())?;
            }
        }
    }
    o.u64(p.values().len() as u64)?;
    o.f64s(p.values())?;
    o.0.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<Surrogate> {
    let mut i = In(r);
    let version = i.header(MODEL_MAGIC, "model", &[1, MODEL_VERSION])?;
    let n_sizes = checked_len(i.u32()? as u64, 64, "layer")?;
    let sizes = (0..n_sizes)
        .map(|_| i.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    if sizes.len() < 2 || sizes.iter().any(|s| *s == 0 || *s > 1 << 16) {
        return Err(Error::Format(format!("invalid layer sizes {sizes:?}")));
    }
    let region = SampleRegion {
        r_min: i.f64()?,
        r_max: i.f64()?,
        coil_radius: i.f64()?,
    };
    region.validate().map_err(|e| Error::Format(e.to_string()))?;
    let (d_in, d_out) = (sizes[0], *sizes.last().unwrap());
    let input_scaler = Standardizer { mean: i.f64s(d_in)?, scale: i.f64s(d_in)? };
    let output_scaler = Standardizer { mean: i.f64s(d_out)?, scale: i.f64s(d_out)? };
    let n_powers = if version >= 2 { i.u32()? as usize } else { 0 };
    let radial = match n_powers {
        0 => None,
        n if n == d_out => {
            let r_ref = i.f64()?;
            let powers = (0..n)
                .map(|_| i.bytes().map(i32::from_le_bytes))
                .collect::<Result<Vec<_>>>()?;
            let rs = RadialScaling { r_ref, powers };
            rs.validate(d_in, d_out).map_err(|e| Error::Format(e.to_string()))?;
            Some(rs)
        }
        n => return Err(Error::Format(format!("{n} radial powers for {d_out} outputs"))),
    };
    let n_values = checked_len(i.u64()?, 1 << 32, "parameter")?;
    let values = i.f64s(n_values)?;
    i.expect_end()?;
    let mut params = MlpParams::from_parts(&sizes, values, input_scaler, output_scaler)
        .map_err(|e| Error::Format(e.to_string()))?;
    params.radial = radial;
    Surrogate::new(params, region).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_model(path: &Path, surrogate: &Surrogate) -> Result<()> {
    write_model(BufWriter::new(File::create(path)?), surrogate)
}

pub fn load_model(path: &Path) -> Result<Surrogate> {
    read_model(BufReader::new(File::open(path)?))
}

pub fn write_dataset<W: Write>(w: W, ds: &Dataset) -> Result<()> {
    ds.validate()?;
    let mut o = Out(w);
    o.0.write_all(DATASET_MAGIC)?;
    o.u32(DATASET_VERSION)?;
    let n = ds.len();
    o.u64(n as u64)?;
    o.u32(INPUT_DIM as u32)?;
    o.u32(OUTPUT_DIM as u32)?;
    o.f64s(&[ds.region.r_min, ds.region.r_max, ds.region.coil_radius])?;
    o.u64(ds.n_quad as u64)?;
    o.u64(ds.seed)?;
    for (data, dim) in [(&ds.inputs, INPUT_DIM), (&ds.labels, OUTPUT_DIM)] {
        for c in 0..dim {
            for row in data.chunks_exact(dim) {
                o.0.write_all(&row[c].to_le_bytes())?;
            }
        }
    }
    o.0.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let mut i = In(r);
    i.header(DATASET_MAGIC, "dataset", &[DATASET_VERSION])?;
    let n = checked_len(i.u64()?, 1 << 36, "row")?;
    let (d_in, d_out) = (i.u32()? as usize, i.u32()? as usize);
    if d_in != INPUT_DIM || d_out != OUTPUT_DIM {
        return Err(Error::Format(format!("unexpected column counts {d_in}/{d_out}")));
    }
    let region = SampleRegion {
        r_min: i.f64()?,
        r_max: i.f64()?,
        coil_radius: i.f64()?,
    };
    let n_quad = i.u64()? as usize;
    let seed = i.u64()?;
    let mut read_block = |dim: usize| -> Result<Vec<f64>> {
        let mut data = vec![0.0; n * dim];
        for c in 0..dim {
            for row in 0..n {
                data[row * dim + c] = i.f64()?;
            }
        }
        Ok(data)
    };
    let inputs = read_block(INPUT_DIM)?;
    let labels = read_block(OUTPUT_DIM)?;
    i.expect_end()?;
    let ds = Dataset { region, n_quad, seed, inputs, labels };
    ds.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(ds)
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), ds)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::dataset::sample_dataset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = MlpParams::init(&[4, 8, 5, 6], &mut rng).unwrap();
        params.input_scaler = Standardizer { mean: vec![0.1, 0.2, -0.3, 1.0], scale: vec![0.5, 0.25, 1.5, 2.0 / 3.0] };
        let s = Surrogate::new(params, SampleRegion::reference()).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &s).unwrap();
        let back = read_model(&buf[..]).unwrap();
        assert_eq!(bits(back.params().values()), bits(s.params().values()));
        assert_eq!(back, s);
    }

    #[test]
    fn radial_scaling_survives_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = MlpParams::init(&[4, 8, 6], &mut rng).unwrap();
        params.radial = Some(RadialScaling { r_ref: 0.32, powers: vec![4, 4, 4, 3, 3, 3] });
        let s = Surrogate::new(params, SampleRegion::reference()).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &s).unwrap();
        let back = read_model(&buf[..]).unwrap();
        assert_eq!(back, s);
        let x = [0.5, 0.1, 0.3, -0.2];
        assert_eq!(back.params().forward_batch(&x).unwrap(), s.params().forward_batch(&x).unwrap());
    }

    #[test]
    fn reads_version_one_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = MlpParams::init(&[4, 8, 6], &mut rng).unwrap();
        let s = Surrogate::new(params, SampleRegion::reference()).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &s).unwrap();
        let offset = 8 + 4 + 4 + 3 * 4 + 3 * 8 + 2 * (4 + 6) * 8;
        assert_eq!(&buf[offset..offset + 4], &0u32.to_le_bytes());
        let mut v1 = buf[..offset].to_vec();
        v1.extend_from_slice(&buf[offset + 4..]);
        v1[8..12].copy_from_slice(&1u32.to_le_bytes());
        assert_eq!(read_model(&v1[..]).unwrap(), s);
    }

    #[test]
    fn model_rejects_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = MlpParams::init(&[4, 8, 6], &mut rng).unwrap();
        let s = Surrogate::new(params, SampleRegion::reference()).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &s).unwrap();
        assert!(matches!(read_model(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_model(&bad[..]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_model(&long[..]), Err(Error::Format(_))));
    }

    #[test]
    fn dataset_round_trip_is_bit_exact() {
        let ds = sample_dataset(&SampleRegion::reference(), 37, 16, 8).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        let back = read_dataset(&buf[..]).unwrap();
        assert_eq!(bits(&back.inputs), bits(&ds.inputs));
        assert_eq!(bits(&back.labels), bits(&ds.labels));
        assert_eq!(back, ds);
        let empty = sample_dataset(&SampleRegion::reference(), 0, 16, 8).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &empty).unwrap();
        assert_eq!(read_dataset(&buf[..]).unwrap(), empty);
    }
}
