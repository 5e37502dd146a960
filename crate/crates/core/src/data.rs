//! Seeded synthetic classification data.
//!
//! Gaussian blobs around seeded class means, an 80/20 train/validation
//! split, optional label corruption restricted to the training split, and
//! per-epoch shuffled mini-batches.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{RngStream, Tensor};

const MAGIC: &[u8; 8] = b"OUIDATA1";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `N × d` or `N × C × H × W`.
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Sorted sample indices of the training split.
    pub train: Vec<usize>,
    /// Sorted sample indices of the validation split.
    pub val: Vec<usize>,
    pub seed: u64,
    /// Training indices whose label was resampled by [`corrupt_labels`].
    pub corrupted: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample input shape.
    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    /// Views each `d`-vector as a `C × H × W` image.
    pub fn with_image_shape(mut self, chw: [usize; 3]) -> Result<Self> {
        let n = self.len();
        self.inputs = self.inputs.reshape(vec![n, chw[0], chw[1], chw[2]])?;
        Ok(self)
    }

    /// Inputs and labels for the listed samples.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let x = self.inputs.gather_rows(indices);
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Writes the flat little-endian dump described in the README.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let shape = self.sample_shape();
        if shape.len() != 1 && shape.len() != 3 {
            return Err(Error::Format(format!("cannot store sample shape {shape:?}")));
        }
        let mut dims = [0u32; 3];
        for (d, &s) in dims.iter_mut().zip(shape) {
            *d = to_u32(s)?;
        }
        w.write_all(MAGIC)?;
        w.write_all(&to_u32(self.len())?.to_le_bytes())?;
        w.write_all(&to_u32(self.num_classes)?.to_le_bytes())?;
        w.write_all(&to_u32(shape.len())?.to_le_bytes())?;
        for d in dims {
            w.write_all(&d.to_le_bytes())?;
        }
        for v in self.inputs.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        for &y in &self.labels {
            w.write_all(&(y as i32).to_le_bytes())?;
        }
        for split in [&self.train, &self.val, &self.corrupted] {
            w.write_all(&to_u32(split.len())?.to_le_bytes())?;
            for &i in split {
                w.write_all(&to_u32(i)?.to_le_bytes())?;
            }
        }
        w.write_all(&self.seed.to_le_bytes())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad dataset magic".into()));
        }
        let n = read_u32(r)? as usize;
        let num_classes = read_u32(r)? as usize;
        let rank = read_u32(r)? as usize;
        let dims = [read_u32(r)?, read_u32(r)?, read_u32(r)?];
        if rank != 1 && rank != 3 {
            return Err(Error::Format(format!("unsupported sample rank {rank}")));
        }
        let mut shape = vec![n];
        shape.extend(dims[..rank].iter().map(|&d| d as usize));
        let total: usize = shape.iter().product();
        let mut data = Vec::with_capacity(total);
        let mut buf8 = [0u8; 8];
        for _ in 0..total {
            r.read_exact(&mut buf8)?;
            data.push(f64::from_le_bytes(buf8));
        }
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            let y = i32::from_le_bytes(b);
            if y < 0 || y as usize >= num_classes {
                return Err(Error::Format(format!("label {y} out of range")));
            }
            labels.push(y as usize);
        }
        let read_split = |r: &mut dyn Read| -> Result<Vec<usize>> {
            let len = read_u32(r)? as usize;
            (0..len)
                .map(|_| {
                    let i = read_u32(r)? as usize;
                    if i >= n {
                        return Err(Error::Format(format!("index {i} out of range")));
                    }
                    Ok(i)
                })
                .collect()
        };
        let train = read_split(r)?;
        let val = read_split(r)?;
        let corrupted = read_split(r)?;
        r.read_exact(&mut buf8)?;
        let seed = u64::from_le_bytes(buf8);
        Ok(Self {
            inputs: Tensor::new(shape, data)?,
            labels,
            num_classes,
            train,
            val,
            seed,
            corrupted,
        })
    }
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))
}

fn read_u32(r: &mut (impl Read + ?Sized)) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// `num_classes` Gaussian clusters of `per_class` points in `d` dimensions.
///
/// Class means are standard-normal draws; points scatter around their mean
/// with standard deviation `spread`.
pub fn gen_blobs(num_classes: usize, per_class: usize, d: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if num_classes < 1 || per_class < 1 || d < 1 {
        return Err(Error::InvalidParams(format!(
            "need num_classes, per_class, d >= 1, got {num_classes}, {per_class}, {d}"
        )));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::InvalidParams(format!("spread must be >= 0, got {spread}")));
    }
    let root = RngStream::new(seed);
    let mut mean_rng = root.fork(0);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..d).map(|_| mean_rng.normal()).collect())
        .collect();

    let n = num_classes * per_class;
    let mut point_rng = root.fork(1);
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            data.extend(mean.iter().map(|&mu| mu + spread * point_rng.normal()));
            labels.push(c);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut root.fork(2));
    let n_train = n * 4 / 5;
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();

    Ok(Dataset {
        inputs: Tensor::new(vec![n, d], data)?,
        labels,
        num_classes,
        train,
        val,
        seed,
        corrupted: Vec::new(),
    })
}

/// Resamples `floor(rho · N_train)` training labels uniformly over the other
/// classes. Validation labels are untouched.
pub fn corrupt_labels(ds: &Dataset, rho: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParams(format!("corruption fraction must be in [0, 1], got {rho}")));
    }
    let mut out = ds.clone();
    if ds.num_classes < 2 {
        return Ok(out);
    }
    let count = (rho * ds.train.len() as f64).floor() as usize;
    let mut rng = RngStream::new(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, ds.train.len(), count)
        .into_iter()
        .map(|k| ds.train[k])
        .collect();
    picked.sort_unstable();
    for &i in &picked {
        let old = out.labels[i];
        let r = rng.random_range(0..ds.num_classes - 1);
        out.labels[i] = if r < old { r } else { r + 1 };
    }
    let mut all = out.corrupted.clone();
    all.extend_from_slice(&picked);
    all.sort_unstable();
    all.dedup();
    out.corrupted = all;
    Ok(out)
}

/// Training indices for one epoch, shuffled from `(shuffle_seed, epoch)` and
/// cut into batches of `batch_size`; the last batch may be smaller.
pub fn batches(ds: &Dataset, batch_size: usize, shuffle_seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(Error::BatchTooSmall(batch_size));
    }
    let mut order = ds.train.clone();
    order.shuffle(&mut RngStream::new(shuffle_seed).fork(epoch as u64));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
