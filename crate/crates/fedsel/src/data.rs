//! Dataset loading and synthesis.
//!
//! Image archives are the classic big-endian IDX layout (magic 2051 for
//! images, 2049 for labels), optionally gzip-compressed; compression is
//! sniffed from the leading two bytes, never from the file name. The
//! CIFAR-10 binary format is 3073-byte records, one label byte then the
//! red, green and blue planes. Pixels scale to [0, 1] by division by 255.
//!
//! Malformed files always come back as `Error::Format` with a byte offset;
//! no loader path panics on untrusted input.

use crate::error::{Error, Result};
use crate::seeding::{channel, stream};
use crate::tensor::Tensor;
use flate2::read::GzDecoder;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Read;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    /// `[n, ...feature dims]`; images keep their `[channels, h, w]` shape
    /// so convolutional specs can consume them directly. Dense layers
    /// flatten trailing dimensions on their own.
    pub samples: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_shape(&self) -> &[usize] {
        &self.samples.shape()[1..]
    }

    /// Per-feature width of one sample.
    pub fn feature_len(&self) -> usize {
        self.samples.row_len()
    }
}

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.len() >= 2 && raw[..2] == GZIP_MAGIC {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Format {
                path: path.display().to_string(),
                offset: 0,
                detail: format!("gzip stream: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn format_err(path: &Path, offset: u64, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        offset,
        detail: detail.into(),
    }
}

fn read_u32_be(buf: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let bytes: [u8; 4] = buf
        .get(offset..offset + 4)
        .ok_or_else(|| format_err(path, buf.len() as u64, "truncated header"))?
        .try_into()
        .expect("slice of 4");
    Ok(u32::from_be_bytes(bytes))
}

/// Images from an IDX file as `[n, 1, rows, cols]`, scaled to [0, 1].
pub fn load_idx_images(path: &Path) -> Result<Tensor> {
    let buf = read_maybe_gzip(path)?;
    let magic = read_u32_be(&buf, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(format_err(
            path,
            0,
            format!("magic {magic}, expected {IMAGE_MAGIC}"),
        ));
    }
    let n = read_u32_be(&buf, 4, path)? as usize;
    let rows = read_u32_be(&buf, 8, path)? as usize;
    let cols = read_u32_be(&buf, 12, path)? as usize;
    let need = 16 + n * rows * cols;
    if buf.len() < need {
        return Err(format_err(
            path,
            buf.len() as u64,
            format!("need {need} bytes for {n} images of {rows}x{cols}"),
        ));
    }
    let data: Vec<f64> = buf[16..need].iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::new(vec![n, 1, rows, cols], data)
}

/// Labels from an IDX file.
pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let buf = read_maybe_gzip(path)?;
    let magic = read_u32_be(&buf, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(format_err(
            path,
            0,
            format!("magic {magic}, expected {LABEL_MAGIC}"),
        ));
    }
    let n = read_u32_be(&buf, 4, path)? as usize;
    let need = 8 + n;
    if buf.len() < need {
        return Err(format_err(
            path,
            buf.len() as u64,
            format!("need {need} bytes for {n} labels"),
        ));
    }
    Ok(buf[8..need].iter().map(|&b| b as usize).collect())
}

/// An image file and its label file as one dataset. Counts must agree.
pub fn load_idx_pair(images: &Path, labels_path: &Path, name: &str) -> Result<Dataset> {
    let samples = load_idx_images(images)?;
    let labels = load_idx_labels(labels_path)?;
    if samples.rows() != labels.len() {
        return Err(format_err(
            labels_path,
            4,
            format!("{} labels for {} images", labels.len(), samples.rows()),
        ));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    Ok(Dataset {
        name: name.to_string(),
        samples,
        labels,
        num_classes,
    })
}

const CIFAR_RECORD: usize = 3073;

/// CIFAR-10 binary batches concatenated in the order given, shaped
/// `[n, 3, 32, 32]` with the file's channel-major pixel order kept.
pub fn load_cifar10(batches: &[PathBuf], name: &str) -> Result<Dataset> {
    if batches.is_empty() {
        return Err(Error::Argument("no batch files".into()));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for path in batches {
        let buf = read_maybe_gzip(path)?;
        if buf.is_empty() || buf.len() % CIFAR_RECORD != 0 {
            return Err(format_err(
                path,
                (buf.len() - buf.len() % CIFAR_RECORD) as u64,
                format!("size {} is not a multiple of {CIFAR_RECORD}", buf.len()),
            ));
        }
        for (r, record) in buf.chunks_exact(CIFAR_RECORD).enumerate() {
            let label = record[0] as usize;
            if label > 9 {
                return Err(format_err(
                    path,
                    (r * CIFAR_RECORD) as u64,
                    format!("label {label} out of range"),
                ));
            }
            labels.push(label);
            data.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    let n = labels.len();
    Ok(Dataset {
        name: name.to_string(),
        samples: Tensor::new(vec![n, 3, 32, 32], data)?,
        labels,
        num_classes: 10,
    })
}

/// Keeps the first `per_class` samples of every class, in original order.
/// Any class with fewer samples than that is an error.
pub fn first_per_class(ds: &Dataset, per_class: usize) -> Result<Dataset> {
    let mut counts = vec![0usize; ds.num_classes];
    let mut keep = Vec::with_capacity(per_class * ds.num_classes);
    for (i, &label) in ds.labels.iter().enumerate() {
        if counts[label] < per_class {
            counts[label] += 1;
            keep.push(i);
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count < per_class {
            return Err(Error::Argument(format!(
                "class {c} has only {count} samples, need {per_class}"
            )));
        }
    }
    let w = ds.feature_len();
    let mut data = Vec::with_capacity(keep.len() * w);
    let mut labels = Vec::with_capacity(keep.len());
    for &i in &keep {
        data.extend_from_slice(ds.samples.row(i));
        labels.push(ds.labels[i]);
    }
    let mut shape = vec![keep.len()];
    shape.extend_from_slice(ds.feature_shape());
    Ok(Dataset {
        name: ds.name.clone(),
        samples: Tensor::new(shape, data)?,
        labels,
        num_classes: ds.num_classes,
    })
}

/// Isotropic Gaussian blobs: class `c` is centered at `separation` along
/// coordinate axis `c mod d`, and sample `i` belongs to class `i mod k`,
/// so classes are balanced by construction.
pub fn synth_blobs(n: usize, d: usize, k: usize, separation: f64, seed: u64) -> Dataset {
    assert!(k >= 1 && d >= 1 && n >= 1);
    let mut rng = stream(&[channel::SYNTH, seed]);
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let axis = c % d;
        for j in 0..d {
            let center = if j == axis { separation } else { 0.0 };
            let noise: f64 = StandardNormal.sample(&mut rng);
            data.push(center + noise);
        }
        labels.push(c);
    }
    Dataset {
        name: format!("synth-blobs-{n}x{d}"),
        samples: Tensor::new(vec![n, d], data).expect("sized to shape"),
        labels,
        num_classes: k,
    }
}

/// Concentric rings in the plane: `n_per` points per radius, uniformly
/// spaced angles plus optional radial jitter. Labels follow ring order.
pub fn synth_rings(n_per: usize, radii: &[f64], jitter: f64, seed: u64) -> (Tensor, Vec<usize>) {
    assert!(n_per >= 1 && !radii.is_empty());
    let mut rng = stream(&[channel::SYNTH, seed, 0x51]);
    let mut rows = Vec::with_capacity(n_per * radii.len());
    let mut labels = Vec::with_capacity(n_per * radii.len());
    for (ring, &radius) in radii.iter().enumerate() {
        for i in 0..n_per {
            let angle = std::f64::consts::TAU * i as f64 / n_per as f64;
            let r = radius
                + if jitter > 0.0 {
                    rng.random_range(-jitter..jitter)
                } else {
                    0.0
                };
            rows.push(vec![r * angle.cos(), r * angle.sin()]);
            labels.push(ring);
        }
    }
    (Tensor::from_rows(&rows).expect("equal widths"), labels)
}

/// A train/test pair plus the accuracy target conventionally used with it.
#[derive(Debug, Clone)]
pub struct TrainTest {
    pub train: Dataset,
    pub test: Dataset,
    pub target_accuracy: f64,
}

fn resolve(dir: &Path, base: &str) -> Result<PathBuf> {
    let plain = dir.join(base);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{base}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::Argument(format!(
        "missing data file {} (also tried .gz)",
        plain.display()
    )))
}

/// Named dataset presets.
///
/// The image presets are desk-scale cuts: the first 1000 train and 200
/// test samples of every class, which keeps a full selector comparison in
/// the minutes range. Applying the cut to a full archive or to an already
/// cut one yields the identical dataset.
pub fn load_preset(name: &str, data_dir: &Path) -> Result<TrainTest> {
    match name {
        "synth-blobs" => Ok(TrainTest {
            train: synth_blobs(4000, 32, 10, 3.0, 101),
            test: synth_blobs(1000, 32, 10, 3.0, 202),
            target_accuracy: 0.85,
        }),
        "mnist-subset" => idx_subset_preset(&data_dir.join("mnist"), name, 0.90),
        "fashion-subset" => idx_subset_preset(&data_dir.join("fashion-mnist"), name, 0.80),
        "cifar10-subset" => {
            let dir = data_dir.join("cifar-10-batches-bin");
            let train_paths: Vec<PathBuf> = (1..=5)
                .map(|i| resolve(&dir, &format!("data_batch_{i}.bin")))
                .collect::<Result<_>>()?;
            let train = load_cifar10(&train_paths, "cifar10-train")?;
            let test = load_cifar10(&[resolve(&dir, "test_batch.bin")?], "cifar10-test")?;
            Ok(TrainTest {
                train: first_per_class(&train, 1000)?,
                test: first_per_class(&test, 200)?,
                target_accuracy: 0.40,
            })
        }
        other => Err(Error::Argument(format!(
            "unknown dataset preset '{other}' \
             (expected synth-blobs, mnist-subset, fashion-subset or cifar10-subset)"
        ))),
    }
}

fn idx_subset_preset(dir: &Path, name: &str, target: f64) -> Result<TrainTest> {
    let train = load_idx_pair(
        &resolve(dir, "train-images-idx3-ubyte")?,
        &resolve(dir, "train-labels-idx1-ubyte")?,
        &format!("{name}-train"),
    )?;
    let test = load_idx_pair(
        &resolve(dir, "t10k-images-idx3-ubyte")?,
        &resolve(dir, "t10k-labels-idx1-ubyte")?,
        &format!("{name}-test"),
    )?;
    Ok(TrainTest {
        train: first_per_class(&train, 1000)?,
        test: first_per_class(&test, 200)?,
        target_accuracy: target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        buf.extend_from_slice(&n.to_be_bytes());
        buf.extend_from_slice(&rows.to_be_bytes());
        buf.extend_from_slice(&cols.to_be_bytes());
        buf.extend_from_slice(pixels);
        buf
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        buf.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        buf.extend_from_slice(labels);
        buf
    }

    fn write_tmp(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> PathBuf {
        let path = dir.path().join(name);
        std::fs::File::create(&path)
            .unwrap()
            .write_all(bytes)
            .unwrap();
        path
    }

    #[test]
    fn idx_pixels_scale_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let img = write_tmp(&dir, "img", &idx_images(2, 2, 2, &[0, 255, 128, 64, 1, 2, 3, 4]));
        let lbl = write_tmp(&dir, "lbl", &idx_labels(&[7, 3]));
        let ds = load_idx_pair(&img, &lbl, "fixture").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples.shape(), &[2, 1, 2, 2]);
        assert_eq!(
            ds.samples.row(0),
            &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]
        );
        assert_eq!(ds.labels, vec![7, 3]);
        assert_eq!(ds.num_classes, 8);
    }

    #[test]
    fn idx_gzip_is_sniffed_from_content() {
        let dir = tempfile::tempdir().unwrap();
        let raw = idx_images(1, 2, 2, &[10, 20, 30, 40]);
        let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
        gz.write_all(&raw).unwrap();
        // Deliberately no .gz extension on the name.
        let img = write_tmp(&dir, "img-compressed", &gz.finish().unwrap());
        let t = load_idx_images(&img).unwrap();
        assert_eq!(t.row(0)[1], 20.0 / 255.0);
    }

    #[test]
    fn idx_bad_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = idx_images(1, 2, 2, &[0; 4]);
        bytes[3] = 0x99;
        let img = write_tmp(&dir, "img", &bytes);
        match load_idx_images(&img) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn idx_truncation_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = idx_images(2, 2, 2, &[0; 8]);
        bytes.truncate(20);
        let img = write_tmp(&dir, "img", &bytes);
        match load_idx_images(&img) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn idx_count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = write_tmp(&dir, "img", &idx_images(2, 2, 2, &[0; 8]));
        let lbl = write_tmp(&dir, "lbl", &idx_labels(&[1, 2, 3]));
        assert!(matches!(
            load_idx_pair(&img, &lbl, "fixture"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn cifar_record_layout_loads_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = vec![3u8];
        rec.extend((0..3072).map(|i| (i % 251) as u8));
        let mut rec2 = vec![9u8];
        rec2.extend(std::iter::repeat_n(255u8, 3072));
        let bytes: Vec<u8> = rec.iter().chain(&rec2).copied().collect();
        let path = write_tmp(&dir, "batch.bin", &bytes);
        let ds = load_cifar10(&[path], "cifar-fixture").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec![3, 9]);
        assert_eq!(ds.samples.shape(), &[2, 3, 32, 32]);
        assert_eq!(ds.samples.row(0)[0], 0.0);
        assert_eq!(ds.samples.row(0)[1], 1.0 / 255.0);
        assert_eq!(ds.samples.row(1)[3071], 1.0);
    }

    #[test]
    fn cifar_truncated_record_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let bytes = vec![0u8; CIFAR_RECORD + 100];
        let path = write_tmp(&dir, "batch.bin", &bytes);
        match load_cifar10(&[path], "x") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, CIFAR_RECORD as u64),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn cifar_label_out_of_range_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = vec![0u8; CIFAR_RECORD * 2];
        bytes[CIFAR_RECORD] = 10;
        let path = write_tmp(&dir, "batch.bin", &bytes);
        match load_cifar10(&[path], "x") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, CIFAR_RECORD as u64),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn blobs_are_balanced_and_separable() {
        let ds = synth_blobs(300, 8, 3, 25.0, 7);
        let mut counts = [0usize; 3];
        for &l in &ds.labels {
            counts[l] += 1;
        }
        assert_eq!(counts, [100, 100, 100]);
        // At separation 25 a nearest-centroid rule is essentially perfect.
        let mut centroids = vec![vec![0.0; 8]; 3];
        for i in 0..ds.len() {
            for (c, &x) in centroids[ds.labels[i]].iter_mut().zip(ds.samples.row(i)) {
                *c += x / 100.0;
            }
        }
        let probe = synth_blobs(300, 8, 3, 25.0, 8);
        let mut hits = 0;
        for i in 0..probe.len() {
            let best = (0..3)
                .min_by(|&a, &b| {
                    let da: f64 = probe
                        .samples
                        .row(i)
                        .iter()
                        .zip(&centroids[a])
                        .map(|(x, c)| (x - c) * (x - c))
                        .sum();
                    let db: f64 = probe
                        .samples
                        .row(i)
                        .iter()
                        .zip(&centroids[b])
                        .map(|(x, c)| (x - c) * (x - c))
                        .sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best == probe.labels[i] {
                hits += 1;
            }
        }
        assert_eq!(hits, 300);
    }

    #[test]
    fn blobs_at_zero_separation_are_chance_level() {
        let ds = synth_blobs(3000, 8, 3, 0.0, 7);
        let mut centroids = vec![vec![0.0; 8]; 3];
        let mut counts = [0.0; 3];
        for i in 0..ds.len() {
            counts[ds.labels[i]] += 1.0;
            for (c, &x) in centroids[ds.labels[i]].iter_mut().zip(ds.samples.row(i)) {
                *c += x;
            }
        }
        for (cent, n) in centroids.iter_mut().zip(&counts) {
            for c in cent.iter_mut() {
                *c /= n;
            }
        }
        let probe = synth_blobs(3000, 8, 3, 0.0, 9);
        let mut hits: f64 = 0.0;
        for i in 0..probe.len() {
            let best = (0..3)
                .min_by(|&a, &b| {
                    let da: f64 = probe
                        .samples
                        .row(i)
                        .iter()
                        .zip(&centroids[a])
                        .map(|(x, c)| (x - c) * (x - c))
                        .sum();
                    let db: f64 = probe
                        .samples
                        .row(i)
                        .iter()
                        .zip(&centroids[b])
                        .map(|(x, c)| (x - c) * (x - c))
                        .sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best == probe.labels[i] {
                hits += 1.0;
            }
        }
        let acc = hits / 3000.0;
        assert!((acc - 1.0 / 3.0).abs() < 0.05, "accuracy {acc}");
    }

    #[test]
    fn rings_sit_on_their_radii() {
        let (pts, labels) = synth_rings(50, &[1.0, 5.0], 0.0, 3);
        assert_eq!(pts.rows(), 100);
        for i in 0..100 {
            let r = (pts.row(i)[0].powi(2) + pts.row(i)[1].powi(2)).sqrt();
            let want = if labels[i] == 0 { 1.0 } else { 5.0 };
            assert!((r - want).abs() < 1e-12);
        }
    }

    #[test]
    fn first_per_class_keeps_original_order() {
        let ds = Dataset {
            name: "t".into(),
            samples: Tensor::from_rows(&[
                vec![0.0],
                vec![1.0],
                vec![2.0],
                vec![3.0],
                vec![4.0],
            ])
            .unwrap(),
            labels: vec![1, 0, 1, 0, 1],
            num_classes: 2,
        };
        let cut = first_per_class(&ds, 1).unwrap();
        assert_eq!(cut.labels, vec![1, 0]);
        assert_eq!(cut.samples.row(0), &[0.0]);
        assert_eq!(cut.samples.row(1), &[1.0]);
        assert!(first_per_class(&ds, 3).is_err());
    }

    #[test]
    fn unknown_preset_name_is_rejected() {
        let err = load_preset("mnist", Path::new("data")).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }
}
