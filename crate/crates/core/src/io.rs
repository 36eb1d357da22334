//! File formats: images, text label maps, overlays and sweep CSVs.
//!
//! A label map file is a header line `width height region_count` followed by
//! `height` rows of `width` space-separated region ids.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::color::RgbImage;
use crate::metrics::Segmentation;
use crate::{Error, Result};

/// Colour used for region boundaries in overlays.
pub const HIGHLIGHT: [u8; 3] = [255, 0, 0];

/// Decode a PNG or JPEG into 8-bit RGB; alpha is dropped and gray promoted.
pub fn load_image(path: &Path) -> Result<RgbImage> {
    if !path.is_file() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let decode_err = |e: &dyn std::fmt::Display| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let reader = image::ImageReader::open(path)?
        .with_guessed_format()
        .map_err(|e| decode_err(&e))?;
    let rgb = reader.decode().map_err(|e| decode_err(&e))?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.pixels().map(|p| p.0).collect();
    RgbImage::new(w, h, data)
}

/// Write an image as PNG.
pub fn save_image(path: &Path, img: &RgbImage) -> Result<()> {
    let raw: Vec<u8> = img.pixels().iter().flatten().copied().collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .ok_or_else(|| Error::Invariant("pixel buffer does not match dimensions".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

pub fn write_labelmap<W: Write>(seg: &Segmentation, out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{} {} {}", seg.width(), seg.height(), seg.region_count())?;
    for row in seg.labels().chunks(seg.width()) {
        let mut first = true;
        for l in row {
            if !first {
                out.write_all(b" ")?;
            }
            write!(out, "{l}")?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_labelmap(path: &Path, seg: &Segmentation) -> Result<()> {
    write_labelmap(seg, fs::File::create(path)?)?;
    Ok(())
}

pub fn read_labelmap<R: BufRead>(input: R) -> Result<Segmentation> {
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(1, format!("bad header field {t:?}"))))
        .collect::<Result<_>>()?;
    let [width, height, count] = dims[..] else {
        return Err(parse_err(1, "header must be `width height region_count`".into()));
    };
    if width == 0 || height == 0 {
        return Err(parse_err(1, "dimensions must be positive".into()));
    }
    let mut labels = Vec::with_capacity(width * height);
    for row in 0..height {
        let lineno = row + 2;
        let line = lines
            .next()
            .ok_or_else(|| parse_err(lineno, format!("expected {height} rows, found {row}")))??;
        let before = labels.len();
        for t in line.split_whitespace() {
            let v: u32 = t.parse().map_err(|_| parse_err(lineno, format!("bad label {t:?}")))?;
            labels.push(v);
        }
        if labels.len() - before != width {
            return Err(parse_err(
                lineno,
                format!("expected {width} labels, found {}", labels.len() - before),
            ));
        }
    }
    for (extra, line) in lines.enumerate() {
        if !line?.trim().is_empty() {
            return Err(parse_err(height + 2 + extra, "trailing data after last row".into()));
        }
    }
    let seg = Segmentation::new(width, height, labels).map_err(|e| parse_err(0, e.to_string()))?;
    if seg.region_count() != count {
        return Err(parse_err(
            1,
            format!("header declares {count} regions, body has {}", seg.region_count()),
        ));
    }
    Ok(seg)
}

pub fn load_labelmap(path: &Path) -> Result<Segmentation> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    read_labelmap(BufReader::new(file))
}

/// Pixels having a 4-neighbour with a different label.
pub fn boundary_mask(seg: &Segmentation) -> Vec<bool> {
    let (w, h) = (seg.width(), seg.height());
    let l = seg.labels();
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w && l[i] != l[i + 1] {
                mask[i] = true;
                mask[i + 1] = true;
            }
            if y + 1 < h && l[i] != l[i + w] {
                mask[i] = true;
                mask[i + w] = true;
            }
        }
    }
    mask
}

/// Copy of `img` with region boundaries painted in [`HIGHLIGHT`].
pub fn render_overlay(img: &RgbImage, seg: &Segmentation) -> Result<RgbImage> {
    if (img.width(), img.height()) != (seg.width(), seg.height()) {
        return Err(Error::DimensionMismatch {
            expected: (img.width(), img.height()),
            found: (seg.width(), seg.height()),
        });
    }
    let data = img
        .pixels()
        .iter()
        .zip(boundary_mask(seg))
        .map(|(&p, edge)| if edge { HIGHLIGHT } else { p })
        .collect();
    RgbImage::new(img.width(), img.height(), data)
}

/// One cell of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub image: String,
    pub radius: usize,
    /// `None` for adaptive thresholding.
    pub threshold: Option<f64>,
    pub superpixels: usize,
    pub communities: usize,
    pub score: f64,
    pub sp_s: f64,
    pub gg_s: f64,
    pub fg_s: f64,
}

impl SweepRecord {
    pub fn mode(&self) -> &'static str {
        if self.threshold.is_some() {
            "static"
        } else {
            "adaptive"
        }
    }
}

pub const SWEEP_HEADER: [&str; 10] = [
    "image",
    "R",
    "mode",
    "t",
    "superpixels",
    "communities",
    "I",
    "sp_s",
    "gg_s",
    "fg_s",
];

pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no sweep records to write"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in records {
        let t = r.threshold.map_or_else(|| "adaptive".to_string(), |t| format!("{t:.6}"));
        w.write_record([
            r.image.clone(),
            r.radius.to_string(),
            r.mode().to_string(),
            t,
            r.superpixels.to_string(),
            r.communities.to_string(),
            format!("{:.6}", r.score),
            format!("{:.6}", r.sp_s),
            format!("{:.6}", r.gg_s),
            format!("{:.6}", r.fg_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().ne(SWEEP_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: "unexpected sweep CSV header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| -> Result<f64> {
            field(k).parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad {} value {:?}", SWEEP_HEADER[k], field(k)),
            })
        };
        let int = |k: usize| -> Result<usize> {
            field(k).parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad {} value {:?}", SWEEP_HEADER[k], field(k)),
            })
        };
        let threshold = match field(2) {
            "adaptive" => None,
            "static" => Some(num(3)?),
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown threshold mode {other:?}"),
                })
            }
        };
        out.push(SweepRecord {
            image: field(0).to_string(),
            radius: int(1)?,
            threshold,
            superpixels: int(4)?,
            communities: int(5)?,
            score: num(6)?,
            sp_s: num(7)?,
            gg_s: num(8)?,
            fg_s: num(9)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn dump(seg: &Segmentation) -> String {
        let mut out = Vec::new();
        write_labelmap(seg, &mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn one_pixel_labelmap() {
        let seg = Segmentation::new(1, 1, vec![0]).unwrap();
        assert_eq!(dump(&seg), "1 1 1\n0\n");
        assert_eq!(read_labelmap("1 1 1\n0\n".as_bytes()).unwrap(), seg);
    }

    #[test]
    fn labelmap_round_trip() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(16);
        for _ in 0..20 {
            let raw: Vec<u32> = (0..256).map(|_| rng.gen_range(0..9)).collect();
            let seg = Segmentation::from_raw_labels(16, 16, &raw).unwrap();
            let text = dump(&seg);
            assert_eq!(read_labelmap(text.as_bytes()).unwrap(), seg);
            assert_eq!(dump(&read_labelmap(text.as_bytes()).unwrap()), text);
        }
    }

    #[test]
    fn labelmap_errors() {
        let bad = |s: &str| read_labelmap(s.as_bytes()).unwrap_err();
        assert!(matches!(bad("2 1 3\n0 1\n"), Error::Parse { line: 1, .. }));
        assert!(matches!(bad("2 1 2\n0\n"), Error::Parse { line: 2, .. }));
        assert!(matches!(bad("2 2 2\n0 1\n"), Error::Parse { line: 3, .. }));
        assert!(matches!(bad("2 1 3\n0 2\n"), Error::Parse { .. }));
        assert!(matches!(bad("1 1\n0\n"), Error::Parse { line: 1, .. }));
        assert!(matches!(bad("1 1 1\nx\n"), Error::Parse { line: 2, .. }));
        assert!(matches!(bad("1 1 1\n0\n0\n"), Error::Parse { line: 3, .. }));
        assert!(matches!(bad(""), Error::Parse { line: 1, .. }));
    }

    #[test]
    fn overlay_boundaries() {
        let img = RgbImage::filled(4, 4, [1, 2, 3]);
        let one = Segmentation::new(4, 4, vec![0; 16]).unwrap();
        assert_eq!(render_overlay(&img, &one).unwrap(), img);

        let split: Vec<u32> = (0..16).map(|i| u32::from(i % 4 >= 2)).collect();
        let seg = Segmentation::new(4, 4, split).unwrap();
        let out = render_overlay(&img, &seg).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let want = if x == 1 || x == 2 { HIGHLIGHT } else { [1, 2, 3] };
                assert_eq!(out.get(x, y), want);
            }
        }
        assert!(render_overlay(&RgbImage::filled(3, 4, [0; 3]), &seg).is_err());
    }

    #[test]
    fn overlay_count_matches_independent_counter() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        let raw: Vec<u32> = (0..120).map(|_| rng.gen_range(0..3)).collect();
        let seg = Segmentation::from_raw_labels(12, 10, &raw).unwrap();
        let img = RgbImage::filled(12, 10, [0, 0, 0]);
        let painted = render_overlay(&img, &seg)
            .unwrap()
            .pixels()
            .iter()
            .filter(|&&p| p == HIGHLIGHT)
            .count();
        let l = seg.labels();
        let mut expected = 0;
        for y in 0..10i64 {
            for x in 0..12i64 {
                let me = l[(y * 12 + x) as usize];
                let differs = [(0, 1), (0, -1), (1, 0), (-1, 0)].iter().any(|(dx, dy)| {
                    let (nx, ny) = (x + dx, y + dy);
                    (0..12).contains(&nx) && (0..10).contains(&ny) && l[(ny * 12 + nx) as usize] != me
                });
                expected += usize::from(differs);
            }
        }
        assert_eq!(painted, expected);
    }

    fn record(t: Option<f64>) -> SweepRecord {
        SweepRecord {
            image: "img1".into(),
            radius: 4,
            threshold: t,
            superpixels: 120,
            communities: 3,
            score: 0.5,
            sp_s: 0.25,
            gg_s: 0.125,
            fg_s: 0.0625,
        }
    }

    #[test]
    fn sweep_csv_format() {
        let mut out = Vec::new();
        write_sweep_csv(&[record(Some(2.5))], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "image,R,mode,t,superpixels,communities,I,sp_s,gg_s,fg_s\n\
             img1,4,static,2.500000,120,3,0.500000,0.250000,0.125000,0.062500\n"
        );
        assert!(write_sweep_csv(&[], Vec::new()).is_err());
    }

    #[test]
    fn sweep_csv_round_trip() {
        let recs = vec![record(Some(0.5)), record(None)];
        let mut out = Vec::new();
        write_sweep_csv(&recs, &mut out).unwrap();
        assert_eq!(read_sweep_csv(out.as_slice()).unwrap(), recs);
    }

    #[test]
    fn image_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("none.png");
        assert!(matches!(load_image(&missing), Err(Error::NotFound(_))));
        let junk = dir.path().join("junk.png");
        fs::write(&junk, b"\x89PNG\r\n\x1a\n\0\0").unwrap();
        assert!(matches!(load_image(&junk), Err(Error::Decode { .. })));
    }

    #[test]
    fn png_round_trip_and_promotion() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = RgbImage::new(2, 2, vec![[1, 2, 3], [4, 5, 6], [7, 8, 9], [250, 251, 252]]).unwrap();
        save_image(&path, &img).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);

        let gray = dir.path().join("g.png");
        image::GrayImage::from_raw(2, 1, vec![10, 200]).unwrap().save(&gray).unwrap();
        let loaded = load_image(&gray).unwrap();
        assert_eq!(loaded.pixels(), &[[10, 10, 10], [200, 200, 200]]);

        let rgba = dir.path().join("rgba.png");
        image::RgbaImage::from_raw(1, 1, vec![9, 8, 7, 0]).unwrap().save(&rgba).unwrap();
        assert_eq!(load_image(&rgba).unwrap().pixels(), &[[9, 8, 7]]);

        let truncated = dir.path().join("t.png");
        let bytes = fs::read(&path).unwrap();
        fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_image(&truncated), Err(Error::Decode { .. })));
    }

    proptest::proptest! {
        #[test]
        fn labelmap_round_trips(w in 1usize..12, h in 1usize..12, raw in proptest::collection::vec(0u32..6, 144)) {
            let seg = Segmentation::from_raw_labels(w, h, &raw[..w * h]).unwrap();
            proptest::prop_assert_eq!(read_labelmap(dump(&seg).as_bytes()).unwrap(), seg);
        }
    }
}
