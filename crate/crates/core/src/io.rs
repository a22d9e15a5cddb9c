//! Text and image file formats. See `docs/formats.md` for the grammars.
//!
//! Images are row-major (row 0 at the top, samples left to right). Arrays
//! coming from column-major tools such as MATLAB must be transposed before
//! they are written in these formats.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Point3, Pose, Quaternion};
use crate::lidar_depth::DepthMap;
use crate::stereo::{DisparityMap, GrayImage};

/// Depth files store `round(depth * DEPTH_SCALE)`; 0 marks invalid pixels.
pub const DEPTH_SCALE: f64 = 256.0;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_numbers(path: &Path, line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, line, format!("not a finite number: {t:?}")))
        })
        .collect()
}

pub fn parse_point_cloud(text: &str, path: &Path) -> Result<Vec<Point3>> {
    content_lines(text)
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(parse_err(
                    path,
                    n,
                    format!("expected `x y z`, got {} fields", fields.len()),
                ));
            }
            let v = parse_numbers(path, n, &fields)?;
            Ok(Point3::new(v[0], v[1], v[2]))
        })
        .collect()
}

/// One `x y z` point per line; `#` comments and blank lines are skipped.
pub fn load_point_cloud(path: &Path) -> Result<Vec<Point3>> {
    parse_point_cloud(&read_text(path)?, path)
}

pub fn save_point_cloud(path: &Path, points: &[Point3]) -> Result<()> {
    let mut out = Vec::with_capacity(points.len() * 48);
    writeln!(out, "# x y z (meters, global frame)").unwrap();
    for p in points {
        // {:?} prints the shortest representation that parses back exactly
        writeln!(out, "{:?} {:?} {:?}", p.x, p.y, p.z).unwrap();
    }
    write_bytes(path, &out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub frame_id: String,
    pub pose: Pose,
}

pub fn parse_pose(text: &str, path: &Path) -> Result<PoseRecord> {
    let mut lines = content_lines(text);
    let (n, line) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "pose file has no record"))?;
    if let Some((extra, _)) = lines.next() {
        return Err(parse_err(path, extra, "pose file holds more than one record"));
    }
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 8 {
        return Err(parse_err(
            path,
            n,
            format!("expected `id tx ty tz qw qx qy qz`, got {} fields", fields.len()),
        ));
    }
    let v = parse_numbers(path, n, &fields[1..])?;
    let norm = (v[3] * v[3] + v[4] * v[4] + v[5] * v[5] + v[6] * v[6]).sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        log::warn!("{}:{n}: quaternion norm {norm} normalized to 1", path.display());
    }
    let q = Quaternion::new(v[3], v[4], v[5], v[6]).map_err(|e| parse_err(path, n, e.to_string()))?;
    Ok(PoseRecord {
        frame_id: fields[0].to_string(),
        pose: Pose::new(q, Point3::new(v[0], v[1], v[2])),
    })
}

/// Single record `id tx ty tz qw qx qy qz`.
pub fn load_pose(path: &Path) -> Result<PoseRecord> {
    parse_pose(&read_text(path)?, path)
}

pub fn save_pose(path: &Path, record: &PoseRecord) -> Result<()> {
    let t = record.pose.translation;
    let [w, x, y, z] = record.pose.rotation.components();
    let text = format!(
        "# id tx ty tz qw qx qy qz\n{} {:?} {:?} {:?} {:?} {:?} {:?} {:?}\n",
        record.frame_id, t.x, t.y, t.z, w, x, y, z
    );
    write_bytes(path, text.as_bytes())
}

pub fn parse_intrinsics(text: &str, path: &Path) -> Result<CameraIntrinsics> {
    let (mut focal, mut cx, mut cy, mut height, mut width, mut baseline) =
        (None, None, None, None, None, None);
    for (n, line) in content_lines(text) {
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(char::is_whitespace))
            .ok_or_else(|| parse_err(path, n, format!("expected `key value`, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let v = parse_numbers(path, n, &[value])?[0];
        let count = || {
            (v >= 1.0 && v.fract() == 0.0)
                .then_some(v as usize)
                .ok_or_else(|| parse_err(path, n, format!("{key} must be a positive integer")))
        };
        match key {
            "focal" => focal = Some(v),
            "cx" => cx = Some(v),
            "cy" => cy = Some(v),
            "height" => height = Some(count()?),
            "width" => width = Some(count()?),
            "baseline" => baseline = Some(v),
            other => return Err(parse_err(path, n, format!("unknown key {other:?}"))),
        }
    }
    let missing = |k: &str| parse_err(path, 0, format!("missing required key `{k}`"));
    let principal = match (cx, cy) {
        (Some(x), Some(y)) => Some((x, y)),
        (None, None) => None,
        _ => return Err(parse_err(path, 0, "cx and cy must be given together")),
    };
    CameraIntrinsics::new(
        focal.ok_or_else(|| missing("focal"))?,
        principal,
        height.ok_or_else(|| missing("height"))?,
        width.ok_or_else(|| missing("width"))?,
        baseline.ok_or_else(|| missing("baseline"))?,
    )
}

/// `key value` (or `key = value`) lines for focal, cx, cy, height, width and
/// baseline. cx/cy are optional and default to the image center.
pub fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    parse_intrinsics(&read_text(path)?, path)
}

pub fn save_intrinsics(path: &Path, intr: &CameraIntrinsics) -> Result<()> {
    let text = format!(
        "focal {:?}\ncx {:?}\ncy {:?}\nheight {}\nwidth {}\nbaseline {:?}\n",
        intr.focal, intr.cx, intr.cy, intr.height, intr.width, intr.baseline
    );
    write_bytes(path, text.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Pgm,
    Png,
}

fn format_of(path: &Path) -> Result<Format> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("pgm") => Ok(Format::Pgm),
        Some("png") => Ok(Format::Png),
        _ => Err(Error::UnsupportedFormat(format!(
            "{}: expected a .pgm or .png file",
            path.display()
        ))),
    }
}

/// Single-channel samples at 8 or 16 bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraySamples {
    U8(Vec<u8>),
    U16(Vec<u16>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawGray {
    pub height: usize,
    pub width: usize,
    pub samples: GraySamples,
}

fn encode_pgm(img: &RawGray) -> Vec<u8> {
    let maxval = match img.samples {
        GraySamples::U8(_) => 255,
        GraySamples::U16(_) => 65535,
    };
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    match &img.samples {
        GraySamples::U8(v) => out.extend_from_slice(v),
        GraySamples::U16(v) => v.iter().for_each(|s| out.extend_from_slice(&s.to_be_bytes())),
    }
    out
}

fn decode_pgm(bytes: &[u8], path: &Path) -> Result<RawGray> {
    let bad = |m: &str| Error::UnsupportedFormat(format!("{}: {m}", path.display()));
    let mut pos = 0;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        header.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("bad PGM header"))?);
    }
    if header[0] != "P5" {
        return Err(bad("only binary PGM (P5) is supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad PGM header number"));
    let (width, height, maxval) = (num(header[1])?, num(header[2])?, num(header[3])?);
    // exactly one whitespace byte separates header and raster
    pos += 1;
    let data = bytes.get(pos..).ok_or_else(|| bad("missing raster"))?;
    let n = width * height;
    let samples = match maxval {
        1..=255 => {
            if data.len() < n {
                return Err(bad("truncated raster"));
            }
            GraySamples::U8(data[..n].to_vec())
        }
        256..=65535 => {
            if data.len() < 2 * n {
                return Err(bad("truncated raster"));
            }
            GraySamples::U16(
                data[..2 * n]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]))
                    .collect(),
            )
        }
        _ => return Err(bad("PGM maxval must be in 1..=65535")),
    };
    Ok(RawGray {
        height,
        width,
        samples,
    })
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads an 8- or 16-bit single-channel PGM (P5) or PNG.
pub fn read_gray_raw(path: &Path) -> Result<RawGray> {
    match format_of(path)? {
        Format::Pgm => {
            let bytes = fs::read(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            decode_pgm(&bytes, path)
        }
        Format::Png => {
            let img = image::open(path).map_err(image_err(path))?;
            let (width, height) = (img.width() as usize, img.height() as usize);
            let samples = match img {
                image::DynamicImage::ImageLuma8(b) => GraySamples::U8(b.into_raw()),
                image::DynamicImage::ImageLuma16(b) => GraySamples::U16(b.into_raw()),
                other if other.color().has_color() || other.color().has_alpha() => {
                    return Err(Error::UnsupportedFormat(format!(
                        "{}: expected a single-channel image, got {:?}",
                        path.display(),
                        other.color()
                    )))
                }
                other => GraySamples::U8(other.into_luma8().into_raw()),
            };
            Ok(RawGray {
                height,
                width,
                samples,
            })
        }
    }
}

pub fn write_gray_raw(path: &Path, img: &RawGray) -> Result<()> {
    match format_of(path)? {
        Format::Pgm => write_bytes(path, &encode_pgm(img)),
        Format::Png => {
            let (w, h) = (img.width as u32, img.height as u32);
            match &img.samples {
                GraySamples::U8(v) => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, v.clone())
                    .expect("sample count matches")
                    .save(path),
                GraySamples::U16(v) => ImageBuffer::<Luma<u16>, _>::from_raw(w, h, v.clone())
                    .expect("sample count matches")
                    .save(path),
            }
            .map_err(image_err(path))
        }
    }
}

/// Reads an 8-bit gray image scaled to `[0, 1]`; 16-bit files are scaled by
/// 65535.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let raw = read_gray_raw(path)?;
    match raw.samples {
        GraySamples::U8(v) => GrayImage::from_u8(raw.height, raw.width, &v),
        GraySamples::U16(v) => GrayImage::new(
            raw.height,
            raw.width,
            v.iter().map(|&s| s as f32 / 65535.0).collect(),
        ),
    }
}

/// Writes `round(255 * v)` as 8-bit gray.
pub fn write_gray(path: &Path, img: &GrayImage) -> Result<()> {
    write_gray_raw(
        path,
        &RawGray {
            height: img.height(),
            width: img.width(),
            samples: GraySamples::U8(img.to_u8()),
        },
    )
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    if format_of(path)? != Format::Png {
        return Err(Error::UnsupportedFormat(format!(
            "{}: color images are written as PNG",
            path.display()
        )));
    }
    img.save(path).map_err(image_err(path))
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path).map_err(image_err(path))?.into_rgb8())
}

/// Depth to stored 16-bit value: `round(depth * 256)` clamped to
/// `1..=65535`; invalid is 0.
pub fn encode_depth(depth: Option<f64>) -> u16 {
    match depth {
        None => 0,
        Some(d) => (d * DEPTH_SCALE).round().clamp(1.0, u16::MAX as f64) as u16,
    }
}

pub fn decode_depth(v: u16) -> Option<f64> {
    (v != 0).then(|| v as f64 / DEPTH_SCALE)
}

pub fn depth_to_raw(map: &DepthMap) -> RawGray {
    RawGray {
        height: map.height(),
        width: map.width(),
        samples: GraySamples::U16(map.values().iter().map(|&d| encode_depth(d)).collect()),
    }
}

/// Writes a 16-bit depth file (PGM or PNG by extension) at 1/256 m per unit.
pub fn write_depth(path: &Path, map: &DepthMap) -> Result<()> {
    write_gray_raw(path, &depth_to_raw(map))
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let raw = read_gray_raw(path)?;
    match raw.samples {
        GraySamples::U16(v) => {
            let values: Vec<Option<f64>> = v.iter().map(|&s| decode_depth(s)).collect();
            DepthMap::from_values(raw.height, raw.width, &values)
        }
        GraySamples::U8(_) => Err(Error::UnsupportedFormat(format!(
            "{}: depth files must be 16-bit",
            path.display()
        ))),
    }
}

/// Writes a disparity map as 16-bit samples holding the raw `i16` value
/// (1/16 px) reinterpreted as `u16`; the invalid marker becomes 0x8000.
pub fn write_disparity(path: &Path, disp: &DisparityMap) -> Result<()> {
    write_gray_raw(
        path,
        &RawGray {
            height: disp.height(),
            width: disp.width(),
            samples: GraySamples::U16(disp.raw().iter().map(|&v| v as u16).collect()),
        },
    )
}

pub fn read_disparity(path: &Path) -> Result<DisparityMap> {
    let raw = read_gray_raw(path)?;
    match raw.samples {
        GraySamples::U16(v) => {
            DisparityMap::from_raw(raw.height, raw.width, v.iter().map(|&s| s as i16).collect())
        }
        GraySamples::U8(_) => Err(Error::UnsupportedFormat(format!(
            "{}: disparity files must be 16-bit",
            path.display()
        ))),
    }
}

/// Writes a 0/1 mask as 8-bit gray with 0 and 255.
pub fn write_mask(path: &Path, height: usize, width: usize, mask: &[bool]) -> Result<()> {
    write_gray_raw(
        path,
        &RawGray {
            height,
            width,
            samples: GraySamples::U8(mask.iter().map(|&m| if m { 255 } else { 0 }).collect()),
        },
    )
}

pub fn ensure_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(path.to_path_buf())
}
