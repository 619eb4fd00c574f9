//! On-disk formats.
//!
//! Probability stacks (`.nlsf`), all integers and floats little-endian:
//!
//! ```text
//! b"NLSF" | version u32 | height u32 | width u32 | n u32 | edge_channels u32 (= 1)
//! n region channels then the edge channel, each row-major f32
//! ```
//!
//! Label and edge maps are binary PGM (`P5`, maxval 255) holding the raw
//! label values; overlays are binary PPM (`P6`).

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::feature::ProbabilityStack;
use crate::field::{GridShape, LabelMap, ScalarField};
use crate::loss::EdgeLabelMap;
use crate::solver::SolveReport;

pub const STACK_MAGIC: &[u8; 4] = b"NLSF";
pub const STACK_VERSION: u32 = 1;

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

pub fn write_stack<W: Write>(mut w: W, stack: &ProbabilityStack) -> Result<()> {
    let shape = stack.shape();
    let mut buf = Vec::with_capacity(24 + 4 * shape.len() * (stack.region_count() + 1));
    buf.extend_from_slice(STACK_MAGIC);
    for v in [
        STACK_VERSION,
        shape.height() as u32,
        shape.width() as u32,
        stack.region_count() as u32,
        1,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for ch in stack.regions().iter().chain(std::iter::once(stack.edge())) {
        for &v in ch.values() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_stack<R: Read>(mut r: R) -> Result<ProbabilityStack> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 24 || &bytes[..4] != STACK_MAGIC {
        return format_err("not a probability stack (bad magic)");
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap());
    let (version, h, w, n, edges) = (word(0), word(1), word(2), word(3), word(4));
    if version != STACK_VERSION {
        return format_err(format!("unsupported stack version {version}"));
    }
    if edges != 1 {
        return format_err(format!("expected 1 edge channel, got {edges}"));
    }
    let shape = GridShape::new(h as usize, w as usize)?;
    let channels = n as usize + 1;
    let expected = 24 + 4 * shape.len() * channels;
    if bytes.len() != expected {
        return format_err(format!("expected {expected} bytes, got {}", bytes.len()));
    }
    let mut fields = bytes[24..]
        .chunks_exact(4 * shape.len())
        .map(|chunk| {
            let vals = chunk
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
                .collect();
            ScalarField::new(shape, vals)
        })
        .collect::<Result<Vec<_>>>()?;
    let edge = fields.pop().expect("at least one channel");
    ProbabilityStack::new(fields, edge)
}

fn write_pgm<W: Write>(mut w: W, shape: GridShape, pixels: impl Iterator<Item = u8>) -> Result<()> {
    let mut buf = format!("P5\n{} {}\n255\n", shape.width(), shape.height()).into_bytes();
    buf.extend(pixels);
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_labels_pgm<W: Write>(w: W, labels: &LabelMap) -> Result<()> {
    if labels.regions() > 255 {
        return format_err("more than 255 regions cannot be stored in an 8-bit PGM");
    }
    write_pgm(w, labels.shape(), labels.labels().iter().map(|&l| l as u8))
}

pub fn write_edges_pgm<W: Write>(w: W, edges: &EdgeLabelMap) -> Result<()> {
    write_pgm(w, edges.shape(), edges.labels().iter().copied())
}

/// Reads a binary 8-bit PGM; returns the shape and raw pixel values.
pub fn read_pgm<R: Read>(mut r: R) -> Result<(GridShape, Vec<u8>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return format_err("truncated PGM header");
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return format_err("expected a binary PGM (P5)");
    }
    let mut number = || -> Result<usize> {
        let t = token()?;
        t.parse()
            .map_err(|_| Error::Format(format!("bad PGM header field {t:?}")))
    };
    let (w, h, maxval) = (number()?, number()?, number()?);
    if maxval == 0 || maxval > 255 {
        return format_err(format!("only 8-bit PGM is supported, maxval {maxval}"));
    }
    // single whitespace byte separates header and raster
    let start = pos + 1;
    let shape = GridShape::new(h, w)?;
    if bytes.len() < start + shape.len() {
        return format_err("truncated PGM raster");
    }
    Ok((shape, bytes[start..start + shape.len()].to_vec()))
}

pub fn read_labels_pgm<R: Read>(r: R, regions: u32) -> Result<LabelMap> {
    let (shape, px) = read_pgm(r)?;
    LabelMap::new(shape, px.into_iter().map(u32::from).collect(), regions)
}

pub fn read_edges_pgm<R: Read>(r: R) -> Result<EdgeLabelMap> {
    let (shape, px) = read_pgm(r)?;
    EdgeLabelMap::new(shape, px)
}

/// Grayscale `background` (values in `[0, 1]`) with level lines drawn on
/// top: pixels where the label changes to a higher region across a
/// 4-neighbour get the colour of that transition.
pub fn write_overlay_ppm<W: Write>(
    mut w: W,
    background: &ScalarField,
    labels: &LabelMap,
) -> Result<()> {
    background.shape().ensure_same(&labels.shape())?;
    let shape = labels.shape();
    let (h, wd) = (shape.height(), shape.width());
    const COLOURS: [[u8; 3]; 4] = [[255, 220, 0], [230, 30, 30], [40, 200, 255], [60, 220, 60]];
    let mut buf = format!("P6\n{wd} {h}\n255\n").into_bytes();
    let l = labels.labels();
    for r in 0..h {
        for c in 0..wd {
            let i = r * wd + c;
            let mut boundary = None;
            for j in [
                (c > 0).then(|| i - 1),
                (c + 1 < wd).then(|| i + 1),
                (r > 0).then(|| i - wd),
                (r + 1 < h).then(|| i + wd),
            ]
            .into_iter()
            .flatten()
            {
                if l[j] > l[i] {
                    boundary = Some(boundary.map_or(l[i], |b: u32| b.min(l[i])));
                }
            }
            match boundary {
                Some(level) => {
                    buf.extend_from_slice(&COLOURS[(level as usize - 1) % COLOURS.len()])
                }
                None => {
                    let g = (background.values()[i].clamp(0.0, 1.0) * 255.0).round() as u8;
                    buf.extend_from_slice(&[g, g, g]);
                }
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Columns `iteration,energy,max_update`; `max_update` is 0 at iteration 0.
pub fn write_trace_csv<W: Write>(mut w: W, report: &SolveReport) -> Result<()> {
    let mut out = String::from("iteration,energy,max_update\n");
    for &(it, e) in &report.energy_trace {
        let m = if it == 0 {
            0.0
        } else {
            report.max_update[it - 1]
        };
        out.push_str(&format!("{it},{e:.17e},{m:.17e}\n"));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::{generate_phantom, PhantomSpec};
    use proptest::prelude::*;

    #[test]
    fn stack_header_layout() {
        let ph = generate_phantom(&PhantomSpec::with_size(32).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_stack(&mut buf, &ph.stack).unwrap();
        assert_eq!(&buf[..4], b"NLSF");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &32u32.to_le_bytes());
        assert_eq!(&buf[12..16], &32u32.to_le_bytes());
        assert_eq!(&buf[16..20], &3u32.to_le_bytes());
        assert_eq!(&buf[20..24], &1u32.to_le_bytes());
        assert_eq!(buf.len(), 24 + 4 * 32 * 32 * 4);
        let first = f32::from_le_bytes(buf[24..28].try_into().unwrap());
        assert_eq!(first, ph.stack.regions()[0].values()[0] as f32);
    }

    #[test]
    fn stack_roundtrip_is_bitwise_after_first_write() {
        let ph = generate_phantom(&PhantomSpec::with_size(40).unwrap()).unwrap();
        let mut a = Vec::new();
        write_stack(&mut a, &ph.stack).unwrap();
        let back = read_stack(a.as_slice()).unwrap();
        let mut b = Vec::new();
        write_stack(&mut b, &back).unwrap();
        assert_eq!(a, b);
        assert_eq!(read_stack(b.as_slice()).unwrap(), back);
    }

    #[test]
    fn malformed_stacks() {
        assert!(matches!(read_stack(&b"NOPE"[..]), Err(Error::Format(_))));
        let ph = generate_phantom(&PhantomSpec::with_size(32).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_stack(&mut buf, &ph.stack).unwrap();
        assert!(read_stack(&buf[..buf.len() - 1]).is_err());
        let mut v2 = buf.clone();
        v2[4] = 2;
        assert!(read_stack(v2.as_slice()).is_err());
    }

    #[test]
    fn pgm_with_comments() {
        let data = b"P5\n# made by hand\n3 3\n255\n\x01\x02\x03\x01\x02\x03\x01\x02\x03";
        let labels = read_labels_pgm(&data[..], 3).unwrap();
        assert_eq!(labels.labels(), &[1, 2, 3, 1, 2, 3, 1, 2, 3]);
        assert!(read_labels_pgm(&data[..], 2).is_err());
        assert!(read_pgm(&b"P2\n3 3\n255\n"[..]).is_err());
        assert!(read_pgm(&data[..data.len() - 1]).is_err());
    }

    #[test]
    fn overlay_marks_transitions() {
        let s = GridShape::new(3, 4).unwrap();
        let labels = LabelMap::new(s, vec![1, 1, 2, 2, 1, 1, 2, 2, 1, 1, 2, 2], 2).unwrap();
        let bg = ScalarField::constant(s, 0.0);
        let mut buf = Vec::new();
        write_overlay_ppm(&mut buf, &bg, &labels).unwrap();
        let header = b"P6\n4 3\n255\n";
        assert_eq!(&buf[..header.len()], header);
        let px = &buf[header.len()..];
        assert_eq!(&px[3..6], &[255, 220, 0]);
        assert_eq!(&px[0..3], &[0, 0, 0]);
        assert_eq!(&px[6..9], &[0, 0, 0]);
    }

    proptest! {
        #[test]
        fn label_pgm_roundtrip(labels in prop::collection::vec(1u32..=4, 5 * 7)) {
            let s = GridShape::new(5, 7).unwrap();
            let map = LabelMap::new(s, labels, 4).unwrap();
            let mut buf = Vec::new();
            write_labels_pgm(&mut buf, &map).unwrap();
            prop_assert_eq!(read_labels_pgm(buf.as_slice(), 4).unwrap(), map);
        }
    }
}
