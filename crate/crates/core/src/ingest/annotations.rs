//! MOT-challenge style annotation files.
//!
//! One record per line: `frame,id,left,top,width,height[,conf,class,visibility]`
//! with 1-based frames. Internally frames are 0-based.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::{interpolate_box, BoundingBox};
use crate::ingest::stride::TrackedBox;
use crate::types::{Tube, TubeId, VideoMeta};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    /// 1-based frame number as written in the file.
    pub frame: u32,
    pub id: TubeId,
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub confidence: Option<f64>,
    pub class_label: Option<i32>,
    pub visibility: Option<f64>,
    /// 1-based source line.
    pub line: usize,
}

fn field<T: std::str::FromStr>(raw: &str, name: &str, line: usize) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("{name}: cannot parse {:?}", raw.trim())))
}

/// Parses one non-blank line.
pub fn parse_record(text: &str, line: usize) -> Result<DetectionRecord> {
    let fields: Vec<&str> = text.split(',').collect();
    if !(6..=9).contains(&fields.len()) {
        return Err(Error::parse(
            line,
            format!("expected 6 to 9 fields, found {}", fields.len()),
        ));
    }
    let frame: i64 = field(fields[0], "frame", line)?;
    if frame < 1 {
        return Err(Error::parse(line, format!("frame must be >= 1, got {frame}")));
    }
    let id: i64 = field(fields[1], "id", line)?;
    if id < 0 {
        return Err(Error::parse(line, format!("track id must be non-negative, got {id}")));
    }
    let left: f64 = field(fields[2], "left", line)?;
    let top: f64 = field(fields[3], "top", line)?;
    let width: f64 = field(fields[4], "width", line)?;
    let height: f64 = field(fields[5], "height", line)?;
    if !(left.is_finite() && top.is_finite() && width > 0.0 && height > 0.0) {
        return Err(Error::parse(line, "box needs finite position and positive size"));
    }
    let confidence: Option<f64> = fields.get(6).map(|s| field(s, "confidence", line)).transpose()?;
    if let Some(c) = confidence {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::parse(line, format!("confidence {c} outside [0, 1]")));
        }
    }
    let class_label = fields.get(7).map(|s| field(s, "class", line)).transpose()?;
    let visibility = fields.get(8).map(|s| field(s, "visibility", line)).transpose()?;
    Ok(DetectionRecord {
        frame: frame as u32,
        id: id as TubeId,
        left,
        top,
        width,
        height,
        confidence,
        class_label,
        visibility,
        line,
    })
}

/// Reads every record; blank lines and `#` comments are skipped.
pub fn parse_records(reader: impl BufRead) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let text = text?;
        let trimmed = text.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(parse_record(trimmed, i + 1)?);
    }
    Ok(out)
}

impl DetectionRecord {
    /// Box clamped to the frame, with the frame index made 0-based.
    pub fn to_box(&self, meta: &VideoMeta) -> Result<BoundingBox> {
        let clamp_x = |v: f64| v.round().clamp(0.0, meta.width as f64) as u32;
        let clamp_y = |v: f64| v.round().clamp(0.0, meta.height as f64) as u32;
        let (x0, x1) = (clamp_x(self.left), clamp_x(self.left + self.width));
        let (y0, y1) = (clamp_y(self.top), clamp_y(self.top + self.height));
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::BoxOutsideFrame {
                line: self.line,
                id: self.id,
                frame: self.frame,
                width: meta.width,
                height: meta.height,
            });
        }
        Ok(BoundingBox::new(self.frame - 1, x0, y0, x1 - x0, y1 - y0))
    }

    pub fn to_tracked(&self, meta: &VideoMeta) -> Result<TrackedBox> {
        Ok(TrackedBox {
            id: self.id,
            class_label: self.class_label,
            bbox: self.to_box(meta)?,
        })
    }
}

/// Missing frames between consecutive boxes are synthesised by linear interpolation.
pub fn fill_gaps(boxes: &[BoundingBox]) -> Vec<BoundingBox> {
    let mut out = Vec::with_capacity(boxes.len());
    for w in boxes.windows(2) {
        out.push(w[0]);
        for f in w[0].frame + 1..w[1].frame {
            out.push(interpolate_box(&w[0], &w[1], f));
        }
    }
    if let Some(last) = boxes.last() {
        out.push(*last);
    }
    out
}

/// Groups boxes by id into gap-filled tubes sorted by (start frame, id).
pub fn assemble_tubes(
    per_id: BTreeMap<TubeId, (Option<i32>, Vec<BoundingBox>)>,
) -> Result<Vec<Tube>> {
    let mut tubes = per_id
        .into_iter()
        .map(|(id, (class, mut boxes))| {
            boxes.sort_by_key(|b| b.frame);
            Tube::new(id, class, fill_gaps(&boxes))
        })
        .collect::<Result<Vec<_>>>()?;
    tubes.sort_by_key(|t| (t.start(), t.id()));
    Ok(tubes)
}

/// Builds tubes from parsed records, rejecting duplicate (frame, id) pairs.
pub fn tubes_from_records(records: &[DetectionRecord], meta: &VideoMeta) -> Result<Vec<Tube>> {
    let mut seen: BTreeMap<(u32, TubeId), usize> = BTreeMap::new();
    let mut per_id: BTreeMap<TubeId, (Option<i32>, Vec<BoundingBox>)> = BTreeMap::new();
    for r in records {
        if let Some(&first_line) = seen.get(&(r.frame, r.id)) {
            return Err(Error::DuplicateRecord {
                frame: r.frame,
                id: r.id,
                first_line,
                second_line: r.line,
            });
        }
        seen.insert((r.frame, r.id), r.line);
        let entry = per_id.entry(r.id).or_insert((r.class_label, Vec::new()));
        entry.1.push(r.to_box(meta)?);
    }
    assemble_tubes(per_id)
}

pub fn parse_annotations(reader: impl BufRead, meta: &VideoMeta) -> Result<Vec<Tube>> {
    tubes_from_records(&parse_records(reader)?, meta)
}

/// Writes tubes back in the annotation layout, ordered by frame then id.
pub fn write_tubes(tubes: &[Tube], mut out: impl Write) -> io::Result<()> {
    let mut rows: Vec<(u32, TubeId, &BoundingBox, Option<i32>)> = tubes
        .iter()
        .flat_map(|t| t.boxes().iter().map(move |b| (b.frame, t.id(), b, t.class_label())))
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    for (frame, id, b, class) in rows {
        write!(out, "{},{},{},{},{},{}", frame + 1, id, b.left, b.top, b.width, b.height)?;
        match class {
            Some(c) => writeln!(out, ",1,{c},1")?,
            None => writeln!(out)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> VideoMeta {
        VideoMeta::new(640, 480, 1000, 25.0).unwrap()
    }

    #[test]
    fn single_line() {
        let tubes = parse_annotations("1,3,100,200,50,80,1,1,1\n".as_bytes(), &meta()).unwrap();
        assert_eq!(tubes.len(), 1);
        assert_eq!(tubes[0].id(), 3);
        assert_eq!(tubes[0].class_label(), Some(1));
        assert_eq!(tubes[0].boxes(), &[BoundingBox::new(0, 100, 200, 50, 80)]);
    }

    #[test]
    fn gaps_are_interpolated() {
        let text = "1,7,0,0,10,10\n4,7,30,0,10,10\n";
        let tubes = parse_annotations(text.as_bytes(), &meta()).unwrap();
        let lefts: Vec<u32> = tubes[0].boxes().iter().map(|b| b.left).collect();
        assert_eq!(lefts, vec![0, 10, 20, 30]);
        assert!(tubes[0].is_gapless());
    }

    #[test]
    fn empty_stream() {
        assert!(parse_annotations("".as_bytes(), &meta()).unwrap().is_empty());
        assert!(parse_annotations("\n# comment\n".as_bytes(), &meta()).unwrap().is_empty());
    }

    #[test]
    fn malformed_rows_carry_line_numbers() {
        let err = parse_annotations("1,1,0,0,5,5\n2,1,0,0,5\n".as_bytes(), &meta()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_annotations("1,1,a,0,5,5\n".as_bytes(), &meta()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_annotations("0,1,0,0,5,5\n".as_bytes(), &meta()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn duplicates_are_rejected() {
        let err = parse_annotations("1,1,0,0,5,5\n2,1,0,0,5,5\n1,1,3,3,5,5\n".as_bytes(), &meta())
            .unwrap_err();
        match err {
            Error::DuplicateRecord {
                first_line,
                second_line,
                ..
            } => assert_eq!((first_line, second_line), (1, 3)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn boxes_are_clamped_or_rejected() {
        let tubes = parse_annotations("1,1,-10,470,30,30\n".as_bytes(), &meta()).unwrap();
        assert_eq!(tubes[0].boxes()[0], BoundingBox::new(0, 0, 470, 20, 10));
        let err = parse_annotations("1,1,700,10,30,30\n".as_bytes(), &meta()).unwrap_err();
        assert!(matches!(err, Error::BoxOutsideFrame { line: 1, .. }));
    }

    #[test]
    fn tubes_sorted_by_start() {
        let text = "5,1,0,0,5,5\n2,9,0,0,5,5\n";
        let tubes = parse_annotations(text.as_bytes(), &meta()).unwrap();
        assert_eq!(tubes.iter().map(Tube::id).collect::<Vec<_>>(), vec![9, 1]);
    }

    fn arb_tubes() -> impl Strategy<Value = Vec<Tube>> {
        prop::collection::vec(
            (0u32..200, 1u32..20, 0u32..600, 0u32..440, 1u32..40, 1u32..40, prop::option::of(0i32..5)),
            0..8,
        )
        .prop_map(|specs| {
            specs
                .into_iter()
                .enumerate()
                .map(|(i, (start, len, l, t, w, h, class))| {
                    let boxes = (start..start + len)
                        .map(|f| BoundingBox::new(f, l, t, w, h))
                        .collect();
                    Tube::new(i as u64 + 1, class, boxes).unwrap()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(tubes in arb_tubes()) {
            let mut buf = Vec::new();
            write_tubes(&tubes, &mut buf).unwrap();
            let mut parsed = parse_annotations(buf.as_slice(), &meta()).unwrap();
            let mut expected = tubes.clone();
            expected.sort_by_key(|t| (t.start(), t.id()));
            parsed.sort_by_key(|t| (t.start(), t.id()));
            prop_assert_eq!(parsed, expected);
        }
    }
}
