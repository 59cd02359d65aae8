//! JSON and CSV encodings.
//!
//! Every real is written with at least 17 significant decimal digits so that
//! files round-trip bit for bit.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::convexity::SpaceSpec;
use crate::error::{Error, Result};
use crate::metric::{BinaryTree, Embedding};

/// Formats a finite `f64` with 17 significant digits.
///
/// Values in `[1e-5, 1e16)` are written positionally, everything else in
/// scientific notation. The output is a valid JSON number.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0.0".into()
        } else {
            "0.0".into()
        };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("integer exponent");
    if (-5..16).contains(&exp) {
        format!("{:.*}", (16 - exp).max(1) as usize, x)
    } else {
        sci
    }
}

/// A pretty JSON formatter that writes floats through [`format_f64`].
#[derive(Default)]
pub struct PreciseFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for PreciseFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

/// Serializes `value` as pretty JSON with full-precision floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, PreciseFormatter::default());
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Parse(format!("serialization failed: {e}")))?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

/// On-disk form of an [`Embedding`]; row 0 of `points` is vertex 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub tree_depth: u32,
    pub space: SpaceSpec,
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

impl EmbeddingFile {
    pub fn from_embedding(e: &Embedding, manifest: Option<serde_json::Value>) -> Self {
        EmbeddingFile {
            tree_depth: e.tree().depth(),
            space: *e.space(),
            points: e.points(),
            manifest,
        }
    }

    pub fn to_embedding(&self) -> Result<Embedding> {
        Embedding::new(BinaryTree::new(self.tree_depth)?, self.space, self.points.clone())
    }
}

pub fn embedding_to_json(e: &Embedding, manifest: Option<serde_json::Value>) -> Result<String> {
    to_json_string(&EmbeddingFile::from_embedding(e, manifest))
}

/// Parses the embedding JSON format; errors carry the line and column.
pub fn embedding_from_json(text: &str) -> Result<(Embedding, Option<serde_json::Value>)> {
    let file: EmbeddingFile = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    Ok((file.to_embedding()?, file.manifest))
}
