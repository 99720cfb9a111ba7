use std::path::Path;

use super::plan::{DziPyramid, TileFormat};
use super::{io_err, DziError};

pub const DZI_NAMESPACE: &str = "http://schemas.microsoft.com/deepzoom/2008";

pub fn descriptor_xml(p: &DziPyramid) -> String {
    format!(
        r#"<?xml version="1.0" encoding="UTF-8"?><Image TileSize="{}" Overlap="{}" Format="{}" xmlns="{DZI_NAMESPACE}"><Size Width="{}" Height="{}"/></Image>"#,
        p.tile_size, p.overlap, p.format, p.image_width, p.image_height
    )
}

pub fn write_descriptor(p: &DziPyramid, path: &Path) -> Result<(), DziError> {
    std::fs::write(path, descriptor_xml(p)).map_err(io_err(path))
}

/// Attributes of the first `<{tag} ...>` element in `text`.
fn element_attributes<'a>(text: &'a str, tag: &str) -> Result<Vec<(&'a str, &'a str)>, DziError> {
    let open = format!("<{tag}");
    let start = text
        .match_indices(&open)
        .map(|(i, _)| i)
        .find(|&i| text[i + open.len()..].starts_with(|c: char| c.is_whitespace() || c == '>' || c == '/'))
        .ok_or_else(|| DziError::Descriptor(format!("no <{tag}> element")))?;
    let body_start = start + open.len();
    let end = text[body_start..]
        .find('>')
        .ok_or_else(|| DziError::Descriptor(format!("unterminated <{tag}> element")))?;
    let mut rest = text[body_start..body_start + end].trim_end_matches('/').trim();
    let mut attrs = Vec::new();
    while !rest.is_empty() {
        let eq = rest
            .find('=')
            .ok_or_else(|| DziError::Descriptor(format!("bad attribute syntax in <{tag}>")))?;
        let name = rest[..eq].trim();
        let after = rest[eq + 1..].trim_start();
        let quote = after
            .chars()
            .next()
            .filter(|c| *c == '"' || *c == '\'')
            .ok_or_else(|| DziError::Descriptor(format!("unquoted attribute {name} in <{tag}>")))?;
        let close = after[1..]
            .find(quote)
            .ok_or_else(|| DziError::Descriptor(format!("unterminated attribute {name} in <{tag}>")))?;
        attrs.push((name, &after[1..1 + close]));
        rest = after[close + 2..].trim_start();
    }
    Ok(attrs)
}

fn attr<'a>(attrs: &[(&'a str, &'a str)], name: &str, tag: &str) -> Result<&'a str, DziError> {
    attrs
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| *v)
        .ok_or_else(|| DziError::Descriptor(format!("<{tag}> lacks {name}")))
}

fn number(value: &str, name: &str) -> Result<u32, DziError> {
    value
        .parse()
        .map_err(|_| DziError::Descriptor(format!("{name}={value:?} is not a non-negative integer")))
}

/// Parse a descriptor written by [`write_descriptor`] (or any DZI image
/// descriptor with the same attributes).
pub fn parse_descriptor(text: &str) -> Result<DziPyramid, DziError> {
    let trimmed = text.trim_start_matches('\u{feff}').trim_start();
    if trimmed.starts_with("<?xml") && !trimmed.contains("?>") {
        return Err(DziError::Descriptor("unterminated XML declaration".into()));
    }
    let image = element_attributes(trimmed, "Image")?;
    if attr(&image, "xmlns", "Image")? != DZI_NAMESPACE {
        return Err(DziError::Descriptor("wrong Deep Zoom namespace".into()));
    }
    let tile_size = number(attr(&image, "TileSize", "Image")?, "TileSize")?;
    let overlap = number(attr(&image, "Overlap", "Image")?, "Overlap")?;
    let format: TileFormat = attr(&image, "Format", "Image")?
        .parse()
        .map_err(DziError::Descriptor)?;
    let size = element_attributes(trimmed, "Size")?;
    let width = number(attr(&size, "Width", "Size")?, "Width")?;
    let height = number(attr(&size, "Height", "Size")?, "Height")?;
    if !trimmed.trim_end().ends_with("</Image>") {
        return Err(DziError::Descriptor("missing </Image>".into()));
    }
    DziPyramid::new(width, height, tile_size, overlap, format).map_err(|e| DziError::Descriptor(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deepzoom::plan_pyramid;

    #[test]
    fn exact_descriptor_text() {
        let p = plan_pyramid(1024, 768, 254, 1).unwrap();
        assert_eq!(
            descriptor_xml(&p),
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?><Image TileSize=\"254\" Overlap=\"1\" Format=\"jpg\" \
             xmlns=\"http://schemas.microsoft.com/deepzoom/2008\"><Size Width=\"1024\" Height=\"768\"/></Image>"
        );
        let q = plan_pyramid(10, 10, 512, 0).unwrap();
        assert!(descriptor_xml(&q).contains(r#"TileSize="512" Overlap="0""#));
    }

    #[test]
    fn round_trip() {
        for p in [
            plan_pyramid(1024, 768, 254, 1).unwrap(),
            plan_pyramid(1, 1, 1, 0).unwrap(),
            plan_pyramid(4097, 3, 128, 2).unwrap().with_format(TileFormat::Png),
        ] {
            assert_eq!(parse_descriptor(&descriptor_xml(&p)).unwrap(), p);
        }
    }

    #[test]
    fn tolerates_whitespace_and_reordering() {
        let text = "<?xml version='1.0'?>\n<Image xmlns='http://schemas.microsoft.com/deepzoom/2008'\n  Format='png' Overlap='0' TileSize='256'>\n  <Size Height='5' Width='7' />\n</Image>\n";
        let p = parse_descriptor(text).unwrap();
        assert_eq!((p.image_width, p.image_height, p.tile_size, p.overlap, p.format), (7, 5, 256, 0, TileFormat::Png));
    }

    #[test]
    fn rejects_malformed() {
        let good = descriptor_xml(&plan_pyramid(8, 8, 4, 1).unwrap());
        for bad in [
            String::new(),
            good.replace("TileSize=\"4\" ", ""),
            good.replace("deepzoom/2008", "deepzoom/2009"),
            good.replace("Width=\"8\"", "Width=\"-8\""),
            good.replace("Format=\"jpg\"", "Format=\"gif\""),
            good.replace("</Image>", ""),
            good.replace("Overlap=\"1\"", "Overlap=\"4\""),
        ] {
            assert!(parse_descriptor(&bad).is_err(), "{bad}");
        }
    }
}
