//! One-product-per-line JSON dataset files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use helprank_core::data::{Dataset, ProductRecord, ReviewRecord, SplitTag};
use helprank_core::kernel::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewLine {
    review_id: String,
    text_tokens: Vec<Vec<f64>>,
    image_regions: Vec<Vec<f64>>,
    votes: u64,
    label: u8,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProductLine {
    product_id: String,
    text_tokens: Vec<Vec<f64>>,
    image_regions: Vec<Vec<f64>>,
    reviews: Vec<ReviewLine>,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn matrix(rows: Vec<Vec<f64>>, what: &str) -> Result<Matrix, String> {
    if rows.is_empty() {
        return Err(format!("{what}: empty sequence"));
    }
    let width = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != width) {
        return Err(format!(
            "{what}: row {bad} has width {} but row 0 has width {width}",
            rows[bad].len()
        ));
    }
    let n = rows.len();
    Matrix::from_vec(n, width, rows.into_iter().flatten().collect())
        .map_err(|e| format!("{what}: {e}"))
}

fn to_line(p: &ProductRecord) -> ProductLine {
    ProductLine {
        product_id: p.product_id.clone(),
        text_tokens: rows(&p.text_tokens),
        image_regions: rows(&p.image_regions),
        reviews: p
            .reviews
            .iter()
            .map(|r| ReviewLine {
                review_id: r.review_id.clone(),
                text_tokens: rows(&r.text_tokens),
                image_regions: rows(&r.image_regions),
                votes: r.votes,
                label: r.label,
            })
            .collect(),
    }
}

fn from_line(line: ProductLine) -> Result<ProductRecord, String> {
    let pid = line.product_id;
    let reviews = line
        .reviews
        .into_iter()
        .map(|r| {
            let rid = r.review_id;
            Ok(ReviewRecord {
                text_tokens: matrix(r.text_tokens, &format!("review {rid}: text_tokens"))?,
                image_regions: matrix(r.image_regions, &format!("review {rid}: image_regions"))?,
                votes: r.votes,
                label: r.label,
                review_id: rid,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(ProductRecord {
        text_tokens: matrix(line.text_tokens, &format!("product {pid}: text_tokens"))?,
        image_regions: matrix(line.image_regions, &format!("product {pid}: image_regions"))?,
        reviews,
        product_id: pid,
    })
}

/// Serializes a dataset, one product per LF-terminated line.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    for p in &dataset.products {
        serde_json::to_writer(&mut out, &to_line(p))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_jsonl(dataset: &Dataset, path: &Path) -> AppResult<()> {
    let file = File::create(path).map_err(|e| AppError::write(path, e))?;
    write_dataset(dataset, BufWriter::new(file)).map_err(|e| AppError::write(path, e))
}

/// Parses a dataset. Widths are taken from the first product and every
/// record is validated against them. Errors name the 1-based line.
pub fn read_dataset<R: BufRead>(input: R, source: &str) -> AppResult<Dataset> {
    let mut products = Vec::new();
    let mut dims: Option<(usize, usize, usize)> = None;
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| AppError::validation(format!("{source}:{lineno}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ProductLine = serde_json::from_str(&line).map_err(|e| {
            AppError::validation(format!("{source}:{lineno}: malformed product line: {e}"))
        })?;
        let product = from_line(parsed)
            .map_err(|e| AppError::validation(format!("{source}:{lineno}: schema error: {e}")))?;
        let (d_tok, d_img, _) = *dims.get_or_insert((
            product.text_tokens.cols(),
            product.image_regions.cols(),
            lineno,
        ));
        let single = Dataset {
            products: vec![product],
            d_tok,
            d_img,
            split: SplitTag::All,
        };
        single
            .validate()
            .map_err(|e| AppError::validation(format!("{source}:{lineno}: {e}")))?;
        products.extend(single.products);
    }
    let (d_tok, d_img) = dims.map_or((0, 0), |(t, m, _)| (t, m));
    Ok(Dataset {
        products,
        d_tok,
        d_img,
        split: SplitTag::All,
    })
}

pub fn read_jsonl(path: &Path) -> AppResult<Dataset> {
    let file = File::open(path).map_err(|e| AppError::read(path, e))?;
    read_dataset(BufReader::new(file), &path.display().to_string())
}
