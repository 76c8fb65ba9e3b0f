//! Synthetic product/review corpora with partitioned helpfulness structure.
//!
//! Every product gets a latent text topic, a blend of one corpus-wide
//! direction and its own random direction, and an image topic obtained by
//! a fixed linear map of the text topic. Each review draws a helpfulness
//! label, then a latent quality `q` inside that label's band, and its token
//! and region features are `q`-weighted blends of the product topic and an
//! off-topic direction orthogonal to it, plus Gaussian noise. Higher labels
//! therefore mean both closer product-review relevance and closer
//! text-image agreement.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Matrix, Rng};

pub const NUM_LABELS: usize = 5;

/// Maps a helpfulness vote count onto the five partitions
/// `[1,2) [2,4) [4,8) [8,16) [16,∞)`. Zero votes share the lowest bucket.
pub fn votes_to_label(votes: u64) -> u8 {
    match votes {
        0..=1 => 0,
        2..=3 => 1,
        4..=7 => 2,
        8..=15 => 3,
        _ => 4,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReviewRecord {
    pub review_id: String,
    /// One row per token, `d_tok` columns.
    pub text_tokens: Matrix,
    /// One row per region, `d_img` columns.
    pub image_regions: Matrix,
    pub votes: u64,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductRecord {
    pub product_id: String,
    pub text_tokens: Matrix,
    pub image_regions: Matrix,
    pub reviews: Vec<ReviewRecord>,
}

impl ProductRecord {
    pub fn labels(&self) -> Vec<u8> {
        self.reviews.iter().map(|r| r.label).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    /// Not yet partitioned.
    #[default]
    All,
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub products: Vec<ProductRecord>,
    pub d_tok: usize,
    pub d_img: usize,
    pub split: SplitTag,
}

impl Dataset {
    pub fn empty(d_tok: usize, d_img: usize, split: SplitTag) -> Self {
        Self {
            products: Vec::new(),
            d_tok,
            d_img,
            split,
        }
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn review_count(&self) -> usize {
        self.products.iter().map(|p| p.reviews.len()).sum()
    }

    /// Checks every record invariant, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        for p in &self.products {
            let pid = &p.product_id;
            check_width(
                &p.text_tokens,
                self.d_tok,
                || format!("product {pid}: text_tokens"),
                "d_tok",
            )?;
            check_width(
                &p.image_regions,
                self.d_img,
                || format!("product {pid}: image_regions"),
                "d_img",
            )?;
            if p.reviews.len() < 2 {
                return Err(Error::Schema(format!(
                    "product {pid}: reviews has {} entries, need at least 2",
                    p.reviews.len()
                )));
            }
            for (i, r) in p.reviews.iter().enumerate() {
                let rid = &r.review_id;
                if p.reviews[..i].iter().any(|o| &o.review_id == rid) {
                    return Err(Error::Schema(format!(
                        "product {pid}: duplicate review_id {rid}"
                    )));
                }
                check_width(
                    &r.text_tokens,
                    self.d_tok,
                    || format!("review {rid}: text_tokens"),
                    "d_tok",
                )?;
                check_width(
                    &r.image_regions,
                    self.d_img,
                    || format!("review {rid}: image_regions"),
                    "d_img",
                )?;
                if r.label != votes_to_label(r.votes) {
                    return Err(Error::Schema(format!(
                        "review {rid}: label {} does not match votes {} (expected {})",
                        r.label,
                        r.votes,
                        votes_to_label(r.votes)
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_width(m: &Matrix, want: usize, what: impl Fn() -> String, dim: &str) -> Result<()> {
    if m.rows() == 0 {
        return Err(Error::Schema(format!("{}: empty sequence", what())));
    }
    if m.cols() != want {
        return Err(Error::Schema(format!(
            "{}: width {} does not match {dim} = {want}",
            what(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::Schema(format!("{}: non-finite value", what())));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_products: usize,
    pub reviews_min: usize,
    pub reviews_max: usize,
    pub product_tokens_min: usize,
    pub product_tokens_max: usize,
    pub review_tokens_min: usize,
    pub review_tokens_max: usize,
    /// Region count per image, `m`.
    pub regions: usize,
    pub d_tok: usize,
    pub d_img: usize,
    pub noise_level: f64,
    /// Weight in `[0, 1]` of a corpus-wide direction inside every product
    /// topic. At 0 the topics are independent; at 1 all products share one.
    pub topic_sharing: f64,
    pub label_distribution: [f64; NUM_LABELS],
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_products: 300,
            reviews_min: 10,
            reviews_max: 30,
            product_tokens_min: 6,
            product_tokens_max: 10,
            review_tokens_min: 3,
            review_tokens_max: 8,
            regions: 4,
            d_tok: 32,
            d_img: 32,
            noise_level: 0.5,
            topic_sharing: 0.6,
            label_distribution: [0.3, 0.25, 0.2, 0.15, 0.1],
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.label_distribution.iter().sum();
        if (total - 1.0).abs() > 1e-9
            || self
                .label_distribution
                .iter()
                .any(|p| *p < 0.0 || !p.is_finite())
        {
            return Err(Error::Config(format!(
                "label_distribution must be nonnegative and sum to 1, got {:?}",
                self.label_distribution
            )));
        }
        let ranges = [
            ("reviews", self.reviews_min, self.reviews_max, 2),
            (
                "product_tokens",
                self.product_tokens_min,
                self.product_tokens_max,
                1,
            ),
            (
                "review_tokens",
                self.review_tokens_min,
                self.review_tokens_max,
                1,
            ),
        ];
        for (name, lo, hi, floor) in ranges {
            if lo < floor || lo > hi {
                return Err(Error::Config(format!(
                    "{name} range [{lo}, {hi}] must be nonempty with minimum ≥ {floor}"
                )));
            }
        }
        if self.regions == 0 || self.d_tok == 0 || self.d_img == 0 {
            return Err(Error::Config(
                "regions, d_tok and d_img must be positive".into(),
            ));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::Config(format!(
                "noise_level must be ≥ 0, got {}",
                self.noise_level
            )));
        }
        if !(0.0..=1.0).contains(&self.topic_sharing) {
            return Err(Error::Config(format!(
                "topic_sharing must lie in [0, 1], got {}",
                self.topic_sharing
            )));
        }
        Ok(())
    }
}

fn unit_normal(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        if normalize(&mut v) {
            return v;
        }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if norm < 1e-12 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Unit vector orthogonal to the unit vector `axis` (Gram-Schmidt on a
/// random draw). In one dimension there is no such vector and the zero
/// vector is returned.
fn orthogonal_unit(axis: &[f64], rng: &mut Rng) -> Vec<f64> {
    if axis.len() < 2 {
        return vec![0.0; axis.len()];
    }
    loop {
        let mut v: Vec<f64> = (0..axis.len()).map(|_| rng.normal()).collect();
        let along: f64 = v.iter().zip(axis).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(axis).for_each(|(x, a)| *x -= along * a);
        if normalize(&mut v) {
            return v;
        }
    }
}

fn noisy_rows(rows: usize, center: &[f64], noise: f64, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, center.len());
    for r in 0..rows {
        for (x, c) in m.row_mut(r).iter_mut().zip(center) {
            *x = c + noise * rng.normal();
        }
    }
    m
}

fn sample_votes(label: u8, rng: &mut Rng) -> u64 {
    let (lo, hi) = match label {
        0 => (0, 1),
        1 => (2, 3),
        2 => (4, 7),
        3 => (8, 15),
        _ => (16, 63),
    };
    rng.int_inclusive(lo, hi) as u64
}

/// Quality band for a label: `q ∈ [(y + 0.1)/5, (y + 0.9)/5]`, so bands of
/// distinct labels never touch.
fn sample_quality(label: u8, rng: &mut Rng) -> f64 {
    (label as f64 + rng.uniform_range(0.1, 0.9)) / NUM_LABELS as f64
}

/// Generates a corpus. Each product draws from its own child stream of
/// `config.seed`, so products are independent of generation order.
pub fn generate(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let root = Rng::new(config.seed);
    let mut global = root.split(0);
    // Fixed text→image topic map shared by every product.
    let topic_map = Matrix::from_vec(
        config.d_tok,
        config.d_img,
        (0..config.d_tok * config.d_img)
            .map(|_| global.normal())
            .collect(),
    )?;
    let shared = unit_normal(config.d_tok, &mut global);

    let products = (0..config.n_products)
        .map(|i| {
            generate_product(
                config,
                &topic_map,
                &shared,
                i,
                &mut root.split(i as u64 + 1),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        products,
        d_tok: config.d_tok,
        d_img: config.d_img,
        split: SplitTag::All,
    })
}

fn generate_product(
    config: &GenConfig,
    topic_map: &Matrix,
    shared: &[f64],
    index: usize,
    rng: &mut Rng,
) -> Result<ProductRecord> {
    let noise = config.noise_level;
    let own = unit_normal(config.d_tok, rng);
    let s = config.topic_sharing;
    let own_weight = libm::sqrt(1.0 - s * s);
    let mut text_topic: Vec<f64> = shared
        .iter()
        .zip(&own)
        .map(|(a, b)| s * a + own_weight * b)
        .collect();
    if !normalize(&mut text_topic) {
        text_topic = own;
    }
    let mut image_topic = Matrix::row_vector(text_topic.clone())
        .matmul(topic_map)?
        .into_data();
    if !normalize(&mut image_topic) {
        image_topic = unit_normal(config.d_img, rng);
    }

    let product_id = format!("p{index:05}");
    let n_tokens = rng.int_inclusive(config.product_tokens_min, config.product_tokens_max);
    let text_tokens = noisy_rows(n_tokens, &text_topic, noise, rng);
    let image_regions = noisy_rows(config.regions, &image_topic, noise, rng);

    let n_reviews = rng.int_inclusive(config.reviews_min, config.reviews_max);
    let mut reviews = Vec::with_capacity(n_reviews);
    for j in 0..n_reviews {
        let label = rng.categorical(&config.label_distribution) as u8;
        let votes = sample_votes(label, rng);
        let q = sample_quality(label, rng);

        let off_text = orthogonal_unit(&text_topic, rng);
        let off_image = orthogonal_unit(&image_topic, rng);
        let text_center: Vec<f64> = text_topic
            .iter()
            .zip(&off_text)
            .map(|(t, o)| q * t + (1.0 - q) * o)
            .collect();
        let image_center: Vec<f64> = image_topic
            .iter()
            .zip(&off_image)
            .map(|(t, o)| q * t + (1.0 - q) * o)
            .collect();
        let n_tok = rng.int_inclusive(config.review_tokens_min, config.review_tokens_max);
        reviews.push(ReviewRecord {
            review_id: format!("{product_id}-r{j:03}"),
            text_tokens: noisy_rows(n_tok, &text_center, noise, rng),
            image_regions: noisy_rows(config.regions, &image_center, noise, rng),
            votes,
            label,
        });
    }
    Ok(ProductRecord {
        product_id,
        text_tokens,
        image_regions,
        reviews,
    })
}

/// Product-level partition into train/val/test.
///
/// Counts are `round(n · ratio)` for train and val, with the remainder in
/// test. Products are shuffled with `seed` first; a product's reviews never
/// straddle splits.
pub fn split(
    dataset: &Dataset,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    if ratios.iter().any(|r| *r < 0.0 || !r.is_finite())
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split ratios must be nonnegative and sum to 1, got {ratios:?}"
        )));
    }
    let n = dataset.len();
    let wanted = ratios.iter().filter(|r| **r > 0.0).count();
    if n < wanted {
        return Err(Error::Config(format!(
            "cannot split {n} products into {wanted} nonempty parts"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);

    let round = |x: f64| libm::round(x) as usize;
    let n_train = round(n as f64 * ratios[0]).min(n);
    let n_val = round(n as f64 * ratios[1]).min(n - n_train);
    let bounds = [0, n_train, n_train + n_val, n];
    let tags = [SplitTag::Train, SplitTag::Val, SplitTag::Test];
    let mut parts = tags.iter().enumerate().map(|(k, &tag)| {
        let mut idx = order[bounds[k]..bounds[k + 1]].to_vec();
        idx.sort_unstable();
        Dataset {
            products: idx
                .into_iter()
                .map(|i| dataset.products[i].clone())
                .collect(),
            d_tok: dataset.d_tok,
            d_img: dataset.d_img,
            split: tag,
        }
    });
    let train = parts.next().expect("three parts");
    let val = parts.next().expect("three parts");
    let test = parts.next().expect("three parts");
    Ok((train, val, test))
}
