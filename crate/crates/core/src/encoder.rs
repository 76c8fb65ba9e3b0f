//! Coherence-reasoning encoder with listwise attention.
//!
//! For a product `p` and review `r`, text sequences are projected to hidden
//! width `d` (`H^p`, `H^r`) and image regions are projected then
//! self-attended (`V^p`, `V^r`). Three families of pairings are fused:
//!
//! * intra-modal: `(H^p, H^r)` and `(V^p, V^r)`, each self-attended, then
//!   stacked, convolved, and pooled to `d`;
//! * inter-modal: `(H^p, V^r)` and `(V^p, H^r)`, each self-attended and
//!   pooled, giving `2d`;
//! * intra-entity: `(H^p, V^p)` and `(H^r, V^r)`, likewise `2d`. The
//!   product half is shared by every review of the product.
//!
//! The concatenation is the `5d` coherence vector `z`. Listwise attention
//! then runs self-attention across a product's review list.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{ProductRecord, ReviewRecord};
use crate::error::{Error, Result};
use crate::kernel::layers::pool;
use crate::kernel::{Conv1d, Linear, Matrix, ParamStore, Pooling, Rng, SelfAttention, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_tok: usize,
    pub d_img: usize,
    /// Hidden width `d`.
    pub hidden: usize,
    pub conv_kernel: usize,
    pub pooling: Pooling,
    pub listwise_attention: bool,
}

impl EncoderConfig {
    pub fn new(d_tok: usize, d_img: usize, hidden: usize) -> Self {
        Self {
            d_tok,
            d_img,
            hidden,
            conv_kernel: 3,
            pooling: Pooling::Mean,
            listwise_attention: true,
        }
    }

    /// Width of a coherence vector, `5d`.
    pub fn z_dim(&self) -> usize {
        5 * self.hidden
    }
}

/// Parameter handles of the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub text_product: Linear,
    pub text_review: Linear,
    pub image_product: Linear,
    pub image_review: Linear,
    pub visual_product: SelfAttention,
    pub visual_review: SelfAttention,
    pub intra_text: SelfAttention,
    pub intra_image: SelfAttention,
    pub intra_conv: Conv1d,
    pub pt_ri: SelfAttention,
    pub pi_rt: SelfAttention,
    pub pt_pi: SelfAttention,
    pub rt_ri: SelfAttention,
    pub list: SelfAttention,
}

/// Product-side encodings shared by all of the product's reviews.
#[derive(Clone, Copy, Debug)]
pub struct ProductEncoding {
    pub text: Var,
    pub image: Var,
    /// Pooled product text-image branch, `1 × d`.
    pub entity: Var,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, config: EncoderConfig, rng: &mut Rng) -> Result<Self> {
        let d = config.hidden;
        if d == 0 || config.d_tok == 0 || config.d_img == 0 {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        let z = config.z_dim();
        let attn = |store: &mut ParamStore, name: &str, rng: &mut Rng| {
            SelfAttention::new(store, &format!("encoder.{name}"), d, d, rng)
        };
        Ok(Self {
            text_product: Linear::new(store, "encoder.text_product", config.d_tok, d, rng),
            text_review: Linear::new(store, "encoder.text_review", config.d_tok, d, rng),
            image_product: Linear::new(store, "encoder.image_product", config.d_img, d, rng),
            image_review: Linear::new(store, "encoder.image_review", config.d_img, d, rng),
            visual_product: attn(store, "visual_product", rng),
            visual_review: attn(store, "visual_review", rng),
            intra_text: attn(store, "intra_text", rng),
            intra_image: attn(store, "intra_image", rng),
            intra_conv: Conv1d::new(store, "encoder.intra_conv", d, d, config.conv_kernel, rng)?,
            pt_ri: attn(store, "pt_ri", rng),
            pi_rt: attn(store, "pi_rt", rng),
            pt_pi: attn(store, "pt_pi", rng),
            rt_ri: attn(store, "rt_ri", rng),
            list: SelfAttention::new(store, "encoder.list", z, z, rng),
            config,
        })
    }

    fn check_width(&self, tape: &Tape, x: Var, want: usize, op: &'static str) -> Result<()> {
        let shape = tape.value(x).shape();
        if shape.0 == 0 {
            return Err(Error::Empty(op));
        }
        if shape.1 != want {
            return Err(Error::Shape {
                op,
                left: shape,
                right: (shape.0, want),
            });
        }
        Ok(())
    }

    /// Per-token projection `tokens × W + b` (the recurrent text encoder is
    /// replaced by this linear map).
    pub fn encode_text(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        proj: &Linear,
        tokens: Var,
    ) -> Result<Var> {
        self.check_width(tape, tokens, self.config.d_tok, "encode_text")?;
        proj.forward(tape, store, tokens)
    }

    /// Projected regions passed through self-attention.
    pub fn encode_image(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        proj: &Linear,
        attn: &SelfAttention,
        regions: Var,
    ) -> Result<Var> {
        self.check_width(tape, regions, self.config.d_img, "encode_image")?;
        let projected = proj.forward(tape, store, regions)?;
        Ok(attn.forward(tape, store, projected)?.output)
    }

    fn attend_pool(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        attn: &SelfAttention,
        a: Var,
        b: Var,
    ) -> Result<Var> {
        let stacked = tape.concat_rows(&[a, b])?;
        let attended = attn.forward(tape, store, stacked)?.output;
        pool(tape, attended, self.config.pooling)
    }

    /// `1 × d` intra-modal coherence.
    pub fn intra_modal(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        hp: Var,
        hr: Var,
        vp: Var,
        vr: Var,
    ) -> Result<Var> {
        let text = tape.concat_rows(&[hp, hr])?;
        let text = self.intra_text.forward(tape, store, text)?.output;
        let image = tape.concat_rows(&[vp, vr])?;
        let image = self.intra_image.forward(tape, store, image)?.output;
        let both = tape.concat_rows(&[text, image])?;
        let conv = self.intra_conv.forward(tape, store, both)?;
        pool(tape, conv, self.config.pooling)
    }

    /// `1 × 2d` inter-modal coherence `[pt-ri, pi-rt]`.
    pub fn inter_modal(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        hp: Var,
        vr: Var,
        vp: Var,
        hr: Var,
    ) -> Result<Var> {
        let pt_ri = self.attend_pool(tape, store, &self.pt_ri, hp, vr)?;
        let pi_rt = self.attend_pool(tape, store, &self.pi_rt, vp, hr)?;
        tape.concat_cols(&[pt_ri, pi_rt])
    }

    /// Pooled product text-image branch, `1 × d`.
    pub fn product_entity(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        hp: Var,
        vp: Var,
    ) -> Result<Var> {
        self.attend_pool(tape, store, &self.pt_pi, hp, vp)
    }

    /// `1 × 2d` intra-entity coherence `[pt-pi, rt-ri]` given the shared
    /// product branch.
    pub fn intra_entity(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        product_entity: Var,
        hr: Var,
        vr: Var,
    ) -> Result<Var> {
        let rt_ri = self.attend_pool(tape, store, &self.rt_ri, hr, vr)?;
        tape.concat_cols(&[product_entity, rt_ri])
    }

    /// `[intra-modal, inter-modal, intra-entity]`, `1 × 5d`.
    pub fn fuse(&self, tape: &mut Tape, intra_m: Var, inter_m: Var, intra_r: Var) -> Result<Var> {
        let d = self.config.hidden;
        for (v, w, op) in [
            (intra_m, d, "fuse.intra_modal"),
            (inter_m, 2 * d, "fuse.inter_modal"),
            (intra_r, 2 * d, "fuse.intra_entity"),
        ] {
            let shape = tape.value(v).shape();
            if shape != (1, w) {
                return Err(Error::Shape {
                    op,
                    left: shape,
                    right: (1, w),
                });
            }
        }
        tape.concat_cols(&[intra_m, inter_m, intra_r])
    }

    pub fn encode_product_side(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        product: &ProductRecord,
    ) -> Result<ProductEncoding> {
        let tokens = tape.input(product.text_tokens.clone());
        let regions = tape.input(product.image_regions.clone());
        let text = self.encode_text(tape, store, &self.text_product, tokens)?;
        let image = self.encode_image(
            tape,
            store,
            &self.image_product,
            &self.visual_product,
            regions,
        )?;
        let entity = self.product_entity(tape, store, text, image)?;
        Ok(ProductEncoding {
            text,
            image,
            entity,
        })
    }

    /// Coherence vector `z` for one review, `1 × 5d`.
    pub fn coherence(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        product: &ProductEncoding,
        review: &ReviewRecord,
    ) -> Result<Var> {
        let tokens = tape.input(review.text_tokens.clone());
        let regions = tape.input(review.image_regions.clone());
        let hr = self.encode_text(tape, store, &self.text_review, tokens)?;
        let vr = self.encode_image(
            tape,
            store,
            &self.image_review,
            &self.visual_review,
            regions,
        )?;
        let intra_m = self.intra_modal(tape, store, product.text, hr, product.image, vr)?;
        let inter_m = self.inter_modal(tape, store, product.text, vr, product.image, hr)?;
        let intra_r = self.intra_entity(tape, store, product.entity, hr, vr)?;
        self.fuse(tape, intra_m, inter_m, intra_r)
    }

    /// Self-attention across the review list, one row per review.
    pub fn listwise_attention(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        zs: &[Var],
    ) -> Result<Var> {
        if zs.is_empty() {
            return Err(Error::Empty("listwise_attention"));
        }
        let stacked = tape.concat_rows(zs)?;
        Ok(self.list.forward(tape, store, stacked)?.output)
    }

    /// Encodes every review of `product`, returning a `|R| × 5d` node.
    /// Listwise attention is applied when enabled in the config.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        product: &ProductRecord,
    ) -> Result<Var> {
        if product.reviews.is_empty() {
            return Err(Error::Empty("encode"));
        }
        let side = self.encode_product_side(tape, store, product)?;
        let zs = product
            .reviews
            .iter()
            .map(|r| self.coherence(tape, store, &side, r))
            .collect::<Result<Vec<_>>>()?;
        if self.config.listwise_attention {
            self.listwise_attention(tape, store, &zs)
        } else {
            tape.concat_rows(&zs)
        }
    }

    /// Plain-value encoding of a product's reviews.
    pub fn list_context(&self, store: &ParamStore, product: &ProductRecord) -> Result<ListContext> {
        let mut tape = Tape::new();
        let out = self.encode(&mut tape, store, product)?;
        let m = tape.value(out);
        Ok(ListContext {
            vectors: (0..m.rows()).map(|r| m.row(r).to_vec()).collect(),
        })
    }
}

/// Fused review representation `[z^intraM (d), z^interM (2d), z^intraR (2d)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceVector {
    hidden: usize,
    z: Vec<f64>,
}

impl CoherenceVector {
    pub fn fuse(intra_modal: &[f64], inter_modal: &[f64], intra_entity: &[f64]) -> Result<Self> {
        let d = intra_modal.len();
        if inter_modal.len() != 2 * d || intra_entity.len() != 2 * d {
            return Err(Error::Shape {
                op: "fuse",
                left: (1, d),
                right: (inter_modal.len(), intra_entity.len()),
            });
        }
        let mut z = Vec::with_capacity(5 * d);
        z.extend_from_slice(intra_modal);
        z.extend_from_slice(inter_modal);
        z.extend_from_slice(intra_entity);
        Ok(Self { hidden: d, z })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.z
    }

    pub fn intra_modal(&self) -> &[f64] {
        &self.z[..self.hidden]
    }

    pub fn inter_modal(&self) -> &[f64] {
        &self.z[self.hidden..3 * self.hidden]
    }

    pub fn intra_entity(&self) -> &[f64] {
        &self.z[3 * self.hidden..]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::row_vector(self.z.clone())
    }
}

/// List-contextualized review vectors, one per review in input order.
#[derive(Clone, Debug, PartialEq)]
pub struct ListContext {
    pub vectors: Vec<Vec<f64>>,
}
