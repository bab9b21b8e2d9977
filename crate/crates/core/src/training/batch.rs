use crate::error::{Error, Result};
use crate::model::{accumulate_gradients, teacher_forced, Gradients, ModelConfig, ModelParams};
use crate::numerics::Rng;
use crate::tokenizer::{TokenId, TokenSeq, BOS, EOS, PAD};

/// Pairs per length-sorting pool, in units of batches.
const POOL_BATCHES: usize = 16;

/// Row-major id grid with a parallel 0/1 mask. Rows are left-aligned and
/// padded with PAD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdGrid {
    rows: usize,
    cols: usize,
    ids: Vec<TokenId>,
    mask: Vec<u8>,
}

impl IdGrid {
    /// Builds a grid from unpadded rows; width is the longest row.
    pub fn from_rows(rows: &[Vec<TokenId>]) -> Self {
        let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(rows.len() * cols);
        let mut mask = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            ids.extend_from_slice(row);
            ids.resize(ids.len() + cols - row.len(), PAD);
            mask.extend(std::iter::repeat_n(1u8, row.len()));
            mask.resize(mask.len() + cols - row.len(), 0);
        }
        IdGrid {
            rows: rows.len(),
            cols,
            ids,
            mask,
        }
    }

    /// Builds a grid from raw ids and mask, checking the padding invariants.
    pub fn new(rows: usize, cols: usize, ids: Vec<TokenId>, mask: Vec<u8>) -> Result<Self> {
        if ids.len() != rows * cols || mask.len() != rows * cols {
            return Err(Error::Input(format!(
                "grid {rows}x{cols} needs {} ids and mask entries, got {} and {}",
                rows * cols,
                ids.len(),
                mask.len()
            )));
        }
        let grid = IdGrid { rows, cols, ids, mask };
        for r in 0..rows {
            let ids = &grid.ids[r * cols..(r + 1) * cols];
            let mask = &grid.mask[r * cols..(r + 1) * cols];
            let len = mask.iter().take_while(|&&m| m == 1).count();
            if mask[len..].iter().any(|&m| m != 0) {
                return Err(Error::Input(format!("row {r}: mask is not a 1-prefix followed by 0s")));
            }
            if ids[len..].iter().any(|&id| id != PAD) {
                return Err(Error::Input(format!("row {r}: masked positions must hold PAD")));
            }
            if ids[..len].contains(&PAD) {
                return Err(Error::Input(format!("row {r}: PAD inside the unmasked prefix")));
            }
        }
        Ok(grid)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    /// Number of real tokens in row `r`.
    pub fn row_len(&self, r: usize) -> usize {
        self.mask[r * self.cols..(r + 1) * self.cols]
            .iter()
            .take_while(|&&m| m == 1)
            .count()
    }

    /// The real tokens of row `r`, without padding.
    pub fn row(&self, r: usize) -> &[TokenId] {
        let start = r * self.cols;
        &self.ids[start..start + self.row_len(r)]
    }

    /// Widens the grid to `cols` columns by appending PAD.
    pub fn pad_to(&mut self, cols: usize) {
        if cols <= self.cols {
            return;
        }
        let mut ids = Vec::with_capacity(self.rows * cols);
        let mut mask = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            let span = r * self.cols..(r + 1) * self.cols;
            ids.extend_from_slice(&self.ids[span.clone()]);
            ids.resize(ids.len() + cols - self.cols, PAD);
            mask.extend_from_slice(&self.mask[span]);
            mask.resize(mask.len() + cols - self.cols, 0);
        }
        self.cols = cols;
        self.ids = ids;
        self.mask = mask;
    }
}

/// A padded mini-batch. Target rows hold `<s> y_1 .. y_n </s>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    src: IdGrid,
    tgt: IdGrid,
}

impl Batch {
    pub fn from_pairs(pairs: &[(TokenSeq, TokenSeq)]) -> Result<Self> {
        let src: Vec<Vec<TokenId>> = pairs.iter().map(|(s, _)| s.to_vec()).collect();
        let tgt: Vec<Vec<TokenId>> = pairs
            .iter()
            .map(|(_, t)| {
                let mut row = Vec::with_capacity(t.len() + 2);
                row.push(BOS);
                row.extend_from_slice(t);
                row.push(EOS);
                row
            })
            .collect();
        Batch::new(IdGrid::from_rows(&src), IdGrid::from_rows(&tgt))
    }

    pub fn new(src: IdGrid, tgt: IdGrid) -> Result<Self> {
        if src.rows() == 0 || src.rows() != tgt.rows() {
            return Err(Error::Input(format!(
                "batch needs matching nonzero row counts, got {} source and {} target rows",
                src.rows(),
                tgt.rows()
            )));
        }
        for r in 0..src.rows() {
            if src.row_len(r) == 0 {
                return Err(Error::Input(format!("batch row {r}: source is all PAD")));
            }
            let t = tgt.row(r);
            if t.len() < 3 || t[0] != BOS || t[t.len() - 1] != EOS {
                return Err(Error::Input(format!(
                    "batch row {r}: target must be <s>, at least one token, </s>"
                )));
            }
        }
        Ok(Batch { src, tgt })
    }

    pub fn len(&self) -> usize {
        self.src.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn src(&self) -> &IdGrid {
        &self.src
    }

    pub fn tgt(&self) -> &IdGrid {
        &self.tgt
    }

    /// Unpadded source and target (without `<s>`/`</s>`) of row `r`.
    pub fn pair(&self, r: usize) -> (&[TokenId], &[TokenId]) {
        let t = self.tgt.row(r);
        (self.src.row(r), &t[1..t.len() - 1])
    }

    /// Number of predicted target positions, `n + 1` per row.
    pub fn num_target_tokens(&self) -> usize {
        (0..self.len()).map(|r| self.tgt.row_len(r) - 1).sum()
    }

    /// Widens both grids with PAD columns.
    pub fn pad_to(&mut self, src_cols: usize, tgt_cols: usize) {
        self.src.pad_to(src_cols);
        self.tgt.pad_to(tgt_cols);
    }
}

/// Shuffles the pairs, sorts pools of nearby pairs by source length, cuts
/// them into batches and shuffles the batch order.
pub fn make_batches(pairs: &[(TokenSeq, TokenSeq)], batch_size: usize, rng: &mut Rng) -> Result<Vec<Batch>> {
    if pairs.is_empty() || batch_size == 0 {
        return Err(Error::Input("make_batches needs pairs and batch_size >= 1".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    rng.shuffle(&mut order);
    for pool in order.chunks_mut(batch_size * POOL_BATCHES) {
        pool.sort_by_key(|&i| pairs[i].0.len());
    }
    let mut batches = order
        .chunks(batch_size)
        .map(|chunk| {
            let rows: Vec<(TokenSeq, TokenSeq)> = chunk.iter().map(|&i| pairs[i].clone()).collect();
            Batch::from_pairs(&rows)
        })
        .collect::<Result<Vec<_>>>()?;
    rng.shuffle(&mut batches);
    Ok(batches)
}

/// Token-normalized loss of a batch and its gradient.
///
/// Rows are processed one after another on their unpadded tokens and summed
/// in row order, so padding never enters the arithmetic.
pub fn batched_loss_and_grads(batch: &Batch, params: &ModelParams, config: &ModelConfig) -> Result<(f64, Gradients)> {
    let mut grads = params.zeros_like();
    let loss = accumulate_batch(batch, params, config, &mut grads)?;
    Ok((loss, grads))
}

pub(crate) fn accumulate_batch(
    batch: &Batch,
    params: &ModelParams,
    config: &ModelConfig,
    grads: &mut Gradients,
) -> Result<f64> {
    let scale = 1.0 / batch.num_target_tokens() as f64;
    let mut nll = 0.0;
    for r in 0..batch.len() {
        let t = batch.tgt.row(r);
        let cache = teacher_forced(batch.src.row(r), &t[..t.len() - 1], &t[1..], params, config)?;
        nll += cache.nll_sum();
        accumulate_gradients(&cache, params, scale, grads)?;
    }
    Ok(nll * scale)
}
