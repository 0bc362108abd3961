use std::io::{Read, Write};

use crate::datagen::{Dataset, ItemId};
use crate::diffcore::{kernels, NORM_EPSILON};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Autoencoder;

pub const INDEX_DUMP_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"OFRKINDX";

/// Per-category nearest-neighbour lookup over item latents by cosine similarity.
///
/// Latents with (near) zero norm have similarity 0 to everything.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityIndex {
    categories: Vec<usize>,
    latents: Vec<Vec<f32>>,
    unit: Vec<Vec<f64>>,
    by_category: Vec<Vec<ItemId>>,
}

impl SimilarityIndex {
    /// `categories[i]` and `latents[i]` describe item `i`.
    pub fn new(categories: Vec<usize>, latents: Vec<Vec<f32>>) -> Result<Self> {
        if categories.len() != latents.len() {
            return Err(Error::Shape(format!(
                "{} categories for {} latent rows",
                categories.len(),
                latents.len()
            )));
        }
        let dim = latents.first().map_or(0, Vec::len);
        if latents.iter().any(|l| l.len() != dim) {
            return Err(Error::Shape("latent rows differ in length".into()));
        }
        if latents.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite latent value".into()));
        }
        let unit = latents
            .iter()
            .map(|l| {
                let v: Vec<f64> = l.iter().map(|&x| x as f64).collect();
                let n = kernels::norm(&v);
                if n <= NORM_EPSILON {
                    vec![0.0; v.len()]
                } else {
                    v.iter().map(|x| x / n).collect()
                }
            })
            .collect();
        let n_cat = categories.iter().max().map_or(0, |m| m + 1);
        let mut by_category = vec![Vec::new(); n_cat];
        for (i, &c) in categories.iter().enumerate() {
            by_category[c].push(i);
        }
        Ok(SimilarityIndex {
            categories,
            latents,
            unit,
            by_category,
        })
    }

    /// Index over autoencoder latents of every dataset item.
    pub fn from_autoencoder<T: Scalar>(dataset: &Dataset, ae: &Autoencoder<T>) -> Result<Self> {
        let cast: Vec<Vec<T>> = dataset
            .items
            .iter()
            .map(|it| it.features.iter().map(|&v| T::lit(v as f64)).collect())
            .collect();
        let rows: Vec<&[T]> = cast.iter().map(Vec::as_slice).collect();
        let z = ae.encode(&rows)?;
        let latents = (0..z.rows())
            .map(|r| z.row(r).iter().map(|v| v.as_f64() as f32).collect())
            .collect();
        Self::new(dataset.items.iter().map(|it| it.category).collect(), latents)
    }

    /// Index over the raw item features.
    pub fn from_features(dataset: &Dataset) -> Result<Self> {
        Self::new(
            dataset.items.iter().map(|it| it.category).collect(),
            dataset.items.iter().map(|it| it.features.clone()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn latent_dim(&self) -> usize {
        self.latents.first().map_or(0, Vec::len)
    }

    pub fn category(&self, item: ItemId) -> Result<usize> {
        self.categories
            .get(item)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("item {item} not in similarity index")))
    }

    pub fn latent(&self, item: ItemId) -> Result<&[f32]> {
        self.latents
            .get(item)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(format!("item {item} not in similarity index")))
    }

    pub fn similarity(&self, a: ItemId, b: ItemId) -> Result<f64> {
        self.category(a)?;
        self.category(b)?;
        Ok(kernels::dot(&self.unit[a], &self.unit[b]))
    }

    /// Up to `k` same-category items by descending similarity, excluding the query itself.
    /// Equal similarities are ordered by item id.
    pub fn similar_items(&self, item: ItemId, k: usize) -> Result<Vec<ItemId>> {
        let cat = self.category(item)?;
        let mut scored: Vec<(f64, ItemId)> = self.by_category[cat]
            .iter()
            .filter(|&&j| j != item)
            .map(|&j| (kernels::dot(&self.unit[item], &self.unit[j]), j))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.truncate(k);
        Ok(scored.into_iter().map(|(_, j)| j).collect())
    }
}

/// Binary dump: magic, version, item count and latent width as `u32`, then per item its id,
/// category, and latent values as little-endian `f32`.
pub fn write_index_dump(index: &SimilarityIndex, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    for v in [INDEX_DUMP_VERSION, index.len() as u32, index.latent_dim() as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for (i, (c, l)) in index.categories.iter().zip(&index.latents).enumerate() {
        w.write_all(&(i as u32).to_le_bytes())?;
        w.write_all(&(*c as u32).to_le_bytes())?;
        for v in l {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_index_dump(r: &mut impl Read) -> Result<SimilarityIndex> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::parse("index", 0, "not a similarity index dump"));
    }
    let u32_at = |r: &mut dyn Read| -> Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    };
    let version = u32_at(r)?;
    if version != INDEX_DUMP_VERSION {
        return Err(Error::Version {
            found: version,
            expected: INDEX_DUMP_VERSION,
        });
    }
    let count = u32_at(r)? as usize;
    let dim = u32_at(r)? as usize;
    let mut categories = Vec::with_capacity(count);
    let mut latents = Vec::with_capacity(count);
    for i in 0..count {
        let id = u32_at(r)? as usize;
        if id != i {
            return Err(Error::parse("index", i, format!("item id {id} out of order")));
        }
        categories.push(u32_at(r)? as usize);
        let l = (0..dim)
            .map(|_| u32_at(r).map(f32::from_bits))
            .collect::<Result<Vec<_>>>()?;
        latents.push(l);
    }
    SimilarityIndex::new(categories, latents)
}
