//! Symmetric kernels on a finite space.
//!
//! A [`SymKernel`] of order `q` stores one value per multiset of `q` cells,
//! so it is permutation invariant by construction. Multisets are ranked with
//! the combinatorial number system. [`Tensor`] is the dense, unsymmetrized
//! counterpart used for raw input and plain tensor products.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::space::DiscreteSpace;

/// Largest supported kernel order.
pub const MAX_ORDER: usize = 16;
/// Largest number of stored entries for a single kernel or tensor.
pub const MAX_ENTRIES: usize = 1 << 24;

pub(crate) fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u64 = 1;
    for i in 0..k {
        r = r * (n - i) as u64 / (i + 1) as u64;
    }
    r
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Number of multisets of size `order` drawn from `n_cells` cells.
pub fn multiset_count(n_cells: usize, order: usize) -> u64 {
    if order == 0 {
        return 1;
    }
    binomial(n_cells + order - 1, order)
}

/// Rank of a sorted multiset.
fn rank_sorted(sorted: &[usize]) -> usize {
    sorted
        .iter()
        .enumerate()
        .map(|(i, &a)| binomial(a + i, i + 1) as usize)
        .sum()
}

type LayoutCache = HashMap<(usize, usize), Arc<Layout>>;

/// Enumeration tables for all multisets of a given (cells, order).
#[derive(Debug)]
pub struct Layout {
    n_cells: usize,
    order: usize,
    /// Sorted multisets, `order` entries per rank.
    cells: Vec<usize>,
    /// (cell, multiplicity) runs per rank, flattened; `run_offsets[r]..run_offsets[r+1]`.
    runs: Vec<(usize, usize)>,
    run_offsets: Vec<usize>,
    /// Number of distinct ordered tuples with this multiset: order! / Π m!.
    arrangements: Vec<f64>,
}

impl Layout {
    fn build(n_cells: usize, order: usize) -> Result<Layout> {
        if order > MAX_ORDER {
            return Err(Error::InstanceTooLarge(format!(
                "kernel order {order} exceeds {MAX_ORDER}"
            )));
        }
        let count = multiset_count(n_cells, order);
        if count > MAX_ENTRIES as u64 {
            return Err(Error::InstanceTooLarge(format!(
                "{count} multisets of order {order} on {n_cells} cells"
            )));
        }
        let count = count as usize;
        let mut cells = vec![0usize; count * order];
        let mut current = vec![0usize; order];
        fn fill(
            pos: usize,
            start: usize,
            n: usize,
            current: &mut Vec<usize>,
            out: &mut Vec<usize>,
        ) {
            let q = current.len();
            if pos == q {
                let r = rank_sorted(current);
                out[r * q..(r + 1) * q].copy_from_slice(current);
                return;
            }
            for c in start..n {
                current[pos] = c;
                fill(pos + 1, c, n, current, out);
            }
        }
        if order > 0 {
            fill(0, 0, n_cells, &mut current, &mut cells);
        }
        let mut runs = Vec::new();
        let mut run_offsets = Vec::with_capacity(count + 1);
        let mut arrangements = Vec::with_capacity(count);
        let q_fact = factorial(order);
        for r in 0..count {
            run_offsets.push(runs.len());
            let ms = &cells[r * order..(r + 1) * order];
            let mut denom = 1.0;
            let mut i = 0;
            while i < ms.len() {
                let mut j = i;
                while j < ms.len() && ms[j] == ms[i] {
                    j += 1;
                }
                runs.push((ms[i], j - i));
                denom *= factorial(j - i);
                i = j;
            }
            arrangements.push(q_fact / denom);
        }
        run_offsets.push(runs.len());
        Ok(Layout {
            n_cells,
            order,
            cells,
            runs,
            run_offsets,
            arrangements,
        })
    }

    /// Shared layout for (cells, order).
    pub fn get(n_cells: usize, order: usize) -> Result<Arc<Layout>> {
        static CACHE: OnceLock<Mutex<LayoutCache>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(l) = cache.lock().expect("layout cache").get(&(n_cells, order)) {
            return Ok(Arc::clone(l));
        }
        let layout = Arc::new(Layout::build(n_cells, order)?);
        cache
            .lock()
            .expect("layout cache")
            .insert((n_cells, order), Arc::clone(&layout));
        Ok(layout)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.arrangements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrangements.is_empty()
    }

    /// Sorted multiset with the given rank.
    pub fn multiset(&self, rank: usize) -> &[usize] {
        &self.cells[rank * self.order..(rank + 1) * self.order]
    }

    /// (cell, multiplicity) pairs of the multiset with the given rank.
    pub fn runs(&self, rank: usize) -> &[(usize, usize)] {
        &self.runs[self.run_offsets[rank]..self.run_offsets[rank + 1]]
    }

    pub fn arrangements(&self, rank: usize) -> f64 {
        self.arrangements[rank]
    }

    /// Rank of an arbitrary (unsorted) index tuple.
    pub fn rank_of(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.order {
            return Err(Error::OrderMismatch {
                left: self.order,
                right: idx.len(),
            });
        }
        if let Some(&c) = idx.iter().find(|&&c| c >= self.n_cells) {
            return Err(Error::CellOutOfRange {
                cell: c,
                n_cells: self.n_cells,
            });
        }
        let mut buf = [0usize; MAX_ORDER];
        let s = &mut buf[..idx.len()];
        s.copy_from_slice(idx);
        s.sort_unstable();
        Ok(rank_sorted(s))
    }

    /// Π μ over the multiset, with multiplicity.
    pub(crate) fn mass_product(&self, rank: usize, space: &DiscreteSpace) -> f64 {
        self.runs(rank)
            .iter()
            .map(|&(c, m)| space.mass(c).powi(m as i32))
            .product()
    }
}

/// Symmetric kernel of order `q` on `n_cells` cells.
#[derive(Debug, Clone)]
pub struct SymKernel {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl PartialEq for SymKernel {
    fn eq(&self, other: &Self) -> bool {
        self.n_cells() == other.n_cells()
            && self.order() == other.order()
            && self.values == other.values
    }
}

impl SymKernel {
    pub fn zeros(n_cells: usize, order: usize) -> Result<Self> {
        let layout = Layout::get(n_cells, order)?;
        let values = vec![0.0; layout.len()];
        Ok(Self { layout, values })
    }

    /// Order-0 kernel holding a constant.
    pub fn scalar(n_cells: usize, value: f64) -> Self {
        let mut k = Self::zeros(n_cells, 0).expect("order-0 layout");
        k.values[0] = value;
        k
    }

    /// Kernel whose value on each multiset is `f(sorted multiset)`.
    pub fn from_fn<F: FnMut(&[usize]) -> f64>(n_cells: usize, order: usize, mut f: F) -> Result<Self> {
        let layout = Layout::get(n_cells, order)?;
        let values = (0..layout.len()).map(|r| f(layout.multiset(r))).collect();
        Ok(Self { layout, values })
    }

    /// Kernel equal to 1 on the multiset `idx` and 0 elsewhere.
    pub fn indicator(n_cells: usize, idx: &[usize]) -> Result<Self> {
        let mut k = Self::zeros(n_cells, idx.len())?;
        k.set(idx, 1.0)?;
        Ok(k)
    }

    pub fn n_cells(&self) -> usize {
        self.layout.n_cells
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    /// Values in rank order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.values[self.layout.rank_of(idx)?])
    }

    /// Set the value at `idx` and every permutation of it.
    pub fn set(&mut self, idx: &[usize], value: f64) -> Result<()> {
        let r = self.layout.rank_of(idx)?;
        self.values[r] = value;
        Ok(())
    }

    /// (sorted multiset, value) pairs in rank order.
    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        (0..self.values.len()).map(move |r| (self.layout.multiset(r), self.values[r]))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    fn check_space(&self, space: &DiscreteSpace) -> Result<()> {
        if space.n_cells() == self.n_cells() {
            Ok(())
        } else {
            Err(Error::SpaceMismatch {
                expected: self.n_cells(),
                found: space.n_cells(),
            })
        }
    }

    fn check_same_shape(&self, other: &SymKernel) -> Result<()> {
        if self.n_cells() != other.n_cells() {
            return Err(Error::SpaceMismatch {
                expected: self.n_cells(),
                found: other.n_cells(),
            });
        }
        if self.order() != other.order() {
            return Err(Error::OrderMismatch {
                left: self.order(),
                right: other.order(),
            });
        }
        Ok(())
    }

    /// ⟨f, g⟩ = Σ over all q-tuples f·g·Πμ.
    pub fn inner(&self, other: &SymKernel, space: &DiscreteSpace) -> Result<f64> {
        self.check_same_shape(other)?;
        self.check_space(space)?;
        let l = &self.layout;
        Ok((0..l.len())
            .map(|r| l.arrangements(r) * l.mass_product(r, space) * self.values[r] * other.values[r])
            .sum())
    }

    pub fn norm_sq(&self, space: &DiscreteSpace) -> Result<f64> {
        self.inner(self, space)
    }

    pub fn scaled(&self, a: f64) -> SymKernel {
        SymKernel {
            layout: Arc::clone(&self.layout),
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// a·self + b·other.
    pub fn combine(&self, a: f64, other: &SymKernel, b: f64) -> Result<SymKernel> {
        self.check_same_shape(other)?;
        Ok(SymKernel {
            layout: Arc::clone(&self.layout),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &SymKernel) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max))
    }

    /// The order-(q−1) section z ↦ f(cell, z₂, …, z_q).
    pub fn section(&self, cell: usize) -> Result<SymKernel> {
        if self.order() == 0 {
            return Err(Error::InvalidKernel("order-0 kernel has no sections".into()));
        }
        if cell >= self.n_cells() {
            return Err(Error::CellOutOfRange {
                cell,
                n_cells: self.n_cells(),
            });
        }
        let mut buf = vec![0usize; self.order()];
        SymKernel::from_fn(self.n_cells(), self.order() - 1, |ms| {
            buf[0] = cell;
            buf[1..].copy_from_slice(ms);
            self.values[self.layout.rank_of(&buf).expect("valid index")]
        })
    }

    /// Dense copy with every permutation filled in.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let mut t = Tensor::zeros(self.n_cells(), self.order())?;
        let q = self.order();
        let mut idx = vec![0usize; q];
        for flat in 0..t.data.len() {
            t.decode(flat, &mut idx);
            t.data[flat] = self.values[self.layout.rank_of(&idx)?];
        }
        Ok(t)
    }

    /// Plain tensor product (f⊗g)(z₁..z_{p+q}) = f(z₁..z_p)·g(z_{p+1}..z_{p+q}).
    pub fn tensor_product(&self, other: &SymKernel) -> Result<Tensor> {
        if self.n_cells() != other.n_cells() {
            return Err(Error::SpaceMismatch {
                expected: self.n_cells(),
                found: other.n_cells(),
            });
        }
        let (p, q) = (self.order(), other.order());
        let mut t = Tensor::zeros(self.n_cells(), p + q)?;
        let mut idx = vec![0usize; p + q];
        for flat in 0..t.data.len() {
            t.decode(flat, &mut idx);
            let a = self.values[self.layout.rank_of(&idx[..p])?];
            let b = other.values[other.layout.rank_of(&idx[p..])?];
            t.data[flat] = a * b;
        }
        Ok(t)
    }

    /// Symmetrized tensor product f ⊗̃ g. Exactly symmetric in its arguments.
    pub fn sym_tensor_product(&self, other: &SymKernel) -> Result<SymKernel> {
        if self.n_cells() != other.n_cells() {
            return Err(Error::SpaceMismatch {
                expected: self.n_cells(),
                found: other.n_cells(),
            });
        }
        let (p, q) = (self.order(), other.order());
        if p + q > MAX_ORDER {
            return Err(Error::InstanceTooLarge(format!(
                "product order {} exceeds {MAX_ORDER}",
                p + q
            )));
        }
        match p.cmp(&q) {
            std::cmp::Ordering::Less => sym_product_ordered(self, other),
            std::cmp::Ordering::Greater => sym_product_ordered(other, self),
            std::cmp::Ordering::Equal => {
                let a = sym_product_ordered(self, other)?;
                let b = sym_product_ordered(other, self)?;
                a.combine(0.5, &b, 0.5)
            }
        }
    }

    /// Load `{"order": q, "entries": [{"idx": [..], "val": x}]}`.
    ///
    /// Entries describe a raw tensor (unlisted entries are zero) that is
    /// symmetrized on load, unless `"symmetric": true` is set, in which case
    /// each entry gives the value on its whole permutation orbit.
    pub fn from_json_value(value: &Value, n_cells: usize) -> Result<Self> {
        let doc: KernelDoc = serde_json::from_value(value.clone())?;
        if let Some(c) = doc.cells {
            if c != n_cells {
                return Err(Error::SpaceMismatch {
                    expected: n_cells,
                    found: c,
                });
            }
        }
        let q = doc.order;
        if doc.symmetric {
            let mut k = SymKernel::zeros(n_cells, q)?;
            for e in &doc.entries {
                if !e.val.is_finite() {
                    return Err(Error::InvalidKernel(format!("non-finite value at {:?}", e.idx)));
                }
                k.set(&e.idx, e.val)?;
            }
            return Ok(k);
        }
        // last assignment to an exact tuple wins, as for a dense tensor
        let mut raw: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut order_seen: Vec<Vec<usize>> = Vec::new();
        for e in &doc.entries {
            if e.idx.len() != q {
                return Err(Error::OrderMismatch {
                    left: q,
                    right: e.idx.len(),
                });
            }
            if !e.val.is_finite() {
                return Err(Error::InvalidKernel(format!("non-finite value at {:?}", e.idx)));
            }
            if raw.insert(e.idx.clone(), e.val).is_none() {
                order_seen.push(e.idx.clone());
            }
        }
        let mut k = SymKernel::zeros(n_cells, q)?;
        for idx in &order_seen {
            let r = k.layout.rank_of(idx)?;
            k.values[r] += raw[idx] / k.layout.arrangements(r);
        }
        Ok(k)
    }

    pub fn from_json(s: &str, n_cells: usize) -> Result<Self> {
        let v: Value = serde_json::from_str(s)?;
        Self::from_json_value(&v, n_cells)
    }

    /// Canonical JSON form (nonzero orbit values, `"symmetric": true`).
    pub fn to_json_value(&self) -> Value {
        let entries: Vec<KernelEntry> = self
            .iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|(ms, v)| KernelEntry {
                idx: ms.to_vec(),
                val: v,
            })
            .collect();
        serde_json::to_value(KernelDoc {
            order: self.order(),
            cells: Some(self.n_cells()),
            symmetric: true,
            entries,
        })
        .expect("kernel serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct KernelEntry {
    idx: Vec<usize>,
    val: f64,
}

#[derive(Serialize, Deserialize)]
struct KernelDoc {
    order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cells: Option<usize>,
    #[serde(default)]
    symmetric: bool,
    entries: Vec<KernelEntry>,
}

/// f ⊗̃ g with `f` of order p ≤ order of `g`, via sub-multiset splitting:
/// (f⊗̃g)(Z) = Σ_{A⊆Z, |A|=p} Π_c C(z_c, a_c) / C(p+q, p) · f(A) g(Z∖A).
fn sym_product_ordered(f: &SymKernel, g: &SymKernel) -> Result<SymKernel> {
    let (p, q) = (f.order(), g.order());
    let n = f.n_cells();
    let out_layout = Layout::get(n, p + q)?;
    let total = binomial(p + q, p) as f64;
    let mut values = vec![0.0; out_layout.len()];
    let mut a_buf = Vec::with_capacity(p);
    let mut b_buf = Vec::with_capacity(q);
    for (r, slot) in values.iter_mut().enumerate() {
        let runs = out_layout.runs(r);
        let mut acc = 0.0;
        split(runs, 0, p, 1.0, &mut a_buf, &mut b_buf, &mut |w, a, b| {
            let fa = f.values[f.layout.rank_of(a).expect("valid")];
            let gb = g.values[g.layout.rank_of(b).expect("valid")];
            acc += w * fa * gb;
        });
        *slot = acc / total;
    }
    Ok(SymKernel {
        layout: out_layout,
        values,
    })
}

fn split<F: FnMut(f64, &[usize], &[usize])>(
    runs: &[(usize, usize)],
    pos: usize,
    remaining: usize,
    weight: f64,
    a: &mut Vec<usize>,
    b: &mut Vec<usize>,
    visit: &mut F,
) {
    if pos == runs.len() {
        if remaining == 0 {
            visit(weight, a, b);
        }
        return;
    }
    let (cell, mult) = runs[pos];
    let rest: usize = runs[pos + 1..].iter().map(|r| r.1).sum();
    let lo = remaining.saturating_sub(rest);
    let hi = remaining.min(mult);
    for take in lo..=hi {
        let (la, lb) = (a.len(), b.len());
        a.extend(std::iter::repeat_n(cell, take));
        b.extend(std::iter::repeat_n(cell, mult - take));
        split(
            runs,
            pos + 1,
            remaining - take,
            weight * binomial(mult, take) as f64,
            a,
            b,
            visit,
        );
        a.truncate(la);
        b.truncate(lb);
    }
}

/// Dense tensor over q-tuples of cells, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    n_cells: usize,
    order: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n_cells: usize, order: usize) -> Result<Self> {
        let len = (n_cells as u128).pow(order as u32);
        if order > MAX_ORDER || len > MAX_ENTRIES as u128 {
            return Err(Error::InstanceTooLarge(format!(
                "dense tensor of order {order} on {n_cells} cells"
            )));
        }
        Ok(Self {
            n_cells,
            order,
            data: vec![0.0; len as usize],
        })
    }

    pub fn from_fn<F: FnMut(&[usize]) -> f64>(n_cells: usize, order: usize, mut f: F) -> Result<Self> {
        let mut t = Self::zeros(n_cells, order)?;
        let mut idx = vec![0usize; order];
        for flat in 0..t.data.len() {
            t.decode(flat, &mut idx);
            t.data[flat] = f(&idx);
        }
        Ok(t)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn decode(&self, mut flat: usize, idx: &mut [usize]) {
        for slot in idx.iter_mut().rev() {
            *slot = flat % self.n_cells;
            flat /= self.n_cells;
        }
    }

    fn encode(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.order {
            return Err(Error::OrderMismatch {
                left: self.order,
                right: idx.len(),
            });
        }
        let mut flat = 0;
        for &c in idx {
            if c >= self.n_cells {
                return Err(Error::CellOutOfRange {
                    cell: c,
                    n_cells: self.n_cells,
                });
            }
            flat = flat * self.n_cells + c;
        }
        Ok(flat)
    }

    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.data[self.encode(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: f64) -> Result<()> {
        let flat = self.encode(idx)?;
        self.data[flat] = value;
        Ok(())
    }

    /// Canonical symmetrization f̃ = (1/q!) Σ_π f∘π.
    pub fn symmetrize(&self) -> Result<SymKernel> {
        let mut k = SymKernel::zeros(self.n_cells, self.order)?;
        let mut idx = vec![0usize; self.order];
        let mut sums = vec![0.0; k.values.len()];
        for flat in 0..self.data.len() {
            self.decode(flat, &mut idx);
            sums[k.layout.rank_of(&idx)?] += self.data[flat];
        }
        for (r, s) in sums.into_iter().enumerate() {
            k.values[r] = s / k.layout.arrangements(r);
        }
        Ok(k)
    }

    fn weights(&self, space: &DiscreteSpace) -> Vec<f64> {
        let mut w = vec![1.0];
        for _ in 0..self.order {
            w = w
                .iter()
                .flat_map(|&x| space.masses().iter().map(move |&m| x * m))
                .collect();
        }
        w
    }

    pub fn inner(&self, other: &Tensor, space: &DiscreteSpace) -> Result<f64> {
        if self.n_cells != other.n_cells || self.n_cells != space.n_cells() {
            return Err(Error::SpaceMismatch {
                expected: self.n_cells,
                found: other.n_cells.min(space.n_cells()),
            });
        }
        if self.order != other.order {
            return Err(Error::OrderMismatch {
                left: self.order,
                right: other.order,
            });
        }
        let w = self.weights(space);
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .zip(&w)
            .map(|((a, b), w)| a * b * w)
            .sum())
    }

    pub fn norm_sq(&self, space: &DiscreteSpace) -> Result<f64> {
        self.inner(self, space)
    }
}
