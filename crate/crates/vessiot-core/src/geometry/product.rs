//! Product charts and the direct-product machinery: lifts, diagonal
//! prolongations, direct products of fields/forms/functions, and coordinate
//! projections (pushforwards) onto sub-charts.

use std::sync::Arc;

use crate::exprs::{RatFn, VarSet};

use super::{Chart, DifferentialForm, GeomError, GeomResult, VectorField};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PushforwardError {
    #[error("coefficient of `{coord}` depends on dropped variable `{dropped}`")]
    NotProjectable { coord: String, dropped: String },
    #[error("unknown coordinate `{0}`")]
    UnknownCoordinate(String),
}

/// One factor of a product chart.
#[derive(Debug, Clone)]
pub struct Block {
    pub factor: Arc<Chart>,
    pub tag: String,
    /// Index of this block's first coordinate in the product chart.
    pub offset: usize,
}

/// A product of charts with coordinates renamed `name_(tag)` per copy.
/// Parameters are shared (not duplicated) across factors.
#[derive(Debug, Clone)]
pub struct ProductChart {
    pub chart: Arc<Chart>,
    pub blocks: Vec<Block>,
}

impl ProductChart {
    /// Build the product of the given factors; tags must be distinct.
    pub fn new(name: &str, factors: &[(Arc<Chart>, String)]) -> GeomResult<ProductChart> {
        let mut coords: Vec<String> = Vec::new();
        let mut params: Vec<String> = Vec::new();
        let mut blocks = Vec::new();
        for (factor, tag) in factors {
            let offset = coords.len();
            for c in factor.coords() {
                coords.push(format!("{c}_({tag})"));
            }
            for p in factor.params() {
                if !params.contains(p) {
                    params.push(p.clone());
                }
            }
            blocks.push(Block {
                factor: factor.clone(),
                tag: tag.clone(),
                offset,
            });
        }
        // Collect per-factor constraints as renamed expressions.
        let mut constraint_texts: Vec<String> = Vec::new();
        let chart = Chart::new(name, &coords, &params, &constraint_texts)?;
        // Re-create with constraints expressed on the product variables.
        for (b, (factor, _)) in blocks.iter().zip(factors) {
            for c in factor.constraints() {
                let lifted = transport_rf(c, factor, chart.vars(), b.offset, chart.dim())?;
                constraint_texts.push(lifted.to_string());
            }
        }
        let chart = Chart::new(name, &coords, &params, &constraint_texts)?;
        Ok(ProductChart { chart, blocks })
    }

    /// k identical copies of one chart, tagged 1..k.
    pub fn power(name: &str, factor: &Arc<Chart>, k: usize) -> GeomResult<ProductChart> {
        let factors: Vec<(Arc<Chart>, String)> = (1..=k)
            .map(|i| (factor.clone(), i.to_string()))
            .collect();
        Self::new(name, &factors)
    }

    /// Product with explicit coordinate names per block (positional renaming
    /// of each factor's coordinates).
    pub fn with_names(name: &str, factors: &[(Arc<Chart>, Vec<String>)]) -> GeomResult<ProductChart> {
        let mut coords: Vec<String> = Vec::new();
        let mut params: Vec<String> = Vec::new();
        let mut blocks = Vec::new();
        for (idx, (factor, names)) in factors.iter().enumerate() {
            assert_eq!(
                names.len(),
                factor.dim(),
                "one name per factor coordinate"
            );
            let offset = coords.len();
            coords.extend(names.iter().cloned());
            for p in factor.params() {
                if !params.contains(p) {
                    params.push(p.clone());
                }
            }
            blocks.push(Block {
                factor: factor.clone(),
                tag: (idx + 1).to_string(),
                offset,
            });
        }
        let chart = Chart::new(name, &coords, &params, &Vec::<String>::new())?;
        let mut constraint_texts: Vec<String> = Vec::new();
        for (b, (factor, _)) in blocks.iter().zip(factors) {
            for c in factor.constraints() {
                let lifted = transport_rf(c, factor, chart.vars(), b.offset, chart.dim())?;
                constraint_texts.push(lifted.to_string());
            }
        }
        let chart = Chart::new(name, &coords, &params, &constraint_texts)?;
        Ok(ProductChart { chart, blocks })
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn block(&self, idx: usize) -> &Block {
        &self.blocks[idx]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Pull a function on a factor back to the product (variable renaming).
    pub fn lift_rf(&self, f: &RatFn, block: usize) -> GeomResult<RatFn> {
        let b = &self.blocks[block];
        transport_rf(f, &b.factor, self.chart.vars(), b.offset, self.chart.dim())
    }

    /// Place a factor field on one block, zero elsewhere.
    pub fn lift_field(&self, x: &VectorField, block: usize) -> GeomResult<VectorField> {
        let b = &self.blocks[block];
        x.chart.same_as(&b.factor)?;
        let mut comps = vec![RatFn::zero(self.chart.vars()); self.chart.dim()];
        for (i, c) in x.comps().iter().enumerate() {
            comps[b.offset + i] =
                transport_rf(c, &b.factor, self.chart.vars(), b.offset, self.chart.dim())?;
        }
        Ok(VectorField::new(&self.chart, comps))
    }

    /// Direct product of one field per block: the sum of the lifts.
    pub fn direct_product(&self, fields: &[VectorField]) -> GeomResult<VectorField> {
        assert_eq!(fields.len(), self.blocks.len(), "one field per block");
        let mut acc = VectorField::zero(&self.chart);
        for (i, f) in fields.iter().enumerate() {
            acc = acc.add(&self.lift_field(f, i)?)?;
        }
        Ok(acc)
    }

    /// Diagonal prolongation of a field over the given blocks (all blocks
    /// must be copies of the field's chart).
    pub fn prolong(&self, x: &VectorField, blocks: &[usize]) -> GeomResult<VectorField> {
        let mut acc = VectorField::zero(&self.chart);
        for &b in blocks {
            acc = acc.add(&self.lift_field(x, b)?)?;
        }
        Ok(acc)
    }

    /// Direct product of functions λ(f_1, ..., f_k) = Σ pullbacks.
    pub fn lambda(&self, fns: &[RatFn]) -> GeomResult<RatFn> {
        assert_eq!(fns.len(), self.blocks.len(), "one function per block");
        let mut acc = RatFn::zero(self.chart.vars());
        for (i, f) in fns.iter().enumerate() {
            acc = acc.add(&self.lift_rf(f, i)?);
        }
        Ok(acc)
    }

    /// Diagonal prolongation of a function over the given blocks.
    pub fn prolong_rf(&self, f: &RatFn, blocks: &[usize]) -> GeomResult<RatFn> {
        let mut acc = RatFn::zero(self.chart.vars());
        for &b in blocks {
            acc = acc.add(&self.lift_rf(f, b)?);
        }
        Ok(acc)
    }

    /// Pull a form on a factor back to the product.
    pub fn lift_form(&self, a: &DifferentialForm, block: usize) -> GeomResult<DifferentialForm> {
        let b = &self.blocks[block];
        let mut out = DifferentialForm::zero(&self.chart, a.degree);
        for (idx, c) in a.terms() {
            let nidx: Vec<u8> = idx.iter().map(|&i| i + b.offset as u8).collect();
            let nc = transport_rf(c, &b.factor, self.chart.vars(), b.offset, self.chart.dim())?;
            out.add_term(nidx, nc);
        }
        Ok(out)
    }

    /// Sum of lifted forms, one per block (the direct product of forms).
    pub fn form_product(&self, forms: &[DifferentialForm]) -> GeomResult<DifferentialForm> {
        assert_eq!(forms.len(), self.blocks.len());
        let degree = forms[0].degree;
        let mut acc = DifferentialForm::zero(&self.chart, degree);
        for (i, a) in forms.iter().enumerate() {
            acc = acc.add(&self.lift_form(a, i)?)?;
        }
        Ok(acc)
    }

    /// Rename coordinates by swapping two block tags (the permutation action
    /// on copies). Blocks must be copies of the same factor chart.
    pub fn swap_blocks_rf(&self, f: &RatFn, a: usize, b: usize) -> GeomResult<RatFn> {
        let ba = &self.blocks[a];
        let bb = &self.blocks[b];
        assert_eq!(
            ba.factor.dim(),
            bb.factor.dim(),
            "swapped blocks must have equal dimension"
        );
        let total = self.chart.vars().len();
        let mut map: Vec<usize> = (0..total).collect();
        for i in 0..ba.factor.dim() {
            map[ba.offset + i] = bb.offset + i;
            map[bb.offset + i] = ba.offset + i;
        }
        Ok(f.embed(self.chart.vars(), &map))
    }
}

/// Transport a rational function from a factor chart into the product
/// context: factor coordinate i maps to `offset + i`, parameters map by name
/// into the shared parameter section after the coordinates.
fn transport_rf(
    f: &RatFn,
    factor: &Arc<Chart>,
    product_vars: &VarSet,
    offset: usize,
    product_dim: usize,
) -> GeomResult<RatFn> {
    let mut map = Vec::with_capacity(factor.vars().len());
    for i in 0..factor.dim() {
        map.push(offset + i);
    }
    for p in factor.params() {
        let pos = product_vars[product_dim..]
            .iter()
            .position(|v| v == p)
            .expect("parameter present in product chart");
        map.push(product_dim + pos);
    }
    Ok(f.embed(product_vars, &map))
}

impl Chart {
    /// Chart equality as a result, for use outside this module.
    pub fn same_as(self: &Arc<Chart>, other: &Arc<Chart>) -> GeomResult<()> {
        if Arc::ptr_eq(self, other) || **self == **other {
            Ok(())
        } else {
            Err(GeomError::ChartMismatch(
                self.name.clone(),
                other.name.clone(),
            ))
        }
    }
}

/// Project a field onto the sub-chart of the kept coordinates. Every kept
/// coefficient must depend only on kept coordinates (and parameters).
pub fn pushforward_projection(
    x: &VectorField,
    kept: &[String],
) -> Result<VectorField, PushforwardError> {
    let chart = &x.chart;
    let mut kept_idx = Vec::with_capacity(kept.len());
    for k in kept {
        let i = chart
            .coord_index(k)
            .ok_or_else(|| PushforwardError::UnknownCoordinate(k.clone()))?;
        kept_idx.push(i);
    }
    let dropped: Vec<usize> = (0..chart.dim()).filter(|i| !kept_idx.contains(i)).collect();
    // Sub-chart keeps the parameters; constraints on dropped coordinates do
    // not survive the projection.
    let constraint_texts: Vec<String> = Vec::new();
    let params_vec: Vec<String> = chart.params().to_vec();
    let sub = Chart::new(
        &format!("{}|{}", chart.name, kept.join(",")),
        kept,
        &params_vec,
        &constraint_texts,
    )
    .expect("sub-chart construction");
    let total = chart.vars().len();
    // Variable map old -> new for the kept + parameter variables.
    let mut map: Vec<Option<usize>> = vec![None; total];
    for (new_i, &old_i) in kept_idx.iter().enumerate() {
        map[old_i] = Some(new_i);
    }
    for (pi, _) in chart.params().iter().enumerate() {
        map[chart.dim() + pi] = Some(kept.len() + pi);
    }
    let mut comps = Vec::with_capacity(kept_idx.len());
    for &i in &kept_idx {
        let c = x.comp(i);
        for &d in &dropped {
            let depends = c.num().depends_on(d) || c.den().depends_on(d);
            if depends {
                return Err(PushforwardError::NotProjectable {
                    coord: chart.coords()[i].clone(),
                    dropped: chart.coords()[d].clone(),
                });
            }
        }
        let full_map: Vec<usize> = map
            .iter()
            .map(|m| m.unwrap_or(usize::MAX))
            .collect();
        // Occurring variables are all mapped; unmapped slots are never hit.
        let safe_map: Vec<usize> = full_map
            .iter()
            .map(|&m| if m == usize::MAX { 0 } else { m })
            .collect();
        comps.push(c.embed(sub.vars(), &safe_map));
    }
    Ok(VectorField::new(&sub, comps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn riccati() -> Arc<Chart> {
        Chart::new("M", &["x", "y", "z"], &[], &["y*z"]).unwrap()
    }

    #[test]
    fn bracket_commutes_with_direct_product() {
        // [X×Y', X'×Y''] = [X,X']×[Y',Y''] on Riccati pairs.
        let m = riccati();
        let x1 = VectorField::parse(&m, &["4*x^2", "4*x*y", "-4*x*z"]).unwrap();
        let x2 = VectorField::parse(&m, &["-1", "0", "0"]).unwrap();
        let x3 = VectorField::parse(&m, &["2*x", "y", "0"]).unwrap();
        let x4 = VectorField::parse(&m, &["0", "0", "-2*z"]).unwrap();
        let p = ProductChart::power("M2", &m, 2).unwrap();
        let a = p.direct_product(&[x1.clone(), x3.clone()]).unwrap();
        let b = p.direct_product(&[x2.clone(), x4.clone()]).unwrap();
        let lhs = a.lie_bracket(&b).unwrap();
        let rhs = p
            .direct_product(&[
                x1.lie_bracket(&x2).unwrap(),
                x3.lie_bracket(&x4).unwrap(),
            ])
            .unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn prolonged_hamiltonian() {
        // h1 = xy over two copies -> x_(1) y_(1) + x_(2) y_(2)
        let c = Chart::new("R2", &["x", "y"], &[], &[]).unwrap();
        let p = ProductChart::power("R2x2", &c, 2).unwrap();
        let h1 = c.parse("x*y").unwrap();
        let prolonged = p.prolong_rf(&h1, &[0, 1]).unwrap();
        let expect = p.chart.parse("x_(1)*y_(1) + x_(2)*y_(2)").unwrap();
        assert_eq!(prolonged, expect);
    }

    #[test]
    fn prolongation_of_zero_is_zero() {
        let c = Chart::new("R2", &["x", "y"], &[], &[]).unwrap();
        let p = ProductChart::power("R2x3", &c, 3).unwrap();
        let z = VectorField::zero(&c);
        assert!(p.prolong(&z, &[0, 1, 2]).unwrap().is_zero());
    }

    #[test]
    fn pushforward_riccati_to_line() {
        let m = riccati();
        let x1 = VectorField::parse(&m, &["4*x^2", "4*x*y", "-4*x*z"]).unwrap();
        let px1 = pushforward_projection(&x1, &["x".to_string()]).unwrap();
        assert_eq!(px1.comp(0), &px1.chart.parse("4*x^2").unwrap());
        // ∂y projects to the zero field on x.
        let dy = VectorField::parse(&m, &["0", "1", "0"]).unwrap();
        assert!(pushforward_projection(&dy, &["x".to_string()])
            .unwrap()
            .is_zero());
        // y ∂x is not projectable onto x.
        let bad = VectorField::parse(&m, &["y", "0", "0"]).unwrap();
        assert!(matches!(
            pushforward_projection(&bad, &["x".to_string()]),
            Err(PushforwardError::NotProjectable { .. })
        ));
    }

    #[test]
    fn pushforward_is_a_bracket_morphism() {
        let m = riccati();
        let x1 = VectorField::parse(&m, &["4*x^2", "4*x*y", "-4*x*z"]).unwrap();
        let x3 = VectorField::parse(&m, &["2*x", "y", "0"]).unwrap();
        let kept = vec!["x".to_string()];
        let lhs = pushforward_projection(&x1.lie_bracket(&x3).unwrap(), &kept).unwrap();
        let rhs = pushforward_projection(&x1, &kept)
            .unwrap()
            .lie_bracket(&pushforward_projection(&x3, &kept).unwrap())
            .unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn block_swap_renames() {
        let c = Chart::new("R2", &["x", "y"], &[], &[]).unwrap();
        let p = ProductChart::power("R2x4", &c, 4).unwrap();
        let f = p
            .chart
            .parse("(x_(3)*(y_(1)-y_(2)) - y_(3)*(x_(1)-x_(2)))^2")
            .unwrap();
        let g = p.swap_blocks_rf(&f, 2, 3).unwrap();
        let expect = p
            .chart
            .parse("(x_(4)*(y_(1)-y_(2)) - y_(4)*(x_(1)-x_(2)))^2")
            .unwrap();
        assert_eq!(g, expect);
    }
}
